//! The Neyman Jackknife variance estimator and its exact audit.
//!
//! `V̂ = (1/λ) Σ_A μ_w(A) (f(w) − g(A, w_{−A}))²` is computed from one
//! observed realization. The audit functions enumerate the design to get the
//! true variance, the oracle Poincaré bound and `E[V̂]` to floating precision.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Design, TreatmentVector};
use crate::error::{Error, Result};
use crate::indexrules::{IndexRule, IndexSet};
use crate::outcome::{Estimator, PotentialOutcomeModel};
use crate::proxy::{Proxy, ProxyInput};
use crate::spectral::SpectralGap;
use crate::util::{mean_and_se, pairwise_sum};

/// Design, rule, outcome structure, estimator and proxy in one place.
#[derive(Debug, Clone)]
pub struct Problem {
    pub design: Design,
    pub rule: IndexRule,
    pub model: PotentialOutcomeModel,
    pub estimator: Estimator,
    pub proxy: Proxy,
}

impl Problem {
    pub fn new(
        design: Design,
        rule: IndexRule,
        model: PotentialOutcomeModel,
        estimator: Estimator,
        proxy: Proxy,
    ) -> Result<Self> {
        rule.validate(design.m(), &design)?;
        if model.m() != design.m() {
            return Err(Error::LengthMismatch {
                expected: design.m(),
                got: model.m(),
            });
        }
        Ok(Self {
            design,
            rule,
            model,
            estimator,
            proxy,
        })
    }

    fn input<'a>(&'a self, set: &'a IndexSet, w: &'a TreatmentVector, y: &'a [f64]) -> ProxyInput<'a> {
        ProxyInput {
            design: &self.design,
            model: &self.model,
            estimator: &self.estimator,
            set,
            w,
            y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    ExactSum,
    MonteCarlo { replicates: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub v_hat: f64,
    pub lambda: SpectralGap,
    pub mode: Mode,
    pub degenerate_count: usize,
    /// Conditional standard error given `W`, for Monte Carlo mode.
    pub std_error: Option<f64>,
}

/// `V̂` by summing over the support of `μ_w`.
pub fn nj_exact(problem: &Problem, w: &TreatmentVector, y: &[f64], lambda: SpectralGap) -> Result<VarianceReport> {
    let f = problem.estimator.estimate(w, y)?;
    let mut terms = Vec::new();
    let mut degenerate = 0;
    for (a, p) in problem.rule.enumerate(w)? {
        let g = problem.proxy.evaluate(&problem.input(&a, w, y))?;
        degenerate += usize::from(g.degenerate);
        terms.push(p * (f - g.value) * (f - g.value));
    }
    Ok(VarianceReport {
        v_hat: pairwise_sum(&terms) / lambda.value(),
        lambda,
        mode: Mode::ExactSum,
        degenerate_count: degenerate,
        std_error: None,
    })
}

/// `V̂_MC = (1/(λB)) Σ_k (f − g(S_k, W_{−S_k}))²` with `S_k ~ μ_w` i.i.d.
pub fn nj_monte_carlo<R: Rng + ?Sized>(
    problem: &Problem,
    w: &TreatmentVector,
    y: &[f64],
    lambda: SpectralGap,
    replicates: usize,
    rng: &mut R,
) -> Result<VarianceReport> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one replicate".into()));
    }
    let f = problem.estimator.estimate(w, y)?;
    let mut terms = Vec::with_capacity(replicates);
    let mut degenerate = 0;
    for _ in 0..replicates {
        let a = problem.rule.sample(w, rng)?;
        let g = problem.proxy.evaluate(&problem.input(&a, w, y))?;
        degenerate += usize::from(g.degenerate);
        terms.push((f - g.value) * (f - g.value) / lambda.value());
    }
    let (mean, se) = mean_and_se(&terms);
    Ok(VarianceReport {
        v_hat: mean,
        lambda,
        mode: Mode::MonteCarlo { replicates },
        degenerate_count: degenerate,
        std_error: Some(se),
    })
}

/// Support masks, their probabilities and `f` on each.
struct Tabulated {
    masks: Vec<u64>,
    probs: Vec<f64>,
    f: Vec<f64>,
    index: HashMap<u64, usize>,
}

fn tabulate(design: &Design, estimator: &Estimator, model: &PotentialOutcomeModel) -> Result<(Tabulated, Vec<Vec<f64>>)> {
    let states = design.enumerate_support()?;
    let m = design.m();
    type StateRow = (u64, f64, f64, Vec<f64>);
    let rows: Vec<Result<StateRow>> = states
        .par_iter()
        .map(|w| {
            let y = model.observed_outcomes(w)?;
            let f = estimator.estimate(w, &y)?;
            Ok((w.to_mask().unwrap_or(0), design.pmf(w)?, f, y))
        })
        .collect();
    let mut t = Tabulated {
        masks: Vec::with_capacity(states.len()),
        probs: Vec::with_capacity(states.len()),
        f: Vec::with_capacity(states.len()),
        index: HashMap::with_capacity(states.len()),
    };
    let mut ys = Vec::with_capacity(states.len());
    for row in rows {
        let (mask, p, f, y) = row?;
        t.index.insert(mask, t.masks.len());
        t.masks.push(mask);
        t.probs.push(p);
        t.f.push(f);
        ys.push(y);
    }
    debug_assert!(m <= 64);
    Ok((t, ys))
}

fn weighted_variance(probs: &[f64], f: &[f64]) -> (f64, f64) {
    let mean = pairwise_sum(&probs.iter().zip(f).map(|(p, v)| p * v).collect::<Vec<_>>());
    let var = pairwise_sum(
        &probs
            .iter()
            .zip(f)
            .map(|(p, v)| p * (v - mean) * (v - mean))
            .collect::<Vec<_>>(),
    );
    (mean, var)
}

/// `Var(f(W))` by enumeration.
pub fn true_variance_exact(design: &Design, estimator: &Estimator, model: &PotentialOutcomeModel) -> Result<f64> {
    let (t, _) = tabulate(design, estimator, model)?;
    Ok(weighted_variance(&t.probs, &t.f).1)
}

/// All exact audit quantities for one problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactAudit {
    pub mean_f: f64,
    pub true_var: f64,
    pub expected_vhat: f64,
    pub ub_oracle: f64,
    /// `E[V̂] − UB_oracle`, signed.
    pub approx_error: f64,
    /// `(1/λ) E[(g − E[f | S, W_{−S}])²]`. Equals `approx_error` for
    /// measurable proxies.
    pub proxy_mse: f64,
    /// `E[(g − E[g | S, W_{−S}])²]`, computed directly.
    pub slack_direct: f64,
    /// `½ E[(g(S, W) − g(S, W'))²]` over one Gibbs step.
    pub slack_pairs: f64,
    pub degenerate_count: usize,
}

/// One `(A, w)` cell: its rule mass and proxy value.
#[derive(Clone, Copy)]
struct Cell {
    mu: f64,
    g: f64,
}

/// The cells of one assignment, keyed by the mask of `A`.
type CellRow = Vec<(u64, Cell)>;

fn enumerate_cells(
    problem: Option<&Problem>,
    rule: &IndexRule,
    design: &Design,
    t: &Tabulated,
    ys: &[Vec<f64>],
) -> Result<(Vec<CellRow>, usize)> {
    let m = design.m();
    let rows: Vec<Result<(CellRow, usize)>> = (0..t.masks.len())
        .into_par_iter()
        .map(|s| {
            let w = TreatmentVector::from_mask(m, t.masks[s]);
            let mut row = Vec::new();
            let mut degenerate = 0;
            for (a, mu) in rule.enumerate(&w)? {
                let g = match problem {
                    Some(pb) => {
                        let v = pb.proxy.evaluate(&pb.input(&a, &w, &ys[s]))?;
                        degenerate += usize::from(v.degenerate);
                        v.value
                    }
                    None => 0.0,
                };
                row.push((a.to_mask(), Cell { mu, g }));
            }
            // A set listed more than once (e.g. cycle blocks of length m) is one cell.
            row.sort_by_key(|(a, _)| *a);
            row.dedup_by(|next, kept| {
                if next.0 == kept.0 {
                    kept.1.mu += next.1.mu;
                    true
                } else {
                    false
                }
            });
            Ok((row, degenerate))
        })
        .collect();
    let mut cells = Vec::with_capacity(rows.len());
    let mut degenerate = 0;
    for r in rows {
        let (row, d) = r?;
        cells.push(row);
        degenerate += d;
    }
    Ok((cells, degenerate))
}

/// Per state: `(Σ_A μ (f−h)², Σ_A μ (f−g)², Σ_A μ (g−h)², Σ_A μ (g−E[g])², Σ_A μ E'[(g−g')²])`.
type StateTerms = [f64; 5];

fn audit_terms(
    design: &Design,
    t: &Tabulated,
    cells: &[Vec<(u64, Cell)>],
) -> Result<Vec<StateTerms>> {
    // (A, w) -> cell, for looking up μ_{w''}(A) and g(A, w'').
    let lookup: HashMap<(u64, u64), Cell> = cells
        .iter()
        .enumerate()
        .flat_map(|(s, row)| row.iter().map(move |(a, c)| ((*a, t.masks[s]), *c)))
        .collect();
    (0..t.masks.len())
        .into_par_iter()
        .map(|s| {
            let w = t.masks[s];
            let f = t.f[s];
            let mut acc = [0.0; 5];
            for &(a, cell) in &cells[s] {
                // Conditional law of W given (S = A, W_{−A}) is ∝ π(w'') μ_{w''}(A).
                let mut z = 0.0;
                let mut h = 0.0;
                let mut eg = 0.0;
                let mut eg2 = 0.0;
                for (next, q) in design.conditional_law_masks(a, w)? {
                    let Some(c) = lookup.get(&(a, next)) else { continue };
                    let i = t.index[&next];
                    let weight = q * c.mu;
                    z += weight;
                    h += weight * t.f[i];
                    eg += weight * c.g;
                    eg2 += weight * (cell.g - c.g) * (cell.g - c.g);
                }
                let h = h / z;
                let eg = eg / z;
                let pairs = eg2 / z;
                let mu = cell.mu;
                acc[0] += mu * (f - h) * (f - h);
                acc[1] += mu * (f - cell.g) * (f - cell.g);
                acc[2] += mu * (cell.g - h) * (cell.g - h);
                acc[3] += mu * (cell.g - eg) * (cell.g - eg);
                acc[4] += mu * pairs;
            }
            Ok(acc)
        })
        .collect()
}

fn weighted_column(probs: &[f64], terms: &[StateTerms], k: usize) -> f64 {
    pairwise_sum(&probs.iter().zip(terms).map(|(p, t)| p * t[k]).collect::<Vec<_>>())
}

/// `UB_oracle = (1/λ) E[(f − E[f | S, W_{−S}])²]`, by enumeration.
pub fn ub_oracle_exact(
    design: &Design,
    rule: &IndexRule,
    estimator: &Estimator,
    model: &PotentialOutcomeModel,
    lambda: SpectralGap,
) -> Result<f64> {
    rule.validate(design.m(), design)?;
    let (t, ys) = tabulate(design, estimator, model)?;
    let (cells, _) = enumerate_cells(None, rule, design, &t, &ys)?;
    let terms = audit_terms(design, &t, &cells)?;
    Ok(weighted_column(&t.probs, &terms, 0) / lambda.value())
}

/// `E[V̂]` together with `Var(f)`, `UB_oracle` and the proxy error terms.
pub fn expected_vhat_exact(problem: &Problem, lambda: SpectralGap) -> Result<ExactAudit> {
    let (t, ys) = tabulate(&problem.design, &problem.estimator, &problem.model)?;
    let (cells, degenerate) = enumerate_cells(Some(problem), &problem.rule, &problem.design, &t, &ys)?;
    let terms = audit_terms(&problem.design, &t, &cells)?;
    let (mean_f, true_var) = weighted_variance(&t.probs, &t.f);
    let lam = lambda.value();
    let ub = weighted_column(&t.probs, &terms, 0) / lam;
    let ev = weighted_column(&t.probs, &terms, 1) / lam;
    Ok(ExactAudit {
        mean_f,
        true_var,
        expected_vhat: ev,
        ub_oracle: ub,
        approx_error: ev - ub,
        proxy_mse: weighted_column(&t.probs, &terms, 2) / lam,
        slack_direct: weighted_column(&t.probs, &terms, 3),
        slack_pairs: 0.5 * weighted_column(&t.probs, &terms, 4),
        degenerate_count: degenerate,
    })
}

/// Both routes to the measurability slack `E[(g − E[g | S, W_{−S}])²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustSlack {
    pub direct: f64,
    pub via_pairs: f64,
}

pub fn robust_slack_exact(problem: &Problem) -> Result<RobustSlack> {
    let (t, ys) = tabulate(&problem.design, &problem.estimator, &problem.model)?;
    let (cells, _) = enumerate_cells(Some(problem), &problem.rule, &problem.design, &t, &ys)?;
    let terms = audit_terms(&problem.design, &t, &cells)?;
    Ok(RobustSlack {
        direct: weighted_column(&t.probs, &terms, 3),
        via_pairs: 0.5 * weighted_column(&t.probs, &terms, 4),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcome::ExposureIndicator;
    use crate::spectral::spectral_gap_closed_form;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sutva_bernoulli(n: usize) -> (Design, PotentialOutcomeModel, Estimator) {
        let d = Design::bernoulli((0..n).map(|i| 0.3 + 0.05 * i as f64).collect()).unwrap();
        let sets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let tables: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 - 1.0, 0.5 * i as f64 + 2.0]).collect();
        let model = PotentialOutcomeModel::from_tables(n, sets, tables).unwrap();
        let est = Estimator::ipw_direct((0..n).map(ExposureIndicator::OwnTreatment).collect(), &d).unwrap();
        (d, model, est)
    }

    #[test]
    fn perfect_proxy_gives_zero() {
        let (d, model, est) = sutva_bernoulli(4);
        let est2 = est.clone();
        let proxy = Proxy::custom(move |inp: &ProxyInput<'_>| est2.estimate(inp.w, inp.y), true);
        let pb = Problem::new(d, IndexRule::SingleUniform, model, est, proxy).unwrap();
        let w = TreatmentVector::from_bits(&[1, 0, 1, 1]).unwrap();
        let y = pb.model.observed_outcomes(&w).unwrap();
        let lam = SpectralGap::given(0.3).unwrap();
        assert_eq!(nj_exact(&pb, &w, &y, lam).unwrap().v_hat, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(nj_monte_carlo(&pb, &w, &y, lam, 10, &mut rng).unwrap().v_hat, 0.0);
    }

    #[test]
    fn variance_of_a_single_coordinate() {
        let d = Design::bernoulli(vec![0.3, 0.6]).unwrap();
        let model = PotentialOutcomeModel::from_tables(2, vec![vec![0], vec![1]], vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let est = Estimator::custom(|w, _| f64::from(u8::from(w.get(0))));
        assert!((true_variance_exact(&d, &est, &model).unwrap() - 0.21).abs() < 1e-15);
        let constant = Estimator::custom(|_, _| 3.0);
        assert!(true_variance_exact(&d, &constant, &model).unwrap() < 1e-28);
    }

    #[test]
    fn full_rerandomization_makes_the_bound_tight() {
        let (d, model, est) = sutva_bernoulli(5);
        let rule = IndexRule::UniformSubset { size: 5 };
        let lam = spectral_gap_closed_form(&d, &rule).unwrap();
        assert_eq!(lam.value(), 1.0);
        let ub = ub_oracle_exact(&d, &rule, &est, &model, lam).unwrap();
        let var = true_variance_exact(&d, &est, &model).unwrap();
        assert!((ub - var).abs() < 1e-12);
    }

    #[test]
    fn audit_decomposition_for_a_measurable_proxy() {
        let (d, model, est) = sutva_bernoulli(6);
        let rule = IndexRule::CycleBlock { len: 2 };
        let lam = spectral_gap_closed_form(&d, &rule).unwrap();
        let pb = Problem::new(d, rule, model, est, Proxy::recomputed_average()).unwrap();
        let a = expected_vhat_exact(&pb, lam).unwrap();
        assert!(a.expected_vhat >= a.true_var - 1e-10);
        assert!(a.ub_oracle >= a.true_var - 1e-10);
        assert!((a.approx_error - a.proxy_mse).abs() < 1e-10);
        assert!(a.slack_direct.abs() < 1e-20);
        assert!((a.slack_direct - a.slack_pairs).abs() < 1e-10);
    }

    #[test]
    fn expected_vhat_is_the_average_of_nj_exact() {
        let (d, model, est) = sutva_bernoulli(4);
        let rule = IndexRule::SingleUniform;
        let lam = spectral_gap_closed_form(&d, &rule).unwrap();
        let pb = Problem::new(d, rule, model, est, Proxy::recomputed_average()).unwrap();
        let mut direct = 0.0;
        for w in pb.design.enumerate_support().unwrap() {
            let y = pb.model.observed_outcomes(&w).unwrap();
            direct += pb.design.pmf(&w).unwrap() * nj_exact(&pb, &w, &y, lam).unwrap().v_hat;
        }
        let audit = expected_vhat_exact(&pb, lam).unwrap();
        assert!((audit.expected_vhat - direct).abs() < 1e-12);
    }

    #[test]
    fn scaling_outcomes_scales_vhat_quadratically() {
        let (d, _, est) = sutva_bernoulli(5);
        let w = TreatmentVector::from_bits(&[1, 0, 0, 1, 1]).unwrap();
        let y = [1.5, -2.0, 0.25, 3.0, -0.75];
        let sets: Vec<Vec<usize>> = (0..5).map(|i| vec![i]).collect();
        let model = PotentialOutcomeModel::from_tables(5, sets, vec![vec![0.0; 2]; 5]).unwrap();
        let pb = Problem::new(d, IndexRule::CycleBlock { len: 2 }, model, est, Proxy::recomputed_average()).unwrap();
        let lam = SpectralGap::given(0.4).unwrap();
        let base = nj_exact(&pb, &w, &y, lam).unwrap().v_hat;
        let scaled: Vec<f64> = y.iter().map(|v| v * 4.0).collect();
        assert_eq!(nj_exact(&pb, &w, &scaled, lam).unwrap().v_hat, 16.0 * base);
    }
}
