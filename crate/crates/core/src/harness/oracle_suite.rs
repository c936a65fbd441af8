//! Every exact cross-check in one place, with a machine-readable report.
//!
//! Each check pits two independent computations against each other (closed
//! form vs. eigen-decomposition, Fourier vs. enumeration, jackknife vs.
//! classical formula, and so on) and records the worst disagreement.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{neyman_identity_check, nw_identity_check};
use crate::design::{Design, TreatmentVector};
use crate::error::Result;
use crate::fourier::{monotonicity_check, ub_oracle_fourier, FourierExpansion};
use crate::indexrules::IndexRule;
use crate::jackknife::{nj_exact, nj_monte_carlo, robust_slack_exact, true_variance_exact, ub_oracle_exact};
use crate::outcome::{Estimator, ExposureIndicator, PotentialOutcomeModel};
use crate::proxy::{masking_check, Proxy, ProxyInput};
use crate::spectral::{
    crd_eigenvalue_formula, crd_eigenvalue_multiplicity, spectral_gap_closed_form, spectral_gap_eigen,
    spectrum_distance, SpectralGap, TransitionKernel,
};
use crate::util::substream;

use super::instances::{leaky_proxy, random_instance, tight_instance, InstanceOptions};

/// A deliberate fault, for checking that the suite notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Report `V̂` as if the spectral gap were twice as large.
    DoubleLambda,
    /// Add a proxy that claims strictness but reads `W_S`.
    NonMeasurableProxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Where the worst case happened, when it matters.
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, instances: usize, worst: Worst, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            instances,
            max_violation: worst.value,
            tolerance,
            // NaN counts as a failure.
            passed: worst.value <= tolerance,
            detail: worst.detail,
        }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            max_violation: f64::INFINITY,
            tolerance: 0.0,
            passed: false,
            detail: format!("error: {err}"),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<24} instances={:<5} max_violation={:.3e} tolerance={:.1e}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.max_violation,
            self.tolerance,
            if self.detail.is_empty() { String::new() } else { format!("  [{}]", self.detail) }
        )
    }
}

#[derive(Debug, Clone, Default)]
struct Worst {
    value: f64,
    detail: String,
}

impl Worst {
    fn push(&mut self, value: f64, detail: impl FnOnce() -> String) {
        if value.is_nan() || value > self.value {
            self.value = if value.is_nan() { f64::INFINITY } else { value };
            self.detail = detail();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub mutation: Mutation,
    pub checks: Vec<CheckOutcome>,
    pub all_passed: bool,
}

impl OracleReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Instance counts and sizes for each check.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSizes {
    pub conservativeness: usize,
    pub max_m: usize,
    pub gap_units: std::ops::RangeInclusive<usize>,
    pub neyman: usize,
    pub neyman_max_n: usize,
    pub newey_west: usize,
    pub newey_west_max_n: usize,
    pub fourier: usize,
    pub fourier_m: usize,
    pub robustness: usize,
    pub monte_carlo: usize,
    pub monte_carlo_replicates: usize,
    pub masking: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            conservativeness: 50,
            max_m: 10,
            gap_units: 4..=8,
            neyman: 100,
            neyman_max_n: 50,
            newey_west: 100,
            newey_west_max_n: 200,
            fourier: 20,
            fourier_m: 8,
            robustness: 20,
            monte_carlo: 20,
            monte_carlo_replicates: 10_000,
            masking: 50,
        }
    }
}

impl SuiteSizes {
    /// A quick configuration for smoke tests.
    pub fn small() -> Self {
        Self {
            conservativeness: 8,
            max_m: 6,
            gap_units: 4..=5,
            neyman: 10,
            neyman_max_n: 20,
            newey_west: 10,
            newey_west_max_n: 40,
            fourier: 3,
            fourier_m: 5,
            robustness: 4,
            monte_carlo: 3,
            monte_carlo_replicates: 2000,
            masking: 10,
        }
    }
}

pub const TOL_EXACT: f64 = 1e-10;
pub const TOL_GAP: f64 = 1e-9;
pub const TOL_BALANCE: f64 = 1e-12;
pub const TOL_IDENTITY: f64 = 1e-12;
pub const MC_Z: f64 = 4.0;

// Stream tags so that each check draws independently of the others.
const S_CONSERVATIVE: u64 = 1;
const S_GAP: u64 = 2;
const S_NEYMAN: u64 = 3;
const S_NW: u64 = 4;
const S_FOURIER: u64 = 5;
const S_ROBUST: u64 = 6;
const S_MC: u64 = 7;
const S_MASK: u64 = 8;

pub fn run_oracle_suite(seed: u64) -> OracleReport {
    run_oracle_suite_with(seed, &SuiteSizes::default(), Mutation::None)
}

pub fn run_oracle_suite_with(seed: u64, sizes: &SuiteSizes, mutation: Mutation) -> OracleReport {
    let mut checks = check_conservativeness(sizes.conservativeness, sizes.max_m, seed, mutation);
    checks.extend(check_kernels(sizes.gap_units.clone(), seed));
    checks.push(check_neyman(sizes.neyman, sizes.neyman_max_n, seed));
    checks.push(check_newey_west(sizes.newey_west, sizes.newey_west_max_n, seed));
    checks.extend(check_fourier(sizes.fourier, sizes.fourier_m, seed));
    checks.push(check_robustness(sizes.robustness, sizes.max_m.min(8), seed));
    checks.push(check_monte_carlo(sizes.monte_carlo, sizes.monte_carlo_replicates, sizes.max_m, seed));
    checks.push(check_masking(sizes.masking, sizes.max_m, seed, mutation));
    let all_passed = checks.iter().all(|c| c.passed);
    OracleReport {
        seed,
        mutation,
        checks,
        all_passed,
    }
}

/// `E[V̂] ≥ Var(f)` and `E[V̂] ≥ UB_oracle` on random instances (plus one
/// tight instance), and `E[V̂] = UB + (1/λ)E[(g − h)²]` for the measurable
/// proxies used here. Returns the conservativeness and decomposition checks.
pub fn check_conservativeness(count: usize, max_m: usize, seed: u64, mutation: Mutation) -> Vec<CheckOutcome> {
    let opts = InstanceOptions {
        max_m,
        ..Default::default()
    };
    let mut rng = substream(seed, S_CONSERVATIVE);
    let mut cons = Worst::default();
    let mut decomp = Worst::default();
    let mut seen = 0;
    for k in 0..count {
        let drawn = if k == 0 {
            tight_instance(max_m.min(6), &mut rng)
        } else {
            random_instance(&opts, &mut rng)
        };
        let (inst, audit) = match drawn {
            Ok(v) => v,
            Err(e) => return vec![CheckOutcome::failed("conservativeness", e)],
        };
        seen += 1;
        let scale = if mutation == Mutation::DoubleLambda { 0.5 } else { 1.0 };
        let ev = scale * audit.expected_vhat;
        let ub = scale * audit.ub_oracle;
        cons.push((audit.true_var - ev).max(ub - ev).max(0.0), || inst.label.clone());
        let rel = (audit.approx_error - audit.proxy_mse).abs() / audit.expected_vhat.abs().max(1.0);
        decomp.push(rel, || inst.label.clone());
    }
    vec![
        CheckOutcome::new("conservativeness", seen, cons, TOL_EXACT),
        CheckOutcome::new("decomposition", seen, decomp, TOL_EXACT),
    ]
}

fn gap_cases(m: usize, rng: &mut impl Rng) -> Vec<(Design, IndexRule)> {
    let mut out = Vec::new();
    let bern = Design::bernoulli((0..m).map(|_| rng.random_range(0.15..0.85)).collect()).expect("valid probabilities");
    out.push((bern.clone(), IndexRule::SingleUniform));
    for l in 1..=m {
        out.push((bern.clone(), IndexRule::UniformSubset { size: l }));
        out.push((bern.clone(), IndexRule::CycleBlock { len: l }));
    }
    for n1 in 1..m {
        let crd = Design::completely_randomized(m, n1).expect("valid design");
        // Size-1 subsets cannot move a completely randomized design.
        for l in 2..=m {
            out.push((crd.clone(), IndexRule::UniformSubset { size: l }));
        }
        out.push((crd, IndexRule::TreatedControlPair));
    }
    out
}

/// Closed-form gap against the eigen oracle, the completely randomized
/// spectrum against its formula, and detailed balance of every kernel.
pub fn check_kernels(units: std::ops::RangeInclusive<usize>, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = substream(seed, S_GAP);
    let cases: Vec<(usize, Design, IndexRule)> = units
        .flat_map(|m| gap_cases(m, &mut rng).into_iter().map(move |(d, r)| (m, d, r)))
        .collect();
    // (closed form, eigen, detailed balance, symmetry, label)
    type GapRow = (f64, Option<f64>, f64, f64, String);
    let results: Vec<Result<GapRow>> = cases
        .par_iter()
        .map(|(m, design, rule)| {
            let label = format!("m={m} {:?} {:?}", design.kind(), rule);
            let kernel = TransitionKernel::build(design, rule)?;
            let closed = spectral_gap_closed_form(design, rule)?.value();
            let eigen = spectral_gap_eigen(&kernel)?.value();
            let spectrum = match (design.kind(), rule) {
                (crate::design::DesignKind::CompletelyRandomized { n1, .. }, IndexRule::UniformSubset { size }) => {
                    let mut want = Vec::new();
                    for d in 0..=(*n1).min(m - n1) {
                        let v = crd_eigenvalue_formula(*m, *n1, *size, d)?;
                        want.extend(std::iter::repeat_n(v, crd_eigenvalue_multiplicity(*m, d)));
                    }
                    Some(spectrum_distance(&kernel.eigenvalues()?, &want))
                }
                _ => None,
            };
            let joint = kernel.joint_mass();
            let k = kernel.len();
            let mut asym: f64 = 0.0;
            for i in 0..k {
                for j in 0..i {
                    asym = asym.max((joint[i * k + j] - joint[j * k + i]).abs());
                }
            }
            Ok(((closed - eigen).abs(), spectrum, kernel.detailed_balance_violation(), asym, label))
        })
        .collect();
    let (mut gap, mut spectrum, mut bal, mut sym) = (Worst::default(), Worst::default(), Worst::default(), Worst::default());
    let mut n_spec = 0;
    for r in &results {
        match r {
            Ok((g, s, b, a, label)) => {
                gap.push(*g, || label.clone());
                if let Some(s) = s {
                    n_spec += 1;
                    spectrum.push(*s, || label.clone());
                }
                bal.push(*b, || label.clone());
                sym.push(*a, || label.clone());
            }
            Err(e) => return vec![CheckOutcome::failed("gap_agreement", e)],
        }
    }
    vec![
        CheckOutcome::new("gap_agreement", results.len(), gap, TOL_GAP),
        CheckOutcome::new("crd_spectrum", n_spec, spectrum, TOL_GAP),
        CheckOutcome::new("detailed_balance", results.len(), bal, TOL_BALANCE),
        CheckOutcome::new("joint_mass_symmetry", results.len(), sym, TOL_BALANCE),
    ]
}

/// Jackknife with treated/control pairs against Neyman's closed form.
pub fn check_neyman(count: usize, max_n: usize, seed: u64) -> CheckOutcome {
    let mut rng = substream(seed, S_NEYMAN);
    let mut worst = Worst::default();
    for _ in 0..count {
        let n = rng.random_range(4..=max_n.max(4));
        let n1 = rng.random_range(2..=n - 2);
        let treated = sample_indices(&mut rng, n, n1).into_vec();
        let mut w = TreatmentVector::zeros(n);
        for j in treated {
            w.set(j, true);
        }
        let scale = rng.random_range(0.1..10.0);
        let y: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        match neyman_identity_check(&y, &w) {
            Ok(s) => worst.push(s.relative_error(), || format!("n={n} n1={n1}")),
            Err(e) => return CheckOutcome::failed("neyman_identity", e),
        }
    }
    CheckOutcome::new("neyman_identity", count, worst, TOL_IDENTITY)
}

/// One random circular `M`-dependent instance: `(design, model, estimator, w, y, L, M)`.
#[allow(clippy::type_complexity)]
pub fn random_nw_instance(
    max_n: usize,
    rng: &mut impl Rng,
) -> Result<(Design, PotentialOutcomeModel, Estimator, TreatmentVector, Vec<f64>, usize, usize)> {
    let n = rng.random_range(5..=max_n.max(5));
    let m_dep = rng.random_range(0..=((n - 1) / 4).min(5));
    let max_l = (n - 1) / 2 + 1 - 2 * m_dep;
    let l = rng.random_range(1..=max_l);
    let design = Design::bernoulli((0..n).map(|_| rng.random_range(0.2..0.8)).collect())?;
    let sets: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..=2 * m_dep).map(|k| (i + n + k - m_dep) % n).collect())
        .collect();
    let coef: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    // Outcome depends on the share treated in the window and on its first member.
    let model = PotentialOutcomeModel::from_unit_fn(n, sets, move |i, bits| {
        let share = bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64;
        let c = coef[i];
        c[0] + c[1] * share + if bits[0] { c[2] } else { 0.0 }
    })?;
    let estimator = Estimator::ipw_direct((0..n).map(ExposureIndicator::OwnTreatment).collect(), &design)?;
    let w = design.sample(rng);
    let y = model.observed_outcomes(&w)?;
    Ok((design, model, estimator, w, y, l, m_dep))
}

/// Jackknife with cycle blocks against scaled circular Newey–West.
pub fn check_newey_west(count: usize, max_n: usize, seed: u64) -> CheckOutcome {
    let mut rng = substream(seed, S_NW);
    let mut worst = Worst::default();
    for _ in 0..count {
        let checked = random_nw_instance(max_n, &mut rng).and_then(|(design, model, est, w, y, l, m_dep)| {
            nw_identity_check(&design, &model, &est, &w, &y, l, m_dep).map(|s| (s, model.n(), l, m_dep))
        });
        match checked {
            Ok((s, n, l, m_dep)) => worst.push(s.relative_error(), || format!("n={n} L={l} M={m_dep}")),
            Err(e) => return CheckOutcome::failed("newey_west_identity", e),
        }
    }
    CheckOutcome::new("newey_west_identity", count, worst, TOL_IDENTITY)
}

/// A random function of `w` only, tabulated over `{0,1}^m`.
pub fn random_table_estimator(m: usize, rng: &mut impl Rng) -> (Estimator, Vec<f64>) {
    let table: Vec<f64> = (0..1usize << m).map(|_| rng.random_range(-5.0..5.0)).collect();
    let t = table.clone();
    let est = Estimator::custom(move |w, _| t[w.to_mask().expect("at most 64 units") as usize]);
    (est, table)
}

fn dummy_model(m: usize) -> PotentialOutcomeModel {
    PotentialOutcomeModel::from_tables(m, vec![vec![0]], vec![vec![0.0, 0.0]]).expect("valid model")
}

/// Parseval, Fourier bound against enumeration, and monotonicity in the
/// block length with equality to the variance at `L = m`.
pub fn check_fourier(count: usize, m: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = substream(seed, S_FOURIER);
    let (mut parseval, mut bound, mut mono) = (Worst::default(), Worst::default(), Worst::default());
    let model = dummy_model(m);
    for k in 0..count {
        let design = Design::bernoulli((0..m).map(|_| rng.random_range(0.15..0.85)).collect()).expect("valid");
        let (est, _) = random_table_estimator(m, &mut rng);
        let result = (|| -> Result<()> {
            let exp = FourierExpansion::from_estimator(&design, &est, &model)?;
            let var = true_variance_exact(&design, &est, &model)?;
            let mass: f64 = exp.coefficients().iter().skip(1).map(|c| c * c).sum();
            parseval.push((mass - var).abs() / var.max(1.0), || format!("estimator {k}"));

            let rule = match rng.random_range(0..3) {
                0 => IndexRule::SingleUniform,
                1 => IndexRule::UniformSubset {
                    size: rng.random_range(1..=m),
                },
                _ => IndexRule::CycleBlock {
                    len: rng.random_range(1..=m),
                },
            };
            let lam = spectral_gap_closed_form(&design, &rule)?;
            let f = ub_oracle_fourier(&exp, &rule, lam)?;
            let e = ub_oracle_exact(&design, &rule, &est, &model, lam)?;
            bound.push((f - e).abs() / e.abs().max(1.0), || format!("estimator {k} {rule:?}"));

            let grid: Vec<usize> = (1..=m).collect();
            let curve = monotonicity_check(&exp, &grid)?;
            let mut v: f64 = 0.0;
            for &(l, ub) in &curve {
                // The same curve by enumeration.
                let lam = SpectralGap::given(l as f64 / m as f64)?;
                let exact = ub_oracle_exact(&design, &IndexRule::CycleBlock { len: l }, &est, &model, lam)?;
                v = v.max((exact - ub).abs() / exact.abs().max(1.0));
            }
            let last = curve.last().expect("nonempty grid").1;
            v = v.max((last - var).abs() / var.max(1.0));
            mono.push(v, || format!("estimator {k}"));
            Ok(())
        })();
        if let Err(e) = result {
            let mut out = CheckOutcome::failed("fourier_monotone", &e);
            out.detail = format!("estimator {k}: {e}");
            return vec![out];
        }
    }
    vec![
        CheckOutcome::new("fourier_parseval", count, parseval, TOL_EXACT),
        CheckOutcome::new("fourier_vs_exact", count, bound, TOL_EXACT),
        CheckOutcome::new("fourier_monotone", count, mono, TOL_EXACT),
    ]
}

/// The slack `E[(g − E[g|S, W_{−S}])²]` directly and as half the expected
/// squared change over one Gibbs step, including leaky proxies.
pub fn check_robustness(count: usize, max_m: usize, seed: u64) -> CheckOutcome {
    let mut rng = substream(seed, S_ROBUST);
    let opts = InstanceOptions {
        max_m,
        nonmeasurable: true,
        ..Default::default()
    };
    let mut worst = Worst::default();
    let mut leaky = 0;
    for k in 0..count {
        let drawn = random_instance(&opts, &mut rng).and_then(|(mut inst, _)| {
            // Every other instance gets a leaky proxy regardless of the draw.
            if k % 2 == 0 {
                let m = inst.problem.design.m();
                let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                inst.problem.proxy = leaky_proxy(rng.random_range(0.1..0.9), w);
            }
            robust_slack_exact(&inst.problem).map(|s| (s, inst))
        });
        match drawn {
            Ok((s, inst)) => {
                leaky += usize::from(!inst.problem.proxy.is_strict());
                worst.push((s.direct - s.via_pairs).abs() / s.direct.abs().max(1.0), || inst.label.clone());
            }
            Err(e) => return CheckOutcome::failed("robustness_identity", e),
        }
    }
    let mut out = CheckOutcome::new("robustness_identity", count, worst, TOL_EXACT);
    if out.detail.is_empty() {
        out.detail = format!("{leaky} leaky proxies");
    } else {
        out.detail = format!("{leaky} leaky proxies; worst: {}", out.detail);
    }
    out
}

/// Monte Carlo `V̂` against the exact sum, in units of its standard error.
pub fn check_monte_carlo(count: usize, replicates: usize, max_m: usize, seed: u64) -> CheckOutcome {
    let mut rng = substream(seed, S_MC);
    let opts = InstanceOptions {
        max_m,
        ..Default::default()
    };
    let mut worst = Worst::default();
    for _ in 0..count {
        let res = random_instance(&opts, &mut rng).and_then(|(inst, _)| {
            let pb = &inst.problem;
            let w = pb.design.sample(&mut rng);
            let y = pb.model.observed_outcomes(&w)?;
            let exact = nj_exact(pb, &w, &y, inst.lambda)?;
            let mc = nj_monte_carlo(pb, &w, &y, inst.lambda, replicates, &mut rng)?;
            let se = mc.std_error.unwrap_or(0.0);
            let diff = (mc.v_hat - exact.v_hat).abs();
            // Constant terms give a roundoff-sized SE; floor it.
            let floor = 1e-12 * exact.v_hat.abs().max(1.0);
            let z = diff / se.max(floor);
            Ok((z, inst.label))
        });
        match res {
            Ok((z, label)) => worst.push(z, || label),
            Err(e) => return CheckOutcome::failed("monte_carlo", e),
        }
    }
    CheckOutcome::new("monte_carlo", count, worst, MC_Z)
}

/// Strict proxies return identical bits when `W_S` is scrambled and the
/// deleted outcomes are replaced by NaN. Violation is the failure count.
pub fn check_masking(count: usize, max_m: usize, seed: u64, mutation: Mutation) -> CheckOutcome {
    let mut rng = substream(seed, S_MASK);
    let opts = InstanceOptions {
        max_m,
        ..Default::default()
    };
    let mut failures = Worst::default();
    let mut total = 0.0;
    for _ in 0..count {
        let res = random_instance(&opts, &mut rng).and_then(|(mut inst, _)| {
            if mutation == Mutation::NonMeasurableProxy {
                let m = inst.problem.design.m();
                let est = inst.problem.estimator.clone();
                let weights: Vec<f64> = (1..=m).map(|j| j as f64).collect();
                // Claims to be strict, reads W on the update set.
                inst.problem.proxy = Proxy::custom(
                    move |inp: &ProxyInput<'_>| {
                        let f = est.estimate(inp.w, inp.y)?;
                        Ok(f + inp.w.iter().zip(&weights).filter(|(b, _)| *b).map(|(_, v)| v).sum::<f64>())
                    },
                    false,
                );
            }
            let pb = &inst.problem;
            let mut bad = 0;
            for _ in 0..5 {
                let w = pb.design.sample(&mut rng);
                let y = pb.model.observed_outcomes(&w)?;
                let set = pb.rule.sample(&w, &mut rng)?;
                let input = ProxyInput {
                    design: &pb.design,
                    model: &pb.model,
                    estimator: &pb.estimator,
                    set: &set,
                    w: &w,
                    y: &y,
                };
                // Several scrambles, so a lucky redraw of W_S cannot hide a leak.
                for _ in 0..4 {
                    if !masking_check(&pb.proxy, &input, &mut rng)? {
                        bad += 1;
                        break;
                    }
                }
            }
            Ok((bad, inst.label))
        });
        match res {
            Ok((bad, label)) => {
                total += bad as f64;
                failures.push(total, || label);
            }
            Err(e) => return CheckOutcome::failed("masking", e),
        }
    }
    CheckOutcome::new("masking", count, failures, 0.0)
}
