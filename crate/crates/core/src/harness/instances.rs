//! Random small problems for the exact checks.
//!
//! Instances are small enough to enumerate. Draws that cannot be audited
//! (an undefined estimate somewhere in the support, a proxy that had to fall
//! back, a zero spectral gap) are rejected and redrawn.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::indexrules::{IndexRule, IndexSet};
use crate::jackknife::{expected_vhat_exact, ExactAudit, Problem};
use crate::outcome::{Estimator, ExposureIndicator, PotentialOutcomeModel};
use crate::proxy::{Padding, Proxy};
use crate::spectral::{spectral_gap, SpectralGap};

#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: Problem,
    pub lambda: SpectralGap,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceOptions {
    pub min_m: usize,
    pub max_m: usize,
    /// Allow proxies that read `W_S` (flagged approximately measurable).
    pub nonmeasurable: bool,
    /// Outcome values are drawn from `[−bound, bound]`.
    pub outcome_bound: f64,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            min_m: 3,
            max_m: 10,
            nonmeasurable: false,
            outcome_bound: 5.0,
        }
    }
}

const MAX_ATTEMPTS: usize = 10_000;
/// Keeps eigen-oracle kernels small.
const MAX_EIGEN_STATES: u128 = 256;

fn random_design<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Design> {
    if rng.random_bool(0.5) {
        Design::bernoulli((0..m).map(|_| rng.random_range(0.2..0.8)).collect())
    } else {
        Design::completely_randomized(m, rng.random_range(1..m))
    }
}

fn random_rule<R: Rng + ?Sized>(design: &Design, rng: &mut R) -> IndexRule {
    let m = design.m();
    if design.is_bernoulli() {
        match rng.random_range(0..5) {
            0 => IndexRule::SingleUniform,
            1 => IndexRule::UniformSubset {
                size: rng.random_range(1..=m),
            },
            2 => IndexRule::CycleBlock {
                len: rng.random_range(1..=m),
            },
            3 => {
                let divisors: Vec<usize> = (1..=m).filter(|d| m.is_multiple_of(*d)).collect();
                IndexRule::PartitionBlock {
                    len: divisors[rng.random_range(0..divisors.len())],
                }
            }
            _ => {
                let k = rng.random_range(2..=4);
                let mut sets = Vec::with_capacity(k);
                let mut weights = Vec::with_capacity(k);
                for _ in 0..k {
                    let size = rng.random_range(1..=m);
                    sets.push(IndexSet::new(sample_indices(rng, m, size).into_vec()));
                    weights.push(rng.random_range(0.1..1.0));
                }
                let total: f64 = weights.iter().sum();
                let mut pairs: Vec<(IndexSet, f64)> = sets.into_iter().zip(weights.iter().map(|w| w / total)).collect();
                // Masses must sum to one within 1e-12.
                let head: f64 = pairs[1..].iter().map(|(_, p)| p).sum();
                pairs[0].1 = 1.0 - head;
                IndexRule::Explicit(pairs)
            }
        }
    } else {
        match rng.random_range(0..3) {
            0 => IndexRule::UniformSubset {
                size: rng.random_range(2..=m),
            },
            1 => IndexRule::TreatedControlPair,
            _ => IndexRule::CycleBlock {
                len: rng.random_range(2..=m),
            },
        }
    }
}

fn random_model<R: Rng + ?Sized>(m: usize, bound: f64, rng: &mut R) -> Result<PotentialOutcomeModel> {
    let sutva = rng.random_bool(0.4);
    let n = if sutva { m } else { rng.random_range(1..=m + 2) };
    let sets: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if sutva {
                vec![i]
            } else {
                let size = rng.random_range(1..=m.min(3));
                sample_indices(rng, m, size).into_vec()
            }
        })
        .collect();
    let tables = sets
        .iter()
        .map(|s| (0..1usize << s.len()).map(|_| rng.random_range(-bound..=bound)).collect())
        .collect();
    let x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    PotentialOutcomeModel::from_tables(m, sets, tables)?.with_covariates(x)
}

fn linear_weights<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_estimator<R: Rng + ?Sized>(
    design: &Design,
    model: &PotentialOutcomeModel,
    rng: &mut R,
) -> Result<Estimator> {
    let sets = model.exposure_sets();
    let treated = || {
        sets.iter()
            .map(|s| ExposureIndicator::all_treated(s.clone()))
            .collect::<Result<Vec<_>>>()
    };
    let sutva = model.n() == design.m() && sets.iter().enumerate().all(|(i, s)| s == &[i]);
    let crd = !design.is_bernoulli();
    match rng.random_range(0..5) {
        0 => Estimator::ipw_direct(treated()?, design),
        1 => Estimator::ipw_tot(model, design),
        2 if crd && sutva => Ok(Estimator::DiffInMeans),
        3 if crd => {
            let t = treated()?;
            let c = sets
                .iter()
                .map(|s| ExposureIndicator::all_control(s.clone()))
                .collect::<Result<Vec<_>>>()?;
            let p = t.iter().map(|e| e.exposure_prob(design)).collect();
            let q = c.iter().map(|e| e.exposure_prob(design)).collect();
            Estimator::hajek(t, p, c, q)
        }
        _ => {
            // A smooth nonlinear statistic of outcomes and treatments.
            let a = linear_weights(model.n(), rng);
            let b = linear_weights(design.m(), rng);
            Ok(Estimator::custom(move |w, y| {
                let s: f64 = a.iter().zip(y).map(|(a, y)| a * y).sum();
                let t: f64 = b.iter().zip(w.iter()).map(|(b, wj)| if wj { *b } else { 0.0 }).sum();
                (0.3 * s).tanh() + t * t
            }))
        }
    }
}

/// A proxy reading only `W_{−S}`: a fixed linear form in the outside treatments.
fn outside_linear_proxy(m: usize, weights: Vec<f64>, c: f64) -> Proxy {
    Proxy::custom(
        move |inp| {
            Ok(c + (0..m)
                .filter(|&j| !inp.set.contains(j) && inp.w.get(j))
                .map(|j| weights[j])
                .sum::<f64>())
        },
        false,
    )
}

fn custom_proxy<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Proxy {
    let weights = linear_weights(m, rng);
    outside_linear_proxy(m, weights, rng.random_range(-1.0..1.0))
}

/// Reads the full estimate, so it sees `W_S` and the deleted outcomes.
pub fn leaky_proxy(shrink: f64, weights: Vec<f64>) -> Proxy {
    Proxy::custom(
        move |inp| {
            let f = inp.estimator.estimate(inp.w, inp.y)?;
            let inside: f64 = inp.set.iter().filter(|&&j| inp.w.get(j)).map(|&j| weights[j]).sum();
            Ok(shrink * f + inside)
        },
        true,
    )
}

fn random_proxy<R: Rng + ?Sized>(
    design: &Design,
    estimator: &Estimator,
    opts: &InstanceOptions,
    rng: &mut R,
) -> Proxy {
    let m = design.m();
    if opts.nonmeasurable && rng.random_bool(0.5) {
        return leaky_proxy(rng.random_range(0.0..1.0), linear_weights(m, rng));
    }
    match estimator {
        Estimator::IpwDirect { .. } => match rng.random_range(0..5) {
            0 => Proxy::recomputed_average(),
            1 => Proxy::RecomputedAverage {
                padding: Padding::Cyclic { left: 0, right: 1 },
            },
            2 => Proxy::CovariateRegression,
            3 => Proxy::ClassicalLoo {
                denominator: crate::proxy::LooDenominator::N,
            },
            _ => custom_proxy(m, rng),
        },
        Estimator::IpwTot { .. } => match rng.random_range(0..3) {
            0 => Proxy::recomputed_average(),
            1 => Proxy::ClassicalLoo {
                denominator: crate::proxy::LooDenominator::NMinusOne,
            },
            _ => custom_proxy(m, rng),
        },
        Estimator::DiffInMeans => match rng.random_range(0..3) {
            0 => Proxy::NeymanPair,
            1 => Proxy::recomputed_average(),
            _ => custom_proxy(m, rng),
        },
        Estimator::HajekBipartite { .. } => match rng.random_range(0..2) {
            0 => Proxy::recomputed_average(),
            _ => custom_proxy(m, rng),
        },
        Estimator::Custom(_) => custom_proxy(m, rng),
    }
}

/// One attempt; `Err` means "redraw".
fn try_instance<R: Rng + ?Sized>(opts: &InstanceOptions, rng: &mut R) -> Result<(Instance, ExactAudit)> {
    let m = rng.random_range(opts.min_m..=opts.max_m);
    let design = random_design(m, rng)?;
    let rule = random_rule(&design, rng);
    rule.validate(m, &design)?;
    let model = random_model(m, opts.outcome_bound, rng)?;
    let estimator = random_estimator(&design, &model, rng)?;
    let proxy = random_proxy(&design, &estimator, opts, rng);
    let label = format!("{:?} / {:?} / {:?} / {:?}", design.kind(), rule, estimator, proxy);
    let closed = crate::spectral::spectral_gap_closed_form(&design, &rule);
    if matches!(closed, Err(Error::NoClosedForm)) && design.support_size() > MAX_EIGEN_STATES {
        return Err(Error::CapExceeded {
            size: design.support_size(),
            cap: MAX_EIGEN_STATES,
        });
    }
    let lambda = spectral_gap(&design, &rule)?;
    let problem = Problem::new(design, rule, model, estimator, proxy)?;
    let audit = expected_vhat_exact(&problem, lambda)?;
    let values = [audit.expected_vhat, audit.true_var, audit.ub_oracle, audit.proxy_mse];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("audit is not finite".into()));
    }
    if audit.degenerate_count > 0 {
        return Err(Error::Degenerate("proxy fell back to the full estimate".into()));
    }
    Ok((Instance { problem, lambda, label }, audit))
}

/// Draws until an instance can be audited exactly.
pub fn random_instance<R: Rng + ?Sized>(opts: &InstanceOptions, rng: &mut R) -> Result<(Instance, ExactAudit)> {
    if opts.min_m < 2 || opts.min_m > opts.max_m || opts.max_m > 12 {
        return Err(Error::InvalidArgument(format!(
            "unit range {}..={} must lie in 2..=12",
            opts.min_m, opts.max_m
        )));
    }
    let mut last = Error::InvalidArgument("no attempts".into());
    for _ in 0..MAX_ATTEMPTS {
        match try_instance(opts, rng) {
            Ok(v) => return Ok(v),
            Err(e) => last = e,
        }
    }
    Err(Error::Degenerate(format!("no auditable instance in {MAX_ATTEMPTS} draws; last: {last}")))
}

/// Full rerandomization with the constant proxy `E[f]`: the bound is attained
/// exactly, so any shrinkage of `V̂` shows up as anti-conservativeness.
pub fn tight_instance<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<(Instance, ExactAudit)> {
    let design = Design::bernoulli((0..m).map(|_| rng.random_range(0.2..0.8)).collect())?;
    let rule = IndexRule::UniformSubset { size: m };
    let model = random_model(m, 5.0, rng)?;
    let estimator = Estimator::ipw_direct(
        model
            .exposure_sets()
            .iter()
            .map(|s| ExposureIndicator::all_treated(s.clone()))
            .collect::<Result<Vec<_>>>()?,
        &design,
    )?;
    let lambda = spectral_gap(&design, &rule)?;
    let probe = Problem::new(design.clone(), rule.clone(), model.clone(), estimator.clone(), outside_linear_proxy(m, vec![0.0; m], 0.0))?;
    let mean = expected_vhat_exact(&probe, lambda)?.mean_f;
    let proxy = outside_linear_proxy(m, vec![0.0; m], mean);
    let problem = Problem::new(design, rule, model, estimator, proxy)?;
    let audit = expected_vhat_exact(&problem, lambda)?;
    Ok((
        Instance {
            problem,
            lambda,
            label: "tight: full rerandomization, constant proxy".into(),
        },
        audit,
    ))
}
