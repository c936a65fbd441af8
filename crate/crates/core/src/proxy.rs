//! Computable proxies `g(S, W_{−S})` standing in for the conditional
//! expectation of the estimator after rerandomizing `S`.
//!
//! A strict proxy may read treatments outside `S` and outcomes of units whose
//! exposure set misses `S`, nothing else. [`masking_check`] tests exactly that.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::design::{Design, TreatmentVector};
use crate::error::{Error, Result};
use crate::indexrules::IndexSet;
use crate::outcome::{diff_in_means, hajek_value, Estimator, PotentialOutcomeModel};

/// Extra outcome units deleted around each member of the deletion set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    None,
    /// Indices wrap modulo `n`.
    Cyclic { left: usize, right: usize },
    /// Indices are clipped to `0..n`.
    Linear { left: usize, right: usize },
}

/// Divisor of the classical leave-out average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LooDenominator {
    N,
    NMinusOne,
}

/// Everything a proxy may look at. Strict proxies must not read `w` on
/// `set` or `y` on the deletion set.
#[derive(Clone, Copy)]
pub struct ProxyInput<'a> {
    pub design: &'a Design,
    pub model: &'a PotentialOutcomeModel,
    pub estimator: &'a Estimator,
    pub set: &'a IndexSet,
    pub w: &'a TreatmentVector,
    pub y: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyValue {
    pub value: f64,
    /// The proxy fell back to a non-deleted quantity on this realization.
    pub degenerate: bool,
}

impl ProxyValue {
    fn clean(value: f64) -> Self {
        Self { value, degenerate: false }
    }
}

type CustomProxyFn = dyn Fn(&ProxyInput<'_>) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub enum Proxy {
    /// Recompute the estimator without the (padded) deletion set.
    RecomputedAverage { padding: Padding },
    /// IPW estimate with deleted units imputed from per-arm regressions on
    /// the survivors.
    CovariateRegression,
    /// Arm means after dropping the rerandomized units.
    NeymanPair,
    /// Sum of surviving `ψ_i` over a fixed divisor.
    ClassicalLoo { denominator: LooDenominator },
    Custom {
        g: Arc<CustomProxyFn>,
        approximately_measurable: bool,
    },
}

impl fmt::Debug for Proxy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proxy::RecomputedAverage { padding } => write!(f, "RecomputedAverage({padding:?})"),
            Proxy::CovariateRegression => f.write_str("CovariateRegression"),
            Proxy::NeymanPair => f.write_str("NeymanPair"),
            Proxy::ClassicalLoo { denominator } => write!(f, "ClassicalLoo({denominator:?})"),
            Proxy::Custom {
                approximately_measurable,
                ..
            } => write!(f, "Custom(approximately_measurable = {approximately_measurable})"),
        }
    }
}

impl Proxy {
    pub fn recomputed_average() -> Self {
        Proxy::RecomputedAverage { padding: Padding::None }
    }

    pub fn custom<F>(g: F, approximately_measurable: bool) -> Self
    where
        F: Fn(&ProxyInput<'_>) -> Result<f64> + Send + Sync + 'static,
    {
        Proxy::Custom {
            g: Arc::new(g),
            approximately_measurable,
        }
    }

    /// Claims exact measurability (the model may still be approximate).
    pub fn is_strict(&self) -> bool {
        !matches!(
            self,
            Proxy::Custom {
                approximately_measurable: true,
                ..
            }
        )
    }

    /// The outcome units this proxy discards for update set `set`.
    pub fn deleted_units(&self, model: &PotentialOutcomeModel, set: &IndexSet) -> Vec<usize> {
        let d = model.deletion_set(set);
        match self {
            Proxy::RecomputedAverage { padding } => pad(&d, *padding, model.n()),
            _ => d,
        }
    }

    pub fn evaluate(&self, input: &ProxyInput<'_>) -> Result<ProxyValue> {
        let model = input.model;
        match self {
            Proxy::RecomputedAverage { padding } => {
                let d = pad(&model.deletion_set(input.set), *padding, model.n());
                recompute(input, &d)
            }
            Proxy::CovariateRegression => covariate_proxy(input).map(ProxyValue::clean),
            Proxy::NeymanPair => {
                let drop = union(&model.deletion_set(input.set), input.set.members());
                arm_means_without(input.w, input.y, &drop).map(ProxyValue::clean)
            }
            Proxy::ClassicalLoo { denominator } => {
                let d = model.deletion_set(input.set);
                let n = model.n();
                let div = match denominator {
                    LooDenominator::N => n,
                    LooDenominator::NMinusOne => n.saturating_sub(1),
                };
                if div == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "leave-one-out divisor is zero with {n} outcome units"
                    )));
                }
                let div = div as f64;
                Ok(ProxyValue::clean(surviving_psi_sum(input, &d)? / div))
            }
            Proxy::Custom { g, .. } => g(input).map(ProxyValue::clean),
        }
    }
}

/// `{i : N_i ∩ A ≠ ∅}`, sorted.
pub fn deletion_set(exposure_sets: &[Vec<usize>], a: &IndexSet) -> Vec<usize> {
    exposure_sets
        .iter()
        .enumerate()
        .filter(|(_, s)| a.intersects(s))
        .map(|(i, _)| i)
        .collect()
}

/// Widens a sorted deletion set by the padding, over `n` outcome units.
pub fn pad(d: &[usize], padding: Padding, n: usize) -> Vec<usize> {
    let (left, right, cyclic) = match padding {
        Padding::None => return d.to_vec(),
        Padding::Cyclic { left, right } => (left, right, true),
        Padding::Linear { left, right } => (left, right, false),
    };
    let mut keep = vec![false; n];
    for &i in d {
        if cyclic {
            let left = left.min(n);
            let right = right.min(n);
            for k in 0..=left {
                keep[(i + n - k % n) % n] = true;
            }
            for k in 0..=right {
                keep[(i + k) % n] = true;
            }
        } else {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(n - 1);
            keep[lo..=hi].iter_mut().for_each(|b| *b = true);
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Mean of `ψ` over units outside `d`.
pub fn recomputed_average_proxy(psis: &[f64], d: &[usize]) -> Result<f64> {
    let n = psis.len();
    let mut deleted = vec![false; n];
    for &i in d {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        deleted[i] = true;
    }
    let kept = n - deleted.iter().filter(|&&b| b).count();
    if kept == 0 {
        return Err(Error::AllDeleted);
    }
    let sum: f64 = psis.iter().zip(&deleted).filter(|(_, &del)| !del).map(|(p, _)| p).sum();
    Ok(sum / kept as f64)
}

fn sorted_contains(sorted: &[usize], i: usize) -> bool {
    sorted.binary_search(&i).is_ok()
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// `Σ_{i∉D} ψ_i`, touching only surviving units.
fn surviving_psi_sum(input: &ProxyInput<'_>, d: &[usize]) -> Result<f64> {
    let est = input.estimator;
    if !est.is_linear_mean() {
        return Err(Error::Unsupported(format!("{est:?} is not an average of ψ_i")));
    }
    let mut sum = 0.0;
    for (i, &yi) in input.y.iter().enumerate() {
        if !sorted_contains(d, i) {
            sum += est.psi_weight(i, input.w).expect("linear estimator") * yi;
        }
    }
    Ok(sum)
}

fn recompute(input: &ProxyInput<'_>, d: &[usize]) -> Result<ProxyValue> {
    let n = input.model.n();
    match input.estimator {
        Estimator::IpwDirect { .. } | Estimator::IpwTot { .. } => {
            if d.len() >= n {
                return Err(Error::AllDeleted);
            }
            Ok(ProxyValue::clean(surviving_psi_sum(input, d)? / (n - d.len()) as f64))
        }
        Estimator::DiffInMeans => {
            let drop = union(d, input.set.members());
            match diff_in_means(input.w, input.y, |i| !sorted_contains(&drop, i)) {
                Ok(v) => Ok(ProxyValue::clean(v)),
                Err(Error::Degenerate(_)) => fallback(input),
                Err(e) => Err(e),
            }
        }
        Estimator::HajekBipartite { treated, p, control, q } => {
            match hajek_value(treated, p, control, q, input.w, input.y, |i| !sorted_contains(d, i)) {
                Ok(v) => Ok(ProxyValue::clean(v)),
                Err(Error::Degenerate(_)) => fallback(input),
                Err(e) => Err(e),
            }
        }
        Estimator::Custom(_) => Err(Error::Unsupported(
            "a custom estimator cannot be recomputed on a subset".into(),
        )),
    }
}

/// The undeleted estimate, used when the deleted version is undefined.
fn fallback(input: &ProxyInput<'_>) -> Result<ProxyValue> {
    Ok(ProxyValue {
        value: input.estimator.estimate(input.w, input.y)?,
        degenerate: true,
    })
}

/// `mean_T − mean_C` after dropping `drop`. Errors when an arm empties.
fn arm_means_without(w: &TreatmentVector, y: &[f64], drop: &[usize]) -> Result<f64> {
    if y.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            got: y.len(),
        });
    }
    diff_in_means(w, y, |i| !sorted_contains(drop, i)).map_err(|_| {
        Error::ArmTooSmall("an arm has no units left after the deletion".into())
    })
}

/// `(1/(n1−1)) Σ_{T∖{j}} Y − (1/(n0−1)) Σ_{C∖{k}} Y` for treated `j` and control `k`.
pub fn neyman_pair_proxy(y: &[f64], w: &TreatmentVector, j: usize, k: usize) -> Result<f64> {
    if j >= w.len() || k >= w.len() {
        return Err(Error::IndexOutOfRange {
            index: j.max(k),
            len: w.len(),
        });
    }
    if !w.get(j) || w.get(k) {
        return Err(Error::InvalidArgument(
            "the pair must be one treated and one control unit".into(),
        ));
    }
    let mut drop = vec![j, k];
    drop.sort_unstable();
    arm_means_without(w, y, &drop)
}

/// An affine fit `a + b x` for one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmFit {
    pub intercept: f64,
    pub slope: f64,
}

impl ArmFit {
    pub fn constant(c: f64) -> Self {
        Self { intercept: c, slope: 0.0 }
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Outcome predictor `m̂(t, x)` for both arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPredictor {
    pub control: ArmFit,
    pub treated: ArmFit,
}

impl ArmPredictor {
    pub fn predict(&self, treated: bool, x: f64) -> f64 {
        if treated {
            self.treated.predict(x)
        } else {
            self.control.predict(x)
        }
    }
}

/// Least-squares `Y ~ 1 + X` within each arm over units outside `d`.
/// An arm with fewer than two survivors uses its mean; an arm with none
/// uses the overall survivor mean. The slope is zeroed when the arm's
/// covariate variance is below `1e-12`.
pub fn fit_arm_means(
    arm: &[bool],
    x: Option<&[f64]>,
    y: &[f64],
    d: &[usize],
) -> Result<ArmPredictor> {
    let n = y.len();
    if arm.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: arm.len() });
    }
    let xs = |i: usize| x.map_or(0.0, |x| x[i]);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for i in 0..n {
        if sorted_contains(d, i) {
            continue;
        }
        total += y[i];
        count += 1;
        groups[usize::from(arm[i])].push(i);
    }
    if count == 0 {
        return Err(Error::AllDeleted);
    }
    let overall = total / count as f64;
    let fit = |units: &[usize]| -> ArmFit {
        match units.len() {
            0 => ArmFit::constant(overall),
            1 => ArmFit::constant(y[units[0]]),
            k => {
                let kf = k as f64;
                let mx = units.iter().map(|&i| xs(i)).sum::<f64>() / kf;
                let my = units.iter().map(|&i| y[i]).sum::<f64>() / kf;
                let sxx: f64 = units.iter().map(|&i| (xs(i) - mx).powi(2)).sum();
                let sxy: f64 = units.iter().map(|&i| (xs(i) - mx) * (y[i] - my)).sum();
                if sxx / kf < 1e-12 {
                    ArmFit::constant(my)
                } else {
                    let slope = sxy / sxx;
                    ArmFit {
                        intercept: my - slope * mx,
                        slope,
                    }
                }
            }
        }
    };
    Ok(ArmPredictor {
        control: fit(&groups[0]),
        treated: fit(&groups[1]),
    })
}

/// IPW arm means over survivors: `S_T/(n−|D|)` and `S_C/(n−|D|)`.
pub fn ipw_arm_means(input: &ProxyInput<'_>, d: &[usize]) -> Result<ArmPredictor> {
    let (indicators, probs) = ipw_parts(input.estimator)?;
    let n = input.y.len();
    if d.len() >= n {
        return Err(Error::AllDeleted);
    }
    let (mut st, mut sc) = (0.0, 0.0);
    for i in 0..n {
        if sorted_contains(d, i) {
            continue;
        }
        if indicators[i].evaluate(input.w) {
            st += input.y[i] / probs[i];
        } else {
            sc += input.y[i] / (1.0 - probs[i]);
        }
    }
    let kept = (n - d.len()) as f64;
    Ok(ArmPredictor {
        control: ArmFit::constant(sc / kept),
        treated: ArmFit::constant(st / kept),
    })
}

fn ipw_parts(est: &Estimator) -> Result<(&[crate::outcome::ExposureIndicator], &[f64])> {
    match est {
        Estimator::IpwDirect { indicators, probs } => Ok((indicators, probs)),
        other => Err(Error::Unsupported(format!(
            "the covariate proxy needs a direct IPW estimator, got {other:?}"
        ))),
    }
}

/// `(1/n) Σ_{i∉D} ψ_i + (1/n) Σ_{i∈D} [(p̃_i/p_i) m̂(1, X_i) − ((1−p̃_i)/(1−p_i)) m̂(0, X_i)]`.
/// With `conditional = false` the unconditional `p_i` replaces `p̃_i`.
pub fn covariate_formula(
    input: &ProxyInput<'_>,
    d: &[usize],
    predictor: &ArmPredictor,
    conditional: bool,
) -> Result<f64> {
    let (indicators, probs) = ipw_parts(input.estimator)?;
    let n = input.model.n();
    let x = input.model.covariates();
    let mut sum = surviving_psi_sum(input, d)?;
    for &i in d {
        let p = probs[i];
        let pt = if conditional {
            indicators[i].conditional_exposure_prob(input.design, input.set, input.w)
        } else {
            p
        };
        let xi = x.map_or(0.0, |x| x[i]);
        sum += pt / p * predictor.predict(true, xi) - (1.0 - pt) / (1.0 - p) * predictor.predict(false, xi);
    }
    Ok(sum / n as f64)
}

/// The covariate-regression proxy.
pub fn covariate_proxy(input: &ProxyInput<'_>) -> Result<f64> {
    let (indicators, _) = ipw_parts(input.estimator)?;
    let d = input.model.deletion_set(input.set);
    let arm: Vec<bool> = (0..input.y.len())
        .map(|i| !sorted_contains(&d, i) && indicators[i].evaluate(input.w))
        .collect();
    let predictor = fit_arm_means(&arm, input.model.covariates(), input.y, &d)?;
    covariate_formula(input, &d, &predictor, true)
}

/// Evaluates the proxy twice, the second time with `W_A` scrambled and the
/// outcomes of exposed units replaced by NaN. A strict proxy must return the
/// same bits.
pub fn masking_check<R: Rng + ?Sized>(proxy: &Proxy, input: &ProxyInput<'_>, rng: &mut R) -> Result<bool> {
    let base = proxy.evaluate(input)?;
    let mut w = input.w.clone();
    for &j in input.set.iter() {
        w.set(j, rng.random());
    }
    let mut y = input.y.to_vec();
    for i in input.model.deletion_set(input.set) {
        y[i] = f64::NAN;
    }
    let masked = ProxyInput {
        w: &w,
        y: &y,
        ..*input
    };
    match proxy.evaluate(&masked) {
        Ok(v) => Ok(v.value.to_bits() == base.value.to_bits()),
        Err(_) => Ok(false),
    }
}
