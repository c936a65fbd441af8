//! Fixed potential outcomes with exposure sets, exposure indicators and the
//! point estimators whose variance is being estimated.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::design::{Design, DesignKind, TreatmentVector};
use crate::error::{Error, Result};
use crate::indexrules::IndexSet;
use crate::util::binomial;

/// A binary exposure, measurable on a few intervention units.
#[derive(Debug, Clone, PartialEq)]
pub enum ExposureIndicator {
    OwnTreatment(usize),
    AllTreated(Vec<usize>),
    AllControl(Vec<usize>),
}

impl ExposureIndicator {
    /// Sorts and deduplicates the unit list; rejects an empty one.
    pub fn all_treated(units: Vec<usize>) -> Result<Self> {
        Ok(Self::AllTreated(nonempty_sorted(units)?))
    }

    pub fn all_control(units: Vec<usize>) -> Result<Self> {
        Ok(Self::AllControl(nonempty_sorted(units)?))
    }

    pub fn units(&self) -> &[usize] {
        match self {
            Self::OwnTreatment(j) => std::slice::from_ref(j),
            Self::AllTreated(u) | Self::AllControl(u) => u,
        }
    }

    fn required(&self) -> bool {
        !matches!(self, Self::AllControl(_))
    }

    pub fn check_range(&self, m: usize) -> Result<()> {
        match self.units().iter().find(|&&j| j >= m) {
            Some(&j) => Err(Error::IndexOutOfRange { index: j, len: m }),
            None => Ok(()),
        }
    }

    pub fn evaluate(&self, w: &TreatmentVector) -> bool {
        let want = self.required();
        self.units().iter().all(|&j| w.get(j) == want)
    }

    /// `P(T = 1)` under the design.
    pub fn exposure_prob(&self, design: &Design) -> f64 {
        let units = self.units();
        match design.kind() {
            DesignKind::Bernoulli { probs } => units
                .iter()
                .map(|&j| if self.required() { probs[j] } else { 1.0 - probs[j] })
                .product(),
            DesignKind::CompletelyRandomized { m, n1 } => {
                let k = units.len();
                let favourable = if self.required() {
                    if k > *n1 {
                        0.0
                    } else {
                        binomial(m - k, n1 - k)
                    }
                } else if k > m - n1 {
                    0.0
                } else {
                    binomial(m - k, *n1)
                };
                favourable / binomial(*m, *n1)
            }
        }
    }

    /// `P(T = 1 | S = A, W_{−A} = w_{−A})` where `W_A` follows its
    /// design-conditional law given the rest. This is the conditional law of
    /// the Gibbs step whenever `μ_w(A)` is constant across completions of
    /// `w_{−A}`, which holds for every built-in rule.
    pub fn conditional_exposure_prob(&self, design: &Design, a: &IndexSet, w: &TreatmentVector) -> f64 {
        let want = self.required();
        let mut inside = Vec::new();
        for &j in self.units() {
            if a.contains(j) {
                inside.push(j);
            } else if w.get(j) != want {
                return 0.0;
            }
        }
        match design.kind() {
            DesignKind::Bernoulli { probs } => inside
                .iter()
                .map(|&j| if want { probs[j] } else { 1.0 - probs[j] })
                .product(),
            DesignKind::CompletelyRandomized { n1, .. } => {
                let size = a.len();
                let outside = w.count_ones() - w.count_ones_in(a.members());
                if outside > *n1 || n1 - outside > size {
                    return 0.0;
                }
                let k = n1 - outside;
                let r = inside.len();
                let favourable = if want {
                    if r > k {
                        0.0
                    } else {
                        binomial(size - r, k - r)
                    }
                } else if r > size - k {
                    0.0
                } else {
                    binomial(size - r, k)
                };
                favourable / binomial(size, k)
            }
        }
    }
}

fn nonempty_sorted(mut units: Vec<usize>) -> Result<Vec<usize>> {
    units.sort_unstable();
    units.dedup();
    if units.is_empty() {
        return Err(Error::InvalidArgument("exposure indicator over no units".into()));
    }
    Ok(units)
}

type UnitFn = dyn Fn(usize, &[bool]) -> f64 + Send + Sync;
type JointFn = dyn Fn(&TreatmentVector) -> Vec<f64> + Send + Sync;

/// How outcomes are produced from an assignment.
#[derive(Clone)]
pub enum OutcomeFn {
    /// Per unit, `2^{|N_i|}` values indexed by the restriction to `N_i`
    /// (bit `b` is the treatment of the `b`-th smallest member of `N_i`).
    Table(Vec<Vec<f64>>),
    /// Per unit, a callback on the restriction to `N_i`.
    Unit(Arc<UnitFn>),
    /// All outcomes at once from the full vector. Used when the declared
    /// exposure sets are an approximation.
    Joint(Arc<JointFn>),
}

impl fmt::Debug for OutcomeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeFn::Table(t) => f.debug_tuple("Table").field(&t.len()).finish(),
            OutcomeFn::Unit(_) => f.write_str("Unit(<fn>)"),
            OutcomeFn::Joint(_) => f.write_str("Joint(<fn>)"),
        }
    }
}

/// Deterministic potential outcomes `Y_i(w)` with exposure sets `N_i`.
#[derive(Debug, Clone)]
pub struct PotentialOutcomeModel {
    m: usize,
    exposure_sets: Vec<Vec<usize>>,
    outcome: OutcomeFn,
    covariates: Option<Vec<f64>>,
    approximately_measurable: bool,
    reverse: Vec<Vec<usize>>,
}

impl PotentialOutcomeModel {
    fn build(m: usize, exposure_sets: Vec<Vec<usize>>, outcome: OutcomeFn, approx: bool) -> Result<Self> {
        let mut sets = Vec::with_capacity(exposure_sets.len());
        let mut reverse = vec![Vec::new(); m];
        for (i, mut s) in exposure_sets.into_iter().enumerate() {
            s.sort_unstable();
            s.dedup();
            if let Some(&j) = s.iter().find(|&&j| j >= m) {
                return Err(Error::IndexOutOfRange { index: j, len: m });
            }
            for &j in &s {
                reverse[j].push(i);
            }
            sets.push(s);
        }
        if let OutcomeFn::Table(tables) = &outcome {
            if tables.len() != sets.len() {
                return Err(Error::LengthMismatch {
                    expected: sets.len(),
                    got: tables.len(),
                });
            }
            for (t, s) in tables.iter().zip(&sets) {
                if s.len() > 20 || t.len() != 1 << s.len() {
                    return Err(Error::InvalidArgument(format!(
                        "table of length {} for an exposure set of size {}",
                        t.len(),
                        s.len()
                    )));
                }
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite outcome in table".into()));
                }
            }
        }
        Ok(Self {
            m,
            exposure_sets: sets,
            outcome,
            covariates: None,
            approximately_measurable: approx,
            reverse,
        })
    }

    pub fn from_tables(m: usize, exposure_sets: Vec<Vec<usize>>, tables: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(m, exposure_sets, OutcomeFn::Table(tables), false)
    }

    pub fn from_unit_fn<F>(m: usize, exposure_sets: Vec<Vec<usize>>, f: F) -> Result<Self>
    where
        F: Fn(usize, &[bool]) -> f64 + Send + Sync + 'static,
    {
        Self::build(m, exposure_sets, OutcomeFn::Unit(Arc::new(f)), false)
    }

    /// A model whose outcomes may depend on units outside the declared
    /// exposure sets. It is flagged as only approximately measurable.
    pub fn from_joint_fn<F>(m: usize, exposure_sets: Vec<Vec<usize>>, f: F) -> Result<Self>
    where
        F: Fn(&TreatmentVector) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::build(m, exposure_sets, OutcomeFn::Joint(Arc::new(f)), true)
    }

    pub fn with_covariates(mut self, x: Vec<f64>) -> Result<Self> {
        if x.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        self.covariates = Some(x);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.exposure_sets.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn exposure_sets(&self) -> &[Vec<usize>] {
        &self.exposure_sets
    }

    pub fn exposure_set(&self, i: usize) -> &[usize] {
        &self.exposure_sets[i]
    }

    pub fn covariates(&self) -> Option<&[f64]> {
        self.covariates.as_deref()
    }

    pub fn is_approximately_measurable(&self) -> bool {
        self.approximately_measurable
    }

    pub fn outcome_fn(&self) -> &OutcomeFn {
        &self.outcome
    }

    /// Outcome units exposed to intervention unit `j`.
    pub fn exposed_to(&self, j: usize) -> &[usize] {
        &self.reverse[j]
    }

    /// `Y(w)`.
    pub fn observed_outcomes(&self, w: &TreatmentVector) -> Result<Vec<f64>> {
        if w.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                got: w.len(),
            });
        }
        let y = match &self.outcome {
            OutcomeFn::Table(tables) => self
                .exposure_sets
                .iter()
                .zip(tables)
                .map(|(s, t)| {
                    let idx = s
                        .iter()
                        .enumerate()
                        .fold(0usize, |acc, (b, &j)| acc | (usize::from(w.get(j)) << b));
                    t[idx]
                })
                .collect(),
            OutcomeFn::Unit(f) => {
                let mut buf = Vec::new();
                self.exposure_sets
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        buf.clear();
                        buf.extend(s.iter().map(|&j| w.get(j)));
                        f(i, &buf)
                    })
                    .collect()
            }
            OutcomeFn::Joint(f) => {
                let y = f(w);
                if y.len() != self.n() {
                    return Err(Error::LengthMismatch {
                        expected: self.n(),
                        got: y.len(),
                    });
                }
                y
            }
        };
        if let Some(i) = y.iter().position(|v: &f64| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("outcome {i} is not finite")));
        }
        Ok(y)
    }

    /// Sorted outcome units whose exposure set meets `a`.
    pub fn deletion_set(&self, a: &IndexSet) -> Vec<usize> {
        let mut d: Vec<usize> = a
            .iter()
            .filter(|&&j| j < self.m)
            .flat_map(|&j| self.reverse[j].iter().copied())
            .collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// Largest `|Y_i(w) − Y_i(w')|` over random pairs that agree on `N_i`.
    /// Zero for any model that respects its exposure sets.
    pub fn responsiveness_violation<R: Rng + ?Sized>(&self, trials: usize, rng: &mut R) -> Result<f64> {
        let mut worst: f64 = 0.0;
        if self.n() == 0 {
            return Ok(0.0);
        }
        for _ in 0..trials {
            let mut w = TreatmentVector::zeros(self.m);
            for j in 0..self.m {
                w.set(j, rng.random());
            }
            let i = rng.random_range(0..self.n());
            let mut w2 = w.clone();
            for j in 0..self.m {
                if self.exposure_sets[i].binary_search(&j).is_err() {
                    w2.set(j, rng.random());
                }
            }
            let a = self.observed_outcomes(&w)?[i];
            let b = self.observed_outcomes(&w2)?[i];
            worst = worst.max((a - b).abs());
        }
        Ok(worst)
    }
}

type CustomEstimatorFn = dyn Fn(&TreatmentVector, &[f64]) -> f64 + Send + Sync;

/// A point estimator `f(W, Y)`.
#[derive(Clone)]
pub enum Estimator {
    /// `(1/n) Σ (T_i/p_i − (1 − T_i)/(1 − p_i)) Y_i`.
    IpwDirect {
        indicators: Vec<ExposureIndicator>,
        probs: Vec<f64>,
    },
    /// `(1/n) Σ (T_i/p_i − C_i/q_i) Y_i` with separate treated and control
    /// exposures, typically "all of `N_i` treated" and "all of `N_i` control".
    IpwTot {
        treated: Vec<ExposureIndicator>,
        p: Vec<f64>,
        control: Vec<ExposureIndicator>,
        q: Vec<f64>,
    },
    /// Mean outcome of treated units minus mean of control units; outcome
    /// unit `i` is intervention unit `i`.
    DiffInMeans,
    /// Ratio-of-sums difference
    /// `Σ(T_j/p_j)Y_j / Σ(T_j/p_j) − Σ(C_j/q_j)Y_j / Σ(C_j/q_j)`.
    HajekBipartite {
        treated: Vec<ExposureIndicator>,
        p: Vec<f64>,
        control: Vec<ExposureIndicator>,
        q: Vec<f64>,
    },
    Custom(Arc<CustomEstimatorFn>),
}

impl fmt::Debug for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::IpwDirect { indicators, .. } => {
                write!(f, "IpwDirect(n = {})", indicators.len())
            }
            Estimator::IpwTot { treated, .. } => write!(f, "IpwTot(n = {})", treated.len()),
            Estimator::DiffInMeans => f.write_str("DiffInMeans"),
            Estimator::HajekBipartite { treated, .. } => {
                write!(f, "HajekBipartite(n = {})", treated.len())
            }
            Estimator::Custom(_) => f.write_str("Custom(<fn>)"),
        }
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    match probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        Some(p) => Err(Error::InvalidArgument(format!(
            "exposure probability {p} outside (0, 1)"
        ))),
        None => Ok(()),
    }
}

impl Estimator {
    /// IPW with the given exposures and their exact probabilities under `design`.
    pub fn ipw_direct(indicators: Vec<ExposureIndicator>, design: &Design) -> Result<Self> {
        for ind in &indicators {
            ind.check_range(design.m())?;
        }
        let probs: Vec<f64> = indicators.iter().map(|t| t.exposure_prob(design)).collect();
        check_probs(&probs)?;
        Ok(Estimator::IpwDirect { indicators, probs })
    }

    /// Total-effect IPW contrasting "all of `N_i` treated" with "all of `N_i`
    /// control". Every exposure set must be nonempty.
    pub fn ipw_tot(model: &PotentialOutcomeModel, design: &Design) -> Result<Self> {
        let treated = model
            .exposure_sets()
            .iter()
            .map(|s| ExposureIndicator::all_treated(s.clone()))
            .collect::<Result<Vec<_>>>()?;
        let control = model
            .exposure_sets()
            .iter()
            .map(|s| ExposureIndicator::all_control(s.clone()))
            .collect::<Result<Vec<_>>>()?;
        let p: Vec<f64> = treated.iter().map(|t| t.exposure_prob(design)).collect();
        let q: Vec<f64> = control.iter().map(|t| t.exposure_prob(design)).collect();
        check_probs(&p)?;
        check_probs(&q)?;
        Ok(Estimator::IpwTot { treated, p, control, q })
    }

    pub fn hajek(
        treated: Vec<ExposureIndicator>,
        p: Vec<f64>,
        control: Vec<ExposureIndicator>,
        q: Vec<f64>,
    ) -> Result<Self> {
        if treated.len() != p.len() || control.len() != q.len() || treated.len() != control.len() {
            return Err(Error::LengthMismatch {
                expected: treated.len(),
                got: p.len().min(control.len()).min(q.len()),
            });
        }
        check_probs(&p)?;
        check_probs(&q)?;
        Ok(Estimator::HajekBipartite { treated, p, control, q })
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&TreatmentVector, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Estimator::Custom(Arc::new(f))
    }

    /// Per-unit weights `c_i(w)` for estimators of the form `(1/n) Σ c_i Y_i`.
    pub fn psi_weights(&self, w: &TreatmentVector) -> Option<Vec<f64>> {
        match self {
            Estimator::IpwDirect { indicators, probs } => Some(
                indicators
                    .iter()
                    .zip(probs)
                    .map(|(t, &p)| if t.evaluate(w) { 1.0 / p } else { -1.0 / (1.0 - p) })
                    .collect(),
            ),
            Estimator::IpwTot { treated, p, control, q } => Some(
                (0..treated.len())
                    .map(|i| {
                        let mut c = 0.0;
                        if treated[i].evaluate(w) {
                            c += 1.0 / p[i];
                        }
                        if control[i].evaluate(w) {
                            c -= 1.0 / q[i];
                        }
                        c
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Weight of unit `i` alone, without building the whole vector.
    pub fn psi_weight(&self, i: usize, w: &TreatmentVector) -> Option<f64> {
        match self {
            Estimator::IpwDirect { indicators, probs } => {
                let p = probs[i];
                Some(if indicators[i].evaluate(w) { 1.0 / p } else { -1.0 / (1.0 - p) })
            }
            Estimator::IpwTot { treated, p, control, q } => {
                let mut c = 0.0;
                if treated[i].evaluate(w) {
                    c += 1.0 / p[i];
                }
                if control[i].evaluate(w) {
                    c -= 1.0 / q[i];
                }
                Some(c)
            }
            _ => None,
        }
    }

    /// `ψ_i = c_i(w) Y_i`, so that the estimate is the mean of `ψ`.
    pub fn psi(&self, w: &TreatmentVector, y: &[f64]) -> Option<Vec<f64>> {
        self.psi_weights(w)
            .map(|c| c.iter().zip(y).map(|(c, y)| c * y).collect())
    }

    pub fn is_linear_mean(&self) -> bool {
        matches!(self, Estimator::IpwDirect { .. } | Estimator::IpwTot { .. })
    }

    /// Number of outcome units the estimator expects, when it fixes one.
    pub fn n_units(&self) -> Option<usize> {
        match self {
            Estimator::IpwDirect { indicators, .. } => Some(indicators.len()),
            Estimator::IpwTot { treated, .. } | Estimator::HajekBipartite { treated, .. } => {
                Some(treated.len())
            }
            _ => None,
        }
    }

    pub fn estimate(&self, w: &TreatmentVector, y: &[f64]) -> Result<f64> {
        if let Some(n) = self.n_units() {
            if y.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: y.len() });
            }
        }
        match self {
            Estimator::IpwDirect { .. } | Estimator::IpwTot { .. } => {
                let psi = self.psi(w, y).expect("linear estimator");
                Ok(psi.iter().sum::<f64>() / psi.len() as f64)
            }
            Estimator::DiffInMeans => {
                if y.len() != w.len() {
                    return Err(Error::LengthMismatch {
                        expected: w.len(),
                        got: y.len(),
                    });
                }
                diff_in_means(w, y, |_| true)
            }
            Estimator::HajekBipartite { treated, p, control, q } => {
                hajek_value(treated, p, control, q, w, y, |_| true)
            }
            Estimator::Custom(f) => Ok(f(w, y)),
        }
    }
}

/// Difference of arm means over the units accepted by `keep`.
pub(crate) fn diff_in_means(w: &TreatmentVector, y: &[f64], keep: impl Fn(usize) -> bool) -> Result<f64> {
    let (mut st, mut nt, mut sc, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for (i, &yi) in y.iter().enumerate() {
        if !keep(i) {
            continue;
        }
        if w.get(i) {
            st += yi;
            nt += 1;
        } else {
            sc += yi;
            nc += 1;
        }
    }
    if nt == 0 || nc == 0 {
        return Err(Error::Degenerate("an arm is empty".into()));
    }
    Ok(st / nt as f64 - sc / nc as f64)
}

/// Hájek contrast over the units accepted by `keep`.
pub(crate) fn hajek_value(
    treated: &[ExposureIndicator],
    p: &[f64],
    control: &[ExposureIndicator],
    q: &[f64],
    w: &TreatmentVector,
    y: &[f64],
    keep: impl Fn(usize) -> bool,
) -> Result<f64> {
    let (mut nt, mut dt, mut nc, mut dc) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..treated.len() {
        if !keep(i) {
            continue;
        }
        if treated[i].evaluate(w) {
            nt += y[i] / p[i];
            dt += 1.0 / p[i];
        }
        if control[i].evaluate(w) {
            nc += y[i] / q[i];
            dc += 1.0 / q[i];
        }
    }
    if dt == 0.0 || dc == 0.0 {
        return Err(Error::Degenerate("Hájek denominator is zero".into()));
    }
    Ok(nt / dt - nc / dc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tv(bits: &[u8]) -> TreatmentVector {
        TreatmentVector::from_bits(bits).unwrap()
    }

    #[test]
    fn single_term_ipw() {
        let d = Design::bernoulli(vec![0.5]).unwrap();
        let est = Estimator::ipw_direct(vec![ExposureIndicator::OwnTreatment(0)], &d).unwrap();
        assert_eq!(est.estimate(&tv(&[1]), &[2.0]).unwrap(), 4.0);
        assert_eq!(est.estimate(&tv(&[0]), &[2.0]).unwrap(), -4.0);
    }

    #[test]
    fn diff_in_means_example() {
        let w = tv(&[1, 1, 0, 0]);
        assert_eq!(Estimator::DiffInMeans.estimate(&w, &[1.0, 3.0, 2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn hajek_with_equal_weights_is_diff_in_means() {
        let w = tv(&[1, 0, 1, 0, 1]);
        let y = [1.0, 4.0, 2.0, 7.0, 3.0];
        let treated: Vec<_> = (0..5).map(ExposureIndicator::OwnTreatment).collect();
        let control: Vec<_> = (0..5).map(|j| ExposureIndicator::AllControl(vec![j])).collect();
        let est = Estimator::hajek(treated, vec![0.4; 5], control, vec![0.6; 5]).unwrap();
        let h = est.estimate(&w, &y).unwrap();
        let dm = Estimator::DiffInMeans.estimate(&w, &y).unwrap();
        assert!((h - dm).abs() < 1e-14);
        let all = TreatmentVector::ones(5);
        assert!(matches!(est.estimate(&all, &y), Err(Error::Degenerate(_))));
    }

    #[test]
    fn exposure_probabilities_match_enumeration() {
        let designs = [
            Design::bernoulli(vec![0.3, 0.5, 0.8, 0.6, 0.45]).unwrap(),
            Design::completely_randomized(5, 2).unwrap(),
            Design::completely_randomized(5, 3).unwrap(),
        ];
        let inds = [
            ExposureIndicator::OwnTreatment(2),
            ExposureIndicator::AllTreated(vec![0, 3]),
            ExposureIndicator::AllControl(vec![1, 2, 4]),
            ExposureIndicator::AllTreated(vec![0, 1, 2, 3]),
        ];
        for d in &designs {
            let support = d.enumerate_support().unwrap();
            for ind in &inds {
                let exact: f64 = support
                    .iter()
                    .filter(|w| ind.evaluate(w))
                    .map(|w| d.pmf(w).unwrap())
                    .sum();
                assert!((ind.exposure_prob(d) - exact).abs() < 1e-12);
                for mask in 0u64..32 {
                    let a = IndexSet::from_mask(mask);
                    for w in &support {
                        let law = d.conditional_law(&a, w).unwrap();
                        let exact: f64 = law.iter().filter(|(v, _)| ind.evaluate(v)).map(|(_, p)| p).sum();
                        assert!((ind.conditional_exposure_prob(d, &a, w) - exact).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn conditional_exposure_examples() {
        let d = Design::bernoulli_uniform(10, 0.5).unwrap();
        let ind = ExposureIndicator::AllTreated(vec![4, 6]);
        let mut w = TreatmentVector::zeros(10);
        w.set(4, true);
        let a = IndexSet::new(vec![5, 6]);
        assert_eq!(ind.conditional_exposure_prob(&d, &a, &w), 0.5);
        let none = IndexSet::new(vec![0]);
        assert_eq!(ind.conditional_exposure_prob(&d, &none, &w), 0.0);
        let both = IndexSet::new(vec![4, 6]);
        assert_eq!(ind.conditional_exposure_prob(&d, &both, &w), ind.exposure_prob(&d));
    }

    #[test]
    fn table_model_locality() {
        // SUTVA model: Y_i = 10 i + W_i.
        let sets: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
        let tables: Vec<Vec<f64>> = (0..4).map(|i| vec![10.0 * i as f64, 10.0 * i as f64 + 1.0]).collect();
        let model = PotentialOutcomeModel::from_tables(4, sets, tables).unwrap();
        let y0 = model.observed_outcomes(&tv(&[0, 0, 0, 0])).unwrap();
        let y1 = model.observed_outcomes(&tv(&[0, 0, 1, 0])).unwrap();
        let changed: Vec<usize> = (0..4).filter(|&i| y0[i] != y1[i]).collect();
        assert_eq!(changed, vec![2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(model.responsiveness_violation(1000, &mut rng).unwrap(), 0.0);
        assert_eq!(model.deletion_set(&IndexSet::new(vec![1, 3])), vec![1, 3]);
    }

    #[test]
    fn joint_models_can_leak() {
        let model = PotentialOutcomeModel::from_joint_fn(3, vec![vec![0], vec![1], vec![2]], |w| {
            let total = w.count_ones() as f64;
            vec![total; 3]
        })
        .unwrap();
        assert!(model.is_approximately_measurable());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(model.responsiveness_violation(200, &mut rng).unwrap() > 0.0);
    }

    #[test]
    fn tables_are_validated() {
        assert!(PotentialOutcomeModel::from_tables(2, vec![vec![0, 1]], vec![vec![0.0; 3]]).is_err());
        assert!(PotentialOutcomeModel::from_tables(2, vec![vec![2]], vec![vec![0.0; 2]]).is_err());
        assert!(PotentialOutcomeModel::from_tables(2, vec![vec![0]], vec![vec![0.0, f64::NAN]]).is_err());
    }

    #[test]
    fn ipw_is_unbiased_for_its_estimand() {
        // Y_i depends on N_i; estimand is the mean of Y_i(T=1) − Y_i(T=0) with
        // T_i = all of N_i treated, so take outcomes that depend only on T_i.
        let d = Design::bernoulli(vec![0.4, 0.55, 0.7, 0.35]).unwrap();
        let sets = vec![vec![0, 1], vec![1, 2], vec![3], vec![0, 3]];
        let inds: Vec<_> = sets.iter().map(|s| ExposureIndicator::AllTreated(s.clone())).collect();
        let level = [(1.0, 3.0), (-2.0, 0.5), (0.2, 1.7), (4.0, -1.0)];
        let tables: Vec<Vec<f64>> = sets
            .iter()
            .zip(level)
            .map(|(s, (y0, y1))| {
                let full = (1usize << s.len()) - 1;
                (0..1usize << s.len()).map(|r| if r == full { y1 } else { y0 }).collect()
            })
            .collect();
        let model = PotentialOutcomeModel::from_tables(4, sets, tables).unwrap();
        let est = Estimator::ipw_direct(inds, &d).unwrap();
        let mut mean = 0.0;
        for w in d.enumerate_support().unwrap() {
            let y = model.observed_outcomes(&w).unwrap();
            mean += d.pmf(&w).unwrap() * est.estimate(&w, &y).unwrap();
        }
        let estimand: f64 = level.iter().map(|(a, b)| b - a).sum::<f64>() / 4.0;
        assert!((mean - estimand).abs() < 1e-10);
    }
}
