//! Spectral gap of the rerandomization kernel.
//!
//! The gap `λ` can be read off a closed form for the common design/rule
//! pairs, or computed from the full spectrum of the assembled kernel. The
//! second route is an oracle for the first.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Design, DesignKind, TreatmentVector};
use crate::error::{Error, Result};
use crate::indexrules::{IndexRule, IndexSet};
use crate::jacobi::symmetric_eigenvalues;
use crate::util::binomial;

/// Residual above which the symmetrized kernel is declared non-reversible.
pub const REVERSIBILITY_TOL: f64 = 1e-10;
/// Jacobi stopping threshold on the off-diagonal norm.
pub const JACOBI_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapMethod {
    ClosedForm,
    Eigen,
    /// Supplied by the caller.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    value: f64,
    method: GapMethod,
}

impl SpectralGap {
    /// Values within rounding of 1 are clamped to 1; anything outside `(0, 1]`
    /// is an error.
    pub fn new(value: f64, method: GapMethod) -> Result<Self> {
        let value = if value > 1.0 && value <= 1.0 + 1e-9 { 1.0 } else { value };
        if !(value > 1e-12 && value <= 1.0) {
            return Err(Error::InvalidGap(value));
        }
        Ok(Self { value, method })
    }

    pub fn given(value: f64) -> Result<Self> {
        Self::new(value, GapMethod::Given)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn method(&self) -> GapMethod {
        self.method
    }
}

/// The transition matrix of one Gibbs rerandomization step on the support.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    m: usize,
    states: Vec<u64>,
    matrix: Vec<f64>,
    stationary: Vec<f64>,
}

impl TransitionKernel {
    /// `P(w, w') = Σ_A μ_w(A) · P(W' = w' | S = A, W = w)` over the canonical
    /// state order.
    pub fn build(design: &Design, rule: &IndexRule) -> Result<Self> {
        let m = design.m();
        rule.validate(m, design)?;
        let states: Vec<TreatmentVector> = design.enumerate_support()?;
        let masks: Vec<u64> = states.iter().map(|w| w.to_mask().unwrap_or(0)).collect();
        let index: HashMap<u64, usize> = masks.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let n = masks.len();
        let stationary = states
            .iter()
            .map(|w| design.pmf(w))
            .collect::<Result<Vec<f64>>>()?;

        let rows: Vec<Result<Vec<f64>>> = states
            .par_iter()
            .zip(masks.par_iter())
            .map(|(w, &mask)| {
                let mut row = vec![0.0; n];
                for (a, p) in rule.enumerate(w)? {
                    for (next, q) in design.conditional_law_masks(a.to_mask(), mask)? {
                        row[index[&next]] += p * q;
                    }
                }
                Ok(row)
            })
            .collect();
        let mut matrix = Vec::with_capacity(n * n);
        for row in rows {
            matrix.extend(row?);
        }
        Ok(Self {
            m,
            states: masks,
            matrix,
            stationary,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State `i` as a treatment vector.
    pub fn state(&self, i: usize) -> TreatmentVector {
        TreatmentVector::from_mask(self.m, self.states[i])
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len() + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn max_row_sum_error(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| (self.matrix[i * n..(i + 1) * n].iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Joint law of `(W, W')`: entry `(i, j)` is `π(w_i) P(w_i, w_j)`.
    pub fn joint_mass(&self) -> Vec<f64> {
        let n = self.len();
        let mut j = self.matrix.clone();
        for i in 0..n {
            for k in 0..n {
                j[i * n + k] *= self.stationary[i];
            }
        }
        j
    }

    /// `max |π(w)P(w,w') − π(w')P(w',w)|`.
    pub fn detailed_balance_violation(&self) -> f64 {
        let n = self.len();
        let joint = self.joint_mass();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in i + 1..n {
                worst = worst.max((joint[i * n + k] - joint[k * n + i]).abs());
            }
        }
        worst
    }

    /// `(P φ)(w) = Σ_w' P(w, w') φ(w')`.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                self.matrix[i * n..(i + 1) * n]
                    .iter()
                    .zip(phi)
                    .map(|(p, f)| p * f)
                    .sum()
            })
            .collect()
    }

    /// Full spectrum, descending, via the similarity transform
    /// `D^{1/2} P D^{-1/2}` and a Jacobi sweep.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let sq: Vec<f64> = self.stationary.iter().map(|p| p.sqrt()).collect();
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                s[i * n + k] = sq[i] * self.matrix[i * n + k] / sq[k];
            }
        }
        let mut residual: f64 = 0.0;
        for i in 0..n {
            for k in i + 1..n {
                let (a, b) = (s[i * n + k], s[k * n + i]);
                residual = residual.max((a - b).abs());
                let avg = 0.5 * (a + b);
                s[i * n + k] = avg;
                s[k * n + i] = avg;
            }
        }
        if residual > REVERSIBILITY_TOL {
            return Err(Error::NotReversible { residual });
        }
        symmetric_eigenvalues(&s, n, JACOBI_TOL)
    }

    /// Row-major CSV with a header of state bit strings.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let labels: Vec<String> = (0..self.len())
            .map(|i| {
                self.state(i)
                    .to_bits()
                    .iter()
                    .map(|b| char::from(b'0' + b))
                    .collect()
            })
            .collect();
        writeln!(out, "state,{}", labels.join(","))?;
        let n = self.len();
        for (i, label) in labels.iter().enumerate() {
            let row: Vec<String> = self.matrix[i * n..(i + 1) * n]
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(out, "{label},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `1 − (second-largest eigenvalue)` of a reversible kernel.
pub fn spectral_gap_eigen(kernel: &TransitionKernel) -> Result<SpectralGap> {
    let eig = kernel.eigenvalues()?;
    if eig.len() < 2 {
        return Err(Error::InvalidGap(0.0));
    }
    SpectralGap::new(1.0 - eig[1], GapMethod::Eigen)
}

/// Closed-form gap for the covered design/rule pairs:
/// Bernoulli with a rule independent of `W` gives `min_j P(j ∈ S)`;
/// completely randomized with a size-symmetric rule gives
/// `(E|S| − 1 + P(S = ∅)) / (m − 1)`; completely randomized with
/// treated/control pairs gives `m / (2 n1 n0)`.
pub fn spectral_gap_closed_form(design: &Design, rule: &IndexRule) -> Result<SpectralGap> {
    let m = design.m();
    rule.validate(m, design)?;
    let value = match design.kind() {
        DesignKind::Bernoulli { .. } => {
            if !rule.is_w_independent() {
                return Err(Error::NoClosedForm);
            }
            let mut min: f64 = 1.0;
            for j in 0..m {
                min = min.min(rule.inclusion_prob(j, m)?);
            }
            min
        }
        DesignKind::CompletelyRandomized { n1, .. } => match rule {
            IndexRule::TreatedControlPair => m as f64 / (2 * n1 * (m - n1)) as f64,
            _ => {
                let profile = rule.size_profile(m).ok_or(Error::NoClosedForm)?;
                let mean_size: f64 = profile.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                (mean_size - 1.0 + profile[0]) / (m - 1) as f64
            }
        },
    };
    SpectralGap::new(value, GapMethod::ClosedForm)
}

/// Closed form when available, eigen oracle otherwise.
pub fn spectral_gap(design: &Design, rule: &IndexRule) -> Result<SpectralGap> {
    match spectral_gap_closed_form(design, rule) {
        Err(Error::NoClosedForm) => spectral_gap_eigen(&TransitionKernel::build(design, rule)?),
        other => other,
    }
}

/// Eigenvalue of degree `d` for a completely randomized design with `n1`
/// treated out of `m`, rerandomized through a uniform subset of size `l`:
/// `(l+1)/(m−2d+1) · [C(m−d+1, l+1) − C(d, l+1)] / C(m, l)`.
pub fn crd_eigenvalue_formula(m: usize, n1: usize, l: usize, d: usize) -> Result<f64> {
    let n0 = m.saturating_sub(n1);
    if d > n1.min(n0) {
        return Err(Error::InvalidArgument(format!(
            "degree {d} exceeds min(n1, n0) = {}",
            n1.min(n0)
        )));
    }
    if l == 0 || l > m {
        return Err(Error::InvalidArgument(format!("subset size {l} outside 1..={m}")));
    }
    let num = binomial(m - d + 1, l + 1) - binomial(d, l + 1);
    Ok((l + 1) as f64 / (m - 2 * d + 1) as f64 * num / binomial(m, l))
}

/// Number of times `λ_d` appears in the spectrum: `C(m, d) − C(m, d − 1)`.
pub fn crd_eigenvalue_multiplicity(m: usize, d: usize) -> usize {
    let lower = if d == 0 { 0.0 } else { binomial(m, d - 1) };
    (binomial(m, d) - lower).round() as usize
}

/// Under a Bernoulli design with a rule independent of `W`, the kernel's
/// spectrum is `{P(S ∩ A = ∅) : A ⊆ [m]}`. Returned descending.
pub fn bernoulli_spectrum_formula(rule: &IndexRule, m: usize) -> Result<Vec<f64>> {
    if m > 20 {
        return Err(Error::CapExceeded {
            size: 1u128 << m,
            cap: 1 << 20,
        });
    }
    let mut out = Vec::with_capacity(1 << m);
    for mask in 0u64..(1u64 << m) {
        let a = IndexSet::from_mask(mask);
        out.push(1.0 - rule.hit_prob(a.members(), m)?);
    }
    out.sort_by(|x, y| y.total_cmp(x));
    Ok(out)
}

/// Multiset comparison of two spectra after sorting: the largest gap between
/// matched entries, or infinity if the lengths differ.
pub fn spectrum_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Distinct values of a spectrum, merging entries within `tol`.
pub fn dedup_spectrum(values: &[f64], tol: f64) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|p, q| q.total_cmp(p));
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        if out.last().is_none_or(|&last| (last - x).abs() > tol) {
            out.push(x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_unit_full_rerandomization() {
        let d = Design::bernoulli(vec![0.5]).unwrap();
        let k = TransitionKernel::build(&d, &IndexRule::SingleUniform).unwrap();
        assert_eq!(k.matrix(), &[0.5, 0.5, 0.5, 0.5]);
        let gap = spectral_gap_eigen(&k).unwrap();
        assert!(close(gap.value(), 1.0, 1e-12));
    }

    #[test]
    fn two_unit_crd_pair() {
        let d = Design::completely_randomized(2, 1).unwrap();
        let k = TransitionKernel::build(&d, &IndexRule::TreatedControlPair).unwrap();
        assert_eq!(k.matrix(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn worked_gap_examples() {
        for n in 2..=6 {
            let d = Design::bernoulli_uniform(n, 0.3).unwrap();
            let k = TransitionKernel::build(&d, &IndexRule::SingleUniform).unwrap();
            assert!(close(spectral_gap_eigen(&k).unwrap().value(), 1.0 / n as f64, 1e-10));
        }
        for l in 1..=6 {
            let d = Design::bernoulli_uniform(6, 0.5).unwrap();
            let rule = IndexRule::CycleBlock { len: l };
            let k = TransitionKernel::build(&d, &rule).unwrap();
            assert!(close(spectral_gap_eigen(&k).unwrap().value(), l as f64 / 6.0, 1e-10));
            assert!(close(spectral_gap_closed_form(&d, &rule).unwrap().value(), l as f64 / 6.0, 1e-15));
        }
        let crd = Design::completely_randomized(10, 4).unwrap();
        let gap = spectral_gap_closed_form(&crd, &IndexRule::TreatedControlPair).unwrap();
        assert!(close(gap.value(), 10.0 / 48.0, 1e-15));
        let crd = Design::completely_randomized(7, 3).unwrap();
        for l in 2..=7 {
            let rule = IndexRule::UniformSubset { size: l };
            let closed = spectral_gap_closed_form(&crd, &rule).unwrap().value();
            assert!(close(closed, (l - 1) as f64 / 6.0, 1e-15));
            let eig = spectral_gap_eigen(&TransitionKernel::build(&crd, &rule).unwrap()).unwrap();
            assert!(close(eig.value(), closed, 1e-9));
        }
    }

    #[test]
    fn zero_gap_is_rejected() {
        let crd = Design::completely_randomized(5, 2).unwrap();
        assert!(matches!(
            spectral_gap_closed_form(&crd, &IndexRule::SingleUniform),
            Err(Error::InvalidGap(_))
        ));
        assert!(matches!(
            spectral_gap_closed_form(&crd, &IndexRule::CycleBlock { len: 2 }),
            Err(Error::NoClosedForm)
        ));
    }

    #[test]
    fn crd_formula_endpoints() {
        for m in 3..=9 {
            for n1 in 1..m {
                for l in 1..=m {
                    assert!(close(crd_eigenvalue_formula(m, n1, l, 0).unwrap(), 1.0, 1e-12));
                    let one = crd_eigenvalue_formula(m, n1, l, 1).unwrap();
                    assert!(close(one, (m - l) as f64 / (m - 1) as f64, 1e-12));
                    let mut prev = 1.0 + 1e-12;
                    for d in 0..=n1.min(m - n1) {
                        let v = crd_eigenvalue_formula(m, n1, l, d).unwrap();
                        assert!(v <= prev + 1e-12, "m={m} l={l} d={d}");
                        prev = v;
                    }
                }
            }
        }
        assert!(crd_eigenvalue_formula(6, 2, 3, 3).is_err());
    }

    #[test]
    fn multiplicities_fill_the_slice() {
        for m in 2..=10 {
            for n1 in 1..m {
                let total: usize = (0..=n1.min(m - n1)).map(|d| crd_eigenvalue_multiplicity(m, d)).sum();
                assert_eq!(total as f64, binomial(m, n1));
            }
        }
    }

    #[test]
    fn csv_dump_shape() {
        let d = Design::completely_randomized(3, 1).unwrap();
        let k = TransitionKernel::build(&d, &IndexRule::TreatedControlPair).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "state,001,010,100");
    }

    #[test]
    fn dedup_merges_close_values() {
        assert_eq!(dedup_spectrum(&[1.0, 0.5, 0.5 + 1e-12, 0.0], 1e-9), vec![1.0, 0.5 + 1e-12, 0.0]);
    }
}
