//! Fourier analysis of functions of a Bernoulli assignment.
//!
//! The basis is `φ_A(w) = Π_{j∈A} (w_j − π_j)/sqrt(π_j(1 − π_j))`, orthonormal
//! under the product law. Subsets are bit masks, unit `j` is bit `j`.

use std::io::Write;

use crate::design::{Design, DesignKind, TreatmentVector};
use crate::error::{Error, Result};
use crate::indexrules::IndexRule;
use crate::outcome::{Estimator, PotentialOutcomeModel};
use crate::spectral::SpectralGap;
use crate::util::pairwise_sum;

/// Largest `m` accepted by the dense expansion.
pub const MAX_FOURIER_UNITS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct FourierExpansion {
    m: usize,
    probs: Vec<f64>,
    coeffs: Vec<f64>,
}

fn bernoulli_probs(design: &Design) -> Result<&[f64]> {
    match design.kind() {
        DesignKind::Bernoulli { probs } => {
            if probs.len() > MAX_FOURIER_UNITS {
                Err(Error::CapExceeded {
                    size: 1u128 << probs.len(),
                    cap: 1 << MAX_FOURIER_UNITS,
                })
            } else {
                Ok(probs)
            }
        }
        DesignKind::CompletelyRandomized { .. } => Err(Error::Unsupported(
            "the product Fourier basis needs a Bernoulli design".into(),
        )),
    }
}

impl FourierExpansion {
    /// Coefficients of `f`, given as its values on all `2^m` masks.
    pub fn from_values(design: &Design, values: &[f64]) -> Result<Self> {
        let probs = bernoulli_probs(design)?.to_vec();
        let m = probs.len();
        if values.len() != 1 << m {
            return Err(Error::LengthMismatch {
                expected: 1 << m,
                got: values.len(),
            });
        }
        // One coordinate at a time: (f0, f1) -> (E over w_j, E[f φ_j]).
        let mut c = values.to_vec();
        for (j, &p) in probs.iter().enumerate() {
            let bit = 1usize << j;
            let sigma = (p * (1.0 - p)).sqrt();
            for x in 0..c.len() {
                if x & bit == 0 {
                    let f0 = c[x];
                    let f1 = c[x | bit];
                    c[x] = (1.0 - p) * f0 + p * f1;
                    c[x | bit] = sigma * (f1 - f0);
                }
            }
        }
        Ok(Self { m, probs, coeffs: c })
    }

    pub fn from_fn(design: &Design, f: impl Fn(&TreatmentVector) -> f64) -> Result<Self> {
        let m = bernoulli_probs(design)?.len();
        let values: Vec<f64> = (0..1u64 << m).map(|mask| f(&TreatmentVector::from_mask(m, mask))).collect();
        Self::from_values(design, &values)
    }

    pub fn from_estimator(design: &Design, estimator: &Estimator, model: &PotentialOutcomeModel) -> Result<Self> {
        let m = bernoulli_probs(design)?.len();
        let mut values = Vec::with_capacity(1 << m);
        for mask in 0..1u64 << m {
            let w = TreatmentVector::from_mask(m, mask);
            let y = model.observed_outcomes(&w)?;
            values.push(estimator.estimate(&w, &y)?);
        }
        Self::from_values(design, &values)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coefficient(&self, mask: u64) -> f64 {
        self.coeffs[mask as usize]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    /// `Σ_{A≠∅} c_A²`.
    pub fn variance(&self) -> f64 {
        pairwise_sum(&self.coeffs[1..].iter().map(|c| c * c).collect::<Vec<_>>())
    }

    /// `Σ_A c_A²`, which equals `E[f²]`.
    pub fn second_moment(&self) -> f64 {
        pairwise_sum(&self.coeffs.iter().map(|c| c * c).collect::<Vec<_>>())
    }

    /// `φ_A(w)`.
    pub fn basis(&self, mask: u64, w: &TreatmentVector) -> f64 {
        basis_value(&self.probs, mask, w)
    }

    /// `Σ_A c_A φ_A(w)`.
    pub fn reconstruct(&self, w: &TreatmentVector) -> f64 {
        (0..self.coeffs.len() as u64)
            .map(|a| self.coeffs[a as usize] * self.basis(a, w))
            .sum()
    }

    /// CSV of `(mask, c_A)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "mask,coefficient")?;
        for (a, c) in self.coeffs.iter().enumerate() {
            writeln!(out, "{a},{c:.16e}")?;
        }
        Ok(())
    }
}

/// `φ_A(w)` under marginals `probs`.
pub fn basis_value(probs: &[f64], mask: u64, w: &TreatmentVector) -> f64 {
    let mut v = 1.0;
    for (j, &p) in probs.iter().enumerate() {
        if mask >> j & 1 == 1 {
            let x = f64::from(u8::from(w.get(j)));
            v *= (x - p) / (p * (1.0 - p)).sqrt();
        }
    }
    v
}

/// `P(S ∩ A ≠ ∅)` for every mask `A` over `m` units.
pub fn hit_probabilities(rule: &IndexRule, m: usize) -> Result<Vec<f64>> {
    if !rule.is_w_independent() {
        return Err(Error::Unsupported("hit probabilities need a rule independent of W".into()));
    }
    if m > MAX_FOURIER_UNITS {
        return Err(Error::CapExceeded {
            size: 1u128 << m,
            cap: 1 << MAX_FOURIER_UNITS,
        });
    }
    let support: Vec<(u64, f64)> = rule
        .enumerate(&TreatmentVector::zeros(m))?
        .into_iter()
        .map(|(s, p)| (s.to_mask(), p))
        .collect();
    Ok((0..1u64 << m)
        .map(|a| support.iter().filter(|(s, _)| s & a != 0).map(|(_, p)| p).sum())
        .collect())
}

/// `UB_oracle = (1/λ) Σ_{A≠∅} P(S ∩ A ≠ ∅) c_A²`.
pub fn ub_oracle_fourier(expansion: &FourierExpansion, rule: &IndexRule, lambda: SpectralGap) -> Result<f64> {
    let hits = hit_probabilities(rule, expansion.m)?;
    let terms: Vec<f64> = expansion.coeffs[1..]
        .iter()
        .zip(&hits[1..])
        .map(|(c, h)| h * c * c)
        .collect();
    Ok(pairwise_sum(&terms) / lambda.value())
}

/// `P(S ∩ A ≠ ∅) / λ`.
pub fn inflation_ratio(rule: &IndexRule, m: usize, a: &[usize], lambda: SpectralGap) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("inflation ratio of the empty set".into()));
    }
    Ok(rule.hit_prob(a, m)? / lambda.value())
}

/// `P(S ∩ A ≠ ∅)` for a uniform cycle block of length `l` on the `m`-cycle,
/// from the runs of consecutive units outside `A`: a run of length `r` holds
/// `max(r − l + 1, 0)` starts whose block misses `A`.
pub fn cycle_block_hit_prob(m: usize, l: usize, a_mask: u64) -> f64 {
    let full = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let a_mask = a_mask & full;
    if a_mask == 0 {
        return 0.0;
    }
    // Rotate so that unit 0 is in A; runs then never wrap.
    let first = a_mask.trailing_zeros() as usize;
    let mut misses = 0usize;
    let mut run = 0usize;
    for k in 1..=m {
        let j = (first + k) % m;
        if a_mask >> j & 1 == 1 {
            misses += (run + 1).saturating_sub(l);
            run = 0;
        } else {
            run += 1;
        }
    }
    (m - misses) as f64 / m as f64
}

/// `UB_oracle` for `CycleBlock(L)`, `λ = L/m`, at each `L` of the grid. Errors
/// with [`Error::NotMonotone`] if a value rises above its predecessor by more
/// than `1e-12` (relative to the larger magnitude, floored at 1).
pub fn monotonicity_check(expansion: &FourierExpansion, l_grid: &[usize]) -> Result<Vec<(usize, f64)>> {
    let m = expansion.m;
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(l_grid.len());
    for &l in l_grid {
        if l == 0 || l > m {
            return Err(Error::InvalidArgument(format!("block length {l} outside 1..={m}")));
        }
        let lam = SpectralGap::given(l as f64 / m as f64)?;
        let terms: Vec<f64> = (1..1u64 << m)
            .map(|a| cycle_block_hit_prob(m, l, a) * expansion.coefficient(a).powi(2))
            .collect();
        let value = pairwise_sum(&terms) / lam.value();
        if let Some(&(prev_l, prev)) = out.last() {
            if l <= prev_l {
                return Err(Error::InvalidArgument("block lengths must increase".into()));
            }
            if value > prev + 1e-12 * prev.abs().max(value.abs()).max(1.0) {
                return Err(Error::NotMonotone {
                    prev_l,
                    prev,
                    next_l: l,
                    next: value,
                });
            }
        }
        out.push((l, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(m: usize) -> Design {
        Design::bernoulli((0..m).map(|j| 0.2 + 0.1 * j as f64).collect()).unwrap()
    }

    #[test]
    fn basis_function_has_one_coefficient() {
        let d = design(4);
        let probs = match d.kind() {
            DesignKind::Bernoulli { probs } => probs.clone(),
            _ => unreachable!(),
        };
        let e = FourierExpansion::from_fn(&d, |w| basis_value(&probs, 0b0001, w)).unwrap();
        for a in 0..16u64 {
            let expect = if a == 1 { 1.0 } else { 0.0 };
            assert!((e.coefficient(a) - expect).abs() < 1e-12, "A = {a:b}");
        }
        let e = FourierExpansion::from_fn(&d, |_| 2.5).unwrap();
        assert!((e.mean() - 2.5).abs() < 1e-15);
        assert!(e.variance() < 1e-28);
    }

    #[test]
    fn fast_transform_matches_direct_inner_products() {
        let d = design(5);
        let f = |w: &TreatmentVector| {
            let m = w.to_mask().unwrap();
            ((m * 37 + 11) % 17) as f64 / 4.0 - 1.0
        };
        let e = FourierExpansion::from_fn(&d, f).unwrap();
        for a in 0..32u64 {
            let mut direct = 0.0;
            for mask in 0..32u64 {
                let w = TreatmentVector::from_mask(5, mask);
                direct += d.pmf(&w).unwrap() * f(&w) * e.basis(a, &w);
            }
            assert!((direct - e.coefficient(a)).abs() < 1e-12);
        }
        for mask in 0..32u64 {
            let w = TreatmentVector::from_mask(5, mask);
            assert!((e.reconstruct(&w) - f(&w)).abs() < 1e-10);
        }
    }

    #[test]
    fn cycle_hit_probability_matches_enumeration() {
        for m in 2..=9 {
            for l in 1..=m {
                let rule = IndexRule::CycleBlock { len: l };
                let hits = hit_probabilities(&rule, m).unwrap();
                for a in 0..1u64 << m {
                    assert!((cycle_block_hit_prob(m, l, a) - hits[a as usize]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inflation_examples() {
        let m = 8;
        let lam = |l: usize| SpectralGap::given(l as f64 / m as f64).unwrap();
        for l in 1..=m {
            let rule = IndexRule::CycleBlock { len: l };
            assert!((inflation_ratio(&rule, m, &[3], lam(l)).unwrap() - 1.0).abs() < 1e-12);
        }
        let full = IndexRule::CycleBlock { len: m };
        assert!((inflation_ratio(&full, m, &[0, 2, 5], lam(m)).unwrap() - 1.0).abs() < 1e-12);
        // Antipodal pair {0, 4} with L = 2: blocks {0,1},{7,0},{3,4},{4,5} hit.
        let rule = IndexRule::CycleBlock { len: 2 };
        assert!((inflation_ratio(&rule, m, &[0, 4], lam(2)).unwrap() - 2.0).abs() < 1e-12);
        assert!(inflation_ratio(&rule, m, &[], lam(2)).is_err());
    }

    #[test]
    fn single_unit_function_has_flat_bound() {
        let d = design(6);
        let e = FourierExpansion::from_fn(&d, |w| if w.get(2) { 3.0 } else { -1.0 }).unwrap();
        let seq = monotonicity_check(&e, &[1, 2, 3, 4, 5, 6]).unwrap();
        for (_, v) in &seq {
            assert!((v - e.variance()).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_must_increase() {
        let d = design(6);
        let e = FourierExpansion::from_fn(&d, |w| f64::from(u8::from(w.get(0) && w.get(1)))).unwrap();
        let seq = monotonicity_check(&e, &[1, 2]).unwrap();
        // Mass on an adjacent pair: ratio 2 at L = 1, 3/2 at L = 2.
        let c2 = e.coefficient(0b11).powi(2);
        assert!(seq[0].1 > seq[1].1);
        assert!((seq[0].1 - seq[1].1 - 0.5 * c2).abs() < 1e-12);
        assert!(monotonicity_check(&e, &[2, 1]).is_err());
    }

    #[test]
    fn rejects_crd() {
        let d = Design::completely_randomized(4, 2).unwrap();
        assert!(FourierExpansion::from_values(&d, &[0.0; 16]).is_err());
    }
}
