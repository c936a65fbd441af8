//! Classical comparators: Neyman's estimator and the circular-Bartlett
//! Newey–West estimator, with the exact identities linking each to the
//! jackknife on its home turf.

use serde::{Deserialize, Serialize};

use crate::design::{Design, TreatmentVector};
use crate::error::{Error, Result};
use crate::indexrules::IndexRule;
use crate::jackknife::{nj_exact, Problem};
use crate::outcome::{Estimator, PotentialOutcomeModel};
use crate::proxy::Proxy;
use crate::spectral::{spectral_gap_closed_form, SpectralGap};
use crate::util::sample_variance;

/// Triangular weights on circular distance: `B_jk = max(0, 1 − d(j,k)/(lag+1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircularBartlett {
    n: usize,
    lag: usize,
}

impl CircularBartlett {
    /// Requires `lag <= (n − 1)/2` so that no pair is reached both ways round.
    pub fn new(n: usize, lag: usize) -> Result<Self> {
        if n == 0 || lag > (n - 1) / 2 {
            return Err(Error::InvalidArgument(format!(
                "lag {lag} exceeds floor((n - 1)/2) for n = {n}"
            )));
        }
        Ok(Self { n, lag })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn weight(&self, d: usize) -> f64 {
        (1.0 - d as f64 / (self.lag + 1) as f64).max(0.0)
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        let d = j.abs_diff(k);
        self.weight(d.min(self.n - d))
    }

    /// Dense row-major matrix.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                out[j * n + k] = self.entry(j, k);
            }
        }
        out
    }
}

fn arms_of(y: &[f64], w: &TreatmentVector) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            got: y.len(),
        });
    }
    let mut t = Vec::new();
    let mut c = Vec::new();
    for (i, &v) in y.iter().enumerate() {
        if w.get(i) {
            t.push(v);
        } else {
            c.push(v);
        }
    }
    if t.len() < 2 || c.len() < 2 {
        return Err(Error::ArmTooSmall(format!(
            "arms of size {} and {}, need at least 2 each",
            t.len(),
            c.len()
        )));
    }
    Ok((t, c))
}

/// `Ŝ_T/n1 + Ŝ_C/n0` with sample variances over divisors `n1 − 1`, `n0 − 1`.
pub fn neyman_classical(y: &[f64], w: &TreatmentVector) -> Result<f64> {
    let (t, c) = arms_of(y, w)?;
    Ok(sample_variance(&t) / t.len() as f64 + sample_variance(&c) / c.len() as f64)
}

/// `(2/n)(n0/(n1−1) Ŝ_T + n1/(n0−1) Ŝ_C)`.
pub fn neyman_closed_form(y: &[f64], w: &TreatmentVector) -> Result<f64> {
    let (t, c) = arms_of(y, w)?;
    let (n1, n0) = (t.len() as f64, c.len() as f64);
    let n = n1 + n0;
    Ok(2.0 / n * (n0 / (n1 - 1.0) * sample_variance(&t) + n1 / (n0 - 1.0) * sample_variance(&c)))
}

/// `(1/n²) x'Bx` with `x = ψ − ψ̄` and circular Bartlett `B`.
pub fn newey_west(psis: &[f64], lag: usize) -> Result<f64> {
    let n = psis.len();
    let kernel = CircularBartlett::new(n, lag)?;
    let mean = psis.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = psis.iter().map(|p| p - mean).collect();
    let mut total: f64 = x.iter().map(|v| v * v).sum();
    for d in 1..=lag {
        let lagged: f64 = (0..n).map(|j| x[j] * x[(j + d) % n]).sum();
        total += 2.0 * kernel.weight(d) * lagged;
    }
    Ok(total / (n * n) as f64)
}

/// The two sides of an algebraic identity, computed by separate routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySides {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentitySides {
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs().max(1.0)
    }
}

/// Jackknife with treated/control pairs against Neyman's closed form, on a
/// completely randomized design with no interference.
pub fn neyman_identity_check(y: &[f64], w: &TreatmentVector) -> Result<IdentitySides> {
    let rhs = neyman_closed_form(y, w)?;
    let n = w.len();
    let n1 = w.count_ones();
    let design = Design::completely_randomized(n, n1)?;
    let sets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // Only the exposure structure matters here; outcomes are passed in.
    let model = PotentialOutcomeModel::from_tables(n, sets, vec![vec![0.0, 0.0]; n])?;
    let rule = IndexRule::TreatedControlPair;
    let lambda = spectral_gap_closed_form(&design, &rule)?;
    let problem = Problem::new(design, rule, model, Estimator::DiffInMeans, Proxy::NeymanPair)?;
    let lhs = nj_exact(&problem, w, y, lambda)?.v_hat;
    Ok(IdentitySides { lhs, rhs })
}

/// Jackknife with cycle blocks of length `l` and the recomputed-average proxy
/// against `((L+2M)/L) (n/(n−L−2M))² V̂_NW` at lag `L + 2M − 1`, for an IPW
/// estimator whose exposure sets are the circular windows `[i − M, i + M]`.
pub fn nw_identity_check(
    design: &Design,
    model: &PotentialOutcomeModel,
    estimator: &Estimator,
    w: &TreatmentVector,
    y: &[f64],
    l: usize,
    m_dep: usize,
) -> Result<IdentitySides> {
    let n = model.n();
    if design.m() != n || l == 0 || l + 2 * m_dep >= n {
        return Err(Error::InvalidArgument(format!(
            "need n = m and L + 2M < n (n = {n}, L = {l}, M = {m_dep})"
        )));
    }
    for (i, s) in model.exposure_sets().iter().enumerate() {
        let mut window: Vec<usize> = (0..=2 * m_dep).map(|k| (i + n + k - m_dep) % n).collect();
        window.sort_unstable();
        window.dedup();
        if *s != window {
            return Err(Error::InvalidArgument(format!(
                "exposure set of unit {i} is not the radius-{m_dep} circular window"
            )));
        }
    }
    let psi = estimator
        .psi(w, y)
        .ok_or_else(|| Error::Unsupported("the Newey–West identity needs an IPW estimator".into()))?;
    let width = l + 2 * m_dep;
    let nw = newey_west(&psi, width - 1)?;
    let scale = width as f64 / l as f64 * (n as f64 / (n - width) as f64).powi(2);
    let rhs = scale * nw;

    let rule = IndexRule::CycleBlock { len: l };
    let lambda = SpectralGap::given(l as f64 / n as f64)?;
    let problem = Problem::new(design.clone(), rule, model.clone(), estimator.clone(), Proxy::recomputed_average())?;
    let lhs = nj_exact(&problem, w, y, lambda)?.v_hat;
    Ok(IdentitySides { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::symmetric_eigenvalues;

    fn tv(bits: &[u8]) -> TreatmentVector {
        TreatmentVector::from_bits(bits).unwrap()
    }

    #[test]
    fn neyman_classical_example() {
        let w = tv(&[1, 1, 0, 0]);
        assert_eq!(neyman_classical(&[1.0, 3.0, 2.0, 2.0], &w).unwrap(), 1.0);
        assert_eq!(neyman_classical(&[5.0; 4], &w).unwrap(), 0.0);
        assert!(matches!(neyman_classical(&[1.0, 2.0, 3.0], &tv(&[1, 0, 0])), Err(Error::ArmTooSmall(_))));
    }

    #[test]
    fn bartlett_weights() {
        let b = CircularBartlett::new(4, 1).unwrap();
        assert_eq!(b.weight(0), 1.0);
        assert_eq!(b.weight(1), 0.5);
        assert_eq!(b.weight(2), 0.0);
        assert_eq!(b.entry(0, 3), 0.5);
        assert!(CircularBartlett::new(4, 2).is_err());
    }

    #[test]
    fn bartlett_is_positive_semidefinite() {
        for n in 1..=40 {
            for lag in 0..=(n - 1) / 2 {
                let b = CircularBartlett::new(n, lag).unwrap();
                let eig = symmetric_eigenvalues(&b.matrix(), n, 1e-12).unwrap();
                assert!(eig.iter().all(|&e| e >= -1e-10), "n={n} lag={lag}");
            }
        }
    }

    #[test]
    fn newey_west_special_cases() {
        let psi = [1.0, -2.0, 0.5, 3.0, 1.5];
        let mean = psi.iter().sum::<f64>() / 5.0;
        let pure: f64 = psi.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / 25.0;
        assert!((newey_west(&psi, 0).unwrap() - pure).abs() < 1e-15);
        assert_eq!(newey_west(&[2.0; 6], 2).unwrap(), 0.0);
        let shifted: Vec<f64> = psi.iter().map(|p| p + 10.0).collect();
        assert!((newey_west(&shifted, 2).unwrap() - newey_west(&psi, 2).unwrap()).abs() < 1e-12);
        // Against the dense quadratic form.
        let b = CircularBartlett::new(5, 2).unwrap().matrix();
        let x: Vec<f64> = psi.iter().map(|p| p - mean).collect();
        let mut q = 0.0;
        for j in 0..5 {
            for k in 0..5 {
                q += x[j] * b[j * 5 + k] * x[k];
            }
        }
        assert!((newey_west(&psi, 2).unwrap() - q / 25.0).abs() < 1e-14);
    }

    #[test]
    fn neyman_identity_small() {
        let w = tv(&[1, 0, 1, 1, 0, 0, 1, 0]);
        let y = [0.3, -1.2, 2.5, 0.9, 4.1, -0.7, 1.6, 0.0];
        let s = neyman_identity_check(&y, &w).unwrap();
        assert!(s.relative_error() < 1e-12, "{s:?}");
        let s = neyman_identity_check(&[1.0; 8], &w).unwrap();
        assert!(s.lhs.abs() < 1e-28 && s.rhs == 0.0);
    }
}
