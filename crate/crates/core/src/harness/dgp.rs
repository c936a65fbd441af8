//! Data-generating processes for the simulation studies.
//!
//! Each generator draws the fixed part of the world once (covariates, noise)
//! and then exposes the potential outcomes as a deterministic function of the
//! treatments. The experiment drivers evaluate those functions directly; the
//! `model()` methods wrap the same functions for the generic machinery.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{Design, TreatmentVector};
use crate::error::{Error, Result};
use crate::outcome::{Estimator, ExposureIndicator, PotentialOutcomeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDgpConfig {
    pub n: usize,
    pub pi: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for CycleDgpConfig {
    fn default() -> Self {
        Self {
            n: 100,
            pi: 0.5,
            noise_scale: 0.3,
            seed: 2024,
        }
    }
}

impl CycleDgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 5 {
            return Err(Error::Config(format!("cycle needs n >= 5, got {}", self.n)));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::Config(format!("pi = {} outside (0, 1)", self.pi)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!("noise_scale = {}", self.noise_scale)));
        }
        Ok(())
    }
}

/// One draw of covariates and noise for the cycle example.
///
/// Unit `i` is exposed when both cycle neighbours are treated, and
/// `Y_i = 0.5 + cos X_i + (1 + X_i) T_i + ε_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDraw {
    pub pi: f64,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
}

impl CycleDraw {
    pub fn sample<R: Rng + ?Sized>(cfg: &CycleDgpConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let x: Vec<f64> = (0..cfg.n).map(|_| rng.sample(StandardNormal)).collect();
        let eps: Vec<f64> = (0..cfg.n)
            .map(|_| cfg.noise_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self { pi: cfg.pi, x, eps })
    }

    pub fn from_parts(pi: f64, x: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        if x.len() != eps.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                got: eps.len(),
            });
        }
        CycleDgpConfig {
            n: x.len(),
            pi,
            noise_scale: 0.0,
            seed: 0,
        }
        .validate()?;
        Ok(Self { pi, x, eps })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn baseline(&self, i: usize) -> f64 {
        0.5 + self.x[i].cos()
    }

    pub fn effect(&self, i: usize) -> f64 {
        1.0 + self.x[i]
    }

    pub fn outcome(&self, i: usize, exposed: bool) -> f64 {
        self.baseline(i) + if exposed { self.effect(i) } else { 0.0 } + self.eps[i]
    }

    /// `P(T_i = 1) = π²`.
    pub fn exposure_prob(&self) -> f64 {
        self.pi * self.pi
    }

    pub fn neighbours(&self, i: usize) -> [usize; 2] {
        let n = self.n();
        [(i + n - 1) % n, (i + 1) % n]
    }

    pub fn exposure(&self, w: &[bool], i: usize) -> bool {
        let [a, b] = self.neighbours(i);
        w[a] && w[b]
    }

    pub fn exposure_sets(&self) -> Vec<Vec<usize>> {
        (0..self.n()).map(|i| self.neighbours(i).to_vec()).collect()
    }

    pub fn design(&self) -> Result<Design> {
        Design::bernoulli_uniform(self.n(), self.pi)
    }

    pub fn model(&self) -> Result<PotentialOutcomeModel> {
        let tables = (0..self.n())
            .map(|i| {
                let (y0, y1) = (self.outcome(i, false), self.outcome(i, true));
                vec![y0, y0, y0, y1]
            })
            .collect();
        PotentialOutcomeModel::from_tables(self.n(), self.exposure_sets(), tables)?.with_covariates(self.x.clone())
    }

    /// IPW for the effect of having both neighbours treated.
    pub fn estimator(&self) -> Result<Estimator> {
        let indicators = self
            .exposure_sets()
            .into_iter()
            .map(ExposureIndicator::all_treated)
            .collect::<Result<Vec<_>>>()?;
        Estimator::ipw_direct(indicators, &self.design()?)
    }

    /// `(1/n) Σ τ_i`, the target of the IPW estimator.
    pub fn estimand(&self) -> f64 {
        (0..self.n()).map(|i| self.effect(i)).sum::<f64>() / self.n() as f64
    }
}

pub fn gen_cycle_model<R: Rng + ?Sized>(cfg: &CycleDgpConfig, rng: &mut R) -> Result<PotentialOutcomeModel> {
    CycleDraw::sample(cfg, rng)?.model()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchbackDgpConfig {
    pub horizon: usize,
    pub ell: usize,
    pub burn_in: usize,
    pub alpha: f64,
    pub rho: f64,
    pub pi: f64,
    pub seed: u64,
}

impl Default for SwitchbackDgpConfig {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            ell: 50,
            burn_in: 25,
            alpha: 0.1,
            rho: 0.6,
            pi: 0.5,
            seed: 2024,
        }
    }
}

impl SwitchbackDgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 || !self.horizon.is_multiple_of(self.ell) || self.horizon / self.ell < 2 {
            return Err(Error::Config(format!(
                "horizon {} must be a multiple k*ell with k >= 2, ell = {}",
                self.horizon, self.ell
            )));
        }
        // A burn-in of the whole block is allowed: the focal parts are then empty.
        if self.burn_in == 0 || self.burn_in > self.ell {
            return Err(Error::Config(format!(
                "burn_in {} outside 1..={}",
                self.burn_in, self.ell
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::Config(format!("pi = {} outside (0, 1)", self.pi)));
        }
        if !self.rho.is_finite() {
            return Err(Error::Config("rho must be finite".into()));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.horizon / self.ell
    }
}

/// A switchback experiment with one fixed noise path.
///
/// Block seeds `Z_1..Z_k` set `W_t`. The hidden state starts at `H_0 = 0` and
/// moves toward 1 by a fraction `α` when treated and decays by `1 − α`
/// otherwise; `Y_t = τ_t W_t + ρ H_t + ε_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchbackDraw {
    pub cfg: SwitchbackDgpConfig,
    pub eps: Vec<f64>,
}

impl SwitchbackDraw {
    pub fn sample<R: Rng + ?Sized>(cfg: &SwitchbackDgpConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let eps = (0..cfg.horizon).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self { cfg: *cfg, eps })
    }

    pub fn from_parts(cfg: &SwitchbackDgpConfig, eps: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        if eps.len() != cfg.horizon {
            return Err(Error::LengthMismatch {
                expected: cfg.horizon,
                got: eps.len(),
            });
        }
        Ok(Self { cfg: *cfg, eps })
    }

    pub fn blocks(&self) -> usize {
        self.cfg.blocks()
    }

    /// `τ_t` for 1-based time `t`.
    pub fn effect(t: usize) -> f64 {
        0.15 + 0.25 * (2.0 * PI * t as f64 / 800.0).cos()
    }

    /// The full path `Y_1..Y_T` for block seeds `z`.
    pub fn path(&self, z: &[bool]) -> Vec<f64> {
        let SwitchbackDgpConfig { horizon, ell, alpha, rho, .. } = self.cfg;
        let mut h = 0.0;
        let mut y = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let w = z[t / ell];
            h = if w { h + alpha * (1.0 - h) } else { (1.0 - alpha) * h };
            y.push(if w { Self::effect(t + 1) } else { 0.0 } + rho * h + self.eps[t]);
        }
        y
    }

    /// `(B_1, F_1, …, B_k, F_k)` with both parts scaled by `2/ℓ`.
    pub fn outcome_units(&self, z: &[bool]) -> Vec<f64> {
        let SwitchbackDgpConfig { ell, burn_in, .. } = self.cfg;
        let y = self.path(z);
        let scale = 2.0 / ell as f64;
        let mut out = Vec::with_capacity(2 * self.blocks());
        for block in y.chunks(ell) {
            out.push(scale * block[..burn_in].iter().sum::<f64>());
            out.push(scale * block[burn_in..].iter().sum::<f64>());
        }
        out
    }

    /// Outcome unit `2i` is `B_i`, exposed to blocks `i − 1` and `i`
    /// (only block 0 for `i = 0`); `2i + 1` is `F_i`, exposed to block `i`.
    pub fn exposure_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = Vec::with_capacity(2 * self.blocks());
        for i in 0..self.blocks() {
            sets.push(if i == 0 { vec![0] } else { vec![i - 1, i] });
            sets.push(vec![i]);
        }
        sets
    }

    pub fn design(&self) -> Result<Design> {
        Design::bernoulli_uniform(self.blocks(), self.cfg.pi)
    }

    /// Exact outcomes depend on the whole prefix of block seeds, so the
    /// declared exposure sets are an approximation.
    pub fn model(&self) -> Result<PotentialOutcomeModel> {
        let me = Arc::new(self.clone());
        PotentialOutcomeModel::from_joint_fn(self.blocks(), self.exposure_sets(), move |w: &TreatmentVector| {
            let z: Vec<bool> = w.iter().collect();
            me.outcome_units(&z)
        })
    }

    pub fn estimator(&self) -> Result<Estimator> {
        let design = self.design()?;
        let sets = self.exposure_sets();
        let treated = sets
            .iter()
            .map(|s| ExposureIndicator::all_treated(s.clone()))
            .collect::<Result<Vec<_>>>()?;
        let control = sets
            .iter()
            .map(|s| ExposureIndicator::all_control(s.clone()))
            .collect::<Result<Vec<_>>>()?;
        let p = treated.iter().map(|e| e.exposure_prob(&design)).collect();
        let q = control.iter().map(|e| e.exposure_prob(&design)).collect();
        Estimator::hajek(treated, p, control, q)
    }

    /// `(1/T) Σ_t [Y_t(1) − Y_t(0)]`.
    pub fn estimand(&self) -> f64 {
        let k = self.blocks();
        let y1 = self.path(&vec![true; k]);
        let y0 = self.path(&vec![false; k]);
        y1.iter().zip(&y0).map(|(a, b)| a - b).sum::<f64>() / self.cfg.horizon as f64
    }
}

pub fn gen_switchback_model<R: Rng + ?Sized>(cfg: &SwitchbackDgpConfig, rng: &mut R) -> Result<PotentialOutcomeModel> {
    SwitchbackDraw::sample(cfg, rng)?.model()
}

/// Carryover weights `c_d` for lag `d ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decay {
    /// `c_d = ρ^d`.
    Geometric { rho: f64 },
    /// `c_d = (d + 1)^{−α}`.
    Polynomial { alpha: f64 },
}

impl Decay {
    pub fn weight(&self, d: usize) -> f64 {
        match *self {
            Decay::Geometric { rho } => rho.powi(d as i32),
            Decay::Polynomial { alpha } => ((d + 1) as f64).powf(-alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayDgpConfig {
    pub horizon: usize,
    pub ell: usize,
    pub buffer: usize,
    pub decay: Decay,
    pub pi: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for DecayDgpConfig {
    fn default() -> Self {
        Self {
            horizon: 2000,
            ell: 50,
            buffer: 12,
            decay: Decay::Geometric { rho: 0.9 },
            pi: 0.5,
            noise_scale: 1.0,
            seed: 2024,
        }
    }
}

impl DecayDgpConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.horizon;
        if self.ell == 0 || !t.is_multiple_of(self.ell) {
            return Err(Error::Config(format!("ell {} must divide horizon {t}", self.ell)));
        }
        if 10 * self.ell > t || 10 * self.buffer > t {
            return Err(Error::Config(format!(
                "ell = {} and buffer = {} must be at most horizon/10 = {}",
                self.ell,
                self.buffer,
                t / 10
            )));
        }
        if self.buffer > self.ell {
            return Err(Error::Config(format!("buffer {} exceeds ell {}", self.buffer, self.ell)));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::Config(format!("pi = {} outside (0, 1)", self.pi)));
        }
        match self.decay {
            Decay::Geometric { rho } if !(0.0..1.0).contains(&rho) => {
                Err(Error::Config(format!("geometric rate {rho} outside [0, 1)")))
            }
            Decay::Polynomial { alpha } if alpha.is_nan() || alpha <= 0.5 => {
                Err(Error::Config(format!("polynomial exponent {alpha} must exceed 1/2")))
            }
            _ => Ok(()),
        }
    }

    /// `ceil(3 ln(T/ℓ))`.
    pub fn log_buffer(horizon: usize, ell: usize) -> usize {
        (3.0 * (horizon as f64 / ell as f64).ln()).ceil() as usize
    }
}

/// A time series whose outcome at `t` carries the signed treatments of the
/// past: `Y_t = Σ_{d<t} c_d (2W_{t−d} − 1) + drift_t`. The drift is a fixed
/// seasonal curve plus one frozen noise draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayDraw {
    pub decay: Decay,
    pub pi: f64,
    pub drift: Vec<f64>,
}

impl DecayDraw {
    pub fn sample<R: Rng + ?Sized>(cfg: &DecayDgpConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let drift = (0..cfg.horizon)
            .map(|t| {
                let z: f64 = rng.sample(StandardNormal);
                0.5 * (2.0 * PI * t as f64 / 400.0).cos() + cfg.noise_scale * z
            })
            .collect();
        Ok(Self {
            decay: cfg.decay,
            pi: cfg.pi,
            drift,
        })
    }

    pub fn horizon(&self) -> usize {
        self.drift.len()
    }

    pub fn outcomes(&self, w: &[bool]) -> Vec<f64> {
        let t_max = self.horizon();
        let sign = |t: usize| if w[t] { 1.0 } else { -1.0 };
        match self.decay {
            Decay::Geometric { rho } => {
                let mut carry = 0.0;
                (0..t_max)
                    .map(|t| {
                        carry = rho * carry + sign(t);
                        carry + self.drift[t]
                    })
                    .collect()
            }
            Decay::Polynomial { .. } => {
                let c: Vec<f64> = (0..t_max).map(|d| self.decay.weight(d)).collect();
                (0..t_max)
                    .map(|t| (0..=t).map(|d| c[d] * sign(t - d)).sum::<f64>() + self.drift[t])
                    .collect()
            }
        }
    }

    /// `ψ_t = (W_t/π − (1 − W_t)/(1 − π)) Y_t`.
    pub fn psi(&self, w: &[bool]) -> Vec<f64> {
        let y = self.outcomes(w);
        y.iter()
            .zip(w)
            .map(|(y, &wt)| if wt { y / self.pi } else { -y / (1.0 - self.pi) })
            .collect()
    }

    pub fn design(&self) -> Result<Design> {
        Design::bernoulli_uniform(self.horizon(), self.pi)
    }

    /// Declares `N_t = {t}`; the true dependence reaches into the past.
    pub fn model(&self) -> Result<PotentialOutcomeModel> {
        let me = Arc::new(self.clone());
        let sets = (0..self.horizon()).map(|t| vec![t]).collect();
        PotentialOutcomeModel::from_joint_fn(self.horizon(), sets, move |w: &TreatmentVector| {
            let w: Vec<bool> = w.iter().collect();
            me.outcomes(&w)
        })
    }

    pub fn estimator(&self) -> Result<Estimator> {
        let indicators = (0..self.horizon()).map(ExposureIndicator::OwnTreatment).collect();
        Estimator::ipw_direct(indicators, &self.design()?)
    }

    /// `Var(τ̂)` in closed form for `π = 1/2`. With Rademacher signs `e_t`,
    /// `ψ_t − E ψ_t = 2 e_t drift_t + 2 Σ_{1≤d≤t} c_d e_t e_{t−d}`, and the
    /// products `e_t e_s` for distinct pairs are uncorrelated.
    pub fn variance_closed_form(&self) -> Option<f64> {
        if self.pi != 0.5 {
            return None;
        }
        let t_max = self.horizon();
        let mut tail = 0.0;
        let mut total = 0.0;
        for t in 0..t_max {
            if t > 0 {
                tail += self.decay.weight(t).powi(2);
            }
            total += 4.0 * (self.drift[t].powi(2) + tail);
        }
        Some(total / (t_max * t_max) as f64)
    }
}
