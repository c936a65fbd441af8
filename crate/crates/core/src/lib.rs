//! Conservative design-based variance estimation under interference.
//!
//! The estimator rerandomizes a random subset `S` of treatments from its
//! conditional law, measures how far a computable proxy that cannot see
//! `W_S` lands from the point estimate, and divides the mean squared gap by
//! the spectral gap `λ` of that rerandomization. By a Poincaré inequality
//! the result is conservative in expectation for any valid proxy.
//!
//! ```
//! use nj_core::{
//!     nj_exact, spectral_gap_closed_form, Design, Estimator, ExposureIndicator, IndexRule,
//!     PotentialOutcomeModel, Problem, Proxy, TreatmentVector,
//! };
//!
//! let n = 6;
//! let design = Design::bernoulli_uniform(n, 0.5).unwrap();
//! let sets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
//! let tables = (0..n).map(|i| vec![i as f64, i as f64 + 1.0]).collect();
//! let model = PotentialOutcomeModel::from_tables(n, sets, tables).unwrap();
//! let est = Estimator::ipw_direct((0..n).map(ExposureIndicator::OwnTreatment).collect(), &design).unwrap();
//! let rule = IndexRule::CycleBlock { len: 2 };
//! let lambda = spectral_gap_closed_form(&design, &rule).unwrap();
//! let problem = Problem::new(design, rule, model, est, Proxy::recomputed_average()).unwrap();
//!
//! let w = TreatmentVector::from_bits(&[1, 0, 0, 1, 1, 0]).unwrap();
//! let y = problem.model.observed_outcomes(&w).unwrap();
//! let report = nj_exact(&problem, &w, &y, lambda).unwrap();
//! assert!(report.v_hat > 0.0);
//! ```

pub mod baselines;
pub mod design;
pub mod error;
pub mod fourier;
pub mod harness;
pub mod indexrules;
pub mod jackknife;
mod jacobi;
pub mod outcome;
pub mod proxy;
pub mod spectral;
pub mod util;

pub use baselines::{
    neyman_classical, neyman_closed_form, neyman_identity_check, newey_west, nw_identity_check, CircularBartlett,
    IdentitySides,
};
pub use design::{Design, DesignKind, TreatmentVector, DEFAULT_SUPPORT_CAP};
pub use error::{Error, Result};
pub use fourier::{
    cycle_block_hit_prob, hit_probabilities, inflation_ratio, monotonicity_check, ub_oracle_fourier,
    FourierExpansion,
};
pub use indexrules::{IndexRule, IndexSet};
pub use jackknife::{
    expected_vhat_exact, nj_exact, nj_monte_carlo, robust_slack_exact, true_variance_exact, ub_oracle_exact,
    ExactAudit, Mode, Problem, RobustSlack, VarianceReport,
};
pub use jacobi::symmetric_eigenvalues;
pub use outcome::{Estimator, ExposureIndicator, OutcomeFn, PotentialOutcomeModel};
pub use proxy::{
    covariate_proxy, deletion_set, fit_arm_means, masking_check, neyman_pair_proxy, recomputed_average_proxy,
    ArmFit, ArmPredictor, LooDenominator, Padding, Proxy, ProxyInput, ProxyValue,
};
pub use spectral::{
    bernoulli_spectrum_formula, crd_eigenvalue_formula, crd_eigenvalue_multiplicity, spectral_gap,
    spectral_gap_closed_form, spectral_gap_eigen, GapMethod, SpectralGap, TransitionKernel,
};
