//! Closed-form transition law of the merged process and its consequences.
//!
//! Starting from `x0`, the position at time `t` is a two-component Gaussian
//! mixture: with probability `w(x0) = 1 / (1 + exp(-2 kappa x0))` it is drawn
//! from `N(x0 + v_d t, sigma^2 t)`, otherwise from `N(x0 - v_d t, sigma^2 t)`.
//! Equivalently
//!
//! ```text
//! p(x, t; x0) = cosh(kappa x) / cosh(kappa x0) * N(x; x0, sigma^2 t) * exp(-v_d^2 t / (2 sigma^2))
//! ```
//!
//! All densities are evaluated in log space with a stable `ln cosh`.

mod ck;
mod density;
mod family;
mod moments;
mod sampling;

pub use ck::{
    chapman_kolmogorov_residual, law_expectation, law_intervals, martingale_closure,
    martingale_variance, normalization,
};
pub use density::{
    fpe_residual, gaussian_component_pdf, mixture_weight, transition_cdf, transition_interval_mass,
    transition_log_pdf, transition_pdf, ComponentSign, TransitionQuery,
};
pub use family::{
    drift_family_eval, g_family_residual, ode_residual, DriftBranch, DriftFamily, GFamilyResidual,
};
pub use moments::{
    covariance_exact, cross_moment_exact, mean_exact, msd_exact, naive_superposition_moments,
    second_moment_exact, variance_exact,
};
pub use sampling::{
    exact_ensemble, exact_path_ensemble, exact_path_sample, exact_transition_sample,
};
