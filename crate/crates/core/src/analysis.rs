//! Closed-form interference-leakage bounds and asymptotic constants.
//!
//! Everything here is a pure numeric evaluation: leakage upper bounds for the
//! CSI-feedback and precoder-feedback schemes, the beta-min mean, the
//! extreme-value scaling constant phi_N with its small-K approximation, and
//! the K-user leakage approximation built from them. The simulation suite
//! uses these as oracles against Monte Carlo estimates.

use statrs::function::gamma;

use crate::error::{Error, Result};

/// Common inputs of the bound evaluations.
#[derive(Clone, Copy, Debug)]
pub struct BoundInputs {
    /// Antenna count N_t.
    pub n_t: usize,
    /// User count K.
    pub k_users: usize,
    /// Precoder/CSI feedback bits toward the BS.
    pub b_f: f64,
    /// D2D exchange bits per link.
    pub b_c: f64,
    /// Per-user transmit power rho = P/K (unit noise).
    pub rho: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 {
            return Err(Error::InvalidDimension(format!(
                "antenna count must be >= 2, got {}",
                self.n_t
            )));
        }
        if self.k_users < 2 {
            return Err(Error::InvalidDimension(format!(
                "user count must be >= 2, got {}",
                self.k_users
            )));
        }
        if !(self.b_f >= 0.0) || !(self.b_c >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "bit budgets must be nonnegative, got b_f={}, b_c={}",
                self.b_f, self.b_c
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidInput(format!(
                "power must be positive and finite, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// K-user leakage upper bound for the precoder-feedback scheme:
/// rho 2^(-B_f/(K-1)) + rho (K-1) 2^(-B_c/(N_t-1)).
pub fn thm1_upper_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let k = inputs.k_users as f64;
    let n = inputs.n_t as f64;
    Ok(inputs.rho * (-inputs.b_f / (k - 1.0)).exp2()
        + inputs.rho * (k - 1.0) * (-inputs.b_c / (n - 1.0)).exp2())
}

/// Two-user precoder-feedback leakage bound:
/// rho N_t/(N_t-1) [2^(-B_f) + (1 - (N_t-1)/N_t 2^(-B_f)) 2^(-B_c/(N_t-1))].
pub fn thm2_two_user_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.k_users != 2 {
        return Err(Error::InvalidInput(format!(
            "two-user bound requires K = 2, got {}",
            inputs.k_users
        )));
    }
    let n = inputs.n_t as f64;
    let lead = inputs.rho * n / (n - 1.0);
    let t_f = (-inputs.b_f).exp2();
    let t_c = (-inputs.b_c / (n - 1.0)).exp2();
    Ok(lead * (t_f + (1.0 - (n - 1.0) / n * t_f) * t_c))
}

/// Leakage bracket of the CSI-feedback scheme with ZF at the BS. Per
/// interferer the mean lies in (rho 2^(-B_f/(N_t-1)),
/// rho N_t/(N_t-1) 2^(-B_f/(N_t-1))); with K users both ends scale by the
/// K-1 interferer count.
pub fn csi_feedback_bounds(inputs: &BoundInputs) -> Result<(f64, f64)> {
    inputs.validate()?;
    let n = inputs.n_t as f64;
    let k = inputs.k_users as f64;
    let base = inputs.rho * (k - 1.0) * (-inputs.b_f / (n - 1.0)).exp2();
    Ok((base, base * n / (n - 1.0)))
}

/// Mean of the minimum squared correlation between a quantized direction and
/// 2^B_f isotropic codewords: 1/(1 + (N_t-1) 2^B_f).
pub fn beta_min_mean(n_t: usize, b_f: f64) -> f64 {
    1.0 / (1.0 + (n_t as f64 - 1.0) * b_f.exp2())
}

/// Extreme-value scaling constant: the largest x whose regularized lower
/// incomplete gamma P(K-1, x) stays at or below 1/N. Bracketed bisection on
/// the gamma CDF to relative 1e-12.
pub fn phi_n_exact(k_users: usize, n_codewords: f64) -> Result<f64> {
    if k_users < 2 {
        return Err(Error::InvalidDimension(format!(
            "user count must be >= 2, got {k_users}"
        )));
    }
    if !(n_codewords > 1.0) || !n_codewords.is_finite() {
        return Err(Error::InvalidInput(format!(
            "codeword count must exceed 1, got {n_codewords}"
        )));
    }
    let a = (k_users - 1) as f64;
    let target = 1.0 / n_codewords;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while gamma::gamma_lr(a, hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical(
                "extreme-value constant bracket expansion failed".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma::gamma_lr(a, mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Small-K closed form for the extreme-value constant:
/// Gamma(K)^(-1/(K-1)) N^(-1/(K-1)).
pub fn phi_n_approx(k_users: usize, n_codewords: f64) -> f64 {
    let k = k_users as f64;
    let exp = -1.0 / (k - 1.0);
    gamma::gamma(k).powf(exp) * n_codewords.powf(exp)
}

/// Phi(K) = Gamma(K/(K-1)) Gamma(K)^(-1/(K-1)), the constant of the small-K
/// leakage approximation. Decreasing in K with Phi(2) = 1.
pub fn phi_cap(k_users: usize) -> f64 {
    let k = k_users as f64;
    gamma::gamma(k / (k - 1.0)) * gamma::gamma(k).powf(-1.0 / (k - 1.0))
}

/// K-user mean leakage approximation for the precoder-feedback scheme.
///
/// The exact form uses the Weibull mean Gamma(K/(K-1)) times phi_N at
/// N = 2^B_f; `use_approx` substitutes Phi(K) 2^(-B_f/(K-1)) for that
/// product in both places it appears.
pub fn thm4_k_user(inputs: &BoundInputs, use_approx: bool) -> Result<f64> {
    inputs.validate()?;
    let n = inputs.n_t as f64;
    let k = inputs.k_users as f64;
    let lead = if use_approx {
        phi_cap(inputs.k_users) * (-inputs.b_f / (k - 1.0)).exp2()
    } else {
        gamma::gamma(k / (k - 1.0)) * phi_n_exact(inputs.k_users, inputs.b_f.exp2())?
    };
    let t_c = (-inputs.b_c / (n - 1.0)).exp2();
    Ok(inputs.rho * lead + inputs.rho * (n * (k - 1.0) / (n - 1.0) - (n - 1.0) / n * lead) * t_c)
}
