//! User channel statistics and per-trial channel realizations.
//!
//! Supports two statistical models: i.i.d. Rayleigh (identity covariance) and
//! the one-ring correlated model for a uniform linear array, where power
//! arrives over a truncated-Gaussian angular spectrum and the covariance
//! becomes low-rank. Channels are drawn as h = sqrt(l) R^{1/2} z with z
//! standard complex Gaussian, deterministically per RNG substream.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SeedStream;
use crate::{C64, CMatrix, CVector};

/// Relative tolerance on trace(R) = N_t.
const TRACE_RTOL: f64 = 1e-8;
/// Hermitian symmetry tolerance for covariance inputs.
const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in [-EIG_CLAMP_TOL, 0) clamp to zero; below is an error.
const EIG_CLAMP_TOL: f64 = 1e-10;
/// Quadrature self-consistency threshold (order 4N vs 2N, relative to r[0]).
const QUADRATURE_RTOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// statistics
// ---------------------------------------------------------------------------

/// Per-user statistical ground truth: path loss l, covariance R with
/// trace(R) = N_t, and its eigendecomposition (descending).
#[derive(Clone, Debug)]
pub struct UserStatistics {
    /// Linear-scale path loss l >= 0.
    pub path_loss: f64,
    /// N_t x N_t Hermitian PSD covariance, trace N_t.
    pub covariance: CMatrix,
    /// Eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Unitary matrix whose columns pair with `eigenvalues`.
    pub eigenvectors: CMatrix,
    /// Cached R^{1/2} = U diag(sqrt(lambda)) U^H for channel draws.
    sqrt_covariance: CMatrix,
}

impl UserStatistics {
    /// Validates and decomposes a covariance matrix.
    ///
    /// Requires Hermitian symmetry within 1e-10, eigenvalues >= -1e-10
    /// (clamped to zero), and trace N_t within relative 1e-8.
    pub fn from_covariance(path_loss: f64, covariance: CMatrix) -> Result<Self> {
        if path_loss < 0.0 || !path_loss.is_finite() {
            return Err(Error::InvalidInput(format!(
                "path loss must be finite and nonnegative, got {path_loss}"
            )));
        }
        let n = covariance.nrows();
        if n < 2 || covariance.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "covariance must be square with n >= 2, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let defect = linalg::hermitian_defect(&covariance);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidInput(format!(
                "covariance not Hermitian: asymmetry {defect:.3e} exceeds {HERMITIAN_TOL:.1e}"
            )));
        }
        let trace: f64 = (0..n).map(|i| covariance[(i, i)].re).sum();
        if (trace - n as f64).abs() > TRACE_RTOL * n as f64 {
            return Err(Error::InvalidInput(format!(
                "covariance trace {trace} must equal dimension {n} (relative tol {TRACE_RTOL:.1e})"
            )));
        }
        let (mut eigenvalues, eigenvectors) = linalg::hermitian_eigen_desc(&covariance);
        for v in &mut eigenvalues {
            if *v < -EIG_CLAMP_TOL {
                return Err(Error::InvalidInput(format!(
                    "covariance not PSD: eigenvalue {v:.3e} below -{EIG_CLAMP_TOL:.1e}"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sqrt_covariance = sqrt_from_eigen(&eigenvalues, &eigenvectors);
        Ok(UserStatistics {
            path_loss,
            covariance,
            eigenvalues,
            eigenvectors,
            sqrt_covariance,
        })
    }

    /// Same statistics with a different path loss (blockage sweeps).
    pub fn with_path_loss(&self, path_loss: f64) -> Result<Self> {
        if path_loss < 0.0 || !path_loss.is_finite() {
            return Err(Error::InvalidInput(format!(
                "path loss must be finite and nonnegative, got {path_loss}"
            )));
        }
        let mut out = self.clone();
        out.path_loss = path_loss;
        Ok(out)
    }

    /// Antenna count N_t.
    pub fn n_t(&self) -> usize {
        self.covariance.nrows()
    }

    /// Cached principal square root of the covariance.
    pub fn sqrt_covariance(&self) -> &CMatrix {
        &self.sqrt_covariance
    }
}

/// R^{1/2} via the eigendecomposition; negative clamp already applied.
fn sqrt_from_eigen(eigenvalues: &[f64], eigenvectors: &CMatrix) -> CMatrix {
    let n = eigenvectors.nrows();
    let mut scaled = eigenvectors.clone();
    for (j, &lam) in eigenvalues.iter().enumerate() {
        let s = C64::new(lam.max(0.0).sqrt(), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled * eigenvectors.adjoint()
}

/// i.i.d. Rayleigh statistics: unit path loss, identity covariance.
pub fn gen_iid_statistics(n_t: usize) -> Result<UserStatistics> {
    if n_t < 2 {
        return Err(Error::InvalidDimension(format!(
            "antenna count must be >= 2, got {n_t}"
        )));
    }
    UserStatistics::from_covariance(1.0, CMatrix::identity(n_t, n_t))
}

// ---------------------------------------------------------------------------
// one-ring model
// ---------------------------------------------------------------------------

/// Geometry of a one-ring scatterer distribution seen by a uniform linear
/// array. Angles in radians; spacing in wavelengths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneRingGeometry {
    /// Mean azimuth of the power angular spectrum.
    pub mean_azimuth: f64,
    /// Standard deviation of the truncated Gaussian spectrum (> 0).
    pub angular_spread: f64,
    /// Antenna count N_t (>= 2).
    pub antenna_count: usize,
    /// Antenna spacing in wavelengths (> 0).
    pub antenna_spacing: f64,
    /// Half-width of the truncation window (>= angular_spread).
    pub truncation_halfwidth: f64,
}

impl OneRingGeometry {
    /// Geometry with the conventional truncation at two standard deviations.
    pub fn with_default_truncation(
        mean_azimuth: f64,
        angular_spread: f64,
        antenna_count: usize,
        antenna_spacing: f64,
    ) -> Self {
        OneRingGeometry {
            mean_azimuth,
            angular_spread,
            antenna_count,
            antenna_spacing,
            truncation_halfwidth: 2.0 * angular_spread,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.antenna_count < 2 {
            return Err(Error::InvalidDimension(format!(
                "antenna count must be >= 2, got {}",
                self.antenna_count
            )));
        }
        if !(self.angular_spread > 0.0) {
            return Err(Error::InvalidInput(format!(
                "angular spread must be positive, got {}",
                self.angular_spread
            )));
        }
        if !(self.antenna_spacing > 0.0) {
            return Err(Error::InvalidInput(format!(
                "antenna spacing must be positive, got {}",
                self.antenna_spacing
            )));
        }
        if self.truncation_halfwidth < self.angular_spread {
            return Err(Error::InvalidInput(format!(
                "truncation half-width {} must be >= angular spread {}",
                self.truncation_halfwidth, self.angular_spread
            )));
        }
        Ok(())
    }
}

/// One-ring spatial covariance with unit path loss.
///
/// R[m,n] = c * integral of p(theta) exp(i 2 pi d (m-n) sin theta) over the
/// truncation window, with p the truncated Gaussian density and c fixing
/// trace(R) = N_t. The integral is a fixed-order Gauss-Legendre rule (order
/// 4 N_t), cross-checked against order 2 N_t; disagreement raises an
/// integration error with the residual.
pub fn one_ring_covariance(geom: &OneRingGeometry) -> Result<UserStatistics> {
    geom.validate()?;
    let n = geom.antenna_count;
    let coarse = one_ring_first_row(geom, 2 * n);
    let fine = one_ring_first_row(geom, 4 * n);
    let scale = fine[0].norm().max(f64::MIN_POSITIVE);
    let residual = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale;
    if residual > QUADRATURE_RTOL {
        return Err(Error::Integration {
            residual,
            limit: QUADRATURE_RTOL,
        });
    }
    // Toeplitz assembly; diagonal entries equal fine[0], so normalizing the
    // first row by fine[0] pins the trace at N_t exactly.
    let c = fine[0].re;
    let mut r = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = i as isize - j as isize;
            let v = if d >= 0 {
                fine[d as usize] / c
            } else {
                (fine[(-d) as usize] / c).conj()
            };
            r[(i, j)] = v;
        }
    }
    UserStatistics::from_covariance(1.0, linalg::hermitize(&r))
}

/// First Toeplitz row r[d] = integral p(theta) exp(i 2 pi spacing d sin
/// theta) d theta at the given quadrature order (not yet trace-normalized).
fn one_ring_first_row(geom: &OneRingGeometry, order: usize) -> Vec<C64> {
    let (nodes, weights) = linalg::gauss_legendre(order);
    let center = geom.mean_azimuth;
    let half = geom.truncation_halfwidth;
    let sigma = geom.angular_spread;
    let two_pi_d = 2.0 * std::f64::consts::PI * geom.antenna_spacing;
    let mut row = vec![C64::new(0.0, 0.0); geom.antenna_count];
    for (x, w) in nodes.iter().zip(&weights) {
        let theta = center + half * x;
        let z = (theta - center) / sigma;
        let density = (-0.5 * z * z).exp();
        let weight = w * half * density;
        let s = theta.sin();
        for (d, slot) in row.iter_mut().enumerate() {
            let phase = two_pi_d * d as f64 * s;
            *slot += C64::new(phase.cos(), phase.sin()) * weight;
        }
    }
    row
}

/// Unit-norm steering vector of a uniform linear array toward azimuth theta.
pub fn steering_vector(n_t: usize, spacing: f64, theta: f64) -> CVector {
    let k = 2.0 * std::f64::consts::PI * spacing * theta.sin();
    let scale = (n_t as f64).sqrt().recip();
    CVector::from_fn(n_t, |m, _| {
        let phase = k * m as f64;
        C64::new(phase.cos(), phase.sin()) * scale
    })
}

// ---------------------------------------------------------------------------
// realizations
// ---------------------------------------------------------------------------

/// One Monte Carlo draw of all K downlink channel vectors.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// N_t x K matrix; column k is h_k.
    pub channels: CMatrix,
    /// RNG substream tag that produced this draw.
    pub seed_tag: u64,
}

impl ChannelRealization {
    /// Channel vector of user k.
    pub fn user(&self, k: usize) -> CVector {
        self.channels.column(k).clone_owned()
    }

    /// Number of users K.
    pub fn k_users(&self) -> usize {
        self.channels.ncols()
    }
}

/// Draws h_k = sqrt(l_k) R_k^{1/2} z_k with independent standard complex
/// Gaussian z_k per user. Deterministic for a given stream.
pub fn gen_channel(stats: &[UserStatistics], stream: &mut SeedStream) -> Result<ChannelRealization> {
    if stats.is_empty() {
        return Err(Error::InvalidInput("at least one user required".into()));
    }
    let n = stats[0].n_t();
    if stats.iter().any(|s| s.n_t() != n) {
        return Err(Error::InvalidDimension(format!(
            "all users must share N_t = {n}"
        )));
    }
    let mut channels = CMatrix::zeros(n, stats.len());
    for (k, s) in stats.iter().enumerate() {
        let z = linalg::standard_complex_gaussian(n, stream);
        let h = s.sqrt_covariance() * z * C64::new(s.path_loss.sqrt(), 0.0);
        channels.set_column(k, &h);
    }
    Ok(ChannelRealization {
        channels,
        seed_tag: stream.tag(),
    })
}

// ---------------------------------------------------------------------------
// dominant subspace
// ---------------------------------------------------------------------------

/// Smallest eigenbasis capturing `energy_fraction` of the covariance trace.
///
/// Returns the first M orthonormal eigenvectors and M itself, where M is the
/// smallest m with (sum of the top m eigenvalues) / trace >= energy_fraction.
pub fn dominant_subspace(
    stats: &UserStatistics,
    energy_fraction: f64,
) -> Result<(CMatrix, usize)> {
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "energy fraction must lie in (0, 1], got {energy_fraction}"
        )));
    }
    let total: f64 = stats.eigenvalues.iter().sum();
    let target = energy_fraction * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    let mut m = stats.eigenvalues.len();
    for (i, &lam) in stats.eigenvalues.iter().enumerate() {
        cum += lam;
        if cum >= target {
            m = i + 1;
            break;
        }
    }
    let basis = stats.eigenvectors.columns(0, m).clone_owned();
    Ok((basis, m))
}
