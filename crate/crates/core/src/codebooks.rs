//! Quantization codebooks and the channel-direction error decomposition.
//!
//! Provides isotropic RVQ and covariance-shaped codebooks, max-correlation
//! direction quantization, and a statistical emulation of RVQ for bit budgets
//! far beyond enumerable codebook sizes. Every quantization result carries the
//! exact decomposition g = sqrt(1-Z) ghat + sqrt(Z) s with s a unit vector
//! orthogonal to ghat, which downstream leakage analysis builds on.

use rand::Rng;

use crate::channel::UserStatistics;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SeedStream;
use crate::{C64, CMatrix, CVector};

/// Explicit enumeration cap; budgets above this go through [`emulate_rvq_error`].
pub const MAX_CODEBOOK_BITS: u32 = 24;

/// Z below this is treated as an exact codebook hit; the residual direction is
/// then synthesized deterministically instead of normalizing numerical noise.
const DEGENERATE_Z: f64 = 1e-24;

/// How a codebook's entries were drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodebookKind {
    /// i.i.d. isotropic unit vectors.
    IsotropicRvq,
    /// Unit vectors shaped by a covariance square root.
    CovarianceShaped,
}

/// A finite set of unit-norm complex vectors, stored column-wise.
#[derive(Clone, Debug)]
pub struct Codebook {
    /// N_t x 2^bits matrix; column i is codeword u_i.
    vectors: CMatrix,
    /// log2 of the codebook size.
    pub bits: u32,
    pub kind: CodebookKind,
    /// RNG substream tag that generated the entries.
    pub generation_seed: u64,
}

impl Codebook {
    pub fn size(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn n_t(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn codeword(&self, index: usize) -> CVector {
        self.vectors.column(index).clone_owned()
    }

    /// All codewords as columns.
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    /// Inner products u_iᴴ v for every codeword, as one gemv.
    pub fn correlations(&self, v: &CVector) -> CVector {
        self.vectors.ad_mul(v)
    }

    /// Codebook from explicit unit-norm columns (structured or handcrafted
    /// books). Any nonzero count is accepted; `bits` reports the ceiling
    /// log2 of the size.
    pub fn from_vectors(vectors: CMatrix, kind: CodebookKind) -> Result<Self> {
        if vectors.nrows() < 2 || vectors.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "codebook needs dimension >= 2 and at least one codeword, got {}x{}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        for i in 0..vectors.ncols() {
            let norm = vectors.column(i).norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "codeword {i} must be unit-norm, got {norm}"
                )));
            }
        }
        let bits = (vectors.ncols() as f64).log2().ceil().max(1.0) as u32;
        Ok(Codebook {
            vectors,
            bits,
            kind,
            generation_seed: 0,
        })
    }
}

fn check_bits(n_t: usize, bits: u32) -> Result<()> {
    if n_t < 2 {
        return Err(Error::InvalidDimension(format!(
            "codebook dimension must be >= 2, got {n_t}"
        )));
    }
    if bits == 0 {
        return Err(Error::InvalidInput(
            "codebook needs at least 1 bit (2 codewords)".into(),
        ));
    }
    if bits > MAX_CODEBOOK_BITS {
        return Err(Error::CodebookCapacity { bits });
    }
    Ok(())
}

/// Isotropic unit vector: normalized standard complex Gaussian.
fn isotropic_unit<R: Rng + ?Sized>(n_t: usize, rng: &mut R) -> CVector {
    loop {
        let z = linalg::standard_complex_gaussian(n_t, rng);
        let norm = z.norm();
        if norm > 1e-12 {
            return z / C64::new(norm, 0.0);
        }
    }
}

/// 2^bits i.i.d. isotropic unit vectors; deterministic per stream.
pub fn build_rvq(n_t: usize, bits: u32, stream: &mut SeedStream) -> Result<Codebook> {
    check_bits(n_t, bits)?;
    let size = 1usize << bits;
    let tag = stream.tag();
    let mut vectors = CMatrix::zeros(n_t, size);
    for i in 0..size {
        vectors.set_column(i, &isotropic_unit(n_t, stream));
    }
    Ok(Codebook {
        vectors,
        bits,
        kind: CodebookKind::IsotropicRvq,
        generation_seed: tag,
    })
}

/// Codewords u_i = R^{1/2} xi_i / ||R^{1/2} xi_i|| with xi standard complex
/// Gaussian, concentrating the codebook in the covariance's dominant modes.
pub fn build_shaped(stats: &UserStatistics, bits: u32, stream: &mut SeedStream) -> Result<Codebook> {
    let n_t = stats.n_t();
    check_bits(n_t, bits)?;
    if stats.eigenvalues[0] <= 0.0 {
        return Err(Error::DegenerateStatistics(
            "covariance has rank 0; cannot shape a codebook".into(),
        ));
    }
    let size = 1usize << bits;
    let tag = stream.tag();
    let sqrt_cov = stats.sqrt_covariance();
    let mut vectors = CMatrix::zeros(n_t, size);
    for i in 0..size {
        let u = loop {
            let xi = linalg::standard_complex_gaussian(n_t, stream);
            let shaped = sqrt_cov * xi;
            let norm = shaped.norm();
            if norm > 1e-12 {
                break shaped / C64::new(norm, 0.0);
            }
        };
        vectors.set_column(i, &u);
    }
    Ok(Codebook {
        vectors,
        bits,
        kind: CodebookKind::CovarianceShaped,
        generation_seed: tag,
    })
}

/// Result of quantizing a channel direction.
///
/// `direction` is the selected codeword rotated by a unit phasor so that
/// directionᴴ g is real and nonnegative; with that convention the exact
/// identity g = sqrt(1-Z) direction + sqrt(Z) error_direction holds with real
/// coefficients.
#[derive(Clone, Debug)]
pub struct QuantizedDirection {
    /// Codeword index (0 for emulated quantization, which has no codebook).
    pub index: usize,
    /// Phase-aligned unit codeword ghat.
    pub direction: CVector,
    /// Norm of the input vector.
    pub magnitude: f64,
    /// Quantization error Z = 1 - |ghatᴴ g|^2, in [0, 1].
    pub error_z: f64,
    /// Unit residual direction s, orthogonal to `direction`.
    pub error_direction: CVector,
}

impl QuantizedDirection {
    /// Rebuilds the source direction from the decomposition.
    pub fn reconstruct_direction(&self) -> CVector {
        let a = C64::new((1.0 - self.error_z).max(0.0).sqrt(), 0.0);
        let b = C64::new(self.error_z.max(0.0).sqrt(), 0.0);
        &self.direction * a + &self.error_direction * b
    }
}

/// Builds the decomposition from an aligned codeword and the unit source
/// direction. `aligned` must satisfy alignedᴴ g real >= 0.
fn decompose(index: usize, aligned: CVector, g: &CVector, magnitude: f64) -> QuantizedDirection {
    let cos = aligned.dotc(g).re.clamp(-1.0, 1.0);
    let error_z = (1.0 - cos * cos).clamp(0.0, 1.0);
    let residual = g - &aligned * C64::new(cos, 0.0);
    let rnorm = residual.norm();
    let error_direction = if error_z <= DEGENERATE_Z || rnorm == 0.0 {
        linalg::unit_complement_vector(&aligned)
    } else {
        residual / C64::new(rnorm, 0.0)
    };
    QuantizedDirection {
        index,
        direction: aligned,
        magnitude,
        error_z,
        error_direction,
    }
}

/// Max-correlation quantization: picks argmax_i |u_iᴴ h| (ties to the lowest
/// index) and returns the full error decomposition against g = h/||h||.
pub fn quantize_direction(h: &CVector, cb: &Codebook) -> Result<QuantizedDirection> {
    if h.len() != cb.n_t() {
        return Err(Error::InvalidDimension(format!(
            "vector length {} does not match codebook dimension {}",
            h.len(),
            cb.n_t()
        )));
    }
    let magnitude = h.norm();
    if magnitude <= 0.0 || !magnitude.is_finite() {
        return Err(Error::InvalidInput(
            "cannot quantize a zero or non-finite vector".into(),
        ));
    }
    let g = h / C64::new(magnitude, 0.0);
    let corr = cb.correlations(&g);
    let scores: Vec<f64> = corr.iter().map(|c| c.norm_sqr()).collect();
    let index = linalg::argmax_lowest(&scores);
    let c = corr[index];
    // Rotate the codeword so its inner product with g becomes real >= 0.
    let phase = if c.norm() > 0.0 {
        c / C64::new(c.norm(), 0.0)
    } else {
        C64::new(1.0, 0.0)
    };
    let aligned = cb.codeword(index) * phase;
    Ok(decompose(index, aligned, &g, magnitude))
}

/// Inverse-CDF sample of the RVQ error law P(Z <= z) = 1 - (1 - z^(n-1))^N,
/// the minimum of N = 2^bits independent Beta(1, n-1) variables. Evaluated in
/// log space so enormous bit budgets degrade gracefully to z = 0.
pub fn rvq_error_quantile(n_t: usize, bits: u32, u: f64) -> f64 {
    let n = (n_t - 1) as f64;
    let codewords = (bits as f64).exp2();
    let inner = -((-u).ln_1p() / codewords).exp_m1();
    inner.max(0.0).powf(1.0 / n)
}

/// Statistical stand-in for explicit RVQ at unenumerable bit budgets.
///
/// Draws Z from the exact minimum-of-Beta law, places the residual direction
/// isotropically in the orthogonal complement of g, and synthesizes the
/// codeword ghat consistent with the decomposition identity.
pub fn emulate_rvq_error(
    n_t: usize,
    bits: u32,
    h: &CVector,
    stream: &mut SeedStream,
) -> Result<QuantizedDirection> {
    if n_t < 2 {
        return Err(Error::InvalidDimension(format!(
            "emulation needs dimension >= 2, got {n_t}"
        )));
    }
    if h.len() != n_t {
        return Err(Error::InvalidDimension(format!(
            "vector length {} does not match n_t {n_t}",
            h.len()
        )));
    }
    if bits == 0 {
        return Err(Error::InvalidInput(
            "emulated quantization needs at least 1 bit".into(),
        ));
    }
    let magnitude = h.norm();
    if magnitude <= 0.0 || !magnitude.is_finite() {
        return Err(Error::InvalidInput(
            "cannot quantize a zero or non-finite vector".into(),
        ));
    }
    let g = h / C64::new(magnitude, 0.0);
    let u: f64 = stream.gen();
    let z = rvq_error_quantile(n_t, bits, u);
    // Isotropic unit t in the orthogonal complement of g.
    let t = loop {
        let raw = isotropic_unit(n_t, stream);
        let proj = &raw - &g * g.dotc(&raw);
        let norm = proj.norm();
        if norm > 1e-6 {
            break proj / C64::new(norm, 0.0);
        }
    };
    // ghat = sqrt(1-z) g - sqrt(z) t gives |ghatᴴg|^2 = 1-z, and
    // s = sqrt(z) g + sqrt(1-z) t completes the exact identity.
    let a = C64::new((1.0 - z).max(0.0).sqrt(), 0.0);
    let b = C64::new(z.max(0.0).sqrt(), 0.0);
    let direction = &g * a - &t * b;
    let error_direction = if z <= DEGENERATE_Z {
        linalg::unit_complement_vector(&direction)
    } else {
        &g * b + &t * a
    };
    Ok(QuantizedDirection {
        index: 0,
        direction,
        magnitude,
        error_z: z,
        error_direction,
    })
}
