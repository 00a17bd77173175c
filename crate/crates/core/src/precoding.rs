//! Precoder constructions: zero-forcing and regularized MMSE at the base
//! station, the continuous SLNR maximizer, and codebook-constrained
//! min-leakage / max-SLNR selection at the users.
//!
//! Matrix inverses go through K x K Gram systems (Woodbury form), so cost
//! scales with the user count rather than the antenna count. All returned
//! precoding vectors are unit-norm.

use nalgebra::Cholesky;

use crate::codebooks::Codebook;
use crate::error::{Error, Result};
use crate::linalg;
use crate::{C64, CMatrix, CVector};

/// Condition-number guard for the ZF Gram inverse.
const ZF_CONDITION_LIMIT: f64 = 1e10;

/// How a precoding matrix was constructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecoderKind {
    ZeroForcing,
    Mmse,
    SlnrContinuous,
    CodebookMinLeakage,
    CodebookMaxSlnr,
}

/// A full precoding matrix, one unit-norm column per user.
#[derive(Clone, Debug)]
pub struct Precoder {
    /// N_t x K matrix W; column k serves user k.
    pub vectors: CMatrix,
    pub kind: PrecoderKind,
}

impl Precoder {
    pub fn user(&self, k: usize) -> CVector {
        self.vectors.column(k).clone_owned()
    }

    pub fn k_users(&self) -> usize {
        self.vectors.ncols()
    }
}

fn normalized(v: CVector) -> Result<CVector> {
    let norm = v.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::Numerical(
            "precoding vector collapsed to zero norm".into(),
        ));
    }
    Ok(v / C64::new(norm, 0.0))
}

/// Zero-forcing: W = Ghat (Ghatᴴ Ghat)^{-1} with unit-normalized columns,
/// so column k is orthogonal to every other quantized direction.
pub fn zf_precoder(quantized_directions: &CMatrix) -> Result<Precoder> {
    let k = quantized_directions.ncols();
    if k == 0 || quantized_directions.nrows() < k {
        return Err(Error::InvalidDimension(format!(
            "need N_t >= K >= 1 directions, got {}x{}",
            quantized_directions.nrows(),
            k
        )));
    }
    let gram = linalg::hermitize(&quantized_directions.ad_mul(quantized_directions));
    let (eigs, _) = linalg::hermitian_eigen_desc(&gram);
    let lam_max = eigs[0].max(0.0);
    let lam_min = eigs[k - 1];
    // Condition number of Ghat is the square root of the Gram's.
    let condition = if lam_min > 0.0 {
        (lam_max / lam_min).sqrt()
    } else {
        f64::INFINITY
    };
    if condition > ZF_CONDITION_LIMIT {
        return Err(Error::Singular {
            condition,
            limit: ZF_CONDITION_LIMIT,
        });
    }
    let chol = Cholesky::new(gram).ok_or(Error::Singular {
        condition,
        limit: ZF_CONDITION_LIMIT,
    })?;
    let inv = chol.solve(&CMatrix::identity(k, k));
    let raw = quantized_directions * inv;
    let mut vectors = CMatrix::zeros(quantized_directions.nrows(), k);
    for j in 0..k {
        vectors.set_column(j, &normalized(raw.column(j).clone_owned())?);
    }
    Ok(Precoder {
        vectors,
        kind: PrecoderKind::ZeroForcing,
    })
}

/// Solves (B Bᴴ + alpha I)^{-1} v through the K x K system
/// v/alpha - B (alpha I + Bᴴ B)^{-1} Bᴴ v / alpha, then drops the 1/alpha
/// scale (callers normalize). Empty B short-circuits to v.
fn regularized_inverse_apply(columns: &CMatrix, alpha: f64, v: &CVector) -> Result<CVector> {
    if columns.ncols() == 0 {
        return Ok(v.clone());
    }
    let k = columns.ncols();
    let mut gram = linalg::hermitize(&columns.ad_mul(columns));
    for i in 0..k {
        gram[(i, i)] += C64::new(alpha, 0.0);
    }
    let rhs = columns.ad_mul(v);
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::Numerical("regularized Gram system unexpectedly not positive definite".into())
    })?;
    let coeffs = chol.solve(&rhs);
    Ok(v - columns * coeffs)
}

/// Regularized MMSE direction for one user:
/// w proportional to (Hhat Hhatᴴ + alpha I)^{-1} hhat_k.
pub fn mmse_precoder(global_csi: &CMatrix, user: usize, alpha: f64) -> Result<CVector> {
    if user >= global_csi.ncols() {
        return Err(Error::InvalidDimension(format!(
            "user index {user} out of range for {} columns",
            global_csi.ncols()
        )));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "regularization must be positive and finite, got {alpha}"
        )));
    }
    let h_k = global_csi.column(user).clone_owned();
    normalized(regularized_inverse_apply(global_csi, alpha, &h_k)?)
}

/// Continuous SLNR maximizer: the unit vector maximizing
/// |h_kᴴ w|^2 / (alpha + sum_j |hhat_jᴴ w|^2), computed in closed form as the
/// normalized regularized inverse applied to h_k over the interferer matrix.
pub fn slnr_continuous(h_k: &CVector, interferers: &[CVector], alpha: f64) -> Result<CVector> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "regularization must be positive and finite, got {alpha}"
        )));
    }
    let n_t = h_k.len();
    let mut b = CMatrix::zeros(n_t, interferers.len());
    for (j, hj) in interferers.iter().enumerate() {
        if hj.len() != n_t {
            return Err(Error::InvalidDimension(format!(
                "interferer {j} has length {} but expected {n_t}",
                hj.len()
            )));
        }
        b.set_column(j, hj);
    }
    normalized(regularized_inverse_apply(&b, alpha, h_k)?)
}

/// Total power a candidate vector leaks onto the given channels.
pub fn leakage_of(w: &CVector, interferer_csi: &[CVector]) -> f64 {
    interferer_csi.iter().map(|h| h.dotc(w).norm_sqr()).sum()
}

/// Per-codeword leakage scores in one pass over the codebook.
fn leakage_scores(cb: &Codebook, interferer_csi: &[CVector]) -> Result<Vec<f64>> {
    let mut scores = vec![0.0; cb.size()];
    for h in interferer_csi {
        if h.len() != cb.n_t() {
            return Err(Error::InvalidDimension(format!(
                "interference channel length {} does not match codebook dimension {}",
                h.len(),
                cb.n_t()
            )));
        }
        let corr = cb.correlations(h);
        for (s, c) in scores.iter_mut().zip(corr.iter()) {
            *s += c.norm_sqr();
        }
    }
    Ok(scores)
}

/// Picks the codeword leaking least total power onto the exchanged
/// interference channels; ties go to the lowest index.
pub fn select_min_leakage(cb: &Codebook, interferer_csi: &[CVector]) -> Result<(usize, CVector)> {
    if cb.size() == 0 {
        return Err(Error::InvalidInput("empty codebook".into()));
    }
    let scores = leakage_scores(cb, interferer_csi)?;
    let index = linalg::argmin_lowest(&scores);
    Ok((index, cb.codeword(index)))
}

/// Picks the codeword maximizing |h_kᴴ u|^2 / (alpha + leakage); ties go to
/// the lowest index.
pub fn select_max_slnr(
    cb: &Codebook,
    h_k: &CVector,
    interferer_csi: &[CVector],
    alpha: f64,
) -> Result<(usize, CVector)> {
    if cb.size() == 0 {
        return Err(Error::InvalidInput("empty codebook".into()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "regularization must be positive and finite, got {alpha}"
        )));
    }
    if h_k.len() != cb.n_t() {
        return Err(Error::InvalidDimension(format!(
            "channel length {} does not match codebook dimension {}",
            h_k.len(),
            cb.n_t()
        )));
    }
    let leak = leakage_scores(cb, interferer_csi)?;
    let signal = cb.correlations(h_k);
    let scores: Vec<f64> = signal
        .iter()
        .zip(&leak)
        .map(|(c, l)| c.norm_sqr() / (alpha + l))
        .collect();
    let index = linalg::argmax_lowest(&scores);
    Ok((index, cb.codeword(index)))
}
