//! Shared complex linear-algebra and quadrature helpers.
//!
//! Thin wrappers over nalgebra plus the few numerical primitives the domain
//! modules share: circularly-symmetric Gaussian draws, descending Hermitian
//! eigendecomposition, deterministic orthogonal complements, Gauss-Legendre
//! rules, and tie-stable argmin/argmax.

use crate::{C64, CMatrix, CVector};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// Draws z with i.i.d. CN(0,1) entries: real and imaginary parts N(0, 1/2).
pub fn standard_complex_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Largest elementwise |m - m^H|; zero for exactly Hermitian input.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// (m + m^H)/2; removes roundoff-level asymmetry before eigendecomposition.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted
/// descending and eigenvector columns permuted to match.
pub fn hermitian_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).clone_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Largest elementwise |m^H m - I|; zero for exactly orthonormal columns.
pub fn orthonormality_defect(m: &CMatrix) -> f64 {
    let gram = m.ad_mul(m);
    let mut worst = 0.0_f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    worst
}

/// Deterministic unit vector orthogonal to unit `v`: Gram-Schmidt of the
/// first canonical basis vector with a residual of at least 1/2. At most two
/// candidates are needed since a unit vector cannot be nearly parallel to
/// two canonical directions at once.
pub fn unit_complement_vector(v: &CVector) -> CVector {
    assert!(v.len() >= 2, "complement needs dimension >= 2");
    for j in 0..v.len() {
        let mut e = CVector::zeros(v.len());
        e[j] = C64::new(1.0, 0.0);
        let residual = &e - v * v[j].conj();
        let norm = residual.norm();
        if norm >= 0.5 {
            return residual / C64::new(norm, 0.0);
        }
    }
    unreachable!("no canonical direction had residual >= 1/2 against a unit vector");
}

/// Index of the strictly largest score; ties resolve to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Index of the strictly smallest score; ties resolve to the lowest index.
pub fn argmin_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence. Exact for polynomials of degree 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots come in +- pairs; solve the upper half and mirror.
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // p0, p1 climb the three-term recurrence to P_n and P_{n-1}.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Sample mean of a slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (unbiased denominator n-1); zero for n < 2.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

/// Converts a real vector view to an owned Vec.
pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}
