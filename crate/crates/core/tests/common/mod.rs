//! Shared test oracles, implemented independently of the library's own
//! solution paths.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// Objective of the bit-partition problem: sum over receivers of
/// ln(sum_j w_jk 2^(-b_jk/M_jk) + alpha), evaluated directly.
pub fn partition_objective_direct(
    weights: &DMatrix<f64>,
    dims: &DMatrix<usize>,
    alpha: f64,
    bits: &DMatrix<f64>,
) -> f64 {
    let k = weights.ncols();
    let mut total = 0.0;
    for col in 0..k {
        let mut acc = alpha;
        for row in 0..k {
            if row != col && weights[(row, col)] > 0.0 {
                acc += weights[(row, col)] * (-bits[(row, col)] / dims[(row, col)] as f64).exp2();
            }
        }
        total += acc.ln();
    }
    total
}

/// Euclidean projection of v onto the simplex {x >= 0, sum x = total}.
fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (i, &u) in sorted.iter().enumerate() {
        acc += u;
        let candidate = (acc - total) / (i + 1) as f64;
        if u - candidate > 0.0 {
            rho = i + 1;
            theta = candidate;
        }
    }
    let _ = rho;
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projected-gradient minimizer of the partition objective over the simplex
/// {b >= 0, sum b = total}, with Armijo backtracking. Entries where
/// weights = 0 (including diagonals) are frozen at zero.
pub fn projected_gradient_partition(
    weights: &DMatrix<f64>,
    dims: &DMatrix<usize>,
    alpha: f64,
    total: f64,
    iterations: usize,
) -> (DMatrix<f64>, f64) {
    let k = weights.ncols();
    let mut links: Vec<(usize, usize)> = Vec::new();
    for col in 0..k {
        for row in 0..k {
            if row != col && weights[(row, col)] > 0.0 {
                links.push((row, col));
            }
        }
    }
    assert!(!links.is_empty(), "no active links");
    let n = links.len();
    let mut b = vec![total / n as f64; n];

    let objective = |b: &[f64]| {
        let mut bits = DMatrix::zeros(k, k);
        for (idx, &(r, c)) in links.iter().enumerate() {
            bits[(r, c)] = b[idx];
        }
        partition_objective_direct(weights, dims, alpha, &bits)
    };
    let gradient = |b: &[f64]| {
        // d/db_jk ln(S_k) = -ln2/M_jk * w_jk 2^(-b/M) / S_k.
        let mut denoms = vec![alpha; k];
        for (idx, &(r, c)) in links.iter().enumerate() {
            denoms[c] += weights[(r, c)] * (-b[idx] / dims[(r, c)] as f64).exp2();
        }
        links
            .iter()
            .enumerate()
            .map(|(idx, &(r, c))| {
                let m = dims[(r, c)] as f64;
                let term = weights[(r, c)] * (-b[idx] / m).exp2();
                -(std::f64::consts::LN_2 / m) * term / denoms[c]
            })
            .collect::<Vec<f64>>()
    };

    let mut f = objective(&b);
    let mut step = 1.0f64;
    for _ in 0..iterations {
        let g = gradient(&b);
        // Armijo backtracking on the projected step.
        let mut eta = step * 4.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = b.iter().zip(&g).map(|(&x, &gi)| x - eta * gi).collect();
            let projected = project_simplex(&trial, total);
            let f_new = objective(&projected);
            let decrease: f64 = projected
                .iter()
                .zip(&b)
                .zip(&g)
                .map(|((&p, &x), &gi)| gi * (p - x))
                .sum();
            if f_new <= f + 0.25 * decrease + 1e-18 {
                b = projected;
                f = f_new;
                step = eta;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let mut bits = DMatrix::zeros(k, k);
    for (idx, &(r, c)) in links.iter().enumerate() {
        bits[(r, c)] = b[idx];
    }
    (bits, f)
}

/// Two-sided Kolmogorov-Smirnov statistic of sorted samples against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        ks = ks.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
    }
    ks
}

/// Sample mean.
pub fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// 95% confidence half-width of the mean.
pub fn ci95(xs: &[f64]) -> f64 {
    let m = mean_of(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    1.96 * (var / xs.len() as f64).sqrt()
}
