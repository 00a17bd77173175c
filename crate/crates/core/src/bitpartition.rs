//! Optimal D2D bit partition: splits a total exchange budget across ordered
//! user pairs to maximize a proportional-fairness sum of virtual-SLNR lower
//! bounds.
//!
//! The problem is convex in the per-link bit counts. For a fixed multiplier
//! mu the per-user KKT system has a rank-1 structure with a closed-form
//! active-set solution; a global bisection on mu then enforces the budget.
//! Solutions are continuous (real-valued bits) with a verified KKT residual.

use nalgebra::DMatrix;

use crate::channel::UserStatistics;
use crate::error::{Error, Result};
use crate::exchange::LinkBases;

const LN2: f64 = std::f64::consts::LN_2;
/// Links driven below this are treated as inactive (b = 0).
const ACTIVE_BITS_TOL: f64 = 1e-12;
/// Budget constraint tolerance enforced on returned solutions.
const BUDGET_TOL: f64 = 1e-6;
/// Advisory threshold: links with fewer bits per dimension are flagged
/// because the high-resolution distortion model under them is loose.
const LOW_RATE_BITS_PER_DIM: f64 = 2.0;

/// Inputs of the bit-partition optimization.
///
/// Entry (j, k) of `weights`/`dims` describes the link carrying user j's
/// channel to user k: omega_jk = l_j (prod lambda_jk)^(1/M_jk) and the
/// effective dimension M_jk. Diagonals are unused. Links with zero overlap
/// carry weight 0 and never receive bits.
#[derive(Clone, Debug)]
pub struct PartitionProblem {
    pub weights: DMatrix<f64>,
    pub dims: DMatrix<usize>,
    /// Regularization alpha (K/P) entering every denominator.
    pub alpha: f64,
    /// Total bit budget B_tot across all links.
    pub total_bits: f64,
    /// Per-user virtual signal terms l_k sum_{i>=K} lambda_k^(i).
    pub signal_terms: Vec<f64>,
}

/// A solved bit partition.
#[derive(Clone, Debug)]
pub struct PartitionSolution {
    /// Per-link bits b_jk >= 0, same indexing as the problem.
    pub bits: DMatrix<f64>,
    /// KKT multiplier of the budget constraint.
    pub mu: f64,
    /// Worst stationarity/complementarity violation over all links.
    pub kkt_residual: f64,
    /// Minimized objective: sum over users of ln(interference weight + alpha).
    pub objective: f64,
    /// Links (j, k) allocated fewer than 2 bits per dimension, where the
    /// underlying distortion model is loose.
    pub low_rate_links: Vec<(usize, usize)>,
}

impl PartitionProblem {
    pub fn n_users(&self) -> usize {
        self.weights.nrows()
    }

    fn validate(&self) -> Result<()> {
        let k = self.weights.nrows();
        if self.weights.ncols() != k || self.dims.nrows() != k || self.dims.ncols() != k {
            return Err(Error::InvalidDimension(
                "weight and dimension matrices must be square with matching size".into(),
            ));
        }
        if self.signal_terms.len() != k {
            return Err(Error::InvalidDimension(format!(
                "{} signal terms for {k} users",
                self.signal_terms.len()
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(self.total_bits >= 0.0) || !self.total_bits.is_finite() {
            return Err(Error::InvalidInput(format!(
                "total bits must be finite and nonnegative, got {}",
                self.total_bits
            )));
        }
        for j in 0..k {
            for r in 0..k {
                let w = self.weights[(j, r)];
                if w < 0.0 || !w.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "weight ({j},{r}) must be finite and nonnegative, got {w}"
                    )));
                }
                if j != r && w > 0.0 && self.dims[(j, r)] == 0 {
                    return Err(Error::InvalidInput(format!(
                        "link ({j},{r}) has positive weight but zero dimension"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Links feeding user k: (source j, omega, M).
    fn column_links(&self, k: usize) -> Vec<(usize, f64, f64)> {
        (0..self.n_users())
            .filter(|&j| j != k && self.weights[(j, k)] > 0.0 && self.dims[(j, k)] > 0)
            .map(|j| (j, self.weights[(j, k)], self.dims[(j, k)] as f64))
            .collect()
    }
}

/// Assembles the optimization inputs from user statistics and per-pair KLT
/// bases. Weights are omega_jk = l_j (geometric mean of the link spectrum);
/// empty links get weight 0.
pub fn build_problem(
    stats: &[UserStatistics],
    bases: &LinkBases,
    alpha: f64,
    total_bits: f64,
) -> Result<PartitionProblem> {
    let k = stats.len();
    if bases.n_users() != k {
        return Err(Error::InvalidDimension(format!(
            "{} users but bases for {}",
            k,
            bases.n_users()
        )));
    }
    let mut weights = DMatrix::zeros(k, k);
    let mut dims = DMatrix::from_element(k, k, 0usize);
    for j in 0..k {
        for r in 0..k {
            if j == r {
                continue;
            }
            if let Some(basis) = bases.get(j, r) {
                let m = basis.effective_dim();
                if m == 0 {
                    continue;
                }
                let log_geo: f64 =
                    basis.eigenvalues.iter().map(|v| v.ln()).sum::<f64>() / m as f64;
                weights[(j, r)] = stats[j].path_loss * log_geo.exp();
                dims[(j, r)] = m;
            }
        }
    }
    let signal_terms = stats
        .iter()
        .map(|s| {
            let from = (k - 1).min(s.eigenvalues.len());
            s.path_loss * s.eigenvalues[from..].iter().sum::<f64>()
        })
        .collect();
    let problem = PartitionProblem {
        weights,
        dims,
        alpha,
        total_bits,
        signal_terms,
    };
    problem.validate()?;
    Ok(problem)
}

/// Per-user virtual-SLNR lower bounds under a candidate bit matrix:
/// signal_k / (sum_j omega_jk 2^(-b_jk/M_jk) + alpha).
pub fn virtual_slnr_lower_bound(problem: &PartitionProblem, bits: &DMatrix<f64>) -> Vec<f64> {
    let k = problem.n_users();
    (0..k)
        .map(|r| {
            let denom: f64 = problem
                .column_links(r)
                .iter()
                .map(|&(j, w, m)| w * (-bits[(j, r)] / m).exp2())
                .sum::<f64>()
                + problem.alpha;
            problem.signal_terms[r] / denom
        })
        .collect()
}

/// Closed-form per-user subproblem at fixed mu. Returns bits per link in the
/// order of `links`. Scans active-set sizes in keep-priority order (descending
/// omega/M); exactly one size is KKT-consistent.
fn column_bits_at_mu(links: &[(usize, f64, f64)], alpha: f64, mu: f64) -> Vec<f64> {
    let n = links.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = links[a].1 / links[a].2;
        let rb = links[b].1 / links[b].2;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for m in (1..=n).rev() {
        let active = &order[..m];
        let inactive = &order[m..];
        let t: f64 = active.iter().map(|&i| links[i].2).sum();
        let slack = LN2 - mu * t;
        if slack <= 0.0 {
            continue;
        }
        let c: f64 = alpha + inactive.iter().map(|&i| links[i].1).sum::<f64>();
        // x_j = mu C M_j / (omega_j slack); active links need 0 < x < 1.
        let mut bits = vec![0.0; n];
        let mut ok = true;
        for &i in active {
            let (_, w, mm) = links[i];
            let x = mu * c * mm / (w * slack);
            if !(x > 0.0) || x >= 1.0 {
                ok = false;
                break;
            }
            bits[i] = mm * (1.0 / x).log2();
        }
        if !ok {
            continue;
        }
        // Inactive links must not want bits: gradient at b=0 <= mu.
        // Active-set denominator collapses to C ln2 / slack.
        let denom = c * LN2 / slack;
        if inactive.iter().any(|&i| {
            let (_, w, mm) = links[i];
            LN2 / mm * w / denom > mu * (1.0 + 1e-12)
        }) {
            continue;
        }
        return bits;
    }
    vec![0.0; n]
}

/// Total bits assigned across all users at a trial mu.
fn total_bits_at_mu(problem: &PartitionProblem, columns: &[Vec<(usize, f64, f64)>], mu: f64) -> f64 {
    columns
        .iter()
        .map(|links| column_bits_at_mu(links, problem.alpha, mu).iter().sum::<f64>())
        .sum()
}

/// Minimized objective value: sum over users of ln(denominator).
pub fn partition_objective(problem: &PartitionProblem, bits: &DMatrix<f64>) -> f64 {
    let k = problem.n_users();
    (0..k)
        .map(|r| {
            let denom: f64 = problem
                .column_links(r)
                .iter()
                .map(|&(j, w, m)| w * (-bits[(j, r)] / m).exp2())
                .sum::<f64>()
                + problem.alpha;
            denom.ln()
        })
        .sum()
}

/// Worst KKT violation of a candidate solution: |gradient - mu| over links
/// with bits, and max(0, gradient - mu) over links at zero.
pub fn kkt_residual(problem: &PartitionProblem, bits: &DMatrix<f64>, mu: f64) -> f64 {
    let k = problem.n_users();
    let mut residual: f64 = 0.0;
    for r in 0..k {
        let links = problem.column_links(r);
        if links.is_empty() {
            continue;
        }
        let denom: f64 = links
            .iter()
            .map(|&(j, w, m)| w * (-bits[(j, r)] / m).exp2())
            .sum::<f64>()
            + problem.alpha;
        for &(j, w, m) in &links {
            let grad = LN2 / m * w * (-bits[(j, r)] / m).exp2() / denom;
            if bits[(j, r)] > ACTIVE_BITS_TOL {
                residual = residual.max((grad - mu).abs());
            } else {
                residual = residual.max((grad - mu).max(0.0));
            }
        }
    }
    residual
}

/// Solves the bit partition by bisection on the budget multiplier.
///
/// The per-link bits at the returned mu satisfy the componentwise KKT system
/// exactly by construction; bisection runs in log space until the budget
/// matches to 1e-10 bits.
pub fn solve_partition(problem: &PartitionProblem) -> Result<PartitionSolution> {
    problem.validate()?;
    if !(problem.total_bits > 0.0) {
        return Err(Error::InvalidInput(
            "bit partition needs a positive total budget".into(),
        ));
    }
    let k = problem.n_users();
    let columns: Vec<Vec<(usize, f64, f64)>> = (0..k).map(|r| problem.column_links(r)).collect();
    let n_links: usize = columns.iter().map(Vec::len).sum();
    if n_links == 0 {
        return Err(Error::InvalidInput(
            "no links with positive weight; nothing to partition".into(),
        ));
    }
    // Zero-bit gradients bound mu from above; tiny mu gives unbounded bits.
    let mut hi = columns
        .iter()
        .flatten()
        .map(|&(_, w, m)| LN2 / m * w / problem.alpha)
        .fold(0.0f64, f64::max)
        * 2.0;
    let mut lo = (hi * 1e-12).min(1e-12);
    let mut expansions = 0;
    while total_bits_at_mu(problem, &columns, lo) <= problem.total_bits {
        lo *= 1e-3;
        expansions += 1;
        if expansions > 100 || lo < 1e-290 {
            return Err(Error::Numerical(format!(
                "bit-partition bisection could not bracket the budget {} from below",
                problem.total_bits
            )));
        }
    }
    while total_bits_at_mu(problem, &columns, hi) > problem.total_bits {
        hi *= 8.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numerical(
                "bit-partition bisection could not bracket the budget from above".into(),
            ));
        }
    }
    let mut mu = (lo * hi).sqrt();
    for _ in 0..300 {
        mu = (lo * hi).sqrt();
        let total = total_bits_at_mu(problem, &columns, mu);
        if (total - problem.total_bits).abs() <= 1e-10 {
            break;
        }
        if total > problem.total_bits {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    let mut bits = DMatrix::zeros(k, k);
    for (r, links) in columns.iter().enumerate() {
        let b = column_bits_at_mu(links, problem.alpha, mu);
        for (&(j, _, _), &bj) in links.iter().zip(&b) {
            bits[(j, r)] = bj;
        }
    }
    let total: f64 = bits.iter().sum();
    if (total - problem.total_bits).abs() > BUDGET_TOL {
        return Err(Error::Numerical(format!(
            "bit partition missed the budget: {total} vs {}",
            problem.total_bits
        )));
    }
    let residual = kkt_residual(problem, &bits, mu);
    let objective = partition_objective(problem, &bits);
    let mut low_rate_links = Vec::new();
    for (r, links) in columns.iter().enumerate() {
        for &(j, _, m) in links {
            if bits[(j, r)] / m < LOW_RATE_BITS_PER_DIM {
                low_rate_links.push((j, r));
            }
        }
    }
    Ok(PartitionSolution {
        bits,
        mu,
        kkt_residual: residual,
        objective,
        low_rate_links,
    })
}
