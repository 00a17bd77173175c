//! Monte Carlo harness: composes channels, quantizers, exchange, and
//! precoding into complete feedback schemes and aggregates leakage and
//! sum-rate metrics with confidence intervals.
//!
//! Trials are independent and deterministic per (master_seed, trial_index);
//! results are identical for any worker count. Experiment-scope objects
//! (subspace projectors, bit partitions, large exchange codebooks, ECSQ step
//! designs) are built once and shared immutably across trials.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::bitpartition;
use crate::channel::{self, ChannelRealization, OneRingGeometry, UserStatistics};
use crate::codebooks::{self, Codebook, QuantizedDirection};
use crate::error::{Error, Result};
use crate::exchange::{self, EcsqQuantizer, KltBasis, LinkBases, QuantizerBackend};
use crate::linalg;
use crate::precoding;
use crate::rng::{SeedStream, StreamPurpose};
use crate::{C64, CMatrix, CVector};

/// Largest per-link budget realized with an explicit exchange codebook;
/// larger (or fractional) budgets use the statistical RVQ emulation, which
/// follows the same error law without the exponential codeword search.
pub const MAX_EXPLICIT_EXCHANGE_BITS: f64 = 16.0;

/// Statistical channel model shared by all trials.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelModel {
    /// Unit-covariance Rayleigh channels.
    Iid,
    /// One-ring correlated channels, one geometry per user.
    OneRing(Vec<OneRingGeometry>),
}

/// The feedback schemes under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Users quantize their own channel direction; BS zero-forces.
    CsiFeedbackZf,
    /// Users quantize their own channel direction; BS applies MMSE.
    CsiFeedbackMmse,
    /// D2D exchange in each sender's own subspace, equal bit split.
    PrecoderNaive,
    /// D2D exchange in each receiver's subspace with optimal bit partition.
    PrecoderAdaptive,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::CsiFeedbackZf => "csi-feedback-zf",
            Scheme::CsiFeedbackMmse => "csi-feedback-mmse",
            Scheme::PrecoderNaive => "precoder-naive",
            Scheme::PrecoderAdaptive => "precoder-adaptive",
        }
    }

    fn uses_exchange(&self) -> bool {
        matches!(self, Scheme::PrecoderNaive | Scheme::PrecoderAdaptive)
    }
}

/// How users pick a precoder from their codebook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionRule {
    /// Minimize total leakage onto exchanged interference channels.
    MinLeakage,
    /// Maximize SLNR against exchanged interference channels.
    MaxSlnr,
}

/// Quantizer realizing the D2D link budgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExchangeBackend {
    /// Subspace KLT coefficients through the Gaussian test channel.
    IdealDr,
    /// Subspace KLT coefficients through the uniform scalar quantizer.
    EcsqUniform,
    /// Full-direction RVQ of the sender's channel (no subspace projection);
    /// magnitudes conveyed losslessly. Infinite budget means perfect CSI.
    DirectionRvq,
}

/// Complete description of one Monte Carlo experiment.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub n_t: usize,
    pub k_users: usize,
    /// Total transmit power P (linear); per-user share rho = P/K, unit noise.
    pub power_total: f64,
    /// Precoder/CSI feedback bits toward the BS.
    pub b_f: u32,
    /// Total D2D exchange budget B_tot, split across links.
    pub b_tot: f64,
    /// Per-link override for the direction-RVQ backend; infinity = perfect
    /// exchange. When unset, the budget is b_tot split equally.
    pub b_c_per_link: Option<f64>,
    pub channel_model: ChannelModel,
    /// Per-user linear path losses.
    pub path_losses: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub backend: ExchangeBackend,
    pub selection_rule: SelectionRule,
    /// Energy fraction defining each user's dominant subspace.
    pub subspace_energy: f64,
    /// Relative eigenvalue floor for the per-link KLT.
    pub eig_floor: f64,
    pub trials: u64,
    pub master_seed: u64,
}

impl ScenarioConfig {
    /// Per-user power share rho = P/K.
    pub fn rho(&self) -> f64 {
        self.power_total / self.k_users as f64
    }

    /// SLNR/MMSE regularization alpha = K/P.
    pub fn alpha(&self) -> f64 {
        self.k_users as f64 / self.power_total
    }

    /// Per-link direction-RVQ budget.
    pub fn exchange_bits_per_link(&self) -> f64 {
        match self.b_c_per_link {
            Some(b) => b,
            None => {
                let links = self.k_users.saturating_sub(1).max(1) * self.k_users;
                self.b_tot / links as f64
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 {
            return Err(Error::InvalidConfig(format!(
                "antennas: need at least 2, got {}",
                self.n_t
            )));
        }
        if self.k_users < 1 {
            return Err(Error::InvalidConfig("users: need at least 1".into()));
        }
        if self.n_t < self.k_users {
            return Err(Error::InvalidConfig(format!(
                "antennas: need at least as many as users ({} < {})",
                self.n_t, self.k_users
            )));
        }
        if !(self.power_total > 0.0) || !self.power_total.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "power: must be positive and finite, got {}",
                self.power_total
            )));
        }
        if self.b_f == 0 || self.b_f > codebooks::MAX_CODEBOOK_BITS {
            return Err(Error::InvalidConfig(format!(
                "precoder_bits: must lie in 1..={}, got {}",
                codebooks::MAX_CODEBOOK_BITS,
                self.b_f
            )));
        }
        if !(self.b_tot >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "exchange_total_bits: must be nonnegative, got {}",
                self.b_tot
            )));
        }
        if let Some(b) = self.b_c_per_link {
            if !(b > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "exchange_bits_per_link: must be positive (or infinite), got {b}"
                )));
            }
        }
        if self.path_losses.len() != self.k_users {
            return Err(Error::InvalidConfig(format!(
                "path_loss: {} entries for {} users",
                self.path_losses.len(),
                self.k_users
            )));
        }
        if self.path_losses.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidConfig(
                "path_loss: entries must be positive and finite".into(),
            ));
        }
        if let ChannelModel::OneRing(geoms) = &self.channel_model {
            if geoms.len() != self.k_users {
                return Err(Error::InvalidConfig(format!(
                    "channel.users: {} geometries for {} users",
                    geoms.len(),
                    self.k_users
                )));
            }
            if geoms.iter().any(|g| g.antenna_count != self.n_t) {
                return Err(Error::InvalidConfig(
                    "channel.users: geometry antenna count must match antennas".into(),
                ));
            }
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("schemes: set must be nonempty".into()));
        }
        if !(self.subspace_energy > 0.0 && self.subspace_energy <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "subspace.energy: must lie in (0, 1], got {}",
                self.subspace_energy
            )));
        }
        if !(self.eig_floor >= 0.0) || !self.eig_floor.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "subspace.eig_floor: must be finite and nonnegative, got {}",
                self.eig_floor
            )));
        }
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials: need at least 1".into()));
        }
        let needs_exchange =
            self.k_users > 1 && self.schemes.iter().any(|s| s.uses_exchange());
        if needs_exchange && self.backend != ExchangeBackend::DirectionRvq && !(self.b_tot > 0.0) {
            return Err(Error::InvalidConfig(
                "exchange_total_bits: subspace exchange backends need a positive budget".into(),
            ));
        }
        if needs_exchange
            && self.backend == ExchangeBackend::DirectionRvq
            && !(self.exchange_bits_per_link() > 0.0)
        {
            return Err(Error::InvalidConfig(
                "exchange_bits_per_link: direction backend needs a positive per-link budget"
                    .into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Metrics of one scheme in one trial.
#[derive(Clone, Debug)]
pub struct SchemeMetrics {
    /// Per-user interference leakage I_k = rho sum_{j!=k} |h_jᴴ w_k|^2.
    pub leakage: Vec<f64>,
    /// Per-user SINR with unit noise.
    pub sinr: Vec<f64>,
    /// Sum rate sum_k log2(1 + SINR_k).
    pub sum_rate: f64,
}

/// All schemes' metrics for one trial, ordered like the config scheme set.
#[derive(Clone, Debug)]
pub struct TrialMetrics {
    pub per_scheme: Vec<SchemeMetrics>,
}

/// Mean and 95% confidence half-width of one metric.
#[derive(Clone, Copy, Debug)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_half_width: f64,
}

fn summarize(samples: &[f64]) -> MetricSummary {
    let mean = linalg::mean(samples);
    let stderr = if samples.len() > 1 {
        linalg::sample_std(samples) / (samples.len() as f64).sqrt()
    } else {
        0.0
    };
    MetricSummary {
        mean,
        ci_half_width: 1.96 * stderr,
    }
}

/// Aggregated metrics of one scheme.
#[derive(Clone, Debug)]
pub struct SchemeAggregate {
    pub scheme: Scheme,
    /// Leakage averaged over users, then summarized over trials.
    pub leakage: MetricSummary,
    pub sum_rate: MetricSummary,
}

/// Experiment output: config echo plus per-scheme summaries.
#[derive(Clone, Debug)]
pub struct AggregateResult {
    pub config: ScenarioConfig,
    pub trials_run: u64,
    pub trials_skipped: u64,
    pub schemes: Vec<SchemeAggregate>,
    /// Set when more than 1% of trials failed.
    pub warning: Option<String>,
}

fn compute_metrics(h: &CMatrix, w: &CMatrix, rho: f64) -> SchemeMetrics {
    let k = h.ncols();
    let cross = h.ad_mul(w); // cross[(j, m)] = h_jᴴ w_m
    let mut leakage = vec![0.0; k];
    let mut sinr = vec![0.0; k];
    for m in 0..k {
        let mut leaked = 0.0;
        for j in 0..k {
            if j != m {
                leaked += cross[(j, m)].norm_sqr();
            }
        }
        leakage[m] = rho * leaked;
    }
    let mut sum_rate = 0.0;
    for kk in 0..k {
        let mut interference = 0.0;
        for m in 0..k {
            if m != kk {
                interference += cross[(kk, m)].norm_sqr();
            }
        }
        let s = rho * cross[(kk, kk)].norm_sqr() / (1.0 + rho * interference);
        sinr[kk] = s;
        sum_rate += (1.0 + s).log2();
    }
    SchemeMetrics {
        leakage,
        sinr,
        sum_rate,
    }
}

// ---------------------------------------------------------------------------
// experiment-scope shared state
// ---------------------------------------------------------------------------

/// Objects built once per experiment and shared read-only by all trials.
#[derive(Debug)]
pub struct ExperimentContext {
    stats: Vec<UserStatistics>,
    /// Per-user dominant-subspace projectors.
    projectors: Vec<CMatrix>,
    /// Receiver-subspace bases for every ordered pair (adaptive scheme).
    pair_bases: Option<LinkBases>,
    /// Optimal bit partition for the adaptive scheme.
    partition_bits: Option<nalgebra::DMatrix<f64>>,
    /// Advisory from the partition solver: links below 2 bits/dimension.
    pub low_rate_links: Vec<(usize, usize)>,
    /// Own-subspace basis per user (naive scheme).
    own_bases: Vec<KltBasis>,
    /// Per-link ECSQ designs, flattened (j * K + k), adaptive scheme.
    ecsq_pair: Vec<Option<EcsqQuantizer>>,
    /// Per-user ECSQ designs, naive scheme.
    ecsq_own: Vec<Option<EcsqQuantizer>>,
    /// Fixed explicit exchange codebooks (direction backend, finite budget).
    exchange_codebooks: Option<Vec<Codebook>>,
}

impl ExperimentContext {
    /// Builds all experiment-scope state for a validated config.
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.k_users;
        let stats = build_statistics(cfg)?;
        let mut projectors = Vec::with_capacity(k);
        for s in &stats {
            let (basis, _) = channel::dominant_subspace(s, cfg.subspace_energy)?;
            projectors.push(basis);
        }
        let needs_exchange = k > 1 && cfg.schemes.iter().any(|s| s.uses_exchange());
        let subspace_backend = matches!(
            cfg.backend,
            ExchangeBackend::IdealDr | ExchangeBackend::EcsqUniform
        );

        let mut pair_bases = None;
        let mut partition_bits = None;
        let mut low_rate_links = Vec::new();
        let mut own_bases = Vec::new();
        let mut ecsq_pair = vec![None; k * k];
        let mut ecsq_own = Vec::new();
        if needs_exchange && subspace_backend {
            let bases = LinkBases::build(&stats, &projectors, cfg.eig_floor)?;
            if cfg.schemes.contains(&Scheme::PrecoderAdaptive) {
                let problem =
                    bitpartition::build_problem(&stats, &bases, cfg.alpha(), cfg.b_tot)?;
                let solution = bitpartition::solve_partition(&problem)?;
                low_rate_links = solution.low_rate_links.clone();
                if cfg.backend == ExchangeBackend::EcsqUniform {
                    for j in 0..k {
                        for r in 0..k {
                            if j == r {
                                continue;
                            }
                            if let Some(basis) = bases.get(j, r) {
                                if !basis.is_empty() {
                                    ecsq_pair[j * k + r] = Some(EcsqQuantizer::design(
                                        &basis.eigenvalues,
                                        solution.bits[(j, r)],
                                    )?);
                                }
                            }
                        }
                    }
                }
                partition_bits = Some(solution.bits);
            }
            if cfg.schemes.contains(&Scheme::PrecoderNaive) {
                let per_user = cfg.b_tot / k as f64;
                for (j, s) in stats.iter().enumerate() {
                    let basis = exchange::klt_basis(s, &projectors[j], cfg.eig_floor)?;
                    if cfg.backend == ExchangeBackend::EcsqUniform && !basis.is_empty() {
                        ecsq_own.push(Some(EcsqQuantizer::design(&basis.eigenvalues, per_user)?));
                    } else {
                        ecsq_own.push(None);
                    }
                    own_bases.push(basis);
                }
            }
            pair_bases = Some(bases);
        } else if needs_exchange && cfg.schemes.contains(&Scheme::PrecoderNaive) {
            // Direction backend still reuses the own-basis slots for shape.
            own_bases = Vec::new();
        }

        let mut exchange_codebooks = None;
        if needs_exchange && cfg.backend == ExchangeBackend::DirectionRvq {
            let b = cfg.exchange_bits_per_link();
            if b.is_finite() && b <= MAX_EXPLICIT_EXCHANGE_BITS && b.fract() == 0.0 {
                let mut books = Vec::with_capacity(k);
                for user in 0..k {
                    let mut stream = SeedStream::for_experiment(
                        cfg.master_seed,
                        StreamPurpose::ExchangeCodebook,
                        user,
                    );
                    books.push(codebooks::build_rvq(cfg.n_t, b as u32, &mut stream)?);
                }
                exchange_codebooks = Some(books);
            }
        }

        Ok(ExperimentContext {
            stats,
            projectors,
            pair_bases,
            partition_bits,
            low_rate_links,
            own_bases,
            ecsq_pair,
            ecsq_own,
            exchange_codebooks,
        })
    }

    pub fn statistics(&self) -> &[UserStatistics] {
        &self.stats
    }

    /// Per-user dominant-subspace projectors, user-major.
    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    /// The adaptive scheme's solved per-link bit matrix, when applicable.
    pub fn partition_bits(&self) -> Option<&nalgebra::DMatrix<f64>> {
        self.partition_bits.as_ref()
    }
}

fn build_statistics(cfg: &ScenarioConfig) -> Result<Vec<UserStatistics>> {
    let mut stats = Vec::with_capacity(cfg.k_users);
    for user in 0..cfg.k_users {
        let base = match &cfg.channel_model {
            ChannelModel::Iid => channel::gen_iid_statistics(cfg.n_t)?,
            ChannelModel::OneRing(geoms) => channel::one_ring_covariance(&geoms[user])?,
        };
        stats.push(base.with_path_loss(cfg.path_losses[user])?);
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// exchange stage
// ---------------------------------------------------------------------------

/// Exchanged CSI known to one receiver: reconstructed channels of all
/// interferers, indexed by sender.
struct ReceiverCsi {
    channels: Vec<CVector>,
}

/// Quantizes sender j's channel for receiver r through a subspace backend.
fn exchange_subspace_link(
    cfg: &ScenarioConfig,
    ctx: &ExperimentContext,
    h_j: &CVector,
    j: usize,
    basis: &KltBasis,
    bits: f64,
    ecsq: Option<&EcsqQuantizer>,
    stream: &mut SeedStream,
) -> Result<CVector> {
    if basis.is_empty() {
        return Ok(CVector::zeros(cfg.n_t));
    }
    let l = ctx.stats[j].path_loss;
    let g = exchange::partial_channel(h_j, l, &basis.projector)?;
    let q = exchange::klt_coefficients(&g, basis)?;
    let qhat = match cfg.backend {
        ExchangeBackend::IdealDr => exchange::quantize_ideal_dr(&q, basis, bits, stream)?,
        ExchangeBackend::EcsqUniform => match ecsq {
            Some(design) => design.quantize(&q)?.0,
            None => exchange::quantize_ecsq_uniform(&q, basis, bits)?.0,
        },
        ExchangeBackend::DirectionRvq => unreachable!("direction backend has no subspace link"),
    };
    Ok(exchange::reconstruct_csi(&qhat, basis, l, bits, map_backend(cfg.backend))?.reconstructed)
}

fn map_backend(b: ExchangeBackend) -> QuantizerBackend {
    match b {
        ExchangeBackend::EcsqUniform => QuantizerBackend::EcsqUniform,
        _ => QuantizerBackend::IdealDr,
    }
}

/// Direction-RVQ exchange: sender j broadcasts one quantized direction to
/// every peer; magnitude is conveyed losslessly.
fn exchange_direction(
    cfg: &ScenarioConfig,
    ctx: &ExperimentContext,
    h_j: &CVector,
    j: usize,
    trial: u64,
) -> Result<CVector> {
    let bits = cfg.exchange_bits_per_link();
    if bits.is_infinite() {
        return Ok(h_j.clone());
    }
    let quantized: QuantizedDirection = if let Some(books) = &ctx.exchange_codebooks {
        codebooks::quantize_direction(h_j, &books[j])?
    } else {
        let mut stream =
            SeedStream::for_trial(cfg.master_seed, trial, StreamPurpose::ExchangeCodebook, j);
        let whole = bits.round().max(1.0);
        codebooks::emulate_rvq_error(cfg.n_t, whole as u32, h_j, &mut stream)?
    };
    Ok(&quantized.direction * C64::new(quantized.magnitude, 0.0))
}

/// Runs the configured exchange for one scheme, producing every receiver's
/// view of its interferers.
fn run_exchange(
    cfg: &ScenarioConfig,
    ctx: &ExperimentContext,
    scheme: Scheme,
    h: &ChannelRealization,
    trial: u64,
) -> Result<Vec<ReceiverCsi>> {
    let k = cfg.k_users;
    let mut per_receiver: Vec<ReceiverCsi> = (0..k)
        .map(|_| ReceiverCsi {
            channels: Vec::new(),
        })
        .collect();
    if k == 1 {
        return Ok(per_receiver);
    }
    match cfg.backend {
        ExchangeBackend::DirectionRvq => {
            for j in 0..k {
                let hj = h.user(j);
                let shared = exchange_direction(cfg, ctx, &hj, j, trial)?;
                for (r, receiver) in per_receiver.iter_mut().enumerate() {
                    if r != j {
                        receiver.channels.push(shared.clone());
                    }
                }
            }
        }
        ExchangeBackend::IdealDr | ExchangeBackend::EcsqUniform => match scheme {
            Scheme::PrecoderNaive => {
                let per_user = cfg.b_tot / k as f64;
                for j in 0..k {
                    let hj = h.user(j);
                    let mut stream = SeedStream::for_trial(
                        cfg.master_seed,
                        trial,
                        StreamPurpose::QuantizerNoise,
                        j,
                    );
                    let basis = &ctx.own_bases[j];
                    let ecsq = ctx.ecsq_own.get(j).and_then(|e| e.as_ref());
                    let shared =
                        exchange_subspace_link(cfg, ctx, &hj, j, basis, per_user, ecsq, &mut stream)?;
                    for (r, receiver) in per_receiver.iter_mut().enumerate() {
                        if r != j {
                            receiver.channels.push(shared.clone());
                        }
                    }
                }
            }
            Scheme::PrecoderAdaptive => {
                let bases = ctx.pair_bases.as_ref().ok_or_else(|| {
                    Error::Numerical("adaptive exchange context missing".into())
                })?;
                let bits = ctx.partition_bits.as_ref().ok_or_else(|| {
                    Error::Numerical("adaptive partition missing".into())
                })?;
                for j in 0..k {
                    let hj = h.user(j);
                    let mut stream = SeedStream::for_trial(
                        cfg.master_seed,
                        trial,
                        StreamPurpose::QuantizerNoise,
                        j,
                    );
                    for r in 0..k {
                        if r == j {
                            continue;
                        }
                        let basis = bases.get(j, r).ok_or_else(|| {
                            Error::Numerical("missing pair basis".into())
                        })?;
                        let ecsq = ctx.ecsq_pair[j * k + r].as_ref();
                        let reconstructed = exchange_subspace_link(
                            cfg,
                            ctx,
                            &hj,
                            j,
                            basis,
                            bits[(j, r)],
                            ecsq,
                            &mut stream,
                        )?;
                        per_receiver[r].channels.push(reconstructed);
                    }
                }
            }
            _ => unreachable!("exchange is only run for precoder schemes"),
        },
    }
    Ok(per_receiver)
}

// ---------------------------------------------------------------------------
// schemes
// ---------------------------------------------------------------------------

/// CSI-feedback schemes: quantize own directions, precode at the BS.
fn run_csi_feedback(
    cfg: &ScenarioConfig,
    h: &ChannelRealization,
    trial: u64,
    mmse: bool,
) -> Result<CMatrix> {
    let k = cfg.k_users;
    let mut directions = CMatrix::zeros(cfg.n_t, k);
    let mut magnitudes = vec![0.0; k];
    for user in 0..k {
        let mut book_stream =
            SeedStream::for_trial(cfg.master_seed, trial, StreamPurpose::CsiCodebook, user);
        let book = codebooks::build_rvq(cfg.n_t, cfg.b_f, &mut book_stream)?;
        let q = codebooks::quantize_direction(&h.user(user), &book)?;
        magnitudes[user] = q.magnitude;
        directions.set_column(user, &q.direction);
    }
    if !mmse {
        return Ok(precoding::zf_precoder(&directions)?.vectors);
    }
    let mut global = directions.clone();
    for user in 0..k {
        let scaled = global.column(user) * C64::new(magnitudes[user], 0.0);
        global.set_column(user, &scaled);
    }
    let mut w = CMatrix::zeros(cfg.n_t, k);
    for user in 0..k {
        w.set_column(user, &precoding::mmse_precoder(&global, user, cfg.alpha())?);
    }
    Ok(w)
}

/// Precoder-feedback schemes: exchange CSI over D2D, select codewords
/// locally, feed the chosen precoders back.
fn run_precoder_scheme(
    cfg: &ScenarioConfig,
    ctx: &ExperimentContext,
    scheme: Scheme,
    h: &ChannelRealization,
    trial: u64,
) -> Result<CMatrix> {
    let k = cfg.k_users;
    let exchanged = run_exchange(cfg, ctx, scheme, h, trial)?;
    let mut w = CMatrix::zeros(cfg.n_t, k);
    for user in 0..k {
        let mut book_stream =
            SeedStream::for_trial(cfg.master_seed, trial, StreamPurpose::PrecoderCodebook, user);
        let book = codebooks::build_shaped(&ctx.stats[user], cfg.b_f, &mut book_stream)?;
        let own = h.user(user);
        let interferers = &exchanged[user].channels;
        let (_, chosen) = match cfg.selection_rule {
            SelectionRule::MinLeakage => precoding::select_min_leakage(&book, interferers)?,
            SelectionRule::MaxSlnr => {
                precoding::select_max_slnr(&book, &own, interferers, cfg.alpha())?
            }
        };
        w.set_column(user, &chosen);
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// trials and experiments
// ---------------------------------------------------------------------------

/// Runs every configured scheme on one channel draw. Deterministic per
/// (master_seed, trial_index) and independent of other trials.
pub fn run_trial_in_context(
    cfg: &ScenarioConfig,
    ctx: &ExperimentContext,
    trial: u64,
) -> Result<TrialMetrics> {
    let mut stream =
        SeedStream::for_trial(cfg.master_seed, trial, StreamPurpose::Channel, 0);
    let h = channel::gen_channel(&ctx.stats, &mut stream).map_err(|e| e.in_trial(trial))?;
    let rho = cfg.rho();
    let mut per_scheme = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let w = match scheme {
            Scheme::CsiFeedbackZf => run_csi_feedback(cfg, &h, trial, false),
            Scheme::CsiFeedbackMmse => run_csi_feedback(cfg, &h, trial, true),
            Scheme::PrecoderNaive | Scheme::PrecoderAdaptive => {
                run_precoder_scheme(cfg, ctx, scheme, &h, trial)
            }
        }
        .map_err(|e| e.in_trial(trial))?;
        per_scheme.push(compute_metrics(&h.channels, &w, rho));
    }
    Ok(TrialMetrics { per_scheme })
}

/// Standalone single trial: builds the experiment context first. Equivalent
/// to the corresponding trial inside [`run_experiment`].
pub fn run_trial(cfg: &ScenarioConfig, trial: u64) -> Result<TrialMetrics> {
    let ctx = ExperimentContext::build(cfg)?;
    run_trial_in_context(cfg, &ctx, trial)
}

/// Runs all trials (in parallel when the `parallel` feature is on), skipping
/// failed trials and aggregating means with 95% confidence intervals.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<AggregateResult> {
    let ctx = ExperimentContext::build(cfg)?;
    run_experiment_in_context(cfg, &ctx)
}

/// [`run_experiment`] against a prebuilt context.
pub fn run_experiment_in_context(
    cfg: &ScenarioConfig,
    ctx: &ExperimentContext,
) -> Result<AggregateResult> {
    let trials: Vec<u64> = (0..cfg.trials).collect();
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<TrialMetrics>> = trials
        .par_iter()
        .map(|&t| run_trial_in_context(cfg, ctx, t))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<TrialMetrics>> = trials
        .iter()
        .map(|&t| run_trial_in_context(cfg, ctx, t))
        .collect();

    let mut kept: Vec<TrialMetrics> = Vec::with_capacity(outcomes.len());
    let mut skipped = 0u64;
    let mut first_error: Option<String> = None;
    for outcome in outcomes {
        match outcome {
            Ok(m) => kept.push(m),
            Err(e) => {
                skipped += 1;
                if first_error.is_none() {
                    first_error = Some(e.to_string());
                }
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::Numerical(format!(
            "all {} trials failed; first error: {}",
            cfg.trials,
            first_error.unwrap_or_default()
        )));
    }
    let mut schemes = Vec::with_capacity(cfg.schemes.len());
    for (idx, &scheme) in cfg.schemes.iter().enumerate() {
        let leakage: Vec<f64> = kept
            .iter()
            .map(|t| linalg::mean(&t.per_scheme[idx].leakage))
            .collect();
        let rates: Vec<f64> = kept.iter().map(|t| t.per_scheme[idx].sum_rate).collect();
        schemes.push(SchemeAggregate {
            scheme,
            leakage: summarize(&leakage),
            sum_rate: summarize(&rates),
        });
    }
    let warning = if skipped as f64 > 0.01 * cfg.trials as f64 {
        Some(format!(
            "{} of {} trials skipped; first error: {}",
            skipped,
            cfg.trials,
            first_error.unwrap_or_default()
        ))
    } else {
        None
    };
    Ok(AggregateResult {
        config: cfg.clone(),
        trials_run: kept.len() as u64,
        trials_skipped: skipped,
        schemes,
        warning,
    })
}
