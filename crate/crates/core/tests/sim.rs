//! Monte Carlo harness contracts: bit-reproducible experiments, full
//! pipeline replay against an independent metric recomputation, scenario
//! validation, TOML config mapping, and a closed-form leakage limit for the
//! perfect-exchange two-user case.

mod common;

use approx::assert_relative_eq;

use coopfb::channel::{self, OneRingGeometry};
use coopfb::codebooks;
use coopfb::config::RawConfig;
use coopfb::precoding;
use coopfb::rng::{SeedStream, StreamPurpose};
use coopfb::sim::{
    run_experiment, run_trial, run_trial_in_context, ChannelModel, ExchangeBackend,
    ExperimentContext, Scheme, ScenarioConfig, SelectionRule,
};
use coopfb::{C64, CMatrix};

fn base_config() -> ScenarioConfig {
    ScenarioConfig {
        n_t: 8,
        k_users: 2,
        power_total: 20.0,
        b_f: 4,
        b_tot: 16.0,
        b_c_per_link: None,
        channel_model: ChannelModel::Iid,
        path_losses: vec![1.0, 0.6],
        schemes: vec![Scheme::CsiFeedbackZf, Scheme::PrecoderAdaptive],
        backend: ExchangeBackend::IdealDr,
        selection_rule: SelectionRule::MaxSlnr,
        subspace_energy: 0.995,
        eig_floor: 1e-6,
        trials: 64,
        master_seed: 5,
    }
}

#[test]
fn experiment_is_deterministic_and_reports_full_trials() {
    let cfg = base_config();
    let a = run_experiment(&cfg).expect("experiment");
    let b = run_experiment(&cfg).expect("experiment");
    assert_eq!(a.trials_run, 64);
    assert_eq!(a.trials_skipped, 0);
    assert!(a.warning.is_none());
    assert_eq!(a.schemes.len(), 2);
    for (sa, sb) in a.schemes.iter().zip(&b.schemes) {
        assert_eq!(sa.scheme, sb.scheme);
        assert_eq!(sa.leakage.mean.to_bits(), sb.leakage.mean.to_bits());
        assert_eq!(sa.sum_rate.mean.to_bits(), sb.sum_rate.mean.to_bits());
        assert_eq!(
            sa.sum_rate.ci_half_width.to_bits(),
            sb.sum_rate.ci_half_width.to_bits()
        );
        assert!(sa.sum_rate.mean.is_finite() && sa.sum_rate.mean > 0.0);
        assert!(sa.leakage.mean >= 0.0);
    }
}

/// Rebuilds one trial of both feedback-only schemes from scratch (channel
/// draw, fresh codebooks, precoders) and recomputes every metric with
/// straight-line arithmetic.
#[test]
fn trial_replay_matches_csi_feedback_pipeline() {
    let mut cfg = base_config();
    cfg.schemes = vec![Scheme::CsiFeedbackZf, Scheme::CsiFeedbackMmse];
    cfg.b_tot = 0.0;
    let trial = 3u64;
    let metrics = run_trial(&cfg, trial).expect("trial");

    let ctx = ExperimentContext::build(&cfg).expect("context");
    let mut hs = SeedStream::for_trial(cfg.master_seed, trial, StreamPurpose::Channel, 0);
    let h = channel::gen_channel(ctx.statistics(), &mut hs).expect("channel");

    let mut directions = CMatrix::zeros(cfg.n_t, cfg.k_users);
    let mut magnitudes = vec![0.0; cfg.k_users];
    for user in 0..cfg.k_users {
        let mut bs =
            SeedStream::for_trial(cfg.master_seed, trial, StreamPurpose::CsiCodebook, user);
        let book = codebooks::build_rvq(cfg.n_t, cfg.b_f, &mut bs).expect("book");
        let q = codebooks::quantize_direction(&h.user(user), &book).expect("quantize");
        magnitudes[user] = q.magnitude;
        directions.set_column(user, &q.direction);
    }

    let rho = cfg.rho();
    let check = |w: &CMatrix, got: &coopfb::sim::SchemeMetrics| {
        let mut rate = 0.0;
        for k in 0..cfg.k_users {
            let hk = h.user(k);
            let mut interference = 0.0;
            let mut leaked = 0.0;
            for m in 0..cfg.k_users {
                if m == k {
                    continue;
                }
                interference += hk.dotc(&w.column(m).clone_owned()).norm_sqr();
                leaked += h.user(m).dotc(&w.column(k).clone_owned()).norm_sqr();
            }
            let signal = hk.dotc(&w.column(k).clone_owned()).norm_sqr();
            let sinr = rho * signal / (1.0 + rho * interference);
            assert_relative_eq!(got.sinr[k], sinr, max_relative = 1e-12);
            assert_relative_eq!(got.leakage[k], rho * leaked, max_relative = 1e-12);
            rate += (1.0 + sinr).log2();
        }
        assert_relative_eq!(got.sum_rate, rate, max_relative = 1e-12);
    };

    let zf = precoding::zf_precoder(&directions).expect("zf").vectors;
    check(&zf, &metrics.per_scheme[0]);

    let mut global = directions.clone();
    for user in 0..cfg.k_users {
        let scaled = global.column(user) * C64::new(magnitudes[user], 0.0);
        global.set_column(user, &scaled);
    }
    let mut mmse = CMatrix::zeros(cfg.n_t, cfg.k_users);
    for user in 0..cfg.k_users {
        let col = precoding::mmse_precoder(&global, user, cfg.alpha()).expect("mmse");
        mmse.set_column(user, &col);
    }
    check(&mmse, &metrics.per_scheme[1]);
}

#[test]
fn standalone_trial_equals_context_trial() {
    let mut cfg = base_config();
    cfg.backend = ExchangeBackend::EcsqUniform;
    cfg.b_tot = 24.0;
    cfg.schemes = vec![Scheme::PrecoderNaive, Scheme::PrecoderAdaptive];
    let ctx = ExperimentContext::build(&cfg).expect("context");
    for trial in [0u64, 7, 31] {
        let a = run_trial(&cfg, trial).expect("standalone");
        let b = run_trial_in_context(&cfg, &ctx, trial).expect("in context");
        for (sa, sb) in a.per_scheme.iter().zip(&b.per_scheme) {
            assert_eq!(sa.sum_rate.to_bits(), sb.sum_rate.to_bits());
            for (la, lb) in sa.leakage.iter().zip(&sb.leakage) {
                assert_eq!(la.to_bits(), lb.to_bits());
            }
        }
    }
}

/// The aggregate mean must equal a plain sequential loop over trials, so
/// scheduling (parallel or not) cannot affect results.
#[test]
fn experiment_mean_matches_manual_trial_loop() {
    let cfg = base_config();
    let agg = run_experiment(&cfg).expect("experiment");
    let ctx = ExperimentContext::build(&cfg).expect("context");
    for (idx, scheme_agg) in agg.schemes.iter().enumerate() {
        let mut rates = Vec::new();
        let mut leaks = Vec::new();
        for t in 0..cfg.trials {
            let m = run_trial_in_context(&cfg, &ctx, t).expect("trial");
            rates.push(m.per_scheme[idx].sum_rate);
            leaks.push(common::mean_of(&m.per_scheme[idx].leakage));
        }
        assert_relative_eq!(
            scheme_agg.sum_rate.mean,
            common::mean_of(&rates),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            scheme_agg.leakage.mean,
            common::mean_of(&leaks),
            max_relative = 1e-12
        );
    }
}

#[test]
fn single_user_schemes_have_zero_leakage() {
    let mut cfg = base_config();
    cfg.k_users = 1;
    cfg.path_losses = vec![1.0];
    cfg.schemes = vec![Scheme::CsiFeedbackZf, Scheme::CsiFeedbackMmse];
    cfg.b_tot = 0.0;
    cfg.trials = 16;
    let agg = run_experiment(&cfg).expect("experiment");
    for s in &agg.schemes {
        assert_eq!(s.leakage.mean, 0.0);
        assert!(s.sum_rate.mean > 0.0);
    }
}

#[test]
fn config_validation_rejects_bad_scenarios() {
    let expect_key = |cfg: &ScenarioConfig, key: &str| {
        let err = cfg.validate().expect_err("must reject").to_string();
        assert!(err.contains(key), "error {err:?} does not name {key:?}");
    };

    let mut cfg = base_config();
    cfg.n_t = 1;
    expect_key(&cfg, "antennas");

    let mut cfg = base_config();
    cfg.k_users = 9;
    cfg.path_losses = vec![1.0; 9];
    expect_key(&cfg, "antennas");

    let mut cfg = base_config();
    cfg.b_f = 0;
    expect_key(&cfg, "precoder_bits");

    let mut cfg = base_config();
    cfg.path_losses = vec![1.0];
    expect_key(&cfg, "path_loss");

    let mut cfg = base_config();
    cfg.path_losses = vec![1.0, 0.0];
    expect_key(&cfg, "path_loss");

    let mut cfg = base_config();
    cfg.schemes.clear();
    expect_key(&cfg, "schemes");

    let mut cfg = base_config();
    cfg.b_tot = 0.0;
    expect_key(&cfg, "exchange_total_bits");

    let mut cfg = base_config();
    cfg.power_total = 0.0;
    expect_key(&cfg, "power");

    let mut cfg = base_config();
    cfg.subspace_energy = 1.5;
    expect_key(&cfg, "subspace.energy");

    let mut cfg = base_config();
    cfg.channel_model = ChannelModel::OneRing(vec![OneRingGeometry {
        mean_azimuth: 1.0,
        angular_spread: 0.1,
        antenna_count: 8,
        antenna_spacing: 0.5,
        truncation_halfwidth: 0.2,
    }]);
    expect_key(&cfg, "channel.users");
}

/// Perfect exchange, two users: the mean leakage of codeword selection from
/// a 2^B_f isotropic book obeys rho N_t/(N_t-1) 2^{-B_f}.
#[test]
fn infinite_exchange_two_user_leakage_meets_limit() {
    let cfg = ScenarioConfig {
        n_t: 8,
        k_users: 2,
        power_total: 2.0,
        b_f: 8,
        b_tot: 0.0,
        b_c_per_link: Some(f64::INFINITY),
        channel_model: ChannelModel::Iid,
        path_losses: vec![1.0, 1.0],
        schemes: vec![Scheme::PrecoderNaive],
        backend: ExchangeBackend::DirectionRvq,
        selection_rule: SelectionRule::MinLeakage,
        subspace_energy: 0.995,
        eig_floor: 1e-6,
        trials: 10_000,
        master_seed: 2,
    };
    let agg = run_experiment(&cfg).expect("experiment");
    let bound = cfg.rho() * 8.0 / 7.0 * (0.5f64).powi(8);
    let mean = agg.schemes[0].leakage.mean;
    assert!(
        mean <= bound,
        "mean leakage {mean} above perfect-exchange limit {bound}"
    );
    // The limit is tight: the mean must also sit within a few percent.
    assert!(mean > 0.9 * bound, "mean leakage {mean} implausibly low");
}

#[test]
fn toml_defaults_and_field_mapping() {
    let text = r#"
[system]
antennas = 16
users = 2
power = 10.0

[feedback]
precoder_bits = 6
exchange_total_bits = 32.0

[schemes]
set = ["csi-feedback-zf", "precoder-adaptive"]
"#;
    let raw = RawConfig::parse(text).expect("parse");
    let cfg = raw.to_scenario().expect("scenario");
    assert_eq!(cfg.n_t, 16);
    assert_eq!(cfg.k_users, 2);
    assert_eq!(cfg.b_f, 6);
    assert_relative_eq!(cfg.b_tot, 32.0);
    assert_eq!(cfg.trials, 1000);
    assert_eq!(cfg.master_seed, 1);
    assert_eq!(cfg.path_losses, vec![1.0, 1.0]);
    assert_eq!(cfg.channel_model, ChannelModel::Iid);
    assert_eq!(cfg.backend, ExchangeBackend::IdealDr);
    assert_eq!(cfg.selection_rule, SelectionRule::MaxSlnr);
    assert_relative_eq!(cfg.subspace_energy, 0.995);
    assert_eq!(
        cfg.schemes,
        vec![Scheme::CsiFeedbackZf, Scheme::PrecoderAdaptive]
    );
}

#[test]
fn toml_one_ring_geometry_mapping() {
    let text = r#"
[system]
antennas = 60
users = 2
power = 100.0
trials = 50
seed = 9

[feedback]
precoder_bits = 6
exchange_total_bits = 80.0
exchange_bits_per_link = 40.0

[channel]
model = "one-ring"
path_loss = [1.0, 0.25]

[[channel.users]]
azimuth_deg = 73.0
spread_deg = 15.0

[[channel.users]]
azimuth_deg = 73.0
spread_deg = 15.0
spacing = 0.4
truncation_sigmas = 3.0

[schemes]
set = ["precoder-naive"]
selection = "min-leakage"
backend = "ecsq-uniform"

[subspace]
energy = 0.99
eig_floor = 0.01
"#;
    let cfg = RawConfig::parse(text)
        .expect("parse")
        .to_scenario()
        .expect("scenario");
    assert_eq!(cfg.path_losses, vec![1.0, 0.25]);
    assert_eq!(cfg.b_c_per_link, Some(40.0));
    assert_eq!(cfg.backend, ExchangeBackend::EcsqUniform);
    assert_eq!(cfg.selection_rule, SelectionRule::MinLeakage);
    assert_relative_eq!(cfg.subspace_energy, 0.99);
    assert_relative_eq!(cfg.eig_floor, 0.01);
    assert_eq!(cfg.master_seed, 9);
    assert_eq!(cfg.trials, 50);
    match &cfg.channel_model {
        ChannelModel::OneRing(geoms) => {
            assert_eq!(geoms.len(), 2);
            let rad = 73.0f64.to_radians();
            assert_relative_eq!(geoms[0].mean_azimuth, rad, max_relative = 1e-12);
            let spread = 15.0f64.to_radians();
            assert_relative_eq!(geoms[0].angular_spread, spread, max_relative = 1e-12);
            assert_relative_eq!(geoms[0].antenna_spacing, 0.5);
            assert_relative_eq!(
                geoms[0].truncation_halfwidth,
                2.0 * spread,
                max_relative = 1e-12
            );
            assert_relative_eq!(geoms[1].antenna_spacing, 0.4);
            assert_relative_eq!(
                geoms[1].truncation_halfwidth,
                3.0 * spread,
                max_relative = 1e-12
            );
            assert_eq!(geoms[0].antenna_count, 60);
        }
        other => panic!("expected one-ring model, got {other:?}"),
    }
}

#[test]
fn toml_errors_name_the_offending_field() {
    let unknown = r#"
[system]
antennas = 8
users = 2
power = 10.0
mystery_knob = 3

[feedback]
precoder_bits = 4

[schemes]
set = ["csi-feedback-zf"]
"#;
    let err = RawConfig::parse(unknown).expect_err("unknown key").to_string();
    assert!(err.contains("mystery_knob"), "error {err:?}");

    let bad_scheme = r#"
[system]
antennas = 8
users = 2
power = 10.0

[feedback]
precoder_bits = 4

[schemes]
set = ["zero-forcing"]
"#;
    let err = RawConfig::parse(bad_scheme)
        .expect("parse")
        .to_scenario()
        .expect_err("bad scheme")
        .to_string();
    assert!(
        err.contains("zero-forcing") && err.contains("csi-feedback-zf"),
        "error {err:?} should name the bad value and list valid ones"
    );

    let bad_backend = r#"
[system]
antennas = 8
users = 2
power = 10.0

[feedback]
precoder_bits = 4
exchange_total_bits = 8.0

[schemes]
set = ["precoder-naive"]
backend = "lossless"
"#;
    let err = RawConfig::parse(bad_backend)
        .expect("parse")
        .to_scenario()
        .expect_err("bad backend")
        .to_string();
    assert!(err.contains("lossless"), "error {err:?}");
}

#[test]
fn single_trial_gives_degenerate_interval() {
    let mut cfg = base_config();
    cfg.trials = 1;
    let agg = run_experiment(&cfg).expect("experiment");
    let trial = run_trial(&cfg, 0).expect("trial");
    for (idx, s) in agg.schemes.iter().enumerate() {
        assert_eq!(s.sum_rate.mean.to_bits(), trial.per_scheme[idx].sum_rate.to_bits());
        assert_eq!(s.sum_rate.ci_half_width, 0.0);
        assert_eq!(s.leakage.ci_half_width, 0.0);
    }
}

/// Doubling the trial count shrinks the confidence half-width by about
/// 1/sqrt(2).
#[test]
fn confidence_interval_shrinks_with_sqrt_trials() {
    let mut cfg = base_config();
    cfg.schemes = vec![Scheme::CsiFeedbackZf];
    cfg.b_tot = 0.0;
    cfg.trials = 4_000;
    let small = run_experiment(&cfg).expect("experiment");
    cfg.trials = 8_000;
    let large = run_experiment(&cfg).expect("experiment");
    let ratio = large.schemes[0].sum_rate.ci_half_width / small.schemes[0].sum_rate.ci_half_width;
    let target = 1.0 / 2.0f64.sqrt();
    assert!(
        (ratio / target - 1.0).abs() < 0.15,
        "CI shrink ratio {ratio} not near {target}"
    );
}

/// Nulling the reconstructed interferer channel keeps the true SLNR above
/// the closed-form lower bound tied to the bit partition.
#[test]
fn zf_direction_slnr_meets_partition_lower_bound() {
    use coopfb::bitpartition;
    use coopfb::exchange::{self, LinkBases};

    let n_t = 24;
    let spread = 15.0f64.to_radians();
    let geoms: Vec<OneRingGeometry> = [65.0f64, 75.0]
        .iter()
        .map(|&az| OneRingGeometry {
            mean_azimuth: az.to_radians(),
            angular_spread: spread,
            antenna_count: n_t,
            antenna_spacing: 0.5,
            truncation_halfwidth: 2.0 * spread,
        })
        .collect();
    let stats: Vec<_> = geoms
        .iter()
        .map(|g| channel::one_ring_covariance(g).expect("stats"))
        .collect();
    let mut projectors = Vec::new();
    for s in &stats {
        let (basis, _) = channel::dominant_subspace(s, 0.995).expect("subspace");
        projectors.push(basis);
    }
    let bases = LinkBases::build(&stats, &projectors, 1e-2).expect("bases");
    let alpha = 0.1;
    let problem = bitpartition::build_problem(&stats, &bases, alpha, 40.0).expect("problem");
    let solution = bitpartition::solve_partition(&problem).expect("solution");
    let bounds = bitpartition::virtual_slnr_lower_bound(&problem, &solution.bits);

    let trials = 2_000u64;
    let mut slnr_acc = vec![0.0; 2];
    for t in 0..trials {
        let mut hs = SeedStream::for_trial(21, t, StreamPurpose::Channel, 0);
        let h = channel::gen_channel(&stats, &mut hs).expect("channel");
        for k in 0..2 {
            let j = 1 - k;
            let basis = bases.get(j, k).expect("basis");
            let partial =
                exchange::partial_channel(&h.user(j), stats[j].path_loss, &projectors[k])
                    .expect("partial");
            let coeffs = exchange::klt_coefficients(&partial, basis).expect("coefficients");
            let mut ns = SeedStream::for_trial(21, t, StreamPurpose::QuantizerNoise, j);
            let quantized =
                exchange::quantize_ideal_dr(&coeffs, basis, solution.bits[(j, k)], &mut ns)
                    .expect("quantize");
            let recon = exchange::reconstruct_csi(
                &quantized,
                basis,
                stats[j].path_loss,
                solution.bits[(j, k)],
                exchange::QuantizerBackend::IdealDr,
            )
            .expect("reconstruct")
            .reconstructed;
            let own = h.user(k);
            let w = if recon.norm() > 0.0 {
                let v = &recon / C64::new(recon.norm(), 0.0);
                let proj = &own - &v * v.dotc(&own);
                &proj / C64::new(proj.norm(), 0.0)
            } else {
                (&own / C64::new(own.norm(), 0.0)).clone_owned()
            };
            let signal = own.dotc(&w).norm_sqr();
            let leak = h.user(j).dotc(&w).norm_sqr();
            slnr_acc[k] += signal / (alpha + leak);
        }
    }
    for k in 0..2 {
        let mean = slnr_acc[k] / trials as f64;
        assert!(
            mean >= bounds[k],
            "user {k}: Monte Carlo SLNR {mean} below lower bound {}",
            bounds[k]
        );
    }
}

#[test]
fn ecsq_backend_runs_end_to_end() {
    let mut cfg = base_config();
    cfg.backend = ExchangeBackend::EcsqUniform;
    cfg.b_tot = 24.0;
    cfg.schemes = vec![
        Scheme::PrecoderNaive,
        Scheme::PrecoderAdaptive,
        Scheme::CsiFeedbackMmse,
    ];
    cfg.trials = 32;
    let a = run_experiment(&cfg).expect("experiment");
    let b = run_experiment(&cfg).expect("experiment");
    assert_eq!(a.trials_run, 32);
    for (sa, sb) in a.schemes.iter().zip(&b.schemes) {
        assert!(sa.sum_rate.mean.is_finite());
        assert!(sa.leakage.mean >= 0.0 && sa.leakage.mean.is_finite());
        assert_eq!(sa.sum_rate.mean.to_bits(), sb.sum_rate.mean.to_bits());
    }
}
