//! End-to-end acceptance gate. Each test checks one headline property of
//! the system (quantization laws, leakage bounds, bit-partition optimality,
//! scheme ordering, distortion-rate targets, precoder equivalence) and
//! prints a single pass/fail line with the measured numbers.

mod common;

use coopfb::analysis::{
    beta_min_mean, csi_feedback_bounds, phi_n_exact, thm2_two_user_bound, thm4_k_user,
    BoundInputs,
};
use coopfb::bitpartition::{self, PartitionProblem};
use coopfb::channel::{self, OneRingGeometry};
use coopfb::codebooks;
use coopfb::exchange::{self, EcsqQuantizer, KltBasis, LinkBases};
use coopfb::precoding;
use coopfb::rng::{SeedStream, StreamPurpose};
use coopfb::sim::{
    run_experiment, ChannelModel, ExchangeBackend, Scheme, ScenarioConfig, SelectionRule,
};
use coopfb::{C64, CMatrix, CVector};
use nalgebra::DMatrix;
use rand::Rng;

fn report(number: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {number:02} ({name}): {}; {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number:02} ({name}) failed: {detail}");
}

#[test]
fn criterion_01_rvq_error_law() {
    let n_t = 8;
    let bits = 10;
    let trials = 10_000u64;
    let mut acc = 0.0;
    for t in 0..trials {
        let mut cs = SeedStream::for_trial(101, t, StreamPurpose::CsiCodebook, 0);
        let cb = codebooks::build_rvq(n_t, bits, &mut cs).expect("codebook");
        let mut hs = SeedStream::for_trial(101, t, StreamPurpose::Channel, 0);
        let h = coopfb::linalg::standard_complex_gaussian(n_t, &mut hs);
        acc += codebooks::quantize_direction(&h, &cb).expect("quantize").error_z;
    }
    let mean = acc / trials as f64;
    let upper = (-(f64::from(bits)) / 7.0).exp2();
    let lower = 7.0 / 8.0 * upper;
    report(
        1,
        "rvq error law",
        mean > lower && mean < upper,
        &format!("sample E{{Z}} = {mean:.6} inside ({lower:.6}, {upper:.6})"),
    );
}

#[test]
fn criterion_02_beta_min_mean() {
    let n_t = 8;
    let bits = 8;
    let trials = 5_000u64;
    let mut acc = 0.0;
    for t in 0..trials {
        let mut cs = SeedStream::for_trial(102, t, StreamPurpose::CsiCodebook, 0);
        let cb = codebooks::build_rvq(n_t, bits, &mut cs).expect("codebook");
        let mut hs = SeedStream::for_trial(102, t, StreamPurpose::Channel, 0);
        let h = coopfb::linalg::standard_complex_gaussian(n_t, &mut hs);
        let g = &h / C64::new(h.norm(), 0.0);
        let corr = cb.correlations(&g);
        acc += (0..cb.size())
            .map(|i| corr[i].norm_sqr())
            .fold(f64::INFINITY, f64::min);
    }
    let mean = acc / trials as f64;
    let target = beta_min_mean(n_t, f64::from(bits));
    let rel = (mean / target - 1.0).abs();
    report(
        2,
        "beta-min mean",
        rel < 0.03,
        &format!("sample mean {mean:.3e} vs 1/(1+7*256) = {target:.3e}, rel err {rel:.4}"),
    );
}

#[test]
fn criterion_03_two_user_bound_containment() {
    let cfg = ScenarioConfig {
        n_t: 16,
        k_users: 2,
        power_total: 2.0,
        b_f: 6,
        b_tot: 0.0,
        b_c_per_link: Some(16.0),
        channel_model: ChannelModel::Iid,
        path_losses: vec![1.0, 1.0],
        schemes: vec![Scheme::PrecoderNaive],
        backend: ExchangeBackend::DirectionRvq,
        selection_rule: SelectionRule::MinLeakage,
        subspace_energy: 0.995,
        eig_floor: 1e-6,
        trials: 10_000,
        master_seed: 103,
    };
    let agg = run_experiment(&cfg).expect("experiment");
    let mean = agg.schemes[0].leakage.mean;
    let bound = thm2_two_user_bound(&BoundInputs {
        n_t: 16,
        k_users: 2,
        b_f: 6.0,
        b_c: 16.0,
        rho: 1.0,
    })
    .expect("bound");
    let ratio = mean / bound;
    report(
        3,
        "two-user leakage bound",
        mean <= bound && mean >= 0.25 * bound,
        &format!("MC mean {mean:.5} vs bound {bound:.5} (ratio {ratio:.4})"),
    );
}

#[test]
fn criterion_04_csi_feedback_bracket() {
    let cfg = ScenarioConfig {
        n_t: 8,
        k_users: 2,
        power_total: 2.0,
        b_f: 10,
        b_tot: 0.0,
        b_c_per_link: None,
        channel_model: ChannelModel::Iid,
        path_losses: vec![1.0, 1.0],
        schemes: vec![Scheme::CsiFeedbackZf],
        backend: ExchangeBackend::IdealDr,
        selection_rule: SelectionRule::MaxSlnr,
        subspace_energy: 0.995,
        eig_floor: 1e-6,
        trials: 10_000,
        master_seed: 104,
    };
    let agg = run_experiment(&cfg).expect("experiment");
    let mean = agg.schemes[0].leakage.mean;
    let (lo, hi) = csi_feedback_bounds(&BoundInputs {
        n_t: 8,
        k_users: 2,
        b_f: 10.0,
        b_c: 0.0,
        rho: 1.0,
    })
    .expect("bounds");
    report(
        4,
        "quantize-and-zero-force bracket",
        mean > 0.98 * lo && mean < 1.02 * hi,
        &format!("MC mean {mean:.5} inside 2%-padded bracket ({lo:.5}, {hi:.5})"),
    );
}

#[test]
fn criterion_05_extreme_value_law() {
    let n_t = 128;
    let n_codewords = 1024.0;
    let trials = 1000u64;
    let phi = phi_n_exact(2, n_codewords).expect("phi");
    let mut samples: Vec<f64> = (0..trials)
        .map(|t| {
            let mut hs = SeedStream::for_trial(105, t, StreamPurpose::Channel, 0);
            let h = coopfb::linalg::standard_complex_gaussian(n_t, &mut hs);
            let hd = &h / C64::new(h.norm(), 0.0);
            let mut cs = SeedStream::for_trial(105, t, StreamPurpose::PrecoderCodebook, 0);
            let cb = codebooks::build_rvq(n_t, 10, &mut cs).expect("codebook");
            let corr = cb.correlations(&hd);
            let min = (0..cb.size())
                .map(|i| corr[i].norm_sqr())
                .fold(f64::INFINITY, f64::min);
            n_t as f64 * min / phi
        })
        .collect();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks = common::ks_statistic(&samples, |y| 1.0 - (-y).exp());
    report(
        5,
        "extreme-value minimum law",
        ks < 0.05,
        &format!("KS distance {ks:.4} < 0.05 against 1 - exp(-y)"),
    );
}

#[test]
fn criterion_06_k_user_leakage_approximation() {
    let cfg = ScenarioConfig {
        n_t: 64,
        k_users: 3,
        power_total: 3.0,
        b_f: 8,
        b_tot: 0.0,
        b_c_per_link: Some(40.0),
        channel_model: ChannelModel::Iid,
        path_losses: vec![1.0; 3],
        schemes: vec![Scheme::PrecoderNaive],
        backend: ExchangeBackend::DirectionRvq,
        selection_rule: SelectionRule::MinLeakage,
        subspace_energy: 0.995,
        eig_floor: 1e-6,
        trials: 5_000,
        master_seed: 106,
    };
    let agg = run_experiment(&cfg).expect("experiment");
    let mean = agg.schemes[0].leakage.mean;
    let approx = thm4_k_user(
        &BoundInputs {
            n_t: 64,
            k_users: 3,
            b_f: 8.0,
            b_c: 40.0,
            rho: 1.0,
        },
        true,
    )
    .expect("approx");
    let rel = (mean / approx - 1.0).abs();
    report(
        6,
        "three-user leakage approximation",
        rel < 0.25,
        &format!("MC mean {mean:.4} vs approximation {approx:.4}, rel err {rel:.4}"),
    );
}

fn table_geometry(n_t: usize) -> OneRingGeometry {
    let spread = 15.0f64.to_radians();
    OneRingGeometry {
        mean_azimuth: 73.0f64.to_radians(),
        angular_spread: spread,
        antenna_count: n_t,
        antenna_spacing: 0.5,
        truncation_halfwidth: 2.0 * spread,
    }
}

#[test]
fn criterion_07_bit_partition_table() {
    let n_t = 60;
    let budget = 80.0;
    let alpha = 2.0 / 100.0;
    let base = channel::one_ring_covariance(&table_geometry(n_t)).expect("covariance");
    let targets: [(f64, i64, i64); 6] = [
        (0.0, 40, 40),
        (5.0, 49, 31),
        (10.0, 58, 22),
        (15.0, 67, 13),
        (20.0, 76, 4),
        (25.0, 80, 0),
    ];
    let mut rows = Vec::new();
    let mut pass = true;
    for &(blockage_db, t1, t2) in &targets {
        let l2 = 10f64.powf(-blockage_db / 10.0);
        let stats = vec![
            base.with_path_loss(1.0).expect("stats"),
            base.with_path_loss(l2).expect("stats"),
        ];
        let mut projectors = Vec::new();
        for s in &stats {
            let (basis, _) = channel::dominant_subspace(s, 0.995).expect("subspace");
            projectors.push(basis);
        }
        let bases = LinkBases::build(&stats, &projectors, 1e-2).expect("bases");
        let problem = bitpartition::build_problem(&stats, &bases, alpha, budget).expect("problem");
        let solution = bitpartition::solve_partition(&problem).expect("solution");
        let b1 = solution.bits[(0, 1)].round() as i64;
        let b2 = budget as i64 - b1;
        rows.push(format!("{blockage_db:.0}dB->({b1},{b2})"));
        let within = (b1 - t1).abs() <= 3 && (b2 - t2).abs() <= 3;
        let exact_ok = if blockage_db == 0.0 || blockage_db == 25.0 {
            b1 == t1 && b2 == t2
        } else {
            true
        };
        pass &= within && exact_ok;
    }
    report(
        7,
        "bit-partition blockage table",
        pass,
        &format!(
            "rounded splits {} vs (40,40),(49,31),(58,22),(67,13),(76,4),(80,0) within 3",
            rows.join(" ")
        ),
    );
}

#[test]
fn criterion_08_scheme_ordering() {
    let n_t = 60;
    let spread = 15.0f64.to_radians();
    let geoms = vec![
        OneRingGeometry {
            mean_azimuth: 65.0f64.to_radians(),
            angular_spread: spread,
            antenna_count: n_t,
            antenna_spacing: 0.5,
            truncation_halfwidth: 2.0 * spread,
        },
        OneRingGeometry {
            mean_azimuth: 75.0f64.to_radians(),
            angular_spread: spread,
            antenna_count: n_t,
            antenna_spacing: 0.5,
            truncation_halfwidth: 2.0 * spread,
        },
    ];
    let powers_db = [0.0, 10.0, 20.0, 30.0];
    let mut last = [f64::NEG_INFINITY; 3];
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, &p_db) in powers_db.iter().enumerate() {
        let cfg = ScenarioConfig {
            n_t,
            k_users: 2,
            power_total: 10f64.powf(p_db / 10.0),
            b_f: 6,
            b_tot: 80.0,
            b_c_per_link: None,
            channel_model: ChannelModel::OneRing(geoms.clone()),
            path_losses: vec![1.0, 1.0],
            schemes: vec![
                Scheme::CsiFeedbackZf,
                Scheme::PrecoderNaive,
                Scheme::PrecoderAdaptive,
            ],
            backend: ExchangeBackend::EcsqUniform,
            selection_rule: SelectionRule::MaxSlnr,
            subspace_energy: 0.995,
            eig_floor: 1e-2,
            trials: 5_000,
            master_seed: 108 + i as u64,
        };
        let agg = run_experiment(&cfg).expect("experiment");
        let csi = agg.schemes[0].sum_rate;
        let naive = agg.schemes[1].sum_rate;
        let adaptive = agg.schemes[2].sum_rate;
        detail.push(format!(
            "P={p_db:.0}dB: adaptive {:.2} naive {:.2} csi {:.2}",
            adaptive.mean, naive.mean, csi.mean
        ));
        pass &= adaptive.mean > naive.mean && naive.mean > csi.mean;
        if p_db >= 10.0 {
            pass &= adaptive.mean - adaptive.ci_half_width > naive.mean + naive.ci_half_width;
            pass &= naive.mean - naive.ci_half_width > csi.mean + csi.ci_half_width;
        }
        for (slot, rate) in [adaptive.mean, naive.mean, csi.mean].into_iter().enumerate() {
            pass &= rate > last[slot];
            last[slot] = rate;
        }
    }
    report(
        8,
        "scheme ordering over power",
        pass,
        &detail.join("; "),
    );
}

#[test]
fn criterion_09_partition_optimality() {
    let mut worst_gap: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut pass = true;
    for instance in 0..20u64 {
        let mut rng = SeedStream::for_trial(109, instance, StreamPurpose::Aux, 0);
        let k = 2 + (instance % 3) as usize;
        let mut weights = DMatrix::zeros(k, k);
        let mut dims = DMatrix::from_element(k, k, 0usize);
        for j in 0..k {
            for r in 0..k {
                if j != r {
                    weights[(j, r)] = 0.05 + 3.0 * rng.gen::<f64>();
                    dims[(j, r)] = rng.gen_range(1..=4);
                }
            }
        }
        let problem = PartitionProblem {
            weights,
            dims,
            alpha: 0.01 + rng.gen::<f64>(),
            total_bits: 10.0 + 50.0 * rng.gen::<f64>(),
            signal_terms: vec![1.0; k],
        };
        let solution = bitpartition::solve_partition(&problem).expect("solution");
        let (_, oracle_obj) = common::projected_gradient_partition(
            &problem.weights,
            &problem.dims,
            problem.alpha,
            problem.total_bits,
            40_000,
        );
        let gap = (solution.objective - oracle_obj).abs();
        let sum_err = (solution.bits.sum() - problem.total_bits).abs();
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(solution.kkt_residual);
        worst_sum = worst_sum.max(sum_err);
        pass &= gap <= 1e-6 && solution.kkt_residual <= 1e-8 && sum_err <= 1e-6;
    }
    report(
        9,
        "bit-partition optimality",
        pass,
        &format!(
            "20 instances: worst oracle gap {worst_gap:.2e}, worst KKT residual {worst_kkt:.2e}, \
             worst budget error {worst_sum:.2e}"
        ),
    );
}

fn draw_coefficients(basis: &KltBasis, stream: &mut SeedStream) -> CVector {
    let m = basis.effective_dim();
    let z = coopfb::linalg::standard_complex_gaussian(m, stream);
    CVector::from_fn(m, |i, _| z[i] * C64::new(basis.eigenvalues[i].sqrt(), 0.0))
}

#[test]
fn criterion_10_distortion_rate_achievability() {
    let base = channel::one_ring_covariance(&table_geometry(60)).expect("covariance");
    let (projector, _) = channel::dominant_subspace(&base, 0.995).expect("subspace");
    let basis = exchange::klt_basis(&base, &projector, 1e-2).expect("basis");
    let trials = 100_000u64;
    let mut pass = true;
    let mut details = Vec::new();
    for &budget in &[8.0f64, 16.0, 32.0] {
        let target = exchange::distortion_rate(&basis.eigenvalues, budget).expect("target");
        let (_, m_star) =
            exchange::per_element_distortion(&basis.eigenvalues, budget).expect("alloc");
        let relaxed = exchange::distortion_rate(
            &basis.eigenvalues,
            budget - 0.5 * m_star as f64,
        )
        .expect("relaxed");
        let ecsq = EcsqQuantizer::design(&basis.eigenvalues, budget).expect("design");
        let mut ideal_acc = 0.0;
        let mut ecsq_acc = 0.0;
        for t in 0..trials {
            let mut qs =
                SeedStream::for_trial(110 + budget as u64, t, StreamPurpose::Channel, 0);
            let q = draw_coefficients(&basis, &mut qs);
            let mut ns =
                SeedStream::for_trial(110 + budget as u64, t, StreamPurpose::QuantizerNoise, 0);
            let ideal = exchange::quantize_ideal_dr(&q, &basis, budget, &mut ns).expect("ideal");
            ideal_acc += (&q - &ideal).norm_squared();
            let (dequant, _) = ecsq.quantize(&q).expect("ecsq");
            ecsq_acc += (&q - &dequant).norm_squared();
        }
        let ideal_mean = ideal_acc / trials as f64;
        let ecsq_mean = ecsq_acc / trials as f64;
        let ideal_rel = (ideal_mean / target - 1.0).abs();
        let ideal_ok = ideal_rel < 0.02;
        let ecsq_ok = ecsq_mean <= relaxed;
        details.push(format!(
            "b={budget}: ideal {ideal_mean:.3} vs D(b) {target:.3} (rel {ideal_rel:.4}), \
             ecsq {ecsq_mean:.3} <= D(b - {m_star}/2) {relaxed:.3}"
        ));
        pass &= ideal_ok && ecsq_ok;
    }
    report(
        10,
        "distortion-rate achievability",
        pass,
        &details.join("; "),
    );
}

#[test]
fn criterion_11_mmse_slnr_collinearity() {
    let mut worst: f64 = 1.0;
    for instance in 0..100u64 {
        let mut rng = SeedStream::for_trial(111, instance, StreamPurpose::Channel, 0);
        let k = 2 + (instance % 3) as usize;
        let n_t = k + 2 + (instance % 7) as usize;
        let mut global = CMatrix::zeros(n_t, k);
        for user in 0..k {
            let h = coopfb::linalg::standard_complex_gaussian(n_t, &mut rng);
            global.set_column(user, &h);
        }
        let alpha = 0.01 + rng.gen::<f64>();
        let user = (instance % k as u64) as usize;
        let w_mmse = precoding::mmse_precoder(&global, user, alpha).expect("mmse");
        let own = global.column(user).clone_owned();
        let interferers: Vec<CVector> = (0..k)
            .filter(|&j| j != user)
            .map(|j| global.column(j).clone_owned())
            .collect();
        let w_slnr = precoding::slnr_continuous(&own, &interferers, alpha).expect("slnr");
        worst = worst.min(w_mmse.dotc(&w_slnr).norm());
    }
    report(
        11,
        "mmse/slnr collinearity",
        worst >= 1.0 - 1e-8,
        &format!("worst |<w_mmse, w_slnr>| = {worst:.12} over 100 instances"),
    );
}
