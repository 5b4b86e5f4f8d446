use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixed_adc::estimation::{joint_variances, CrossCorrelation, TrainingScheme};
use mixed_adc::linalg::{cholesky_lower, cscg_matrix, CMatrix};
use mixed_adc::montecarlo::TrialPlan;
use mixed_adc::orderstats::{chi_m, order_stats_mc};
use mixed_adc::quantization::{one_bit_quantize_matrix, BussgangModel};
use mixed_adc::spectral_efficiency::{
    se_uniform_zf, sqinr_empirical, CsiModel, Detector, Placement, SelectionMode, SqinrSpec,
};
use mixed_adc::sysmodel::{draw_channel, generate_pilots, SystemConfig};

fn cfg(m: usize, n: usize, k: usize, snr_db: f64) -> SystemConfig {
    SystemConfig::builder()
        .antennas(m)
        .highres(n)
        .users(k)
        .pilot_len(k)
        .coherence(1000)
        .snr_db(snr_db)
        .build()
        .unwrap()
}

#[test]
fn empirical_bussgang_gain() {
    let v = [Complex64::new(1.2, 0.0), Complex64::new(0.5, 0.5), Complex64::new(0.0, -0.3)];
    let ridge = [0.3, 0.6, 0.2];
    let cx = CMatrix::from_fn(3, 3, |r, c| v[r] * v[c].conj() + if r == c { Complex64::new(ridge[r], 0.0) } else { Complex64::new(0.0, 0.0) });
    let l = cholesky_lower(&cx).unwrap();
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = &l * cscg_matrix(&mut rng, 3, n, 1.0);
    let y = one_bit_quantize_matrix(&x);
    let cross = &y * x.adjoint() / Complex64::new(n as f64, 0.0);
    let model = BussgangModel::new(&cx).unwrap();
    for r in 0..3 {
        for c in 0..3 {
            let want = cx[(r, c)] * model.gain[r];
            let scale = (cx[(r, r)].re * cx[(c, c)].re).sqrt() * model.gain[r];
            assert!((cross[(r, c)] - want).norm() < 0.01 * scale, "({r},{c}): {} vs {want}", cross[(r, c)]);
        }
    }
}

#[test]
fn order_statistics_sweep_against_sampling() {
    let plan = TrialPlan::new(99, 100_000);
    for m in [2usize, 8, 32] {
        for k in [1usize, 2, 10] {
            let (mean, se) = order_stats_mc(m, k, 1.0, &plan).unwrap();
            for i in [1, m / 2 + 1, m] {
                let q = chi_m(i, m, k).unwrap();
                assert!((mean[i - 1] - q).abs() < 3.0 * se[i - 1], "M={m} K={k} m={i}: {} vs {q}", mean[i - 1]);
            }
        }
    }
}

#[test]
fn sqinr_terms_are_consistent() {
    let c = cfg(32, 8, 4, 5.0);
    let pilots = generate_pilots(4, 4).unwrap();
    let s = joint_variances(&c, &pilots, CrossCorrelation::Noiseless).unwrap().sigma_hhat2[0];
    let csis = [
        CsiModel::Perfect,
        CsiModel::Gaussian { row_var: vec![s; 32] },
        CsiModel::Simulated { scheme: TrainingScheme::JointRr, cross: CrossCorrelation::Noiseless },
    ];
    for det in [Detector::Mrc, Detector::Zf] {
        for csi in &csis {
            for placement in [Placement::Fixed, Placement::Random, Placement::Select(SelectionMode::Subarray)] {
                let spec = SqinrSpec::new(det, placement, csi.clone(), 16);
                let r = sqinr_empirical(&c, &spec, &TrialPlan::new(1, 400)).unwrap();
                for t in r.terms.unwrap() {
                    assert!(t.gain_power >= 0.0 && t.interference >= 0.0 && t.noise >= 0.0 && t.quantization >= 0.0);
                    assert!(t.gain_re * t.gain_re + t.gain_im * t.gain_im <= t.gain_power * (1.0 + 1e-12));
                    assert!(t.interference >= t.gain_power * (1.0 - 1e-12));
                }
                assert!(r.sum_se_stderr.unwrap() > 0.0);
            }
        }
    }
}

#[test]
fn zf_unbiased_with_perfect_csi() {
    let c = cfg(16, 4, 4, 0.0);
    let spec = SqinrSpec::new(Detector::Zf, Placement::Fixed, CsiModel::Perfect, 4);
    let r = sqinr_empirical(&c, &spec, &TrialPlan::new(2, 200)).unwrap();
    for t in r.terms.unwrap() {
        assert!((t.gain_re - 1.0).abs() < 1e-10 && t.gain_im.abs() < 1e-10);
    }
}

#[test]
fn exact_distortion_close_to_hardened() {
    let c = cfg(100, 20, 10, 0.0);
    let s = joint_variances(&c, &generate_pilots(10, 10).unwrap(), CrossCorrelation::Noiseless).unwrap().sigma_hhat2[0];
    let mut spec = SqinrSpec::new(Detector::Mrc, Placement::Fixed, CsiModel::Gaussian { row_var: vec![s; 100] }, 50);
    let plan = TrialPlan::new(4, 200);
    let hardened = sqinr_empirical(&c, &spec, &plan).unwrap().sum_se;
    spec.exact_cqd = true;
    let exact = sqinr_empirical(&c, &spec, &plan).unwrap().sum_se;
    assert!((exact - hardened).abs() < 0.05 * hardened, "{exact} vs {hardened}");
}

#[test]
fn simulation_is_schedule_invariant() {
    let c = cfg(32, 8, 4, 0.0);
    let spec = SqinrSpec::new(
        Detector::Zf,
        Placement::Select(SelectionMode::Global),
        CsiModel::Simulated { scheme: TrainingScheme::JointRr, cross: CrossCorrelation::Noiseless },
        16,
    );
    let one = sqinr_empirical(&c, &spec, &TrialPlan::new(5, 700).with_workers(1)).unwrap();
    let many = sqinr_empirical(&c, &spec, &TrialPlan::new(5, 700).with_workers(3)).unwrap();
    assert_eq!(one.sum_se.to_bits(), many.sum_se.to_bits());
    assert_eq!(one.sum_se_stderr.unwrap().to_bits(), many.sum_se_stderr.unwrap().to_bits());
    let u1 = se_uniform_zf(&c, 3, &TrialPlan::new(5, 300).with_workers(1)).unwrap();
    let u3 = se_uniform_zf(&c, 3, &TrialPlan::new(5, 300).with_workers(3)).unwrap();
    assert_eq!(u1.sum_se.to_bits(), u3.sum_se.to_bits());
}

/// Row powers `p sum_k |h_mk|^2 + sigma^2` of one draw relative to `Kp + sigma^2`.
fn relative_row_powers(c: &SystemConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ch = draw_channel(c, rng);
    let target = c.users as f64 * c.p + c.sigma_n2;
    (0..c.antennas)
        .map(|m| (c.p * ch.h.row(m).iter().map(|z| z.norm_sqr()).sum::<f64>() + c.sigma_n2) / target)
        .collect()
}

#[test]
fn channel_hardening_holds_for_the_ensemble_covariance() {
    // diag{C_r} estimated from 1000 draws, in 10 independent batches
    let c = cfg(100, 20, 10, 0.0);
    let mut within = 0usize;
    for batch in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + batch);
        let mut acc = vec![0.0; c.antennas];
        for _ in 0..1000 {
            for (a, v) in acc.iter_mut().zip(relative_row_powers(&c, &mut rng)) {
                *a += v / 1000.0;
            }
        }
        within += acc.iter().filter(|a| (*a - 1.0).abs() <= 0.05).count();
    }
    let frac = within as f64 / (10 * c.antennas) as f64;
    assert!(frac >= 0.95, "{frac}");
}

#[test]
fn single_draw_rows_do_not_harden_at_ten_users() {
    // per-draw row power is Gamma(K)/K-distributed around the mean, CV 1/sqrt(K)
    let c = cfg(100, 20, 10, 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut within = 0usize;
    let draws = 200;
    for _ in 0..draws {
        within += relative_row_powers(&c, &mut rng).iter().filter(|v| (*v - 1.0).abs() <= 0.05).count();
    }
    let frac = within as f64 / (draws * c.antennas) as f64;
    assert!(frac < 0.2, "{frac}");
}
