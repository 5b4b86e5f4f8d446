use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mixed_adc::estimation::{joint_weights, variances, CrossCorrelation, TrainingScheme};
use mixed_adc::experiments::{optimize_power_split, scheme_se, EvalOptions, Scheme};
use mixed_adc::orderstats::chi_m;
use mixed_adc::spectral_efficiency::Detector;
use mixed_adc::sysmodel::{generate_pilots, SystemConfig};
use mixed_adc_ffi::*;

struct Handle(*mut MadConfig);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { mad_config_free(self.0) }
    }
}

fn handle(m: usize, n: usize, k: usize, t: usize, snr_db: f64) -> Handle {
    let mut raw = ptr::null_mut();
    let s = unsafe { mad_config_new(m, n, k, t, 1.0, snr_db, &mut raw) };
    assert_eq!(s, MadStatus::Ok, "{}", last_error());
    assert!(!raw.is_null());
    Handle(raw)
}

fn core_cfg(m: usize, n: usize, k: usize, t: usize, snr_db: f64) -> SystemConfig {
    SystemConfig::builder().antennas(m).highres(n).users(k).coherence(t).sigma_n2(1.0).snr_db(snr_db).build().unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { mad_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(mad_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_dims_round_trip() {
    let h = handle(100, 20, 10, 1000, 0.0);
    let mut dims = [0usize; 5];
    assert_eq!(unsafe { mad_config_dims(h.0, dims.as_mut_ptr()) }, MadStatus::Ok);
    assert_eq!(dims, [100, 20, 10, 1000, 10]);
}

#[test]
fn invalid_config_reports_a_message() {
    let mut raw = ptr::null_mut();
    // 7 does not divide 100
    let s = unsafe { mad_config_new(100, 7, 10, 1000, 1.0, 0.0, &mut raw) };
    assert_eq!(s, MadStatus::InvalidArgument);
    assert!(raw.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { mad_config_new(10, 2, 2, 100, 1.0, 0.0, ptr::null_mut()) }, MadStatus::NullPointer);
    assert_eq!(last_error(), "out_cfg is null");
}

#[test]
fn success_clears_the_last_error() {
    let mut raw = ptr::null_mut();
    unsafe { mad_config_new(0, 0, 0, 0, 1.0, 0.0, &mut raw) };
    assert!(!last_error().is_empty());
    let _h = handle(10, 2, 2, 100, 0.0);
    assert_eq!(last_error(), "");
}

#[test]
fn error_message_truncates_and_reports_length() {
    assert_eq!(unsafe { mad_chi_m(0, 4, 1, ptr::null_mut()) }, MadStatus::NullPointer);
    let full = unsafe { mad_last_error_message(ptr::null_mut(), 0) };
    assert_eq!(full, "value is null".len());
    let mut buf = [1 as c_char; 4];
    let n = unsafe { mad_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "val");
}

#[test]
fn null_handles_are_rejected() {
    let mut v = [0.0; 4];
    let mut e = [0.0; 4];
    let s = unsafe {
        mad_estimation_variances(ptr::null(), MadTraining::JointRr as u32, MadCross::Noiseless as u32, v.as_mut_ptr(), e.as_mut_ptr(), 4)
    };
    assert_eq!(s, MadStatus::NullPointer);
    assert_eq!(last_error(), "config is null");
    unsafe { mad_config_free(ptr::null_mut()) };
}

#[test]
fn short_buffers_and_unknown_codes_are_invalid() {
    let h = handle(16, 4, 4, 100, 0.0);
    let mut v = [0.0; 3];
    let mut e = [0.0; 3];
    let s = unsafe { mad_estimation_variances(h.0, MadTraining::JointRr as u32, MadCross::Noiseless as u32, v.as_mut_ptr(), e.as_mut_ptr(), 3) };
    assert_eq!(s, MadStatus::InvalidArgument);
    assert!(last_error().contains("4 needed"));
    assert_eq!(v, [0.0; 3]);

    let mut v = [0.0; 4];
    let mut e = [0.0; 4];
    let s = unsafe { mad_estimation_variances(h.0, 9, MadCross::Noiseless as u32, v.as_mut_ptr(), e.as_mut_ptr(), 4) };
    assert_eq!(s, MadStatus::InvalidArgument);
    let (mut se, mut sd) = (0.0, 0.0);
    let s = unsafe { mad_scheme_se(h.0, MadScheme::OneBit as u32, 0, 7, 10, 1, &mut se, &mut sd) };
    assert_eq!(s, MadStatus::InvalidArgument);
    assert!(last_error().contains("detector"));
    let s = unsafe { mad_scheme_se(h.0, 42, 0, MadDetector::Mrc as u32, 10, 1, &mut se, &mut sd) };
    assert_eq!(s, MadStatus::InvalidArgument);
}

#[test]
fn variances_match_the_library() {
    let h = handle(100, 20, 10, 1000, -5.0);
    let c = core_cfg(100, 20, 10, 1000, -5.0);
    let pilots = generate_pilots(10, 10).unwrap();
    let cases = [
        (MadTraining::OneBitOnly, TrainingScheme::OneBitOnly),
        (MadTraining::FullResRr, TrainingScheme::FullResRr),
        (MadTraining::JointRr, TrainingScheme::JointRr),
    ];
    let models = [
        (MadCross::Noiseless, CrossCorrelation::Noiseless),
        (MadCross::Exact, CrossCorrelation::Exact),
        (MadCross::Ignored, CrossCorrelation::Ignored),
    ];
    for (ft, t) in cases {
        for (fm, m) in models {
            let mut est = [0.0; 12];
            let mut err = [0.0; 12];
            let s = unsafe { mad_estimation_variances(h.0, ft as u32, fm as u32, est.as_mut_ptr(), err.as_mut_ptr(), 12) };
            assert_eq!(s, MadStatus::Ok);
            let want = variances(t, &c, &pilots, m).unwrap();
            assert_eq!(&est[..10], want.var_est.as_slice());
            assert_eq!(&err[..10], want.var_err.as_slice());
            assert_eq!(&est[10..], &[0.0, 0.0]);
        }
    }

    let (mut wi, mut wo, mut vs) = ([0.0; 10], [0.0; 10], [0.0; 10]);
    let s = unsafe { mad_joint_weights(h.0, MadCross::Exact as u32, wi.as_mut_ptr(), wo.as_mut_ptr(), vs.as_mut_ptr(), 10) };
    assert_eq!(s, MadStatus::Ok);
    let w = joint_weights(&c, &pilots, CrossCorrelation::Exact).unwrap();
    assert_eq!(wi.as_slice(), w.w_inf.as_slice());
    assert_eq!(wo.as_slice(), w.w_one.as_slice());
    assert_eq!(vs.as_slice(), w.varsigma.as_slice());
}

#[test]
fn scheme_se_matches_the_library() {
    let h = handle(32, 8, 4, 200, 0.0);
    let c = core_cfg(32, 8, 4, 200, 0.0);
    let (mut se, mut sd) = (0.0, 0.0);

    let s = unsafe { mad_scheme_se(h.0, MadScheme::JointWithAs as u32, 0, MadDetector::Mrc as u32, 50, 3, &mut se, &mut sd) };
    assert_eq!(s, MadStatus::Ok);
    let want = scheme_se(&c, Scheme::JointWithAs, Detector::Mrc, &EvalOptions { trials: 50, seed: 3, ..EvalOptions::default() }).unwrap();
    assert_eq!(se, want.sum_se);
    assert_eq!(sd, -1.0);

    let s = unsafe { mad_scheme_se(h.0, MadScheme::MultiBit as u32, 3, MadDetector::Zf as u32, 200, 3, &mut se, &mut sd) };
    assert_eq!(s, MadStatus::Ok, "{}", last_error());
    let want = scheme_se(&c, Scheme::MultiBit { bits: 3 }, Detector::Zf, &EvalOptions { trials: 200, seed: 3, ..EvalOptions::default() }).unwrap();
    assert_eq!(se, want.sum_se);
    assert_eq!(sd, want.sum_se_stderr.unwrap());
    assert!(sd > 0.0);
}

#[test]
fn power_split_meets_the_energy_budget() {
    let h = handle(32, 8, 4, 200, 0.0);
    let c = core_cfg(32, 8, 4, 200, 0.0);
    let mut r = MadPowerSplit::default();
    let s = unsafe { mad_optimize_power_split(h.0, 1.0, MadScheme::JointWithAs as u32, 0, MadDetector::Mrc as u32, 20, 1, &mut r) };
    assert_eq!(s, MadStatus::Ok, "{}", last_error());
    let opts = EvalOptions { trials: 20, seed: 1, ..EvalOptions::default() };
    let want = optimize_power_split(&c, 1.0, Scheme::JointWithAs, Detector::Mrc, &opts).unwrap();
    assert_eq!((r.fraction, r.sum_se, r.eta_eff), (want.fraction, want.sum_se, want.eta_eff));
    let total = r.eta_eff as f64 * r.p_t + (200 - r.eta_eff) as f64 * r.p_d;
    assert!((total - 200.0).abs() < 1e-9);

    // applying the optimum through the handle reproduces its SE
    assert_eq!(unsafe { mad_config_set_powers(h.0, r.p_t, r.p_d) }, MadStatus::Ok);
    let (mut se, mut sd) = (0.0, 0.0);
    unsafe { mad_scheme_se(h.0, MadScheme::JointWithAs as u32, 0, MadDetector::Mrc as u32, 20, 1, &mut se, &mut sd) };
    assert!((se - r.sum_se).abs() < 1e-9 * r.sum_se);

    assert_eq!(unsafe { mad_config_set_powers(h.0, -1.0, 1.0) }, MadStatus::InvalidArgument);
}

#[test]
fn scalar_helpers() {
    let mut v = 0.0;
    assert_eq!(unsafe { mad_chi_m(3, 10, 2, &mut v) }, MadStatus::Ok);
    assert_eq!(v, chi_m(3, 10, 2).unwrap());
    assert_eq!(unsafe { mad_chi_m(11, 10, 2, &mut v) }, MadStatus::InvalidArgument);

    assert_eq!(unsafe { mad_aqnm_alpha(1, &mut v) }, MadStatus::Ok);
    assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-12);
    assert_eq!(unsafe { mad_aqnm_alpha(3, &mut v) }, MadStatus::Ok);
    assert!((v - 0.965452).abs() < 1e-6);

    // exponential CDF
    assert_eq!(unsafe { mad_gamma_cdf(2.0, 1.0, 1.0, &mut v) }, MadStatus::Ok);
    assert!((v - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
    assert_eq!(unsafe { mad_gamma_cdf(1.0, -1.0, 1.0, &mut v) }, MadStatus::InvalidArgument);
}

#[test]
fn config_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sys.toml");
    std::fs::write(&path, "M = 64\nN = 16\nK = 4\nT = 500\nsnr_db = 5.0\n").unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut raw = ptr::null_mut();
    assert_eq!(unsafe { mad_config_from_file(cpath.as_ptr(), &mut raw) }, MadStatus::Ok, "{}", last_error());
    let h = Handle(raw);
    let mut dims = [0usize; 5];
    unsafe { mad_config_dims(h.0, dims.as_mut_ptr()) };
    assert_eq!(dims, [64, 16, 4, 500, 4]);

    let missing = CString::new(dir.path().join("none.toml").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { mad_config_from_file(missing.as_ptr(), &mut raw) }, MadStatus::Io);
    std::fs::write(&path, "M = 64\nbogus = 1\n").unwrap();
    assert_eq!(unsafe { mad_config_from_file(cpath.as_ptr(), &mut raw) }, MadStatus::InvalidArgument);
    assert_eq!(unsafe { mad_config_from_file(ptr::null(), &mut raw) }, MadStatus::NullPointer);
}

fn header() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mixed_adc.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    assert!(text.contains("#ifndef MIXED_ADC_H"));
    assert!(text.contains("typedef struct MadConfig MadConfig;"));
    for name in [
        "mad_last_error_message",
        "mad_version",
        "mad_config_new",
        "mad_config_from_file",
        "mad_config_free",
        "mad_config_set_powers",
        "mad_config_dims",
        "mad_estimation_variances",
        "mad_joint_weights",
        "mad_scheme_se",
        "mad_optimize_power_split",
        "mad_chi_m",
        "mad_aqnm_alpha",
        "mad_gamma_cdf",
    ] {
        assert!(text.contains(&format!("{name}(")), "{name}");
    }
    for variant in ["MAD_STATUS_OK = 0", "MAD_STATUS_PANIC = 5", "MAD_SCHEME_MULTI_BIT = 6", "MAD_DETECTOR_ZF = 1"] {
        assert!(text.contains(variant), "{variant}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"mixed_adc.h\"\nint main(void) { MadConfig *c = 0; enum MadStatus s = mad_config_new(10, 2, 2, 100, 1.0, 0.0, &c); mad_config_free(c); return (int)s; }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
