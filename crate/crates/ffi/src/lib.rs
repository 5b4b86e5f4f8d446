//! C ABI over the mixed-ADC toolkit.
//!
//! Every function returns a [`MadStatus`]; on failure the message is kept
//! per thread and can be read with [`mad_last_error_message`]. Results are
//! written through caller-provided pointers. Panics never cross the
//! boundary; they surface as [`MadStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mixed_adc::estimation::{joint_weights, variances, CrossCorrelation, TrainingScheme};
use mixed_adc::experiments::{optimize_power_split, scheme_se, EvalOptions, Scheme};
use mixed_adc::orderstats::{chi_m, gamma_cdf};
use mixed_adc::quantization::aqnm_alpha;
use mixed_adc::spectral_efficiency::Detector;
use mixed_adc::sysmodel::{generate_pilots, SystemConfig};
use mixed_adc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MadStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericFailure = 2,
    Io = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MadTraining {
    OneBitOnly = 0,
    FullResRr = 1,
    JointRr = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MadCross {
    Noiseless = 0,
    Exact = 1,
    Ignored = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MadScheme {
    JointWithAs = 0,
    JointSubarrayAs = 1,
    JointWithoutAs = 2,
    NotJointWithoutAs = 3,
    OneBit = 4,
    NonRoundRobin = 5,
    /// Uses the `bits` argument.
    MultiBit = 6,
    FullRes = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MadDetector {
    Mrc = 0,
    Zf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MadPowerSplit {
    pub fraction: f64,
    pub p_t: f64,
    pub p_d: f64,
    pub eta_eff: usize,
    pub sum_se: f64,
}

/// Opaque system configuration.
pub struct MadConfig {
    inner: SystemConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(MadStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::Parse(_) => MadStatus::InvalidArgument,
            Error::NumericFailure(_) => MadStatus::NumericFailure,
            Error::Io { .. } => MadStatus::Io,
            Error::Trial { source, .. } => match **source {
                Error::InvalidArgument(_) => MadStatus::InvalidArgument,
                _ => MadStatus::NumericFailure,
            },
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(MadStatus::NullPointer, format!("{name} is null"))
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure(MadStatus::InvalidArgument, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MadStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MadStatus::Panic
        }
    }
}

unsafe fn config<'a>(cfg: *const MadConfig) -> Result<&'a SystemConfig, Failure> {
    cfg.as_ref().map(|c| &c.inner).ok_or_else(|| null("config"))
}

unsafe fn out<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(name))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, need: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    if len < need {
        return Err(bad(format!("{name} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, need))
}

fn training(t: u32) -> Result<TrainingScheme, Failure> {
    Ok(match t {
        x if x == MadTraining::OneBitOnly as u32 => TrainingScheme::OneBitOnly,
        x if x == MadTraining::FullResRr as u32 => TrainingScheme::FullResRr,
        x if x == MadTraining::JointRr as u32 => TrainingScheme::JointRr,
        _ => return Err(bad(format!("unknown training scheme {t}"))),
    })
}

fn cross(c: u32) -> Result<CrossCorrelation, Failure> {
    Ok(match c {
        x if x == MadCross::Noiseless as u32 => CrossCorrelation::Noiseless,
        x if x == MadCross::Exact as u32 => CrossCorrelation::Exact,
        x if x == MadCross::Ignored as u32 => CrossCorrelation::Ignored,
        _ => return Err(bad(format!("unknown correlation model {c}"))),
    })
}

fn scheme(s: u32, bits: u32) -> Result<Scheme, Failure> {
    const ALL: [(MadScheme, Scheme); 7] = [
        (MadScheme::JointWithAs, Scheme::JointWithAs),
        (MadScheme::JointSubarrayAs, Scheme::JointSubarrayAs),
        (MadScheme::JointWithoutAs, Scheme::JointWithoutAs),
        (MadScheme::NotJointWithoutAs, Scheme::NotJointWithoutAs),
        (MadScheme::OneBit, Scheme::OneBit),
        (MadScheme::NonRoundRobin, Scheme::NonRoundRobin),
        (MadScheme::FullRes, Scheme::FullRes),
    ];
    if s == MadScheme::MultiBit as u32 {
        return Ok(Scheme::MultiBit { bits });
    }
    ALL.iter().find(|(k, _)| *k as u32 == s).map(|(_, v)| *v).ok_or_else(|| bad(format!("unknown scheme {s}")))
}

fn detector(d: u32) -> Result<Detector, Failure> {
    match d {
        x if x == MadDetector::Mrc as u32 => Ok(Detector::Mrc),
        x if x == MadDetector::Zf as u32 => Ok(Detector::Zf),
        _ => Err(bad(format!("unknown detector {d}"))),
    }
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `len`) into `buf` and returns its full length in bytes.
/// Passing a null `buf` only queries the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mad_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a configuration with unit path loss, `eta = users`, statistics-aware
/// power control and `p = p_t = p_d` set from `snr_db`.
///
/// # Safety
/// `out_cfg` must be valid for writes. Free the result with [`mad_config_free`].
#[no_mangle]
pub unsafe extern "C" fn mad_config_new(
    antennas: usize,
    highres: usize,
    users: usize,
    coherence: usize,
    sigma_n2: f64,
    snr_db: f64,
    out_cfg: *mut *mut MadConfig,
) -> MadStatus {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        let inner = SystemConfig::builder()
            .antennas(antennas)
            .highres(highres)
            .users(users)
            .coherence(coherence)
            .sigma_n2(sigma_n2)
            .snr_db(snr_db)
            .build()?;
        *slot = Box::into_raw(Box::new(MadConfig { inner }));
        Ok(())
    })
}

/// Loads a configuration from a TOML or JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_cfg` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mad_config_from_file(path: *const c_char, out_cfg: *mut *mut MadConfig) -> MadStatus {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| bad("path is not UTF-8"))?;
        let inner = SystemConfig::from_file(path)?;
        *slot = Box::into_raw(Box::new(MadConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mad_config_free(cfg: *mut MadConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets the training and data powers.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mad_config_set_powers(cfg: *mut MadConfig, p_t: f64, p_d: f64) -> MadStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("config"))?;
        let next = c.inner.with_powers(p_t, p_d);
        next.validate()?;
        c.inner = next;
        Ok(())
    })
}

/// Writes `M`, `N`, `K`, `T` and `eta` into `dims[0..5]`.
///
/// # Safety
/// `cfg` must be a live handle and `dims` valid for 5 writes.
#[no_mangle]
pub unsafe extern "C" fn mad_config_dims(cfg: *const MadConfig, dims: *mut usize) -> MadStatus {
    guard(|| {
        let c = config(cfg)?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let d = std::slice::from_raw_parts_mut(dims, 5);
        d.copy_from_slice(&[c.antennas, c.highres, c.users, c.coherence, c.pilot_len]);
        Ok(())
    })
}

/// Closed-form per-user estimate and error variances of a training scheme
/// (a `MadTraining` value) under a `MadCross` correlation model.
/// Both arrays must hold at least `K` values.
///
/// # Safety
/// `cfg` must be a live handle; the arrays must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mad_estimation_variances(
    cfg: *const MadConfig,
    scheme: u32,
    model: u32,
    var_est: *mut f64,
    var_err: *mut f64,
    len: usize,
) -> MadStatus {
    guard(|| {
        let c = config(cfg)?;
        let est = out_slice(var_est, len, c.users, "var_est")?;
        let err = out_slice(var_err, len, c.users, "var_err")?;
        let pilots = generate_pilots(c.pilot_len, c.users)?;
        let v = variances(training(scheme)?, c, &pilots, cross(model)?)?;
        est.copy_from_slice(&v.var_est);
        err.copy_from_slice(&v.var_err);
        Ok(())
    })
}

/// Joint-estimator weights per user. Each array must hold at least `K` values.
///
/// # Safety
/// `cfg` must be a live handle; the arrays must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mad_joint_weights(
    cfg: *const MadConfig,
    model: u32,
    w_inf: *mut f64,
    w_one: *mut f64,
    varsigma: *mut f64,
    len: usize,
) -> MadStatus {
    guard(|| {
        let c = config(cfg)?;
        let wi = out_slice(w_inf, len, c.users, "w_inf")?;
        let wo = out_slice(w_one, len, c.users, "w_one")?;
        let vs = out_slice(varsigma, len, c.users, "varsigma")?;
        let w = joint_weights(c, &generate_pilots(c.pilot_len, c.users)?, cross(model)?)?;
        wi.copy_from_slice(&w.w_inf);
        wo.copy_from_slice(&w.w_one);
        vs.copy_from_slice(&w.varsigma);
        Ok(())
    })
}

/// Sum SE of a scheme (a `MadScheme` value) under a `MadDetector` at the
/// configured powers. `bits` is read for
/// [`MadScheme::MultiBit`] only. Simulated schemes use `trials` draws from
/// `seed` and report a standard error; closed forms report `-1`.
///
/// # Safety
/// `cfg` must be a live handle; `sum_se` and `stderr` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mad_scheme_se(
    cfg: *const MadConfig,
    scheme_kind: u32,
    bits: u32,
    det: u32,
    trials: u64,
    seed: u64,
    sum_se: *mut f64,
    stderr: *mut f64,
) -> MadStatus {
    guard(|| {
        let c = config(cfg)?;
        let se = out(sum_se, "sum_se")?;
        let sd = out(stderr, "stderr")?;
        let opts = EvalOptions { trials, seed, ..EvalOptions::default() };
        let r = scheme_se(c, scheme(scheme_kind, bits)?, detector(det)?, &opts)?;
        *se = r.sum_se;
        *sd = r.sum_se_stderr.unwrap_or(-1.0);
        Ok(())
    })
}

/// Training/data power split maximizing the sum SE at average power `p_ave`.
///
/// # Safety
/// `cfg` must be a live handle; `result` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mad_optimize_power_split(
    cfg: *const MadConfig,
    p_ave: f64,
    scheme_kind: u32,
    bits: u32,
    det: u32,
    trials: u64,
    seed: u64,
    result: *mut MadPowerSplit,
) -> MadStatus {
    guard(|| {
        let c = config(cfg)?;
        let slot = out(result, "result")?;
        let opts = EvalOptions { trials, seed, ..EvalOptions::default() };
        let s = optimize_power_split(c, p_ave, scheme(scheme_kind, bits)?, detector(det)?, &opts)?;
        *slot = MadPowerSplit { fraction: s.fraction, p_t: s.p_t, p_d: s.p_d, eta_eff: s.eta_eff, sum_se: s.sum_se };
        Ok(())
    })
}

/// Mean of the `m`-th smallest of `population` unit-scale Gamma(`shape`) variables.
///
/// # Safety
/// `value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mad_chi_m(m: usize, population: usize, shape: usize, value: *mut f64) -> MadStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = chi_m(m, population, shape)?;
        Ok(())
    })
}

/// AQNM gain `alpha_0` of a `bits`-bit quantizer.
///
/// # Safety
/// `value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mad_aqnm_alpha(bits: u32, value: *mut f64) -> MadStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = aqnm_alpha(bits)?.alpha0;
        Ok(())
    })
}

/// Gamma(`shape`, `scale`) CDF at `x`.
///
/// # Safety
/// `value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mad_gamma_cdf(x: f64, shape: f64, scale: f64, value: *mut f64) -> MadStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = gamma_cdf(x, shape, scale)?;
        Ok(())
    })
}
