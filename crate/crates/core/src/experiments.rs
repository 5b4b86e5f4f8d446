//! Figure sweeps, power-split optimization and CSV / JSON-sidecar output.
//!
//! Every figure is described by a serializable [`FigureSpec`]. The sidecar
//! written next to each CSV embeds that spec, so a run can be repeated from
//! the sidecar alone.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::{fullres_variances, joint_variances, joint_weights, onebit_variances, CrossCorrelation};
use crate::montecarlo::TrialPlan;
use crate::quantization::aqnm_alpha;
use crate::spectral_efficiency::{
    aqnm_estimate_variance, kappa_for_bits, se_mrc_mixed, se_mrc_rows, se_mrc_selection, se_uniform_mrc,
    se_uniform_zf, sqinr_empirical, zf_fullres_sqinr, CsiModel, Detector, Placement, SeMethod, SeReport,
    SelectionMode, SqinrSpec, ONE_BIT_KAPPA,
};
use crate::sysmodel::{generate_pilots, SystemConfig};

/// Resolution of the high-resolution ADCs in the non-round-robin baseline.
pub const BASELINE_BITS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FigureId {
    #[serde(rename = "F4_EST_ERROR")]
    F4EstError,
    #[serde(rename = "F5_WEIGHTS")]
    F5Weights,
    #[serde(rename = "F6_MRC_AS")]
    F6MrcAs,
    #[serde(rename = "F7_ZF_AS")]
    F7ZfAs,
    #[serde(rename = "F8_MRC_SNR")]
    F8MrcSnr,
    #[serde(rename = "F9_ZF_SNR")]
    F9ZfSnr,
    #[serde(rename = "F10_MRC_T")]
    F10MrcT,
    #[serde(rename = "F11_ZF_T")]
    F11ZfT,
    #[serde(rename = "F12_MRC_COMP")]
    F12MrcComp,
    #[serde(rename = "F13_ZF_COMP")]
    F13ZfComp,
    #[serde(rename = "F14_MRC_N")]
    F14MrcN,
    #[serde(rename = "F15_ZF_N")]
    F15ZfN,
}

impl FigureId {
    pub const ALL: [FigureId; 12] = [
        FigureId::F4EstError,
        FigureId::F5Weights,
        FigureId::F6MrcAs,
        FigureId::F7ZfAs,
        FigureId::F8MrcSnr,
        FigureId::F9ZfSnr,
        FigureId::F10MrcT,
        FigureId::F11ZfT,
        FigureId::F12MrcComp,
        FigureId::F13ZfComp,
        FigureId::F14MrcN,
        FigureId::F15ZfN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::F4EstError => "F4_EST_ERROR",
            FigureId::F5Weights => "F5_WEIGHTS",
            FigureId::F6MrcAs => "F6_MRC_AS",
            FigureId::F7ZfAs => "F7_ZF_AS",
            FigureId::F8MrcSnr => "F8_MRC_SNR",
            FigureId::F9ZfSnr => "F9_ZF_SNR",
            FigureId::F10MrcT => "F10_MRC_T",
            FigureId::F11ZfT => "F11_ZF_T",
            FigureId::F12MrcComp => "F12_MRC_COMP",
            FigureId::F13ZfComp => "F13_ZF_COMP",
            FigureId::F14MrcN => "F14_MRC_N",
            FigureId::F15ZfN => "F15_ZF_N",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FigureId::F4EstError => "normalized channel-estimation error variance versus SNR",
            FigureId::F5Weights => "joint-estimator combining weights versus SNR",
            FigureId::F6MrcAs => "MRC sum SE versus SNR with and without antenna selection",
            FigureId::F7ZfAs => "ZF sum SE versus SNR with and without antenna selection",
            FigureId::F8MrcSnr => "MRC sum SE versus SNR: joint, non-round-robin and one-bit",
            FigureId::F9ZfSnr => "ZF sum SE versus SNR: joint, non-round-robin and one-bit",
            FigureId::F10MrcT => "MRC sum SE versus coherence interval",
            FigureId::F11ZfT => "ZF sum SE versus coherence interval",
            FigureId::F12MrcComp => "MRC sum SE versus SNR at 180 comparators",
            FigureId::F13ZfComp => "ZF sum SE versus SNR at 180 comparators",
            FigureId::F14MrcN => "MRC sum SE versus number of high-resolution ADCs",
            FigureId::F15ZfN => "ZF sum SE versus number of high-resolution ADCs",
        }
    }

    fn detector(self) -> Option<Detector> {
        match self {
            FigureId::F4EstError | FigureId::F5Weights => None,
            FigureId::F6MrcAs | FigureId::F8MrcSnr | FigureId::F10MrcT | FigureId::F12MrcComp | FigureId::F14MrcN => {
                Some(Detector::Mrc)
            }
            _ => Some(Detector::Zf),
        }
    }

    fn axis(self) -> Axis {
        match self {
            FigureId::F10MrcT | FigureId::F11ZfT => Axis::Coherence,
            FigureId::F14MrcN | FigureId::F15ZfN => Axis::Highres,
            _ => Axis::Snr,
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    /// Accepts the full id (`F8_MRC_SNR`) or its prefix (`F8`), any case.
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        FigureId::ALL
            .into_iter()
            .find(|id| id.name() == up || id.name().split('_').next() == Some(up.as_str()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown figure '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Snr,
    Coherence,
    Highres,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Snr => "snr_db",
            Axis::Coherence => "T",
            Axis::Highres => "N",
        }
    }
}

/// Receiver architecture plus training scheme of one SE curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Round-robin joint training, high-resolution ADCs on the `N` strongest rows.
    JointWithAs,
    /// Round-robin joint training, strongest row of each subarray.
    JointSubarrayAs,
    /// Round-robin joint training, fixed ADC placement.
    JointWithoutAs,
    /// Round-robin training from the high-resolution samples only.
    NotJointWithoutAs,
    /// All antennas on one-bit ADCs.
    OneBit,
    /// Fixed `N` rows on `BASELINE_BITS`-bit ADCs, one-bit elsewhere, no round robin.
    NonRoundRobin,
    /// All antennas on `bits`-bit ADCs.
    MultiBit { bits: u32 },
    /// All antennas on ideal ADCs.
    FullRes,
}

impl Scheme {
    pub fn label(self) -> String {
        match self {
            Scheme::JointWithAs => "Joint with AS".into(),
            Scheme::JointSubarrayAs => "Joint Subarray AS".into(),
            Scheme::JointWithoutAs => "Joint without AS".into(),
            Scheme::NotJointWithoutAs => "Not Joint without AS".into(),
            Scheme::OneBit => "One-bit".into(),
            Scheme::NonRoundRobin => "Non-round-robin".into(),
            Scheme::MultiBit { bits } => format!("Multi-bit ({bits}-bit)"),
            Scheme::FullRes => "Full resolution".into(),
        }
    }

    pub fn is_round_robin(self) -> bool {
        matches!(
            self,
            Scheme::JointWithAs | Scheme::JointSubarrayAs | Scheme::JointWithoutAs | Scheme::NotJointWithoutAs
        )
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "joint-as" | "joint-with-as" => Scheme::JointWithAs,
            "joint-subarray-as" => Scheme::JointSubarrayAs,
            "joint" | "joint-without-as" => Scheme::JointWithoutAs,
            "not-joint" | "not-joint-without-as" => Scheme::NotJointWithoutAs,
            "one-bit" => Scheme::OneBit,
            "non-round-robin" => Scheme::NonRoundRobin,
            "full-res" => Scheme::FullRes,
            other => match other.strip_prefix("multi-bit-").and_then(|b| b.parse().ok()) {
                Some(bits) => Scheme::MultiBit { bits },
                None => return invalid(format!("unknown scheme '{s}'")),
            },
        })
    }
}

/// Knobs shared by every SE evaluation of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub exact_cqd: bool,
    #[serde(default)]
    pub cross: CrossCorrelation,
    /// Simulate MRC with global selection instead of using the closed-form bound.
    #[serde(default)]
    pub mc_selection: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { trials: 1000, seed: 1, workers: None, exact_cqd: false, cross: CrossCorrelation::Noiseless, mc_selection: false }
    }
}

impl EvalOptions {
    fn plan(&self) -> TrialPlan {
        TrialPlan { seed: self.seed, trials: self.trials, workers: self.workers }
    }
}

/// Training symbols spent by `scheme`.
pub fn scheme_eta_eff(config: &SystemConfig, scheme: Scheme) -> Result<usize> {
    if scheme.is_round_robin() {
        Ok(config.ratio()? * config.pilot_len)
    } else {
        Ok(config.pilot_len)
    }
}

/// `config` with the ADC count `scheme` implies.
pub fn scheme_config(config: &SystemConfig, scheme: Scheme) -> Result<SystemConfig> {
    match scheme {
        Scheme::OneBit | Scheme::MultiBit { .. } => config.with_highres(0),
        Scheme::FullRes => config.with_highres(config.antennas),
        _ => {
            config.ratio()?;
            Ok(config.clone())
        }
    }
}

/// The common normalized estimate variance of all users.
fn common(v: &[f64]) -> Result<f64> {
    let s = v[0];
    if v.iter().any(|x| (x - s).abs() > 1e-9 * s) {
        return invalid("SE evaluation needs equal normalized estimate variances across users");
    }
    Ok(s)
}

/// Normalized estimate variance per row for `scheme`, plus the distortion
/// factors `(kappa_high, kappa_low)`.
fn row_profile(config: &SystemConfig, scheme: Scheme, cross: CrossCorrelation) -> Result<(Vec<f64>, f64, f64)> {
    let pilots = generate_pilots(config.pilot_len, config.users)?;
    let m = config.antennas;
    Ok(match scheme {
        Scheme::JointWithAs | Scheme::JointSubarrayAs | Scheme::JointWithoutAs => {
            let s = common(&joint_variances(config, &pilots, cross)?.sigma_hhat2)?;
            (vec![s; m], 0.0, ONE_BIT_KAPPA)
        }
        Scheme::NotJointWithoutAs => {
            let s = common(&fullres_variances(config, &pilots)?.sigma_hhat2)?;
            (vec![s; m], 0.0, ONE_BIT_KAPPA)
        }
        Scheme::OneBit => {
            let s = common(&onebit_variances(config, &pilots)?.sigma_hhat2)?;
            (vec![s; m], 0.0, ONE_BIT_KAPPA)
        }
        Scheme::NonRoundRobin => {
            let hi = aqnm_estimate_variance(config, aqnm_alpha(BASELINE_BITS)?.alpha0);
            let lo = common(&onebit_variances(config, &pilots)?.sigma_hhat2)?;
            let mut rows = vec![lo; m];
            rows[..config.highres].iter_mut().for_each(|r| *r = hi);
            (rows, kappa_for_bits(BASELINE_BITS)?, ONE_BIT_KAPPA)
        }
        Scheme::FullRes => {
            let s = common(&fullres_variances(config, &pilots)?.sigma_hhat2)?;
            (vec![s; m], 0.0, 0.0)
        }
        Scheme::MultiBit { bits } => {
            let s = aqnm_estimate_variance(config, aqnm_alpha(bits)?.alpha0);
            let kappa = kappa_for_bits(bits)?;
            (vec![s; m], kappa, kappa)
        }
    })
}

/// Sum-SE report of `scheme` under `detector` at the powers in `config`.
///
/// MRC curves use closed forms except subarray selection (and global
/// selection when `opts.mc_selection`), which are simulated with Gaussian
/// estimates of the scheme's variance. ZF curves are simulated the same
/// way, except the full-resolution array, which has a closed form.
pub fn scheme_se(config: &SystemConfig, scheme: Scheme, detector: Detector, opts: &EvalOptions) -> Result<SeReport> {
    let cfg = scheme_config(config, scheme)?;
    let eta_eff = scheme_eta_eff(&cfg, scheme)?;
    if eta_eff > cfg.coherence {
        return invalid(format!("{} needs {eta_eff} training symbols, T = {}", scheme.label(), cfg.coherence));
    }
    let (rows, kappa_high, kappa_low) = row_profile(&cfg, scheme, opts.cross)?;
    let s = rows[0];
    let simulate = |placement: Placement| {
        let mut spec = SqinrSpec::new(detector, placement, CsiModel::Gaussian { row_var: rows.clone() }, eta_eff);
        spec.kappa_high = kappa_high;
        spec.kappa_low = kappa_low;
        spec.exact_cqd = opts.exact_cqd && kappa_low == ONE_BIT_KAPPA;
        sqinr_empirical(&cfg, &spec, &opts.plan())
    };
    match (detector, scheme) {
        (Detector::Mrc, Scheme::JointWithAs) if opts.mc_selection => simulate(Placement::Select(SelectionMode::Global)),
        (Detector::Mrc, Scheme::JointWithAs) => se_mrc_selection(&cfg, s, eta_eff),
        (Detector::Mrc, Scheme::JointSubarrayAs) => simulate(Placement::Select(SelectionMode::Subarray)),
        (Detector::Mrc, Scheme::JointWithoutAs | Scheme::NotJointWithoutAs | Scheme::OneBit | Scheme::FullRes) => {
            se_mrc_mixed(&cfg, s, eta_eff)
        }
        (Detector::Mrc, Scheme::NonRoundRobin) => {
            let kappa: Vec<f64> = (0..cfg.antennas).map(|r| if r < cfg.highres { kappa_high } else { kappa_low }).collect();
            se_mrc_rows(&cfg, &rows, &kappa, eta_eff)
        }
        (Detector::Mrc, Scheme::MultiBit { bits }) => se_uniform_mrc(&cfg, bits),
        (Detector::Zf, Scheme::JointWithAs) => simulate(Placement::Select(SelectionMode::Global)),
        (Detector::Zf, Scheme::JointSubarrayAs) => simulate(Placement::Select(SelectionMode::Subarray)),
        (Detector::Zf, Scheme::FullRes) => {
            SeReport::closed_form(vec![zf_fullres_sqinr(&cfg, s); cfg.users], eta_eff, cfg.coherence)
        }
        (Detector::Zf, Scheme::MultiBit { bits }) => se_uniform_zf(&cfg, bits, &opts.plan()),
        (Detector::Zf, _) => simulate(Placement::Fixed),
    }
}

/// `(p_t, p_d)` meeting `eta_eff p_t + (T - eta_eff) p_d = P T` with a
/// fraction `f` of the energy spent on training.
pub fn split_powers(p_ave: f64, coherence: usize, eta_eff: usize, fraction: f64) -> (f64, f64) {
    let energy = p_ave * coherence as f64;
    (fraction * energy / eta_eff as f64, (1.0 - fraction) * energy / (coherence - eta_eff) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit {
    /// Fraction of the coherence-interval energy spent on training.
    pub fraction: f64,
    pub p_t: f64,
    pub p_d: f64,
    pub eta_eff: usize,
    pub sum_se: f64,
}

/// Maximizes `f` over `(lo, hi)`: the best of a uniform grid of `grid`
/// points is refined by golden-section search on its neighbours until the
/// bracket is below `rel_tol` times its midpoint.
pub fn maximize_scalar<F>(mut f: F, lo: f64, hi: f64, grid: usize, rel_tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || grid < 3 {
        return invalid("need lo < hi and at least three grid points");
    }
    let step = (hi - lo) / (grid + 1) as f64;
    let xs: Vec<f64> = (1..=grid).map(|i| lo + step * i as f64).collect();
    let mut best = (xs[0], f64::NEG_INFINITY);
    for &x in &xs {
        let v = f(x)?;
        if v > best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..200 {
        if b - a <= rel_tol * 0.5 * (a + b).abs() {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let (x, v) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(if v >= best.1 { (x, v) } else { best })
}

/// Training/data power split maximizing the sum SE of `scheme` at average
/// power `p_ave`, with `eta = K` fixed. Simulated curves use common random
/// numbers (same seed) for every candidate split.
pub fn optimize_power_split(
    config: &SystemConfig,
    p_ave: f64,
    scheme: Scheme,
    detector: Detector,
    opts: &EvalOptions,
) -> Result<PowerSplit> {
    if !(p_ave > 0.0 && p_ave.is_finite()) {
        return invalid(format!("average power must be positive, got {p_ave}"));
    }
    let cfg = scheme_config(config, scheme)?;
    let eta_eff = scheme_eta_eff(&cfg, scheme)?;
    let t = cfg.coherence;
    if eta_eff >= t {
        return Ok(PowerSplit { fraction: 1.0, p_t: p_ave * t as f64 / eta_eff as f64, p_d: 0.0, eta_eff, sum_se: 0.0 });
    }
    let objective = |f: f64| {
        let (pt, pd) = split_powers(p_ave, t, eta_eff, f);
        Ok(scheme_se(&cfg.with_powers(pt, pd), scheme, detector, opts)?.sum_se)
    };
    let (fraction, sum_se) = maximize_scalar(objective, 0.0, 1.0, 24, 1e-6)?;
    let (p_t, p_d) = split_powers(p_ave, t, eta_eff, fraction);
    Ok(PowerSplit { fraction, p_t, p_d, eta_eff, sum_se })
}

/// One row of a figure CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub figure: String,
    pub curve: String,
    pub x_name: String,
    pub x_value: f64,
    pub y_value: f64,
    /// Empty for closed-form curves.
    pub stderr: Option<f64>,
}

/// Everything needed to regenerate a figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub figure: FigureId,
    /// `M`, `K`, `eta` and the noise level; the swept quantities are overridden per curve.
    pub base: SystemConfig,
    /// SNR grid in dB (x axis, or the per-curve SNRs of the T and N sweeps).
    pub snr_db: Vec<f64>,
    /// Coherence intervals (T sweeps) or high-resolution counts (N sweeps).
    #[serde(default)]
    pub sweep: Vec<usize>,
    pub trials: u64,
    /// Trials per candidate split during power optimization.
    pub opt_trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    pub power_opt: bool,
    #[serde(default)]
    pub exact_cqd: bool,
    #[serde(default)]
    pub cross: CrossCorrelation,
}

impl FigureSpec {
    /// Default grid for `figure` at `M = 100`, `K = eta = 10`.
    pub fn new(figure: FigureId) -> Self {
        let base = SystemConfig::builder().antennas(100).highres(20).users(10).coherence(1000).build().expect("defaults");
        let axis = figure.axis();
        let snr_db = match (figure, axis) {
            (FigureId::F4EstError | FigureId::F5Weights, _) => grid(-20.0, 40.0, 2.5),
            (_, Axis::Snr) => grid(-20.0, 20.0, 5.0),
            _ => vec![-10.0, 0.0, 10.0],
        };
        let sweep = match axis {
            Axis::Coherence => vec![100, 200, 300, 400, 600, 800, 1000, 1500, 2000],
            Axis::Highres => vec![1, 2, 4, 5, 10, 20, 25, 50, 100],
            Axis::Snr => Vec::new(),
        };
        Self {
            figure,
            base,
            snr_db,
            sweep,
            trials: 1000,
            opt_trials: 200,
            seed: 20_190_101,
            workers: None,
            power_opt: true,
            exact_cqd: false,
            cross: CrossCorrelation::Noiseless,
        }
    }
}

/// `a, a + step, ...` up to `b` inclusive.
pub fn grid(a: f64, b: f64, step: f64) -> Vec<f64> {
    let n = ((b - a) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| a + step * i as f64).collect()
}

/// Parses `a:b:step` (or a single value) into a grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number '{p}' in '{s}'"))))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [v] => Ok(vec![*v]),
        [a, b, step] if *step > 0.0 && b >= a => Ok(grid(*a, *b, *step)),
        _ => invalid(format!("expected a:b:step with step > 0 and b >= a, got '{s}'")),
    }
}

/// One SE curve of a figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub label: String,
    pub scheme: Option<Scheme>,
    pub detector: Option<Detector>,
    pub antennas: usize,
    pub highres: Option<usize>,
    pub coherence: Option<usize>,
    pub snr_db: Option<f64>,
    pub method: SeMethod,
}

/// Operating point chosen for one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeta {
    pub curve: String,
    pub x_value: f64,
    pub eta_eff: usize,
    pub p_t: f64,
    pub p_d: f64,
    pub seed: u64,
}

/// Contents of `<figure>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureMeta {
    pub figure: FigureId,
    pub description: String,
    pub x_name: String,
    pub y_name: String,
    pub version: String,
    pub spec: FigureSpec,
    pub high_resolution_model: String,
    pub curves: Vec<CurveMeta>,
    pub points: Vec<PointMeta>,
}

#[derive(Debug, Clone)]
pub struct FigureOutput {
    pub rows: Vec<CsvRow>,
    pub meta: FigureMeta,
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
}

#[derive(Debug, Clone)]
struct SeCurve {
    label: String,
    scheme: Scheme,
    antennas: usize,
    highres: usize,
    coherence: usize,
    snr_db: Option<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn point_seed(seed: u64, curve: usize, x: usize) -> u64 {
    splitmix(seed ^ splitmix(((curve as u64) << 32) | x as u64))
}

fn se_curves(spec: &FigureSpec) -> Vec<SeCurve> {
    let m = spec.base.antennas;
    let c = |scheme: Scheme, label: String, antennas: usize, highres: usize, coherence: usize, snr: Option<f64>| SeCurve {
        label,
        scheme,
        antennas,
        highres,
        coherence,
        snr_db: snr,
    };
    let mut out = Vec::new();
    match spec.figure {
        FigureId::F6MrcAs | FigureId::F7ZfAs => {
            let mut schemes = vec![Scheme::JointWithAs, Scheme::JointSubarrayAs, Scheme::JointWithoutAs, Scheme::NotJointWithoutAs];
            if spec.figure == FigureId::F6MrcAs {
                schemes.push(Scheme::FullRes);
            }
            for s in schemes {
                out.push(c(s, s.label(), m, 20, 400, None));
            }
        }
        FigureId::F8MrcSnr | FigureId::F9ZfSnr => {
            for t in [400, 1000] {
                for n in [20, 10] {
                    for s in [Scheme::JointWithAs, Scheme::NonRoundRobin] {
                        out.push(c(s, format!("{} N={n} T={t}", s.label()), m, n, t, None));
                    }
                }
                out.push(c(Scheme::OneBit, format!("One-bit T={t}"), m, 0, t, None));
            }
        }
        FigureId::F10MrcT | FigureId::F11ZfT | FigureId::F14MrcN | FigureId::F15ZfN => {
            for &snr in &spec.snr_db {
                for s in [Scheme::JointWithAs, Scheme::NonRoundRobin, Scheme::OneBit] {
                    out.push(c(s, format!("{} SNR={snr} dB", s.label()), m, 20, 1000, Some(snr)));
                }
            }
        }
        FigureId::F12MrcComp | FigureId::F13ZfComp => {
            for t in [400, 1000] {
                out.push(c(Scheme::JointWithAs, format!("Joint with AS (M=100, N=20) T={t}"), 100, 20, t, None));
                out.push(c(Scheme::NonRoundRobin, format!("Non-round-robin (M=100, N=20) T={t}"), 100, 20, t, None));
                out.push(c(Scheme::OneBit, format!("One-bit (M=180) T={t}"), 180, 0, t, None));
                out.push(c(Scheme::MultiBit { bits: 2 }, format!("Multi-bit 2-bit (M=90) T={t}"), 90, 0, t, None));
                out.push(c(Scheme::MultiBit { bits: 3 }, format!("Multi-bit 3-bit (M=60) T={t}"), 60, 0, t, None));
            }
        }
        FigureId::F4EstError | FigureId::F5Weights => {}
    }
    out
}

fn curve_method(scheme: Scheme, detector: Detector, opts: &EvalOptions) -> SeMethod {
    let closed = match (detector, scheme) {
        (Detector::Mrc, Scheme::JointSubarrayAs) => false,
        (Detector::Mrc, Scheme::JointWithAs) => !opts.mc_selection,
        (Detector::Mrc, _) => true,
        (Detector::Zf, Scheme::FullRes) => true,
        (Detector::Zf, _) => false,
    };
    if closed {
        SeMethod::ClosedForm
    } else {
        SeMethod::MonteCarlo
    }
}

fn snr_to_power(spec: &FigureSpec, snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0) * spec.base.sigma_n2
}

fn run_se_figure(spec: &FigureSpec, detector: Detector) -> Result<(Vec<CsvRow>, Vec<CurveMeta>, Vec<PointMeta>)> {
    let axis = spec.figure.axis();
    let curves = se_curves(spec);
    let xs: Vec<f64> = match axis {
        Axis::Snr => spec.snr_db.clone(),
        _ => spec.sweep.iter().map(|&v| v as f64).collect(),
    };
    if xs.is_empty() {
        return invalid("empty x grid");
    }
    let mut rows = Vec::new();
    let mut metas = Vec::new();
    let mut points = Vec::new();
    for (ci, curve) in curves.iter().enumerate() {
        let base_opts = EvalOptions {
            trials: spec.trials,
            seed: 0,
            workers: spec.workers,
            exact_cqd: spec.exact_cqd,
            cross: spec.cross,
            mc_selection: false,
        };
        let method = curve_method(curve.scheme, detector, &base_opts);
        metas.push(CurveMeta {
            label: curve.label.clone(),
            scheme: Some(curve.scheme),
            detector: Some(detector),
            antennas: curve.antennas,
            highres: (axis != Axis::Highres).then_some(curve.highres),
            coherence: (axis != Axis::Coherence).then_some(curve.coherence),
            snr_db: curve.snr_db,
            method,
        });
        for (xi, &x) in xs.iter().enumerate() {
            let (mut n, mut t, mut snr) = (curve.highres, curve.coherence, curve.snr_db.unwrap_or(0.0));
            match axis {
                Axis::Snr => snr = x,
                Axis::Coherence => t = x as usize,
                Axis::Highres => n = x as usize,
            }
            if matches!(curve.scheme, Scheme::OneBit | Scheme::MultiBit { .. }) {
                n = 0;
            }
            let mut cfg = spec.base.clone();
            cfg.antennas = curve.antennas;
            cfg.highres = n;
            cfg.coherence = t;
            cfg.validate()?;
            let p_ave = snr_to_power(spec, snr);
            let seed = point_seed(spec.seed, ci, xi);
            let opts = EvalOptions { seed, ..base_opts };
            let eta_eff = scheme_eta_eff(&scheme_config(&cfg, curve.scheme)?, curve.scheme)?;
            let (p_t, p_d) = if eta_eff >= t {
                (p_ave, 0.0)
            } else if spec.power_opt {
                let opt_opts = EvalOptions { trials: spec.opt_trials, ..opts };
                let split = optimize_power_split(&cfg, p_ave, curve.scheme, detector, &opt_opts)?;
                (split.p_t, split.p_d)
            } else {
                (p_ave, p_ave)
            };
            let (y, se) = if eta_eff >= t {
                (0.0, (method == SeMethod::MonteCarlo).then_some(0.0))
            } else {
                let r = scheme_se(&cfg.with_powers(p_t, p_d), curve.scheme, detector, &opts)?;
                (r.sum_se, r.sum_se_stderr)
            };
            rows.push(CsvRow {
                figure: spec.figure.name().into(),
                curve: curve.label.clone(),
                x_name: axis.name().into(),
                x_value: x,
                y_value: y,
                stderr: se,
            });
            points.push(PointMeta { curve: curve.label.clone(), x_value: x, eta_eff, p_t, p_d, seed });
        }
    }
    Ok((rows, metas, points))
}

#[derive(Debug, Clone, Copy)]
enum EstCurve {
    FullRes,
    OneBit { eta: usize },
    Joint { highres: usize, cross: CrossCorrelation },
    Weight { ratio: usize, one_bit: bool },
}

impl EstCurve {
    fn label(self) -> String {
        match self {
            EstCurve::FullRes => "Full resolution".into(),
            EstCurve::OneBit { eta } => format!("One-bit eta={eta}"),
            EstCurve::Joint { highres, cross: CrossCorrelation::Noiseless } => format!("Joint N={highres}"),
            EstCurve::Joint { highres, cross: CrossCorrelation::Ignored } => format!("Joint (AQNM) N={highres}"),
            EstCurve::Joint { highres, cross: CrossCorrelation::Exact } => format!("Joint (exact correlation) N={highres}"),
            EstCurve::Weight { ratio, one_bit: false } => format!("w_inf M/N={ratio}"),
            EstCurve::Weight { ratio, one_bit: true } => format!("w_one M/N={ratio}"),
        }
    }

    fn eval(self, base: &SystemConfig, p: f64) -> Result<f64> {
        let mut cfg = base.with_powers(p, p);
        let (m, k) = (cfg.antennas, cfg.users);
        match self {
            EstCurve::FullRes => {
                cfg = cfg.with_highres(m)?;
                let v = fullres_variances(&cfg, &generate_pilots(cfg.pilot_len, k)?)?;
                Ok(v.var_err[0] / cfg.beta[0])
            }
            EstCurve::OneBit { eta } => {
                cfg.pilot_len = eta;
                cfg = cfg.with_highres(0)?;
                let v = onebit_variances(&cfg, &generate_pilots(eta, k)?)?;
                Ok(v.var_err[0] / cfg.beta[0])
            }
            EstCurve::Joint { highres, cross } => {
                cfg = cfg.with_highres(highres)?;
                let v = joint_variances(&cfg, &generate_pilots(cfg.pilot_len, k)?, cross)?;
                Ok(v.var_err[0] / cfg.beta[0])
            }
            EstCurve::Weight { ratio, one_bit } => {
                if m % ratio != 0 {
                    return invalid(format!("M = {m} is not a multiple of {ratio}"));
                }
                cfg = cfg.with_highres(m / ratio)?;
                let w = joint_weights(&cfg, &generate_pilots(cfg.pilot_len, k)?, CrossCorrelation::Noiseless)?;
                Ok(if one_bit { w.w_one[0] } else { w.w_inf[0] })
            }
        }
    }
}

fn est_curves(spec: &FigureSpec) -> Vec<EstCurve> {
    let k = spec.base.users;
    let m = spec.base.antennas;
    match spec.figure {
        FigureId::F4EstError => {
            let mut v = vec![EstCurve::FullRes];
            for n in [20, 10] {
                v.push(EstCurve::OneBit { eta: m / n * k });
            }
            for cross in [CrossCorrelation::Noiseless, CrossCorrelation::Ignored, CrossCorrelation::Exact] {
                for n in [20, 10] {
                    v.push(EstCurve::Joint { highres: n, cross });
                }
            }
            v
        }
        _ => [2, 5, 10]
            .into_iter()
            .flat_map(|ratio| [EstCurve::Weight { ratio, one_bit: false }, EstCurve::Weight { ratio, one_bit: true }])
            .collect(),
    }
}

fn run_est_figure(spec: &FigureSpec) -> Result<(Vec<CsvRow>, Vec<CurveMeta>, Vec<PointMeta>)> {
    let mut rows = Vec::new();
    let mut metas = Vec::new();
    let mut points = Vec::new();
    for curve in est_curves(spec) {
        let label = curve.label();
        let (highres, eta) = match curve {
            EstCurve::FullRes => (Some(spec.base.antennas), spec.base.pilot_len),
            EstCurve::OneBit { eta } => (Some(0), eta),
            EstCurve::Joint { highres, .. } => (Some(highres), spec.base.antennas / highres * spec.base.pilot_len),
            EstCurve::Weight { ratio, .. } => (Some(spec.base.antennas / ratio), ratio * spec.base.pilot_len),
        };
        metas.push(CurveMeta {
            label: label.clone(),
            scheme: None,
            detector: None,
            antennas: spec.base.antennas,
            highres,
            coherence: None,
            snr_db: None,
            method: SeMethod::ClosedForm,
        });
        for &snr in &spec.snr_db {
            let p = snr_to_power(spec, snr);
            rows.push(CsvRow {
                figure: spec.figure.name().into(),
                curve: label.clone(),
                x_name: Axis::Snr.name().into(),
                x_value: snr,
                y_value: curve.eval(&spec.base, p)?,
                stderr: None,
            });
            points.push(PointMeta { curve: label.clone(), x_value: snr, eta_eff: eta, p_t: p, p_d: p, seed: spec.seed });
        }
    }
    Ok((rows, metas, points))
}

/// Computes a figure without touching the file system.
pub fn compute_figure(spec: &FigureSpec) -> Result<(Vec<CsvRow>, FigureMeta)> {
    if spec.snr_db.is_empty() {
        return invalid("empty SNR grid");
    }
    spec.base.validate()?;
    let (rows, curves, points, y_name) = match spec.figure.detector() {
        None => {
            let (r, c, p) = run_est_figure(spec)?;
            let y = if spec.figure == FigureId::F4EstError { "normalized_error_variance" } else { "weight" };
            (r, c, p, y)
        }
        Some(det) => {
            let (r, c, p) = run_se_figure(spec, det)?;
            (r, c, p, "sum_se_bits_per_channel_use")
        }
    };
    let meta = FigureMeta {
        figure: spec.figure,
        description: spec.figure.description().into(),
        x_name: rows.first().map(|r| r.x_name.clone()).unwrap_or_default(),
        y_name: y_name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec: spec.clone(),
        high_resolution_model: format!(
            "round-robin schemes: ideal high-resolution ADCs; non-round-robin baseline: {BASELINE_BITS}-bit AQNM"
        ),
        curves,
        points,
    };
    Ok((rows, meta))
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a sidecar written by [`run_figure`].
pub fn read_meta(path: &Path) -> Result<FigureMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

/// Runs a figure and writes `<figure>.csv` and `<figure>.meta.json` into `out_dir`.
pub fn run_figure(spec: &FigureSpec, out_dir: &Path) -> Result<FigureOutput> {
    let (rows, meta) = compute_figure(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join(format!("{}.csv", spec.figure.name()));
    let meta_path = out_dir.join(format!("{}.meta.json", spec.figure.name()));
    write_csv(&csv_path, &rows)?;
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(FigureOutput { rows, meta, csv_path, meta_path })
}
