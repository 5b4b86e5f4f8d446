//! Uplink spectral efficiency of mixed-ADC arrays with MRC and ZF
//! receivers: closed forms, antenna selection, and a Monte Carlo SQINR
//! evaluator.
//!
//! Channels are normalized (`h_k = g_k / sqrt(beta_k)`) and the data phase
//! always runs with statistics-aware power control at received power
//! `p_d` per user. Quantizer distortion is written in input-referred units:
//! row `m` contributes `kappa_m (K p_d + sigma^2)` with `kappa = (1 - a)/a`
//! for a linear gain `a` (`pi/2 - 1` for one bit, 0 for an ideal ADC).

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};

use num_complex::Complex64;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numeric, Result};
use crate::estimation::{
    estimate_fullres_rr, estimate_joint_with, estimate_onebit, simulate_onebit, simulate_round_robin,
    CrossCorrelation, TrainingScheme,
};
use crate::linalg::{cscg, cscg_matrix, hpd_inverse, CMatrix, ZERO};
use crate::montecarlo::{run_trials_grouped, Aggregate, TrialPlan};
use crate::orderstats::chi_sum_smallest;
use crate::quantization::{aqnm_alpha, arcsine_cross_covariance};
use crate::sysmodel::{draw_channel, generate_pilots, SystemConfig};

/// Distortion factor of a one-bit ADC.
pub const ONE_BIT_KAPPA: f64 = FRAC_PI_2 - 1.0;

/// Distortion factor `(1 - alpha0) / alpha0` of a `bits`-bit ADC.
pub fn kappa_for_bits(bits: u32) -> Result<f64> {
    if bits == 1 {
        return Ok(ONE_BIT_KAPPA);
    }
    let a = aqnm_alpha(bits)?.alpha0;
    Ok((1.0 - a) / a)
}

/// `(1 - eta_eff / T) log2(1 + theta)`.
pub fn rate_wrapper(theta: f64, eta_eff: usize, coherence: usize) -> Result<f64> {
    if eta_eff > coherence {
        return invalid(format!("training length {eta_eff} exceeds coherence interval {coherence}"));
    }
    if !(theta >= 0.0) {
        return invalid(format!("SQINR must be nonnegative, got {theta}"));
    }
    Ok((1.0 - eta_eff as f64 / coherence as f64) * theta.ln_1p() / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeMethod {
    ClosedForm,
    MonteCarlo,
}

/// Sample means of the SQINR expectation terms of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqinrTerms {
    /// `E[w_k^H h_k]`.
    pub gain_re: f64,
    pub gain_im: f64,
    /// `E[|w_k^H h_k|^2]`.
    pub gain_power: f64,
    /// `sum_i E[|w_k^H h_i|^2]`.
    pub interference: f64,
    /// `E[||w_k||^2]`.
    pub noise: f64,
    /// `alpha^{-2} E[w_k^H C_qd w_k]`.
    pub quantization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeReport {
    pub sqinr: Vec<f64>,
    pub se: Vec<f64>,
    pub sum_se: f64,
    pub eta_eff: usize,
    pub method: SeMethod,
    pub trials: Option<u64>,
    pub sqinr_stderr: Option<Vec<f64>>,
    pub se_stderr: Option<Vec<f64>>,
    pub sum_se_stderr: Option<f64>,
    pub terms: Option<Vec<SqinrTerms>>,
}

impl SeReport {
    /// Report of per-user SQINRs obtained in closed form.
    pub fn closed_form(sqinr: Vec<f64>, eta_eff: usize, coherence: usize) -> Result<Self> {
        let se = sqinr.iter().map(|&s| rate_wrapper(s, eta_eff, coherence)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sum_se: se.iter().sum(),
            sqinr,
            se,
            eta_eff,
            method: SeMethod::ClosedForm,
            trials: None,
            sqinr_stderr: None,
            se_stderr: None,
            sum_se_stderr: None,
            terms: None,
        })
    }
}

/// Hardened received power per antenna in the data phase, `K p_d + sigma^2`.
fn data_power(config: &SystemConfig) -> f64 {
    config.users as f64 * config.p_d + config.sigma_n2
}

/// Data-phase quantization model of one ADC assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPhaseModel {
    /// `sqrt((2/pi) / (K p_d + sigma^2))`.
    pub alpha: f64,
    pub highres: Vec<bool>,
    /// Input-referred distortion variance per row, `alpha^{-2} diag(C_qd)`
    /// for one-bit rows.
    pub distortion: Vec<f64>,
}

impl DataPhaseModel {
    /// Ideal high-resolution ADCs on `highres_set`, one-bit elsewhere.
    pub fn new(config: &SystemConfig, highres_set: &[usize]) -> Result<Self> {
        let mut mask = vec![false; config.antennas];
        for &m in highres_set {
            if m >= config.antennas {
                return invalid(format!("antenna index {m} out of range"));
            }
            mask[m] = true;
        }
        Ok(Self::from_mask(config, mask, 0.0, ONE_BIT_KAPPA))
    }

    pub fn from_mask(config: &SystemConfig, highres: Vec<bool>, kappa_high: f64, kappa_low: f64) -> Self {
        let power = data_power(config);
        let distortion = highres
            .iter()
            .map(|&h| if h { kappa_high } else { kappa_low } * power)
            .collect();
        Self { alpha: (FRAC_2_PI / power).sqrt(), highres, distortion }
    }

    pub fn highres_set(&self) -> Vec<usize> {
        self.highres.iter().enumerate().filter(|(_, &h)| h).map(|(i, _)| i).collect()
    }

    /// `diag(C_qd)` in quantizer-output units; `1 - 2/pi` on one-bit rows.
    pub fn cqd(&self) -> Vec<f64> {
        self.distortion.iter().map(|d| d * self.alpha * self.alpha).collect()
    }

    /// Diagonal of `C_neff = sigma^2 I + alpha^{-2} C_qd`.
    pub fn neff(&self, sigma_n2: f64) -> Vec<f64> {
        self.distortion.iter().map(|d| sigma_n2 + d).collect()
    }
}

/// Closed-form MRC SE with the high-resolution ADCs on an arbitrary set.
pub fn se_mrc_mixed(config: &SystemConfig, sigma_hhat2: f64, eta_eff: usize) -> Result<SeReport> {
    check_var(sigma_hhat2)?;
    let (m, n, k) = (config.antennas as f64, config.highres as f64, config.users as f64);
    let p = config.p_d;
    let alpha2 = FRAC_2_PI / data_power(config);
    let theta = p * m * sigma_hhat2 / (p * k + config.sigma_n2 + (1.0 - FRAC_2_PI) / alpha2 * (1.0 - n / m));
    SeReport::closed_form(vec![theta; config.users], eta_eff, config.coherence)
}

/// Closed-form lower bound on the MRC SE with the high-resolution ADCs on
/// the `N` rows of largest estimated energy.
pub fn se_mrc_selection(config: &SystemConfig, sigma_hhat2: f64, eta_eff: usize) -> Result<SeReport> {
    check_var(sigma_hhat2)?;
    let (m, k) = (config.antennas, config.users);
    let weak = chi_sum_smallest(m - config.highres, m, k)?;
    let p = config.p_d;
    let alpha2 = FRAC_2_PI / data_power(config);
    let q = (1.0 - FRAC_2_PI) / ((m * k) as f64 * alpha2) * weak;
    let theta = p * m as f64 * sigma_hhat2 / (p * k as f64 + config.sigma_n2 + q);
    SeReport::closed_form(vec![theta; k], eta_eff, config.coherence)
}

/// Closed-form MRC SE for a fixed array whose row `m` has normalized
/// estimate variance `row_var[m]` and distortion factor `kappa[m]`.
pub fn se_mrc_rows(config: &SystemConfig, row_var: &[f64], kappa: &[f64], eta_eff: usize) -> Result<SeReport> {
    if row_var.len() != config.antennas || kappa.len() != config.antennas {
        return invalid("row profile must have one entry per antenna");
    }
    for &s in row_var {
        check_var(s)?;
    }
    let s1: f64 = row_var.iter().sum();
    let sq: f64 = row_var.iter().zip(kappa).map(|(s, q)| s * q).sum();
    let p = config.p_d;
    let theta = p * s1 * s1 / (p * config.users as f64 * s1 + config.sigma_n2 * s1 + data_power(config) * sq);
    SeReport::closed_form(vec![theta; config.users], eta_eff, config.coherence)
}

fn check_var(s: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return invalid(format!("normalized estimate variance must be in (0, 1], got {s}"));
    }
    Ok(())
}

/// Normalized training estimate variance of a uniform `bits`-bit array
/// under the AQNM model.
pub fn aqnm_estimate_variance(config: &SystemConfig, alpha0: f64) -> f64 {
    let (eta, p, s2) = (config.pilot_len as f64, config.p_t, config.sigma_n2);
    let k = config.users as f64;
    let a2 = alpha0 * alpha0;
    a2 * eta * p / (a2 * eta * p + a2 * s2 + alpha0 * (1.0 - alpha0) * (p * k + s2))
}

/// MRC SE of an array of `M` identical `bits`-bit ADCs.
pub fn se_uniform_mrc(config: &SystemConfig, bits: u32) -> Result<SeReport> {
    let a0 = aqnm_alpha(bits)?.alpha0;
    let s = aqnm_estimate_variance(config, a0);
    let (m, k, p, s2) = (config.antennas as f64, config.users as f64, config.p_d, config.sigma_n2);
    let theta = p * m * s / (p * k + s2 + (1.0 - a0) / (a0 * a0) * (p * (s + k) + s2));
    SeReport::closed_form(vec![theta; config.users], config.pilot_len, config.coherence)
}

/// ZF SE of an array of `M` identical `bits`-bit ADCs. The expectation
/// `E[w^H C_0 w]`, with `C_0 = alpha0 (1 - alpha0) diag(p H H^H + sigma^2 I)`
/// per draw, is estimated by Monte Carlo over Gaussian estimates.
pub fn se_uniform_zf(config: &SystemConfig, bits: u32, plan: &TrialPlan) -> Result<SeReport> {
    if plan.trials < 100 {
        return invalid("at least 100 trials are required");
    }
    let a0 = aqnm_alpha(bits)?.alpha0;
    let s = aqnm_estimate_variance(config, a0);
    let (m, k) = (config.antennas, config.users);
    if m <= k {
        return invalid("ZF needs more antennas than users");
    }
    let (p, s2) = (config.p_d, config.sigma_n2);
    let agg = run_trials_grouped(plan, k, k, |_, rng, out| {
        let hhat = cscg_matrix(rng, m, k, s);
        let h = &hhat + cscg_matrix(rng, m, k, 1.0 - s);
        let gram = hpd_inverse(&(hhat.adjoint() * &hhat))?;
        let w = &hhat * gram;
        for row in 0..m {
            let power = p * h.row(row).iter().map(|z| z.norm_sqr()).sum::<f64>() + s2;
            let c0 = a0 * (1.0 - a0) * power;
            for (kk, o) in out.iter_mut().enumerate() {
                *o += c0 * w[(row, kk)].norm_sqr();
            }
        }
        Ok(())
    })?;
    let scale = (m - k) as f64 * s / (a0 * a0);
    let base = p * k as f64 * (1.0 - s) + s2;
    let num = p * (m - k) as f64 * s;
    let sqinr: Vec<f64> = agg.mean.iter().map(|e| num / (base + scale * e)).collect();
    let var_e = agg.covariance(0);
    let n = agg.count as f64;
    let d_theta: Vec<f64> = agg.mean.iter().map(|e| -num * scale / (base + scale * e).powi(2)).collect();
    let pre = 1.0 - config.pilot_len as f64 / config.coherence as f64;
    let d_se: Vec<f64> = sqinr.iter().zip(&d_theta).map(|(t, d)| pre * d / ((1.0 + t) * std::f64::consts::LN_2)).collect();
    let mut report = SeReport::closed_form(sqinr, config.pilot_len, config.coherence)?;
    report.method = SeMethod::MonteCarlo;
    report.trials = Some(agg.count);
    report.sqinr_stderr = Some((0..k).map(|i| d_theta[i].abs() * (var_e[i * k + i] / n).sqrt()).collect());
    report.se_stderr = Some((0..k).map(|i| d_se[i].abs() * (var_e[i * k + i] / n).sqrt()).collect());
    report.sum_se_stderr = Some(quadratic(&d_se, &var_e).max(0.0).sqrt() / n.sqrt());
    Ok(report)
}

fn quadratic(g: &[f64], cov: &[f64]) -> f64 {
    let d = g.len();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += g[i] * cov[i * d + j] * g[j];
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionMode {
    /// The `N` rows of largest energy anywhere in the array.
    Global,
    /// The strongest row of each contiguous `M/N`-antenna subarray.
    Subarray,
}

/// Indices (ascending) of the rows that get high-resolution ADCs. Ties go
/// to the lower index.
pub fn antenna_selection(hhat: &CMatrix, n: usize, mode: SelectionMode) -> Result<Vec<usize>> {
    let m = hhat.nrows();
    if n > m {
        return invalid(format!("cannot select {n} of {m} antennas"));
    }
    let energy: Vec<f64> = (0..m).map(|r| hhat.row(r).iter().map(|z| z.norm_sqr()).sum()).collect();
    let mut picked = match mode {
        SelectionMode::Global => {
            let mut idx: Vec<usize> = (0..m).collect();
            // stable sort keeps the lower index first among equal energies
            idx.sort_by(|a, b| energy[*b].total_cmp(&energy[*a]));
            idx.truncate(n);
            idx
        }
        SelectionMode::Subarray => {
            if n == 0 {
                return Ok(Vec::new());
            }
            if m % n != 0 {
                return invalid("subarray selection needs N to divide M");
            }
            let size = m / n;
            (0..n)
                .map(|g| {
                    let mut best = g * size;
                    for r in g * size..(g + 1) * size {
                        if energy[r] > energy[best] {
                            best = r;
                        }
                    }
                    best
                })
                .collect()
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

/// `W = C^{-1} H (H^H C^{-1} H)^{-1}` for diagonal `C = C_neff`.
pub fn zf_detector(hhat: &CMatrix, model: &DataPhaseModel, sigma_n2: f64) -> Result<CMatrix> {
    let neff = model.neff(sigma_n2);
    if neff.len() != hhat.nrows() {
        return invalid("data-phase model does not match the estimate shape");
    }
    zf_with_diag(hhat, &neff)
}

fn zf_with_diag(hhat: &CMatrix, neff: &[f64]) -> Result<CMatrix> {
    let mut ch = hhat.clone();
    for (r, mut row) in ch.row_iter_mut().enumerate() {
        row /= Complex64::new(neff[r], 0.0);
    }
    let gram = hhat.adjoint() * &ch;
    let inv = hpd_inverse(&gram).or_else(|_| numeric("channel estimate is rank deficient"))?;
    Ok(ch * inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Detector {
    Mrc,
    Zf,
}

/// Placement of the high-resolution ADCs during data detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Placement {
    /// Rows `0..N`.
    Fixed,
    /// A uniformly random set of `N` rows per draw.
    Random,
    Select(SelectionMode),
}

/// Where the channel estimates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiModel {
    Perfect,
    /// `hhat_mk ~ CN(0, row_var[m])` with independent error of variance
    /// `1 - row_var[m]`. The error is averaged analytically given the
    /// estimate.
    Gaussian { row_var: Vec<f64> },
    /// Simulated pilot phase followed by the matching estimator.
    Simulated { scheme: TrainingScheme, cross: CrossCorrelation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqinrSpec {
    pub detector: Detector,
    pub placement: Placement,
    pub csi: CsiModel,
    /// Recompute the one-bit distortion covariance per draw from the
    /// arcsine law instead of the hardened `(1 - 2/pi) I`.
    pub exact_cqd: bool,
    /// Distortion factor of the high-resolution rows (0 = ideal).
    pub kappa_high: f64,
    /// Distortion factor of the remaining rows.
    pub kappa_low: f64,
    pub eta_eff: usize,
}

impl SqinrSpec {
    pub fn new(detector: Detector, placement: Placement, csi: CsiModel, eta_eff: usize) -> Self {
        Self { detector, placement, csi, exact_cqd: false, kappa_high: 0.0, kappa_low: ONE_BIT_KAPPA, eta_eff }
    }
}

const TERMS: usize = 6;

/// Channel, estimate and (for the analytic error average) per-row error
/// variances for one draw.
struct Draw {
    hhat: CMatrix,
    h: Option<CMatrix>,
    err_var: Option<Vec<f64>>,
}

fn draw_csi(config: &SystemConfig, csi: &CsiModel, need_h: bool, rng: &mut ChaCha8Rng) -> Result<Draw> {
    let (m, k) = (config.antennas, config.users);
    match csi {
        CsiModel::Perfect => {
            let h = cscg_matrix(rng, m, k, 1.0);
            Ok(Draw { hhat: h.clone(), h: Some(h), err_var: Some(vec![0.0; m]) })
        }
        CsiModel::Gaussian { row_var } => {
            let mut hhat = CMatrix::zeros(m, k);
            for r in 0..m {
                for c in 0..k {
                    hhat[(r, c)] = cscg(rng, row_var[r]);
                }
            }
            let err: Vec<f64> = row_var.iter().map(|s| 1.0 - s).collect();
            let h = if need_h {
                let mut h = hhat.clone();
                for r in 0..m {
                    for c in 0..k {
                        h[(r, c)] += cscg(rng, err[r]);
                    }
                }
                Some(h)
            } else {
                None
            };
            Ok(Draw { hhat, h, err_var: Some(err) })
        }
        CsiModel::Simulated { scheme, cross } => {
            let pilots = generate_pilots(config.pilot_len, k)?;
            let ch = draw_channel(config, rng);
            let est = match scheme {
                TrainingScheme::OneBitOnly => {
                    let obs = simulate_onebit(&ch, config, &pilots, rng)?;
                    estimate_onebit(&obs.ybank[0], config, &pilots)?
                }
                TrainingScheme::FullResRr => {
                    let obs = simulate_round_robin(&ch, config, &pilots, *scheme, rng)?;
                    estimate_fullres_rr(&obs, config, &pilots)?
                }
                TrainingScheme::JointRr => {
                    let obs = simulate_round_robin(&ch, config, &pilots, *scheme, rng)?;
                    estimate_joint_with(&obs, config, &pilots, *cross)?
                }
            };
            let mut hhat = est.ghat;
            for (c, mut col) in hhat.column_iter_mut().enumerate() {
                col /= Complex64::new(config.beta[c].sqrt(), 0.0);
            }
            Ok(Draw { hhat, h: Some(ch.h), err_var: None })
        }
    }
}

fn placement_mask(config: &SystemConfig, placement: Placement, hhat: &CMatrix, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
    let (m, n) = (config.antennas, config.highres);
    let mut mask = vec![false; m];
    match placement {
        Placement::Fixed => mask[..n].iter_mut().for_each(|v| *v = true),
        Placement::Random => sample(rng, m, n).into_iter().for_each(|i| mask[i] = true),
        Placement::Select(mode) => antenna_selection(hhat, n, mode)?.into_iter().for_each(|i| mask[i] = true),
    }
    Ok(mask)
}

/// Fills the six per-user terms of one draw.
fn sqinr_kernel(config: &SystemConfig, spec: &SqinrSpec, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
    let (m, k) = (config.antennas, config.users);
    let draw = draw_csi(config, &spec.csi, spec.exact_cqd, rng)?;
    let mask = placement_mask(config, spec.placement, &draw.hhat, rng)?;
    let model = DataPhaseModel::from_mask(config, mask, spec.kappa_high, spec.kappa_low);
    let w = match spec.detector {
        Detector::Mrc => draw.hhat.clone(),
        Detector::Zf => {
            let w = zf_detector(&draw.hhat, &model, config.sigma_n2)?;
            let defect = crate::linalg::identity_defect(&(w.adjoint() * &draw.hhat));
            if defect > 1e-8 {
                return numeric(format!("ZF detector violates W^H H = I by {defect:e}"));
            }
            w
        }
    };
    // exact one-bit distortion covariance on the low-resolution rows
    let exact = if spec.exact_cqd {
        let h = draw.h.as_ref().expect("true channel drawn for the exact model");
        let low: Vec<usize> = (0..m).filter(|&r| !model.highres[r]).collect();
        let sub = CMatrix::from_fn(low.len(), k, |r, c| h[(low[r], c)]);
        let mut cr = &sub * sub.adjoint() * Complex64::new(config.p_d, 0.0);
        for i in 0..low.len() {
            cr[(i, i)] += config.sigma_n2;
        }
        let d: Vec<f64> = cr.diagonal().iter().map(|z| z.re).collect();
        let cq = arcsine_cross_covariance(&cr, &d, &d)?;
        let scale = data_power(config) * FRAC_PI_2;
        Some((low, cq, scale))
    } else {
        None
    };
    let hh = draw.hhat.adjoint() * &w; // (i, k) = hhat_i^H w_k
    let ht = draw.h.as_ref().map(|h| h.adjoint() * &w);
    for kk in 0..k {
        let wk = w.column(kk);
        let o = &mut out[kk * TERMS..(kk + 1) * TERMS];
        let noise: f64 = wk.iter().map(|z| z.norm_sqr()).sum();
        match &draw.err_var {
            Some(err) => {
                // average over the error given the estimate
                let e: f64 = wk.iter().zip(err).map(|(z, v)| z.norm_sqr() * v).sum();
                let g = hh[(kk, kk)].conj();
                o[0] = g.re;
                o[1] = g.im;
                o[2] = g.norm_sqr() + e;
                o[3] = (0..k).map(|i| hh[(i, kk)].norm_sqr()).sum::<f64>() + k as f64 * e;
            }
            None => {
                let t = ht.as_ref().unwrap();
                let g = t[(kk, kk)].conj();
                o[0] = g.re;
                o[1] = g.im;
                o[2] = g.norm_sqr();
                o[3] = (0..k).map(|i| t[(i, kk)].norm_sqr()).sum();
            }
        }
        o[4] = noise;
        o[5] = match &exact {
            None => wk.iter().zip(&model.distortion).map(|(z, d)| z.norm_sqr() * d).sum(),
            Some((low, cq, scale)) => {
                let mut acc = ZERO;
                for (a, &ra) in low.iter().enumerate() {
                    for (b, &rb) in low.iter().enumerate() {
                        acc += wk[ra].conj() * cq[(a, b)] * wk[rb];
                    }
                }
                let high: f64 = (0..m)
                    .filter(|&r| model.highres[r])
                    .map(|r| wk[r].norm_sqr() * model.distortion[r])
                    .sum();
                acc.re * scale + high
            }
        };
    }
    Ok(())
}

/// SQINR from the six term means and its gradient with respect to them.
fn sqinr_and_grad(p: f64, s2: f64, t: &[f64]) -> (f64, [f64; TERMS]) {
    let a = t[0] * t[0] + t[1] * t[1];
    let den = p * t[3] - p * a + s2 * t[4] + t[5];
    let theta = p * a / den;
    let d2 = den * den;
    let common = p * (den + p * a) / d2;
    (
        theta,
        [2.0 * t[0] * common, 2.0 * t[1] * common, 0.0, -p * p * a / d2, -p * a * s2 / d2, -p * a / d2],
    )
}

/// Monte Carlo evaluation of the per-user SQINR expectations and the
/// resulting SE, with delta-method standard errors.
pub fn sqinr_empirical(config: &SystemConfig, spec: &SqinrSpec, plan: &TrialPlan) -> Result<SeReport> {
    if plan.trials < 100 {
        return invalid("at least 100 trials are required");
    }
    let (m, k) = (config.antennas, config.users);
    if spec.detector == Detector::Zf && m < k {
        return invalid("ZF needs at least as many antennas as users");
    }
    if let CsiModel::Gaussian { row_var } = &spec.csi {
        if row_var.len() != m {
            return invalid("row_var must have one entry per antenna");
        }
        for &s in row_var {
            check_var(s)?;
        }
    }
    if spec.eta_eff > config.coherence {
        return invalid("training length exceeds the coherence interval");
    }
    if spec.exact_cqd && spec.kappa_low != ONE_BIT_KAPPA {
        return invalid("the exact distortion model applies to one-bit rows only");
    }
    let dims = TERMS * k;
    let agg = run_trials_grouped(plan, dims, dims, |_, rng, out| sqinr_kernel(config, spec, rng, out))?;
    summarize(config, spec.eta_eff, &agg)
}

fn summarize(config: &SystemConfig, eta_eff: usize, agg: &Aggregate) -> Result<SeReport> {
    let k = config.users;
    let (p, s2) = (config.p_d, config.sigma_n2);
    let n = agg.count as f64;
    let cov = agg.covariance(0);
    let dims = TERMS * k;
    let pre = 1.0 - eta_eff as f64 / config.coherence as f64;
    let mut sqinr = Vec::with_capacity(k);
    let mut sqinr_se = Vec::with_capacity(k);
    let mut se_se = Vec::with_capacity(k);
    let mut terms = Vec::with_capacity(k);
    let mut grad_sum = vec![0.0; dims];
    for kk in 0..k {
        let t = &agg.mean[kk * TERMS..(kk + 1) * TERMS];
        let (theta, g) = sqinr_and_grad(p, s2, t);
        if !(theta >= 0.0) || !theta.is_finite() {
            return numeric(format!("SQINR estimate for user {kk} is {theta}"));
        }
        let block: Vec<f64> = (0..TERMS)
            .flat_map(|i| (0..TERMS).map(move |j| (i, j)))
            .map(|(i, j)| cov[(kk * TERMS + i) * dims + kk * TERMS + j])
            .collect();
        let var = quadratic(&g, &block).max(0.0) / n;
        let dse = pre / ((1.0 + theta) * std::f64::consts::LN_2);
        for i in 0..TERMS {
            grad_sum[kk * TERMS + i] = dse * g[i];
        }
        sqinr.push(theta);
        sqinr_se.push(var.sqrt());
        se_se.push(dse * var.sqrt());
        terms.push(SqinrTerms {
            gain_re: t[0],
            gain_im: t[1],
            gain_power: t[2],
            interference: t[3],
            noise: t[4],
            quantization: t[5],
        });
    }
    let mut report = SeReport::closed_form(sqinr, eta_eff, config.coherence)?;
    report.method = SeMethod::MonteCarlo;
    report.trials = Some(agg.count);
    report.sqinr_stderr = Some(sqinr_se);
    report.se_stderr = Some(se_se);
    report.sum_se_stderr = Some((quadratic(&grad_sum, &cov).max(0.0) / n).sqrt());
    report.terms = Some(terms);
    Ok(report)
}

/// Imperfect-CSI ZF SQINR of a full-resolution array,
/// `p (M - K) s / (p K (1 - s) + sigma^2)`.
pub fn zf_fullres_sqinr(config: &SystemConfig, sigma_hhat2: f64) -> f64 {
    let (m, k) = (config.antennas as f64, config.users as f64);
    let p = config.p_d;
    p * (m - k) * sigma_hhat2 / (p * k * (1.0 - sigma_hhat2) + config.sigma_n2)
}
