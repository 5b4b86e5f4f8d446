//! LMMSE channel estimators: one-bit only, round-robin full resolution, and
//! joint full-resolution/one-bit, plus the pilot-phase simulator.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{cscg_matrix, identity_defect, quad_form_conj, CMatrix, CVector};
use crate::quantization::{
    arcsine_covariance, arcsine_cross_covariance, one_bit_quantize_matrix, pilot_autocorrelation,
    pilot_signal_covariance,
};
use crate::montecarlo::{run_trials, TrialPlan};
use crate::sysmodel::{draw_channel, generate_pilots, ChannelMatrix, PilotMatrix, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainingScheme {
    OneBitOnly,
    FullResRr,
    JointRr,
}

/// How the correlation between one-bit observations of different
/// round-robin sub-intervals enters the joint estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossCorrelation {
    /// Arcsine law on the noiseless cross-covariance, normalized by its own
    /// diagonal. Reduces to `pi/2 - 1` (times `beta_k`) under power control.
    #[default]
    Noiseless,
    /// Arcsine law on the noiseless cross-covariance normalized by the
    /// noisy per-symbol powers, i.e. the true correlation of the distortion
    /// terms across sub-intervals.
    Exact,
    /// Correlation ignored (`rho = 0`), as an AQNM-style model would.
    Ignored,
}

/// Pilot-phase observations at the base station.
#[derive(Debug, Clone)]
pub struct TrainingObservations {
    pub scheme: TrainingScheme,
    /// `M x eta` unquantized rows, one per antenna, from the sub-interval in
    /// which the antenna was connected to a high-resolution ADC.
    pub x: Option<CMatrix>,
    /// One-bit observation blocks. `M/N - 1` blocks for joint training, a
    /// single block for one-bit-only training, none otherwise.
    pub ybank: Vec<CMatrix>,
}

/// Closed-form per-user variances of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variances {
    pub var_est: Vec<f64>,
    pub var_err: Vec<f64>,
    /// `var_est / beta`.
    pub sigma_hhat2: Vec<f64>,
    /// Training symbols spent.
    pub eta_eff: usize,
}

impl Variances {
    fn from_err(beta: &[f64], var_err: Vec<f64>, eta_eff: usize) -> Self {
        let var_est: Vec<f64> = beta.iter().zip(&var_err).map(|(b, e)| b - e).collect();
        let sigma_hhat2 = var_est.iter().zip(beta).map(|(v, b)| v / b).collect();
        Self { var_est, var_err, sigma_hhat2, eta_eff }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// `M x K` channel estimate.
    pub ghat: CMatrix,
    pub var_est: Vec<f64>,
    pub var_err: Vec<f64>,
    pub sigma_hhat2: Vec<f64>,
    pub eta_eff: usize,
}

impl EstimationResult {
    fn new(ghat: CMatrix, v: Variances) -> Self {
        Self {
            ghat,
            var_est: v.var_est,
            var_err: v.var_err,
            sigma_hhat2: v.sigma_hhat2,
            eta_eff: v.eta_eff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointWeights {
    pub w_inf: Vec<f64>,
    pub w_one: Vec<f64>,
    pub varsigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma_w2: Vec<f64>,
}

/// Returns `K p` when power control is active, `eta = K` and the pilot
/// matrix is unitary, which makes every covariance a scaled identity.
fn corollary_case(config: &SystemConfig, pilots: &PilotMatrix) -> Option<f64> {
    if pilots.len() != pilots.users() || !config.is_power_controlled() {
        return None;
    }
    let outer = &pilots.phi * pilots.phi.adjoint();
    if identity_defect(&outer) > 1e-12 {
        return None;
    }
    let p = config.training_powers()[0] * config.beta[0];
    Some(config.users as f64 * p)
}

/// `sqrt(pi/2) D^{1/2} phi_k` for the given diagonal.
fn effective_pilot(phi: &CVector, diag: &[f64]) -> CVector {
    CVector::from_iterator(
        phi.len(),
        phi.iter().zip(diag).map(|(v, d)| v * (FRAC_PI_2 * d).sqrt()),
    )
}

fn diag_of(c: &CMatrix) -> Vec<f64> {
    c.diagonal().iter().map(|z| z.re).collect()
}

/// Precomputed one-bit training statistics.
struct OneBitModel {
    /// Effective pilots after the Bussgang gain, built from the noisy `D_x`.
    phibar: Vec<CVector>,
    sigma_w2: Vec<f64>,
}

fn onebit_model(config: &SystemConfig, pilots: &PilotMatrix) -> Result<OneBitModel> {
    check_pilots(config, pilots)?;
    let cx = pilot_autocorrelation(config, pilots);
    let dx = diag_of(&cx);
    let cq = arcsine_covariance(&cx)?;
    let eta = pilots.len() as f64;
    let pk = config.training_powers();
    let mut phibar = Vec::with_capacity(config.users);
    let mut sigma_w2 = Vec::with_capacity(config.users);
    for k in 0..config.users {
        let pb = effective_pilot(&pilots.column(k), &dx);
        sigma_w2.push((config.sigma_n2 + quad_form_conj(&pb, &cq)) / (eta * pk[k]));
        phibar.push(pb);
    }
    Ok(OneBitModel { phibar, sigma_w2 })
}

fn check_pilots(config: &SystemConfig, pilots: &PilotMatrix) -> Result<()> {
    if pilots.users() != config.users || pilots.len() != config.pilot_len {
        return invalid(format!(
            "pilot matrix is {}x{} but config has eta={}, K={}",
            pilots.len(),
            pilots.users(),
            config.pilot_len,
            config.users
        ));
    }
    Ok(())
}

/// Effective-noise variance `sigma_w^2` of each user's one-bit observation.
pub fn onebit_sigma_w2(config: &SystemConfig, pilots: &PilotMatrix) -> Result<Vec<f64>> {
    if let Some(kp) = corollary_case(config, pilots) {
        check_pilots(config, pilots)?;
        let s2 = config.sigma_n2;
        return Ok(config
            .beta
            .iter()
            .map(|b| b * (s2 + (FRAC_PI_2 - 1.0) * (kp + s2)) / kp)
            .collect());
    }
    Ok(onebit_model(config, pilots)?.sigma_w2)
}

/// Correlation `rho_k` between the effective noises of two one-bit
/// sub-intervals.
pub fn cross_correlation(
    config: &SystemConfig,
    pilots: &PilotMatrix,
    model: CrossCorrelation,
) -> Result<Vec<f64>> {
    check_pilots(config, pilots)?;
    let k = config.users;
    if model == CrossCorrelation::Ignored {
        return Ok(vec![0.0; k]);
    }
    if let Some(kp) = corollary_case(config, pilots) {
        let per_beta = match model {
            CrossCorrelation::Noiseless => FRAC_PI_2 - 1.0,
            _ => {
                let r = kp / (kp + config.sigma_n2);
                (r.asin() - r) / r
            }
        };
        return Ok(config.beta.iter().map(|b| b * per_beta).collect());
    }
    let cbar = pilot_signal_covariance(config, pilots);
    let norm = match model {
        CrossCorrelation::Noiseless => diag_of(&cbar),
        _ => diag_of(&pilot_autocorrelation(config, pilots)),
    };
    let cq = arcsine_cross_covariance(&cbar, &norm, &norm)?;
    let eta = pilots.len() as f64;
    let pk = config.training_powers();
    Ok((0..k)
        .map(|u| quad_form_conj(&effective_pilot(&pilots.column(u), &norm), &cq) / (eta * pk[u]))
        .collect())
}

pub fn onebit_variances(config: &SystemConfig, pilots: &PilotMatrix) -> Result<Variances> {
    let sw = onebit_sigma_w2(config, pilots)?;
    let err = config.beta.iter().zip(&sw).map(|(b, s)| s * b / (b + s)).collect();
    Ok(Variances::from_err(&config.beta, err, config.pilot_len))
}

pub fn fullres_variances(config: &SystemConfig, pilots: &PilotMatrix) -> Result<Variances> {
    check_pilots(config, pilots)?;
    let ratio = config.ratio()?;
    let eta = pilots.len() as f64;
    let err = config
        .training_powers()
        .iter()
        .zip(&config.beta)
        .map(|(p, b)| b / (1.0 + eta * p * b / config.sigma_n2))
        .collect();
    Ok(Variances::from_err(&config.beta, err, ratio * config.pilot_len))
}

/// Combining weights of the joint estimator.
pub fn joint_weights(
    config: &SystemConfig,
    pilots: &PilotMatrix,
    model: CrossCorrelation,
) -> Result<JointWeights> {
    let ratio = config.ratio()?;
    let sigma_w2 = onebit_sigma_w2(config, pilots)?;
    let rho = cross_correlation(config, pilots, model)?;
    let eta = pilots.len() as f64;
    let pk = config.training_powers();
    let blocks = (ratio - 1) as f64;
    let mut w = JointWeights {
        w_inf: Vec::with_capacity(config.users),
        w_one: Vec::with_capacity(config.users),
        varsigma: Vec::with_capacity(config.users),
        rho,
        sigma_w2,
    };
    for k in 0..config.users {
        let snr = eta * pk[k] / config.sigma_n2;
        let vs = if ratio > 1 {
            blocks / (w.sigma_w2[k] + (blocks - 1.0) * w.rho[k])
        } else {
            0.0
        };
        let den = 1.0 / config.beta[k] + snr + vs;
        w.w_inf.push(snr / den);
        w.w_one.push(if ratio > 1 { vs / blocks / den } else { 0.0 });
        w.varsigma.push(vs);
    }
    Ok(w)
}

pub fn joint_variances(
    config: &SystemConfig,
    pilots: &PilotMatrix,
    model: CrossCorrelation,
) -> Result<Variances> {
    let w = joint_weights(config, pilots, model)?;
    let eta = pilots.len() as f64;
    let pk = config.training_powers();
    let err = (0..config.users)
        .map(|k| 1.0 / (1.0 / config.beta[k] + eta * pk[k] / config.sigma_n2 + w.varsigma[k]))
        .collect();
    Ok(Variances::from_err(&config.beta, err, config.ratio()? * config.pilot_len))
}

/// Closed-form variances of `scheme`; `model` only matters for joint training.
pub fn variances(
    scheme: TrainingScheme,
    config: &SystemConfig,
    pilots: &PilotMatrix,
    model: CrossCorrelation,
) -> Result<Variances> {
    match scheme {
        TrainingScheme::OneBitOnly => onebit_variances(config, pilots),
        TrainingScheme::FullResRr => fullres_variances(config, pilots),
        TrainingScheme::JointRr => joint_variances(config, pilots, model),
    }
}

/// Noise-free received pilot block `sum_k sqrt(eta p_k) g_k phi_k^T`.
fn pilot_signal(channel: &ChannelMatrix, config: &SystemConfig, pilots: &PilotMatrix) -> CMatrix {
    let eta = pilots.len() as f64;
    let amp: Vec<Complex64> = config
        .training_powers()
        .iter()
        .map(|p| Complex64::new((eta * p).sqrt(), 0.0))
        .collect();
    let mut scaled = channel.g.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= amp[k];
    }
    scaled * pilots.phi.transpose()
}

/// One pilot block received entirely through one-bit ADCs.
pub fn simulate_onebit<R: Rng + ?Sized>(
    channel: &ChannelMatrix,
    config: &SystemConfig,
    pilots: &PilotMatrix,
    rng: &mut R,
) -> Result<TrainingObservations> {
    check_pilots(config, pilots)?;
    let s = pilot_signal(channel, config, pilots);
    let r = s + cscg_matrix(rng, config.antennas, pilots.len(), config.sigma_n2);
    Ok(TrainingObservations {
        scheme: TrainingScheme::OneBitOnly,
        x: None,
        ybank: vec![one_bit_quantize_matrix(&r)],
    })
}

/// Round-robin training over `M/N` sub-intervals. Sub-interval `s` connects
/// the high-resolution ADCs to antennas `s*N .. (s+1)*N`; with
/// [`TrainingScheme::JointRr`] the remaining antennas' one-bit rows are
/// kept, the `t`-th foreign sub-interval of each antenna going to block `t`.
pub fn simulate_round_robin<R: Rng + ?Sized>(
    channel: &ChannelMatrix,
    config: &SystemConfig,
    pilots: &PilotMatrix,
    scheme: TrainingScheme,
    rng: &mut R,
) -> Result<TrainingObservations> {
    check_pilots(config, pilots)?;
    if scheme == TrainingScheme::OneBitOnly {
        return invalid("round-robin simulation needs a round-robin scheme");
    }
    let ratio = config.ratio()?;
    if ratio * pilots.len() > config.coherence {
        return invalid("round-robin training exceeds the coherence interval");
    }
    let (m, n, eta) = (config.antennas, config.highres, pilots.len());
    let s = pilot_signal(channel, config, pilots);
    let mut x = CMatrix::zeros(m, eta);
    let joint = scheme == TrainingScheme::JointRr;
    let mut ybank = if joint { vec![CMatrix::zeros(m, eta); ratio - 1] } else { Vec::new() };
    for sub in 0..ratio {
        let r = &s + cscg_matrix(rng, m, eta, config.sigma_n2);
        for row in 0..m {
            let group = row / n;
            if group == sub {
                x.row_mut(row).copy_from(&r.row(row));
            } else if joint {
                let t = if sub < group { sub } else { sub - 1 };
                let q = r.row(row).map(crate::quantization::one_bit);
                ybank[t].row_mut(row).copy_from(&q);
            }
        }
    }
    Ok(TrainingObservations { scheme, x: Some(x), ybank })
}

fn check_unit_modulus(y: &CMatrix) -> Result<()> {
    if y.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
        return invalid("one-bit observations must have unit modulus");
    }
    Ok(())
}

/// Stacks the `k`-th effective pilot as `Y phibar_k^*` into column `k`.
fn project(y: &CMatrix, pilots: &[CVector], scale: &[f64]) -> CMatrix {
    let mut out = CMatrix::zeros(y.nrows(), pilots.len());
    for (k, pb) in pilots.iter().enumerate() {
        let col = y * pb.conjugate() * Complex64::new(scale[k], 0.0);
        out.set_column(k, &col);
    }
    out
}

/// LMMSE estimate from a single one-bit pilot block.
pub fn estimate_onebit(y: &CMatrix, config: &SystemConfig, pilots: &PilotMatrix) -> Result<EstimationResult> {
    check_unit_modulus(y)?;
    if y.nrows() != config.antennas || y.ncols() != pilots.len() {
        return invalid("observation shape does not match M x eta");
    }
    let model = onebit_model(config, pilots)?;
    let eta = pilots.len() as f64;
    let pk = config.training_powers();
    let scale: Vec<f64> = (0..config.users)
        .map(|k| {
            let b = config.beta[k];
            b / (b + model.sigma_w2[k]) / (eta * pk[k]).sqrt()
        })
        .collect();
    let ghat = project(y, &model.phibar, &scale);
    Ok(EstimationResult::new(ghat, onebit_variances(config, pilots)?))
}

/// LMMSE estimate from the round-robin unquantized rows only.
pub fn estimate_fullres_rr(
    obs: &TrainingObservations,
    config: &SystemConfig,
    pilots: &PilotMatrix,
) -> Result<EstimationResult> {
    let x = match (&obs.scheme, &obs.x) {
        (TrainingScheme::OneBitOnly, _) | (_, None) => {
            return invalid("full-resolution estimation needs round-robin observations")
        }
        (_, Some(x)) => x,
    };
    let eta = pilots.len() as f64;
    let pk = config.training_powers();
    let cols: Vec<CVector> = (0..config.users).map(|k| pilots.column(k)).collect();
    let scale: Vec<f64> = (0..config.users)
        .map(|k| {
            let snr = eta * pk[k] * config.beta[k] / config.sigma_n2;
            1.0 / (1.0 + 1.0 / snr) / (eta * pk[k]).sqrt()
        })
        .collect();
    let ghat = project(x, &cols, &scale);
    Ok(EstimationResult::new(ghat, fullres_variances(config, pilots)?))
}

pub fn estimate_joint(
    obs: &TrainingObservations,
    config: &SystemConfig,
    pilots: &PilotMatrix,
) -> Result<EstimationResult> {
    estimate_joint_with(obs, config, pilots, CrossCorrelation::default())
}

/// Joint estimate combining the unquantized rows and every one-bit block.
pub fn estimate_joint_with(
    obs: &TrainingObservations,
    config: &SystemConfig,
    pilots: &PilotMatrix,
    model: CrossCorrelation,
) -> Result<EstimationResult> {
    let x = match (&obs.scheme, &obs.x) {
        (TrainingScheme::JointRr, Some(x)) => x,
        _ => return invalid("joint estimation needs JOINT_RR observations"),
    };
    let ratio = config.ratio()?;
    if obs.ybank.len() != ratio - 1 {
        return invalid(format!("expected {} one-bit blocks, got {}", ratio - 1, obs.ybank.len()));
    }
    let w = joint_weights(config, pilots, model)?;
    let eta = pilots.len() as f64;
    let pk = config.training_powers();
    let amp: Vec<f64> = pk.iter().map(|p| 1.0 / (eta * p).sqrt()).collect();
    let cols: Vec<CVector> = (0..config.users).map(|k| pilots.column(k)).collect();
    let s_inf: Vec<f64> = (0..config.users).map(|k| amp[k] * w.w_inf[k]).collect();
    let mut ghat = project(x, &cols, &s_inf);
    if ratio > 1 {
        let model1 = onebit_model(config, pilots)?;
        let s_one: Vec<f64> = (0..config.users).map(|k| amp[k] * w.w_one[k]).collect();
        let mut sum = CMatrix::zeros(config.antennas, pilots.len());
        for y in &obs.ybank {
            check_unit_modulus(y)?;
            sum += y;
        }
        ghat += project(&sum, &model1.phibar, &s_one);
    }
    Ok(EstimationResult::new(ghat, joint_variances(config, pilots, model)?))
}

/// `sigma_eps^2 / beta` of the one-bit estimator under power control with
/// `eta = K` and unitary pilots.
pub fn onebit_error_normalized(kp_over_noise: f64) -> f64 {
    (kp_over_noise * (1.0 - FRAC_2_PI) + 1.0) / (1.0 + kp_over_noise)
}

/// `varsigma` under power control with `eta = K` and unitary pilots.
pub fn varsigma_power_controlled(kp_over_noise: f64, ratio: usize) -> f64 {
    let b = ratio as f64 - 1.0;
    b / (FRAC_PI_2 / kp_over_noise + (FRAC_PI_2 - 1.0) * b)
}

/// Sampled per-user estimation MSE `E|ghat_mk - g_mk|^2`, averaged over
/// antennas, with standard errors. Each trial draws a fresh channel.
pub fn estimation_mse_mc(
    config: &SystemConfig,
    scheme: TrainingScheme,
    model: CrossCorrelation,
    plan: &TrialPlan,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pilots = generate_pilots(config.pilot_len, config.users)?;
    let m = config.antennas as f64;
    let agg = run_trials(plan, config.users, |_, rng, out| {
        let ch = draw_channel(config, rng);
        let est = match scheme {
            TrainingScheme::OneBitOnly => {
                let obs = simulate_onebit(&ch, config, &pilots, rng)?;
                estimate_onebit(&obs.ybank[0], config, &pilots)?
            }
            TrainingScheme::FullResRr => {
                let obs = simulate_round_robin(&ch, config, &pilots, scheme, rng)?;
                estimate_fullres_rr(&obs, config, &pilots)?
            }
            TrainingScheme::JointRr => {
                let obs = simulate_round_robin(&ch, config, &pilots, scheme, rng)?;
                estimate_joint_with(&obs, config, &pilots, model)?
            }
        };
        for (k, o) in out.iter_mut().enumerate() {
            let col = est.ghat.column(k) - ch.g.column(k);
            *o = col.iter().map(|z| z.norm_sqr()).sum::<f64>() / m;
        }
        Ok(())
    })?;
    let se = agg.stderr();
    Ok((agg.mean, se))
}
