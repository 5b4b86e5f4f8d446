//! One-bit quantization, its Bussgang linearization, the arcsine-law
//! distortion covariance, and AQNM gains of multi-bit Lloyd-Max quantizers.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{invalid, numeric, Result};
use crate::linalg::{cholesky_lower, hermitian_defect, CMatrix};
use crate::special::{normal_pdf, normal_quantile, normal_sf};
use crate::sysmodel::{PilotMatrix, SystemConfig};

#[inline]
fn sign_bit(v: f64) -> f64 {
    if v < 0.0 {
        -FRAC_1_SQRT_2
    } else {
        FRAC_1_SQRT_2
    }
}

/// Quantizes one complex sample to `(+-1 +- j)/sqrt(2)`. Zero maps to the
/// positive level.
#[inline]
pub fn one_bit(z: Complex64) -> Complex64 {
    Complex64::new(sign_bit(z.re), sign_bit(z.im))
}

pub fn one_bit_quantize(x: &[Complex64]) -> Vec<Complex64> {
    x.iter().copied().map(one_bit).collect()
}

pub fn one_bit_quantize_matrix(x: &CMatrix) -> CMatrix {
    x.map(one_bit)
}

/// Element-wise arcsine applied separately to real and imaginary parts.
#[inline]
fn asin_split(c: Complex64) -> Complex64 {
    Complex64::new(c.re.clamp(-1.0, 1.0).asin(), c.im.clamp(-1.0, 1.0).asin())
}

/// Autocorrelation of one antenna's pilot-phase row in the conjugated
/// convention, `sum_k gain_k phi_k^* phi_k^T + noise * I`, where
/// `gain_k = eta p_k beta_k`. An empty gain list gives the noise-only matrix.
pub fn input_covariance(phi: &CMatrix, gains: &[f64], noise: f64) -> CMatrix {
    let eta = phi.nrows();
    let mut c = CMatrix::identity(eta, eta) * Complex64::new(noise, 0.0);
    for (k, &gk) in gains.iter().enumerate() {
        for r in 0..eta {
            for s in 0..eta {
                c[(r, s)] += phi[(r, k)].conj() * phi[(s, k)] * gk;
            }
        }
    }
    c
}

/// Per-user pilot energies `eta p_k beta_k` for the configured powers.
pub fn pilot_gains(config: &SystemConfig, pilots: &PilotMatrix) -> Vec<f64> {
    let eta = pilots.len() as f64;
    config
        .training_powers()
        .iter()
        .zip(&config.beta)
        .map(|(p, b)| eta * p * b)
        .collect()
}

/// `C_x` of the quantizer input during training.
pub fn pilot_autocorrelation(config: &SystemConfig, pilots: &PilotMatrix) -> CMatrix {
    input_covariance(&pilots.phi, &pilot_gains(config, pilots), config.sigma_n2)
}

/// Noise-free part of [`pilot_autocorrelation`]; this is also the
/// cross-covariance between two training repetitions with independent noise.
pub fn pilot_signal_covariance(config: &SystemConfig, pilots: &PilotMatrix) -> CMatrix {
    input_covariance(&pilots.phi, &pilot_gains(config, pilots), 0.0)
}

fn check_hermitian(c: &CMatrix) -> Result<()> {
    if !c.is_square() {
        return invalid("covariance must be square");
    }
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    if hermitian_defect(c) > 1e-10 * scale {
        return invalid("covariance is not Hermitian");
    }
    Ok(())
}

/// Distortion cross-covariance of two one-bit quantizers whose Gaussian
/// inputs have cross-covariance `cross` and per-entry powers `left`, `right`:
/// `(2/pi) asin(L^{-1/2} C R^{-1/2}) - (2/pi) L^{-1/2} C R^{-1/2}`.
pub fn arcsine_cross_covariance(cross: &CMatrix, left: &[f64], right: &[f64]) -> Result<CMatrix> {
    if left.len() != cross.nrows() || right.len() != cross.ncols() {
        return invalid("power vectors do not match the covariance shape");
    }
    if left.iter().chain(right).any(|&d| !(d > 0.0)) {
        return invalid("input powers must be positive");
    }
    Ok(CMatrix::from_fn(cross.nrows(), cross.ncols(), |r, s| {
        let rho = cross[(r, s)] / (left[r] * right[s]).sqrt();
        (asin_split(rho) - rho) * FRAC_2_PI
    }))
}

/// Arcsine-law covariance of the one-bit distortion for input covariance `cx`.
pub fn arcsine_covariance(cx: &CMatrix) -> Result<CMatrix> {
    check_hermitian(cx)?;
    if cholesky_lower(cx).is_none() {
        return invalid("input covariance is not positive definite");
    }
    let d: Vec<f64> = cx.diagonal().iter().map(|z| z.re).collect();
    arcsine_cross_covariance(cx, &d, &d)
}

/// Bussgang decomposition `Q(x) = gain * x + q` of a one-bit quantizer with
/// Gaussian input covariance `C_x`.
#[derive(Debug, Clone)]
pub struct BussgangModel {
    /// `diag(C_x)`.
    pub dx: Vec<f64>,
    /// Diagonal of `sqrt(2/pi) D_x^{-1/2}`.
    pub gain: Vec<f64>,
    /// Distortion covariance `C_q`.
    pub cq: CMatrix,
}

impl BussgangModel {
    pub fn new(cx: &CMatrix) -> Result<Self> {
        let cq = arcsine_covariance(cx)?;
        let dx: Vec<f64> = cx.diagonal().iter().map(|z| z.re).collect();
        let gain = dx.iter().map(|d| (FRAC_2_PI / d).sqrt()).collect();
        Ok(Self { dx, gain, cq })
    }

    /// Covariance of the quantizer output predicted by the model,
    /// `G C_x G + C_q`. Has unit diagonal.
    pub fn output_covariance(&self, cx: &CMatrix) -> CMatrix {
        CMatrix::from_fn(cx.nrows(), cx.ncols(), |r, s| {
            cx[(r, s)] * self.gain[r] * self.gain[s] + self.cq[(r, s)]
        })
    }
}

/// AQNM gain of a `bits`-bit quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AqnmGain {
    pub bits: u32,
    /// `alpha_0 = 1 - rho`, with `rho` the normalized Lloyd-Max distortion.
    pub alpha0: f64,
}

pub const MAX_AQNM_BITS: u32 = 12;

/// Optimal (Lloyd-Max) quantizer for a unit-variance Gaussian.
#[derive(Debug, Clone)]
pub struct LloydMax {
    /// Positive reconstruction levels in increasing order (symmetric quantizer).
    pub levels: Vec<f64>,
    /// Positive decision thresholds between consecutive levels.
    pub thresholds: Vec<f64>,
    /// Mean squared error.
    pub distortion: f64,
    pub iterations: usize,
}

/// Centroid of the unit Gaussian on `[a, b)` (`0 <= a < b <= inf`), with
/// the cell mass and the sensitivities of the centroid to both edges.
fn cell(a: f64, b: f64) -> (f64, f64, f64, f64) {
    let mass = normal_sf(a) - normal_sf(b);
    let pa = normal_pdf(a);
    let pb = if b.is_finite() { normal_pdf(b) } else { 0.0 };
    let y = (pa - pb) / mass;
    let dy_da = pa * (y - a) / mass;
    let dy_db = if b.is_finite() { pb * (b - y) / mass } else { 0.0 };
    (y, mass, dy_da, dy_db)
}

fn centroids(thresholds: &[f64]) -> Vec<(f64, f64, f64, f64)> {
    let half = thresholds.len() + 1;
    (0..half)
        .map(|i| {
            let a = if i == 0 { 0.0 } else { thresholds[i - 1] };
            let b = thresholds.get(i).copied().unwrap_or(f64::INFINITY);
            cell(a, b)
        })
        .collect()
}

fn residual(thresholds: &[f64], cells: &[(f64, f64, f64, f64)]) -> Vec<f64> {
    thresholds
        .iter()
        .enumerate()
        .map(|(i, t)| t - 0.5 * (cells[i].0 + cells[i + 1].0))
        .collect()
}

/// Solves the Lloyd-Max conditions for `2^bits` levels.
///
/// A few plain Lloyd sweeps from a companding start are followed by Newton
/// steps on the tridiagonal midpoint system, which converge quadratically
/// where the plain fixed point crawls for many levels.
pub fn lloyd_max(bits: u32) -> Result<LloydMax> {
    if bits == 0 || bits > MAX_AQNM_BITS {
        return invalid(format!("bits must be in 1..={MAX_AQNM_BITS}, got {bits}"));
    }
    let half = 1usize << (bits - 1);
    // companding start: thresholds at quantiles of N(0, 3)
    let mut t: Vec<f64> = (1..half)
        .map(|i| 3f64.sqrt() * normal_quantile(0.5 + 0.5 * i as f64 / half as f64))
        .collect();
    let mut iterations = 0;
    for _ in 0..50 {
        iterations += 1;
        let cells = centroids(&t);
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = 0.5 * (cells[i].0 + cells[i + 1].0);
        }
    }
    let n = t.len();
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cells = centroids(&t);
    let mut r = residual(&t, &cells);
    let floor = 4.0 * f64::EPSILON * t.last().map_or(1.0, |v| v.max(1.0));
    while norm(&r) > floor && n > 0 {
        iterations += 1;
        if iterations > 500 {
            return numeric(format!("Lloyd-Max for {bits} bits did not converge, residual {:e}", norm(&r)));
        }
        // Jacobian of r_i = t_i - (y_i + y_{i+1}) / 2
        let mut diag = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            diag[i] = 1.0 - 0.5 * (cells[i].3 + cells[i + 1].2);
            if i > 0 {
                lower[i] = -0.5 * cells[i].2;
            }
            if i + 1 < n {
                upper[i] = -0.5 * cells[i + 1].3;
            }
        }
        // Thomas algorithm for J * step = r
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let denom = diag[i] - if i > 0 { lower[i] * c[i - 1] } else { 0.0 };
            c[i] = upper[i] / denom;
            d[i] = (r[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / denom;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        let before = norm(&r);
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = t.iter().zip(&d).map(|(ti, s)| ti - scale * s).collect();
            let ordered = trial[0] > 0.0 && trial.windows(2).all(|w| w[0] < w[1]);
            if ordered {
                let trial_cells = centroids(&trial);
                let trial_r = residual(&trial, &trial_cells);
                if norm(&trial_r) < before || scale < 1e-6 {
                    t = trial;
                    cells = trial_cells;
                    r = trial_r;
                    break;
                }
            }
            scale *= 0.5;
            if scale < 1e-9 {
                return numeric(format!("Lloyd-Max line search failed for {bits} bits"));
            }
        }
        if norm(&r) >= before && before < 1e3 * floor {
            // rounding floor reached
            break;
        }
    }
    let levels: Vec<f64> = cells.iter().map(|c| c.0).collect();
    // with centroid levels D = 1 - E[Q(X)^2]
    let second: f64 = cells.iter().map(|c| 2.0 * c.0 * c.0 * c.1).sum();
    Ok(LloydMax { levels, thresholds: t, distortion: 1.0 - second, iterations })
}

fn alpha_table() -> &'static [OnceLock<f64>; MAX_AQNM_BITS as usize] {
    static TABLE: [OnceLock<f64>; MAX_AQNM_BITS as usize] = [const { OnceLock::new() }; MAX_AQNM_BITS as usize];
    &TABLE
}

/// AQNM gain `alpha_0` for `bits` in `1..=12`, from an embedded Lloyd-Max
/// solve (cached per resolution).
pub fn aqnm_alpha(bits: u32) -> Result<AqnmGain> {
    if bits == 0 || bits > MAX_AQNM_BITS {
        return invalid(format!("bits must be in 1..={MAX_AQNM_BITS}, got {bits}"));
    }
    if bits == 1 {
        return Ok(AqnmGain { bits, alpha0: FRAC_2_PI });
    }
    let cell = &alpha_table()[bits as usize - 1];
    if let Some(&a) = cell.get() {
        return Ok(AqnmGain { bits, alpha0: a });
    }
    let a = 1.0 - lloyd_max(bits)?.distortion;
    Ok(AqnmGain { bits, alpha0: *cell.get_or_init(|| a) })
}
