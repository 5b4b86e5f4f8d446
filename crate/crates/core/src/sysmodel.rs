//! System configuration, orthonormal pilots, Rayleigh channel draws and
//! statistics-aware power control.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cscg_matrix, CMatrix};

/// Scalar parameters of the single-cell uplink.
///
/// `highres` may be zero to describe an array without any high-resolution
/// ADCs; round-robin training requires at least one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Base-station antennas `M`.
    pub antennas: usize,
    /// High-resolution ADC pairs `N`.
    pub highres: usize,
    /// Single-antenna users `K`.
    pub users: usize,
    /// Coherence interval `T` in symbols.
    pub coherence: usize,
    /// Pilot length `eta` in symbols.
    pub pilot_len: usize,
    /// Noise power.
    pub sigma_n2: f64,
    /// Nominal received power per user after power control.
    pub p: f64,
    /// Received power per user during training.
    pub p_t: f64,
    /// Received power per user during data transmission.
    pub p_d: f64,
    /// Large-scale gains, one per user.
    pub beta: Vec<f64>,
    /// Explicit per-user transmit powers during training. When absent the
    /// statistics-aware policy `p_t / beta_k` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_powers: Option<Vec<f64>>,
}

impl SystemConfig {
    pub fn builder() -> SystemConfigBuilder {
        SystemConfigBuilder::default()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, k, t, eta) = (self.antennas, self.highres, self.users, self.coherence, self.pilot_len);
        if m == 0 || k == 0 || t == 0 {
            return invalid("antennas, users and coherence must be positive");
        }
        if n > m {
            return invalid(format!("highres ({n}) exceeds antennas ({m})"));
        }
        if n > 0 && m % n != 0 {
            return invalid(format!("antennas ({m}) must be a multiple of highres ({n})"));
        }
        if eta < k || eta > t {
            return invalid(format!("pilot length {eta} must satisfy K={k} <= eta <= T={t}"));
        }
        if n > 0 && (m / n) * eta > t {
            return invalid(format!(
                "round-robin training needs (M/N)*eta = {} symbols but T = {t}",
                (m / n) * eta
            ));
        }
        for (name, v) in [("sigma_n2", self.sigma_n2), ("p", self.p), ("p_t", self.p_t), ("p_d", self.p_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.beta.len() != k {
            return invalid(format!("beta has {} entries for {k} users", self.beta.len()));
        }
        if self.beta.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return invalid("large-scale gains must be positive");
        }
        if let Some(pk) = &self.tx_powers {
            if pk.len() != k || pk.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return invalid("tx_powers must hold one positive power per user");
            }
        }
        Ok(())
    }

    /// `M / N`, the number of round-robin sub-intervals.
    pub fn ratio(&self) -> Result<usize> {
        if self.highres == 0 {
            return invalid("round-robin training needs at least one high-resolution ADC");
        }
        Ok(self.antennas / self.highres)
    }

    /// `P_ave / sigma_n^2` in dB, from the nominal power `p`.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.p / self.sigma_n2).log10()
    }

    /// Per-user training transmit powers `p_k`.
    pub fn training_powers(&self) -> Vec<f64> {
        match &self.tx_powers {
            Some(pk) => pk.clone(),
            None => self.beta.iter().map(|b| self.p_t / b).collect(),
        }
    }

    /// True when `p_k beta_k` is the same for every user.
    pub fn is_power_controlled(&self) -> bool {
        let pk = self.training_powers();
        let first = pk[0] * self.beta[0];
        pk.iter()
            .zip(&self.beta)
            .all(|(p, b)| ((p * b) - first).abs() <= 1e-12 * first)
    }

    pub fn with_highres(&self, highres: usize) -> Result<Self> {
        let mut c = self.clone();
        c.highres = highres;
        c.validate()?;
        Ok(c)
    }

    pub fn with_powers(&self, p_t: f64, p_d: f64) -> Self {
        let mut c = self.clone();
        c.p_t = p_t;
        c.p_d = p_d;
        c
    }

    /// Loads a config from a JSON (`.json`) or TOML (anything else) file.
    ///
    /// Keys mirror the struct fields (the symbols `M`, `N`, `K`, `T`, `eta`
    /// are accepted as aliases). Powers are linear unless the key ends in
    /// `_db`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
        };
        raw.resolve()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(alias = "M", alias = "m")]
    antennas: Option<usize>,
    #[serde(alias = "N", alias = "n")]
    highres: Option<usize>,
    #[serde(alias = "K", alias = "k")]
    users: Option<usize>,
    #[serde(alias = "T", alias = "t")]
    coherence: Option<usize>,
    #[serde(alias = "eta")]
    pilot_len: Option<usize>,
    sigma_n2: Option<f64>,
    sigma_n2_db: Option<f64>,
    snr_db: Option<f64>,
    p: Option<f64>,
    p_db: Option<f64>,
    p_t: Option<f64>,
    p_t_db: Option<f64>,
    p_d: Option<f64>,
    p_d_db: Option<f64>,
    beta: Option<Vec<f64>>,
    beta_db: Option<Vec<f64>>,
    tx_powers: Option<Vec<f64>>,
}

fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn pick(linear: Option<f64>, db: Option<f64>, name: &str) -> Result<Option<f64>> {
    match (linear, db) {
        (Some(_), Some(_)) => invalid(format!("both {name} and {name}_db given")),
        (Some(v), None) => Ok(Some(v)),
        (None, Some(d)) => Ok(Some(from_db(d))),
        (None, None) => Ok(None),
    }
}

impl RawConfig {
    fn resolve(self) -> Result<SystemConfig> {
        let mut b = SystemConfig::builder();
        if let Some(v) = self.antennas {
            b = b.antennas(v);
        }
        if let Some(v) = self.highres {
            b = b.highres(v);
        }
        if let Some(v) = self.users {
            b = b.users(v);
        }
        if let Some(v) = self.coherence {
            b = b.coherence(v);
        }
        if let Some(v) = self.pilot_len {
            b = b.pilot_len(v);
        }
        if let Some(v) = pick(self.sigma_n2, self.sigma_n2_db, "sigma_n2")? {
            b = b.sigma_n2(v);
        }
        match (pick(self.p, self.p_db, "p")?, self.snr_db) {
            (Some(_), Some(_)) => return invalid("give either p or snr_db, not both"),
            (Some(p), None) => b = b.power(p),
            (None, Some(s)) => b = b.snr_db(s),
            (None, None) => {}
        }
        if let Some(v) = pick(self.p_t, self.p_t_db, "p_t")? {
            b = b.p_t(v);
        }
        if let Some(v) = pick(self.p_d, self.p_d_db, "p_d")? {
            b = b.p_d(v);
        }
        match (self.beta, self.beta_db) {
            (Some(_), Some(_)) => return invalid("both beta and beta_db given"),
            (Some(v), None) => b = b.beta(v),
            (None, Some(v)) => b = b.beta(v.into_iter().map(from_db).collect()),
            (None, None) => {}
        }
        if let Some(v) = self.tx_powers {
            b = b.tx_powers(v);
        }
        b.build()
    }
}

/// Builder with the experiment defaults `M=100, N=20, K=10, T=1000`,
/// `eta = K`, unit noise and 0 dB SNR.
#[derive(Debug, Clone)]
pub struct SystemConfigBuilder {
    antennas: usize,
    highres: usize,
    users: usize,
    coherence: usize,
    pilot_len: Option<usize>,
    sigma_n2: f64,
    snr_db: Option<f64>,
    p: Option<f64>,
    p_t: Option<f64>,
    p_d: Option<f64>,
    beta: Option<Vec<f64>>,
    tx_powers: Option<Vec<f64>>,
}

impl Default for SystemConfigBuilder {
    fn default() -> Self {
        Self {
            antennas: 100,
            highres: 20,
            users: 10,
            coherence: 1000,
            pilot_len: None,
            sigma_n2: 1.0,
            snr_db: None,
            p: None,
            p_t: None,
            p_d: None,
            beta: None,
            tx_powers: None,
        }
    }
}

impl SystemConfigBuilder {
    pub fn antennas(mut self, m: usize) -> Self {
        self.antennas = m;
        self
    }
    pub fn highres(mut self, n: usize) -> Self {
        self.highres = n;
        self
    }
    pub fn users(mut self, k: usize) -> Self {
        self.users = k;
        self
    }
    pub fn coherence(mut self, t: usize) -> Self {
        self.coherence = t;
        self
    }
    pub fn pilot_len(mut self, eta: usize) -> Self {
        self.pilot_len = Some(eta);
        self
    }
    pub fn sigma_n2(mut self, s: f64) -> Self {
        self.sigma_n2 = s;
        self
    }
    /// Sets the nominal power from `P_ave / sigma_n^2` in dB.
    pub fn snr_db(mut self, db: f64) -> Self {
        self.snr_db = Some(db);
        self.p = None;
        self
    }
    pub fn power(mut self, p: f64) -> Self {
        self.p = Some(p);
        self.snr_db = None;
        self
    }
    pub fn p_t(mut self, p: f64) -> Self {
        self.p_t = Some(p);
        self
    }
    pub fn p_d(mut self, p: f64) -> Self {
        self.p_d = Some(p);
        self
    }
    pub fn beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = Some(beta);
        self
    }
    pub fn tx_powers(mut self, pk: Vec<f64>) -> Self {
        self.tx_powers = Some(pk);
        self
    }

    pub fn build(self) -> Result<SystemConfig> {
        let p = match (self.p, self.snr_db) {
            (Some(p), _) => p,
            (None, Some(db)) => from_db(db) * self.sigma_n2,
            (None, None) => self.sigma_n2,
        };
        let cfg = SystemConfig {
            antennas: self.antennas,
            highres: self.highres,
            users: self.users,
            coherence: self.coherence,
            pilot_len: self.pilot_len.unwrap_or(self.users),
            sigma_n2: self.sigma_n2,
            p,
            p_t: self.p_t.unwrap_or(p),
            p_d: self.p_d.unwrap_or(p),
            beta: self.beta.unwrap_or_else(|| vec![1.0; self.users]),
            tx_powers: self.tx_powers,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `eta x K` pilot matrix with orthonormal columns.
#[derive(Debug, Clone)]
pub struct PilotMatrix {
    pub phi: CMatrix,
}

impl PilotMatrix {
    pub fn len(&self) -> usize {
        self.phi.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.phi.nrows() == 0
    }
    pub fn users(&self) -> usize {
        self.phi.ncols()
    }
    pub fn column(&self, k: usize) -> crate::linalg::CVector {
        self.phi.column(k).into_owned()
    }
}

/// First `users` columns of the unitary `eta`-point DFT matrix.
pub fn generate_pilots(eta: usize, users: usize) -> Result<PilotMatrix> {
    if users == 0 || users > eta {
        return invalid(format!("need 1 <= K <= eta, got K={users}, eta={eta}"));
    }
    let scale = 1.0 / (eta as f64).sqrt();
    let phi = CMatrix::from_fn(eta, users, |n, k| {
        // reduce the phase index first to keep large products exact
        let idx = (n * k) % eta;
        let angle = -2.0 * std::f64::consts::PI * idx as f64 / eta as f64;
        Complex64::from_polar(scale, angle)
    });
    Ok(PilotMatrix { phi })
}

/// One fast-fading realization.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    /// `M x K` unit-variance fast fading.
    pub h: CMatrix,
    /// `M x K` channel including large-scale gains, `g_k = sqrt(beta_k) h_k`.
    pub g: CMatrix,
}

pub fn draw_channel<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> ChannelMatrix {
    let h = cscg_matrix(rng, config.antennas, config.users, 1.0);
    let mut g = h.clone();
    for (k, mut col) in g.column_iter_mut().enumerate() {
        col *= Complex64::new(config.beta[k].sqrt(), 0.0);
    }
    ChannelMatrix { h, g }
}

/// Statistics-aware power control `p_k = p / beta_k`.
pub fn power_control(beta: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0) {
        return invalid(format!("received power must be positive, got {p}"));
    }
    beta.iter()
        .map(|&b| if b > 0.0 { Ok(p / b) } else { invalid(format!("nonpositive large-scale gain {b}")) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity_defect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_pilot() {
        let p = generate_pilots(1, 1).unwrap();
        assert!((p.phi[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn square_pilots_are_unitary() {
        let p = generate_pilots(4, 4).unwrap();
        assert!((p.phi[(1, 1)] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!(identity_defect(&(&p.phi * p.phi.adjoint())) < 1e-12);
        assert!(identity_defect(&(p.phi.adjoint() * &p.phi)) < 1e-12);
    }

    #[test]
    fn pilot_orthonormality_sweep() {
        for eta in 1..=64 {
            for k in 1..=eta {
                let p = generate_pilots(eta, k).unwrap();
                assert!(identity_defect(&(p.phi.adjoint() * &p.phi)) < 1e-12, "eta={eta} k={k}");
            }
        }
    }

    #[test]
    fn pilots_reject_too_many_users() {
        assert!(matches!(generate_pilots(3, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn channel_draw_is_deterministic_and_unit_variance() {
        let cfg = SystemConfig::builder().antennas(1000).highres(1000).users(1).coherence(10).build().unwrap();
        let a = draw_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        let b = draw_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.h, b.h);
        let var = a.h.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1000.0;
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn channel_scaling_by_beta() {
        let cfg = SystemConfig::builder()
            .antennas(10_000)
            .highres(10_000)
            .users(1)
            .coherence(10)
            .beta(vec![4.0])
            .build()
            .unwrap();
        let ch = draw_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(11));
        let var = ch.g.iter().map(|z| z.norm_sqr()).sum::<f64>() / 10_000.0;
        assert!((var / 4.0 - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn power_control_examples() {
        assert_eq!(power_control(&[1.0, 1.0], 1.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(power_control(&[2.0, 0.5], 1.0).unwrap(), vec![0.5, 2.0]);
        assert!((power_control(&[1e-3], 0.01).unwrap()[0] - 10.0).abs() < 1e-12);
        assert!(power_control(&[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn builder_rejects_bad_round_robin() {
        assert!(SystemConfig::builder().antennas(100).highres(30).build().is_err());
        // (M/N) * eta = 100 * 10 > 400
        assert!(SystemConfig::builder().highres(1).coherence(400).build().is_err());
        assert!(SystemConfig::builder().highres(1).coherence(1000).build().is_ok());
        assert!(SystemConfig::builder().users(10).pilot_len(5).build().is_err());
    }

    #[test]
    fn toml_config_with_db_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "M = 16\nN = 4\nK = 4\nT = 200\nsnr_db = 10.0\nbeta_db = [0.0, 0.0, -3.0, 3.0]\n").unwrap();
        let cfg = SystemConfig::from_file(&path).unwrap();
        assert_eq!((cfg.antennas, cfg.highres, cfg.users, cfg.pilot_len), (16, 4, 4, 4));
        assert!((cfg.p - 10.0).abs() < 1e-12);
        assert!((cfg.beta[3] - 10f64.powf(0.3)).abs() < 1e-12);
    }

    #[test]
    fn json_config_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"M": 8, "N": 8, "K": 2, "bogus": 1}"#).unwrap();
        assert!(matches!(SystemConfig::from_file(&path), Err(Error::Parse(_))));
    }
}
