//! Protocol, detector and fault-scenario parameters.
//!
//! All key-rate arithmetic is carried out in shot-noise units (SNU). The
//! voltage-squared shot-noise reference `n0` only matters at the sample
//! boundary (simulated quadratures and monitor voltages).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default fiber attenuation in dB/km.
pub const DEFAULT_FIBER_LOSS_DB_PER_KM: f64 = 0.2;

/// Fixed protocol and detector constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Modulation variance V_A0 (SNU).
    pub v_a0: f64,
    /// Homodyne detector efficiency.
    pub eta: f64,
    /// Electronic noise (SNU).
    pub nu_el: f64,
    /// Reconciliation efficiency.
    pub beta: f64,
    /// Total pulse count N.
    pub n_total: u64,
    /// Pulses sacrificed for parameter estimation, m.
    pub m_est: u64,
    pub eps_pe: f64,
    /// Smoothing parameter of the privacy-amplification bound.
    pub eps_bar: f64,
    pub eps_pa: f64,
    /// Shot-noise variance in voltage-squared units.
    pub n0: f64,
}

impl Default for SystemParams {
    /// The key-rate-versus-distance simulation constants: V_A0 = 4, eta = 0.5,
    /// nu_el = 0.01, beta = 0.95, all failure probabilities 1e-10, N = 1e9 and
    /// m = N/2.
    fn default() -> Self {
        Self {
            v_a0: 4.0,
            eta: 0.5,
            nu_el: 0.01,
            beta: 0.95,
            n_total: 1_000_000_000,
            m_est: 500_000_000,
            eps_pe: 1e-10,
            eps_bar: 1e-10,
            eps_pa: 1e-10,
            n0: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_a0 > 0.0 && self.v_a0.is_finite()) {
            return Err(invalid("v_a0", self.v_a0, "must be positive and finite"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("eta", self.eta, "must lie in (0, 1]"));
        }
        if !(self.nu_el >= 0.0 && self.nu_el.is_finite()) {
            return Err(invalid("nu_el", self.nu_el, "must be non-negative"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", self.beta, "must lie in (0, 1)"));
        }
        if !(self.m_est > 0 && self.m_est < self.n_total) {
            return Err(invalid(
                "m_est",
                self.m_est as f64,
                "must satisfy 0 < m_est < n_total",
            ));
        }
        for (name, p) in [
            ("eps_pe", self.eps_pe),
            ("eps_bar", self.eps_bar),
            ("eps_pa", self.eps_pa),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return Err(invalid(name, p, "failure probability must lie in (0, 1)"));
            }
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(invalid("n0", self.n0, "must be positive and finite"));
        }
        Ok(())
    }

    /// Pulses left for key distillation, n = N - m.
    pub fn n_key(&self) -> u64 {
        self.n_total - self.m_est
    }

    /// Fraction n/N of pulses contributing to the key.
    pub fn key_fraction(&self) -> f64 {
        self.n_key() as f64 / self.n_total as f64
    }

    /// Electronic noise in voltage-squared units, V_el = nu_el * N0.
    pub fn v_el(&self) -> f64 {
        self.nu_el * self.n0
    }
}

/// True channel transmissivity and excess noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub t_trans: f64,
    /// Excess noise (SNU).
    pub eps: f64,
}

impl ChannelParams {
    pub fn new(t_trans: f64, eps: f64) -> Result<Self> {
        let ch = Self { t_trans, eps };
        ch.validate()?;
        Ok(ch)
    }

    pub fn from_distance(d_km: f64, loss_db_per_km: f64, eps: f64) -> Result<Self> {
        Self::new(distance_to_transmissivity(d_km, loss_db_per_km)?, eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_trans > 0.0 && self.t_trans <= 1.0) {
            return Err(invalid("t_trans", self.t_trans, "must lie in (0, 1]"));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(invalid("eps", self.eps, "must be non-negative and finite"));
        }
        Ok(())
    }

    /// Excess noise in voltage-squared units, xi = eps * N0.
    pub fn xi(&self, n0: f64) -> f64 {
        self.eps * n0
    }
}

/// Attenuation fault factor `k` and intercept-resend fraction `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultAttackScenario {
    pub k: f64,
    pub u: f64,
}

impl Default for FaultAttackScenario {
    fn default() -> Self {
        Self { k: 1.0, u: 0.0 }
    }
}

impl FaultAttackScenario {
    pub fn new(k: f64, u: f64) -> Result<Self> {
        let s = Self { k, u };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(invalid(
                "k",
                self.k,
                "attenuation factor must be finite and >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.u) {
            return Err(invalid(
                "u",
                self.u,
                "intercept-resend fraction must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Intensity factor produced by reducing the attenuation by `delta_db` decibels.
pub fn attenuation_db_to_k(delta_db: f64) -> Result<f64> {
    if !(delta_db >= 0.0 && delta_db.is_finite()) {
        return Err(invalid(
            "delta_db",
            delta_db,
            "attenuation reduction must be finite and non-negative",
        ));
    }
    Ok(10f64.powf(delta_db / 10.0))
}

/// Inverse of [`attenuation_db_to_k`].
pub fn k_to_attenuation_db(k: f64) -> Result<f64> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(invalid("k", k, "must be finite and >= 1"));
    }
    Ok(10.0 * k.log10())
}

/// Quadrature variance V = 2<n> of a Gaussian-modulated signal.
pub fn mean_photon_to_variance(n_mean: f64) -> Result<f64> {
    if !(n_mean >= 0.0 && n_mean.is_finite()) {
        return Err(invalid(
            "n_mean",
            n_mean,
            "photon number must be non-negative",
        ));
    }
    Ok(2.0 * n_mean)
}

pub fn distance_to_transmissivity(d_km: f64, loss_db_per_km: f64) -> Result<f64> {
    if !(d_km >= 0.0 && d_km.is_finite()) {
        return Err(invalid(
            "d_km",
            d_km,
            "distance must be finite and non-negative",
        ));
    }
    if !(loss_db_per_km > 0.0 && loss_db_per_km.is_finite()) {
        return Err(invalid(
            "loss_db_per_km",
            loss_db_per_km,
            "fiber loss must be positive",
        ));
    }
    Ok(10f64.powf(-loss_db_per_km * d_km / 10.0))
}

/// Modulation variance actually leaving the transmitter under fault factor `k`.
pub fn apply_fault_to_state(v_a0: f64, k: f64) -> Result<f64> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(invalid("k", k, "must be finite and >= 1"));
    }
    Ok(k * v_a0)
}

/// Flat parameter file. Every key is optional and falls back to
/// [`SystemParams::default`], `k = 1`, `u = 0` and 0.2 dB/km.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub v_a0: Option<f64>,
    pub eta: Option<f64>,
    pub nu_el: Option<f64>,
    pub beta: Option<f64>,
    pub n_total: Option<u64>,
    pub m_est: Option<u64>,
    pub eps_pe: Option<f64>,
    pub eps_bar: Option<f64>,
    pub eps_pa: Option<f64>,
    pub n0: Option<f64>,
    pub k: Option<f64>,
    pub u: Option<f64>,
    pub fiber_loss_db_per_km: Option<f64>,
}

/// Validated contents of a [`ParamsFile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamsConfig {
    pub system: SystemParams,
    pub scenario: FaultAttackScenario,
    pub fiber_loss_db_per_km: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            system: SystemParams::default(),
            scenario: FaultAttackScenario::default(),
            fiber_loss_db_per_km: DEFAULT_FIBER_LOSS_DB_PER_KM,
        }
    }
}

impl ParamsFile {
    pub fn resolve(&self) -> Result<ParamsConfig> {
        let d = SystemParams::default();
        let system = SystemParams {
            v_a0: self.v_a0.unwrap_or(d.v_a0),
            eta: self.eta.unwrap_or(d.eta),
            nu_el: self.nu_el.unwrap_or(d.nu_el),
            beta: self.beta.unwrap_or(d.beta),
            n_total: self.n_total.unwrap_or(d.n_total),
            m_est: self
                .m_est
                .unwrap_or_else(|| self.n_total.map_or(d.m_est, |n| n / 2)),
            eps_pe: self.eps_pe.unwrap_or(d.eps_pe),
            // The smoothing and privacy-amplification probabilities follow eps_pe
            // unless set explicitly.
            eps_bar: self.eps_bar.or(self.eps_pe).unwrap_or(d.eps_bar),
            eps_pa: self.eps_pa.or(self.eps_pe).unwrap_or(d.eps_pa),
            n0: self.n0.unwrap_or(d.n0),
        };
        system.validate()?;
        let scenario = FaultAttackScenario::new(self.k.unwrap_or(1.0), self.u.unwrap_or(0.0))?;
        let loss = self
            .fiber_loss_db_per_km
            .unwrap_or(DEFAULT_FIBER_LOSS_DB_PER_KM);
        if !(loss > 0.0 && loss.is_finite()) {
            return Err(invalid("fiber_loss_db_per_km", loss, "must be positive"));
        }
        Ok(ParamsConfig {
            system,
            scenario,
            fiber_loss_db_per_km: loss,
        })
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

impl From<&ParamsConfig> for ParamsFile {
    fn from(c: &ParamsConfig) -> Self {
        let s = &c.system;
        Self {
            v_a0: Some(s.v_a0),
            eta: Some(s.eta),
            nu_el: Some(s.nu_el),
            beta: Some(s.beta),
            n_total: Some(s.n_total),
            m_est: Some(s.m_est),
            eps_pe: Some(s.eps_pe),
            eps_bar: Some(s.eps_bar),
            eps_pa: Some(s.eps_pa),
            n0: Some(s.n0),
            k: Some(c.scenario.k),
            u: Some(c.scenario.u),
            fiber_loss_db_per_km: Some(c.fiber_loss_db_per_km),
        }
    }
}

/// Load and validate a TOML parameter file.
pub fn load_params(path: impl AsRef<Path>) -> Result<ParamsConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = ParamsFile::from_toml_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.resolve()
}
