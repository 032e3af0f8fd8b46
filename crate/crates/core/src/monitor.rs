//! Real-time modulation-variance monitor at the transmitter.
//!
//! A tap of the attenuated signal is homodyned against the local oscillator.
//! The voltage variance, pushed back through the detector's linear
//! calibration, gives the variance actually emitted, hence the attenuation
//! factor `k` and a key rate evaluated with de-biased channel estimates.
//!
//! Monitor variances are expressed on the same absolute scale as `N0`.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::RwLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::generate_chunked;
use crate::error::{invalid, Error, Result};
use crate::estimation::{inverse_tail_coefficient, ChannelEstimate};
use crate::keyrate::{secret_key_rate, KeyRateReport};
use crate::params::SystemParams;

const PLANCK: f64 = 6.626_070_15e-34;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorCalibration {
    /// Separated local-oscillator power (W).
    pub p_lo: f64,
    /// Photodiode responsivity (A/W).
    pub rho: f64,
    /// Total transimpedance gain (V/A).
    pub g: f64,
    /// Electronic bandwidth (Hz).
    pub bandwidth: f64,
    /// Planck constant (J s).
    pub h: f64,
    /// Optical frequency (Hz).
    pub f: f64,
}

impl DetectorCalibration {
    /// All constants 1: voltages are read directly as quadrature variance.
    pub fn normalized() -> Self {
        Self {
            p_lo: 1.0,
            rho: 1.0,
            g: 1.0,
            bandwidth: 1.0,
            h: 1.0,
            f: 1.0,
        }
    }

    /// A plausible 1550 nm setup: 1 mW LO, 0.85 A/W diode, 1e5 V/A gain,
    /// 100 MHz bandwidth.
    pub fn telecom_1550nm() -> Self {
        Self {
            p_lo: 1e-3,
            rho: 0.85,
            g: 1e5,
            bandwidth: 100e6,
            h: PLANCK,
            f: 1.934e14,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_lo", self.p_lo),
            ("rho", self.rho),
            ("g", self.g),
            ("bandwidth", self.bandwidth),
            ("h", self.h),
            ("f", self.f),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, v, "calibration constant must be positive"));
            }
        }
        Ok(())
    }

    /// Voltage variance per unit quadrature variance, `P_LO rho^2 g^2 B h f`.
    pub fn scale(&self) -> f64 {
        self.p_lo * self.rho * self.rho * self.g * self.g * self.bandwidth * self.h * self.f
    }
}

/// Population variance `<U^2> - <U>^2`.
pub fn sample_variance(u: &[f64]) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: u.len(),
        });
    }
    let mut m = Moments::default();
    m.extend(u);
    Ok(m.variance())
}

/// Upper finite-size bound on a variance estimated from `n_u` samples.
pub fn finite_size_correction(var_raw: f64, n_u: usize, eps_pe: f64) -> Result<f64> {
    if n_u < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: n_u,
        });
    }
    let z = inverse_tail_coefficient(eps_pe)?;
    Ok(var_raw * (1.0 + z * std::f64::consts::SQRT_2 / (n_u as f64).sqrt()))
}

pub fn voltage_to_quadrature_variance(
    var_corrected: f64,
    cal: &DetectorCalibration,
) -> Result<f64> {
    cal.validate()?;
    Ok(var_corrected / cal.scale())
}

/// Modulation variance (SNU) actually emitted, from the measured quadrature
/// variance. Below-shot-noise readings indicate a calibration fault.
pub fn practical_modulation_variance(v_m: f64, sys: &SystemParams) -> Result<f64> {
    let v_p = signal_variance(v_m, sys);
    if v_p < 0.0 {
        return Err(Error::BelowShotNoise { v_p });
    }
    Ok(v_p)
}

fn signal_variance(v_m: f64, sys: &SystemParams) -> f64 {
    (v_m - sys.n0 - sys.nu_el * sys.n0) / sys.n0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredK {
    pub k_hat: f64,
    /// The monitor reads less than the preset variance.
    pub below_nominal: bool,
}

pub fn recover_k(v_p: f64, v_a0_preset: f64) -> Result<RecoveredK> {
    if !(v_a0_preset > 0.0) {
        return Err(invalid("v_a0_preset", v_a0_preset, "must be positive"));
    }
    let k_hat = v_p / v_a0_preset;
    Ok(RecoveredK {
        k_hat,
        below_nominal: k_hat < 1.0,
    })
}

/// Key rate from fault-biased channel estimates, corrected by the monitored
/// factor `k_hat` and emitted variance `v_p`.
pub fn corrected_key_rate(
    faulted: &ChannelEstimate,
    k_hat: f64,
    v_p: f64,
    sys: &SystemParams,
) -> Result<KeyRateReport> {
    if !(k_hat >= 1.0 && k_hat.is_finite()) {
        return Err(invalid("k_hat", k_hat, "must be finite and >= 1"));
    }
    let debiased = ChannelEstimate {
        t_est: faulted.t_est / k_hat,
        eps_est: faulted.eps_est * k_hat,
        t_min: faulted.t_min / k_hat,
        eps_max: faulted.eps_max * k_hat,
        m_used: faulted.m_used,
    };
    secret_key_rate(v_p, &debiased, sys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorReading {
    /// Voltage variance (V^2).
    pub var_raw: f64,
    /// Finite-size upper bound on the voltage variance (V^2).
    pub var_corrected: f64,
    /// Measured quadrature variance, on the scale of N0.
    pub v_m: f64,
    /// Emitted modulation variance (SNU).
    pub v_p: f64,
    /// `v_p / V_A0`; conservative because it uses the corrected variance.
    pub k_hat: f64,
    pub n_u: usize,
    /// Attenuation factor from the uncorrected variance (point estimate).
    pub k_point: f64,
}

impl MonitorReading {
    pub fn from_variance(
        var_raw: f64,
        n_u: usize,
        cal: &DetectorCalibration,
        sys: &SystemParams,
    ) -> Result<Self> {
        let var_corrected = finite_size_correction(var_raw, n_u, sys.eps_pe)?;
        let v_m = voltage_to_quadrature_variance(var_corrected, cal)?;
        let v_p = practical_modulation_variance(v_m, sys)?;
        let k_hat = recover_k(v_p, sys.v_a0)?.k_hat;
        let k_point = signal_variance(var_raw / cal.scale(), sys) / sys.v_a0;
        Ok(Self {
            var_raw,
            var_corrected,
            v_m,
            v_p,
            k_hat,
            n_u,
            k_point,
        })
    }

    pub fn from_voltages(u: &[f64], cal: &DetectorCalibration, sys: &SystemParams) -> Result<Self> {
        Self::from_variance(sample_variance(u)?, u.len(), cal, sys)
    }

    pub fn below_nominal(&self) -> bool {
        self.k_hat < 1.0
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain struct serializes")
    }
}

/// Running first and second moments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn extend(&mut self, u: &[f64]) {
        for &x in u {
            self.sum += x;
            self.sum_sq += x * x;
        }
        self.n += u.len();
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        let mean = self.sum / n;
        self.sum_sq / n - mean * mean
    }
}

/// Streaming monitor: one writer appends voltage batches, any number of
/// readers take snapshots. Each snapshot reflects a whole number of batches.
#[derive(Debug, Default)]
pub struct VoltageMonitor {
    moments: RwLock<Moments>,
}

impl VoltageMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, batch: &[f64]) {
        let mut local = Moments::default();
        local.extend(batch);
        self.moments
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .merge(&local);
    }

    pub fn snapshot(&self) -> Moments {
        *self.moments.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn reading(&self, cal: &DetectorCalibration, sys: &SystemParams) -> Result<MonitorReading> {
        let m = self.snapshot();
        if m.n < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: m.n,
            });
        }
        MonitorReading::from_variance(m.variance(), m.n, cal, sys)
    }
}

/// Synthetic tap voltages for an emitted modulation variance `v_signal`
/// (SNU): `U ~ N(0, (v_signal + 1 + nu_el) N0 * scale)`.
pub fn synthesize_voltages(
    v_signal: f64,
    sys: &SystemParams,
    cal: &DetectorCalibration,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(v_signal >= 0.0 && v_signal.is_finite()) {
        return Err(invalid("v_signal", v_signal, "must be non-negative"));
    }
    cal.validate()?;
    let var = (v_signal + 1.0 + sys.nu_el) * sys.n0 * cal.scale();
    let sd = var.sqrt();
    Ok(generate_chunked(count, seed, |rng| {
        let z: f64 = rng.sample(StandardNormal);
        sd * z
    }))
}

#[derive(Deserialize)]
struct VoltageRow {
    u_volts: f64,
}

/// Read a single-column CSV with header `u_volts`.
pub fn read_voltages_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() != 1 || &headers[0] != "u_volts" {
        return Err(Error::Format(format!(
            "{}: expected single column `u_volts`",
            path.display()
        )));
    }
    rdr.deserialize::<VoltageRow>()
        .map(|r| r.map(|row| row.u_volts).map_err(csv_err))
        .collect()
}

pub fn write_voltages_csv(path: impl AsRef<Path>, u: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    wtr.write_record(["u_volts"]).map_err(csv_err)?;
    for x in u {
        wtr.write_record([x.to_string()]).map_err(csv_err)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
