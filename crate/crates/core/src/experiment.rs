//! Monte-Carlo drivers. Trial `i` uses seed `base_seed + i`; trials run in
//! parallel and come back in index order.

use std::io::Write;

use serde::Serialize;

use crate::channel::{bob_noise_variance, simulate_channel};
use crate::error::{invalid, Result};
use crate::estimation::{
    channel_params_from_estimates, estimate_ml, excess_noise_standard_error, SizeCheck,
};
use crate::monitor::{synthesize_voltages, DetectorCalibration, MonitorReading};
use crate::par;
use crate::params::{ChannelParams, FaultAttackScenario, SystemParams};

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std_err: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let std_err = if n > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        } else {
            f64::NAN
        };
        Self { n, mean, std_err }
    }
}

fn trial_seed(base_seed: u64, i: usize) -> u64 {
    base_seed.wrapping_add(i as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationTrial {
    pub seed: u64,
    pub t_hat: f64,
    pub sigma2_hat: f64,
    pub delta_t: f64,
    pub delta_sigma2: f64,
    pub t_est: f64,
    pub eps_est: f64,
    pub eps_se: f64,
}

/// Simulate `m` pairs, fit, and map to channel estimates, once per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationExperiment {
    pub system: SystemParams,
    pub channel: ChannelParams,
    pub scenario: FaultAttackScenario,
    pub m: usize,
    pub check: SizeCheck,
}

impl EstimationExperiment {
    pub fn trial(&self, seed: u64) -> Result<EstimationTrial> {
        let set = simulate_channel(&self.system, &self.channel, &self.scenario, self.m, seed)?;
        let ml = estimate_ml(&set)?.with_intervals(self.system.eps_pe, self.check)?;
        let est = channel_params_from_estimates(&ml, &self.system)?;
        Ok(EstimationTrial {
            seed,
            t_hat: ml.t_hat,
            sigma2_hat: ml.sigma2_hat,
            delta_t: ml.delta_t,
            delta_sigma2: ml.delta_sigma2,
            t_est: est.t_est,
            eps_est: est.eps_est,
            eps_se: excess_noise_standard_error(&ml, &self.system),
        })
    }

    pub fn run(&self, base_seed: u64, trials: usize) -> Result<Vec<EstimationTrial>> {
        par::try_map_indexed(trials, |i| self.trial(trial_seed(base_seed, i)))
    }

    /// Population gain `sqrt(k eta T)`.
    pub fn true_gain(&self) -> f64 {
        (self.scenario.k * self.system.eta * self.channel.t_trans).sqrt()
    }

    pub fn true_noise_variance(&self) -> f64 {
        bob_noise_variance(&self.system, &self.channel, &self.scenario)
    }

    /// Excess noise the fit converges to: `(eps + 2u) / k`.
    pub fn expected_eps(&self) -> f64 {
        (self.channel.eps + 2.0 * self.scenario.u) / self.scenario.k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskingReport {
    pub expected_eps: f64,
    pub eps: Summary,
    /// Trials whose estimate sits within `tolerance_se` of their own standard error.
    pub within_fraction: f64,
    pub tolerance_se: f64,
    /// The trial mean lies within `tolerance_se` standard errors of the mean.
    pub mean_within: bool,
}

impl MaskingReport {
    pub fn from_trials(
        exp: &EstimationExperiment,
        trials: &[EstimationTrial],
        tolerance_se: f64,
    ) -> Self {
        let expected_eps = exp.expected_eps();
        let eps: Vec<f64> = trials.iter().map(|t| t.eps_est).collect();
        let eps = Summary::of(&eps);
        let inside = trials
            .iter()
            .filter(|t| (t.eps_est - expected_eps).abs() <= tolerance_se * t.eps_se)
            .count();
        let mean_se = if eps.std_err.is_finite() {
            eps.std_err
        } else {
            trials[0].eps_se
        };
        Self {
            expected_eps,
            eps,
            within_fraction: inside as f64 / trials.len() as f64,
            tolerance_se,
            mean_within: (eps.mean - expected_eps).abs() <= tolerance_se * mean_se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub true_gain: f64,
    pub true_noise_variance: f64,
    pub gain_coverage: f64,
    pub noise_coverage: f64,
}

impl CoverageReport {
    pub fn from_trials(exp: &EstimationExperiment, trials: &[EstimationTrial]) -> Self {
        let t = exp.true_gain();
        let s2 = exp.true_noise_variance();
        let n = trials.len() as f64;
        let gain = trials
            .iter()
            .filter(|r| (r.t_hat - t).abs() <= r.delta_t)
            .count();
        let noise = trials
            .iter()
            .filter(|r| (r.sigma2_hat - s2).abs() <= r.delta_sigma2)
            .count();
        Self {
            trials: trials.len(),
            true_gain: t,
            true_noise_variance: s2,
            gain_coverage: gain as f64 / n,
            noise_coverage: noise as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorTrial {
    pub seed: u64,
    pub k_point: f64,
    pub k_hat: f64,
    pub v_p: f64,
}

/// Synthetic monitor tap readings for a fault of size `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorExperiment {
    pub system: SystemParams,
    pub calibration: DetectorCalibration,
    pub k: f64,
    pub n_u: usize,
}

impl MonitorExperiment {
    pub fn trial(&self, seed: u64) -> Result<MonitorTrial> {
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(invalid("k", self.k, "must be finite and >= 1"));
        }
        let sys = &self.system;
        let u = synthesize_voltages(self.k * sys.v_a0, sys, &self.calibration, self.n_u, seed)?;
        let r = MonitorReading::from_voltages(&u, &self.calibration, sys)?;
        Ok(MonitorTrial {
            seed,
            k_point: r.k_point,
            k_hat: r.k_hat,
            v_p: r.v_p,
        })
    }

    pub fn run(&self, base_seed: u64, trials: usize) -> Result<Vec<MonitorTrial>> {
        par::try_map_indexed(trials, |i| self.trial(trial_seed(base_seed, i)))
    }

    /// Standard error of `k_point` from one reading of `n_u` samples.
    pub fn k_point_standard_error(&self) -> f64 {
        let sys = &self.system;
        let total = self.k * sys.v_a0 + 1.0 + sys.nu_el;
        total * (2.0 / self.n_u as f64).sqrt() / sys.v_a0
    }
}

/// Write serializable rows as CSV with a header taken from the field names.
pub fn write_rows_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
