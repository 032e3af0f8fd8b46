//! Parameter sweeps: estimated excess noise versus `k`, and key rates versus
//! fiber distance. Grid points are evaluated in parallel and returned in grid
//! order.

use std::io::Write;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::estimation::{biased_channel_params, ChannelEstimate};
use crate::keyrate::secret_key_rate;
use crate::monitor::corrected_key_rate;
use crate::par;
use crate::params::{distance_to_transmissivity, ChannelParams, SystemParams};

/// Evenly spaced inclusive grid parsed from `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite()) || stop < start {
            return Err(invalid("grid", stop, "need finite start <= stop"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid("grid step", step, "must be positive"));
        }
        Ok(Self { start, stop, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("grid `{s}` is not start:stop:step")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("grid `{s}`: `{p}` is not a number")))
        };
        Grid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig6Row {
    pub k: f64,
    pub eps_true: f64,
    pub eps_observed: f64,
}

pub const FIG6_DEFAULT_EPS: [f64; 3] = [0.01, 0.03, 0.05];

/// Estimated excess noise versus `k` for each true excess noise.
pub fn excess_noise_vs_k(eps_list: &[f64], k_grid: &[f64]) -> Result<Vec<Fig6Row>> {
    let mut rows = Vec::with_capacity(eps_list.len() * k_grid.len());
    for &eps in eps_list {
        let ch = ChannelParams::new(1.0, eps)?;
        for &k in k_grid {
            rows.push(Fig6Row {
                k,
                eps_true: eps,
                eps_observed: biased_channel_params(&ch, k)?.eps_est,
            });
        }
    }
    Ok(rows)
}

pub fn write_fig6_csv<W: Write>(rows: &[Fig6Row], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["k", "eps_true", "eps_observed"])?;
    for r in rows {
        wtr.write_record([
            r.k.to_string(),
            r.eps_true.to_string(),
            r.eps_observed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One point of the key-rate-versus-distance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub distance_km: f64,
    pub k: f64,
    pub u: f64,
    pub eps_true: f64,
    /// Evaluated rate; NaN when `kT > 1` leaves no physical evaluated state.
    pub k_e: f64,
    pub k_p: f64,
    /// Monitor-corrected rate.
    pub k_m: f64,
    /// Practical-path intermediates.
    pub i_ab: f64,
    pub s_be: f64,
    pub delta_n: f64,
    /// Empty, or a short tag describing a violated expectation.
    pub warning: String,
}

pub const WARN_UNPHYSICAL: &str = "evaluated_transmissivity_exceeds_unity";
pub const WARN_NOT_OVERESTIMATED: &str = "evaluated_below_practical";

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 13] = [
        "distance_km",
        "k",
        "u",
        "eps_true",
        "K_e",
        "K_p",
        "K_m",
        "i_ab",
        "s_be",
        "delta_n",
        "K_e_clamped",
        "K_p_clamped",
        "warning",
    ];

    pub fn k_e_clamped(&self) -> f64 {
        if self.k_e.is_nan() {
            f64::NAN
        } else {
            self.k_e.max(0.0)
        }
    }

    pub fn k_p_clamped(&self) -> f64 {
        self.k_p.max(0.0)
    }

    pub fn csv_record(&self) -> [String; 13] {
        [
            self.distance_km.to_string(),
            self.k.to_string(),
            self.u.to_string(),
            self.eps_true.to_string(),
            self.k_e.to_string(),
            self.k_p.to_string(),
            self.k_m.to_string(),
            self.i_ab.to_string(),
            self.s_be.to_string(),
            self.delta_n.to_string(),
            self.k_e_clamped().to_string(),
            self.k_p_clamped().to_string(),
            self.warning.clone(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSweep {
    pub system: SystemParams,
    pub eps_list: Vec<f64>,
    pub k_list: Vec<f64>,
    pub u: f64,
    pub distances_km: Vec<f64>,
    pub loss_db_per_km: f64,
}

impl DistanceSweep {
    /// Rows ordered by excess noise, then `k`, then distance.
    pub fn run(&self) -> Result<Vec<SweepRow>> {
        self.system.validate()?;
        let nd = self.distances_km.len();
        let nk = self.k_list.len();
        let total = self.eps_list.len() * nk * nd;
        par::try_map_indexed(total, |i| {
            let eps = self.eps_list[i / (nk * nd)];
            let k = self.k_list[(i / nd) % nk];
            let d = self.distances_km[i % nd];
            self.point(d, k, eps)
        })
    }

    pub fn point(&self, distance_km: f64, k: f64, eps: f64) -> Result<SweepRow> {
        let sys = &self.system;
        let t = distance_to_transmissivity(distance_km, self.loss_db_per_km)?;
        let ch = ChannelParams::new(t, eps + 2.0 * self.u)?;
        let biased = biased_channel_params(&ch, k)?;
        let practical = secret_key_rate(
            k * sys.v_a0,
            &ChannelEstimate::exact(ch.t_trans, ch.eps),
            sys,
        )?;
        let corrected = corrected_key_rate(&biased, k, k * sys.v_a0, sys)?;
        let (k_e, warning) = if biased.t_est > 1.0 {
            (f64::NAN, WARN_UNPHYSICAL.to_string())
        } else {
            let evaluated = secret_key_rate(sys.v_a0, &biased, sys)?;
            let w = if evaluated.key_rate < practical.key_rate {
                WARN_NOT_OVERESTIMATED.to_string()
            } else {
                String::new()
            };
            (evaluated.key_rate, w)
        };
        Ok(SweepRow {
            distance_km,
            k,
            u: self.u,
            eps_true: eps,
            k_e,
            k_p: practical.key_rate,
            k_m: corrected.key_rate,
            i_ab: practical.i_ab,
            s_be: practical.s_be,
            delta_n: practical.delta_n,
            warning,
        })
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SweepRow::CSV_HEADER)?;
    for r in rows {
        wtr.write_record(r.csv_record())?;
    }
    wtr.flush()?;
    Ok(())
}
