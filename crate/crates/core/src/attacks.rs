//! Intercept-resend noise accounting and how an attenuation fault masks it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::keyrate::evaluated_vs_practical;
use crate::params::{ChannelParams, FaultAttackScenario, SystemParams};

/// Excess noise (SNU) seen without fault when a fraction `u` of pulses is
/// intercepted and resent.
pub fn pir_excess_noise(eps_t: f64, u: f64) -> Result<f64> {
    check_noise_and_fraction(eps_t, u)?;
    Ok(eps_t + 2.0 * u)
}

/// Excess noise Alice and Bob estimate under attenuation fault `k`.
pub fn masked_excess_noise(eps_t: f64, u: f64, k: f64) -> Result<f64> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(invalid("k", k, "must be finite and >= 1"));
    }
    Ok(pir_excess_noise(eps_t, u)? / k)
}

/// Smallest `k` that pulls the observed excess noise down to `eps_alarm`.
/// Returns 1 when no masking is needed.
pub fn k_to_mask(eps_t: f64, u: f64, eps_alarm: f64) -> Result<f64> {
    if !(eps_alarm > 0.0 && eps_alarm.is_finite()) {
        return Err(invalid(
            "eps_alarm",
            eps_alarm,
            "alarm threshold must be positive",
        ));
    }
    Ok((pir_excess_noise(eps_t, u)? / eps_alarm).max(1.0))
}

fn check_noise_and_fraction(eps_t: f64, u: f64) -> Result<()> {
    if !(eps_t >= 0.0 && eps_t.is_finite()) {
        return Err(invalid(
            "eps_t",
            eps_t,
            "technical excess noise must be non-negative",
        ));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(invalid("u", u, "must lie in [0, 1]"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingAnalysis {
    pub eps_technical: f64,
    pub u: f64,
    pub k: f64,
    pub eps_alarm: f64,
    pub eps_with_attack: f64,
    pub eps_observed: f64,
    pub k_required_to_mask: f64,
    pub attack_hidden: bool,
}

impl MaskingAnalysis {
    pub const CSV_HEADER: [&'static str; 8] = [
        "eps_technical",
        "u",
        "k",
        "eps_alarm",
        "eps_with_attack",
        "eps_observed",
        "k_required_to_mask",
        "attack_hidden",
    ];

    pub fn new(eps_t: f64, u: f64, k: f64, eps_alarm: f64) -> Result<Self> {
        let eps_with_attack = pir_excess_noise(eps_t, u)?;
        let eps_observed = masked_excess_noise(eps_t, u, k)?;
        let k_required_to_mask = k_to_mask(eps_t, u, eps_alarm)?;
        Ok(Self {
            eps_technical: eps_t,
            u,
            k,
            eps_alarm,
            eps_with_attack,
            eps_observed,
            k_required_to_mask,
            attack_hidden: u > 0.0 && eps_observed <= eps_alarm,
        })
    }

    pub fn csv_record(&self) -> [String; 8] {
        [
            self.eps_technical.to_string(),
            self.u.to_string(),
            self.k.to_string(),
            self.eps_alarm.to_string(),
            self.eps_with_attack.to_string(),
            self.eps_observed.to_string(),
            self.k_required_to_mask.to_string(),
            self.attack_hidden.to_string(),
        ]
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain struct serializes")
    }
}

/// Key information Eve obtains because the evaluated rate overshoots the
/// practical one. Negative rates count as no key.
pub fn stolen_information(
    true_ch: &ChannelParams,
    scen: &FaultAttackScenario,
    sys: &SystemParams,
) -> Result<f64> {
    let cmp = evaluated_vs_practical(true_ch, scen, sys)?;
    Ok(cmp.evaluated.clamped() - cmp.practical.clamped())
}
