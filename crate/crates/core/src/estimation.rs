//! Maximum-likelihood channel estimation with finite-size confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::channel::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::params::{ChannelParams, SystemParams};

/// Smallest estimation block for which the Gaussian approximation of the
/// chi-squared variance estimator is accepted without an explicit override.
pub const MIN_ESTIMATION_SAMPLES: usize = 1_000_000;

/// Whether [`confidence_intervals`] enforces [`MIN_ESTIMATION_SAMPLES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeCheck {
    #[default]
    Enforce,
    Override,
}

/// Two-sided normal quantile `z` with `P(|Z| > z) = eps_pe`, i.e. the
/// coefficient satisfying `1/2 erfc(z / sqrt 2) = eps_pe / 2`.
pub fn inverse_tail_coefficient(eps_pe: f64) -> Result<f64> {
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(invalid("eps_pe", eps_pe, "must lie in (0, 1)"));
    }
    let y = erfc_inv(eps_pe);
    // one Newton step on erfc(y) - eps_pe
    let deriv = -std::f64::consts::FRAC_2_SQRT_PI * (-y * y).exp();
    let y = y - (erfc(y) - eps_pe) / deriv;
    Ok(std::f64::consts::SQRT_2 * y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    /// Estimated linear gain t = sqrt(eta T).
    pub t_hat: f64,
    /// Residual noise variance, 1/m normalisation.
    pub sigma2_hat: f64,
    pub delta_t: f64,
    pub delta_sigma2: f64,
    pub m_used: usize,
    /// Alice-side second moment (1/m) sum x_A^2.
    pub v_x: f64,
}

impl MlEstimate {
    /// Attach confidence half-widths computed from this estimate's own
    /// Alice-side variance.
    pub fn with_intervals(self, eps_pe: f64, check: SizeCheck) -> Result<Self> {
        let (delta_t, delta_sigma2) = confidence_intervals(&self, self.v_x, eps_pe, check)?;
        Ok(Self {
            delta_t,
            delta_sigma2,
            ..self
        })
    }
}

/// Transmissivity / excess-noise estimate with worst-case bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub t_est: f64,
    /// Excess noise (SNU). May be negative from statistical fluctuation.
    pub eps_est: f64,
    pub t_min: f64,
    pub eps_max: f64,
    /// Estimation block size; 0 for analytic estimates.
    pub m_used: usize,
}

impl ChannelEstimate {
    pub const CSV_HEADER: [&'static str; 5] = ["t_est", "eps_est", "t_min", "eps_max", "m_used"];

    /// Point estimate with no finite-size spread.
    pub fn exact(t: f64, eps: f64) -> Self {
        Self {
            t_est: t,
            eps_est: eps,
            t_min: t,
            eps_max: eps,
            m_used: 0,
        }
    }

    pub fn csv_record(&self) -> [String; 5] {
        [
            self.t_est.to_string(),
            self.eps_est.to_string(),
            self.t_min.to_string(),
            self.eps_max.to_string(),
            self.m_used.to_string(),
        ]
    }
}

/// Least-squares / maximum-likelihood fit of `x_B = t x_A + z`.
pub fn estimate_ml(est_set: &SampleSet) -> Result<MlEstimate> {
    let m = est_set.len();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let (mut saa, mut sab) = (0.0, 0.0);
    for p in est_set.pairs() {
        saa += p.x_alice * p.x_alice;
        sab += p.x_alice * p.x_bob;
    }
    if saa == 0.0 {
        return Err(Error::DegenerateSamples("Alice-side samples are all zero"));
    }
    let t_hat = sab / saa;
    let rss: f64 = est_set
        .pairs()
        .iter()
        .map(|p| {
            let r = p.x_bob - t_hat * p.x_alice;
            r * r
        })
        .sum();
    let mf = m as f64;
    let sigma2_hat = rss / mf;
    if !(t_hat.is_finite() && sigma2_hat.is_finite()) {
        return Err(Error::DegenerateSamples("non-finite estimate"));
    }
    Ok(MlEstimate {
        t_hat,
        sigma2_hat,
        delta_t: 0.0,
        delta_sigma2: 0.0,
        m_used: m,
        v_x: saa / mf,
    })
}

/// Confidence half-widths `(delta_t, delta_sigma2)` at failure probability `eps_pe`.
pub fn confidence_intervals(
    ml: &MlEstimate,
    v_x: f64,
    eps_pe: f64,
    check: SizeCheck,
) -> Result<(f64, f64)> {
    let m = ml.m_used;
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    if check == SizeCheck::Enforce && m < MIN_ESTIMATION_SAMPLES {
        return Err(Error::SampleSizeBelowThreshold {
            m,
            min: MIN_ESTIMATION_SAMPLES,
        });
    }
    if !(v_x > 0.0 && v_x.is_finite()) {
        return Err(invalid("v_x", v_x, "Alice-side variance must be positive"));
    }
    let z = inverse_tail_coefficient(eps_pe)?;
    let mf = m as f64;
    let delta_t = z * (ml.sigma2_hat / (mf * v_x)).sqrt();
    let delta_sigma2 = z * ml.sigma2_hat * std::f64::consts::SQRT_2 / mf.sqrt();
    Ok((delta_t, delta_sigma2))
}

/// Map gain/noise estimates to transmissivity and excess noise (SNU).
pub fn channel_params_from_estimates(
    ml: &MlEstimate,
    sys: &SystemParams,
) -> Result<ChannelEstimate> {
    if !(ml.t_hat > 0.0) {
        return Err(Error::UnphysicalFit { t_hat: ml.t_hat });
    }
    let n0 = sys.n0;
    let floor = n0 + sys.nu_el * n0;
    let t2 = ml.t_hat * ml.t_hat;
    // a lower gain bound below zero carries no transmissivity information
    let t_low = (ml.t_hat - ml.delta_t).max(0.0);
    Ok(ChannelEstimate {
        t_est: t2 / sys.eta,
        eps_est: (ml.sigma2_hat - floor) / (n0 * t2),
        t_min: t_low * t_low / sys.eta,
        eps_max: (ml.sigma2_hat + ml.delta_sigma2 - floor) / (t2 * n0),
        m_used: ml.m_used,
    })
}

/// What Alice and Bob would estimate, on average, when the transmitter
/// emits `k` times the intended intensity: `T' = k T`, `eps' = eps / k`.
pub fn biased_channel_params(true_ch: &ChannelParams, k: f64) -> Result<ChannelEstimate> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(invalid("k", k, "must be finite and >= 1"));
    }
    Ok(ChannelEstimate::exact(k * true_ch.t_trans, true_ch.eps / k))
}

/// Delta-method standard error of `eps_est` from a single estimate, in SNU.
pub fn excess_noise_standard_error(ml: &MlEstimate, sys: &SystemParams) -> f64 {
    let m = ml.m_used as f64;
    let n0 = sys.n0;
    let t = ml.t_hat;
    let var_sigma2 = 2.0 * ml.sigma2_hat * ml.sigma2_hat / m;
    let var_t = ml.sigma2_hat / (m * ml.v_x);
    let d_sigma2 = 1.0 / (n0 * t * t);
    let d_t = -2.0 * (ml.sigma2_hat - n0 * (1.0 + sys.nu_el)) / (n0 * t * t * t);
    (d_sigma2 * d_sigma2 * var_sigma2 + d_t * d_t * var_t).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{QuadraturePair, Units};

    fn set(pairs: &[(f64, f64)]) -> SampleSet {
        SampleSet::new(
            pairs
                .iter()
                .map(|&(a, b)| QuadraturePair {
                    x_alice: a,
                    x_bob: b,
                })
                .collect(),
            Units::Snu,
        )
        .unwrap()
    }

    #[test]
    fn tail_coefficient_examples() {
        // one-sigma two-sided tail
        let p1 = statrs::function::erf::erfc(std::f64::consts::FRAC_1_SQRT_2);
        assert!((inverse_tail_coefficient(p1).unwrap() - 1.0).abs() < 1e-12);
        assert!((inverse_tail_coefficient(0.3173).unwrap() - 1.0).abs() < 1e-4);
        assert!(inverse_tail_coefficient(0.0).is_err());
        assert!(inverse_tail_coefficient(1.0).is_err());
    }

    #[test]
    fn exact_linear_fit() {
        let ml = estimate_ml(&set(&[(1.0, 2.0), (2.0, 4.0), (-1.0, -2.0)])).unwrap();
        assert_eq!(ml.t_hat, 2.0);
        assert_eq!(ml.sigma2_hat, 0.0);
        assert_eq!(ml.m_used, 3);
    }

    #[test]
    fn residual_variance_uses_squares() {
        let ml = estimate_ml(&set(&[(1.0, 1.0), (-1.0, -1.0), (2.0, 2.0), (0.0, 1.0)])).unwrap();
        assert_eq!(ml.t_hat, 1.0);
        assert_eq!(ml.sigma2_hat, 0.25);
    }

    #[test]
    fn zero_alice_rejected() {
        assert!(matches!(
            estimate_ml(&set(&[(0.0, 1.0), (0.0, 2.0)])),
            Err(Error::DegenerateSamples(_))
        ));
        assert!(estimate_ml(&set(&[(1.0, 1.0)])).is_err());
    }

    fn ml(m: usize, sigma2: f64) -> MlEstimate {
        MlEstimate {
            t_hat: 0.5,
            sigma2_hat: sigma2,
            delta_t: 0.0,
            delta_sigma2: 0.0,
            m_used: m,
            v_x: 4.0,
        }
    }

    #[test]
    fn intervals() {
        assert_eq!(
            confidence_intervals(&ml(1_000_000, 0.0), 4.0, 1e-10, SizeCheck::Enforce).unwrap(),
            (0.0, 0.0)
        );
        let (dt, ds) =
            confidence_intervals(&ml(1_000_000, 1.0), 4.0, 1e-10, SizeCheck::Enforce).unwrap();
        assert!((dt - 3.233475543620258e-3).abs() < 1e-9, "{dt}");
        assert!((ds - 6.466951087240516 * 2f64.sqrt() / 1000.0).abs() < 1e-9);
        let (dt4, ds4) =
            confidence_intervals(&ml(4_000_000, 1.0), 4.0, 1e-10, SizeCheck::Enforce).unwrap();
        assert!((dt4 * 2.0 - dt).abs() < 1e-15);
        assert!((ds4 * 2.0 - ds).abs() < 1e-15);
    }

    #[test]
    fn small_blocks_need_override() {
        assert!(matches!(
            confidence_intervals(&ml(100_000, 1.0), 4.0, 0.05, SizeCheck::Enforce),
            Err(Error::SampleSizeBelowThreshold { .. })
        ));
        assert!(confidence_intervals(&ml(100_000, 1.0), 4.0, 0.05, SizeCheck::Override).is_ok());
    }

    #[test]
    fn channel_mapping() {
        let sys = SystemParams::default();
        let exact = MlEstimate {
            t_hat: (sys.eta * 0.5).sqrt(),
            sigma2_hat: sys.n0 * (1.0 + sys.nu_el),
            ..ml(10, 0.0)
        };
        let ce = channel_params_from_estimates(&exact, &sys).unwrap();
        assert!((ce.t_est - 0.5).abs() < 1e-15);
        assert!(ce.eps_est.abs() < 1e-15);
        assert_eq!(ce.t_min, ce.t_est);
        assert_eq!(ce.eps_max, ce.eps_est);

        let hand = MlEstimate {
            t_hat: 0.5,
            sigma2_hat: 1.035,
            ..ml(10, 0.0)
        };
        let ce = channel_params_from_estimates(&hand, &sys).unwrap();
        assert!((ce.t_est - 0.5).abs() < 1e-15);
        assert!((ce.eps_est - 0.1).abs() < 1e-12);

        let neg = MlEstimate {
            t_hat: -0.1,
            ..hand
        };
        assert!(matches!(
            channel_params_from_estimates(&neg, &sys),
            Err(Error::UnphysicalFit { .. })
        ));
    }

    #[test]
    fn bounds_bracket_point_estimates() {
        let sys = SystemParams::default();
        let e = MlEstimate {
            t_hat: 0.3,
            sigma2_hat: 1.04,
            delta_t: 0.01,
            delta_sigma2: 0.02,
            ..ml(10, 0.0)
        };
        let ce = channel_params_from_estimates(&e, &sys).unwrap();
        assert!(ce.t_min < ce.t_est);
        assert!(ce.eps_max > ce.eps_est);
        // denominator of eps_max uses t_hat, not t_hat - delta_t
        let expect = (1.04 + 0.02 - 1.01) / 0.09;
        assert!((ce.eps_max - expect).abs() < 1e-12);
    }

    #[test]
    fn perfect_moment_fault_bias() {
        // population moments under fault k with true (T, eps)
        let sys = SystemParams::default();
        let (t, eps, k) = (0.2, 0.05, 5.0);
        let v_x = sys.v_a0 * sys.n0;
        let cov = (k * sys.eta * t).sqrt() * v_x;
        let vb = k * sys.eta * t * v_x + sys.eta * t * eps * sys.n0 + sys.n0 + sys.v_el();
        let t_hat = cov / v_x;
        let moments = MlEstimate {
            t_hat,
            sigma2_hat: vb - t_hat * t_hat * v_x,
            ..ml(10, 0.0)
        };
        let ce = channel_params_from_estimates(&moments, &sys).unwrap();
        let biased = biased_channel_params(&ChannelParams::new(t, eps).unwrap(), k).unwrap();
        assert!((ce.t_est - k * t).abs() < 1e-12);
        assert!((ce.eps_est - eps / k).abs() < 1e-12);
        assert!((ce.t_est - biased.t_est).abs() < 1e-12);
        assert!((ce.eps_est - biased.eps_est).abs() < 1e-12);
    }

    #[test]
    fn biased_examples() {
        let ch = ChannelParams::new(0.4, 0.05).unwrap();
        assert_eq!(
            biased_channel_params(&ch, 1.0).unwrap(),
            ChannelEstimate::exact(0.4, 0.05)
        );
        assert!((biased_channel_params(&ch, 5.0).unwrap().eps_est - 0.01).abs() < 1e-15);
        let ch = ChannelParams::new(0.05, 0.01).unwrap();
        assert!((biased_channel_params(&ch, 10.0).unwrap().eps_est - 0.001).abs() < 1e-15);
        assert!(biased_channel_params(&ch, 0.9).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn biased_noise_strictly_decreasing(eps in 1e-4f64..1.0, k in 1.0f64..50.0, dk in 1e-3f64..10.0) {
                let ch = ChannelParams::new(0.5, eps).unwrap();
                let a = biased_channel_params(&ch, k).unwrap().eps_est;
                let b = biased_channel_params(&ch, k + dk).unwrap().eps_est;
                prop_assert!(b < a);
            }

            #[test]
            fn tail_coefficient_inverts(p in 1e-14f64..0.999) {
                let z = inverse_tail_coefficient(p).unwrap();
                let back = statrs::function::erf::erfc(z / std::f64::consts::SQRT_2);
                prop_assert!(((back - p) / p).abs() < 1e-9);
            }
        }
    }
}
