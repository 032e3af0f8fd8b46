//! Finite-size secret key rate against collective attacks, reverse
//! reconciliation, homodyne detection with a trusted noisy detector.
//!
//! `K = (n/N) (beta I_AB - S_BE - Delta(n))`, where `I_AB` uses the point
//! estimate of the channel and `S_BE` the worst-case bounds `(T_min, eps_max)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::{biased_channel_params, ChannelEstimate};
use crate::params::{ChannelParams, FaultAttackScenario, SystemParams};

/// Relative tolerance under which a negative discriminant is treated as zero.
pub const DISCRIMINANT_TOL: f64 = 1e-9;
/// Relative discriminant size indistinguishable from rounding; such a pair is
/// treated as exactly degenerate.
pub const DEGENERACY_TOL: f64 = 1e-14;
/// Slack below 1 tolerated for a symplectic eigenvalue.
pub const EIGENVALUE_FLOOR_TOL: f64 = 1e-9;

/// Input-referred noise decomposition (SNU).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub chi_line: f64,
    pub chi_hom: f64,
    pub chi_tot: f64,
}

impl NoiseBudget {
    pub fn new(t_trans: f64, eps: f64, eta: f64, nu_el: f64) -> Result<Self> {
        if !(t_trans > 0.0) {
            return Err(invalid("t_trans", t_trans, "must be positive"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(invalid("eta", eta, "must lie in (0, 1]"));
        }
        let chi_line = 1.0 / t_trans - 1.0 + eps;
        let chi_hom = (1.0 - eta + nu_el) / eta;
        Ok(Self {
            chi_line,
            chi_hom,
            chi_tot: chi_line + chi_hom / t_trans,
        })
    }
}

/// Symplectic eigenvalues entering the Holevo bound, with the invariants of
/// the Alice-Bob covariance matrix (`a`, `b`) and of Alice's state conditioned
/// on Bob's homodyne outcome (`c`, `d`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticSpectrum {
    pub lambda: [f64; 5],
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Shannon mutual information, bits per pulse.
    pub i_ab: f64,
    /// Holevo bound on Eve's information, bits per pulse.
    pub s_be: f64,
    /// Privacy-amplification penalty, bits per pulse.
    pub delta_n: f64,
    /// Bits per pulse. Negative means no key can be extracted.
    pub key_rate: f64,
    pub spectrum: SymplecticSpectrum,
    pub noise: NoiseBudget,
    pub v_a0: f64,
    pub t_used: f64,
    pub eps_used: f64,
    pub t_min: f64,
    pub eps_max: f64,
    pub beta: f64,
    /// n/N.
    pub key_fraction: f64,
}

impl KeyRateReport {
    /// Key rate recomputed from the report's own fields.
    pub fn recompute(&self) -> f64 {
        combine(
            self.key_fraction,
            self.beta,
            self.i_ab,
            self.s_be,
            self.delta_n,
        )
    }

    pub fn clamped(&self) -> f64 {
        self.key_rate.max(0.0)
    }
}

fn combine(key_fraction: f64, beta: f64, i_ab: f64, s_be: f64, delta_n: f64) -> f64 {
    key_fraction * (beta * i_ab - s_be - delta_n)
}

pub fn mutual_information(v_a0: f64, noise: &NoiseBudget) -> Result<f64> {
    if !(v_a0 >= 0.0 && v_a0.is_finite()) {
        return Err(invalid("v_a0", v_a0, "must be non-negative"));
    }
    if !(noise.chi_tot > -1.0) {
        return Err(invalid(
            "chi_tot",
            noise.chi_tot,
            "total noise must exceed -1",
        ));
    }
    Ok(0.5 * ((v_a0 + 1.0 + noise.chi_tot) / (1.0 + noise.chi_tot)).log2())
}

/// Von Neumann entropy of a thermal state with mean photon number `x`.
pub fn g_function(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid("x", x, "must be non-negative"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// Roots `(big, small)` of `l^2 - s l + p = 0` taken as squared eigenvalues,
/// returned as square roots. The small root comes from `p / big` to avoid
/// cancellation.
fn eigen_pair(sum: f64, prod: f64, which: &'static str) -> Result<(f64, f64)> {
    let mut disc = sum * sum - 4.0 * prod;
    if disc.abs() <= DEGENERACY_TOL * sum * sum {
        disc = 0.0;
    } else if disc < 0.0 {
        if disc >= -DISCRIMINANT_TOL * sum * sum {
            disc = 0.0;
        } else {
            return Err(Error::NumericalDegeneracy {
                which,
                discriminant: disc,
            });
        }
    }
    let big2 = 0.5 * (sum + disc.sqrt());
    if !(big2 > 0.0) {
        return Err(Error::NumericalDegeneracy {
            which,
            discriminant: disc,
        });
    }
    let small2 = prod / big2;
    Ok((big2.sqrt(), small2.sqrt()))
}

pub fn symplectic_spectrum(
    v_a0: f64,
    t_min: f64,
    eps_max: f64,
    sys: &SystemParams,
) -> Result<SymplecticSpectrum> {
    if !(t_min > 0.0 && t_min.is_finite()) {
        return Err(invalid("t_min", t_min, "must be positive and finite"));
    }
    if !(v_a0 > 0.0 && v_a0.is_finite()) {
        return Err(invalid("v_a0", v_a0, "must be positive and finite"));
    }
    if !eps_max.is_finite() {
        return Err(invalid("eps_max", eps_max, "must be finite"));
    }
    let (eta, nu_el) = (sys.eta, sys.nu_el);
    let v = v_a0 + 1.0;
    let bob = t_min * (v_a0 + eps_max) + 1.0;
    let a = v * v - 2.0 * t_min * (v_a0 * v_a0 + 2.0 * v_a0) + bob * bob;
    let sqrt_b = (t_min * eps_max + 1.0) * v - t_min * v_a0;
    let b = sqrt_b * sqrt_b;
    let chi_hom = (1.0 - eta + nu_el) / eta;
    // eta * T_min * (V + chi_tot) = eta * T_min * (V_A0 + eps_max) + 1 + nu_el
    let den = eta * t_min * (v_a0 + eps_max) + 1.0 + nu_el;
    let c = eta * (a * chi_hom + v * sqrt_b.abs() + bob) / den;
    let d = eta * (sqrt_b.abs() * v + b * chi_hom) / den;

    let (l1, l2) = eigen_pair(a, b, "Alice-Bob covariance")?;
    let (l3, l4) = eigen_pair(c, d, "conditional covariance")?;
    let lambda = [l1, l2, l3, l4, 1.0];
    for (i, &l) in lambda.iter().enumerate() {
        if !(l >= 1.0 - EIGENVALUE_FLOOR_TOL) {
            return Err(Error::UnphysicalSpectrum {
                index: i + 1,
                value: l,
            });
        }
    }
    Ok(SymplecticSpectrum { lambda, a, b, c, d })
}

/// Holevo information between Bob's data and Eve, bits per pulse.
pub fn holevo_bound(spec: &SymplecticSpectrum) -> Result<f64> {
    let g = |l: f64| g_function(((l - 1.0) / 2.0).max(0.0));
    let [l1, l2, l3, l4, l5] = spec.lambda;
    Ok(g(l1)? + g(l2)? - g(l3)? - g(l4)? - g(l5)?)
}

/// Privacy-amplification penalty for `n` key pulses.
pub fn finite_size_delta(n: f64, eps_bar: f64, eps_pa: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(invalid("n", n, "must be at least 1"));
    }
    if n.is_infinite() {
        return Ok(0.0);
    }
    Ok(7.0 * ((1.0 / eps_bar).log2() / n).sqrt() + 2.0 / n * (1.0 / eps_pa).log2())
}

pub fn secret_key_rate(
    v_a0: f64,
    ch_est: &ChannelEstimate,
    sys: &SystemParams,
) -> Result<KeyRateReport> {
    let noise = NoiseBudget::new(ch_est.t_est, ch_est.eps_est, sys.eta, sys.nu_el)?;
    let i_ab = mutual_information(v_a0, &noise)?;
    let spectrum = symplectic_spectrum(v_a0, ch_est.t_min, ch_est.eps_max, sys)?;
    let s_be = holevo_bound(&spectrum)?;
    let delta_n = finite_size_delta(sys.n_key() as f64, sys.eps_bar, sys.eps_pa)?;
    let key_fraction = sys.key_fraction();
    Ok(KeyRateReport {
        i_ab,
        s_be,
        delta_n,
        key_rate: combine(key_fraction, sys.beta, i_ab, s_be, delta_n),
        spectrum,
        noise,
        v_a0,
        t_used: ch_est.t_est,
        eps_used: ch_est.eps_est,
        t_min: ch_est.t_min,
        eps_max: ch_est.eps_max,
        beta: sys.beta,
        key_fraction,
    })
}

/// Key rate believed by Alice and Bob versus the one the channel supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateComparison {
    /// `K(V_A0, kT, eps/k)`.
    pub evaluated: KeyRateReport,
    /// `K(k V_A0, T, eps)`.
    pub practical: KeyRateReport,
}

impl KeyRateComparison {
    /// True when the evaluated rate does not exceed the practical one, which
    /// is unexpected for `k > 1`. Reported, not treated as an error.
    pub fn is_anomalous(&self) -> bool {
        self.evaluated.key_rate < self.practical.key_rate
    }
}

/// Evaluated and practical key rates for a true channel under an attenuation
/// fault. The practical excess noise includes intercept-resend noise `2u`.
/// Fails if the biased transmissivity `kT` exceeds 1, where the evaluated
/// covariance matrix is not a physical state.
pub fn evaluated_vs_practical(
    true_ch: &ChannelParams,
    scen: &FaultAttackScenario,
    sys: &SystemParams,
) -> Result<KeyRateComparison> {
    scen.validate()?;
    let ch = ChannelParams::new(true_ch.t_trans, true_ch.eps + 2.0 * scen.u)?;
    let biased = biased_channel_params(&ch, scen.k)?;
    if biased.t_est > 1.0 {
        return Err(invalid(
            "k * t_trans",
            biased.t_est,
            "evaluated transmissivity exceeds 1",
        ));
    }
    let evaluated = secret_key_rate(sys.v_a0, &biased, sys)?;
    let practical = secret_key_rate(
        scen.k * sys.v_a0,
        &ChannelEstimate::exact(ch.t_trans, ch.eps),
        sys,
    )?;
    Ok(KeyRateComparison {
        evaluated,
        practical,
    })
}
