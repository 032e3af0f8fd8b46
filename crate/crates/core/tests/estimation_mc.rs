mod support;

use cvqkd_core::channel::{bob_noise_variance, simulate_channel};
use cvqkd_core::estimation::{
    channel_params_from_estimates, estimate_ml, inverse_tail_coefficient, SizeCheck,
};
use cvqkd_core::experiment::{CoverageReport, EstimationExperiment, MaskingReport};
use cvqkd_core::params::distance_to_transmissivity;
use cvqkd_core::{ChannelParams, FaultAttackScenario, SystemParams};

#[test]
fn tail_coefficient_matches_quadrature() {
    for &eps in &[0.5, 0.05, 1e-3, 1e-6, 1e-10] {
        let z = inverse_tail_coefficient(eps).unwrap();
        let oracle = support::tail_coefficient_bisection(eps);
        assert!(
            (z - oracle).abs() < 1e-9 * oracle,
            "eps={eps}: {z} vs {oracle}"
        );
    }
}

#[test]
fn simulated_moments_match_model() {
    let sys = SystemParams::default();
    let ch = ChannelParams::new(0.3, 0.05).unwrap();
    let scen = FaultAttackScenario::new(2.0, 0.1).unwrap();
    let n = 1_000_000;
    let set = simulate_channel(&sys, &ch, &scen, n, 11).unwrap();
    let (mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0);
    for p in set.pairs() {
        saa += p.x_alice * p.x_alice;
        sab += p.x_alice * p.x_bob;
        sbb += p.x_bob * p.x_bob;
    }
    let nf = n as f64;
    let gain = (scen.k * sys.eta * ch.t_trans).sqrt();
    let var_a = sys.v_a0;
    let cov = gain * var_a;
    let var_b = gain * gain * var_a + bob_noise_variance(&sys, &ch, &scen);
    // standard errors of Gaussian second moments
    let se_aa = var_a * (2.0 / nf).sqrt();
    let se_ab = ((var_a * var_b + cov * cov) / nf).sqrt();
    let se_bb = var_b * (2.0 / nf).sqrt();
    assert!((saa / nf - var_a).abs() < 5.0 * se_aa);
    assert!((sab / nf - cov).abs() < 5.0 * se_ab);
    assert!((sbb / nf - var_b).abs() < 5.0 * se_bb);
}

#[test]
fn fault_bias_law() {
    let sys = SystemParams::default();
    let ch = ChannelParams::new(0.1, 0.05).unwrap();
    for &k in &[1.0, 2.0, 5.0] {
        let set = simulate_channel(
            &sys,
            &ch,
            &FaultAttackScenario::new(k, 0.0).unwrap(),
            1_000_000,
            5,
        )
        .unwrap();
        let ml = estimate_ml(&set).unwrap();
        let est = channel_params_from_estimates(&ml, &sys).unwrap();
        let se = cvqkd_core::estimation::excess_noise_standard_error(&ml, &sys);
        assert!(
            (est.eps_est - 0.05 / k).abs() < 5.0 * se,
            "k={k}: {} se {se}",
            est.eps_est
        );
        let t_se = 2.0 * ml.t_hat * (ml.sigma2_hat / (1e6 * ml.v_x)).sqrt() / sys.eta;
        assert!(
            (est.t_est - k * 0.1).abs() < 5.0 * t_se,
            "k={k}: {}",
            est.t_est
        );
    }
}

#[test]
fn error_shrinks_with_block_size() {
    let sys = SystemParams::default();
    let ch = ChannelParams::new(0.2, 0.05).unwrap();
    let mean_abs_error = |m: usize| {
        let exp = EstimationExperiment {
            system: sys,
            channel: ch,
            scenario: FaultAttackScenario::default(),
            m,
            check: SizeCheck::Override,
        };
        let rows = exp.run(300, 20).unwrap();
        rows.iter().map(|r| (r.eps_est - 0.05).abs()).sum::<f64>() / rows.len() as f64
    };
    let (a, b, c) = (
        mean_abs_error(10_000),
        mean_abs_error(100_000),
        mean_abs_error(1_000_000),
    );
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn masking_survives_full_pipeline() {
    let t = distance_to_transmissivity(50.0, 0.2).unwrap();
    let exp = EstimationExperiment {
        system: SystemParams::default(),
        channel: ChannelParams::new(t, 0.1).unwrap(),
        scenario: FaultAttackScenario::new(5.0, 0.2).unwrap(),
        m: 1_000_000,
        check: SizeCheck::Enforce,
    };
    let trials = exp.run(1000, 6).unwrap();
    let report = MaskingReport::from_trials(&exp, &trials, 5.0);
    assert!((report.expected_eps - 0.1).abs() < 1e-15);
    assert_eq!(report.within_fraction, 1.0, "{report:?}");
    assert!(report.mean_within);
}

#[test]
fn interval_coverage() {
    let exp = EstimationExperiment {
        system: SystemParams {
            eps_pe: 0.05,
            ..SystemParams::default()
        },
        channel: ChannelParams::new(0.4, 0.03).unwrap(),
        scenario: FaultAttackScenario::default(),
        m: 20_000,
        check: SizeCheck::Override,
    };
    let trials = exp.run(7_000, 1000).unwrap();
    let report = CoverageReport::from_trials(&exp, &trials);
    assert!((0.93..=0.97).contains(&report.gain_coverage), "{report:?}");
    assert!((0.93..=0.97).contains(&report.noise_coverage), "{report:?}");
}
