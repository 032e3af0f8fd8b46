use cvqkd_core::estimation::{biased_channel_params, ChannelEstimate};
use cvqkd_core::experiment::MonitorExperiment;
use cvqkd_core::keyrate::secret_key_rate;
use cvqkd_core::monitor::{corrected_key_rate, DetectorCalibration};
use cvqkd_core::{ChannelParams, SystemParams};

#[test]
fn corrected_rate_equals_practical_on_grid() {
    let sys = SystemParams::default();
    for &t in &[0.9, 0.5, 0.2, 0.1, 0.05] {
        for &eps in &[0.005, 0.01, 0.02, 0.05, 0.1] {
            for &k in &[1.0, 1.5, 2.0, 3.0, 5.0] {
                let ch = ChannelParams::new(t, eps).unwrap();
                let biased = biased_channel_params(&ch, k).unwrap();
                let corrected = corrected_key_rate(&biased, k, k * sys.v_a0, &sys)
                    .unwrap()
                    .key_rate;
                let practical =
                    secret_key_rate(k * sys.v_a0, &ChannelEstimate::exact(t, eps), &sys)
                        .unwrap()
                        .key_rate;
                assert!(
                    ((corrected - practical) / practical).abs() < 1e-12,
                    "T={t} eps={eps} k={k}: {corrected} vs {practical}"
                );
            }
        }
    }
}

#[test]
fn monitor_recovers_fault_size() {
    for cal in [
        DetectorCalibration::normalized(),
        DetectorCalibration::telecom_1550nm(),
    ] {
        let exp = MonitorExperiment {
            system: SystemParams::default(),
            calibration: cal,
            k: 5.0,
            n_u: 1_000_000,
        };
        let se = exp.k_point_standard_error();
        for r in exp.run(40, 5).unwrap() {
            assert!((r.k_point - 5.0).abs() < 5.0 * se, "{r:?} se {se}");
            assert!(r.k_hat >= r.k_point);
        }
    }
}
