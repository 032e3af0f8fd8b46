//! `cvqkd`: sweeps, single-point evaluations and Monte-Carlo experiments for
//! the attenuation-fault model. Every command writes CSV with a header row,
//! to `--out` or stdout.

mod config;
mod exit;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use cvqkd_core::attacks::MaskingAnalysis;
use cvqkd_core::channel::{simulate_channel, split_estimation_key, SampleSet, Units};
use cvqkd_core::estimation::{
    biased_channel_params, channel_params_from_estimates, estimate_ml, ChannelEstimate, SizeCheck,
};
use cvqkd_core::experiment::{
    write_rows_csv, CoverageReport, EstimationExperiment, MaskingReport, MonitorExperiment, Summary,
};
use cvqkd_core::keyrate::{secret_key_rate, KeyRateReport};
use cvqkd_core::monitor::{
    corrected_key_rate, read_voltages_csv, synthesize_voltages, DetectorCalibration, MonitorReading,
};
use cvqkd_core::params::distance_to_transmissivity;
use cvqkd_core::sweep::{
    excess_noise_vs_k, write_fig6_csv, write_sweep_csv, DistanceSweep, Grid, FIG6_DEFAULT_EPS,
};
use cvqkd_core::{ChannelParams, FaultAttackScenario};

use config::ScenarioConfig;
use exit::CliError;

#[derive(Parser, Debug)]
#[command(name = "cvqkd", version, about = "CV-QKD attenuation-fault simulator")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sweep grid `start:stop:step`.
    #[arg(long, global = true)]
    grid: Option<Grid>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ChannelArgs {
    /// Channel transmissivity.
    #[arg(long)]
    t_trans: Option<f64>,
    /// Fiber length (km); converted with the configured loss.
    #[arg(long)]
    distance_km: Option<f64>,
    /// Channel excess noise (SNU).
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct FaultArgs {
    /// Attenuation fault factor.
    #[arg(long)]
    k: Option<f64>,
    /// Intercept-resend fraction.
    #[arg(long)]
    u: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Observed excess noise versus k (grid over k).
    Fig6 {
        /// True excess noise values.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Evaluated, practical and monitor-corrected key rates versus distance.
    Fig7 {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
    },
    /// Draw correlated quadrature pairs.
    Simulate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        fault: FaultArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Fit channel parameters from a quadrature CSV.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = UnitsArg::Snu)]
        units: UnitsArg,
        /// Estimation block size drawn at random from the input; all pairs when absent.
        #[arg(long)]
        m: Option<usize>,
        /// Accept blocks below the normal-approximation threshold.
        #[arg(long)]
        allow_small_m: bool,
    },
    /// Evaluated, practical and corrected key rates at one channel point.
    Keyrate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        fault: FaultArgs,
    },
    /// Intercept-resend masking by an attenuation fault (grid over k).
    Mask {
        /// Technical excess noise.
        #[arg(long)]
        eps_t: Option<f64>,
        #[command(flatten)]
        fault: FaultArgs,
        /// Alarm threshold; defaults to the technical excess noise.
        #[arg(long)]
        alarm: Option<f64>,
    },
    /// Modulation-variance monitor reading.
    Monitor {
        /// Voltage CSV with header `u_volts`; synthesized from k when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = CalibrationArg::Normalized)]
        calibration: CalibrationArg,
        #[command(flatten)]
        fault: FaultArgs,
        #[arg(long)]
        samples: Option<usize>,
        /// Also report the corrected key rate for this channel.
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Monte-Carlo experiment; per-trial CSV plus a TOML summary.
    Montecarlo {
        #[arg(long, value_enum)]
        scenario: Scenario,
        #[arg(long)]
        trials: Option<usize>,
        /// Samples per trial.
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        fault: FaultArgs,
        /// Summary path; stderr when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum UnitsArg {
    Snu,
    Voltage,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CalibrationArg {
    Normalized,
    Telecom,
}

impl CalibrationArg {
    fn get(self) -> DetectorCalibration {
        match self {
            CalibrationArg::Normalized => DetectorCalibration::normalized(),
            CalibrationArg::Telecom => DetectorCalibration::telecom_1550nm(),
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Scenario {
    Masking,
    Coverage,
    Monitor,
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        None => Box::new(io::stdout().lock()),
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::input(format!("cannot create {}: {e}", p.display()))
        })?)),
    })
}

fn fault(cfg: &ScenarioConfig, args: &FaultArgs) -> Result<FaultAttackScenario, CliError> {
    let s = cfg.params.scenario;
    Ok(FaultAttackScenario::new(
        args.k.unwrap_or(s.k),
        args.u.unwrap_or(s.u),
    )?)
}

fn channel(cfg: &ScenarioConfig, args: &ChannelArgs) -> Result<ChannelParams, CliError> {
    cfg.channel(args.t_trans, args.distance_km, args.eps)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvqkd: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

fn set_threads(n: Option<usize>) -> Result<(), CliError> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(CliError::input("--threads must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    warn!("built without the `parallel` feature; --threads {n} ignored");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    set_threads(cli.threads)?;
    let cfg = ScenarioConfig::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    let seed = cfg.seed(cli.seed);
    let grid = cli.grid.as_ref();

    match &cli.command {
        Command::Fig6 { eps } => {
            let eps = eps
                .clone()
                .or(cfg.sweep.eps.clone())
                .unwrap_or(FIG6_DEFAULT_EPS.to_vec());
            let ks = cfg.grid(grid, "1:25:0.5")?;
            let rows = excess_noise_vs_k(&eps, &ks)?;
            write_fig6_csv(&rows, sink(out)?)?;
        }
        Command::Fig7 { eps, k } => {
            let sweep = DistanceSweep {
                system: cfg.params.system,
                eps_list: eps
                    .clone()
                    .or(cfg.sweep.eps.clone())
                    .unwrap_or(vec![0.01, 0.05]),
                k_list: k
                    .clone()
                    .or(cfg.sweep.k.clone())
                    .unwrap_or(vec![1.0, 2.0, 5.0]),
                u: cfg.params.scenario.u,
                distances_km: cfg.grid(grid, "0:150:1")?,
                loss_db_per_km: cfg.params.fiber_loss_db_per_km,
            };
            let rows = sweep.run()?;
            let flagged = rows.iter().filter(|r| !r.warning.is_empty()).count();
            if flagged > 0 {
                warn!("{flagged} sweep rows carry warnings (see the `warning` column)");
            }
            write_sweep_csv(&rows, sink(out)?)?;
        }
        Command::Simulate {
            channel: ch,
            fault: f,
            samples,
        } => {
            let ch = channel(&cfg, ch)?;
            let scen = fault(&cfg, f)?;
            let n = samples.or(cfg.run.samples).unwrap_or(1_000_000);
            let set = simulate_channel(&cfg.params.system, &ch, &scen, n, seed)?;
            match out {
                Some(p) => set.export(p)?,
                None => set.write_csv_to(io::stdout().lock())?,
            }
        }
        Command::Estimate {
            input,
            units,
            m,
            allow_small_m,
        } => {
            let units = match units {
                UnitsArg::Snu => Units::Snu,
                UnitsArg::Voltage => Units::Voltage,
            };
            let set = SampleSet::read_csv(input, units)?;
            let block = match m {
                Some(m) => split_estimation_key(&set, *m, seed)?.0,
                None => set,
            };
            let check = if *allow_small_m {
                SizeCheck::Override
            } else {
                SizeCheck::Enforce
            };
            let sys = &cfg.params.system;
            let ml = estimate_ml(&block)?.with_intervals(sys.eps_pe, check)?;
            let est = channel_params_from_estimates(&ml, sys)?;
            let mut w = csv::Writer::from_writer(sink(out)?);
            w.write_record(
                ["t_hat", "sigma2_hat", "delta_t", "delta_sigma2"]
                    .iter()
                    .chain(ChannelEstimate::CSV_HEADER.iter()),
            )?;
            let mut rec: Vec<String> = [ml.t_hat, ml.sigma2_hat, ml.delta_t, ml.delta_sigma2]
                .iter()
                .map(f64::to_string)
                .collect();
            rec.extend(est.csv_record());
            w.write_record(&rec)?;
            w.flush().map_err(|e| CliError::input(e.to_string()))?;
        }
        Command::Keyrate {
            channel: ch,
            fault: f,
        } => {
            let ch = channel(&cfg, ch)?;
            let scen = fault(&cfg, f)?;
            let sys = &cfg.params.system;
            let attacked = ChannelParams::new(ch.t_trans, ch.eps + 2.0 * scen.u)?;
            let biased = biased_channel_params(&attacked, scen.k)?;
            let practical = secret_key_rate(
                scen.k * sys.v_a0,
                &ChannelEstimate::exact(attacked.t_trans, attacked.eps),
                sys,
            )?;
            let corrected = corrected_key_rate(&biased, scen.k, scen.k * sys.v_a0, sys)?;
            let mut rows = Vec::new();
            let evaluated;
            if biased.t_est > 1.0 {
                warn!(
                    "k T = {} exceeds 1: no physical evaluated state, row omitted",
                    biased.t_est
                );
            } else {
                evaluated = secret_key_rate(sys.v_a0, &biased, sys)?;
                if evaluated.key_rate < practical.key_rate {
                    warn!("evaluated key rate is below the practical one");
                }
                rows.push(("evaluated", &evaluated));
            }
            rows.push(("practical", &practical));
            rows.push(("corrected", &corrected));
            write_keyrate_csv(&rows, sink(out)?)?;
        }
        Command::Mask {
            eps_t,
            fault: f,
            alarm,
        } => {
            let eps_t = eps_t.or(cfg.channel.eps).ok_or_else(|| {
                CliError::input("technical excess noise not given (--eps-t or [channel] eps)")
            })?;
            let scen = fault(&cfg, f)?;
            let alarm = alarm.unwrap_or(eps_t);
            let ks = match (grid, &cfg.sweep.grid) {
                (None, None) => vec![scen.k],
                _ => cfg.grid(grid, "1:1:1")?,
            };
            let mut w = csv::Writer::from_writer(sink(out)?);
            w.write_record(MaskingAnalysis::CSV_HEADER)?;
            for k in ks {
                w.write_record(MaskingAnalysis::new(eps_t, scen.u, k, alarm)?.csv_record())?;
            }
            w.flush().map_err(|e| CliError::input(e.to_string()))?;
        }
        Command::Monitor {
            input,
            calibration,
            fault: f,
            samples,
            channel: ch,
        } => {
            let sys = &cfg.params.system;
            let cal = calibration.get();
            let scen = fault(&cfg, f)?;
            let u = match input {
                Some(p) => read_voltages_csv(p)?,
                None => {
                    let n = samples.or(cfg.run.samples).unwrap_or(1_000_000);
                    synthesize_voltages(scen.k * sys.v_a0, sys, &cal, n, seed)?
                }
            };
            let r = MonitorReading::from_voltages(&u, &cal, sys)?;
            if r.below_nominal() {
                warn!(
                    "monitored variance is below the preset modulation variance (k_hat = {})",
                    r.k_hat
                );
            }
            let wants_rate =
                ch.t_trans.is_some() || ch.distance_km.is_some() || cfg.channel.eps.is_some();
            let rate = if wants_rate {
                let chp = channel(&cfg, ch)?;
                let k_used = r.k_hat.max(1.0);
                let attacked = ChannelParams::new(chp.t_trans, chp.eps + 2.0 * scen.u)?;
                let biased = biased_channel_params(&attacked, scen.k)?;
                Some(corrected_key_rate(&biased, k_used, k_used * sys.v_a0, sys)?.key_rate)
            } else {
                None
            };
            write_monitor_csv(&r, rate, sink(out)?)?;
        }
        Command::Montecarlo {
            scenario,
            trials,
            samples,
            channel: ch,
            fault: f,
            summary,
        } => {
            let ok = montecarlo(
                &cfg,
                *scenario,
                *trials,
                *samples,
                ch,
                f,
                seed,
                out,
                summary.as_deref(),
            )?;
            if !ok {
                return Err(CliError::invariant(format!(
                    "{scenario:?} scenario check failed"
                )));
            }
        }
    }
    Ok(())
}

fn write_keyrate_csv(rows: &[(&str, &KeyRateReport)], w: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "path", "v_a0", "t_est", "eps_est", "t_min", "eps_max", "i_ab", "s_be", "delta_n",
        "key_rate", "lambda1", "lambda2", "lambda3", "lambda4", "lambda5",
    ])?;
    for (name, r) in rows {
        let mut rec = vec![name.to_string()];
        rec.extend(
            [
                r.v_a0, r.t_used, r.eps_used, r.t_min, r.eps_max, r.i_ab, r.s_be, r.delta_n,
                r.key_rate,
            ]
            .iter()
            .chain(r.spectrum.lambda.iter())
            .map(f64::to_string),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::input(e.to_string()))
}

fn write_monitor_csv(r: &MonitorReading, rate: Option<f64>, w: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "n_u",
        "var_raw",
        "var_corrected",
        "v_m",
        "v_p",
        "k_hat",
        "k_point",
        "below_nominal",
        "K_m",
    ])?;
    w.write_record([
        r.n_u.to_string(),
        r.var_raw.to_string(),
        r.var_corrected.to_string(),
        r.v_m.to_string(),
        r.v_p.to_string(),
        r.k_hat.to_string(),
        r.k_point.to_string(),
        r.below_nominal().to_string(),
        rate.map_or_else(String::new, |x| x.to_string()),
    ])?;
    w.flush().map_err(|e| CliError::input(e.to_string()))
}

fn write_summary(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn to_toml<T: serde::Serialize>(v: &T) -> String {
    toml::to_string(v).expect("report serializes")
}

#[allow(clippy::too_many_arguments)]
fn montecarlo(
    cfg: &ScenarioConfig,
    scenario: Scenario,
    trials: Option<usize>,
    samples: Option<usize>,
    ch: &ChannelArgs,
    f: &FaultArgs,
    seed: u64,
    out: Option<&Path>,
    summary: Option<&Path>,
) -> Result<bool, CliError> {
    let given_channel = ch.t_trans.is_some()
        || ch.distance_km.is_some()
        || cfg.channel.t_trans.is_some()
        || cfg.channel.distance_km.is_some();
    let mut sys = cfg.params.system;
    match scenario {
        Scenario::Masking | Scenario::Coverage => {
            let (default_ch, default_k, default_u, default_m, default_trials) = match scenario {
                Scenario::Masking => (
                    (distance_to_transmissivity(50.0, 0.2)?, 0.1),
                    5.0,
                    0.2,
                    1_000_000,
                    30,
                ),
                _ => (
                    (0.5, 0.05),
                    cfg.params.scenario.k,
                    cfg.params.scenario.u,
                    100_000,
                    1000,
                ),
            };
            let channel = if given_channel {
                channel(cfg, ch)?
            } else {
                ChannelParams::new(
                    default_ch.0,
                    ch.eps.or(cfg.channel.eps).unwrap_or(default_ch.1),
                )?
            };
            let scen =
                FaultAttackScenario::new(f.k.unwrap_or(default_k), f.u.unwrap_or(default_u))?;
            let check = if scenario == Scenario::Coverage {
                sys.eps_pe = 0.05;
                SizeCheck::Override
            } else {
                SizeCheck::Enforce
            };
            let exp = EstimationExperiment {
                system: sys,
                channel,
                scenario: scen,
                m: samples.or(cfg.run.samples).unwrap_or(default_m),
                check,
            };
            let n = trials.or(cfg.run.trials).unwrap_or(default_trials);
            info!("{scenario:?}: {n} trials of {} samples", exp.m);
            let rows = exp.run(seed, n)?;
            write_rows_csv(&rows, sink(out)?)?;
            if scenario == Scenario::Masking {
                let report = MaskingReport::from_trials(&exp, &rows, 5.0);
                write_summary(summary, &to_toml(&report))?;
                Ok(report.within_fraction == 1.0 && report.mean_within)
            } else {
                let report = CoverageReport::from_trials(&exp, &rows);
                write_summary(summary, &to_toml(&report))?;
                let band = 0.93..=0.97;
                Ok(band.contains(&report.gain_coverage) && band.contains(&report.noise_coverage))
            }
        }
        Scenario::Monitor => {
            let exp = MonitorExperiment {
                system: sys,
                calibration: DetectorCalibration::normalized(),
                k: f.k.unwrap_or(5.0),
                n_u: samples.or(cfg.run.samples).unwrap_or(1_000_000),
            };
            let n = trials.or(cfg.run.trials).unwrap_or(30);
            let rows = exp.run(seed, n)?;
            write_rows_csv(&rows, sink(out)?)?;
            let points: Vec<f64> = rows.iter().map(|r| r.k_point).collect();
            let agg = Summary::of(&points);
            let se = exp.k_point_standard_error();
            let each = rows.iter().all(|r| (r.k_point - exp.k).abs() <= 5.0 * se);
            let mean_se = if agg.std_err.is_finite() {
                agg.std_err
            } else {
                se
            };
            let mean_ok = (agg.mean - exp.k).abs() <= 5.0 * mean_se;
            #[derive(serde::Serialize)]
            struct MonitorSummary {
                k: f64,
                k_point: Summary,
                single_reading_std_err: f64,
                all_within: bool,
                mean_within: bool,
            }
            write_summary(
                summary,
                &to_toml(&MonitorSummary {
                    k: exp.k,
                    k_point: agg,
                    single_reading_std_err: se,
                    all_within: each,
                    mean_within: mean_ok,
                }),
            )?;
            Ok(each && mean_ok)
        }
    }
}
