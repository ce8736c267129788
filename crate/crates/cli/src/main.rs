use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use obsspd::scenario::{build_box5, build_custom_box5, build_exposed_pair};
use obsspd_cli::{
    combinations, compare, load_scenario, parse_controller, parse_rate, run_to_dir, sweep, CliError, Overrides,
};

#[derive(Parser)]
#[command(name = "obsspd", version, about = "Spatial-reuse threshold controllers on a simulated Wi-Fi deployment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts to a directory.
    Run {
        /// Scenario file, or the manifest.toml of an earlier run.
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// racebot, dsc, rtot, no-obsspd or static:<dBm>.
        #[arg(long)]
        controller: Option<String>,
        /// thompson, minstrel or fixed:<mcs>.
        #[arg(long)]
        rate: Option<String>,
    },
    /// Run every seed x controller x rate selector combination in parallel.
    Sweep {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        controllers: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "thompson")]
        rates: Vec<String>,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare run directories that share a scenario.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Also write the step-aligned throughput series as CSV.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Write a built-in scenario file.
    Scenario {
        #[arg(value_enum)]
        kind: ScenarioKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Station position jitter for custom-box5, in metres.
        #[arg(long, default_value_t = 10.0)]
        jitter: f64,
        /// Inter-BSS RSSI for exposed-pair, in dBm.
        #[arg(long, default_value_t = -75.0, allow_hyphen_values = true)]
        target: f64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Common {
    /// Simulated duration in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Controller step in seconds.
    #[arg(long)]
    t_step: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Skip events.csv.
    #[arg(long)]
    no_event_log: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioKind {
    Box5,
    CustomBox5,
    ExposedPair,
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            scenario,
            common,
            seed,
            controller,
            rate,
        } => {
            let base = load_scenario(&scenario)?;
            let spec = Overrides {
                seed,
                controller: controller.as_deref().map(parse_controller).transpose()?,
                rate_selector: rate.as_deref().map(parse_rate).transpose()?,
                horizon_s: common.horizon,
                t_step_s: common.t_step,
            }
            .apply(&base)?;
            let m = run_to_dir(&spec, &common.out, !common.no_event_log)?;
            println!("{} scenario={} config={}", common.out.display(), m.scenario_hash, m.config_hash);
        }
        Command::Sweep {
            scenario,
            common,
            seeds,
            controllers,
            rates,
            jobs,
        } => {
            let base = Overrides {
                horizon_s: common.horizon,
                t_step_s: common.t_step,
                ..Default::default()
            }
            .apply(&load_scenario(&scenario)?)?;
            let controllers = controllers.iter().map(|c| parse_controller(c)).collect::<Result<Vec<_>, _>>()?;
            let rates = rates.iter().map(|r| parse_rate(r)).collect::<Result<Vec<_>, _>>()?;
            let combos = combinations(&seeds, &controllers, &rates);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let runs = pool.install(|| sweep(&base, &combos, &common.out, !common.no_event_log))?;
            for (dir, _) in runs {
                println!("{}", dir.display());
            }
        }
        Command::Compare { dirs, series } => {
            let c = compare(&dirs)?;
            c.write_table(io::stdout().lock()).map_err(|e| CliError::Io {
                path: "stdout".into(),
                source: e,
            })?;
            if let Some(path) = series {
                let t_step = obsspd_cli::read_manifest(&dirs[0])?.scenario.sim.t_step_s;
                let f = fs::File::create(&path).map_err(|e| CliError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                c.write_series(f, t_step).map_err(|e| CliError::Io {
                    path,
                    source: io::Error::other(e),
                })?;
            }
        }
        Command::Scenario {
            kind,
            seed,
            jitter,
            target,
            out,
        } => {
            let spec = match kind {
                ScenarioKind::Box5 => build_box5(seed),
                ScenarioKind::CustomBox5 => build_custom_box5(seed, jitter)?,
                ScenarioKind::ExposedPair => build_exposed_pair(target)?,
            };
            let text = spec.to_toml();
            match out {
                Some(path) => fs::write(&path, text).map_err(|e| CliError::Io { path, source: e })?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("obsspd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
