//! Run directories, manifests, sweeps and comparisons behind the `obsspd`
//! binary.
//!
//! A run directory holds `metrics.csv`, `controller_trace.csv`,
//! `events.csv` (unless disabled), `scenario.toml` and `manifest.toml`. The
//! manifest embeds the fully resolved scenario, so `obsspd run
//! manifest.toml --out elsewhere` regenerates identical files.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use obsspd::error::{ConfigError, SimError};
use obsspd::metrics::MetricsSummary;
use obsspd::sim::{run, SimOptions};
use obsspd::trace::{write_events, write_trace};
use obsspd::{ControllerKind, RateSelectorKind, ScenarioSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACE_FILE: &str = "controller_trace.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Invariant(String),
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 1 for configuration and I/O problems, 2 for a violated runtime invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Invariant(_) => 2,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            other => CliError::Invariant(other.to_string()),
        }
    }
}

/// Command-line replacements for scenario fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub controller: Option<ControllerKind>,
    pub rate_selector: Option<RateSelectorKind>,
    pub horizon_s: Option<f64>,
    pub t_step_s: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, spec: &ScenarioSpec) -> Result<ScenarioSpec, CliError> {
        let mut s = spec.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(c) = self.controller {
            s.controller = c;
        }
        if let Some(r) = self.rate_selector {
            s.rate_selector = r;
        }
        if let Some(h) = self.horizon_s {
            s.sim.horizon_s = h;
        }
        if let Some(t) = self.t_step_s {
            s.sim.t_step_s = t;
        }
        s.validate()?;
        Ok(s)
    }
}

pub fn parse_controller(s: &str) -> Result<ControllerKind, CliError> {
    ControllerKind::parse(s).ok_or_else(|| {
        CliError::Config(format!(
            "--controller `{s}`: expected racebot, dsc, rtot, no-obsspd or static:<dBm>"
        ))
    })
}

pub fn parse_rate(s: &str) -> Result<RateSelectorKind, CliError> {
    RateSelectorKind::parse(s)
        .ok_or_else(|| CliError::Config(format!("--rate `{s}`: expected thompson, minstrel or fixed:<mcs>")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// SHA-256 of the resolved scenario file, including seed and algorithms.
    pub config_hash: String,
    /// SHA-256 of what runs must share to be comparable: geometry, traffic
    /// and simulation parameters, but not seed or algorithm choice.
    pub scenario_hash: String,
    pub seed: u64,
    pub controller: String,
    pub rate_selector: String,
    pub event_log: bool,
    pub outputs: Vec<String>,
    pub scenario: ScenarioSpec,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(spec: &ScenarioSpec) -> String {
    sha256_hex(spec.to_toml().as_bytes())
}

pub fn scenario_hash(spec: &ScenarioSpec) -> Result<String, CliError> {
    let topology = spec.topology()?;
    let mut s = spec.clone();
    s.name.clear();
    s.seed = 0;
    s.controller = ControllerKind::NoObsspd;
    s.rate_selector = RateSelectorKind::Thompson;
    for (i, b) in s.bss.iter_mut().enumerate() {
        b.controller = None;
        b.placement = None;
        b.stas = topology
            .nodes
            .iter()
            .filter(|n| n.bss == i && !n.is_ap)
            .map(|n| n.position)
            .collect();
    }
    Ok(sha256_hex(s.to_toml().as_bytes()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Loads a scenario file, or the scenario embedded in a run manifest.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, CliError> {
    let text = read(path)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if table.contains_key("scenario") && !table.contains_key("bss") {
        let m: Manifest =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok(m.scenario);
    }
    ScenarioSpec::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    toml::from_str(&read(&path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Runs one simulation and writes its artifacts into `dir`.
pub fn run_to_dir(spec: &ScenarioSpec, dir: &Path, event_log: bool) -> Result<Manifest, CliError> {
    spec.validate()?;
    let scenario_hash = scenario_hash(spec)?;
    let out = run(
        spec,
        SimOptions {
            event_log,
            record_observations: false,
        },
    )?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let csv_err = |path: &Path, e: csv::Error| CliError::io(path, io::Error::other(e));
    let mut outputs = Vec::new();
    let mut buf = Vec::new();
    out.metrics.write_csv(&mut buf).map_err(|e| csv_err(dir, e))?;
    write(&dir.join(METRICS_FILE), &buf)?;
    outputs.push(METRICS_FILE.to_string());

    buf.clear();
    write_trace(&out.trace, &mut buf).map_err(|e| csv_err(dir, e))?;
    write(&dir.join(TRACE_FILE), &buf)?;
    outputs.push(TRACE_FILE.to_string());

    if event_log {
        buf.clear();
        write_events(&out.events, &mut buf).map_err(|e| csv_err(dir, e))?;
        write(&dir.join(EVENTS_FILE), &buf)?;
        outputs.push(EVENTS_FILE.to_string());
    }

    let text = spec.to_toml();
    write(&dir.join(SCENARIO_FILE), text.as_bytes())?;
    outputs.push(SCENARIO_FILE.to_string());

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: sha256_hex(text.as_bytes()),
        scenario_hash,
        seed: spec.seed,
        controller: spec.controller.name(),
        rate_selector: spec.rate_selector.name(),
        event_log,
        outputs,
        scenario: spec.clone(),
    };
    let m = toml::to_string(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write(&dir.join(MANIFEST_FILE), m.as_bytes())?;
    Ok(manifest)
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combination {
    pub seed: u64,
    pub controller: ControllerKind,
    pub rate_selector: RateSelectorKind,
}

impl Combination {
    pub fn dir_name(&self) -> String {
        format!("{}_{}_seed{}", self.controller.name(), self.rate_selector.name(), self.seed)
    }
}

pub fn combinations(seeds: &[u64], controllers: &[ControllerKind], rates: &[RateSelectorKind]) -> Vec<Combination> {
    let mut out = Vec::new();
    for &seed in seeds {
        for &controller in controllers {
            for &rate_selector in rates {
                out.push(Combination {
                    seed,
                    controller,
                    rate_selector,
                });
            }
        }
    }
    out
}

/// Runs every combination in parallel, one output directory each. All runs
/// finish before the first error (in combination order) is reported.
pub fn sweep(
    base: &ScenarioSpec,
    combos: &[Combination],
    out: &Path,
    event_log: bool,
) -> Result<Vec<(PathBuf, Manifest)>, CliError> {
    if combos.is_empty() {
        return Err(CliError::Config("sweep needs at least one seed, controller and rate selector".into()));
    }
    let specs = combos
        .iter()
        .map(|c| {
            Overrides {
                seed: Some(c.seed),
                controller: Some(c.controller),
                rate_selector: Some(c.rate_selector),
                ..Default::default()
            }
            .apply(base)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<(PathBuf, Manifest), CliError>> = combos
        .par_iter()
        .zip(specs.par_iter())
        .map(|(c, spec)| {
            let dir = out.join(c.dir_name());
            run_to_dir(spec, &dir, event_log).map(|m| (dir, m))
        })
        .collect();
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub dir: PathBuf,
    pub controller: String,
    pub rate_selector: String,
    pub seed: u64,
    pub total_transfer_mbit: f64,
    pub final_step_mbps: f64,
    /// Total transfer minus that of the first run.
    pub delta_mbit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Per run, the aggregated throughput of each step.
    pub series: Vec<Vec<f64>>,
}

pub fn compare(dirs: &[PathBuf]) -> Result<Comparison, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Config("compare needs at least two run directories".into()));
    }
    let mut manifests = Vec::new();
    let mut summaries = Vec::new();
    for d in dirs {
        manifests.push(read_manifest(d)?);
        let path = d.join(METRICS_FILE);
        let f = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        summaries.push(MetricsSummary::from_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    let reference = &manifests[0].scenario_hash;
    for (d, m) in dirs.iter().zip(&manifests) {
        if &m.scenario_hash != reference {
            return Err(CliError::Config(format!(
                "{} was run on a different scenario than {} (scenario hashes differ)",
                d.display(),
                dirs[0].display()
            )));
        }
    }
    let first = summaries[0].total_transfer_mbit;
    let rows = dirs
        .iter()
        .zip(manifests.iter().zip(&summaries))
        .map(|(d, (m, s))| ComparisonRow {
            dir: d.clone(),
            controller: m.controller.clone(),
            rate_selector: m.rate_selector.clone(),
            seed: m.seed,
            total_transfer_mbit: s.total_transfer_mbit,
            final_step_mbps: s.aggregate_series.last().copied().unwrap_or(0.0),
            delta_mbit: s.total_transfer_mbit - first,
        })
        .collect();
    Ok(Comparison {
        rows,
        series: summaries.into_iter().map(|s| s.aggregate_series).collect(),
    })
}

impl Comparison {
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "{:<32} {:<12} {:<10} {:>6} {:>14} {:>12} {:>12}",
            "run", "controller", "rate", "seed", "tm_tot_mbit", "final_mbps", "delta_mbit"
        )?;
        for r in &self.rows {
            let name = r.dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            writeln!(
                out,
                "{:<32} {:<12} {:<10} {:>6} {:>14.3} {:>12.3} {:>12.3}",
                name, r.controller, r.rate_selector, r.seed, r.total_transfer_mbit, r.final_step_mbps, r.delta_mbit
            )?;
        }
        Ok(())
    }

    /// Step-aligned series: per run, the aggregated throughput of each step
    /// and the running total transfer.
    pub fn write_series<W: Write>(&self, out: W, t_step_s: f64) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        for r in &self.rows {
            let name = r.dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            header.push(format!("{name}_mbps"));
            header.push(format!("{name}_cum_mbit"));
        }
        w.write_record(&header)?;
        let steps = self.series.iter().map(Vec::len).max().unwrap_or(0);
        let mut cumulative = vec![0.0; self.series.len()];
        for step in 0..steps {
            let mut rec = vec![step.to_string()];
            for (i, s) in self.series.iter().enumerate() {
                match s.get(step) {
                    Some(&v) => {
                        cumulative[i] += v * t_step_s;
                        rec.push(v.to_string());
                        rec.push(cumulative[i].to_string());
                    }
                    None => {
                        rec.push(String::new());
                        rec.push(String::new());
                    }
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let inv: CliError = SimError::Invariant {
            at: 5,
            what: "coupling".into(),
        }
        .into();
        assert_eq!(inv.exit_code(), 2);
        let cfg: CliError = SimError::Config(ConfigError::invalid("seed", "bad")).into();
        assert_eq!(cfg.exit_code(), 1);
        assert_eq!(CliError::io(Path::new("x"), io::Error::other("e")).exit_code(), 1);
    }

    #[test]
    fn combinations_are_seed_major() {
        let c = combinations(
            &[1, 2],
            &[ControllerKind::Racebot, ControllerKind::Dsc],
            &[RateSelectorKind::Thompson],
        );
        assert_eq!(c.len(), 4);
        assert_eq!(c[1].dir_name(), "dsc_thompson_seed1");
        assert_eq!(c[2].seed, 2);
    }
}
