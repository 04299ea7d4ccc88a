//! Scenario runner behind the `pwl` binary: configuration, dispatch to the
//! bundled scenarios, and artifact writing.

pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use pwl_core::conditional::{CLUSTER_THRESHOLD, DISJOINT_OVERLAP, NULL_SLICE_NORM};
use pwl_core::equilibrium::{ks_critical_value, MAX_ABORT_FRACTION, MIN_ACCEPTANCE, PRNG_NAME};
use pwl_core::guidance::{Trajectory, MAX_HALVINGS, NODE_FLOOR};
use pwl_core::minisuperspace::{BOUNDARY_DENSITY, CONSTRAINT_TOLERANCE, STIFFNESS_BOUND, TOL_EQUIV, VALIDITY_LIMIT};
use pwl_core::scenarios::{ENERGY_DRIFT, NORM_DRIFT_RATE, REGISTRY, STATE_INFIDELITY};
use pwl_core::{io, WaveFunction};
use serde::Serialize;

use config::{Format, Params, ResolvedConfig};

pub const BUILD_ID: &str = env!("PWL_BUILD_ID");

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration or parameters: exit code 1.
    Validation(String),
    /// A module failed while running: exit code 2.
    Numerical { name: &'static str, message: String },
    /// Artifacts could not be written.
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical { .. } | CliError::Output(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical { name, message } => write!(f, "numerical error {name}: {message}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<pwl_core::Error> for CliError {
    fn from(e: pwl_core::Error) -> Self {
        use pwl_core::Error as E;
        match e {
            E::InvalidGrid(_) | E::InvalidArgument(_) | E::GridMismatch | E::Io(_) | E::Format(_) | E::InsufficientSeparation { .. } => {
                CliError::Validation(format!("{} ({})", e, e.name()))
            }
            other => CliError::Numerical { name: other.name(), message: other.to_string() },
        }
    }
}

/// Machine-readable registry for `--list --json`.
pub fn registry_json() -> String {
    let entries: Vec<_> = REGISTRY.iter().map(|(n, d)| serde_json::json!({ "name": n, "description": d })).collect();
    serde_json::to_string_pretty(&entries).expect("static registry serializes")
}

pub fn registry_text() -> String {
    let width = REGISTRY.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    REGISTRY.iter().map(|(n, d)| format!("{n:width$}  {d}\n")).collect()
}

enum Payload {
    Text(String),
    Bytes(Vec<u8>),
}

/// Files produced by one run, written together at the end.
struct Artifacts {
    format: Format,
    files: Vec<(String, Payload)>,
    plots: Vec<Plot>,
}

/// One gnuplot panel: `file` with column `x` against columns `ys`.
struct Plot {
    file: String,
    title: String,
    x: usize,
    ys: Vec<usize>,
    logscale_y: bool,
}

fn csv_to_json(text: &str) -> serde_json::Value {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<serde_json::Value> = lines
        .map(|l| {
            let mut row = serde_json::Map::new();
            for (k, v) in header.iter().zip(l.split(',')) {
                let value = v.parse::<i64>().map(Into::into).or_else(|_| v.parse::<f64>().map(Into::into)).unwrap_or_else(|_| v.into());
                row.insert((*k).to_string(), value);
            }
            serde_json::Value::Object(row)
        })
        .collect();
    serde_json::Value::Array(rows)
}

impl Artifacts {
    fn new(format: Format) -> Self {
        Artifacts { format, files: Vec::new(), plots: Vec::new() }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        self.files.push((format!("{name}.json"), Payload::Text(text + "\n")));
        Ok(())
    }

    /// A table; JSON format writes it as an array of row objects.
    fn table(&mut self, name: &str, csv: String) -> String {
        match self.format {
            Format::Json => {
                let text = serde_json::to_string_pretty(&csv_to_json(&csv)).expect("table serializes");
                self.files.push((format!("{name}.json"), Payload::Text(text + "\n")));
                format!("{name}.json")
            }
            Format::Csv | Format::Snapshot => {
                self.files.push((format!("{name}.csv"), Payload::Text(csv)));
                format!("{name}.csv")
            }
        }
    }

    fn plot(&mut self, name: &str, csv: String, title: &str, x: usize, ys: &[usize], logscale_y: bool) {
        let file = self.table(name, csv);
        self.plots.push(Plot { file, title: title.into(), x, ys: ys.to_vec(), logscale_y });
    }

    fn state(&mut self, name: &str, psi: &WaveFunction) -> Result<(), CliError> {
        match self.format {
            Format::Csv => self.files.push((format!("{name}.csv"), Payload::Text(io::wavefunction_csv(psi)))),
            Format::Snapshot => self.files.push((format!("{name}.pwl"), Payload::Bytes(io::write_snapshot(psi)))),
            Format::Json => {
                let v = serde_json::json!({
                    "grid": psi.grid(),
                    "time": psi.time(),
                    "re": psi.values().iter().map(|z| z.re).collect::<Vec<_>>(),
                    "im": psi.values().iter().map(|z| z.im).collect::<Vec<_>>(),
                });
                self.json(name, &v)?;
            }
        }
        Ok(())
    }

    fn gnuplot(&self) -> Option<String> {
        let panels: Vec<&Plot> = self.plots.iter().filter(|p| p.file.ends_with(".csv")).collect();
        if panels.is_empty() {
            return None;
        }
        let mut s = String::from("# gnuplot script; run from this directory: gnuplot -p plot.gp\nset datafile separator ','\nset key autotitle columnhead\n");
        s.push_str(&format!("set multiplot layout {},1\n", panels.len()));
        for p in panels {
            s.push_str(&format!("set title '{}'\n", p.title));
            s.push_str(if p.logscale_y { "set logscale y\n" } else { "unset logscale y\n" });
            let series: Vec<String> = p.ys.iter().map(|y| format!("'{}' using {}:{} with lines", p.file, p.x, y)).collect();
            s.push_str(&format!("plot {}\n", series.join(", ")));
        }
        s.push_str("unset multiplot\n");
        Some(s)
    }
}

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario: String,
    pub pass: bool,
    pub output: PathBuf,
    pub files: Vec<String>,
}

fn trajectory_csv(samples: &[(f64, pwl_core::guidance::Configuration)], status: pwl_core::guidance::TrajectoryStatus) -> String {
    Trajectory { samples: samples.to_vec(), status }.to_csv()
}

fn tolerances(cfg: &ResolvedConfig) -> BTreeMap<&'static str, f64> {
    let mut t = BTreeMap::from([
        ("norm_drift_rate", NORM_DRIFT_RATE),
        ("energy_drift", ENERGY_DRIFT),
        ("state_infidelity", STATE_INFIDELITY),
        ("node_floor", NODE_FLOOR),
        ("max_node_halvings", MAX_HALVINGS as f64),
        ("max_abort_fraction", MAX_ABORT_FRACTION),
        ("min_acceptance", MIN_ACCEPTANCE),
        ("null_slice_norm", NULL_SLICE_NORM),
        ("cluster_threshold", CLUSTER_THRESHOLD),
        ("disjoint_overlap", DISJOINT_OVERLAP),
        ("tol_equiv", TOL_EQUIV),
        ("wkb_validity_limit", VALIDITY_LIMIT),
        ("boundary_density", BOUNDARY_DENSITY),
        ("stiffness_bound", STIFFNESS_BOUND),
        ("constraint_tolerance", CONSTRAINT_TOLERANCE),
    ]);
    match &cfg.params {
        Params::TwoSlit(p) => {
            t.insert("chi_square_p_value", p.p_value_threshold);
        }
        Params::Equilibrium(p) => {
            t.insert("ks_critical_value", ks_critical_value(p.n));
            t.insert("required_passing_seeds", p.required as f64);
        }
        Params::CwfProduct(p) => {
            t.insert("delta", p.tolerance);
        }
        Params::CwfBranches(p) => {
            t.insert("delta", p.tolerance);
        }
        Params::CwfSemiclassicalEnv(p) => {
            t.insert("delta", p.tolerance);
        }
        Params::CwfMeasurement(p) => {
            t.insert("branch_weight", p.weight_tolerance);
            t.insert("conditional_infidelity", p.fidelity_tolerance);
            t.insert("frequency_sigmas", 3.0);
        }
        Params::FrwWkb(p) => {
            t.insert("relative_scale_factor_error", p.tolerance);
            t.insert("classical_constraint_drift", p.constraint_tolerance);
        }
        Params::FrwLapse(_) => {
            t.insert("lapse_dependence_threshold", 10.0 * TOL_EQUIV);
        }
        Params::SemiclassicalMatter(p) => {
            t.insert("delta", p.params.tolerance);
        }
        Params::Oscillator(_) => {}
    }
    t
}

fn execute(cfg: &ResolvedConfig) -> Result<(bool, Artifacts), CliError> {
    let mut a = Artifacts::new(cfg.format);
    let pass = match &cfg.params {
        Params::Oscillator(p) => {
            let r = p.run()?;
            a.json("report", &r)?;
            a.plot("trajectories", r.paths.to_csv(), "trajectories", 2, &[3], false);
            a.state("state_final", &r.final_state)?;
            r.pass
        }
        Params::TwoSlit(p) => {
            let r = p.run(cfg.seed)?;
            a.json("report", &r)?;
            a.plot("trajectories", r.paths.to_csv(), "recorded trajectories", 2, &[3], false);
            a.state("state_final", &r.final_state)?;
            r.pass
        }
        Params::Equilibrium(p) => {
            let r = p.run(cfg.seed)?;
            a.json("report", &r)?;
            r.pass
        }
        Params::CwfProduct(p) => effective(&mut a, p.run()?)?,
        Params::CwfBranches(p) => effective(&mut a, p.run()?)?,
        Params::CwfSemiclassicalEnv(p) => effective(&mut a, p.run()?)?,
        Params::CwfMeasurement(p) => {
            let r = p.run(cfg.seed)?;
            a.json("report", &r)?;
            let mut csv = String::from("run,x0,y0,y_end,branch,matched,fidelity,other_fidelity\n");
            for (i, m) in r.measurement.runs.iter().enumerate() {
                let branch = m.branch.map_or(-1, |b| b as i64);
                csv.push_str(&format!(
                    "{i},{:.12e},{:.12e},{:.12e},{branch},{},{:.12e},{:.12e}\n",
                    m.x0, m.y0, m.y_end, m.matched, m.fidelity, m.other_fidelity
                ));
            }
            a.table("runs", csv);
            r.pass
        }
        Params::FrwWkb(p) => {
            let r = p.run()?;
            a.json("report", &r)?;
            a.plot("cosmo_trajectory", r.bohmian.to_csv(), "Bohmian alpha(T)", 4, &[2], false);
            a.plot("classical_trajectory", r.classical.to_csv(), "classical alpha(T)", 4, &[2], false);
            r.pass
        }
        Params::FrwLapse(p) => {
            let r = p.run()?;
            a.json("report", &r)?;
            a.plot("cosmo_lapse_1", r.trajectories[0].to_csv(), "alpha(T), lapse 1", 4, &[2], false);
            a.plot("cosmo_lapse_2", r.trajectories[1].to_csv(), "alpha(T), lapse 2", 4, &[2], false);
            r.pass
        }
        Params::SemiclassicalMatter(p) => {
            let r = p.run()?;
            a.json("report", &r)?;
            let table = |rep: &pwl_core::minisuperspace::SemiclassicalReport| {
                let mut csv = String::from("proper_time,alpha,phi,delta,validity\n");
                for q in &rep.points {
                    csv.push_str(&format!(
                        "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                        q.proper_time, q.alpha, q.phi, q.delta, q.validity
                    ));
                }
                csv
            };
            a.plot("delta", table(&r.main), "delta(T)", 1, &[4], true);
            if let Some(g) = &r.guard {
                a.table("guard_delta", table(g));
            }
            r.pass
        }
    };
    Ok((pass, a))
}

fn effective(a: &mut Artifacts, r: pwl_core::scenarios::EffectiveReport) -> Result<bool, CliError> {
    a.json("report", &r)?;
    a.plot("error_curve", r.curve.to_csv(), "delta(t)", 1, &[2], true);
    a.plot("trajectory", trajectory_csv(&r.curve.trajectory, r.curve.status), "actual configuration", 1, &[2, 3], false);
    a.state("state_final", &r.final_state)?;
    Ok(r.pass)
}

fn write_all(dir: &Path, files: &[(String, Payload)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    for (name, payload) in files {
        let path = dir.join(name);
        let res = match payload {
            Payload::Text(t) => std::fs::write(&path, t),
            Payload::Bytes(b) => std::fs::write(&path, b),
        };
        res.map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Runs a resolved configuration and writes every artifact plus
/// `manifest.json` and the `config.toml` echo into the output directory.
/// Nothing is written when the run fails.
pub fn run(cfg: &ResolvedConfig, gnuplot: bool) -> Result<RunSummary, CliError> {
    let echo = cfg.to_toml()?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let work = || execute(cfg);
    let (pass, artifacts) = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Validation(format!("cannot start {n} threads: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let elapsed = clock.elapsed().as_secs_f64();
    let script = if gnuplot { artifacts.gnuplot() } else { None };
    let mut files = artifacts.files;
    if let Some(script) = script {
        files.push(("plot.gp".into(), Payload::Text(script)));
    }
    files.push(("config.toml".into(), Payload::Text(echo)));
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push("manifest.json".into());
    let manifest = serde_json::json!({
        "scenario": cfg.scenario,
        "pass": pass,
        "build": BUILD_ID,
        "started_unix_seconds": started,
        "wall_clock_seconds": elapsed,
        "threads": cfg.threads.unwrap_or_else(rayon::current_num_threads),
        "prng": PRNG_NAME,
        "tolerances": tolerances(cfg),
        "artifacts": names,
        "config": cfg.to_json(),
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))? + "\n";
    files.push(("manifest.json".into(), Payload::Text(text)));
    write_all(&cfg.output, &files)?;
    Ok(RunSummary { scenario: cfg.scenario.clone(), pass, output: cfg.output.clone(), files: names })
}
