//! Scenario configuration files.
//!
//! A config is a TOML document with optional top-level keys `scenario`,
//! `seed`, `output`, `format` and `threads`, plus at most one table named
//! after the selected scenario holding its parameters. Unknown keys are
//! rejected everywhere; missing parameters take the preset's value.

use std::path::PathBuf;

use pwl_core::scenarios::{
    CwfBranchesScenario, CwfMeasurementScenario, CwfProductScenario, CwfSemiclassicalEnvScenario, EquilibriumScenario,
    FrwLapseOverrides, FrwLapseScenario, FrwWkbScenario, OscillatorOverrides, OscillatorScenario,
    SemiclassicalMatterScenario, TwoSlitScenario, REGISTRY,
};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Snapshot,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Snapshot => "snapshot",
        }
    }
}

/// The file as written, before presets are applied.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<Spanned<String>>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    #[serde(rename = "ho-ground")]
    pub ho_ground: Option<Spanned<OscillatorOverrides>>,
    #[serde(rename = "ho-superposition")]
    pub ho_superposition: Option<Spanned<OscillatorOverrides>>,
    #[serde(rename = "two-slit")]
    pub two_slit: Option<Spanned<TwoSlitScenario>>,
    pub equilibrium: Option<Spanned<EquilibriumScenario>>,
    #[serde(rename = "cwf-product")]
    pub cwf_product: Option<Spanned<CwfProductScenario>>,
    #[serde(rename = "cwf-branches")]
    pub cwf_branches: Option<Spanned<CwfBranchesScenario>>,
    #[serde(rename = "cwf-measurement")]
    pub cwf_measurement: Option<Spanned<CwfMeasurementScenario>>,
    #[serde(rename = "cwf-semiclassical-env")]
    pub cwf_semiclassical_env: Option<Spanned<CwfSemiclassicalEnvScenario>>,
    #[serde(rename = "frw-wkb")]
    pub frw_wkb: Option<Spanned<FrwWkbScenario>>,
    #[serde(rename = "frw-lapse")]
    pub frw_lapse: Option<Spanned<FrwLapseOverrides>>,
    #[serde(rename = "frw-superposition-lapse")]
    pub frw_superposition_lapse: Option<Spanned<FrwLapseOverrides>>,
    #[serde(rename = "semiclassical-matter")]
    pub semiclassical_matter: Option<Spanned<SemiclassicalMatterScenario>>,
}

/// Fully resolved parameters of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Oscillator(OscillatorScenario),
    TwoSlit(TwoSlitScenario),
    Equilibrium(EquilibriumScenario),
    CwfProduct(CwfProductScenario),
    CwfBranches(CwfBranchesScenario),
    CwfMeasurement(CwfMeasurementScenario),
    CwfSemiclassicalEnv(CwfSemiclassicalEnvScenario),
    FrwWkb(FrwWkbScenario),
    FrwLapse(FrwLapseScenario),
    SemiclassicalMatter(SemiclassicalMatterScenario),
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub scenario: String,
    pub seed: u64,
    pub output: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    pub params: Params,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT_ROOT: &str = "pwl-out";

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

pub fn parse(text: &str, path: &str) -> Result<ConfigFile, CliError> {
    toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| line_col(text, s.start));
        let msg = e.message().to_string();
        match at {
            Some((l, c)) => CliError::Validation(format!("{path}:{l}:{c}: {msg}")),
            None => CliError::Validation(format!("{path}: {msg}")),
        }
    })
}

pub fn is_registered(name: &str) -> bool {
    REGISTRY.iter().any(|(n, _)| *n == name)
}

fn take<T>(block: Option<Spanned<T>>) -> Option<T> {
    block.map(Spanned::into_inner)
}

/// Applies command-line overrides and presets. `text` and `path` are used
/// for diagnostics only.
pub fn resolve(file: ConfigFile, cli: Overrides, text: &str, path: &str, out_root: Option<PathBuf>) -> Result<ResolvedConfig, CliError> {
    let scenario = match (cli.scenario, &file.scenario) {
        (Some(s), _) => s,
        (None, Some(s)) => s.get_ref().clone(),
        (None, None) => return Err(CliError::Validation("no scenario selected (use --scenario or `scenario = ...`)".into())),
    };
    if !is_registered(&scenario) {
        let (l, c) = file.scenario.as_ref().map_or((0, 0), |s| line_col(text, s.span().start));
        let place = if l > 0 { format!("{path}:{l}:{c}: ") } else { String::new() };
        return Err(CliError::Validation(format!("{place}unknown scenario `{scenario}` (see --list)")));
    }
    let blocks: [(&str, Option<std::ops::Range<usize>>); 12] = [
        ("ho-ground", file.ho_ground.as_ref().map(Spanned::span)),
        ("ho-superposition", file.ho_superposition.as_ref().map(Spanned::span)),
        ("two-slit", file.two_slit.as_ref().map(Spanned::span)),
        ("equilibrium", file.equilibrium.as_ref().map(Spanned::span)),
        ("cwf-product", file.cwf_product.as_ref().map(Spanned::span)),
        ("cwf-branches", file.cwf_branches.as_ref().map(Spanned::span)),
        ("cwf-measurement", file.cwf_measurement.as_ref().map(Spanned::span)),
        ("cwf-semiclassical-env", file.cwf_semiclassical_env.as_ref().map(Spanned::span)),
        ("frw-wkb", file.frw_wkb.as_ref().map(Spanned::span)),
        ("frw-lapse", file.frw_lapse.as_ref().map(Spanned::span)),
        ("frw-superposition-lapse", file.frw_superposition_lapse.as_ref().map(Spanned::span)),
        ("semiclassical-matter", file.semiclassical_matter.as_ref().map(Spanned::span)),
    ];
    for (name, span) in blocks {
        if let Some(span) = span {
            if name != scenario {
                let (l, c) = line_col(text, span.start);
                return Err(CliError::Validation(format!(
                    "{path}:{l}:{c}: parameter block `{name}` does not belong to scenario `{scenario}`"
                )));
            }
        }
    }
    let params = match scenario.as_str() {
        "ho-ground" => Params::Oscillator(take(file.ho_ground).unwrap_or_default().apply(OscillatorScenario::ground())),
        "ho-superposition" => {
            Params::Oscillator(take(file.ho_superposition).unwrap_or_default().apply(OscillatorScenario::superposition()))
        }
        "two-slit" => Params::TwoSlit(take(file.two_slit).unwrap_or_default()),
        "equilibrium" => Params::Equilibrium(take(file.equilibrium).unwrap_or_default()),
        "cwf-product" => Params::CwfProduct(take(file.cwf_product).unwrap_or_default()),
        "cwf-branches" => Params::CwfBranches(take(file.cwf_branches).unwrap_or_default()),
        "cwf-measurement" => Params::CwfMeasurement(take(file.cwf_measurement).unwrap_or_default()),
        "cwf-semiclassical-env" => Params::CwfSemiclassicalEnv(take(file.cwf_semiclassical_env).unwrap_or_default()),
        "frw-wkb" => Params::FrwWkb(take(file.frw_wkb).unwrap_or_default()),
        "frw-lapse" => Params::FrwLapse(take(file.frw_lapse).unwrap_or_default().apply(FrwLapseScenario::single_branch())),
        "frw-superposition-lapse" => {
            Params::FrwLapse(take(file.frw_superposition_lapse).unwrap_or_default().apply(FrwLapseScenario::superposition()))
        }
        "semiclassical-matter" => Params::SemiclassicalMatter(take(file.semiclassical_matter).unwrap_or_default()),
        _ => unreachable!("registry checked above"),
    };
    let threads = cli.threads.or(file.threads);
    if threads == Some(0) {
        return Err(CliError::Validation("threads must be at least 1".into()));
    }
    let output = cli
        .output
        .or(file.output)
        .unwrap_or_else(|| out_root.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT)).join(&scenario));
    Ok(ResolvedConfig {
        scenario,
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        output,
        format: cli.format.or(file.format).unwrap_or_default(),
        threads,
        params,
    })
}

impl ResolvedConfig {
    /// The config echo: a TOML file that reproduces this run when passed
    /// back through `--config`.
    pub fn to_toml(&self) -> Result<String, CliError> {
        let mut table = toml::Table::new();
        table.insert("scenario".into(), self.scenario.clone().into());
        table.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        table.insert("format".into(), self.format.name().into());
        table.insert("output".into(), self.output.display().to_string().into());
        if let Some(t) = self.threads {
            table.insert("threads".into(), toml::Value::Integer(t as i64));
        }
        let params = toml::Value::try_from(&self.params).map_err(|e| CliError::Validation(format!("cannot echo config: {e}")))?;
        table.insert(self.scenario.clone(), params);
        toml::to_string(&table).map_err(|e| CliError::Validation(format!("cannot echo config: {e}")))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario,
            "seed": self.seed,
            "format": self.format.name(),
            "output": self.output.display().to_string(),
            "threads": self.threads,
            "params": self.params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_text(text: &str) -> Result<ResolvedConfig, CliError> {
        let file = parse(text, "c.toml")?;
        resolve(file, Overrides::default(), text, "c.toml", None)
    }

    #[test]
    fn unknown_key_reports_line_and_column() {
        let text = "scenario = \"ho-ground\"\n[ho-ground]\ndt = 0.01\nbogus = 1\n";
        let err = resolve_text(text).unwrap_err();
        let CliError::Validation(msg) = err else { panic!("expected validation error") };
        assert!(msg.starts_with("c.toml:4:1:"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn foreign_block_is_rejected() {
        let text = "scenario = \"ho-ground\"\n\n[two-slit]\nn = 10\n";
        let CliError::Validation(msg) = resolve_text(text).unwrap_err() else { panic!() };
        assert!(msg.starts_with("c.toml:3:"), "{msg}");
    }

    #[test]
    fn unknown_scenario_is_rejected() {
        let CliError::Validation(msg) = resolve_text("scenario = \"nope\"\n").unwrap_err() else { panic!() };
        assert!(msg.contains("c.toml:1:12"), "{msg}");
    }

    #[test]
    fn presets_fill_missing_values() {
        let r = resolve_text("scenario = \"ho-ground\"\n[ho-ground]\nt_end = 2.0\n").unwrap();
        let Params::Oscillator(o) = &r.params else { panic!() };
        assert_eq!(o.levels, vec![0]);
        assert_eq!(o.t_end, 2.0);
        assert_eq!(r.seed, DEFAULT_SEED);
        assert_eq!(r.output, PathBuf::from("pwl-out/ho-ground"));
    }

    #[test]
    fn overrides_beat_the_file() {
        let text = "scenario = \"ho-ground\"\nseed = 3\nformat = \"json\"\n";
        let file = parse(text, "c").unwrap();
        let cli = Overrides { seed: Some(9), format: Some(Format::Snapshot), ..Default::default() };
        let r = resolve(file, cli, text, "c", Some(PathBuf::from("/tmp/root"))).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.format, Format::Snapshot);
        assert_eq!(r.output, PathBuf::from("/tmp/root/ho-ground"));
    }

    #[test]
    fn echo_round_trips_for_every_scenario() {
        for (name, _) in REGISTRY {
            let r = resolve_text(&format!("scenario = \"{name}\"\n")).unwrap();
            let echo = r.to_toml().unwrap();
            let again = resolve_text(&echo).unwrap_or_else(|e| panic!("{name}: {e:?}\n{echo}"));
            assert_eq!(again, r, "{name}");
        }
    }
}
