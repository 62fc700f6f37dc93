//! Scenario configuration files.
//!
//! A config is TOML. The `scenario` key picks the defaults; every other key
//! overrides them, so a file only lists what it changes. Errors carry the line
//! of the offending key when it appears in the file.

use std::path::{Path, PathBuf};

use admm_trajopt::admm::{AdmmSettings, Variant};
use admm_trajopt::models::car::{default_car_settings, CarParams};
use admm_trajopt::models::walker::{default_walker_settings, WalkerScenario};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "car")]
    Car,
    #[serde(rename = "walker-flat")]
    WalkerFlat,
    #[serde(rename = "walker-rough")]
    WalkerRough,
}

impl ScenarioId {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Car => "car",
            ScenarioId::WalkerFlat => "walker-flat",
            ScenarioId::WalkerRough => "walker-rough",
        }
    }

    fn model_section(self) -> &'static str {
        match self {
            ScenarioId::Car => "car",
            ScenarioId::WalkerFlat | ScenarioId::WalkerRough => "walker",
        }
    }
}

/// A fully resolved scenario. Serializing it and loading the result gives the
/// same config back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    /// Seed of the only random generator, used for warm-start jitter.
    pub seed: u64,
    /// Half-width of the uniform noise added to warm-start controls.
    pub jitter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub admm: AdmmSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub car: Option<CarParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walker: Option<WalkerScenario>,
}

impl ScenarioConfig {
    pub fn defaults(scenario: ScenarioId) -> Self {
        let (admm, car, walker) = match scenario {
            ScenarioId::Car => (default_car_settings(), Some(CarParams::default()), None),
            ScenarioId::WalkerFlat => (walker_settings(), None, Some(WalkerScenario::default())),
            ScenarioId::WalkerRough => (walker_settings(), None, Some(WalkerScenario::stairs())),
        };
        Self {
            scenario,
            seed: 0,
            jitter: 0.0,
            out: None,
            admm,
            car,
            walker,
        }
    }

    pub fn variant(&self) -> Variant {
        self.admm.acceleration.variant
    }

    pub fn validate(&self) -> admm_trajopt::Result<()> {
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(admm_trajopt::Error::InvalidInput(format!(
                "jitter must be finite and non-negative, got {}",
                self.jitter
            )));
        }
        self.admm.validate()?;
        if let Some(car) = &self.car {
            car.validate()?;
        }
        if let Some(walker) = &self.walker {
            walker.validate()?;
        }
        Ok(())
    }
}

/// Walker settings plus the CoM snapshots used for consensus plots.
fn walker_settings() -> AdmmSettings {
    AdmmSettings {
        snapshot_iterations: vec![2, 10, 30],
        ..default_walker_settings()
    }
}

/// Loads and validates a config file.
pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text).map_err(|e| e.with_path(path))
}

/// Parses and validates config text; errors carry no path yet.
pub fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
    let keys = KeyLines::scan(text);
    let error = |line: Option<usize>, message: String| CliError::Config {
        path: None,
        line,
        message,
    };
    let user: Table = text.parse().map_err(|e: toml::de::Error| {
        error(e.span().map(|s| line_of_offset(text, s.start)), e.message().to_string())
    })?;
    let scenario: ScenarioId = match user.get("scenario") {
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| error(keys.key("scenario"), e.message().to_string()))?,
        None => return Err(error(None, "missing key `scenario`".into())),
    };
    for section in ["car", "walker"] {
        if section != scenario.model_section() && user.contains_key(section) {
            return Err(error(
                keys.section(section),
                format!("section [{section}] does not apply to scenario `{}`", scenario.name()),
            ));
        }
    }

    // Deserialize the merged document from text so errors carry a span;
    // the span's key path is then looked up in the user's file.
    let mut merged = Value::try_from(ScenarioConfig::defaults(scenario)).expect("defaults serialize");
    merge(&mut merged, Value::Table(user));
    let merged_text = toml::to_string(&merged).expect("merged config serializes");
    let config: ScenarioConfig = toml::from_str(&merged_text).map_err(|e| {
        let line = e
            .span()
            .and_then(|s| KeyLines::scan(&merged_text).path_at(line_of_offset(&merged_text, s.start)))
            .and_then(|path| keys.key(&path).or_else(|| keys.section(&path)));
        error(line, e.message().to_string())
    })?;
    check(&config, &keys)?;
    Ok(config)
}

/// Validates `config`, pointing at the most likely line of `keys` on failure.
pub fn check(config: &ScenarioConfig, keys: &KeyLines) -> Result<(), CliError> {
    let located = |section: &str, e: admm_trajopt::Error| {
        let message = e.to_string();
        CliError::Config {
            path: None,
            line: keys.find(section, &message),
            message,
        }
    };
    if let Err(e) = config.validate() {
        // Re-run the section checks to learn which section failed.
        let section = if config.admm.validate().is_err() {
            "admm"
        } else if config.car.as_ref().is_some_and(|c| c.validate().is_err()) {
            "car"
        } else if config.walker.as_ref().is_some_and(|w| w.validate().is_err()) {
            "walker"
        } else {
            ""
        };
        return Err(located(section, e));
    }
    Ok(())
}

/// Recursively overlays `patch` onto `base`; tables merge, everything else
/// is replaced. A tagged table (one with `kind`) switching kind replaces the
/// whole table, since the fields of the old kind do not apply.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Table(b), Value::Table(p)) if p.get("kind").is_none_or(|k| b.get("kind") == Some(k)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// First dotted path at which two TOML values differ.
pub fn first_difference(a: &Value, b: &Value) -> Option<String> {
    match (a, b) {
        (Value::Table(x), Value::Table(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            keys.into_iter().find_map(|k| match (x.get(k), y.get(k)) {
                (Some(u), Some(v)) => first_difference(u, v).map(|rest| {
                    if rest.is_empty() {
                        k.clone()
                    } else {
                        format!("{k}.{rest}")
                    }
                }),
                _ => Some(k.clone()),
            })
        }
        _ if a == b => None,
        _ => Some(String::new()),
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line numbers of section headers and `key = value` lines.
#[derive(Debug, Default)]
pub struct KeyLines {
    sections: Vec<(String, usize)>,
    /// Full dotted path of each key.
    keys: Vec<(String, usize)>,
}

impl KeyLines {
    pub fn scan(text: &str) -> Self {
        let mut out = KeyLines::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = header.trim_matches(['[', ']']).trim().to_string();
                out.sections.push((section.clone(), i + 1));
            } else if let Some((key, _)) = line.split_once('=') {
                let key = key.trim().trim_matches('"');
                let path = if section.is_empty() {
                    key.to_string()
                } else {
                    format!("{section}.{key}")
                };
                out.keys.push((path, i + 1));
            }
        }
        out
    }

    /// Line of the key with full dotted `path`.
    pub fn key(&self, path: &str) -> Option<usize> {
        self.keys.iter().find(|(p, _)| p == path).map(|&(_, l)| l)
    }

    /// Dotted path of the key or section header on `line`.
    fn path_at(&self, line: usize) -> Option<String> {
        self.keys
            .iter()
            .chain(&self.sections)
            .find(|&&(_, l)| l == line)
            .map(|(p, _)| p.clone())
    }

    pub fn section(&self, name: &str) -> Option<usize> {
        self.sections.iter().find(|(s, _)| s == name).map(|&(_, l)| l)
    }

    /// Line of the first key under `section` named by a word of `message`,
    /// else the section header.
    pub fn find(&self, section: &str, message: &str) -> Option<usize> {
        let words = message.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'));
        for word in words.filter(|w| !w.is_empty()) {
            let word = word.trim_matches('.');
            let hit = self.keys.iter().find(|(path, _)| {
                let in_section = section.is_empty() || path.starts_with(&format!("{section}."));
                in_section && (path == word || path.ends_with(&format!(".{word}")))
            });
            if let Some(&(_, line)) = hit {
                return Some(line);
            }
        }
        if section.is_empty() {
            return None;
        }
        self.sections
            .iter()
            .find(|(s, _)| s == section || s.starts_with(&format!("{section}.")))
            .map(|&(_, l)| l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn error_line(text: &str) -> Option<usize> {
        match parse(text) {
            Err(CliError::Config { line, .. }) => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn scenario_defaults_fill_unlisted_keys() {
        let cfg = parse("scenario = \"walker-rough\"\n").unwrap();
        assert_eq!(cfg, ScenarioConfig::defaults(ScenarioId::WalkerRough));
        let cfg = parse("scenario = \"car\"\n[admm.rho]\nt = 0.5\n").unwrap();
        assert_eq!(cfg.admm.rho.t, 0.5);
        assert_eq!(cfg.admm.rho.c, default_car_settings().rho.c);
        assert_eq!(cfg.admm.stopping, default_car_settings().stopping);
    }

    #[test]
    fn resolved_config_round_trips() {
        for id in [ScenarioId::Car, ScenarioId::WalkerFlat, ScenarioId::WalkerRough] {
            let mut cfg = ScenarioConfig::defaults(id);
            cfg.seed = 17;
            cfg.jitter = 0.25;
            cfg.out = Some("somewhere".into());
            assert_eq!(parse(&toml::to_string(&cfg).unwrap()).unwrap(), cfg, "{id:?}");
        }
    }

    #[test]
    fn unknown_keys_report_their_line() {
        assert_eq!(error_line("scenario = \"car\"\n\n[car]\nwheelbas = 2.0\n"), Some(4));
        assert_eq!(
            error_line("scenario = \"car\"\n[admm.acceleration]\nvariant = \"fast\"\n"),
            Some(3)
        );
        assert_eq!(error_line("scenario = \"car\"\nseed = = 1\n"), Some(2));
        assert_eq!(error_line("scenario = \"car\"\n[solver]\nx = 1\n"), Some(2));
        assert_eq!(error_line("scenario = \"car\"\n[car]\ndt = \"fast\"\n"), Some(3));
    }

    #[test]
    fn invalid_values_report_their_line() {
        let text = "scenario = \"car\"\n[admm.acceleration]\nmu = 10.0\nalpha = 2.5\n";
        assert_eq!(error_line(text), Some(4));
        let text = "scenario = \"car\"\n[admm.stopping.eps_pri]\nt = -1.0\n";
        assert_eq!(error_line(text), Some(3));
        let text = "scenario = \"car\"\n[car]\ndt = 0.03\nwheelbase = 0.0\n";
        assert_eq!(error_line(text), Some(4));
        assert_eq!(error_line("scenario = \"car\"\njitter = -1.0\n"), Some(2));
    }

    #[test]
    fn foreign_model_section_is_rejected() {
        assert_eq!(error_line("scenario = \"car\"\n[walker]\nsteps = 2\n"), Some(2));
        assert_eq!(error_line("scenario = \"walker-flat\"\n\n[car]\ndt = 0.1\n"), Some(3));
    }

    #[test]
    fn changing_terrain_kind_replaces_the_table() {
        let cfg = parse("scenario = \"walker-rough\"\n[walker.terrain]\nkind = \"flat\"\n").unwrap();
        assert_eq!(
            cfg.walker.unwrap().terrain,
            admm_trajopt::models::walker::Terrain::Flat { height: 0.0 }
        );
        let cfg = parse("scenario = \"walker-rough\"\n[walker.terrain]\nrise = 0.02\n").unwrap();
        assert!(
            matches!(cfg.walker.unwrap().terrain, admm_trajopt::models::walker::Terrain::Stairs { rise, .. } if rise == 0.02)
        );
    }

    #[test]
    fn first_difference_names_the_path() {
        let a = Value::try_from(ScenarioConfig::defaults(ScenarioId::Car)).unwrap();
        let mut other = ScenarioConfig::defaults(ScenarioId::Car);
        assert_eq!(first_difference(&a, &Value::try_from(&other).unwrap()), None);
        other.admm.rho.t = 3.0;
        assert_eq!(
            first_difference(&a, &Value::try_from(&other).unwrap()).as_deref(),
            Some("admm.rho.t")
        );
    }
}
