//! Runs several configs that differ only in their acceleration settings and
//! aligns their residual histories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use admm_trajopt::admm::{ConstraintId, Variant};
use serde::Serialize;
use toml::Value;

use crate::config::{first_difference, ScenarioConfig};
use crate::error::CliError;
use crate::output::number;
use crate::run::{run, RunReport};

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const COMPARISON_SUMMARY_FILE: &str = "comparison.toml";

/// First aligned row at which the SWA run's residual is strictly below
/// another run's; `None` fields mean it never happens.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossover {
    pub swa: String,
    pub other: String,
    pub defined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub residual: String,
    pub labels: Vec<String>,
    pub converged: Vec<bool>,
    pub crossover: Vec<Crossover>,
}

impl Comparison {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Errors unless `configs` agree outside `admm.acceleration` and `out`.
pub fn check_comparable(configs: &[(PathBuf, ScenarioConfig)]) -> Result<(), CliError> {
    if configs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two configs".into()));
    }
    let normalized = |c: &ScenarioConfig| {
        let mut c = c.clone();
        c.admm.acceleration = configs[0].1.admm.acceleration.clone();
        c.out = None;
        Value::try_from(c).expect("config serializes")
    };
    let reference = normalized(&configs[0].1);
    for (path, cfg) in &configs[1..] {
        if let Some(at) = first_difference(&reference, &normalized(cfg)) {
            return Err(CliError::Usage(format!(
                "{} and {} differ outside the variant fields, at `{at}`",
                configs[0].0.display(),
                path.display()
            )));
        }
    }
    Ok(())
}

/// Unique column label per run: the variant name, suffixed on repeats.
fn labels(configs: &[(PathBuf, ScenarioConfig)]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    configs
        .iter()
        .map(|(_, c)| {
            let n = seen.entry(c.variant().name()).or_insert(0);
            *n += 1;
            match *n {
                1 => c.variant().name().to_string(),
                n => format!("{}_{n}", c.variant().name()),
            }
        })
        .collect()
}

type Aligned = BTreeMap<(usize, usize), Vec<Option<f64>>>;

fn align(reports: &[RunReport], id: ConstraintId) -> Aligned {
    let mut rows: Aligned = BTreeMap::new();
    for (i, report) in reports.iter().enumerate() {
        for p in &report.residuals {
            rows.entry((p.step, p.iteration))
                .or_insert_with(|| vec![None; reports.len()])[i] = Some(p.primal[id]);
        }
    }
    rows
}

fn crossovers(rows: &Aligned, labels: &[String], variants: &[Variant]) -> Vec<Crossover> {
    let mut out = Vec::new();
    for (s, _) in variants.iter().enumerate().filter(|(_, v)| **v == Variant::Swa) {
        for o in (0..labels.len()).filter(|&o| o != s) {
            let hit = rows
                .iter()
                .find_map(|(&(step, iteration), vals)| match (vals[s], vals[o]) {
                    (Some(a), Some(b)) if a < b => Some((step, iteration)),
                    _ => None,
                });
            out.push(Crossover {
                swa: labels[s].clone(),
                other: labels[o].clone(),
                defined: hit.is_some(),
                step: hit.map(|h| h.0),
                iteration: hit.map(|h| h.1),
            });
        }
    }
    out
}

fn write_table(path: &Path, labels: &[String], rows: &Aligned) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["step".to_string(), "iteration".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (&(step, iteration), vals) in rows {
        let mut rec = vec![step.to_string(), iteration.to_string()];
        rec.extend(vals.iter().map(|v| v.map_or_else(String::new, number)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs every config into `out/<label>` and writes the aligned `residual`
/// table plus crossover summary into `out`.
pub fn compare(
    configs: &[(PathBuf, ScenarioConfig)],
    out: &Path,
    residual: ConstraintId,
) -> Result<Comparison, CliError> {
    check_comparable(configs)?;
    let labels = labels(configs);
    let mut reports = Vec::with_capacity(configs.len());
    for ((_, cfg), label) in configs.iter().zip(&labels) {
        reports.push(run(cfg, &out.join(label))?);
    }
    let rows = align(&reports, residual);
    write_table(&out.join(COMPARISON_FILE), &labels, &rows)?;
    let variants: Vec<Variant> = configs.iter().map(|(_, c)| c.variant()).collect();
    let comparison = Comparison {
        residual: residual.symbol().to_string(),
        converged: reports.iter().map(RunReport::converged).collect(),
        crossover: crossovers(&rows, &labels, &variants),
        labels,
    };
    let path = out.join(COMPARISON_SUMMARY_FILE);
    let text = toml::to_string(&comparison).expect("comparison serializes to TOML");
    std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
    Ok(comparison)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioId;
    use crate::run::ResidualPoint;
    use admm_trajopt::admm::PerConstraint;

    fn series(values: &[f64]) -> Vec<ResidualPoint> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| ResidualPoint {
                step: 1,
                iteration: i + 1,
                primal: PerConstraint::from_fn(|_| v),
            })
            .collect()
    }

    fn aligned(columns: &[&[f64]]) -> Aligned {
        let mut rows: Aligned = BTreeMap::new();
        for (i, col) in columns.iter().enumerate() {
            for p in series(col) {
                rows.entry((p.step, p.iteration))
                    .or_insert_with(|| vec![None; columns.len()])[i] = Some(p.primal.t);
            }
        }
        rows
    }

    #[test]
    fn crossover_is_first_strictly_lower_row() {
        let rows = aligned(&[&[5.0, 4.0, 3.0, 2.0], &[4.0, 4.0, 2.5, 1.0]]);
        let labels = vec!["vanilla".to_string(), "swa".to_string()];
        let c = crossovers(&rows, &labels, &[Variant::Vanilla, Variant::Swa]);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].step, c[0].iteration), (Some(1), Some(1)));
        let c = crossovers(
            &aligned(&[&[1.0, 1.0], &[1.0, 1.0]]),
            &labels,
            &[Variant::Vanilla, Variant::Swa],
        );
        assert!(!c[0].defined);
    }

    #[test]
    fn missing_rows_are_not_compared() {
        let rows = aligned(&[&[5.0], &[9.0, 1.0]]);
        let labels = vec!["vanilla".to_string(), "swa".to_string()];
        let c = crossovers(&rows, &labels, &[Variant::Vanilla, Variant::Swa]);
        assert!(!c[0].defined);
    }

    #[test]
    fn labels_are_unique() {
        let mut a = ScenarioConfig::defaults(ScenarioId::Car);
        a.admm.acceleration.variant = Variant::Swa;
        let cfgs = vec![("a".into(), a.clone()), ("b".into(), a.clone()), ("c".into(), a)];
        assert_eq!(labels(&cfgs), ["swa", "swa_2", "swa_3"]);
    }

    #[test]
    fn only_variant_fields_may_differ() {
        let a = ScenarioConfig::defaults(ScenarioId::Car);
        let mut b = a.clone();
        b.admm.acceleration.variant = Variant::Vanilla;
        b.admm.acceleration.k_sw = 3;
        b.out = Some("elsewhere".into());
        assert!(check_comparable(&[("a".into(), a.clone()), ("b".into(), b.clone())]).is_ok());
        b.admm.rho.t = 1.0;
        let err = check_comparable(&[("a".into(), a.clone()), ("b".into(), b)]).unwrap_err();
        assert!(err.to_string().contains("admm.rho.t"), "{err}");
        assert!(check_comparable(&[("a".into(), a)]).is_err());
    }
}
