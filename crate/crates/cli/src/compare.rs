use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use risjam_core::scenario::{RunResult, RESULTS_HEADER};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::{OutputKind, RunManifest};

/// `(target_set, device, metric)`.
type Key = (String, String, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub target_set: String,
    pub device: String,
    pub metric: String,
    /// `None` when only the other run reports the metric.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub delta: Option<f64>,
}

/// Weakest target JSR minus strongest non-target JSR of one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationDelta {
    pub target_set: String,
    pub a_db: f64,
    pub b_db: f64,
    pub delta_db: f64,
    pub selective_a: bool,
    pub selective_b: bool,
    pub regressed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub scenario_hash_a: String,
    pub scenario_hash_b: String,
    pub tolerance_db: f64,
    pub deltas: Vec<MetricDelta>,
    pub separations: Vec<SeparationDelta>,
    pub regressions: usize,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty() && self.separations.is_empty()
    }
}

/// Metric-by-metric difference of two run directories (or manifest files).
/// A separation drop larger than `tolerance_db` counts as a regression.
pub fn compare_runs(a: &Path, b: &Path, tolerance_db: f64) -> Result<DiffReport, CliError> {
    let (ma, da) = load(a)?;
    let (mb, db) = load(b)?;
    if ma.devices != mb.devices {
        return Err(CliError::ShapeMismatch(format!(
            "device rosters differ: [{}] vs [{}]",
            join(ma.devices.iter().map(|d| d.as_str())),
            join(mb.devices.iter().map(|d| d.as_str()))
        )));
    }
    if ma.mode != mb.mode {
        return Err(CliError::ShapeMismatch(format!("modes differ: {} vs {}", ma.mode, mb.mode)));
    }
    let rows = |d: &BTreeMap<Key, f64>| d.keys().map(|k| k.0.clone()).collect::<BTreeSet<_>>();
    let (ra, rb) = (rows(&da), rows(&db));
    if let Some(r) = ra.symmetric_difference(&rb).next() {
        let side = if ra.contains(r) { "first" } else { "second" };
        return Err(CliError::ShapeMismatch(format!("row `{r}` exists only in the {side} run")));
    }

    let keys: BTreeSet<&Key> = da.keys().chain(db.keys()).collect();
    let deltas: Vec<_> = keys
        .into_iter()
        .filter_map(|k| {
            let (va, vb) = (da.get(k).copied(), db.get(k).copied());
            let same = match (va, vb) {
                (Some(x), Some(y)) => x == y || (x.is_nan() && y.is_nan()),
                _ => false,
            };
            (!same).then(|| MetricDelta {
                target_set: k.0.clone(),
                device: k.1.clone(),
                metric: k.2.clone(),
                a: va,
                b: vb,
                delta: va.zip(vb).map(|(x, y)| y - x),
            })
        })
        .collect();

    let sa = separations(&da);
    let mut separations = Vec::new();
    for (set, sb) in separations_of(&db) {
        let Some(&sa) = sa.get(&set) else { continue };
        if sa == sb {
            continue;
        }
        separations.push(SeparationDelta {
            target_set: set,
            a_db: sa,
            b_db: sb,
            delta_db: sb - sa,
            selective_a: sa > 0.0,
            selective_b: sb > 0.0,
            regressed: sb < sa - tolerance_db,
        });
    }
    let regressions = separations.iter().filter(|s| s.regressed).count();
    Ok(DiffReport {
        scenario_hash_a: ma.scenario_hash,
        scenario_hash_b: mb.scenario_hash,
        tolerance_db,
        deltas,
        separations,
        regressions,
    })
}

fn join<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items.collect::<Vec<_>>().join(", ")
}

fn separations(records: &BTreeMap<Key, f64>) -> BTreeMap<String, f64> {
    separations_of(records).into_iter().collect()
}

fn separations_of(records: &BTreeMap<Key, f64>) -> Vec<(String, f64)> {
    let mut rows: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for ((set, device, metric), &v) in records {
        if metric != "jsr_db" {
            continue;
        }
        let Some(&flag) = records.get(&(set.clone(), device.clone(), "is_target".to_owned())) else { continue };
        let e = rows.entry(set).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        if flag > 0.5 {
            e.0 = e.0.min(v);
        } else {
            e.1 = e.1.max(v);
        }
    }
    rows.into_iter()
        .filter(|(_, (t, n))| t.is_finite() && n.is_finite())
        .map(|(set, (t, n))| (set.to_owned(), t - n))
        .collect()
}

fn load(path: &Path) -> Result<(RunManifest, BTreeMap<Key, f64>), CliError> {
    let manifest = RunManifest::load(path)?;
    let dir = if path.is_dir() { path } else { path.parent().unwrap_or(Path::new(".")) };
    let entry = manifest
        .output(OutputKind::Results)
        .next()
        .ok_or_else(|| CliError::validation(Some("outputs"), "manifest lists no results file"))?;
    let file = dir.join(&entry.path);
    let text = std::fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
    let records = if entry.path.ends_with(".json") {
        let result: RunResult =
            serde_json::from_str(&text).map_err(|e| CliError::validation(Some(&file.display().to_string()), e.to_string()))?;
        result.long_records().into_iter().map(|(s, d, m, v)| ((s, d, m.to_owned()), v)).collect()
    } else {
        read_results_csv(&text).map_err(|e| CliError::validation(Some(&file.display().to_string()), e))?
    };
    Ok((manifest, records))
}

fn read_results_csv(text: &str) -> Result<BTreeMap<Key, f64>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
        return Err(format!("expected header `{RESULTS_HEADER}`"));
    }
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let value: f64 = rec[4].parse().map_err(|_| format!("bad value `{}`", &rec[4]))?;
        out.insert((rec[1].to_owned(), rec[2].to_owned(), rec[3].to_owned()), value);
    }
    Ok(out)
}
