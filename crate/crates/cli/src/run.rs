use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use risjam_core::env::{DeviceId, Environment, EnvironmentSpec};
use risjam_core::optimizer::{convergence_stats, write_trace_csv};
use risjam_core::rng;
use risjam_core::scenario::{Mode, RunResult, Scenario};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::parse::{normalized_json, ParsedScenario};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPEC_FILE: &str = "scenario.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    Spec,
    Results,
    Sweep,
    Heatmap,
    Displacement,
    Trace,
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub kind: OutputKind,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub scenario: String,
    pub mode: Mode,
    /// SHA-256 of the normalized spec in canonical JSON.
    pub scenario_hash: String,
    pub seed: u64,
    pub format: OutputFormat,
    pub devices: Vec<DeviceId>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Every file written by the run except the manifest itself.
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::validation(Some(&file.display().to_string()), e.to_string()))?;
        if manifest.manifest_version != MANIFEST_VERSION {
            return Err(CliError::validation(
                Some("manifest_version"),
                format!("unsupported manifest version {}", manifest.manifest_version),
            ));
        }
        Ok(manifest)
    }

    pub fn output(&self, kind: OutputKind) -> impl Iterator<Item = &OutputEntry> {
        self.outputs.iter().filter(move |o| o.kind == kind)
    }
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<_> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

pub fn scenario_hash(spec: &risjam_core::ScenarioSpec) -> Result<String, CliError> {
    let value = serde_json::to_value(spec).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(canonical_json(&value).as_bytes())))
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Writes files under one directory and records each in the inventory.
struct Outputs {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl Outputs {
    fn write(&mut self, rel: &str, kind: OutputKind, bytes: Vec<u8>) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
        self.entries.push(OutputEntry {
            path: rel.to_owned(),
            kind,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn write_with(
        &mut self,
        rel: &str,
        kind: OutputKind,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| CliError::io(self.dir.join(rel), e))?;
        self.write(rel, kind, buf)
    }
}

fn slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Deletes the files listed by a previous manifest in `dir`.
fn clear_previous(dir: &Path) -> Result<(), CliError> {
    let manifest = dir.join(MANIFEST_FILE);
    if !manifest.exists() {
        return Ok(());
    }
    let Ok(old) = RunManifest::load(&manifest) else {
        return Ok(());
    };
    for o in &old.outputs {
        let p = dir.join(&o.path);
        if p.is_file() {
            fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
        }
    }
    fs::remove_file(&manifest).map_err(|e| CliError::io(&manifest, e))
}

/// Runs the scenario and writes its artifacts plus `manifest.json` to `out`.
pub fn execute(parsed: &ParsedScenario, out: &Path, format: OutputFormat) -> Result<RunManifest, CliError> {
    let started = unix_ms();
    let spec = &parsed.spec;
    let scenario = Scenario::new(spec.clone(), parsed.environment.clone()).map_err(CliError::from_validation)?;
    let result = scenario.run().map_err(|e| CliError::Runtime(e.to_string()))?;

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    clear_previous(out)?;
    let mut files = Outputs { dir: out.to_path_buf(), entries: Vec::new() };
    let mut echo = normalized_json(spec)?;
    echo.push('\n');
    files.write(SPEC_FILE, OutputKind::Spec, echo.into_bytes())?;
    write_result(&mut files, &result, format)?;

    for (i, t) in result.traces.iter().enumerate() {
        let rel = format!("traces/{i:03}_{}.csv", slug(&t.label));
        files.write_with(&rel, OutputKind::Trace, |w| write_trace_csv(&t.records, w))?;
    }
    if !result.traces.is_empty() {
        let runs: Vec<_> = result.traces.iter().map(|t| t.records.clone()).collect();
        let stats = convergence_stats(&runs).map_err(|e| CliError::Runtime(e.to_string()))?;
        files.write_with("traces/convergence.json", OutputKind::Convergence, |w| {
            serde_json::to_writer_pretty(w, &stats).map_err(std::io::Error::other)
        })?;
    }

    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        scenario: spec.name.clone(),
        mode: spec.mode,
        scenario_hash: scenario_hash(spec)?,
        seed: spec.seed,
        format,
        devices: result.devices.clone(),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        outputs: files.entries,
    };
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

fn write_result(files: &mut Outputs, result: &RunResult, format: OutputFormat) -> Result<(), CliError> {
    match format {
        OutputFormat::Json => files.write_with("results.json", OutputKind::Results, |w| result.write_json(w)),
        OutputFormat::Csv => {
            files.write_with("results.csv", OutputKind::Results, |w| result.write_results_csv(w))?;
            if !result.sweeps.is_empty() {
                files.write_with("sweep.csv", OutputKind::Sweep, |w| result.write_sweep_csv(w))?;
            }
            if result.heatmap.is_some() {
                files.write_with("heatmap.csv", OutputKind::Heatmap, |w| result.write_heatmap_csv(w))?;
            }
            if result.displacement.is_some() {
                files.write_with("displacement.csv", OutputKind::Displacement, |w| result.write_displacement_csv(w))?;
            }
            Ok(())
        }
    }
}

/// Synthesizes an environment and returns its versioned JSON document.
pub fn synthesize_environment(spec: EnvironmentSpec, seed: u64) -> Result<String, CliError> {
    let env = Environment::synthesize(spec, rng::derive_seed(seed, "environment", 0))
        .map_err(|e| CliError::validation(Some("environment"), e.to_string()))?;
    serde_json::to_string_pretty(&env.to_document()).map_err(|e| CliError::Runtime(e.to_string()))
}
