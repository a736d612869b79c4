use std::path::{Path, PathBuf};

use risjam_core::env::EnvironmentSpec;
use risjam_core::scenario::{resolve_environment, Mode, ScenarioSpec};
use serde_json::Value;

use crate::error::CliError;

/// A checked scenario together with the environment it runs in.
#[derive(Debug, Clone)]
pub struct ParsedScenario {
    pub spec: ScenarioSpec,
    pub environment: EnvironmentSpec,
    /// Directory that relative environment paths resolve against.
    pub base: Option<PathBuf>,
}

impl ParsedScenario {
    /// Replaces the master seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.spec.seed = s;
        }
        self
    }
}

pub fn parse_scenario(path: &Path) -> Result<ParsedScenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf);
    parse_scenario_in(&text, base)
}

/// Parses a scenario document; `base` resolves relative environment files.
pub fn parse_scenario_in(text: &str, base: Option<PathBuf>) -> Result<ParsedScenario, CliError> {
    let spec = parse_spec(text)?;
    let environment = resolve_environment(&spec.environment, base.as_deref()).map_err(CliError::from_validation)?;
    environment.validate().map_err(|e| CliError::validation(Some("environment"), e.to_string()))?;
    spec.validate_roster(&environment).map_err(CliError::from_validation)?;
    Ok(ParsedScenario { spec, environment, base })
}

/// Schema and self-consistency checks only; the environment is not loaded.
pub fn parse_spec(text: &str) -> Result<ScenarioSpec, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::validation(None, format!("not valid JSON: {e}")))?;
    check_mode(&value)?;
    let spec: ScenarioSpec = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::validation(Some(&path), e.into_inner().to_string())
    })?;
    spec.validate().map_err(CliError::from_validation)?;
    Ok(spec)
}

fn check_mode(value: &Value) -> Result<(), CliError> {
    let Some(doc) = value.as_object() else {
        return Err(CliError::validation(None, "scenario must be a JSON object"));
    };
    match doc.get("mode") {
        None => Err(CliError::validation(Some("mode"), format!("missing; valid modes: {}", mode_list()))),
        Some(Value::String(m)) if Mode::ALL.iter().any(|k| k.name() == m) => Ok(()),
        Some(other) => Err(CliError::validation(Some("mode"), format!("unknown mode {other}; valid modes: {}", mode_list()))),
    }
}

fn mode_list() -> String {
    Mode::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
}

/// Spec with every default filled in, as pretty JSON.
pub fn normalized_json(spec: &ScenarioSpec) -> Result<String, CliError> {
    serde_json::to_string_pretty(spec).map_err(|e| CliError::Runtime(e.to_string()))
}
