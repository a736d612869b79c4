#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_risjam"))
}

pub fn risjam(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn risjam")
}

pub fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr)))
}

/// Small environment: access point `D0` plus `devices - 1` stations.
pub fn tiny_environment(devices: usize, elements: usize) -> Value {
    let roster: Vec<Value> = (0..devices)
        .map(|i| {
            let a = i as f64 * 0.9;
            json!({
                "id": format!("D{i}"),
                "role": if i == 0 { "access_point" } else { "station" },
                "position": { "x": 2.0 + a.cos(), "y": 1.0 + 1.5 * a.sin(), "z": 1.0 }
            })
        })
        .collect();
    json!({
        "scatterers": 16,
        "ris_elements": elements,
        "ris_position": { "x": 0.0, "y": 0.0, "z": 1.0 },
        "attacker_position": { "x": -1.0, "y": 0.0, "z": 1.0 },
        "devices": roster
    })
}

/// Quick scenario on the tiny environment.
pub fn tiny_scenario(mode: &str) -> Value {
    json!({
        "name": "tiny",
        "mode": mode,
        "environment": { "inline": tiny_environment(5, 16) },
        "target_sets": [["D1"], ["D2"]],
        "steps": 30,
        "optimizer": { "table_size": 8 },
        "throughput": { "packets": 100 },
        "power": { "sweep": { "start_dbm": -10.0, "stop_dbm": 30.0, "step_db": 2.0 } }
    })
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Every regular file below `dir`, relative and `/`-separated.
pub fn files_below(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap();
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/"));
            }
        }
    }
    out.sort();
    out
}
