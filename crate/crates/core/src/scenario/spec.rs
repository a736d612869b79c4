//! Declarative scenario description.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::env::{DeviceId, DeviceRole, EnvironmentSpec, Position};
use crate::link::LinkParams;
use crate::optimizer::OptimizerParams;
use crate::scenario::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PacketRate,
    Throughput,
    JsrMatrix,
    Heatmap,
    ElementSweep,
    Displacement,
    Exclusion,
    DirectionalBaseline,
    Perturbation,
}

impl Mode {
    pub const ALL: [Mode; 9] = [
        Mode::PacketRate,
        Mode::Throughput,
        Mode::JsrMatrix,
        Mode::Heatmap,
        Mode::ElementSweep,
        Mode::Displacement,
        Mode::Exclusion,
        Mode::DirectionalBaseline,
        Mode::Perturbation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::PacketRate => "packet-rate",
            Mode::Throughput => "throughput",
            Mode::JsrMatrix => "jsr-matrix",
            Mode::Heatmap => "heatmap",
            Mode::ElementSweep => "element-sweep",
            Mode::Displacement => "displacement",
            Mode::Exclusion => "exclusion",
            Mode::DirectionalBaseline => "directional-baseline",
            Mode::Perturbation => "perturbation",
        }
    }

    /// Modes whose target sets come from `target_sets`.
    pub fn needs_targets(self) -> bool {
        !matches!(self, Mode::Exclusion)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
}

/// Where the environment comes from. Relative file paths are resolved by the
/// caller against the scenario file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentSource {
    Preset(Preset),
    File(PathBuf),
    Inline(Box<EnvironmentSpec>),
}

impl Default for EnvironmentSource {
    fn default() -> Self {
        EnvironmentSource::Preset(Preset::Desk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweep {
    pub start_dbm: f64,
    pub stop_dbm: f64,
    pub step_db: f64,
}

impl Default for PowerSweep {
    fn default() -> Self {
        Self { start_dbm: -40.0, stop_dbm: 50.0, step_db: 1.0 }
    }
}

impl PowerSweep {
    pub fn powers(&self) -> Vec<f64> {
        let n = ((self.stop_dbm - self.start_dbm) / self.step_db + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start_dbm + i as f64 * self.step_db).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSettings {
    /// Jammer power at which RSSI and JSR matrices are reported.
    pub reference_dbm: f64,
    /// Highest power the attacker can emit; caps the exclusion jam power.
    pub max_dbm: f64,
    /// Transmit power of stations when the attacker eavesdrops on them.
    pub device_tx_dbm: f64,
    pub ap_tx_dbm: f64,
    pub sweep: PowerSweep,
    /// Packet rate at or below which a device counts as disrupted.
    pub disrupted_rate: f64,
    /// Packet rate at or above which a device counts as operational.
    pub operational_rate: f64,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self {
            reference_dbm: 20.0,
            max_dbm: 50.0,
            device_tx_dbm: 20.0,
            ap_tx_dbm: 20.0,
            sweep: PowerSweep::default(),
            disrupted_rate: 5.0,
            operational_rate: 90.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThroughputSettings {
    /// Packets simulated per evaluation.
    pub packets: usize,
    /// Target goodput at or below which the target counts as jammed.
    pub target_max_mbps: f64,
    /// Share of the unjammed baseline a non-target must keep.
    pub retain_fraction: f64,
}

impl Default for ThroughputSettings {
    fn default() -> Self {
        Self { packets: 4000, target_max_mbps: 2.0, retain_fraction: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSettings {
    /// Device whose optimized configuration is scanned; defaults to the
    /// single target of the first target set.
    pub focus: Option<DeviceId>,
    pub width_m: f64,
    pub depth_m: f64,
    pub step_m: f64,
    /// Radius around the focus treated as the focal spot.
    pub exclusion_radius_m: f64,
}

impl Default for HeatmapSettings {
    fn default() -> Self {
        Self { focus: None, width_m: 0.75, depth_m: 0.5, step_m: 0.01, exclusion_radius_m: 0.06 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisplacementSettings {
    /// Receiver whose power is maximized; the minimized one starts at the same spot.
    pub device: Option<DeviceId>,
    pub step_m: f64,
    pub max_m: f64,
    /// Antenna-pattern diversity applied to the environment for this mode;
    /// without it two co-located antennas see identical channels.
    pub pattern_diversity: f64,
}

impl Default for DisplacementSettings {
    fn default() -> Self {
        Self { device: None, step_m: 0.004, max_m: 0.048, pattern_diversity: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElementSweepSettings {
    pub counts: Vec<usize>,
    pub seeds: u64,
}

impl Default for ElementSweepSettings {
    fn default() -> Self {
        Self { counts: vec![16, 32, 64, 128, 256, 512, 768], seeds: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectionalSettings {
    pub gain_dbi: f64,
    /// Full 3 dB beamwidth.
    pub beamwidth_deg: f64,
    pub front_to_back_db: f64,
    /// Power of the diffuse multipath relative to an isotropic radiator.
    pub diffuse_db: f64,
}

impl Default for DirectionalSettings {
    fn default() -> Self {
        Self { gain_dbi: 19.0, beamwidth_deg: 20.0, front_to_back_db: 25.0, diffuse_db: -6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relocation {
    pub device: DeviceId,
    pub dx: f64,
    pub dy: f64,
    #[serde(default)]
    pub dz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationEvent {
    pub time_s: f64,
    #[serde(default)]
    pub fraction: f64,
    #[serde(default = "one")]
    pub ensemble_fraction: f64,
    /// Accumulate on the previous state instead of the static environment.
    #[serde(default)]
    pub persistent: bool,
    #[serde(default)]
    pub relocate: Option<Relocation>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSettings {
    pub schedule: Vec<PerturbationEvent>,
    /// Jammer power above the target's disruption power.
    pub headroom_db: f64,
}

impl Default for PerturbationSettings {
    fn default() -> Self {
        Self { schedule: Vec::new(), headroom_db: 3.0 }
    }
}

fn default_name() -> String {
    "scenario".into()
}
fn default_seed() -> u64 {
    1
}
fn default_steps() -> u64 {
    10_000
}
fn default_sigma() -> f64 {
    crate::env::RssiMeter::DEFAULT_SIGMA_DB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub environment: EnvironmentSource,
    /// One optimization per entry.
    #[serde(default)]
    pub target_sets: Vec<Vec<DeviceId>>,
    /// Explicit non-target set; defaults to every other device, AP included.
    #[serde(default)]
    pub non_targets: Option<Vec<DeviceId>>,
    /// Non-targets that never transmit and are invisible to the optimizer.
    #[serde(default)]
    pub hidden: Vec<DeviceId>,
    /// Hide every non-target station from the optimizer in each row.
    #[serde(default)]
    pub hide_non_targets: bool,
    /// Devices left unjammed in exclusion mode, one run each.
    #[serde(default)]
    pub excluded: Vec<DeviceId>,
    #[serde(default)]
    pub power: PowerSettings,
    #[serde(default)]
    pub optimizer: OptimizerParams,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_sigma")]
    pub measurement_sigma_db: f64,
    #[serde(default)]
    pub link: LinkParams,
    /// Extra rows evaluated with random configurations.
    #[serde(default)]
    pub random_configs: usize,
    /// Device moves applied before evaluation.
    #[serde(default)]
    pub relocate: BTreeMap<DeviceId, Position>,
    /// Optimize in the relocated environment instead of the original one.
    #[serde(default)]
    pub reoptimize: bool,
    #[serde(default)]
    pub throughput: ThroughputSettings,
    #[serde(default)]
    pub heatmap: HeatmapSettings,
    #[serde(default)]
    pub displacement: DisplacementSettings,
    #[serde(default)]
    pub element_sweep: ElementSweepSettings,
    #[serde(default)]
    pub directional: DirectionalSettings,
    #[serde(default)]
    pub perturbation: PerturbationSettings,
}

impl ScenarioSpec {
    pub fn new(mode: Mode) -> Self {
        serde_json::from_value(serde_json::json!({ "mode": mode })).expect("defaults deserialize")
    }

    /// Checks that do not need the environment.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |field: &str, reason: String| Err(ScenarioError::Invalid { field: field.to_owned(), reason });
        if self.mode.needs_targets() && self.target_sets.is_empty() && self.mode != Mode::ElementSweep {
            return invalid("target_sets", format!("mode `{}` needs at least one target set", self.mode));
        }
        for (i, set) in self.target_sets.iter().enumerate() {
            if set.is_empty() {
                return invalid(&format!("target_sets[{i}]"), "target set is empty".into());
            }
            let unique: BTreeSet<_> = set.iter().collect();
            if unique.len() != set.len() {
                return invalid(&format!("target_sets[{i}]"), "target set lists a device twice".into());
            }
            if let Some(n) = &self.non_targets {
                if let Some(d) = set.iter().find(|d| n.contains(d)) {
                    return Err(ScenarioError::Overlap(d.clone()));
                }
            }
            if let Some(d) = set.iter().find(|d| self.hidden.contains(d)) {
                return Err(ScenarioError::Overlap(d.clone()));
            }
        }
        if self.mode == Mode::Exclusion && self.excluded.is_empty() {
            return invalid("excluded", "exclusion mode needs at least one excluded device".into());
        }
        let p = &self.power;
        let s = &p.sweep;
        if !(s.step_db > 0.0 && s.start_dbm.is_finite() && s.stop_dbm.is_finite() && s.stop_dbm >= s.start_dbm) {
            return invalid("power.sweep", "needs finite start <= stop and a positive step".into());
        }
        if ![p.reference_dbm, p.max_dbm, p.device_tx_dbm, p.ap_tx_dbm].iter().all(|v| v.is_finite()) {
            return invalid("power", "powers must be finite".into());
        }
        if !(0.0..=100.0).contains(&p.disrupted_rate) || !(0.0..=100.0).contains(&p.operational_rate) {
            return invalid("power", "packet-rate thresholds must lie in [0, 100]".into());
        }
        if !(self.measurement_sigma_db.is_finite() && self.measurement_sigma_db >= 0.0) {
            return invalid("measurement_sigma_db", "must be finite and non-negative".into());
        }
        self.optimizer.validate().map_err(|e| ScenarioError::Invalid { field: "optimizer".into(), reason: e.to_string() })?;
        self.link.validate().map_err(|e| ScenarioError::Invalid { field: "link".into(), reason: e.to_string() })?;
        let h = &self.heatmap;
        if !(h.step_m > 0.0 && h.width_m >= 0.0 && h.depth_m >= 0.0 && h.exclusion_radius_m >= 0.0) {
            return invalid("heatmap", "grid extents must be non-negative with a positive step".into());
        }
        let d = &self.displacement;
        if !(d.step_m > 0.0 && d.max_m >= 0.0 && (0.0..=1.0).contains(&d.pattern_diversity)) {
            return invalid("displacement", "needs a positive step and non-negative range".into());
        }
        let e = &self.element_sweep;
        if e.counts.is_empty() || e.counts.contains(&0) || e.counts.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("element_sweep.counts", "counts must be positive and strictly ascending".into());
        }
        if e.seeds == 0 {
            return invalid("element_sweep.seeds", "needs at least one seed".into());
        }
        let dir = &self.directional;
        if !(dir.beamwidth_deg > 0.0 && dir.front_to_back_db >= 0.0 && dir.gain_dbi.is_finite() && dir.diffuse_db.is_finite()) {
            return invalid("directional", "needs a positive beamwidth and non-negative front-to-back ratio".into());
        }
        for (i, ev) in self.perturbation.schedule.iter().enumerate() {
            if !(0.0..=1.0).contains(&ev.fraction) || !(0.0..=1.0).contains(&ev.ensemble_fraction) || !ev.time_s.is_finite() {
                return invalid(&format!("perturbation.schedule[{i}]"), "fractions must lie in [0, 1] and time must be finite".into());
            }
        }
        if self.perturbation.schedule.windows(2).any(|w| w[1].time_s < w[0].time_s) {
            return invalid("perturbation.schedule", "events must be in time order".into());
        }
        if self.throughput.packets == 0 {
            return invalid("throughput.packets", "must be positive".into());
        }
        Ok(())
    }

    /// Checks against a concrete roster.
    pub fn validate_roster(&self, env: &EnvironmentSpec) -> Result<(), ScenarioError> {
        let known = |d: &DeviceId| env.devices.iter().any(|s| &s.id == d);
        let all = self
            .target_sets
            .iter()
            .flatten()
            .chain(self.non_targets.iter().flatten())
            .chain(&self.hidden)
            .chain(&self.excluded)
            .chain(self.relocate.keys())
            .chain(self.heatmap.focus.iter())
            .chain(self.displacement.device.iter())
            .chain(self.perturbation.schedule.iter().filter_map(|e| e.relocate.as_ref().map(|r| &r.device)));
        for d in all {
            if !known(d) {
                return Err(ScenarioError::UnknownDevice(d.clone()));
            }
        }
        let ap = env.devices.iter().find(|d| d.role == DeviceRole::AccessPoint);
        let Some(ap) = ap else {
            return Err(ScenarioError::Invalid { field: "environment.devices".into(), reason: "roster has no access point".into() });
        };
        if let Some(d) = self.target_sets.iter().flatten().chain(&self.hidden).chain(&self.excluded).find(|d| **d == ap.id) {
            return Err(ScenarioError::Invalid {
                field: "target_sets".into(),
                reason: format!("access point `{d}` cannot be targeted, hidden or excluded"),
            });
        }
        Ok(())
    }
}
