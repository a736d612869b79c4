//! Experiment harness. A [`ScenarioSpec`] names a mode, the target sets and
//! the knobs of every stage; [`Scenario::run`] synthesizes the environment,
//! optimizes one configuration per target set and evaluates it.
//!
//! All randomness derives from the spec's master seed through named
//! sub-streams (`environment`, `optimizer`, `measurement`, `evaluation`,
//! `link`, ...), so identical specs give identical results.

pub mod desk;
pub mod harness;
pub mod result;
pub mod spec;

use std::path::Path;

use num_complex::Complex64;
use rand::seq::index;
use rayon::prelude::*;
use thiserror::Error;

use crate::env::{gain_db, Antenna, DeviceId, EnvError, Environment, EnvironmentSpec, Position, RssiMeter};
use crate::link::{sjnr_db, LinkError};
use crate::optimizer::{run_optimizer, OptimizationRun, OptimizerError};
use crate::ris::{compose_channel, random_config_with, RisConfig, RisError};
use crate::rng;

use harness::{disruption_and_margin, normalize, Evaluator, Probe, RssiOracle, World};
pub use result::*;
pub use spec::*;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("device `{0}` is both a target and a non-target")]
    Overlap(DeviceId),
    #[error("unknown device `{0}`")]
    UnknownDevice(DeviceId),
    #[error("environment file {path}: {reason}")]
    EnvironmentFile { path: String, reason: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Ris(#[from] RisError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.to_owned(), reason: reason.into() }
}

/// Loads the environment description named by `source`; relative file paths
/// are taken relative to `base`.
pub fn resolve_environment(source: &EnvironmentSource, base: Option<&Path>) -> Result<EnvironmentSpec, ScenarioError> {
    match source {
        EnvironmentSource::Preset(Preset::Desk) => Ok(desk::desk_environment()),
        EnvironmentSource::Inline(spec) => Ok((**spec).clone()),
        EnvironmentSource::File(path) => {
            let full = match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path.clone(),
            };
            let err = |reason: String| ScenarioError::EnvironmentFile { path: full.display().to_string(), reason };
            let text = std::fs::read_to_string(&full).map_err(|e| err(e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| err(e.to_string()))
        }
    }
}

/// Stations' index into the world plus their role in one row.
struct RowPlan {
    label: String,
    targets: Vec<usize>,
    non_targets: Vec<usize>,
    hidden: Vec<usize>,
    /// Fixed evaluation power; `None` evaluates at the disruption power.
    jam_dbm: Option<f64>,
    /// Upper bound on the evaluation power.
    jam_cap_dbm: Option<f64>,
}

pub struct Scenario {
    spec: ScenarioSpec,
    world: World,
    /// Evaluation world when devices are relocated.
    relocated: Option<World>,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec, mut env_spec: EnvironmentSpec) -> Result<Self, ScenarioError> {
        spec.validate()?;
        spec.validate_roster(&env_spec)?;
        if spec.mode == Mode::Displacement {
            env_spec.pattern_diversity = spec.displacement.pattern_diversity;
        }
        let env = Environment::synthesize(env_spec, rng::derive_seed(spec.seed, "environment", 0))?;
        let relocated = if spec.relocate.is_empty() {
            None
        } else {
            let mut moved = env.clone();
            for (id, pos) in &spec.relocate {
                moved = moved.with_device_position(id, *pos)?;
            }
            Some(World::new(moved)?)
        };
        let world = World::new(env)?;
        Ok(Self { spec, world, relocated })
    }

    /// Resolves the spec's environment source, then builds the scenario.
    pub fn from_spec(spec: ScenarioSpec, base: Option<&Path>) -> Result<Self, ScenarioError> {
        let env = resolve_environment(&spec.environment, base)?;
        Self::new(spec, env)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn environment(&self) -> &Environment {
        &self.world.env
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn run(&self) -> Result<RunResult, ScenarioError> {
        match self.spec.mode {
            Mode::PacketRate | Mode::JsrMatrix => self.jamming_rows(false),
            Mode::Throughput => self.jamming_rows(true),
            Mode::Exclusion => run_exclusion(self),
            Mode::Heatmap => heatmap_scan(self),
            Mode::ElementSweep => element_sweep(self),
            Mode::Displacement => displacement_scan(self),
            Mode::DirectionalBaseline => directional_baseline(self),
            Mode::Perturbation => perturbation_run(self),
        }
    }

    fn eval_world(&self) -> &World {
        self.relocated.as_ref().unwrap_or(&self.world)
    }

    fn opt_world(&self) -> &World {
        if self.spec.reoptimize {
            self.eval_world()
        } else {
            &self.world
        }
    }

    fn empty_result(&self) -> RunResult {
        let w = &self.world;
        RunResult::new(&self.spec.name, self.spec.mode, self.spec.seed, w.stations().iter().map(|&i| w.ids[i].clone()).collect())
    }

    fn evaluator<'a>(&'a self, world: &'a World) -> Evaluator<'a> {
        Evaluator {
            world,
            power: &self.spec.power,
            link: &self.spec.link,
            meter: RssiMeter::new(self.spec.measurement_sigma_db, world.env.noise_floor_dbm()),
        }
    }

    fn indices(&self, ids: &[DeviceId]) -> Result<Vec<usize>, ScenarioError> {
        ids.iter().map(|d| self.world.index(d)).collect()
    }

    fn plan(&self, targets: &[DeviceId]) -> Result<RowPlan, ScenarioError> {
        let t = self.indices(targets)?;
        let n: Vec<usize> = match &self.spec.non_targets {
            Some(n) => self.indices(n)?,
            None => (0..self.world.ids.len()).filter(|i| !t.contains(i)).collect(),
        };
        let mut hidden = self.indices(&self.spec.hidden)?;
        if self.spec.hide_non_targets {
            hidden.extend(n.iter().copied().filter(|&i| i != self.world.ap));
        }
        hidden.sort_unstable();
        hidden.dedup();
        hidden.retain(|h| n.contains(h));
        Ok(RowPlan {
            label: targets.iter().map(DeviceId::as_str).collect::<Vec<_>>().join("+"),
            targets: t,
            non_targets: n,
            hidden,
            jam_dbm: None,
            jam_cap_dbm: None,
        })
    }

    /// Optimizes the surface for `plan` using only what the attacker can
    /// overhear: targets and non-hidden non-targets.
    fn optimize(&self, world: &World, plan: &RowPlan, index: u64) -> Result<OptimizationRun, ScenarioError> {
        let probe = |i: usize| Probe::full(&world.subchannels[i], self.tx_dbm(world, i));
        let mut oracle = RssiOracle {
            targets: plan.targets.iter().map(|&i| probe(i)).collect(),
            non_targets: plan.non_targets.iter().filter(|i| !plan.hidden.contains(i)).map(|&i| probe(i)).collect(),
            meter: Some(RssiMeter::new(self.spec.measurement_sigma_db, world.env.noise_floor_dbm())),
            rng: rng::stream(self.spec.seed, "measurement", index),
        };
        Ok(run_optimizer(self.spec.optimizer, self.spec.steps, world.elements(), &mut oracle, rng::derive_seed(self.spec.seed, "optimizer", index))?)
    }

    fn tx_dbm(&self, world: &World, device: usize) -> f64 {
        if device == world.ap {
            self.spec.power.ap_tx_dbm
        } else {
            self.spec.power.device_tx_dbm
        }
    }

    /// Evaluates one configuration (or, for the directional baseline, one
    /// set of jam gains) for every station.
    fn evaluate(&self, world: &World, plan: &RowPlan, phase: Phase, config: Option<&RisConfig>, jam_gain: Vec<Complex64>, index: u64, throughput: bool) -> (ResultRow, SweepCurve) {
        let ev = self.evaluator(world);
        let stations = world.stations();
        let label = match phase {
            Phase::Optimized => plan.label.clone(),
            Phase::Initial => format!("{}@initial", plan.label),
            Phase::Directional => format!("{}@directional", plan.label),
            Phase::Random => plan.label.clone(),
        };
        let curve = ev.sweep(label.clone(), &stations, &jam_gain);
        let is_target: Vec<bool> = stations.iter().map(|i| plan.targets.contains(i)).collect();
        let (disruption, margin, censored) = disruption_and_margin(&curve, &is_target, self.spec.power.sweep.step_db);
        let mut jam_dbm = plan.jam_dbm.or(disruption).unwrap_or(self.spec.power.sweep.stop_dbm);
        if let Some(cap) = plan.jam_cap_dbm {
            jam_dbm = jam_dbm.min(cap);
        }
        let mut baseline = Vec::new();
        let mut jammed = Vec::new();
        if throughput {
            (jam_dbm, baseline, jammed) = self.throughput_search(world, &stations, &is_target, &jam_gain, index);
        }
        let mut rng = rng::stream(self.spec.seed, "evaluation", index);
        let mut cells = ev.cells(&stations, &jam_gain, Some(jam_dbm), &mut rng);
        normalize(&mut cells, &is_target);
        if throughput {
            for (k, c) in cells.iter_mut().enumerate() {
                c.baseline_mbps = Some(baseline[k]);
                c.throughput_mbps = Some(jammed[k]);
            }
        }
        let id = |v: &[usize]| v.iter().map(|&i| world.ids[i].clone()).collect::<Vec<_>>();
        let row = ResultRow {
            label,
            phase,
            targets: id(&plan.targets),
            hidden: id(&plan.hidden),
            config_hex: config.map(RisConfig::to_hex),
            jam_dbm: Some(jam_dbm),
            disruption_dbm: disruption,
            margin_db: margin,
            margin_censored: censored,
            cells,
        };
        (row, curve)
    }

    /// Weakest sweep power that pushes every target's adaptive goodput to
    /// the jammed threshold; returns it with the baseline and jammed goodput
    /// of every station. Falls back to the sweep's end when no power suffices.
    fn throughput_search(&self, world: &World, stations: &[usize], is_target: &[bool], jam_gain: &[Complex64], index: u64) -> (f64, Vec<f64>, Vec<f64>) {
        let noise = world.env.noise_floor_dbm();
        let settings = &self.spec.throughput;
        let goodput = |k: usize, jam: Option<f64>| {
            let s = world.ap_rx_dbm(stations[k], &self.spec.power);
            let sjnr = match jam {
                Some(p) => sjnr_db(s, p + gain_db(jam_gain[k]), noise),
                None => sjnr_db(s, f64::NEG_INFINITY, noise),
            };
            let mut r = rng::stream(self.spec.seed, "link", index * 1024 + k as u64);
            self.spec.link.adaptive_throughput(sjnr, settings.packets, &mut r)
        };
        let baseline: Vec<f64> = (0..stations.len()).map(|k| goodput(k, None)).collect();
        let powers = self.spec.power.sweep.powers();
        let targets: Vec<usize> = (0..stations.len()).filter(|&k| is_target[k]).collect();
        let jam = powers
            .iter()
            .copied()
            .find(|&p| targets.iter().all(|&k| goodput(k, Some(p)) <= settings.target_max_mbps))
            .unwrap_or(self.spec.power.sweep.stop_dbm);
        let jammed = (0..stations.len()).map(|k| goodput(k, Some(jam))).collect();
        (jam, baseline, jammed)
    }

    fn gains(world: &World, config: &RisConfig) -> Vec<Complex64> {
        world.stations().iter().map(|&i| world.ris_gain(i, config)).collect()
    }

    /// Optimized rows (plus initial rows when devices are hidden, and random
    /// rows on request) for every target set.
    fn jamming_rows(&self, throughput: bool) -> Result<RunResult, ScenarioError> {
        let plans: Vec<RowPlan> = self.spec.target_sets.iter().map(|t| self.plan(t)).collect::<Result<_, _>>()?;
        let evaluated: Vec<_> = plans
            .par_iter()
            .enumerate()
            .map(|(r, plan)| -> Result<_, ScenarioError> {
                let run = self.optimize(self.opt_world(), plan, r as u64)?;
                let world = self.eval_world();
                let mut out = Vec::new();
                if !plan.hidden.is_empty() {
                    let initial = &run.trace[0].best_config;
                    out.push(self.evaluate(world, plan, Phase::Initial, Some(initial), Self::gains(world, initial), r as u64, throughput));
                }
                out.push(self.evaluate(world, plan, Phase::Optimized, Some(&run.best.config), Self::gains(world, &run.best.config), r as u64, throughput));
                Ok((plan.label.clone(), run, out))
            })
            .collect::<Result<_, _>>()?;
        let mut result = self.empty_result();
        for (label, run, rows) in evaluated {
            for (row, curve) in rows {
                result.rows.push(row);
                result.sweeps.push(curve);
            }
            result.traces.push(TraceSet { label, records: run.trace });
        }
        result.rows.extend(self.random_rows()?);
        Ok(result)
    }

    /// Rows for uniformly random configurations; no targets, so JSR is
    /// normalized to the row maximum.
    fn random_rows(&self) -> Result<Vec<ResultRow>, ScenarioError> {
        let world = self.eval_world();
        (0..self.spec.random_configs)
            .map(|k| {
                let config = random_config_with(world.elements(), &mut rng::stream(self.spec.seed, "random-config", k as u64))?;
                let plan = RowPlan {
                    label: format!("random-{k}"),
                    targets: Vec::new(),
                    non_targets: Vec::new(),
                    hidden: Vec::new(),
                    jam_dbm: Some(self.spec.power.reference_dbm),
                    jam_cap_dbm: None,
                };
                let (row, _) = self.evaluate(world, &plan, Phase::Random, Some(&config), Self::gains(world, &config), RANDOM_INDEX_BASE + k as u64, false);
                Ok(row)
            })
            .collect()
    }
}

const RANDOM_INDEX_BASE: u64 = 1 << 20;

fn require_sizes(spec: &ScenarioSpec, ok: impl Fn(usize) -> bool, what: &str) -> Result<(), ScenarioError> {
    for (i, t) in spec.target_sets.iter().enumerate() {
        if !ok(t.len()) {
            return Err(invalid(&format!("target_sets[{i}]"), format!("{what}, got {} devices", t.len())));
        }
    }
    Ok(())
}

/// One target per set: optimize, then report the JSR matrix, packet rates at
/// the disruption power and the margin to the first disrupted non-target.
pub fn run_single_target(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    require_sizes(&scenario.spec, |n| n == 1, "single-target runs need exactly one target")?;
    scenario.jamming_rows(false)
}

/// Several targets per set; cells carry per-target delivered power.
pub fn run_multi_target(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    require_sizes(&scenario.spec, |n| n >= 2, "multi-target runs need at least two targets")?;
    scenario.jamming_rows(false)
}

/// Packet-rate curves over the jammer power sweep, one per target set.
pub fn power_sweep(scenario: &Scenario) -> Result<Vec<SweepCurve>, ScenarioError> {
    Ok(scenario.jamming_rows(false)?.sweeps)
}

/// Initial and optimized rows with every non-AP non-target hidden from the optimizer.
pub fn hidden_device_eval(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    if !scenario.spec.hide_non_targets {
        let mut spec = scenario.spec.clone();
        spec.hide_non_targets = true;
        let s = Scenario { spec, world: scenario.world.clone(), relocated: scenario.relocated.clone() };
        return s.jamming_rows(false);
    }
    scenario.jamming_rows(false)
}

/// Targets every station except one excluded device, jamming at the row's
/// disruption power capped by the attacker's maximum power.
pub fn run_exclusion(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    let spec = &scenario.spec;
    let world = scenario.eval_world();
    let stations = world.stations();
    let plans: Vec<RowPlan> = spec
        .excluded
        .iter()
        .map(|e| {
            let ex = world.index(e)?;
            let hidden = scenario.indices(&spec.hidden)?;
            let targets: Vec<usize> = stations.iter().copied().filter(|&i| i != ex && !hidden.contains(&i)).collect();
            Ok(RowPlan {
                label: format!("all-{e}"),
                non_targets: (0..world.ids.len()).filter(|i| !targets.contains(i)).collect(),
                targets,
                hidden,
                jam_dbm: None,
                jam_cap_dbm: Some(spec.power.max_dbm),
            })
        })
        .collect::<Result<_, ScenarioError>>()?;
    let evaluated: Vec<_> = plans
        .par_iter()
        .enumerate()
        .map(|(r, plan)| -> Result<_, ScenarioError> {
            let run = scenario.optimize(scenario.opt_world(), plan, r as u64)?;
            let (row, curve) = scenario.evaluate(world, plan, Phase::Optimized, Some(&run.best.config), Scenario::gains(world, &run.best.config), r as u64, false);
            Ok((row, curve, TraceSet { label: plan.label.clone(), records: run.trace }))
        })
        .collect::<Result<_, _>>()?;
    let mut result = scenario.empty_result();
    for (row, curve, trace) in evaluated {
        result.rows.push(row);
        result.sweeps.push(curve);
        result.traces.push(trace);
    }
    Ok(result)
}

/// Grid of received power around the focus device, relative to the focus.
pub fn heatmap_scan(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    let spec = &scenario.spec;
    let settings = &spec.heatmap;
    let focus = match &settings.focus {
        Some(f) => f.clone(),
        None => spec.target_sets[0][0].clone(),
    };
    let mut targets = spec.target_sets.first().cloned().unwrap_or_default();
    if !targets.contains(&focus) {
        targets = vec![focus.clone()];
    }
    let plan = scenario.plan(&targets)?;
    let world = &scenario.world;
    let run = scenario.optimize(world, &plan, 0)?;
    let (row, curve) = scenario.evaluate(world, &plan, Phase::Optimized, Some(&run.best.config), Scenario::gains(world, &run.best.config), 0, false);

    let center = world.env.position_of(&focus)?;
    let nx = (settings.width_m / settings.step_m).round() as usize + 1;
    let ny = (settings.depth_m / settings.step_m).round() as usize + 1;
    let (cx, cy) = ((nx - 1) / 2, (ny - 1) / 2);
    let x0 = center.x - cx as f64 * settings.step_m;
    let xs: Vec<f64> = (0..nx).map(|i| x0 + i as f64 * settings.step_m).collect();
    let ys: Vec<f64> = (0..ny).map(|j| center.y + (j as f64 - cy as f64) * settings.step_m).collect();
    let antenna = Antenna::of(&focus);
    let raw: Vec<Vec<f64>> = ys
        .par_iter()
        .map(|&y| {
            let row = world.env.ris_field_row(&run.best.config, x0, settings.step_m, nx, y, center.z, antenna)?;
            Ok(row.into_iter().map(gain_db).collect())
        })
        .collect::<Result<_, EnvError>>()?;
    let peak = raw[cy][cx];
    let values: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|v| v - peak).collect()).collect();
    let mut outside = Vec::new();
    for (j, y) in ys.iter().enumerate() {
        for (i, x) in xs.iter().enumerate() {
            if ((x - center.x).powi(2) + (y - center.y).powi(2)).sqrt() > settings.exclusion_radius_m {
                outside.push(-values[j][i]);
            }
        }
    }
    let mut result = scenario.empty_result();
    result.heatmap = Some(Heatmap {
        focus: focus.clone(),
        x_m: xs,
        y_m: ys,
        values_db: values,
        exclusion_radius_m: settings.exclusion_radius_m,
        mean_attenuation_db: crate::stats::mean(&outside),
        min_attenuation_db: outside.iter().copied().fold(f64::INFINITY, f64::min),
    });
    result.rows.push(row);
    result.sweeps.push(curve);
    result.traces.push(TraceSet { label: plan.label, records: run.trace });
    Ok(result)
}

/// Two antennas side by side at one device position; the surface maximizes
/// one and minimizes the other, then the second antenna moves away along x.
pub fn displacement_scan(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    let spec = &scenario.spec;
    let settings = &spec.displacement;
    let device = match &settings.device {
        Some(d) => d.clone(),
        None => spec.target_sets.first().and_then(|t| t.first()).cloned().ok_or_else(|| invalid("displacement.device", "no device to scan"))?,
    };
    let env = &scenario.world.env;
    let origin = env.position_of(&device)?;
    let (a1, a2) = (Antenna::named("antenna-1"), Antenna::named("antenna-2"));
    let h1 = env.ris_subchannels(&origin, a1)?;
    let h2 = env.ris_subchannels(&origin, a2)?;
    let steps = (settings.max_m / settings.step_m + 1e-9).floor() as usize;
    let offsets: Vec<f64> = (0..=steps).map(|i| i as f64 * settings.step_m).collect();
    let moved = env.ris_subchannels_row(&origin, settings.step_m, offsets.len(), a2)?;
    let mut curves = Vec::new();
    let mut traces = Vec::new();
    for (k, (name, max_probe, min_probe)) in [("antenna-1", &h1, &h2), ("antenna-2", &h2, &h1)].into_iter().enumerate() {
        let mut oracle = RssiOracle {
            targets: vec![Probe::full(max_probe, 0.0)],
            non_targets: vec![Probe::full(min_probe, 0.0)],
            meter: None,
            rng: rng::stream(spec.seed, "measurement", k as u64),
        };
        let run = run_optimizer(spec.optimizer, spec.steps, env.ris_elements(), &mut oracle, rng::derive_seed(spec.seed, "optimizer", k as u64))?;
        let c = &run.best.config;
        let fixed = gain_db(compose_channel(c, &h1)?);
        curves.push(DisplacementCurve {
            maximized: name.to_owned(),
            fixed_db: vec![fixed; offsets.len()],
            moved_db: moved.iter().map(|h| compose_channel(c, h).map(gain_db)).collect::<Result<_, _>>()?,
        });
        traces.push(TraceSet { label: format!("{device}@maximized={name}"), records: run.trace });
    }
    let mut result = scenario.empty_result();
    result.displacement = Some(DisplacementScan { device, offsets_m: offsets, curves });
    result.traces = traces;
    Ok(result)
}

/// Re-optimizes with only a random subset of elements switchable; the rest
/// stay frozen at a random configuration.
pub fn element_sweep(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    let spec = &scenario.spec;
    let settings = &spec.element_sweep;
    let world = &scenario.world;
    let len = world.elements();
    if let Some(&c) = settings.counts.iter().find(|&&c| c > len) {
        return Err(invalid("element_sweep.counts", format!("{c} exceeds the {len} elements of the surface")));
    }
    let targets = spec.target_sets.first().cloned().ok_or_else(|| invalid("target_sets", "element sweep needs a target set"))?;
    let plan = scenario.plan(&targets)?;
    let jobs: Vec<(u64, usize)> = (0..settings.seeds).flat_map(|s| settings.counts.iter().map(move |&c| (s, c))).collect();
    let points: Vec<(ElementSweepPoint, TraceSet)> = jobs
        .par_iter()
        .map(|&(s, count)| -> Result<_, ScenarioError> {
            let frozen = random_config_with(len, &mut rng::stream(spec.seed, "frozen", s))?;
            let mut active = index::sample(&mut rng::stream(spec.seed, "element-subset", s), len, len).into_vec();
            active.truncate(count);
            active.sort_unstable();
            let probe = |i: usize| {
                let h = &world.subchannels[i];
                let mut offset = compose_channel(&frozen, h).expect("lengths match");
                for &l in &active {
                    offset -= h[l] * frozen.coefficient(l);
                }
                Probe { offset, subchannels: active.iter().map(|&l| h[l]).collect(), tx_dbm: scenario.tx_dbm(world, i) }
            };
            let target_probes: Vec<Probe> = plan.targets.iter().map(|&i| probe(i)).collect();
            let non_target_probes: Vec<Probe> = plan.non_targets.iter().filter(|i| !plan.hidden.contains(i)).map(|&i| probe(i)).collect();
            let index = s << 32 | count as u64;
            let mut oracle = RssiOracle {
                targets: target_probes.clone(),
                non_targets: non_target_probes,
                meter: Some(RssiMeter::new(spec.measurement_sigma_db, world.env.noise_floor_dbm())),
                rng: rng::stream(spec.seed, "element-measurement", index),
            };
            let run = run_optimizer(spec.optimizer, spec.steps, count, &mut oracle, rng::derive_seed(spec.seed, "element-optimizer", index))?;
            let gain = |p: &Probe| p.gain(&run.best.config).map(gain_db);
            let target = target_probes.iter().map(gain).collect::<Result<Vec<_>, _>>()?.into_iter().fold(f64::INFINITY, f64::min);
            let worst = plan.non_targets.iter().map(|&i| gain(&probe(i))).collect::<Result<Vec<_>, _>>()?.into_iter().fold(f64::NEG_INFINITY, f64::max);
            Ok((
                ElementSweepPoint { count, seed: s, target: targets[0].clone(), separation_db: target - worst },
                TraceSet { label: format!("{}@n={count},s={s}", plan.label), records: run.trace },
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut result = scenario.empty_result();
    for (p, t) in points {
        result.element_sweep.push(p);
        result.traces.push(t);
    }
    Ok(result)
}

/// Gain of the directional pattern `off_axis` radians from boresight.
pub fn directional_gain_dbi(off_axis: f64, settings: &DirectionalSettings) -> f64 {
    let ratio = off_axis / settings.beamwidth_deg.to_radians();
    settings.gain_dbi - (12.0 * ratio * ratio).min(settings.front_to_back_db)
}

fn off_axis(from: &Position, boresight: &Position, to: &Position) -> f64 {
    let a = [boresight.x - from.x, boresight.y - from.y, boresight.z - from.z];
    let b = [to.x - from.x, to.y - from.y, to.z - from.z];
    let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Jam gains of a directional antenna at the attacker position aimed at
/// `target`: a line-of-sight term shaped by the pattern plus isotropic
/// diffuse multipath at a fixed relative level.
pub fn directional_gains(world: &World, target: usize, settings: &DirectionalSettings) -> Result<Vec<Complex64>, ScenarioError> {
    let env = &world.env;
    let origin = env.spec().attacker_position;
    let aim = env.devices()[target].position;
    let diffuse = 10f64.powf(settings.diffuse_db / 20.0);
    world
        .stations()
        .iter()
        .map(|&i| {
            let d = &env.devices()[i];
            let dist = origin.distance(&d.position);
            let g = 10f64.powf(directional_gain_dbi(off_axis(&origin, &aim, &d.position), settings) / 20.0);
            let los = Complex64::from_polar(g * env.path_loss(dist).sqrt(), -env.wavenumber() * dist);
            Ok(los + env.attacker_direct_channel(&d.position, Antenna::of(&d.id))? * diffuse)
        })
        .collect()
}

/// Surface versus directional antenna for each single-target set.
pub fn directional_baseline(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    require_sizes(&scenario.spec, |n| n == 1, "the directional baseline aims at one target")?;
    let mut result = scenario.jamming_rows(false)?;
    let world = scenario.eval_world();
    for (r, t) in scenario.spec.target_sets.iter().enumerate() {
        let plan = scenario.plan(t)?;
        let gains = directional_gains(world, plan.targets[0], &scenario.spec.directional)?;
        let (row, curve) = scenario.evaluate(world, &plan, Phase::Directional, None, gains, DIRECTIONAL_INDEX_BASE + r as u64, false);
        result.rows.push(row);
        result.sweeps.push(curve);
    }
    Ok(result)
}

const DIRECTIONAL_INDEX_BASE: u64 = 1 << 21;

/// Holds the optimized configuration fixed while the environment evolves
/// along the schedule; jams at the static disruption power plus headroom.
pub fn perturbation_run(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    let spec = &scenario.spec;
    let mut result = scenario.jamming_rows(false)?;
    let base = &scenario.world;
    let stations = base.stations();
    let noise = base.env.noise_floor_dbm();
    let mut states = vec![(0.0, base.clone())];
    let mut current = base.env.clone();
    for (k, ev) in spec.perturbation.schedule.iter().enumerate() {
        let from = if ev.persistent { &current } else { &base.env };
        let mut next = from.perturb_subset(ev.fraction, ev.ensemble_fraction, rng::derive_seed(spec.seed, "perturbation", k as u64))?;
        if let Some(m) = &ev.relocate {
            let p = base.env.position_of(&m.device)?;
            next = next.with_device_position(&m.device, p.offset(m.dx, m.dy, m.dz))?;
        }
        current = next.clone();
        states.push((ev.time_s, World::new(next)?));
    }
    for (r, row) in result.rows.iter().filter(|r| r.phase == Phase::Optimized).enumerate() {
        let Some(hex) = &row.config_hex else { continue };
        let config = RisConfig::from_hex(hex, base.elements())?;
        let jam = row.disruption_dbm.unwrap_or(spec.power.sweep.stop_dbm) + spec.perturbation.headroom_db;
        let plan = scenario.plan(&spec.target_sets[r])?;
        for (time, world) in &states {
            let rates: Vec<f64> = stations
                .iter()
                .map(|&i| harness::packet_rate(&spec.link, world.ap_rx_dbm(i, &spec.power), jam + gain_db(world.ris_gain(i, &config)), noise))
                .collect();
            let is_target: Vec<bool> = stations.iter().map(|i| plan.targets.contains(i)).collect();
            result.timeline.push(TimelinePoint {
                label: row.label.clone(),
                time_s: *time,
                jam_dbm: jam,
                devices: stations.iter().map(|&i| base.ids[i].clone()).collect(),
                target_disrupted: rates.iter().zip(&is_target).filter(|(_, t)| **t).all(|(r, _)| *r <= spec.power.disrupted_rate),
                collateral: rates.iter().zip(&is_target).filter(|(r, t)| !**t && **r < spec.power.operational_rate).count(),
                rates,
            });
        }
    }
    Ok(result)
}
