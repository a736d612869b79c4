//! Table-based greedy genetic search over binary RIS configurations.
//!
//! The optimizer keeps a table of `B` candidates sorted by cost. Each step
//! estimates, per element, the rank-weighted share of table entries that set
//! the element to `1`, samples a fresh candidate from those probabilities and
//! lets it replace the worst entry if it scores at least as well. Every
//! `reeval_period` steps the whole table is re-measured, since stored costs
//! came from single noisy readings.
//!
//! The cost of a configuration compares aggregated RSSI of the targets with
//! that of the non-targets:
//!
//! ```text
//! a_T = w_mean * mean(T) + w_extreme * min(T)
//! a_N = w_mean * mean(N) + w_extreme * max(N)
//! f   = sign(a_T - a_N) * (a_T - a_N)^2
//! ```

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ris::{enumerate_configs, random_config_with, RisConfig, RisError};
use crate::rng::{self, StreamRng};
use crate::stats::{mean, percentile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("target set is empty")]
    NoTargets,
    #[error("invalid cost weights: {0}")]
    BadWeights(String),
    #[error("invalid optimizer parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("measurement oracle failed: {0}")]
    Oracle(String),
    #[error("trace is empty")]
    EmptyTrace,
    #[error(transparent)]
    Ris(#[from] RisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub mean: f64,
    pub extreme: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { mean: 0.3, extreme: 0.7 }
    }
}

impl CostWeights {
    pub fn new(mean: f64, extreme: f64) -> Result<Self, OptimizerError> {
        let w = Self { mean, extreme };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.mean >= 0.0 && self.extreme >= 0.0) {
            return Err(OptimizerError::BadWeights("weights must be non-negative".into()));
        }
        if (self.mean + self.extreme - 1.0).abs() > 1e-9 {
            return Err(OptimizerError::BadWeights(format!("{} + {} != 1", self.mean, self.extreme)));
        }
        Ok(())
    }
}

/// Signed squared difference of the target and non-target aggregates; higher
/// is better. An empty non-target list aggregates to `empty_non_target_dbm`.
pub fn aggregate_cost(targets: &[f64], non_targets: &[f64], weights: &CostWeights, empty_non_target_dbm: f64) -> Result<f64, OptimizerError> {
    if targets.is_empty() {
        return Err(OptimizerError::NoTargets);
    }
    let min_t = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let a_t = weights.mean * mean(targets) + weights.extreme * min_t;
    let a_n = if non_targets.is_empty() {
        empty_non_target_dbm
    } else {
        let max_n = non_targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        weights.mean * mean(non_targets) + weights.extreme * max_n
    };
    let diff = a_t - a_n;
    Ok(diff.signum() * diff * diff)
}

/// RSSI readings (dBm) the attacker obtained for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub targets: Vec<f64>,
    pub non_targets: Vec<f64>,
}

/// Source of per-configuration RSSI readings. Hidden devices must never
/// appear in a measurement.
pub trait MeasurementOracle {
    fn measure(&mut self, config: &RisConfig) -> Result<Measurement, OptimizerError>;
}

impl<F> MeasurementOracle for F
where
    F: FnMut(&RisConfig) -> Result<Measurement, OptimizerError>,
{
    fn measure(&mut self, config: &RisConfig) -> Result<Measurement, OptimizerError> {
        self(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerParams {
    /// Table size `B`.
    pub table_size: usize,
    /// Re-measure the whole table every this many steps; 0 disables it.
    pub reeval_period: u64,
    /// Element probabilities are clipped to `[floor, 1 - floor]`.
    pub exploration_floor: f64,
    pub weights: CostWeights,
    /// Aggregate used for an empty non-target set.
    pub empty_non_target_dbm: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            table_size: 100,
            reeval_period: 1000,
            exploration_floor: 0.02,
            weights: CostWeights::default(),
            empty_non_target_dbm: -95.0,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.table_size < 2 {
            return Err(OptimizerError::InvalidParameter { name: "table_size", reason: "must be at least 2".into() });
        }
        if !(self.exploration_floor > 0.0 && self.exploration_floor < 0.5) {
            return Err(OptimizerError::InvalidParameter {
                name: "exploration_floor",
                reason: format!("{} is outside (0, 0.5)", self.exploration_floor),
            });
        }
        self.weights.validate()
    }

    pub fn cost(&self, m: &Measurement) -> Result<f64, OptimizerError> {
        let f = aggregate_cost(&m.targets, &m.non_targets, &self.weights, self.empty_non_target_dbm)?;
        if f.is_nan() {
            return Err(OptimizerError::Oracle("measurement produced a NaN cost".into()));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: RisConfig,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub best_cost: f64,
    pub best_config: RisConfig,
    pub table_worst_cost: f64,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    params: OptimizerParams,
    len: usize,
    table: Vec<Candidate>,
    step: u64,
    rng: StreamRng,
    probabilities: Option<Vec<f64>>,
}

fn sort_descending(table: &mut [Candidate]) {
    table.sort_by(|a, b| b.cost.total_cmp(&a.cost));
}

impl Optimizer {
    /// Evaluates `B` random configurations once each and sorts them.
    pub fn init<O: MeasurementOracle + ?Sized>(params: OptimizerParams, len: usize, oracle: &mut O, seed: u64) -> Result<Self, OptimizerError> {
        params.validate()?;
        if len == 0 {
            return Err(RisError::Empty.into());
        }
        let mut rng = rng::stream(seed, "optimizer", 0);
        let mut table = Vec::with_capacity(params.table_size);
        for _ in 0..params.table_size {
            let config = random_config_with(len, &mut rng)?;
            let cost = params.cost(&oracle.measure(&config)?)?;
            table.push(Candidate { config, cost });
        }
        sort_descending(&mut table);
        Ok(Self { params, len, table, step: 0, rng, probabilities: None })
    }

    pub fn params(&self) -> &OptimizerParams {
        &self.params
    }

    pub fn table(&self) -> &[Candidate] {
        &self.table
    }

    pub fn best(&self) -> &Candidate {
        &self.table[0]
    }

    pub fn worst(&self) -> &Candidate {
        self.table.last().expect("table is never empty")
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Rank-weighted probability of bit `1` per element, clipped to the
    /// exploration floor. Rank `k` (0 = best) carries weight `B - k`.
    pub fn element_probabilities(&mut self) -> &[f64] {
        if self.probabilities.is_none() {
            self.probabilities = Some(rank_weighted_probabilities(&self.table, self.len, self.params.exploration_floor));
        }
        self.probabilities.as_deref().expect("just computed")
    }

    fn record(&self) -> TraceRecord {
        TraceRecord {
            step: self.step,
            best_cost: self.best().cost,
            best_config: self.best().config.clone(),
            table_worst_cost: self.worst().cost,
        }
    }

    /// One search step. On error the optimizer is left exactly as before.
    pub fn step<O: MeasurementOracle + ?Sized>(&mut self, oracle: &mut O) -> Result<TraceRecord, OptimizerError> {
        let step = self.step + 1;
        let period = self.params.reeval_period;
        let refreshed = if period > 0 && step % period == 0 {
            let mut fresh = Vec::with_capacity(self.table.len());
            for cand in &self.table {
                let cost = self.params.cost(&oracle.measure(&cand.config)?)?;
                fresh.push(Candidate { config: cand.config.clone(), cost });
            }
            sort_descending(&mut fresh);
            Some(fresh)
        } else {
            None
        };

        let probs = match &refreshed {
            Some(t) => rank_weighted_probabilities(t, self.len, self.params.exploration_floor),
            None => self.element_probabilities().to_vec(),
        };
        let mut rng = self.rng.clone();
        let mut candidate = RisConfig::zeros(self.len);
        for (l, p) in probs.iter().enumerate() {
            if rng.random::<f64>() < *p {
                candidate.set(l, true);
            }
        }
        let cost = self.params.cost(&oracle.measure(&candidate)?)?;

        self.rng = rng;
        self.step = step;
        if let Some(t) = refreshed {
            self.table = t;
            self.probabilities = Some(probs);
        }
        if cost >= self.worst().cost {
            self.table.pop();
            let pos = self.table.partition_point(|e| e.cost >= cost);
            self.table.insert(pos, Candidate { config: candidate, cost });
            self.probabilities = None;
        }
        Ok(self.record())
    }
}

fn rank_weighted_probabilities(table: &[Candidate], len: usize, floor: f64) -> Vec<f64> {
    let b = table.len();
    let mut acc = vec![0.0; len];
    for (rank, cand) in table.iter().enumerate() {
        let w = (b - rank) as f64;
        for (wi, &word) in cand.config.words().iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let k = bits.trailing_zeros() as usize;
                acc[wi * 64 + k] += w;
                bits &= bits - 1;
            }
        }
    }
    let total = (b * (b + 1) / 2) as f64;
    for p in &mut acc {
        *p = (*p / total).clamp(floor, 1.0 - floor);
    }
    acc
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub best: Candidate,
    /// Record 0 is the state right after initialization.
    pub trace: Vec<TraceRecord>,
}

pub fn run_optimizer<O: MeasurementOracle + ?Sized>(
    params: OptimizerParams,
    steps: u64,
    len: usize,
    oracle: &mut O,
    seed: u64,
) -> Result<OptimizationRun, OptimizerError> {
    let mut opt = Optimizer::init(params, len, oracle, seed)?;
    let mut trace = Vec::with_capacity(steps as usize + 1);
    trace.push(opt.record());
    for _ in 0..steps {
        trace.push(opt.step(oracle)?);
    }
    Ok(OptimizationRun { best: opt.best().clone(), trace })
}

/// Exhaustive argmax of the cost; ties go to the lexicographically smallest
/// bit string.
pub fn brute_force_best<O: MeasurementOracle + ?Sized>(
    len: usize,
    oracle: &mut O,
    params: &OptimizerParams,
) -> Result<Candidate, OptimizerError> {
    let mut best: Option<Candidate> = None;
    for config in enumerate_configs(len)? {
        let cost = params.cost(&oracle.measure(&config)?)?;
        if best.as_ref().is_none_or(|b| cost > b.cost) {
            best = Some(Candidate { config, cost });
        }
    }
    best.ok_or(OptimizerError::EmptyTrace)
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "step,best_cost,best_config_hex,table_worst_cost")?;
    for r in trace {
        writeln!(out, "{},{},{},{}", r.step, r.best_cost, r.best_config.to_hex(), r.table_worst_cost)?;
    }
    Ok(())
}

/// Per-step summary across repeated runs: Hamming distance of each run's
/// current best to that run's final best, and the best cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStats {
    pub runs: usize,
    pub steps: Vec<u64>,
    pub mean_distance: Vec<f64>,
    pub p5_distance: Vec<f64>,
    pub p95_distance: Vec<f64>,
    pub mean_cost: Vec<f64>,
    pub p5_cost: Vec<f64>,
    pub p95_cost: Vec<f64>,
}

pub fn convergence_stats(traces: &[Vec<TraceRecord>]) -> Result<ConvergenceStats, OptimizerError> {
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return Err(OptimizerError::EmptyTrace);
    }
    let mut stats = ConvergenceStats {
        runs: traces.len(),
        steps: Vec::with_capacity(len),
        mean_distance: Vec::with_capacity(len),
        p5_distance: Vec::with_capacity(len),
        p95_distance: Vec::with_capacity(len),
        mean_cost: Vec::with_capacity(len),
        p5_cost: Vec::with_capacity(len),
        p95_cost: Vec::with_capacity(len),
    };
    let finals: Vec<&RisConfig> = traces.iter().map(|t| &t[len - 1].best_config).collect();
    for i in 0..len {
        let mut dist = Vec::with_capacity(traces.len());
        let mut cost = Vec::with_capacity(traces.len());
        for (t, fin) in traces.iter().zip(&finals) {
            dist.push(crate::ris::hamming_distance(&t[i].best_config, fin)? as f64);
            cost.push(t[i].best_cost);
        }
        stats.steps.push(traces[0][i].step);
        stats.mean_distance.push(mean(&dist));
        stats.p5_distance.push(percentile(&dist, 5.0));
        stats.p95_distance.push(percentile(&dist, 95.0));
        stats.mean_cost.push(mean(&cost));
        stats.p5_cost.push(percentile(&cost, 5.0));
        stats.p95_cost.push(percentile(&cost, 95.0));
    }
    Ok(stats)
}
