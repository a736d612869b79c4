//! Link-level abstraction: JSR, SJNR, per-MCS packet success, a simple
//! success-driven rate adaptation, and goodput.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Packets per second injected by the access point in packet-rate mode.
pub const PACKETS_PER_SECOND: f64 = 100.0;
/// Fixed MCS of the packet-rate (monitor mode) measurements.
pub const MONITOR_MCS: usize = 6;
pub const MCS_COUNT: usize = 8;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("signal gain is zero")]
    ZeroSignalGain,
    #[error("MCS index {0} out of range 0..{MCS_COUNT}")]
    McsOutOfRange(usize),
    #[error("invalid MCS table: {0}")]
    BadTable(String),
    #[error("invalid link parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("reading MCS table: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing MCS table: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub sjnr_threshold_db: f64,
    pub data_rate_mbps: f64,
}

/// Required SJNR and PHY rate per MCS index 0..=7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<McsEntry>", into = "Vec<McsEntry>")]
pub struct McsTable {
    entries: [McsEntry; MCS_COUNT],
}

impl Default for McsTable {
    /// 20 MHz single-stream 802.11n rates.
    fn default() -> Self {
        const THRESHOLDS: [f64; 8] = [4.0, 7.0, 9.0, 12.0, 15.0, 18.0, 20.0, 22.0];
        const RATES: [f64; 8] = [6.5, 13.0, 19.5, 26.0, 39.0, 52.0, 58.5, 65.0];
        let entries = std::array::from_fn(|i| McsEntry { sjnr_threshold_db: THRESHOLDS[i], data_rate_mbps: RATES[i] });
        Self { entries }
    }
}

impl TryFrom<Vec<McsEntry>> for McsTable {
    type Error = LinkError;

    fn try_from(v: Vec<McsEntry>) -> Result<Self, LinkError> {
        let entries: [McsEntry; MCS_COUNT] = v
            .try_into()
            .map_err(|v: Vec<McsEntry>| LinkError::BadTable(format!("expected {MCS_COUNT} entries, got {}", v.len())))?;
        Self::new(entries)
    }
}

impl From<McsTable> for Vec<McsEntry> {
    fn from(t: McsTable) -> Self {
        t.entries.to_vec()
    }
}

impl McsTable {
    pub fn new(entries: [McsEntry; MCS_COUNT]) -> Result<Self, LinkError> {
        if entries.iter().any(|e| !e.sjnr_threshold_db.is_finite() || !(e.data_rate_mbps > 0.0)) {
            return Err(LinkError::BadTable("thresholds must be finite and rates positive".into()));
        }
        if entries.windows(2).any(|w| w[1].sjnr_threshold_db <= w[0].sjnr_threshold_db) {
            return Err(LinkError::BadTable("thresholds must increase strictly".into()));
        }
        let span = entries[7].sjnr_threshold_db - entries[0].sjnr_threshold_db;
        if (span - 18.0).abs() > 1e-9 {
            return Err(LinkError::BadTable(format!("MCS 7 - MCS 0 threshold span is {span} dB, expected 18 dB")));
        }
        let ratio = entries[7].data_rate_mbps / entries[0].data_rate_mbps;
        if (ratio - 10.0).abs() > 1e-9 {
            return Err(LinkError::BadTable(format!("MCS 7 / MCS 0 rate ratio is {ratio}, expected 10")));
        }
        Ok(Self { entries })
    }

    pub fn from_json_file(path: &Path) -> Result<Self, LinkError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn entry(&self, mcs: usize) -> Result<&McsEntry, LinkError> {
        self.entries.get(mcs).ok_or(LinkError::McsOutOfRange(mcs))
    }

    pub fn threshold_db(&self, mcs: usize) -> Result<f64, LinkError> {
        self.entry(mcs).map(|e| e.sjnr_threshold_db)
    }

    pub fn rate_mbps(&self, mcs: usize) -> Result<f64, LinkError> {
        self.entry(mcs).map(|e| e.data_rate_mbps)
    }
}

fn default_slope() -> f64 {
    0.5
}
fn default_efficiency() -> f64 {
    0.55
}
fn default_window() -> usize {
    50
}
fn default_offered_load() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    #[serde(default)]
    pub mcs_table: McsTable,
    /// Logistic slope scale of the reception curve (dB).
    #[serde(default = "default_slope")]
    pub slope_db: f64,
    /// Protocol efficiency applied to PHY rates.
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    /// Packets per rate-adaptation window.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_offered_load")]
    pub offered_load_mbps: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            mcs_table: McsTable::default(),
            slope_db: default_slope(),
            efficiency: default_efficiency(),
            window: default_window(),
            offered_load_mbps: default_offered_load(),
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.slope_db > 0.0 && self.slope_db.is_finite()) {
            return Err(LinkError::InvalidParameter { name: "slope_db", reason: "must be positive".into() });
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(LinkError::InvalidParameter { name: "efficiency", reason: "must lie in (0, 1]".into() });
        }
        if self.window == 0 {
            return Err(LinkError::InvalidParameter { name: "window", reason: "must be positive".into() });
        }
        if !(self.offered_load_mbps > 0.0) {
            return Err(LinkError::InvalidParameter { name: "offered_load_mbps", reason: "must be positive".into() });
        }
        Ok(())
    }

    /// Logistic reception probability around the MCS threshold.
    pub fn packet_success_prob(&self, sjnr_db: f64, mcs: usize) -> Result<f64, LinkError> {
        let threshold = self.mcs_table.threshold_db(mcs)?;
        Ok(1.0 / (1.0 + (-(sjnr_db - threshold) / self.slope_db).exp()))
    }

    /// Monitor-mode packet rate out of [`PACKETS_PER_SECOND`] at the fixed MCS.
    pub fn packet_rate(&self, sjnr_db: f64) -> f64 {
        PACKETS_PER_SECOND * self.packet_success_prob(sjnr_db, MONITOR_MCS).expect("monitor MCS is valid")
    }

    /// `min(offered, rate(mcs) * p * efficiency)`.
    pub fn throughput_mbps(&self, state: &LinkState, success_prob: f64) -> f64 {
        let rate = self.mcs_table.rate_mbps(state.mcs).expect("LinkState keeps mcs in range");
        (rate * success_prob.clamp(0.0, 1.0) * self.efficiency).min(state.offered_load_mbps)
    }

    /// Runs `packets` transmissions at a stationary SJNR through rate
    /// adaptation starting from MCS 7, and returns the mean goodput over
    /// the second half of the adaptation windows.
    pub fn adaptive_throughput(&self, sjnr_db: f64, packets: usize, rng: &mut impl Rng) -> f64 {
        let mut state = LinkState::new(MCS_COUNT - 1, self.window, self.offered_load_mbps);
        let windows = (packets / self.window).max(2);
        let mut goodput = Vec::with_capacity(windows);
        for _ in 0..windows {
            let p = self.packet_success_prob(sjnr_db, state.mcs).expect("mcs in range");
            for _ in 0..self.window {
                state.record(rng.random::<f64>() < p);
            }
            let observed = state.success_rate().unwrap_or(0.0);
            goodput.push(self.throughput_mbps(&state, observed));
            state = rate_adapt_step(state);
        }
        let tail = &goodput[windows / 2..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// `(P_J + 20 log|H_J|) - (P_S + 20 log|H_S|)`.
pub fn jsr_db(jam_gain: Complex64, sig_gain: Complex64, jam_power_dbm: f64, sig_power_dbm: f64) -> Result<f64, LinkError> {
    if sig_gain.norm() == 0.0 {
        return Err(LinkError::ZeroSignalGain);
    }
    Ok((jam_power_dbm + 20.0 * jam_gain.norm().log10()) - (sig_power_dbm + 20.0 * sig_gain.norm().log10()))
}

pub fn sjnr_db(sig_dbm: f64, jam_dbm: f64, noise_dbm: f64) -> f64 {
    sig_dbm - 10.0 * (10f64.powf(jam_dbm / 10.0) + 10f64.powf(noise_dbm / 10.0)).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub mcs: usize,
    window: Vec<bool>,
    window_size: usize,
    pub offered_load_mbps: f64,
    good_windows: u32,
}

impl LinkState {
    pub fn new(mcs: usize, window_size: usize, offered_load_mbps: f64) -> Self {
        assert!(mcs < MCS_COUNT, "mcs {mcs} out of range");
        assert!(window_size > 0, "window must hold at least one packet");
        Self { mcs, window: Vec::with_capacity(window_size), window_size, offered_load_mbps, good_windows: 0 }
    }

    /// Appends an outcome; the oldest outcome is dropped once the window is full.
    pub fn record(&mut self, success: bool) {
        if self.window.len() == self.window_size {
            self.window.remove(0);
        }
        self.window.push(success);
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn success_rate(&self) -> Option<f64> {
        if self.window.is_empty() {
            return None;
        }
        Some(self.window.iter().filter(|&&s| s).count() as f64 / self.window.len() as f64)
    }
}

/// Below 50 % success the MCS drops by one; above 90 % in two consecutive
/// windows it rises by one. The window is cleared after every decision.
/// An empty window is returned unchanged.
pub fn rate_adapt_step(mut state: LinkState) -> LinkState {
    let Some(rate) = state.success_rate() else {
        return state;
    };
    if rate < 0.5 {
        state.mcs = state.mcs.saturating_sub(1);
        state.good_windows = 0;
    } else if rate > 0.9 {
        state.good_windows += 1;
        if state.good_windows >= 2 {
            state.mcs = (state.mcs + 1).min(MCS_COUNT - 1);
            state.good_windows = 0;
        }
    } else {
        state.good_windows = 0;
    }
    state.window.clear();
    state
}
