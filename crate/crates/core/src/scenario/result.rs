//! Run results and their CSV / JSON forms.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::env::DeviceId;
use crate::optimizer::TraceRecord;
use crate::scenario::spec::Mode;

/// Header of the long-format result table.
pub const RESULTS_HEADER: &str = "scenario,target_set,device,metric,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Configuration returned by the optimizer.
    Optimized,
    /// Best configuration of the optimizer's initial random table.
    Initial,
    /// Uniformly random configuration.
    Random,
    /// Directional antenna instead of the surface.
    Directional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCell {
    pub device: DeviceId,
    pub attacker_rssi_dbm: f64,
    pub ap_rssi_dbm: f64,
    pub jsr_db: f64,
    pub normalized_jsr_db: f64,
    /// Noise-free jamming power received at the reference power.
    pub delivered_dbm: f64,
    pub packet_rate: Option<f64>,
    pub throughput_mbps: Option<f64>,
    pub baseline_mbps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    pub phase: Phase,
    pub targets: Vec<DeviceId>,
    pub hidden: Vec<DeviceId>,
    pub config_hex: Option<String>,
    /// Jammer power at which packet rates and throughput were evaluated.
    pub jam_dbm: Option<f64>,
    /// Weakest sweep power disrupting every target.
    pub disruption_dbm: Option<f64>,
    /// Distance from `disruption_dbm` to the first disrupted non-target.
    pub margin_db: Option<f64>,
    pub margin_censored: bool,
    pub cells: Vec<DeviceCell>,
}

impl ResultRow {
    pub fn cell(&self, device: &DeviceId) -> Option<&DeviceCell> {
        self.cells.iter().find(|c| &c.device == device)
    }

    pub fn is_target(&self, device: &DeviceId) -> bool {
        self.targets.contains(device)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub label: String,
    pub devices: Vec<DeviceId>,
    pub powers: Vec<f64>,
    /// `rates[device][power]`.
    pub rates: Vec<Vec<f64>>,
    pub disruption_dbm: Vec<Option<f64>>,
    pub knee_dbm: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub focus: DeviceId,
    pub x_m: Vec<f64>,
    pub y_m: Vec<f64>,
    /// Power relative to the focus, `values_db[row][col]` with rows along y.
    pub values_db: Vec<Vec<f64>>,
    pub exclusion_radius_m: f64,
    /// Mean and minimum attenuation outside the exclusion radius.
    pub mean_attenuation_db: f64,
    pub min_attenuation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCurve {
    /// Which antenna was maximized during optimization.
    pub maximized: String,
    /// Gain in dB of the fixed and moved antennas per offset.
    pub fixed_db: Vec<f64>,
    pub moved_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementScan {
    pub device: DeviceId,
    pub offsets_m: Vec<f64>,
    pub curves: Vec<DisplacementCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSweepPoint {
    pub count: usize,
    pub seed: u64,
    pub target: DeviceId,
    /// Target gain minus the strongest non-target gain, noise free.
    pub separation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub label: String,
    pub time_s: f64,
    pub jam_dbm: f64,
    pub devices: Vec<DeviceId>,
    pub rates: Vec<f64>,
    pub target_disrupted: bool,
    /// Non-target stations below the operational threshold.
    pub collateral: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub label: String,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub devices: Vec<DeviceId>,
    pub rows: Vec<ResultRow>,
    pub sweeps: Vec<SweepCurve>,
    pub heatmap: Option<Heatmap>,
    pub displacement: Option<DisplacementScan>,
    pub element_sweep: Vec<ElementSweepPoint>,
    pub timeline: Vec<TimelinePoint>,
    /// Optimizer traces; written to their own files, not embedded in JSON.
    #[serde(skip)]
    pub traces: Vec<TraceSet>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl RunResult {
    pub fn new(scenario: &str, mode: Mode, seed: u64, devices: Vec<DeviceId>) -> Self {
        Self {
            scenario: scenario.to_owned(),
            mode,
            seed,
            devices,
            rows: Vec::new(),
            sweeps: Vec::new(),
            heatmap: None,
            displacement: None,
            element_sweep: Vec::new(),
            timeline: Vec::new(),
            traces: Vec::new(),
        }
    }

    pub fn row(&self, label: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn rows_in(&self, phase: Phase) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    /// `(target_set, device, metric, value)` tuples in output order.
    pub fn long_records(&self) -> Vec<(String, String, &'static str, f64)> {
        let mut out = Vec::new();
        for r in &self.rows {
            let row_metrics = [
                ("jam_dbm", r.jam_dbm),
                ("disruption_dbm", r.disruption_dbm),
                ("margin_db", r.margin_db),
                ("margin_censored", r.margin_db.map(|_| if r.margin_censored { 1.0 } else { 0.0 })),
            ];
            for (m, v) in row_metrics {
                if let Some(v) = v {
                    out.push((r.label.clone(), String::new(), m, v));
                }
            }
            for c in &r.cells {
                let cell_metrics = [
                    ("is_target", Some(if r.is_target(&c.device) { 1.0 } else { 0.0 })),
                    ("attacker_rssi_dbm", Some(c.attacker_rssi_dbm)),
                    ("ap_rssi_dbm", Some(c.ap_rssi_dbm)),
                    ("jsr_db", Some(c.jsr_db)),
                    ("normalized_jsr_db", Some(c.normalized_jsr_db)),
                    ("delivered_dbm", Some(c.delivered_dbm)),
                    ("packet_rate", c.packet_rate),
                    ("throughput_mbps", c.throughput_mbps),
                    ("baseline_mbps", c.baseline_mbps),
                ];
                for (m, v) in cell_metrics {
                    if let Some(v) = v {
                        out.push((r.label.clone(), c.device.to_string(), m, v));
                    }
                }
            }
        }
        for s in &self.sweeps {
            for (k, d) in s.devices.iter().enumerate() {
                if let Some(p) = s.disruption_dbm[k] {
                    out.push((s.label.clone(), d.to_string(), "sweep_disruption_dbm", p));
                }
                if let Some(p) = s.knee_dbm[k] {
                    out.push((s.label.clone(), d.to_string(), "knee_dbm", p));
                }
            }
        }
        if let Some(h) = &self.heatmap {
            out.push((h.focus.to_string(), h.focus.to_string(), "mean_attenuation_db", h.mean_attenuation_db));
            out.push((h.focus.to_string(), h.focus.to_string(), "min_attenuation_db", h.min_attenuation_db));
        }
        for p in &self.element_sweep {
            out.push((format!("{}@n={},s={}", p.target, p.count, p.seed), p.target.to_string(), "separation_db", p.separation_db));
        }
        for t in &self.timeline {
            let label = format!("{}@t={}", t.label, t.time_s);
            out.push((label.clone(), String::new(), "jam_dbm", t.jam_dbm));
            out.push((label.clone(), String::new(), "collateral", t.collateral as f64));
            out.push((label.clone(), String::new(), "target_disrupted", if t.target_disrupted { 1.0 } else { 0.0 }));
            for (d, r) in t.devices.iter().zip(&t.rates) {
                out.push((label.clone(), d.to_string(), "packet_rate", *r));
            }
        }
        out
    }

    pub fn write_results_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{RESULTS_HEADER}")?;
        for (set, device, metric, value) in self.long_records() {
            writeln!(w, "{},{},{},{},{}", csv_field(&self.scenario), csv_field(&set), csv_field(&device), metric, num(value))?;
        }
        Ok(())
    }

    /// One line per (curve, power, device).
    pub fn write_sweep_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "target_set,power_dbm,device,packet_rate")?;
        for s in &self.sweeps {
            for (pi, p) in s.powers.iter().enumerate() {
                for (k, d) in s.devices.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", csv_field(&s.label), num(*p), csv_field(d.as_str()), num(s.rates[k][pi]))?;
                }
            }
        }
        Ok(())
    }

    /// Dense grid without headers: one line per y, one column per x.
    pub fn write_heatmap_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        if let Some(h) = &self.heatmap {
            for row in &h.values_db {
                let mut line = String::new();
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        line.push(',');
                    }
                    let _ = write!(line, "{}", num(*v));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn write_displacement_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "maximized,offset_m,fixed_db,moved_db")?;
        if let Some(d) = &self.displacement {
            for c in &d.curves {
                for (i, off) in d.offsets_m.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", csv_field(&c.maximized), num(*off), num(c.fixed_db[i]), num(c.moved_db[i]))?;
                }
            }
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(io::Error::other)
    }
}
