//! Shared machinery: precomputed channels, the eavesdropping oracle and the
//! per-row evaluation pipeline.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::env::{gain_db, Antenna, DeviceId, DeviceRole, Environment, RssiMeter};
use crate::link::{sjnr_db, LinkParams};
use crate::optimizer::{Measurement, MeasurementOracle, OptimizerError};
use crate::ris::{compose_channel, RisConfig};
use crate::rng::StreamRng;
use crate::scenario::result::{DeviceCell, SweepCurve};
use crate::scenario::spec::PowerSettings;
use crate::scenario::ScenarioError;

/// An environment with every device's channels evaluated once.
#[derive(Debug, Clone)]
pub struct World {
    pub env: Environment,
    pub ids: Vec<DeviceId>,
    pub ap: usize,
    /// Attacker -> RIS element -> device, per device.
    pub subchannels: Vec<Vec<Complex64>>,
    /// Access point -> device; zero for the access point itself.
    pub ap_gain: Vec<Complex64>,
}

impl World {
    pub fn new(env: Environment) -> Result<Self, ScenarioError> {
        let ids: Vec<DeviceId> = env.devices().iter().map(|d| d.id.clone()).collect();
        let ap = env
            .devices()
            .iter()
            .position(|d| d.role == DeviceRole::AccessPoint)
            .ok_or_else(|| ScenarioError::Invalid { field: "environment.devices".into(), reason: "roster has no access point".into() })?;
        let ap_id = ids[ap].clone();
        let per_device: Vec<(Vec<Complex64>, Complex64)> = env
            .devices()
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let antenna = Antenna::of(&d.id);
                let sub = env.ris_subchannels(&d.position, antenna)?;
                let g = if i == ap { Complex64::new(0.0, 0.0) } else { env.direct_channel_with(&ap_id, &d.position, antenna)? };
                Ok((sub, g))
            })
            .collect::<Result<_, crate::env::EnvError>>()?;
        let (subchannels, ap_gain) = per_device.into_iter().unzip();
        Ok(Self { env, ids, ap, subchannels, ap_gain })
    }

    pub fn index(&self, id: &DeviceId) -> Result<usize, ScenarioError> {
        self.ids.iter().position(|d| d == id).ok_or_else(|| ScenarioError::UnknownDevice(id.clone()))
    }

    /// Every device except the access point, in roster order.
    pub fn stations(&self) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| i != self.ap).collect()
    }

    pub fn elements(&self) -> usize {
        self.env.ris_elements()
    }

    pub fn ris_gain(&self, device: usize, config: &RisConfig) -> Complex64 {
        compose_channel(config, &self.subchannels[device]).expect("configuration length matches the surface")
    }

    pub fn ap_rx_dbm(&self, device: usize, power: &PowerSettings) -> f64 {
        power.ap_tx_dbm + gain_db(self.ap_gain[device])
    }
}

/// One receiver as the optimizer sees it: an optional fixed contribution from
/// frozen elements plus the controllable sub-channels.
#[derive(Debug, Clone)]
pub struct Probe {
    pub offset: Complex64,
    pub subchannels: Vec<Complex64>,
    /// Transmit power of the overheard device.
    pub tx_dbm: f64,
}

impl Probe {
    pub fn full(subchannels: &[Complex64], tx_dbm: f64) -> Self {
        Self { offset: Complex64::new(0.0, 0.0), subchannels: subchannels.to_vec(), tx_dbm }
    }

    pub fn gain(&self, config: &RisConfig) -> Result<Complex64, OptimizerError> {
        Ok(self.offset + compose_channel(config, &self.subchannels)?)
    }
}

/// The attacker's view of the devices: received power of their
/// transmissions through the surface. By reciprocity this equals the
/// jamming power they would receive.
pub struct RssiOracle {
    pub targets: Vec<Probe>,
    pub non_targets: Vec<Probe>,
    /// `None` reads exact, unclamped power (instrument-grade measurement).
    pub meter: Option<RssiMeter>,
    pub rng: StreamRng,
}

impl RssiOracle {
    fn read(&mut self, tx_dbm: f64, probe_gain: Complex64) -> f64 {
        let p = tx_dbm + gain_db(probe_gain);
        match &self.meter {
            Some(m) => m.read(p, &mut self.rng),
            None => p,
        }
    }
}

impl MeasurementOracle for RssiOracle {
    fn measure(&mut self, config: &RisConfig) -> Result<Measurement, OptimizerError> {
        let t: Vec<(f64, Complex64)> = self.targets.iter().map(|p| Ok((p.tx_dbm, p.gain(config)?))).collect::<Result<_, OptimizerError>>()?;
        let n: Vec<(f64, Complex64)> = self.non_targets.iter().map(|p| Ok((p.tx_dbm, p.gain(config)?))).collect::<Result<_, OptimizerError>>()?;
        Ok(Measurement {
            targets: t.into_iter().map(|(tx, g)| self.read(tx, g)).collect(),
            non_targets: n.into_iter().map(|(tx, g)| self.read(tx, g)).collect(),
        })
    }
}

/// Packet rate of the monitored AP stream at a station.
pub fn packet_rate(link: &LinkParams, ap_rx_dbm: f64, jam_rx_dbm: f64, noise_dbm: f64) -> f64 {
    link.packet_rate(sjnr_db(ap_rx_dbm, jam_rx_dbm, noise_dbm))
}

/// First power in the sweep at which `rates` drop to `threshold` or below.
pub fn first_at_or_below(powers: &[f64], rates: &[f64], threshold: f64) -> Option<f64> {
    powers.iter().zip(rates).find(|(_, r)| **r <= threshold).map(|(p, _)| *p)
}

/// Power at which the curve crosses 50 packets/s, linearly interpolated.
pub fn knee(powers: &[f64], rates: &[f64]) -> Option<f64> {
    let half = crate::link::PACKETS_PER_SECOND / 2.0;
    if rates.first().is_some_and(|r| *r <= half) {
        return powers.first().copied();
    }
    for i in 1..rates.len() {
        if rates[i] <= half && rates[i - 1] > half {
            let t = (rates[i - 1] - half) / (rates[i - 1] - rates[i]);
            return Some(powers[i - 1] + t * (powers[i] - powers[i - 1]));
        }
    }
    None
}

/// Where the row's targets are all disrupted, and how far the first
/// non-target is from that point. A non-target never disrupted within the
/// sweep is counted at one step past its end and the margin flagged as
/// censored.
pub fn disruption_and_margin(curve: &SweepCurve, is_target: &[bool], step: f64) -> (Option<f64>, Option<f64>, bool) {
    let mut target = Some(f64::NEG_INFINITY);
    for (k, d) in curve.disruption_dbm.iter().enumerate() {
        if is_target[k] {
            target = match (target, d) {
                (Some(a), Some(b)) => Some(a.max(*b)),
                _ => None,
            };
        }
    }
    let target = target.filter(|t| t.is_finite());
    let Some(t) = target else {
        return (None, None, false);
    };
    let beyond = curve.powers.last().copied().unwrap_or(t) + step;
    let mut first: Option<f64> = None;
    let mut censored = false;
    for (k, d) in curve.disruption_dbm.iter().enumerate() {
        if is_target[k] {
            continue;
        }
        let p = d.unwrap_or(beyond);
        if first.is_none_or(|f| p < f) {
            first = Some(p);
            censored = d.is_none();
        }
    }
    (Some(t), first.map(|f| f - t), censored)
}

/// Evaluation settings shared by every row of a run.
pub struct Evaluator<'a> {
    pub world: &'a World,
    pub power: &'a PowerSettings,
    pub link: &'a LinkParams,
    pub meter: RssiMeter,
}

impl Evaluator<'_> {
    /// Packet-rate curves for the given jam gains (one per station).
    pub fn sweep(&self, label: String, stations: &[usize], jam_gain: &[Complex64]) -> SweepCurve {
        let powers = self.power.sweep.powers();
        let noise = self.world.env.noise_floor_dbm();
        let mut rates = Vec::with_capacity(stations.len());
        let mut disruption = Vec::with_capacity(stations.len());
        let mut knees = Vec::with_capacity(stations.len());
        for (k, &i) in stations.iter().enumerate() {
            let s = self.world.ap_rx_dbm(i, self.power);
            let g = gain_db(jam_gain[k]);
            let curve: Vec<f64> = powers.iter().map(|p| packet_rate(self.link, s, p + g, noise)).collect();
            disruption.push(first_at_or_below(&powers, &curve, self.power.disrupted_rate));
            knees.push(knee(&powers, &curve));
            rates.push(curve);
        }
        SweepCurve {
            label,
            devices: stations.iter().map(|&i| self.world.ids[i].clone()).collect(),
            powers,
            rates,
            disruption_dbm: disruption,
            knee_dbm: knees,
        }
    }

    /// Attacker and AP RSSI, JSR and packet rate for each station under the
    /// given jam gains. Normalization is left to [`normalize`].
    pub fn cells(&self, stations: &[usize], jam_gain: &[Complex64], jam_dbm: Option<f64>, rng: &mut StreamRng) -> Vec<DeviceCell> {
        let noise = self.world.env.noise_floor_dbm();
        stations
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let g = gain_db(jam_gain[k]);
                let ap_true = self.world.ap_rx_dbm(i, self.power);
                let attacker = self.meter.read(self.power.reference_dbm + g, rng);
                let ap = self.meter.read(ap_true, rng);
                DeviceCell {
                    device: self.world.ids[i].clone(),
                    attacker_rssi_dbm: attacker,
                    ap_rssi_dbm: ap,
                    jsr_db: attacker - ap,
                    normalized_jsr_db: f64::NAN,
                    delivered_dbm: self.power.reference_dbm + g,
                    packet_rate: jam_dbm.map(|p| packet_rate(self.link, ap_true, p + g, noise)),
                    throughput_mbps: None,
                    baseline_mbps: None,
                }
            })
            .collect()
    }
}

/// Subtracts the reference JSR: the smallest target JSR, or the row maximum
/// when the row has no targets.
pub fn normalize(cells: &mut [DeviceCell], is_target: &[bool]) {
    let reference = if is_target.iter().any(|t| *t) {
        cells.iter().zip(is_target).filter(|(_, t)| **t).map(|(c, _)| c.jsr_db).fold(f64::INFINITY, f64::min)
    } else {
        cells.iter().map(|c| c.jsr_db).fold(f64::NEG_INFINITY, f64::max)
    };
    for c in cells {
        c.normalized_jsr_db = c.jsr_db - reference;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knee_interpolates_half_rate() {
        let p = [0.0, 1.0, 2.0];
        assert_eq!(knee(&p, &[100.0, 60.0, 40.0]), Some(1.5));
        assert_eq!(knee(&p, &[40.0, 20.0, 0.0]), Some(0.0));
        assert_eq!(knee(&p, &[100.0, 90.0, 80.0]), None);
    }

    #[test]
    fn margin_uses_first_non_target() {
        let curve = SweepCurve {
            label: "x".into(),
            devices: vec!["a".into(), "b".into(), "c".into()],
            powers: vec![0.0, 1.0, 2.0, 3.0],
            rates: vec![],
            disruption_dbm: vec![Some(1.0), Some(3.0), None],
            knee_dbm: vec![],
        };
        assert_eq!(disruption_and_margin(&curve, &[true, false, false], 1.0), (Some(1.0), Some(2.0), false));
        assert_eq!(disruption_and_margin(&curve, &[true, false, true], 1.0), (None, None, false));
        assert_eq!(disruption_and_margin(&curve, &[false, true, false], 1.0), (Some(3.0), Some(-2.0), false));
        let (_, m, censored) = disruption_and_margin(&curve, &[true, true, false], 1.0);
        assert_eq!((m, censored), (Some(1.0), true));
    }
}
