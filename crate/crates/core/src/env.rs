//! Seeded narrowband multipath environment.
//!
//! Every radio path (attacker via one RIS element, or a direct transmitter)
//! owns an ensemble of `M` plane waves arriving uniformly in azimuth. The
//! field of an ensemble at a position is
//!
//! ```text
//! h(x, y) = sqrt(PL(d) / M) * sum_m a_m * exp(j (k cos(phi_m) x + k sin(phi_m) y + theta_m))
//! ```
//!
//! with `k = 2 pi / lambda`. The spatial autocorrelation of such a field is
//! `J0(k d)`, which is what limits how closely two receivers can be told
//! apart. The `z` coordinate only enters the distance used for path loss.
//!
//! The same ensemble is evaluated for both directions of a path, so forward
//! and reverse gains are identical.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ris::RisConfig;
use crate::rng::{self, StreamRng};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Minimum separation between a radiating entity and an evaluation point.
pub const MIN_DISTANCE_M: f64 = 1e-6;
/// Below this many plane waves the correlation statistics stop resembling J0.
pub const MIN_SCATTERERS: usize = 16;
pub const ENVIRONMENT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("duplicate device id `{0}`")]
    DuplicateDevice(String),
    #[error("scatterer count {0} is below the minimum of {MIN_SCATTERERS}")]
    TooFewScatterers(usize),
    #[error("RIS element count must be at least 1")]
    NoRisElements,
    #[error("RIS element {index} out of range (L = {len})")]
    ElementOutOfRange { index: usize, len: usize },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("evaluation point is {0:e} m from the transmitter, below the {MIN_DISTANCE_M:e} m minimum")]
    TooClose(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("unsupported environment document version {0}")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn offset(&self, dx: f64, dy: f64, dz: f64) -> Position {
        Position::new(self.x + dx, self.y + dy, self.z + dz)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceRole {
    AccessPoint,
    Station,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: DeviceId,
    #[serde(default = "default_role")]
    pub role: DeviceRole,
    pub position: Position,
}

fn default_role() -> DeviceRole {
    DeviceRole::Station
}

impl DeviceSpec {
    pub fn new(id: &str, role: DeviceRole, position: Position) -> Self {
        Self { id: DeviceId::new(id), role, position }
    }
}

/// Receive antenna identity used for the optional pattern-diversity weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Antenna {
    /// Ideal isotropic probe, never re-weighted.
    Reference,
    Keyed(u64),
}

impl Antenna {
    pub fn of(device: &DeviceId) -> Self {
        Antenna::Keyed(rng::name_hash(device.as_str()))
    }

    pub fn named(name: &str) -> Self {
        Antenna::Keyed(rng::name_hash(name))
    }
}

fn default_frequency() -> f64 {
    5.56e9
}
fn default_exponent() -> f64 {
    2.0
}
fn default_noise_floor() -> f64 {
    -95.0
}
fn default_scatterers() -> usize {
    256
}
fn default_elements() -> usize {
    768
}
fn default_element_gain() -> f64 {
    -55.0
}

/// Declarative description of an environment; synthesized with a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    #[serde(default = "default_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default = "default_noise_floor")]
    pub noise_floor_dbm: f64,
    /// Plane waves per ensemble (`M`).
    #[serde(default = "default_scatterers")]
    pub scatterers: usize,
    /// RIS element count (`L`).
    #[serde(default = "default_elements")]
    pub ris_elements: usize,
    pub ris_position: Position,
    /// Per-element gain of the attacker -> element -> receiver path relative
    /// to the free-space law, lumping illumination and element aperture.
    #[serde(default = "default_element_gain")]
    pub ris_element_gain_db: f64,
    pub attacker_position: Position,
    /// Linear Rician K-factor of every ensemble; 0 is pure Clarke scattering.
    #[serde(default)]
    pub rician_k: f64,
    /// K-factor of links between registered devices; falls back to `rician_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_rician_k: Option<f64>,
    /// Variance of the per-device complex re-weighting of plane waves; 0 disables it.
    #[serde(default)]
    pub pattern_diversity: f64,
    pub devices: Vec<DeviceSpec>,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |name, reason: &str| EnvError::InvalidParameter { name, reason: reason.to_owned() };
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(invalid("frequency_hz", "must be positive and finite"));
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return Err(invalid("path_loss_exponent", "must be positive and finite"));
        }
        if !self.noise_floor_dbm.is_finite() || !self.ris_element_gain_db.is_finite() {
            return Err(invalid("noise_floor_dbm", "levels must be finite"));
        }
        if self.scatterers < MIN_SCATTERERS {
            return Err(EnvError::TooFewScatterers(self.scatterers));
        }
        if self.ris_elements == 0 {
            return Err(EnvError::NoRisElements);
        }
        if !(self.rician_k.is_finite() && self.rician_k >= 0.0) {
            return Err(invalid("rician_k", "must be finite and non-negative"));
        }
        if self.direct_rician_k.is_some_and(|k| !(k.is_finite() && k >= 0.0)) {
            return Err(invalid("direct_rician_k", "must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.pattern_diversity) {
            return Err(invalid("pattern_diversity", "must lie in [0, 1]"));
        }
        if !self.ris_position.is_finite() || !self.attacker_position.is_finite() {
            return Err(invalid("position", "coordinates must be finite"));
        }
        let mut seen = HashSet::new();
        for d in &self.devices {
            if !seen.insert(d.id.as_str()) {
                return Err(EnvError::DuplicateDevice(d.id.to_string()));
            }
            if !d.position.is_finite() {
                return Err(invalid("position", "coordinates must be finite"));
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationRecord {
    pub seed: u64,
    pub fraction: f64,
    /// Share of ensembles touched; 1.0 perturbs every ensemble.
    pub ensemble_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Ensemble {
    angle: Vec<f64>,
    phase: Vec<f64>,
    amplitude: Vec<f64>,
    // cached k*cos(angle), k*sin(angle)
    kx: Vec<f64>,
    ky: Vec<f64>,
    los_phase: f64,
}

impl Ensemble {
    fn draw(rng: &mut StreamRng, m: usize, wavenumber: f64) -> Self {
        let mut angle = Vec::with_capacity(m);
        let mut phase = Vec::with_capacity(m);
        let mut amplitude = Vec::with_capacity(m);
        for _ in 0..m {
            angle.push(rng.random::<f64>() * TAU);
            phase.push(rng.random::<f64>() * TAU);
            // Rayleigh magnitude: sqrt of an exponential draw.
            let u: f64 = rng.random();
            amplitude.push((-(1.0 - u).ln()).sqrt());
        }
        let power: f64 = amplitude.iter().map(|a| a * a).sum();
        let scale = (m as f64 / power).sqrt();
        amplitude.iter_mut().for_each(|a| *a *= scale);
        let los_phase = rng.random::<f64>() * TAU;
        let mut e = Self { angle, phase, amplitude, kx: Vec::new(), ky: Vec::new(), los_phase };
        e.refresh(wavenumber);
        e
    }

    fn refresh(&mut self, wavenumber: f64) {
        self.kx = self.angle.iter().map(|a| wavenumber * a.cos()).collect();
        self.ky = self.angle.iter().map(|a| wavenumber * a.sin()).collect();
    }

    /// Unit-power diffuse field, `E|f|^2 = 1`.
    fn diffuse(&self, x: f64, y: f64, weights: Option<&[Complex64]>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        match weights {
            None => {
                for m in 0..self.amplitude.len() {
                    let arg = self.kx[m] * x + self.ky[m] * y + self.phase[m];
                    let (s, c) = arg.sin_cos();
                    acc += Complex64::new(self.amplitude[m] * c, self.amplitude[m] * s);
                }
            }
            Some(w) => {
                for m in 0..self.amplitude.len() {
                    let arg = self.kx[m] * x + self.ky[m] * y + self.phase[m];
                    let (s, c) = arg.sin_cos();
                    acc += w[m] * Complex64::new(self.amplitude[m] * c, self.amplitude[m] * s);
                }
            }
        }
        acc / (self.amplitude.len() as f64).sqrt()
    }

    /// [`Ensemble::diffuse`] at `(x0 + i dx, y)` for `i < count`, advancing
    /// each wave by phasor rotation.
    fn diffuse_row(&self, x0: f64, dx: f64, count: usize, y: f64, weights: Option<&[Complex64]>) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); count];
        for m in 0..self.amplitude.len() {
            let mut ph = Complex64::from_polar(self.amplitude[m], self.kx[m] * x0 + self.ky[m] * y + self.phase[m]);
            if let Some(w) = weights {
                ph *= w[m];
            }
            let step = Complex64::from_polar(1.0, self.kx[m] * dx);
            for v in out.iter_mut() {
                *v += ph;
                ph *= step;
            }
        }
        let norm = 1.0 / (self.amplitude.len() as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= norm);
        out
    }
}

/// Spacing of `values` when they form an arithmetic progression.
fn uniform_step(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let step = values[1] - values[0];
    values.iter().enumerate().all(|(i, v)| (v - (values[0] + i as f64 * step)).abs() <= 1e-12).then_some(step)
}

/// One plane-wave triple of an ensemble, exposed for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWave {
    pub angle: f64,
    pub phase: f64,
    pub amplitude: f64,
}

/// Synthesized radio world. Immutable; perturbation and relocation return new values.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: EnvironmentSpec,
    seed: u64,
    wavenumber: f64,
    ensembles: Vec<Ensemble>,
    perturbations: Vec<PerturbationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    RisElement(usize),
    Device(usize),
    Attacker,
}

impl Environment {
    pub fn synthesize(spec: EnvironmentSpec, seed: u64) -> Result<Self, EnvError> {
        spec.validate()?;
        let wavenumber = TAU / spec.wavelength();
        let count = spec.ris_elements + spec.devices.len() + 1;
        let ensembles = (0..count)
            .map(|i| Ensemble::draw(&mut rng::stream(seed, "ensemble", i as u64), spec.scatterers, wavenumber))
            .collect();
        Ok(Self { spec, seed, wavenumber, ensembles, perturbations: Vec::new() })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn wavelength(&self) -> f64 {
        self.spec.wavelength()
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn ris_elements(&self) -> usize {
        self.spec.ris_elements
    }

    pub fn scatterers(&self) -> usize {
        self.spec.scatterers
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        self.spec.noise_floor_dbm
    }

    pub fn ensemble_count(&self) -> usize {
        self.ensembles.len()
    }

    /// Number of ensembles serving direct (non-RIS) transmitters.
    pub fn direct_ensemble_count(&self) -> usize {
        self.ensembles.len() - self.spec.ris_elements
    }

    pub fn perturbations(&self) -> &[PerturbationRecord] {
        &self.perturbations
    }

    pub fn plane_waves(&self, ensemble: usize) -> Option<Vec<PlaneWave>> {
        self.ensembles.get(ensemble).map(|e| {
            (0..e.angle.len())
                .map(|m| PlaneWave { angle: e.angle[m], phase: e.phase[m], amplitude: e.amplitude[m] })
                .collect()
        })
    }

    pub fn devices(&self) -> &[DeviceSpec] {
        &self.spec.devices
    }

    pub fn device(&self, id: &DeviceId) -> Result<&DeviceSpec, EnvError> {
        self.device_index(id).map(|i| &self.spec.devices[i])
    }

    fn device_index(&self, id: &DeviceId) -> Result<usize, EnvError> {
        self.spec
            .devices
            .iter()
            .position(|d| &d.id == id)
            .ok_or_else(|| EnvError::UnknownDevice(id.to_string()))
    }

    pub fn position_of(&self, id: &DeviceId) -> Result<Position, EnvError> {
        self.device(id).map(|d| d.position)
    }

    /// The access point, if the roster declares one.
    pub fn access_point(&self) -> Option<&DeviceSpec> {
        self.spec.devices.iter().find(|d| d.role == DeviceRole::AccessPoint)
    }

    /// Free-space-anchored law `(lambda / 4 pi)^2 * d^-n`, referenced to 1 m.
    pub fn path_loss(&self, distance: f64) -> f64 {
        let r = self.wavelength() / (4.0 * PI);
        r * r * distance.powf(-self.spec.path_loss_exponent)
    }

    /// Mean power gain of one RIS sub-channel at `distance` from the surface.
    pub fn ris_path_loss(&self, distance: f64) -> f64 {
        self.path_loss(distance) * 10f64.powf(self.spec.ris_element_gain_db / 10.0)
    }

    fn source_position(&self, source: Source) -> Position {
        match source {
            Source::RisElement(_) => self.spec.ris_position,
            Source::Device(i) => self.spec.devices[i].position,
            Source::Attacker => self.spec.attacker_position,
        }
    }

    fn ensemble_index(&self, source: Source) -> usize {
        match source {
            Source::RisElement(l) => l,
            Source::Device(i) => self.spec.ris_elements + i,
            Source::Attacker => self.spec.ris_elements + self.spec.devices.len(),
        }
    }

    fn pattern_weights(&self, antenna: Antenna, ensemble: usize) -> Option<Vec<Complex64>> {
        let delta = self.spec.pattern_diversity;
        match antenna {
            Antenna::Keyed(key) if delta > 0.0 => {
                let mut r = rng::stream(self.seed ^ rng::mix64(key), "pattern", ensemble as u64);
                let common = (1.0 - delta).sqrt();
                let spread = (delta / 2.0).sqrt();
                Some(
                    (0..self.spec.scatterers)
                        .map(|_| {
                            let re: f64 = StandardNormal.sample(&mut r);
                            let im: f64 = StandardNormal.sample(&mut r);
                            Complex64::new(common + spread * re, spread * im)
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    fn evaluate(&self, source: Source, position: &Position, antenna: Antenna, mean_gain: f64) -> Result<Complex64, EnvError> {
        if !position.is_finite() {
            return Err(EnvError::InvalidParameter { name: "position", reason: "coordinates must be finite".into() });
        }
        let distance = self.source_position(source).distance(position);
        if distance < MIN_DISTANCE_M {
            return Err(EnvError::TooClose(distance));
        }
        let idx = self.ensemble_index(source);
        let ens = &self.ensembles[idx];
        let weights = self.pattern_weights(antenna, idx);
        let diffuse = ens.diffuse(position.x, position.y, weights.as_deref());
        let k = match source {
            Source::Device(_) => self.spec.direct_rician_k.unwrap_or(self.spec.rician_k),
            _ => self.spec.rician_k,
        };
        let field = if k > 0.0 {
            let los = Complex64::from_polar(1.0, -self.wavenumber * distance + ens.los_phase);
            los * (k / (k + 1.0)).sqrt() + diffuse * (1.0 / (k + 1.0)).sqrt()
        } else {
            diffuse
        };
        Ok(field * mean_gain.sqrt())
    }

    /// [`Environment::evaluate`] at `(origin.x + i dx, origin.y, origin.z)` for `i < count`.
    fn evaluate_row(&self, source: Source, origin: &Position, dx: f64, count: usize, antenna: Antenna, mean_gain: impl Fn(f64) -> f64) -> Result<Vec<Complex64>, EnvError> {
        if !origin.is_finite() || !dx.is_finite() {
            return Err(EnvError::InvalidParameter { name: "position", reason: "coordinates must be finite".into() });
        }
        let from = self.source_position(source);
        let points: Vec<Position> = (0..count).map(|i| origin.offset(i as f64 * dx, 0.0, 0.0)).collect();
        let distances: Vec<f64> = points.iter().map(|p| from.distance(p)).collect();
        if let Some(d) = distances.iter().find(|d| **d < MIN_DISTANCE_M) {
            return Err(EnvError::TooClose(*d));
        }
        let idx = self.ensemble_index(source);
        let ens = &self.ensembles[idx];
        let weights = self.pattern_weights(antenna, idx);
        let diffuse = ens.diffuse_row(origin.x, dx, count, origin.y, weights.as_deref());
        let k = match source {
            Source::Device(_) => self.spec.direct_rician_k.unwrap_or(self.spec.rician_k),
            _ => self.spec.rician_k,
        };
        Ok(diffuse
            .into_iter()
            .zip(&distances)
            .map(|(f, &d)| {
                let field = if k > 0.0 {
                    let los = Complex64::from_polar(1.0, -self.wavenumber * d + ens.los_phase);
                    los * (k / (k + 1.0)).sqrt() + f * (1.0 / (k + 1.0)).sqrt()
                } else {
                    f
                };
                field * mean_gain(d).sqrt()
            })
            .collect())
    }

    /// All `L` sub-channels at the equally spaced points
    /// `origin + i dx x_hat`, `i < count`; indexed `[point][element]`. Equal
    /// to calling [`Environment::ris_subchannels`] per point up to rounding.
    pub fn ris_subchannels_row(&self, origin: &Position, dx: f64, count: usize, antenna: Antenna) -> Result<Vec<Vec<Complex64>>, EnvError> {
        let mut out = vec![Vec::with_capacity(self.spec.ris_elements); count];
        for l in 0..self.spec.ris_elements {
            let row = self.evaluate_row(Source::RisElement(l), origin, dx, count, antenna, |d| self.ris_path_loss(d))?;
            for (point, h) in out.iter_mut().zip(row) {
                point.push(h);
            }
        }
        Ok(out)
    }

    /// Gain of the path attacker -> RIS element `element` -> `position`.
    pub fn ris_subchannel(&self, element: usize, position: &Position) -> Result<Complex64, EnvError> {
        self.ris_subchannel_with(element, position, Antenna::Reference)
    }

    pub fn ris_subchannel_with(&self, element: usize, position: &Position, antenna: Antenna) -> Result<Complex64, EnvError> {
        let len = self.spec.ris_elements;
        if element >= len {
            return Err(EnvError::ElementOutOfRange { index: element, len });
        }
        let d = self.spec.ris_position.distance(position);
        self.evaluate(Source::RisElement(element), position, antenna, self.ris_path_loss(d))
    }

    /// All `L` sub-channels towards one receive position.
    pub fn ris_subchannels(&self, position: &Position, antenna: Antenna) -> Result<Vec<Complex64>, EnvError> {
        (0..self.spec.ris_elements).map(|l| self.ris_subchannel_with(l, position, antenna)).collect()
    }

    /// Reverse direction of [`Environment::ris_subchannel_with`]: a transmitter at
    /// `position` received by the attacker through element `element`.
    pub fn ris_subchannel_reverse(&self, element: usize, position: &Position, antenna: Antenna) -> Result<Complex64, EnvError> {
        self.ris_subchannel_with(element, position, antenna)
    }

    /// Composed RIS channel `sum_l c_l h_l` at the equally spaced points
    /// `(x0 + i dx, y, z)` for `i < count`. Equivalent to composing
    /// [`Environment::ris_subchannels`] point by point, but advances each plane
    /// wave by phasor rotation instead of re-evaluating it.
    pub fn ris_field_row(&self, config: &RisConfig, x0: f64, dx: f64, count: usize, y: f64, z: f64, antenna: Antenna) -> Result<Vec<Complex64>, EnvError> {
        let len = self.spec.ris_elements;
        if config.len() != len {
            return Err(EnvError::InvalidParameter {
                name: "config",
                reason: format!("{} elements for a surface of {len}", config.len()),
            });
        }
        if ![x0, dx, y, z].iter().all(|v| v.is_finite()) {
            return Err(EnvError::InvalidParameter { name: "position", reason: "coordinates must be finite".into() });
        }
        let points: Vec<Position> = (0..count).map(|i| Position::new(x0 + i as f64 * dx, y, z)).collect();
        for p in &points {
            let d = self.spec.ris_position.distance(p);
            if d < MIN_DISTANCE_M {
                return Err(EnvError::TooClose(d));
            }
        }
        let mut diffuse = vec![Complex64::new(0.0, 0.0); count];
        let mut los = Complex64::new(0.0, 0.0);
        for l in 0..len {
            let c = config.coefficient(l);
            let ens = &self.ensembles[l];
            let weights = self.pattern_weights(antenna, l);
            for m in 0..ens.amplitude.len() {
                let mut ph = Complex64::from_polar(c * ens.amplitude[m], ens.kx[m] * x0 + ens.ky[m] * y + ens.phase[m]);
                if let Some(w) = &weights {
                    ph *= w[m];
                }
                let step = Complex64::from_polar(1.0, ens.kx[m] * dx);
                for v in diffuse.iter_mut() {
                    *v += ph;
                    ph *= step;
                }
            }
            los += Complex64::from_polar(c, ens.los_phase);
        }
        let k = self.spec.rician_k;
        let norm = 1.0 / (self.spec.scatterers as f64).sqrt();
        Ok(points
            .iter()
            .zip(diffuse)
            .map(|(p, f)| {
                let d = self.spec.ris_position.distance(p);
                let field = if k > 0.0 {
                    los * Complex64::from_polar((k / (k + 1.0)).sqrt(), -self.wavenumber * d) + f * norm * (1.0 / (k + 1.0)).sqrt()
                } else {
                    f * norm
                };
                field * self.ris_path_loss(d).sqrt()
            })
            .collect())
    }

    /// Gain from registered transmitter `source` to `position`.
    pub fn direct_channel(&self, source: &DeviceId, position: &Position) -> Result<Complex64, EnvError> {
        self.direct_channel_with(source, position, Antenna::Reference)
    }

    pub fn direct_channel_with(&self, source: &DeviceId, position: &Position, antenna: Antenna) -> Result<Complex64, EnvError> {
        let i = self.device_index(source)?;
        let d = self.spec.devices[i].position.distance(position);
        self.evaluate(Source::Device(i), position, antenna, self.path_loss(d))
    }

    /// Unit-power field of the attacker antenna's own multipath (no RIS),
    /// scaled by the isotropic path-loss law.
    pub fn attacker_direct_channel(&self, position: &Position, antenna: Antenna) -> Result<Complex64, EnvError> {
        let d = self.spec.attacker_position.distance(position);
        self.evaluate(Source::Attacker, position, antenna, self.path_loss(d))
    }

    /// Empirical complex field correlation `rho(d)` between `base` and
    /// `base + d x_hat` over independent Clarke ensembles.
    pub fn spatial_correlation(&self, base: &Position, displacements: &[f64], realizations: usize) -> Result<Vec<Complex64>, EnvError> {
        if realizations < 100 {
            return Err(EnvError::InvalidParameter {
                name: "realizations",
                reason: format!("{realizations} < 100"),
            });
        }
        let mut cross = vec![Complex64::new(0.0, 0.0); displacements.len()];
        let mut power_moved = vec![0.0; displacements.len()];
        let mut power_base = 0.0;
        for r in 0..realizations {
            let ens = Ensemble::draw(&mut rng::stream(self.seed, "correlation", r as u64), self.spec.scatterers, self.wavenumber);
            let h0 = ens.diffuse(base.x, base.y, None);
            power_base += h0.norm_sqr();
            let moved: Vec<Complex64> = match uniform_step(displacements) {
                Some(step) => ens.diffuse_row(base.x + displacements[0], step, displacements.len(), base.y, None),
                None => displacements.iter().map(|d| ens.diffuse(base.x + d, base.y, None)).collect(),
            };
            for (i, h) in moved.iter().enumerate() {
                cross[i] += h0 * h.conj();
                power_moved[i] += h.norm_sqr();
            }
        }
        Ok(cross
            .iter()
            .zip(&power_moved)
            .map(|(c, p)| c / (power_base * p).sqrt())
            .collect())
    }

    /// Re-draws angle and phase of `ceil(fraction * M)` plane waves in every ensemble.
    pub fn perturb(&self, fraction: f64, seed: u64) -> Result<Environment, EnvError> {
        self.perturb_subset(fraction, 1.0, seed)
    }

    /// Like [`Environment::perturb`] but touches each ensemble only with
    /// probability `ensemble_fraction`.
    pub fn perturb_subset(&self, fraction: f64, ensemble_fraction: f64, seed: u64) -> Result<Environment, EnvError> {
        for (name, v) in [("fraction", fraction), ("ensemble_fraction", ensemble_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EnvError::InvalidParameter { name, reason: format!("{v} is outside [0, 1]") });
            }
        }
        let mut next = self.clone();
        let record = PerturbationRecord { seed, fraction, ensemble_fraction };
        next.apply_perturbation(&record);
        next.perturbations.push(record);
        Ok(next)
    }

    fn apply_perturbation(&mut self, p: &PerturbationRecord) {
        let m = self.spec.scatterers;
        let count = (p.fraction * m as f64).ceil() as usize;
        if count == 0 {
            return;
        }
        let k = self.wavenumber;
        for (i, ens) in self.ensembles.iter_mut().enumerate() {
            let mut r = rng::stream(p.seed, "perturb", i as u64);
            if p.ensemble_fraction < 1.0 && r.random::<f64>() >= p.ensemble_fraction {
                continue;
            }
            for idx in index::sample(&mut r, m, count.min(m)).into_iter() {
                ens.angle[idx] = r.random::<f64>() * TAU;
                ens.phase[idx] = r.random::<f64>() * TAU;
            }
            ens.refresh(k);
        }
    }

    /// Moves a registered device; ensembles are untouched.
    pub fn with_device_position(&self, id: &DeviceId, position: Position) -> Result<Environment, EnvError> {
        let i = self.device_index(id)?;
        if !position.is_finite() {
            return Err(EnvError::InvalidParameter { name: "position", reason: "coordinates must be finite".into() });
        }
        let mut next = self.clone();
        next.spec.devices[i].position = position;
        Ok(next)
    }

    pub fn to_document(&self) -> EnvironmentDocument {
        EnvironmentDocument {
            version: ENVIRONMENT_FORMAT_VERSION,
            frequency_hz: self.spec.frequency_hz,
            seed: self.seed,
            m: self.spec.scatterers,
            path_loss_exponent: self.spec.path_loss_exponent,
            noise_floor_dbm: self.spec.noise_floor_dbm,
            devices: self.spec.devices.clone(),
            ensembles: EnsembleDescriptor {
                seed: self.seed,
                draw_counter: 1 + self.perturbations.len() as u64,
                ris_elements: self.spec.ris_elements,
                ris_position: self.spec.ris_position,
                ris_element_gain_db: self.spec.ris_element_gain_db,
                attacker_position: self.spec.attacker_position,
                rician_k: self.spec.rician_k,
                direct_rician_k: self.spec.direct_rician_k,
                perturbations: self.perturbations.clone(),
            },
            pattern_diversity: self.spec.pattern_diversity,
        }
    }

    /// Rebuilds an environment from its compressed document.
    pub fn from_document(doc: &EnvironmentDocument) -> Result<Environment, EnvError> {
        if doc.version != ENVIRONMENT_FORMAT_VERSION {
            return Err(EnvError::UnsupportedVersion(doc.version));
        }
        let e = &doc.ensembles;
        if e.draw_counter != 1 + e.perturbations.len() as u64 {
            return Err(EnvError::InvalidParameter {
                name: "ensembles.draw_counter",
                reason: format!("{} does not match {} recorded perturbations", e.draw_counter, e.perturbations.len()),
            });
        }
        if e.seed != doc.seed {
            return Err(EnvError::InvalidParameter { name: "ensembles.seed", reason: "differs from document seed".into() });
        }
        let spec = EnvironmentSpec {
            frequency_hz: doc.frequency_hz,
            path_loss_exponent: doc.path_loss_exponent,
            noise_floor_dbm: doc.noise_floor_dbm,
            scatterers: doc.m,
            ris_elements: e.ris_elements,
            ris_position: e.ris_position,
            ris_element_gain_db: e.ris_element_gain_db,
            attacker_position: e.attacker_position,
            rician_k: e.rician_k,
            direct_rician_k: e.direct_rician_k,
            pattern_diversity: doc.pattern_diversity,
            devices: doc.devices.clone(),
        };
        let mut env = Environment::synthesize(spec, doc.seed)?;
        for p in &e.perturbations {
            env.apply_perturbation(p);
            env.perturbations.push(*p);
        }
        Ok(env)
    }
}

/// Versioned JSON form of an [`Environment`]. Ensembles are stored as their
/// generator seed plus the sequence of draw epochs, not as raw samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDocument {
    pub version: u32,
    pub frequency_hz: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    pub path_loss_exponent: f64,
    pub noise_floor_dbm: f64,
    pub devices: Vec<DeviceSpec>,
    pub ensembles: EnsembleDescriptor,
    pub pattern_diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDescriptor {
    pub seed: u64,
    pub draw_counter: u64,
    pub ris_elements: usize,
    pub ris_position: Position,
    pub ris_element_gain_db: f64,
    pub attacker_position: Position,
    pub rician_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_rician_k: Option<f64>,
    pub perturbations: Vec<PerturbationRecord>,
}

/// Receiver RSSI reporting: Gaussian measurement error, clamp at the noise
/// floor, then 1 dB quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiMeter {
    pub sigma_db: f64,
    pub noise_floor_dbm: f64,
}

impl RssiMeter {
    pub const DEFAULT_SIGMA_DB: f64 = 0.5;

    pub fn new(sigma_db: f64, noise_floor_dbm: f64) -> Self {
        Self { sigma_db, noise_floor_dbm }
    }

    pub fn for_environment(env: &Environment) -> Self {
        Self::new(Self::DEFAULT_SIGMA_DB, env.noise_floor_dbm())
    }

    pub fn read(&self, power_dbm: f64, rng: &mut impl Rng) -> f64 {
        let noise = if self.sigma_db > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            z * self.sigma_db
        } else {
            0.0
        };
        (power_dbm + noise).max(self.noise_floor_dbm).round()
    }
}

/// `10 log10 |g|^2`, with `-inf` for an exact zero.
pub fn gain_db(gain: Complex64) -> f64 {
    10.0 * gain.norm_sqr().log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(devices: usize, elements: usize, m: usize) -> EnvironmentSpec {
        EnvironmentSpec {
            frequency_hz: 5.56e9,
            path_loss_exponent: 2.0,
            noise_floor_dbm: -95.0,
            scatterers: m,
            ris_elements: elements,
            ris_position: Position::new(0.0, 0.0, 1.0),
            ris_element_gain_db: -55.0,
            attacker_position: Position::new(-1.0, 0.0, 1.0),
            rician_k: 0.0,
            direct_rician_k: None,
            pattern_diversity: 0.0,
            devices: (0..devices)
                .map(|i| {
                    let role = if i == 0 { DeviceRole::AccessPoint } else { DeviceRole::Station };
                    DeviceSpec::new(&format!("D{i}"), role, Position::new(2.0 + i as f64, 1.0, 1.0))
                })
                .collect(),
        }
    }

    #[test]
    fn wavelength_at_channel_112() {
        let env = Environment::synthesize(small_spec(2, 4, 16), 1).unwrap();
        assert!((env.wavelength() - 0.053_919).abs() < 1e-6);
    }

    #[test]
    fn ensemble_counts() {
        let env = Environment::synthesize(small_spec(11, 768, 16), 1).unwrap();
        assert_eq!(env.ris_elements(), 768);
        assert_eq!(env.direct_ensemble_count(), 12);
        assert_eq!(env.ensemble_count(), 780);
    }

    #[test]
    fn plane_waves_are_in_range() {
        let env = Environment::synthesize(small_spec(2, 3, 32), 9).unwrap();
        for e in 0..env.ensemble_count() {
            let waves = env.plane_waves(e).unwrap();
            assert_eq!(waves.len(), 32);
            let power: f64 = waves.iter().map(|w| w.amplitude * w.amplitude).sum();
            assert!((power - 32.0).abs() < 1e-9);
            for w in waves {
                assert!((0.0..TAU).contains(&w.angle));
                assert!((0.0..TAU).contains(&w.phase));
            }
        }
    }

    #[test]
    fn rejects_duplicates_and_sparse_ensembles() {
        let mut spec = small_spec(3, 4, 16);
        spec.devices[2].id = DeviceId::new("D1");
        assert_eq!(Environment::synthesize(spec, 0).unwrap_err(), EnvError::DuplicateDevice("D1".into()));
        assert_eq!(
            Environment::synthesize(small_spec(2, 4, 15), 0).unwrap_err(),
            EnvError::TooFewScatterers(15)
        );
    }

    #[test]
    fn subchannel_is_pure_and_range_checked() {
        let env = Environment::synthesize(small_spec(2, 8, 64), 3).unwrap();
        let p = Position::new(3.0, 2.0, 1.0);
        assert_eq!(env.ris_subchannel(5, &p).unwrap(), env.ris_subchannel(5, &p).unwrap());
        assert_eq!(env.ris_subchannel(8, &p).unwrap_err(), EnvError::ElementOutOfRange { index: 8, len: 8 });
    }

    #[test]
    fn reciprocity_is_exact() {
        let env = Environment::synthesize(small_spec(2, 8, 64), 3).unwrap();
        let p = Position::new(3.0, 2.0, 1.0);
        for l in 0..8 {
            let a = Antenna::named("D1");
            assert_eq!(env.ris_subchannel_with(l, &p, a).unwrap(), env.ris_subchannel_reverse(l, &p, a).unwrap());
        }
    }

    #[test]
    fn direct_channel_guards() {
        let env = Environment::synthesize(small_spec(3, 2, 16), 3).unwrap();
        let ap = DeviceId::new("D0");
        let at_ap = env.position_of(&ap).unwrap();
        assert!(matches!(env.direct_channel(&ap, &at_ap), Err(EnvError::TooClose(_))));
        assert!(matches!(
            env.direct_channel(&DeviceId::new("X"), &Position::default()),
            Err(EnvError::UnknownDevice(_))
        ));
    }

    #[test]
    fn perturbation_identity_and_determinism() {
        let env = Environment::synthesize(small_spec(2, 8, 64), 3).unwrap();
        let same = env.perturb(0.0, 99).unwrap();
        let p = Position::new(3.1, 0.4, 1.0);
        for l in 0..8 {
            assert_eq!(env.ris_subchannel(l, &p).unwrap(), same.ris_subchannel(l, &p).unwrap());
        }
        let a = env.perturb(0.3, 5).unwrap();
        let b = env.perturb(0.3, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.ris_subchannel(0, &p).unwrap(), env.ris_subchannel(0, &p).unwrap());
        assert!(env.perturb(1.5, 0).is_err());
    }

    #[test]
    fn rssi_rounding_and_floor() {
        let meter = RssiMeter::new(0.0, -95.0);
        let mut r = rng::stream(0, "t", 0);
        assert_eq!(meter.read(-50.2, &mut r), -50.0);
        assert_eq!(meter.read(-120.0, &mut r), -95.0);
    }

    #[test]
    fn rssi_noise_is_unbiased() {
        let meter = RssiMeter::new(0.5, -95.0);
        let mut r = rng::stream(1, "t", 0);
        let n = 10_000;
        let mean = (0..n).map(|_| meter.read(-60.0, &mut r)).sum::<f64>() / n as f64;
        assert!((mean + 60.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn pattern_diversity_decorrelates_colocated_antennas() {
        let mut spec = small_spec(2, 1, 256);
        spec.pattern_diversity = 0.5;
        let env = Environment::synthesize(spec, 4).unwrap();
        let p = Position::new(2.0, 2.0, 1.0);
        let a = env.ris_subchannel_with(0, &p, Antenna::named("A")).unwrap();
        let b = env.ris_subchannel_with(0, &p, Antenna::named("B")).unwrap();
        assert_ne!(a, b);
        let reference = env.ris_subchannel(0, &p).unwrap();
        let without = Environment::synthesize(small_spec(2, 1, 256), 4).unwrap();
        assert_eq!(reference, without.ris_subchannel(0, &p).unwrap());
    }

    #[test]
    fn document_round_trip_regenerates_perturbed_state() {
        let env = Environment::synthesize(small_spec(3, 6, 32), 11)
            .unwrap()
            .perturb(0.25, 1)
            .unwrap()
            .perturb_subset(0.5, 0.5, 2)
            .unwrap();
        let doc = env.to_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back: EnvironmentDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(Environment::from_document(&back).unwrap(), env);
        assert_eq!(doc.ensembles.draw_counter, 3);
    }

    #[test]
    fn subchannel_row_matches_pointwise_evaluation() {
        let mut spec = small_spec(2, 12, 32);
        spec.rician_k = 1.5;
        spec.pattern_diversity = 0.4;
        let env = Environment::synthesize(spec, 21).unwrap();
        let antenna = Antenna::named("probe");
        let origin = Position::new(1.5, -0.7, 0.9);
        let rows = env.ris_subchannels_row(&origin, 0.004, 30, antenna).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let want = env.ris_subchannels(&origin.offset(i as f64 * 0.004, 0.0, 0.0), antenna).unwrap();
            for (a, b) in row.iter().zip(&want) {
                assert!((a - b).norm() <= 1e-9 * b.norm(), "point {i}");
            }
        }
        let ds = [0.0, 0.01, 0.02, 0.03];
        let uniform = env.spatial_correlation(&origin, &ds, 100).unwrap();
        let shuffled = env.spatial_correlation(&origin, &[0.02, 0.0, 0.03, 0.01], 100).unwrap();
        for (i, j) in [(0, 1), (1, 3), (2, 0), (3, 2)] {
            assert!((uniform[i] - shuffled[j]).norm() < 1e-9);
        }
    }

    #[test]
    fn field_row_matches_pointwise_composition() {
        let mut spec = small_spec(2, 24, 32);
        spec.rician_k = 0.7;
        spec.pattern_diversity = 0.3;
        let env = Environment::synthesize(spec, 17).unwrap();
        let cfg = crate::ris::random_config(24, 5).unwrap();
        let antenna = Antenna::named("probe");
        let row = env.ris_field_row(&cfg, 1.0, 0.01, 40, 2.5, 0.8, antenna).unwrap();
        for (i, v) in row.iter().enumerate() {
            let p = Position::new(1.0 + i as f64 * 0.01, 2.5, 0.8);
            let h = env.ris_subchannels(&p, antenna).unwrap();
            let want = crate::ris::compose_channel(&cfg, &h).unwrap();
            assert!((v - want).norm() <= 1e-9 * want.norm().max(1e-12), "point {i}: {v} vs {want}");
        }
    }
}
