//! Default office roster: one access point and ten stations in four
//! clusters, with the attacker and its surface behind the west wall.

use crate::env::{DeviceId, DeviceRole, DeviceSpec, EnvironmentSpec, Position};

pub const ACCESS_POINT: &str = "D0";

/// Rician K of the in-room links between devices.
pub const DIRECT_K: f64 = 4.0;

const ROSTER: [(&str, f64, f64, f64); 11] = [
    ("D0", 4.0, 3.5, 1.0),
    ("D1", 1.2, 6.0, 0.8),
    ("D2", 1.6, 6.5, 0.8),
    ("D3", 2.0, 6.1, 0.8),
    ("D4", 7.3, 6.0, 0.8),
    ("D5", 7.8, 6.4, 0.8),
    ("D6", 8.4, 6.8, 0.8),
    ("D7", 3.3, 2.8, 1.0),
    ("D8", 6.8, 1.4, 0.8),
    ("D9", 7.3, 0.9, 0.8),
    ("D10", 7.8, 1.3, 0.8),
];

/// Station clusters; `D7` sits alone next to the access point.
pub const CLUSTERS: [&[&str]; 4] = [&["D1", "D2", "D3"], &["D4", "D5", "D6"], &["D7"], &["D8", "D9", "D10"]];

pub fn desk_environment() -> EnvironmentSpec {
    EnvironmentSpec {
        frequency_hz: 5.56e9,
        path_loss_exponent: 2.0,
        noise_floor_dbm: -95.0,
        scatterers: 256,
        ris_elements: 768,
        ris_position: Position::new(-1.5, 3.0, 1.2),
        ris_element_gain_db: -55.0,
        attacker_position: Position::new(-2.5, 3.0, 1.2),
        rician_k: 0.0,
        direct_rician_k: Some(DIRECT_K),
        pattern_diversity: 0.0,
        devices: ROSTER
            .iter()
            .map(|&(id, x, y, z)| {
                let role = if id == ACCESS_POINT { DeviceRole::AccessPoint } else { DeviceRole::Station };
                DeviceSpec::new(id, role, Position::new(x, y, z))
            })
            .collect(),
    }
}

/// Station ids in roster order.
pub fn stations() -> Vec<DeviceId> {
    ROSTER.iter().filter(|r| r.0 != ACCESS_POINT).map(|r| DeviceId::new(r.0)).collect()
}
