//! Fixtures for the benchmarks under `benches/`.

use risjam_core::env::{Environment, RssiMeter};
use risjam_core::rng;
use risjam_core::scenario::desk;
use risjam_core::scenario::harness::{Probe, RssiOracle, World};

/// The default office at `seed`.
pub fn desk_world(seed: u64) -> World {
    let env = Environment::synthesize(desk::desk_environment(), rng::derive_seed(seed, "environment", 0)).expect("desk environment");
    World::new(env).expect("world")
}

/// Noisy oracle targeting `target` against every other station.
pub fn desk_oracle(world: &World, target: usize, seed: u64) -> RssiOracle {
    let probe = |i: usize| Probe::full(&world.subchannels[i], 20.0);
    RssiOracle {
        targets: vec![probe(target)],
        non_targets: (0..world.ids.len()).filter(|&i| i != target).map(probe).collect(),
        meter: Some(RssiMeter::new(RssiMeter::DEFAULT_SIGMA_DB, world.env.noise_floor_dbm())),
        rng: rng::stream(seed, "measurement", 0),
    }
}
