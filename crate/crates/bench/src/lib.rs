//! Seeded fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wptirs_core::channel::generate_realization;
use wptirs_core::optimize::random_phases;
use wptirs_core::{ChannelRealization, Complex64, Layout, PowerDelayProfile, SystemConfig};

pub struct Fixture {
    pub config: SystemConfig,
    pub realization: ChannelRealization,
    pub phases: Vec<Complex64>,
}

/// Default-layout realization and random flat phases for `(K, N, L)`.
pub fn fixture(users: usize, subcarriers: usize, elements: usize, seed: u64) -> Fixture {
    let config = SystemConfig { users, subcarriers, elements, weights: vec![1.0; users], ..SystemConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let realization = generate_realization(&config, &Layout::default(), &PowerDelayProfile::model_d(), &mut rng)
        .expect("default layout is valid");
    let phases = random_phases(elements, &mut rng);
    Fixture { config, realization, phases }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
