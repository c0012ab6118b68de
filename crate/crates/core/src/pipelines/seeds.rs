//! Named random streams derived from one master seed, so switching one noise
//! source on or off leaves the draws of every other stream unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const ENCODER: &str = "encoder";
pub const CROSSBAR_NOISE: &str = "crossbar-noise";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";

pub fn stream_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest holds 8 bytes"))
}

pub fn stream_rng(master: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, name))
}

/// Independent generator for item `index` of a stream; used to parallelize
/// evaluation without the result depending on scheduling.
pub fn item_rng(master: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = stream_rng(master, name);
    rng.set_stream(index);
    rng
}
