//! Named random streams.
//!
//! Every replication owns one ChaCha8 key derived from `seed ^ replication`;
//! each purpose gets its own stream under that key, so drawing more numbers
//! for one purpose never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Init,
    Candidates,
    Optimizer,
    Mc,
}

impl Purpose {
    fn stream_id(self) -> u64 {
        match self {
            Purpose::Init => 1,
            Purpose::Candidates => 2,
            Purpose::Optimizer => 3,
            Purpose::Mc => 4,
        }
    }
}

/// Seed of replication `index` under base seed `seed`.
pub fn replication_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

/// Stream for (`seed`, `purpose`), where `seed` is already replication-specific.
pub fn stream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose.stream_id());
    rng
}
