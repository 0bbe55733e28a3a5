//! Deterministic discrete-event harness standing in for a physical test-bed.

mod churn;
mod clock;
pub mod logs;
mod sim;
mod transport;
mod workload;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64_with_seed;

pub use churn::{generate_lifecycle, ChurnKind, ChurnPattern, NodeClass, Phase, PhaseParams};
pub use clock::{SimTime, VirtualClock};
pub use sim::{run_experiment, ExperimentConfig, HostInfo, RunOutput, SimStats, Simulation};
pub use transport::{message_size, NetworkModel, HEADER_BYTES, NODE_ID_BYTES, PEER_REF_BYTES};
pub use workload::{Group, WorkloadKind, WorkloadSpec};

/// Independent generator for the named stream `name`, item `index`, of `seed`.
pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let tag = format!("{name}/{index}");
    ChaCha8Rng::seed_from_u64(xxh3_64_with_seed(tag.as_bytes(), seed))
}
