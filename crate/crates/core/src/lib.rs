//! Benchmarking framework for LLM-augmented autonomous agents (LAAs): five
//! solo prompt-flow architectures, an orchestrated multi-agent architecture
//! with a controller over single-action labor agents, two self-contained
//! simulated environments (web shopping and wiki question answering), and a
//! resumable benchmark harness with complexity-stratified task sampling.

#![forbid(unsafe_code)]

pub mod agent;
pub mod env;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod llm;
pub mod orchestrator;
pub mod prompting;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    task_complexity, Action, ActionKind, Architecture, EnvKind, EpisodeResult, GroundTruth,
    LaaConfig, Record, RecordKind, Task, Termination, Trajectory,
};

/// FNV-1a 64-bit hash. Stable across platforms and builds, used for trace
/// fingerprints and seed derivation.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
