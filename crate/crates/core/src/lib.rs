//! Chord overlay whose maintenance rate is tuned per node by an autonomic
//! feedback manager, with a deterministic simulator and evaluation metrics
//! for comparing scheduling policies under churn.

pub mod autonomic;
pub mod chord;
pub mod config;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod ring;
pub mod simnet;

pub use autonomic::{AutonomicManager, CycleDecision, CycleMetrics, CycleRecord, PolicyConfig, PolicyMode};
pub use chord::{Address, ChordConfig, ChordNode, PeerRef};
pub use config::{CellId, MatrixConfig};
pub use error::{Error, Result};
pub use matrix::{run_matrix, Report};
pub use ring::{IdSpace, NodeId};
pub use simnet::{run_experiment, ChurnKind, ExperimentConfig, RunOutput, WorkloadKind};
