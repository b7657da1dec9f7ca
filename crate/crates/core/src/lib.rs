//! Coalition formation for collaborative spectrum sensing.
//!
//! Secondary users running energy detectors group into coalitions whose head
//! fuses the members' hard decisions with the OR rule. Cooperation lowers the
//! miss probability but raises false alarms, and reporting over faded links
//! adds bit errors. The crate provides:
//!
//! - [`detection`]: single-user and fused detection probabilities;
//! - [`game`]: coalition values, the Pareto order, winning coalitions and the adjust rule;
//! - [`formation`]: merge/split formation (CF) and its detection-target variant (CF-PD);
//! - [`theory`]: merge thresholds, merge-region geometry and stability certificates;
//! - [`oracle`]: exhaustive centralized baselines over all set partitions;
//! - [`scenario`]: random networks, mobility and the experiment harness.

// `!(x > 0.0)` guards reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod detection;
pub mod error;
pub mod formation;
pub mod game;
pub mod network;
pub mod oracle;
pub mod scenario;
pub mod theory;

pub use detection::{ChannelModel, DetectionParams, Point, SecondaryUser, SuId};
pub use error::{Error, Result};
pub use game::{Coalition, DetectionRequirement, Partition, Value};
pub use network::Network;
