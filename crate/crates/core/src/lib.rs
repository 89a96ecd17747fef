//! Slot-synchronous simulator for a crash-tolerant blockchain over multihop
//! wireless networks under the SINR interference model.
//!
//! The geometry and channel code is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below fix it to `f64`.

pub mod aggregation;
pub mod deployment;
pub mod fault;
pub mod harness;
pub mod ledger;
pub mod message;
pub mod phy;
pub mod protocol;
pub mod scalar;
pub mod sim;
pub mod spanner;

pub use deployment::{generate, DeploymentError, DeploymentSpec, Distribution, NodeId, NodePlacement, Point};
pub use fault::{CrashEvent, CrashSchedule, FaultState};
pub use ledger::{Block, Blockchain, LedgerError, Transaction, TxId, View};
pub use message::{Message, MessageQueue, NodeContext, Payload, Role};
pub use phy::{carrier_sense, resolve_slot, SinrParams, SlotOutcome, TransmissionIntent};
pub use scalar::Scalar;
pub use spanner::{BuildMode, Spanner};

pub type Placement = NodePlacement<f64>;
pub type Sinr = SinrParams<f64>;
pub type Spec = DeploymentSpec<f64>;
