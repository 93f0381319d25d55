//! Reference implementations for checking `ecshare-core`.
//!
//! Everything here is written for clarity over speed and shares nothing with
//! the engine beyond its plain data types: no coefficient kernels, no
//! allocator, no settlement code.

mod conservation;
mod instance;
mod reference;

pub use conservation::{check_conservation, check_interval, ConservationViolation, ViolationKind};
pub use instance::{random_instance, OracleInstance, OracleParticipant};
pub use reference::reference_allocate;
