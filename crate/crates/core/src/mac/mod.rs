//! CSMA/CA medium access with AP-scheduled uplink.

pub mod cca;
pub mod dcf;
pub mod queue;
pub mod txop;

pub use cca::{cca_verdict, CcaConfig, Medium, RxSignal};
pub use dcf::{DcfPhase, DcfState};
pub use queue::{AckReport, InFlight, TxQueue};
pub use txop::ExchangeTiming;
