//! Event-driven drop simulation and multi-drop campaigns.

pub mod campaign;
pub mod drop;
pub mod event;
pub mod output;
pub mod stats;

pub use campaign::{run_campaign, CampaignResult, Summary};
pub use drop::{run_drop, run_drop_traced, ApResult, DropAudit, DropContext, DropResult, TraceRecord};
