//! Campaign orchestration on top of `grokking-core`: run, analyze, simulate, verify, emit-figures.

pub mod campaign;
pub mod claims;
pub mod figures;
pub mod io;
pub mod reports;
pub mod simulate;

pub use campaign::{cmd_run, CampaignConfig, Scope};
pub use claims::{cmd_verify, ClaimsFile, VerifyReport};
pub use figures::cmd_emit_figures;
pub use reports::cmd_analyze;
pub use simulate::{cmd_simulate, GridFile};
