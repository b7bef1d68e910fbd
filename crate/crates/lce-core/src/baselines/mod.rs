//! Reference recommenders run under the same replay protocol as the
//! compositional model: each defines a fit step and a parameter-free
//! `observe` rule for absorbing grown snapshots.

pub mod als;
pub mod lightgcn;
pub mod popularity;
pub mod rp3beta;
pub mod slim;

pub use als::{AlsConfig, AlsModel};
pub use lightgcn::{LightGcnConfig, LightGcnModel, LightGcnTables};
pub use popularity::PopularityModel;
pub use rp3beta::{rp3b_scores, Rp3BetaConfig, Rp3BetaModel};
pub use slim::{SlimConfig, SlimModel};
