//! Principal-agent collaborative learning.
//!
//! `K` agents each run a discretized underdamped Langevin dynamics on their own
//! training set, pulled toward a weighted consensus estimate. A principal scores
//! every agent on a held-out test set and sets the consensus weights with an
//! exponential-weights (Hedge) rule. The cumulative mixture loss paid by the
//! principal is checked against its closed-form upper bound at the end of every
//! run.
//!
//! Module map:
//!
//! * [`model`]: hypothesis functions, quadratic loss and its analytic gradient.
//! * [`dynamics`]: one Euler-Maruyama step of an agent and the annealed noise schedule.
//! * [`principal`]: performance indices, weight updates and the loss bound.
//! * [`data`]: datasets, CSV ingestion, partitioning and synthetic generation.
//! * [`orchestrator`]: the full agent/principal loop and trajectory recording.
//! * [`cli`]: the `collab` command-line front end.

pub mod cli;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod orchestrator;
pub mod principal;

pub use data::{Dataset, PartitionSpec};
pub use dynamics::{AgentState, DynamicsParams};
pub use error::{Error, Result};
pub use model::{LogisticGrowthParams, ModelKind, ModelSpec, ParamBox};
pub use orchestrator::{run, InitialState, RunConfig, Termination, TrajectoryRecord};
pub use principal::{PrincipalParams, PrincipalState};
