//! Mixed-traffic on-ramp merging with CBF/CLF quadratic-program control.
//!
//! Connected automated vehicles (CAVs) solve a two-variable QP every sampling
//! interval; human-driven vehicles (HDVs) follow a scripted trajectory or the
//! Intelligent Driver Model. A FIFO coordinator assigns merge order.

pub mod barriers;
pub mod controller;
pub mod coordination;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod qp;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod traffic;
pub mod validate;

pub use barriers::{ConstraintTag, ControllerConfig, LinearConstraint, NeighborView};
pub use controller::{ControlDecision, DecisionStatus};
pub use coordination::{CoordinatorState, Predecessors};
pub use dynamics::{Lane, Mode, VehicleClass, VehicleParams, VehicleState};
pub use error::{Error, Result};
pub use metrics::{MetricsReport, VehicleMetrics};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use report::Summary;
pub use scenario::{Arrival, ControllerKind, ScenarioSpec};
pub use sim::{run, Event, SimLog};
pub use traffic::{IdmParams, LeadScript};
