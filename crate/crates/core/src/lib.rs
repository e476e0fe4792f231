//! Planning toolkit for autonomous human observation with a free-flying
//! camera robot.
//!
//! The observation task is modelled as a finite-horizon semi-MDP over a
//! waypoint graph ([`smdp`]). Rewards and costs come from camera coverage and
//! proxemics ([`geometry`]) evaluated against sampled human trajectories
//! ([`trajectory`]). Two planners are provided: linear scalarization with
//! backwards induction ([`momdp`]) and a constrained MDP solved as an
//! occupancy-measure linear program ([`cmdp`], backed by the simplex solver
//! in [`lp`]). Policies are evaluated by rollout in [`harness`], and
//! [`experiment`] drives whole configuration-defined sweeps.

pub mod cmdp;
pub mod config;
pub mod experiment;
pub mod geometry;
pub mod harness;
pub mod lp;
pub mod momdp;
pub mod objectives;
pub mod plot;
pub mod smdp;
pub mod templates;
pub mod trajectory;

pub use objectives::Objectives;
