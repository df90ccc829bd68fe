//! Peer-to-peer energy cooperation in a building community.
//!
//! Each building schedules its HVAC, storage and grid exchange, and trades
//! energy with its neighbors. The community optimum is found either centrally
//! ([`oracle`]) or by distributed dual-consensus ADMM over a network whose
//! links may fail at random ([`orchestrator`]).

// Validation is written as `!(x > 0.0)` so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod building;
pub mod community;
pub mod evaluate;
pub mod network;
pub mod oracle;
pub mod orchestrator;
pub mod output;
pub mod qp;
pub mod scenario;
pub mod topology;
