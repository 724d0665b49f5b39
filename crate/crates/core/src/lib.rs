//! Mixed robot/human traffic at a four-way unsignalized intersection:
//! simulation, observation, hierarchical control and PPO training.

pub mod baselines;
pub mod compare;
pub mod config;
pub mod controller;
pub mod demand;
pub mod eval;
pub mod geometry;
pub mod idm;
pub mod kinematics;
pub mod movement;
pub mod nn;
pub mod observe;
pub mod policy;
pub mod ppo;
pub mod report;
pub mod sim;
pub mod vehicle;
