//! Lane-keeping reinforcement learning lab.
//!
//! - [`nn`]: dense feed-forward networks with exact backprop and SGD.
//! - [`sim`]: deterministic track-relative car simulator with SCR-style sensors.
//! - [`agents`]: tile-coded Q-learning, DQN and deterministic actor-critic (DDAC).
//! - [`scr`]: Simulated Car Racing text protocol and UDP client.
//! - [`harness`]: experiment runner, convergence statistics and reports.

pub mod agents;
pub mod harness;
pub mod nn;
pub mod scr;
pub mod sim;
