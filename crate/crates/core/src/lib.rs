//! Search-to-control planning for quadrotors.
//!
//! A visibility-based grid search produces a minimum-length polyline over an
//! ESDF map; the polyline is sampled into control points, and a PPO-trained
//! policy turns quadrotor state, control points and a compact obstacle
//! observation into collective-thrust / body-rate commands for a simulated
//! rate loop.

pub mod error;
pub mod dynamics;
pub mod env;
pub mod fly;
pub mod gridmap;
pub mod metrics;
pub mod plot;
pub mod ppo;
pub mod scenario;
pub mod search;
pub mod trace;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
