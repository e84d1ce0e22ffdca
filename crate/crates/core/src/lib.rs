//! Fractional barrier Lyapunov functions and error-constrained iterative
//! learning control.
//!
//! * [`barrier`]: the seven barrier functions, their derivatives, dominance
//!   checks and the infinite-barrier probe.
//! * [`plant`]: error models I and II with the desired-compensation
//!   uncertainty split.
//! * [`learner`]: the fully-saturated learning memory.
//! * [`controller`]: learning signals and robust terms.
//! * [`engine`]: the closed loop, Lyapunov-Krasovskii monitor and CSV output.
//! * [`analysis`]: lemma checkers, convergence metrics, barrier reports.

pub mod analysis;
pub mod barrier;
pub mod controller;
pub mod engine;
pub mod error;
pub mod learner;
pub mod ode;
pub mod plant;

pub use error::{Error, Result};
