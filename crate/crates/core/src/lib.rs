//! Two populations of recurrent dialog agents play a cooperative
//! attribute-guessing game, train by policy gradient, and are periodically
//! re-initialized under configurable replacement policies. The crate measures
//! how well the emerged languages generalize to held-out attribute
//! combinations and how similar the agents' languages are to each other.

pub mod agents;
pub mod autodiff;
pub mod checkpoint;
pub mod dialog;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod population;
pub mod rng;
pub mod training;
pub mod world;

pub use error::{Error, Result};
