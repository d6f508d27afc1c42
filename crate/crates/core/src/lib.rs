//! Bedford–McMullen carpets: closed-form dimensions, symbolic covering
//! counts, local Assouad observables, large deviations and Monte Carlo

pub mod carpet;
pub mod config;
pub mod deviation;
pub mod error;
pub mod experiment;
pub mod measure;
pub mod observables;
pub mod symbolic;

pub use carpet::{Carpet, Cell, Digit, Rect};
pub use deviation::{ExtendedReal, RateFunction};
pub use error::{Error, Result};
pub use measure::BernoulliMeasure;
pub use symbolic::{Code, Scale, ScaleIndices};
