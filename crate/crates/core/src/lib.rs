//! Software twin of an always-on voice wake-up sensor.
//!
//! The crate models the analogue feature front-end ([`afe`]), the tiny
//! recurrent classifiers and their dense baselines ([`models`]), training
//! with BCE or max-pooling losses ([`training`]), k-bit quantization and a
//! bit-exact integer engine ([`quant`]), corpus synthesis ([`corpus`]) and
//! detection metrics ([`evalkit`]).

pub mod afe;
pub mod corpus;
pub mod evalkit;
pub mod models;
pub mod quant;
pub mod training;
