//! Removal-based explanations of machine learning models.

pub mod behaviors;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod game;
pub mod numeric;
pub mod removal;
pub mod selftest;
pub mod summaries;

pub use error::{Error, Result};
pub use game::{CooperativeGame, Mask};
