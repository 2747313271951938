//! Knowledge tracing with static question embeddings and recurrent
//! student dynamics.
//!
//! The pipeline has two phases. A biased matrix factorization
//! ([`embedding`]) learns one embedding and bias per question. An LSTM
//! ([`dynamics`]) then reads a student's history, encoded through those
//! frozen embeddings, and its hidden state serves as the student's current
//! embedding when scoring the next question. [`evaluation`] implements
//! the online New User and Most Recent protocols and [`analysis`] projects
//! question embeddings for inspection.

pub mod analysis;
pub mod cli;
pub mod container;
pub mod data;
pub mod embedding;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod mathcore;

pub use error::{Error, Result};
