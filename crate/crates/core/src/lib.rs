//! Skill prerequisite inference from learner response logs, Q-matrix
//! refinement, heterogeneous graph embeddings over the refined
//! question–skill graph, and an attentive recurrent model that predicts
//! learner responses, plus a synthetic-data generator that provides ground
//! truth for every stage.

pub mod config;
pub mod dataio;
pub mod error;
pub mod gradcheck;
pub mod graphembed;
pub mod ktmodel;
pub mod matrix;
pub mod prereq;
pub mod qrefine;
pub mod qrepr;
pub(crate) mod seeding;
pub mod synth;

pub use error::{Error, Result};
