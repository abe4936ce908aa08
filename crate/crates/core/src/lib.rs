//! Hierarchical Bayesian category learning under two interacting
//! overhypotheses: a conceptual domain bias and a linguistic label bias.
//!
//! The crate covers the generative model ([`model`]), synthetic stimuli
//! ([`datagen`]), a random-walk MCMC engine ([`sampler`]), the block-learning
//! experiment ([`experiment`]) and the logistic-regression analysis of the
//! simulated participants ([`stats`]).

pub mod datagen;
pub mod experiment;
pub mod model;
pub mod sampler;
pub mod stats;
