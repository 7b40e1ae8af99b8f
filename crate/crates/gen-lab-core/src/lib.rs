//! Learned spatial function transformation with graph element networks:
//! scatter sampled input functions onto a mesh of nodes living in a metric
//! space, propagate with a message-passing network, and read predictions
//! back out anywhere in the space. Ships with the numerical oracles,
//! dataset generators, baselines and training harness needed to reproduce
//! the mesh-size accuracy trends at desk scale.

pub mod autodiff;
pub mod datasets;
pub mod gen_model;
pub mod geometry;
pub mod parallel;
pub mod pde_oracle;
pub mod representation;
pub mod rng;
pub mod train_eval;
