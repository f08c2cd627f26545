//! Morphological analogies: corpora built from inflection data, neural
//! embedding and analogy models, and symbolic and vector analogy solvers.

pub mod axioms;
pub mod data;
pub mod nn;
pub mod models;
pub mod solvers;
pub mod training;
pub mod evaluation;
pub mod cli;
