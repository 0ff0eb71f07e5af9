//! Security-constrained AC optimal power flow with smooth generator
//! contingency-response models.
//!
//! After an outage, each generator redispatches `p0 + αΔ` clipped to its
//! limits and holds its base voltage until its reactive range runs out. Those
//! rules are piecewise and non-smooth. [`curves`] replaces them with
//! continuously differentiable sigmoid-based curves, [`nlp`] assembles and
//! solves the resulting program with an interior-point method, and
//! [`powerflow`] checks solutions against the exact piecewise rules.
//!
//! ```no_run
//! use scopf::{casefile, grid::Contingency, nlp};
//!
//! let doc = casefile::parse_matpower(&std::fs::read_to_string("case30.m")?)?;
//! let network = doc.to_network(0.5)?;
//! let problem = nlp::ScopfProblem::new(network, &[Contingency::GeneratorOutage(0)])?;
//! let instance = nlp::assemble(&problem)?;
//! let solution = nlp::solve(&instance, &nlp::SolverOptions::default())?;
//! println!("{:.2} $/h", solution.objective);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod casefile;
pub mod curves;
pub mod error;
pub mod flow;
pub mod grid;
pub mod milp;
pub mod nlp;
pub mod powerflow;
pub mod sparse;

pub use error::{Error, Result};
