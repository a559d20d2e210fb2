//! Exact and relaxed solution of the maximum expected utility problem on
//! influence diagrams via rooted junction trees and mixed-integer programming.

pub mod error;
pub mod families;
pub mod formulation;
pub mod graph;
pub mod id;
pub mod inference;
pub mod mdp;
pub mod model;
pub mod rjt;
pub mod solve;
pub mod table;

pub use error::{Error, Result};
pub use graph::{DiGraph, VertexId};
pub use id::{CondTable, InfluenceDiagram, Parametrization, Policy, VertexKind};
pub use rjt::RootedJunctionTree;
pub use formulation::Variant;
pub use model::LinearModel;
pub use solve::{SolveResult, SolveStatus};
