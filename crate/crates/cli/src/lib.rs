pub mod experiment;
pub mod report;

pub use experiment::{run_experiment, Cell, ExperimentConfig};
pub use report::{report, shifted_geometric_mean, Format, Row};
