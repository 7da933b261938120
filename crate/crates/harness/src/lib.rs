//! Experiment harness: seeded environment generators, the V1-V9
//! verification suite, feature-family sweeps, and report emission.

pub mod checks;
pub mod env;
pub mod report;
pub mod sweep;

pub use checks::{run_suite, CheckId, SuiteConfig};
pub use env::{generate_environment, Environment, EnvironmentSpec, GeneratorKind, PolicyKind};
pub use report::{emit_report, ReportFormat, ReportRow};
pub use sweep::{sweep_features, FeatureFamily};
