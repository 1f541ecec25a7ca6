//! Instance generation, ingestion and result files.

pub mod container;
pub mod initial;
pub mod libsvm;
pub mod results;
pub mod synthetic;

pub use container::{InstanceFile, IterateLog};
pub use initial::{initial_point, InitialPoint};
pub use libsvm::{read_libsvm, write_libsvm};
pub use synthetic::{generate_instance, recovery_error, GeneratedInstance, SyntheticSpec};
