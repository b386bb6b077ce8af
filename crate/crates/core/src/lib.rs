pub mod error;
pub mod substrate;
pub mod workload;
pub mod features;
pub mod policy;
pub mod metrics;
pub mod embedding;
pub mod runtime;
pub mod audit;
