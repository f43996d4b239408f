pub mod clustering;
pub mod eligibility;
pub mod flows;
pub mod forensics;
pub mod graphs;
pub mod ingest;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod types;
