pub mod chemtools;
pub mod environment;
pub mod evalmetrics;
pub mod fingerprints;
pub mod grpo;
pub mod molgraph;
pub mod oracles;
pub mod pattern;
pub mod policy;
pub mod reactions;
pub mod run;
