//! CLI, configuration, synthetic dataset generators, metrics persistence
//! (CSV/JSON), and SVG plot emission.

pub mod cli;
pub mod datasets;
pub mod run;
pub mod svg;
