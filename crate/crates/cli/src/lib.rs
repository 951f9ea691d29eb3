//! Scenario runner for pks-core: flat config files, named recipes, CSV and JSON output.

pub mod bundled;
pub mod checks;
pub mod config;
pub mod output;
pub mod recipes;
pub mod runner;
pub mod scenario;
