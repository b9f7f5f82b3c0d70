pub mod classifier;
pub mod cli;
pub mod eval;
pub mod features;
pub mod parser;
pub mod pipeline;
pub mod transition;
pub mod treebank;
