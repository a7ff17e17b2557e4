pub mod action;
pub mod agent;
pub mod backend;
pub mod eval;
pub mod machine;
pub mod memory;
pub mod output;
pub mod prompt;
pub mod sim;
