pub mod cli;
pub mod datasets;
pub mod evaluation;
pub mod extraction;
pub mod inference;
pub mod mockmodel;
pub mod prompts;
pub mod redaction;
