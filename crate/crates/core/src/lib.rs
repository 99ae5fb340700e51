pub mod agent;
pub mod digest;
pub mod fixtures;
pub mod guienv;
pub mod harness;
pub mod induction;
pub mod provider;
pub mod samcts;
pub mod seed;
pub mod sim;
pub mod skillstore;
