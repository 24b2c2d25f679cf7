pub mod autodiff;
pub mod config;
pub mod csa;
pub mod gnn;
pub mod graph;
pub mod matcher;
pub mod metrics;
pub mod miner;
pub mod pipeline;
pub mod summarizer;
pub mod synthetic;
pub mod tu;
