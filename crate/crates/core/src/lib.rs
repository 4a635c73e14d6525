//! Artifact model, model gateway, knowledge store, agents and pipeline
//! orchestration for multi-agent architecture design.

pub mod artifact;
pub mod gateway;
pub mod knowledge;
pub mod pool;
pub mod agents;
pub mod prompts;
pub mod bundle;
pub mod orchestrator;
