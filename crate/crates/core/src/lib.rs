//! Risk-aware composite rewards for reinforcement-learning trading agents.
//!
//! The crate covers the full loop: OHLCV ingestion ([`marketdata`]),
//! observation features ([`indicators`]), performance metrics ([`metrics`]),
//! the composite reward with analytic gradients ([`reward`]), a deterministic
//! daily trading environment ([`env`]), a small clipped policy-gradient trainer
//! ([`agent`]) and a simplex grid search over reward weights ([`tuner`]).

pub mod indicators;
pub mod marketdata;
pub mod metrics;
pub mod reward;
pub mod env;
pub mod agent;
pub mod tuner;
