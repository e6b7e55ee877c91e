//! Deterministic simulator for handover in LEO mobile satellite networks.
//!
//! The crate models a Walker constellation on circular orbits, a
//! satellite-to-ground channel, a lightweight signal-strength predictor,
//! table-driven handover scheduling, and four handover signaling schemes
//! (three anchor-based baselines and a parallel scheme that runs the
//! access-side and core-side procedures concurrently).
//!
//! Everything is seeded: the same scenario config and seed produce a
//! byte-identical event log.

pub mod channel;
pub mod cli;
pub mod harness;
pub mod orbit;
pub mod predictor;
pub mod protocol;
pub mod scheduling;
