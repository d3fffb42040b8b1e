//! Control-invariant mining, validation, attack synthesis and closed-loop
//! plant simulation for ICS historian data.
//!
//! The crate is organized around a small number of value types: [`signal::Trace`]
//! (time-indexed historian data), [`dsl::Invariant`] (the rule language),
//! [`synth::AttackPattern`] (manipulation schedules) and [`sim::PlantProfile`]
//! (closed-loop plant + controller). The [`pipeline`] module wires them into
//! the end-to-end workflow used by the CLI.

pub mod compare;
pub mod dsl;
pub mod miner;
pub mod pipeline;
pub mod proposer;
pub mod signal;
pub mod sim;
pub mod synth;
pub mod validator;

use sha2::{Digest, Sha256};

/// First 8 hex chars of the SHA-256 of `text`; used for stable content ids.
pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(8);
    for b in &digest[..4] {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Full SHA-256 hex digest of arbitrary bytes (artifact manifests).
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
