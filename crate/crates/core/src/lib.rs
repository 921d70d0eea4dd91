//! Registry and result-sharing service for analysis applications that run
//! inside the visitor's browser sandbox.
//!
//! * [`manifest`] describes and validates applications.
//! * [`share`] seals and opens passphrase-protected result envelopes.
//! * [`store`] persists applications, accounts, shares and sample data.
//! * [`server`] exposes the store over HTTP behind a strict CSP.
//! * [`bench`] times native numeric workloads for comparison with the sandbox.

pub mod bench;
pub mod clock;
pub mod csp;
pub mod manifest;
pub mod server;
pub mod share;
pub mod store;
