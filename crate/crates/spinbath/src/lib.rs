//! Simulation of electron-spin decoherence in nuclear and electronic spin
//! baths via the generalized cluster-correlation expansion, with Hahn-echo
//! and CPMG pulse sequences, coherence-time fitting, and concentration
//! crossover analysis.

pub mod algebra;
pub mod config;
pub mod curve;
pub mod engine;
pub mod exact;
pub mod fit;
pub mod hamiltonian;
pub mod cluster;
pub mod run;
pub mod species;
pub mod presets;
pub mod pulse;
pub mod structure;
