//! Classical steady states, linearized quantum noise spectra and
//! continuous-variable entanglement witnesses of a three-mode χ(3)
//! optical parametric oscillator (pump, signal, idler) operating above
//! threshold, including self- and cross-phase modulation.

pub mod entanglement;
pub mod error;
pub mod fluctuations;
pub mod model;
pub mod oracle_sde;
pub mod steady_state;
pub mod sweep;

pub use error::{Error, Result};
