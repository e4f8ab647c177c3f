//! Simulation and certification toolkit for frequency-bin entangled photon
//! pairs.
//!
//! A pair source emits two photons ("signal" and "idler") in a superposition
//! of two frequency bins separated by Δω. Spectrally resolving detection is
//! impossible at that spacing, but *time-resolving* detection is not: the
//! two-bin superposition shows up as a beat note in the photons' joint
//! temporal intensity, and phase-resolved coincidence counting certifies the
//! entanglement. This crate provides the whole desk-scale pipeline:
//!
//! * [`quantum`] — two-qubit states, observables and projectors for the
//!   frequency-bin qubit pair, expectation values, fidelity and purity;
//! * [`jti`] — the joint temporal intensity model: analytic density,
//!   2-D coincidence histograms, beat/ringdown profiles and their fits;
//! * [`sim`] — a time-tag level Monte-Carlo source with detector jitter,
//!   dark counts, accidentals, pump-leak background and frequency-bin
//!   demultiplexer routing;
//! * [`analysis`] — phase-slot correlators, a CHSH scan, steering and
//!   entropic-uncertainty certificates, QKD figures of merit, background
//!   subtraction and bootstrap errors;
//! * [`tomo`] — maximum-likelihood density-matrix reconstruction from
//!   time-binned projector counts;
//! * [`fwi`] — field-widened interferometer design: optical path
//!   difference, the demultiplexing condition and port-extinction
//!   visibility under angular spread;
//! * [`io`] — the on-disk formats (time-tag binary/CSV, histogram
//!   binary/CSV, key-value configs, JSON reports).
//!
//! The guide in `book/` walks through each stage with runnable examples;
//! its code blocks are compiled and executed as this crate's doc-tests (see
//! [`book`]).

pub mod analysis;
pub mod error;
pub mod fwi;
pub mod io;
pub mod jti;
pub mod quantum;
pub mod sim;
pub mod tomo;

pub mod book;

pub use error::{Error, Result};
