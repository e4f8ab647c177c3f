//! The guide, compiled.
//!
//! Each module below carries one chapter of the mdBook under `book/` as its
//! documentation, pulled in verbatim with `include_str!`. `cargo test`
//! therefore builds and runs every fenced Rust block in the guide: a
//! chapter that drifts from the library breaks the test suite, so the
//! prose cannot go stale.
//!
//! Module order follows `book/src/SUMMARY.md`.

#[doc = include_str!("../../../book/src/index.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/two-qubit-states.md")]
pub mod two_qubit_states {}

#[doc = include_str!("../../../book/src/joint-temporal-intensity.md")]
pub mod joint_temporal_intensity {}

#[doc = include_str!("../../../book/src/simulating-time-tags.md")]
pub mod simulating_time_tags {}

#[doc = include_str!("../../../book/src/histograms-and-fits.md")]
pub mod histograms_and_fits {}

#[doc = include_str!("../../../book/src/certification.md")]
pub mod certification {}

#[doc = include_str!("../../../book/src/tomography.md")]
pub mod tomography {}

#[doc = include_str!("../../../book/src/key-rates.md")]
pub mod key_rates {}

#[doc = include_str!("../../../book/src/interferometer-design.md")]
pub mod interferometer_design {}

#[doc = include_str!("../../../book/src/formats-and-cli.md")]
pub mod formats_and_cli {}
