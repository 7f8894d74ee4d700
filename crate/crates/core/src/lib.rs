//! Traffic tracking and classification from distributed acoustic sensing
//! (DAS) strain data along a fiber-optic cable.
//!
//! The pipeline runs raw strain through [`preprocess`] into a smoothed
//! log-RMS field, extracts clustered detections with [`picker`], tunes the
//! extraction against a traffic log with [`tuner`], and follows vehicles
//! with the JPDA tracker in [`tracker`], classifying each track as car or
//! train with [`classifier`]. [`simulator`] produces ground truth at pick
//! and field level and [`report`] turns tracks into binned traffic counts.
//!
//! ```
//! use das_traffic::simulator::{simulate_picks, EntrySide, ObjectSpec, Scenario};
//! use das_traffic::strain_io::ObjectClass;
//! use das_traffic::tracker::{run_tracker, MotionModel, TrackerConfig};
//! use das_traffic::classifier::ClassModel;
//!
//! let scn = Scenario {
//!     objects: vec![ObjectSpec {
//!         birth_time: 1.0,
//!         entry_side: EntrySide::Lower,
//!         speed: 10.0,
//!         class: ObjectClass::Car,
//!     }],
//!     duration: 30.0,
//!     seed: 7,
//!     ..Default::default()
//! };
//! let (_truth, picks) = simulate_picks(&scn).unwrap();
//! let flat: Vec<_> = picks.into_iter().flatten().collect();
//! let records = run_tracker(
//!     &flat,
//!     0.0,
//!     Some(scn.n_steps()),
//!     &TrackerConfig::default(),
//!     &MotionModel::default(),
//!     &ClassModel::default(),
//! )
//! .unwrap();
//! assert!(!records.is_empty());
//! ```

pub mod classifier;
pub mod error;
pub mod picker;
pub mod preprocess;
pub mod report;
pub mod simulator;
pub mod strain_io;
pub mod tracker;
pub mod tuner;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/picking.md")]
    mod picking {}
    #[doc = include_str!("../../../book/src/tuning.md")]
    mod tuning {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
