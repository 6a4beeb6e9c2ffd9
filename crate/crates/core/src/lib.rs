//! Multilayer knockoff filter: controlled variable selection with simultaneous
//! false-discovery-rate guarantees at multiple group resolutions.
//!
//! The crate is organized around the stages of the procedure:
//!
//! * [`model`] — partitions of variables into layers of groups, datasets,
//!   selection sets, and FDP/power bookkeeping.
//! * [`knockoffs`] — equicorrelated group knockoff construction, both
//!   fixed-design and Gaussian model-X.
//! * [`importance`] — penalized-regression entry statistics on the augmented
//!   design and antisymmetric combiners producing signed group statistics W.
//! * [`filter`] — the multilayer threshold search (MKF / MKF+) and the classic
//!   single-layer knockoff filter used as a reference.
//! * [`pfilter`] — Simes/Fisher group p-values, BH, and the generalized
//!   p-filter.
//! * [`bounds`] — numerical reproduction of the worst-case multiplier
//!   constants (random-walk and empirical-process boundary crossing).
//! * [`sim`] — simulation harness for FDR/power studies.
//! * [`io`] — CSV/JSON formats shared with the command-line front end.

pub mod bounds;
pub mod error;
pub mod filter;
pub mod importance;
pub mod io;
pub mod knockoffs;
pub mod linalg;
pub mod model;
pub mod pfilter;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use filter::{FilterConfig, ThresholdVector, Variant, C_KN};
pub use importance::{Combiner, ImportancePair, KnockoffStatistics, PenaltyKind, PenaltySpec};
pub use knockoffs::{GramPackage, KnockoffDesign};
pub use model::{Dataset, GroundTruth, LayerMetrics, LayerSpec, SelectionSet};
pub use pfilter::{PValueLayers, PfilterConfig};
pub use sim::{ExperimentConfig, ExperimentResult};
