//! Robust support vector machine with per-sample ℓ2 feature uncertainty,
//! trained in the dual, with dynamic safe sample screening.
//!
//! Each training sample `x̃ᵢ` may be perturbed anywhere inside a ball of
//! radius `ρᵢ`. The worst-case hinge loss has the closed form
//! `[1 − yᵢ⟨w, x̃ᵢ⟩ + ρᵢ‖w‖]₊`, which makes the primal objective 1-strongly
//! convex and gives a box-constrained concave dual. [`solver`] maximizes the
//! dual with projected gradient ascent and certifies its answer through the
//! duality gap; [`screening`] uses the same gap to discard samples whose
//! optimal dual value is already determined.
//!
//! Per-sample loops run on rayon with the default `parallel` feature.
//! Reductions use a fixed block order, so results are bit-identical with or
//! without it.

pub mod bench;
pub mod data;
pub mod error;
pub mod model;
pub mod numeric;
pub mod par;
pub mod screening;
pub mod solver;

pub use data::{Dataset, Rho, Sample, SampleView};
pub use error::{Error, Result};
pub use model::{DualIterate, Hyperparams, Margin};
pub use screening::{dynamic_screen, Partition, SafeBall, ScreenConfig, ScreenOutcome, ScreenTrace};
pub use solver::{solve, FrozenAssignment, SolveReport};
