//! Nonnegative garrote on kernel: kernel-based variable selection.
//!
//! Each predictor gets a nonnegative scale inside a Gaussian or linear
//! kernel; an L1 penalty on the scales, traced over a decreasing grid by
//! coordinate descent, switches predictors off. Models are chosen by BIC
//! and can be stabilized by screening and resampling.

pub mod bench;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod kernel;
pub mod linalg;
pub mod path;
pub mod pipeline;
pub mod resampling;
pub mod screening;
pub mod selection;

pub use data::{build_distance_stack, load_dataset, Dataset, DistanceStack, KernelKind, ResponseColumn};
pub use error::{ErrorCategory, NgkError, Result};
pub use kernel::{estimate_lambda0, kernel_matrix, KernelMachineFit, KernelMatrix, ScaleVector};
pub use path::{solve_path, PathConfig, PathPoint, SolutionPath};
pub use pipeline::{fit_ngk, NgkConfig, NgkFit};
pub use resampling::{bootstrap_select, permutation_select, ResampleMode, ResamplePlan, SelectionReport};
pub use screening::{nis_screen, ScreenResult};
pub use selection::{select_min_bic, Metrics, SelectionCriterion, SelectionRule};
