//! Classical and outlier-robust Kalman filtering and smoothing.
//!
//! The robust filters come in two flavours. `rLS.AO` clips the state
//! correction and is meant for additive (non-propagating) outliers; `rLS.IO`
//! clips the estimated observation error and is meant for innovation
//! (propagating) outliers such as level shifts. Both keep the classical
//! covariance recursion, fall back to the Kalman filter for `b = ∞`, and have
//! extended (linearized) versions for nonlinear models.
//!
//! ```
//! use robust_kalman::{
//!     build_preset, run_filter, simulate_contaminated, smooth, ClipHeight, ContaminationSpec,
//!     FilterVariant, ModelPreset,
//! };
//!
//! let model = build_preset(ModelPreset::SimA);
//! let traj = simulate_contaminated(&model, 50, &ContaminationSpec::none(), 42).unwrap();
//! let filt = run_filter(&model, &traj.y_real, &FilterVariant::rls_ao(ClipHeight::Fixed(1.0))).unwrap();
//! let smoothed = smooth(&filt, &model).unwrap();
//! assert_eq!(smoothed.x_smooth.len(), 50);
//! ```

pub mod bench;
pub mod calibration;
pub mod config;
pub mod contamination;
pub mod error;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sampling;
pub mod smoother;

pub use calibration::{
    calibrate_efficiency, calibrate_radius, CalibrationOptions, CalibrationTable, ClipTarget,
    Criterion,
};
pub use contamination::{
    simulate_contaminated, simulate_replication, ContaminatingDist, ContaminationSpec, Trajectory,
};
pub use error::{Error, Result};
pub use filter::{
    correct_classical, correct_rls_ao, correct_rls_io, predict, run_filter, ClipHeight,
    FilterResult, FilterState, FilterVariant, GainSchedule, NormKind, VariantKind,
};
pub use linalg::{huber_clip, pseudo_inverse, semi_norm_sq, ClipNorm, Matrix, SemiNorm, Vector};
pub use model::{
    build_preset, simulate_ideal, LinearSsm, Model, ModelPreset, NonlinearSsm, StateSpace,
};
pub use smoother::{smooth, SmootherResult};
