//! Synthetic simulators, the optimizer-backed simulator, and design generators.

pub mod catalog;
pub mod design;
pub mod functions;
pub mod keyed;
pub mod optim;

pub use catalog::{Simulator, SimulatorSpec};
pub use design::{design, grid_design, lhs_design, uniform_design, DesignKind};
pub use functions::{cauchysine, exp2d, f2d, friedman5, gramacy1d, w};
pub use keyed::{mixture_sim, seeded_noise_sim};
pub use optim::{fsim, nelder_mead_min, true_fmin, NelderMeadResult};
