//! Decentralized, asynchronous swarm search driven by Gaussian-process
//! knowledge models.
//!
//! Each robot keeps a GP model of a scalar signal field built from its own
//! observations and whatever its peers have broadcast. At every waypoint it
//! chooses the next one by maximizing a time-adaptive blend of an
//! exploitative term (get close to the current mean maximizer) and an
//! explorative term (path-integrated posterior uncertainty), discounted by a
//! local penalty around the peers' planned waypoints.
//!
//! The crate is organized bottom-up:
//!
//! - [`field`]: synthetic Gaussian-mixture signal environments and presets.
//! - [`gp`]: squared-exponential GP regression and hyperparameter fitting.
//! - [`acquisition`]: the exploit/explore/penalty terms and their composition.
//! - [`planner`]: first-waypoint dispersion, downsampling and waypoint choice.
//! - [`swarm`]: the deterministic discrete-event engine and the exhaustive
//!   lawnmower baseline.
//! - [`metrics`]: relative completion time and mapping RMSE.
//! - [`experiment`]: configuration, run records, comparisons and sweeps.
//!
//! Data-parallel loops (multi-start optimization, grid evaluation, seed
//! batches) go through [`exec`], which uses rayon when the `parallel` feature
//! is enabled and runs sequentially otherwise. Results never depend on the
//! execution mode.

pub mod acquisition;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod gp;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod planner;
pub mod swarm;

pub use error::{Error, Result};
pub use geometry::{Arena, Point2};
