//! Relative completion time and mapping error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{compensated_sum, Execution};
use crate::field::GaussianMixtureField;
use crate::geometry::{Arena, Point2};
use crate::gp::GpModel;

/// Side of the uniform test grid used for the mapping error.
pub const TEST_GRID_SIDE: usize = 100;

/// Anything that predicts a mean signal at a point.
pub trait MeanSurface {
    fn mean_at(&self, x: Point2) -> f64;
}

impl MeanSurface for GpModel {
    fn mean_at(&self, x: Point2) -> f64 {
        self.posterior_mean(x)
    }
}

impl<F: Fn(Point2) -> f64> MeanSurface for F {
    fn mean_at(&self, x: Point2) -> f64 {
        self(x)
    }
}

/// `(t_achieved - t_idealized) / t_idealized`.
pub fn relative_completion_time(t_achieved: f64, t_idealized: f64) -> Result<f64> {
    if !(t_idealized > 0.0 && t_idealized.is_finite()) {
        return Err(Error::Domain(format!("t_idealized must be positive, got {t_idealized}")));
    }
    Ok((t_achieved - t_idealized) / t_idealized)
}

/// RMSE of `surface` against the noiseless field on the cell-centered
/// `TEST_GRID_SIDE` x `TEST_GRID_SIDE` grid.
pub fn mapping_rmse<S: MeanSurface + Sync + ?Sized>(surface: &S, field: &GaussianMixtureField, arena: &Arena) -> f64 {
    mapping_rmse_on_grid(surface, field, arena, TEST_GRID_SIDE, Execution::default())
}

/// Same as [`mapping_rmse`] on an `n` x `n` grid. The squared errors are
/// accumulated in grid order with compensated summation, so the result does
/// not depend on `exec`.
pub fn mapping_rmse_on_grid<S: MeanSurface + Sync + ?Sized>(
    surface: &S,
    field: &GaussianMixtureField,
    arena: &Arena,
    n: usize,
    exec: Execution,
) -> f64 {
    let pts = arena.grid(n);
    let sq = exec.map(&pts, |&p| {
        let e = surface.mean_at(p) - field.signal(p);
        e * e
    });
    (compensated_sum(sq) / pts.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestGrid {
    pub side: usize,
    pub points: usize,
    pub arena: Arena,
}

impl TestGrid {
    pub fn standard(arena: Arena) -> Self {
        Self { side: TEST_GRID_SIDE, points: TEST_GRID_SIDE * TEST_GRID_SIDE, arena }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tau: f64,
    /// Absent for runs that build no model (the exhaustive baseline).
    pub rmse: Option<f64>,
    /// Mapping error of each robot's own model, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub robot_rmse: Vec<f64>,
    pub t_achieved: f64,
    pub t_idealized: f64,
    pub test_grid: TestGrid,
}
