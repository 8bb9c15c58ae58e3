//! Deterministic discrete-event simulation of the swarm and the exhaustive
//! lawnmower baseline.

mod baseline;
mod engine;
mod knowledge;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_regions, lawnmower_path, run_exhaustive_baseline, Region};
pub use engine::run_experiment;
pub use knowledge::{deliver_and_snapshot, Broadcast, Knowledge};

use crate::geometry::Point2;
use crate::gp::{Dataset, GpHyperParams, RobotId};
use crate::metrics::MetricReport;
use crate::planner::Variant;

/// Interval between observations (ms).
pub const SAMPLE_INTERVAL_MS: u64 = 1000;
/// Shortest leg (ms); zero-length steps become a dwell of this length.
pub const MIN_LEG_MS: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub m: usize,
    pub variant: Variant,
    pub seed: u64,
    pub penalty_enabled: bool,
    /// Cap on observations carried by one broadcast.
    pub broadcast_cap: usize,
    /// Simulated time between arrival and departure (s).
    pub planning_latency: f64,
    /// Times (s) at which every robot's model is dumped on a grid.
    pub snapshot_times: Vec<f64>,
    pub snapshot_grid: usize,
    /// Dump the final union model on a grid.
    pub final_snapshot: bool,
    /// Also report each robot's own mapping error.
    pub per_robot_rmse: bool,
}

impl SwarmConfig {
    pub fn new(m: usize, variant: Variant, seed: u64) -> Self {
        Self {
            m,
            variant,
            seed,
            penalty_enabled: true,
            broadcast_cap: 100,
            planning_latency: 0.0,
            snapshot_times: Vec::new(),
            snapshot_grid: 50,
            final_snapshot: false,
            per_robot_rmse: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    SourceFound,
    Timeout,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::SourceFound => "source_found",
            Termination::Timeout => "timeout",
        }
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Depart {
        t: f64,
        robot: RobotId,
        from: Point2,
        to: Point2,
        arrive: f64,
        clipped: bool,
    },
    Sample {
        t: f64,
        robot: RobotId,
        at: Point2,
        value: f64,
    },
    Arrive {
        t: f64,
        robot: RobotId,
        k: usize,
        at: Point2,
    },
    Deliver {
        t: f64,
        robot: RobotId,
        broadcasts: usize,
        new_observations: usize,
        knowledge: usize,
        /// Newest timestamp among peers' observations held after delivery.
        latest_peer_observation: Option<f64>,
    },
    Plan {
        t: f64,
        robot: RobotId,
        k: usize,
        waypoint: Point2,
        alpha: f64,
        value: f64,
        omega: f64,
        sigma: f64,
        gamma: f64,
        x_star: Point2,
        fallback: bool,
        clipped: bool,
        hyper: GpHyperParams,
        training: usize,
    },
    Broadcast {
        t: f64,
        robot: RobotId,
        waypoint: Point2,
        path_samples: usize,
        observations: usize,
    },
    Snapshot {
        t: f64,
        robot: RobotId,
    },
    SourceFound {
        t: f64,
        robot: RobotId,
        at: Point2,
        distance: f64,
    },
    Timeout {
        t: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub robot: RobotId,
    pub position: Point2,
    /// Observed value, absent for arrival poses.
    pub value: Option<f64>,
}

/// Posterior mean and standard deviation on a cell-centered grid, row-major
/// with `y` varying slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub t: f64,
    /// Robot whose knowledge was used; `None` for the union of all data.
    pub robot: Option<RobotId>,
    pub side: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GridSnapshot {
    fn matrix_csv(side: usize, values: &[f64]) -> String {
        let mut out = String::new();
        for row in values.chunks(side) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn mean_csv(&self) -> String {
        Self::matrix_csv(self.side, &self.mean)
    }

    pub fn std_csv(&self) -> String {
        Self::matrix_csv(self.side, &self.std)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub plans: usize,
    pub fallbacks: usize,
    pub clipped: usize,
    /// Acquisition evaluations across all plans.
    pub evaluations: usize,
    /// Wall-clock seconds spent planning (fit plus waypoint search).
    pub wall_seconds: f64,
}

impl PlanStats {
    pub fn mean_wall_seconds(&self) -> f64 {
        if self.plans == 0 {
            0.0
        } else {
            self.wall_seconds / self.plans as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub termination: Termination,
    pub t_achieved: f64,
    pub finder: Option<RobotId>,
    pub metrics: MetricReport,
    pub events: Vec<LogEvent>,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Every observation taken during the run.
    pub dataset: Dataset,
    pub snapshots: Vec<GridSnapshot>,
    pub final_snapshot: Option<GridSnapshot>,
    pub plan_stats: PlanStats,
}

impl SimResult {
    pub fn tau(&self) -> f64 {
        self.metrics.tau
    }

    pub fn mapping_rmse(&self) -> Option<f64> {
        self.metrics.rmse
    }

    /// The event log as JSON lines.
    pub fn event_log_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// `t,robot,x,y,value`, one row per logged pose.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t,robot,x,y,value\n");
        for p in &self.trajectory {
            let v = p.value.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", p.t, p.robot, p.position.x, p.position.y, v));
        }
        out
    }
}

/// Milliseconds to seconds.
pub(crate) fn secs(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

/// Travel time of `len` meters at `speed`, rounded up to the next
/// millisecond (with a 1 ns allowance for rounding noise).
pub(crate) fn travel_ms(len: f64, speed: f64) -> u64 {
    ((len / speed) * 1000.0 - 1e-6).ceil().max(0.0) as u64
}
