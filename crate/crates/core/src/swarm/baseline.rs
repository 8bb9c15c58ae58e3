use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::mix;
use super::{secs, LogEvent, PlanStats, SimResult, Termination, TrajectoryPoint, SAMPLE_INTERVAL_MS};
use crate::error::{Error, Result};
use crate::field::{CaseConfig, GaussianMixtureField};
use crate::geometry::{first_entry, Arena, Point2};
use crate::gp::{Dataset, Observation, RobotId};
use crate::metrics::{relative_completion_time, MetricReport, TestGrid};

/// Axis-aligned block of the arena assigned to one robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Point2,
    pub max: Point2,
}

impl Region {
    fn center(&self) -> Point2 {
        (self.min + self.max) * 0.5
    }

    /// Splits into `n` equal strips along x.
    fn strips(&self, n: usize) -> Vec<Region> {
        let w = (self.max.x - self.min.x) / n as f64;
        (0..n)
            .map(|i| Region {
                min: Point2::new(self.min.x + w * i as f64, self.min.y),
                max: Point2::new(if i + 1 == n { self.max.x } else { self.min.x + w * (i + 1) as f64 }, self.max.y),
            })
            .collect()
    }
}

/// Search regions, one per robot. Fewer than four robots split the arena
/// into vertical strips. Otherwise robots are dealt to quadrants round-robin,
/// farthest quadrant from `start` first, and quadrants with several robots
/// are split into strips.
pub fn baseline_regions(arena: &Arena, start: Point2, m: usize) -> Vec<Region> {
    let whole = Region { min: arena.min, max: arena.max };
    if m < 4 {
        return whole.strips(m.max(1));
    }
    let c = arena.center();
    let mut quads = vec![
        Region { min: arena.min, max: c },
        Region { min: Point2::new(c.x, arena.min.y), max: Point2::new(arena.max.x, c.y) },
        Region { min: Point2::new(arena.min.x, c.y), max: Point2::new(c.x, arena.max.y) },
        Region { min: c, max: arena.max },
    ];
    quads.sort_by(|a, b| b.center().distance(start).total_cmp(&a.center().distance(start)));
    let mut counts = [0usize; 4];
    for i in 0..m {
        counts[i % 4] += 1;
    }
    quads.iter().zip(counts).flat_map(|(q, n)| q.strips(n)).collect()
}

/// Boustrophedon route through `region` starting from `from`: lanes parallel
/// to the longer side, `2 * epsilon` apart and `epsilon` in from the edges,
/// entered at the corner nearest `from`. The first vertex is `from`.
pub fn lawnmower_path(region: &Region, epsilon: f64, from: Point2) -> Vec<Point2> {
    let (w, h) = (region.max.x - region.min.x, region.max.y - region.min.y);
    let vertical = h >= w;
    // (cross axis range, along axis range, from in those coordinates)
    let (c0, c1, a0, a1, fc, fa) = if vertical {
        (region.min.x, region.max.x, region.min.y, region.max.y, from.x, from.y)
    } else {
        (region.min.y, region.max.y, region.min.x, region.max.x, from.y, from.x)
    };
    let mut lanes = Vec::new();
    if c1 - c0 <= 2.0 * epsilon {
        lanes.push(0.5 * (c0 + c1));
    } else {
        let mut c = c0 + epsilon;
        while c < c1 - epsilon - 1e-12 {
            lanes.push(c);
            c += 2.0 * epsilon;
        }
        lanes.push(c1 - epsilon);
    }
    if (fc - c0).abs() > (fc - c1).abs() {
        lanes.reverse();
    }
    let mut forward = (fa - a0).abs() <= (fa - a1).abs();
    let point = |cross: f64, along: f64| if vertical { Point2::new(cross, along) } else { Point2::new(along, cross) };
    let mut path = vec![from];
    for &c in &lanes {
        let (s, e) = if forward { (a0, a1) } else { (a1, a0) };
        path.push(point(c, s));
        path.push(point(c, e));
        forward = !forward;
    }
    path.dedup();
    path
}

/// Constant-speed walk along a polyline.
struct Walk {
    path: Vec<Point2>,
    /// Arrival time at each vertex (s).
    times: Vec<f64>,
    speed: f64,
}

impl Walk {
    fn new(path: Vec<Point2>, speed: f64) -> Self {
        let mut times = vec![0.0];
        for w in path.windows(2) {
            let last = *times.last().expect("non-empty");
            times.push(last + w[0].distance(w[1]) / speed);
        }
        Self { path, times, speed }
    }

    fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    fn at(&self, t: f64) -> Point2 {
        let i = self.times.partition_point(|&s| s <= t);
        if i >= self.path.len() {
            return *self.path.last().expect("non-empty");
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let u = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
        self.path[i - 1].lerp(self.path[i], u)
    }

    /// First time (ms) the walk is within `radius` of `center`.
    fn first_hit_ms(&self, center: Point2, radius: f64) -> Option<u64> {
        for (i, w) in self.path.windows(2).enumerate() {
            if let Some(u) = first_entry(w[0], w[1], center, radius) {
                let t = (self.times[i] + u * w[0].distance(w[1]) / self.speed) * 1000.0;
                let up = t.ceil() as u64;
                return [up, up.saturating_sub(1), up + 1]
                    .into_iter()
                    .find(|&ms| self.at(secs(ms)).distance(center) <= radius)
                    .or(Some(up));
            }
        }
        if self.path.len() == 1 && self.path[0].distance(center) <= radius {
            return Some(0);
        }
        None
    }
}

/// Lawnmower search by `m` robots from the shared start. Runs until the
/// source is found or every region has been swept; it is not cut off at the
/// mission time limit.
pub fn run_exhaustive_baseline(
    field: &GaussianMixtureField,
    case: &CaseConfig,
    m: usize,
    seed: u64,
) -> Result<SimResult> {
    case.validate(&field.arena)?;
    if m < 1 {
        return Err(Error::config("m", "swarm needs at least one robot"));
    }
    let regions = baseline_regions(&field.arena, case.start, m);
    let walks: Vec<Walk> = regions
        .iter()
        .map(|r| Walk::new(lawnmower_path(r, case.epsilon, case.start), case.speed))
        .collect();
    let source = field.source();
    let hit = walks
        .iter()
        .enumerate()
        .filter_map(|(i, w)| w.first_hit_ms(source, case.epsilon).map(|t| (t, i + 1)))
        .min();
    let (termination, end_ms, finder) = match hit {
        Some((t, id)) => (Termination::SourceFound, t, Some(id)),
        None => {
            let end = walks.iter().map(|w| (w.duration() * 1000.0).ceil() as u64).max().unwrap_or(0);
            (Termination::Timeout, end, None)
        }
    };

    let mut events = Vec::new();
    let mut trajectory = Vec::new();
    let mut records = Vec::new();
    let mut rngs: Vec<ChaCha8Rng> = (1..=m).map(|id| ChaCha8Rng::seed_from_u64(mix(seed, id as u64))).collect();
    let mut t = 0;
    while t < end_ms {
        for (i, w) in walks.iter().enumerate() {
            let id: RobotId = i + 1;
            let at = field.arena.clamp(w.at(secs(t)));
            let value = field.observe(at, &mut rngs[i])?;
            records.push(Observation { location: at, value, time: secs(t), observer: id });
            events.push(LogEvent::Sample { t: secs(t), robot: id, at, value });
            trajectory.push(TrajectoryPoint { t: secs(t), robot: id, position: at, value: Some(value) });
        }
        t += SAMPLE_INTERVAL_MS;
    }
    match finder {
        Some(id) => {
            let at = walks[id - 1].at(secs(end_ms));
            events.push(LogEvent::SourceFound { t: secs(end_ms), robot: id, at, distance: at.distance(source) });
            trajectory.push(TrajectoryPoint { t: secs(end_ms), robot: id, position: at, value: None });
        }
        None => events.push(LogEvent::Timeout { t: secs(end_ms) }),
    }
    let t_achieved = secs(end_ms);
    Ok(SimResult {
        termination,
        t_achieved,
        finder,
        metrics: MetricReport {
            tau: relative_completion_time(t_achieved, case.t_idealized)?,
            rmse: None,
            robot_rmse: Vec::new(),
            t_achieved,
            t_idealized: case.t_idealized,
            test_grid: TestGrid::standard(field.arena),
        },
        events,
        trajectory,
        dataset: Dataset::from_records(records),
        snapshots: Vec::new(),
        final_snapshot: None,
        plan_stats: PlanStats::default(),
    })
}
