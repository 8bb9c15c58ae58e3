//! Waypoint decisions: first-waypoint dispersion, observation downsampling and
//! constrained maximization of the acquisition function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    acquisition_breakdown, acquisition_values, alpha_schedule, find_x_star, AcquisitionConfig, AcquisitionContext,
    AcquisitionParams, PeerPlan, XStar, XStarOptions,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::CaseConfig;
use crate::geometry::{Arena, Point2};
use crate::gp::{downsample_stride, Dataset, FitOptions, GpHyperParams, GpModel, RobotId};
use crate::optim::{maximize, Bounds, Objective, QuasiNewtonOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Asynchronous planning with the adaptive exploitation weight.
    #[default]
    Full,
    /// Every leg has exactly the maximum length, so legs take the full horizon.
    Sync,
    /// Pure uncertainty reduction (exploitation weight fixed at zero).
    Explorative,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Sync => "sync",
            Variant::Explorative => "explorative",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "sync" => Ok(Variant::Sync),
            "explorative" => Ok(Variant::Explorative),
            other => Err(Error::config("variant", format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Robot speed (m/s).
    pub speed: f64,
    /// Planning horizon (s).
    pub horizon: f64,
    pub max_signal: f64,
    pub lipschitz: f64,
    /// Cap on observations per GP fit.
    pub n_max: usize,
    /// Initial feasible direction range (degrees).
    pub delta_theta: f64,
    pub variant: Variant,
    pub alpha_override: Option<f64>,
    /// Seeded random starts of the waypoint search.
    pub random_starts: usize,
    /// Radii x angles of the coarse polar scan that seeds one more start.
    pub scan_radii: usize,
    pub scan_angles: usize,
    pub max_iter: usize,
    /// Step tolerance of the local searches, as a fraction of the step bound.
    pub step_tol: f64,
    pub x_star: XStarOptions,
    pub fit: FitOptions,
    /// Keep the first fitted hyperparameters for the rest of the mission.
    pub freeze_hyper: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl PlannerConfig {
    pub fn from_case(case: &CaseConfig, variant: Variant) -> Self {
        Self {
            speed: case.speed,
            horizon: case.horizon,
            max_signal: case.max_signal,
            lipschitz: case.lipschitz,
            n_max: 1000,
            delta_theta: case.delta_theta,
            variant,
            alpha_override: None,
            random_starts: 4,
            scan_radii: 3,
            scan_angles: 12,
            max_iter: 200,
            step_tol: 2e-3,
            x_star: XStarOptions::default(),
            fit: FitOptions::default(),
            freeze_hyper: false,
            execution: Execution::default(),
        }
    }

    pub fn step_bound(&self) -> f64 {
        self.speed * self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(Error::config("speed", "must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("horizon", "must be positive"));
        }
        if self.n_max < 1 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        if !(self.delta_theta > 0.0 && self.delta_theta <= 360.0) {
            return Err(Error::config("delta_theta", "must lie in (0, 360]"));
        }
        if let Some(a) = self.alpha_override {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config("alpha_override", "must lie in [0, 1]"));
            }
        }
        if !(self.lipschitz > 0.0) {
            return Err(Error::config("lipschitz", "must be positive"));
        }
        Ok(())
    }
}

/// Offset of robot `r`'s first waypoint from the shared start.
pub fn first_waypoint(r: RobotId, m: usize, cfg: &PlannerConfig) -> Result<Point2> {
    if r < 1 || r > m {
        return Err(Error::Domain(format!("robot index {r} outside 1..={m}")));
    }
    let d = cfg.speed * cfg.horizon;
    let theta_deg = if cfg.delta_theta == 360.0 {
        r as f64 * cfg.delta_theta / m as f64
    } else {
        r as f64 * cfg.delta_theta / (m + 1) as f64
    };
    Ok(Point2::from_polar(d, theta_deg.to_radians()))
}

/// Caps a dataset at `n_max` records by integer-stride subsampling.
pub fn downsample(data: &Dataset, n_max: usize) -> Dataset {
    downsample_stride(data, n_max)
}

/// Fits the planning GP on the downsampled knowledge, warm-started from the
/// previous fit.
pub fn fit_planning_model(knowledge: &Dataset, previous: Option<GpHyperParams>, cfg: &PlannerConfig) -> Result<GpModel> {
    let data = downsample(knowledge, cfg.n_max);
    match previous {
        Some(h) if cfg.freeze_hyper => GpModel::condition(data, h),
        Some(h) => {
            let warm = FitOptions { restarts: false, ..cfg.fit.clone() };
            GpModel::fit(data, h, &warm)
        }
        None => GpModel::fit(data, GpHyperParams::default(), &cfg.fit),
    }
}

/// Snapshot of everything one waypoint decision depends on.
#[derive(Clone, Debug)]
pub struct PlanInput<'a> {
    pub robot: RobotId,
    pub k_r: usize,
    pub current_pos: Point2,
    pub gp: &'a GpModel,
    /// Location of the highest observed value, if any.
    pub best_observed: Option<Point2>,
    pub previous_x_star: Option<Point2>,
    pub peers: &'a [PeerPlan],
    pub t_now: f64,
    pub t_max: f64,
    pub arena: &'a Arena,
    /// Seed for the random starts; replaying with the same seed replays the
    /// decision.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub waypoint: Point2,
    pub alpha: f64,
    pub value: f64,
    pub omega: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub x_star: XStar,
    /// Every local search failed; the waypoint is the feasible point nearest
    /// `x_star`.
    pub fallback: bool,
    /// The arena boundary shortened the chosen step.
    pub clipped: bool,
    pub evaluations: usize,
}

/// Polar parameterization about the current position. The angle coordinate is
/// scaled to arc length at the full step so both coordinates are in meters.
struct WaypointObjective<'a> {
    ctx: &'a AcquisitionContext<'a>,
    arena: &'a Arena,
    origin: Point2,
    step: f64,
    /// Fixed radius (sync variant) or free radius.
    fixed_radius: Option<f64>,
}

impl WaypointObjective<'_> {
    fn point(&self, v: &[f64]) -> Point2 {
        let (r, arc) = match self.fixed_radius {
            Some(r) => (r, v[0]),
            None => (v[0], v[1]),
        };
        self.arena.clamp(self.origin + Point2::from_polar(r, arc / self.step))
    }

    fn unclamped(&self, v: &[f64]) -> Point2 {
        let (r, arc) = match self.fixed_radius {
            Some(r) => (r, v[0]),
            None => (v[0], v[1]),
        };
        self.origin + Point2::from_polar(r, arc / self.step)
    }

    fn encode(&self, p: Point2) -> Vec<f64> {
        let d = p - self.origin;
        let r = d.norm().min(self.step);
        let arc = d.y.atan2(d.x) * self.step;
        match self.fixed_radius {
            Some(_) => vec![arc],
            None => vec![r, arc],
        }
    }

    fn bounds(&self, start: &[f64]) -> Bounds {
        let arc0 = *start.last().expect("non-empty");
        let span = 2.0 * std::f64::consts::PI * self.step;
        match self.fixed_radius {
            Some(_) => Bounds::new(vec![arc0 - span], vec![arc0 + span]),
            None => Bounds::new(vec![0.0, arc0 - span], vec![self.step, arc0 + span]),
        }
    }
}

impl Objective for WaypointObjective<'_> {
    fn dim(&self) -> usize {
        if self.fixed_radius.is_some() {
            1
        } else {
            2
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.values(&[x.to_vec()])[0]
    }

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let pts: Vec<Point2> = xs.iter().map(|v| self.point(v)).collect();
        acquisition_values(self.ctx, &pts).unwrap_or_else(|_| vec![f64::NAN; xs.len()])
    }
}

/// Nearest point to `target` in the disk of radius `step` around `origin`
/// (or on its boundary when `on_circle`), kept inside the arena.
fn project(origin: Point2, target: Point2, step: f64, on_circle: bool, arena: &Arena) -> Point2 {
    let d = target - origin;
    let n = d.norm();
    let p = if n == 0.0 {
        if on_circle {
            origin + Point2::new(step, 0.0)
        } else {
            origin
        }
    } else if on_circle || n > step {
        origin + d * (step / n)
    } else {
        target
    };
    arena.clamp(p)
}

/// Chooses the next waypoint by maximizing the acquisition function over the
/// reachable disk (or circle for the sync variant) intersected with the arena.
pub fn plan_next_waypoint(input: &PlanInput<'_>, cfg: &PlannerConfig, acq: &AcquisitionConfig) -> Result<PlanOutcome> {
    cfg.validate()?;
    if !input.arena.contains(input.current_pos) {
        return Err(Error::Domain("current position lies outside the arena".into()));
    }
    let step = cfg.step_bound();
    let hint = input.best_observed.unwrap_or(input.current_pos);
    let x_star = find_x_star(
        input.gp,
        input.arena,
        hint,
        input.previous_x_star,
        input.seed ^ 0x5eed_0f_a5_7a12,
        &cfg.x_star,
    );
    let alpha = match (cfg.variant, cfg.alpha_override) {
        (Variant::Explorative, _) => 0.0,
        (_, Some(a)) => a,
        _ => alpha_schedule(input.t_now.clamp(0.0, input.t_max), input.t_max),
    };
    let params = AcquisitionParams {
        alpha,
        max_signal: cfg.max_signal,
        lipschitz: cfg.lipschitz,
        step_bound: step,
        x_star: x_star.location,
    };
    let ctx = AcquisitionContext::new(input.gp, input.current_pos, input.peers.to_vec(), params, acq.clone())?;
    let sync = cfg.variant == Variant::Sync;
    let obj = WaypointObjective {
        ctx: &ctx,
        arena: input.arena,
        origin: input.current_pos,
        step,
        fixed_radius: sync.then_some(step),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let mut starts: Vec<Point2> = vec![
        project(input.current_pos, hint, step, sync, input.arena),
        project(input.current_pos, x_star.location, step, sync, input.arena),
    ];
    for _ in 0..cfg.random_starts {
        let r = if sync { step } else { step * rng.random::<f64>().sqrt() };
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        starts.push(input.arena.clamp(input.current_pos + Point2::from_polar(r, theta)));
    }
    let mut evaluations = 0;
    if cfg.scan_angles > 0 {
        let radii: Vec<f64> = if sync {
            vec![step]
        } else {
            (1..=cfg.scan_radii.max(1)).map(|i| step * i as f64 / cfg.scan_radii.max(1) as f64).collect()
        };
        let scan: Vec<Point2> = radii
            .iter()
            .flat_map(|&r| {
                (0..cfg.scan_angles).map(move |j| Point2::from_polar(r, std::f64::consts::TAU * j as f64 / cfg.scan_angles as f64))
            })
            .map(|d| input.arena.clamp(input.current_pos + d))
            .collect();
        let vals = acquisition_values(&ctx, &scan)?;
        evaluations += scan.len();
        if let Some((p, _)) = scan
            .iter()
            .zip(&vals)
            .filter(|(_, v)| v.is_finite())
            .fold(None, |acc: Option<(Point2, f64)>, (&p, &v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((p, v)),
            })
        {
            starts.push(p);
        }
    }

    let mut unique: Vec<Point2> = Vec::with_capacity(starts.len());
    for p in starts {
        if unique.iter().all(|q| q.distance(p) > 0.02 * step) {
            unique.push(p);
        }
    }
    let starts = unique;

    let qn = QuasiNewtonOptions {
        max_iter: cfg.max_iter,
        step_tol: cfg.step_tol * step,
        rel_tol: 1e-5,
        fd_step: vec![1e-6 * step; obj.dim()],
        initial_step: 0.1 * step,
        central: false,
    };
    let encoded: Vec<Vec<f64>> = starts.iter().map(|&p| obj.encode(p)).collect();
    let results = cfg.execution.map(&encoded, |x0| {
        let b = obj.bounds(x0);
        maximize(&obj, x0, &b, &qn)
    });
    evaluations += results.iter().map(|r| r.evaluations).sum::<usize>();

    let best = results
        .iter()
        .filter(|r| r.value.is_finite())
        .fold(None, |acc: Option<&crate::optim::OptimResult>, r| match acc {
            Some(b) if b.value >= r.value => Some(b),
            _ => Some(r),
        });
    let (waypoint, fallback, clipped) = match best {
        Some(r) => {
            let p = obj.point(&r.x);
            let raw = obj.unclamped(&r.x);
            (p, false, raw != p)
        }
        None => {
            log::warn!("robot {} k={}: all waypoint searches failed, projecting x*", input.robot, input.k_r);
            (project(input.current_pos, x_star.location, step, sync, input.arena), true, false)
        }
    };
    let clipped = clipped || (sync && (waypoint.distance(input.current_pos) - step).abs() > 1e-6);
    let b = acquisition_breakdown(&ctx, waypoint)?;
    Ok(PlanOutcome {
        waypoint,
        alpha,
        value: b.value,
        omega: b.omega,
        sigma: b.sigma,
        gamma: b.gamma,
        x_star,
        fallback,
        clipped,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::case1_preset;
    use crate::gp::Observation;

    fn cfg(variant: Variant) -> PlannerConfig {
        let (_, case) = case1_preset();
        PlannerConfig::from_case(&case, variant)
    }

    #[test]
    fn first_waypoint_full_circle() {
        let mut c = cfg(Variant::Full);
        c.delta_theta = 360.0;
        c.speed = 0.1;
        c.horizon = 5.0;
        let p = first_waypoint(1, 5, &c).unwrap();
        assert!((p.x - 0.154_508_497_187_473_7).abs() < 1e-12);
        assert!((p.y - 0.475_528_258_147_576_8).abs() < 1e-12);
        let q = first_waypoint(4, 4, &c).unwrap();
        assert!((q.x - 0.5).abs() < 1e-12 && q.y.abs() < 1e-12);
        assert!(first_waypoint(0, 4, &c).is_err());
        assert!(first_waypoint(5, 4, &c).is_err());
    }

    #[test]
    fn first_waypoint_partial_range() {
        let mut c = cfg(Variant::Full);
        c.delta_theta = 90.0;
        let p = first_waypoint(1, 3, &c).unwrap();
        assert!((p.y.atan2(p.x).to_degrees() - 22.5).abs() < 1e-12);
    }

    #[test]
    fn first_waypoints_are_evenly_spread() {
        let mut c = cfg(Variant::Full);
        c.delta_theta = 360.0;
        let m = 7;
        let mut angles: Vec<f64> = (1..=m)
            .map(|r| {
                let p = first_waypoint(r, m, &c).unwrap();
                p.y.atan2(p.x).to_degrees().rem_euclid(360.0)
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        for w in angles.windows(2) {
            assert!((w[1] - w[0] - 360.0 / m as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn downsample_examples() {
        let make = |n: usize| {
            Dataset::from_records(
                (0..n)
                    .map(|i| Observation { location: Point2::new(0.0, 0.0), value: i as f64, time: i as f64, observer: 1 })
                    .collect(),
            )
        };
        assert_eq!(downsample(&make(999), 1000).len(), 999);
        let d = downsample(&make(2000), 1000);
        assert_eq!(d.len(), 1000);
        assert!(d.records().iter().enumerate().all(|(i, r)| r.value == (2 * i) as f64));
        assert_eq!(downsample(&make(2500), 1000).len(), 834);
    }

    fn alpha_one_plan(x_star_at: Point2) -> PlanOutcome {
        let d = Dataset::from_records(vec![Observation { location: x_star_at, value: 1.0, time: 0.0, observer: 1 }]);
        let gp = GpModel::condition(d, GpHyperParams { length_scale: 0.3, signal_std: 1.0, noise_std: 0.0 }).unwrap();
        let arena = Arena::square(3.0).unwrap();
        let mut c = cfg(Variant::Full);
        c.alpha_override = Some(1.0);
        let input = PlanInput {
            robot: 1,
            k_r: 1,
            current_pos: Point2::new(1.0, 1.0),
            gp: &gp,
            best_observed: Some(x_star_at),
            previous_x_star: None,
            peers: &[],
            t_now: 10.0,
            t_max: 100.0,
            arena: &arena,
            seed: 4,
        };
        plan_next_waypoint(&input, &c, &AcquisitionConfig::default()).unwrap()
    }

    #[test]
    fn exploitation_reaches_x_star_inside_disk() {
        let target = Point2::new(1.2, 1.3);
        let out = alpha_one_plan(target);
        assert!(out.waypoint.distance(target) < 1e-3, "{out:?}");
        assert!(!out.fallback);
    }

    #[test]
    fn exploitation_projects_far_x_star() {
        let target = Point2::new(2.5, 2.0);
        let out = alpha_one_plan(target);
        let origin = Point2::new(1.0, 1.0);
        let d = target - origin;
        let expected = origin + d * (0.5 / d.norm());
        assert!(out.waypoint.distance(expected) < 1e-3, "{out:?}");
    }
}
