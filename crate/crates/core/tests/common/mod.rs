//! Independent reference implementations shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

pub mod props;

use bayes_swarm::acquisition::{
    acquisition_value, AcquisitionConfig, AcquisitionContext, AcquisitionParams, CandidatePath, PeerPlan,
};
use bayes_swarm::gp::{Dataset, GpHyperParams, GpModel, Observation};
use bayes_swarm::planner::{plan_next_waypoint, PlanInput, PlanOutcome, PlannerConfig, Variant};
use bayes_swarm::{Arena, Point2};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Error relative to `max(|b|, floor)`, for quantities that may vanish.
pub fn scaled_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn se(h: &GpHyperParams, a: Point2, b: Point2) -> f64 {
    let d2 = (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
    h.signal_std.powi(2) * (-0.5 * d2 / h.length_scale.powi(2)).exp()
}

/// Textbook GP built from an explicit matrix inverse.
pub struct NaiveGp {
    pub hyper: GpHyperParams,
    pub x: Vec<Point2>,
    pub y: DVector<f64>,
    pub kinv: DMatrix<f64>,
    pub det: f64,
}

impl NaiveGp {
    /// `noise_at[i]` says whether point `i` carries observation noise.
    pub fn with_noise_mask(hyper: GpHyperParams, x: Vec<Point2>, y: Vec<f64>, noise_at: &[bool]) -> Self {
        let n = x.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| se(&hyper, x[i], x[j]));
        for i in 0..n {
            if noise_at[i] {
                k[(i, i)] += hyper.noise_std.powi(2);
            }
        }
        let det = k.determinant();
        let kinv = k.try_inverse().expect("covariance is invertible");
        Self { hyper, x, y: DVector::from_vec(y), kinv, det }
    }

    pub fn new(hyper: GpHyperParams, data: &Dataset) -> Self {
        let x = data.locations();
        let mask = vec![true; x.len()];
        Self::with_noise_mask(hyper, x, data.values(), &mask)
    }

    fn kvec(&self, q: Point2) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|&p| se(&self.hyper, p, q)))
    }

    pub fn mean(&self, q: Point2) -> f64 {
        (self.kvec(q).transpose() * &self.kinv * &self.y)[(0, 0)]
    }

    pub fn var(&self, q: Point2) -> f64 {
        let k = self.kvec(q);
        self.hyper.signal_std.powi(2) - (k.transpose() * &self.kinv * &k)[(0, 0)]
    }

    pub fn std(&self, q: Point2) -> f64 {
        self.var(q).max(0.0).sqrt()
    }

    pub fn log_likelihood(&self) -> f64 {
        let n = self.x.len() as f64;
        let quad = (self.y.transpose() * &self.kinv * &self.y)[(0, 0)];
        -0.5 * quad - 0.5 * self.det.ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

pub fn random_hyper<R: Rng>(r: &mut R) -> GpHyperParams {
    GpHyperParams {
        length_scale: r.random_range(0.3..2.0),
        signal_std: r.random_range(0.5..2.0),
        noise_std: r.random_range(0.05..0.5),
    }
}

pub fn random_point<R: Rng>(r: &mut R, arena: &Arena) -> Point2 {
    Point2::new(
        r.random_range(arena.min.x..arena.max.x),
        r.random_range(arena.min.y..arena.max.y),
    )
}

pub fn random_dataset<R: Rng>(r: &mut R, n: usize, arena: &Arena) -> Dataset {
    let obs = (0..n)
        .map(|i| Observation {
            location: random_point(r, arena),
            value: r.random_range(-1.0..1.0),
            time: i as f64,
            observer: 1,
        })
        .collect();
    Dataset::from_records(obs)
}

/// Path-averaged augmented std by a trapezoid rule with `nodes` nodes.
pub fn dense_sigma(ctx: &AcquisitionContext<'_>, path: &CandidatePath, nodes: usize) -> f64 {
    let h = 1.0 / (nodes - 1) as f64;
    let mut acc = 0.0;
    for i in 0..nodes {
        let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
        acc += w * ctx.augmented().std(path.point(i as f64 * h));
    }
    acc * h
}

/// A small planning problem with a fixed-hyperparameter GP.
pub struct Scenario {
    pub arena: Arena,
    pub gp: GpModel,
    pub peers: Vec<PeerPlan>,
    pub current: Point2,
    pub cfg: PlannerConfig,
    pub t_now: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn random(seed: u64, n_obs: usize, n_peers: usize, variant: Variant, alpha: Option<f64>) -> Self {
        let mut r = rng(seed);
        let arena = Arena::square(3.0).unwrap();
        let data = random_dataset(&mut r, n_obs, &arena);
        let hyper = GpHyperParams {
            length_scale: r.random_range(0.4..1.2),
            signal_std: r.random_range(0.5..1.5),
            noise_std: 0.05,
        };
        let gp = GpModel::condition(data, hyper).unwrap();
        let speed = r.random_range(0.05..0.3);
        let horizon = r.random_range(2.0..8.0);
        let current = random_point(&mut r, &arena);
        let step = speed * horizon;
        let peers = (0..n_peers)
            .map(|i| {
                let wp = arena.clamp(current + Point2::from_polar(r.random_range(0.0..2.0 * step), r.random_range(0.0..6.3)));
                let from = random_point(&mut r, &arena);
                PeerPlan {
                    robot: i + 2,
                    waypoint: wp,
                    path_points: (1..=4).map(|k| from.lerp(wp, k as f64 / 4.0)).collect(),
                }
            })
            .collect();
        let case = bayes_swarm::field::CaseConfig {
            t_max: 100.0,
            t_idealized: 30.0,
            horizon,
            speed,
            max_signal: 1.0,
            lipschitz: r.random_range(2.0..20.0),
            epsilon: 0.05,
            start: current,
            delta_theta: 360.0,
        };
        let mut cfg = PlannerConfig::from_case(&case, variant);
        cfg.alpha_override = alpha;
        Self {
            arena,
            gp,
            peers,
            current,
            cfg,
            t_now: r.random_range(0.0..100.0),
            seed,
        }
    }

    pub fn input(&self) -> PlanInput<'_> {
        PlanInput {
            robot: 1,
            k_r: 3,
            current_pos: self.current,
            gp: &self.gp,
            best_observed: self.gp.training().best().map(|o| o.location),
            previous_x_star: None,
            peers: &self.peers,
            t_now: self.t_now,
            t_max: 100.0,
            arena: &self.arena,
            seed: self.seed,
        }
    }

    pub fn plan(&self, acq: &AcquisitionConfig) -> PlanOutcome {
        plan_next_waypoint(&self.input(), &self.cfg, acq).unwrap()
    }

    /// Acquisition context matching a finished plan.
    pub fn context(&self, out: &PlanOutcome, acq: &AcquisitionConfig) -> AcquisitionContext<'_> {
        let params = AcquisitionParams {
            alpha: out.alpha,
            max_signal: self.cfg.max_signal,
            lipschitz: self.cfg.lipschitz,
            step_bound: self.cfg.step_bound(),
            x_star: out.x_star.location,
        };
        AcquisitionContext::new(&self.gp, self.current, self.peers.clone(), params, acq.clone()).unwrap()
    }
}

/// Best acquisition value over a `side` x `side` polar grid of the reachable
/// disk, with grid points clamped to the arena as the planner does.
pub fn polar_grid_max(ctx: &AcquisitionContext<'_>, arena: &Arena, side: usize) -> (Point2, f64) {
    let step = ctx.params().step_bound;
    let origin = ctx.current_pos();
    let mut best = (origin, f64::NEG_INFINITY);
    for i in 0..side {
        let radius = step * i as f64 / (side - 1) as f64;
        for j in 0..side {
            let theta = std::f64::consts::TAU * j as f64 / (side - 1) as f64;
            let p = arena.clamp(origin + Point2::from_polar(radius, theta));
            if let Ok(v) = acquisition_value(ctx, p) {
                if v > best.1 {
                    best = (p, v);
                }
            }
        }
    }
    best
}

pub fn params(alpha: f64, x_star: Point2) -> AcquisitionParams {
    AcquisitionParams { alpha, max_signal: 1.0, lipschitz: 5.0, step_bound: 0.8, x_star }
}

pub fn peer(robot: usize, wp: Point2, from: Point2) -> PeerPlan {
    PeerPlan { robot, waypoint: wp, path_points: (1..=5).map(|k| from.lerp(wp, k as f64 / 5.0)).collect() }
}

/// Three observations, one peer heading into the opposite corner.
pub fn fixed_sigma_case(gp: &GpModel) -> (AcquisitionContext<'_>, CandidatePath) {
    let here = Point2::new(1.0, 1.2);
    let peers = vec![peer(2, Point2::new(2.2, 2.3), Point2::new(2.8, 2.8))];
    let ctx = AcquisitionContext::new(gp, here, peers, params(0.5, here), AcquisitionConfig::default()).unwrap();
    (ctx, CandidatePath::new(here, Point2::new(1.4, 1.5), 0.8).unwrap())
}

pub fn three_point_gp() -> GpModel {
    let data = Dataset::from_records(
        [(0.5, 0.5, 0.2), (1.5, 2.0, 0.8), (2.5, 1.0, -0.1)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y, v))| Observation { location: Point2::new(x, y), value: v, time: i as f64, observer: 1 })
            .collect(),
    );
    GpModel::condition(data, GpHyperParams { length_scale: 0.6, signal_std: 1.0, noise_std: 0.05 }).unwrap()
}


/// A short mission on a random mixture field, small enough to run by the
/// thousand.
pub fn tiny_mission(seed: u64, m: usize, variant: Variant, penalty: bool) -> (bayes_swarm::swarm::SimResult, bayes_swarm::field::CaseConfig) {
    use bayes_swarm::field::{CaseConfig, Component, GaussianMixtureField};
    use bayes_swarm::swarm::{run_experiment, SwarmConfig};
    let mut r = rng(seed ^ 0x7157);
    let arena = Arena::square(2.0).unwrap();
    let components = (0..r.random_range(1..=3))
        .map(|i| Component {
            center: random_point(&mut r, &arena),
            amplitude: if i == 0 { 1.0 } else { r.random_range(0.2..0.7) },
            spread: r.random_range(0.2..0.6),
        })
        .collect();
    let field = GaussianMixtureField::new(arena, 0.01, components).unwrap();
    let case = CaseConfig {
        t_max: 8.0,
        t_idealized: 5.0,
        horizon: r.random_range(1.0..3.0),
        speed: r.random_range(0.1..0.4),
        max_signal: 1.0,
        lipschitz: 10.0,
        epsilon: 0.01,
        start: random_point(&mut r, &arena),
        delta_theta: 360.0,
    };
    let mut swarm = SwarmConfig::new(m, variant, seed);
    swarm.penalty_enabled = penalty;
    let mut planner = PlannerConfig::from_case(&case, variant);
    planner.execution = bayes_swarm::exec::Execution::Sequential;
    (run_experiment(&field, &case, &swarm, &planner, &AcquisitionConfig::default()).unwrap(), case)
}
