//! The waypoint acquisition function.
//!
//! For a candidate endpoint `x` reachable from the current position, the
//! value is `(α Ω(x) + (1 - α) β Σ(x)) Γ(x)` where
//!
//! - `Ω(x) = 1 / (1 + |x - x*|²)` pulls toward the maximizer `x*` of the
//!   posterior mean,
//! - `Σ(x)` is the posterior standard deviation averaged along the straight
//!   path from the current position to `x`, with the variance also
//!   conditioned on the peers' planned sample locations,
//! - `Γ(x)` is the product of local penalties around the peers' planned
//!   waypoints, each the probability that `x` lies outside a Lipschitz
//!   exclusion ball of Gaussian-distributed radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arena, Point2};
use crate::gp::{AugmentedGp, GpModel, RobotId};
use crate::optim::{maximize, Bounds, Objective, QuasiNewtonOptions};

/// Time-adaptive exploitation weight: a logistic curve centered at a third of
/// the mission.
pub fn alpha_schedule(t: f64, t_max: f64) -> f64 {
    1.0 / (1.0 + (-10.0 * (t - t_max / 3.0) / t_max).exp())
}

/// Exploitative term: inverse-quadratic attraction to `x_star`.
pub fn exploit_term(x: Point2, x_star: Point2) -> f64 {
    1.0 / (1.0 + x.distance_sq(x_star))
}

/// Probability that `x` lies outside the exclusion ball around a peer's
/// planned waypoint.
pub fn local_penalty(x: Point2, peer_wp: Point2, mu_p: f64, sigma_p: f64, max_signal: f64, lipschitz: f64) -> f64 {
    let z = (lipschitz * x.distance(peer_wp) - max_signal + mu_p) / (2.0 * sigma_p * sigma_p).sqrt();
    0.5 * libm::erfc(-z)
}

/// What a robot knows about one peer's current plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeerPlan {
    pub robot: RobotId,
    pub waypoint: Point2,
    /// Locations the peer will sample on its way to `waypoint`.
    pub path_points: Vec<Point2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Scale of the explorative term relative to the exploitative one.
    pub beta: f64,
    /// Trapezoid nodes along the candidate path (including both ends).
    pub quadrature_nodes: usize,
    /// Multiply the path-averaged uncertainty by the path length.
    pub arc_length: bool,
    pub penalty_enabled: bool,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 50.0,
            quadrature_nodes: 11,
            arc_length: false,
            penalty_enabled: true,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config("beta", "must be positive"));
        }
        if self.quadrature_nodes < 2 {
            return Err(Error::config("quadrature_nodes", "at least two nodes are required"));
        }
        Ok(())
    }
}

/// Per-decision scalars of the acquisition function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcquisitionParams {
    pub alpha: f64,
    pub max_signal: f64,
    pub lipschitz: f64,
    pub step_bound: f64,
    pub x_star: Point2,
}

/// Straight segment from the current position to a candidate waypoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidatePath {
    pub start: Point2,
    pub end: Point2,
}

impl CandidatePath {
    pub fn new(start: Point2, end: Point2, step_bound: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) {
            return Err(Error::Domain("path endpoints must be finite".into()));
        }
        let len = start.distance(end);
        if len > step_bound * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Domain(format!(
                "candidate step {len} exceeds the motion bound {step_bound}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn point(&self, u: f64) -> Point2 {
        self.start.lerp(self.end, u)
    }
}

/// Everything needed to evaluate the acquisition function for one decision.
pub struct AcquisitionContext<'a> {
    gp: &'a GpModel,
    augmented: AugmentedGp<'a>,
    current_pos: Point2,
    peers: Vec<PeerPlan>,
    /// Posterior mean and (floored) std at each peer waypoint.
    peer_stats: Vec<(f64, f64)>,
    params: AcquisitionParams,
    config: AcquisitionConfig,
    sigma_start: f64,
}

impl<'a> AcquisitionContext<'a> {
    pub fn new(
        gp: &'a GpModel,
        current_pos: Point2,
        peers: Vec<PeerPlan>,
        params: AcquisitionParams,
        config: AcquisitionConfig,
    ) -> Result<Self> {
        config.validate()?;
        if !(0.0..=1.0).contains(&params.alpha) {
            return Err(Error::Domain(format!("alpha {} outside [0, 1]", params.alpha)));
        }
        if !(params.lipschitz > 0.0 && params.step_bound > 0.0) {
            return Err(Error::Domain("lipschitz and step_bound must be positive".into()));
        }
        if !(current_pos.is_finite() && params.x_star.is_finite()) {
            return Err(Error::Domain("positions must be finite".into()));
        }
        let virtual_points: Vec<Point2> = peers.iter().flat_map(|p| p.path_points.iter().copied()).collect();
        let augmented = gp.augmented(&virtual_points)?;
        let floor = 1e-6 * gp.hyper().signal_std;
        let peer_stats = peers
            .iter()
            .map(|p| (gp.posterior_mean(p.waypoint), gp.posterior_std(p.waypoint).max(floor)))
            .collect();
        let sigma_start = augmented.std(current_pos);
        Ok(Self {
            gp,
            augmented,
            current_pos,
            peers,
            peer_stats,
            params,
            config,
            sigma_start,
        })
    }

    pub fn gp(&self) -> &GpModel {
        self.gp
    }

    pub fn current_pos(&self) -> Point2 {
        self.current_pos
    }

    pub fn peers(&self) -> &[PeerPlan] {
        &self.peers
    }

    pub fn params(&self) -> &AcquisitionParams {
        &self.params
    }

    pub fn config(&self) -> &AcquisitionConfig {
        &self.config
    }

    pub fn augmented(&self) -> &AugmentedGp<'a> {
        &self.augmented
    }

    /// Posterior mean and floored std used for the penalty at peer `i`.
    pub fn peer_stats(&self) -> &[(f64, f64)] {
        &self.peer_stats
    }

    fn path(&self, x: Point2) -> Result<CandidatePath> {
        CandidatePath::new(self.current_pos, x, self.params.step_bound)
    }

    fn nodes(&self) -> usize {
        self.config.quadrature_nodes
    }

    /// Trapezoid rule over `values` sampled at equally spaced `u`.
    fn trapezoid(&self, values: &[f64], length: f64) -> f64 {
        let n = values.len();
        let h = 1.0 / (n - 1) as f64;
        let interior: f64 = values[1..n - 1].iter().sum();
        let integral = h * (0.5 * (values[0] + values[n - 1]) + interior);
        if self.config.arc_length {
            integral * length
        } else {
            integral
        }
    }
}

/// Explorative term `Σ` for `path`.
pub fn explore_term(ctx: &AcquisitionContext<'_>, path: &CandidatePath) -> f64 {
    let n = ctx.nodes();
    let us = (0..n).map(|i| i as f64 / (n - 1) as f64);
    let values = if path.start == ctx.current_pos {
        let mut v = Vec::with_capacity(n);
        v.push(ctx.sigma_start);
        let nodes: Vec<Point2> = us.skip(1).map(|u| path.point(u)).collect();
        v.extend(ctx.augmented.std_batch(&nodes));
        v
    } else {
        let nodes: Vec<Point2> = us.map(|u| path.point(u)).collect();
        ctx.augmented.std_batch(&nodes)
    };
    ctx.trapezoid(&values, path.length())
}

/// Effective penalty `Γ(x)`: product of local penalties over all peers.
pub fn effective_penalty(ctx: &AcquisitionContext<'_>, x: Point2) -> f64 {
    if !ctx.config.penalty_enabled {
        return 1.0;
    }
    ctx.peers
        .iter()
        .zip(&ctx.peer_stats)
        .map(|(p, &(mu, sigma))| local_penalty(x, p.waypoint, mu, sigma, ctx.params.max_signal, ctx.params.lipschitz))
        .product()
}

/// Individual terms of one acquisition evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AcquisitionBreakdown {
    pub omega: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub value: f64,
}

fn compose(alpha: f64, beta: f64, omega: f64, sigma: f64, gamma: f64) -> f64 {
    (alpha * omega + (1.0 - alpha) * beta * sigma) * gamma
}

pub fn acquisition_breakdown(ctx: &AcquisitionContext<'_>, x: Point2) -> Result<AcquisitionBreakdown> {
    let path = ctx.path(x)?;
    let omega = exploit_term(x, ctx.params.x_star);
    let sigma = explore_term(ctx, &path);
    let gamma = effective_penalty(ctx, x);
    Ok(AcquisitionBreakdown {
        omega,
        sigma,
        gamma,
        value: compose(ctx.params.alpha, ctx.config.beta, omega, sigma, gamma),
    })
}

/// Acquisition value at `x`. Errors when `x` violates the motion bound.
pub fn acquisition_value(ctx: &AcquisitionContext<'_>, x: Point2) -> Result<f64> {
    Ok(acquisition_breakdown(ctx, x)?.value)
}

/// Acquisition values at several endpoints, sharing one pass over the
/// variance factor.
pub fn acquisition_values(ctx: &AcquisitionContext<'_>, xs: &[Point2]) -> Result<Vec<f64>> {
    let n = ctx.nodes();
    let alpha = ctx.params.alpha;
    let paths = xs.iter().map(|&x| ctx.path(x)).collect::<Result<Vec<_>>>()?;
    // The explorative term vanishes at alpha = 1.
    let sigmas = if alpha < 1.0 {
        let nodes: Vec<Point2> = paths
            .iter()
            .flat_map(|p| (1..n).map(move |i| p.point(i as f64 / (n - 1) as f64)))
            .collect();
        let stds = ctx.augmented.std_batch(&nodes);
        stds.chunks(n - 1)
            .zip(&paths)
            .map(|(chunk, p)| {
                let mut v = Vec::with_capacity(n);
                v.push(ctx.sigma_start);
                v.extend_from_slice(chunk);
                ctx.trapezoid(&v, p.length())
            })
            .collect()
    } else {
        vec![0.0; xs.len()]
    };
    Ok(xs
        .iter()
        .zip(sigmas)
        .map(|(&x, sigma)| {
            let omega = exploit_term(x, ctx.params.x_star);
            compose(alpha, ctx.config.beta, omega, sigma, effective_penalty(ctx, x))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XStarOptions {
    pub random_starts: usize,
    pub max_iter: usize,
    /// Step tolerance (m).
    pub step_tol: f64,
    /// Side of the coarse lattice whose best node seeds one more local search;
    /// 0 disables it.
    pub coarse_grid: usize,
}

impl Default for XStarOptions {
    fn default() -> Self {
        Self {
            random_starts: 3,
            max_iter: 200,
            step_tol: 1e-4,
            coarse_grid: 25,
        }
    }
}

/// Result of the posterior-mean maximization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XStar {
    pub location: Point2,
    pub mean: f64,
    /// False when no local search reported convergence.
    pub converged: bool,
}

struct MeanObjective<'a> {
    gp: &'a GpModel,
}

impl Objective for MeanObjective<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.gp.posterior_mean(Point2::new(x[0], x[1]))
    }
}

/// Maximizes the posterior mean over the arena from several starts: the hint
/// (best observed location), the previous maximizer, seeded random points and
/// the best node of a coarse lattice.
pub fn find_x_star(
    gp: &GpModel,
    arena: &Arena,
    init_hint: Point2,
    previous: Option<Point2>,
    seed: u64,
    opts: &XStarOptions,
) -> XStar {
    let hint = arena.clamp(init_hint);
    if gp.is_empty() {
        return XStar {
            location: hint,
            mean: 0.0,
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![hint];
    if let Some(p) = previous {
        starts.push(arena.clamp(p));
    }
    for _ in 0..opts.random_starts {
        starts.push(Point2::new(
            rng.random_range(arena.min.x..=arena.max.x),
            rng.random_range(arena.min.y..=arena.max.y),
        ));
    }
    if opts.coarse_grid > 0 {
        let best = arena
            .lattice(opts.coarse_grid)
            .into_iter()
            .map(|p| (p, gp.posterior_mean(p)))
            .fold(None, |acc: Option<(Point2, f64)>, (p, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((p, v)),
            });
        if let Some((p, _)) = best {
            starts.push(p);
        }
    }
    let start_means: Vec<f64> = starts.iter().map(|&p| gp.posterior_mean(p)).collect();
    let (lo, hi) = start_means
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo < 1e-12 {
        return XStar {
            location: hint,
            mean: start_means[0],
            converged: true,
        };
    }

    let obj = MeanObjective { gp };
    let bounds = Bounds::new(vec![arena.min.x, arena.min.y], vec![arena.max.x, arena.max.y]);
    let h = 1e-6 * arena.diagonal();
    let qn = QuasiNewtonOptions {
        max_iter: opts.max_iter,
        step_tol: opts.step_tol,
        rel_tol: 0.0,
        fd_step: vec![h, h],
        initial_step: 0.02 * arena.diagonal(),
        central: true,
    };
    let mut best = XStar {
        location: hint,
        mean: start_means[0],
        converged: false,
    };
    let mut any_converged = false;
    for s in &starts {
        let r = maximize(&obj, &[s.x, s.y], &bounds, &qn);
        any_converged |= r.converged;
        if r.value > best.mean {
            best.location = Point2::new(r.x[0], r.x[1]);
            best.mean = r.value;
        }
    }
    best.converged = any_converged;
    if !any_converged {
        log::warn!("x* search did not converge from any start");
    }
    best
}
