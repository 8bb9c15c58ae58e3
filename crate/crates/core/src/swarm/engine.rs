use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::knowledge::{deliver_and_snapshot, Broadcast, Knowledge};
use super::{
    secs, travel_ms, GridSnapshot, LogEvent, PlanStats, SimResult, SwarmConfig, Termination, TrajectoryPoint,
    MIN_LEG_MS, SAMPLE_INTERVAL_MS,
};
use crate::acquisition::AcquisitionConfig;
use crate::error::{Error, Result};
use crate::field::{CaseConfig, GaussianMixtureField};
use crate::geometry::{first_entry, Point2};
use crate::gp::{downsample_by_observer, downsample_stride, Dataset, GpHyperParams, GpModel, Observation, RobotId};
use crate::metrics::{mapping_rmse, relative_completion_time, MetricReport, TestGrid};
use crate::planner::{first_waypoint, fit_planning_model, plan_next_waypoint, PlanInput, PlannerConfig};

/// Event kinds in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    SourceFound,
    Sample,
    Arrive,
    Snapshot,
    Timeout,
}

type Event = Reverse<(u64, Kind, RobotId, u64)>;

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

struct Robot {
    id: RobotId,
    rng: ChaCha8Rng,
    from: Point2,
    to: Point2,
    leg_start: u64,
    leg_end: u64,
    k: usize,
    own: Dataset,
    leg_obs: Vec<Observation>,
    knowledge: Knowledge,
    inbox: Vec<Broadcast>,
    hyper: Option<GpHyperParams>,
    x_star: Option<Point2>,
}

impl Robot {
    fn position(&self, ms: u64) -> Point2 {
        if ms <= self.leg_start {
            self.from
        } else if ms >= self.leg_end {
            self.to
        } else {
            let u = (ms - self.leg_start) as f64 / (self.leg_end - self.leg_start) as f64;
            self.from.lerp(self.to, u)
        }
    }
}

struct Sim<'a> {
    field: &'a GaussianMixtureField,
    case: &'a CaseConfig,
    swarm: &'a SwarmConfig,
    planner: PlannerConfig,
    acq: AcquisitionConfig,
    robots: Vec<Robot>,
    queue: BinaryHeap<Event>,
    seq: u64,
    events: Vec<LogEvent>,
    trajectory: Vec<TrajectoryPoint>,
    snapshots: Vec<GridSnapshot>,
    stats: PlanStats,
    latency_ms: u64,
}

impl Sim<'_> {
    fn push(&mut self, ms: u64, kind: Kind, robot: RobotId) {
        self.seq += 1;
        self.queue.push(Reverse((ms, kind, robot, self.seq)));
    }

    fn robot(&mut self, id: RobotId) -> &mut Robot {
        &mut self.robots[id - 1]
    }

    /// Future sample locations on the current leg of `id`.
    fn planned_samples(&self, id: RobotId, now: u64) -> Vec<Point2> {
        let r = &self.robots[id - 1];
        let mut t = (now / SAMPLE_INTERVAL_MS + 1) * SAMPLE_INTERVAL_MS;
        let mut out = Vec::new();
        while t <= r.leg_end {
            out.push(self.field.arena.clamp(r.position(t)));
            t += SAMPLE_INTERVAL_MS;
        }
        out
    }

    fn depart(&mut self, id: RobotId, now: u64, target: Point2, clipped: bool) {
        let speed = self.case.speed;
        let latency = self.latency_ms;
        let source = self.field.source();
        let eps = self.case.epsilon;
        let r = self.robot(id);
        r.from = r.position(now);
        r.to = target;
        r.leg_start = now + latency;
        let len = r.from.distance(target);
        r.leg_end = r.leg_start + travel_ms(len, speed).max(MIN_LEG_MS);
        let (from, leg_start, leg_end) = (r.from, r.leg_start, r.leg_end);
        // Exact first entry into the termination disk along this leg.
        let hit = first_entry(from, target, source, eps).and_then(|u| {
            let dur = (leg_end - leg_start) as f64;
            let r = &self.robots[id - 1];
            let up = leg_start + (u * dur).ceil() as u64;
            let down = leg_start + (u * dur).floor() as u64;
            [up, down, leg_end]
                .into_iter()
                .find(|&t| t <= leg_end && r.position(t).distance(source) <= eps)
        });
        if let Some(t) = hit {
            self.push(t, Kind::SourceFound, id);
        }
        self.push(leg_end, Kind::Arrive, id);
        self.events.push(LogEvent::Depart {
            t: secs(now),
            robot: id,
            from,
            to: target,
            arrive: secs(leg_end),
            clipped,
        });
    }

    fn broadcast(&mut self, id: RobotId, now: u64) {
        let samples = self.planned_samples(id, now);
        let cap = self.swarm.broadcast_cap;
        let r = self.robot(id);
        let leg = Dataset::from_records(std::mem::take(&mut r.leg_obs));
        let obs = downsample_stride(&leg, cap).records().to_vec();
        let msg = Broadcast {
            sender: id,
            send_time: secs(now),
            planned_waypoint: r.to,
            planned_path_samples: samples,
            observations: obs,
        };
        self.events.push(LogEvent::Broadcast {
            t: secs(now),
            robot: id,
            waypoint: msg.planned_waypoint,
            path_samples: msg.planned_path_samples.len(),
            observations: msg.observations.len(),
        });
        for peer in self.robots.iter_mut().filter(|p| p.id != id) {
            peer.inbox.push(msg.clone());
        }
    }

    fn sample(&mut self, id: RobotId, now: u64) -> Result<()> {
        let field = self.field;
        let r = self.robot(id);
        let at = field.arena.clamp(r.position(now));
        let value = field.observe(at, &mut r.rng)?;
        let obs = Observation { location: at, value, time: secs(now), observer: id };
        r.own.insert(obs);
        r.knowledge.record_own(obs);
        r.leg_obs.push(obs);
        self.events.push(LogEvent::Sample { t: secs(now), robot: id, at, value });
        self.trajectory.push(TrajectoryPoint { t: secs(now), robot: id, position: at, value: Some(value) });
        self.push(now + SAMPLE_INTERVAL_MS, Kind::Sample, id);
        Ok(())
    }

    fn arrive(&mut self, id: RobotId, now: u64) -> Result<()> {
        let r = self.robot(id);
        r.k += 1;
        let (k, at) = (r.k, r.to);
        let inbox = std::mem::take(&mut r.inbox);
        let added = deliver_and_snapshot(&mut r.knowledge, &inbox);
        let size = r.knowledge.data.len();
        let latest_peer_observation = r
            .knowledge
            .data
            .iter()
            .filter(|o| o.observer != id)
            .map(|o| o.time)
            .reduce(f64::max);
        self.events.push(LogEvent::Arrive { t: secs(now), robot: id, k, at });
        self.trajectory.push(TrajectoryPoint { t: secs(now), robot: id, position: at, value: None });
        self.events.push(LogEvent::Deliver {
            t: secs(now),
            robot: id,
            broadcasts: inbox.len(),
            new_observations: added,
            knowledge: size,
            latest_peer_observation,
        });

        let clock = Instant::now();
        let r = &self.robots[id - 1];
        let gp = fit_planning_model(&r.knowledge.data, r.hyper, &self.planner)?;
        let peers = r.knowledge.peer_plans();
        let input = PlanInput {
            robot: id,
            k_r: k,
            current_pos: at,
            gp: &gp,
            best_observed: r.knowledge.data.best().map(|o| o.location),
            previous_x_star: r.x_star,
            peers: &peers,
            t_now: secs(now),
            t_max: self.case.t_max,
            arena: &self.field.arena,
            seed: mix(mix(self.swarm.seed, 0x706c_616e ^ id as u64), k as u64),
        };
        let out = plan_next_waypoint(&input, &self.planner, &self.acq)?;
        self.stats.wall_seconds += clock.elapsed().as_secs_f64();
        self.stats.plans += 1;
        self.stats.fallbacks += out.fallback as usize;
        self.stats.clipped += out.clipped as usize;
        self.stats.evaluations += out.evaluations;
        if out.clipped {
            log::debug!("robot {id} leg {k}: step clipped by the arena");
        }
        self.events.push(LogEvent::Plan {
            t: secs(now),
            robot: id,
            k,
            waypoint: out.waypoint,
            alpha: out.alpha,
            value: out.value,
            omega: out.omega,
            sigma: out.sigma,
            gamma: out.gamma,
            x_star: out.x_star.location,
            fallback: out.fallback,
            clipped: out.clipped,
            hyper: *gp.hyper(),
            training: gp.len(),
        });
        let r = self.robot(id);
        r.hyper = Some(*gp.hyper());
        r.x_star = Some(out.x_star.location);
        self.depart(id, now, out.waypoint, out.clipped);
        self.broadcast(id, now);
        Ok(())
    }

    fn snapshot(&mut self, now: u64) -> Result<()> {
        let pts = self.field.arena.grid(self.swarm.snapshot_grid);
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            let data = downsample_stride(&r.knowledge.data, self.planner.n_max);
            let gp = GpModel::condition(data, r.hyper.unwrap_or_default())?;
            let snap = GridSnapshot {
                t: secs(now),
                robot: Some(r.id),
                side: self.swarm.snapshot_grid,
                mean: pts.iter().map(|&p| gp.posterior_mean(p)).collect(),
                std: gp.posterior_std_batch(&pts),
            };
            self.snapshots.push(snap);
            self.events.push(LogEvent::Snapshot { t: secs(now), robot: r.id });
        }
        Ok(())
    }
}

fn validate(field: &GaussianMixtureField, case: &CaseConfig, swarm: &SwarmConfig) -> Result<()> {
    case.validate(&field.arena)?;
    if swarm.m < 1 {
        return Err(Error::config("m", "swarm needs at least one robot"));
    }
    if swarm.broadcast_cap < 1 {
        return Err(Error::config("broadcast_cap", "must be at least 1"));
    }
    if !(swarm.planning_latency >= 0.0 && swarm.planning_latency.is_finite()) {
        return Err(Error::config("planning_latency", "must be non-negative"));
    }
    if swarm.snapshot_grid < 1 {
        return Err(Error::config("snapshot_grid", "must be at least 1"));
    }
    if swarm.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::config("snapshot_times", "must be non-negative"));
    }
    Ok(())
}

/// Runs one mission to termination.
///
/// Speed, horizon, signal bound and Lipschitz constant come from `case`; the
/// variant and penalty switch come from `swarm`.
pub fn run_experiment(
    field: &GaussianMixtureField,
    case: &CaseConfig,
    swarm: &SwarmConfig,
    planner: &PlannerConfig,
    acq: &AcquisitionConfig,
) -> Result<SimResult> {
    validate(field, case, swarm)?;
    let mut planner = planner.clone();
    planner.speed = case.speed;
    planner.horizon = case.horizon;
    planner.max_signal = case.max_signal;
    planner.lipschitz = case.lipschitz;
    planner.variant = swarm.variant;
    planner.validate()?;
    let mut acq = acq.clone();
    acq.penalty_enabled = swarm.penalty_enabled;
    acq.validate()?;

    let robots = (1..=swarm.m)
        .map(|id| Robot {
            id,
            rng: ChaCha8Rng::seed_from_u64(mix(swarm.seed, id as u64)),
            from: case.start,
            to: case.start,
            leg_start: 0,
            leg_end: 0,
            k: 0,
            own: Dataset::new(),
            leg_obs: Vec::new(),
            knowledge: Knowledge::new(),
            inbox: Vec::new(),
            hyper: None,
            x_star: None,
        })
        .collect();
    let mut sim = Sim {
        field,
        case,
        swarm,
        planner,
        acq,
        robots,
        queue: BinaryHeap::new(),
        seq: 0,
        events: Vec::new(),
        trajectory: Vec::new(),
        snapshots: Vec::new(),
        stats: PlanStats::default(),
        latency_ms: (swarm.planning_latency * 1000.0).round() as u64,
    };
    let t_max = (case.t_max * 1000.0).round() as u64;

    if case.start.distance(field.source()) <= case.epsilon {
        sim.push(0, Kind::SourceFound, 1);
    }
    // First legs fan out from the shared start without planning.
    for id in 1..=swarm.m {
        let raw = case.start + first_waypoint(id, swarm.m, &sim.planner)?;
        let target = field.arena.clamp(raw);
        sim.depart(id, 0, target, target != raw);
        sim.push(0, Kind::Sample, id);
    }
    for id in 1..=swarm.m {
        sim.broadcast(id, 0);
    }
    for &t in &swarm.snapshot_times {
        let ms = (t * 1000.0).round() as u64;
        if ms <= t_max {
            sim.push(ms, Kind::Snapshot, 0);
        }
    }
    sim.push(t_max, Kind::Timeout, 0);

    let (termination, t_end, finder) = loop {
        let Reverse((now, kind, id, _)) = sim.queue.pop().expect("timeout event always pending");
        match kind {
            Kind::SourceFound => {
                let at = sim.robots[id - 1].position(now);
                let distance = at.distance(field.source());
                sim.events.push(LogEvent::SourceFound { t: secs(now), robot: id, at, distance });
                sim.trajectory.push(TrajectoryPoint { t: secs(now), robot: id, position: at, value: None });
                break (Termination::SourceFound, now, Some(id));
            }
            Kind::Sample => sim.sample(id, now)?,
            Kind::Arrive => sim.arrive(id, now)?,
            Kind::Snapshot => sim.snapshot(now)?,
            Kind::Timeout => {
                sim.events.push(LogEvent::Timeout { t: secs(now) });
                break (Termination::Timeout, now, None);
            }
        }
    };

    let mut all = Dataset::new();
    for r in &sim.robots {
        all.merge(r.own.records());
    }
    let t_achieved = secs(t_end);
    let (rmse, final_snapshot) = if all.is_empty() {
        (None, None)
    } else {
        let gp = GpModel::fit(downsample_by_observer(&all, sim.planner.n_max), GpHyperParams::default(), &sim.planner.fit)?;
        let snap = swarm.final_snapshot.then(|| {
            let pts = field.arena.grid(swarm.snapshot_grid);
            GridSnapshot {
                t: t_achieved,
                robot: None,
                side: swarm.snapshot_grid,
                mean: pts.iter().map(|&p| gp.posterior_mean(p)).collect(),
                std: gp.posterior_std_batch(&pts),
            }
        });
        (Some(mapping_rmse(&gp, field, &field.arena)), snap)
    };
    let robot_rmse = if swarm.per_robot_rmse {
        sim.robots
            .iter()
            .map(|r| {
                let gp = fit_planning_model(&r.knowledge.data, r.hyper, &sim.planner)?;
                Ok(mapping_rmse(&gp, field, &field.arena))
            })
            .collect::<Result<Vec<f64>>>()?
    } else {
        Vec::new()
    };
    let metrics = MetricReport {
        tau: relative_completion_time(t_achieved, case.t_idealized)?,
        rmse,
        robot_rmse,
        t_achieved,
        t_idealized: case.t_idealized,
        test_grid: TestGrid::standard(field.arena),
    };
    Ok(SimResult {
        termination,
        t_achieved,
        finder,
        metrics,
        events: sim.events,
        trajectory: sim.trajectory,
        dataset: all,
        snapshots: sim.snapshots,
        final_snapshot,
        plan_stats: sim.stats,
    })
}
