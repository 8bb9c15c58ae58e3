//! Invariant checks run by the property suite and the acceptance harness.

use std::collections::BTreeMap;

use bayes_swarm::acquisition::local_penalty;
use bayes_swarm::gp::{GpModel, Observation};
use bayes_swarm::planner::Variant;
use bayes_swarm::swarm::LogEvent;
use bayes_swarm::{Arena, Point2};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::{random_dataset, random_hyper, random_point, rng, tiny_mission};

pub type Check = Result<(), TestCaseError>;

pub fn gp_case() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 0usize..12)
}

/// Adding a record never raises the posterior std at 50 probes.
pub fn gp_variance_monotone((seed, n): (u64, usize)) -> Check {
    let arena = Arena::square(3.0).unwrap();
    let mut r = rng(seed);
    let data = random_dataset(&mut r, n, &arena);
    let hyper = random_hyper(&mut r);
    let before = GpModel::condition(data.clone(), hyper).unwrap();
    let mut more = data;
    more.insert(Observation { location: random_point(&mut r, &arena), value: 0.3, time: 1e3, observer: 9 });
    let after = GpModel::condition(more, hyper).unwrap();
    for _ in 0..50 {
        let q = random_point(&mut r, &arena);
        let (s0, s1) = (before.posterior_std(q), after.posterior_std(q));
        prop_assert!(s1 <= s0 + 1e-9, "std rose from {s0} to {s1} at {q:?}");
        prop_assert!((0.0..=hyper.signal_std + 1e-9).contains(&s1));
    }
    Ok(())
}

pub fn penalty_case() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64)> {
    (0.0..5.0f64, 0.0..5.0f64, -1.0..1.0f64, 1e-3..1.0f64, 0.5..2.0f64, 0.5..30.0f64)
}

/// The local penalty is a probability that grows with distance.
pub fn gamma_monotone((d1, d2, mu, sigma, m, l): (f64, f64, f64, f64, f64, f64)) -> Check {
    let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
    let wp = Point2::new(0.0, 0.0);
    let g_near = local_penalty(Point2::new(near, 0.0), wp, mu, sigma, m, l);
    let g_far = local_penalty(Point2::new(far, 0.0), wp, mu, sigma, m, l);
    prop_assert!(g_near <= g_far, "{g_near} at {near} > {g_far} at {far}");
    prop_assert!((0.0..=1.0).contains(&g_near) && (0.0..=1.0).contains(&g_far));
    Ok(())
}

pub fn mission_case() -> impl Strategy<Value = (u64, usize, Variant, bool)> {
    (
        any::<u64>(),
        1usize..=4,
        prop_oneof![Just(Variant::Full), Just(Variant::Sync), Just(Variant::Explorative)],
        any::<bool>(),
    )
}

/// Consecutive poses of a robot are never further apart than speed allows.
pub fn speed_bound((seed, m, variant, penalty): (u64, usize, Variant, bool)) -> Check {
    let (res, case) = tiny_mission(seed, m, variant, penalty);
    let mut last: BTreeMap<usize, (f64, Point2)> = BTreeMap::new();
    for p in &res.trajectory {
        if let Some(&(t0, x0)) = last.get(&p.robot) {
            let dt = p.t - t0;
            prop_assert!(dt >= 0.0, "time went backwards for robot {}", p.robot);
            prop_assert!(p.position.distance(x0) <= case.speed * dt + 1e-9, "robot {} too fast at t={}", p.robot, p.t);
        }
        last.insert(p.robot, (p.t, p.position));
    }
    Ok(())
}

/// A robot's knowledge only grows from one delivery to the next.
pub fn knowledge_monotone((seed, m, variant, penalty): (u64, usize, Variant, bool)) -> Check {
    let (res, _) = tiny_mission(seed, m, variant, penalty);
    let mut size: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &res.events {
        if let LogEvent::Deliver { robot, knowledge, .. } = e {
            let prev = size.insert(*robot, *knowledge).unwrap_or(0);
            prop_assert!(*knowledge >= prev, "robot {robot} knowledge shrank from {prev} to {knowledge}");
        }
    }
    Ok(())
}

/// No robot holds a peer observation newer than the latest broadcast it
/// could have heard.
pub fn no_clairvoyance((seed, m, variant, penalty): (u64, usize, Variant, bool)) -> Check {
    let (res, _) = tiny_mission(seed, m, variant, penalty);
    let mut sent: BTreeMap<usize, f64> = BTreeMap::new();
    for e in &res.events {
        match e {
            LogEvent::Broadcast { t, robot, .. } => {
                sent.insert(*robot, *t);
            }
            LogEvent::Deliver { t, robot, latest_peer_observation: Some(latest), .. } => {
                let heard = sent.iter().filter(|(r, _)| *r != robot).map(|(_, &s)| s).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*latest <= heard && heard <= *t, "robot {robot} at t={t} holds data from {latest}, last broadcast {heard}");
            }
            _ => {}
        }
    }
    Ok(())
}
