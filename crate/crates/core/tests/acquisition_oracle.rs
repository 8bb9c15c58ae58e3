mod common;

use bayes_swarm::acquisition::*;
use bayes_swarm::field::{Component, GaussianMixtureField};
use bayes_swarm::gp::{Dataset, FitOptions, GpHyperParams, GpModel, Observation};
use bayes_swarm::{Arena, Point2};
use common::*;
use rand::Rng;
use statrs::function::erf::erfc;

fn small_gp(seed: u64, n: usize) -> GpModel {
    let mut r = rng(seed);
    let data = random_dataset(&mut r, n, &Arena::square(3.0).unwrap());
    GpModel::condition(data, GpHyperParams { length_scale: 0.6, signal_std: 1.0, noise_std: 0.05 }).unwrap()
}

#[test]
fn alpha_schedule_values() {
    assert_eq!(alpha_schedule(100.0 / 3.0, 100.0), 0.5);
    assert_eq!(alpha_schedule(1000.0 / 3.0, 1000.0), 0.5);
    assert!((alpha_schedule(70.0, 100.0) - 0.9751).abs() < 1e-4);
    assert!((alpha_schedule(0.0, 100.0) - 0.03444).abs() < 1e-4);
}

#[test]
fn local_penalty_matches_reference_erfc() {
    let p = Point2::new(1.0, 1.0);
    assert_eq!(local_penalty(p, p, 1.0, 0.3, 1.0, 5.0), 0.5);
    // L d - M + mu = sqrt(2) sigma gives erfc(-1) / 2.
    let sigma = 0.2;
    let d = (2f64.sqrt() * sigma + 1.0 - 0.4) / 5.0;
    let g = local_penalty(Point2::new(1.0 + d, 1.0), p, 0.4, sigma, 1.0, 5.0);
    assert!((g - 0.5 * erfc(-1.0)).abs() < 1e-10);
    assert!((g - 0.92135).abs() < 1e-4);
    assert!((local_penalty(Point2::new(1e6, 0.0), p, 0.0, 0.1, 1.0, 5.0) - 1.0).abs() < 1e-15);

    let mut r = rng(3);
    for _ in 0..200 {
        let x = Point2::new(r.random_range(0.0..3.0), r.random_range(0.0..3.0));
        let (mu, s, m, l): (f64, f64, f64, f64) = (r.random_range(-1.0..1.0), r.random_range(0.01..1.0), 1.0, r.random_range(1.0..20.0));
        let z = (l * x.distance(p) - m + mu) / (2.0 * s * s).sqrt();
        assert!((local_penalty(x, p, mu, s, m, l) - 0.5 * erfc(-z)).abs() < 1e-10);
    }
}

#[test]
fn effective_penalty_is_product_of_factors() {
    let gp = small_gp(1, 4);
    let here = Point2::new(1.0, 1.0);
    let peers = vec![peer(2, Point2::new(1.3, 1.2), Point2::new(0.5, 0.5)), peer(3, Point2::new(0.7, 1.5), Point2::new(2.0, 2.0))];
    let ctx = AcquisitionContext::new(&gp, here, peers.clone(), params(0.5, here), AcquisitionConfig::default()).unwrap();
    let x = Point2::new(1.2, 1.4);
    let floor = 1e-6 * gp.hyper().signal_std;
    let expected: f64 = peers
        .iter()
        .map(|p| {
            let (mu, s) = (gp.posterior_mean(p.waypoint), gp.posterior_std(p.waypoint).max(floor));
            let z = (5.0 * x.distance(p.waypoint) - 1.0 + mu) / (2.0 * s * s).sqrt();
            0.5 * erfc(-z)
        })
        .product();
    assert!(rel_err(effective_penalty(&ctx, x), expected) < 1e-10);

    let lonely = AcquisitionContext::new(&gp, here, vec![], params(0.5, here), AcquisitionConfig::default()).unwrap();
    assert_eq!(effective_penalty(&lonely, x), 1.0);
}

#[test]
fn sigma_matches_dense_quadrature() {
    let gp = three_point_gp();
    let (ctx, path) = fixed_sigma_case(&gp);
    let reference = dense_sigma(&ctx, &path, 10_001);
    assert!(rel_err(explore_term(&ctx, &path), reference) < 1e-3);
}

#[test]
fn sigma_is_an_eleven_node_trapezoid() {
    for seed in 0..50 {
        let mut r = rng(seed + 50);
        let gp = small_gp(seed, 3);
        let here = Point2::new(r.random_range(0.5..2.5), r.random_range(0.5..2.5));
        let peers = vec![peer(2, Point2::new(r.random_range(0.0..3.0), r.random_range(0.0..3.0)), here)];
        let ctx = AcquisitionContext::new(&gp, here, peers, params(0.5, here), AcquisitionConfig::default()).unwrap();
        let end = here + Point2::from_polar(r.random_range(0.0..0.8), r.random_range(0.0..6.28));
        let path = CandidatePath::new(here, end, 0.8).unwrap();
        assert!(rel_err(explore_term(&ctx, &path), dense_sigma(&ctx, &path, 11)) < 1e-12, "seed {seed}");
    }
}

#[test]
fn finer_quadrature_converges_on_random_paths() {
    // Peer paths through the candidate segment put sharp dips in the
    // integrand; the default node count can miss them, more nodes cannot.
    let cfg = AcquisitionConfig { quadrature_nodes: 101, ..AcquisitionConfig::default() };
    for seed in 0..200 {
        let mut r = rng(seed + 50);
        let gp = small_gp(seed, 3);
        let here = Point2::new(r.random_range(0.5..2.5), r.random_range(0.5..2.5));
        let peers = vec![peer(2, Point2::new(r.random_range(0.0..3.0), r.random_range(0.0..3.0)), here)];
        let ctx = AcquisitionContext::new(&gp, here, peers, params(0.5, here), cfg.clone()).unwrap();
        let end = here + Point2::from_polar(r.random_range(0.0..0.8), r.random_range(0.0..6.28));
        let path = CandidatePath::new(here, end, 0.8).unwrap();
        assert!(rel_err(explore_term(&ctx, &path), dense_sigma(&ctx, &path, 10_001)) < 1e-3, "seed {seed}");
    }
}

#[test]
fn sigma_degenerate_paths() {
    let gp = small_gp(4, 3);
    let here = Point2::new(1.5, 1.5);
    let ctx = AcquisitionContext::new(&gp, here, vec![], params(0.5, here), AcquisitionConfig::default()).unwrap();
    let point = CandidatePath::new(here, here, 0.8).unwrap();
    assert!((explore_term(&ctx, &point) - ctx.augmented().std(here)).abs() < 1e-12);

    let prior = GpModel::prior(GpHyperParams { length_scale: 1.0, signal_std: 1.7, noise_std: 0.1 }).unwrap();
    let ctx = AcquisitionContext::new(&prior, here, vec![], params(0.5, here), AcquisitionConfig::default()).unwrap();
    let path = CandidatePath::new(here, Point2::new(2.0, 1.9), 0.8).unwrap();
    assert!((explore_term(&ctx, &path) - 1.7).abs() < 1e-12);
}

#[test]
fn sigma_is_symmetric_under_reversal() {
    let gp = small_gp(9, 5);
    let (a, b) = (Point2::new(1.0, 1.0), Point2::new(1.5, 1.3));
    let peers = vec![peer(2, Point2::new(2.0, 2.0), Point2::new(1.0, 2.0))];
    let ctx_a = AcquisitionContext::new(&gp, a, peers.clone(), params(0.5, a), AcquisitionConfig::default()).unwrap();
    let fwd = explore_term(&ctx_a, &CandidatePath::new(a, b, 0.8).unwrap());
    let rev = explore_term(&ctx_a, &CandidatePath::new(b, a, 0.8).unwrap());
    assert!((fwd - rev).abs() < 1e-12);
}

#[test]
fn composition_matches_hand_combined_terms() {
    let gp = small_gp(12, 3);
    let here = Point2::new(1.2, 0.9);
    let x_star = Point2::new(2.5, 2.5);
    let peers = vec![peer(2, Point2::new(1.5, 1.1), Point2::new(2.0, 0.5))];
    let cfg = AcquisitionConfig::default();
    let ctx = AcquisitionContext::new(&gp, here, peers, params(0.5, x_star), cfg.clone()).unwrap();
    let x = Point2::new(1.6, 1.3);
    let omega = 1.0 / (1.0 + x.distance_sq(x_star));
    let sigma = explore_term(&ctx, &CandidatePath::new(here, x, 0.8).unwrap());
    let gamma = effective_penalty(&ctx, x);
    let expected = (0.5 * omega + 0.5 * 50.0 * sigma) * gamma;
    assert!(rel_err(acquisition_value(&ctx, x).unwrap(), expected) < 1e-10);

    let exploit = AcquisitionContext::new(&gp, here, ctx.peers().to_vec(), params(1.0, x_star), cfg.clone()).unwrap();
    assert_eq!(acquisition_value(&exploit, x).unwrap(), omega * effective_penalty(&exploit, x));

    let explore = AcquisitionContext::new(&gp, here, vec![], params(0.0, x_star), cfg).unwrap();
    let s = explore_term(&explore, &CandidatePath::new(here, x, 0.8).unwrap());
    assert!(rel_err(acquisition_value(&explore, x).unwrap(), 50.0 * s) < 1e-12);
}

#[test]
fn x_star_beats_dense_grid_scan() {
    let arena = Arena::square(3.0).unwrap();
    let field = GaussianMixtureField::new(
        arena,
        0.0,
        vec![
            Component { center: Point2::new(2.1, 2.2), amplitude: 1.0, spread: 0.5 },
            Component { center: Point2::new(0.7, 0.8), amplitude: 0.6, spread: 0.4 },
        ],
    )
    .unwrap();
    let mut r = rng(21);
    let obs: Vec<Observation> = (0..50)
        .map(|i| {
            let p = random_point(&mut r, &arena);
            Observation { location: p, value: field.signal(p), time: i as f64, observer: 1 }
        })
        .collect();
    let gp = GpModel::fit(Dataset::from_records(obs), GpHyperParams::default(), &FitOptions::default()).unwrap();
    let hint = gp.training().best().unwrap().location;
    let xs = find_x_star(&gp, &arena, hint, None, 5, &XStarOptions::default());
    let grid_best = arena.lattice(200).into_iter().map(|p| gp.posterior_mean(p)).fold(f64::NEG_INFINITY, f64::max);
    assert!(gp.posterior_mean(xs.location) >= grid_best - 1e-6);
    assert!(arena.contains(xs.location));
}

