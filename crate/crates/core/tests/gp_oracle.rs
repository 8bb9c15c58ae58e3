mod common;

use bayes_swarm::gp::{log_likelihood, log_likelihood_with_gradient, Dataset, FitOptions, GpHyperParams, GpModel, Observation};
use bayes_swarm::{Arena, Point2};
use common::*;

const TOL: f64 = 1e-8;

#[test]
fn posterior_matches_naive_inverse_on_random_datasets() {
    let arena = Arena::square(3.0).unwrap();
    for seed in 0..60 {
        let mut r = rng(seed);
        let n = 1 + (seed as usize % 6);
        let data = random_dataset(&mut r, n, &arena);
        let hyper = random_hyper(&mut r);
        let model = GpModel::condition(data.clone(), hyper).unwrap();
        let naive = NaiveGp::new(hyper, &data);
        assert!(rel_err(model.log_likelihood(), naive.log_likelihood()) < TOL, "seed {seed}: log-likelihood");
        for _ in 0..20 {
            let q = random_point(&mut r, &arena);
            assert!(
                scaled_err(model.posterior_mean(q), naive.mean(q), 1e-3) < TOL,
                "seed {seed}: mean at {q:?}: {} vs {}",
                model.posterior_mean(q),
                naive.mean(q)
            );
            assert!(rel_err(model.posterior_std(q), naive.std(q)) < TOL, "seed {seed}: std at {q:?}");
        }
    }
}

#[test]
fn four_record_likelihood() {
    let data = Dataset::from_records(vec![
        Observation { location: Point2::new(0.0, 0.0), value: 0.3, time: 0.0, observer: 1 },
        Observation { location: Point2::new(1.0, 0.0), value: -0.2, time: 1.0, observer: 1 },
        Observation { location: Point2::new(0.5, 1.5), value: 0.9, time: 2.0, observer: 2 },
        Observation { location: Point2::new(2.0, 2.0), value: 0.1, time: 3.0, observer: 2 },
    ]);
    let hyper = GpHyperParams { length_scale: 0.8, signal_std: 1.1, noise_std: 0.2 };
    let naive = NaiveGp::new(hyper, &data);
    assert!(rel_err(log_likelihood(&data, &hyper).unwrap(), naive.log_likelihood()) < TOL);
}

#[test]
fn augmented_std_matches_concatenated_design() {
    let arena = Arena::square(3.0).unwrap();
    for seed in 100..130 {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, 2, &arena);
        let hyper = random_hyper(&mut r);
        let model = GpModel::condition(data.clone(), hyper).unwrap();
        let virt = vec![random_point(&mut r, &arena), random_point(&mut r, &arena)];
        let aug = model.augmented(&virt).unwrap();
        let mut x = data.locations();
        x.extend(&virt);
        let naive = NaiveGp::with_noise_mask(hyper, x, vec![0.0; 4], &[true; 4]);
        for _ in 0..20 {
            let q = random_point(&mut r, &arena);
            assert!((aug.std(q) - naive.std(q)).abs() < TOL, "seed {seed}");
        }
    }
}

#[test]
fn noiseless_query_at_training_point() {
    let data = Dataset::from_records(vec![
        Observation { location: Point2::new(1.0, 1.0), value: 0.7, time: 0.0, observer: 1 },
        Observation { location: Point2::new(2.0, 1.0), value: 0.2, time: 1.0, observer: 1 },
    ]);
    let hyper = GpHyperParams { length_scale: 0.7, signal_std: 1.0, noise_std: 0.0 };
    let model = GpModel::condition(data, hyper).unwrap();
    assert!(model.posterior_std(Point2::new(1.0, 1.0)) <= 1e-6);
    assert!((model.posterior_mean(Point2::new(1.0, 1.0)) - 0.7).abs() < 1e-6);
    let aug = model.augmented(&[Point2::new(0.3, 2.5)]).unwrap();
    assert!(aug.std(Point2::new(0.3, 2.5)) <= 1e-6);
}

#[test]
fn likelihood_gradient_matches_central_differences() {
    let arena = Arena::square(3.0).unwrap();
    for seed in 200..210 {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, 8, &arena);
        let hyper = random_hyper(&mut r);
        let (_, g) = log_likelihood_with_gradient(&data, &hyper).unwrap();
        let logs = [hyper.length_scale.ln(), hyper.signal_std.ln(), hyper.noise_std.ln()];
        for k in 0..3 {
            let h = 1e-5;
            let at = |d: f64| {
                let mut v = logs;
                v[k] += d;
                let hp = GpHyperParams { length_scale: v[0].exp(), signal_std: v[1].exp(), noise_std: v[2].exp() };
                log_likelihood(&data, &hp).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!(scaled_err(g[k], fd, 1e-3) < 1e-4, "seed {seed} component {k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn kernel_is_symmetric() {
    let arena = Arena::square(3.0).unwrap();
    let mut r = rng(7);
    let hyper = random_hyper(&mut r);
    for _ in 0..200 {
        let (a, b) = (random_point(&mut r, &arena), random_point(&mut r, &arena));
        assert_eq!(hyper.kernel(a, b).to_bits(), hyper.kernel(b, a).to_bits());
    }
}

#[test]
fn fitting_is_deterministic_and_improves_likelihood() {
    let arena = Arena::square(3.0).unwrap();
    let mut r = rng(11);
    let obs: Vec<Observation> = (0..40)
        .map(|i| {
            let p = random_point(&mut r, &arena);
            let v = (-(p.distance_sq(Point2::new(1.5, 2.0))) / 0.5).exp();
            Observation { location: p, value: v, time: i as f64, observer: 1 }
        })
        .collect();
    let data = Dataset::from_records(obs);
    let init = GpHyperParams { length_scale: 20.0, signal_std: 0.01, noise_std: 1.0 };
    let a = GpModel::fit(data.clone(), init, &FitOptions::default()).unwrap();
    let b = GpModel::fit(data.clone(), init, &FitOptions::default()).unwrap();
    assert!(a.log_likelihood() > log_likelihood(&data, &init).unwrap());
    let q = Point2::new(0.4, 2.2);
    assert_eq!(a.posterior_mean(q).to_bits(), b.posterior_mean(q).to_bits());
    assert_eq!(a.posterior_std(q).to_bits(), b.posterior_std(q).to_bits());
}
