//! Synthetic 2-D signal environments.
//!
//! A field is a sum of isotropic Gaussian bumps over a rectangular arena. The
//! two built-in presets reproduce the qualitative setting of the comparative
//! study: a small arena with a bimodal signal and a large arena with a highly
//! multimodal one.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arena, Point2};

/// One Gaussian bump: `amplitude * exp(-|x - center|^2 / (2 spread^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub center: Point2,
    pub amplitude: f64,
    pub spread: f64,
}

impl Component {
    #[inline]
    fn value(&self, x: Point2) -> f64 {
        self.amplitude * (-x.distance_sq(self.center) / (2.0 * self.spread * self.spread)).exp()
    }

    #[inline]
    fn gradient(&self, x: Point2) -> Point2 {
        let v = self.value(x);
        let s2 = self.spread * self.spread;
        (self.center - x) * (v / s2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureField {
    pub arena: Arena,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    pub components: Vec<Component>,
    /// Location of the strongest peak of the summed field, refined at
    /// construction.
    #[serde(skip)]
    source: Point2,
}

fn default_noise_std() -> f64 {
    0.01
}

/// Mission parameters that accompany a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    /// Maximum allowed search time (s).
    pub t_max: f64,
    /// Straight-line start-to-source travel time at `speed` (s).
    pub t_idealized: f64,
    /// Planning horizon between waypoints (s).
    pub horizon: f64,
    /// Robot speed (m/s).
    pub speed: f64,
    /// Upper bound on the signal strength, used by the local penalty.
    pub max_signal: f64,
    /// Lipschitz constant of the signal (signal units per m).
    pub lipschitz: f64,
    /// Termination radius around the source (m).
    pub epsilon: f64,
    /// Shared launch point of the swarm.
    pub start: Point2,
    /// Initial feasible direction range for the first waypoints (degrees).
    #[serde(default = "default_delta_theta")]
    pub delta_theta: f64,
}

fn default_delta_theta() -> f64 {
    360.0
}

impl CaseConfig {
    pub fn step_bound(&self) -> f64 {
        self.speed * self.horizon
    }

    pub fn validate(&self, arena: &Arena) -> Result<()> {
        let positive = [
            ("t_max", self.t_max),
            ("t_idealized", self.t_idealized),
            ("horizon", self.horizon),
            ("speed", self.speed),
            ("lipschitz", self.lipschitz),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !self.max_signal.is_finite() {
            return Err(Error::config("max_signal", "must be finite"));
        }
        if !(self.delta_theta > 0.0 && self.delta_theta <= 360.0) {
            return Err(Error::config("delta_theta", "must lie in (0, 360]"));
        }
        if !arena.contains(self.start) {
            return Err(Error::config("start", "swarm start lies outside the arena"));
        }
        Ok(())
    }
}

impl GaussianMixtureField {
    pub fn new(arena: Arena, noise_std: f64, components: Vec<Component>) -> Result<Self> {
        let mut field = Self {
            arena,
            noise_std,
            components,
            source: Point2::default(),
        };
        field.source = field.validate()?;
        Ok(field)
    }

    /// Checks the invariants and returns the refined global source.
    fn validate(&self) -> Result<Point2> {
        self.arena.validate()?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be finite and non-negative"));
        }
        if self.components.is_empty() {
            return Err(Error::config("components", "at least one component is required"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if !self.arena.contains(c.center) {
                return Err(Error::config(
                    format!("components[{i}].center"),
                    "center lies outside the arena",
                ));
            }
            if !(c.spread.is_finite() && c.spread > 0.0) {
                return Err(Error::config(format!("components[{i}].spread"), "must be positive"));
            }
            if !c.amplitude.is_finite() {
                return Err(Error::config(format!("components[{i}].amplitude"), "must be finite"));
            }
        }
        let mut peaks: Vec<(Point2, f64)> = self
            .components
            .iter()
            .map(|c| {
                let p = self.climb(c.center);
                (p, self.signal(p))
            })
            .collect();
        peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, best_val) = peaks[0];
        // Peaks seeded from nearby components may converge to the same point.
        let rival = peaks[1..]
            .iter()
            .find(|(p, _)| p.distance(best) > 1e-3)
            .map(|&(_, v)| v);
        if let Some(v) = rival {
            if best_val - v <= 1e-9 * best_val.abs().max(1.0) {
                return Err(Error::config(
                    "components",
                    "the summed field must have a unique strongest peak",
                ));
            }
        }
        Ok(best)
    }

    /// Gradient ascent on the analytic field from `x0`, kept inside the arena.
    fn climb(&self, x0: Point2) -> Point2 {
        let mut x = x0;
        let min_spread = self
            .components
            .iter()
            .map(|c| c.spread)
            .fold(f64::INFINITY, f64::min);
        let mut step = 0.1 * min_spread * min_spread;
        let mut val = self.signal(x);
        for _ in 0..10_000 {
            let g = self.gradient(x);
            if g.norm() < 1e-14 {
                break;
            }
            let cand = self.arena.clamp(x + g * step);
            let cv = self.signal(cand);
            if cv > val {
                if cand.distance(x) < 1e-13 {
                    break;
                }
                x = cand;
                val = cv;
                step *= 1.5;
            } else {
                step *= 0.5;
                if step < 1e-18 {
                    break;
                }
            }
        }
        x
    }

    /// Global source location (argmax of the noiseless field).
    pub fn source(&self) -> Point2 {
        self.source
    }

    /// Noiseless signal at `x`. Errors when `x` is outside the arena.
    pub fn evaluate(&self, x: Point2) -> Result<f64> {
        if !x.is_finite() || !self.arena.contains(x) {
            return Err(Error::Domain(format!(
                "query ({}, {}) lies outside the arena",
                x.x, x.y
            )));
        }
        Ok(self.signal(x))
    }

    /// Noiseless signal without the arena check.
    pub fn signal(&self, x: Point2) -> f64 {
        self.components.iter().map(|c| c.value(x)).sum()
    }

    pub fn gradient(&self, x: Point2) -> Point2 {
        self.components
            .iter()
            .fold(Point2::default(), |acc, c| acc + c.gradient(x))
    }

    /// Noisy observation drawn from `rng`.
    pub fn observe<R: Rng + ?Sized>(&self, x: Point2, rng: &mut R) -> Result<f64> {
        let f = self.evaluate(x)?;
        if self.noise_std == 0.0 {
            return Ok(f);
        }
        let normal = Normal::new(0.0, self.noise_std).expect("noise_std validated");
        Ok(f + normal.sample(rng))
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Result<Self> {
        self.noise_std = noise_std;
        self.source = self.validate()?;
        Ok(self)
    }
}

/// The on-disk field description: the field itself plus optional mission
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub arena: Arena,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    pub components: Vec<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<CaseConfig>,
}

impl FieldFile {
    pub fn new(field: &GaussianMixtureField, case: Option<CaseConfig>) -> Self {
        Self {
            arena: field.arena,
            noise_std: field.noise_std,
            components: field.components.clone(),
            case,
        }
    }

    pub fn into_parts(self) -> Result<(GaussianMixtureField, Option<CaseConfig>)> {
        let field = GaussianMixtureField::new(self.arena, self.noise_std, self.components)?;
        if let Some(case) = &self.case {
            case.validate(&field.arena)?;
        }
        Ok((field, self.case))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("field file serializes")
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }
}

/// Which built-in environment to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Case1,
    Case2,
}

impl Preset {
    pub fn build(self) -> (GaussianMixtureField, CaseConfig) {
        match self {
            Preset::Case1 => case1_preset(),
            Preset::Case2 => case2_preset(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Case1 => "case1",
            Preset::Case2 => "case2",
        }
    }
}

/// Builds a field whose summed signal peaks at `source.center` with value
/// `peak`. The strongest component is nudged until the other components'
/// tails no longer shift the maximum.
fn with_exact_peak(arena: Arena, source: Component, others: &[Component], peak: f64) -> GaussianMixtureField {
    let target = source.center;
    let mut center = target;
    for _ in 0..100 {
        let field = place(arena, Component { center, ..source }, others, target, peak);
        let miss = target - field.source();
        // The argmax refinement resolves a flat peak to about 1e-9.
        if miss.norm() < 1e-8 {
            return field;
        }
        center = center + miss;
    }
    panic!("preset peak placement did not converge");
}

fn place(arena: Arena, source: Component, others: &[Component], target: Point2, peak: f64) -> GaussianMixtureField {
    let tails: f64 = others.iter().map(|c| c.value(target)).sum();
    let shape = Component { amplitude: 1.0, ..source }.value(target);
    let mut components = vec![Component {
        amplitude: (peak - tails) / shape,
        ..source
    }];
    components.extend_from_slice(others);
    GaussianMixtureField::new(arena, default_noise_std(), components).expect("preset is valid")
}

/// Small arena, bimodal signal.
pub fn case1_preset() -> (GaussianMixtureField, CaseConfig) {
    let arena = Arena::square(3.0).expect("valid arena");
    let start = Point2::new(0.05, 0.05);
    let case = CaseConfig {
        t_max: 100.0,
        t_idealized: 29.8,
        horizon: 5.0,
        speed: 0.1,
        max_signal: 1.0,
        lipschitz: 20.0,
        epsilon: 0.05,
        start,
        // The launch point sits in a corner, so only a quarter turn is feasible.
        delta_theta: 90.0,
    };
    let source = Component {
        center: start + Point2::from_polar(case.speed * case.t_idealized, 20f64.to_radians()),
        amplitude: 1.0,
        spread: 1.0,
    };
    let others = [Component {
        center: Point2::new(0.8, 2.3),
        amplitude: 0.6,
        spread: 0.35,
    }];
    (with_exact_peak(arena, source, &others, 1.0), case)
}

/// Large arena, multimodal signal with ten bumps.
pub fn case2_preset() -> (GaussianMixtureField, CaseConfig) {
    let arena = Arena::square(30.0).expect("valid arena");
    let start = Point2::new(1.0, 1.0);
    let case = CaseConfig {
        t_max: 1000.0,
        t_idealized: 140.6,
        horizon: 20.0,
        speed: 0.2,
        max_signal: 1.0,
        lipschitz: 200.0,
        epsilon: 0.2,
        start,
        delta_theta: 90.0,
    };
    let source = Component {
        center: start + Point2::from_polar(case.speed * case.t_idealized, 15f64.to_radians()),
        amplitude: 1.0,
        spread: 2.5,
    };
    let bump = |x: f64, y: f64, amplitude: f64, spread: f64| Component {
        center: Point2::new(x, y),
        amplitude,
        spread,
    };
    let others = [
        bump(8.0, 24.0, 0.8, 2.8),
        bump(20.0, 22.0, 0.75, 2.8),
        bump(12.0, 12.0, 0.55, 2.0),
        bump(5.0, 7.0, 0.4, 2.0),
        bump(26.0, 25.0, 0.6, 1.7),
        bump(17.0, 4.0, 0.35, 1.8),
        bump(4.0, 17.0, 0.45, 1.7),
        bump(14.0, 28.0, 0.65, 1.8),
        bump(27.5, 16.5, 0.3, 1.4),
    ];
    (with_exact_peak(arena, source, &others, 1.0), case)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn single(center: Point2, spread: f64) -> GaussianMixtureField {
        GaussianMixtureField::new(
            Arena::square(10.0).unwrap(),
            0.0,
            vec![Component {
                center,
                amplitude: 1.0,
                spread,
            }],
        )
        .unwrap()
    }

    #[test]
    fn peak_of_single_component() {
        let c = Point2::new(3.0, 4.0);
        let f = single(c, 1.0);
        assert_eq!(f.evaluate(c).unwrap(), 1.0);
        assert_eq!(f.source(), c);
    }

    #[test]
    fn far_corner_decays_to_zero() {
        let f = single(Point2::new(0.5, 0.5), 0.2);
        let v = f.evaluate(Point2::new(10.0, 10.0)).unwrap();
        assert!(v < 1e-300);
    }

    #[test]
    fn midpoint_of_two_components() {
        let f = GaussianMixtureField::new(
            Arena::square(10.0).unwrap(),
            0.0,
            vec![
                Component { center: Point2::new(2.0, 5.0), amplitude: 1.0, spread: 1.0 },
                Component { center: Point2::new(6.0, 5.0), amplitude: 0.5, spread: 2.0 },
            ],
        )
        .unwrap();
        // Distance 2 from each center: exp(-4/2) and 0.5 exp(-4/8).
        let expected = 0.135_335_283_236_612_7 + 0.5 * 0.606_530_659_712_633_4;
        let v = f.evaluate(Point2::new(4.0, 5.0)).unwrap();
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn out_of_arena_is_domain_error() {
        let f = single(Point2::new(1.0, 1.0), 1.0);
        assert!(matches!(f.evaluate(Point2::new(-0.1, 1.0)), Err(Error::Domain(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(f.observe(Point2::new(11.0, 1.0), &mut rng).is_err());
    }

    #[test]
    fn zero_noise_observation_is_exact() {
        let f = single(Point2::new(1.0, 1.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Point2::new(2.0, 3.0);
        assert_eq!(f.observe(x, &mut rng).unwrap(), f.evaluate(x).unwrap());
    }

    #[test]
    fn observation_stream_replays_with_seed() {
        let f = single(Point2::new(1.0, 1.0), 1.0).with_noise_std(0.1).unwrap();
        let x = Point2::new(1.5, 1.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (f.observe(x, &mut rng).unwrap(), f.observe(x, &mut rng).unwrap())
        };
        let (a, b) = draw(9);
        assert_ne!(a, b);
        assert_eq!(draw(9), (a, b));
    }

    #[test]
    fn noise_mean_converges() {
        let noise = 0.05;
        let f = single(Point2::new(1.0, 1.0), 1.0).with_noise_std(noise).unwrap();
        let x = Point2::new(1.3, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mean = (0..n).map(|_| f.observe(x, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - f.evaluate(x).unwrap()).abs() < 3.0 * noise / 100.0);
    }

    #[test]
    fn preset_parameters() {
        let (f1, c1) = case1_preset();
        assert_eq!(c1.t_max, 100.0);
        assert_eq!(c1.t_idealized, 29.8);
        assert_eq!((c1.horizon, c1.speed, c1.max_signal, c1.lipschitz, c1.epsilon), (5.0, 0.1, 1.0, 20.0, 0.05));
        assert_eq!(f1.components.len(), 2);
        assert!((c1.start.distance(f1.source()) - 2.98).abs() < 1e-3);

        let (f2, c2) = case2_preset();
        assert_eq!(c2.speed, 0.2);
        assert_eq!((c2.t_max, c2.t_idealized, c2.horizon, c2.lipschitz, c2.epsilon), (1000.0, 140.6, 20.0, 200.0, 0.2));
        assert!(f2.components.len() >= 8);
        assert!((c2.start.distance(f2.source()) - 28.12).abs() < 1e-3);
        for (f, c) in [(&f1, &c1), (&f2, &c2)] {
            // Six steps fit in the arena.
            assert!(6.0 * c.step_bound() <= f.arena.width() + 1e-12);
            c.validate(&f.arena).unwrap();
        }
    }

    #[test]
    fn non_unique_peak_rejected() {
        let r = GaussianMixtureField::new(
            Arena::square(10.0).unwrap(),
            0.0,
            vec![
                Component { center: Point2::new(2.0, 2.0), amplitude: 1.0, spread: 0.5 },
                Component { center: Point2::new(8.0, 8.0), amplitude: 1.0, spread: 0.5 },
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn toml_round_trip() {
        let (f, c) = case2_preset();
        let text = FieldFile::new(&f, Some(c.clone())).to_toml();
        let (g, c2) = FieldFile::from_toml(&text, Path::new("mem")).unwrap().into_parts().unwrap();
        assert_eq!(g.components, f.components);
        assert_eq!(c2, Some(c));
        assert_eq!(g.source(), f.source());
    }
}
