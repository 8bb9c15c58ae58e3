//! Box-constrained quasi-Newton maximization.
//!
//! A projected BFGS iteration with Armijo backtracking. Gradients come either
//! from the objective itself or from central finite differences (one-sided at
//! active bounds). Finite-difference stencils are handed to the objective as a
//! batch so expensive objectives can share work across stencil points.

/// A function to maximize.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Values at several points; override to share work across points.
    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.value(x)).collect()
    }

    /// Analytic gradient, if available.
    fn value_and_gradient(&self, _x: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h), "inverted bounds");
        Self { lo, hi }
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(l, h);
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuasiNewtonOptions {
    pub max_iter: usize,
    /// Stop when an accepted step is shorter than this (Euclidean, in x units).
    pub step_tol: f64,
    /// Stop when the relative objective change of an accepted step is below this.
    pub rel_tol: f64,
    /// Per-coordinate finite-difference steps.
    pub fd_step: Vec<f64>,
    /// Length of the first trial step.
    pub initial_step: f64,
    /// Central differences when true, forward differences otherwise.
    pub central: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Evaluator<'a, O: Objective + ?Sized> {
    obj: &'a O,
    bounds: &'a Bounds,
    opts: &'a QuasiNewtonOptions,
    evaluations: usize,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        self.obj.value(x)
    }

    fn gradient(&mut self, x: &[f64], fx: f64) -> Vec<f64> {
        if let Some((_, g)) = self.obj.value_and_gradient(x) {
            self.evaluations += 1;
            return g;
        }
        let d = x.len();
        if !self.opts.central {
            return self.forward_gradient(x, fx);
        }
        let mut pts = Vec::with_capacity(2 * d);
        let mut spans = Vec::with_capacity(d);
        for i in 0..d {
            let h = self.opts.fd_step[i];
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] = (x[i] + h).min(self.bounds.hi[i]);
            xm[i] = (x[i] - h).max(self.bounds.lo[i]);
            spans.push((xp[i] - x[i], x[i] - xm[i]));
            pts.push(xp);
            pts.push(xm);
        }
        let vals = self.obj.values(&pts);
        self.evaluations += pts.len();
        (0..d)
            .map(|i| {
                let (up, down) = spans[i];
                let (fp, fm) = (vals[2 * i], vals[2 * i + 1]);
                match (up > 0.0, down > 0.0) {
                    (true, true) => (fp - fm) / (up + down),
                    (true, false) => (fp - fx) / up,
                    (false, true) => (fx - fm) / down,
                    (false, false) => 0.0,
                }
            })
            .collect()
    }
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    /// One-sided differences, stepping away from an active upper bound.
    fn forward_gradient(&mut self, x: &[f64], fx: f64) -> Vec<f64> {
        let d = x.len();
        let mut pts = Vec::with_capacity(d);
        let mut steps = Vec::with_capacity(d);
        for i in 0..d {
            let h = self.opts.fd_step[i];
            let mut xp = x.to_vec();
            xp[i] = if x[i] + h <= self.bounds.hi[i] { x[i] + h } else { (x[i] - h).max(self.bounds.lo[i]) };
            steps.push(xp[i] - x[i]);
            pts.push(xp);
        }
        let vals = self.obj.values(&pts);
        self.evaluations += d;
        (0..d).map(|i| if steps[i] == 0.0 { 0.0 } else { (vals[i] - fx) / steps[i] }).collect()
    }
}

/// Maximizes `obj` over `bounds` starting from `x0`.
pub fn maximize<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    bounds: &Bounds,
    opts: &QuasiNewtonOptions,
) -> OptimResult {
    let d = obj.dim();
    assert_eq!(x0.len(), d);
    let mut ev = Evaluator {
        obj,
        bounds,
        opts,
        evaluations: 0,
    };
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut fx, mut g) = match obj.value_and_gradient(&x) {
        Some((f, g)) => {
            ev.evaluations += 1;
            (f, g)
        }
        None => {
            let f = ev.value(&x);
            if !f.is_finite() {
                return OptimResult {
                    x,
                    value: f,
                    iterations: 0,
                    evaluations: ev.evaluations,
                    converged: false,
                };
            }
            let g = ev.gradient(&x, f);
            (f, g)
        }
    };
    if !fx.is_finite() {
        return OptimResult {
            x,
            value: fx,
            iterations: 0,
            evaluations: ev.evaluations,
            converged: false,
        };
    }

    // Inverse Hessian approximation of -f, row-major.
    let mut h = vec![0.0; d * d];
    let mut scaled = false;
    let reset = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            h[i * d + i] = 1.0;
        }
    };
    reset(&mut h);

    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        // Coordinates pinned at a bound with the gradient pushing outward.
        let free: Vec<bool> = (0..d)
            .map(|i| {
                !((x[i] <= bounds.lo[i] && g[i] < 0.0) || (x[i] >= bounds.hi[i] && g[i] > 0.0))
            })
            .collect();
        let gf: Vec<f64> = (0..d).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        if norm(&gf) == 0.0 || !norm(&gf).is_finite() {
            converged = norm(&gf) == 0.0;
            break;
        }
        let mut dir: Vec<f64> = (0..d)
            .map(|i| {
                if !free[i] {
                    return 0.0;
                }
                (0..d).filter(|&j| free[j]).map(|j| h[i * d + j] * g[j]).sum()
            })
            .collect();
        if !scaled || dotp(&dir, &gf) <= 0.0 {
            reset(&mut h);
            scaled = false;
            let s = opts.initial_step / norm(&gf);
            dir = gf.iter().map(|v| v * s).collect();
        }

        // Projected Armijo backtracking.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            bounds.project(&mut xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if norm(&step) == 0.0 {
                break;
            }
            let fn_ = ev.value(&xn);
            if fn_.is_finite() && fn_ >= fx + 1e-4 * dotp(&g, &step) {
                accepted = Some((xn, fn_, step));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, step)) = accepted else {
            converged = true;
            break;
        };

        let gn = match obj.value_and_gradient(&xn) {
            Some((_, g)) => {
                ev.evaluations += 1;
                g
            }
            None => ev.gradient(&xn, fn_),
        };
        // Curvature pair for the minimization of -f.
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dotp(&step, &y);
        if sy > 1e-12 * norm(&step) * norm(&y) && sy > 0.0 {
            if !scaled {
                let gamma = sy / dotp(&y, &y);
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = if i == j { gamma } else { 0.0 };
                    }
                }
                scaled = true;
            }
            bfgs_update(&mut h, &step, &y, sy, d);
        }

        let df = (fn_ - fx).abs();
        let small_step = norm(&step) < opts.step_tol;
        let small_change = df <= opts.rel_tol * fx.abs().max(1e-300);
        x = xn;
        fx = fn_;
        g = gn;
        if small_step || small_change {
            converged = true;
            break;
        }
    }
    OptimResult {
        x,
        value: fx,
        iterations,
        evaluations: ev.evaluations,
        converged,
    }
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, d: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i * d + j] * y[j]).sum()).collect();
    let yhy = dotp(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
