//! Gaussian-process regression with a squared-exponential kernel.
//!
//! The prior mean is identically zero. Predictions use a cached Cholesky
//! factor of `K + σₙ² I`; conditioning on extra, value-free locations (the
//! peers' planned samples) extends that factor in place of refactoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::linalg::{packed_offset, Cholesky, ExtendedCholesky, JitterPolicy, LowerRows};
use crate::optim::{maximize, Bounds, Objective, QuasiNewtonOptions};

/// 1-based robot index.
pub type RobotId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub location: Point2,
    pub value: f64,
    /// Seconds since mission start.
    pub time: f64,
    pub observer: RobotId,
}

impl Observation {
    fn order(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.observer.cmp(&other.observer))
    }

    fn same_key(&self, other: &Self) -> bool {
        self.observer == other.observer && self.time.to_bits() == other.time.to_bits()
    }
}

/// Observations ordered by `(time, observer)`, at most one per key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    records: Vec<Observation>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts (stably) and drops later duplicates of the same `(observer, time)`.
    pub fn from_records(mut records: Vec<Observation>) -> Self {
        records.sort_by(Observation::order);
        records.dedup_by(|b, a| a.same_key(b));
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.records.iter()
    }

    /// Inserts a record at its ordered position. Returns false for duplicates.
    pub fn insert(&mut self, obs: Observation) -> bool {
        // Fast path: records usually arrive in time order.
        if let Some(last) = self.records.last() {
            match last.order(&obs) {
                std::cmp::Ordering::Less => {
                    self.records.push(obs);
                    return true;
                }
                std::cmp::Ordering::Equal => return false,
                std::cmp::Ordering::Greater => {}
            }
        } else {
            self.records.push(obs);
            return true;
        }
        match self.records.binary_search_by(|r| r.order(&obs)) {
            Ok(_) => false,
            Err(pos) => {
                self.records.insert(pos, obs);
                true
            }
        }
    }

    /// Merges `other` in, keeping order and dropping duplicates. Returns the
    /// number of new records.
    pub fn merge(&mut self, other: &[Observation]) -> usize {
        let before = self.records.len();
        let mut incoming = other.to_vec();
        incoming.sort_by(Observation::order);
        let mut merged = Vec::with_capacity(self.records.len() + incoming.len());
        let (mut i, mut j) = (0, 0);
        while i < self.records.len() || j < incoming.len() {
            let take_left = match (self.records.get(i), incoming.get(j)) {
                (Some(a), Some(b)) => a.order(b) != std::cmp::Ordering::Greater,
                (Some(_), None) => true,
                _ => false,
            };
            let next = if take_left {
                i += 1;
                self.records[i - 1]
            } else {
                j += 1;
                incoming[j - 1]
            };
            if merged.last().is_none_or(|last: &Observation| !last.same_key(&next)) {
                merged.push(next);
            }
        }
        self.records = merged;
        self.records.len() - before
    }

    pub fn locations(&self) -> Vec<Point2> {
        self.records.iter().map(|r| r.location).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    /// Record with the largest value (first one on ties).
    pub fn best(&self) -> Option<&Observation> {
        self.records
            .iter()
            .fold(None, |best: Option<&Observation>, r| match best {
                Some(b) if b.value >= r.value => Some(b),
                _ => Some(r),
            })
    }

    /// Every `stride`-th record starting from the first.
    pub fn stride(&self, stride: usize) -> Dataset {
        let stride = stride.max(1);
        Dataset {
            records: self.records.iter().step_by(stride).copied().collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,observer,x,y,value\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.time, r.observer, r.location.x, r.location.y, r.value);
        }
        out
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "time,observer,x,y,value" => {}
            _ => return Err(err(1, "expected header `time,observer,x,y,value`".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(err(i + 1, format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |k: usize| {
                fields[k]
                    .parse::<f64>()
                    .map_err(|e| err(i + 1, format!("field {k}: {e}")))
            };
            let observer = fields[1]
                .parse::<RobotId>()
                .map_err(|e| err(i + 1, format!("observer: {e}")))?;
            let rec = Observation {
                time: num(0)?,
                observer,
                location: Point2::new(num(2)?, num(3)?),
                value: num(4)?,
            };
            if !(rec.location.is_finite() && rec.value.is_finite() && rec.time.is_finite()) {
                return Err(err(i + 1, "non-finite value".into()));
            }
            records.push(rec);
        }
        Ok(Dataset::from_records(records))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperParams {
    /// Kernel length scale (m).
    pub length_scale: f64,
    /// Prior standard deviation of the signal.
    pub signal_std: f64,
    /// Observation noise standard deviation.
    pub noise_std: f64,
}

impl Default for GpHyperParams {
    fn default() -> Self {
        Self {
            length_scale: 1.0,
            signal_std: 1.0,
            noise_std: 0.1,
        }
    }
}

impl GpHyperParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale.is_finite()
            && self.length_scale > 0.0
            && self.signal_std.is_finite()
            && self.signal_std > 0.0
            && self.noise_std.is_finite()
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid GP hyperparameters {self:?}")))
        }
    }

    /// Squared-exponential covariance.
    #[inline]
    pub fn kernel(&self, a: Point2, b: Point2) -> f64 {
        self.signal_std * self.signal_std * (-a.distance_sq(b) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn to_log(self) -> [f64; 3] {
        [self.length_scale.ln(), self.signal_std.ln(), self.noise_std.ln()]
    }

    fn from_log(v: &[f64]) -> Self {
        Self {
            length_scale: v[0].exp(),
            signal_std: v[1].exp(),
            noise_std: v[2].exp(),
        }
    }

    fn jitter_policy(&self) -> JitterPolicy {
        JitterPolicy::relative_to(self.signal_std * self.signal_std)
    }
}

/// Packed `K(X, X) + σₙ² I`.
fn covariance(points: &[Point2], hyper: &GpHyperParams) -> Vec<f64> {
    let n = points.len();
    let noise = hyper.noise_std * hyper.noise_std;
    let mut packed = Vec::with_capacity(packed_offset(n));
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[..i] {
            packed.push(hyper.kernel(a, b));
        }
        packed.push(hyper.signal_std * hyper.signal_std + noise);
    }
    packed
}

/// Log marginal likelihood of `data` under `hyper`.
pub fn log_likelihood(data: &Dataset, hyper: &GpHyperParams) -> Result<f64> {
    hyper.validate()?;
    let points = data.locations();
    let n = points.len();
    let chol = Cholesky::factor_escalating(covariance(&points, hyper), n, hyper.jitter_policy())?;
    let mut alpha = data.values();
    chol.forward_solve(&mut alpha);
    let quad: f64 = alpha.iter().map(|v| v * v).sum();
    Ok(-0.5 * quad - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln length_scale, ln signal_std, ln noise_std)`.
pub fn log_likelihood_with_gradient(data: &Dataset, hyper: &GpHyperParams) -> Result<(f64, [f64; 3])> {
    hyper.validate()?;
    let points = data.locations();
    let n = points.len();
    let chol = Cholesky::factor_escalating(covariance(&points, hyper), n, hyper.jitter_policy())?;
    let y = data.values();
    let mut alpha = y.clone();
    chol.forward_solve(&mut alpha);
    let quad: f64 = alpha.iter().map(|v| v * v).sum();
    let ll = -0.5 * quad - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    chol.backward_solve(&mut alpha);
    let inv = chol.inverse();

    let l2 = hyper.length_scale * hyper.length_scale;
    let sf2 = hyper.signal_std * hyper.signal_std;
    let mut g = [0.0; 3];
    for i in 0..n {
        // Diagonal.
        let w = alpha[i] * alpha[i] - inv[i * n + i];
        g[1] += w * 2.0 * sf2;
        g[2] += w * 2.0 * hyper.noise_std * hyper.noise_std;
        for j in 0..i {
            let w = 2.0 * (alpha[i] * alpha[j] - inv[i * n + j]);
            let d2 = points[i].distance_sq(points[j]);
            let k = sf2 * (-d2 / (2.0 * l2)).exp();
            g[0] += w * k * d2 / l2;
            g[1] += w * 2.0 * k;
        }
    }
    Ok((ll, g.map(|v| 0.5 * v)))
}

/// Settings for hyperparameter fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the relative log-likelihood change.
    pub rel_tol: f64,
    /// Fit hyperparameters on at most this many records (see
    /// [`downsample_by_observer`]); the returned model still conditions on
    /// all records.
    pub fit_cap: Option<usize>,
    /// Lower bound on the noise standard deviation during fitting.
    pub min_noise_std: f64,
    /// Also start from a data-driven guess and the defaults, not only from
    /// the supplied initial values.
    pub restarts: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_tol: 1e-6,
            fit_cap: Some(250),
            min_noise_std: 1e-8,
            restarts: true,
        }
    }
}

struct LikelihoodObjective<'a> {
    data: &'a Dataset,
}

impl Objective for LikelihoodObjective<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn value(&self, x: &[f64]) -> f64 {
        log_likelihood(self.data, &GpHyperParams::from_log(x)).unwrap_or(f64::NEG_INFINITY)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        Some(match log_likelihood_with_gradient(self.data, &GpHyperParams::from_log(x)) {
            Ok((ll, g)) => (ll, g.to_vec()),
            Err(_) => (f64::NEG_INFINITY, vec![0.0; 3]),
        })
    }
}

/// Data-dependent box for the log-hyperparameters.
fn hyper_bounds(data: &Dataset, opts: &FitOptions) -> Bounds {
    let pts = data.locations();
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in &pts {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let extent = lo.distance(hi).max(1e-2);
    let scale = data.values().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-3);
    Bounds::new(
        vec![(1e-3 * extent).ln(), (1e-3 * scale).ln(), opts.min_noise_std.ln()],
        vec![(10.0 * extent).ln(), (1e2 * scale).ln(), (10.0 * scale).ln()],
    )
}

/// Data-driven starting point.
fn heuristic_start(data: &Dataset) -> GpHyperParams {
    let pts = data.locations();
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in &pts {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let rms = (data.values().iter().map(|v| v * v).sum::<f64>() / data.len() as f64).sqrt();
    let sf = rms.max(1e-2);
    GpHyperParams {
        length_scale: (0.2 * lo.distance(hi)).max(1e-2),
        signal_std: sf,
        noise_std: 0.05 * sf,
    }
}

/// A conditioned GP: hyperparameters, training snapshot and factorization.
#[derive(Clone, Debug)]
pub struct GpModel {
    hyper: GpHyperParams,
    training: Dataset,
    locations: Vec<Point2>,
    chol: Cholesky,
    weights: Vec<f64>,
    log_likelihood: f64,
}

impl GpModel {
    /// Prior-only model.
    pub fn prior(hyper: GpHyperParams) -> Result<Self> {
        Self::condition(Dataset::new(), hyper)
    }

    /// Conditions on `data` with fixed hyperparameters.
    pub fn condition(data: Dataset, hyper: GpHyperParams) -> Result<Self> {
        hyper.validate()?;
        let locations = data.locations();
        let n = locations.len();
        let chol = Cholesky::factor_escalating(covariance(&locations, &hyper), n, hyper.jitter_policy())?;
        let mut alpha = data.values();
        chol.forward_solve(&mut alpha);
        let quad: f64 = alpha.iter().map(|v| v * v).sum();
        let log_likelihood = -0.5 * quad - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        chol.backward_solve(&mut alpha);
        Ok(Self {
            hyper,
            training: data,
            locations,
            chol,
            weights: alpha,
            log_likelihood,
        })
    }

    /// Fits hyperparameters by maximizing the log marginal likelihood, then
    /// conditions on `data`.
    ///
    /// Three starts are tried: `init` (typically the previous fit), a
    /// data-driven heuristic, and the fixed default. An empty dataset yields
    /// the prior under `init`.
    pub fn fit(data: Dataset, init: GpHyperParams, opts: &FitOptions) -> Result<Self> {
        init.validate()?;
        if data.is_empty() {
            return Self::prior(init);
        }
        let subset = match opts.fit_cap {
            Some(cap) if data.len() > cap => downsample_by_observer(&data, cap),
            _ => data.clone(),
        };
        let hyper = fit_hyperparameters(&subset, init, opts)?;
        Self::condition(data, hyper)
    }

    pub fn hyper(&self) -> &GpHyperParams {
        &self.hyper
    }

    pub fn training(&self) -> &Dataset {
        &self.training
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Log marginal likelihood of the training data under this model.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Diagonal jitter that was needed to factor the covariance.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    fn kernel_vector(&self, x: Point2, out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.locations) {
            *o = self.hyper.kernel(p, x);
        }
    }

    pub fn posterior_mean(&self, x: Point2) -> f64 {
        let l2 = 2.0 * self.hyper.length_scale * self.hyper.length_scale;
        let sf2 = self.hyper.signal_std * self.hyper.signal_std;
        self.locations
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * (-p.distance_sq(x) / l2).exp())
            .sum::<f64>()
            * sf2
    }

    pub fn posterior_std(&self, x: Point2) -> f64 {
        if self.locations.is_empty() {
            return self.hyper.signal_std;
        }
        let mut v = vec![0.0; self.locations.len()];
        self.kernel_vector(x, &mut v);
        self.chol.forward_solve(&mut v);
        let reduction: f64 = v.iter().map(|a| a * a).sum();
        (self.hyper.signal_std * self.hyper.signal_std - reduction).max(0.0).sqrt()
    }

    pub fn posterior_std_batch(&self, xs: &[Point2]) -> Vec<f64> {
        std_batch(&self.chol, &self.locations, &[], &self.hyper, xs)
    }

    /// Conditions the variance additionally on `virtual_points` (locations
    /// only; the posterior variance does not depend on observed values).
    pub fn augmented(&self, virtual_points: &[Point2]) -> Result<AugmentedGp<'_>> {
        if virtual_points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("virtual points must be finite".into()));
        }
        if virtual_points.is_empty() {
            return Ok(AugmentedGp {
                model: self,
                virtual_points: Vec::new(),
                ext: None,
            });
        }
        let m = virtual_points.len();
        let mut cross = Vec::with_capacity(m * self.len());
        for &v in virtual_points {
            cross.extend(self.locations.iter().map(|&p| self.hyper.kernel(v, p)));
        }
        let noise = self.hyper.noise_std * self.hyper.noise_std + self.chol.jitter();
        let mut block = Vec::with_capacity(packed_offset(m));
        for (i, &a) in virtual_points.iter().enumerate() {
            for &b in &virtual_points[..i] {
                block.push(self.hyper.kernel(a, b));
            }
            block.push(self.hyper.signal_std * self.hyper.signal_std + noise);
        }
        let ext = ExtendedCholesky::new(&self.chol, &cross, &block, m, self.hyper.jitter_policy())?;
        Ok(AugmentedGp {
            model: self,
            virtual_points: virtual_points.to_vec(),
            ext: Some(ext),
        })
    }

    /// Posterior standard deviation at `x` conditioned on the training
    /// locations plus `virtual_points`.
    pub fn posterior_std_augmented(&self, virtual_points: &[Point2], x: Point2) -> Result<f64> {
        Ok(self.augmented(virtual_points)?.std(x))
    }
}

/// Variance model conditioned on training plus virtual locations.
#[derive(Clone, Debug)]
pub struct AugmentedGp<'a> {
    model: &'a GpModel,
    virtual_points: Vec<Point2>,
    ext: Option<ExtendedCholesky<'a>>,
}

impl AugmentedGp<'_> {
    pub fn model(&self) -> &GpModel {
        self.model
    }

    pub fn virtual_points(&self) -> &[Point2] {
        &self.virtual_points
    }

    pub fn std(&self, x: Point2) -> f64 {
        self.std_batch(&[x])[0]
    }

    pub fn std_batch(&self, xs: &[Point2]) -> Vec<f64> {
        match &self.ext {
            None => self.model.posterior_std_batch(xs),
            Some(ext) => std_batch(ext, &self.model.locations, &self.virtual_points, &self.model.hyper, xs),
        }
    }
}

/// Posterior standard deviations at `xs` for the factor `rows` over the
/// design `train ++ extra`.
fn std_batch<L: LowerRows>(rows: &L, train: &[Point2], extra: &[Point2], hyper: &GpHyperParams, xs: &[Point2]) -> Vec<f64> {
    let sf2 = hyper.signal_std * hyper.signal_std;
    let n = rows.dim();
    if n == 0 {
        return vec![hyper.signal_std; xs.len()];
    }
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(xs.len());
    let mut buf = Vec::new();
    for chunk in xs.chunks(CHUNK) {
        let p = chunk.len();
        buf.clear();
        buf.resize(n * p, 0.0);
        for (i, &d) in train.iter().chain(extra).enumerate() {
            let row = &mut buf[i * p..i * p + p];
            for (slot, &x) in row.iter_mut().zip(chunk) {
                *slot = hyper.kernel(d, x);
            }
        }
        rows.forward_solve_multi(&mut buf, p);
        let mut red = vec![0.0; p];
        for i in 0..n {
            for (r, &v) in red.iter_mut().zip(&buf[i * p..i * p + p]) {
                *r += v * v;
            }
        }
        out.extend(red.into_iter().map(|r| (sf2 - r).max(0.0).sqrt()));
    }
    out
}

/// Integer-stride downsampling: unchanged when `data.len() <= cap`, otherwise
/// every `ceil(len / cap)`-th record.
pub fn downsample_stride(data: &Dataset, cap: usize) -> Dataset {
    let cap = cap.max(1);
    if data.len() <= cap {
        return data.clone();
    }
    data.stride(data.len().div_ceil(cap))
}

/// Keeps every `q`-th record of each observer's own sequence, with the
/// smallest `q` that brings the total to at most `cap`. Unlike a plain stride
/// over the (time, observer) order, this cannot lock onto a subset of
/// observers when they sample in step.
pub fn downsample_by_observer(data: &Dataset, cap: usize) -> Dataset {
    let cap = cap.max(1);
    if data.len() <= cap {
        return data.clone();
    }
    let mut counts: BTreeMap<RobotId, usize> = BTreeMap::new();
    for r in data.records() {
        *counts.entry(r.observer).or_default() += 1;
    }
    let mut q = data.len().div_ceil(cap);
    while counts.values().map(|&c| c.div_ceil(q)).sum::<usize>() > cap {
        q += 1;
    }
    let mut seen: BTreeMap<RobotId, usize> = BTreeMap::new();
    let kept = data
        .records()
        .iter()
        .filter(|r| {
            let k = seen.entry(r.observer).or_default();
            *k += 1;
            (*k - 1) % q == 0
        })
        .copied()
        .collect();
    Dataset { records: kept }
}

fn fit_hyperparameters(data: &Dataset, init: GpHyperParams, opts: &FitOptions) -> Result<GpHyperParams> {
    let bounds = hyper_bounds(data, opts);
    let obj = LikelihoodObjective { data };
    let qn = QuasiNewtonOptions {
        max_iter: opts.max_iter,
        step_tol: 1e-8,
        rel_tol: opts.rel_tol,
        fd_step: vec![1e-6; 3],
        initial_step: 0.5,
        central: true,
    };
    let init_ll = obj.value(&init.to_log());
    let mut best: Option<(f64, Vec<f64>)> = init_ll.is_finite().then(|| (init_ll, init.to_log().to_vec()));
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let candidates = if opts.restarts || best.is_none() {
        vec![init, heuristic_start(data), GpHyperParams::default()]
    } else {
        vec![init]
    };
    for s in candidates {
        let mut x = s.to_log().to_vec();
        bounds.project(&mut x);
        if !starts.iter().any(|t| t.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9)) {
            starts.push(x);
        }
    }
    for x0 in &starts {
        let r = maximize(&obj, x0, &bounds, &qn);
        if r.value.is_finite() && best.as_ref().is_none_or(|(v, _)| r.value > *v) {
            best = Some((r.value, r.x));
        }
    }
    match best {
        Some((_, x)) => Ok(GpHyperParams::from_log(&x)),
        None => Err(Error::Fit("covariance not positive definite at any start".into())),
    }
}
