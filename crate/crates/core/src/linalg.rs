//! Packed lower-triangular Cholesky factors.
//!
//! Row `i` of a factor is stored contiguously (`i + 1` entries), which keeps
//! both the factorization and forward substitution as streams of contiguous
//! dot products. A factor can be extended by extra rows without copying the
//! base, which is how the GP conditions on virtual (planned) sample locations.

use crate::error::{Error, Result};

/// Offset of row `i` in packed lower-triangular storage.
#[inline]
pub fn packed_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Multiply-add used by the kernels: fused where the CPU supports it.
trait Arith {
    fn mul_add(a: f64, b: f64, c: f64) -> f64;
}

struct Plain;
struct Fused;

impl Arith for Plain {
    #[inline(always)]
    fn mul_add(a: f64, b: f64, c: f64) -> f64 {
        a * b + c
    }
}

impl Arith for Fused {
    #[inline(always)]
    fn mul_add(a: f64, b: f64, c: f64) -> f64 {
        a.mul_add(b, c)
    }
}

/// Whether the AVX2/FMA kernels can run on this CPU.
#[inline]
fn fused_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Runs `$kernel::<Fused, ..>` compiled for AVX2/FMA when available, the
/// portable build otherwise.
macro_rules! dispatch {
    (fn $name:ident<$($g:ident: $bound:path),*>($($arg:ident: $ty:ty),*) -> $ret:ty = $kernel:ident) => {
        fn $name<$($g: $bound + ?Sized),*>($($arg: $ty),*) -> $ret {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2,fma")]
                fn fused<$($g: $bound + ?Sized),*>($($arg: $ty),*) -> $ret {
                    $kernel::<Fused, $($g),*>($($arg),*)
                }
                if fused_available() {
                    // SAFETY: the required CPU features were detected above.
                    return unsafe { fused::<$($g),*>($($arg),*) };
                }
            }
            $kernel::<Plain, $($g),*>($($arg),*)
        }
    };
}

/// Four-accumulator dot product.
#[inline(always)]
fn dot<A: Arith>(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0_f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] = A::mul_add(a[i], b[i], acc[0]);
        acc[1] = A::mul_add(a[i + 1], b[i + 1], acc[1]);
        acc[2] = A::mul_add(a[i + 2], b[i + 2], acc[2]);
        acc[3] = A::mul_add(a[i + 3], b[i + 3], acc[3]);
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail = A::mul_add(a[i], b[i], tail);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Rows of a lower-triangular matrix.
pub trait LowerRows {
    fn dim(&self) -> usize;
    /// Row `i`, `i + 1` entries with the diagonal last.
    fn row(&self, i: usize) -> &[f64];

    /// Solves `L v = b` in place.
    fn forward_solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.dim());
        forward_solve(self, b);
    }

    /// Solves `L V = B` in place for `p` right-hand sides stored interleaved
    /// (`b[i * p + j]` is row `i` of column `j`).
    fn forward_solve_multi(&self, b: &mut [f64], p: usize) {
        debug_assert_eq!(b.len(), self.dim() * p);
        if p == 1 {
            forward_solve(self, b);
        } else {
            forward_solve_multi(self, b, p);
        }
    }
}

dispatch!(fn forward_solve<L: LowerRows>(l: &L, b: &mut [f64]) -> () = forward_solve_kernel);
dispatch!(fn forward_solve_multi<L: LowerRows>(l: &L, b: &mut [f64], p: usize) -> () = forward_solve_multi_kernel);

#[inline(always)]
fn forward_solve_kernel<A: Arith, L: LowerRows + ?Sized>(l: &L, b: &mut [f64]) {
    for i in 0..l.dim() {
        let row = l.row(i);
        let s = b[i] - dot::<A>(&row[..i], &b[..i]);
        b[i] = s / row[i];
    }
}

#[inline(always)]
fn forward_solve_multi_kernel<A: Arith, L: LowerRows + ?Sized>(l: &L, b: &mut [f64], p: usize) {
    const MAX_W: usize = 16;
    let blocks = p.div_ceil(MAX_W);
    let (base, extra) = (p / blocks, p % blocks);
    for i in 0..l.dim() {
        let row = l.row(i);
        let (done, rest) = b.split_at_mut(i * p);
        let mut start = 0;
        for blk in 0..blocks {
            let width = base + usize::from(blk < extra);
            row_block::<A>(row, done, &mut rest[start..start + width], p, start);
            start += width;
        }
    }
}

/// Finishes row `i = row.len() - 1` of the columns `start..start + cur.len()`,
/// given the solved rows `done`.
#[inline(always)]
fn row_block<A: Arith>(row: &[f64], done: &[f64], cur: &mut [f64], p: usize, start: usize) {
    macro_rules! dispatch {
        ($($w:literal)*) => {
            match cur.len() {
                $($w => row_block_fixed::<A, $w>(row, done, cur.try_into().expect("width"), p, start),)*
                w => unreachable!("block width {w}"),
            }
        };
    }
    dispatch!(1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16)
}

#[inline(always)]
fn row_block_fixed<A: Arith, const W: usize>(row: &[f64], done: &[f64], cur: &mut [f64; W], p: usize, start: usize) {
    let i = row.len() - 1;
    let mut acc = [0.0_f64; W];
    for (k, &lk) in row[..i].iter().enumerate() {
        let src: &[f64; W] = done[k * p + start..k * p + start + W].try_into().expect("width");
        for j in 0..W {
            acc[j] = A::mul_add(lk, src[j], acc[j]);
        }
    }
    let d = row[i];
    for (c, a) in cur.iter_mut().zip(acc) {
        *c = (*c - a) / d;
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix, with
/// whatever diagonal jitter was needed to obtain it.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky {
    n: usize,
    packed: Vec<f64>,
    jitter: f64,
}

/// Jitter escalation policy: start at `initial`, multiply by ten until `max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
}

impl JitterPolicy {
    /// `1e-10 * scale` up to `1e-4 * scale`.
    pub fn relative_to(scale: f64) -> Self {
        Self {
            initial: 1e-10 * scale,
            max: 1e-4 * scale,
        }
    }
}

impl Cholesky {
    /// Factors a packed lower-triangular matrix exactly (no jitter).
    pub fn factor(packed: Vec<f64>, n: usize) -> Result<Self> {
        Self::factor_with_jitter(packed, n, 0.0)
    }

    /// Factors `A + jitter * I`.
    pub fn factor_with_jitter(mut packed: Vec<f64>, n: usize, jitter: f64) -> Result<Self> {
        assert_eq!(packed.len(), packed_offset(n), "packed storage size mismatch");
        if jitter != 0.0 {
            for i in 0..n {
                packed[packed_offset(i) + i] += jitter;
            }
        }
        factor_in_place(&mut packed, n, 0, jitter)?;
        Ok(Self { n, packed, jitter })
    }

    /// Tries an exact factorization, then escalates jitter per `policy`.
    pub fn factor_escalating(packed: Vec<f64>, n: usize, policy: JitterPolicy) -> Result<Self> {
        match Self::factor(packed.clone(), n) {
            Ok(c) => return Ok(c),
            Err(e) if policy.initial <= 0.0 => return Err(e),
            Err(_) => {}
        }
        let mut jitter = policy.initial;
        loop {
            match Self::factor_with_jitter(packed.clone(), n, jitter) {
                Ok(c) => return Ok(c),
                Err(e) if jitter * 10.0 > policy.max * (1.0 + 1e-12) => return Err(e),
                Err(_) => jitter *= 10.0,
            }
        }
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    /// `log |A|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.row(i)[i].ln()).sum::<f64>()
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward_solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let row = self.row(i);
            let xi = b[i] / row[i];
            b[i] = xi;
            for (bk, &l) in b[..i].iter_mut().zip(&row[..i]) {
                *bk -= l * xi;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward_solve(b);
        self.backward_solve(b);
    }

    /// Dense row-major `A⁻¹`.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // W = L⁻¹, row-major.
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        self.forward_solve_multi(&mut w, n);
        // A⁻¹ = Wᵀ W.
        let mut inv = vec![0.0; n * n];
        for k in 0..n {
            let wk = &w[k * n..k * n + n];
            // W is lower triangular: row k is zero beyond column k.
            for i in 0..=k {
                let wki = wk[i];
                if wki == 0.0 {
                    continue;
                }
                let dst = &mut inv[i * n..i * n + n];
                for (d, &v) in dst[..=k].iter_mut().zip(&wk[..=k]) {
                    *d += wki * v;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                inv[j * n + i] = inv[i * n + j];
            }
        }
        inv
    }
}

impl LowerRows for Cholesky {
    fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let o = packed_offset(i);
        &self.packed[o..o + i + 1]
    }
}

/// In-place Cholesky of rows `first..n`, assuming rows `..first` are already
/// factored. `jitter` is only reported in the error.
fn factor_in_place(packed: &mut [f64], n: usize, first: usize, jitter: f64) -> Result<()> {
    factor_dispatch::<Cholesky>(packed, n, first, jitter)
}

// The type parameter only satisfies the dispatch macro.
dispatch!(fn factor_dispatch<T: Sized>(packed: &mut [f64], n: usize, first: usize, jitter: f64) -> Result<()> = factor_kernel);

#[inline(always)]
fn factor_kernel<A: Arith, T: ?Sized>(packed: &mut [f64], n: usize, first: usize, jitter: f64) -> Result<()> {
    const R: usize = 4;
    let mut i0 = first;
    while i0 < n {
        let rows = (n - i0).min(R);
        let o = packed_offset(i0);
        let (before, block) = packed.split_at_mut(o);
        // Columns left of the block: each earlier row is read once for all
        // rows of the block.
        if rows == R {
            let (r0, rest) = block.split_at_mut(i0 + 1);
            let (r1, rest) = rest.split_at_mut(i0 + 2);
            let (r2, r3) = rest.split_at_mut(i0 + 3);
            for j in 0..i0 {
                let oj = packed_offset(j);
                let row_j = &before[oj..oj + j + 1];
                let d = dot4::<A>(&row_j[..j], [&r0[..j], &r1[..j], &r2[..j], &r3[..j]]);
                r0[j] = (r0[j] - d[0]) / row_j[j];
                r1[j] = (r1[j] - d[1]) / row_j[j];
                r2[j] = (r2[j] - d[2]) / row_j[j];
                r3[j] = (r3[j] - d[3]) / row_j[j];
            }
        } else {
            for r in 0..rows {
                let row_i = &mut block[packed_offset(i0 + r) - o..][..i0];
                for j in 0..i0 {
                    let oj = packed_offset(j);
                    let row_j = &before[oj..oj + j + 1];
                    row_i[j] = (row_i[j] - dot::<A>(&row_i[..j], &row_j[..j])) / row_j[j];
                }
            }
        }
        // The diagonal block.
        for r in 0..rows {
            let i = i0 + r;
            let (prev, cur) = block.split_at_mut(packed_offset(i) - o);
            let row_i = &mut cur[..i + 1];
            for j in i0..i {
                let row_j = &prev[packed_offset(j) - o..][..j + 1];
                row_i[j] = (row_i[j] - dot::<A>(&row_i[..j], &row_j[..j])) / row_j[j];
            }
            let s = row_i[i] - dot::<A>(&row_i[..i], &row_i[..i]);
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: s, jitter });
            }
            row_i[i] = s.sqrt();
        }
        i0 += rows;
    }
    Ok(())
}

dispatch!(fn schur_dispatch<T: Sized>(rows: &[f64], offsets: &[usize], block: &[f64], n: usize, m: usize) -> Vec<f64> = schur_kernel);

#[inline(always)]
fn schur_kernel<A: Arith, T: ?Sized>(rows: &[f64], offsets: &[usize], block: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut schur = vec![0.0; packed_offset(m)];
    for j in 0..m {
        let bj = &rows[offsets[j]..offsets[j] + n];
        for k in 0..=j {
            let bk = &rows[offsets[k]..offsets[k] + n];
            schur[packed_offset(j) + k] = block[packed_offset(j) + k] - dot::<A>(bj, bk);
        }
    }
    schur
}

/// Dot products of `a` with four vectors of the same length.
#[inline(always)]
fn dot4<A: Arith>(a: &[f64], b: [&[f64]; 4]) -> [f64; 4] {
    let n = a.len();
    let b = b.map(|v| &v[..n]);
    let mut acc = [[0.0_f64; 4]; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        let x: &[f64; 4] = a[k..k + 4].try_into().expect("chunk");
        for (acc, b) in acc.iter_mut().zip(&b) {
            let y: &[f64; 4] = b[k..k + 4].try_into().expect("chunk");
            for l in 0..4 {
                acc[l] = A::mul_add(x[l], y[l], acc[l]);
            }
        }
    }
    let mut out = [0.0; 4];
    for (r, (acc, b)) in out.iter_mut().zip(acc.iter().zip(&b)) {
        let mut tail = 0.0;
        for k in 4 * chunks..n {
            tail = A::mul_add(a[k], b[k], tail);
        }
        *r = (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    }
    out
}

/// A base factor extended by `m` extra rows: the factor of
/// `[[A, Cᵀ], [C, D]]` given the factor of `A`.
#[derive(Clone, Debug)]
pub struct ExtendedCholesky<'a> {
    base: &'a Cholesky,
    m: usize,
    rows: Vec<f64>,
    offsets: Vec<usize>,
    jitter: f64,
}

impl<'a> ExtendedCholesky<'a> {
    /// `cross` holds `C` row-major (`m x n`); `block` holds `D` packed.
    pub fn new(base: &'a Cholesky, cross: &[f64], block: &[f64], m: usize, policy: JitterPolicy) -> Result<Self> {
        let n = base.n;
        assert_eq!(cross.len(), m * n);
        assert_eq!(block.len(), packed_offset(m));
        // B = C L⁻ᵀ, i.e. each row of B solves L bᵀ = cᵀ. Interleave so all
        // rows are solved in one pass over L.
        let mut interleaved = vec![0.0; n * m];
        for j in 0..m {
            for i in 0..n {
                interleaved[i * m + j] = cross[j * n + i];
            }
        }
        base.forward_solve_multi(&mut interleaved, m);
        let il = &interleaved;
        let b_row = |j: usize| (0..n).map(move |i| il[i * m + j]);

        let offsets: Vec<usize> = (0..m).map(|j| j * (n + 1) + j * j.saturating_sub(1) / 2).collect();
        let total = m * n + packed_offset(m);
        let mut rows = vec![0.0; total];
        for j in 0..m {
            let o = offsets[j];
            for (dst, v) in rows[o..o + n].iter_mut().zip(b_row(j)) {
                *dst = v;
            }
        }
        // Schur complement S = D - B Bᵀ, packed.
        let schur = schur_dispatch::<Cholesky>(&rows, &offsets, block, n, m);
        let tail = Cholesky::factor_escalating(schur, m, policy)?;
        for j in 0..m {
            let o = offsets[j] + n;
            rows[o..o + j + 1].copy_from_slice(tail.row(j));
        }
        Ok(Self {
            base,
            m,
            rows,
            offsets,
            jitter: tail.jitter,
        })
    }

    pub fn extra(&self) -> usize {
        self.m
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

impl LowerRows for ExtendedCholesky<'_> {
    fn dim(&self) -> usize {
        self.base.n + self.m
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let n = self.base.n;
        if i < n {
            self.base.row(i)
        } else {
            let o = self.offsets[i - n];
            &self.rows[o..o + i + 1]
        }
    }
}
