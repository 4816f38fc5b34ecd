//! One-sided martingale transforms and one-sided maximal functions.
//!
//! The transform reads Haar data on right halves and writes on left halves:
//!
//! ```text
//! T f = Σ_I ε_I ⟨f, h_{I+}⟩ h_{I-}
//! ```
//!
//! The sum runs over levels `0..=N-2`; finer intervals have no grandchildren
//! and their Haar pairings against grid functions vanish. All transforms run
//! in `O(N 2^N)` and visit levels coarse to fine, so the per-cell summation
//! order is fixed.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DyadicGrid, DyadicSums, GridFunction, IntervalId, PrefixSums};
use crate::weight::Weight;

/// Largest depth for which [`operator_matrix`] materializes a dense matrix.
pub const MAX_MATRIX_DEPTH: u32 = 12;

/// Multiplier coefficients `ε_I ∈ {-1, 0, +1}` for levels `0..=N-2`.
///
/// A zero coefficient removes `I` from the sum, so restriction to a
/// subcollection is just zeroing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignPattern {
    grid: DyadicGrid,
    signs: Vec<i8>,
}

#[inline]
fn slot(id: IntervalId) -> usize {
    (1usize << id.level) - 1 + id.index
}

impl SignPattern {
    /// Highest level carrying a coefficient.
    #[inline]
    pub fn top_level(grid: DyadicGrid) -> u32 {
        grid.depth() - 2
    }

    fn len_for(grid: DyadicGrid) -> usize {
        (1usize << (grid.depth() - 1)) - 1
    }

    pub fn zeros(grid: DyadicGrid) -> Self {
        Self {
            grid,
            signs: vec![0; Self::len_for(grid)],
        }
    }

    pub fn all_plus(grid: DyadicGrid) -> Self {
        Self {
            grid,
            signs: vec![1; Self::len_for(grid)],
        }
    }

    pub fn from_fn(grid: DyadicGrid, mut f: impl FnMut(IntervalId) -> i8) -> Result<Self> {
        let signs = grid
            .intervals_through(Self::top_level(grid))
            .map(|id| {
                let s = f(id);
                check_sign(s).map(|_| s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, signs })
    }

    /// Level-major sign vector as produced by [`signs`](Self::signs).
    pub fn from_signs(grid: DyadicGrid, signs: Vec<i8>) -> Result<Self> {
        if signs.len() != Self::len_for(grid) {
            return Err(Error::Length {
                expected: Self::len_for(grid),
                got: signs.len(),
            });
        }
        for &s in &signs {
            check_sign(s)?;
        }
        Ok(Self { grid, signs })
    }

    /// Independent fair ±1 signs.
    pub fn random<R: Rng + ?Sized>(grid: DyadicGrid, rng: &mut R) -> Self {
        let signs = (0..Self::len_for(grid))
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect();
        Self { grid, signs }
    }

    #[inline]
    pub fn grid(&self) -> DyadicGrid {
        self.grid
    }

    #[inline]
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// `ε_I`; zero for intervals finer than level `N-2`.
    #[inline]
    pub fn get(&self, id: IntervalId) -> i8 {
        if id.level > Self::top_level(self.grid) {
            0
        } else {
            self.signs[slot(id)]
        }
    }

    pub fn set(&mut self, id: IntervalId, s: i8) -> Result<()> {
        self.grid.check(id)?;
        check_sign(s)?;
        if id.level > Self::top_level(self.grid) {
            return Err(Error::NoChildren(id, "grandchildren", self.grid.depth()));
        }
        self.signs[slot(id)] = s;
        Ok(())
    }

    pub fn flip(&mut self, id: IntervalId) {
        let i = slot(id);
        self.signs[i] = -self.signs[i];
    }

    /// Zero every coefficient outside `keep`.
    pub fn restrict(&self, keep: impl Fn(IntervalId) -> bool) -> Self {
        let mut out = self.clone();
        for (id, s) in self.grid.intervals_through(Self::top_level(self.grid)).zip(out.signs.iter_mut()) {
            if !keep(id) {
                *s = 0;
            }
        }
        out
    }

    /// Intervals with a nonzero coefficient.
    pub fn support(&self) -> Vec<IntervalId> {
        self.iter().filter(|&(_, s)| s != 0).map(|(id, _)| id).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (IntervalId, i8)> + '_ {
        self.grid
            .intervals_through(Self::top_level(self.grid))
            .zip(self.signs.iter().copied())
    }

    pub fn is_full(&self) -> bool {
        self.signs.iter().all(|&s| s != 0)
    }
}

fn check_sign(s: i8) -> Result<()> {
    if (-1..=1).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain(format!("sign {s} not in {{-1, 0, 1}}")))
    }
}

/// One cell's truncation threshold `δ(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Threshold {
    /// `δ = 0`: every scale passes.
    Zero,
    /// `δ = 2^-level`: scales `|I| > 2^-level`, i.e. levels `< level`, pass.
    Scale(u32),
    /// `δ = ∞`: nothing passes.
    Infinite,
}

impl Threshold {
    /// Number of coarse levels that pass the cutoff.
    #[inline]
    pub fn bound(self) -> u32 {
        match self {
            Threshold::Zero => u32::MAX,
            Threshold::Scale(l) => l,
            Threshold::Infinite => 0,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Zero => write!(f, "0"),
            Threshold::Scale(l) => write!(f, "2^-{l}"),
            Threshold::Infinite => write!(f, "inf"),
        }
    }
}

/// The measurable `δ` of the linearized truncations, quantized per cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationProfile {
    grid: DyadicGrid,
    thresholds: Vec<Threshold>,
}

impl TruncationProfile {
    /// `δ ≡ 0`.
    pub fn untruncated(grid: DyadicGrid) -> Self {
        Self::constant(grid, Threshold::Zero)
    }

    pub fn constant(grid: DyadicGrid, t: Threshold) -> Self {
        Self {
            grid,
            thresholds: vec![t; grid.cells()],
        }
    }

    pub fn from_thresholds(grid: DyadicGrid, thresholds: Vec<Threshold>) -> Result<Self> {
        if thresholds.len() != grid.cells() {
            return Err(Error::Length {
                expected: grid.cells(),
                got: thresholds.len(),
            });
        }
        if let Some(Threshold::Scale(l)) = thresholds
            .iter()
            .find(|t| matches!(t, Threshold::Scale(l) if *l > grid.depth()))
        {
            return Err(Error::Domain(format!("threshold 2^-{l} finer than the grid")));
        }
        Ok(Self { grid, thresholds })
    }

    /// Each cell uniformly from `{0, ∞} ∪ {2^-l : 0 <= l <= N}`.
    pub fn random<R: Rng + ?Sized>(grid: DyadicGrid, rng: &mut R) -> Self {
        let n = grid.depth();
        let thresholds = (0..grid.cells())
            .map(|_| match rng.gen_range(0..n + 3) {
                0 => Threshold::Zero,
                1 => Threshold::Infinite,
                k => Threshold::Scale(k - 2),
            })
            .collect();
        Self { grid, thresholds }
    }

    #[inline]
    pub fn grid(&self) -> DyadicGrid {
        self.grid
    }

    #[inline]
    pub fn threshold(&self, cell: usize) -> Threshold {
        self.thresholds[cell]
    }

    pub fn thresholds(&self) -> &[Threshold] {
        &self.thresholds
    }

    /// Does the scale of a level-`level` interval pass the cutoff at `cell`?
    #[inline]
    pub fn includes(&self, cell: usize, level: u32) -> bool {
        level < self.thresholds[cell].bound()
    }

    fn is_untruncated(&self) -> bool {
        self.thresholds.iter().all(|&t| t == Threshold::Zero)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dyadic,
    Sliding,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dyadic" => Ok(Mode::Dyadic),
            "sliding" => Ok(Mode::Sliding),
            other => Err(format!("unknown mode '{other}' (expected dyadic|sliding)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dyadic => "dyadic",
            Mode::Sliding => "sliding",
        })
    }
}

fn same_grid(a: DyadicGrid, b: DyadicGrid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "grid depth mismatch: {} vs {}",
            a.depth(),
            b.depth()
        )))
    }
}

/// `⟨f, h_I⟩` from precomputed dyadic sums.
#[inline]
fn pairing(sums: &DyadicSums, id: IntervalId, dx: f64) -> f64 {
    (sums.sum(id.right()) - sums.sum(id.left())) * dx / id.length().sqrt()
}

/// Add `c h_J` onto `out`.
#[inline]
fn add_haar(grid: DyadicGrid, out: &mut [f64], j: IntervalId, c: f64) {
    let amp = c / j.length().sqrt();
    for v in &mut out[grid.cell_range(j.left())] {
        *v -= amp;
    }
    for v in &mut out[grid.cell_range(j.right())] {
        *v += amp;
    }
}

/// `⟨f, h_I⟩ = ∫ f h_I dx`, positive on the right half.
pub fn haar_coeff(f: &GridFunction, id: IntervalId) -> Result<f64> {
    let grid = f.grid();
    grid.children(id)?;
    Ok(pairing(&DyadicSums::new(f), id, grid.cell_width()))
}

/// Runs the forward sum level by level, handing the running partial sum to
/// `after_level` once each level is complete.
fn forward_levels(f: &GridFunction, eps: &SignPattern, mut after_level: impl FnMut(u32, &[f64])) -> Result<()> {
    let grid = f.grid();
    same_grid(grid, eps.grid())?;
    let sums = DyadicSums::new(f);
    let dx = grid.cell_width();
    let mut acc = vec![0.0; grid.cells()];
    for level in 0..=SignPattern::top_level(grid) {
        for k in 0..1usize << level {
            let id = IntervalId::new(level, k);
            let e = eps.get(id);
            if e != 0 {
                let c = e as f64 * pairing(&sums, id.right(), dx);
                add_haar(grid, &mut acc, id.left(), c);
            }
        }
        after_level(level, &acc);
    }
    Ok(())
}

/// `T f = Σ ε_I ⟨f, h_{I+}⟩ h_{I-}`.
pub fn transform(f: &GridFunction, eps: &SignPattern) -> Result<GridFunction> {
    let grid = f.grid();
    let mut out = vec![0.0; grid.cells()];
    let top = SignPattern::top_level(grid);
    forward_levels(f, eps, |level, acc| {
        if level == top {
            out.copy_from_slice(acc);
        }
    })?;
    Ok(GridFunction::from_vec(grid, out))
}

/// `T* g = Σ ε_I ⟨g, h_{I-}⟩ h_{I+}`.
pub fn adjoint_transform(g: &GridFunction, eps: &SignPattern) -> Result<GridFunction> {
    let grid = g.grid();
    same_grid(grid, eps.grid())?;
    let sums = DyadicSums::new(g);
    let dx = grid.cell_width();
    let mut out = vec![0.0; grid.cells()];
    for (id, e) in eps.iter() {
        if e != 0 {
            let c = e as f64 * pairing(&sums, id.left(), dx);
            add_haar(grid, &mut out, id.right(), c);
        }
    }
    Ok(GridFunction::from_vec(grid, out))
}

/// `T_♯ f`: at each cell, the largest absolute partial sum over scale cutoffs.
pub fn maximal_truncation(f: &GridFunction, eps: &SignPattern) -> Result<GridFunction> {
    let grid = f.grid();
    let mut out = vec![0.0f64; grid.cells()];
    forward_levels(f, eps, |_, acc| {
        for (o, a) in out.iter_mut().zip(acc) {
            *o = o.max(a.abs());
        }
    })?;
    Ok(GridFunction::from_vec(grid, out))
}

/// `T_δ f(x) = Σ_{|I| > δ(x)} ε_I ⟨f, h_{I+}⟩ h_{I-}(x)`.
pub fn linearized_transform(f: &GridFunction, eps: &SignPattern, delta: &TruncationProfile) -> Result<GridFunction> {
    let grid = f.grid();
    same_grid(grid, delta.grid())?;
    let mut out = vec![0.0; grid.cells()];
    forward_levels(f, eps, |level, acc| {
        for (i, (o, a)) in out.iter_mut().zip(acc).enumerate() {
            if delta.includes(i, level) {
                *o = *a;
            }
        }
    })?;
    Ok(GridFunction::from_vec(grid, out))
}

/// `T_{δ,K}`: [`linearized_transform`] with `ε` zeroed outside `K`.
pub fn linearized_transform_restricted(
    f: &GridFunction,
    eps: &SignPattern,
    delta: &TruncationProfile,
    k: impl Fn(IntervalId) -> bool,
) -> Result<GridFunction> {
    linearized_transform(f, &eps.restrict(k), delta)
}

/// `T*_δ g = Σ_I ε_I ⟨g, h_{I-} 1_{|I| > δ(·)}⟩ h_{I+}`.
pub fn linearized_adjoint(g: &GridFunction, eps: &SignPattern, delta: &TruncationProfile) -> Result<GridFunction> {
    let grid = g.grid();
    same_grid(grid, eps.grid())?;
    same_grid(grid, delta.grid())?;
    if delta.is_untruncated() {
        return adjoint_transform(g, eps);
    }
    let dx = grid.cell_width();
    let mut out = vec![0.0; grid.cells()];
    let mut masked = vec![0.0; grid.cells()];
    for level in 0..=SignPattern::top_level(grid) {
        let active: Vec<_> = (0..1usize << level)
            .map(|k| IntervalId::new(level, k))
            .filter(|&id| eps.get(id) != 0)
            .collect();
        if active.is_empty() {
            continue;
        }
        for (i, (m, v)) in masked.iter_mut().zip(g.values()).enumerate() {
            *m = if delta.includes(i, level) { *v } else { 0.0 };
        }
        let sums = DyadicSums::from_values(grid, &masked);
        for id in active {
            let c = eps.get(id) as f64 * pairing(&sums, id.left(), dx);
            add_haar(grid, &mut out, id.right(), c);
        }
    }
    Ok(GridFunction::from_vec(grid, out))
}

/// `T*_{δ,K}`: the linearized adjoint summed over `I ∈ K` only.
pub fn linearized_adjoint_restricted(
    g: &GridFunction,
    eps: &SignPattern,
    delta: &TruncationProfile,
    k: impl Fn(IntervalId) -> bool,
) -> Result<GridFunction> {
    linearized_adjoint(g, &eps.restrict(k), delta)
}

/// `M_+ f(x) = sup_{x ∈ I^-} ⟨|f|⟩_{I^+}`; zero where no interval qualifies.
pub fn max_plus(f: &GridFunction, mode: Mode) -> GridFunction {
    let grid = f.grid();
    let a = f.abs();
    let out = match mode {
        Mode::Dyadic => {
            let sums = DyadicSums::new(&a);
            let mut out = vec![0.0f64; grid.cells()];
            for id in grid.intervals_through(grid.depth() - 1) {
                let avg = sums.average(id.right());
                for o in &mut out[grid.cell_range(id.left())] {
                    *o = o.max(avg);
                }
            }
            out
        }
        Mode::Sliding => sliding_max_plus(a.values()),
    };
    GridFunction::from_vec(grid, out)
}

/// `M_- f(x) = sup_{x ∈ I^+} ⟨|f|⟩_{I^-}`, the mirror image of [`max_plus`].
pub fn max_minus(f: &GridFunction, mode: Mode) -> GridFunction {
    max_plus(&f.reversed(), mode).reversed()
}

/// All windows `[s, s+2m)`: the value at `x ∈ [s, s+m)` is the average over
/// `[s+m, s+2m)`. One monotone deque pass per half-length `m`.
fn sliding_max_plus(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let pre = PrefixSums::new(a);
    let mut out = vec![0.0f64; n];
    let mut dq: VecDeque<(usize, f64)> = VecDeque::new();
    for m in 1..=n / 2 {
        let last_start = n - 2 * m;
        dq.clear();
        let mut next = 0usize;
        for (x, o) in out.iter_mut().enumerate().take(n - m) {
            // admissible starts: x+1-m ..= min(x, last_start)
            let hi = x.min(last_start);
            while next <= hi {
                let v = pre.average(next + m, next + 2 * m);
                while dq.back().is_some_and(|&(_, b)| b <= v) {
                    dq.pop_back();
                }
                dq.push_back((next, v));
                next += 1;
            }
            let lo = (x + 1).saturating_sub(m);
            while dq.front().is_some_and(|&(s, _)| s < lo) {
                dq.pop_front();
            }
            if let Some(&(_, v)) = dq.front() {
                *o = o.max(v);
            }
        }
    }
    out
}

/// `M_μ^+ f(x) = sup_{x ∈ I^-} μ(I^+)^-1 ∫_{I^+} |f| dμ` over dyadic `I`.
pub fn max_plus_weighted(f: &GridFunction, mu: &Weight) -> Result<GridFunction> {
    let grid = f.grid();
    same_grid(grid, mu.grid())?;
    let fm: Vec<f64> = f.values().iter().zip(mu.values()).map(|(v, m)| v.abs() * m).collect();
    let num = DyadicSums::from_values(grid, &fm);
    let den = DyadicSums::new(mu.density());
    let mut out = vec![0.0f64; grid.cells()];
    for id in grid.intervals_through(grid.depth() - 1) {
        let avg = num.sum(id.right()) / den.sum(id.right());
        for o in &mut out[grid.cell_range(id.left())] {
            *o = o.max(avg);
        }
    }
    Ok(GridFunction::from_vec(grid, out))
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// The `2^N × 2^N` matrix of [`transform`] in the finest-cell basis.
pub fn operator_matrix(eps: &SignPattern, grid: DyadicGrid) -> Result<DenseMatrix> {
    same_grid(grid, eps.grid())?;
    if grid.depth() > MAX_MATRIX_DEPTH {
        return Err(Error::Resource(format!(
            "operator_matrix needs depth <= {MAX_MATRIX_DEPTH}, got {}",
            grid.depth()
        )));
    }
    let n = grid.cells();
    let dx = grid.cell_width();
    let mut m = DenseMatrix::zeros(n, n);
    for (id, e) in eps.iter() {
        if e == 0 {
            continue;
        }
        let (minus, plus) = (id.left(), id.right());
        let a_out = 1.0 / minus.length().sqrt();
        let a_in = e as f64 * dx / plus.length().sqrt();
        for i in grid.cell_range(minus) {
            let hi = if grid.cell_range(minus.right()).contains(&i) { a_out } else { -a_out };
            for j in grid.cell_range(plus) {
                let hj = if grid.cell_range(plus.right()).contains(&j) { a_in } else { -a_in };
                m.add(i, j, hi * hj);
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(n: u32) -> DyadicGrid {
        DyadicGrid::new(n).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn random_fn(grid: DyadicGrid, rng: &mut ChaCha8Rng) -> GridFunction {
        GridFunction::from_fn(grid, |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn haar_coeff_examples() {
        let grid = g(2);
        let c = GridFunction::constant(grid, 3.5);
        for id in grid.intervals_through(1) {
            assert_eq!(haar_coeff(&c, id).unwrap(), 0.0);
        }
        let f = GridFunction::indicator(grid, IntervalId::new(2, 3), 1.0).unwrap();
        let v = haar_coeff(&f, IntervalId::new(1, 1)).unwrap();
        assert!((v - 2f64.sqrt() / 4.0).abs() < 1e-15);

        let s2 = 2f64.sqrt();
        let h = GridFunction::new(grid, vec![-s2, s2, 0.0, 0.0]).unwrap();
        assert!((haar_coeff(&h, IntervalId::new(1, 0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(haar_coeff(&h, IntervalId::new(2, 0)), Err(Error::NoChildren(..))));
    }

    #[test]
    fn transform_of_corner_indicator() {
        let grid = g(2);
        let f = GridFunction::indicator(grid, IntervalId::new(2, 3), 1.0).unwrap();
        let tf = transform(&f, &SignPattern::all_plus(grid)).unwrap();
        assert!(close(tf.values(), &[-0.5, 0.5, 0.0, 0.0], 1e-15));
        let one = GridFunction::constant(grid, 1.0);
        assert!(transform(&one, &SignPattern::all_plus(grid)).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_left_haar_lands_on_right_half() {
        let grid = g(2);
        let gfun = GridFunction::new(grid, vec![-1.0, 1.0, 0.0, 0.0]).unwrap();
        let out = adjoint_transform(&gfun, &SignPattern::all_plus(grid)).unwrap();
        // ⟨g, h_{[0,1/2)}⟩ = √2/2, times h_{[1/2,1)} = ±√2
        assert!(close(out.values(), &[0.0, 0.0, -1.0, 1.0], 1e-15));
        let m = operator_matrix(&SignPattern::all_plus(grid), grid).unwrap().transpose();
        assert!(close(&m.mul_vec(gfun.values()), out.values(), 1e-15));
    }

    #[test]
    fn matrix_examples() {
        let grid = g(2);
        let z = operator_matrix(&SignPattern::zeros(grid), grid).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let m = operator_matrix(&SignPattern::all_plus(grid), grid).unwrap();
        // rank one: the only term is I = [0,1)
        let expected = [[0.0, 0.0, 0.5, -0.5], [0.0, 0.0, -0.5, 0.5]];
        for i in 0..4 {
            for j in 0..4 {
                let want = match i {
                    0 => -expected[1][j] * 1.0,
                    1 => -expected[0][j],
                    _ => 0.0,
                };
                assert!((m.get(i, j) - want).abs() < 1e-15, "({i},{j})");
            }
        }
        assert!(matches!(
            operator_matrix(&SignPattern::zeros(g(13)), g(13)),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn transform_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = g(4);
        for _ in 0..20 {
            let f = random_fn(grid, &mut rng);
            let eps = SignPattern::random(grid, &mut rng);
            let m = operator_matrix(&eps, grid).unwrap();
            let tf = transform(&f, &eps).unwrap();
            assert!(close(tf.values(), &m.mul_vec(f.values()), 1e-12));
        }
    }

    #[test]
    fn maximal_truncation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = g(5);
        let f = random_fn(grid, &mut rng);
        let single = SignPattern::from_fn(grid, |id| if id == IntervalId::new(1, 1) { -1 } else { 0 }).unwrap();
        let tf = transform(&f, &single).unwrap().abs();
        assert!(close(maximal_truncation(&f, &single).unwrap().values(), tf.values(), 0.0));
        let one = GridFunction::constant(grid, 2.0);
        assert!(maximal_truncation(&one, &SignPattern::all_plus(grid)).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maximal_truncation_is_max_over_constant_profiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = g(3);
        for _ in 0..20 {
            let f = random_fn(grid, &mut rng);
            let eps = SignPattern::random(grid, &mut rng);
            let mut best = vec![0.0f64; grid.cells()];
            for l in 1..grid.depth() {
                let t = linearized_transform(&f, &eps, &TruncationProfile::constant(grid, Threshold::Scale(l))).unwrap();
                for (b, v) in best.iter_mut().zip(t.values()) {
                    *b = b.max(v.abs());
                }
            }
            assert!(close(maximal_truncation(&f, &eps).unwrap().values(), &best, 1e-15));
        }
    }

    #[test]
    fn linearized_transform_extremes_and_alternating_profile() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = g(3);
        let f = random_fn(grid, &mut rng);
        let eps = SignPattern::random(grid, &mut rng);
        let none = linearized_transform(&f, &eps, &TruncationProfile::constant(grid, Threshold::Infinite)).unwrap();
        assert!(none.values().iter().all(|&v| v == 0.0));
        let all = linearized_transform(&f, &eps, &TruncationProfile::untruncated(grid)).unwrap();
        assert_eq!(all, transform(&f, &eps).unwrap());

        // δ alternates 1/2, 0: even cells see level 0 only, odd cells see everything
        let th = (0..8).map(|i| if i % 2 == 0 { Threshold::Scale(1) } else { Threshold::Zero }).collect();
        let delta = TruncationProfile::from_thresholds(grid, th).unwrap();
        let lin = linearized_transform(&f, &eps, &delta).unwrap();
        let coarse = linearized_transform(&f, &eps.restrict(|id| id.level == 0), &TruncationProfile::untruncated(grid)).unwrap();
        for i in 0..8 {
            let want = if i % 2 == 0 { coarse.values()[i] } else { all.values()[i] };
            assert!((lin.values()[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn linearized_adjoint_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grid = g(4);
        for _ in 0..30 {
            let f = random_fn(grid, &mut rng);
            let gf = random_fn(grid, &mut rng);
            let eps = SignPattern::random(grid, &mut rng);
            let delta = TruncationProfile::random(grid, &mut rng);
            let keep: Vec<bool> = (0..16).map(|_| rng.gen()).collect();
            let k = |id: IntervalId| keep[slot(id) % 16];
            let lhs = linearized_transform_restricted(&f, &eps, &delta, k).unwrap().inner(&gf).unwrap();
            let rhs = f.inner(&linearized_adjoint_restricted(&gf, &eps, &delta, k).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn linearized_adjoint_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = g(4);
        let gf = random_fn(grid, &mut rng);
        let eps = SignPattern::random(grid, &mut rng);
        let delta = TruncationProfile::random(grid, &mut rng);
        let empty = linearized_adjoint_restricted(&gf, &eps, &delta, |_| false).unwrap();
        assert!(empty.values().iter().all(|&v| v == 0.0));
        let full = linearized_adjoint_restricted(&gf, &eps, &TruncationProfile::untruncated(grid), |_| true).unwrap();
        assert_eq!(full, adjoint_transform(&gf, &eps).unwrap());
    }

    #[test]
    fn max_plus_examples() {
        let grid = g(2);
        let one = GridFunction::constant(grid, 1.0);
        assert_eq!(max_plus(&one, Mode::Dyadic).values(), &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(max_plus(&one, Mode::Sliding).values(), &[1.0, 1.0, 1.0, 0.0]);
        let f = GridFunction::new(grid, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(max_plus(&f, Mode::Dyadic).values(), &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(max_minus(&one, Mode::Dyadic).values(), &[0.0, 1.0, 1.0, 1.0]);
        let z = GridFunction::zeros(grid);
        assert!(max_plus(&z, Mode::Sliding).values().iter().all(|&v| v == 0.0));
    }

    /// Brute force over every grid-aligned window.
    fn sliding_oracle(a: &[f64]) -> Vec<f64> {
        let n = a.len();
        let mut out = vec![0.0f64; n];
        for m in 1..=n / 2 {
            for s in 0..=n - 2 * m {
                let avg = a[s + m..s + 2 * m].iter().map(|v| v.abs()).sum::<f64>() / m as f64;
                for o in &mut out[s..s + m] {
                    *o = o.max(avg);
                }
            }
        }
        out
    }

    #[test]
    fn sliding_max_plus_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for depth in 2..=6 {
            let grid = g(depth);
            for _ in 0..5 {
                let f = random_fn(grid, &mut rng);
                let fast = max_plus(&f, Mode::Sliding);
                assert!(close(fast.values(), &sliding_oracle(f.values()), 1e-12));
                let dy = max_plus(&f, Mode::Dyadic);
                assert!(dy.values().iter().zip(fast.values()).all(|(d, s)| d <= &(s + 1e-12)));
            }
        }
    }

    #[test]
    fn weighted_max_plus_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let grid = g(5);
        let f = random_fn(grid, &mut rng);
        let unit = Weight::unit(grid, 2.0).unwrap();
        assert_eq!(max_plus_weighted(&f, &unit).unwrap(), max_plus(&f, Mode::Dyadic));

        let mu = Weight::new(GridFunction::from_fn(grid, |_| rng.gen_range(0.1..10.0)).unwrap(), 2.0).unwrap();
        let one = GridFunction::constant(grid, 1.0);
        let m1 = max_plus_weighted(&one, &mu).unwrap();
        let last = grid.cells() - 1;
        for (i, v) in m1.values().iter().enumerate() {
            let want = if i == last { 0.0 } else { 1.0 };
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn weighted_max_plus_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let grid = g(3);
        let mu = Weight::new(GridFunction::from_fn(grid, |_| rng.gen_range(0.1..10.0)).unwrap(), 2.0).unwrap();
        for j in grid.intervals_through(3) {
            let f = GridFunction::indicator(grid, j, 1.0).unwrap();
            let fast = max_plus_weighted(&f, &mu).unwrap();
            for x in 0..grid.cells() {
                let mut best = 0.0f64;
                for id in grid.intervals_through(2) {
                    if grid.cell_range(id.left()).contains(&x) {
                        let r = grid.cell_range(id.right());
                        let num: f64 = r.clone().map(|c| f.values()[c] * mu.values()[c]).sum();
                        let den: f64 = r.map(|c| mu.values()[c]).sum();
                        best = best.max(num / den);
                    }
                }
                assert!((fast.values()[x] - best).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sign_pattern_bookkeeping() {
        let grid = g(4);
        let mut e = SignPattern::zeros(grid);
        e.set(IntervalId::new(2, 3), -1).unwrap();
        assert!(e.set(IntervalId::new(3, 0), 1).is_err());
        assert!(e.set(IntervalId::new(0, 0), 2).is_err());
        assert_eq!(e.support(), vec![IntervalId::new(2, 3)]);
        assert_eq!(e.get(IntervalId::new(3, 1)), 0);
        let back = SignPattern::from_signs(grid, e.signs().to_vec()).unwrap();
        assert_eq!(back, e);
        assert!(SignPattern::all_plus(grid).is_full());
    }
}
