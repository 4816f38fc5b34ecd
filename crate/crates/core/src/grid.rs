//! The finite dyadic grid on `[0,1)`.
//!
//! A [`DyadicGrid`] of depth `N` splits `[0,1)` into `2^N` cells of width
//! `2^-N`. Every dyadic interval `[k 2^-l, (k+1) 2^-l)` with `l <= N` is
//! addressed by an [`IntervalId`]. Functions and weights are piecewise
//! constant on the finest cells.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest depth for which the transforms have at least one term.
pub const MIN_DEPTH: u32 = 2;
/// Largest depth accepted by [`DyadicGrid::new`] (`2^20` cells).
pub const MAX_DEPTH: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicGrid {
    depth: u32,
}

impl DyadicGrid {
    pub fn new(depth: u32) -> Result<Self> {
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
            return Err(Error::Depth {
                depth,
                min: MIN_DEPTH,
                max: MAX_DEPTH,
            });
        }
        Ok(Self { depth })
    }

    #[inline]
    pub fn depth(&self) -> u32 {
        self.depth
    }

    #[inline]
    pub fn cells(&self) -> usize {
        1usize << self.depth
    }

    #[inline]
    pub fn cell_width(&self) -> f64 {
        (-(self.depth as f64)).exp2()
    }

    #[inline]
    pub fn contains(&self, id: IntervalId) -> bool {
        id.level <= self.depth && id.index < (1usize << id.level)
    }

    pub fn check(&self, id: IntervalId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::Addressing(id, self.depth))
        }
    }

    /// Left and right halves of `id`; fails when `id` is a finest cell.
    pub fn children(&self, id: IntervalId) -> Result<(IntervalId, IntervalId)> {
        self.check(id)?;
        if id.level >= self.depth {
            return Err(Error::NoChildren(id, "children", self.depth));
        }
        Ok((id.left(), id.right()))
    }

    /// Cell indices covered by `id`.
    #[inline]
    pub fn cell_range(&self, id: IntervalId) -> Range<usize> {
        debug_assert!(self.contains(id));
        let span = 1usize << (self.depth - id.level);
        id.index * span..(id.index + 1) * span
    }

    /// Number of finest cells inside an interval at `level`.
    #[inline]
    pub fn span(&self, level: u32) -> usize {
        1usize << (self.depth - level)
    }

    /// The level-`level` ancestor of finest cell `cell`.
    #[inline]
    pub fn ancestor_of_cell(&self, cell: usize, level: u32) -> IntervalId {
        IntervalId::new(level, cell >> (self.depth - level))
    }

    /// All intervals with level `<= max_level`, level-major then index-minor.
    pub fn enumerate_intervals(&self, max_level: u32) -> Result<Vec<IntervalId>> {
        if max_level > self.depth {
            return Err(Error::Addressing(IntervalId::new(max_level, 0), self.depth));
        }
        Ok(self.intervals_through(max_level).collect())
    }

    /// Lazy variant of [`enumerate_intervals`](Self::enumerate_intervals); `max_level` is clamped.
    pub fn intervals_through(&self, max_level: u32) -> impl Iterator<Item = IntervalId> {
        let max_level = max_level.min(self.depth);
        (0..=max_level).flat_map(|level| (0..1usize << level).map(move |k| IntervalId::new(level, k)))
    }

    /// Every dyadic subinterval of `root` (including `root`) with level `<= max_level`.
    pub fn subintervals(&self, root: IntervalId, max_level: u32) -> impl Iterator<Item = IntervalId> {
        let max_level = max_level.min(self.depth);
        (root.level..=max_level).flat_map(move |level| {
            let shift = level - root.level;
            let first = root.index << shift;
            (first..first + (1usize << shift)).map(move |k| IntervalId::new(level, k))
        })
    }
}

/// Dyadic interval `[index 2^-level, (index+1) 2^-level)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntervalId {
    pub level: u32,
    pub index: usize,
}

impl IntervalId {
    pub const ROOT: IntervalId = IntervalId { level: 0, index: 0 };

    #[inline]
    pub const fn new(level: u32, index: usize) -> Self {
        Self { level, index }
    }

    /// `I^-`.
    #[inline]
    pub const fn left(self) -> Self {
        Self::new(self.level + 1, 2 * self.index)
    }

    /// `I^+`.
    #[inline]
    pub const fn right(self) -> Self {
        Self::new(self.level + 1, 2 * self.index + 1)
    }

    #[inline]
    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| Self::new(self.level - 1, self.index / 2))
    }

    /// Ancestor at `level`; `None` if `level` is finer than `self`.
    #[inline]
    pub fn ancestor(self, level: u32) -> Option<Self> {
        (level <= self.level).then(|| Self::new(level, self.index >> (self.level - level)))
    }

    #[inline]
    pub fn is_left_child(self) -> bool {
        self.level > 0 && self.index % 2 == 0
    }

    #[inline]
    pub fn is_right_child(self) -> bool {
        self.level > 0 && self.index % 2 == 1
    }

    /// `other ⊆ self`.
    #[inline]
    pub fn contains(self, other: IntervalId) -> bool {
        other.ancestor(self.level) == Some(self)
    }

    /// `other ⊊ self`.
    #[inline]
    pub fn strictly_contains(self, other: IntervalId) -> bool {
        other.level > self.level && self.contains(other)
    }

    #[inline]
    pub fn length(self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    #[inline]
    pub fn start(self) -> f64 {
        self.index as f64 * self.length()
    }

    #[inline]
    pub fn end(self) -> f64 {
        (self.index + 1) as f64 * self.length()
    }
}

impl fmt::Display for IntervalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.level, self.index)
    }
}

impl FromStr for IntervalId {
    type Err = String;

    /// Accepts `level,index` or `(level,index)`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (l, k) = t
            .split_once(',')
            .ok_or_else(|| format!("expected 'level,index', got '{s}'"))?;
        let level = l.trim().parse().map_err(|e| format!("bad level in '{s}': {e}"))?;
        let index = k.trim().parse().map_err(|e| format!("bad index in '{s}': {e}"))?;
        Ok(IntervalId::new(level, index))
    }
}

/// Piecewise-constant real function, one value per finest cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: DyadicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: DyadicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::Length {
                expected: grid.cells(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values known to be finite and of the right length.
    pub(crate) fn from_vec(grid: DyadicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cells());
        Self { grid, values }
    }

    pub fn zeros(grid: DyadicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: DyadicGrid, c: f64) -> Self {
        Self::from_vec(grid, vec![c; grid.cells()])
    }

    pub fn from_fn(grid: DyadicGrid, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.cells()).map(f).collect())
    }

    /// `c * 1_I`.
    pub fn indicator(grid: DyadicGrid, id: IntervalId, c: f64) -> Result<Self> {
        grid.check(id)?;
        let mut v = vec![0.0; grid.cells()];
        v[grid.cell_range(id)].fill(c);
        Ok(Self::from_vec(grid, v))
    }

    /// The Haar function `h_I = (1_{I^+} - 1_{I^-}) / sqrt|I|`.
    pub fn haar(grid: DyadicGrid, id: IntervalId) -> Result<Self> {
        let (lo, hi) = grid.children(id)?;
        let amp = 1.0 / id.length().sqrt();
        let mut v = vec![0.0; grid.cells()];
        v[grid.cell_range(lo)].fill(-amp);
        v[grid.cell_range(hi)].fill(amp);
        Ok(Self::from_vec(grid, v))
    }

    #[inline]
    pub fn grid(&self) -> DyadicGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn abs(&self) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|v| v.abs()).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|v| v * c).collect())
    }

    /// Pointwise product; both factors must live on the same grid.
    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self::from_vec(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        ))
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self::from_vec(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }

    /// Unweighted pairing `∫ f g dx`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_width())
    }

    /// `∫_I f dx` by direct summation.
    pub fn integral_over(&self, id: IntervalId) -> Result<f64> {
        self.grid.check(id)?;
        let s: f64 = self.values[self.grid.cell_range(id)].iter().sum();
        Ok(s * self.grid.cell_width())
    }

    /// Restriction `1_I f`.
    pub fn restrict(&self, id: IntervalId) -> Result<Self> {
        self.grid.check(id)?;
        let r = self.grid.cell_range(id);
        let v = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| if r.contains(&i) { x } else { 0.0 })
            .collect();
        Ok(Self::from_vec(self.grid, v))
    }

    /// Mirror image `x -> 1 - x`; swaps the roles of `I^-` and `I^+`.
    pub fn reversed(&self) -> Self {
        let mut v = self.values.clone();
        v.reverse();
        Self::from_vec(self.grid, v)
    }

    /// Text form: a `depth=N` header then one shortest round-trip decimal per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("depth={}\n", self.grid.depth);
        for v in &self.values {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing 'depth=N' header"))?;
        let depth: u32 = header
            .trim()
            .strip_prefix("depth=")
            .ok_or_else(|| Error::parse(1, format!("expected 'depth=N', got '{header}'")))?
            .trim()
            .parse()
            .map_err(|e| Error::parse(1, format!("bad depth: {e}")))?;
        let grid = DyadicGrid::new(depth)?;
        let mut values = Vec::with_capacity(grid.cells());
        for (i, line) in lines {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|e| Error::parse(i + 1, format!("bad value '{t}': {e}")))?;
            values.push(v);
        }
        Self::new(grid, values)
    }

    fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Domain(format!(
                "grid depth mismatch: {} vs {}",
                self.grid.depth, other.grid.depth
            )));
        }
        Ok(())
    }
}

/// Sums of a grid function over every dyadic interval, built bottom-up by
/// pairwise addition.
///
/// Pairwise summation keeps sums of a constant exact (every partial sum is a
/// power-of-two multiple), so Haar coefficients of constants vanish exactly.
#[derive(Clone, Debug)]
pub struct DyadicSums {
    grid: DyadicGrid,
    // levels[l][k] = sum of cell values in (l, k)
    levels: Vec<Vec<f64>>,
}

impl DyadicSums {
    pub fn new(f: &GridFunction) -> Self {
        Self::from_values(f.grid, &f.values)
    }

    pub(crate) fn from_values(grid: DyadicGrid, values: &[f64]) -> Self {
        let n = grid.depth as usize;
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = values.to_vec();
        for l in (0..n).rev() {
            let finer = &levels[l + 1];
            levels[l] = finer.chunks_exact(2).map(|p| p[0] + p[1]).collect();
        }
        Self { grid, levels }
    }

    #[inline]
    pub fn sum(&self, id: IntervalId) -> f64 {
        self.levels[id.level as usize][id.index]
    }

    #[inline]
    pub fn integral(&self, id: IntervalId) -> f64 {
        self.sum(id) * self.grid.cell_width()
    }

    #[inline]
    pub fn average(&self, id: IntervalId) -> f64 {
        self.sum(id) / self.grid.span(id.level) as f64
    }
}

/// Prefix sums for arbitrary grid-aligned windows.
#[derive(Clone, Debug)]
pub struct PrefixSums {
    prefix: Vec<f64>,
}

impl PrefixSums {
    pub fn new(values: &[f64]) -> Self {
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for v in values {
            acc += v;
            prefix.push(acc);
        }
        Self { prefix }
    }

    /// Sum over cells `start..end`.
    #[inline]
    pub fn sum(&self, start: usize, end: usize) -> f64 {
        self.prefix[end] - self.prefix[start]
    }

    #[inline]
    pub fn average(&self, start: usize, end: usize) -> f64 {
        self.sum(start, end) / (end - start) as f64
    }
}

/// `⟨f⟩_I = |I|^-1 ∫_I f`.
pub fn interval_average(f: &GridFunction, id: IntervalId) -> Result<f64> {
    f.grid.check(id)?;
    Ok(DyadicSums::new(f).average(id))
}

/// See [`DyadicGrid::enumerate_intervals`].
pub fn enumerate_intervals(grid: DyadicGrid, max_level: u32) -> Result<Vec<IntervalId>> {
    grid.enumerate_intervals(max_level)
}
