//! Slicing by the `A_p^+` product, the corona of stopping intervals, and the
//! level-set machinery built on it.
//!
//! For a root `I0` and integer `a`, `K_a` collects the intervals with
//!
//! ```text
//! 2^a < ⟨σ⟩_{I+}^{p-1} ⟨w⟩_{I-} <= 2^{a+1}
//! ```
//!
//! optionally also `⟨w⟩_{I-} <= 2⟨w⟩_{I0-}`, and optionally cut to the band
//! `2^-b ⟨w⟩_{I0-} < ⟨w⟩_{I-} <= 2^{1-b} ⟨w⟩_{I0-}`.
//!
//! The corona orders `K_a` by inclusion of left halves. Generation one holds
//! the members with maximal `I-`; the stopping children of `S` are the
//! maximal `J` with `J ⊆ S-` and `⟨w⟩_{J-} > 2⟨w⟩_{S-}`.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::characteristics::ainf_plus;
use crate::error::{Error, Result};
use crate::grid::{DyadicGrid, DyadicSums, GridFunction, IntervalId};
use crate::operators::{linearized_adjoint, SignPattern, TruncationProfile};
use crate::weight::Weight;

/// Which subintervals of `I0` are candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceScope {
    /// `I ⊆ I0-`.
    LeftHalf,
    /// `I ⊊ I0`.
    ProperSubintervals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub i0: IntervalId,
    pub a: i32,
    pub p: f64,
    /// Require `⟨w⟩_{I-} <= 2⟨w⟩_{I0-}`.
    pub enforce_w_bound: bool,
    pub band: Option<u32>,
    pub scope: SliceScope,
}

impl SliceSpec {
    /// Left-half candidates with the average bound, as in the distributional
    /// estimate.
    pub fn local(i0: IntervalId, a: i32, p: f64) -> Self {
        Self {
            i0,
            a,
            p,
            enforce_w_bound: true,
            band: None,
            scope: SliceScope::LeftHalf,
        }
    }

    /// All proper subintervals, no average bound, as in the corona argument.
    pub fn global(i0: IntervalId, a: i32, p: f64) -> Self {
        Self {
            i0,
            a,
            p,
            enforce_w_bound: false,
            band: None,
            scope: SliceScope::ProperSubintervals,
        }
    }

    pub fn with_band(mut self, b: u32) -> Self {
        self.band = Some(b);
        self
    }
}

/// `2^k` for any integer `k` in the normal range.
#[inline]
fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

/// The integer `a` with `2^a < x <= 2^{a+1}`, for `x > 0`.
pub fn dyadic_slice_index(x: f64) -> i32 {
    let mut a = x.log2().ceil() as i32 - 1;
    while x <= pow2(a) {
        a -= 1;
    }
    while x > pow2(a + 1) {
        a += 1;
    }
    a
}

/// Sums of `w` and `σ` over every dyadic interval, shared by the slicers.
pub struct SliceData {
    grid: DyadicGrid,
    p: f64,
    w: DyadicSums,
    sigma: DyadicSums,
}

impl SliceData {
    pub fn new(w: &Weight, sigma: &Weight, p: f64) -> Result<Self> {
        if w.grid() != sigma.grid() {
            return Err(Error::Domain("grid depth mismatch".into()));
        }
        Ok(Self {
            grid: w.grid(),
            p,
            w: DyadicSums::new(w.density()),
            sigma: DyadicSums::new(sigma.density()),
        })
    }

    /// `⟨σ⟩_{I+}^{p-1} ⟨w⟩_{I-}`.
    pub fn product(&self, id: IntervalId) -> f64 {
        self.sigma.average(id.right()).powf(self.p - 1.0) * self.w.average(id.left())
    }

    pub fn w_minus(&self, id: IntervalId) -> f64 {
        self.w.average(id.left())
    }

    pub fn sigma_mass(&self, id: IntervalId) -> f64 {
        self.sigma.integral(id)
    }

    pub fn w_mass(&self, id: IntervalId) -> f64 {
        self.w.integral(id)
    }

    /// Candidates below `I0` at levels `<= N-2`.
    pub fn candidates(&self, i0: IntervalId, scope: SliceScope) -> Vec<IntervalId> {
        let top = self.grid.depth() - 2;
        let root = match scope {
            SliceScope::LeftHalf => i0.left(),
            SliceScope::ProperSubintervals => i0,
        };
        if root.level > top {
            return Vec::new();
        }
        let mut v: Vec<IntervalId> = self.grid.subintervals(root, top).collect();
        if scope == SliceScope::ProperSubintervals {
            v.retain(|&id| id != i0);
        }
        v.sort();
        v
    }

    /// Band index `b >= 0` with `2^-b W < ⟨w⟩_{I-} <= 2^{1-b} W`, `W =
    /// ⟨w⟩_{I0-}`; `None` above `2W`.
    pub fn band_of(&self, id: IntervalId, i0: IntervalId) -> Option<u32> {
        let v = self.w_minus(id);
        let root = self.w_minus(i0);
        if v > 2.0 * root {
            return None;
        }
        let mut b = 0;
        while v * pow2(b as i32) <= root {
            b += 1;
        }
        Some(b)
    }

    pub fn slice(&self, spec: &SliceSpec) -> Result<Vec<IntervalId>> {
        self.grid.check(spec.i0)?;
        if spec.i0.level + 3 > self.grid.depth() {
            return Err(Error::Precondition(format!(
                "slicing needs level(I0) <= N-3, got {} at depth {}",
                spec.i0,
                self.grid.depth()
            )));
        }
        let (lo, hi) = (pow2(spec.a), pow2(spec.a + 1));
        let bound = 2.0 * self.w_minus(spec.i0);
        Ok(self
            .candidates(spec.i0, spec.scope)
            .into_iter()
            .filter(|&id| {
                let x = self.product(id);
                lo < x && x <= hi
            })
            .filter(|&id| !spec.enforce_w_bound || self.w_minus(id) <= bound)
            .filter(|&id| spec.band.map_or(true, |b| self.band_of(id, spec.i0) == Some(b)))
            .collect())
    }

    /// Candidate counts per slice index `a`.
    pub fn populations(&self, i0: IntervalId, scope: SliceScope, enforce_w_bound: bool) -> BTreeMap<i32, usize> {
        let bound = 2.0 * self.w_minus(i0);
        let mut out = BTreeMap::new();
        for id in self.candidates(i0, scope) {
            if enforce_w_bound && self.w_minus(id) > bound {
                continue;
            }
            *out.entry(dyadic_slice_index(self.product(id))).or_insert(0) += 1;
        }
        out
    }
}

/// `K_a`, optionally with the average bound and a band; sorted.
pub fn slice_ka(w: &Weight, sigma: &Weight, spec: &SliceSpec) -> Result<Vec<IntervalId>> {
    SliceData::new(w, sigma, spec.p)?.slice(spec)
}

/// The slice index with the most members, ties to the larger `a`.
pub fn top_populated_a(w: &Weight, sigma: &Weight, i0: IntervalId, p: f64, scope: SliceScope, enforce_w_bound: bool) -> Result<Option<i32>> {
    let pops = SliceData::new(w, sigma, p)?.populations(i0, scope, enforce_w_bound);
    Ok(pops.iter().max_by_key(|(a, n)| (**n, **a)).map(|(a, _)| *a))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingInterval {
    pub id: IntervalId,
    /// 1-based generation `t` of `C_{a,t}`.
    pub generation: usize,
    /// Index of the stopping parent in [`CoronaForest::stops`].
    pub parent: Option<usize>,
    /// `⟨w⟩_{S-}`.
    pub w_minus: f64,
    /// Members `J` with `J^s = S`, sorted.
    pub members: Vec<IntervalId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoronaForest {
    pub i0: IntervalId,
    /// Stopping intervals in construction order (coarse to fine).
    pub stops: Vec<StoppingInterval>,
    /// `(J, index of J^s)` for every `J ∈ K_a`, sorted by `J`.
    pub assignment: Vec<(IntervalId, usize)>,
}

/// Build the corona of `ka` under `I0`.
///
/// Coarse-to-fine, each `J` looks for the deepest stopping `S` with
/// `J ⊆ S-`; `J` stops if there is none or if `⟨w⟩_{J-} > 2⟨w⟩_{S-}`.
/// Maximality in both generation rules follows from processing coarser
/// intervals first.
pub fn build_corona(w: &Weight, ka: &[IntervalId], i0: IntervalId) -> Result<CoronaForest> {
    let grid = w.grid();
    let sums = DyadicSums::new(w.density());
    let mut sorted: Vec<IntervalId> = ka.to_vec();
    sorted.sort();
    sorted.dedup();
    for &j in &sorted {
        if !i0.contains(j) || j.level + 2 > grid.depth() {
            return Err(Error::Precondition(format!("{j} is not a usable subinterval of {i0}")));
        }
    }
    let mut stops: Vec<StoppingInterval> = Vec::new();
    let mut index: BTreeMap<IntervalId, usize> = BTreeMap::new();
    let mut assignment = Vec::with_capacity(sorted.len());
    for &j in &sorted {
        let wj = sums.average(j.left());
        let mut host = None;
        let mut child = j;
        while let Some(anc) = child.parent() {
            if anc.left() == child {
                if let Some(&s) = index.get(&anc) {
                    host = Some(s);
                    break;
                }
            }
            child = anc;
        }
        let stop = match host {
            None => true,
            Some(s) => wj > 2.0 * stops[s].w_minus,
        };
        let owner = if stop {
            let k = stops.len();
            stops.push(StoppingInterval {
                id: j,
                generation: host.map_or(1, |s| stops[s].generation + 1),
                parent: host,
                w_minus: wj,
                members: Vec::new(),
            });
            index.insert(j, k);
            k
        } else {
            host.expect("non-stopping J has a host")
        };
        stops[owner].members.push(j);
        assignment.push((j, owner));
    }
    Ok(CoronaForest { i0, stops, assignment })
}

impl CoronaForest {
    pub fn stop_of(&self, j: IntervalId) -> Option<usize> {
        self.assignment
            .binary_search_by(|(id, _)| id.cmp(&j))
            .ok()
            .map(|i| self.assignment[i].1)
    }

    pub fn generations(&self) -> Vec<Vec<IntervalId>> {
        let depth = self.stops.iter().map(|s| s.generation).max().unwrap_or(0);
        let mut out = vec![Vec::new(); depth];
        for s in &self.stops {
            out[s.generation - 1].push(s.id);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// The `K_a(S)` are disjoint and cover `K_a`.
    pub fn check_partition(&self) -> bool {
        let total: usize = self.stops.iter().map(|s| s.members.len()).sum();
        let mut seen = HashSet::new();
        total == self.assignment.len()
            && self.stops.iter().flat_map(|s| &s.members).all(|j| seen.insert(*j))
            && self.assignment.iter().all(|(j, s)| self.stops[*s].members.binary_search(j).is_ok())
    }

    /// `⟨w⟩_{S'-} > 2⟨w⟩_{S-}` along every stopping parent link.
    pub fn check_growth(&self) -> bool {
        self.stops
            .iter()
            .all(|s| s.parent.map_or(true, |q| s.w_minus > 2.0 * self.stops[q].w_minus))
    }

    /// `J- ⊆ (J^s)-`, no stopping interval strictly between, and
    /// `⟨w⟩_{J-} <= 2⟨w⟩_{(J^s)-}` for non-stopping `J`.
    pub fn check_assignment(&self) -> bool {
        let ids: HashSet<IntervalId> = self.stops.iter().map(|s| s.id).collect();
        self.assignment.iter().all(|&(j, s)| {
            let host = &self.stops[s];
            if host.id == j {
                return true;
            }
            let inside = host.id.left().contains(j);
            let between = self.stops.iter().any(|t| {
                t.id != host.id && t.id != j && t.id.left().contains(j) && host.id.left().strictly_contains(t.id.left())
            });
            inside && !between && !ids.contains(&j)
        })
    }
}

/// `T*_{δ,K}(g)` for a membership set `K`.
pub fn restricted_adjoint(g: &GridFunction, eps: &SignPattern, delta: &TruncationProfile, k: &[IntervalId]) -> Result<GridFunction> {
    let set: HashSet<IntervalId> = k.iter().copied().collect();
    linearized_adjoint(g, &eps.restrict(|id| set.contains(&id)), delta)
}

/// `λ_j = 2^{(j-16)/2}`, `j = 0..=32`: ratio `√2` over `[2^-8, 2^8]`.
pub fn lambda_grid() -> Vec<f64> {
    (0..=32).map(|j| 2f64.powf((j as f64 - 16.0) / 2.0)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionProfile {
    pub lambdas: Vec<f64>,
    /// `σ(|T*_{δ,K}(wφ)| > λ · scale)`.
    pub sigma_measure: Vec<f64>,
    /// `⟨w⟩_{I0-}`, times `2^{1-b}` for a band profile.
    pub scale: f64,
    pub sigma_i0_plus: f64,
    pub sigma_i0: f64,
    /// Band index when the profile is taken against a band threshold.
    pub band: Option<u32>,
    /// Least-squares decay rate of `log(measure)` over `λ >= 1`.
    pub c_fit: Option<f64>,
    /// Smallest `C` with `measure <= C e^{-c_fit λ} σ(I0+)` for `λ >= 1`.
    pub big_c_exp: Option<f64>,
    /// Smallest `C` with `measure <= C λ^{-2p'/(p+1)} σ(I0+)` for `λ < 1`.
    pub big_c_pow: f64,
    pub p: f64,
}

impl DistributionProfile {
    pub fn measure_at(&self, lambda: f64) -> Option<f64> {
        self.lambdas
            .iter()
            .position(|&l| (l - lambda).abs() <= 1e-12 * lambda)
            .map(|i| self.sigma_measure[i])
    }

    pub fn is_monotone(&self) -> bool {
        self.sigma_measure.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `σ`-measure of `{|g| > t}`.
fn sigma_superlevel(g: &GridFunction, sigma: &Weight, t: f64) -> f64 {
    let dx = g.grid().cell_width();
    g.values()
        .iter()
        .zip(sigma.values())
        .filter(|(v, _)| v.abs() > t)
        .map(|(_, s)| s * dx)
        .sum()
}

/// Fit `log r ≈ log C - c λ` by least squares over points with `r > 0`.
/// `None` with fewer than two such points.
pub fn fit_exponential(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, r)| *r > 0.0).map(|&(l, r)| (l, r.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

/// `2p'/(p+1)`.
pub fn power_regime_exponent(p: f64) -> f64 {
    2.0 * (p / (p - 1.0)) / (p + 1.0)
}

fn check_phi(phi: &GridFunction, i0: IntervalId) -> Result<()> {
    let r = phi.grid().cell_range(i0);
    for (i, v) in phi.values().iter().enumerate() {
        let want = if r.contains(&i) { 1.0 } else { 0.0 };
        if v.abs() != want {
            return Err(Error::Precondition(format!("|φ| must equal 1 on {i0} and 0 elsewhere (cell {i})")));
        }
    }
    Ok(())
}

/// Level-set profile of `T*_{δ,K}(wφ)` against `λ⟨w⟩_{I0-}`, or against
/// `λ 2^{1-b} ⟨w⟩_{I0-}` when `band` is set.
#[allow(clippy::too_many_arguments)]
pub fn distribution_profile(
    eps: &SignPattern,
    delta: &TruncationProfile,
    w: &Weight,
    sigma: &Weight,
    k: &[IntervalId],
    i0: IntervalId,
    phi: &GridFunction,
    p: f64,
    band: Option<u32>,
) -> Result<DistributionProfile> {
    check_phi(phi, i0)?;
    let g = restricted_adjoint(&w.density().mul(phi)?, eps, delta, k)?;
    let data = SliceData::new(w, sigma, p)?;
    let scale = data.w_minus(i0) * band.map_or(1.0, |b| pow2(1 - b as i32));
    let lambdas = lambda_grid();
    let sigma_measure: Vec<f64> = lambdas.iter().map(|l| sigma_superlevel(&g, sigma, l * scale)).collect();
    let s_plus = data.sigma_mass(i0.right());
    let exp_pts: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(&sigma_measure)
        .filter(|(l, _)| **l >= 1.0)
        .map(|(l, m)| (*l, m / s_plus))
        .collect();
    let c_fit = fit_exponential(&exp_pts);
    let big_c_exp = c_fit.map(|c| exp_pts.iter().map(|(l, r)| r * (c * l).exp()).fold(0.0, f64::max));
    let e = power_regime_exponent(p);
    let big_c_pow = lambdas
        .iter()
        .zip(&sigma_measure)
        .filter(|(l, _)| **l < 1.0)
        .map(|(l, m)| m / s_plus * l.powf(e))
        .fold(0.0, f64::max);
    Ok(DistributionProfile {
        lambdas,
        sigma_measure,
        scale,
        sigma_i0_plus: s_plus,
        sigma_i0: data.sigma_mass(i0),
        band,
        c_fit,
        big_c_exp,
        big_c_pow,
        p,
    })
}

/// Constants fitted across a suite of profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteFit {
    /// Least-squares decay rate of the pooled `λ >= 1` points.
    pub c_fit: Option<f64>,
    /// Envelope constant for `e^{-c_fit λ}` at the pooled points.
    pub big_c_exp: Option<f64>,
    /// Envelope constant for `λ^{-2p'/(p+1)}` at the pooled `λ < 1` points.
    pub big_c_pow: f64,
    pub points_exp: usize,
    pub points_pow: usize,
}

/// Pool the normalized measures at `exp_lambdas` and `pow_lambdas` from
/// every profile and fit the two regimes.
pub fn fit_suite(profiles: &[DistributionProfile], exp_lambdas: &[f64], pow_lambdas: &[f64]) -> SuiteFit {
    let mut exp_pts = Vec::new();
    let mut pow_pts = Vec::new();
    for pr in profiles {
        for &l in exp_lambdas {
            if let Some(m) = pr.measure_at(l) {
                exp_pts.push((l, m / pr.sigma_i0_plus));
            }
        }
        for &l in pow_lambdas {
            if let Some(m) = pr.measure_at(l) {
                pow_pts.push((l, m / pr.sigma_i0_plus, pr.p));
            }
        }
    }
    let c_fit = fit_exponential(&exp_pts);
    let big_c_exp = c_fit.map(|c| exp_pts.iter().map(|(l, r)| r * (c * l).exp()).fold(0.0, f64::max));
    let big_c_pow = pow_pts
        .iter()
        .map(|(l, r, p)| r * l.powf(power_regime_exponent(*p)))
        .fold(0.0, f64::max);
    SuiteFit {
        c_fit,
        big_c_exp,
        big_c_pow,
        points_exp: exp_pts.len(),
        points_pow: pow_pts.len(),
    }
}

/// `max/min` of `σ(I+)/|I|` over a collection; `1` when empty.
pub fn measure_conversion_spread(sigma: &Weight, members: &[IntervalId]) -> f64 {
    let sums = DyadicSums::new(sigma.density());
    let ratios = members.iter().map(|id| sums.integral(id.right()) / id.length());
    let (lo, hi) = ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
    if members.is_empty() {
        1.0
    } else {
        hi / lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnRow {
    pub lambda: f64,
    /// `|{|Σ_E φ_I| > (C+1)λ}| / |I0|`.
    pub measure: f64,
    /// `2^{(1-λ)/2}`.
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnReport {
    pub constant: f64,
    /// Tested `(J, sub-collection)` pairs for the hypothesis.
    pub hypothesis_tests: usize,
    /// Largest `|{|Σ| > C}| / |J|` over the tests; the hypothesis needs `< 1/2`.
    pub hypothesis_worst: f64,
    pub hypothesis_holds: bool,
    /// Conclusion rows, evaluated for the full family on `I0` and for every
    /// sampled sub-collection whenever the hypothesis holds.
    pub rows: Vec<JnRow>,
    pub violations: Vec<String>,
}

fn check_representable(grid: DyadicGrid, id: IntervalId, f: &GridFunction) -> Result<()> {
    if id.level + 2 > grid.depth() {
        return Err(Error::Precondition(format!("{id} has no grandchildren at depth {}", grid.depth())));
    }
    let r = grid.cell_range(id);
    let quarter = r.len() / 4;
    for (i, v) in f.values().iter().enumerate() {
        if !r.contains(&i) {
            if *v != 0.0 {
                return Err(Error::Precondition(format!("φ_{id} is not supported on {id}")));
            }
        } else {
            let first = r.start + (i - r.start) / quarter * quarter;
            if *v != f.values()[first] {
                return Err(Error::Precondition(format!("φ_{id} is not constant on the grandchildren of {id}")));
            }
        }
    }
    Ok(())
}

fn sum_family(grid: DyadicGrid, family: &BTreeMap<IntervalId, GridFunction>, e: &[IntervalId]) -> Vec<f64> {
    let mut acc = vec![0.0; grid.cells()];
    for id in e {
        for (a, v) in acc.iter_mut().zip(family[id].values()) {
            *a += v;
        }
    }
    acc
}

fn exceed_fraction(acc: &[f64], range: std::ops::Range<usize>, t: f64) -> f64 {
    let n = range.len() as f64;
    range.filter(|&i| acc[i].abs() > t).count() as f64 / n
}

/// The sampled `(J, E_J)` pairs used for the hypothesis: every dyadic
/// `J ⊆ I0` with its full sub-collection, plus `samples` random
/// sub-collections of random `J`.
fn hypothesis_tests(
    grid: DyadicGrid,
    i0: IntervalId,
    e: &[IntervalId],
    samples: usize,
    seed: u64,
) -> Vec<(IntervalId, Vec<IntervalId>)> {
    let mut tests: Vec<(IntervalId, Vec<IntervalId>)> = grid
        .subintervals(i0, grid.depth())
        .map(|j| (j, e.iter().copied().filter(|i| j.contains(*i)).collect::<Vec<_>>()))
        .filter(|(_, sub)| !sub.is_empty())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roots: Vec<IntervalId> = tests.iter().map(|t| t.0).collect();
    for _ in 0..samples {
        if roots.is_empty() {
            break;
        }
        let j = roots[rng.gen_range(0..roots.len())];
        let keep = rng.gen_range(0.1..0.9);
        let sub: Vec<IntervalId> = e.iter().copied().filter(|i| j.contains(*i) && rng.gen_bool(keep)).collect();
        if !sub.is_empty() {
            tests.push((j, sub));
        }
    }
    tests
}

/// Smallest `C` with `|{|Σ_{E_J} φ_I| > C}| < |J|/2` on every sampled test.
pub fn minimal_weak_constant(
    family: &BTreeMap<IntervalId, GridFunction>,
    i0: IntervalId,
    e: &[IntervalId],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let grid = match family.values().next() {
        Some(f) => f.grid(),
        None => return Ok(0.0),
    };
    let mut c = 0.0f64;
    for (j, sub) in hypothesis_tests(grid, i0, e, samples, seed) {
        let acc = sum_family(grid, family, &sub);
        let mut vals: Vec<f64> = grid.cell_range(j).map(|i| acc[i].abs()).collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        // more than half the cells must sit at or below C
        let k = (vals.len() / 2).max(1);
        c = c.max(vals[k - 1]);
    }
    Ok(c)
}

/// Measure the hypothesis `|{|Σ_{E_J} φ_I| > C}| < |J|/2` over sampled
/// sub-collections and, where it holds, the conclusion
/// `|{|Σ φ_I| > (C+1)λ}| < 2^{(1-λ)/2} |I0|` at each `λ`.
pub fn jn_bootstrap_check(
    family: &BTreeMap<IntervalId, GridFunction>,
    i0: IntervalId,
    e: &[IntervalId],
    c: f64,
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<JnReport> {
    let grid = match family.values().next() {
        Some(f) => f.grid(),
        None => {
            return Ok(JnReport {
                constant: c,
                hypothesis_tests: 0,
                hypothesis_worst: 0.0,
                hypothesis_holds: true,
                rows: lambdas
                    .iter()
                    .map(|&l| JnRow { lambda: l, measure: 0.0, bound: 2f64.powf((1.0 - l) / 2.0), ok: true })
                    .collect(),
                violations: Vec::new(),
            })
        }
    };
    for (id, f) in family {
        check_representable(grid, *id, f)?;
    }
    for id in e {
        if !family.contains_key(id) || !i0.contains(*id) {
            return Err(Error::Precondition(format!("{id} is not a family member below {i0}")));
        }
    }
    let tests = hypothesis_tests(grid, i0, e, samples, seed);
    let mut worst = 0.0f64;
    for (j, sub) in &tests {
        let acc = sum_family(grid, family, sub);
        worst = worst.max(exceed_fraction(&acc, grid.cell_range(*j), c));
    }
    let holds = worst < 0.5;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    if holds {
        let mut collections: Vec<&[IntervalId]> = vec![e];
        collections.extend(tests.iter().filter(|(j, _)| *j == i0).map(|(_, s)| s.as_slice()));
        for &l in lambdas {
            let bound = 2f64.powf((1.0 - l) / 2.0);
            let mut m = 0.0f64;
            for sub in &collections {
                let acc = sum_family(grid, family, sub);
                m = m.max(exceed_fraction(&acc, grid.cell_range(i0), (c + 1.0) * l));
            }
            let ok = m < bound;
            if !ok {
                violations.push(format!("λ = {l}: measure {m} >= {bound}"));
            }
            rows.push(JnRow { lambda: l, measure: m, bound, ok });
        }
    }
    Ok(JnReport {
        constant: c,
        hypothesis_tests: tests.len(),
        hypothesis_worst: worst,
        hypothesis_holds: holds,
        rows,
        violations,
    })
}

/// The Haar summands `ε_I ⟨wφ, h_{I-} 1_{|I|>δ}⟩ h_{I+}` of
/// `T*_{δ,K}(wφ)`, each divided by `norm`.
pub fn haar_summand_family(
    eps: &SignPattern,
    delta: &TruncationProfile,
    w: &Weight,
    phi: &GridFunction,
    k: &[IntervalId],
    norm: f64,
) -> Result<BTreeMap<IntervalId, GridFunction>> {
    let g = w.density().mul(phi)?;
    let mut out = BTreeMap::new();
    for &id in k {
        let single = SignPattern::from_fn(eps.grid(), |j| if j == id { eps.get(id) } else { 0 })?;
        let t = linearized_adjoint(&g, &single, delta)?;
        out.insert(id, t.scale(1.0 / norm));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub n: i32,
    /// `Σ_S ‖X_{S,n}‖^{p'}`.
    pub sum_pow: f64,
    /// `‖Σ_S X_{S,n}‖_{L^{p'}(σ)}`.
    pub norm_of_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaChainReport {
    pub a: i32,
    pub p: f64,
    pub ka_size: usize,
    pub stopping_intervals: usize,
    pub generations: usize,
    /// `max |Σ_S τ_S − T*_{δ,K_a}(wφ)|`.
    pub decomposition_error: f64,
    /// `Σ_n X_{S,n} = τ_S` exactly on the support of every `τ_S`.
    pub layers_exact: bool,
    /// `∫_{I0} |T*_{δ,K_a}(wφ)|^{p'} dσ`.
    pub lhs: f64,
    /// `2^{a(p'-1)} [w]_{A_∞^+} w(I0)`.
    pub rhs: f64,
    pub ratio: f64,
    /// `‖Σ_S τ_S‖_{L^{p'}(σ)}` on `I0`.
    pub chain_a: f64,
    /// `Σ_n ‖Σ_S X_{S,n}‖_{L^{p'}(σ)}`.
    pub chain_b: f64,
    /// `Σ_n (Σ_S ‖X_{S,n}‖^{p'})^{1/p'}`.
    pub chain_c: f64,
    /// `n_p`: least positive `n` with `2^{n-1} >= C_p`.
    pub n_p: i32,
    pub c_p: f64,
    pub layers: Vec<LayerRow>,
    /// `Σ_S ⟨w⟩_{S-} |S+| / ([w]_{A_∞^+} w(I0))`.
    pub carleson_ratio: f64,
    /// `Σ_S ⟨w⟩_{S-}^{p'} σ(S+)` and `2^{(a+1)(p'-1)} Σ_S ⟨w⟩_{S-} |S+|`.
    pub conversion_lhs: f64,
    pub conversion_rhs: f64,
    pub conversion_holds: bool,
    pub forest_ok: bool,
}

/// `C_p = 1/(1 − 2^{(1-p)/(2p)})`, the band-sum constant, used as the
/// surrogate for the distributional constant.
pub fn c_p_surrogate(p: f64) -> f64 {
    1.0 / (1.0 - 2f64.powf((1.0 - p) / (2.0 * p)))
}

/// Run the corona argument numerically for one `(I0, a)`: slice without the
/// average bound, build the corona, split the restricted adjoint over
/// stopping intervals and layers, and evaluate each link of the chain.
#[allow(clippy::too_many_arguments)]
pub fn verify_eta_chain(
    eps: &SignPattern,
    w: &Weight,
    sigma: &Weight,
    p: f64,
    i0: IntervalId,
    a: i32,
    delta: Option<&TruncationProfile>,
    phi: Option<&GridFunction>,
) -> Result<EtaChainReport> {
    let grid = w.grid();
    let untruncated = TruncationProfile::untruncated(grid);
    let delta = delta.unwrap_or(&untruncated);
    let default_phi;
    let phi = match phi {
        Some(f) => f,
        None => {
            default_phi = GridFunction::indicator(grid, i0, 1.0)?;
            &default_phi
        }
    };
    check_phi(phi, i0)?;
    let data = SliceData::new(w, sigma, p)?;
    let ka = data.slice(&SliceSpec::global(i0, a, p))?;
    let forest = build_corona(w, &ka, i0)?;
    let g = w.density().mul(phi)?;
    let total = restricted_adjoint(&g, eps, delta, &ka)?;
    let taus = forest
        .stops
        .iter()
        .map(|s| restricted_adjoint(&g, eps, delta, &s.members))
        .collect::<Result<Vec<_>>>()?;

    let n = grid.cells();
    let dx = grid.cell_width();
    let pc = p / (p - 1.0);
    let sv = sigma.values();
    let in_i0 = grid.cell_range(i0);

    let mut summed = vec![0.0; n];
    for t in &taus {
        for (s, v) in summed.iter_mut().zip(t.values()) {
            *s += v;
        }
    }
    let decomposition_error = summed
        .iter()
        .zip(total.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // layer index per (S, cell): 2^{n-1} avg < |τ| <= 2^n avg
    let mut layer_pow: BTreeMap<i32, f64> = BTreeMap::new();
    let mut layer_sum: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    let mut layers_exact = true;
    for (s, t) in forest.stops.iter().zip(&taus) {
        let mut rebuilt = vec![0.0; n];
        let mut per_n: BTreeMap<i32, f64> = BTreeMap::new();
        for i in in_i0.clone() {
            let v = t.values()[i];
            if v == 0.0 {
                continue;
            }
            let ln = dyadic_slice_index(v.abs() / s.w_minus) + 1;
            rebuilt[i] = v;
            *per_n.entry(ln).or_insert(0.0) += v.abs().powf(pc) * sv[i] * dx;
            layer_sum.entry(ln).or_insert_with(|| vec![0.0; n])[i] += v;
        }
        layers_exact &= in_i0.clone().all(|i| rebuilt[i] == t.values()[i]);
        for (k, x) in per_n {
            *layer_pow.entry(k).or_insert(0.0) += x;
        }
    }
    let mut layers = Vec::new();
    let mut chain_b = 0.0;
    let mut chain_c = 0.0;
    for (k, x) in &layer_pow {
        let sum = &layer_sum[k];
        let nos = in_i0.clone().map(|i| sum[i].abs().powf(pc) * sv[i] * dx).sum::<f64>().powf(1.0 / pc);
        chain_b += nos;
        chain_c += x.powf(1.0 / pc);
        layers.push(LayerRow { n: *k, sum_pow: *x, norm_of_sum: nos });
    }

    let lhs: f64 = in_i0.clone().map(|i| total.values()[i].abs().powf(pc) * sv[i] * dx).sum();
    let ainf = ainf_plus(w);
    let w_i0 = data.w_mass(i0);
    let rhs = pow2(a).powf(pc - 1.0) * ainf * w_i0;
    let chain_a = lhs.powf(1.0 / pc);

    let mut carleson = 0.0;
    let mut conv_l = 0.0;
    let mut conv_terms_ok = true;
    let conv_factor = pow2(a + 1).powf(pc - 1.0);
    for s in &forest.stops {
        let plus_len = s.id.right().length();
        let term_r = s.w_minus * plus_len;
        let term_l = s.w_minus.powf(pc) * data.sigma_mass(s.id.right());
        carleson += term_r;
        conv_l += term_l;
        conv_terms_ok &= term_l <= conv_factor * term_r * (1.0 + 1e-12);
    }
    let conv_r = conv_factor * carleson;
    let c_p = c_p_surrogate(p);
    let n_p = (1..).find(|&k: &i32| pow2(k - 1) >= c_p).unwrap_or(1);

    Ok(EtaChainReport {
        a,
        p,
        ka_size: ka.len(),
        stopping_intervals: forest.stops.len(),
        generations: forest.generations().len(),
        decomposition_error,
        layers_exact,
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        chain_a,
        chain_b,
        chain_c,
        n_p,
        c_p,
        layers,
        carleson_ratio: carleson / (ainf * w_i0),
        conversion_lhs: conv_l,
        conversion_rhs: conv_r,
        conversion_holds: conv_terms_ok && conv_l <= conv_r * (1.0 + 1e-12),
        forest_ok: forest.check_partition() && forest.check_growth() && forest.check_assignment(),
    })
}
