//! One-sided weight characteristics and weight generators.
//!
//! ```text
//! [w]_{A_p^+}  = sup_I ⟨w⟩_{I-} ⟨σ⟩_{I+}^{p-1}
//! [w]_{A_1^+}  = ‖M_- w / w‖_∞
//! [w]_{A_∞^+}  = sup_I w(I)^-1 ∫_I M_-(w 1_I)
//! ```
//!
//! Suprema run over the dyadic lattice by default. [`Mode::Sliding`] takes
//! `A_p` and `A_1` over every grid-aligned window instead.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DyadicGrid, DyadicSums, GridFunction, IntervalId, PrefixSums};
pub use crate::operators::Mode;
use crate::operators::max_minus;
pub use crate::weight::dual_weight;
use crate::weight::Weight;

/// `sup_I ⟨w⟩_{I-} ⟨σ⟩_{I+}^{p-1}`.
pub fn ap_plus(w: &Weight, mode: Mode) -> f64 {
    ap_plus_with_witness(w, mode).0
}

/// [`ap_plus`] together with the window `(start cell, half-length in cells)`
/// attaining it.
pub fn ap_plus_with_witness(w: &Weight, mode: Mode) -> (f64, (usize, usize)) {
    let sigma = w.dual();
    let q = w.exponent() - 1.0;
    let grid = w.grid();
    match mode {
        Mode::Dyadic => {
            let ws = DyadicSums::new(w.density());
            let ss = DyadicSums::new(sigma.density());
            let mut best = (f64::NEG_INFINITY, (0, 0));
            for id in grid.intervals_through(grid.depth() - 1) {
                let v = ws.average(id.left()) * ss.average(id.right()).powf(q);
                if v > best.0 {
                    let r = grid.cell_range(id);
                    best = (v, (r.start, r.len() / 2));
                }
            }
            best
        }
        Mode::Sliding => {
            let ws = PrefixSums::new(w.values());
            let ss = PrefixSums::new(sigma.values());
            let n = grid.cells();
            (1..=n / 2)
                .into_par_iter()
                .map(|m| {
                    let mut best = (f64::NEG_INFINITY, (0, m));
                    for s in 0..=n - 2 * m {
                        let v = ws.average(s, s + m) * ss.average(s + m, s + 2 * m).powf(q);
                        if v > best.0 {
                            best = (v, (s, m));
                        }
                    }
                    best
                })
                .reduce(
                    || (f64::NEG_INFINITY, (0, 0)),
                    |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
                )
        }
    }
}

/// `sup_I ⟨w⟩_{I+} ⟨σ⟩_{I-}^{p-1}`, the mirror of [`ap_plus`].
pub fn ap_minus(w: &Weight, mode: Mode) -> f64 {
    ap_plus(&w.reversed(), mode)
}

/// Two-sided dyadic `sup_I ⟨w⟩_I ⟨σ⟩_I^{p-1}`, for contrast with the
/// one-sided characteristics.
pub fn ap_two_sided(w: &Weight) -> f64 {
    let sigma = w.dual();
    let q = w.exponent() - 1.0;
    let grid = w.grid();
    let ws = DyadicSums::new(w.density());
    let ss = DyadicSums::new(sigma.density());
    grid.intervals_through(grid.depth())
        .map(|id| ws.average(id) * ss.average(id).powf(q))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_x M_- w(x) / w(x)`.
pub fn a1_plus(w: &Weight, mode: Mode) -> f64 {
    let m = max_minus(w.density(), mode);
    m.values()
        .iter()
        .zip(w.values())
        .map(|(a, b)| a / b)
        .fold(0.0, f64::max)
}

/// Per-interval `∫_I M_-(w 1_I) dx` for every dyadic `I` at levels
/// `0..=N-1`, level-major.
///
/// Only `J ⊆ I` reach cells of `I` with a nonzero left-half average, so each
/// cell climbs its ancestor chain once, carrying the running max of
/// `⟨w⟩_{J-}` over the `J` it sits in the right half of.
fn ainf_integrals(w: &GridFunction) -> Vec<f64> {
    let grid = w.grid();
    let n = grid.depth();
    let sums = DyadicSums::new(w);
    let dx = grid.cell_width();
    let mut acc = vec![0.0f64; (1usize << n) - 1];
    for x in 0..grid.cells() {
        let mut running = 0.0f64;
        for level in (0..n).rev() {
            let j = grid.ancestor_of_cell(x, level);
            if grid.cell_range(j.right()).contains(&x) {
                running = running.max(sums.average(j.left()));
            }
            acc[(1usize << level) - 1 + j.index] += running;
        }
    }
    acc.iter_mut().for_each(|a| *a *= dx);
    acc
}

/// `sup_I w(I)^-1 ∫_I M_-(w 1_I) dx` over dyadic `I`.
pub fn ainf_plus(w: &Weight) -> f64 {
    ainf_of(w.density())
}

/// Mirror of [`ainf_plus`], with `M_+` inside.
pub fn ainf_minus(w: &Weight) -> f64 {
    ainf_of(&w.density().reversed())
}

fn ainf_of(w: &GridFunction) -> f64 {
    let grid = w.grid();
    let sums = DyadicSums::new(w);
    let acc = ainf_integrals(w);
    grid.intervals_through(grid.depth() - 1)
        .zip(acc)
        .map(|(id, a)| a / sums.integral(id))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Constant,
    Step,
    Power,
    OneSidedPower,
    Cascade,
}

impl FromStr for WeightKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "constant" => WeightKind::Constant,
            "step" => WeightKind::Step,
            "power" => WeightKind::Power,
            "one_sided_power" => WeightKind::OneSidedPower,
            "cascade" => WeightKind::Cascade,
            other => return Err(format!("unknown weight kind '{other}'")),
        })
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightKind::Constant => "constant",
            WeightKind::Step => "step",
            WeightKind::Power => "power",
            WeightKind::OneSidedPower => "one_sided_power",
            WeightKind::Cascade => "cascade",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

impl FromStr for Orientation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "increasing" => Ok(Orientation::Increasing),
            "decreasing" => Ok(Orientation::Decreasing),
            other => Err(format!("unknown orientation '{other}'")),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Increasing => "increasing",
            Orientation::Decreasing => "decreasing",
        })
    }
}

/// Parameters of a generated weight.
///
/// * `constant`: `w ≡ 1`.
/// * `step`: `1` on `[0,1/2)` and `2^α` on `[1/2,1)` when decreasing; swapped
///   when increasing.
/// * `power`: cell averages of `x^α` (decreasing) or `(1-x)^α` (increasing).
/// * `one_sided_power`: cell averages of `(x-1/2)^α` on the right half
///   (decreasing) or `(1/2-x)^α` on the left half (increasing), `1` elsewhere.
/// * `cascade`: multiplicative cascade, children scaled by `1 ± θ` with a
///   seeded random sign per interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFamilySpec {
    pub kind: WeightKind,
    pub alpha: f64,
    pub orientation: Orientation,
    pub theta: f64,
    pub seed: u64,
    pub depth: u32,
}

impl Default for WeightFamilySpec {
    fn default() -> Self {
        Self {
            kind: WeightKind::Constant,
            alpha: -0.5,
            orientation: Orientation::Decreasing,
            theta: 0.5,
            seed: 0,
            depth: 10,
        }
    }
}

impl WeightFamilySpec {
    pub fn power(alpha: f64, orientation: Orientation, depth: u32) -> Self {
        Self {
            kind: WeightKind::Power,
            alpha,
            orientation,
            depth,
            ..Self::default()
        }
    }

    pub fn cascade(theta: f64, seed: u64, depth: u32) -> Self {
        Self {
            kind: WeightKind::Cascade,
            theta,
            seed,
            depth,
            ..Self::default()
        }
    }

    /// Set one `key=value` pair; keys are `kind alpha orientation theta seed
    /// depth`.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value '{v}' for {key}"))
        }
        match key {
            "kind" => self.kind = value.parse()?,
            "alpha" => self.alpha = num(key, value)?,
            "orientation" => self.orientation = value.parse()?,
            "theta" => self.theta = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "depth" => self.depth = num(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Parse whitespace-separated `key=value` pairs, e.g.
    /// `kind=power alpha=-0.5 orientation=decreasing depth=10 seed=42`.
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self> {
        let mut spec = Self::default();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected key=value, got '{tok}'")))?;
            spec.set(k, v).map_err(|m| Error::parse(line_no, m))?;
        }
        Ok(spec)
    }

    /// The weight, tagged with exponent `p`.
    pub fn generate(&self, p: f64) -> Result<Weight> {
        let grid = DyadicGrid::new(self.depth)?;
        let values = match self.kind {
            WeightKind::Constant => vec![1.0; grid.cells()],
            WeightKind::Step => {
                let low = 2f64.powf(self.alpha);
                let half = grid.cells() / 2;
                (0..grid.cells())
                    .map(|i| match (self.orientation, i < half) {
                        (Orientation::Decreasing, true) | (Orientation::Increasing, false) => 1.0,
                        _ => low,
                    })
                    .collect()
            }
            WeightKind::Power => {
                check_alpha(self.alpha)?;
                let n = grid.cells();
                let mut v: Vec<f64> = (0..n).map(|i| power_average(self.alpha, i, n)).collect();
                if self.orientation == Orientation::Increasing {
                    v.reverse();
                }
                v
            }
            WeightKind::OneSidedPower => {
                check_alpha(self.alpha)?;
                let n = grid.cells();
                let half = n / 2;
                let mut v = vec![1.0; n];
                for i in 0..half {
                    v[half + i] = power_average(self.alpha, i, n);
                }
                if self.orientation == Orientation::Increasing {
                    v.reverse();
                }
                v
            }
            WeightKind::Cascade => cascade_values(grid, self.theta, self.seed)?,
        };
        Weight::new(GridFunction::new(grid, values)?, p)
    }
}

impl fmt::Display for WeightFamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kind={} alpha={} orientation={} theta={} seed={} depth={}",
            self.kind, self.alpha, self.orientation, self.theta, self.seed, self.depth
        )
    }
}

/// Free-function form of [`WeightFamilySpec::generate`].
pub fn generate_weight(spec: &WeightFamilySpec, p: f64) -> Result<Weight> {
    spec.generate(p)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > -1.0 {
        Ok(())
    } else {
        Err(Error::NonIntegrable(alpha))
    }
}

/// Average of `x^α` over `[i/n, (i+1)/n)`.
fn power_average(alpha: f64, i: usize, n: usize) -> f64 {
    let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
    let e = alpha + 1.0;
    (b.powf(e) - a.powf(e)) / (e * (b - a))
}

fn cascade_values(grid: DyadicGrid, theta: f64, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Domain(format!("cascade amplitude {theta} not in [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![1.0; grid.cells()];
    for level in 0..grid.depth() {
        for k in 0..1usize << level {
            let id = IntervalId::new(level, k);
            let s = if rng.gen::<bool>() { theta } else { -theta };
            for x in &mut v[grid.cell_range(id.left())] {
                *x *= 1.0 + s;
            }
            for x in &mut v[grid.cell_range(id.right())] {
                *x *= 1.0 - s;
            }
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(values: &[f64], p: f64) -> Weight {
        let grid = DyadicGrid::new(values.len().trailing_zeros()).unwrap();
        Weight::new(GridFunction::new(grid, values.to_vec()).unwrap(), p).unwrap()
    }

    #[test]
    fn ap_examples() {
        for mode in [Mode::Dyadic, Mode::Sliding] {
            assert_eq!(ap_plus(&w(&[3.0; 8], 2.5), mode), 1.0);
            assert_eq!(ap_plus(&w(&[4.0, 4.0, 1.0, 1.0], 2.0), mode), 4.0);
            assert_eq!(ap_plus(&w(&[1.0, 1.0, 4.0, 4.0], 2.0), mode), 1.0);
        }
        assert_eq!(ap_minus(&w(&[1.0, 1.0, 4.0, 4.0], 2.0), Mode::Dyadic), 4.0);
        let (v, (start, half)) = ap_plus_with_witness(&w(&[4.0, 4.0, 1.0, 1.0], 2.0), Mode::Dyadic);
        assert_eq!((v, start, half), (4.0, 0, 2));
    }

    #[test]
    fn a1_examples() {
        assert_eq!(a1_plus(&w(&[1.0; 4], 2.0), Mode::Dyadic), 1.0);
        assert_eq!(a1_plus(&w(&[1.0, 1.0, 4.0, 4.0], 2.0), Mode::Dyadic), 1.0);
        assert_eq!(a1_plus(&w(&[4.0, 4.0, 1.0, 1.0], 2.0), Mode::Dyadic), 4.0);
    }

    #[test]
    fn ainf_unit_weight() {
        assert_eq!(ainf_plus(&w(&[1.0; 4], 2.0)), 0.75);
        assert_eq!(ainf_minus(&w(&[1.0; 4], 2.0)), 0.75);
    }

    #[test]
    fn ainf_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for depth in 2..=6 {
            let grid = DyadicGrid::new(depth).unwrap();
            let dens = GridFunction::from_fn(grid, |_| rng.gen_range(0.05..20.0)).unwrap();
            let weight = Weight::new(dens.clone(), 2.0).unwrap();
            let mut best = 0.0f64;
            for id in grid.intervals_through(depth) {
                let local = GridFunction::from_fn(grid, |i| {
                    if grid.cell_range(id).contains(&i) { dens.values()[i] } else { 0.0 }
                })
                .unwrap();
                let m = max_minus(&local, Mode::Dyadic);
                let num: f64 = grid.cell_range(id).map(|i| m.values()[i]).sum();
                let den: f64 = grid.cell_range(id).map(|i| dens.values()[i]).sum();
                best = best.max(num / den);
            }
            assert!((ainf_plus(&weight) - best).abs() <= 1e-12 * best);
        }
    }

    #[test]
    fn generator_examples() {
        let c = WeightFamilySpec { depth: 5, ..Default::default() }.generate(2.0).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.0));

        let p = WeightFamilySpec::power(1.0, Orientation::Decreasing, 2).generate(2.0).unwrap();
        let want = [0.125, 0.375, 0.625, 0.875];
        assert!(p.values().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));

        let flat = WeightFamilySpec::cascade(0.0, 99, 6).generate(2.0).unwrap();
        assert!(flat.values().iter().all(|&v| v == 1.0));

        assert!(matches!(
            WeightFamilySpec::power(-1.0, Orientation::Decreasing, 4).generate(2.0),
            Err(Error::NonIntegrable(_))
        ));
        assert!(WeightFamilySpec::cascade(1.0, 0, 4).generate(2.0).is_err());
    }

    #[test]
    fn power_weights_preserve_mass() {
        for alpha in [-0.9, -0.5, 0.3, 2.0] {
            let w = WeightFamilySpec::power(alpha, Orientation::Increasing, 8).generate(2.0).unwrap();
            let mass: f64 = w.values().iter().sum::<f64>() * w.grid().cell_width();
            assert!((mass - 1.0 / (alpha + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_controls_one_sidedness() {
        let dec = WeightFamilySpec::power(-0.9, Orientation::Decreasing, 8).generate(2.0).unwrap();
        let inc = WeightFamilySpec::power(-0.9, Orientation::Increasing, 8).generate(2.0).unwrap();
        assert!(ap_plus(&dec, Mode::Dyadic) > 5.0);
        assert!(ap_plus(&inc, Mode::Dyadic) <= 1.0 + 1e-12);
        assert!(ap_two_sided(&inc) > 5.0);
    }

    #[test]
    fn spec_line_round_trip() {
        let s = WeightFamilySpec::parse_line("kind=power alpha=-0.5 orientation=decreasing depth=10 seed=42", 1).unwrap();
        assert_eq!(s.kind, WeightKind::Power);
        assert_eq!(s.seed, 42);
        assert_eq!(WeightFamilySpec::parse_line(&s.to_string(), 1).unwrap(), s);
        assert!(matches!(
            WeightFamilySpec::parse_line("kind=power colour=red", 7),
            Err(Error::Parse { line: 7, .. })
        ));
    }

    #[test]
    fn cascade_is_reproducible() {
        let a = WeightFamilySpec::cascade(0.6, 3, 7).generate(2.0).unwrap();
        let b = WeightFamilySpec::cascade(0.6, 3, 7).generate(2.0).unwrap();
        let c = WeightFamilySpec::cascade(0.6, 4, 7).generate(2.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sliding_dominates_dyadic() {
        for seed in 0..10 {
            let w = WeightFamilySpec::cascade(0.5, seed, 6).generate(2.0).unwrap();
            assert!(ap_plus(&w, Mode::Sliding) >= ap_plus(&w, Mode::Dyadic) * (1.0 - 1e-12));
            assert!(a1_plus(&w, Mode::Sliding) >= a1_plus(&w, Mode::Dyadic) * (1.0 - 1e-12));
        }
    }
}
