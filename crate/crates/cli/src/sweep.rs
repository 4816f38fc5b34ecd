//! Sweeps of a weight family against the sharp one-weight bounds.
//!
//! For every member `w` with dual `σ = w^{1-p'}` a row records
//!
//! * `bound_a2 = ([w]_{A_2^+} max{[σ]_{A_∞^-}, [w]_{A_∞^+}})^{1/2}` and
//!   `ratio = ‖T‖_{L²(w)} / bound_a2` (only at `p = 2`),
//! * `bound_weak = [w]_{A_p^+}^{1/p} [w]_{A_∞^+}^{1/p'}` and the estimated weak
//!   norm of `T` over it,
//! * the estimated weak testing constant of `M_+` over `[w]_{A_p^+}^{1/p}`.

use std::path::Path;

use onesided::characteristics::{ainf_minus, ainf_plus, ap_plus, ap_two_sided, WeightFamilySpec};
use onesided::norms::{maximal_weak_testing, op_norm_l2_detailed, weak_transform_estimate, PowerOptions};
use onesided::{Mode, SignPattern, Weight};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SignPolicy};
use crate::search::sign_ascent;
use crate::{guard_depth, ls_slope, task_rng, write_csv, write_json, write_jsonl, CheckOutcome, CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub param: String,
    pub value: f64,
    pub weight: String,
    pub sign_policy: String,
    /// Seed of this row's private stream.
    pub task_seed: u64,
    /// `[w]_{A_p^+}` in the configured mode.
    pub ap_plus: f64,
    pub ap_plus_dyadic: f64,
    pub ap_plus_sliding: f64,
    pub ap_two_sided: f64,
    pub ainf_plus: f64,
    pub ainf_minus_sigma: f64,
    pub op_norm: Option<f64>,
    pub iterations: Option<usize>,
    pub bound_a2: Option<f64>,
    pub ratio: Option<f64>,
    pub weak_norm_estimate: f64,
    pub bound_weak: f64,
    pub weak_ratio: f64,
    pub maximal_weak: f64,
    /// `maximal_weak / [w]_{A_p^+}^{1/p}`.
    pub maximal_ratio: f64,
}

impl SweepRow {
    fn numbers(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("value", self.value),
            ("ap_plus", self.ap_plus),
            ("ap_plus_dyadic", self.ap_plus_dyadic),
            ("ap_plus_sliding", self.ap_plus_sliding),
            ("ap_two_sided", self.ap_two_sided),
            ("ainf_plus", self.ainf_plus),
            ("ainf_minus_sigma", self.ainf_minus_sigma),
            ("weak_norm_estimate", self.weak_norm_estimate),
            ("bound_weak", self.bound_weak),
            ("weak_ratio", self.weak_ratio),
            ("maximal_weak", self.maximal_weak),
            ("maximal_ratio", self.maximal_ratio),
        ];
        for (k, x) in [("op_norm", self.op_norm), ("bound_a2", self.bound_a2), ("ratio", self.ratio)] {
            v.push((k, x.unwrap_or(f64::NAN)));
        }
        v
    }

    /// `rhs > 0` and finite ratios.
    pub fn is_sane(&self) -> bool {
        let a2 = match (self.bound_a2, self.ratio) {
            (Some(b), Some(r)) => b > 0.0 && r.is_finite(),
            (None, None) => true,
            _ => false,
        };
        a2 && self.bound_weak > 0.0 && self.weak_ratio.is_finite() && self.maximal_ratio.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub param: String,
    pub p: f64,
    pub depth: u32,
    pub max_ratio: Option<f64>,
    pub max_ratio_index: Option<usize>,
    pub max_ratio_weight: Option<String>,
    /// Least-squares slope of `log ratio` against `log ap_plus`.
    pub ratio_slope: Option<f64>,
    pub max_weak_ratio: Option<f64>,
    pub weak_ratio_slope: Option<f64>,
    pub ap_min: Option<f64>,
    pub ap_max: Option<f64>,
    /// `log10(ap_max / ap_min)`.
    pub ap_decades: Option<f64>,
    /// Smallest and largest `maximal_ratio`: the fitted band `[c, C]`.
    pub maximal_band: Option<(f64, f64)>,
    pub verified_rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

/// One row from `(config, index, value, spec)` alone.
pub fn compute_row(config: &ExperimentConfig, index: usize, value: f64, spec: &WeightFamilySpec) -> Result<SweepRow> {
    let p = config.p;
    let mut rng = task_rng(config.seed, index as u64);
    let task_seed: u64 = rng.gen();
    let w = spec.generate(p)?;
    let sigma = w.dual();
    let grid = w.grid();

    let ap_d = ap_plus(&w, Mode::Dyadic);
    let ap_s = ap_plus(&w, Mode::Sliding);
    let ap = match config.mode {
        Mode::Dyadic => ap_d,
        Mode::Sliding => ap_s,
    };
    let ainf_p = ainf_plus(&w);
    let ainf_m = ainf_minus(&sigma);

    let eps = match config.sign_policy {
        SignPolicy::AllPlus => SignPattern::all_plus(grid),
        SignPolicy::Random => SignPattern::random(grid, &mut rng),
        SignPolicy::Search => sign_ascent(SignPattern::all_plus(grid), &w, config.budget)?.0,
    };

    let (op_norm, iterations, bound_a2, ratio) = if p == 2.0 {
        let rep = op_norm_l2_detailed(&eps, &w, None, PowerOptions::default())?;
        let b = (ap * ainf_m.max(ainf_p)).sqrt();
        (Some(rep.value), Some(rep.iterations), Some(b), Some(rep.value / b))
    } else {
        (None, None, None, None)
    };

    let weak = weak_transform_estimate(&eps, &w, p, &[])?;
    let pc = p / (p - 1.0);
    let bound_weak = ap.powf(1.0 / p) * ainf_p.powf(1.0 / pc);
    let maximal = maximal_weak_testing(&w, &sigma, p, config.family_size, task_seed)?;

    Ok(SweepRow {
        index,
        param: config.sweep_param.to_string(),
        value,
        weight: spec.to_string(),
        sign_policy: config.sign_policy.to_string(),
        task_seed,
        ap_plus: ap,
        ap_plus_dyadic: ap_d,
        ap_plus_sliding: ap_s,
        ap_two_sided: ap_two_sided(&w),
        ainf_plus: ainf_p,
        ainf_minus_sigma: ainf_m,
        op_norm,
        iterations,
        bound_a2,
        ratio,
        weak_norm_estimate: weak.value,
        bound_weak,
        weak_ratio: weak.value / bound_weak,
        maximal_weak: maximal.value,
        maximal_ratio: maximal.value / ap.powf(1.0 / p),
    })
}

fn summarize(config: &ExperimentConfig, rows: &[SweepRow], verified: Vec<usize>) -> SweepSummary {
    let log_pts = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| f(r).filter(|x| *x > 0.0).map(|x| (r.ap_plus.ln(), x.ln())))
            .collect()
    };
    let best = rows
        .iter()
        .filter_map(|r| r.ratio.map(|x| (x, r)))
        .fold(None, |acc: Option<(f64, &SweepRow)>, (x, r)| match acc {
            Some((y, _)) if y >= x => acc,
            _ => Some((x, r)),
        });
    let max_weak = rows.iter().map(|r| r.weak_ratio).fold(None, |a: Option<f64>, x| Some(a.map_or(x, |y| y.max(x))));
    let ap_min = rows.iter().map(|r| r.ap_plus).reduce(f64::min);
    let ap_max = rows.iter().map(|r| r.ap_plus).reduce(f64::max);
    let band = rows
        .iter()
        .map(|r| r.maximal_ratio)
        .fold(None, |a: Option<(f64, f64)>, x| Some(a.map_or((x, x), |(lo, hi)| (lo.min(x), hi.max(x)))));
    SweepSummary {
        rows: rows.len(),
        param: config.sweep_param.to_string(),
        p: config.p,
        depth: config.depth,
        max_ratio: best.map(|b| b.0),
        max_ratio_index: best.map(|b| b.1.index),
        max_ratio_weight: best.map(|b| b.1.weight.clone()),
        ratio_slope: ls_slope(&log_pts(&|r| r.ratio)),
        max_weak_ratio: max_weak,
        weak_ratio_slope: ls_slope(&log_pts(&|r| Some(r.weak_ratio))),
        ap_min,
        ap_max,
        ap_decades: ap_min.zip(ap_max).map(|(lo, hi)| (hi / lo).log10()),
        maximal_band: band,
        verified_rows: verified,
    }
}

/// Rows chosen for verification: every twentieth, starting at `0`.
pub fn verification_indices(rows: usize) -> Vec<usize> {
    (0..rows).step_by(20).collect()
}

/// Recompute the chosen rows from scratch and compare to `1e-10`.
pub fn verify_rows(config: &ExperimentConfig, rows: &[SweepRow]) -> Result<Vec<usize>> {
    let members = config.members();
    let idx = verification_indices(rows.len());
    for &i in &idx {
        let (v, spec) = &members[i];
        let again = compute_row(config, i, *v, spec)?;
        for ((k, a), (_, b)) in rows[i].numbers().into_iter().zip(again.numbers()) {
            let same = (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-10 * a.abs().max(1.0);
            if !same {
                return Err(CliError::Check(format!("row {i} field {k}: {a} vs recomputed {b}")));
            }
        }
    }
    Ok(idx)
}

/// Compute every row in parallel (ordered by index), optionally verify, and
/// write `results.csv`, `records.jsonl` and `summary.json` when `out` is set.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    guard_depth(config)?;
    let members = config.members();
    let rows = members
        .par_iter()
        .enumerate()
        .map(|(i, (v, spec))| compute_row(config, i, *v, spec))
        .collect::<Result<Vec<_>>>()?;
    let verified = if config.verify { verify_rows(config, &rows)? } else { Vec::new() };
    let summary = summarize(config, &rows, verified);
    let outcome = SweepOutcome { rows, summary };
    if let Some(dir) = &config.out {
        write_sweep(dir, config, &outcome)?;
    }
    Ok(outcome)
}

pub fn write_sweep(dir: &Path, config: &ExperimentConfig, outcome: &SweepOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &outcome.rows)?;
    write_jsonl(&dir.join("records.jsonl"), &outcome.rows)?;
    write_json(&dir.join("summary.json"), &outcome.summary)?;
    std::fs::write(dir.join("config.txt"), config.to_string())?;
    Ok(())
}

/// Row sanity plus, when a ratio slope exists, `slope ∈ [-0.1, 0.05]`.
pub fn sweep_checks(outcome: &SweepOutcome) -> Vec<CheckOutcome> {
    let bad: Vec<usize> = outcome.rows.iter().filter(|r| !r.is_sane()).map(|r| r.index).collect();
    let mut v = vec![CheckOutcome::new("rows have positive bounds and finite ratios", bad.is_empty(), format!("bad rows {bad:?}"))];
    if let Some(s) = outcome.summary.ratio_slope {
        v.push(CheckOutcome::new(
            "log-log ratio slope in [-0.1, 0.05]",
            (-0.1..=0.05).contains(&s),
            format!("slope {s:.4}"),
        ));
    }
    v
}

/// `w` for a spec at exponent `p`; convenience for callers holding a row.
pub fn row_weight(row: &SweepRow, p: f64) -> Result<Weight> {
    let line_spec = WeightFamilySpec::parse_line(&row.weight, 1)?;
    Ok(line_spec.generate(p)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_family_rows() {
        let c = ExperimentConfig::parse("depth=6 kind=constant").unwrap();
        let out = run_sweep(&c).unwrap();
        let r = &out.rows[0];
        assert_eq!(r.ap_plus, 1.0);
        assert!((r.op_norm.unwrap() - 1.0).abs() < 1e-8);
        assert!(r.is_sane());
        assert!((r.ratio.unwrap() - 1.0 / r.bound_a2.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn verify_recomputes() {
        let c = ExperimentConfig::parse("depth=5 kind=cascade sweep_param=weight_seed sweep_values=1,2,3 verify=true sign_policy=random")
            .unwrap();
        let out = run_sweep(&c).unwrap();
        assert_eq!(out.summary.verified_rows, vec![0]);
        let w = row_weight(&out.rows[2], 2.0).unwrap();
        assert_eq!(ap_plus(&w, Mode::Dyadic), out.rows[2].ap_plus_dyadic);
    }

    #[test]
    fn non_quadratic_rows_have_no_norm() {
        let c = ExperimentConfig::parse("depth=5 p=3 kind=power alpha=-0.4").unwrap();
        let r = &run_sweep(&c).unwrap().rows[0];
        assert_eq!(r.op_norm, None);
        assert!(r.is_sane());
    }

    #[test]
    fn empty_family_gives_empty_summary() {
        let c = ExperimentConfig::parse("depth=5 sweep_values=").unwrap();
        let out = run_sweep(&c).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.summary.max_ratio, None);
    }
}
