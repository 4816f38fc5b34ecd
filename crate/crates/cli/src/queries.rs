//! Single-weight reports behind the `characteristic`, `norm`, `testing`,
//! `corona` and `distribution` subcommands. Each works on the base weight of
//! the config and `σ = w^{1-p'}`.

use std::collections::BTreeMap;

use onesided::characteristics::{a1_plus, ainf_minus, ainf_plus, ap_minus, ap_plus_with_witness, ap_two_sided, WeightFamilySpec};
use onesided::corona::{
    build_corona, distribution_profile, slice_ka, top_populated_a, verify_eta_chain, DistributionProfile, EtaChainReport,
    SliceData, SliceScope, SliceSpec,
};
use onesided::norms::{linearized_testing, maximal_weak_testing, ntv_testing, LinearizedTestingReport, TestingReport, WeakNormReport};
use onesided::{GridFunction, IntervalId, Mode, SignPattern, TruncationProfile, Weight};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SignPolicy};
use crate::search::sign_ascent;
use crate::sweep::{compute_row, SweepRow};
use crate::{guard_depth, task_rng, CheckOutcome, CliError, Result};

fn base(config: &ExperimentConfig) -> Result<(WeightFamilySpec, Weight, Weight)> {
    guard_depth(config)?;
    let spec = config.base_spec();
    let w = spec.generate(config.p)?;
    let sigma = w.dual();
    Ok((spec, w, sigma))
}

/// The sign pattern chosen by the config's policy on stream `0`.
pub fn sign_pattern(config: &ExperimentConfig, w: &Weight) -> Result<SignPattern> {
    let grid = w.grid();
    Ok(match config.sign_policy {
        SignPolicy::AllPlus => SignPattern::all_plus(grid),
        SignPolicy::Random => SignPattern::random(grid, &mut task_rng(config.seed, 0)),
        SignPolicy::Search => sign_ascent(SignPattern::all_plus(grid), w, config.budget)?.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicReport {
    pub weight: String,
    pub p: f64,
    pub mode: Mode,
    pub ap_plus: f64,
    /// `(first cell, half length in cells)` of the maximizing window.
    pub ap_plus_witness: (usize, usize),
    pub ap_minus: f64,
    pub ap_two_sided: f64,
    pub a1_plus: f64,
    pub ainf_plus: f64,
    pub ainf_minus: f64,
    pub ainf_minus_sigma: f64,
    /// `[σ]_{A_{p'}^-}^{p-1}`, equal to `ap_plus`.
    pub dual_ap_minus_pow: f64,
    /// `[w]_{A_p^+}^{p'-1}`, an upper bound for `ainf_minus_sigma`.
    pub sigma_bound: f64,
}

pub fn characteristic(config: &ExperimentConfig) -> Result<CharacteristicReport> {
    let (spec, w, sigma) = base(config)?;
    let p = config.p;
    let pc = p / (p - 1.0);
    let (ap, witness) = ap_plus_with_witness(&w, config.mode);
    Ok(CharacteristicReport {
        weight: spec.to_string(),
        p,
        mode: config.mode,
        ap_plus: ap,
        ap_plus_witness: witness,
        ap_minus: ap_minus(&w, config.mode),
        ap_two_sided: ap_two_sided(&w),
        a1_plus: a1_plus(&w, config.mode),
        ainf_plus: ainf_plus(&w),
        ainf_minus: ainf_minus(&w),
        ainf_minus_sigma: ainf_minus(&sigma),
        dual_ap_minus_pow: ap_minus(&sigma, config.mode).powf(p - 1.0),
        sigma_bound: ap.powf(pc - 1.0),
    })
}

pub fn characteristic_checks(r: &CharacteristicReport) -> Vec<CheckOutcome> {
    let rel = (r.ap_plus - r.dual_ap_minus_pow).abs() / r.ap_plus;
    vec![
        CheckOutcome::new("duality [w]_{A_p^+} = [σ]_{A_p'^-}^{p-1}", rel <= 1e-10, format!("relative gap {rel:.3e}")),
        CheckOutcome::new(
            "[σ]_{A_∞^-} <= [w]_{A_p^+}^{p'-1}",
            r.ainf_minus_sigma <= r.sigma_bound * (1.0 + 1e-12),
            format!("{} vs {}", r.ainf_minus_sigma, r.sigma_bound),
        ),
    ]
}

/// The sweep row of the base weight.
pub fn norm(config: &ExperimentConfig) -> Result<SweepRow> {
    guard_depth(config)?;
    let (v, spec) = config
        .members()
        .into_iter()
        .next()
        .unwrap_or_else(|| (config.family.alpha, config.base_spec()));
    compute_row(config, 0, v, &spec)
}

pub fn norm_checks(r: &SweepRow) -> Vec<CheckOutcome> {
    vec![CheckOutcome::new("positive bounds and finite ratios", r.is_sane(), format!("ratio {:?}", r.ratio))]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestingQueryReport {
    pub weight: String,
    pub testing: TestingReport,
    pub maximal_weak: WeakNormReport,
    pub linearized: Option<LinearizedTestingReport>,
}

pub fn testing(config: &ExperimentConfig) -> Result<TestingQueryReport> {
    let (spec, w, sigma) = base(config)?;
    let eps = sign_pattern(config, &w)?;
    let linearized = if config.i0.level + 2 <= config.depth {
        Some(linearized_testing(&eps, &w, &sigma, config.i0, config.budget, config.seed)?)
    } else {
        None
    };
    Ok(TestingQueryReport {
        weight: spec.to_string(),
        testing: ntv_testing(&eps, &w, &sigma)?,
        maximal_weak: maximal_weak_testing(&w, &sigma, config.p, config.family_size, config.seed)?,
        linearized,
    })
}

pub fn testing_checks(r: &TestingQueryReport) -> Vec<CheckOutcome> {
    let t = &r.testing;
    let all = [
        t.forward_restricted,
        t.forward_parent,
        t.forward_global,
        t.adjoint_restricted,
        t.adjoint_parent,
        t.adjoint_global,
        r.maximal_weak.value,
    ];
    vec![
        CheckOutcome::new("testing constants finite", all.iter().all(|x| x.is_finite()), String::new()),
        CheckOutcome::new(
            "restricted <= parent <= global",
            t.forward_restricted <= t.forward_parent * (1.0 + 1e-12)
                && t.forward_parent <= t.forward_global * (1.0 + 1e-12)
                && t.adjoint_restricted <= t.adjoint_parent * (1.0 + 1e-12)
                && t.adjoint_parent <= t.adjoint_global * (1.0 + 1e-12),
            String::new(),
        ),
    ]
}

fn check_root(config: &ExperimentConfig) -> Result<()> {
    if config.i0.level + 3 > config.depth {
        return Err(CliError::config(format!(
            "i0 = {} needs level <= depth - 3 = {}",
            config.i0,
            config.depth as i64 - 3
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoronaReport {
    pub weight: String,
    pub i0: IntervalId,
    /// Candidate counts per `a`, proper subintervals, no average bound.
    pub populations: BTreeMap<i32, usize>,
    pub a: Option<i32>,
    /// Stopping intervals per generation.
    pub generation_sizes: Vec<usize>,
    pub chain: Option<EtaChainReport>,
}

pub fn corona(config: &ExperimentConfig) -> Result<CoronaReport> {
    let (spec, w, sigma) = base(config)?;
    check_root(config)?;
    let p = config.p;
    let data = SliceData::new(&w, &sigma, p)?;
    let populations = data.populations(config.i0, SliceScope::ProperSubintervals, false);
    let a = match config.a {
        Some(a) => Some(a),
        None => top_populated_a(&w, &sigma, config.i0, p, SliceScope::ProperSubintervals, false)?,
    };
    let (generation_sizes, chain) = match a {
        Some(a) => {
            let ka = data.slice(&SliceSpec::global(config.i0, a, p))?;
            let forest = build_corona(&w, &ka, config.i0)?;
            let eps = sign_pattern(config, &w)?;
            let chain = verify_eta_chain(&eps, &w, &sigma, p, config.i0, a, None, None)?;
            (forest.generations().iter().map(Vec::len).collect(), Some(chain))
        }
        None => (Vec::new(), None),
    };
    Ok(CoronaReport {
        weight: spec.to_string(),
        i0: config.i0,
        populations,
        a,
        generation_sizes,
        chain,
    })
}

pub fn corona_checks(r: &CoronaReport) -> Vec<CheckOutcome> {
    let Some(c) = &r.chain else {
        return vec![CheckOutcome::new("non-empty slice", true, "no candidates")];
    };
    vec![
        CheckOutcome::new("forest partition, growth and assignment", c.forest_ok, String::new()),
        CheckOutcome::new(
            "decomposition exact to 1e-12",
            c.decomposition_error <= 1e-12,
            format!("{:.3e}", c.decomposition_error),
        ),
        CheckOutcome::new("layers rebuild each τ_S", c.layers_exact, String::new()),
        CheckOutcome::new("measure conversion", c.conversion_holds, format!("{} vs {}", c.conversion_lhs, c.conversion_rhs)),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub weight: String,
    pub i0: IntervalId,
    pub a: Option<i32>,
    pub ka_size: usize,
    pub profile: Option<DistributionProfile>,
}

/// Level sets of `T*_{K_a}(w 1_{I0})` with `K_a` sliced locally (left half of
/// `I0`, average bound), untruncated.
pub fn distribution(config: &ExperimentConfig) -> Result<DistributionReport> {
    let (spec, w, sigma) = base(config)?;
    check_root(config)?;
    let p = config.p;
    let a = match config.a {
        Some(a) => Some(a),
        None => top_populated_a(&w, &sigma, config.i0, p, SliceScope::LeftHalf, true)?,
    };
    let grid = w.grid();
    let (ka_size, profile) = match a {
        Some(a) => {
            let ka = slice_ka(&w, &sigma, &SliceSpec::local(config.i0, a, p))?;
            let eps = sign_pattern(config, &w)?;
            let phi = GridFunction::indicator(grid, config.i0, 1.0)?;
            let delta = TruncationProfile::untruncated(grid);
            let prof = distribution_profile(&eps, &delta, &w, &sigma, &ka, config.i0, &phi, p, None)?;
            (ka.len(), Some(prof))
        }
        None => (0, None),
    };
    Ok(DistributionReport {
        weight: spec.to_string(),
        i0: config.i0,
        a,
        ka_size,
        profile,
    })
}

pub fn distribution_checks(r: &DistributionReport) -> Vec<CheckOutcome> {
    let Some(prof) = &r.profile else {
        return vec![CheckOutcome::new("non-empty slice", true, "no candidates")];
    };
    vec![
        CheckOutcome::new("level-set measure non-increasing", prof.is_monotone(), String::new()),
        CheckOutcome::new(
            "fitted decay rate positive",
            prof.c_fit.map_or(true, |c| c > 0.0),
            format!("{:?}", prof.c_fit),
        ),
    ]
}
