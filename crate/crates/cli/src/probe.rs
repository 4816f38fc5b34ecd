//! Weak-type behaviour of the weighted one-sided maximal function `M_μ^+`
//! against `[μ]_{A_∞^+}`.
//!
//! The estimates are suprema over finite families of inputs, so each is a
//! lower bound for the constant it names. Reports carry [`EVIDENCE_LABEL`].

use onesided::characteristics::{ainf_plus, WeightFamilySpec};
use onesided::norms::{lp_norm, weak_lp_norm};
use onesided::operators::max_plus_weighted;
use onesided::{GridFunction, Weight};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{guard_depth, task_rng, write_json, write_jsonl, Result};

pub const EVIDENCE_LABEL: &str = "evidence, not proof";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub index: usize,
    pub value: f64,
    pub weight: String,
    pub ainf_plus: f64,
    /// `sup ‖M_μ^+ f‖_{L^{1,∞}(μ)} / ‖f‖_{L¹(μ)}` over the family.
    pub weak_l1: f64,
    pub weak_l1_witness: String,
    pub weak_l2: f64,
    pub weak_l2_witness: String,
    /// `weak_l1 / [μ]_{A_∞^+}`.
    pub weak_l1_over_ainf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeMaximalReport {
    pub label: String,
    pub family_size: usize,
    pub rows: Vec<ProbeRow>,
}

fn weak_sup(mu: &Weight, family: &[(String, GridFunction)], p: f64) -> Result<(f64, String)> {
    let vals = family
        .par_iter()
        .map(|(_, f)| {
            let n = lp_norm(f, mu.into(), p)?;
            if n == 0.0 {
                return Ok(0.0);
            }
            let m = max_plus_weighted(f, mu)?;
            Ok(weak_lp_norm(&m, mu.into(), p)?.value / n)
        })
        .collect::<onesided::Result<Vec<f64>>>()?;
    let mut best = (0.0, String::from("none"));
    for (v, (name, _)) in vals.into_iter().zip(family) {
        if v > best.0 {
            best = (v, name.clone());
        }
    }
    Ok(best)
}

fn probe_row(config: &ExperimentConfig, index: usize, value: f64, spec: &WeightFamilySpec) -> Result<ProbeRow> {
    let mu = spec.generate(2.0)?;
    let grid = mu.grid();
    let mut family: Vec<(String, GridFunction)> = grid
        .intervals_through(grid.depth() - 1)
        .map(|id| Ok((format!("indicator {}", id.right()), GridFunction::indicator(grid, id.right(), 1.0)?)))
        .collect::<onesided::Result<_>>()?;
    let mut rng = task_rng(config.seed, index as u64);
    for k in 0..config.family_size {
        family.push((format!("random #{k}"), GridFunction::from_fn(grid, |_| rng.gen::<f64>())?));
    }
    let (weak_l1, weak_l1_witness) = weak_sup(&mu, &family, 1.0)?;
    let (weak_l2, weak_l2_witness) = weak_sup(&mu, &family, 2.0)?;
    let ainf = ainf_plus(&mu);
    Ok(ProbeRow {
        index,
        value,
        weight: spec.to_string(),
        ainf_plus: ainf,
        weak_l1,
        weak_l1_witness,
        weak_l2,
        weak_l2_witness,
        weak_l1_over_ainf: weak_l1 / ainf,
    })
}

/// One row per family member; writes `probe.jsonl` and `probe.json` when
/// `out` is set.
pub fn probe_weighted_maximal(config: &ExperimentConfig) -> Result<ProbeMaximalReport> {
    guard_depth(config)?;
    let rows = config
        .members()
        .par_iter()
        .enumerate()
        .map(|(i, (v, spec))| probe_row(config, i, *v, spec))
        .collect::<Result<Vec<_>>>()?;
    let report = ProbeMaximalReport {
        label: EVIDENCE_LABEL.into(),
        family_size: config.family_size,
        rows,
    };
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("probe.jsonl"), &report.rows)?;
        write_json(&dir.join("probe.json"), &report)?;
    }
    Ok(report)
}
