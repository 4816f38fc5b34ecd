//! Extremal search for `‖T‖_{L²(w)} / ([w]_{A_2^+} max{[σ]_{A_∞^-}, [w]_{A_∞^+}})^{1/2}`.
//!
//! Sign moves flip the `ε_I` whose first-order effect on `vᵀBu` is most
//! positive, `(u, v)` being the current singular pair; such a flip always
//! raises the norm. Cascade weights are also moved by seeded annealing on
//! `(θ, weight seed)`.

use std::path::Path;

use onesided::characteristics::{ainf_minus, ainf_plus, ap_plus, WeightFamilySpec, WeightKind};
use onesided::norms::{op_norm_l2_detailed, OpNormReport, PowerOptions};
use onesided::operators::haar_coeff;
use onesided::{GridFunction, IntervalId, Mode, SignPattern, Weight};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{guard_depth, task_rng, write_json, write_jsonl, CheckOutcome, CliError, Result};

const START_TEMPERATURE: f64 = 0.05;
const THETA_STEP: f64 = 0.05;
const THETA_MAX: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub restart: usize,
    pub iteration: usize,
    pub ratio: f64,
    pub a2_plus: f64,
    pub accepted: bool,
    #[serde(rename = "move")]
    pub kind: String,
    pub best_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchWitness {
    pub ratio: f64,
    pub op_norm: f64,
    pub a2_plus: f64,
    pub ainf_plus: f64,
    pub ainf_minus_sigma: f64,
    pub eps: Vec<i8>,
    pub weight: WeightFamilySpec,
    pub weight_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub best: SearchWitness,
    pub best_restart: usize,
    pub budget: usize,
    pub restarts: usize,
    pub iterations: usize,
    /// Some restart used its whole budget without converging.
    pub budget_exhausted: bool,
    /// Every restart stopped with no improving move left.
    pub converged: bool,
    pub trajectory: Vec<SearchStep>,
}

/// `c_I = ε_I ⟨√σ u, h_{I+}⟩ ⟨√w v, h_{I-}⟩`: flipping `ε_I` moves `vᵀBu`
/// by `-2 c_I / Δx`.
fn flip_scores(eps: &SignPattern, w: &Weight, rep: &OpNormReport) -> Result<Vec<(IntervalId, f64)>> {
    let grid = w.grid();
    let a = GridFunction::new(grid, rep.right.iter().zip(w.values()).map(|(u, x)| u / x.sqrt()).collect())?;
    let b = GridFunction::new(grid, rep.left.iter().zip(w.values()).map(|(v, x)| v * x.sqrt()).collect())?;
    eps.iter()
        .map(|(id, s)| Ok((id, s as f64 * haar_coeff(&a, id.right())? * haar_coeff(&b, id.left())?)))
        .collect()
}

fn most_negative(scores: &[(IntervalId, f64)], norm: f64) -> Option<IntervalId> {
    let (id, c) = scores.iter().copied().min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))?;
    (c < -1e-12 * norm.max(1e-300)).then_some(id)
}

fn norm_of(eps: &SignPattern, w: &Weight) -> Result<OpNormReport> {
    Ok(op_norm_l2_detailed(eps, w, None, PowerOptions::default())?)
}

/// Greedy guided flips from `eps` for at most `steps` flips; returns the
/// pattern, its norm report and the number of flips made.
pub fn sign_ascent(mut eps: SignPattern, w: &Weight, steps: usize) -> Result<(SignPattern, OpNormReport, usize)> {
    let mut rep = norm_of(&eps, w)?;
    let mut flips = 0;
    while flips < steps {
        let scores = flip_scores(&eps, w, &rep)?;
        let Some(id) = most_negative(&scores, rep.value) else { break };
        eps.flip(id);
        rep = norm_of(&eps, w)?;
        flips += 1;
    }
    Ok((eps, rep, flips))
}

#[derive(Clone)]
struct State {
    eps: SignPattern,
    spec: WeightFamilySpec,
    w: Weight,
    rep: OpNormReport,
    a2: f64,
    ainf_p: f64,
    ainf_m: f64,
}

impl State {
    fn new(eps: SignPattern, spec: WeightFamilySpec) -> Result<Self> {
        let w = spec.generate(2.0)?;
        let rep = norm_of(&eps, &w)?;
        let sigma = w.dual();
        Ok(Self {
            a2: ap_plus(&w, Mode::Dyadic),
            ainf_p: ainf_plus(&w),
            ainf_m: ainf_minus(&sigma),
            eps,
            spec,
            w,
            rep,
        })
    }

    fn with_eps(&self, eps: SignPattern) -> Result<Self> {
        let rep = norm_of(&eps, &self.w)?;
        Ok(Self {
            eps,
            spec: self.spec.clone(),
            w: self.w.clone(),
            rep,
            ..*self
        })
    }

    fn ratio(&self) -> f64 {
        self.rep.value / (self.a2 * self.ainf_m.max(self.ainf_p)).sqrt()
    }

    fn witness(&self) -> SearchWitness {
        SearchWitness {
            ratio: self.ratio(),
            op_norm: self.rep.value,
            a2_plus: self.a2,
            ainf_plus: self.ainf_p,
            ainf_minus_sigma: self.ainf_m,
            eps: self.eps.signs().to_vec(),
            weight: self.spec.clone(),
            weight_values: self.w.values().to_vec(),
        }
    }
}

struct RestartResult {
    best: State,
    steps: Vec<SearchStep>,
    iterations: usize,
    converged: bool,
}

fn propose_weight(spec: &WeightFamilySpec, rng: &mut ChaCha8Rng) -> WeightFamilySpec {
    let mut s = spec.clone();
    let normal = Normal::new(0.0, THETA_STEP).expect("valid normal");
    s.theta = (s.theta + normal.sample(rng)).clamp(0.0, THETA_MAX);
    if rng.gen_bool(0.25) {
        s.seed = rng.gen_range(0..1_000_000);
    }
    s
}

fn run_restart(config: &ExperimentConfig, restart: usize) -> Result<RestartResult> {
    let mut rng = task_rng(config.seed, restart as u64);
    let grid = onesided::DyadicGrid::new(config.depth)?;
    let eps0 = if restart == 0 {
        SignPattern::all_plus(grid)
    } else {
        let e = SignPattern::random(grid, &mut rng);
        SignPattern::from_fn(grid, |id| if e.get(id) < 0 { -1 } else { 1 })?
    };
    let anneal = config.family.kind == WeightKind::Cascade;
    let mut cur = State::new(eps0, config.base_spec())?;
    let mut best_ratio = cur.ratio();
    let mut steps = vec![SearchStep {
        restart,
        iteration: 0,
        ratio: best_ratio,
        a2_plus: cur.a2,
        accepted: true,
        kind: "start".into(),
        best_ratio,
    }];
    let mut best = cur.clone();
    let mut converged = false;
    let mut it = 0;
    while it < config.budget {
        it += 1;
        let scores = flip_scores(&cur.eps, &cur.w, &cur.rep)?;
        let guided = most_negative(&scores, cur.rep.value);
        let weight_turn = anneal && (it % 2 == 0 || guided.is_none());
        let (next, kind, accept) = if weight_turn {
            let spec = propose_weight(&cur.spec, &mut rng);
            let kind = format!("weight theta={} seed={}", spec.theta, spec.seed);
            let cand = State::new(cur.eps.clone(), spec)?;
            let t = START_TEMPERATURE * (1.0 - (it - 1) as f64 / config.budget as f64);
            let d = cand.ratio() - cur.ratio();
            let u: f64 = rng.gen();
            let accept = d >= 0.0 || (t > 0.0 && u < (d / t).exp());
            (cand, kind, accept)
        } else if let Some(id) = guided {
            let mut e = cur.eps.clone();
            e.flip(id);
            (cur.with_eps(e)?, format!("flip {id}"), true)
        } else {
            converged = true;
            it -= 1;
            break;
        };
        let r = next.ratio();
        let a2 = next.a2;
        if accept {
            cur = next;
            if r > best_ratio {
                best_ratio = r;
                best = cur.clone();
            }
        }
        steps.push(SearchStep {
            restart,
            iteration: it,
            ratio: r,
            a2_plus: a2,
            accepted: accept,
            kind,
            best_ratio,
        });
    }
    Ok(RestartResult {
        best,
        steps,
        iterations: it,
        converged,
    })
}

/// Restarts run in parallel, each on its own stream; results are merged in
/// restart order. Writes `trajectory.jsonl` and `best.json` when `out` is
/// set.
pub fn run_search(config: &ExperimentConfig) -> Result<SearchReport> {
    guard_depth(config)?;
    if config.p != 2.0 {
        return Err(CliError::config(format!("search maximizes the L² ratio and needs p = 2, got {}", config.p)));
    }
    let restarts = config.restarts.max(1);
    let results = (0..restarts)
        .into_par_iter()
        .map(|r| run_restart(config, r))
        .collect::<Result<Vec<_>>>()?;
    let mut best_restart = 0;
    for (i, r) in results.iter().enumerate() {
        if r.best.ratio() > results[best_restart].best.ratio() {
            best_restart = i;
        }
    }
    let report = SearchReport {
        best: results[best_restart].best.witness(),
        best_restart,
        budget: config.budget,
        restarts,
        iterations: results.iter().map(|r| r.iterations).sum(),
        budget_exhausted: results.iter().any(|r| !r.converged),
        converged: results.iter().all(|r| r.converged),
        trajectory: results.into_iter().flat_map(|r| r.steps).collect(),
    };
    if let Some(dir) = &config.out {
        write_search(dir, config, &report)?;
    }
    Ok(report)
}

pub fn write_search(dir: &Path, config: &ExperimentConfig, report: &SearchReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("trajectory.jsonl"), &report.trajectory)?;
    write_json(&dir.join("best.json"), &report.best)?;
    std::fs::write(dir.join("config.txt"), config.to_string())?;
    Ok(())
}

pub fn search_checks(report: &SearchReport) -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::new("best ratio finite and positive", report.best.ratio.is_finite() && report.best.ratio > 0.0, format!("{}", report.best.ratio)),
        CheckOutcome::new(
            "best-so-far never decreases",
            report.trajectory.windows(2).all(|w| w[0].restart != w[1].restart || w[1].best_ratio >= w[0].best_ratio),
            String::new(),
        ),
    ]
}
