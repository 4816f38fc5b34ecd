//! `key=value` experiment configuration.
//!
//! ```text
//! # decreasing power family
//! depth=12
//! p=2
//! kind=power
//! orientation=decreasing
//! sweep_param=alpha
//! sweep_values=-0.9,-0.7,-0.5,-0.3,-0.1
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use onesided::characteristics::{WeightFamilySpec, WeightKind};
use onesided::{IntervalId, Mode};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// How the sign pattern of each experiment is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPolicy {
    AllPlus,
    /// Seeded from `(seed, task index)`.
    Random,
    /// Sign-flip ascent from all plus, `budget` steps.
    Search,
}

impl FromStr for SignPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all_plus" => Ok(SignPolicy::AllPlus),
            "random" => Ok(SignPolicy::Random),
            "search" => Ok(SignPolicy::Search),
            other => Err(format!("unknown sign policy '{other}'")),
        }
    }
}

impl fmt::Display for SignPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignPolicy::AllPlus => "all_plus",
            SignPolicy::Random => "random",
            SignPolicy::Search => "search",
        })
    }
}

/// The family parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    Theta,
    WeightSeed,
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "theta" => Ok(SweepParam::Theta),
            "weight_seed" => Ok(SweepParam::WeightSeed),
            other => Err(format!("unknown sweep parameter '{other}'")),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Theta => "theta",
            SweepParam::WeightSeed => "weight_seed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub depth: u32,
    pub p: f64,
    pub seed: u64,
    /// Worker threads; `0` lets rayon decide.
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub mode: Mode,
    pub sign_policy: SignPolicy,
    /// Base weight; its depth is overwritten by `depth`.
    pub family: WeightFamilySpec,
    pub sweep_param: SweepParam,
    /// `None` runs the base weight alone; `Some(vec![])` is an empty family.
    pub sweep_values: Option<Vec<f64>>,
    pub budget: usize,
    pub restarts: usize,
    pub verify: bool,
    pub family_size: usize,
    pub i0: IntervalId,
    pub a: Option<i32>,
    pub trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            depth: 10,
            p: 2.0,
            seed: 0,
            threads: 0,
            out: None,
            mode: Mode::Dyadic,
            sign_policy: SignPolicy::AllPlus,
            family: WeightFamilySpec::default(),
            sweep_param: SweepParam::Alpha,
            sweep_values: None,
            budget: 200,
            restarts: 1,
            verify: false,
            family_size: 16,
            i0: IntervalId::ROOT,
            a: None,
            trials: 100,
        }
    }
}

pub const KEYS: &[&str] = &[
    "depth",
    "p",
    "seed",
    "threads",
    "out",
    "mode",
    "sign_policy",
    "kind",
    "alpha",
    "orientation",
    "theta",
    "weight_seed",
    "sweep_param",
    "sweep_values",
    "budget",
    "restarts",
    "verify",
    "family_size",
    "i0",
    "a",
    "trials",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid value '{v}' for {key}"))
}

impl ExperimentConfig {
    /// Set one key. Errors name the key and value but carry no line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "depth" => self.depth = num(key, value)?,
            "p" => {
                let p: f64 = num(key, value)?;
                if !(p > 1.0 && p.is_finite()) {
                    return Err(format!("p = {p} must lie in (1, ∞)"));
                }
                self.p = p;
            }
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "out" => self.out = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            "mode" => self.mode = value.parse()?,
            "sign_policy" => self.sign_policy = value.parse()?,
            "kind" | "alpha" | "orientation" | "theta" => self.family.set(key, value)?,
            "weight_seed" => self.family.set("seed", value)?,
            "sweep_param" => self.sweep_param = value.parse()?,
            "sweep_values" => {
                let v = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| num::<f64>(key, s))
                    .collect::<Result<Vec<_>, _>>()?;
                self.sweep_values = Some(v);
            }
            "budget" => self.budget = num(key, value)?,
            "restarts" => self.restarts = num(key, value)?,
            "verify" => self.verify = num(key, value)?,
            "family_size" => self.family_size = num(key, value)?,
            "i0" => self.i0 = value.parse().map_err(|e| format!("invalid value '{value}' for i0: {e}"))?,
            "a" => self.a = if value.is_empty() || value == "auto" { None } else { Some(num(key, value)?) },
            "trials" => self.trials = num(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Apply `key=value` lines on top of `self`. Blank lines and `#` comments
    /// are skipped; a line may hold several whitespace-separated pairs.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            for tok in line.split_whitespace() {
                let (k, v) = tok.split_once('=').ok_or_else(|| CliError::Config {
                    line: Some(i + 1),
                    message: format!("expected key=value, got '{tok}'"),
                })?;
                self.set(k, v).map_err(|message| CliError::Config { line: Some(i + 1), message })?;
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// The base weight spec at the configured depth.
    pub fn base_spec(&self) -> WeightFamilySpec {
        WeightFamilySpec {
            depth: self.depth,
            ..self.family.clone()
        }
    }

    /// `(parameter value, spec)` for every family member.
    pub fn members(&self) -> Vec<(f64, WeightFamilySpec)> {
        let base = self.base_spec();
        let Some(values) = &self.sweep_values else {
            let v = match self.sweep_param {
                SweepParam::Alpha => base.alpha,
                SweepParam::Theta => base.theta,
                SweepParam::WeightSeed => base.seed as f64,
            };
            return vec![(v, base)];
        };
        values
            .iter()
            .map(|&v| {
                let mut s = base.clone();
                match self.sweep_param {
                    SweepParam::Alpha => s.alpha = v,
                    SweepParam::Theta => s.theta = v,
                    SweepParam::WeightSeed => s.seed = v as u64,
                }
                (v, s)
            })
            .collect()
    }

    pub fn is_cascade(&self) -> bool {
        self.family.kind == WeightKind::Cascade
    }
}

/// Renders as config text that [`ExperimentConfig::parse`] reads back.
impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "depth={}", self.depth)?;
        writeln!(f, "p={}", self.p)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "threads={}", self.threads)?;
        if let Some(out) = &self.out {
            writeln!(f, "out={}", out.display())?;
        }
        writeln!(f, "mode={}", self.mode)?;
        writeln!(f, "sign_policy={}", self.sign_policy)?;
        writeln!(f, "kind={}", self.family.kind)?;
        writeln!(f, "alpha={}", self.family.alpha)?;
        writeln!(f, "orientation={}", self.family.orientation)?;
        writeln!(f, "theta={}", self.family.theta)?;
        writeln!(f, "weight_seed={}", self.family.seed)?;
        writeln!(f, "sweep_param={}", self.sweep_param)?;
        if let Some(v) = &self.sweep_values {
            let s: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(f, "sweep_values={}", s.join(","))?;
        }
        writeln!(f, "budget={}", self.budget)?;
        writeln!(f, "restarts={}", self.restarts)?;
        writeln!(f, "verify={}", self.verify)?;
        writeln!(f, "family_size={}", self.family_size)?;
        writeln!(f, "i0={},{}", self.i0.level, self.i0.index)?;
        match self.a {
            Some(a) => writeln!(f, "a={a}")?,
            None => writeln!(f, "a=auto")?,
        }
        writeln!(f, "trials={}", self.trials)
    }
}
