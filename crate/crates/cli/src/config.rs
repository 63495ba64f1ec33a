//! TOML run configuration. Every table rejects unknown keys.

use std::path::Path;

use serde::Deserialize;
use twostage::asymptotics::CoordSequence;
use twostage::simharness::{
    builtin_scenario, example54, Assignment, CoordDraw, MixtureRow, ScenarioMixture, Truth, EXAMPLE54_DEFAULT_PI,
};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub simulate: Option<SimulateConfig>,
    pub mse_ratio: Option<MseRatioConfig>,
    pub fwer_bound: Option<FwerBoundConfig>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: Option<ScenarioConfig>,
    /// Rule strings, or `["all"]` for the standard set.
    pub methods: Option<Vec<String>>,
    /// `bonferroni` or `aware`.
    pub adjustment: Option<String>,
    /// Fixed `p0` for the aware adjustment; estimated per rule when absent.
    pub p0: Option<f64>,
    pub p0_reps: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Name of a built-in scenario; mutually exclusive with `rows`.
    pub builtin: Option<String>,
    pub name: Option<String>,
    pub rows: Option<Vec<RowConfig>>,
    pub assignment: Option<Assignment>,
    /// Mixing weights of `example54`.
    pub pi: Option<[f64; 3]>,
    pub m: Option<usize>,
    pub reps: Option<u64>,
    pub n: Option<u64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowConfig {
    pub gamma: DrawConfig,
    pub beta: DrawConfig,
    pub proportion: f64,
    pub truth: Truth,
}

/// A coordinate: a number, a sequence expression such as `"3n^-1/2"`, or a
/// table `{ mean = "...", sd = "..." }` redrawn every replication.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum DrawConfig {
    Number(f64),
    Expr(String),
    Normal { mean: Box<DrawConfig>, sd: Box<DrawConfig> },
}

impl DrawConfig {
    fn sequence(&self) -> CliResult<CoordSequence> {
        match self {
            DrawConfig::Number(v) => Ok(CoordSequence::constant(*v)),
            DrawConfig::Expr(s) => Ok(s.parse::<CoordSequence>()?),
            DrawConfig::Normal { .. } => Err(CliError::config("nested normal draws are not supported")),
        }
    }

    fn to_draw(&self) -> CliResult<CoordDraw> {
        match self {
            DrawConfig::Normal { mean, sd } => Ok(CoordDraw::Normal { mean: mean.sequence()?, sd: sd.sequence()? }),
            other => Ok(CoordDraw::fixed(other.sequence()?)),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MseRatioConfig {
    pub preset: Option<String>,
    pub gamma: Option<String>,
    pub beta: Option<String>,
    pub c: Option<f64>,
    pub delta: Option<f64>,
    pub n_grid: Option<Vec<u64>>,
    pub reps: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FwerBoundConfig {
    pub scenario: Option<ScenarioConfig>,
    pub rule: Option<String>,
    pub adjustment: Option<String>,
    pub p0_reps: Option<u64>,
}

pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
}

pub fn parse(text: &str) -> CliResult<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::config(e.to_string().trim_end().to_string()))
}

impl ScenarioConfig {
    /// Build the scenario, applying size overrides.
    pub fn build(&self) -> CliResult<ScenarioMixture> {
        let mut s = match (&self.builtin, &self.rows) {
            (Some(_), Some(_)) => return Err(CliError::config("scenario: give either `builtin` or `rows`, not both")),
            (None, None) => return Err(CliError::config("scenario: one of `builtin` or `rows` is required")),
            (Some(name), None) if name == "example54" => example54(self.pi.unwrap_or(EXAMPLE54_DEFAULT_PI))?,
            (Some(name), None) => {
                if self.pi.is_some() {
                    return Err(CliError::config("scenario: `pi` only applies to example54"));
                }
                builtin_scenario(name)?
            }
            (None, Some(rows)) => {
                let rows = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let ctx = |e: CliError| CliError::config(format!("scenario.rows[{i}]: {}", e.message));
                        Ok(MixtureRow {
                            gamma: r.gamma.to_draw().map_err(ctx)?,
                            beta: r.beta.to_draw().map_err(ctx)?,
                            proportion: r.proportion,
                            truth: r.truth,
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                ScenarioMixture::new(self.name.clone().unwrap_or_else(|| "inline".into()), rows)?
            }
        };
        if let Some(name) = &self.name {
            s.name = name.clone();
        }
        if let Some(a) = self.assignment {
            s.assignment = a;
        }
        if let Some(m) = self.m {
            s.m = m;
        }
        if let Some(r) = self.reps {
            s.reps = r;
        }
        if let Some(n) = self.n {
            s.n = n;
        }
        if let Some(sigma) = self.sigma {
            s.sigma = sigma;
        }
        if let Some(alpha) = self.alpha {
            s.alpha = alpha;
        }
        Ok(s)
    }
}
