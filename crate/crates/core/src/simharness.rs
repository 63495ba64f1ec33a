//! Monte-Carlo multiple-testing experiments over mixtures of parameter
//! sequences.
//!
//! Every hypothesis of every replication draws from its own
//! [`RandomStream`] with index `rep·m + i`, and all methods are applied to the
//! same draws. Results are therefore independent of thread count and method
//! deltas are pure post-processing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{CoordSequence, ParamSequence};
use crate::dist::RandomStream;
use crate::error::{invalid, Result};
use crate::estimators::{joint_pvalue, EstimatePair};
use crate::twostage::{evaluate_filter, FiltrationRule, Method};

pub const DEFAULT_M: usize = 200;
pub const DEFAULT_REPS: u64 = 500;
pub const DEFAULT_N: u64 = 200;
pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Null00,
    Null10,
    Null01,
    Alternative,
}

impl Truth {
    pub fn is_null(self) -> bool {
        self != Truth::Alternative
    }
}

/// How a coordinate's true value is produced in each replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordDraw {
    /// Deterministic value of the sequence at `n`.
    Fixed { value: CoordSequence },
    /// Redrawn every replication from `N(mean(n), sd(n)²)`.
    Normal { mean: CoordSequence, sd: CoordSequence },
}

impl CoordDraw {
    pub fn fixed(value: CoordSequence) -> Self {
        CoordDraw::Fixed { value }
    }

    fn draw(&self, n: f64, s: &mut RandomStream) -> Result<f64> {
        match self {
            CoordDraw::Fixed { value } => Ok(value.eval(n)),
            CoordDraw::Normal { mean, sd } => s.sample_normal(mean.eval(n), sd.eval(n)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub gamma: CoordDraw,
    pub beta: CoordDraw,
    pub proportion: f64,
    pub truth: Truth,
}

impl MixtureRow {
    pub fn fixed(seq: ParamSequence, proportion: f64, truth: Truth) -> Self {
        Self { gamma: CoordDraw::fixed(seq.gamma), beta: CoordDraw::fixed(seq.beta), proportion, truth }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Fixed counts per row, `round(proportion·m)` with largest-remainder correction.
    Deterministic,
    /// Each hypothesis picks its row independently.
    Multinomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMixture {
    pub name: String,
    pub rows: Vec<MixtureRow>,
    pub m: usize,
    pub reps: u64,
    pub n: u64,
    pub sigma: f64,
    pub alpha: f64,
    pub assignment: Assignment,
    /// Sum of the proportions as supplied, before normalization.
    pub raw_proportion_sum: f64,
}

impl ScenarioMixture {
    /// Build a scenario with default sizes, normalizing proportions to sum to 1.
    pub fn new(name: impl Into<String>, rows: Vec<MixtureRow>) -> Result<Self> {
        let mut s = Self {
            name: name.into(),
            rows,
            m: DEFAULT_M,
            reps: DEFAULT_REPS,
            n: DEFAULT_N,
            sigma: DEFAULT_SIGMA,
            alpha: DEFAULT_ALPHA,
            assignment: Assignment::Deterministic,
            raw_proportion_sum: 0.0,
        };
        s.normalize()?;
        Ok(s)
    }

    fn normalize(&mut self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(invalid("scenario has no rows"));
        }
        if self.rows.iter().any(|r| !(r.proportion >= 0.0) || !r.proportion.is_finite()) {
            return Err(invalid("row proportions must be non-negative"));
        }
        let total: f64 = self.rows.iter().map(|r| r.proportion).sum();
        if !(total > 0.0) {
            return Err(invalid("row proportions sum to zero"));
        }
        self.raw_proportion_sum = total;
        for r in &mut self.rows {
            r.proportion /= total;
        }
        Ok(())
    }

    /// Whether the supplied proportions had to be rescaled.
    pub fn renormalized(&self) -> bool {
        (self.raw_proportion_sum - 1.0).abs() > 1e-9
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if self.rows.is_empty() {
            return Err(invalid("scenario has no rows"));
        }
        let total: f64 = self.rows.iter().map(|r| r.proportion).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("proportions sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Row counts for deterministic assignment (largest-remainder rounding).
    pub fn row_counts(&self) -> Vec<usize> {
        let exact: Vec<f64> = self.rows.iter().map(|r| r.proportion * self.m as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        // stable sort: ties go to the earlier row
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        for &i in order.iter().take(self.m.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }
}

fn seq(g: CoordSequence, b: CoordSequence) -> ParamSequence {
    ParamSequence::new(g, b)
}

/// The eight parameter rows of the multiple-testing study, in order.
pub fn study_rows() -> [(ParamSequence, Truth); 8] {
    let zero = CoordSequence::constant(0.0);
    let root = || CoordSequence::power(3.0, 0.5);
    let cube = || CoordSequence::power(3.0, 1.0 / 3.0);
    let shifted = || CoordSequence::constant(1.0).plus_power(3.0, 0.5);
    [
        (seq(zero.clone(), zero.clone()), Truth::Null00),
        (seq(CoordSequence::power(3.0, 0.75), zero.clone()), Truth::Null10),
        (seq(root(), zero.clone()), Truth::Null10),
        (seq(cube(), zero.clone()), Truth::Null10),
        (seq(shifted(), zero.clone()), Truth::Null10),
        (seq(root(), root()), Truth::Alternative),
        (seq(cube(), root()), Truth::Alternative),
        (seq(shifted(), root()), Truth::Alternative),
    ]
}

/// Mixture proportions (percent) per configuration over the eight study rows.
const CONFIG_PERCENTS: [[f64; 8]; 3] = [
    [65.0, 0.0, 30.0, 0.0, 0.0, 5.0, 0.0, 0.0],
    [25.0, 15.0, 25.0, 10.0, 15.0, 4.0, 3.0, 3.0],
    // sums to 85; normalized on construction
    [25.0, 0.0, 35.0, 0.0, 15.0, 0.0, 0.0, 10.0],
];

pub const BUILTIN_SCENARIOS: [&str; 4] = ["config1", "config2", "config3", "example54"];

/// Mixing weights `(π₀, π₁, π₂)` of the hierarchical example scenario.
pub const EXAMPLE54_DEFAULT_PI: [f64; 3] = [0.7, 0.2, 0.1];

pub fn builtin_scenario(name: &str) -> Result<ScenarioMixture> {
    match name {
        "config1" | "config2" | "config3" => {
            let idx = name[6..].parse::<usize>().expect("config index") - 1;
            let rows = study_rows()
                .into_iter()
                .zip(CONFIG_PERCENTS[idx])
                .filter(|(_, pct)| *pct > 0.0)
                .map(|((s, truth), pct)| MixtureRow::fixed(s, pct / 100.0, truth))
                .collect();
            ScenarioMixture::new(name, rows)
        }
        "example54" => example54(EXAMPLE54_DEFAULT_PI),
        other => Err(invalid(format!(
            "unknown scenario `{other}` (expected one of {})",
            BUILTIN_SCENARIOS.join(", ")
        ))),
    }
}

/// Hierarchical scenario: Case 00 with weight `π₀`; `β = 0` and `γ` normal with
/// mean `1 + n^(−1/2)` and sd `n^(−1/2)` with weight `π₁`; both coordinates
/// random (alternative) with weight `π₂`. Row choice is multinomial and the
/// means are redrawn every replication.
pub fn example54(pi: [f64; 3]) -> Result<ScenarioMixture> {
    let gamma_draw = || CoordDraw::Normal {
        mean: CoordSequence::constant(1.0).plus_power(1.0, 0.5),
        sd: CoordSequence::power(1.0, 0.5),
    };
    let rows = vec![
        MixtureRow::fixed(
            ParamSequence::new(CoordSequence::constant(0.0), CoordSequence::constant(0.0)),
            pi[0],
            Truth::Null00,
        ),
        MixtureRow {
            gamma: gamma_draw(),
            beta: CoordDraw::fixed(CoordSequence::constant(0.0)),
            proportion: pi[1],
            truth: Truth::Null10,
        },
        MixtureRow {
            gamma: gamma_draw(),
            beta: CoordDraw::Normal { mean: CoordSequence::power(1.0, 0.5), sd: CoordSequence::power(1.0, 0.5) },
            proportion: pi[2],
            truth: Truth::Alternative,
        },
    ];
    let mut s = ScenarioMixture::new("example54", rows)?;
    s.assignment = Assignment::Multinomial;
    Ok(s)
}

/// The multiple-testing study's methods: no filter, the min-p and χ² screens,
/// and four product screens, all with Bonferroni over the unfiltered count.
pub fn standard_methods() -> Vec<Method> {
    [
        FiltrationRule::NoFilter,
        FiltrationRule::MinPValue { threshold: 0.0004 },
        FiltrationRule::ChiSquarePValue { threshold: 0.001 },
        FiltrationRule::ProductThreshold { c: 1.2, delta: 0.8 },
        FiltrationRule::ProductThreshold { c: 2.0, delta: 0.9 },
        FiltrationRule::ProductThreshold { c: 3.0, delta: 1.0 },
        FiltrationRule::ProductThreshold { c: 2.5, delta: 1.0 },
    ]
    .into_iter()
    .map(Method::bonferroni)
    .collect()
}

/// Per-method counts for one replication.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationTally {
    /// false rejections
    pub v: usize,
    /// true rejections
    pub s: usize,
    pub n_alt: usize,
    /// unfiltered hypotheses
    pub f: usize,
}

/// One drawn hypothesis with its truth label and row index.
#[derive(Clone, Copy, Debug)]
pub struct DrawnHypothesis {
    pub row: usize,
    pub truth: Truth,
    pub estimate: EstimatePair,
}

/// Draw the `m` hypotheses of replication `rep_index`.
pub fn draw_replication(scenario: &ScenarioMixture, rep_index: u64, master_seed: u64) -> Result<Vec<DrawnHypothesis>> {
    let m = scenario.m;
    let n = scenario.n as f64;
    let se = scenario.sigma / n.sqrt();
    let fixed_rows: Vec<usize> = match scenario.assignment {
        Assignment::Deterministic => scenario
            .row_counts()
            .into_iter()
            .enumerate()
            .flat_map(|(row, count)| std::iter::repeat_n(row, count))
            .collect(),
        Assignment::Multinomial => Vec::new(),
    };
    let cumulative: Vec<f64> = scenario
        .rows
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.proportion;
            Some(*acc)
        })
        .collect();

    (0..m)
        .map(|i| {
            let mut s = RandomStream::new(master_seed, rep_index * m as u64 + i as u64);
            let row = match scenario.assignment {
                Assignment::Deterministic => fixed_rows[i],
                Assignment::Multinomial => {
                    let u = s.uniform();
                    cumulative.iter().position(|&c| u < c).unwrap_or(scenario.rows.len() - 1)
                }
            };
            let spec = &scenario.rows[row];
            let gamma = spec.gamma.draw(n, &mut s)?;
            let beta = spec.beta.draw(n, &mut s)?;
            let gh = s.sample_normal(gamma, se)?;
            let bh = s.sample_normal(beta, se)?;
            Ok(DrawnHypothesis {
                row,
                truth: spec.truth,
                estimate: EstimatePair::new(gh, bh, scenario.sigma, scenario.sigma, scenario.n)?,
            })
        })
        .collect()
}

/// Apply every method to one set of drawn hypotheses.
pub fn tally_methods(draws: &[DrawnHypothesis], methods: &[Method], alpha: f64) -> Result<Vec<ReplicationTally>> {
    let pvalues: Vec<f64> = draws.iter().map(|d| joint_pvalue(&d.estimate)).collect();
    let n_alt = draws.iter().filter(|d| !d.truth.is_null()).count();
    methods
        .iter()
        .map(|method| {
            let filtered = draws
                .iter()
                .map(|d| evaluate_filter(&method.rule, &d.estimate))
                .collect::<Result<Vec<bool>>>()?;
            let f = filtered.iter().filter(|x| !**x).count();
            let threshold = method.adjustment.threshold(alpha, f);
            let mut tally = ReplicationTally { n_alt, f, ..Default::default() };
            for ((d, &filt), &p) in draws.iter().zip(&filtered).zip(&pvalues) {
                if !filt && p <= threshold {
                    if d.truth.is_null() {
                        tally.v += 1;
                    } else {
                        tally.s += 1;
                    }
                }
            }
            Ok(tally)
        })
        .collect()
}

/// Draw replication `rep_index` and apply every method to the same draws.
pub fn run_replication(
    scenario: &ScenarioMixture,
    methods: &[Method],
    rep_index: u64,
    master_seed: u64,
) -> Result<Vec<ReplicationTally>> {
    if methods.is_empty() {
        return Err(invalid("no methods supplied"));
    }
    let draws = draw_replication(scenario, rep_index, master_seed)?;
    tally_methods(&draws, methods, scenario.alpha)
}

/// All replications, indexed `[rep][method]`.
pub fn run_replications(
    scenario: &ScenarioMixture,
    methods: &[Method],
    master_seed: u64,
    threads: usize,
) -> Result<Vec<Vec<ReplicationTally>>> {
    scenario.validate()?;
    if methods.is_empty() {
        return Err(invalid("no methods supplied"));
    }
    for m in methods {
        m.rule.validate()?;
        m.adjustment.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| {
        (0..scenario.reps)
            .into_par_iter()
            .map(|r| run_replication(scenario, methods, r, master_seed))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub empirical_fwer: f64,
    pub fwer_se: f64,
    pub power: f64,
    pub power_se: f64,
    pub mean_f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub m: usize,
    pub reps: u64,
    pub n: u64,
    pub sigma: f64,
    pub alpha: f64,
    pub scenario: String,
    pub renormalized: bool,
    pub raw_proportion_sum: f64,
    pub methods: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub metadata: ReportMetadata,
    pub methods: Vec<MethodSummary>,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Per-replication power `S / n_alt`; `None` when the replication drew no alternatives.
fn rep_power(t: &ReplicationTally) -> Option<f64> {
    (t.n_alt > 0).then(|| t.s as f64 / t.n_alt as f64)
}

/// Reduce replication tallies into a report.
pub fn summarize(
    scenario: &ScenarioMixture,
    methods: &[Method],
    tallies: &[Vec<ReplicationTally>],
    master_seed: u64,
) -> SimulationReport {
    let reps = tallies.len() as f64;
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(k, method)| {
            let hits = tallies.iter().filter(|t| t[k].v >= 1).count() as f64;
            let fwer = hits / reps;
            let powers: Vec<f64> = tallies.iter().filter_map(|t| rep_power(&t[k])).collect();
            let (power, power_se) = mean_and_se(&powers);
            MethodSummary {
                method: method.id(),
                empirical_fwer: fwer,
                fwer_se: (fwer * (1.0 - fwer) / reps).sqrt(),
                power,
                power_se,
                mean_f: tallies.iter().map(|t| t[k].f as f64).sum::<f64>() / reps,
            }
        })
        .collect();
    SimulationReport {
        metadata: ReportMetadata {
            seed: master_seed,
            m: scenario.m,
            reps: scenario.reps,
            n: scenario.n,
            sigma: scenario.sigma,
            alpha: scenario.alpha,
            scenario: scenario.name.clone(),
            renormalized: scenario.renormalized(),
            raw_proportion_sum: scenario.raw_proportion_sum,
            methods: methods.iter().map(Method::id).collect(),
        },
        methods: summaries,
    }
}

/// Run all replications and summarize. Output is identical for any `threads`.
pub fn run_experiment(
    scenario: &ScenarioMixture,
    methods: &[Method],
    master_seed: u64,
    threads: usize,
) -> Result<SimulationReport> {
    let tallies = run_replications(scenario, methods, master_seed, threads)?;
    Ok(summarize(scenario, methods, &tallies, master_seed))
}

/// Mean and standard error of the per-replication power difference between
/// methods `a` and `b`, over replications with at least one alternative.
///
/// Both methods see the same draws, so this paired standard error is the
/// Monte-Carlo error of the comparison itself.
pub fn paired_power_difference(tallies: &[Vec<ReplicationTally>], a: usize, b: usize) -> (f64, f64) {
    let diffs: Vec<f64> = tallies
        .iter()
        .filter_map(|t| Some(rep_power(&t[a])? - rep_power(&t[b])?))
        .collect();
    mean_and_se(&diffs)
}
