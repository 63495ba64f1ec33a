//! Local-asymptotic machinery for the product statistic `γ̂β̂`.
//!
//! Parameters move with the sample size along power-law sequences
//! `θₙ = (γₙ, βₙ)`. Limits such as the standardized distance `K` and the
//! filtration-probability region `L` are obtained by evaluating the defining
//! ratios on a grid of `n` and extrapolating (see [`extrapolate_limit`]).
//! Everything here uses unit per-observation scale, `σ_γ = σ_β = 1`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::RandomStream;
use crate::error::{invalid, Error, Result};
use crate::estimators::{sobel_stat, EstimatePair};

/// Relative change between the last two grid values below which a limit is
/// treated as reached.
pub const STABILIZATION_REL_TOL: f64 = 0.01;
/// Minimum |log-log slope| over the last grid step for a 0 or ∞ verdict.
pub const SLOPE_TOL: f64 = 0.02;
/// Largest sample size on the default extrapolation grid.
pub const GRID_CAP: u64 = 100_000_000;

/// A parameter point `θ = (γ, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub gamma: f64,
    pub beta: f64,
}

/// Which piece of the composite null a point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullCase {
    Null00,
    Null10,
    Null01,
    Alternative,
}

impl ParamPoint {
    pub fn new(gamma: f64, beta: f64) -> Self {
        Self { gamma, beta }
    }

    pub fn case(&self) -> NullCase {
        match (self.gamma == 0.0, self.beta == 0.0) {
            (true, true) => NullCase::Null00,
            (false, true) => NullCase::Null10,
            (true, false) => NullCase::Null01,
            (false, false) => NullCase::Alternative,
        }
    }
}

/// `coef · n^(−exponent)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coef: f64,
    pub exponent: f64,
}

/// One coordinate of a parameter sequence: `offset + Σ coef·n^(−exponent)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoordSequence {
    pub offset: f64,
    pub terms: Vec<PowerTerm>,
}

impl CoordSequence {
    pub fn constant(offset: f64) -> Self {
        Self { offset, terms: Vec::new() }
    }

    /// `coef · n^(−exponent)`.
    pub fn power(coef: f64, exponent: f64) -> Self {
        Self { offset: 0.0, terms: vec![PowerTerm { coef, exponent }] }
    }

    pub fn plus_power(mut self, coef: f64, exponent: f64) -> Self {
        self.terms.push(PowerTerm { coef, exponent });
        self
    }

    pub fn eval(&self, n: f64) -> f64 {
        self.offset + self.terms.iter().map(|t| t.coef * n.powf(-t.exponent)).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.offset.is_finite() {
            return Err(invalid("sequence offset must be finite"));
        }
        for t in &self.terms {
            if !(t.exponent >= 0.0) || !t.exponent.is_finite() || !t.coef.is_finite() {
                return Err(invalid(format!("bad power term {}n^-{}", t.coef, t.exponent)));
            }
        }
        Ok(())
    }
}

impl fmt::Display for CoordSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        if self.offset != 0.0 || self.terms.is_empty() {
            write!(f, "{}", self.offset)?;
            wrote = true;
        }
        for t in &self.terms {
            if wrote {
                write!(f, "{}", if t.coef < 0.0 { "-" } else { "+" })?;
                write!(f, "{}n^-{}", t.coef.abs(), t.exponent)?;
            } else {
                write!(f, "{}n^-{}", t.coef, t.exponent)?;
            }
            wrote = true;
        }
        Ok(())
    }
}

impl FromStr for CoordSequence {
    type Err = Error;

    /// Parses sums such as `0`, `3n^-1/2`, `1 + 3n^-0.5`, `-2*n^-0.4` or `n^-1`.
    fn from_str(s: &str) -> Result<Self> {
        let src: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if src.is_empty() {
            return Err(invalid("empty sequence expression"));
        }
        // split into signed terms, keeping a '-' that follows '^' inside its term
        let mut pieces: Vec<String> = Vec::new();
        let mut cur = String::new();
        let mut prev = None;
        for ch in src.chars() {
            if (ch == '+' || ch == '-') && !cur.is_empty() && prev != Some('^') && prev != Some('e') {
                pieces.push(std::mem::take(&mut cur));
            }
            cur.push(ch);
            prev = Some(ch);
        }
        pieces.push(cur);

        let mut seq = CoordSequence::default();
        for piece in pieces {
            let (sign, body) = match piece.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, piece.strip_prefix('+').unwrap_or(&piece)),
            };
            match body.find('n') {
                None => seq.offset += sign * parse_number(body, s)?,
                Some(pos) => {
                    let coef_str = body[..pos].trim_end_matches('*');
                    let coef = if coef_str.is_empty() { 1.0 } else { parse_number(coef_str, s)? };
                    let rest = &body[pos + 1..];
                    let exponent = if rest.is_empty() {
                        -1.0
                    } else {
                        let e = rest
                            .strip_prefix('^')
                            .ok_or_else(|| invalid(format!("expected `^` after `n` in `{s}`")))?;
                        let e = e.trim_start_matches('(').trim_end_matches(')');
                        -parse_number(e, s)?
                    };
                    if exponent < 0.0 {
                        return Err(invalid(format!("only non-positive powers of n are supported in `{s}`")));
                    }
                    seq.terms.push(PowerTerm { coef: sign * coef, exponent });
                }
            }
        }
        seq.validate()?;
        Ok(seq)
    }
}

/// Number or simple fraction `a/b`, optionally signed.
fn parse_number(t: &str, whole: &str) -> Result<f64> {
    let bad = || invalid(format!("cannot parse `{t}` in sequence `{whole}`"));
    let v = match t.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.parse().map_err(|_| bad())?;
            let b: f64 = b.parse().map_err(|_| bad())?;
            a / b
        }
        None => t.parse::<f64>().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// A parameter sequence `θₙ = (γₙ, βₙ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSequence {
    pub gamma: CoordSequence,
    pub beta: CoordSequence,
}

impl ParamSequence {
    pub fn new(gamma: CoordSequence, beta: CoordSequence) -> Self {
        Self { gamma, beta }
    }

    /// Both coordinates equal to `coef · n^(−exponent)`.
    pub fn symmetric_power(coef: f64, exponent: f64) -> Self {
        Self::new(CoordSequence::power(coef, exponent), CoordSequence::power(coef, exponent))
    }
}

pub fn eval_sequence(seq: &ParamSequence, n: u64) -> ParamPoint {
    let n = n as f64;
    ParamPoint { gamma: seq.gamma.eval(n), beta: seq.beta.eval(n) }
}

/// A limit obtained by numeric extrapolation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
    Undetermined,
}

impl ExtendedReal {
    pub fn is_zero(&self) -> bool {
        matches!(self, ExtendedReal::Finite(v) if *v == 0.0)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => write!(f, "inf"),
            ExtendedReal::Undetermined => write!(f, "undetermined"),
        }
    }
}

impl FromStr for ExtendedReal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(ExtendedReal::Infinite),
            "undetermined" => Ok(ExtendedReal::Undetermined),
            t => t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(ExtendedReal::Finite)
                .ok_or_else(|| invalid(format!("expected a non-negative number, `inf` or `undetermined`, got `{s}`"))),
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedReal::Finite(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

/// Default extrapolation grid: decades from 10² up to [`GRID_CAP`].
pub fn default_grid() -> Vec<u64> {
    let mut grid = Vec::new();
    let mut n = 100u64;
    while n <= GRID_CAP {
        grid.push(n);
        n *= 10;
    }
    grid
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.len() < 3 {
        return Err(invalid("extrapolation grid needs at least 3 points"));
    }
    if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("extrapolation grid must be positive and strictly increasing"));
    }
    Ok(())
}

/// Extrapolate the limit of a non-negative quantity from its values on an
/// increasing grid.
///
/// The last two points decide: a relative change under
/// [`STABILIZATION_REL_TOL`] returns the last value; otherwise the log-log
/// slope (which must agree in sign with the previous step) classifies the
/// limit as 0 or ∞. Anything else is [`ExtendedReal::Undetermined`].
pub fn extrapolate_limit(points: &[(u64, f64)]) -> ExtendedReal {
    let k = points.len();
    if k < 3 {
        return ExtendedReal::Undetermined;
    }
    let (n1, v1) = points[k - 2];
    let (n2, v2) = points[k - 1];
    let (_, v0) = points[k - 3];
    if v1 == 0.0 && v2 == 0.0 {
        return ExtendedReal::Finite(0.0);
    }
    if v2.is_infinite() {
        return ExtendedReal::Infinite;
    }
    if ((v2 - v1) / v2.abs().max(v1.abs())).abs() < STABILIZATION_REL_TOL {
        return ExtendedReal::Finite(v2);
    }
    if v0 <= 0.0 || v1 <= 0.0 || v2 <= 0.0 {
        return ExtendedReal::Undetermined;
    }
    let slope = (v2 / v1).ln() / (n2 as f64 / n1 as f64).ln();
    let prev = (v1 - v0).signum();
    if slope <= -SLOPE_TOL && prev < 0.0 {
        ExtendedReal::Finite(0.0)
    } else if slope >= SLOPE_TOL && prev > 0.0 {
        ExtendedReal::Infinite
    } else {
        ExtendedReal::Undetermined
    }
}

/// Finite-n standardized distance `|γₙβₙ| / √(n⁻¹(n⁻¹ + γₙ² + βₙ²))`.
pub fn k_ratio_at(seq: &ParamSequence, n: u64) -> f64 {
    let p = eval_sequence(seq, n);
    let inv_n = 1.0 / n as f64;
    (p.gamma * p.beta).abs() / (inv_n * (inv_n + p.gamma * p.gamma + p.beta * p.beta)).sqrt()
}

/// Limit `K` of the standardized distance along `seq`.
pub fn compute_k(seq: &ParamSequence, n_grid: &[u64]) -> Result<ExtendedReal> {
    check_grid(n_grid)?;
    let pts: Vec<(u64, f64)> = n_grid.iter().map(|&n| (n, k_ratio_at(seq, n))).collect();
    Ok(extrapolate_limit(&pts))
}

/// Finite-n value of the AM-GM upper bound `s / (2√(1 + s))`, `s = n(γₙ² + βₙ²)`.
pub fn k_upper_bound_at(seq: &ParamSequence, n: u64) -> f64 {
    let p = eval_sequence(seq, n);
    let s = n as f64 * (p.gamma * p.gamma + p.beta * p.beta);
    s / (2.0 * (1.0 + s).sqrt())
}

/// Limit of the upper bound on `K`.
pub fn k_upper_bound(seq: &ParamSequence, n_grid: &[u64]) -> Result<ExtendedReal> {
    check_grid(n_grid)?;
    let pts: Vec<(u64, f64)> = n_grid.iter().map(|&n| (n, k_upper_bound_at(seq, n))).collect();
    Ok(extrapolate_limit(&pts))
}

/// Region of the limiting filtration probability `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LRegion {
    /// L = 1
    One,
    /// 0 < L < 1
    Interior,
    /// L = 0
    Zero,
    Undetermined,
}

/// Limit MSE-ratio class of the shrinkage estimator relative to `γ̂β̂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EfficiencyClass {
    MuchMore,
    More,
    Equivalent,
    Less,
    MuchLess,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ADiagnostics {
    /// `lim n^δ γₙβₙ`
    pub mean_term: ExtendedReal,
    /// `lim n^(δ−1/2) √(n⁻¹ + γₙ² + βₙ²)`
    pub sd_term: ExtendedReal,
    pub a: ExtendedReal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeClassification {
    #[serde(rename = "L_region")]
    pub l_region: LRegion,
    #[serde(rename = "K")]
    pub k_value: ExtendedReal,
    pub efficiency_class: EfficiencyClass,
    #[serde(rename = "A_diagnostics", skip_serializing_if = "Option::is_none")]
    pub a_diagnostics: Option<ADiagnostics>,
}

fn max_limit(a: ExtendedReal, b: ExtendedReal) -> ExtendedReal {
    use ExtendedReal::*;
    match (a, b) {
        (Infinite, _) | (_, Infinite) => Infinite,
        (Undetermined, _) | (_, Undetermined) => Undetermined,
        (Finite(x), Finite(y)) => Finite(x.max(y)),
    }
}

/// The `A` quantity of the product filter `|γ̂β̂| < c n^(−δ)` along `seq`.
pub fn a_diagnostics(seq: &ParamSequence, delta: f64, n_grid: &[u64]) -> Result<ADiagnostics> {
    check_grid(n_grid)?;
    let mean_pts: Vec<(u64, f64)> = n_grid
        .iter()
        .map(|&n| {
            let p = eval_sequence(seq, n);
            (n, (n as f64).powf(delta) * (p.gamma * p.beta).abs())
        })
        .collect();
    let sd_pts: Vec<(u64, f64)> = n_grid
        .iter()
        .map(|&n| {
            let p = eval_sequence(seq, n);
            let nf = n as f64;
            (n, nf.powf(delta - 0.5) * (1.0 / nf + p.gamma * p.gamma + p.beta * p.beta).sqrt())
        })
        .collect();
    let mean_term = extrapolate_limit(&mean_pts);
    let sd_term = extrapolate_limit(&sd_pts);
    Ok(ADiagnostics { mean_term, sd_term, a: max_limit(mean_term, sd_term) })
}

fn l_region(delta: f64, a: ExtendedReal) -> Result<LRegion> {
    use ExtendedReal::*;
    Ok(match a {
        Undetermined => LRegion::Undetermined,
        Infinite => LRegion::Zero,
        Finite(v) if v == 0.0 => {
            if delta < 1.0 {
                LRegion::One
            } else {
                return Err(Error::InconsistentRegime(format!(
                    "A = 0 cannot occur with delta = {delta} >= 1: the filter's threshold shrinks faster than the statistic's sd"
                )));
            }
        }
        Finite(_) => {
            if delta <= 1.0 {
                LRegion::Interior
            } else {
                return Err(Error::InconsistentRegime(format!(
                    "finite positive A cannot occur with delta = {delta} > 1"
                )));
            }
        }
    })
}

fn efficiency(l: LRegion, k: ExtendedReal) -> EfficiencyClass {
    use EfficiencyClass::*;
    use ExtendedReal::*;
    match l {
        LRegion::One => match k {
            Finite(v) if v == 0.0 => MuchMore,
            Finite(v) if (v - 1.0).abs() <= STABILIZATION_REL_TOL => Equivalent,
            Finite(v) if v < 1.0 => More,
            Finite(_) => Less,
            Infinite => MuchLess,
            Undetermined => Indeterminate,
        },
        LRegion::Interior => match k {
            Finite(v) if v == 0.0 => More,
            Infinite => MuchLess,
            _ => Indeterminate,
        },
        LRegion::Zero => Equivalent,
        LRegion::Undetermined => Indeterminate,
    }
}

/// Classify from already-known limits `A` and `K`.
pub fn classify_from_limits(delta: f64, a: ExtendedReal, k: ExtendedReal) -> Result<RegimeClassification> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    let l = l_region(delta, a)?;
    Ok(RegimeClassification { l_region: l, k_value: k, efficiency_class: efficiency(l, k), a_diagnostics: None })
}

/// Regime of the product-filter shrinkage estimator along `seq`.
///
/// `c` does not enter the limits; it is accepted so callers pass the full rule.
pub fn classify_product_regime(seq: &ParamSequence, c: f64, delta: f64, n_grid: &[u64]) -> Result<RegimeClassification> {
    if !(c > 0.0) {
        return Err(invalid(format!("c must be positive, got {c}")));
    }
    seq.gamma.validate()?;
    seq.beta.validate()?;
    let diag = a_diagnostics(seq, delta, n_grid)?;
    let k = compute_k(seq, n_grid)?;
    let mut out = classify_from_limits(delta, diag.a, k)?;
    out.a_diagnostics = Some(diag);
    Ok(out)
}

/// Closed-form MSE of `γ̂β̂` at unit scale: `n⁻¹(n⁻¹ + γ² + β²)`.
pub fn mse_product_closed(gamma: f64, beta: f64, n: u64) -> f64 {
    let inv_n = 1.0 / n as f64;
    inv_n * (inv_n + gamma * gamma + beta * beta)
}

/// Empirical MSE of `γ̂β̂` at unit scale with its Monte-Carlo standard error.
pub fn empirical_product_mse(gamma: f64, beta: f64, n: u64, reps: u64, stream: &RandomStream) -> Result<(f64, f64)> {
    if reps < 2 {
        return Err(invalid("need at least 2 replications"));
    }
    let sd = 1.0 / (n as f64).sqrt();
    let acc = blocked(reps, stream, 0, |s, count| {
        let mut m = Moments::default();
        for _ in 0..count {
            let dg = sd * s.standard_normal();
            let db = sd * s.standard_normal();
            let err = gamma * db + beta * dg + dg * db;
            m.push(err * err, 0.0);
        }
        m
    });
    Ok((acc.mean_a(), (acc.var_a() / reps as f64).sqrt()))
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    count: f64,
    sa: f64,
    sb: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
    hits: f64,
}

impl Moments {
    fn push(&mut self, a: f64, b: f64) {
        self.count += 1.0;
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    fn merge(mut self, o: Moments) -> Moments {
        self.count += o.count;
        self.sa += o.sa;
        self.sb += o.sb;
        self.saa += o.saa;
        self.sbb += o.sbb;
        self.sab += o.sab;
        self.hits += o.hits;
        self
    }

    fn mean_a(&self) -> f64 {
        self.sa / self.count
    }

    fn mean_b(&self) -> f64 {
        self.sb / self.count
    }

    fn var_a(&self) -> f64 {
        (self.saa - self.sa * self.sa / self.count) / (self.count - 1.0)
    }

    fn var_b(&self) -> f64 {
        (self.sbb - self.sb * self.sb / self.count) / (self.count - 1.0)
    }

    fn cov_ab(&self) -> f64 {
        (self.sab - self.sa * self.sb / self.count) / (self.count - 1.0)
    }
}

const BLOCK: u64 = 4096;

/// Split `reps` into fixed-size blocks, each with its own substream, and reduce
/// them in block order so the result does not depend on the thread count.
fn blocked<F>(reps: u64, stream: &RandomStream, cell: u64, work: F) -> Moments
where
    F: Fn(&mut RandomStream, u64) -> Moments + Sync,
{
    let blocks = reps.div_ceil(BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut s = stream.substream((cell << 32) | b);
            let count = BLOCK.min(reps - b * BLOCK);
            work(&mut s, count)
        })
        .collect();
    parts.into_iter().fold(Moments::default(), Moments::merge)
}

/// One row of the MSE-ratio experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRatioRow {
    pub n: u64,
    /// MSE(shrinkage) / MSE(γ̂β̂)
    pub ratio: f64,
    /// delta-method standard error of `ratio`
    pub mc_se: f64,
    pub k_at_n: f64,
    /// empirical frequency of the filtering event
    pub filter_freq: f64,
}

/// Compare `γ̂β̂·1{|γ̂β̂| ≥ c n^(−δ)}` with `γ̂β̂` along `seq`.
pub fn mse_ratio_experiment(
    seq: &ParamSequence,
    c: f64,
    delta: f64,
    n_grid: &[u64],
    reps: u64,
    stream: &RandomStream,
) -> Result<Vec<MseRatioRow>> {
    if reps < 100 {
        return Err(invalid(format!("MSE-ratio experiment needs at least 100 replications, got {reps}")));
    }
    if n_grid.is_empty() {
        return Err(invalid("n grid is empty"));
    }
    if !(c > 0.0 && delta > 0.0) {
        return Err(invalid(format!("need c > 0 and delta > 0, got c={c}, delta={delta}")));
    }
    seq.gamma.validate()?;
    seq.beta.validate()?;

    n_grid
        .iter()
        .enumerate()
        .map(|(cell, &n)| {
            if n == 0 {
                return Err(invalid("sample sizes must be positive"));
            }
            let p = eval_sequence(seq, n);
            let psi = p.gamma * p.beta;
            let sd = 1.0 / (n as f64).sqrt();
            let threshold = c * (n as f64).powf(-delta);
            let acc = blocked(reps, stream, cell as u64, |s, count| {
                let mut m = Moments::default();
                for _ in 0..count {
                    let dg = sd * s.standard_normal();
                    let db = sd * s.standard_normal();
                    let err = p.gamma * db + p.beta * dg + dg * db;
                    let t = psi + err;
                    let filtered = t.abs() < threshold;
                    let shrunk_err = if filtered { -psi } else { err };
                    m.push(shrunk_err * shrunk_err, err * err);
                    m.hits += filtered as u8 as f64;
                }
                m
            });
            let (ma, mb) = (acc.mean_a(), acc.mean_b());
            let ratio = ma / mb;
            let var = (acc.var_a() - 2.0 * ratio * acc.cov_ab() + ratio * ratio * acc.var_b()).max(0.0);
            Ok(MseRatioRow {
                n,
                ratio,
                mc_se: (var / acc.count).sqrt() / mb,
                k_at_n: k_ratio_at(seq, n),
                filter_freq: acc.hits / acc.count,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Product,
    Norm2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    /// Negated least-squares slope of log RMS error against log n.
    pub exponent: f64,
    /// `(n, RMS of statistic − target)` per grid point.
    pub points: Vec<(u64, f64)>,
}

/// Estimate the convergence-rate exponent of a statistic at a fixed point.
pub fn rate_probe(kind: StatKind, theta: ParamPoint, n_grid: &[u64], reps: u64, stream: &RandomStream) -> Result<RateEstimate> {
    if n_grid.len() < 3 {
        return Err(invalid("rate fit needs at least 3 grid points"));
    }
    if n_grid.iter().any(|&n| n == 0) {
        return Err(invalid("sample sizes must be positive"));
    }
    if reps < 2 {
        return Err(invalid("need at least 2 replications"));
    }
    let (g, b) = (theta.gamma, theta.beta);
    let points: Vec<(u64, f64)> = n_grid
        .iter()
        .enumerate()
        .map(|(cell, &n)| {
            let sd = 1.0 / (n as f64).sqrt();
            let acc = blocked(reps, stream, cell as u64, |s, count| {
                let mut m = Moments::default();
                for _ in 0..count {
                    let dg = sd * s.standard_normal();
                    let db = sd * s.standard_normal();
                    let err = match kind {
                        StatKind::Product => g * db + b * dg + dg * db,
                        StatKind::Norm2 => 2.0 * g * dg + dg * dg + 2.0 * b * db + db * db,
                    };
                    m.push(err * err, 0.0);
                }
                m
            });
            (n, acc.mean_a().sqrt())
        })
        .collect();

    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| r.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 || !sxy.is_finite() {
        return Err(invalid("degenerate rate fit"));
    }
    Ok(RateEstimate { exponent: -sxy / sxx, points })
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F₁ − F₂|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS distance at significance `level`.
pub fn ks_critical_value(n1: usize, n2: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt()
}

fn sobel_sample(h: ParamPoint, n: u64, reps: u64, mut s: RandomStream) -> Result<Vec<f64>> {
    let root_n = (n as f64).sqrt();
    let (g, b) = (h.gamma / root_n, h.beta / root_n);
    let mut out = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let gh = g + s.standard_normal() / root_n;
        let bh = b + s.standard_normal() / root_n;
        let e = EstimatePair::unit(gh, bh, n)?;
        // (0, 0) has probability zero under a continuous law
        if let Ok(v) = sobel_stat(&e) {
            out.push(v);
        }
    }
    Ok(out)
}

/// KS distance between the laws of the Sobel statistic under the local
/// alternatives `θ = h_a/√n` and `θ = h_b/√n`.
///
/// The two samples are independent; which substream feeds which sample is
/// decided by the ordering of the local parameters, so the distance is exactly
/// symmetric in its arguments.
pub fn irregularity_probe(h_a: ParamPoint, h_b: ParamPoint, n: u64, reps: u64, stream: &RandomStream) -> Result<f64> {
    if n == 0 || reps < 2 {
        return Err(invalid("need n >= 1 and at least 2 replications"));
    }
    let key = |h: &ParamPoint| (h.gamma.to_bits(), h.beta.to_bits());
    let (first, second) = if key(&h_a) <= key(&h_b) { (h_a, h_b) } else { (h_b, h_a) };
    let (x, y) = rayon::join(
        || sobel_sample(first, n, reps, stream.substream(0)),
        || sobel_sample(second, n, reps, stream.substream(1)),
    );
    Ok(ks_two_sample(&x?, &y?))
}

/// Product-filter constants `(c, δ)` by preset name.
///
/// `fig5a`, `fig5b`, `fig5c` are the MSE-ratio case-study filters; `sec6-a/b/c`
/// the three product filters of the multiple-testing study.
pub fn filter_preset(name: &str) -> Option<(f64, f64)> {
    Some(match name {
        "fig5a" => (4.0, 0.7),
        "fig5b" => (2.5, 1.0),
        "fig5c" => (2.5, 1.5),
        "sec6-a" => (1.2, 0.8),
        "sec6-b" => (2.0, 0.9),
        "sec6-c" => (3.0, 1.0),
        _ => return None,
    })
}

/// Named MSE-ratio configuration: a sequence with its product filter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MsePreset {
    pub name: &'static str,
    pub sequence: ParamSequence,
    pub c: f64,
    pub delta: f64,
}

pub const MSE_PRESET_NAMES: [&str; 10] = [
    "fig5a-1", "fig5a-2", "fig5a-3", "fig5a-4", "fig5a-5", "fig5b-1", "fig5b-2", "fig5b-3", "fig5c", "l1-k0",
];

pub fn mse_preset(name: &str) -> Option<MsePreset> {
    let half = 0.5;
    let (seq, (c, delta)) = match name {
        "fig5a-1" => (ParamSequence::new(CoordSequence::power(1.0, half), CoordSequence::power(1.0, 0.6)), (4.0, 0.7)),
        "fig5a-2" => (ParamSequence::symmetric_power(2.0, half), (4.0, 0.7)),
        "fig5a-3" => (ParamSequence::symmetric_power(1.0, half), (4.0, 0.7)),
        "fig5a-4" => (
            ParamSequence::new(CoordSequence::power(2.0, half), CoordSequence::power((5.0f64 / 3.0).sqrt(), half)),
            (4.0, 0.7),
        ),
        "fig5a-5" => (ParamSequence::new(CoordSequence::power(2.0, 0.4), CoordSequence::power(1.0, 0.4)), (4.0, 0.7)),
        "fig5b-1" => (ParamSequence::symmetric_power(0.7, half), (2.5, 1.0)),
        "fig5b-2" => (ParamSequence::symmetric_power(1.075, half), (2.5, 1.0)),
        "fig5b-3" => (ParamSequence::symmetric_power(2.0, half), (2.5, 1.0)),
        "fig5c" => (ParamSequence::symmetric_power(1.0, 1.0), (2.5, 1.5)),
        "l1-k0" => (ParamSequence::symmetric_power(1.0, 0.6), (1.2, 0.8)),
        _ => return None,
    };
    let name = MSE_PRESET_NAMES.iter().find(|p| **p == name)?;
    Some(MsePreset { name, sequence: seq, c, delta })
}
