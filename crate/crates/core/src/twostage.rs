//! Filtration rules, the two-stage procedure with pluggable multiplicity
//! adjustment, and FWER bounds.
//!
//! Stage one screens every hypothesis with a [`FiltrationRule`]; hypotheses
//! that pass the screen (are *not* filtered) form the second-stage family of
//! size `F`, tested with the joint-significance p-value against an adjusted
//! threshold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{chisq2_sf, RandomStream};
use crate::error::{invalid, Result};
use crate::estimators::{joint_pvalue, product_stat, EstimatePair};

/// First-stage screen. `true` from [`evaluate_filter`] means the hypothesis is
/// filtered out (retained in the null).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum FiltrationRule {
    NoFilter,
    /// Filter when `min(p_γ, p_β) ≥ threshold`.
    MinPValue { threshold: f64 },
    /// Filter when the χ²₂ p-value of `n(γ̂²/σ_γ² + β̂²/σ_β²)` is `≥ threshold`.
    ChiSquarePValue { threshold: f64 },
    /// Filter when `|γ̂β̂| < c·n^(−δ)`.
    ProductThreshold { c: f64, delta: f64 },
}

impl FiltrationRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FiltrationRule::NoFilter => Ok(()),
            FiltrationRule::MinPValue { threshold } | FiltrationRule::ChiSquarePValue { threshold } => {
                if threshold > 0.0 && threshold < 1.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("filter threshold must be in (0,1), got {threshold}")))
                }
            }
            FiltrationRule::ProductThreshold { c, delta } => {
                if c > 0.0 && delta > 0.0 && c.is_finite() && delta.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("product filter needs c > 0 and delta > 0, got c={c}, delta={delta}")))
                }
            }
        }
    }
}

impl fmt::Display for FiltrationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FiltrationRule::NoFilter => write!(f, "none"),
            FiltrationRule::MinPValue { threshold } => write!(f, "minp:{threshold}"),
            FiltrationRule::ChiSquarePValue { threshold } => write!(f, "chisq:{threshold}"),
            FiltrationRule::ProductThreshold { c, delta } => write!(f, "product:{c}:{delta}"),
        }
    }
}

impl FromStr for FiltrationRule {
    type Err = crate::Error;

    /// Parses `none`, `minp:<τ>`, `chisq:<τ>` or `product:<c>:<δ>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| -> Result<f64> {
            t.trim().parse::<f64>().map_err(|_| invalid(format!("bad number `{t}` in rule `{s}`")))
        };
        let rule = match parts.as_slice() {
            ["none"] => FiltrationRule::NoFilter,
            ["minp", t] => FiltrationRule::MinPValue { threshold: num(t)? },
            ["chisq", t] => FiltrationRule::ChiSquarePValue { threshold: num(t)? },
            ["product", c, d] => FiltrationRule::ProductThreshold { c: num(c)?, delta: num(d)? },
            _ => return Err(invalid(format!("unrecognised filtration rule `{s}`"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// Second-stage multiplicity correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "adjustment", rename_all = "snake_case")]
pub enum Adjustment {
    /// Threshold `α / F`, ignoring the filtration probability.
    BonferroniOverUnfiltered,
    /// Threshold `α·p0 / F` with `p0 = P_θ₀(not filtered)`.
    FiltrationAware { p0: f64 },
}

impl Adjustment {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Adjustment::BonferroniOverUnfiltered => Ok(()),
            Adjustment::FiltrationAware { p0 } if p0 > 0.0 && p0 <= 1.0 => Ok(()),
            Adjustment::FiltrationAware { p0 } => Err(invalid(format!("p0 must be in (0,1], got {p0}"))),
        }
    }

    /// Per-hypothesis threshold for a second stage of size `unfiltered`.
    pub fn threshold(&self, alpha: f64, unfiltered: usize) -> f64 {
        if unfiltered == 0 {
            return 0.0;
        }
        let base = alpha / unfiltered as f64;
        match *self {
            Adjustment::BonferroniOverUnfiltered => base,
            Adjustment::FiltrationAware { p0 } => base * p0,
        }
    }
}

/// A complete two-stage method: screen plus adjustment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub rule: FiltrationRule,
    pub adjustment: Adjustment,
}

impl Method {
    pub fn bonferroni(rule: FiltrationRule) -> Self {
        Self { rule, adjustment: Adjustment::BonferroniOverUnfiltered }
    }

    /// Stable identifier used in reports, e.g. `product:1.2:0.8` or
    /// `minp:0.0004+aware`.
    pub fn id(&self) -> String {
        match self.adjustment {
            Adjustment::BonferroniOverUnfiltered => self.rule.to_string(),
            Adjustment::FiltrationAware { .. } => format!("{}+aware", self.rule),
        }
    }
}

/// Outcome for one hypothesis of a two-stage run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisOutcome {
    pub filtered: bool,
    pub base_pvalue: f64,
    pub adjusted_threshold: f64,
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageOutcome {
    pub per_hypothesis: Vec<HypothesisOutcome>,
    /// Number of hypotheses that passed the screen.
    pub unfiltered: usize,
    pub rejected_count: usize,
    /// Second-stage threshold; 0 when nothing passed the screen.
    pub threshold: f64,
}

/// Apply the first-stage screen; `true` means filtered.
pub fn evaluate_filter(rule: &FiltrationRule, e: &EstimatePair) -> Result<bool> {
    Ok(match *rule {
        FiltrationRule::NoFilter => false,
        FiltrationRule::MinPValue { threshold } => e.gamma_pvalue().min(e.beta_pvalue()) >= threshold,
        FiltrationRule::ChiSquarePValue { threshold } => {
            let n = e.n as f64;
            let w = n * ((e.gamma_hat / e.sigma_gamma).powi(2) + (e.beta_hat / e.sigma_beta).powi(2));
            chisq2_sf(w)? >= threshold
        }
        FiltrationRule::ProductThreshold { c, delta } => product_stat(e).abs() < c * (e.n as f64).powf(-delta),
    })
}

/// Run the two-stage procedure on a family of hypotheses.
pub fn run_two_stage(
    estimates: &[EstimatePair],
    rule: &FiltrationRule,
    alpha: f64,
    adjustment: &Adjustment,
) -> Result<TwoStageOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    if estimates.is_empty() {
        return Err(invalid("no hypotheses supplied"));
    }
    rule.validate()?;
    adjustment.validate()?;

    let filtered = estimates
        .iter()
        .map(|e| evaluate_filter(rule, e))
        .collect::<Result<Vec<bool>>>()?;
    let unfiltered = filtered.iter().filter(|f| !**f).count();
    let threshold = adjustment.threshold(alpha, unfiltered);

    let mut rejected_count = 0;
    let per_hypothesis = estimates
        .iter()
        .zip(&filtered)
        .map(|(e, &filtered)| {
            let base_pvalue = joint_pvalue(e);
            let rejected = !filtered && base_pvalue <= threshold;
            rejected_count += rejected as usize;
            HypothesisOutcome { filtered, base_pvalue, adjusted_threshold: threshold, rejected }
        })
        .collect();

    Ok(TwoStageOutcome { per_hypothesis, unfiltered, rejected_count, threshold })
}

/// Monte-Carlo estimate of `P(not filtered)` at `γ = β = 0`, with its binomial
/// standard error.
pub fn filtration_prob_at_theta0(
    rule: &FiltrationRule,
    sigma_gamma: f64,
    sigma_beta: f64,
    n: u64,
    reps: u64,
    stream: &mut RandomStream,
) -> Result<(f64, f64)> {
    rule.validate()?;
    if reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    if matches!(rule, FiltrationRule::NoFilter) {
        return Ok((1.0, 0.0));
    }
    let root_n = (n as f64).sqrt();
    let mut kept = 0u64;
    for _ in 0..reps {
        let g = stream.sample_normal(0.0, sigma_gamma / root_n)?;
        let b = stream.sample_normal(0.0, sigma_beta / root_n)?;
        let e = EstimatePair::new(g, b, sigma_gamma, sigma_beta, n)?;
        if !evaluate_filter(rule, &e)? {
            kept += 1;
        }
    }
    let p = kept as f64 / reps as f64;
    Ok((p, (p * (1.0 - p) / reps as f64).sqrt()))
}

/// Expected value of `(1 − (1 − q)^F)·1{F > 0}` over the supplied samples of
/// `F`, where `q` bounds the conditional rejection probability of a true null
/// that passed the screen.
pub fn fwer_bound_from_unfiltered_counts(max_conditional_reject: f64, unfiltered_samples: &[u64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&max_conditional_reject) {
        return Err(invalid(format!("probability must be in [0,1], got {max_conditional_reject}")));
    }
    if unfiltered_samples.is_empty() {
        return Err(invalid("no unfiltered-count samples supplied"));
    }
    let keep = 1.0 - max_conditional_reject;
    let total: f64 = unfiltered_samples
        .iter()
        .map(|&f| if f == 0 { 0.0 } else { 1.0 - keep.powf(f as f64) })
        .sum();
    Ok(total / unfiltered_samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(g: f64, b: f64, n: u64) -> EstimatePair {
        EstimatePair::unit(g, b, n).unwrap()
    }

    #[test]
    fn filter_examples() {
        let product = FiltrationRule::ProductThreshold { c: 2.5, delta: 1.0 };
        assert!(evaluate_filter(&product, &unit(0.1, 0.1, 100)).unwrap());
        assert!(!evaluate_filter(&product, &unit(0.1, 0.3, 100)).unwrap());
        let minp = FiltrationRule::MinPValue { threshold: 0.0004 };
        assert!(evaluate_filter(&minp, &unit(0.0, 0.0, 100)).unwrap());
        let chisq = FiltrationRule::ChiSquarePValue { threshold: 0.001 };
        assert!(evaluate_filter(&chisq, &unit(0.0, 0.0, 100)).unwrap());
        assert!(!evaluate_filter(&chisq, &unit(0.4, 0.0, 100)).unwrap());
        assert!(!evaluate_filter(&FiltrationRule::NoFilter, &unit(0.0, 0.0, 100)).unwrap());
    }

    #[test]
    fn rule_parsing_round_trips() {
        for s in ["none", "minp:0.0004", "chisq:0.001", "product:1.2:0.8"] {
            let r: FiltrationRule = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
        assert!("product:0:1".parse::<FiltrationRule>().is_err());
        assert!("minp:1.5".parse::<FiltrationRule>().is_err());
        assert!("bogus".parse::<FiltrationRule>().is_err());
    }

    #[test]
    fn all_filtered_gives_empty_second_stage() {
        let es = vec![unit(0.0, 0.0, 100); 5];
        let out = run_two_stage(&es, &FiltrationRule::MinPValue { threshold: 0.5 }, 0.05, &Adjustment::BonferroniOverUnfiltered)
            .unwrap();
        assert_eq!(out.unfiltered, 0);
        assert_eq!(out.rejected_count, 0);
        assert_eq!(out.threshold, 0.0);
    }

    #[test]
    fn no_filter_is_plain_bonferroni() {
        let es = vec![unit(0.05, 0.05, 100); 200];
        let out = run_two_stage(&es, &FiltrationRule::NoFilter, 0.05, &Adjustment::BonferroniOverUnfiltered).unwrap();
        assert_eq!(out.unfiltered, 200);
        assert!((out.threshold - 2.5e-4).abs() < 1e-18);
    }

    #[test]
    fn single_hypothesis_rejection() {
        // joint p-value 0.01: both coordinates at z = Φ⁻¹(0.995)
        let z = crate::dist::std_normal_quantile(0.995).unwrap();
        let e = unit(z / 10.0, z / 10.0, 100);
        assert!((joint_pvalue(&e) - 0.01).abs() < 1e-12);
        let out = run_two_stage(&[e], &FiltrationRule::NoFilter, 0.05, &Adjustment::BonferroniOverUnfiltered).unwrap();
        assert_eq!(out.rejected_count, 1);
        let aware = Adjustment::FiltrationAware { p0: 0.1 };
        let out = run_two_stage(&[e], &FiltrationRule::NoFilter, 0.05, &aware).unwrap();
        assert!((out.threshold - 0.005).abs() < 1e-15);
        assert_eq!(out.rejected_count, 0);
    }

    #[test]
    fn alpha_is_validated() {
        let es = vec![unit(0.0, 0.0, 10)];
        for a in [0.0, 1.0, -0.1, 2.0] {
            assert!(run_two_stage(&es, &FiltrationRule::NoFilter, a, &Adjustment::BonferroniOverUnfiltered).is_err());
        }
        assert!(run_two_stage(&[], &FiltrationRule::NoFilter, 0.05, &Adjustment::BonferroniOverUnfiltered).is_err());
    }

    #[test]
    fn theta0_probability_limits() {
        let mut s = RandomStream::new(9, 0);
        assert_eq!(filtration_prob_at_theta0(&FiltrationRule::NoFilter, 1.0, 1.0, 100, 10, &mut s).unwrap(), (1.0, 0.0));
        let loose = FiltrationRule::MinPValue { threshold: 1.0 - 1e-9 };
        let (p, _) = filtration_prob_at_theta0(&loose, 1.0, 1.0, 100, 10_000, &mut s).unwrap();
        assert!(p > 0.999);
    }

    /// 2-D quadrature of P(|XY| ≥ t) for X, Y ~ N(0, s²): four times the positive
    /// quadrant, outer composite Simpson in x, inner Simpson in y over [t/x, 8s].
    fn product_exceedance_quadrature(t: f64, s: f64) -> f64 {
        let phi = |u: f64| (-0.5 * u * u / (s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, k: usize| {
            if hi <= lo {
                return 0.0;
            }
            let h = (hi - lo) / k as f64;
            let mut acc = f(lo) + f(hi);
            for i in 1..k {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
            }
            acc * h / 3.0
        };
        let upper = 9.0 * s;
        let inner = |x: f64| if x <= 0.0 { 0.0 } else { phi(x) * simpson(&phi, t / x, upper, 400) };
        // split the outer range where the inner limit moves fastest
        let x_min = t / upper;
        4.0 * (simpson(&inner, x_min, 0.01 * s, 2000) + simpson(&inner, 0.01 * s, upper, 4000))
    }

    #[test]
    fn theta0_probability_matches_quadrature() {
        let rule = FiltrationRule::ProductThreshold { c: 2.5, delta: 1.0 };
        let oracle = product_exceedance_quadrature(0.025, 0.1);
        let mut s = RandomStream::new(2024, 0);
        let (p0, se) = filtration_prob_at_theta0(&rule, 1.0, 1.0, 100, 200_000, &mut s).unwrap();
        assert!((p0 - oracle).abs() < 3.0 * se, "p0={p0} oracle={oracle} se={se}");
    }

    #[test]
    fn fwer_bound_examples() {
        assert_eq!(fwer_bound_from_unfiltered_counts(0.0, &[3, 4]).unwrap(), 0.0);
        assert_eq!(fwer_bound_from_unfiltered_counts(1.0, &[1, 7]).unwrap(), 1.0);
        assert!((fwer_bound_from_unfiltered_counts(0.1, &[1, 2]).unwrap() - 0.145).abs() < 1e-15);
        assert_eq!(fwer_bound_from_unfiltered_counts(1.0, &[0, 0]).unwrap(), 0.0);
        assert!(fwer_bound_from_unfiltered_counts(0.1, &[]).is_err());
        assert!(fwer_bound_from_unfiltered_counts(1.1, &[1]).is_err());
    }

    #[test]
    fn theorem_5_2_style_control_under_global_null() {
        // All hypotheses at θ₀; filtration-aware threshold keeps P(V ≥ 1) ≤ α.
        let rule = FiltrationRule::ProductThreshold { c: 2.0, delta: 0.9 };
        let (n, m, reps, alpha) = (200u64, 50usize, 2000u64, 0.05);
        let (p0, _) = filtration_prob_at_theta0(&rule, 1.0, 1.0, n, 100_000, &mut RandomStream::new(1, 0)).unwrap();
        let adj = Adjustment::FiltrationAware { p0 };
        let sd = 1.0 / (n as f64).sqrt();
        let mut any = 0u64;
        for r in 0..reps {
            let mut s = RandomStream::with_lane(77, 3, r);
            let es: Vec<EstimatePair> = (0..m)
                .map(|_| unit(s.sample_normal(0.0, sd).unwrap(), s.sample_normal(0.0, sd).unwrap(), n))
                .collect();
            let out = run_two_stage(&es, &rule, alpha, &adj).unwrap();
            any += (out.rejected_count > 0) as u64;
        }
        let fwer = any as f64 / reps as f64;
        let se = (alpha * (1.0 - alpha) / reps as f64).sqrt();
        assert!(fwer <= alpha + 3.0 * se, "fwer={fwer}");
    }

    proptest! {
        #[test]
        fn product_filter_monotone_in_c(g in -1.0..1.0f64, b in -1.0..1.0f64, c1 in 0.01..5.0f64, dc in 0.0..5.0f64) {
            let e = unit(g, b, 100);
            let small = evaluate_filter(&FiltrationRule::ProductThreshold { c: c1, delta: 1.0 }, &e).unwrap();
            let large = evaluate_filter(&FiltrationRule::ProductThreshold { c: c1 + dc, delta: 1.0 }, &e).unwrap();
            prop_assert!(!small || large);
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..1000, shift in 1usize..20) {
            let mut s = RandomStream::new(seed, 0);
            let es: Vec<EstimatePair> = (0..20)
                .map(|_| unit(s.sample_normal(0.0, 0.2).unwrap(), s.sample_normal(0.0, 0.2).unwrap(), 100))
                .collect();
            let mut rotated = es.clone();
            rotated.rotate_left(shift);
            let rule = FiltrationRule::ProductThreshold { c: 1.0, delta: 0.9 };
            let a = run_two_stage(&es, &rule, 0.05, &Adjustment::BonferroniOverUnfiltered).unwrap();
            let b = run_two_stage(&rotated, &rule, 0.05, &Adjustment::BonferroniOverUnfiltered).unwrap();
            let mut expected = a.per_hypothesis.clone();
            expected.rotate_left(shift);
            prop_assert_eq!(expected, b.per_hypothesis);
            prop_assert_eq!(a.unfiltered, b.unfiltered);
        }
    }
}
