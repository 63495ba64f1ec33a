use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use twostage::asymptotics::{CoordSequence, ParamSequence};
use twostage::dist::RandomStream;
use twostage::estimators::{joint_pvalue, EstimatePair};
use twostage::ingest::{fit_mediation, ols, ObservationTable};
use twostage::simharness::{builtin_scenario, draw_replication, run_replication, standard_methods, Truth};
use twostage::twostage::{fwer_bound_from_unfiltered_counts, run_two_stage, Adjustment, FiltrationRule};

/// Tallies from the harness match a direct two-stage run on the same draws.
#[test]
fn harness_tallies_match_direct_runs() {
    let mut s = builtin_scenario("config2").unwrap();
    s.m = 120;
    let methods = standard_methods();
    for rep in 0..5 {
        let draws = draw_replication(&s, rep, 31).unwrap();
        let tallies = run_replication(&s, &methods, rep, 31).unwrap();
        let estimates: Vec<EstimatePair> = draws.iter().map(|d| d.estimate).collect();
        for (method, tally) in methods.iter().zip(&tallies) {
            let out = run_two_stage(&estimates, &method.rule, s.alpha, &method.adjustment).unwrap();
            let (mut v, mut t) = (0, 0);
            for (d, h) in draws.iter().zip(&out.per_hypothesis) {
                if h.rejected {
                    if d.truth == Truth::Alternative {
                        t += 1;
                    } else {
                        v += 1;
                    }
                }
            }
            assert_eq!((tally.v, tally.s, tally.f), (v, t, out.unfiltered), "{}", method.id());
        }
    }
}

#[test]
fn no_filter_is_plain_bonferroni() {
    let s = builtin_scenario("config1").unwrap();
    let draws = draw_replication(&s, 0, 8).unwrap();
    let estimates: Vec<EstimatePair> = draws.iter().map(|d| d.estimate).collect();
    let out = run_two_stage(&estimates, &FiltrationRule::NoFilter, 0.05, &Adjustment::BonferroniOverUnfiltered).unwrap();
    let direct = estimates.iter().filter(|e| joint_pvalue(e) <= 0.05 / estimates.len() as f64).count();
    assert_eq!(out.rejected_count, direct);
    assert_eq!(out.unfiltered, estimates.len());
}

/// OLS against the normal equations solved by an independent route.
#[test]
fn ols_matches_normal_equations() {
    let mut s = RandomStream::new(12, 0);
    let (n, p) = (80, 4);
    let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { s.standard_normal() });
    let y = DVector::from_fn(n, |_, _| s.standard_normal());
    let fit = ols(&x, &y).unwrap();
    let xtx = x.transpose() * &x;
    let inv = xtx.clone().try_inverse().unwrap();
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let sigma2 = resid.norm_squared() / (n - p) as f64;
    for j in 0..p {
        assert!((fit.coefficients[j] - beta[j]).abs() < 1e-10);
        assert!((fit.std_errors[j] - (sigma2 * inv[(j, j)]).sqrt()).abs() < 1e-10);
    }
}

/// Fitted estimates land within a few standard errors of the truth.
#[test]
fn mediation_fit_recovers_truth() {
    let mut s = RandomStream::new(4, 0);
    let mut t = ObservationTable::default();
    for _ in 0..2_000 {
        let (x1, x2, a) = (s.standard_normal(), s.standard_normal(), s.standard_normal());
        let m = 0.1 + 0.2 * x1 - 0.3 * x2 + 0.4 * a + s.standard_normal();
        let y = 0.5 * x1 + 0.1 * x2 + 0.2 * a + 0.3 * m + s.standard_normal();
        t.push_row(&[x1, x2], a, m, y).unwrap();
    }
    let fit = fit_mediation(&t).unwrap();
    assert!((fit.gamma_hat - 0.4).abs() < 4.0 * fit.se_gamma);
    assert!((fit.beta_hat - 0.3).abs() < 4.0 * fit.se_beta);
    let pair = fit.estimate_pair().unwrap();
    assert!((pair.sigma_gamma / (t.len() as f64).sqrt() - fit.se_gamma).abs() < 1e-15);
}

#[test]
fn reader_and_builder_agree() {
    let text = "y,a,x2,m,x1\n1,0,5,2,4\n2,1,6,3,5\n";
    let t = ObservationTable::from_reader(text.as_bytes(), b',').unwrap();
    let mut u = ObservationTable::default();
    u.push_row(&[4.0, 5.0], 0.0, 2.0, 1.0).unwrap();
    u.push_row(&[5.0, 6.0], 1.0, 3.0, 2.0).unwrap();
    assert_eq!(t, u);
}

fn rule_strategy() -> impl Strategy<Value = FiltrationRule> {
    prop_oneof![
        Just(FiltrationRule::NoFilter),
        (1e-6..0.999f64).prop_map(|threshold| FiltrationRule::MinPValue { threshold }),
        (1e-6..0.999f64).prop_map(|threshold| FiltrationRule::ChiSquarePValue { threshold }),
        (0.01..10.0f64, 0.05..2.0f64).prop_map(|(c, delta)| FiltrationRule::ProductThreshold { c, delta }),
    ]
}

proptest! {
    #[test]
    fn rule_strings_round_trip(rule in rule_strategy()) {
        let back: FiltrationRule = rule.to_string().parse().unwrap();
        prop_assert_eq!(back, rule);
    }

    #[test]
    fn sequence_strings_round_trip(offset in -3.0..3.0f64, c1 in -5.0..5.0f64, e1 in 0.0..2.0f64, c2 in -5.0..5.0f64, e2 in 0.0..2.0f64) {
        let seq = CoordSequence::constant(offset).plus_power(c1, e1).plus_power(c2, e2);
        let back: CoordSequence = seq.to_string().parse().unwrap();
        for n in [1.0, 10.0, 1e4] {
            prop_assert!((back.eval(n) - seq.eval(n)).abs() <= 1e-12 * (1.0 + seq.eval(n).abs()));
        }
        let _ = ParamSequence::new(seq.clone(), back);
    }

    #[test]
    fn fwer_bound_is_monotone_probability(q1 in 0.0..1.0f64, q2 in 0.0..1.0f64, fs in prop::collection::vec(0u64..300, 1..40)) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let a = fwer_bound_from_unfiltered_counts(lo, &fs).unwrap();
        let b = fwer_bound_from_unfiltered_counts(hi, &fs).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && a <= b + 1e-15);
        // union bound
        let mean_f = fs.iter().sum::<u64>() as f64 / fs.len() as f64;
        prop_assert!(b <= hi * mean_f + 1e-12);
    }

    #[test]
    fn stricter_alpha_rejects_subset(seed in 0u64..1000, rule in rule_strategy()) {
        let s = builtin_scenario("config2").unwrap();
        let estimates: Vec<EstimatePair> = draw_replication(&s, 0, seed).unwrap().iter().map(|d| d.estimate).collect();
        let loose = run_two_stage(&estimates, &rule, 0.10, &Adjustment::BonferroniOverUnfiltered).unwrap();
        let tight = run_two_stage(&estimates, &rule, 0.01, &Adjustment::BonferroniOverUnfiltered).unwrap();
        prop_assert_eq!(loose.unfiltered, tight.unfiltered);
        for (l, t) in loose.per_hypothesis.iter().zip(&tight.per_hypothesis) {
            prop_assert!(!t.rejected || l.rejected);
        }
    }
}
