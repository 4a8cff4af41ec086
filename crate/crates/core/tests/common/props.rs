//! Randomized invariant checks shared by the property suite and the
//! acceptance run. Each `check_*` runs `cases` generated inputs.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};

use distreg::model::{local_sscp, Design, DesignRow};
use distreg::protocol::ParamSet;
use distreg::solver::{check_convergence, combine_sscp, ABSOLUTE_BRANCH_CUTOFF};
use distreg::summaries::{assign_bins, residual_summary, BinningPolicy, ScoredRow};
use distreg::wire::{fmt17, parse_num};
use distreg::{Family, ModelSpec, Sscp};

pub type Outcome = Result<(), String>;

fn run<T: std::fmt::Debug>(
    cases: u32,
    strategy: impl Strategy<Value = T>,
    body: impl Fn(T) -> Result<(), TestCaseError>,
) -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, body).map_err(|e| match e {
        TestError::Fail(why, input) => format!("{why} for input {input:?}"),
        TestError::Abort(why) => format!("aborted: {why}"),
    })
}

/// Rows of a `p`-column design with dyadic entries, so sums are exact.
fn dyadic_rows(p: usize, n: usize) -> impl Strategy<Value = Vec<(Vec<f64>, f64, f64)>> {
    let cell = (-64i32..=64).prop_map(|v| v as f64 / 8.0);
    let row = (
        prop::collection::vec(cell, p),
        (1i32..=16).prop_map(|w| w as f64 / 4.0),
        (-64i32..=64).prop_map(|v| v as f64 / 8.0),
    );
    prop::collection::vec(row, n)
}

fn design(rows: &[(Vec<f64>, f64, f64)]) -> (Design<f64>, Vec<f64>, Vec<f64>) {
    let p = rows.first().map_or(0, |r| r.0.len());
    let d = Design {
        labels: (0..p).map(|j| format!("x{j}")).collect(),
        rows: rows
            .iter()
            .map(|(z, _, _)| DesignRow {
                z: z.clone(),
                weight: 1.0,
                freq: 1.0,
            })
            .collect(),
        outcomes: rows.iter().map(|r| r.2).collect(),
    };
    let w = rows.iter().map(|r| r.1).collect();
    let y = rows.iter().map(|r| r.2).collect();
    (d, w, y)
}

fn sscp_of(rows: &[(Vec<f64>, f64, f64)]) -> Sscp {
    let (d, w, y) = design(rows);
    local_sscp(&d, Some(&y), &w).expect("sscp")
}

/// The sum of partner SSCPs equals the SSCP of the pooled rows.
pub fn check_sscp_additivity(cases: u32) -> Outcome {
    let strategy = (1usize..=5, 2usize..=40)
        .prop_flat_map(|(p, n)| (dyadic_rows(p, n), prop::collection::vec(1usize..n, 0..4)));
    run(cases, strategy, |(rows, mut cuts)| {
        cuts.sort_unstable();
        cuts.dedup();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(rows.len());
        let parts: Vec<(u32, Sscp)> = bounds
            .windows(2)
            .enumerate()
            .map(|(k, b)| (k as u32 + 1, sscp_of(&rows[b[0]..b[1]])))
            .collect();
        let combined = combine_sscp(&parts).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let pooled = sscp_of(&rows);
        prop_assert_eq!(combined.values(), pooled.values());
        prop_assert_eq!(combined.n_obs(), pooled.n_obs());
        prop_assert_eq!(combined.sum_weights(), pooled.sum_weights());
        Ok(())
    })
}

/// Every SSCP is bitwise symmetric, whatever the inputs.
pub fn check_sscp_symmetry(cases: u32) -> Outcome {
    let row = |p| {
        (
            prop::collection::vec(-1e6f64..1e6, p),
            1e-3f64..1e3,
            -1e6f64..1e6,
        )
    };
    let strategy = (1usize..=6, 1usize..=30).prop_flat_map(move |(p, n)| prop::collection::vec(row(p), n));
    run(cases, strategy, |rows| {
        let s = sscp_of(&rows);
        let m = s.values();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                prop_assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
            }
        }
        Ok(())
    })
}

/// Scaling all weights by `c` scales the SSCP by `c`: exactly for powers of
/// two, to rounding otherwise.
pub fn check_sscp_scaling(cases: u32) -> Outcome {
    let strategy = (1usize..=5, 1usize..=30)
        .prop_flat_map(|(p, n)| (dyadic_rows(p, n), -6i32..=6, 0.1f64..10.0));
    run(cases, strategy, |(rows, k, c)| {
        let base = sscp_of(&rows);
        let scaled_rows = |f: f64| rows.iter().map(|(z, w, y)| (z.clone(), w * f, *y)).collect::<Vec<_>>();
        let two = 2f64.powi(k);
        let exact = sscp_of(&scaled_rows(two));
        prop_assert_eq!(exact.values(), &base.values().scale(two));
        prop_assert_eq!(exact.sum_weights(), base.sum_weights() * two);
        prop_assert_eq!(exact.n_obs(), base.n_obs());
        let approx = sscp_of(&scaled_rows(c));
        let expect = base.values().scale(c);
        let scale = expect.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(approx.values().max_abs_diff(&expect) <= 1e-12 * scale);
        Ok(())
    })
}

/// Deltas are absolute below |β| = 0.01 and relative from 0.01 up, and the
/// run converges exactly when the largest delta is below `xconv`.
pub fn check_convergence_branch(cases: u32) -> Outcome {
    let cutoff = ABSOLUTE_BRANCH_CUTOFF;
    let prev = prop_oneof![
        Just(cutoff),
        Just(-cutoff),
        Just(cutoff.next_down()),
        Just(-cutoff.next_down()),
        0.0f64..0.03,
        -0.03f64..0.0,
        -10.0f64..10.0,
    ];
    let pair = (prev, -1e-3f64..1e-3);
    let strategy = (prop::collection::vec(pair, 1..8), prop_oneof![Just(1e-4), 1e-8f64..1e-2]);
    run(cases, strategy, |(pairs, xconv)| {
        let b0: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b1: Vec<f64> = pairs.iter().map(|(b, d)| b + d).collect();
        let (converged, deltas) = check_convergence(&b0, &b1, xconv);
        let mut largest = 0.0f64;
        for i in 0..b0.len() {
            let diff = b1[i] - b0[i];
            let want = if b0[i].abs() >= 0.01 { diff / b0[i] } else { diff };
            prop_assert_eq!(deltas[i].to_bits(), want.to_bits(), "coefficient {} at {}", i, b0[i]);
            largest = largest.max(want.abs());
        }
        prop_assert_eq!(converged, largest < xconv);
        Ok(())
    })
}

fn scored_rows() -> impl Strategy<Value = Vec<ScoredRow<f64>>> {
    let level = (0u32..40).prop_map(|k| 0.01 + k as f64 * 0.0245);
    let row = (level, 0u32..=1, 1u32..=3).prop_map(|(mu, y, f)| ScoredRow {
        mu,
        y: y as f64,
        resid: y as f64 - mu,
        variance: mu * (1.0 - mu),
        freq: f as f64,
    });
    prop::collection::vec(row, 1..120)
}

/// Bins conserve counts and events, never split a tie, keep every bin at
/// or above the floor and never exceed the group cap.
pub fn check_binning(cases: u32) -> Outcome {
    let strategy = (scored_rows(), 1usize..=25, 1u64..=10, 1usize..=12);
    run(cases, strategy, |(rows, n_grp, n_min, max_groups)| {
        let policy = BinningPolicy::new(n_grp, n_min, max_groups);
        let bins = residual_summary(&rows, Family::Logistic, &policy, 1).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let total: f64 = rows.iter().map(|r| r.freq).sum();
        let events: f64 = rows.iter().map(|r| r.freq * r.y).sum();
        prop_assert_eq!(bins.iter().map(|b| b.n_obs).sum::<f64>(), total);
        prop_assert_eq!(bins.iter().map(|b| b.resp_count.unwrap()).sum::<f64>(), events);
        prop_assert!(bins.len() <= max_groups);
        if bins.len() > 1 {
            prop_assert!(bins.iter().all(|b| b.n_obs >= n_min as f64), "bin below floor");
        }
        let mut levels: Vec<f64> = rows.iter().map(|r| r.mu).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let counts: Vec<f64> = levels
            .iter()
            .map(|v| rows.iter().filter(|r| r.mu == *v).map(|r| r.freq).sum())
            .collect();
        let assign = assign_bins(&levels, &counts, &policy).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(assign[0], 0);
        prop_assert!(assign.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        prop_assert_eq!(bins.iter().map(|b| b.distinct_prob_count).sum::<usize>(), levels.len());
        for b in &bins {
            let members = assign.iter().filter(|&&g| g + 1 == b.bin).count();
            prop_assert_eq!(members, b.distinct_prob_count);
        }
        Ok(())
    })
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,11}"
}

/// A spec survives the trip through the parameter file, and every finite
/// number survives its text encoding bit for bit.
pub fn check_param_round_trip(cases: u32) -> Outcome {
    let strategy = (
        (ident(), ident(), ident(), prop::collection::vec(ident(), 1..6)),
        (any::<bool>(), any::<bool>(), any::<bool>()),
        (prop::option::of(ident()), prop::option::of(ident())),
        (1usize..50, 1usize..20_000, 1u64..100, 1usize..30, any::<bool>()),
        any::<f64>(),
    );
    run(
        cases,
        strategy,
        |((run_id, ds, dep, indep), (logistic, intercept, test_env), (freq, weight), (groups, max_g, n_min, iter, last), x)| {
            let family = if logistic { Family::Logistic } else { Family::Linear };
            let refs: Vec<&str> = indep.iter().map(String::as_str).collect();
            let mut spec = ModelSpec::new(run_id, family, dep, &refs);
            spec.reg_ds_in = ds;
            spec.intercept = intercept;
            spec.test_env = test_env;
            spec.freq_var = freq;
            spec.weight_var = weight;
            spec.groups = groups;
            spec.max_numb_of_grp = max_g;
            spec.min_count_per_grp_glob = n_min;
            let params = ParamSet::for_spec(&spec, iter, last);
            let back = ParamSet::decode(&params.encode()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back, &params);
            prop_assert_eq!(back.get("iter_nb").map(str::to_string), Some(iter.to_string()));
            prop_assert_eq!(back.flag("end_job_dp_in").unwrap(), last);
            let rebuilt = back.to_spec().map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(rebuilt, spec);
            let y: f64 = parse_num(&fmt17(x)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            if x.is_nan() {
                prop_assert!(y.is_nan());
            } else {
                prop_assert_eq!(y.to_bits(), x.to_bits());
            }
            Ok(())
        },
    )
}

/// Every suite, by name.
pub fn suites() -> Vec<(&'static str, fn(u32) -> Outcome)> {
    vec![
        ("SSCP additivity", check_sscp_additivity),
        ("SSCP symmetry", check_sscp_symmetry),
        ("SSCP scaling", check_sscp_scaling),
        ("convergence branch at |beta| = 0.01", check_convergence_branch),
        ("binning floor, conservation and ties", check_binning),
        ("parameter file and number round trip", check_param_round_trip),
    ]
}
