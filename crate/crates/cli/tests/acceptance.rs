//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a required criterion fails. Optional checks are reported
//! but never change the exit status; they only run with `--include-ignored`
//! or `CES_QKD_FULL=1`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use ces_qkd::amplitude::retained_probability;
use ces_qkd::oracle::{compare_closed_form, evolve_and_measure};
use ces_qkd::{
    amplitude, find_lmax, ideal_rate, qber_cutoff, scan_qber_vs_chi, scan_rate_vs_distance, secret_key_rate,
    shor_preskill, tgw_bound, visibility, AnalyzerAngles, ChainDetectors, CountingMode, OptimizerConfig, PhotonPattern,
    ResourceParams, Topology,
};

const REP_RATE: f64 = 1e8;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within_rel(x: f64, target: f64, rel: f64) -> bool {
    ((x - target) / target).abs() <= rel
}

fn fig2_params(chi: f64) -> ResourceParams<f64> {
    ResourceParams {
        chi,
        eta: 0.4,
        dark: 1e-5,
        alpha: 0.25,
        alpha0: 4.0,
        kappa: 1.22,
        dark_coupled: false,
    }
}

fn chi_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

fn crossing(stations: u32, n_max: u32) -> Option<f64> {
    let topo = Topology::new(stations, 0.0).unwrap();
    let scan = scan_qber_vs_chi(
        &fig2_params(0.1),
        &topo,
        &chi_grid(0.01, 0.3, 0.0025),
        0.11,
        n_max,
        CountingMode::Discard,
    )
    .unwrap();
    scan.crossing
}

fn criterion_1() -> Outcome {
    let c1 = qber_cutoff(1.0f64).unwrap();
    let c2 = qber_cutoff(1.22f64).unwrap();
    outcome(
        (c1 - 0.11).abs() <= 0.005 && (c2 - 0.094).abs() <= 0.005,
        format!("cutoff(1)={c1:.5} (0.11 +/- 0.005), cutoff(1.22)={c2:.5} (0.094 +/- 0.005)"),
    )
}

fn criterion_2() -> Outcome {
    let topo = Topology::new(1, 0.0).unwrap();
    let dets = ChainDetectors::from_params(&fig2_params(0.1), &topo).unwrap();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for n_max in 1..=2 {
        let cmp = compare_closed_form(&[0.05, 0.1, 0.2], &[0.0, FRAC_PI_4, FRAC_PI_2], n_max, &dets, &dets).unwrap();
        worst = worst.max(cmp.max_relative_deviation);
        compared += cmp.compared;
    }
    outcome(
        worst <= 1e-8,
        format!("max relative deviation {worst:.3e} (limit 1e-8) over {compared} conditional probabilities"),
    )
}

fn criterion_3() -> Outcome {
    let n1 = crossing(1, 3);
    let n2 = crossing(2, 3);
    let ok1 = n1.is_some_and(|c| within_rel(c, 0.20, 0.15));
    let ok2 = n2.is_some_and(|c| within_rel(c, 0.08, 0.15));
    outcome(
        ok1 && ok2,
        format!(
            "N=1 crossing {} (0.20 +/- 15%{}), N=2 crossing {} (0.08 +/- 15%{}), n_max=3",
            fmt_opt(n1),
            if ok1 { "" } else { ", out of range" },
            fmt_opt(n2),
            if ok2 { "" } else { ", out of range" },
        ),
    )
}

fn criterion_3_optional() -> Outcome {
    let n_max = 2;
    let c = crossing(3, n_max);
    let tail = c.map(|chi| ces_qkd::amplitude::truncation_tail(chi, 3, n_max));
    let fmt_e = |x: Option<f64>| x.map_or_else(|| "none".into(), |v| format!("{v:.2e}"));
    outcome(
        c.is_some_and(|c| within_rel(c, 0.05, 0.20)),
        format!(
            "N=3 crossing {} (0.05 +/- 20%), n_max={n_max}, truncation bound {}",
            fmt_opt(c),
            fmt_e(tail)
        ),
    )
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), |v| format!("{v:.4}"))
}

fn criterion_4() -> Outcome {
    let mut margin = f64::INFINITY;
    let mut worst_ratio = 0.0f64;
    for ell in (1..=1000).map(f64::from) {
        let tgw = tgw_bound(ell, 0.25).unwrap();
        for n in 1..=3 {
            let ideal = ideal_rate(n, ell, 0.25);
            margin = margin.min(tgw - ideal);
            worst_ratio = worst_ratio.max(ideal / tgw);
        }
    }
    outcome(
        margin > 0.0,
        format!("largest ideal/TGW ratio {worst_ratio:.4} over N=1..3, ell=1..1000 km"),
    )
}

fn seconds_per_bit(stations: u32, chi: f64) -> (f64, f64) {
    let params = ResourceParams {
        chi,
        eta: 1.0,
        dark: 0.0,
        alpha: 0.25,
        alpha0: 4.0,
        kappa: 1.22,
        dark_coupled: false,
    };
    let topo = Topology::new(stations, 0.0).unwrap();
    let r = secret_key_rate(&params, &topo, 3, CountingMode::Discard).unwrap();
    (1.0 / r.bits_per_second(REP_RATE), r.q)
}

fn criterion_5() -> Outcome {
    let (t1, q1) = seconds_per_bit(1, 0.2);
    let (t2, q2) = seconds_per_bit(2, 0.1);
    let (t3, q3) = seconds_per_bit(3, 0.07);
    let hour = 3600.0;
    let century = 100.0 * 365.25 * 24.0 * hour;
    let target3 = 3e6 * century;
    let f1 = t1 / 0.01;
    let f2 = t2 / (27.7 * hour);
    let d3 = (t3 / target3).log10();
    let ok1 = (1.0 / 3.0..=3.0).contains(&f1);
    let ok2 = (1.0 / 3.0..=3.0).contains(&f2);
    let ok3 = d3.abs() <= 1.0;
    outcome(
        ok1 && ok2 && ok3,
        format!(
            "N=1 chi=0.2: {t1:.3e} s/bit (Q={q1:.4}, ratio {f1:.2}{}); N=2 chi=0.1: {:.1} h/bit (Q={q2:.4}, ratio {f2:.2}{}); \
             N=3 chi=0.07: {:.2e} centuries/bit (Q={q3:.4}, log10 offset {d3:+.2}{})",
            if ok1 { "" } else { ", out of range" },
            t2 / hour,
            if ok2 { "" } else { ", out of range" },
            t3 / century,
            if ok3 { "" } else { ", out of range" },
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = OptimizerConfig::default();
    let lmax = find_lmax(1, &cfg, (0.0, 500.0), 1.0).unwrap();
    let ok_lmax = within_rel(lmax, 350.0, 0.10);

    let mut violations = Vec::new();
    let cutoff = qber_cutoff(cfg.kappa).unwrap();
    let scans: [(u32, Vec<f64>, u32); 2] = [
        (2, (0..=10).map(|i| 100.0 * i as f64).collect(), 3),
        (3, (0..=12).map(|i| 100.0 * i as f64).collect(), 2),
    ];
    let mut summary = Vec::new();
    for (n, ells, n_max) in scans {
        let cfg = OptimizerConfig { n_max, ..cfg };
        let recs = scan_rate_vs_distance(n, &ells, &cfg).unwrap();
        let mut seen_infeasible = false;
        let mut last_feasible = None;
        for r in &recs {
            if r.feasible() {
                if seen_infeasible {
                    violations.push(format!("N={n} feasible again at {} km", r.ell));
                }
                last_feasible = Some(r.ell);
            } else {
                seen_infeasible = true;
            }
            if r.converged && !(r.qber < cutoff) {
                violations.push(format!("N={n} converged at {} km with Q={}", r.ell, r.qber));
            }
        }
        summary.push(format!(
            "N={n} last feasible grid point {} km (n_max={n_max})",
            last_feasible.map_or_else(|| "none".into(), |l| format!("{l}"))
        ));
    }
    outcome(
        ok_lmax && violations.is_empty(),
        format!(
            "N=1 lmax={lmax:.1} km (350 +/- 10%{}); {}; {}",
            if ok_lmax { "" } else { ", out of range" },
            summary.join(", "),
            if violations.is_empty() {
                "feasibility monotone, converged records below cutoff".to_string()
            } else {
                violations.join("; ")
            }
        ),
    )
}

fn nonconserving_pattern() -> impl Strategy<Value = PhotonPattern> {
    (1u32..=3).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::array::uniform4(0u32..=3), (2 * n - 1) as usize),
            prop::array::uniform4(0u32..=3),
        )
            .prop_map(|(stations, ends)| PhotonPattern { stations, ends })
            .prop_filter("conserving", |p| p.source_pairs().is_none())
    })
}

fn cli_output(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_ces-qkd"))
        .args(args)
        .output()
        .expect("run ces-qkd");
    assert!(out.status.success(), "ces-qkd {args:?} failed");
    out.stdout
}

fn criterion_7() -> Outcome {
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |ok: bool, what: String| {
        if !ok {
            failures.push(what);
        }
    };

    // normalisation of the truncated amplitude sum
    let mut worst_mass = 0.0f64;
    for n in 1..=2u32 {
        for &chi in &[0.05, 0.1, 0.2] {
            for &(a, d) in &[(0.0, 0.0), (FRAC_PI_4, 0.3), (1.2, FRAC_PI_2)] {
                let ang = AnalyzerAngles::new(a, d);
                let mut prev = 0.0;
                let top = if n == 1 { 4 } else { 2 };
                for n_max in 1..=top {
                    let m = retained_probability(n, n_max, chi, &ang).unwrap();
                    fail(m <= 1.0 + 1e-12, format!("mass {m} > 1 at N={n} chi={chi}"));
                    fail(
                        m >= prev - 1e-15,
                        format!("mass decreased with n_max at N={n} chi={chi}"),
                    );
                    prev = m;
                    worst_mass = worst_mass.max(m);
                }
            }
        }
    }

    // oracle outcome table sums to one
    let topo = Topology::new(1, 0.0).unwrap();
    let dets = ChainDetectors::from_params(&fig2_params(0.1), &topo).unwrap();
    let table = evolve_and_measure(0.1, &AnalyzerAngles::new(FRAC_PI_4, FRAC_PI_2), &dets, 6, None).unwrap();
    let gap = (table.total() - 1.0).abs();
    fail(gap <= 1e-12, format!("oracle table sum off by {gap:e}"));

    // nonconserving patterns have zero amplitude
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let nullity = runner.run(&nonconserving_pattern(), |p| {
        let a = amplitude(&p, &AnalyzerAngles::new(0.7, 2.1), 0.15, p.setups()).unwrap();
        prop_assert!(a.re == 0.0 && a.im == 0.0);
        Ok(())
    });
    fail(nullity.is_ok(), format!("delta nullity: {nullity:?}"));

    // QBER monotone in chi and ell
    for n in 1..=2u32 {
        let topo = Topology::new(n, 0.0).unwrap();
        let scan = scan_qber_vs_chi(
            &fig2_params(0.1),
            &topo,
            &chi_grid(0.01, 0.3, 0.01),
            0.11,
            3,
            CountingMode::Discard,
        )
        .unwrap();
        fail(
            scan.rows.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12),
            format!("QBER not monotone in chi for N={n}"),
        );
        let mut prev = 0.0;
        for ell in (0..=30).map(|i| 10.0 * i as f64) {
            let topo = Topology::new(n, ell).unwrap();
            let q = visibility(&fig2_params(0.1), &topo, 3, CountingMode::Discard)
                .unwrap()
                .qber();
            fail(q >= prev - 1e-12, format!("QBER decreased at N={n} ell={ell}"));
            prev = q;
        }
    }

    // Shor-Preskill factor decreasing in Q and in kappa
    for &kappa in &[1.0, 1.22, 1.5] {
        let vals: Vec<f64> = (0..=500)
            .map(|i| shor_preskill(i as f64 / 1000.0, kappa).unwrap())
            .collect();
        fail(
            vals.windows(2).all(|w| w[1] <= w[0]),
            format!("Shor-Preskill not monotone at kappa={kappa}"),
        );
    }
    for i in 1..50 {
        let q = i as f64 / 500.0;
        fail(
            shor_preskill(q, 1.3).unwrap() < shor_preskill(q, 1.1).unwrap(),
            format!("Shor-Preskill not decreasing in kappa at Q={q}"),
        );
    }

    // repeated CLI runs give byte-identical CSV
    let runs: [&[&str]; 2] = [
        &["qber-scan", "--stations", "2", "--steps", "12"],
        &[
            "optimize",
            "--ell-max",
            "100",
            "--step",
            "50",
            "--nmax",
            "2",
            "--seeds",
            "3",
        ],
    ];
    for args in runs {
        let first = cli_output(args);
        let second = cli_output(args);
        fail(
            !first.is_empty() && first == second,
            format!("output of {args:?} differs between runs"),
        );
    }

    let detail = format!(
        "max retained mass {worst_mass:.12}, oracle sum gap {gap:.2e}, 1000 nonconserving patterns; {}",
        if failures.is_empty() {
            "all properties hold".to_string()
        } else {
            failures.join("; ")
        }
    );
    outcome(failures.is_empty(), detail)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let full = args.iter().any(|a| a == "--include-ignored" || a == "--ignored")
        || std::env::var("CES_QKD_FULL").is_ok_and(|v| v == "1");

    let criteria: [Criterion; 7] = [
        ("1 cutoff_qber", criterion_1),
        ("2 oracle_equivalence", criterion_2),
        ("3 qber_crossings", criterion_3),
        ("4 tgw_dominance", criterion_4),
        ("5 zero_distance_rates", criterion_5),
        ("6 lmax", criterion_6),
        ("7 property_suites", criterion_7),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1} s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if full {
        let start = Instant::now();
        let o = criterion_3_optional();
        println!(
            "{} criterion 3b n3_crossing (optional): {} [{:.1} s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    } else {
        println!("SKIP criterion 3b n3_crossing (optional): run with --include-ignored or CES_QKD_FULL=1");
    }
    println!("{} of 7 required criteria passed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
