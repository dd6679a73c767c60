//! `validate`: closed form against the Fock-space oracle plus a few cheap
//! invariants.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use ces_qkd::amplitude::retained_probability;
use ces_qkd::oracle::{compare_closed_form, evolve_and_measure};
use ces_qkd::{ideal_rate, tgw_bound, AnalyzerAngles, ChainDetectors, DetectorModel};

use crate::config::RunConfig;
use crate::table::num;
use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Brightness values to compare at.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
    pub chis: Vec<f64>,
    /// Largest accepted relative deviation.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// TOML file replacing individual detectors of the closed-form side.
    #[arg(long)]
    pub detector_fixture: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Fixture {
    #[serde(default)]
    site: Vec<SiteOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteOverride {
    /// One of A_H, A_V, B_V, B_H, H_L, V_L, V_R, H_R.
    name: String,
    eta_eff: f64,
    dark: f64,
}

fn apply_fixture(path: &Path, detectors: &mut ChainDetectors<f64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::BadArgs(format!("cannot read fixture {}: {e}", path.display())))?;
    let fixture: Fixture =
        toml::from_str(&text).map_err(|e| CliError::BadArgs(format!("invalid fixture {}: {e}", path.display())))?;
    for s in fixture.site {
        let det = DetectorModel::new(s.eta_eff, s.dark)?;
        let slot = match s.name.as_str() {
            "A_H" => &mut detectors.ends[0],
            "A_V" => &mut detectors.ends[1],
            "B_V" => &mut detectors.ends[2],
            "B_H" => &mut detectors.ends[3],
            "H_L" => &mut detectors.stations[0][0],
            "V_L" => &mut detectors.stations[0][1],
            "V_R" => &mut detectors.stations[0][2],
            "H_R" => &mut detectors.stations[0][3],
            other => return Err(CliError::BadArgs(format!("unknown detector site {other:?}"))),
        };
        *slot = det;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {} value={} limit={} {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                num(c.value),
                num(c.limit),
                c.detail
            ));
        }
        s
    }

    pub fn into_result(self) -> Result<(), CliError> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (value {:e}, limit {:e})", c.name, c.value, c.limit))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(failed.join("; ")))
        }
    }
}

pub fn run(cfg: &RunConfig, args: &ValidateArgs) -> Result<Report, CliError> {
    if cfg.stations != 1 {
        return Err(CliError::BadArgs(
            "validate checks a single swapping setup; use --stations 1".into(),
        ));
    }
    if args.chis.is_empty() || args.chis.iter().any(|c| !(0.0..1.0).contains(c)) {
        return Err(CliError::BadArgs("chis must lie in [0, 1)".into()));
    }
    let topo = cfg.topology()?;
    let nominal = ChainDetectors::from_params(&cfg.params(), &topo)?;
    let mut under_test = nominal.clone();
    if let Some(path) = &args.detector_fixture {
        apply_fixture(path, &mut under_test)?;
    }
    let mut report = Report::default();

    let angles = [0.0, FRAC_PI_4, FRAC_PI_2];
    let cmp = compare_closed_form(&args.chis, &angles, cfg.nmax, &nominal, &under_test)?;
    report.checks.push(Check {
        name: "oracle_equivalence",
        value: cmp.max_relative_deviation,
        limit: args.tolerance,
        passed: cmp.max_relative_deviation <= args.tolerance,
        detail: format!("compared={} worst: {}", cmp.compared, cmp.worst),
    });

    let table = evolve_and_measure(0.05, &AnalyzerAngles::new(FRAC_PI_4, FRAC_PI_2), &nominal, 4, None)?;
    let gap = (table.total() - 1.0).abs();
    report.checks.push(Check {
        name: "oracle_completeness",
        value: gap,
        limit: 1e-12,
        passed: gap <= 1e-12,
        detail: "chi=0.05 pairs=4".into(),
    });

    let mut worst_mass = 0.0f64;
    for &chi in &args.chis {
        for &a in &angles {
            let mass = retained_probability(1, cfg.nmax, chi, &AnalyzerAngles::new(a, a))?;
            worst_mass = worst_mass.max(mass);
        }
    }
    report.checks.push(Check {
        name: "amplitude_normalization",
        value: worst_mass,
        limit: 1.0 + 1e-12,
        passed: worst_mass <= 1.0 + 1e-12,
        detail: format!("nmax={}", cfg.nmax),
    });

    let mut margin = f64::INFINITY;
    for ell in (1..=1000).map(f64::from) {
        let tgw = tgw_bound(ell, cfg.alpha)?;
        for n in 1..=3 {
            margin = margin.min(tgw - ideal_rate(n, ell, cfg.alpha));
        }
    }
    report.checks.push(Check {
        name: "ideal_below_tgw",
        value: margin,
        limit: 0.0,
        passed: margin > 0.0,
        detail: "N=1..3, ell=1..1000 km".into(),
    });
    Ok(report)
}
