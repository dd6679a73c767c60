//! Rate maximisation over source brightness and detector efficiency,
//! distance scans and the cutoff distance.
//!
//! The optimiser works in `f64`. Bounded parameters are mapped to the real
//! line with a logistic transform and `-ln R` is minimised by BFGS from
//! every feasible point of a log-spaced seed grid.

use serde::{Deserialize, Serialize};

use crate::bfgs::{minimize, BfgsSettings};
use crate::coincidence::{visibility, CountingMode};
use crate::error::{Error, Result};
use crate::rates::{qber_cutoff, rate_from_qber};
use crate::resources::{ResourceParams, Topology};

/// How the dark-count probability follows the detector efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorPolicy {
    /// InGaAs trade-off between efficiency and dark counts.
    Coupled,
    /// Fixed dark-count probability, efficiency free.
    Fixed { dark: f64 },
    /// Unit efficiency and no dark counts; only the brightness is optimised.
    Perfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub alpha0: f64,
    pub kappa: f64,
    pub policy: DetectorPolicy,
    pub chi_bounds: (f64, f64),
    pub eta_bounds: (f64, f64),
    pub n_max: u32,
    pub mode: CountingMode,
    pub seeds_per_axis: usize,
    pub max_iter: usize,
    /// Stop when `ln R` improves by less than this in one iteration.
    pub rel_tol: f64,
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            alpha0: 4.0,
            kappa: 1.22,
            policy: DetectorPolicy::Coupled,
            chi_bounds: (0.0, 0.5),
            eta_bounds: (0.01, 0.84),
            n_max: 3,
            mode: CountingMode::Discard,
            seeds_per_axis: 5,
            max_iter: 200,
            rel_tol: 1e-4,
            fd_step: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        let (c0, c1) = self.chi_bounds;
        let (e0, e1) = self.eta_bounds;
        if !(c0 >= 0.0 && c0 < c1 && c1 < 1.0) {
            return bad("chi_bounds", "need 0 <= lower < upper < 1");
        }
        if !(e0 >= 0.0 && e0 < e1 && e1 <= 1.0) {
            return bad("eta_bounds", "need 0 <= lower < upper <= 1");
        }
        if self.policy == DetectorPolicy::Coupled && e1 > 0.84 {
            return bad("eta_bounds", "coupled dark counts exceed 1 above eta = 0.84");
        }
        if self.seeds_per_axis == 0 {
            return bad("seeds_per_axis", "must be positive");
        }
        if let DetectorPolicy::Fixed { dark } = self.policy {
            if !(0.0..=1.0).contains(&dark) {
                return bad("dark", "must lie in [0, 1]");
            }
        }
        Ok(())
    }

    fn params(&self, chi: f64, eta: f64) -> ResourceParams<f64> {
        let (eta, dark, coupled) = match self.policy {
            DetectorPolicy::Coupled => (eta, 0.0, true),
            DetectorPolicy::Fixed { dark } => (eta, dark, false),
            DetectorPolicy::Perfect => (1.0, 0.0, false),
        };
        ResourceParams {
            chi,
            eta,
            dark,
            alpha: self.alpha,
            alpha0: self.alpha0,
            kappa: self.kappa,
            dark_coupled: coupled,
        }
    }

    fn dimension(&self) -> usize {
        if self.policy == DetectorPolicy::Perfect {
            1
        } else {
            2
        }
    }
}

/// Optimum of one `(N, ell)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumRecord {
    pub ell: f64,
    pub stations: u32,
    pub chi_opt: f64,
    pub eta_opt: f64,
    pub dark: f64,
    pub qber: f64,
    /// Key bits per pulse; 0 when no feasible point was found.
    pub r_max: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl OptimumRecord {
    pub fn feasible(&self) -> bool {
        self.r_max > 0.0
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn to_bounded(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * logistic(u)
}

fn to_unbounded(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let s = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
    (s / (1.0 - s)).ln()
}

#[derive(Debug, Clone, Copy)]
struct Point {
    chi: f64,
    eta: f64,
    qber: f64,
    rate: f64,
}

struct Problem<'a> {
    cfg: &'a OptimizerConfig,
    topo: Topology<f64>,
    cutoff: f64,
    evaluations: usize,
}

impl Problem<'_> {
    fn evaluate(&mut self, chi: f64, eta: f64) -> Option<Point> {
        self.evaluations += 1;
        let params = self.cfg.params(chi, eta);
        let v = visibility(&params, &self.topo, self.cfg.n_max, self.cfg.mode).ok()?;
        let q = v.qber();
        let rate = rate_from_qber(&params, &self.topo, q).ok()?;
        Some(Point {
            chi,
            eta: params.eta,
            qber: q,
            rate: if q < self.cutoff { rate.r } else { 0.0 },
        })
    }

    fn decode(&self, u: &[f64]) -> (f64, f64) {
        let chi = to_bounded(u[0], self.cfg.chi_bounds);
        let eta = if u.len() > 1 {
            to_bounded(u[1], self.cfg.eta_bounds)
        } else {
            1.0
        };
        (chi, eta)
    }

    fn encode(&self, p: &Point) -> Vec<f64> {
        let mut u = vec![to_unbounded(p.chi, self.cfg.chi_bounds)];
        if self.cfg.dimension() > 1 {
            u.push(to_unbounded(p.eta, self.cfg.eta_bounds));
        }
        u
    }

    fn settings(&self) -> BfgsSettings {
        BfgsSettings {
            max_iter: self.cfg.max_iter,
            f_tol: self.cfg.rel_tol,
            fd_step: self.cfg.fd_step,
            ..Default::default()
        }
    }

    /// Maximises the rate from a feasible start.
    fn ascend(&mut self, start: &Point) -> (Point, bool) {
        let u0 = self.encode(start);
        let settings = self.settings();
        let mut best = *start;
        let outcome = minimize(
            |u| {
                let (chi, eta) = self.decode(u);
                match self.evaluate(chi, eta) {
                    Some(p) if p.rate > 0.0 => {
                        if p.rate > best.rate {
                            best = p;
                        }
                        -p.rate.ln()
                    }
                    _ => f64::INFINITY,
                }
            },
            &u0,
            &settings,
        );
        (best, outcome.converged)
    }

    /// Minimises the QBER, returning the first point found below the cutoff
    /// or the lowest QBER reached.
    fn descend_qber(&mut self, start: &Point) -> Point {
        let u0 = self.encode(start);
        let settings = BfgsSettings {
            f_tol: 1e-9,
            ..self.settings()
        };
        let mut best = *start;
        let cutoff = self.cutoff;
        minimize(
            |u| {
                if best.qber < cutoff {
                    // a feasible start has been found; flatten the objective
                    return best.qber;
                }
                let (chi, eta) = self.decode(u);
                match self.evaluate(chi, eta) {
                    Some(p) => {
                        if p.qber < best.qber {
                            best = p;
                        }
                        p.qber
                    }
                    None => f64::INFINITY,
                }
            },
            &u0,
            &settings,
        );
        best
    }

    fn seeds(&self) -> Vec<(f64, f64)> {
        let k = self.cfg.seeds_per_axis;
        let geom = |(lo, hi): (f64, f64), floor: f64| -> Vec<f64> {
            let lo = lo.max(floor);
            let (a, b) = (lo + 0.02 * (hi - lo), hi - 0.02 * (hi - lo));
            let (a, b) = (a.max(floor), b);
            if k == 1 {
                return vec![(a * b).sqrt()];
            }
            (0..k).map(|i| a * (b / a).powf(i as f64 / (k - 1) as f64)).collect()
        };
        let chis = geom(self.cfg.chi_bounds, 1e-3);
        if self.cfg.dimension() == 1 {
            return chis.into_iter().map(|c| (c, 1.0)).collect();
        }
        let etas = geom(self.cfg.eta_bounds, 1e-3);
        let mut out = Vec::with_capacity(k * k);
        for &c in &chis {
            for &e in &etas {
                out.push((c, e));
            }
        }
        out
    }
}

fn record(
    topo: &Topology<f64>,
    cfg: &OptimizerConfig,
    p: &Point,
    evaluations: usize,
    converged: bool,
) -> OptimumRecord {
    let params = cfg.params(p.chi, p.eta);
    OptimumRecord {
        ell: topo.distance,
        stations: topo.stations,
        chi_opt: p.chi,
        eta_opt: params.eta,
        dark: params.dark_probability().unwrap_or(f64::NAN),
        qber: p.qber,
        r_max: p.rate,
        evaluations,
        converged: converged && p.rate > 0.0,
    }
}

/// Maximises the secret key rate at distance `ell`.
pub fn maximize_rate(stations: u32, ell: f64, cfg: &OptimizerConfig) -> Result<OptimumRecord> {
    maximize_rate_from(stations, ell, cfg, &[])
}

/// [`maximize_rate`] with extra starting points `(chi, eta)` tried before
/// the seed grid.
pub fn maximize_rate_from(
    stations: u32,
    ell: f64,
    cfg: &OptimizerConfig,
    warm: &[(f64, f64)],
) -> Result<OptimumRecord> {
    cfg.validate()?;
    let topo = Topology::new(stations, ell)?;
    let mut problem = Problem {
        cfg,
        topo,
        cutoff: qber_cutoff(cfg.kappa)?,
        evaluations: 0,
    };

    let mut starts: Vec<Point> = Vec::new();
    let mut lowest_q: Option<Point> = None;
    let candidates: Vec<(f64, f64)> = warm.iter().copied().chain(problem.seeds()).collect();
    for (chi, eta) in candidates {
        let chi = chi.clamp(cfg.chi_bounds.0 + 1e-9, cfg.chi_bounds.1);
        let eta = eta.clamp(cfg.eta_bounds.0 + 1e-9, cfg.eta_bounds.1);
        if let Some(p) = problem.evaluate(chi, eta) {
            if p.rate > 0.0 {
                starts.push(p);
            }
            if lowest_q.is_none_or(|b| p.qber < b.qber) {
                lowest_q = Some(p);
            }
        }
    }
    if starts.is_empty() {
        if let Some(low) = lowest_q {
            let found = problem.descend_qber(&low);
            if found.rate > 0.0 {
                starts.push(found);
            } else {
                return Ok(record(&problem.topo, cfg, &found, problem.evaluations, false));
            }
        } else {
            return Err(Error::InvalidParameter {
                name: "seeds",
                reason: "no seed could be evaluated".into(),
            });
        }
    }

    let mut best: Option<(Point, bool)> = None;
    for start in &starts {
        let (p, converged) = problem.ascend(start);
        if best.is_none_or(|(b, _)| p.rate > b.rate) {
            best = Some((p, converged));
        }
    }
    let (p, converged) = best.expect("at least one feasible start");
    Ok(record(&problem.topo, cfg, &p, problem.evaluations, converged))
}

/// Optimum at every distance of `ells`, each warm-started from the previous
/// feasible optimum.
pub fn scan_rate_vs_distance(stations: u32, ells: &[f64], cfg: &OptimizerConfig) -> Result<Vec<OptimumRecord>> {
    let mut out = Vec::with_capacity(ells.len());
    let mut warm: Vec<(f64, f64)> = Vec::new();
    for &ell in ells {
        let rec = maximize_rate_from(stations, ell, cfg, &warm)?;
        if rec.feasible() {
            warm = vec![(rec.chi_opt, rec.eta_opt)];
        }
        out.push(rec);
    }
    Ok(out)
}

/// Distance at which the optimised rate stops being positive, by bisection
/// inside `bracket` until the feasible/infeasible pair is at most
/// `resolution` km apart. Returns the midpoint of that final pair.
pub fn find_lmax(stations: u32, cfg: &OptimizerConfig, bracket: (f64, f64), resolution: f64) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    let bad = Error::BadBracket { lo, hi };
    if !(lo >= 0.0 && hi > lo && resolution > 0.0) {
        return Err(bad);
    }
    let at_lo = maximize_rate(stations, lo, cfg)?;
    if !at_lo.feasible() {
        return Err(bad);
    }
    let mut warm = vec![(at_lo.chi_opt, at_lo.eta_opt)];
    if maximize_rate_from(stations, hi, cfg, &warm)?.feasible() {
        return Err(bad);
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let rec = maximize_rate_from(stations, mid, cfg, &warm)?;
        if rec.feasible() {
            lo = mid;
            warm = vec![(rec.chi_opt, rec.eta_opt)];
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// QBER against brightness at fixed detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberScan {
    pub rows: Vec<(f64, f64)>,
    /// Brightness at which the QBER first reaches `threshold`, linearly
    /// interpolated between grid points.
    pub crossing: Option<f64>,
    pub threshold: f64,
}

/// Evaluates the QBER of `base` with its brightness replaced by each entry
/// of the ascending grid `chis`.
pub fn scan_qber_vs_chi(
    base: &ResourceParams<f64>,
    topo: &Topology<f64>,
    chis: &[f64],
    threshold: f64,
    n_max: u32,
    mode: CountingMode,
) -> Result<QberScan> {
    if chis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter {
            name: "chi grid",
            reason: "must be strictly ascending".into(),
        });
    }
    let mut rows = Vec::with_capacity(chis.len());
    for &chi in chis {
        let params = ResourceParams { chi, ..*base };
        rows.push((chi, visibility(&params, topo, n_max, mode)?.qber()));
    }
    let crossing = crossing_point(&rows, threshold);
    Ok(QberScan {
        rows,
        crossing,
        threshold,
    })
}

/// First abscissa at which the ordinate reaches `threshold`, linearly
/// interpolated between the bracketing rows.
pub fn crossing_point(rows: &[(f64, f64)], threshold: f64) -> Option<f64> {
    let first = rows.iter().position(|&(_, q)| q >= threshold)?;
    if first == 0 {
        return Some(rows[0].0);
    }
    let (x0, q0) = rows[first - 1];
    let (x1, q1) = rows[first];
    Some(x0 + (threshold - q0) * (x1 - x0) / (q1 - q0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> OptimizerConfig {
        OptimizerConfig {
            n_max: 2,
            seeds_per_axis: 3,
            ..Default::default()
        }
    }

    #[test]
    fn logistic_round_trip() {
        for &x in &[0.011, 0.2, 0.5, 0.83] {
            let b = (0.01, 0.84);
            assert!((to_bounded(to_unbounded(x, b), b) - x).abs() < 1e-12);
        }
        assert!(to_bounded(800.0, (0.0, 0.5)) <= 0.5);
        assert!(to_bounded(-800.0, (0.0, 0.5)) >= 0.0);
    }

    #[test]
    fn crossing_interpolates() {
        let rows = [(0.1, 0.05), (0.2, 0.09), (0.3, 0.13)];
        assert!((crossing_point(&rows, 0.11).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(crossing_point(&rows, 0.2), None);
        assert_eq!(crossing_point(&rows, 0.01), Some(0.1));
    }

    #[test]
    fn optimum_dominates_seeds_and_is_feasible() {
        let cfg = quick();
        let rec = maximize_rate(1, 50.0, &cfg).unwrap();
        assert!(rec.feasible() && rec.converged);
        assert!(rec.qber < qber_cutoff(cfg.kappa).unwrap());
        let topo = Topology::new(1, 50.0).unwrap();
        let mut p = Problem {
            cfg: &cfg,
            topo,
            cutoff: qber_cutoff(cfg.kappa).unwrap(),
            evaluations: 0,
        };
        for (c, e) in p.seeds() {
            let s = p.evaluate(c, e).unwrap();
            assert!(rec.r_max >= s.rate);
        }
        assert!(rec.eta_opt > cfg.eta_bounds.0 && rec.eta_opt <= cfg.eta_bounds.1);
    }

    #[test]
    fn far_beyond_cutoff_is_infeasible() {
        let rec = maximize_rate(1, 900.0, &quick()).unwrap();
        assert!(!rec.feasible());
        assert!(!rec.converged);
        assert_eq!(rec.r_max, 0.0);
    }

    #[test]
    fn deterministic() {
        let a = scan_rate_vs_distance(1, &[0.0, 100.0], &quick()).unwrap();
        let b = scan_rate_vs_distance(1, &[0.0, 100.0], &quick()).unwrap();
        assert_eq!(a, b);
        assert!(a[0].r_max > a[1].r_max);
    }

    #[test]
    fn perfect_policy_optimises_brightness_only() {
        let cfg = OptimizerConfig {
            policy: DetectorPolicy::Perfect,
            ..quick()
        };
        let rec = maximize_rate(1, 0.0, &cfg).unwrap();
        assert_eq!(rec.eta_opt, 1.0);
        assert_eq!(rec.dark, 0.0);
        assert!(rec.feasible());
    }

    #[test]
    fn bracket_must_straddle() {
        let cfg = quick();
        assert!(matches!(
            find_lmax(1, &cfg, (0.0, 50.0), 10.0),
            Err(Error::BadBracket { .. })
        ));
        assert!(matches!(
            find_lmax(1, &cfg, (800.0, 900.0), 10.0),
            Err(Error::BadBracket { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig {
            eta_bounds: (0.01, 0.9),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.policy = DetectorPolicy::Fixed { dark: 1e-5 };
        assert!(cfg.validate().is_ok());
        cfg.chi_bounds = (0.3, 0.2);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn qber_scan_rejects_unsorted_grid() {
        let base = ResourceParams::long_haul(0.1, 0.4);
        let topo = Topology::new(1, 0.0).unwrap();
        assert!(scan_qber_vs_chi(&base, &topo, &[0.2, 0.1], 0.11, 2, CountingMode::Discard).is_err());
    }
}
