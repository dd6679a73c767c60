//! Brute-force Fock-space model of a single swapping setup, used to check
//! the closed form.
//!
//! The two sources are prepared as explicit truncated two-mode squeezed
//! states, every input photon is pushed through the linear-optical network
//! by expanding creation operators one photon at a time, and the outcome
//! table of the eight threshold detectors is built by binomial thinning of
//! each output occupation. Nothing here uses the combinatorial kernels of
//! the amplitude module.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::amplitude::{AnalyzerAngles, MAX_CUTOFF};
use crate::coincidence::{end_table_aligned, end_tables_enumerated, ChainDetectors, EndTable};
use crate::combinatorics::{ln_binomial, ln_factorial};
use crate::error::{Error, Result};
use crate::resources::DetectorModel;

/// Number of optical modes of one setup.
pub const MODES: usize = 8;

/// Occupation numbers of the eight modes.
pub type Occupation = [u8; MODES];

/// Sparse pure state over eight modes.
///
/// Before the network the modes are the source outputs
/// `[s1 left H, s1 left V, s1 right H, s1 right V, s2 left H, s2 left V,
/// s2 right H, s2 right V]`; after it they are the detectors
/// `[A H, A V, H left, V left, V right, H right, B V, B H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedState {
    pub amplitudes: BTreeMap<Occupation, Complex64>,
}

impl TruncatedState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn vacuum_amplitude(&self) -> Complex64 {
        self.amplitudes.get(&[0; MODES]).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

/// Both sources with at most `pairs` pairs per polarisation.
///
/// Each polarisation of each source contributes
/// `sum_n (i tanh chi)^n / cosh chi |n, n>` on its (left, right) modes.
pub fn build_pdc_state(chi: f64, pairs: u32) -> Result<TruncatedState> {
    if pairs > 2 * MAX_CUTOFF {
        return Err(Error::CutoffTooLarge {
            n_max: pairs,
            limit: 2 * MAX_CUTOFF,
        });
    }
    let t = chi.tanh();
    let single: Vec<Complex64> = (0..=pairs)
        .map(|n| Complex64::i().powu(n) * t.powi(n as i32) / chi.cosh())
        .collect();
    let mut amplitudes = BTreeMap::new();
    // (source, polarisation) -> (left mode, right mode)
    let links = [(0usize, 2usize), (1, 3), (4, 6), (5, 7)];
    let p = pairs as usize + 1;
    for code in 0..p.pow(4) {
        let mut occ = [0u8; MODES];
        let mut amp = Complex64::new(1.0, 0.0);
        let mut c = code;
        for &(l, r) in &links {
            let n = c % p;
            c /= p;
            occ[l] = n as u8;
            occ[r] = n as u8;
            amp *= single[n];
        }
        if amp.norm_sqr() > 0.0 {
            amplitudes.insert(occ, amp);
        }
    }
    Ok(TruncatedState { amplitudes })
}

/// Transfer matrix of the network: `out[input] = [(output mode, coefficient)]`.
fn network(angles: &AnalyzerAngles<f64>) -> [Vec<(usize, Complex64)>; MODES] {
    let rot = |theta: f64| {
        let (s, c) = (theta / 2.0).sin_cos();
        (Complex64::new(c, 0.0), Complex64::new(0.0, s))
    };
    let (ca, sa) = rot(angles.alpha_t);
    let (cd, sd) = rot(angles.delta_t);
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    const A_H: usize = 0;
    const A_V: usize = 1;
    const H_L: usize = 2;
    const V_L: usize = 3;
    const V_R: usize = 4;
    const H_R: usize = 5;
    const B_V: usize = 6;
    const B_H: usize = 7;
    [
        // source 1 towards A, through A's rotator
        vec![(A_H, ca), (A_V, sa)],
        vec![(A_H, sa), (A_V, ca)],
        // source 1 into the beam splitter: x -> (L - R) / sqrt 2
        vec![(H_L, h), (H_R, -h)],
        vec![(V_L, h), (V_R, -h)],
        // source 2 into the beam splitter: y -> (L + R) / sqrt 2
        vec![(H_L, h), (H_R, h)],
        vec![(V_L, h), (V_R, h)],
        // source 2 towards B, through B's rotator
        vec![(B_H, cd), (B_V, sd)],
        vec![(B_H, sd), (B_V, cd)],
    ]
}

/// Pushes every photon through the network; output occupations above
/// `max_out` (if given) are dropped.
pub fn evolve(state: &TruncatedState, angles: &AnalyzerAngles<f64>, max_out: Option<u32>) -> TruncatedState {
    let map = network(angles);
    let cap = max_out.map_or(u8::MAX, |m| m.min(u8::MAX as u32) as u8);
    let mut out: HashMap<Occupation, Complex64> = HashMap::new();
    for (occ, &amp) in &state.amplitudes {
        // monomial coefficients of prod a_out^dagger^m
        let norm: f64 = occ.iter().map(|&n| ln_factorial(n as u32)).sum::<f64>();
        let mut poly: HashMap<Occupation, Complex64> = HashMap::new();
        poly.insert([0; MODES], amp * (-0.5 * norm).exp());
        for (input, &n) in occ.iter().enumerate() {
            for _ in 0..n {
                let mut next: HashMap<Occupation, Complex64> = HashMap::with_capacity(poly.len() * 2);
                for (m, &c) in &poly {
                    for &(o, u) in &map[input] {
                        if m[o] >= cap {
                            continue;
                        }
                        let mut m2 = *m;
                        m2[o] += 1;
                        *next.entry(m2).or_default() += c * u;
                    }
                }
                poly = next;
            }
        }
        for (m, c) in poly {
            let ln_fact: f64 = m.iter().map(|&k| ln_factorial(k as u32)).sum();
            *out.entry(m).or_default() += c * (0.5 * ln_fact).exp();
        }
    }
    TruncatedState {
        amplitudes: out.into_iter().collect(),
    }
}

/// Splits each input mode through a beam splitter of transmittance `eta`
/// towards an unobserved environment. Returns one unnormalised branch per
/// environment occupation; the branches are mutually orthogonal.
pub fn apply_input_loss(state: &TruncatedState, eta: f64) -> Vec<TruncatedState> {
    let mut branches: BTreeMap<Occupation, BTreeMap<Occupation, Complex64>> = BTreeMap::new();
    for (occ, &amp) in &state.amplitudes {
        let ranges: Vec<u32> = occ.iter().map(|&n| n as u32 + 1).collect();
        let total: u32 = ranges.iter().product();
        for code in 0..total {
            let mut c = code;
            let mut lost = [0u8; MODES];
            let mut kept = [0u8; MODES];
            let mut w = 1.0;
            for k in 0..MODES {
                let l = c % ranges[k];
                c /= ranges[k];
                let n = occ[k] as u32;
                lost[k] = l as u8;
                kept[k] = (n - l) as u8;
                w *= binomial_weight(n, n - l, eta).sqrt();
            }
            if w > 0.0 {
                *branches.entry(lost).or_default().entry(kept).or_default() += amp * w;
            }
        }
    }
    branches
        .into_values()
        .map(|amplitudes| TruncatedState { amplitudes })
        .collect()
}

/// `C(n, k) p^k (1 - p)^(n - k)`.
fn binomial_weight(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Probabilities of the 256 click outcomes; bit `7 - k` of the index is
/// detector `k` in output-mode order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub probs: Vec<f64>,
}

impl OutcomeTable {
    pub fn index(clicks: &[bool; MODES]) -> usize {
        clicks.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
    }

    pub fn get(&self, clicks: &[bool; MODES]) -> f64 {
        self.probs[Self::index(clicks)]
    }

    /// Probability of `ends = (A H, A V, B V, B H)` together with the
    /// station bits `(H left, V left, V right, H right)`.
    pub fn joint(&self, ends: [bool; 4], station: [bool; 4]) -> f64 {
        self.get(&[
            ends[0], ends[1], station[0], station[1], station[2], station[3], ends[2], ends[3],
        ])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Threshold detection of a pure output state: each mode's photons are
/// thinned binomially with that detector's efficiency and a dark count is
/// added independently.
pub fn measure(state: &TruncatedState, detectors: &[DetectorModel<f64>; MODES]) -> OutcomeTable {
    let mut probs = vec![0.0; 1 << MODES];
    for (occ, amp) in &state.amplitudes {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let mut silent = [0.0; MODES];
        for k in 0..MODES {
            let d = &detectors[k];
            let missed_all = binomial_weight(occ[k] as u32, 0, d.eta_eff);
            silent[k] = missed_all * (1.0 - d.dark);
        }
        for (idx, slot) in probs.iter_mut().enumerate() {
            let mut w = p;
            for k in 0..MODES {
                let click = (idx >> (MODES - 1 - k)) & 1 == 1;
                w *= if click { 1.0 - silent[k] } else { silent[k] };
            }
            *slot += w;
        }
    }
    OutcomeTable { probs }
}

/// Detector layout of a single setup in output-mode order.
pub fn detector_layout(detectors: &ChainDetectors<f64>) -> Result<[DetectorModel<f64>; MODES]> {
    if detectors.stations.len() != 1 {
        return Err(Error::OracleDimension(detectors.setups()));
    }
    let s = detectors.stations[0];
    let e = detectors.ends;
    Ok([e[0], e[1], s[0], s[1], s[2], s[3], e[2], e[3]])
}

/// Full outcome table of a single setup.
///
/// `pairs` bounds the pair number per source polarisation; `max_out`
/// optionally drops output occupations above it.
pub fn evolve_and_measure(
    chi: f64,
    angles: &AnalyzerAngles<f64>,
    detectors: &ChainDetectors<f64>,
    pairs: u32,
    max_out: Option<u32>,
) -> Result<OutcomeTable> {
    let layout = detector_layout(detectors)?;
    let state = build_pdc_state(chi, pairs)?;
    Ok(measure(&evolve(&state, angles, max_out), &layout))
}

/// Worst disagreement found by [`compare_closed_form`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub max_relative_deviation: f64,
    /// Setting at which the worst deviation occurred.
    pub worst: String,
    /// Number of conditional probabilities compared.
    pub compared: usize,
}

/// All single-station strings with a click on each side.
pub fn post_selected_station_bits() -> Vec<[bool; 4]> {
    let mut out = Vec::new();
    for code in 0..16u8 {
        let b = [code & 8 != 0, code & 4 != 0, code & 2 != 0, code & 1 != 0];
        if (b[0] || b[1]) && (b[2] || b[3]) {
            out.push(b);
        }
    }
    out
}

/// Compares conditional coincidence probabilities of the closed form and
/// the oracle for every post-selected station string and every end outcome,
/// over the grid `chis x angles x angles`.
///
/// The closed form truncates each detector at `n_max` photons; the oracle
/// is run with `2 n_max` pairs per source polarisation and the same output
/// truncation, so both describe the same truncated state.
pub fn compare_closed_form(
    chis: &[f64],
    angles: &[f64],
    n_max: u32,
    oracle_detectors: &ChainDetectors<f64>,
    closed_form_detectors: &ChainDetectors<f64>,
) -> Result<Comparison> {
    detector_layout(oracle_detectors)?;
    detector_layout(closed_form_detectors)?;
    let strings = post_selected_station_bits();
    let as_chain: Vec<Vec<[bool; 4]>> = strings.iter().map(|s| vec![*s]).collect();
    let mut worst = Comparison {
        max_relative_deviation: 0.0,
        worst: String::from("none"),
        compared: 0,
    };
    for &chi in chis {
        for &a in angles {
            for &d in angles {
                let ang = AnalyzerAngles::new(a, d);
                let oracle = evolve_and_measure(chi, &ang, oracle_detectors, 2 * n_max, Some(n_max))?;
                let closed: Vec<EndTable<f64>> = if ang.is_aligned() {
                    strings
                        .iter()
                        .map(|s| end_table_aligned(chi, closed_form_detectors, &[*s], n_max))
                        .collect::<Result<_>>()?
                } else {
                    end_tables_enumerated(chi, &ang, closed_form_detectors, &as_chain, n_max)?
                };
                for (s, table) in strings.iter().zip(&closed) {
                    let cf_station: f64 = table.iter().flatten().flatten().flatten().sum();
                    let or_station: f64 = end_outcomes().map(|e| oracle.joint(e, *s)).sum();
                    if cf_station <= 0.0 && or_station <= 0.0 {
                        continue;
                    }
                    for e in end_outcomes() {
                        let [ah, av, bv, bh] = e.map(usize::from);
                        let cf = if cf_station > 0.0 {
                            table[ah][av][bv][bh] / cf_station
                        } else {
                            f64::NAN
                        };
                        let or = if or_station > 0.0 {
                            oracle.joint(e, *s) / or_station
                        } else {
                            f64::NAN
                        };
                        let dev = relative_deviation(cf, or);
                        worst.compared += 1;
                        if !(dev <= worst.max_relative_deviation) {
                            worst.max_relative_deviation = dev;
                            worst.worst = format!(
                                "chi={chi} alpha={a} delta={d} station={} ends={} closed={cf:e} oracle={or:e}",
                                bits_str(s),
                                bits_str(&e)
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn end_outcomes() -> impl Iterator<Item = [bool; 4]> {
    (0..16u8).map(|c| [c & 8 != 0, c & 4 != 0, c & 2 != 0, c & 1 != 0])
}

fn bits_str(b: &[bool; 4]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

fn relative_deviation(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if !(a.is_finite() && b.is_finite()) {
        return f64::INFINITY;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::{amplitude, PhotonPattern};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn fig_detectors() -> ChainDetectors<f64> {
        ChainDetectors::uniform(1, DetectorModel::new(0.4, 1e-5).unwrap())
    }

    #[test]
    fn vacuum_and_norm() {
        let s = build_pdc_state(0.0, 3).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.vacuum_amplitude(), Complex64::new(1.0, 0.0));

        let chi = 0.2;
        let s = build_pdc_state(chi, 4).unwrap();
        assert!((s.vacuum_amplitude().norm_sqr() - chi.cosh().powi(-8)).abs() < 1e-15);
        let tail = chi.tanh().powi(2).powi(5);
        assert!(1.0 - s.norm_sqr() <= 4.0 * tail + 1e-15);
        assert!(1.0 - s.norm_sqr() >= 0.0);
    }

    /// exp(M) by scaling and squaring of a Taylor series.
    fn expm(m: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let n = m.len();
        let norm: f64 = m.iter().flatten().map(|z| z.norm()).sum();
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scale = 2f64.powi(-squarings);
        let a: Vec<Vec<Complex64>> = m.iter().map(|r| r.iter().map(|z| z * scale).collect()).collect();
        let mul = |x: &Vec<Vec<Complex64>>, y: &Vec<Vec<Complex64>>| -> Vec<Vec<Complex64>> {
            (0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect())
                .collect()
        };
        let mut result: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| Complex64::new(f64::from(u8::from(i == j)), 0.0))
                    .collect()
            })
            .collect();
        let mut term = result.clone();
        for k in 1..30 {
            term = mul(&term, &a);
            term = term.iter().map(|r| r.iter().map(|z| z / k as f64).collect()).collect();
            for i in 0..n {
                for j in 0..n {
                    result[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..squarings {
            result = mul(&result, &result);
        }
        result
    }

    #[test]
    fn squeezer_matches_generator_exponential() {
        // exp(i chi (a^dag b^dag + a b)) on the |n, n> ladder
        let chi = 0.3;
        let dim = 60;
        let mut g = vec![vec![Complex64::default(); dim]; dim];
        for n in 0..dim - 1 {
            let c = Complex64::new(0.0, chi * (n + 1) as f64);
            g[n + 1][n] = c;
            g[n][n + 1] = c;
        }
        let u = expm(&g);
        let s = build_pdc_state(chi, 6).unwrap();
        // the first source's H polarisation occupies modes 0 and 2
        for n in 0..=6u8 {
            let mut occ = [0u8; MODES];
            occ[0] = n;
            occ[2] = n;
            let single = s.amplitudes[&occ] * chi.cosh().powi(3);
            assert!((single - u[n as usize][0]).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn chi_zero_is_silent() {
        let det = ChainDetectors::uniform(1, DetectorModel::<f64>::perfect());
        let t = evolve_and_measure(0.0, &AnalyzerAngles::new(0.3, 1.0), &det, 3, None).unwrap();
        assert_eq!(t.probs[0], 1.0);
        assert_eq!(t.total(), 1.0);
    }

    #[test]
    fn table_is_complete() {
        let t = evolve_and_measure(0.1, &AnalyzerAngles::new(0.5, 1.7), &fig_detectors(), 6, None).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-12, "{}", t.total() - 1.0);
        assert!(t.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn network_conserves_norm() {
        let s = build_pdc_state(0.25, 3).unwrap();
        let out = evolve(&s, &AnalyzerAngles::new(1.1, 2.3), None);
        assert!((out.norm_sqr() - s.norm_sqr()).abs() < 1e-13);
    }

    #[test]
    fn loss_commutes_with_the_network() {
        let eta = 0.37;
        let chi = 0.3;
        let angles = AnalyzerAngles::new(FRAC_PI_4, 0.9);
        let state = build_pdc_state(chi, 2).unwrap();
        let lossy = ChainDetectors::uniform(1, DetectorModel::new(eta, 0.0).unwrap());
        let at_detectors = measure(&evolve(&state, &angles, None), &detector_layout(&lossy).unwrap());
        let perfect = [DetectorModel::<f64>::perfect(); MODES];
        let mut at_inputs = vec![0.0; 1 << MODES];
        for branch in apply_input_loss(&state, eta) {
            let t = measure(&evolve(&branch, &angles, None), &perfect);
            for (acc, p) in at_inputs.iter_mut().zip(&t.probs) {
                *acc += p;
            }
        }
        for (a, b) in at_detectors.probs.iter().zip(&at_inputs) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn single_pattern_amplitude_matches() {
        // pattern (1,0,0,1) at the station with ends (0,1,1,0)
        let chi = 0.1;
        let p = PhotonPattern {
            stations: vec![[1, 0, 0, 1]],
            ends: [0, 1, 1, 0],
        };
        let cf = amplitude(&p, &AnalyzerAngles::aligned(), chi, 1).unwrap().norm_sqr();
        let out = evolve(&build_pdc_state(chi, 4).unwrap(), &AnalyzerAngles::aligned(), None);
        let occ: Occupation = [0, 1, 1, 0, 0, 1, 1, 0];
        let or = out.amplitudes[&occ].norm_sqr();
        assert!(relative_deviation(cf, or) < 1e-10, "{cf} vs {or}");
    }

    #[test]
    fn amplitudes_match_for_all_small_patterns() {
        for &chi in &[0.05, 0.1, 0.2] {
            for &(a, d) in &[(0.0, 0.0), (FRAC_PI_4, FRAC_PI_2), (FRAC_PI_2, FRAC_PI_4)] {
                let ang = AnalyzerAngles::new(a, d);
                let out = evolve(&build_pdc_state(chi, 4).unwrap(), &ang, Some(2));
                for p in crate::amplitude::enumerate_patterns(1, 2) {
                    let cf = amplitude(&p, &ang, chi, 1).unwrap().norm_sqr();
                    let s = p.stations[0];
                    let occ: Occupation =
                        [p.ends[0], p.ends[1], s[0], s[1], s[2], s[3], p.ends[2], p.ends[3]].map(|x| x as u8);
                    let or = out.amplitudes.get(&occ).map_or(0.0, |z| z.norm_sqr());
                    let scale = cf.max(or);
                    // exact zeros of the closed form appear as rounding residue in the oracle
                    assert!(
                        (cf - or).abs() <= 1e-10 * scale || (cf - or).abs() < 1e-28,
                        "{p:?} chi={chi} a={a} d={d}: {cf:e} vs {or:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_form_agrees() {
        let det = fig_detectors();
        let cmp = compare_closed_form(&[0.05, 0.1], &[0.0, FRAC_PI_4, FRAC_PI_2], 2, &det, &det).unwrap();
        assert!(cmp.max_relative_deviation < 1e-8, "{cmp:?}");
        assert_eq!(cmp.compared, 2 * 9 * 9 * 16);
    }

    #[test]
    fn dimension_error() {
        let det = ChainDetectors::uniform(2, DetectorModel::<f64>::perfect());
        assert!(matches!(
            evolve_and_measure(0.1, &AnalyzerAngles::aligned(), &det, 2, None),
            Err(Error::OracleDimension(2))
        ));
    }
}
