//! Threshold-detector click statistics, coincidence probabilities,
//! visibility and QBER.
//!
//! Two evaluators share the same pattern distribution (ideal amplitudes
//! truncated at `n_max` photons per detector):
//!
//! * aligned analysers (both rotators at 0) factorise into independent H and
//!   V chains, evaluated by a transfer recursion over source pair numbers;
//! * arbitrary analyser angles go through [`crate::amplitude::for_each_pattern`].
//!
//! Both agree to rounding at aligned angles, which the tests check.

use serde::{Deserialize, Serialize};

use crate::amplitude::{
    amplitude, beam_splitter_element, check_cutoff, for_each_pattern, truncation_tail, AnalyzerAngles, PhotonPattern,
};
use crate::error::{Error, Result};
use crate::resources::{prob_bit, DetectorModel, ResourceParams, Topology};
use crate::scalar::{lit, Real};

/// Click / no-click record of every detector in the chain, in the same
/// layout as [`PhotonPattern`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClickOutcome {
    pub stations: Vec<[bool; 4]>,
    pub ends: [bool; 4],
}

impl ClickOutcome {
    /// At least one click on each side of every station.
    pub fn is_post_selected(&self) -> bool {
        self.stations.iter().all(station_passes)
    }

    /// Parses strings like `"1010"` (station tuples separated by `/`) and
    /// the ends as `"10/01"` for `(A H, A V) / (B V, B H)`.
    pub fn parse(stations: &str, ends: &str) -> Result<Self> {
        let bits = |s: &str| -> Result<Vec<bool>> {
            s.chars()
                .filter(|c| *c != '/')
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Error::InvalidParameter {
                        name: "outcome",
                        reason: format!("unexpected character {other:?}"),
                    }),
                })
                .collect()
        };
        let st = bits(stations)?;
        let en = bits(ends)?;
        if st.is_empty() || st.len() % 4 != 0 || en.len() != 4 {
            return Err(Error::InvalidParameter {
                name: "outcome",
                reason: "station bits must come in groups of four and ends must have four bits".into(),
            });
        }
        Ok(Self {
            stations: st.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
            ends: [en[0], en[1], en[2], en[3]],
        })
    }
}

fn station_passes(s: &[bool; 4]) -> bool {
    (s[0] || s[1]) && (s[2] || s[3])
}

/// The two station strings counted by the protocol: `(H left, V right)` and
/// `(V left, H right)`, i.e. one click of each polarisation on opposite
/// sides of the beam splitter.
pub const STATION_STRINGS: [[bool; 4]; 2] = [[true, false, true, false], [false, true, false, true]];

/// Treatment of a double click (`11`) on an end party's detector pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    /// Double clicks are dropped.
    #[default]
    Discard,
    /// Double clicks are assigned to either bit value with probability 1/2.
    Squash,
}

/// Detector models for every site of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDetectors<T> {
    pub stations: Vec<[DetectorModel<T>; 4]>,
    pub ends: [DetectorModel<T>; 4],
}

impl<T: Real> ChainDetectors<T> {
    pub fn uniform(stations: u32, det: DetectorModel<T>) -> Self {
        Self {
            stations: vec![[det; 4]; 2 * stations as usize - 1],
            ends: [det; 4],
        }
    }

    pub fn from_params(params: &ResourceParams<T>, topo: &Topology<T>) -> Result<Self> {
        Ok(Self::uniform(topo.stations, params.detector(topo)?))
    }

    pub fn setups(&self) -> u32 {
        (self.stations.len() as u32).div_ceil(2)
    }
}

/// Probability mass of the two end-outcome classes over all post-selected
/// station outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityResult<T> {
    /// Anti-correlated end strings (A sees H and B sees V, or the reverse).
    pub max_count: T,
    /// Correlated end strings.
    pub min_count: T,
    pub visibility: T,
    /// Probability of the post-selected station strings.
    pub station_probability: T,
    /// Upper estimate of the probability mass lost to the photon cutoff.
    pub truncation_bound: T,
}

impl<T: Real> VisibilityResult<T> {
    pub fn qber(&self) -> T {
        qber_from_visibility(self.visibility)
    }
}

/// `(1 - V) / 2`.
pub fn qber_from_visibility<T: Real>(v: T) -> T {
    (T::one() - v) / lit(2.0)
}

/// Joint probabilities of the sixteen end outcomes, indexed
/// `[A H][A V][B V][B H]`.
pub type EndTable<T> = [[[[T; 2]; 2]; 2]; 2];

fn zero_table<T: Real>() -> EndTable<T> {
    [[[[T::zero(); 2]; 2]; 2]; 2]
}

fn table_sum<T: Real>(t: &EndTable<T>) -> T {
    t.iter().flatten().flatten().flatten().copied().sum()
}

/// Probability that `det`-type detectors produce `outcome` given the ideal
/// photon counts of `pattern`.
pub fn click_likelihood<T: Real>(
    outcome: &ClickOutcome,
    pattern: &PhotonPattern,
    detectors: &ChainDetectors<T>,
) -> Result<T> {
    let n = detectors.stations.len();
    if outcome.stations.len() != n || pattern.stations.len() != n {
        return Err(Error::Shape {
            stations: detectors.setups(),
            reason: "outcome, pattern and detectors disagree on the number of stations".into(),
        });
    }
    let mut p = T::one();
    for ((bits, counts), dets) in outcome.stations.iter().zip(&pattern.stations).zip(&detectors.stations) {
        for d in 0..4 {
            p = p * prob_bit(bits[d], counts[d], &dets[d]);
        }
    }
    for d in 0..4 {
        p = p * prob_bit(outcome.ends[d], pattern.ends[d], &detectors.ends[d]);
    }
    Ok(p)
}

fn station_likelihood<T: Real>(bits: &[[bool; 4]], pattern: &PhotonPattern, detectors: &ChainDetectors<T>) -> T {
    let mut p = T::one();
    for ((b, counts), dets) in bits.iter().zip(&pattern.stations).zip(&detectors.stations) {
        for d in 0..4 {
            p = p * prob_bit(b[d], counts[d], &dets[d]);
        }
    }
    p
}

fn end_likelihoods<T: Real>(pattern: &PhotonPattern, detectors: &ChainDetectors<T>) -> [[T; 2]; 4] {
    let mut out = [[T::zero(); 2]; 4];
    for d in 0..4 {
        out[d][0] = prob_bit(false, pattern.ends[d], &detectors.ends[d]);
        out[d][1] = prob_bit(true, pattern.ends[d], &detectors.ends[d]);
    }
    out
}

/// Per-polarisation transfer recursion for aligned analysers.
///
/// For one polarisation the chain is a line of two-mode squeezers whose
/// pair numbers `n_1 .. n_2N` meet pairwise on beam splitters; the click
/// probability of that polarisation's detectors is a matrix product over
/// the pair numbers.
struct PolarizationChain<T> {
    n_max: usize,
    /// `|bs(x, y -> l, r)|^2` for `x, y <= 2 n_max`, `l, r <= n_max`.
    bs_sq: Vec<T>,
    /// `t^(2n) / cosh^2(chi)` for `n <= 2 n_max`.
    weight: Vec<T>,
}

impl<T: Real> PolarizationChain<T> {
    fn new(chi: T, n_max: u32) -> Result<Self> {
        let nm = n_max as usize;
        let side = 2 * nm + 1;
        let out = nm + 1;
        let mut bs_sq = vec![T::zero(); side * side * out];
        for x in 0..side {
            for y in 0..side {
                for l in 0..out {
                    let total = x + y;
                    if total < l || total - l > nm {
                        continue;
                    }
                    let r = total - l;
                    let a: T = beam_splitter_element(x as u32, y as u32, l as u32, r as u32)?;
                    bs_sq[(x * side + y) * out + l] = a * a;
                }
            }
        }
        let t2 = chi.tanh() * chi.tanh();
        let inv_c2 = T::one() / (chi.cosh() * chi.cosh());
        let weight = (0..side).map(|n| inv_c2 * t2.powi(n as i32)).collect();
        Ok(Self {
            n_max: nm,
            bs_sq,
            weight,
        })
    }

    fn bs_sq(&self, x: usize, y: usize, l: usize) -> T {
        let side = 2 * self.n_max + 1;
        self.bs_sq[(x * side + y) * (self.n_max + 1) + l]
    }

    /// 2x2 table over (A bit, B bit) for this polarisation given the bits of
    /// its station detectors `(left, right)`.
    fn table(
        &self,
        station_bits: &[(bool, bool)],
        station_dets: &[(DetectorModel<T>, DetectorModel<T>)],
        det_a: &DetectorModel<T>,
        det_b: &DetectorModel<T>,
    ) -> [[T; 2]; 2] {
        let nm = self.n_max;
        let side = 2 * nm + 1;
        let mut out = [[T::zero(); 2]; 2];
        for a_bit in 0..2 {
            let mut v = vec![T::zero(); side];
            for (n, slot) in v.iter_mut().enumerate().take(nm + 1) {
                *slot = self.weight[n] * prob_bit(a_bit == 1, n as u32, det_a);
            }
            for (&(bl, br), (dl, dr)) in station_bits.iter().zip(station_dets) {
                let like_l: Vec<T> = (0..=nm).map(|c| prob_bit(bl, c as u32, dl)).collect();
                let like_r: Vec<T> = (0..=nm).map(|c| prob_bit(br, c as u32, dr)).collect();
                let mut next = vec![T::zero(); side];
                for (n_next, slot) in next.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for (n, &vn) in v.iter().enumerate() {
                        if vn == T::zero() {
                            continue;
                        }
                        let total = n + n_next;
                        let l_lo = total.saturating_sub(nm);
                        let l_hi = total.min(nm);
                        if l_lo > l_hi {
                            continue;
                        }
                        let mut inner = T::zero();
                        for l in l_lo..=l_hi {
                            inner = inner + self.bs_sq(n, n_next, l) * like_l[l] * like_r[total - l];
                        }
                        acc = acc + vn * inner;
                    }
                    *slot = acc * self.weight[n_next];
                }
                v = next;
            }
            for b_bit in 0..2 {
                out[a_bit][b_bit] = v
                    .iter()
                    .take(nm + 1)
                    .enumerate()
                    .map(|(n, &vn)| vn * prob_bit(b_bit == 1, n as u32, det_b))
                    .sum();
            }
        }
        out
    }
}

fn check_station_bits(bits: &[[bool; 4]], detectors: &ChainDetectors<impl Real>) -> Result<()> {
    if bits.len() != detectors.stations.len() {
        return Err(Error::Shape {
            stations: detectors.setups(),
            reason: format!(
                "expected {} station tuples, got {}",
                detectors.stations.len(),
                bits.len()
            ),
        });
    }
    Ok(())
}

/// Joint end-outcome table for the station string `station_bits` with both
/// analysers in the H/V basis.
pub fn end_table_aligned<T: Real>(
    chi: T,
    detectors: &ChainDetectors<T>,
    station_bits: &[[bool; 4]],
    n_max: u32,
) -> Result<EndTable<T>> {
    check_cutoff(n_max)?;
    check_station_bits(station_bits, detectors)?;
    let chain = PolarizationChain::new(chi, n_max)?;
    Ok(aligned_table(&chain, detectors, station_bits))
}

fn aligned_table<T: Real>(
    chain: &PolarizationChain<T>,
    detectors: &ChainDetectors<T>,
    station_bits: &[[bool; 4]],
) -> EndTable<T> {
    let h_bits: Vec<_> = station_bits.iter().map(|b| (b[0], b[3])).collect();
    let v_bits: Vec<_> = station_bits.iter().map(|b| (b[1], b[2])).collect();
    let h_dets: Vec<_> = detectors.stations.iter().map(|d| (d[0], d[3])).collect();
    let v_dets: Vec<_> = detectors.stations.iter().map(|d| (d[1], d[2])).collect();
    let h = chain.table(&h_bits, &h_dets, &detectors.ends[0], &detectors.ends[3]);
    let v = chain.table(&v_bits, &v_dets, &detectors.ends[1], &detectors.ends[2]);
    let mut out = zero_table();
    for ah in 0..2 {
        for av in 0..2 {
            for bv in 0..2 {
                for bh in 0..2 {
                    out[ah][av][bv][bh] = h[ah][bh] * v[av][bv];
                }
            }
        }
    }
    out
}

/// Joint end-outcome tables for several station strings at arbitrary
/// analyser angles, from one pass over the enumerated patterns.
pub fn end_tables_enumerated<T: Real>(
    chi: T,
    angles: &AnalyzerAngles<T>,
    detectors: &ChainDetectors<T>,
    station_strings: &[Vec<[bool; 4]>],
    n_max: u32,
) -> Result<Vec<EndTable<T>>> {
    check_cutoff(n_max)?;
    for s in station_strings {
        check_station_bits(s, detectors)?;
    }
    let n = detectors.setups();
    let mut tables = vec![zero_table(); station_strings.len()];
    let mut failure = None;
    for_each_pattern(n, n_max, |pattern| {
        if failure.is_some() {
            return;
        }
        let prior = match amplitude(pattern, angles, chi, n) {
            Ok(a) => a.norm_sqr(),
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        if prior == T::zero() {
            return;
        }
        let ends = end_likelihoods(pattern, detectors);
        for (table, bits) in tables.iter_mut().zip(station_strings) {
            let w = prior * station_likelihood(bits, pattern, detectors);
            if w == T::zero() {
                continue;
            }
            for ah in 0..2 {
                for av in 0..2 {
                    for bv in 0..2 {
                        for bh in 0..2 {
                            table[ah][av][bv][bh] =
                                table[ah][av][bv][bh] + w * ends[0][ah] * ends[1][av] * ends[2][bv] * ends[3][bh];
                        }
                    }
                }
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(tables),
    }
}

/// Probability of the end clicks `end_outcome` conditioned on the station
/// clicks `station_outcome`.
pub fn coincidence_prob<T: Real>(
    end_outcome: [bool; 4],
    station_outcome: &[[bool; 4]],
    params: &ResourceParams<T>,
    topo: &Topology<T>,
    angles: &AnalyzerAngles<T>,
    n_max: u32,
) -> Result<T> {
    let detectors = ChainDetectors::from_params(params, topo)?;
    coincidence_prob_with(end_outcome, station_outcome, params.chi, &detectors, angles, n_max)
}

/// [`coincidence_prob`] with explicit per-site detectors.
pub fn coincidence_prob_with<T: Real>(
    end_outcome: [bool; 4],
    station_outcome: &[[bool; 4]],
    chi: T,
    detectors: &ChainDetectors<T>,
    angles: &AnalyzerAngles<T>,
    n_max: u32,
) -> Result<T> {
    check_station_bits(station_outcome, detectors)?;
    if !station_outcome.iter().all(station_passes) {
        return Err(Error::NotPostSelected(format!("{station_outcome:?}")));
    }
    let table = if angles.is_aligned() {
        end_table_aligned(chi, detectors, station_outcome, n_max)?
    } else {
        end_tables_enumerated(chi, angles, detectors, &[station_outcome.to_vec()], n_max)?
            .pop()
            .expect("one table per station string")
    };
    let station = table_sum(&table);
    if station <= T::zero() {
        return Err(Error::ZeroProbability { n_max });
    }
    let [ah, av, bv, bh] = end_outcome.map(usize::from);
    Ok(table[ah][av][bv][bh] / station)
}

/// Every station string in which each station shows one of
/// [`STATION_STRINGS`], in lexicographic order of the choices.
pub fn post_selected_strings(stations: u32) -> Vec<Vec<[bool; 4]>> {
    let m = 2 * stations as usize - 1;
    (0..1usize << m)
        .map(|code| (0..m).map(|s| STATION_STRINGS[(code >> (m - 1 - s)) & 1]).collect())
        .collect()
}

/// Weight with which an end party's detector pair reports bit "first
/// detector" and "second detector" after the counting rule.
fn assignment<T: Real>(first: usize, second: usize, mode: CountingMode) -> (T, T) {
    match (first, second, mode) {
        (1, 0, _) => (T::one(), T::zero()),
        (0, 1, _) => (T::zero(), T::one()),
        (1, 1, CountingMode::Squash) => (lit(0.5), lit(0.5)),
        _ => (T::zero(), T::zero()),
    }
}

/// Splits an end table into (anti-correlated, correlated) mass.
pub fn classify<T: Real>(table: &EndTable<T>, mode: CountingMode) -> (T, T) {
    let (mut max, mut min) = (T::zero(), T::zero());
    for ah in 0..2 {
        for av in 0..2 {
            let (a_is_h, a_is_v) = assignment::<T>(ah, av, mode);
            if a_is_h == T::zero() && a_is_v == T::zero() {
                continue;
            }
            for bv in 0..2 {
                for bh in 0..2 {
                    let (b_is_h, b_is_v) = assignment::<T>(bh, bv, mode);
                    let p = table[ah][av][bv][bh];
                    max = max + p * (a_is_h * b_is_v + a_is_v * b_is_h);
                    min = min + p * (a_is_h * b_is_h + a_is_v * b_is_v);
                }
            }
        }
    }
    (max, min)
}

fn assemble<T: Real>(
    tables: &[EndTable<T>],
    mode: CountingMode,
    chi: T,
    stations: u32,
    n_max: u32,
) -> Result<VisibilityResult<T>> {
    let (mut max, mut min, mut station) = (T::zero(), T::zero(), T::zero());
    for t in tables {
        let (a, b) = classify(t, mode);
        max = max + a;
        min = min + b;
        station = station + table_sum(t);
    }
    let total = max + min;
    if !(total > T::zero()) {
        return Err(Error::VisibilityUndefined);
    }
    Ok(VisibilityResult {
        max_count: max,
        min_count: min,
        visibility: (max - min) / total,
        station_probability: station,
        truncation_bound: truncation_tail(chi, stations, n_max),
    })
}

/// Visibility with both analysers in the H/V basis.
pub fn visibility<T: Real>(
    params: &ResourceParams<T>,
    topo: &Topology<T>,
    n_max: u32,
    mode: CountingMode,
) -> Result<VisibilityResult<T>> {
    let detectors = ChainDetectors::from_params(params, topo)?;
    visibility_with(params.chi, &detectors, n_max, mode)
}

/// [`visibility`] with explicit per-site detectors.
pub fn visibility_with<T: Real>(
    chi: T,
    detectors: &ChainDetectors<T>,
    n_max: u32,
    mode: CountingMode,
) -> Result<VisibilityResult<T>> {
    check_cutoff(n_max)?;
    let chain = PolarizationChain::new(chi, n_max)?;
    let n = detectors.setups();
    let tables: Vec<_> = post_selected_strings(n)
        .iter()
        .map(|bits| aligned_table(&chain, detectors, bits))
        .collect();
    assemble(&tables, mode, chi, n, n_max)
}

/// Visibility at arbitrary analyser angles by explicit pattern enumeration.
///
/// Cost grows as `(n_max + 1)^(8N - 2N)`; intended for one or two setups.
pub fn visibility_enumerated<T: Real>(
    chi: T,
    detectors: &ChainDetectors<T>,
    angles: &AnalyzerAngles<T>,
    n_max: u32,
    mode: CountingMode,
) -> Result<VisibilityResult<T>> {
    let n = detectors.setups();
    let strings = post_selected_strings(n);
    let tables = end_tables_enumerated(chi, angles, detectors, &strings, n_max)?;
    assemble(&tables, mode, chi, n, n_max)
}

/// `(1 - V) / 2` with aligned analysers.
pub fn qber<T: Real>(params: &ResourceParams<T>, topo: &Topology<T>, n_max: u32, mode: CountingMode) -> Result<T> {
    Ok(visibility(params, topo, n_max, mode)?.qber())
}
