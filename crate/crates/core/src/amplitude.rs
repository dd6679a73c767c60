//! Closed-form amplitude of an ideal photon-number pattern at the `8N`
//! detectors of the swapping chain.
//!
//! Layout conventions used throughout the crate:
//!
//! * Sources are numbered `1..=2N` from A towards B. Station `m` sits between
//!   source `m` and source `m + 1`; A receives the left-going beam of source 1
//!   and B the right-going beam of source `2N`.
//! * Each station has four counters ordered `(i, j, k, l)` = (H left, V left,
//!   V right, H right). The beam from the left-hand source enters the beam
//!   splitter as `x† -> (L† - R†)/√2`, the beam from the right-hand source as
//!   `y† -> (L† + R†)/√2`.
//! * End counters are ordered `(i', j', k', l')` = (A H, A V, B V, B H). Each
//!   end party rotates polarisation before its PBS with
//!   `H† -> cos(θ/2) H† + i sin(θ/2) V†`, `V† -> i sin(θ/2) H† + cos(θ/2) V†`.
//!
//! Given the pattern, photon-number conservation fixes the total pair number
//! of every source; only the H/V split of source 1 remains free, so the
//! amplitude is a single finite sum of products of beam-splitter kernels
//! ([`omega`]) and rotator kernels.

use std::f64::consts::LN_2;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial_signed, ln_binomial, ln_factorial};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Largest per-detector photon cutoff accepted by the evaluators.
pub const MAX_CUTOFF: u32 = 24;

/// Default per-detector photon cutoff.
pub const DEFAULT_CUTOFF: u32 = 3;

/// Ideal photon counts at every detector of the chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhotonPattern {
    /// `(i, j, k, l)` per station, ordered from A to B.
    pub stations: Vec<[u32; 4]>,
    /// `(i', j', k', l')`.
    pub ends: [u32; 4],
}

impl PhotonPattern {
    pub fn vacuum(stations: u32) -> Self {
        Self {
            stations: vec![[0; 4]; 2 * stations as usize - 1],
            ends: [0; 4],
        }
    }

    /// Number of swapping setups this pattern describes.
    pub fn setups(&self) -> u32 {
        (self.stations.len() as u32).div_ceil(2)
    }

    pub fn max_entry(&self) -> u32 {
        self.stations
            .iter()
            .flatten()
            .chain(self.ends.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }

    pub fn total_photons(&self) -> u32 {
        self.stations.iter().flatten().sum::<u32>() + self.ends.iter().sum::<u32>()
    }

    fn check_shape(&self, stations: u32) -> Result<()> {
        if stations == 0 || self.stations.len() != 2 * stations as usize - 1 {
            return Err(Error::Shape {
                stations,
                reason: format!(
                    "expected {} station tuples, got {}",
                    2 * stations.max(1) - 1,
                    self.stations.len()
                ),
            });
        }
        Ok(())
    }

    /// Total pair number of each source implied by photon conservation, or
    /// `None` when the pattern violates conservation (zero amplitude).
    pub fn source_pairs(&self) -> Option<Vec<u32>> {
        let mut pairs = Vec::with_capacity(self.stations.len() + 1);
        let mut current = self.ends[0] + self.ends[1];
        pairs.push(current);
        for st in &self.stations {
            let total = st.iter().sum::<u32>();
            current = total.checked_sub(current)?;
            pairs.push(current);
        }
        (current == self.ends[2] + self.ends[3]).then_some(pairs)
    }
}

/// Polariser-rotator angles of A (`alpha_t`) and B (`delta_t`), radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerAngles<T> {
    pub alpha_t: T,
    pub delta_t: T,
}

impl<T: Real> AnalyzerAngles<T> {
    /// Angles reduced into `[0, 2π)`.
    pub fn new(alpha_t: T, delta_t: T) -> Self {
        let two_pi = T::PI() + T::PI();
        let reduce = |a: T| {
            let r = a % two_pi;
            if r < T::zero() {
                r + two_pi
            } else {
                r
            }
        };
        Self {
            alpha_t: reduce(alpha_t),
            delta_t: reduce(delta_t),
        }
    }

    /// Both analysers in the H/V basis.
    pub fn aligned() -> Self {
        Self {
            alpha_t: T::zero(),
            delta_t: T::zero(),
        }
    }

    pub fn is_aligned(&self) -> bool {
        self.alpha_t == T::zero() && self.delta_t == T::zero()
    }
}

pub(crate) fn check_cutoff(n_max: u32) -> Result<()> {
    if n_max > MAX_CUTOFF {
        return Err(Error::CutoffTooLarge {
            n_max,
            limit: MAX_CUTOFF,
        });
    }
    Ok(())
}

/// Interference sum of a balanced beam splitter.
///
/// `sum_g C(mu+lambda, g) C(i_n + l_n - mu - lambda, i_n - g) (-1)^(mu+lambda-g)`:
/// the signed number of ways `mu + lambda` photons from one input and the
/// remaining `i_n + l_n - mu - lambda` from the other end up as `i_n`
/// photons in the left output and `l_n` in the right.
pub fn omega(mu: u32, lambda: u32, i_n: u32, l_n: u32) -> Result<i128> {
    let from_first = i64::from(mu) + i64::from(lambda);
    let from_second = i64::from(i_n) + i64::from(l_n) - from_first;
    let mut acc: i128 = 0;
    for g in 0..=from_first {
        let a = binomial_signed(from_first, g)?;
        let b = binomial_signed(from_second, i64::from(i_n) - g)?;
        if a == 0 || b == 0 {
            continue;
        }
        let term =
            i128::try_from(a.checked_mul(b).ok_or(Error::Overflow("omega"))?).map_err(|_| Error::Overflow("omega"))?;
        if (from_first - g) % 2 == 0 {
            acc = acc.checked_add(term).ok_or(Error::Overflow("omega"))?;
        } else {
            acc = acc.checked_sub(term).ok_or(Error::Overflow("omega"))?;
        }
    }
    Ok(acc)
}

/// `<out_l, out_r | U_BS | x, y>` for `x` photons from the left-hand source
/// and `y` from the right-hand source.
pub fn beam_splitter_element<T: Real>(x: u32, y: u32, out_l: u32, out_r: u32) -> Result<T> {
    if x + y != out_l + out_r {
        return Ok(T::zero());
    }
    let kernel = omega(x, 0, out_l, out_r)?;
    if kernel == 0 {
        return Ok(T::zero());
    }
    let ln_norm =
        0.5 * (ln_factorial(out_l) + ln_factorial(out_r) - ln_factorial(x) - ln_factorial(y) - f64::from(x + y) * LN_2);
    let magnitude = (kernel.unsigned_abs() as f64).ln() + ln_norm;
    let value = lit::<T>(magnitude.exp());
    Ok(if kernel < 0 { -value } else { value })
}

/// `<out_h, out_v | R(theta) | h, v>` for the end-party polarisation rotator.
pub fn rotator_element<T: Real>(theta: T, h: u32, v: u32, out_h: u32, out_v: u32) -> Complex<T> {
    if h + v != out_h + out_v {
        return Complex::new(T::zero(), T::zero());
    }
    let half = theta / lit(2.0);
    let (c, s) = (half.cos(), half.sin());
    // (i s)^(h + out_h - 2a) = i^(h + out_h) (-1)^a s^(h + out_h - 2a)
    let a_min = out_h.saturating_sub(v);
    let a_max = h.min(out_h);
    let mut sum = T::zero();
    for a in a_min..=a_max {
        let ln_c = ln_binomial(h, a) + ln_binomial(v, out_h - a);
        let mut term = lit::<T>(ln_c.exp()) * c.powi((v + 2 * a - out_h) as i32) * s.powi((h + out_h - 2 * a) as i32);
        if a % 2 == 1 {
            term = -term;
        }
        sum = sum + term;
    }
    let ln_norm = 0.5 * (ln_factorial(out_h) + ln_factorial(out_v) - ln_factorial(h) - ln_factorial(v));
    let real = sum * lit(ln_norm.exp());
    match (h + out_h) % 4 {
        0 => Complex::new(real, T::zero()),
        1 => Complex::new(T::zero(), real),
        2 => Complex::new(-real, T::zero()),
        _ => Complex::new(T::zero(), -real),
    }
}

/// Joint amplitude of `pattern` for a chain of `stations` setups with
/// squeezing `chi` and analyser `angles`.
///
/// Zero whenever photon conservation fails.
pub fn amplitude<T: Real>(
    pattern: &PhotonPattern,
    angles: &AnalyzerAngles<T>,
    chi: T,
    stations: u32,
) -> Result<Complex<T>> {
    pattern.check_shape(stations)?;
    check_cutoff(pattern.max_entry().div_ceil(2))?;
    let zero = Complex::new(T::zero(), T::zero());
    let pairs = match pattern.source_pairs() {
        Some(p) => p,
        None => return Ok(zero),
    };
    let total_pairs: u32 = pairs.iter().sum();

    let [a_h, a_v, b_v, b_h] = pattern.ends;
    let n_first = pairs[0];
    let mut sum = zero;
    'split: for h_first in 0..=n_first {
        let mut h_pairs = h_first;
        let mut v_pairs = n_first - h_first;
        let mut term = rotator_element(angles.alpha_t, h_pairs, v_pairs, a_h, a_v);
        if term.re == T::zero() && term.im == T::zero() {
            continue;
        }
        for &[i, j, k, l] in &pattern.stations {
            let (next_h, next_v) = match ((i + l).checked_sub(h_pairs), (j + k).checked_sub(v_pairs)) {
                (Some(nh), Some(nv)) => (nh, nv),
                _ => continue 'split,
            };
            let kernel =
                beam_splitter_element::<T>(h_pairs, next_h, i, l)? * beam_splitter_element::<T>(v_pairs, next_v, j, k)?;
            if kernel == T::zero() {
                continue 'split;
            }
            term = term.scale(kernel);
            h_pairs = next_h;
            v_pairs = next_v;
        }
        term = term * rotator_element(angles.delta_t, h_pairs, v_pairs, b_h, b_v);
        sum = sum + term;
    }

    let prefactor = chi.tanh().powi(total_pairs as i32) / chi.cosh().powi(4 * stations as i32);
    Ok(sum.scale(prefactor))
}

/// Visits every pattern with all entries `<= n_max` whose photon numbers
/// are conserved along the chain, in lexicographic order of
/// `(ends A, station 1, .., station 2N-1, ends B)`.
///
/// Source pair numbers are propagated from A towards B so that the counts at
/// B are solved rather than searched.
pub fn for_each_pattern<F: FnMut(&PhotonPattern)>(stations: u32, n_max: u32, mut visit: F) {
    assert!(stations >= 1, "at least one swapping setup");
    let mut pattern = PhotonPattern::vacuum(stations);
    for a_h in 0..=n_max {
        for a_v in 0..=n_max {
            pattern.ends[0] = a_h;
            pattern.ends[1] = a_v;
            descend(&mut pattern, 0, a_h + a_v, n_max, &mut visit);
        }
    }
}

fn descend<F: FnMut(&PhotonPattern)>(
    pattern: &mut PhotonPattern,
    station: usize,
    incoming: u32,
    n_max: u32,
    visit: &mut F,
) {
    if station == pattern.stations.len() {
        // remaining pairs of the last source must land at B
        if incoming > 2 * n_max {
            return;
        }
        for b_v in incoming.saturating_sub(n_max)..=incoming.min(n_max) {
            pattern.ends[2] = b_v;
            pattern.ends[3] = incoming - b_v;
            visit(pattern);
        }
        return;
    }
    let last = station + 1 == pattern.stations.len();
    // the next source feeds one station side and, later, B or another station
    let cap = if last { 2 * n_max } else { 4 * n_max };
    for i in 0..=n_max {
        for j in 0..=n_max {
            for k in 0..=n_max {
                let partial = i + j + k;
                // total = partial + l must be at least `incoming`
                let l_min = incoming.saturating_sub(partial);
                if l_min > n_max {
                    continue;
                }
                for l in l_min..=n_max {
                    let outgoing = partial + l - incoming;
                    if outgoing > cap {
                        break;
                    }
                    pattern.stations[station] = [i, j, k, l];
                    descend(pattern, station + 1, outgoing, n_max, visit);
                }
            }
        }
    }
    pattern.stations[station] = [0; 4];
}

/// All conserving patterns with entries `<= n_max`.
pub fn enumerate_patterns(stations: u32, n_max: u32) -> Vec<PhotonPattern> {
    let mut out = Vec::new();
    for_each_pattern(stations, n_max, |p| out.push(p.clone()));
    out
}

/// Thermal tail bound on the probability discarded by the cutoff: each of
/// the `4N` two-mode squeezers exceeds `n_max` pairs with probability
/// `tanh(chi)^(2 (n_max + 1))`.
pub fn truncation_tail<T: Real>(chi: T, stations: u32, n_max: u32) -> T {
    let per_mode = chi.tanh().powi(2 * (n_max as i32 + 1));
    count::<T>(4 * stations) * per_mode
}

/// Probability mass of ideal patterns retained by the cutoff.
pub fn retained_probability<T: Real>(stations: u32, n_max: u32, chi: T, angles: &AnalyzerAngles<T>) -> Result<T> {
    check_cutoff(n_max)?;
    let mut total = T::zero();
    let mut failure = None;
    for_each_pattern(stations, n_max, |p| {
        if failure.is_some() {
            return;
        }
        match amplitude(p, angles, chi, stations) {
            Ok(a) => total = total + a.norm_sqr(),
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}
