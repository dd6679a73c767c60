//! Closed-form rate quantities: binary entropy, Shor-Preskill factor,
//! sifted and ideal rates, the repeaterless bound and the cutoff QBER.

use serde::{Deserialize, Serialize};

use crate::coincidence::{qber, CountingMode};
use crate::error::{Error, Result};
use crate::resources::{ResourceParams, Topology};
use crate::scalar::{count, lit, Real};

/// Secret key rate and its factors, all per source pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown<T> {
    pub r_sif: T,
    /// Shor-Preskill factor before clipping (may be negative).
    pub r_sp: T,
    /// `r_sif * max(r_sp, 0)`.
    pub r: T,
    pub q: T,
    /// Set when the QBER is at or above the cutoff and `r` was clipped.
    pub infeasible: bool,
}

impl<T: Real> RateBreakdown<T> {
    /// Rate in bits per second at source repetition rate `rep_rate_hz`.
    pub fn bits_per_second(&self, rep_rate_hz: T) -> T {
        self.r * rep_rate_hz
    }
}

/// Binary Shannon entropy in bits.
pub fn shannon_entropy<T: Real>(q: T) -> Result<T> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::Domain {
            function: "shannon_entropy",
            value: q.to_f64().unwrap_or(f64::NAN),
        });
    }
    let term = |p: T| if p > T::zero() { -p * p.log2() } else { T::zero() };
    Ok(term(q) + term(T::one() - q))
}

/// `1 - kappa H2(q) - H2(q)`.
pub fn shor_preskill<T: Real>(q: T, kappa: T) -> Result<T> {
    if !(q <= lit(0.5)) {
        return Err(Error::Domain {
            function: "shor_preskill",
            value: q.to_f64().unwrap_or(f64::NAN),
        });
    }
    if !(kappa >= T::one()) {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: "must be at least 1".into(),
        });
    }
    let h = shannon_entropy(q)?;
    Ok(T::one() - kappa * h - h)
}

/// QBER at which the Shor-Preskill factor vanishes for reconciliation
/// efficiency `kappa`.
pub fn qber_cutoff<T: Real>(kappa: T) -> Result<T> {
    let (mut lo, mut hi) = (T::zero(), lit::<T>(0.5));
    // the factor is 1 at q = 0 and -kappa at q = 1/2
    let tol = lit::<T>(1e-12).max(T::epsilon() * lit(4.0));
    while hi - lo > tol {
        let mid = (lo + hi) / lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if shor_preskill(mid, kappa)? > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / lit(2.0))
}

/// Probability per pulse that a sifted key bit is produced.
///
/// Product of the basis-sifting factor 1/2, pair emission `chi^(4N)` from
/// `2N` sources, channel transmission over the full length, the
/// `2N - 1` Bell measurements each succeeding with `eta^2 / 2` and the two
/// end detections `eta^2`.
pub fn sifted_rate<T: Real>(chi: T, eta: T, stations: u32, ell: T, alpha: T) -> T {
    let half = lit::<T>(0.5);
    let pairs = chi.powi(4 * stations as i32);
    let channel = transmittance(ell, alpha);
    let swaps = (eta * eta * half).powi(2 * stations as i32 - 1);
    half * pairs * channel * swaps * eta * eta
}

/// The four factors of [`sifted_rate`] after the sifting 1/2:
/// `(chi^(4N), transmittance, (eta^2/2)^(2N-1), eta^2)`.
pub fn sifted_rate_factors<T: Real>(chi: T, eta: T, stations: u32, ell: T, alpha: T) -> [T; 4] {
    let segments = 4 * stations;
    let per_segment = lit::<T>(10.0).powf(-alpha * ell / (count::<T>(10) * count::<T>(segments)));
    [
        chi.powi(segments as i32),
        per_segment.powi(segments as i32),
        (eta * eta / lit(2.0)).powi(2 * stations as i32 - 1),
        eta * eta,
    ]
}

fn transmittance<T: Real>(ell: T, alpha: T) -> T {
    lit::<T>(10.0).powf(-alpha * ell / lit(10.0))
}

/// Rate of an idealised chain whose every Bell measurement succeeds with
/// probability 1/2: `2^(-2N) 10^(-alpha ell / 10)`.
pub fn ideal_rate<T: Real>(stations: u32, ell: T, alpha: T) -> T {
    lit::<T>(2.0).powi(-2 * stations as i32) * transmittance(ell, alpha)
}

/// Repeaterless secret-key capacity `log2((1 + t) / (1 - t))` of a channel
/// with transmittance `t = 10^(-alpha ell / 10)`.
pub fn tgw_bound<T: Real>(ell: T, alpha: T) -> Result<T> {
    let t = transmittance(ell, alpha);
    if !(ell > T::zero()) || !(t < T::one()) {
        return Err(Error::Domain {
            function: "tgw_bound",
            value: ell.to_f64().unwrap_or(f64::NAN),
        });
    }
    // ln((1 + t) / (1 - t)) without cancellation for small t
    Ok((t.ln_1p() - (-t).ln_1p()) / T::LN_2())
}

/// Composes the QBER, the Shor-Preskill factor and the sifted rate.
///
/// The sifted rate is charged the device efficiency `eta 10^(-alpha0/10)`
/// for each detection.
pub fn secret_key_rate<T: Real>(
    params: &ResourceParams<T>,
    topo: &Topology<T>,
    n_max: u32,
    mode: CountingMode,
) -> Result<RateBreakdown<T>> {
    let q = qber(params, topo, n_max, mode)?;
    rate_from_qber(params, topo, q)
}

/// [`secret_key_rate`] for an already computed QBER.
pub fn rate_from_qber<T: Real>(params: &ResourceParams<T>, topo: &Topology<T>, q: T) -> Result<RateBreakdown<T>> {
    params.validate()?;
    topo.validate()?;
    let r_sif = sifted_rate(
        params.chi,
        params.device_efficiency(),
        topo.stations,
        topo.distance,
        params.alpha,
    );
    let q_clamped = q.max(T::zero()).min(lit(0.5));
    let r_sp = shor_preskill(q_clamped, params.kappa)?;
    let infeasible = !(r_sp > T::zero());
    Ok(RateBreakdown {
        r_sif,
        r_sp,
        r: if infeasible { T::zero() } else { r_sif * r_sp },
        q,
        infeasible,
    })
}
