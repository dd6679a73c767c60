//! Physical resources: source brightness, detectors, channel loss and the
//! geometry of the swapping chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Prefactor of the InGaAs efficiency / dark-count trade-off.
pub const DARK_PREFACTOR: f64 = 6.1e-7;
/// Exponent slope of the InGaAs efficiency / dark-count trade-off.
pub const DARK_SLOPE: f64 = 17.0;

/// Resource parameters of one protocol run.
///
/// `chi` is the squeezing amplitude of every PDC source (pair probability
/// roughly `chi^2`), `eta` the intrinsic detector efficiency and `dark` the
/// per-gate dark-count probability. When `dark_coupled` is set the dark-count
/// probability is derived from `eta` through [`dark_for_eta`] and `dark` is
/// ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceParams<T> {
    pub chi: T,
    pub eta: T,
    pub dark: T,
    /// Channel loss in dB/km.
    pub alpha: T,
    /// Distance-independent loss in dB, charged once per detection path.
    pub alpha0: T,
    /// Reconciliation efficiency (1 is the Shannon limit).
    pub kappa: T,
    pub dark_coupled: bool,
}

impl<T: Real> ResourceParams<T> {
    /// Parameters used for the optimisation runs: 0.25 dB/km fibre, 4 dB
    /// fixed loss, reconciliation efficiency 1.22 and coupled dark counts.
    pub fn long_haul(chi: T, eta: T) -> Self {
        Self {
            chi,
            eta,
            dark: T::zero(),
            alpha: lit(0.25),
            alpha0: lit(4.0),
            kappa: lit(1.22),
            dark_coupled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        let finite = [self.chi, self.eta, self.dark, self.alpha, self.alpha0, self.kappa]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return bad("params", "all values must be finite");
        }
        if self.chi < T::zero() || self.chi >= T::one() {
            return bad("chi", "must satisfy 0 <= chi < 1");
        }
        if self.eta < T::zero() || self.eta > T::one() {
            return bad("eta", "must lie in [0, 1]");
        }
        if !self.dark_coupled && (self.dark < T::zero() || self.dark > T::one()) {
            return bad("dark", "must lie in [0, 1]");
        }
        if self.alpha < T::zero() {
            return bad("alpha", "must be non-negative");
        }
        if self.alpha0 < T::zero() {
            return bad("alpha0", "must be non-negative");
        }
        if self.kappa < T::one() {
            return bad("kappa", "must be at least 1");
        }
        Ok(())
    }

    /// Dark-count probability in force for these parameters.
    pub fn dark_probability(&self) -> Result<T> {
        if self.dark_coupled {
            dark_for_eta(self.eta)
        } else {
            Ok(self.dark)
        }
    }

    /// Detection probability per photon before channel loss: intrinsic
    /// efficiency times the fixed loss.
    pub fn device_efficiency(&self) -> T {
        effective_efficiency(self.eta, T::zero(), self.alpha, self.alpha0)
    }

    /// Detector model shared by all `8N` detectors of `topo`.
    pub fn detector(&self, topo: &Topology<T>) -> Result<DetectorModel<T>> {
        self.validate()?;
        topo.validate()?;
        let eta_eff = effective_efficiency(self.eta, topo.segment_length(), self.alpha, self.alpha0);
        DetectorModel::new(eta_eff, self.dark_probability()?)
    }
}

/// Chain geometry: `stations` swapping setups spread over `distance` km.
///
/// A setup holds two sources and one Bell measurement, so the chain has
/// `2N` sources, `2N - 1` measurement stations and `4N` fibre segments of
/// equal length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology<T> {
    pub stations: u32,
    pub distance: T,
}

impl<T: Real> Topology<T> {
    pub fn new(stations: u32, distance: T) -> Result<Self> {
        let topo = Self { stations, distance };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations == 0 {
            return Err(Error::InvalidParameter {
                name: "stations",
                reason: "at least one swapping setup is required".into(),
            });
        }
        if !self.distance.is_finite() || self.distance < T::zero() {
            return Err(Error::InvalidParameter {
                name: "distance",
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(())
    }

    /// Number of PDC sources, `2N`.
    pub fn sources(&self) -> usize {
        2 * self.stations as usize
    }

    /// Number of measurement stations between the end parties, `2N - 1`.
    pub fn measurement_stations(&self) -> usize {
        2 * self.stations as usize - 1
    }

    /// Fibre length between a source and the nearest detector, `l / 4N`.
    pub fn segment_length(&self) -> T {
        self.distance / count::<T>(4 * self.stations)
    }

    /// Positions of the measurement stations, `z l / 2N` for `z = 1..2N-1`.
    pub fn station_positions(&self) -> Vec<T> {
        let n2 = count::<T>(2 * self.stations);
        (1..2 * self.stations)
            .map(|z| count::<T>(z) * self.distance / n2)
            .collect()
    }

    /// Positions of the sources, midway between neighbouring detection sites.
    pub fn source_positions(&self) -> Vec<T> {
        let n4 = count::<T>(4 * self.stations);
        (0..2 * self.stations)
            .map(|z| count::<T>(2 * z + 1) * self.distance / n4)
            .collect()
    }
}

/// Threshold detector seen through its fibre segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel<T> {
    /// Net single-photon detection probability (intrinsic efficiency times
    /// channel and fixed transmittance).
    pub eta_eff: T,
    pub dark: T,
}

impl<T: Real> DetectorModel<T> {
    pub fn new(eta_eff: T, dark: T) -> Result<Self> {
        if !(eta_eff >= T::zero() && eta_eff <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "eta_eff",
                reason: "must lie in [0, 1]".into(),
            });
        }
        if !(dark >= T::zero() && dark <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "dark",
                reason: "must lie in [0, 1]".into(),
            });
        }
        Ok(Self { eta_eff, dark })
    }

    /// Unit efficiency, no dark counts.
    pub fn perfect() -> Self {
        Self {
            eta_eff: T::one(),
            dark: T::zero(),
        }
    }
}

/// `10^{-(alpha * seg_len + alpha0) / 10} * eta`.
pub fn effective_efficiency<T: Real>(eta: T, seg_len: T, alpha: T, alpha0: T) -> T {
    let db = alpha * seg_len + alpha0;
    lit::<T>(10.0).powf(-db / lit(10.0)) * eta
}

/// Dark-count probability implied by efficiency `eta` for InGaAs detectors.
///
/// Fails when the trade-off exceeds 1, which happens above `eta ~ 0.84`.
pub fn dark_for_eta<T: Real>(eta: T) -> Result<T> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(Error::Domain {
            function: "dark_for_eta",
            value: eta.to_f64().unwrap_or(f64::NAN),
        });
    }
    let dark = lit::<T>(DARK_PREFACTOR) * (lit::<T>(DARK_SLOPE) * eta).exp();
    if dark > T::one() {
        return Err(Error::NonphysicalDark {
            eta: eta.to_f64().unwrap_or(f64::NAN),
            value: dark.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(dark)
}

/// Probability that a detector stays silent when an ideal counter would
/// have registered `photons`: no dark count and every photon missed.
#[inline]
pub fn prob_no_click<T: Real>(photons: u32, det: &DetectorModel<T>) -> T {
    (T::one() - det.dark) * (T::one() - det.eta_eff).powi(photons as i32)
}

#[inline]
pub fn prob_click<T: Real>(photons: u32, det: &DetectorModel<T>) -> T {
    T::one() - prob_no_click(photons, det)
}

/// Likelihood of observing `click` given `photons` at the ideal counter.
#[inline]
pub fn prob_bit<T: Real>(click: bool, photons: u32, det: &DetectorModel<T>) -> T {
    if click {
        prob_click(photons, det)
    } else {
        prob_no_click(photons, det)
    }
}
