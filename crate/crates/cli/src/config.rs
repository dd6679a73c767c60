//! Resolution of the run configuration from built-in defaults, an optional
//! TOML file and command-line flags (flags win).

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use ces_qkd::{CountingMode, ResourceParams, Topology};

use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Number of swapping setups N.
    #[arg(long, global = true)]
    pub stations: Option<u32>,
    /// Total distance between A and B in km.
    #[arg(long, global = true)]
    pub ell: Option<f64>,
    /// Source squeezing amplitude.
    #[arg(long, global = true)]
    pub chi: Option<f64>,
    /// Intrinsic detector efficiency.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Dark-count probability per detector and time bin.
    #[arg(long, global = true)]
    pub dark: Option<f64>,
    /// Derive the dark-count probability from the efficiency.
    #[arg(long, global = true)]
    pub dark_coupled: bool,
    /// Fibre loss in dB/km [default: 0.25].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Fixed loss per detection path in dB [default: 4].
    #[arg(long, global = true)]
    pub alpha0: Option<f64>,
    /// Reconciliation efficiency [default: 1.22].
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    /// Photon cutoff per detector [default: 3].
    #[arg(long, global = true)]
    pub nmax: Option<u32>,
    /// Source repetition rate in Hz [default: 1e8].
    #[arg(long, global = true)]
    pub rep_rate_hz: Option<f64>,
    /// Assign end-party double clicks to a random bit instead of dropping them.
    #[arg(long, global = true)]
    pub squash: bool,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with any of the flags above as `key = value`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub stations: Option<u32>,
    pub ell: Option<f64>,
    pub chi: Option<f64>,
    pub eta: Option<f64>,
    pub dark: Option<f64>,
    pub dark_coupled: Option<bool>,
    pub alpha: Option<f64>,
    pub alpha0: Option<f64>,
    pub kappa: Option<f64>,
    pub nmax: Option<u32>,
    pub rep_rate_hz: Option<f64>,
    pub squash: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::BadArgs(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::BadArgs(format!("invalid config {}: {e}", path.display())))
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub stations: u32,
    pub ell: f64,
    pub chi: f64,
    pub eta: f64,
    pub dark: f64,
    pub dark_coupled: bool,
    pub alpha: f64,
    pub alpha0: f64,
    pub kappa: f64,
    pub nmax: u32,
    pub rep_rate_hz: f64,
    pub squash: bool,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Whether a dark-count value was given explicitly (flag or file).
    #[serde(skip)]
    pub dark_given: bool,
}

impl RunConfig {
    /// `coupled_by_default` selects the dark-count model when neither a
    /// dark-count value nor `dark-coupled` was given.
    pub fn resolve(flags: &GlobalArgs, coupled_by_default: bool) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let dark_given = flags.dark.is_some() || file.dark.is_some();
        let dark_coupled = if flags.dark_coupled {
            true
        } else {
            file.dark_coupled.unwrap_or(coupled_by_default && !dark_given)
        };
        let cfg = Self {
            stations: flags.stations.or(file.stations).unwrap_or(1),
            ell: flags.ell.or(file.ell).unwrap_or(0.0),
            chi: flags.chi.or(file.chi).unwrap_or(0.1),
            eta: flags.eta.or(file.eta).unwrap_or(0.4),
            dark: flags.dark.or(file.dark).unwrap_or(1e-5),
            dark_coupled,
            alpha: flags.alpha.or(file.alpha).unwrap_or(0.25),
            alpha0: flags.alpha0.or(file.alpha0).unwrap_or(4.0),
            kappa: flags.kappa.or(file.kappa).unwrap_or(1.22),
            nmax: flags.nmax.or(file.nmax).unwrap_or(3),
            rep_rate_hz: flags.rep_rate_hz.or(file.rep_rate_hz).unwrap_or(1e8),
            squash: flags.squash || file.squash.unwrap_or(false),
            out: flags.out.clone().or(file.out),
            dark_given,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        self.params().validate()?;
        self.topology()?;
        if !(self.rep_rate_hz > 0.0 && self.rep_rate_hz.is_finite()) {
            return Err(CliError::BadArgs("rep-rate-hz must be positive".into()));
        }
        if self.nmax > ces_qkd::amplitude::MAX_CUTOFF {
            return Err(CliError::BadArgs(format!(
                "nmax must be at most {}",
                ces_qkd::amplitude::MAX_CUTOFF
            )));
        }
        Ok(())
    }

    pub fn params(&self) -> ResourceParams<f64> {
        ResourceParams {
            chi: self.chi,
            eta: self.eta,
            dark: self.dark,
            alpha: self.alpha,
            alpha0: self.alpha0,
            kappa: self.kappa,
            dark_coupled: self.dark_coupled,
        }
    }

    pub fn topology(&self) -> Result<Topology<f64>, CliError> {
        Ok(Topology::new(self.stations, self.ell)?)
    }

    pub fn mode(&self) -> CountingMode {
        if self.squash {
            CountingMode::Squash
        } else {
            CountingMode::Discard
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(&GlobalArgs::default(), false).unwrap();
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.alpha0, 4.0);
        assert_eq!(cfg.kappa, 1.22);
        assert_eq!(cfg.nmax, 3);
        assert_eq!(cfg.rep_rate_hz, 1e8);
        assert!(!cfg.dark_coupled);
        assert!(RunConfig::resolve(&GlobalArgs::default(), true).unwrap().dark_coupled);
    }

    #[test]
    fn flags_override_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "stations = 2\nchi = 0.05\ndark = 1e-6\nrep-rate-hz = 1e9").unwrap();
        let flags = GlobalArgs {
            chi: Some(0.2),
            config: Some(f.path().to_path_buf()),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags, true).unwrap();
        assert_eq!(cfg.stations, 2);
        assert_eq!(cfg.chi, 0.2);
        assert_eq!(cfg.dark, 1e-6);
        assert_eq!(cfg.rep_rate_hz, 1e9);
        // an explicit dark count switches the coupled default off
        assert!(!cfg.dark_coupled);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "stationz = 2").unwrap();
        let flags = GlobalArgs {
            config: Some(f.path().to_path_buf()),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&flags, false), Err(CliError::BadArgs(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        let flags = GlobalArgs {
            eta: Some(1.5),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&flags, false).is_err());
        let flags = GlobalArgs {
            stations: Some(0),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&flags, false).is_err());
    }
}
