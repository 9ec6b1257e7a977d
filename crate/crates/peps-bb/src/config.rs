//! Run configuration shared by the CLI subcommands. All fields have
//! defaults, so a config file only needs to name what it overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryOptions;
use crate::ntu::NtuOptions;
use crate::sequences::ProtocolVariant;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Transverse field of the target Hamiltonian (the coupling is fixed
    /// to 1).
    pub g: f64,
    /// Which protocol family the angle schedule targets.
    pub variant: ProtocolVariant,
    /// Number of circuit layers.
    pub depth: usize,
    /// Time step of the smooth-ramp schedule.
    pub dt: f64,
    /// Bond-dimension cap for NTU truncation.
    pub d_max: usize,
    /// Boundary-MPS bond dimension.
    pub chi: usize,
    /// Per-site fidelity drift at which the boundary is converged.
    pub boundary_tol: f64,
    /// Seed for boundary initialization and optimizer restarts.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            g: 3.1,
            variant: ProtocolVariant::ParaTarget,
            depth: 3,
            dt: 0.18,
            d_max: 8,
            chi: 40,
            boundary_tol: 1e-8,
            seed: 7,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::Config(format!("g must be positive, got {}", self.g)));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.d_max < 2 {
            return Err(Error::Config("d_max must be at least 2".into()));
        }
        if self.chi < 2 {
            return Err(Error::Config("chi must be at least 2".into()));
        }
        if !(self.boundary_tol > 0.0) {
            return Err(Error::Config("boundary_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ntu_options(&self) -> NtuOptions {
        NtuOptions {
            d_max: self.d_max,
            ..NtuOptions::default()
        }
    }

    pub fn boundary_options(&self) -> BoundaryOptions {
        BoundaryOptions {
            chi: self.chi,
            tol: self.boundary_tol,
            seed: self.seed,
            ..BoundaryOptions::default()
        }
    }
}
