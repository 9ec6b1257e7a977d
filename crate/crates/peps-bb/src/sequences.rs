//! Gate-angle sequences for the bang-bang and smooth-ramp protocols.
//!
//! A depth-N sequence lists, bottom to top, a two-site ZZ angle `beta[j]` and
//! a one-site X angle `alpha[j]` per layer. The last X layer always acts with
//! half its nominal angle, which makes the circuit a symmetric second-order
//! splitting when the angles come from a smooth ramp.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SEQUENCE_FORMAT_VERSION: u32 = 1;

/// Critical transverse field of the 2D model, used as the gate field when
/// ramping from the polarized phase into the ordered phase.
pub const CRITICAL_FIELD: f64 = 3.04438;

pub const BETA_BOUND: f64 = std::f64::consts::FRAC_PI_2;
pub const ALPHA_G_BOUND: f64 = std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    /// Angles sampled from a smooth ramp of the field.
    Adiabatic,
    /// Free angles, typically optimizer output.
    BangBang,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    /// Start in the polarized product state, target the model at field `g`.
    ParaTarget,
    /// Start polarized, gate with the critical field, target the classical
    /// ordered model (field zero).
    ParaToFerro,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateSequence {
    pub format_version: u32,
    pub kind: SequenceKind,
    pub variant: ProtocolVariant,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Field entering the one-site gates (and the energy for `ParaTarget`).
    pub g: f64,
}

impl GateSequence {
    pub fn new(
        kind: SequenceKind,
        variant: ProtocolVariant,
        beta: Vec<f64>,
        alpha: Vec<f64>,
        g: f64,
    ) -> Result<GateSequence> {
        let seq = GateSequence {
            format_version: SEQUENCE_FORMAT_VERSION,
            kind,
            variant,
            beta,
            alpha,
            g,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != SEQUENCE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version.to_string(),
                major: SEQUENCE_FORMAT_VERSION,
            });
        }
        if self.beta.is_empty() {
            return Err(Error::Sequence("sequence has no layers".into()));
        }
        if self.beta.len() != self.alpha.len() {
            return Err(Error::Sequence(format!(
                "beta has {} layers but alpha has {}",
                self.beta.len(),
                self.alpha.len()
            )));
        }
        if !self.g.is_finite() {
            return Err(Error::Sequence("field g is not finite".into()));
        }
        let gf = self.gate_field().abs();
        for (j, (&b, &a)) in self.beta.iter().zip(&self.alpha).enumerate() {
            if !b.is_finite() || !a.is_finite() {
                return Err(Error::Sequence(format!("layer {j}: non-finite angle")));
            }
            if b.abs() > BETA_BOUND + 1e-12 {
                return Err(Error::Sequence(format!(
                    "layer {j}: |beta|={} exceeds pi/2",
                    b.abs()
                )));
            }
            if (a * gf).abs() > ALPHA_G_BOUND + 1e-12 {
                return Err(Error::Sequence(format!(
                    "layer {j}: |alpha*g|={} exceeds pi",
                    (a * gf).abs()
                )));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.beta.len()
    }

    /// Field multiplying the one-site X angles.
    pub fn gate_field(&self) -> f64 {
        match self.variant {
            ProtocolVariant::ParaTarget => self.g,
            ProtocolVariant::ParaToFerro => CRITICAL_FIELD,
        }
    }

    /// Field entering the target Hamiltonian whose energy is evaluated.
    pub fn target_field(&self) -> f64 {
        match self.variant {
            ProtocolVariant::ParaTarget => self.g,
            ProtocolVariant::ParaToFerro => 0.0,
        }
    }

    /// X-layer angle actually applied at layer `j` (last layer halved).
    pub fn effective_alpha(&self, j: usize) -> f64 {
        if j + 1 == self.alpha.len() {
            0.5 * self.alpha[j]
        } else {
            self.alpha[j]
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<GateSequence> {
        let seq: GateSequence = serde_json::from_str(text)?;
        seq.validate()?;
        Ok(seq)
    }
}

/// Smooth ramp profile on s in [0, 1] used by the `ParaTarget` schedule.
pub fn ramp_profile(s: f64) -> f64 {
    0.5 * (1.0 + (std::f64::consts::PI * (s - 0.5)).sin())
}

/// Smooth ramp profile on u in [-1, 1] used by the `ParaToFerro` schedule.
pub fn ferro_profile(u: f64) -> f64 {
    0.5 * (1.0 + u * u.abs())
}

/// Smooth-ramp sequence of depth `n` with step `dt`.
///
/// `ParaTarget`: the ZZ coupling ramps up as `ramp_profile` at layer
/// midpoints while the field stays at `g`, so `beta[j] = dt*f((2j-1)/(2N))`
/// and `alpha[j] = dt`.
///
/// `ParaToFerro`: couplings and field cross-fade over u in [-1, 1] sampled
/// on the half-step grid u_k = k/N - 1, with `beta[j] = dt*f(u_{2j-1})` and
/// `alpha[j] = dt*(1 - f(u_{2j}))`; the one-site gates use the critical
/// field.
pub fn ap_sequence(n: usize, dt: f64, variant: ProtocolVariant, g: f64) -> Result<GateSequence> {
    if n == 0 {
        return Err(Error::Sequence("depth must be positive".into()));
    }
    let (beta, alpha): (Vec<f64>, Vec<f64>) = match variant {
        ProtocolVariant::ParaTarget => (0..n)
            .map(|j| {
                let s = (2 * j + 1) as f64 / (2 * n) as f64;
                (dt * ramp_profile(s), dt)
            })
            .unzip(),
        ProtocolVariant::ParaToFerro => (0..n)
            .map(|j| {
                let u_beta = (2 * j + 1) as f64 / n as f64 - 1.0;
                let u_alpha = (2 * j + 2) as f64 / n as f64 - 1.0;
                (dt * ferro_profile(u_beta), dt * (1.0 - ferro_profile(u_alpha)))
            })
            .unzip(),
    };
    GateSequence::new(SequenceKind::Adiabatic, variant, beta, alpha, g)
}

/// Free-angle sequence, as produced by the optimizer.
pub fn bb_sequence(
    beta: Vec<f64>,
    alpha: Vec<f64>,
    variant: ProtocolVariant,
    g: f64,
) -> Result<GateSequence> {
    GateSequence::new(SequenceKind::BangBang, variant, beta, alpha, g)
}
