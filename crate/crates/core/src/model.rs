//! Channel parameters and partial-wave matrix elements.
//!
//! Every potential here is the `l`-th partial-wave projection in the
//! convention `O(p', p) = Σ (2l+1) O_l(p', p) P_l(cos θ)`. Momenta, cutoffs
//! and the NLO scale are measured in units of the reduced mass.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const PI2: f64 = PI * PI;

/// Couplings and scales of a single partial-wave channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Strength of the attractive inverse-square potential (`λ > 0` attracts).
    pub lambda: f64,
    /// Strength of the inverse-quartic correction; either sign.
    pub g: f64,
    /// Mass scale `M` of the inverse-quartic correction.
    pub big_m: f64,
    /// Reduced mass `m`.
    pub reduced_mass: f64,
    /// Orbital angular momentum.
    pub l: u32,
}

impl ModelParams {
    /// Inverse-square channel with no NLO correction and `m = 1`.
    pub fn lo(lambda: f64, l: u32) -> Self {
        Self {
            lambda,
            g: 0.0,
            big_m: 1.0,
            reduced_mass: 1.0,
            l,
        }
    }

    pub fn with_nlo(mut self, g: f64, big_m: f64) -> Self {
        self.g = g;
        self.big_m = big_m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reduced_mass > 0.0) || !self.reduced_mass.is_finite() {
            return Err(Error::Domain(format!(
                "reduced mass must be positive, got {}",
                self.reduced_mass
            )));
        }
        if self.g != 0.0 && !(self.big_m > 0.0) {
            return Err(Error::Domain(format!(
                "NLO scale M must be positive when g != 0, got {}",
                self.big_m
            )));
        }
        if !self.lambda.is_finite() || !self.g.is_finite() {
            return Err(Error::Domain("couplings must be finite".into()));
        }
        Ok(())
    }

    /// `2l + 1`.
    pub fn degeneracy(&self) -> f64 {
        f64::from(2 * self.l + 1)
    }
}

/// Counterterm couplings at a given cutoff.
///
/// `c_lo` multiplies the LO contact `(π²/m) C/(2l+1) p'^l p^l`; `c_nlo` and
/// `d_nlo` are the S-wave NLO contacts `(π²/m) [C + D (p² + p'²)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountertermSet {
    pub c_lo: f64,
    pub c_nlo: f64,
    pub d_nlo: f64,
    pub cutoff: f64,
}

impl CountertermSet {
    pub fn none(cutoff: f64) -> Self {
        Self {
            c_lo: 0.0,
            c_nlo: 0.0,
            d_nlo: 0.0,
            cutoff,
        }
    }

    pub fn lo(c_lo: f64, cutoff: f64) -> Self {
        Self {
            c_lo,
            ..Self::none(cutoff)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(Error::Domain(format!(
                "cutoff must be positive, got {}",
                self.cutoff
            )));
        }
        if !self.c_lo.is_finite() || !self.c_nlo.is_finite() || !self.d_nlo.is_finite() {
            return Err(Error::Domain("counterterm couplings must be finite".into()));
        }
        Ok(())
    }

    pub fn has_nlo_contacts(&self) -> bool {
        self.c_nlo != 0.0 || self.d_nlo != 0.0
    }
}

fn check_momenta(p_out: f64, p_in: f64) -> Result<()> {
    if p_out > 0.0 && p_in > 0.0 && p_out.is_finite() && p_in.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "momenta must be positive, got p' = {p_out}, p = {p_in}"
        )))
    }
}

/// `p_<^l / p_>^(l+1)` without the validity checks.
pub(crate) fn lo_shape(l: u32, p_out: f64, p_in: f64) -> f64 {
    let (lo, hi) = if p_out < p_in {
        (p_out, p_in)
    } else {
        (p_in, p_out)
    };
    let l = l as i32;
    lo.powi(l) / hi.powi(l + 1)
}

/// `p_<^l / p_>^(l-1) (1 - (2l-1)/(2l+3) p_<²/p_>²) / ((2l+1)(2l-1))`.
pub(crate) fn nlo_shape(l: u32, p_out: f64, p_in: f64) -> f64 {
    let (lo, hi) = if p_out < p_in {
        (p_out, p_in)
    } else {
        (p_in, p_out)
    };
    let li = l as i32;
    let two_l = 2.0 * f64::from(l);
    let ratio = lo / hi;
    let bracket = 1.0 - (two_l - 1.0) / (two_l + 3.0) * ratio * ratio;
    lo.powi(li) / hi.powi(li - 1) * bracket / ((two_l + 1.0) * (two_l - 1.0))
}

/// LO inverse-square matrix element `V_l(p', p)`.
pub fn v_lo_partial(params: &ModelParams, p_out: f64, p_in: f64) -> Result<f64> {
    check_momenta(p_out, p_in)?;
    Ok(
        -PI2 * params.lambda / (params.reduced_mass * params.degeneracy())
            * lo_shape(params.l, p_out, p_in),
    )
}

/// NLO inverse-quartic matrix element with the `1/R` constant dropped.
pub fn v_nlo_partial(params: &ModelParams, p_out: f64, p_in: f64) -> Result<f64> {
    check_momenta(p_out, p_in)?;
    if params.g == 0.0 {
        return Ok(0.0);
    }
    Ok(
        -PI2 * params.g / (2.0 * params.reduced_mass * params.big_m * params.big_m)
            * nlo_shape(params.l, p_out, p_in),
    )
}

/// LO contact `(π²/m) C/(2l+1) p'^l p^l`.
pub fn v_contact_lo(params: &ModelParams, c: f64, p_out: f64, p_in: f64) -> Result<f64> {
    check_momenta(p_out, p_in)?;
    let l = params.l as i32;
    Ok(PI2 / params.reduced_mass * c / params.degeneracy() * (p_out.powi(l) * p_in.powi(l)))
}

/// S-wave NLO contact `(π²/m) [C + D (p² + p'²)]`.
pub fn v_contact_nlo(params: &ModelParams, c1: f64, d1: f64, p_out: f64, p_in: f64) -> Result<f64> {
    check_momenta(p_out, p_in)?;
    if params.l != 0 {
        return Err(Error::UnsupportedChannel(format!(
            "NLO contacts are S-wave only, got l = {}",
            params.l
        )));
    }
    Ok(PI2 / params.reduced_mass * (c1 + d1 * (p_in * p_in + p_out * p_out)))
}

/// The log-oscillation index of a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIndex {
    /// `|ν_l|`; real part when singular, magnitude of the imaginary index otherwise.
    pub magnitude: f64,
    /// `λ ≥ (l + 1/2)²`: the potential overcomes the centrifugal barrier.
    pub singular: bool,
}

impl LogIndex {
    /// `ν_l` for singular channels, `None` otherwise.
    pub fn real(&self) -> Option<f64> {
        self.singular.then_some(self.magnitude)
    }
}

pub fn nu_l(params: &ModelParams) -> LogIndex {
    let half = f64::from(params.l) + 0.5;
    let disc = params.lambda - half * half;
    LogIndex {
        magnitude: disc.abs().sqrt(),
        singular: disc >= 0.0,
    }
}

/// `l_c = √λ − 1/2`; integer waves below it are singular.
pub fn critical_l(params: &ModelParams) -> f64 {
    params.lambda.sqrt() - 0.5
}

/// `l_p = λπ/4 − 1/2`; waves above it are perturbative.
pub fn perturbative_l(params: &ModelParams) -> f64 {
    params.lambda * PI / 4.0 - 0.5
}
