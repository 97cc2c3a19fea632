//! Running of the leading-order contact coupling.
//!
//! In a singular channel the coupling that keeps observables fixed runs
//! log-periodically with the cutoff. The reduced coupling `h = Λ^(2l+1) C`
//! obeys `dh/d ln Λ = (2l+1) h + (λ − h)²/(2l+1)`, whose solution
//! diverges once per period `π/ν_l` in `ln Λ`.

mod rootfind;

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::model::{nu_l, CountertermSet, ModelParams};
use crate::solver::{contact_response, ContactResponse, GridOptions};

pub(crate) use rootfind::bracketed_root;

/// A single on-shell value `k_l(p, p) = k` used to fix a coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Datum {
    pub p: f64,
    pub k: f64,
}

impl Datum {
    pub fn new(p: f64, k: f64) -> Self {
        Self { p, k }
    }
}

/// Constants of the analytic running in one channel.
#[derive(Debug, Clone, Copy)]
struct Running {
    lambda: f64,
    a: f64,
    b: f64,
    nu: f64,
}

impl Running {
    fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let index = nu_l(params);
        match index.real() {
            Some(nu) if nu > 0.0 => Ok(Self {
                lambda: params.lambda,
                a: params.degeneracy(),
                b: 2.0 * nu,
                nu,
            }),
            _ => Err(Error::UnsupportedChannel(format!(
                "l = {} with λ = {} has no limit cycle",
                params.l, params.lambda
            ))),
        }
    }

    fn scale(&self, cutoff: f64) -> f64 {
        cutoff.powf(self.a)
    }

    /// Phase `ν ln(Λ/Λ*)`, reduced modulo π, that reproduces reduced coupling `h`.
    fn phase_of(&self, h: f64) -> f64 {
        let angle = if h.is_infinite() {
            (-self.a).atan2(self.b)
        } else {
            (self.a * (self.lambda + h)).atan2(self.b * (self.lambda - h))
        };
        angle.rem_euclid(PI)
    }
}

/// `C_l(Λ) = −(λ/Λ^(2l+1)) (2l+1 − 2ν tan θ)/(2l+1 + 2ν tan θ)`, `θ = ν ln(Λ/Λ*)`.
pub fn analytic_c0(params: &ModelParams, cutoff: f64, lambda_star: f64) -> Result<f64> {
    let run = Running::new(params)?;
    check_scales(cutoff, lambda_star)?;
    let theta = run.nu * (cutoff / lambda_star).ln();
    let (s, c) = theta.sin_cos();
    let num = run.a * c - run.b * s;
    let den = run.a * c + run.b * s;
    if den.abs() <= 1e-12 * (run.a * c.abs() + run.b * s.abs()) {
        return Err(Error::Pole {
            cutoff,
            detail: format!(
                "analytic running diverges at Λ/Λ* = {}",
                cutoff / lambda_star
            ),
        });
    }
    Ok(-run.lambda / run.scale(cutoff) * num / den)
}

/// `1/C_l(Λ)` from the analytic running; finite at the poles of `C`.
pub fn analytic_inverse_c0(params: &ModelParams, cutoff: f64, lambda_star: f64) -> Result<f64> {
    let run = Running::new(params)?;
    check_scales(cutoff, lambda_star)?;
    let theta = run.nu * (cutoff / lambda_star).ln();
    let (s, c) = theta.sin_cos();
    let num = run.a * c - run.b * s;
    let den = run.a * c + run.b * s;
    if num.abs() <= 1e-12 * (run.a * c.abs() + run.b * s.abs()) {
        return Err(Error::Pole {
            cutoff,
            detail: "coupling vanishes, inverse diverges".into(),
        });
    }
    Ok(-run.scale(cutoff) / run.lambda * den / num)
}

/// Right-hand side of the RG equation, `Λ dC/dΛ = (λ − h)²/((2l+1) Λ^(2l+1))`.
pub fn beta_function(params: &ModelParams, cutoff: f64, c: f64) -> Result<f64> {
    let run = Running::new(params)?;
    check_scales(cutoff, 1.0)?;
    let scale = run.scale(cutoff);
    let h = scale * c;
    Ok((run.lambda - h).powi(2) / (run.a * scale))
}

/// The `Λ*` that puts coupling `c` on the analytic trajectory at `cutoff`,
/// chosen in `(cutoff·exp(−π/ν), cutoff]`.
pub fn lambda_star_from(params: &ModelParams, cutoff: f64, c: f64) -> Result<f64> {
    let run = Running::new(params)?;
    check_scales(cutoff, 1.0)?;
    let theta = run.phase_of(run.scale(cutoff) * c);
    Ok(cutoff * (-theta / run.nu).exp())
}

/// Multiplicative period of the running in `Λ`, `exp(π/ν_l)`.
pub fn cycle_factor(params: &ModelParams) -> Result<f64> {
    Ok((PI / Running::new(params)?.nu).exp())
}

fn check_scales(cutoff: f64, lambda_star: f64) -> Result<()> {
    if !(cutoff > 0.0 && cutoff.is_finite()) || !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(Error::Domain(format!(
            "need positive finite scales, got Λ = {cutoff}, Λ* = {lambda_star}"
        )));
    }
    Ok(())
}

/// Result of fitting the LO coupling to a datum at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOutcome {
    pub coupling: f64,
    /// `k(p_d, p_d) − k_d` from a direct solve at `coupling`.
    pub residual: f64,
    /// The coupling passed through ±∞ between the seed and the root.
    pub crossed_pole: bool,
    pub condition: f64,
}

/// Residual tolerance of the calibration, relative to `max(1, |k_d|)`.
pub const CALIBRATION_TOLERANCE: f64 = 1e-10;

/// Finds `C_l` at `cutoff` such that the solved `k_l(p_d, p_d)` equals the datum.
///
/// Because the contact is rank one, `k(C)` is a linear-fractional function with
/// a single divergence at `C_s`. On the projective line minus `C_s` it is
/// monotone, so the root is bracketed by parametrizing `C = C_s + w tan φ`,
/// `φ ∈ (0, π)`. Reaching the root from `seed` crosses `C = ∞` exactly when
/// `C_s` lies between them.
pub fn calibrate_c0(
    params: &ModelParams,
    cutoff: f64,
    datum: Datum,
    seed: f64,
    grid: &GridOptions,
) -> Result<CalibrationOutcome> {
    params.validate()?;
    if !(datum.p > 0.0) || !(datum.p * 10.0 <= cutoff) {
        return Err(Error::Domain(format!(
            "datum momentum {} must satisfy 0 < p ≤ Λ/10 with Λ = {cutoff}",
            datum.p
        )));
    }
    if !datum.k.is_finite() || !seed.is_finite() {
        return Err(Error::Domain("datum and seed must be finite".into()));
    }
    let grid = grid.build(cutoff, datum.p, &[])?;
    let width = params.lambda.max(1.0) / cutoff.powf(params.degeneracy());
    let tolerance = CALIBRATION_TOLERANCE * datum.k.abs().max(1.0);

    let mut response = reference_response(params, &grid, seed, width)?;
    for _ in 0..8 {
        let root = root_on_branch(&response, datum.k, width, tolerance)?;
        let refined = match contact_response(params, &CountertermSet::lo(root, cutoff), &grid) {
            Ok(r) => r,
            Err(Error::Pole { detail, .. }) => {
                return Err(Error::Pole {
                    cutoff,
                    detail: format!("calibrated coupling {root:.6e} is at a pole: {detail}"),
                })
            }
            Err(e) => return Err(e),
        };
        let residual = refined.onshell(root) - datum.k;
        if residual.abs() <= tolerance {
            let crossed_pole = response
                .singular_coupling()
                .is_some_and(|cs| (seed - cs) * (root - cs) < 0.0);
            return Ok(CalibrationOutcome {
                coupling: root,
                residual,
                crossed_pole,
                condition: refined.condition,
            });
        }
        response = refined;
    }
    Err(Error::NotConverged {
        relative_change: f64::NAN,
        condition: response.condition,
    })
}

/// Factors at the seed, or at a nearby coupling when the seed sits on a pole.
fn reference_response(
    params: &ModelParams,
    grid: &crate::solver::QuadratureGrid,
    seed: f64,
    width: f64,
) -> Result<ContactResponse> {
    let mut last = None;
    for c in [seed, seed + 0.1 * width, 0.0, width, -width] {
        match contact_response(params, &CountertermSet::lo(c, grid.cutoff), grid) {
            Ok(r) => return Ok(r),
            Err(e @ Error::Pole { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn root_on_branch(response: &ContactResponse, target: f64, width: f64, tol: f64) -> Result<f64> {
    let Some(cs) = response.singular_coupling() else {
        // k does not depend on C at all.
        return Err(Error::BranchExhausted(
            "the on-shell amplitude is independent of the contact coupling".into(),
        ));
    };
    let coupling = |phi: f64| cs + width * phi.tan();
    let f = |phi: f64| {
        if phi == FRAC_PI_2 {
            response.asymptote() - target
        } else {
            response.onshell(coupling(phi)) - target
        }
    };
    let edge = 1e-12;
    let phi = bracketed_root(f, edge, PI - edge, tol, 1e-15).map_err(|e| match e {
        Error::BranchExhausted(msg) => Error::BranchExhausted(format!(
            "{msg}; k ranges over the reals except {} on this branch",
            response.asymptote()
        )),
        other => other,
    })?;
    Ok(coupling(phi))
}

/// Sampled running of the LO coupling versus the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct RGTrajectory {
    pub cutoffs: Vec<f64>,
    pub couplings: Vec<f64>,
    /// Cycle index of each sample: the number of poles below it.
    pub branches: Vec<i64>,
    /// Cutoffs where `C` diverges, refined by root finding on `1/C`.
    pub poles: Vec<f64>,
    /// Fitted `Λ*`, reported in `(Λ_min·exp(−π/ν), Λ_min]`.
    pub lambda_star: f64,
    /// Cycle index of the last sample.
    pub branch_id: i64,
    /// RMS misfit of the fitted phase `ν ln(Λ/Λ*)` over the samples.
    pub phase_rms: f64,
    pub datum: Datum,
}

impl RGTrajectory {
    pub fn reduced_couplings(&self, params: &ModelParams) -> Vec<f64> {
        let a = params.degeneracy();
        self.cutoffs
            .iter()
            .zip(&self.couplings)
            .map(|(l, c)| l.powf(a) * c)
            .collect()
    }
}

/// Calibrates `C_l` on a geometric cutoff ladder, seeding each step with
/// the previous coupling, locates the poles and fits `Λ*`.
pub fn trace_limit_cycle(
    params: &ModelParams,
    datum: Datum,
    cutoff_range: (f64, f64),
    samples_per_decade: usize,
    grid: &GridOptions,
) -> Result<RGTrajectory> {
    let run = Running::new(params)?;
    let (lo, hi) = cutoff_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || samples_per_decade == 0 {
        return Err(Error::Domain(format!(
            "invalid cutoff range ({lo}, {hi}) or sample density {samples_per_decade}"
        )));
    }
    let count = ((hi / lo).log10() * samples_per_decade as f64)
        .ceil()
        .max(1.0) as usize;
    let cutoffs: Vec<f64> = (0..=count)
        .map(|i| lo * (hi / lo).powf(i as f64 / count as f64))
        .collect();

    let mut couplings = Vec::with_capacity(cutoffs.len());
    let mut branches = Vec::with_capacity(cutoffs.len());
    let mut poles = Vec::new();
    let mut branch = 0i64;
    let mut seed = 0.0;
    for (i, &cutoff) in cutoffs.iter().enumerate() {
        let outcome = calibrate_c0(params, cutoff, datum, seed, grid)?;
        if i > 0 && outcome.crossed_pole {
            poles.push(locate_pole(params, datum, cutoffs[i - 1], cutoff, grid)?);
            branch += 1;
        }
        couplings.push(outcome.coupling);
        branches.push(branch);
        seed = outcome.coupling;
    }

    // Each sample fixes ν ln(Λ/Λ*) modulo π; average the doubled phase on the circle.
    let phases: Vec<f64> = cutoffs
        .iter()
        .zip(&couplings)
        .map(|(l, c)| 2.0 * (run.nu * l.ln() - run.phase_of(run.scale(*l) * c)))
        .collect();
    let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
    let (s, c) = phases
        .iter()
        .fold((0.0, 0.0), |(s, c), ph| (s + ph.sin(), c + ph.cos()));
    let mut center = s.atan2(c);
    for _ in 0..20 {
        let shift = phases.iter().map(|ph| wrap(ph - center)).sum::<f64>() / phases.len() as f64;
        center += shift;
        if shift.abs() < 1e-15 {
            break;
        }
    }
    let phase_rms = (phases
        .iter()
        .map(|ph| wrap(ph - center).powi(2))
        .sum::<f64>()
        / phases.len() as f64)
        .sqrt()
        / 2.0;
    let period = PI / run.nu;
    let mut ln_star = center / (2.0 * run.nu);
    ln_star -= ((ln_star - lo.ln()) / period).ceil() * period;

    Ok(RGTrajectory {
        cutoffs,
        couplings,
        branches,
        poles,
        lambda_star: ln_star.exp(),
        branch_id: branch,
        phase_rms,
        datum,
    })
}

/// `Λ dC/dΛ` at `cutoff` by a central difference of calibrated couplings at
/// `cutoff·exp(±step)`.
pub fn finite_difference_beta(
    params: &ModelParams,
    datum: Datum,
    cutoff: f64,
    seed: f64,
    step: f64,
    grid: &GridOptions,
) -> Result<f64> {
    if !(step > 0.0 && step < 0.5) {
        return Err(Error::Domain(format!(
            "difference step {step} outside (0, 0.5)"
        )));
    }
    let up = calibrate_c0(params, cutoff * step.exp(), datum, seed, grid)?;
    let down = calibrate_c0(params, cutoff * (-step).exp(), datum, seed, grid)?;
    if up.crossed_pole || down.crossed_pole {
        return Err(Error::Pole {
            cutoff,
            detail: "difference stencil straddles a pole".into(),
        });
    }
    Ok((up.coupling - down.coupling) / (2.0 * step))
}

/// Cutoff in `[below, above]` where `1/C` changes sign through zero.
fn locate_pole(
    params: &ModelParams,
    datum: Datum,
    below: f64,
    above: f64,
    grid: &GridOptions,
) -> Result<f64> {
    let mut failure = None;
    let mut inverse = |t: f64| {
        let cutoff = t.exp();
        let result = grid.build(cutoff, datum.p, &[]).and_then(|g| {
            let width = params.lambda.max(1.0) / cutoff.powf(params.degeneracy());
            reference_response(params, &g, 0.0, width)
        });
        match result {
            Ok(r) => r.inverse_coupling_for(datum.k) * cutoff.powf(params.degeneracy()),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let t = bracketed_root(&mut inverse, below.ln(), above.ln(), 0.0, 1e-10);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(t?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_k;

    fn p_wave() -> ModelParams {
        ModelParams::lo(4.25, 1)
    }

    #[test]
    fn boundary_condition_at_lambda_star() {
        let params = p_wave();
        for &star in &[0.2, 3.0, 50.0] {
            let c = analytic_c0(&params, star, star).unwrap();
            assert!((c + 4.25 / star.powi(3)).abs() < 1e-14 * c.abs());
        }
    }

    #[test]
    fn reduced_coupling_is_log_periodic() {
        let params = ModelParams::lo(2.0, 0);
        let factor = cycle_factor(&params).unwrap();
        assert!((factor - 10.74).abs() < 1e-2, "{factor}");
        for &cutoff in &[1.0, 3.7, 12.0] {
            let h1 = cutoff * analytic_c0(&params, cutoff, 0.2).unwrap();
            let h2 = cutoff * factor * analytic_c0(&params, cutoff * factor, 0.2).unwrap();
            assert!((h1 - h2).abs() < 1e-10 * h1.abs().max(1.0));
        }
    }

    #[test]
    fn analytic_running_solves_rg_equation() {
        let params = p_wave();
        for &cutoff in &[0.5, 2.0, 7.0, 40.0] {
            let eps: f64 = 1e-5;
            let up = analytic_c0(&params, cutoff * eps.exp(), 0.2).unwrap();
            let down = analytic_c0(&params, cutoff * (-eps).exp(), 0.2).unwrap();
            let fd = (up - down) / (2.0 * eps);
            let c = analytic_c0(&params, cutoff, 0.2).unwrap();
            let beta = beta_function(&params, cutoff, c).unwrap();
            assert!((fd - beta).abs() < 1e-6 * beta.abs(), "{fd} vs {beta}");
        }
    }

    #[test]
    fn inverse_and_lambda_star_round_trip() {
        let params = p_wave();
        let factor = cycle_factor(&params).unwrap();
        for &cutoff in &[1.0, 10.0, 123.0] {
            let c = analytic_c0(&params, cutoff, 0.2).unwrap();
            let inv = analytic_inverse_c0(&params, cutoff, 0.2).unwrap();
            assert!((c * inv - 1.0).abs() < 1e-12);
            let star = lambda_star_from(&params, cutoff, c).unwrap();
            assert!(star <= cutoff && star > cutoff / factor);
            let cycles = (star / 0.2).ln() / factor.ln();
            assert!((cycles - cycles.round()).abs() < 1e-10, "{star}");
        }
    }

    #[test]
    fn pole_and_unsupported_channels() {
        let params = p_wave();
        let nu = 2f64.sqrt();
        // a + b tan θ = 0  ⇔  tan θ = −3/(2√2)
        let theta = (-3.0 / (2.0 * nu)).atan() + PI;
        let cutoff = 0.2 * (theta / nu).exp();
        assert!(matches!(
            analytic_c0(&params, cutoff, 0.2),
            Err(Error::Pole { .. })
        ));
        assert!(analytic_inverse_c0(&params, cutoff, 0.2).unwrap().abs() < 1e-8);
        assert!(matches!(
            analytic_c0(&ModelParams::lo(2.0, 1), 10.0, 0.2),
            Err(Error::UnsupportedChannel(_))
        ));
        assert!(analytic_c0(&params, -1.0, 0.2).is_err());
    }

    #[test]
    fn contact_only_calibration_is_exact() {
        let params = ModelParams::lo(0.0, 0);
        let grid = GridOptions::default();
        let (c, p, cutoff) = (0.37, 0.2, 8.0);
        let sol = solve_k(
            &params,
            &CountertermSet::lo(c, cutoff),
            &grid.build(cutoff, p, &[]).unwrap(),
        )
        .unwrap();
        let fit = calibrate_c0(
            &params,
            cutoff,
            Datum::new(p, sol.onshell_value),
            -2.0,
            &grid,
        )
        .unwrap();
        assert!((fit.coupling - c).abs() < 1e-10 * c, "{}", fit.coupling);
        assert!(fit.residual.abs() < 1e-10);
    }

    #[test]
    fn calibration_recovers_analytic_running() {
        let params = p_wave();
        let grid = GridOptions::default();
        let (p, cutoff) = (0.1, 100.0);
        let c = analytic_c0(&params, cutoff, 0.2).unwrap();
        let sol = solve_k(
            &params,
            &CountertermSet::lo(c, cutoff),
            &grid.build(cutoff, p, &[]).unwrap(),
        )
        .unwrap();
        let datum = Datum::new(p, sol.onshell_value);
        for seed in [c, 0.0, -10.0 * c] {
            let fit = calibrate_c0(&params, cutoff, datum, seed, &grid).unwrap();
            assert!(((fit.coupling - c) / c).abs() < 1e-8);
            assert!(fit.residual.abs() <= CALIBRATION_TOLERANCE);
        }
    }

    #[test]
    fn calibration_rejects_bad_datum() {
        let params = p_wave();
        let grid = GridOptions::default();
        assert!(calibrate_c0(&params, 0.5, Datum::new(0.1, 1.0), 0.0, &grid).is_err());
        assert!(calibrate_c0(&params, 5.0, Datum::new(0.1, f64::NAN), 0.0, &grid).is_err());
    }
}
