//! Diagnostics: log-periodic asymptotics, weak-coupling checks and
//! cutoff-variation fits.

use std::f64::consts::PI;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned, Vector4, U4};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::solver::{solve_k, GridOptions};

/// Fit of `A x^w cos(ν ln x + φ)` to half-off-shell samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationFit {
    pub nu_fit: f64,
    /// `φ` in `[0, π)`; the sign of `amplitude` absorbs the rest.
    pub phase_fit: f64,
    pub amplitude: f64,
    pub envelope_power: f64,
    pub fit_window: (f64, f64),
    /// RMS of `(y − model)/(|A| x^w)` over the window.
    pub residual: f64,
    pub crossings: usize,
}

impl OscillationFit {
    /// `Λ*` implied by the phase when the samples are `k(p x, p)`:
    /// `cos(ν ln(x p/Λ*))`, reported in `(p·exp(−π/ν), p]`.
    pub fn lambda_star(&self, p: f64) -> f64 {
        p * (-self.phase_fit / self.nu_fit).exp()
    }
}

/// Finds the log-frequency, envelope and phase of oscillating samples.
///
/// Zero crossings are located by sign changes refined linearly in `ln x`;
/// their spacing gives `ν`, the extrema between them give the envelope, and
/// a Levenberg-Marquardt fit weighted by the initial envelope refines all
/// four parameters.
pub fn fit_oscillation(samples: &[(f64, f64)]) -> Result<OscillationFit> {
    if samples.len() < 8 {
        return Err(Error::WindowTooSmall(format!(
            "{} samples, need at least 8",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(x, y)| !(*x > 0.0) || !x.is_finite() || !y.is_finite())
        || samples.windows(2).any(|w| w[1].0 <= w[0].0)
    {
        return Err(Error::Domain(
            "samples need increasing positive x and finite values".into(),
        ));
    }
    let t: Vec<f64> = samples.iter().map(|(x, _)| x.ln()).collect();
    let y: Vec<f64> = samples.iter().map(|(_, y)| *y).collect();

    let mut crossings = Vec::new();
    for i in 0..y.len() - 1 {
        if y[i] == 0.0 {
            crossings.push((i, t[i]));
        } else if y[i] * y[i + 1] < 0.0 {
            crossings.push((i, t[i] - y[i] * (t[i + 1] - t[i]) / (y[i + 1] - y[i])));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::WindowTooSmall(format!(
            "{} zero crossings in the window, need at least 3",
            crossings.len()
        )));
    }

    let index: Vec<f64> = (0..crossings.len()).map(|i| i as f64).collect();
    let position: Vec<f64> = crossings.iter().map(|c| c.1).collect();
    let (spacing, _) = linear_fit(&index, &position);
    let nu = PI / spacing;

    // Largest |y| strictly between consecutive crossings.
    let mut peak_t = Vec::new();
    let mut peak_y = Vec::new();
    for pair in crossings.windows(2) {
        let (lo, hi) = (pair[0].0 + 1, pair[1].0);
        if let Some(i) = (lo..=hi).max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs())) {
            peak_t.push(t[i]);
            peak_y.push(y[i].abs().ln());
        }
    }
    let (power, log_amp) = linear_fit(&peak_t, &peak_y);

    // cos(ν t + φ) vanishes at the first crossing; pick the sign from the data after it.
    let first = crossings[0];
    let mut phase = PI / 2.0 - nu * first.1;
    let after = y[(first.0 + 1).min(y.len() - 1)];
    let mut amplitude = log_amp.exp();
    if (nu * t[first.0 + 1] + phase).cos() * after < 0.0 {
        amplitude = -amplitude;
    }
    phase = phase.rem_euclid(2.0 * PI);

    let weights: Vec<f64> = t
        .iter()
        .map(|ti| (-power * ti).exp() / amplitude.abs())
        .collect();
    let problem = OscillationProblem {
        t: &t,
        y: &y,
        weights: &weights,
        params: Vector4::new(amplitude, power, nu, phase),
    };
    let (solved, report) = LevenbergMarquardt::new().minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::NotConverged {
            relative_change: report.objective_function,
            condition: f64::NAN,
        });
    }
    let [mut a, w, nu, mut phi] = [
        solved.params[0],
        solved.params[1],
        solved.params[2],
        solved.params[3],
    ];
    phi = phi.rem_euclid(2.0 * PI);
    if phi >= PI {
        phi -= PI;
        a = -a;
    }
    let residual = (t
        .iter()
        .zip(&y)
        .map(|(ti, yi)| {
            let env = a.abs() * (w * ti).exp();
            ((yi - a * (w * ti).exp() * (nu * ti + phi).cos()) / env).powi(2)
        })
        .sum::<f64>()
        / t.len() as f64)
        .sqrt();

    Ok(OscillationFit {
        nu_fit: nu,
        phase_fit: phi,
        amplitude: a,
        envelope_power: w,
        fit_window: (samples[0].0, samples[samples.len() - 1].0),
        residual,
        crossings: crossings.len(),
    })
}

/// Weighted residuals `w_i (y_i − A e^{w t_i} cos(ν t_i + φ))`.
struct OscillationProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    weights: &'a [f64],
    params: Vector4<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U4> for OscillationProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, x: &Vector4<f64>) {
        self.params = *x;
    }

    fn params(&self) -> Vector4<f64> {
        self.params
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let [a, w, nu, phi] = [
            self.params[0],
            self.params[1],
            self.params[2],
            self.params[3],
        ];
        Some(DVector::from_iterator(
            self.t.len(),
            self.t
                .iter()
                .zip(self.y)
                .zip(self.weights)
                .map(|((t, y), s)| s * (y - a * (w * t).exp() * (nu * t + phi).cos())),
        ))
    }

    fn jacobian(&self) -> Option<nalgebra::OMatrix<f64, Dyn, U4>> {
        let [a, w, nu, phi] = [
            self.params[0],
            self.params[1],
            self.params[2],
            self.params[3],
        ];
        let mut jac = nalgebra::OMatrix::<f64, Dyn, U4>::zeros(self.t.len());
        for (i, (t, s)) in self.t.iter().zip(self.weights).enumerate() {
            let env = (w * t).exp();
            let (sin, cos) = (nu * t + phi).sin_cos();
            jac[(i, 0)] = -s * env * cos;
            jac[(i, 1)] = -s * a * t * env * cos;
            jac[(i, 2)] = s * a * env * t * sin;
            jac[(i, 3)] = s * a * env * sin;
        }
        Some(jac)
    }
}

/// Least-squares line `y = slope x + intercept`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Weak-coupling comparison of the solved on-shell amplitude with the Born series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BornReport {
    pub lambda: f64,
    pub solved: f64,
    /// `−λ/(2l+1)`.
    pub first_born: f64,
    /// Second-order term with the principal-value propagator at this cutoff.
    pub second_born: f64,
    /// `solved − first_born`.
    pub residual: f64,
    /// `solved − first_born − second_born`.
    pub residual_beyond_second: f64,
}

/// Solves at coupling `params.lambda` without counterterms and compares with
/// the first two Born terms.
pub fn born_check(
    params: &ModelParams,
    p: f64,
    cutoff: f64,
    grid: &GridOptions,
) -> Result<BornReport> {
    let grid = grid.build(cutoff, p, &[])?;
    let solved = solve_k(params, &crate::model::CountertermSet::none(cutoff), &grid)?.onshell_value;
    let a = params.degeneracy();
    let lambda = params.lambda;
    let first_born = -lambda / a;
    // −(λ/a)² PV∫₀^{Λ/p} dy y²/(y² − 1) s(y)², s = y^l below 1 and y^{−l−1} above;
    // the integral to infinity is 1/a, minus a convergent tail.
    let x = cutoff / p;
    let two_l = 2.0 * f64::from(params.l);
    let mut tail = 0.0;
    for k in 0.. {
        let e = two_l + 2.0 * f64::from(k) + 1.0;
        let term = x.powf(-e) / e;
        tail += term;
        if term < 1e-18 * tail || k > 10_000 {
            break;
        }
    }
    let second_born = -(lambda / a).powi(2) * (1.0 / a - tail);
    Ok(BornReport {
        lambda,
        solved,
        first_born,
        second_born,
        residual: solved - first_born,
        residual_beyond_second: solved - first_born - second_born,
    })
}

/// Spread of an observable over a cutoff sweep and the power of its approach
/// to the infinite-cutoff limit.
#[derive(Debug, Clone, PartialEq)]
pub struct RgVariation {
    /// `(max − min)/|median|`.
    pub spread: f64,
    /// Fitted `n` in `v∞ + Λ^{−n} (…)`; `None` for constant input.
    pub power: Option<f64>,
    pub limit: Option<f64>,
    /// Fitted bound on `|v − v∞|` at the smallest cutoff,
    /// `Λ_min^{−n} (|a| + √(b² + c²))`.
    pub envelope: Option<f64>,
    /// RMS fit residual relative to the RMS deviation of the input from its mean.
    pub misfit: f64,
    /// The fit describes the data and `n` is not pinned at a search bound.
    pub power_law: bool,
}

/// Bounds of the power search.
const POWER_RANGE: (f64, f64) = (0.25, 6.0);
/// Largest misfit accepted as a power law.
const POWER_LAW_MISFIT: f64 = 0.1;

/// Fits `v(Λ) = v∞ + Λ^{−n} (a + b cos(2π ln Λ/P) + c sin(2π ln Λ/P))`.
///
/// The oscillating terms are included when `log_period = Some(P)`, for
/// residuals modulated log-periodically as in a limit cycle.
pub fn rg_variation(
    cutoffs: &[f64],
    values: &[f64],
    log_period: Option<f64>,
) -> Result<RgVariation> {
    if cutoffs.len() != values.len() || cutoffs.len() < 4 {
        return Err(Error::Domain(format!(
            "need at least 4 matched cutoffs and values, got {} and {}",
            cutoffs.len(),
            values.len()
        )));
    }
    if cutoffs.iter().any(|c| !(*c > 0.0)) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "cutoffs must be positive and values finite".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let range = sorted[sorted.len() - 1] - sorted[0];
    let spread = if range == 0.0 {
        0.0
    } else {
        range / median.abs()
    };
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let deviation =
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    if deviation == 0.0 {
        return Ok(RgVariation {
            spread,
            power: None,
            limit: Some(mean),
            envelope: Some(0.0),
            misfit: 0.0,
            power_law: false,
        });
    }
    let columns = if log_period.is_some() { 4 } else { 2 };
    if cutoffs.len() <= columns {
        return Err(Error::Domain(format!(
            "need more than {columns} cutoffs for this fit"
        )));
    }
    let fit = |n: f64| -> (f64, DVector<f64>) {
        let design = DMatrix::from_fn(cutoffs.len(), columns, |i, j| {
            let scale = cutoffs[i].powf(-n);
            let angle = log_period.map_or(0.0, |p| 2.0 * PI * cutoffs[i].ln() / p);
            match j {
                0 => 1.0,
                1 => scale,
                2 => scale * angle.cos(),
                _ => scale * angle.sin(),
            }
        });
        let rhs = DVector::from_column_slice(values);
        let svd = design.clone().svd(true, true);
        let Ok(coef) = svd.solve(&rhs, 1e-14) else {
            return (f64::INFINITY, DVector::from_element(columns, f64::NAN));
        };
        let rms = ((design * &coef - rhs).norm_squared() / cutoffs.len() as f64).sqrt();
        (rms, coef)
    };
    // Golden-section search in ln n.
    let (mut lo, mut hi) = (POWER_RANGE.0.ln(), POWER_RANGE.1.ln());
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let (mut f1, mut f2) = (fit(x1.exp()).0, fit(x2.exp()).0);
    while hi - lo > 1e-8 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = fit(x1.exp()).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = fit(x2.exp()).0;
        }
    }
    let n = (0.5 * (lo + hi)).exp();
    let (rms, coef) = fit(n);
    let misfit = rms / deviation;
    let smallest = cutoffs.iter().copied().fold(f64::INFINITY, f64::min);
    let modulation = if columns == 4 {
        coef[2].hypot(coef[3])
    } else {
        0.0
    };
    let envelope = smallest.powf(-n) * (coef[1].abs() + modulation);
    let interior = n > POWER_RANGE.0 * 1.01 && n < POWER_RANGE.1 / 1.01;
    Ok(RgVariation {
        spread,
        power: Some(n),
        limit: Some(coef[0]),
        envelope: Some(envelope),
        misfit,
        power_law: interior && misfit < POWER_LAW_MISFIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(nu: f64, phase: f64, amp: f64, power: f64) -> Vec<(f64, f64)> {
        (0..400)
            .map(|i| {
                let x = 20.0 * 1.02f64.powi(i);
                (x, amp * x.powf(power) * (nu * x.ln() + phase).cos())
            })
            .collect()
    }

    #[test]
    fn synthetic_oscillation_round_trip() {
        let fit = fit_oscillation(&synthetic(2f64.sqrt(), 0.3, 1.0, -0.5)).unwrap();
        assert!((fit.nu_fit - 2f64.sqrt()).abs() < 1e-3, "{fit:?}");
        assert!((fit.envelope_power + 0.5).abs() < 1e-3);
        assert!((fit.phase_fit - 0.3).abs() < 1e-3);
        assert!(fit.residual < 1e-6);
        assert!(fit.crossings >= 3);
    }

    #[test]
    fn oscillation_fit_is_scale_invariant() {
        let base = synthetic(1.6, 2.0, 0.7, -0.4);
        let scaled: Vec<_> = base.iter().map(|(x, y)| (*x, -3.5 * y)).collect();
        let a = fit_oscillation(&base).unwrap();
        let b = fit_oscillation(&scaled).unwrap();
        assert!((a.nu_fit - b.nu_fit).abs() < 1e-9);
        assert!((a.phase_fit - b.phase_fit).abs() < 1e-9);
        assert!((a.envelope_power - b.envelope_power).abs() < 1e-9);
        assert!((b.amplitude / a.amplitude + 3.5).abs() < 1e-8);
    }

    #[test]
    fn too_few_crossings() {
        let short: Vec<_> = synthetic(2f64.sqrt(), 0.3, 1.0, -0.5)
            .into_iter()
            .take(60)
            .collect();
        assert!(matches!(
            fit_oscillation(&short),
            Err(Error::WindowTooSmall(_))
        ));
        assert!(fit_oscillation(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn lambda_star_from_phase() {
        // cos(ν ln(x p/Λ*)) with p = 0.1, Λ* = 0.2.
        let nu = 2f64.sqrt();
        let samples: Vec<_> = (0..400)
            .map(|i| {
                let x = 20.0 * 1.02f64.powi(i);
                (x, x.powf(-0.5) * (nu * (x * 0.1 / 0.2).ln()).cos())
            })
            .collect();
        let fit = fit_oscillation(&samples).unwrap();
        let star = fit.lambda_star(0.1);
        let cycles = (star / 0.2).ln() / (PI / nu);
        assert!((cycles - cycles.round()).abs() < 1e-6, "{star}");
    }

    #[test]
    fn born_terms_for_weak_coupling() {
        let grid = GridOptions::default();
        let s = born_check(&ModelParams::lo(1e-3, 0), 0.1, 1000.0, &grid).unwrap();
        assert!(s.residual_beyond_second.abs() < 10.0 * 1e-9, "{s:?}");
        let d = born_check(&ModelParams::lo(1e-3, 2), 0.1, 1000.0, &grid).unwrap();
        assert!((d.solved + 1e-3 / 5.0).abs() < 1e-7);
        let twice = born_check(&ModelParams::lo(2e-3, 0), 0.1, 1000.0, &grid).unwrap();
        let ratio = twice.residual / s.residual;
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn born_residual_shrinks_with_coupling() {
        let grid = GridOptions::default();
        let residuals: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&l| {
                born_check(&ModelParams::lo(l, 1), 0.2, 50.0, &grid)
                    .unwrap()
                    .residual
                    .abs()
            })
            .collect();
        assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
    }

    #[test]
    fn constant_sweep_has_no_spread() {
        let v = rg_variation(&[1.0, 2.0, 4.0, 8.0], &[3.0; 4], None).unwrap();
        assert_eq!(v.spread, 0.0);
        assert_eq!(v.power, None);
    }

    #[test]
    fn power_law_is_recovered() {
        let cutoffs: Vec<f64> = (0..8).map(|i| 5.0 * 1.5f64.powi(i)).collect();
        let values: Vec<f64> = cutoffs.iter().map(|c| 0.3 + 2.0 / (c * c)).collect();
        let v = rg_variation(&cutoffs, &values, None).unwrap();
        assert!((v.power.unwrap() - 2.0).abs() < 1e-4);
        assert!(v.power_law);
        let modulated: Vec<f64> = cutoffs
            .iter()
            .map(|c| 0.3 + (2.0 + 0.8 * (2.0 * PI * c.ln() / 2.2).sin()) / (c * c))
            .collect();
        let v = rg_variation(&cutoffs, &modulated, Some(2.2)).unwrap();
        assert!((v.power.unwrap() - 2.0).abs() < 1e-4, "{v:?}");
        let expected = (2.0 + 0.8) / 25.0;
        assert!((v.envelope.unwrap() - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn oscillating_sweep_is_flagged() {
        let cutoffs: Vec<f64> = (0..12).map(|i| 5.0 * 1.5f64.powi(i)).collect();
        let values: Vec<f64> = cutoffs.iter().map(|c| (1.7 * c.ln()).sin()).collect();
        let v = rg_variation(&cutoffs, &values, None).unwrap();
        assert!(v.spread > 1.0);
        assert!(!v.power_law, "{v:?}");
    }

    #[test]
    fn too_few_cutoffs() {
        assert!(rg_variation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], None).is_err());
    }
}
