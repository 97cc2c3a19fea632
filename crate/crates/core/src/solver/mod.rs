//! Nyström solution of the cutoff partial-wave K-matrix equation
//!
//! ```text
//! k(p', p) = (mp/π²) V(p', p) − PV ∫₀^Λ dq  q/(q² − p²) (mq/π²) V(p', q) k(q, p)
//! ```
//!
//! The principal value is handled by subtracting the integrand at `q = p` and
//! adding back `pv_moment(p, Λ)`. The on-shell value `k(p, p)` is an extra
//! unknown. Long-range kernels have a kink at `q = p'`; every row integrates
//! across that kink with the containing panel split in two, reading the
//! solution at the new points off the panel's interpolating polynomial.

mod grid;

pub use grid::{build_grid, pv_moment, GridOptions, Panel, QuadratureGrid, ReferenceRule};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{lo_shape, nlo_shape, CountertermSet, ModelParams};

/// Condition number above which a solve is treated as sitting on a pole.
pub const POLE_CONDITION: f64 = 1e12;

/// Which parts of the potential enter a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Iterate the inverse-quartic potential as well (diagnostics only).
    pub include_nlo_long_range: bool,
    pub max_condition: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            include_nlo_long_range: false,
            max_condition: POLE_CONDITION,
        }
    }
}

/// `coef · p'^out_power · q^in_power`, a separable piece of `(m/π²) V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Separable {
    pub coef: f64,
    pub out_power: i32,
    pub in_power: i32,
}

/// The reduced potential `(m/π²) V(p', q)` of one solve.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ReducedPotential {
    l: u32,
    lo_scale: f64,
    nlo_scale: f64,
    pub separable: Vec<Separable>,
}

impl ReducedPotential {
    pub fn new(
        params: &ModelParams,
        counterterms: &CountertermSet,
        options: &SolveOptions,
    ) -> Result<Self> {
        params.validate()?;
        counterterms.validate()?;
        let nlo_scale = if options.include_nlo_long_range && params.g != 0.0 {
            -params.g / (2.0 * params.big_m * params.big_m)
        } else {
            0.0
        };
        let mut separable = Vec::new();
        if counterterms.c_lo != 0.0 {
            let l = params.l as i32;
            separable.push(Separable {
                coef: counterterms.c_lo / params.degeneracy(),
                out_power: l,
                in_power: l,
            });
        }
        if counterterms.has_nlo_contacts() {
            if params.l != 0 {
                return Err(Error::UnsupportedChannel(format!(
                    "NLO contacts are S-wave only, got l = {}",
                    params.l
                )));
            }
            separable.extend([
                Separable {
                    coef: counterterms.c_nlo,
                    out_power: 0,
                    in_power: 0,
                },
                Separable {
                    coef: counterterms.d_nlo,
                    out_power: 2,
                    in_power: 0,
                },
                Separable {
                    coef: counterterms.d_nlo,
                    out_power: 0,
                    in_power: 2,
                },
            ]);
        }
        Ok(Self {
            l: params.l,
            lo_scale: -params.lambda / params.degeneracy(),
            nlo_scale,
            separable,
        })
    }

    /// Long-range part only; kinked at `q = p_out`.
    pub fn long_range(&self, p_out: f64, q: f64) -> f64 {
        let mut v = 0.0;
        if self.lo_scale != 0.0 {
            v += self.lo_scale * lo_shape(self.l, p_out, q);
        }
        if self.nlo_scale != 0.0 {
            v += self.nlo_scale * nlo_shape(self.l, p_out, q);
        }
        v
    }

    pub fn has_long_range(&self) -> bool {
        self.lo_scale != 0.0 || self.nlo_scale != 0.0
    }

    pub fn separable_value(&self, p_out: f64, q: f64) -> f64 {
        self.separable
            .iter()
            .map(|s| s.coef * p_out.powi(s.out_power) * q.powi(s.in_power))
            .sum()
    }
}

/// Quadrature weights `W_j` over the nodes (then the on-shell point, last)
/// such that `PV∫₀^Λ dq q² K(q) f(q) / (q² − p²) ≈ Σ_j W_j f_j`.
///
/// When `kink` falls inside a panel, that panel is integrated as two halves
/// and `f` is interpolated on the panel's nodes.
pub(crate) fn pv_row_weights(
    grid: &QuadratureGrid,
    kernel: impl Fn(f64) -> f64,
    kink: Option<f64>,
    out: &mut [f64],
) {
    let n = grid.len();
    debug_assert_eq!(out.len(), n + 1);
    out.iter_mut().for_each(|w| *w = 0.0);
    let p = grid.onshell;
    let p2 = p * p;
    let mut coeffs = vec![0.0; grid.max_panel_len()];
    let mut subtraction = 0.0;
    let tol = 1e-13 * grid.cutoff;

    for panel in &grid.panels {
        let split = kink.filter(|&k| k > panel.lower + tol && k < panel.upper - tol);
        let rule = grid.rule(panel);
        let per_panel = rule.len();
        match split {
            None => {
                let span = panel.start..panel.start + per_panel;
                for ((o, &q), &w) in out[span.clone()]
                    .iter_mut()
                    .zip(&grid.nodes[span.clone()])
                    .zip(&grid.weights[span])
                {
                    let d = w / (q * q - p2);
                    *o += d * q * q * kernel(q);
                    subtraction += d;
                }
            }
            Some(k) => {
                for (a, b) in [(panel.lower, k), (k, panel.upper)] {
                    for (q, w) in rule.mapped(a, b) {
                        let d = w / (q * q - p2);
                        let c = d * q * q * kernel(q);
                        subtraction += d;
                        grid.interpolation_coefficients(panel, q, &mut coeffs);
                        for (o, cj) in out[panel.start..panel.start + per_panel]
                            .iter_mut()
                            .zip(&coeffs)
                        {
                            *o += c * cj;
                        }
                    }
                }
            }
        }
    }
    let moment = pv_moment(p, grid.cutoff).expect("grid guarantees 0 < p < cutoff");
    out[n] += p2 * kernel(p) * (moment - subtraction);
}

/// Evaluation points of the Nyström rows: every node, then the on-shell point.
fn row_points(grid: &QuadratureGrid) -> Vec<f64> {
    grid.nodes
        .iter()
        .copied()
        .chain(std::iter::once(grid.onshell))
        .collect()
}

/// Operator row for one evaluation point, `δ`-part excluded:
/// `Σ_j row_j k_j` is the PV integral term of the equation at `p_out`.
fn operator_row(
    potential: &ReducedPotential,
    grid: &QuadratureGrid,
    separable_rows: &[Vec<f64>],
    p_out: f64,
    out: &mut [f64],
) {
    if potential.has_long_range() {
        pv_row_weights(grid, |q| potential.long_range(p_out, q), Some(p_out), out);
    } else {
        out.iter_mut().for_each(|w| *w = 0.0);
    }
    for (s, row) in potential.separable.iter().zip(separable_rows) {
        let scale = s.coef * p_out.powi(s.out_power);
        for (o, r) in out.iter_mut().zip(row) {
            *o += scale * r;
        }
    }
}

fn separable_rows(potential: &ReducedPotential, grid: &QuadratureGrid) -> Vec<Vec<f64>> {
    potential
        .separable
        .iter()
        .map(|s| {
            let mut row = vec![0.0; grid.len() + 1];
            let power = s.in_power;
            pv_row_weights(grid, |q| q.powi(power), None, &mut row);
            row
        })
        .collect()
}

/// Inhomogeneous term `(mp/π²) V(p', p)` in reduced units.
fn driving_term(potential: &ReducedPotential, p: f64, p_out: f64) -> f64 {
    p * (potential.long_range(p_out, p) + potential.separable_value(p_out, p))
}

/// The assembled Nyström system `A k = b`.
pub(crate) struct NystromSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub potential: ReducedPotential,
    pub separable_rows: Vec<Vec<f64>>,
}

pub(crate) fn assemble(
    params: &ModelParams,
    counterterms: &CountertermSet,
    grid: &QuadratureGrid,
    options: &SolveOptions,
) -> Result<NystromSystem> {
    check_grid(counterterms, grid)?;
    let potential = ReducedPotential::new(params, counterterms, options)?;
    let separable_rows = separable_rows(&potential, grid);
    let points = row_points(grid);
    let size = points.len();
    let p = grid.onshell;

    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|&p_out| {
            let mut row = vec![0.0; size];
            operator_row(&potential, grid, &separable_rows, p_out, &mut row);
            row
        })
        .collect();
    let mut matrix = DMatrix::from_fn(size, size, |r, c| rows[r][c]);
    for i in 0..size {
        matrix[(i, i)] += 1.0;
    }
    let rhs = DVector::from_iterator(size, points.iter().map(|&q| driving_term(&potential, p, q)));
    Ok(NystromSystem {
        matrix,
        rhs,
        potential,
        separable_rows,
    })
}

fn check_grid(counterterms: &CountertermSet, grid: &QuadratureGrid) -> Result<()> {
    let rel = (grid.cutoff - counterterms.cutoff).abs() / counterterms.cutoff;
    if rel > 1e-12 {
        return Err(Error::Config(format!(
            "grid cutoff {} differs from counterterm cutoff {}",
            grid.cutoff, counterterms.cutoff
        )));
    }
    Ok(())
}

/// LU factors plus a 1-norm condition estimate.
pub(crate) struct Factorized {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub condition: f64,
}

impl Factorized {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let norm = one_norm(&matrix);
        let lu = matrix.lu();
        let condition = if lu.is_invertible() {
            norm * inverse_one_norm(&lu)
        } else {
            f64::INFINITY
        };
        Self { lu, condition }
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        self.lu.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        self.lu.solve(rhs)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's estimate of `‖A⁻¹‖₁` from the LU factors.
fn inverse_one_norm(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = lu.l().nrows();
    let l = lu.l();
    let u = lu.u();
    let perm = lu.p();
    let solve_transpose = |b: &DVector<f64>| -> Option<DVector<f64>> {
        let y = u.tr_solve_upper_triangular(b)?;
        let mut w = l.tr_solve_lower_triangular(&y)?;
        perm.inv_permute_rows(&mut w);
        Some(w)
    };
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else {
            return f64::INFINITY;
        };
        estimate = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = solve_transpose(&xi) else {
            return f64::INFINITY;
        };
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v.abs()))
            .fold((0, 0.0), |acc, e| if e.1 > acc.1 { e } else { acc });
        if zmax <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[jmax] = 1.0;
    }
    // Higham's alternating test vector guards against unlucky cancellation.
    let alt = DVector::from_fn(n, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * (1.0 + i as f64 / (n.max(2) - 1) as f64)
    });
    if let Some(y) = lu.solve(&alt) {
        let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        estimate = estimate.max(alt_est);
    }
    estimate
}

/// Solved half-off-shell column `k_l(q_i, p)` plus the on-shell value.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfOffShellK {
    pub params: ModelParams,
    pub counterterms: CountertermSet,
    pub grid: QuadratureGrid,
    pub options: SolveOptions,
    pub column: Vec<f64>,
    pub onshell_value: f64,
    pub p: f64,
    pub condition: f64,
}

impl HalfOffShellK {
    /// Column values followed by the on-shell value.
    pub fn unknowns(&self) -> Vec<f64> {
        self.column
            .iter()
            .copied()
            .chain(std::iter::once(self.onshell_value))
            .collect()
    }
}

/// Solves the cutoff K-matrix equation at on-shell momentum `p = grid.onshell`.
pub fn solve_k(
    params: &ModelParams,
    counterterms: &CountertermSet,
    grid: &QuadratureGrid,
) -> Result<HalfOffShellK> {
    solve_k_with(params, counterterms, grid, &SolveOptions::default())
}

pub fn solve_k_with(
    params: &ModelParams,
    counterterms: &CountertermSet,
    grid: &QuadratureGrid,
    options: &SolveOptions,
) -> Result<HalfOffShellK> {
    let system = assemble(params, counterterms, grid, options)?;
    let factors = Factorized::new(system.matrix);
    if factors.condition > options.max_condition {
        return Err(Error::Pole {
            cutoff: grid.cutoff,
            detail: format!(
                "condition number {:.3e} exceeds {:.1e} at p = {}",
                factors.condition, options.max_condition, grid.onshell
            ),
        });
    }
    let x = factors.solve(&system.rhs).ok_or_else(|| Error::Pole {
        cutoff: grid.cutoff,
        detail: "singular Nyström matrix".into(),
    })?;
    let n = grid.len();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned {
            condition: factors.condition,
            detail: "non-finite solution".into(),
        });
    }
    Ok(HalfOffShellK {
        params: *params,
        counterterms: *counterterms,
        grid: grid.clone(),
        options: *options,
        column: x.as_slice()[..n].to_vec(),
        onshell_value: x[n],
        p: grid.onshell,
        condition: factors.condition,
    })
}

/// Evaluates `k_l(p_out, p)` by substituting the solved column into the
/// right-hand side of the integral equation.
pub fn eval_offshell(sol: &HalfOffShellK, p_out: f64) -> Result<f64> {
    if !(p_out > 0.0) || p_out > sol.grid.cutoff * (1.0 + 1e-14) {
        return Err(Error::Domain(format!(
            "need 0 < p' <= cutoff = {}, got {p_out}",
            sol.grid.cutoff
        )));
    }
    let potential = ReducedPotential::new(&sol.params, &sol.counterterms, &sol.options)?;
    let rows = separable_rows(&potential, &sol.grid);
    Ok(eval_with(
        &potential,
        &sol.grid,
        &rows,
        &sol.unknowns(),
        p_out,
    ))
}

fn eval_with(
    potential: &ReducedPotential,
    grid: &QuadratureGrid,
    separable_rows: &[Vec<f64>],
    unknowns: &[f64],
    p_out: f64,
) -> f64 {
    let mut row = vec![0.0; unknowns.len()];
    operator_row(potential, grid, separable_rows, p_out, &mut row);
    let integral: f64 = row.iter().zip(unknowns).map(|(a, b)| a * b).sum();
    driving_term(potential, grid.onshell, p_out) - integral
}

/// Evaluates the half-off-shell amplitude at many momenta.
pub fn eval_offshell_many(sol: &HalfOffShellK, p_out: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p_out
        .iter()
        .find(|q| !(**q > 0.0) || **q > sol.grid.cutoff * (1.0 + 1e-14))
    {
        return Err(Error::Domain(format!(
            "need 0 < p' <= cutoff = {}, got {bad}",
            sol.grid.cutoff
        )));
    }
    let potential = ReducedPotential::new(&sol.params, &sol.counterterms, &sol.options)?;
    let rows = separable_rows(&potential, &sol.grid);
    let unknowns = sol.unknowns();
    Ok(p_out
        .par_iter()
        .map(|&q| eval_with(&potential, &sol.grid, &rows, &unknowns, q))
        .collect())
}

/// `δ_l = arctan(π² k_l(p, p))`.
pub fn phase_shift(sol: &HalfOffShellK) -> f64 {
    phase_shift_from_k(sol.onshell_value)
}

pub fn phase_shift_from_k(k: f64) -> f64 {
    (std::f64::consts::PI.powi(2) * k).atan()
}

/// Exact dependence of the on-shell amplitude on the LO contact coupling.
///
/// The LO contact is rank one, so `k(p, p; C)` is a linear-fractional
/// function of `C` around the reference coupling the system was factored at:
/// `k(C) = x_p + y_p δ (s − J·x) / (1 + δ J·y)`, `δ = C − C_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactResponse {
    pub reference: f64,
    pub cutoff: f64,
    pub p: f64,
    x_onshell: f64,
    y_onshell: f64,
    j_x: f64,
    j_y: f64,
    source: f64,
    pub condition: f64,
}

impl ContactResponse {
    pub fn onshell(&self, c: f64) -> f64 {
        let delta = c - self.reference;
        let denom = 1.0 + delta * self.j_y;
        self.x_onshell + self.y_onshell * delta * (self.source - self.j_x) / denom
    }

    /// Coupling at which `k(p, p)` diverges (threshold bound state).
    pub fn singular_coupling(&self) -> Option<f64> {
        (self.j_y != 0.0).then(|| self.reference - 1.0 / self.j_y)
    }

    /// `k(p, p)` in the limit `|C| → ∞`.
    pub fn asymptote(&self) -> f64 {
        if self.j_y == 0.0 {
            f64::INFINITY
        } else {
            self.x_onshell + self.y_onshell * (self.source - self.j_x) / self.j_y
        }
    }

    /// The coupling reproducing `k(p, p) = target`, as `1/C` so that the
    /// answer stays finite through limit-cycle poles.
    pub fn inverse_coupling_for(&self, target: f64) -> f64 {
        // (target − x)(1 + δ Jy) = y δ (s − Jx)  ⇒  δ = (target − x)/(y(s − Jx) − (target − x)Jy)
        let r = target - self.x_onshell;
        let num = self.y_onshell * (self.source - self.j_x) - r * self.j_y;
        // C = C_ref + r/num  ⇒  1/C = num/(C_ref num + r)
        num / (self.reference * num + r)
    }
}

/// Factors the system at `counterterms.c_lo` and returns the LO-contact response.
pub fn contact_response(
    params: &ModelParams,
    counterterms: &CountertermSet,
    grid: &QuadratureGrid,
) -> Result<ContactResponse> {
    let options = SolveOptions::default();
    let system = assemble(params, counterterms, grid, &options)?;
    let factors = Factorized::new(system.matrix);
    if factors.condition > options.max_condition {
        return Err(Error::Pole {
            cutoff: grid.cutoff,
            detail: format!(
                "condition number {:.3e} at reference coupling",
                factors.condition
            ),
        });
    }
    let n = grid.len();
    let l = params.l as i32;
    let deg = params.degeneracy();
    let u = DVector::from_iterator(n + 1, row_points(grid).into_iter().map(|q| q.powi(l) / deg));
    let mut j = vec![0.0; n + 1];
    pv_row_weights(grid, |q| q.powi(l), None, &mut j);
    let j = DVector::from_vec(j);
    let fail = || Error::Pole {
        cutoff: grid.cutoff,
        detail: "singular Nyström matrix".into(),
    };
    let x = factors.solve(&system.rhs).ok_or_else(fail)?;
    let y = factors.solve(&u).ok_or_else(fail)?;
    let p = grid.onshell;
    Ok(ContactResponse {
        reference: counterterms.c_lo,
        cutoff: grid.cutoff,
        p,
        x_onshell: x[n],
        y_onshell: y[n],
        j_x: j.dot(&x),
        j_y: j.dot(&y),
        source: p.powi(l + 1),
        condition: factors.condition,
    })
}

/// Fully off-shell `(m/π²) K(s_a, s_b)` at energy `p²/2m` for the given
/// momenta. Accurate when each `s_b` is a panel edge of `grid`, since the
/// off-shell column is kinked there.
pub fn offshell_block(
    params: &ModelParams,
    counterterms: &CountertermSet,
    grid: &QuadratureGrid,
    momenta: &[f64],
) -> Result<DMatrix<f64>> {
    if let Some(bad) = momenta.iter().find(|s| !(**s > 0.0) || **s > grid.cutoff) {
        return Err(Error::Domain(format!(
            "off-shell momentum {bad} outside (0, cutoff]"
        )));
    }
    let system = assemble(params, counterterms, grid, &SolveOptions::default())?;
    let points = row_points(grid);
    let potential = &system.potential;
    let reduced = |a: f64, b: f64| potential.long_range(a, b) + potential.separable_value(a, b);
    let rhs = DMatrix::from_fn(points.len(), momenta.len(), |r, c| {
        reduced(points[r], momenta[c])
    });
    let factors = Factorized::new(system.matrix);
    let x = factors.solve_matrix(&rhs).ok_or_else(|| Error::Pole {
        cutoff: grid.cutoff,
        detail: "singular Nyström matrix".into(),
    })?;
    let mut row = vec![0.0; points.len()];
    let mut block = DMatrix::zeros(momenta.len(), momenta.len());
    for (a, &sa) in momenta.iter().enumerate() {
        operator_row(potential, grid, &system.separable_rows, sa, &mut row);
        for (b, &sb) in momenta.iter().enumerate() {
            let integral: f64 = row.iter().zip(x.column(b).iter()).map(|(w, v)| w * v).sum();
            block[(a, b)] = reduced(sa, sb) - integral;
        }
    }
    Ok(block)
}

/// Solves at `options` and at doubled resolution; fails when the on-shell
/// value moves by more than `tolerance` (relative).
pub fn check_convergence(
    params: &ModelParams,
    counterterms: &CountertermSet,
    p: f64,
    options: &GridOptions,
    tolerance: f64,
) -> Result<f64> {
    let coarse = solve_k(
        params,
        counterterms,
        &options.build(counterterms.cutoff, p, &[])?,
    )?;
    let fine = solve_k(
        params,
        counterterms,
        &options.refined().build(counterterms.cutoff, p, &[])?,
    )?;
    let change = (coarse.onshell_value - fine.onshell_value).abs()
        / fine.onshell_value.abs().max(f64::MIN_POSITIVE);
    if change > tolerance {
        return Err(Error::NotConverged {
            relative_change: change,
            condition: fine.condition,
        });
    }
    Ok(change)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(cutoff: f64, p: f64) -> QuadratureGrid {
        GridOptions::default().build(cutoff, p, &[]).unwrap()
    }

    /// Closed-form bubble sum for a constant S-wave contact.
    fn bubble(c: f64, p: f64, cutoff: f64) -> f64 {
        let loop_integral = cutoff + 0.5 * p * ((cutoff - p) / (cutoff + p)).ln();
        p * c / (1.0 + c * loop_integral)
    }

    #[test]
    fn free_theory_vanishes() {
        let params = ModelParams::lo(0.0, 0);
        let sol = solve_k(&params, &CountertermSet::none(10.0), &grid(10.0, 0.3)).unwrap();
        assert!(sol.column.iter().all(|k| *k == 0.0));
        assert_eq!(sol.onshell_value, 0.0);
    }

    #[test]
    fn contact_only_matches_bubble_sum() {
        let params = ModelParams::lo(0.0, 0);
        for &(c, p, cutoff) in &[(0.7, 0.1, 10.0), (-0.05, 0.4, 6.0), (3.0, 1.0, 20.0)] {
            let sol = solve_k(&params, &CountertermSet::lo(c, cutoff), &grid(cutoff, p)).unwrap();
            let exact = bubble(c, p, cutoff);
            assert!(
                ((sol.onshell_value - exact) / exact).abs() < 1e-10,
                "{} vs {exact}",
                sol.onshell_value
            );
            // Separable potential: the half-off-shell column is flat.
            assert!(sol
                .column
                .iter()
                .all(|k| ((k - exact) / exact).abs() < 1e-10));
        }
    }

    #[test]
    fn nystrom_interpolant_is_exact_at_nodes() {
        let params = ModelParams::lo(4.25, 1);
        let sol = solve_k(&params, &CountertermSet::lo(-0.3, 20.0), &grid(20.0, 0.1)).unwrap();
        for i in [0, 7, 40, 123, sol.column.len() - 1] {
            let v = eval_offshell(&sol, sol.grid.nodes[i]).unwrap();
            assert!((v - sol.column[i]).abs() < 1e-11 * sol.column[i].abs().max(1e-3));
        }
        let v = eval_offshell(&sol, sol.p).unwrap();
        assert!((v - sol.onshell_value).abs() < 1e-11 * sol.onshell_value.abs());
        assert!(eval_offshell(&sol, 20.5).is_err());
        assert!(eval_offshell(&sol, 0.0).is_err());
        assert!(eval_offshell(&sol, 20.0).is_ok());
    }

    #[test]
    fn phase_shift_values() {
        assert_eq!(phase_shift_from_k(0.0), 0.0);
        assert!((phase_shift_from_k(1.0 / (PI * PI)) - PI / 4.0).abs() < 1e-15);
        assert!((phase_shift_from_k(-1.05) + 1.4746).abs() < 1e-4);
    }

    #[test]
    fn contact_response_matches_direct_solves() {
        let params = ModelParams::lo(4.25, 1);
        let g = grid(30.0, 0.1);
        let response = contact_response(&params, &CountertermSet::lo(-1e-3, 30.0), &g).unwrap();
        for &c in &[-2e-3, 0.0, 1e-4, 5e-3] {
            let direct = solve_k(&params, &CountertermSet::lo(c, 30.0), &g).unwrap();
            let via = response.onshell(c);
            assert!(
                (via - direct.onshell_value).abs() < 1e-9 * direct.onshell_value.abs().max(1e-6),
                "{c}: {via} vs {}",
                direct.onshell_value
            );
        }
        let target = -0.2;
        let inv = response.inverse_coupling_for(target);
        assert!((response.onshell(1.0 / inv) - target).abs() < 1e-10);
    }

    #[test]
    fn mismatched_cutoff_is_a_configuration_error() {
        let params = ModelParams::lo(1.0, 0);
        assert!(matches!(
            solve_k(&params, &CountertermSet::none(11.0), &grid(10.0, 0.3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nlo_contacts_require_s_wave() {
        let params = ModelParams::lo(1.0, 1);
        let ct = CountertermSet {
            c_nlo: 0.1,
            ..CountertermSet::none(10.0)
        };
        assert!(matches!(
            solve_k(&params, &ct, &grid(10.0, 0.3)),
            Err(Error::UnsupportedChannel(_))
        ));
    }

    #[test]
    fn threshold_pole_is_reported() {
        // C with 1 + C I = 0 makes the bubble sum diverge.
        let (p, cutoff): (f64, f64) = (0.2, 5.0);
        let loop_integral = cutoff + 0.5 * p * ((cutoff - p) / (cutoff + p)).ln();
        let params = ModelParams::lo(0.0, 0);
        let c = -1.0 / loop_integral;
        let result = solve_k(&params, &CountertermSet::lo(c, cutoff), &grid(cutoff, p));
        assert!(matches!(result, Err(Error::Pole { .. })), "{result:?}");
    }

    #[test]
    fn offshell_block_is_symmetric() {
        let params = ModelParams::lo(4.25, 1);
        let momenta = [0.05, 0.2, 0.5, 1.1, 2.5, 8.0];
        let g = GridOptions::default().build(8.0, 0.3, &momenta).unwrap();
        let k = offshell_block(&params, &CountertermSet::lo(-0.01, 8.0), &g, &momenta).unwrap();
        let scale = k.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let asym = (&k - k.transpose())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(asym < 1e-9 * scale, "asymmetry {asym} scale {scale}");
    }
}
