//! First-order distorted-wave treatment of the inverse-quartic correction.
//!
//! With `φ(q) = k⁽⁰⁾(q, p)` and `ψ(q) = q² φ(q)/(q² − p²)`, one insertion of
//! the reduced NLO potential `v = (m/π²) V⁽¹⁾` gives
//!
//! ```text
//! k⁽¹⁾(p, p) = p v(p, p) − 2 PV∫ dq v(p, q) ψ(q) + (1/p) PV∫∫ dq' dq ψ(q') v(q', q) ψ(q)
//! ```
//!
//! All principal values use the same subtraction as the LO solve. The inner
//! integral of the double term is taken first, row by row, with the kink of
//! `v(q', q)` at `q = q'` integrated exactly.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{nlo_shape, CountertermSet, ModelParams};
use crate::renorm::Datum;
use crate::solver::{pv_row_weights, solve_k, GridOptions, HalfOffShellK, QuadratureGrid};

/// Strengths of the NLO potential inserted once: `g` times the long-range
/// shape plus the S-wave contacts `C + D (p² + p'²)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NloPotential {
    pub g: f64,
    pub c: f64,
    pub d: f64,
}

impl NloPotential {
    pub fn long_range(g: f64) -> Self {
        Self {
            g,
            ..Self::default()
        }
    }

    pub fn contact_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    pub fn contact_d(d: f64) -> Self {
        Self {
            d,
            ..Self::default()
        }
    }

    /// The full NLO potential of `params` with the given contacts.
    pub fn full(params: &ModelParams, c: f64, d: f64) -> Self {
        Self { g: params.g, c, d }
    }

    fn is_zero(&self) -> bool {
        self.g == 0.0 && self.c == 0.0 && self.d == 0.0
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if (self.c != 0.0 || self.d != 0.0) && params.l != 0 {
            return Err(Error::UnsupportedChannel(format!(
                "NLO contacts are S-wave only, got l = {}",
                params.l
            )));
        }
        if self.g != 0.0 && !(params.big_m > 0.0) {
            return Err(Error::Domain("the NLO mass scale must be positive".into()));
        }
        Ok(())
    }

    /// Reduced matrix element `(m/π²) V⁽¹⁾(a, b)`.
    fn reduced(&self, params: &ModelParams, a: f64, b: f64) -> f64 {
        let mut v = self.c + self.d * (a * a + b * b);
        if self.g != 0.0 {
            v -= self.g / (2.0 * params.big_m * params.big_m) * nlo_shape(params.l, a, b);
        }
        v
    }
}

/// First-order on-shell amplitude `k⁽¹⁾(p, p)` for one insertion of `v1`
/// between LO-distorted waves.
pub fn nlo_amplitude(
    params: &ModelParams,
    lo: &HalfOffShellK,
    v1: &NloPotential,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if grid != &lo.grid {
        return Err(Error::Config(
            "NLO quadrature grid differs from the grid of the LO solution".into(),
        ));
    }
    v1.check(params)?;
    if v1.is_zero() {
        return Ok(0.0);
    }
    let n = grid.len();
    let p = grid.onshell;
    let phi = lo.unknowns();
    let kinked = v1.g != 0.0;
    let v = |a: f64, b: f64| v1.reduced(params, a, b);

    let born = p * v(p, p);

    let mut row = vec![0.0; n + 1];
    pv_row_weights(grid, |q| v(p, q), None, &mut row);
    let cross = dot(&row, &phi);

    // Inner integral I(q') = PV∫ dq q² v(q', q) φ(q)/(q² − p²) at every node and at p.
    let points: Vec<f64> = grid
        .nodes
        .iter()
        .copied()
        .chain(std::iter::once(p))
        .collect();
    let inner: Vec<f64> = points
        .iter()
        .map(|&qo| {
            let mut w = vec![0.0; n + 1];
            pv_row_weights(grid, |q| v(qo, q), kinked.then_some(qo), &mut w);
            dot(&w, &phi)
        })
        .collect();
    let mut outer = vec![0.0; n + 1];
    pv_row_weights(grid, |_| 1.0, None, &mut outer);
    let double: f64 = outer
        .iter()
        .zip(&phi)
        .zip(&inner)
        .map(|((w, f), i)| w * f * i)
        .sum();

    Ok(born - 2.0 * cross + double / p)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `k⁽¹⁾(p, p)` per unit strength of each NLO operator, at one `(p, Λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NLOBasisAmplitudes {
    /// Per unit `g` of the long-range potential.
    pub from_long_range: f64,
    /// Per unit `C₀⁽¹⁾`.
    pub from_c: f64,
    /// Per unit `D₀⁽¹⁾`.
    pub from_d: f64,
    /// LO on-shell value `k⁽⁰⁾(p, p)`.
    pub lo_onshell: f64,
    pub p: f64,
    pub cutoff: f64,
}

impl NLOBasisAmplitudes {
    pub fn total(&self, g: f64, c: f64, d: f64) -> f64 {
        g * self.from_long_range + c * self.from_c + d * self.from_d
    }
}

/// Solves LO at `p` and evaluates the three basis amplitudes.
pub fn basis_amplitudes(
    params: &ModelParams,
    c_lo: f64,
    cutoff: f64,
    p: f64,
    grid: &GridOptions,
) -> Result<NLOBasisAmplitudes> {
    if params.l != 0 {
        return Err(Error::UnsupportedChannel(format!(
            "NLO counterterms are S-wave only, got l = {}",
            params.l
        )));
    }
    let grid = grid.build(cutoff, p, &[])?;
    let lo = solve_k(params, &CountertermSet::lo(c_lo, cutoff), &grid)?;
    let unit = ModelParams { g: 1.0, ..*params };
    Ok(NLOBasisAmplitudes {
        from_long_range: nlo_amplitude(&unit, &lo, &NloPotential::long_range(1.0), &grid)?,
        from_c: nlo_amplitude(params, &lo, &NloPotential::contact_c(1.0), &grid)?,
        from_d: nlo_amplitude(params, &lo, &NloPotential::contact_d(1.0), &grid)?,
        lo_onshell: lo.onshell_value,
        p,
        cutoff,
    })
}

/// Memoized [`basis_amplitudes`], keyed by the exact `(p, Λ, C⁽⁰⁾)` bits.
#[derive(Debug, Default)]
pub struct BasisCache {
    grid: GridOptions,
    entries: Mutex<HashMap<(u64, u64, u64), NLOBasisAmplitudes>>,
}

impl BasisCache {
    pub fn new(grid: GridOptions) -> Self {
        Self {
            grid,
            entries: Mutex::default(),
        }
    }

    pub fn get(
        &self,
        params: &ModelParams,
        c_lo: f64,
        cutoff: f64,
        p: f64,
    ) -> Result<NLOBasisAmplitudes> {
        let key = (p.to_bits(), cutoff.to_bits(), c_lo.to_bits());
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(*hit);
        }
        let value = basis_amplitudes(params, c_lo, cutoff, p, &self.grid)?;
        self.entries.lock().expect("cache lock").insert(key, value);
        Ok(value)
    }
}

/// NLO counterterms fitted to two on-shell data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NloFit {
    pub c_nlo: f64,
    pub d_nlo: f64,
    /// `k⁽⁰⁾ + k⁽¹⁾ − k_target` at each datum.
    pub residuals: [f64; 2],
    pub determinant: f64,
    pub basis: [NLOBasisAmplitudes; 2],
}

impl NloFit {
    pub fn counterterms(&self, c_lo: f64, cutoff: f64) -> CountertermSet {
        CountertermSet {
            c_lo,
            c_nlo: self.c_nlo,
            d_nlo: self.d_nlo,
            cutoff,
        }
    }
}

/// Relative determinant below which the 2×2 fit is declared singular.
const SINGULAR_FIT: f64 = 1e-12;

/// Fits `C₀⁽¹⁾` and `D₀⁽¹⁾` so that `k⁽⁰⁾ + k⁽¹⁾` reproduces both data,
/// with the LO coupling `c_lo` already fixed.
pub fn calibrate_nlo(
    params: &ModelParams,
    c_lo: f64,
    cutoff: f64,
    data: [Datum; 2],
    cache: &BasisCache,
) -> Result<NloFit> {
    if data[0].p == data[1].p {
        return Err(Error::SingularFit {
            size: 2,
            determinant: 0.0,
        });
    }
    let basis = [
        cache.get(params, c_lo, cutoff, data[0].p)?,
        cache.get(params, c_lo, cutoff, data[1].p)?,
    ];
    let matrix = Matrix2::new(
        basis[0].from_c,
        basis[0].from_d,
        basis[1].from_c,
        basis[1].from_d,
    );
    let target = Vector2::from_fn(|i, _| {
        data[i].k - basis[i].lo_onshell - params.g * basis[i].from_long_range
    });
    let determinant = matrix.determinant();
    let scale = matrix.abs().max().powi(2);
    if !(determinant.abs() > SINGULAR_FIT * scale) {
        return Err(Error::SingularFit {
            size: 2,
            determinant,
        });
    }
    let solution = matrix.lu().solve(&target).ok_or(Error::SingularFit {
        size: 2,
        determinant,
    })?;
    let (c, d) = (solution[0], solution[1]);
    let residuals =
        [0, 1].map(|i| basis[i].lo_onshell + basis[i].total(params.g, c, d) - data[i].k);
    Ok(NloFit {
        c_nlo: c,
        d_nlo: d,
        residuals,
        determinant,
        basis,
    })
}

/// Fits `C₀⁽¹⁾` alone to one datum, with `D₀⁽¹⁾ = 0`.
pub fn calibrate_nlo_without_d(
    params: &ModelParams,
    c_lo: f64,
    cutoff: f64,
    datum: Datum,
    cache: &BasisCache,
) -> Result<NloFit> {
    let b = cache.get(params, c_lo, cutoff, datum.p)?;
    if b.from_c == 0.0 {
        return Err(Error::SingularFit {
            size: 1,
            determinant: 0.0,
        });
    }
    let c = (datum.k - b.lo_onshell - params.g * b.from_long_range) / b.from_c;
    let residual = b.lo_onshell + b.total(params.g, c, 0.0) - datum.k;
    Ok(NloFit {
        c_nlo: c,
        d_nlo: 0.0,
        residuals: [residual, 0.0],
        determinant: b.from_c,
        basis: [b, b],
    })
}

/// `k⁽⁰⁾(p, p)` and `k⁽¹⁾(p, p)` for calibrated counterterms.
pub fn onshell_orders(
    params: &ModelParams,
    counterterms: &CountertermSet,
    p: f64,
    cache: &BasisCache,
) -> Result<(f64, f64)> {
    let b = cache.get(params, counterterms.c_lo, counterterms.cutoff, p)?;
    Ok((
        b.lo_onshell,
        b.total(params.g, counterterms.c_nlo, counterterms.d_nlo),
    ))
}

/// `X(p, Λ) = |k⁽¹⁾(p, p) / k⁽⁰⁾(p, p)|`.
pub fn fractional_correction(
    params: &ModelParams,
    counterterms: &CountertermSet,
    p: f64,
    cache: &BasisCache,
) -> Result<f64> {
    let (k0, k1) = onshell_orders(params, counterterms, p, cache)?;
    if k0 == 0.0 {
        return Err(Error::Undefined(format!(
            "LO amplitude vanishes at p = {p}, Λ = {}",
            counterterms.cutoff
        )));
    }
    Ok((k1 / k0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_k_with, SolveOptions};

    fn s_wave() -> ModelParams {
        ModelParams::lo(2.0, 0).with_nlo(1.0, 0.5)
    }

    fn lo_solution(
        params: &ModelParams,
        c: f64,
        cutoff: f64,
        p: f64,
    ) -> (HalfOffShellK, QuadratureGrid) {
        let grid = GridOptions::default().build(cutoff, p, &[]).unwrap();
        (
            solve_k(params, &CountertermSet::lo(c, cutoff), &grid).unwrap(),
            grid,
        )
    }

    #[test]
    fn zero_potential_gives_zero() {
        let params = s_wave();
        let (lo, grid) = lo_solution(&params, -0.3, 6.0, 0.1);
        let k = nlo_amplitude(&params, &lo, &NloPotential::default(), &grid).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn free_lo_reduces_to_born_term() {
        let params = ModelParams::lo(0.0, 0).with_nlo(1.0, 0.5);
        let (lo, grid) = lo_solution(&params, 0.0, 6.0, 0.1);
        let k = nlo_amplitude(&params, &lo, &NloPotential::contact_c(0.7), &grid).unwrap();
        assert!((k - 0.1 * 0.7).abs() < 1e-15);
        let k = nlo_amplitude(&params, &lo, &NloPotential::long_range(1.0), &grid).unwrap();
        let born = -0.1 / (2.0 * 0.25) * nlo_shape(0, 0.1, 0.1);
        assert!((k - born).abs() < 1e-15);
    }

    #[test]
    fn amplitude_is_linear_in_the_potential() {
        let params = s_wave();
        let (lo, grid) = lo_solution(&params, -0.3, 6.0, 0.12);
        let amp = |v: NloPotential| nlo_amplitude(&params, &lo, &v, &grid).unwrap();
        let a = NloPotential {
            g: 1.0,
            c: 0.2,
            d: -0.4,
        };
        let b = NloPotential {
            g: -0.5,
            c: 1.5,
            d: 0.3,
        };
        let (alpha, beta) = (0.75, -2.0);
        let combined = NloPotential {
            g: alpha * a.g + beta * b.g,
            c: alpha * a.c + beta * b.c,
            d: alpha * a.d + beta * b.d,
        };
        let lhs = amp(combined);
        let rhs = alpha * amp(a) + beta * amp(b);
        assert!(
            (lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    /// Contact insertion equals the derivative of the LO amplitude in `C`.
    #[test]
    fn contact_insertion_matches_coupling_derivative() {
        let params = s_wave();
        let (c, cutoff, p) = (-0.31, 6.5, 0.1);
        let (lo, grid) = lo_solution(&params, c, cutoff, p);
        let k1 = nlo_amplitude(&params, &lo, &NloPotential::contact_c(1.0), &grid).unwrap();
        let eps = 1e-6;
        let up = solve_k(&params, &CountertermSet::lo(c + eps, cutoff), &grid).unwrap();
        let down = solve_k(&params, &CountertermSet::lo(c - eps, cutoff), &grid).unwrap();
        let fd = (up.onshell_value - down.onshell_value) / (2.0 * eps);
        assert!(((k1 - fd) / fd).abs() < 1e-7, "{k1} vs {fd}");
    }

    /// Each insertion equals the derivative of the fully iterated amplitude
    /// with respect to the strength of that operator.
    #[test]
    fn insertions_match_iterated_derivatives() {
        let base = s_wave();
        let (c, cutoff, p) = (-0.31, 6.5, 0.15);
        let (lo, grid) = lo_solution(&base, c, cutoff, p);
        let eps = 1e-5;
        let iterated = |g: f64, c1: f64, d1: f64| {
            let params = ModelParams { g, ..base };
            let ct = CountertermSet {
                c_lo: c,
                c_nlo: c1,
                d_nlo: d1,
                cutoff,
            };
            let opts = SolveOptions {
                include_nlo_long_range: g != 0.0,
                ..SolveOptions::default()
            };
            solve_k_with(&params, &ct, &grid, &opts)
                .unwrap()
                .onshell_value
        };
        let cases = [
            (NloPotential::long_range(1.0), (eps, 0.0, 0.0)),
            (NloPotential::contact_c(1.0), (0.0, eps, 0.0)),
            (NloPotential::contact_d(1.0), (0.0, 0.0, eps)),
        ];
        for (v, (g, c1, d1)) in cases {
            let k1 = nlo_amplitude(&ModelParams { g: 1.0, ..base }, &lo, &v, &grid).unwrap();
            let fd = (iterated(g, c1, d1) - iterated(-g, -c1, -d1)) / (2.0 * eps);
            assert!(((k1 - fd) / fd).abs() < 1e-6, "{v:?}: {k1} vs {fd}");
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let params = s_wave();
        let (lo, _) = lo_solution(&params, -0.3, 6.0, 0.1);
        let other = GridOptions::default().build(6.0, 0.12, &[]).unwrap();
        let err = nlo_amplitude(&params, &lo, &NloPotential::contact_c(1.0), &other).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn synthetic_counterterms_are_recovered() {
        let params = s_wave();
        let cache = BasisCache::new(GridOptions::default());
        let (c_lo, cutoff) = (-0.3, 7.0);
        let (c1, d1) = (0.021, -0.8);
        let data = [0.1, 0.15].map(|p| {
            let b = cache.get(&params, c_lo, cutoff, p).unwrap();
            Datum::new(p, b.lo_onshell + b.total(params.g, c1, d1))
        });
        let fit = calibrate_nlo(&params, c_lo, cutoff, data, &cache).unwrap();
        assert!((fit.c_nlo - c1).abs() < 1e-8 * c1.abs());
        assert!((fit.d_nlo - d1).abs() < 1e-8 * d1.abs());
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn degenerate_data_are_singular() {
        let params = s_wave();
        let cache = BasisCache::new(GridOptions::default());
        let data = [Datum::new(0.1, -1.0), Datum::new(0.1, -0.9)];
        assert!(matches!(
            calibrate_nlo(&params, -0.3, 7.0, data, &cache),
            Err(Error::SingularFit { .. })
        ));
    }

    #[test]
    fn contacts_need_s_wave() {
        let params = ModelParams::lo(4.25, 1).with_nlo(1.0, 0.5);
        let (lo, grid) = lo_solution(&params, 0.0, 10.0, 0.1);
        assert!(nlo_amplitude(&params, &lo, &NloPotential::contact_d(1.0), &grid).is_err());
        // The long-range insertion is defined in every wave.
        assert!(nlo_amplitude(&params, &lo, &NloPotential::long_range(1.0), &grid).is_ok());
    }
}
