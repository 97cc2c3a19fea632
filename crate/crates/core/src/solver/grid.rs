//! Composite Gauss-Legendre grids on `[0, Λ]` with a panel edge at the
//! on-shell momentum.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Reference Gauss-Legendre rule on `[-1, 1]`, ascending nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Barycentric interpolation weights for the nodes.
    pub barycentric: Vec<f64>,
}

impl ReferenceRule {
    pub fn new(n: usize) -> Result<Self> {
        let degree = NonZeroUsize::new(n)
            .ok_or_else(|| Error::Config("nodes per panel must be at least 1".into()))?;
        let rule = GaussLegendre::new(degree);
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        // Closed form for Gauss-Legendre points: (-1)^j sqrt((1 - x_j²) w_j).
        let barycentric = nodes
            .iter()
            .zip(&weights)
            .enumerate()
            .map(|(j, (x, w))| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * ((1.0 - x * x) * w).sqrt()
            })
            .collect();
        Ok(Self {
            nodes,
            weights,
            barycentric,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Points and weights of the rule mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }
}

/// One Gauss-Legendre panel of a composite grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub lower: f64,
    pub upper: f64,
    /// Index of the panel's first node in the grid.
    pub start: usize,
    /// Index of the panel's rule in [`QuadratureGrid::rules`].
    pub rule: usize,
}

impl Panel {
    fn to_reference(self, q: f64) -> f64 {
        (2.0 * q - self.lower - self.upper) / (self.upper - self.lower)
    }
}

/// Momentum nodes and weights on `(0, Λ)` plus the on-shell subtraction point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub cutoff: f64,
    pub onshell: f64,
    /// Sorted interior panel edges; always contains `onshell`.
    pub panel_boundaries: Vec<f64>,
    pub panels: Vec<Panel>,
    /// Distinct reference rules used by the panels.
    pub rules: Vec<ReferenceRule>,
}

/// Resolution knobs for automatically placed panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub nodes_per_panel: usize,
    /// Number of geometrically graded panels on each side of the on-shell point.
    pub grading_levels: usize,
    /// Nodes in each graded panel.
    pub graded_nodes: usize,
    /// Largest ratio `upper/lower` allowed for panels above `2p`.
    pub max_panel_ratio: f64,
    /// Lower bound on the number of panels.
    pub min_panels: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            nodes_per_panel: 40,
            grading_levels: 24,
            graded_nodes: 10,
            max_panel_ratio: 4.0,
            min_panels: 4,
        }
    }
}

impl GridOptions {
    /// Same panels, twice the nodes.
    pub fn refined(&self) -> Self {
        Self {
            nodes_per_panel: 2 * self.nodes_per_panel,
            graded_nodes: 2 * self.graded_nodes,
            ..*self
        }
    }

    /// Panel edges for a grid on `[0, cutoff]` with the on-shell point `p`.
    ///
    /// Edges are graded geometrically toward `p` from both sides, where the
    /// half-off-shell amplitude has a `(q − p) ln|q − p|` component, and are
    /// spaced geometrically from `2p` up to the cutoff.
    pub fn splits(&self, cutoff: f64, p: f64) -> Vec<f64> {
        let mut splits = vec![p];
        for j in 1..=self.grading_levels {
            let offset = p * 0.5f64.powi(j as i32);
            splits.push(p - offset);
            splits.push(p + offset);
        }
        let start = 2.0 * p;
        if start < cutoff {
            splits.push(start);
            let ratio = self.max_panel_ratio.max(1.5);
            let count = ((cutoff / start).ln() / ratio.ln()).ceil().max(1.0) as usize;
            let step = (cutoff / start).powf(1.0 / count as f64);
            for k in 1..count {
                splits.push(start * step.powi(k as i32));
            }
        }
        splits.retain(|&s| s > 0.0 && s < cutoff);
        splits
    }

    pub fn build(&self, cutoff: f64, p: f64, extra_splits: &[f64]) -> Result<QuadratureGrid> {
        let mut splits = self.splits(cutoff, p);
        splits.extend_from_slice(extra_splits);
        let graded = if self.grading_levels > 0 {
            (0.5 * p, 1.5 * p)
        } else {
            (p, p)
        };
        let count = |lower: f64, upper: f64| {
            if lower >= graded.0 && upper <= graded.1 {
                self.graded_nodes
            } else {
                self.nodes_per_panel
            }
        };
        let mut grid = composite_grid(cutoff, p, &splits, count)?;
        // Bisect the widest panels until the minimum count is reached.
        while grid.panels.len() < self.min_panels {
            let widest = grid
                .panels
                .iter()
                .max_by(|a, b| (a.upper - a.lower).total_cmp(&(b.upper - b.lower)))
                .copied()
                .expect("grid has panels");
            splits.push(0.5 * (widest.lower + widest.upper));
            grid = composite_grid(cutoff, p, &splits, count)?;
        }
        Ok(grid)
    }
}

/// Principal value of `∫₀^Λ dq / (q² − p²)`, i.e. `ln((Λ−p)/(Λ+p)) / (2p)`.
pub fn pv_moment(p: f64, cutoff: f64) -> Result<f64> {
    if !(p > 0.0) || !(p < cutoff) {
        return Err(Error::Domain(format!(
            "need 0 < p < cutoff, got p = {p}, cutoff = {cutoff}"
        )));
    }
    Ok(-(p / cutoff).atanh() / p)
}

/// Composite Gauss-Legendre grid on `[0, cutoff]` with edges at `onshell`
/// and every entry of `panel_splits` inside the interval.
pub fn build_grid(
    cutoff: f64,
    onshell: f64,
    nodes_per_panel: usize,
    panel_splits: &[f64],
) -> Result<QuadratureGrid> {
    composite_grid(cutoff, onshell, panel_splits, |_, _| nodes_per_panel)
}

fn composite_grid(
    cutoff: f64,
    onshell: f64,
    panel_splits: &[f64],
    node_count: impl Fn(f64, f64) -> usize,
) -> Result<QuadratureGrid> {
    if !(onshell > 0.0) || !(onshell < cutoff) || !cutoff.is_finite() {
        return Err(Error::Domain(format!(
            "need 0 < p < cutoff, got p = {onshell}, cutoff = {cutoff}"
        )));
    }
    let mut edges: Vec<f64> = panel_splits
        .iter()
        .copied()
        .filter(|s| s.is_finite() && *s > 0.0 && *s < cutoff)
        .chain(std::iter::once(onshell))
        .collect();
    edges.sort_by(f64::total_cmp);
    let tol = 1e-12 * cutoff;
    let mut boundaries: Vec<f64> = Vec::with_capacity(edges.len());
    for e in edges {
        if e == onshell {
            // The on-shell edge wins over anything too close to it.
            if boundaries.last().is_some_and(|b| (e - b).abs() <= tol) {
                boundaries.pop();
            }
            boundaries.push(e);
        } else if boundaries.last().is_none_or(|b| e - b > tol) && e > tol && cutoff - e > tol {
            boundaries.push(e);
        }
    }
    boundaries.dedup_by(|a, b| (*a - *b).abs() <= tol);

    let mut panels = Vec::with_capacity(boundaries.len() + 1);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut rules: Vec<ReferenceRule> = Vec::new();
    let mut lower = 0.0;
    for &upper in boundaries.iter().chain(std::iter::once(&cutoff)) {
        let n = node_count(lower, upper);
        let rule = match rules.iter().position(|r| r.len() == n) {
            Some(i) => i,
            None => {
                rules.push(ReferenceRule::new(n)?);
                rules.len() - 1
            }
        };
        panels.push(Panel {
            lower,
            upper,
            start: nodes.len(),
            rule,
        });
        for (q, w) in rules[rule].mapped(lower, upper) {
            nodes.push(q);
            weights.push(w);
        }
        lower = upper;
    }

    Ok(QuadratureGrid {
        nodes,
        weights,
        cutoff,
        onshell,
        panel_boundaries: boundaries,
        panels,
        rules,
    })
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn rule(&self, panel: &Panel) -> &ReferenceRule {
        &self.rules[panel.rule]
    }

    /// Largest number of nodes in any panel.
    pub fn max_panel_len(&self) -> usize {
        self.rules.iter().map(ReferenceRule::len).max().unwrap_or(0)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(q, w)| w * f(*q))
            .sum()
    }

    /// Index of the panel containing `q` (panels are closed on the right).
    pub fn panel_of(&self, q: f64) -> usize {
        self.panels
            .iter()
            .position(|p| q <= p.upper)
            .unwrap_or(self.panels.len() - 1)
    }

    /// Lagrange coefficients of `q` on the nodes of `panel`, written into
    /// the first `rule(panel).len()` entries of `out`.
    pub fn interpolation_coefficients(&self, panel: &Panel, q: f64, out: &mut [f64]) {
        let t = panel.to_reference(q);
        let rule = self.rule(panel);
        let out = &mut out[..rule.len()];
        if let Some(hit) = rule.nodes.iter().position(|x| *x == t) {
            out.iter_mut().for_each(|c| *c = 0.0);
            out[hit] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for (j, (x, b)) in rule.nodes.iter().zip(&rule.barycentric).enumerate() {
            let c = b / (t - x);
            out[j] = c;
            denom += c;
        }
        out.iter_mut().for_each(|c| *c /= denom);
    }

    /// Minimum distance between a node and the on-shell point.
    pub fn onshell_separation(&self) -> f64 {
        self.nodes
            .iter()
            .map(|q| (q - self.onshell).abs())
            .fold(f64::INFINITY, f64::min)
    }
}
