//! The registered experiments. Each turns a resolved [`Config`] into a [`Table`].

use clap::ValueEnum;
use rayon::prelude::*;
use singular_eft::analysis::{born_check, fit_oscillation};
use singular_eft::model::nu_l;
use singular_eft::nlo::{
    calibrate_nlo, calibrate_nlo_without_d, fractional_correction, onshell_orders, BasisCache,
};
use singular_eft::renorm::{
    analytic_c0, beta_function, calibrate_c0, cycle_factor, trace_limit_cycle, Datum,
};
use singular_eft::solver::{eval_offshell_many, phase_shift_from_k, solve_k};
use singular_eft::{CountertermSet, GridOptions, ModelParams};

use crate::config::Config;
use crate::error::CliError;
use crate::output::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Half-off-shell amplitude per cutoff without a counterterm.
    LoCutoffScan,
    /// Half-off-shell amplitude per cutoff with the running LO counterterm.
    LoRenormalized,
    /// Calibrated limit-cycle trajectory of the LO coupling.
    RgFlow,
    /// Fractional NLO correction versus cutoff, with and without D.
    NloXScan,
    /// LO and LO+NLO on-shell amplitudes versus momentum for several cutoffs.
    NloEnergyScan,
    /// Weak-coupling comparison with the Born series.
    BornCheck,
    /// Log-periodic fit of the renormalized half-off-shell amplitude.
    OscillationFit,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::LoCutoffScan => "lo-cutoff-scan",
            Experiment::LoRenormalized => "lo-renormalized",
            Experiment::RgFlow => "rg-flow",
            Experiment::NloXScan => "nlo-x-scan",
            Experiment::NloEnergyScan => "nlo-energy-scan",
            Experiment::BornCheck => "born-check",
            Experiment::OscillationFit => "oscillation-fit",
        }
    }
}

pub fn run(config: &Config) -> Result<Table, CliError> {
    match config.experiment {
        Experiment::LoCutoffScan => half_off_shell_scan(config, false),
        Experiment::LoRenormalized => half_off_shell_scan(config, true),
        Experiment::RgFlow => rg_flow(config),
        Experiment::NloXScan => nlo_x_scan(config),
        Experiment::NloEnergyScan => nlo_energy_scan(config),
        Experiment::BornCheck => born(config),
        Experiment::OscillationFit => oscillation(config),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Cutoffs must be positive and every on-shell momentum below `min(Λ)/10`.
fn check_kinematics(cutoffs: &[f64], momenta: &[f64]) -> Result<f64, CliError> {
    if cutoffs.is_empty() {
        return Err(invalid("cutoff list is empty"));
    }
    if momenta.is_empty() {
        return Err(invalid("momentum list is empty"));
    }
    if let Some(c) = cutoffs.iter().find(|c| !(**c > 0.0)) {
        return Err(invalid(format!("cutoff {c} is not positive")));
    }
    let min_cutoff = cutoffs.iter().copied().fold(f64::INFINITY, f64::min);
    for &p in momenta {
        if !(p > 0.0 && p < min_cutoff / 10.0) {
            return Err(invalid(format!(
                "momentum {p} must lie in (0, min(cutoff)/10) = (0, {})",
                min_cutoff / 10.0
            )));
        }
    }
    Ok(min_cutoff)
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Geometric `x` samples from `x_min` to `x_max`, where `x_max` defaults to `default_max`.
fn x_samples(config: &Config, default_max: f64, limit: f64) -> Result<Vec<f64>, CliError> {
    let x_min = config.float("x_min")?;
    let x_max = config.optional_float("x_max")?.unwrap_or(default_max);
    let count = config.count("x_count")?;
    if !(x_min > 0.0 && x_max > x_min) || count < 2 {
        return Err(invalid(format!(
            "need 0 < x_min < x_max and x_count ≥ 2, got {x_min}, {x_max}, {count}"
        )));
    }
    if x_max > limit * (1.0 + 1e-12) {
        return Err(invalid(format!("x_max = {x_max} exceeds {limit}")));
    }
    Ok(geometric(x_min, x_max, count))
}

fn half_off_shell_scan(config: &Config, renormalized: bool) -> Result<Table, CliError> {
    let params = config.params()?;
    let grid = config.grid()?;
    let p = config.float("p")?;
    let cutoffs = config.list("cutoffs")?;
    let min_cutoff = check_kinematics(&cutoffs, &[p])?;
    let xs = x_samples(config, min_cutoff / p, min_cutoff / p)?;
    let momenta: Vec<f64> = xs.iter().map(|x| p * x).collect();

    let couplings: Vec<f64> = if renormalized {
        let lambda_star = config.float("lambda_star")?;
        match config.text("coupling")? {
            "analytic" => cutoffs
                .iter()
                .map(|&c| analytic_c0(&params, c, lambda_star))
                .collect::<Result<_, _>>()?,
            "calibrated" => {
                let reference = cutoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let c_ref = analytic_c0(&params, reference, lambda_star)?;
                let k_ref = solve_k(
                    &params,
                    &CountertermSet::lo(c_ref, reference),
                    &grid.build(reference, p, &[])?,
                )?
                .onshell_value;
                let datum = Datum::new(p, k_ref);
                cutoffs
                    .par_iter()
                    .map(|&c| Ok(calibrate_c0(&params, c, datum, 0.0, &grid)?.coupling))
                    .collect::<Result<_, CliError>>()?
            }
            other => {
                return Err(invalid(format!(
                    "coupling must be analytic or calibrated, got {other:?}"
                )))
            }
        }
    } else {
        vec![0.0; cutoffs.len()]
    };

    let curves = cutoffs
        .par_iter()
        .zip(&couplings)
        .map(|(&cutoff, &c)| {
            let ct = if renormalized {
                CountertermSet::lo(c, cutoff)
            } else {
                CountertermSet::none(cutoff)
            };
            let sol = solve_k(&params, &ct, &grid.build(cutoff, p, &[])?)?;
            Ok((sol.onshell_value, eval_offshell_many(&sol, &momenta)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut table = Table::new(&["cutoff", "coupling", "x", "p_out", "k"]);
    for ((&cutoff, &c), (onshell, curve)) in cutoffs.iter().zip(&couplings).zip(&curves) {
        table.note_num(&format!("k_onshell[cutoff={cutoff}]"), *onshell);
        for ((&x, &q), &k) in xs.iter().zip(&momenta).zip(curve) {
            table.push(vec![cutoff.into(), c.into(), x.into(), q.into(), k.into()]);
        }
    }
    Ok(table)
}

fn rg_flow(config: &Config) -> Result<Table, CliError> {
    let params = config.params()?;
    let grid = config.grid()?;
    let p = config.float("p")?;
    let lo = config.float("cutoff_min")?;
    let hi = config.float("cutoff_max")?;
    let reference = config.float("reference_cutoff")?;
    check_kinematics(&[lo, hi, reference], &[p])?;
    if hi <= lo {
        return Err(invalid("cutoff_max must exceed cutoff_min"));
    }
    let k = match config.optional_float("datum_k")? {
        Some(k) => k,
        None => {
            let c = analytic_c0(&params, reference, config.float("lambda_star")?)?;
            solve_k(
                &params,
                &CountertermSet::lo(c, reference),
                &grid.build(reference, p, &[])?,
            )?
            .onshell_value
        }
    };
    let datum = Datum::new(p, k);
    let trajectory = trace_limit_cycle(
        &params,
        datum,
        (lo, hi),
        config.count("samples_per_decade")?,
        &grid,
    )?;

    let mut table = Table::new(&[
        "series",
        "cutoff",
        "coupling",
        "reduced_coupling",
        "branch",
        "coupling_analytic",
        "beta_analytic",
    ]);
    let reduced = trajectory.reduced_couplings(&params);
    for (i, (&cutoff, &c)) in trajectory
        .cutoffs
        .iter()
        .zip(&trajectory.couplings)
        .enumerate()
    {
        let overlay =
            analytic_c0(&params, cutoff, trajectory.lambda_star).map_or(Cell::Empty, Cell::Num);
        table.push(vec![
            "sample".into(),
            cutoff.into(),
            c.into(),
            reduced[i].into(),
            Cell::Int(trajectory.branches[i]),
            overlay,
            beta_function(&params, cutoff, c)?.into(),
        ]);
    }
    for &pole in &trajectory.poles {
        let mut row = vec![Cell::from("pole"), pole.into()];
        row.resize(table.columns.len(), Cell::Empty);
        table.push(row);
    }
    table.note_num("datum_p", p);
    table.note_num("datum_k", k);
    table.note_num("lambda_star_fit", trajectory.lambda_star);
    table.note_num("phase_rms", trajectory.phase_rms);
    table.note_num("cycle_factor", cycle_factor(&params)?);
    table.note("branch_id", trajectory.branch_id);
    let spacings: Vec<String> = trajectory
        .poles
        .windows(2)
        .map(|w| format!("{:.6}", (w[1] / w[0]).ln()))
        .collect();
    table.note("pole_spacing_ln", spacings.join(" "));
    Ok(table)
}

struct NloSetup {
    params: ModelParams,
    grid: GridOptions,
    data: [Datum; 2],
    cutoffs: Vec<f64>,
}

fn nlo_setup(config: &Config, extra_momenta: &[f64]) -> Result<NloSetup, CliError> {
    let params = config.params()?;
    let grid = config.grid()?;
    let pairs = config.pairs("data")?;
    let [a, b] = pairs[..] else {
        return Err(invalid(format!(
            "data needs exactly two p:k points, got {}",
            pairs.len()
        )));
    };
    let cutoffs = config.list("cutoffs")?;
    let mut momenta = vec![a.0, b.0];
    momenta.extend_from_slice(extra_momenta);
    check_kinematics(&cutoffs, &momenta)?;
    Ok(NloSetup {
        params,
        grid,
        data: [Datum::new(a.0, a.1), Datum::new(b.0, b.1)],
        cutoffs,
    })
}

impl NloSetup {
    fn lo_coupling(&self, cutoff: f64) -> Result<f64, CliError> {
        Ok(calibrate_c0(&self.params, cutoff, self.data[0], 0.0, &self.grid)?.coupling)
    }
}

fn nlo_x_scan(config: &Config) -> Result<Table, CliError> {
    let x_momentum = config.float("x_momentum")?;
    let setup = nlo_setup(config, &[x_momentum])?;
    let cache = BasisCache::new(setup.grid);
    let rows = setup
        .cutoffs
        .par_iter()
        .map(|&cutoff| {
            let c_lo = setup.lo_coupling(cutoff)?;
            let both = calibrate_nlo(&setup.params, c_lo, cutoff, setup.data, &cache)?;
            let only_c =
                calibrate_nlo_without_d(&setup.params, c_lo, cutoff, setup.data[0], &cache)?;
            let x = |fit: &singular_eft::nlo::NloFit| {
                fractional_correction(
                    &setup.params,
                    &fit.counterterms(c_lo, cutoff),
                    x_momentum,
                    &cache,
                )
            };
            Ok([
                ("c_and_d", cutoff, c_lo, both.c_nlo, both.d_nlo, x(&both)?),
                ("c_only", cutoff, c_lo, only_c.c_nlo, 0.0, x(&only_c)?),
            ])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table = Table::new(&["series", "cutoff", "c_lo", "c_nlo", "d_nlo", "x_fraction"]);
    for series in 0..2 {
        for row in &rows {
            let (tag, cutoff, c_lo, c, d, x) = row[series];
            table.push(vec![
                tag.into(),
                cutoff.into(),
                c_lo.into(),
                c.into(),
                d.into(),
                x.into(),
            ]);
        }
    }
    table.note_num("x_momentum", x_momentum);
    Ok(table)
}

fn nlo_energy_scan(config: &Config) -> Result<Table, CliError> {
    let momenta = config.list("momenta")?;
    if momenta.is_empty() {
        return Err(invalid("momentum list is empty"));
    }
    let setup = nlo_setup(config, &momenta)?;
    let cache = BasisCache::new(setup.grid);
    let counterterms = setup
        .cutoffs
        .par_iter()
        .map(|&cutoff| {
            let c_lo = setup.lo_coupling(cutoff)?;
            Ok(
                calibrate_nlo(&setup.params, c_lo, cutoff, setup.data, &cache)?
                    .counterterms(c_lo, cutoff),
            )
        })
        .collect::<Result<Vec<CountertermSet>, CliError>>()?;
    let points: Vec<(usize, f64)> = (0..counterterms.len())
        .flat_map(|i| momenta.iter().map(move |&p| (i, p)))
        .collect();
    let values = points
        .par_iter()
        .map(|&(i, p)| Ok(onshell_orders(&setup.params, &counterterms[i], p, &cache)?))
        .collect::<Result<Vec<(f64, f64)>, CliError>>()?;

    let mut table = Table::new(&[
        "cutoff",
        "p",
        "k_lo",
        "k_nlo",
        "k_lo_plus_nlo",
        "x_fraction",
        "delta_lo",
        "delta_lo_plus_nlo",
    ]);
    for (&(i, p), &(k0, k1)) in points.iter().zip(&values) {
        let x = if k0 == 0.0 {
            Cell::Empty
        } else {
            (k1 / k0).abs().into()
        };
        table.push(vec![
            counterterms[i].cutoff.into(),
            p.into(),
            k0.into(),
            k1.into(),
            (k0 + k1).into(),
            x,
            phase_shift_from_k(k0).into(),
            phase_shift_from_k(k0 + k1).into(),
        ]);
    }
    for ct in &counterterms {
        let tag = format!("cutoff={}", ct.cutoff);
        table.note_num(&format!("c_lo[{tag}]"), ct.c_lo);
        table.note_num(&format!("c_nlo[{tag}]"), ct.c_nlo);
        table.note_num(&format!("d_nlo[{tag}]"), ct.d_nlo);
        let (k0, _) = onshell_orders(&setup.params, ct, setup.data[1].p, &cache)?;
        table.note_num(&format!("k_lo_at_second_datum[{tag}]"), k0);
    }
    Ok(table)
}

fn born(config: &Config) -> Result<Table, CliError> {
    let grid = config.grid()?;
    let p = config.float("p")?;
    let lambdas = config.list("lambdas")?;
    if lambdas.is_empty() {
        return Err(invalid("lambdas is empty"));
    }
    let cutoffs = config.list("cutoffs")?;
    check_kinematics(&cutoffs, &[p])?;
    let l = u32::try_from(config.count("l")?).map_err(|_| invalid("l out of range"))?;
    let points: Vec<(f64, f64)> = cutoffs
        .iter()
        .flat_map(|&c| lambdas.iter().map(move |&lam| (c, lam)))
        .collect();
    let reports = points
        .par_iter()
        .map(|&(cutoff, lambda)| {
            let params = ModelParams::lo(lambda, l);
            params.validate().map_err(|e| invalid(e.to_string()))?;
            Ok(born_check(&params, p, cutoff, &grid)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table = Table::new(&[
        "cutoff",
        "lambda",
        "solved",
        "first_born",
        "second_born",
        "residual",
        "residual_beyond_second",
        "residual_over_lambda_sq",
    ]);
    for (&(cutoff, _), r) in points.iter().zip(&reports) {
        table.push(vec![
            cutoff.into(),
            r.lambda.into(),
            r.solved.into(),
            r.first_born.into(),
            r.second_born.into(),
            r.residual.into(),
            r.residual_beyond_second.into(),
            (r.residual / (r.lambda * r.lambda)).into(),
        ]);
    }
    Ok(table)
}

fn oscillation(config: &Config) -> Result<Table, CliError> {
    let params = config.params()?;
    let grid = config.grid()?;
    let p = config.float("p")?;
    let lambda_star = config.float("lambda_star")?;
    let cutoffs = config.list("cutoffs")?;
    let min_cutoff = check_kinematics(&cutoffs, &[p])?;
    let nu = nu_l(&params)
        .real()
        .ok_or_else(|| invalid("oscillation fits need λ above the critical coupling"))?;
    // Validates the shared window against the smallest cutoff.
    x_samples(config, min_cutoff / (4.0 * p), min_cutoff / (2.0 * p))?;
    let fits = cutoffs
        .par_iter()
        .map(|&cutoff| {
            let xs = x_samples(config, cutoff / (4.0 * p), cutoff / (2.0 * p))?;
            let c = analytic_c0(&params, cutoff, lambda_star)?;
            let sol = solve_k(
                &params,
                &CountertermSet::lo(c, cutoff),
                &grid.build(cutoff, p, &[])?,
            )?;
            let momenta: Vec<f64> = xs.iter().map(|x| p * x).collect();
            let values = eval_offshell_many(&sol, &momenta)?;
            let samples: Vec<(f64, f64)> = xs.into_iter().zip(values).collect();
            Ok(fit_oscillation(&samples)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table = Table::new(&[
        "cutoff",
        "nu_fit",
        "nu_expected",
        "envelope_power",
        "phase_fit",
        "amplitude",
        "lambda_star_fit",
        "x_min",
        "x_max",
        "residual",
        "crossings",
    ]);
    for (&cutoff, f) in cutoffs.iter().zip(&fits) {
        table.push(vec![
            cutoff.into(),
            f.nu_fit.into(),
            nu.into(),
            f.envelope_power.into(),
            f.phase_fit.into(),
            f.amplitude.into(),
            f.lambda_star(p).into(),
            f.fit_window.0.into(),
            f.fit_window.1.into(),
            f.residual.into(),
            Cell::Int(i64::try_from(f.crossings).unwrap_or(i64::MAX)),
        ]);
    }
    table.note_num("cycle_factor", cycle_factor(&params)?);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinematic_validation() {
        assert!(check_kinematics(&[10.0, 20.0], &[0.5, 0.99]).is_ok());
        assert!(matches!(
            check_kinematics(&[10.0], &[]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            check_kinematics(&[], &[0.1]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            check_kinematics(&[10.0, 5.0], &[0.5]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            check_kinematics(&[-1.0], &[0.01]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn names_match_clap() {
        for e in Experiment::value_variants() {
            let value = e.to_possible_value().unwrap();
            assert_eq!(value.get_name(), e.name());
        }
    }
}
