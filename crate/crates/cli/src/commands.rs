//! The five experiment commands. Each turns a resolved config into a table;
//! sweep points run in parallel and rows come back in sweep order.

use std::f64::consts::PI;

use anharmonic_core::dynamics::Anharmonicity;
use anharmonic_core::inference::{
    adaptive_closure, crb_saturation_experiment, ClosureOptions, CrbOptions,
};
use anharmonic_core::metrology::{
    cramer_rao, fisher_heterodyne, fisher_homodyne, optimize_phase, qfi_closed, qfi_leading,
    qfi_numeric, snr_bound, Scheme, MAX_LIKELIHOOD_PHOTONS,
};
use anharmonic_core::oracle::{
    coherent_input, default_sequence, loss_sweep, run_protocol_with, OracleOptions,
};
use anharmonic_core::Error as CoreError;
use rayon::prelude::*;

use crate::config::{Command, ExperimentConfig, Point};
use crate::error::CliError;
use crate::table::{Cell, Table};

/// Offset between the seed of the saturation run and that of the closure
/// loop, so the two never share a random stream.
const CLOSURE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn columns(axis: Option<&str>, own: &[&str]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    if let Some(a) = axis {
        if !own.contains(&a) {
            cols.push(a.to_string());
        }
    }
    cols.extend(own.iter().map(|c| c.to_string()));
    cols
}

fn prefix(axis: Option<&str>, own: &[&str], pt: &Point) -> Vec<Cell> {
    match axis {
        Some(a) if !own.contains(&a) => vec![pt.axis_value.into()],
        _ => Vec::new(),
    }
}

fn build_table(
    command: Command,
    config: &ExperimentConfig,
    own: &[&str],
    rows: Vec<Vec<Vec<Cell>>>,
) -> Table {
    let cols = columns(config.axis_name(), own);
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(command.name(), &refs);
    rows.into_iter().flatten().for_each(|r| t.push(r));
    t
}

fn run_points<F>(points: &[Point], f: F) -> Result<Vec<Vec<Vec<Cell>>>, CliError>
where
    F: Fn(&Point) -> Result<Vec<Vec<Cell>>, CliError> + Sync + Send,
{
    points.par_iter().map(f).collect()
}

const CHECK_COLUMNS: &[&str] = &[
    "kind",
    "n_p",
    "quartic_amplitude",
    "quartic_mean_field",
    "cubic_amplitude",
    "cubic_mean_field",
    "thermal_dominance",
    "loss_condition",
    "perturbative_ok",
    "thermal_ok",
    "loss_ok",
];

/// Validity flags of every sweep point, without running anything.
pub fn check(command: Command, config: &ExperimentConfig, strict: bool) -> Result<Table, CliError> {
    let points = config.resolve(command, strict)?;
    let axis = config.axis_name();
    let rows = points
        .iter()
        .map(|pt| {
            let f = pt.params.validity_flags();
            let perturbative = match pt.kind {
                Anharmonicity::Quartic => f.quartic_ok(),
                Anharmonicity::Cubic => f.cubic_ok(),
            };
            let mut row = prefix(axis, CHECK_COLUMNS, pt);
            row.extend([
                pt.kind.name().into(),
                pt.n_p.into(),
                f.quartic_amplitude.into(),
                f.quartic_mean_field.into(),
                f.cubic_amplitude.into(),
                f.cubic_mean_field.into(),
                f.thermal_dominance.into(),
                f.loss_condition.into(),
                perturbative.into(),
                f.thermal_ok().into(),
                f.loss_ok().into(),
            ]);
            vec![row]
        })
        .collect();
    Ok(build_table(command, config, CHECK_COLUMNS, rows))
}

pub fn execute(command: Command, config: &ExperimentConfig, strict: bool) -> Result<Table, CliError> {
    let points = config.resolve(command, strict)?;
    match command {
        Command::RatioCurve => ratio_curve(config, &points),
        Command::ValidateMap => validate_map(config, &points),
        Command::QfiTable => qfi_table(config, &points),
        Command::Estimate => estimate(config, &points),
        Command::Losses => losses(config, &points),
    }
}

const RATIO_COLUMNS: &[&str] = &["n_p", "kind", "phi_star", "fi", "qfi", "ratio"];

fn ratio_curve(config: &ExperimentConfig, points: &[Point]) -> Result<Table, CliError> {
    let axis = config.axis_name();
    let rows = run_points(points, |pt| {
        let (phi, fi) = match pt.measurement.scheme {
            Scheme::Heterodyne => (None, fisher_heterodyne(&pt.measurement, &pt.params, pt.kind)?),
            Scheme::Homodyne => match config.ratio.phase_scan {
                Some(n) => {
                    let grid: Vec<f64> = (0..n).map(|i| PI * i as f64 / n as f64).collect();
                    let (phi, fi) = optimize_phase(&pt.params, pt.kind, &pt.measurement, &grid)?;
                    (Some(phi), fi)
                }
                None => (
                    Some(pt.measurement.phi),
                    fisher_homodyne(&pt.measurement, &pt.params, pt.kind)?,
                ),
            },
        };
        let qfi = qfi_numeric(&pt.params, pt.kind)?;
        let mut row = prefix(axis, RATIO_COLUMNS, pt);
        row.extend([
            pt.n_p.into(),
            pt.kind.name().into(),
            phi.into(),
            fi.into(),
            qfi.into(),
            (if qfi > 0.0 { Some(fi / qfi) } else { None }).into(),
        ]);
        Ok(vec![row])
    })?;
    Ok(build_table(Command::RatioCurve, config, RATIO_COLUMNS, rows))
}

const MAP_COLUMNS: &[&str] = &[
    "kind",
    "strength",
    "deficit",
    "deficit_ratio",
    "field_purity",
    "mechanics_return_fidelity",
    "truncation_deficit",
    "coherence_visibility",
    "mean_field_visibility",
];

fn validate_map(config: &ExperimentConfig, points: &[Point]) -> Result<Table, CliError> {
    let axis = config.axis_name();
    let opts = OracleOptions {
        keep_joint: false,
        ..OracleOptions::default()
    };
    let rows = run_points(points, |pt| {
        let s = pt.params.strength(pt.kind);
        let strengths = [s, s / 2.0, s / 4.0];
        let rho0 = coherent_input(&pt.params)?;
        let diags = strengths
            .iter()
            .map(|&v| {
                let p = pt.params.with_strength(pt.kind, v);
                let seq = default_sequence(&p, pt.kind)?;
                Ok(run_protocol_with(&p, &seq, &rho0, pt.kind, &opts)?.diagnostics)
            })
            .collect::<Result<Vec<_>, CoreError>>()?;
        let deficits: Vec<f64> = diags.iter().map(|d| 1.0 - d.effective_map_fidelity).collect();
        Ok((0..3)
            .map(|i| {
                let ratio = (i < 2 && deficits[i + 1] > 0.0 && s != 0.0)
                    .then(|| deficits[i] / deficits[i + 1]);
                let d = diags[i];
                let mut row = prefix(axis, MAP_COLUMNS, pt);
                row.extend([
                    pt.kind.name().into(),
                    strengths[i].into(),
                    deficits[i].into(),
                    ratio.into(),
                    d.field_purity.into(),
                    d.mechanics_return_fidelity.into(),
                    d.truncation_deficit.into(),
                    d.coherence_visibility.into(),
                    d.mean_field_visibility.into(),
                ]);
                row
            })
            .collect())
    })?;
    Ok(build_table(Command::ValidateMap, config, MAP_COLUMNS, rows))
}

const QFI_COLUMNS: &[&str] = &[
    "kind",
    "lambda",
    "n_p",
    "strength",
    "qfi_closed",
    "qfi_leading",
    "qfi_numeric",
    "m",
    "crb",
    "snr_bound",
    "snr_leading",
];

fn qfi_table(config: &ExperimentConfig, points: &[Point]) -> Result<Table, CliError> {
    let axis = config.axis_name();
    let m = config.qfi.m;
    let rows = run_points(points, |pt| {
        let p = &pt.params;
        let n_p = pt.n_p;
        let s = p.strength(pt.kind);
        let closed = qfi_closed(pt.kind, p.lambda, n_p);
        let leading = qfi_leading(pt.kind, p.lambda, n_p);
        let numeric = if n_p <= MAX_LIKELIHOOD_PHOTONS {
            Some(qfi_numeric(p, pt.kind)?)
        } else {
            None
        };
        let crb = match cramer_rao(closed, m) {
            Ok(v) => v,
            Err(CoreError::ZeroInformation) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        let mut row = prefix(axis, QFI_COLUMNS, pt);
        row.extend([
            pt.kind.name().into(),
            p.lambda.into(),
            n_p.into(),
            s.into(),
            closed.into(),
            leading.into(),
            numeric.into(),
            m.into(),
            crb.into(),
            snr_bound(s, closed, m).into(),
            snr_bound(s, leading, m).into(),
        ]);
        Ok(vec![row])
    })?;
    Ok(build_table(Command::QfiTable, config, QFI_COLUMNS, rows))
}

const ESTIMATE_COLUMNS: &[&str] = &[
    "kind",
    "record",
    "round",
    "truth",
    "estimate",
    "std_error",
    "fisher",
    "saturation",
    "ci_low",
    "ci_high",
    "bias",
    "tau",
    "visibility",
    "mean_field_visibility",
    "accepted",
];

fn estimate(config: &ExperimentConfig, points: &[Point]) -> Result<Table, CliError> {
    let axis = config.axis_name();
    let e = config.estimate;
    let empty = || Cell::Empty;
    let rows = run_points(points, |pt| {
        let mut rows = Vec::new();
        let truth = pt.params.strength(pt.kind);
        if e.crb {
            let opts = CrbOptions {
                m: e.m,
                n_repeats: e.repeats,
                seed: config.seed,
                bracket: e.bracket.map(|[a, b]| (a, b)),
                bracket_sigmas: e.bracket_sigmas,
                bootstrap: e.bootstrap,
                scale: e.scale,
            };
            let r = crb_saturation_experiment(&pt.params, pt.kind, &pt.measurement, &opts)?;
            let mean_se = r.std_errors.iter().sum::<f64>() / r.std_errors.len() as f64;
            let mut row = prefix(axis, ESTIMATE_COLUMNS, pt);
            row.extend([
                pt.kind.name().into(),
                "crb".into(),
                empty(),
                r.truth.into(),
                r.mean.into(),
                mean_se.into(),
                r.fisher.into(),
                r.saturation.into(),
                r.ci_low.into(),
                r.ci_high.into(),
                r.bias.into(),
                empty(),
                empty(),
                empty(),
                empty(),
            ]);
            rows.push(row);
        }
        if e.closure {
            let opts = ClosureOptions {
                rounds: e.rounds,
                samples_per_round: e.samples_per_round,
                seed: config.seed.wrapping_add(CLOSURE_SEED_OFFSET),
                phi: pt.measurement.phi,
                bracket_sigmas: e.bracket_sigmas,
                significance: e.significance,
                ..ClosureOptions::default()
            };
            let trace = adaptive_closure(&pt.params, pt.kind, &opts)?;
            for r in &trace.rounds {
                let mut row = prefix(axis, ESTIMATE_COLUMNS, pt);
                row.extend([
                    pt.kind.name().into(),
                    "closure".into(),
                    r.round.into(),
                    truth.into(),
                    r.estimate.into(),
                    r.std_error.into(),
                    empty(),
                    empty(),
                    empty(),
                    empty(),
                    empty(),
                    r.tau.into(),
                    r.visibility.into(),
                    r.mean_field_visibility.into(),
                    r.accepted.into(),
                ]);
                rows.push(row);
            }
            let mut row = prefix(axis, ESTIMATE_COLUMNS, pt);
            row.extend([
                pt.kind.name().into(),
                "closure-final".into(),
                trace.converged_round.map_or(Cell::Empty, Cell::from),
                truth.into(),
                empty(),
                empty(),
                empty(),
                empty(),
                empty(),
                empty(),
                empty(),
                trace.final_tau.into(),
                trace.final_visibility.into(),
                empty(),
                empty(),
            ]);
            rows.push(row);
        }
        Ok(rows)
    })?;
    Ok(build_table(Command::Estimate, config, ESTIMATE_COLUMNS, rows))
}

const LOSS_COLUMNS: &[&str] = &[
    "kind",
    "epsilon",
    "purity",
    "harmonic_phase",
    "harmonic_phase_formula",
    "harmonic_modulus",
    "harmonic_modulus_formula",
    "anharmonic_phase",
    "loss_condition",
];

fn losses(config: &ExperimentConfig, points: &[Point]) -> Result<Table, CliError> {
    let axis = config.axis_name();
    let rows = run_points(points, |pt| {
        let r = loss_sweep(&pt.params, pt.kind, &[pt.params.epsilon])?[0];
        let mut row = prefix(axis, LOSS_COLUMNS, pt);
        row.extend([
            pt.kind.name().into(),
            r.epsilon.into(),
            r.purity.into(),
            r.harmonic_phase.into(),
            r.harmonic_phase_formula.into(),
            r.harmonic_modulus.into(),
            r.harmonic_modulus_formula.into(),
            r.anharmonic_phase.into(),
            r.loss_condition.into(),
        ]);
        Ok(vec![row])
    })?;
    Ok(build_table(Command::Losses, config, LOSS_COLUMNS, rows))
}
