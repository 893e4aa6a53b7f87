use mixflow::diagnostics::{ess_batch_means, ksd_imq, stability_profile};
use mixflow::math::stream_rng;
use mixflow::{ElboSummary, FlowTransform};
use rayon::prelude::*;
use serde_json::json;

use crate::error::CliError;
use crate::output::{fmt, state_header, state_row, Outputs};
use crate::setup::{cell_stream, derived_seed, read_states, tag, Setup};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sweep,
    Run,
    Sample,
    Density,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::Run => "run",
            Command::Sample => "sample",
            Command::Density => "density",
            Command::Diagnose => "diagnose",
        }
    }
}

pub fn execute(cmd: Command, setup: &Setup, out: &mut Outputs) -> Result<(), CliError> {
    if cmd == Command::Diagnose && setup.cfg.n_max() < 10 {
        return Err(CliError::Config("diagnose needs a flow length of at least 10 for the ESS".into()));
    }
    match cmd {
        Command::Sweep => sweep(setup, out)?,
        Command::Run => {
            let t = setup.transform(setup.single_epsilon()?)?;
            elbo_vs_n(setup, t.as_ref(), out)?;
            samples(setup, t.as_ref(), out)?;
            ksd(setup, t.as_ref(), out)?;
            stability(setup, t.as_ref(), out)?;
        }
        Command::Sample => {
            let t = setup.transform(setup.single_epsilon()?)?;
            samples(setup, t.as_ref(), out)?;
        }
        Command::Density => {
            let t = setup.transform(setup.single_epsilon()?)?;
            density(setup, t.as_ref(), out)?;
        }
        Command::Diagnose => {
            let t = setup.transform(setup.single_epsilon()?)?;
            ksd(setup, t.as_ref(), out)?;
            stability(setup, t.as_ref(), out)?;
            trajectory_ess(setup, t.as_ref(), out)?;
        }
    }
    let r = &setup.reference;
    out.write_json(
        "run_meta.json",
        &json!({
            "command": cmd.name(),
            "library_version": mixflow::VERSION,
            "seed": setup.cfg.seed(),
            "reference": { "mean": r.mean, "scale": r.scale },
            "config": setup.cfg,
        }),
    )
}

/// One replicate's ELBO, or `None` if the flow diverged.
type Cell = Option<f64>;

fn replicate_elbos(setup: &Setup, jobs: &[(usize, &dyn FlowTransform, usize, usize)]) -> Result<Vec<Vec<Cell>>, CliError> {
    let target = setup.augmented();
    let reps = setup.cfg.replication.replicates;
    let seed = derived_seed(setup.cfg.seed(), tag::ELBO);
    let items: Vec<(usize, usize)> = (0..jobs.len()).flat_map(|j| (0..reps).map(move |r| (j, r))).collect();
    let values: Vec<Result<Cell, CliError>> = items
        .par_iter()
        .map(|&(j, r)| {
            let (cell, t, n, m) = jobs[j];
            let flow = setup.mixflow(t, n, m)?;
            match flow.estimate_elbo(&target, &mut stream_rng(seed, cell_stream(cell, r))) {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                Ok(_) => Ok(None),
                Err(e) if e.is_divergence() => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    let mut grid = vec![Vec::with_capacity(reps); jobs.len()];
    for (&(j, _), v) in items.iter().zip(values) {
        grid[j].push(v?);
    }
    Ok(grid)
}

fn summary(cell: &[Cell]) -> Option<ElboSummary> {
    cell.iter().copied().collect::<Option<Vec<f64>>>().map(ElboSummary::from_values)
}

fn status(cell: &[Cell]) -> &'static str {
    if cell.iter().all(Option::is_some) {
        "ok"
    } else {
        "diverged"
    }
}

fn sweep(setup: &Setup, out: &mut Outputs) -> Result<(), CliError> {
    let eps = setup.cfg.epsilons();
    let ns = &setup.cfg.flow.n_steps;
    let transforms: Vec<Box<dyn FlowTransform>> = eps.iter().map(|&e| setup.transform(e)).collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for (ei, t) in transforms.iter().enumerate() {
        for (ni, &n) in ns.iter().enumerate() {
            jobs.push((ei * ns.len() + ni, t.as_ref(), n, 0));
        }
    }
    let grid = replicate_elbos(setup, &jobs)?;

    let mut rows = Vec::new();
    let mut best: Option<(usize, ElboSummary)> = None;
    for (j, cell) in grid.iter().enumerate() {
        let (e, n) = (eps[j / ns.len()], ns[j % ns.len()]);
        let st = status(cell);
        for (r, v) in cell.iter().enumerate() {
            rows.push(vec![fmt(e), n.to_string(), r.to_string(), fmt(v.unwrap_or(f64::NAN)), st.to_string()]);
        }
        if let Some(s) = summary(cell) {
            if best.as_ref().is_none_or(|(_, b)| s.mean > b.mean) {
                best = Some((j, s));
            }
        }
    }
    let header = ["epsilon", "n_steps", "replicate", "elbo", "status"].map(String::from);
    out.write_csv("elbo_sweep.csv", &header, &rows)?;
    let (j, s) = best.ok_or_else(|| CliError::Numerical("every sweep cell diverged".into()))?;
    let diverged = grid.iter().filter(|c| status(c) != "ok").count();
    out.write_json(
        "best.json",
        &json!({
            "epsilon": eps[j / ns.len()],
            "n_steps": ns[j % ns.len()],
            "leapfrog": setup.cfg.flow.leapfrog,
            "elbo_mean": s.mean,
            "elbo_stderr": s.stderr,
            "replicates": s.values.len(),
            "diverged_cells": diverged,
        }),
    )
}

fn elbo_vs_n(setup: &Setup, t: &dyn FlowTransform, out: &mut Outputs) -> Result<(), CliError> {
    let f = &setup.cfg.flow;
    let mut jobs = Vec::new();
    for (ni, &n) in f.n_steps.iter().enumerate() {
        for (mi, &m) in f.burn_in.iter().enumerate() {
            if m < n {
                jobs.push((ni * f.burn_in.len() + mi, t, n, m));
            }
        }
    }
    let grid = replicate_elbos(setup, &jobs)?;
    let rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(&grid)
        .map(|(&(_, _, n, m), cell)| {
            let (mean, se) = summary(cell).map_or((f64::NAN, f64::NAN), |s| (s.mean, s.stderr));
            vec![n.to_string(), m.to_string(), fmt(mean), fmt(se), cell.len().to_string(), status(cell).into()]
        })
        .collect();
    let header = ["n_steps", "burn_in", "elbo_mean", "elbo_stderr", "replicates", "status"].map(String::from);
    out.write_csv("elbo_vs_n.csv", &header, &rows)
}

fn draws(setup: &Setup, t: &dyn FlowTransform) -> Result<Vec<mixflow::AugmentedState>, CliError> {
    let flow = setup.mixflow(t, setup.cfg.n_max(), 0)?;
    Ok(flow.sample_many(derived_seed(setup.cfg.seed(), tag::SAMPLES), setup.cfg.diagnostics.samples)?)
}

fn samples(setup: &Setup, t: &dyn FlowTransform, out: &mut Outputs) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = draws(setup, t)?.iter().map(state_row).collect();
    out.write_csv("samples.csv", &state_header(setup.dim()), &rows)
}

fn ksd(setup: &Setup, t: &dyn FlowTransform, out: &mut Outputs) -> Result<(), CliError> {
    let d = &setup.cfg.diagnostics;
    if !d.ksd {
        return Ok(());
    }
    let xs: Vec<Vec<f64>> = draws(setup, t)?.into_iter().map(|s| s.x).collect();
    let value = ksd_imq(&xs, setup.score(), d.ksd_c, d.ksd_beta)?;
    out.write_json(
        "ksd.json",
        &json!({ "n_steps": setup.cfg.n_max(), "samples": xs.len(), "c": d.ksd_c, "beta": d.ksd_beta, "ksd": value }),
    )
}

fn stability(setup: &Setup, t: &dyn FlowTransform, out: &mut Outputs) -> Result<(), CliError> {
    let d = &setup.cfg.diagnostics;
    let flow = setup.mixflow(t, setup.cfg.n_max(), 0)?;
    let mut rng = stream_rng(derived_seed(setup.cfg.seed(), tag::STABILITY), 0);
    let p = stability_profile(&flow, &d.stability_k, d.stability_draws, &mut rng)?;
    let rows: Vec<Vec<String>> = p
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.k.to_string()];
            row.extend(r.forward_backward.iter().chain(&r.backward_forward).map(|v| fmt(*v)));
            row
        })
        .collect();
    let header = ["k", "fb_q25", "fb_q50", "fb_q75", "bf_q25", "bf_q50", "bf_q75"].map(String::from);
    out.write_csv("stability.csv", &header, &rows)
}

fn density(setup: &Setup, t: &dyn FlowTransform, out: &mut Outputs) -> Result<(), CliError> {
    let d = setup.dim();
    let flow = setup.mixflow(t, setup.cfg.n_max(), 0)?;
    let points = match &setup.cfg.density.points {
        Some(p) => read_states(p, d)?,
        None => flow.sample_many(derived_seed(setup.cfg.seed(), tag::DENSITY), setup.cfg.diagnostics.samples)?,
    };
    let target = setup.augmented();
    let rows: Vec<Result<Vec<String>, CliError>> = points
        .par_iter()
        .map(|s| {
            let tr = flow.density_triple(s)?;
            let mut row = state_row(s);
            row.push(fmt(tr.log_density));
            row.push(fmt(tr.log_jacobian_product));
            row.push(fmt(target.log_density_state(s)));
            Ok(row)
        })
        .collect();
    let rows: Vec<Vec<String>> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut header = state_header(d);
    header.extend(["log_density", "log_jacobian_product", "log_target"].map(String::from));
    out.write_csv("density.csv", &header, &rows)
}

/// Batch-means ESS of each coordinate along one flow trajectory of length `N`.
fn trajectory_ess(setup: &Setup, t: &dyn FlowTransform, out: &mut Outputs) -> Result<(), CliError> {
    let n = setup.cfg.n_max();
    let d = setup.dim();
    let mut rng = stream_rng(derived_seed(setup.cfg.seed(), tag::TRAJECTORY), 0);
    let mut s = setup.reference.sample(&mut rng);
    let mut series = vec![Vec::with_capacity(n); d];
    for k in 0..n {
        if k > 0 {
            t.forward(&mut s)?;
        }
        for (i, v) in s.x.iter().enumerate() {
            series[i].push(*v);
        }
    }
    let rows: Vec<Vec<String>> = series
        .iter()
        .enumerate()
        .map(|(i, xs)| {
            let ess = ess_batch_means(xs).unwrap_or(f64::NAN);
            vec![format!("x{}", i + 1), n.to_string(), fmt(ess)]
        })
        .collect();
    out.write_csv("ess.csv", &["coordinate", "length", "ess"].map(String::from), &rows)
}
