//! Experiment implementations: each named experiment maps a configuration
//! onto core operations, emits CSV tables plus a manifest, and records
//! pass/fail verdicts. Sweep tuples run independently (optionally in
//! parallel); results are assembled in tuple order.

use crate::config::{ExperimentConfig, ProfileConfig};
use crate::report::{fnum, ReportBundle, Table};
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use std::sync::Arc;
use tclab_core::counterexample::{
    heat_kernel_counterexample, ls_slope, tc_counterexample, HeatQuadConfig, KernelDomain, Profile,
    TcSequenceConfig, WeightTriple,
};
use tclab_core::evolution::{
    self, decomposition_audit, evolve, gp_semigroup_check, homogeneous_decay_audit,
    inhomogeneous_audit, EvolutionSetup, ForcingFn,
};
use tclab_core::grid::{build_grid, Grid, GridFunction, WeightSpec};
use tclab_core::operators::{
    accretivity_check, assemble, energy_identity_check, OperatorKind, PhysParams,
};
use tclab_core::profiles::{bump_at, initial_bump, BumpFamily};
use tclab_core::resolvent::{
    pseudo_bound, resolvent_audit, resolvent_audit_derivative_forcing, sharpness_witness_couette,
    sharpness_witness_tc, ResolventProbe,
};
use tclab_core::toolkit::{hardy_audit, log_integral_audit, partition_audit};
use tclab_core::C64;

fn spread(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

fn phys(cfg: &ExperimentConfig, nu: f64, k: i32, b: f64) -> Result<PhysParams> {
    let mut p = PhysParams::new(nu, k, b).map_err(|e| anyhow!("{e}"))?;
    if let Some(theta) = cfg.phys.theta {
        p = p.with_theta(theta).map_err(|e| anyhow!("{e}"))?;
    }
    Ok(p)
}

fn grid_for(
    cfg: &ExperimentConfig,
    default_a: f64,
    default_b: f64,
    default_n: usize,
) -> Result<Arc<Grid>> {
    let (a, b, n) = match &cfg.grid {
        Some(g) => (g.a_end.unwrap_or(default_a), g.b_end, g.n_interior),
        None => (default_a, default_b, default_n),
    };
    build_grid(a, b, n).map_err(|e| anyhow!("field 'grid': {e}"))
}

fn weight_of(exp: Option<f64>) -> WeightSpec {
    match exp {
        None => WeightSpec::Unit,
        Some(p) if p == 0.0 => WeightSpec::Unit,
        Some(p) => WeightSpec::Power(p),
    }
}

fn lambda_range(cfg: &ExperimentConfig) -> (f64, f64, usize) {
    match &cfg.lambda {
        Some(l) => (l.lo, l.hi, l.n_scan),
        None => (-0.5, 1.5, 25),
    }
}

fn profile_of(pc: &Option<ProfileConfig>, default: Profile, kappa: f64) -> Profile {
    match pc {
        None => default,
        Some(p) => {
            let coef = if p.scale_by_kappa {
                p.coef * kappa
            } else {
                p.coef
            };
            Profile::new(coef, p.exponent)
        }
    }
}

fn initial_state(cfg: &ExperimentConfig, grid: &Arc<Grid>, kind: OperatorKind) -> GridFunction {
    let (c, w) = match &cfg.initial {
        Some(i) => (i.center, i.half_width),
        None => match kind {
            OperatorKind::Couette => {
                let mid = 0.5 * (grid.a_end() + grid.b_end());
                (mid, 0.3 * (grid.b_end() - grid.a_end()))
            }
            _ => (2.0, 0.5),
        },
    };
    initial_bump(grid, c, w)
}

fn base_manifest(cfg: &ExperimentConfig) -> Vec<String> {
    let mut m = vec!["config:".to_string()];
    match cfg.emit() {
        Ok(text) => m.extend(text.lines().map(|l| format!("  {l}"))),
        Err(_) => m.push("  <unserializable>".into()),
    }
    m.push(format!("seed {}", cfg.seed));
    m
}

pub fn run(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let mut bundle = match cfg.experiment.as_str() {
        "pseudo-bound" => run_pseudo_bound(cfg)?,
        "resolvent-audit" => run_resolvent_audit(cfg)?,
        "sharpness" => run_sharpness(cfg)?,
        "evolve" => run_evolve(cfg)?,
        "thm1-weights" => run_thm1_weights(cfg)?,
        "decomposition" => run_decomposition(cfg)?,
        "gp-check" => run_gp_check(cfg)?,
        "dyadic-check" => run_dyadic_check(cfg)?,
        "hardy" => run_hardy(cfg)?,
        "counterexample-tc" => run_counterexample_tc(cfg)?,
        "counterexample-heat" => run_counterexample_heat(cfg)?,
        "convergence" => run_convergence(cfg)?,
        other => bail!("unknown experiment '{other}'"),
    };
    let mut manifest = base_manifest(cfg);
    manifest.append(&mut bundle.manifest);
    bundle.manifest = manifest;
    Ok(bundle)
}


/// Run one sweep tuple per entry, partitioning successes from failures so a
/// bad tuple is recorded without aborting the sweep.
fn partition_tuples<T: Send>(
    tuples: &[(f64, i32, f64)],
    f: impl Fn(&(f64, i32, f64)) -> Result<T> + Sync,
) -> (Vec<T>, Vec<String>) {
    let outcomes: Vec<_> = tuples.par_iter().map(|t| (t, f(t))).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (tuple, outcome) in outcomes {
        match outcome {
            Ok(v) => ok.push(v),
            Err(e) => failed.push(format!("tuple {tuple:?} failed: {e:#}")),
        }
    }
    (ok, failed)
}

fn push_failures(bundle: &mut ReportBundle, failures: Vec<String>, total: usize) {
    if failures.is_empty() {
        return;
    }
    let n = failures.len();
    for line in failures {
        bundle.manifest.push(line);
    }
    bundle.push_verdict(
        "tuple-failures",
        false,
        format!("{n} of {total} tuples failed (see manifest)"),
    );
}

fn tuple_list(cfg: &ExperimentConfig) -> Vec<(f64, i32, f64)> {
    let mut tuples = Vec::new();
    for &nu in &cfg.nu_list() {
        for &k in &cfg.k_list() {
            for &b in &cfg.b_list() {
                tuples.push((nu, k, b));
            }
        }
    }
    tuples
}

fn run_pseudo_bound(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let grid = grid_for(cfg, 1.0, 16.0, 2047)?;
    let kind = if grid.a_end() == 1.0 {
        OperatorKind::TaylorCouette
    } else {
        OperatorKind::Couette
    };
    let w_in = weight_of(cfg.weights.as_ref().and_then(|w| w.w_in));
    let w_out = weight_of(cfg.weights.as_ref().and_then(|w| w.w_out));
    let (lo, hi, n_scan) = lambda_range(cfg);

    let tuples = tuple_list(cfg);
    let (results, failures) = partition_tuples(&tuples, |&(nu, k, b)| {
        let p = phys(cfg, nu, k, b)?;
        let res = pseudo_bound(kind, &p, &grid, &w_in, &w_out, (lo, hi), n_scan)
            .map_err(|e| anyhow!("{e}"))?;
        Ok((nu, k, b, res))
    });

    let mut scan_table = Table::new(
        "scan",
        vec!["lambda", "sigma_min", "nu", "k", "B", "R_max", "n_interior"],
    );
    let mut summary = Table::new("psi", vec!["nu", "k", "B", "psi", "lambda_star"]);
    for (nu, k, b, res) in &results {
        for pt in &res.scan {
            scan_table.push(vec![
                fnum(pt.lambda),
                fnum(pt.sigma_min),
                fnum(*nu),
                k.to_string(),
                fnum(*b),
                fnum(grid.b_end()),
                grid.n_interior().to_string(),
            ]);
        }
        summary.push(vec![
            fnum(*nu),
            k.to_string(),
            fnum(*b),
            fnum(res.psi),
            fnum(res.lambda_star),
        ]);
    }

    let mut bundle = ReportBundle::default();
    for line in &failures {
        bundle.manifest.push(line.clone());
    }
    if !failures.is_empty() {
        bundle.push_verdict(
            "tuple-failures",
            false,
            format!(
                "{} of {} tuples failed (see manifest)",
                failures.len(),
                tuples.len()
            ),
        );
    }
    // One scaling verdict per (k, B) group with at least three viscosities.
    let mut grouped = false;
    for &k in &cfg.k_list() {
        for &b in &cfg.b_list() {
            let pts: Vec<(f64, f64)> = results
                .iter()
                .filter(|r| r.1 == k && r.2 == b)
                .map(|r| (r.0, r.3.psi))
                .collect();
            if pts.len() >= 3 {
                grouped = true;
                let slope = ls_slope(
                    &pts.iter().map(|(nu, _)| nu.ln()).collect::<Vec<_>>(),
                    &pts.iter().map(|(_, psi)| psi.ln()).collect::<Vec<_>>(),
                );
                bundle.push_verdict(
                    &format!("psi-nu-slope-k{k}-b{b}"),
                    (slope - 1.0 / 3.0).abs() <= 0.05,
                    format!("log-log slope {slope:.4}, target 1/3 +- 0.05"),
                );
            }
        }
    }
    if !grouped {
        let psis: Vec<f64> = results.iter().map(|r| r.3.psi).collect();
        bundle.push_verdict(
            "psi-finite",
            psis.iter().all(|p| p.is_finite() && *p > 0.0),
            format!("psi values {psis:?}"),
        );
    }
    bundle.tables.push(scan_table);
    bundle.tables.push(summary);
    Ok(bundle)
}

fn run_resolvent_audit(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let grid = grid_for(cfg, 1.0, 9.0, 2047)?;
    let lambdas = cfg.lambda_list();
    let trials = cfg.trials();
    let tuples = tuple_list(cfg);
    let (results, failures) = partition_tuples(&tuples, |&(nu, k, b)| {
        let p = phys(cfg, nu, k, b)?;
        let mut worst = 0.0f64;
        let mut worst_deriv = 0.0f64;
        let mut rows = Vec::new();
        for &lam in &lambdas {
            let probe = ResolventProbe::new(p, lam, OperatorKind::TaylorCouette)
                .map_err(|e| anyhow!("{e}"))?;
            let audit =
                resolvent_audit(&probe, &grid, trials, cfg.seed).map_err(|e| anyhow!("{e}"))?;
            for case in &audit.cases {
                rows.push((nu, k, b, lam, case.trial, case.lhs, case.rhs, case.quotient));
            }
            worst = worst.max(audit.worst_quotient);
            let deriv =
                resolvent_audit_derivative_forcing(&probe, &grid, trials.min(8), cfg.seed + 1)
                    .map_err(|e| anyhow!("{e}"))?;
            worst_deriv = worst_deriv.max(deriv.worst_quotient);
        }
        Ok((nu, worst, worst_deriv, rows))
    });

    let mut table = Table::new(
        "audit",
        vec!["nu", "k", "B", "lambda", "trial", "lhs", "rhs", "quotient"],
    );
    for (_, _, _, rows) in &results {
        for (nu, k, b, lam, trial, lhs, rhs, quotient) in rows {
            table.push(vec![
                fnum(*nu),
                k.to_string(),
                fnum(*b),
                fnum(*lam),
                trial.to_string(),
                fnum(*lhs),
                fnum(*rhs),
                fnum(*quotient),
            ]);
        }
    }
    let mut bundle = ReportBundle::default();
    push_failures(&mut bundle, failures, tuples.len());
    let worsts: Vec<f64> = results.iter().map(|r| r.1).collect();
    let worsts_deriv: Vec<f64> = results.iter().map(|r| r.2).collect();
    let sp = spread(&worsts);
    let sp_deriv = spread(&worsts_deriv);
    let pass = if worsts.len() >= 2 {
        sp < 3.0 && sp_deriv < 3.0
    } else {
        true
    };
    bundle.push_verdict(
        "quotient-uniformity",
        pass && worsts.iter().all(|w| w.is_finite()),
        format!(
            "worst quotients {worsts:?} (spread {sp:.3}), derivative-forcing spread {sp_deriv:.3}"
        ),
    );
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_sharpness(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let nus = cfg.nu_list();
    let b = cfg.phys.b;
    let panels = 4096;
    let mut tc_table = Table::new(
        "witness_tc",
        vec!["nu", "B", "r0", "lambda0", "quotient", "w0_over_r_norm"],
    );
    let mut c_table = Table::new(
        "witness_couette",
        vec!["nu", "lambda0", "quotient", "w0_norm"],
    );
    let mut tc_q = Vec::new();
    let mut c_q = Vec::new();
    let mut tc_logs = (Vec::new(), Vec::new());
    let mut c_logs = (Vec::new(), Vec::new());
    for &nu in &nus {
        let w = sharpness_witness_tc(nu, b, panels).map_err(|e| anyhow!("{e}"))?;
        tc_q.push(w.quotient);
        tc_logs.0.push(w.r0.ln());
        tc_logs.1.push(w.w0_over_r_norm.ln());
        tc_table.push(vec![
            fnum(nu),
            fnum(b),
            fnum(w.r0),
            fnum(w.lambda0),
            fnum(w.quotient),
            fnum(w.w0_over_r_norm),
        ]);
        if nu < 1.0 {
            let cw = sharpness_witness_couette(nu, panels).map_err(|e| anyhow!("{e}"))?;
            c_q.push(cw.quotient);
            c_logs.0.push(nu.ln());
            c_logs.1.push(cw.w0_norm.ln());
            c_table.push(vec![
                fnum(nu),
                fnum(cw.lambda0),
                fnum(cw.quotient),
                fnum(cw.w0_norm),
            ]);
        }
    }
    let mut bundle = ReportBundle::default();
    if tc_q.len() >= 2 {
        let sp = spread(&tc_q);
        bundle.push_verdict(
            "tc-quotient-bounded",
            sp < 3.0,
            format!("spread {sp:.3} (< 3)"),
        );
    }
    if tc_logs.0.len() >= 3 {
        let slope = ls_slope(&tc_logs.0, &tc_logs.1);
        bundle.push_verdict(
            "tc-norm-slope",
            (slope + 7.5).abs() <= 0.1,
            format!("witness norm slope vs r0 = {slope:.3} (-7.5 +- 0.1)"),
        );
    }
    if c_q.len() >= 2 {
        let sp = spread(&c_q);
        bundle.push_verdict(
            "couette-quotient-bounded",
            sp < 3.0,
            format!("spread {sp:.3} (< 3)"),
        );
    }
    if c_logs.0.len() >= 3 {
        let slope = ls_slope(&c_logs.0, &c_logs.1);
        bundle.push_verdict(
            "couette-norm-slope",
            (slope - 13.0 / 6.0).abs() <= 0.05,
            format!("witness norm slope vs nu = {slope:.4} (13/6 +- 0.05)"),
        );
    }
    bundle.tables.push(tc_table);
    bundle.tables.push(c_table);
    Ok(bundle)
}

fn forcing_from(cfg: &ExperimentConfig, grid: &Arc<Grid>) -> Option<ForcingFn> {
    cfg.forcing.as_ref().map(|f| {
        let g = Arc::clone(grid);
        let (c, w, t_off) = (f.center, f.half_width, f.t_off);
        let forcing: ForcingFn = Arc::new(move |t: f64| {
            let amp = if t <= t_off { 1.0 } else { 0.0 };
            GridFunction::from_real_fn(Arc::clone(&g), move |r| amp * bump_at(r, c, w))
        });
        forcing
    })
}

fn setup_from(
    cfg: &ExperimentConfig,
    p: PhysParams,
    grid: &Arc<Grid>,
    kind: OperatorKind,
) -> EvolutionSetup {
    let dt = cfg
        .time
        .as_ref()
        .and_then(|t| t.dt)
        .unwrap_or_else(|| evolution::default_dt(&p));
    let t_end = cfg
        .time
        .as_ref()
        .and_then(|t| t.t_end)
        .unwrap_or_else(|| evolution::default_t_end(&p));
    let snapshot_every = cfg
        .time
        .as_ref()
        .and_then(|t| t.snapshot_every)
        .unwrap_or(0);
    let forcing = forcing_from(cfg, grid);
    let initial = if forcing.is_some() {
        GridFunction::zeros(Arc::clone(grid))
    } else {
        initial_state(cfg, grid, kind)
    };
    EvolutionSetup {
        params: p,
        grid: Arc::clone(grid),
        kind,
        dt,
        t_end,
        initial,
        forcing,
        snapshot_every,
    }
}

fn run_evolve(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let grid = grid_for(cfg, 1.0, 9.0, 511)?;
    let kind = if grid.a_end() == 1.0 {
        OperatorKind::TaylorCouette
    } else {
        OperatorKind::Couette
    };
    let mut bundle = ReportBundle::default();

    // Operator-level checks at the base parameters.
    let p0 = phys(cfg, cfg.phys.nu, cfg.phys.k, cfg.phys.b)?;
    if matches!(kind, OperatorKind::TaylorCouette) {
        let mut family = BumpFamily::new(cfg.seed);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let f = family.sample(&grid);
            let id = energy_identity_check(&p0, &f).map_err(|e| anyhow!("{e}"))?;
            worst = worst.max(id.gap / (id.lhs.abs() + id.rhs.abs()).max(1e-300));
        }
        bundle.push_verdict(
            "energy-identity",
            worst <= 1e-12,
            format!("worst relative gap {worst:.3e} over 100 seeded inputs"),
        );
    }
    let a0 = assemble(kind, &p0, &grid).map_err(|e| anyhow!("{e}"))?;
    let min_form = accretivity_check(&a0, 200, cfg.seed).map_err(|e| anyhow!("{e}"))?;
    bundle.push_verdict(
        "accretivity",
        min_form >= -1e-12,
        format!("min quadratic form {min_form:.3e} over 200 seeded inputs"),
    );

    let tuples = tuple_list(cfg);
    let (results, failures) = partition_tuples(&tuples, |&(nu, k, b)| {
        let p = phys(cfg, nu, k, b)?;
        let setup = setup_from(cfg, p, &grid, kind);
        let out = evolve(&setup).map_err(|e| anyhow!("{e}"))?;
        let quotient = if setup.forcing.is_some() {
            inhomogeneous_audit(&setup)
                .map_err(|e| anyhow!("{e}"))?
                .quotient
        } else {
            0.0
        };
        Ok((nu, k, b, out, quotient))
    });
    push_failures(&mut bundle, failures, tuples.len());

    let mut table = Table::new(
        "trace",
        vec![
            "nu",
            "k",
            "B",
            "sup_l2",
            "visc_grad",
            "weighted_l2",
            "max_step_ratio",
            "steps",
            "quotient",
        ],
    );
    let mut ratios = Vec::new();
    let mut quotients = Vec::new();
    for (nu, k, b, out, quotient) in &results {
        table.push(vec![
            fnum(*nu),
            k.to_string(),
            fnum(*b),
            fnum(out.trace.sup_l2),
            fnum(out.trace.visc_grad),
            fnum(out.trace.weighted_l2),
            fnum(out.trace.max_step_ratio),
            out.trace.steps.to_string(),
            fnum(*quotient),
        ]);
        if cfg.forcing.is_none() {
            ratios.push(out.trace.max_step_ratio);
        } else {
            quotients.push(*quotient);
        }
    }
    if !ratios.is_empty() {
        let worst = ratios.iter().cloned().fold(0.0, f64::max);
        bundle.push_verdict(
            "contraction",
            worst <= 1.0 + 1e-13,
            format!("max step ratio - 1 = {:.3e} (limit 1e-13)", worst - 1.0),
        );
    }
    if !quotients.is_empty() {
        let sp = if quotients.len() >= 2 {
            spread(&quotients)
        } else {
            1.0
        };
        bundle.push_verdict(
            "inhomogeneous-quotient",
            quotients.iter().all(|q| q.is_finite()) && sp < 3.0,
            format!("quotients {quotients:?} spread {sp:.3} (< 3)"),
        );
    }

    // Snapshot dumps for the base tuple when requested.
    if cfg
        .time
        .as_ref()
        .and_then(|t| t.snapshot_every)
        .unwrap_or(0)
        > 0
    {
        let setup = setup_from(cfg, p0, &grid, kind);
        let out = evolve(&setup).map_err(|e| anyhow!("{e}"))?;
        if let Some(snaps) = &out.snapshots {
            for (i, (t, state)) in snaps.times.iter().zip(&snaps.states).enumerate() {
                let mut text = String::new();
                for (j, v) in state.values().iter().enumerate() {
                    text.push_str(&format!(
                        "{} {} {}\n",
                        fnum(grid.node(j)),
                        fnum(v.re),
                        fnum(v.im)
                    ));
                }
                bundle
                    .artifacts
                    .push((format!("snapshots/snap_{i:06}.dat"), text));
                bundle.manifest.push(format!(
                    "snapshot {i} t {} nu {} k {} B {} theta {} dt {} R_max {} n_interior {}",
                    fnum(*t),
                    fnum(p0.nu()),
                    p0.k(),
                    fnum(p0.b()),
                    fnum(p0.theta()),
                    fnum(setup.dt),
                    fnum(grid.b_end()),
                    grid.n_interior()
                ));
            }
        }
    }
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_thm1_weights(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let grid = grid_for(cfg, 1.0, 16.0, 1535)?;
    let q_list = cfg.q_list();
    let tuples = tuple_list(cfg);
    let (results, failures) = partition_tuples(&tuples, |&(nu, k, b)| {
        let p = phys(cfg, nu, k, b)?;
        let setup = setup_from(cfg, p, &grid, OperatorKind::TaylorCouette);
        let exp_c = cfg.sweep.as_ref().and_then(|s| s.exp_c);
        let audit =
            homogeneous_decay_audit(&setup, &q_list, exp_c).map_err(|e| anyhow!("{e}"))?;
        Ok((nu, k, b, audit))
    });

    let mut table = Table::new(
        "weights",
        vec![
            "nu",
            "k",
            "B",
            "q",
            "sup_weighted",
            "grad_term",
            "inv_r_term",
            "e_total",
            "ratio_to_initial",
            "recurrence_ratio",
            "weighted_decay_sup",
        ],
    );
    let mut per_q: Vec<Vec<f64>> = vec![Vec::new(); q_list.len()];
    let mut decay_sups = Vec::new();
    for (nu, k, b, audit) in &results {
        for (i, row) in audit.rows.iter().enumerate() {
            per_q[i].push(row.ratio_to_initial);
            table.push(vec![
                fnum(*nu),
                k.to_string(),
                fnum(*b),
                row.q.to_string(),
                fnum(row.sup_weighted),
                fnum(row.grad_term),
                fnum(row.inv_r_term),
                fnum(row.e_total),
                fnum(row.ratio_to_initial),
                fnum(row.recurrence_ratio),
                fnum(audit.weighted_decay_sup),
            ]);
        }
        decay_sups.push(audit.weighted_decay_sup);
    }
    let mut bundle = ReportBundle::default();
    push_failures(&mut bundle, failures, tuples.len());
    let mut exp_table = Table::new(
        "exp_weight_probe",
        vec!["nu", "c", "sup_ratio", "final_ratio"],
    );
    for (nu, _, _, audit) in &results {
        if let Some(probe) = &audit.exp_weight {
            exp_table.push(vec![
                fnum(*nu),
                fnum(probe.c),
                fnum(probe.sup_ratio),
                fnum(probe.final_ratio),
            ]);
        }
    }
    if !exp_table.rows.is_empty() {
        bundle
            .manifest
            .push("exponential-weight probe reported without assertion".into());
        bundle.tables.push(exp_table);
    }
    let mut pass = true;
    let mut details = Vec::new();
    for (i, &q) in q_list.iter().enumerate() {
        let finite = per_q[i].iter().all(|r| r.is_finite());
        let sp = if per_q[i].len() >= 2 {
            spread(&per_q[i])
        } else {
            1.0
        };
        pass &= finite && sp < 3.0;
        details.push(format!("q={q} spread {sp:.3}"));
    }
    let spd = if decay_sups.len() >= 2 {
        spread(&decay_sups)
    } else {
        1.0
    };
    pass &= spd < 3.0;
    details.push(format!("decay-sup spread {spd:.3}"));
    bundle.push_verdict("weighted-uniformity", pass, details.join(", "));
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_decomposition(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let grid = grid_for(cfg, 1.0, 16.0, 1023)?;
    let tuples = tuple_list(cfg);
    let (results, failures) = partition_tuples(&tuples, |&(nu, k, b)| {
        let p = phys(cfg, nu, k, b)?;
        let setup = setup_from(cfg, p, &grid, OperatorKind::TaylorCouette);
        let steps = (setup.t_end / setup.dt).round() as usize;
        let audit =
            decomposition_audit(&setup, (steps / 256).max(1)).map_err(|e| anyhow!("{e}"))?;
        let split = tclab_core::toolkit::region_split_measure(&audit.snapshots_w1, p.kappa())
            .map_err(|e| anyhow!("{e}"))?;
        Ok((nu, k, b, audit, split))
    });

    let mut table = Table::new(
        "decomposition",
        vec![
            "nu",
            "k",
            "B",
            "quotient_damp",
            "quotient_t2r5",
            "defect_rel",
            "i1",
            "bound1",
            "i2",
            "bound2",
        ],
    );
    let mut damp = Vec::new();
    let mut t2 = Vec::new();
    let mut split_ok = true;
    for (nu, k, b, audit, split) in &results {
        damp.push(audit.quotient_damp);
        t2.push(audit.quotient_t2r5);
        split_ok &= split.i1 <= split.bound1 && split.i2 <= split.bound2;
        table.push(vec![
            fnum(*nu),
            k.to_string(),
            fnum(*b),
            fnum(audit.quotient_damp),
            fnum(audit.quotient_t2r5),
            fnum(audit.defect_rel),
            fnum(split.i1),
            fnum(split.bound1),
            fnum(split.i2),
            fnum(split.bound2),
        ]);
    }
    let mut bundle = ReportBundle::default();
    push_failures(&mut bundle, failures, tuples.len());
    let sp_damp = if damp.len() >= 2 { spread(&damp) } else { 1.0 };
    let sp_t2 = if t2.len() >= 2 { spread(&t2) } else { 1.0 };
    bundle.push_verdict(
        "decomposition-uniformity",
        sp_damp < 3.0 && sp_t2 < 3.0 && split_ok,
        format!(
            "damping spread {sp_damp:.3}, high-weight spread {sp_t2:.3}, region split ok: {split_ok}"
        ),
    );
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_gp_check(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let grid = grid_for(cfg, 0.0, 1.0, 511)?;
    let (lo, hi, n_scan) = lambda_range(cfg);
    let mut table = Table::new("gp", vec!["nu", "k", "psi", "margin"]);
    let mut margins = Vec::new();
    for &nu in &cfg.nu_list() {
        for &k in &cfg.k_list() {
            let p = phys(cfg, nu, k, 0.0)?;
            let psi = pseudo_bound(
                OperatorKind::Couette,
                &p,
                &grid,
                &WeightSpec::Unit,
                &WeightSpec::Unit,
                (lo, hi),
                n_scan,
            )
            .map_err(|e| anyhow!("{e}"))?
            .psi;
            let t_end = 3.0 / psi;
            let dt = (t_end / 400.0).min(0.1);
            let init = initial_state(cfg, &grid, OperatorKind::Couette);
            let setup = EvolutionSetup::homogeneous(
                p,
                Arc::clone(&grid),
                OperatorKind::Couette,
                dt,
                t_end,
                init,
            );
            let check = gp_semigroup_check(&setup, psi).map_err(|e| anyhow!("{e}"))?;
            margins.push(check.margin);
            table.push(vec![fnum(nu), k.to_string(), fnum(psi), fnum(check.margin)]);
        }
    }
    let mut bundle = ReportBundle::default();
    bundle.push_verdict(
        "semigroup-margin",
        margins.iter().all(|m| *m >= -0.05),
        format!("margins {margins:?} (limit -0.05)"),
    );
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_dyadic_check(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let (j_max, samples) = match &cfg.dyadic {
        Some(d) => (d.j_max, d.r_samples.unwrap_or(10_000)),
        None => (12, 10_000),
    };
    let report = partition_audit(j_max, samples).map_err(|e| anyhow!("{e}"))?;
    let mut table = Table::new(
        "partition",
        vec![
            "j_max",
            "samples",
            "max_sum_err",
            "min_sum_sq",
            "max_sum_sq",
            "max_scaled_d1",
            "max_scaled_d2",
            "violations",
        ],
    );
    table.push(vec![
        j_max.to_string(),
        samples.to_string(),
        fnum(report.max_sum_err),
        fnum(report.min_sum_sq),
        fnum(report.max_sum_sq),
        fnum(report.max_scaled_d1),
        fnum(report.max_scaled_d2),
        report.violations.len().to_string(),
    ]);
    let mut bundle = ReportBundle::default();
    for v in report.violations.iter().take(20) {
        bundle.manifest.push(format!(
            "violation at r = {} (j = {:?}): {}",
            v.r, v.j, v.what
        ));
    }
    bundle.push_verdict(
        "partition-invariants",
        report.is_clean(),
        format!("{} violations", report.violations.len()),
    );
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_hardy(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let grid = grid_for(cfg, 1.0, 33.0, 1023)?;
    let mut family = BumpFamily::new(cfg.seed);
    let mut table = Table::new("hardy", vec!["trial", "lhs", "rhs", "quotient"]);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let f = family.sample(&grid);
        let a = hardy_audit(&f).map_err(|e| anyhow!("{e}"))?;
        worst = worst.max(a.quotient);
        table.push(vec![
            trial.to_string(),
            fnum(a.lhs),
            fnum(a.rhs),
            fnum(a.quotient),
        ]);
    }
    let mut log_table = Table::new("log_integral", vec!["r0", "delta", "value", "bound"]);
    let mut log_ok = true;
    for &d in &[0.01, 0.1, 0.5] {
        let a = log_integral_audit(10.0, d).map_err(|e| anyhow!("{e}"))?;
        log_ok &= a.value <= a.bound;
        log_table.push(vec![fnum(10.0), fnum(d), fnum(a.value), fnum(a.bound)]);
    }
    let mut bundle = ReportBundle::default();
    bundle.push_verdict(
        "hardy-quotient",
        worst <= 2.5,
        format!("worst quotient {worst:.4} (<= 2.5)"),
    );
    bundle.push_verdict("log-integral", log_ok, "closed form below bound".into());
    bundle.tables.push(table);
    bundle.tables.push(log_table);
    Ok(bundle)
}

fn run_counterexample_tc(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let p = phys(cfg, cfg.phys.nu, cfg.phys.k, cfg.phys.b)?;
    let default_ce = crate::config::CounterexampleConfig {
        delta: None,
        n_interior: None,
        dt: None,
        t_end: None,
        n_max: None,
        domain: None,
        v1: None,
        v2: None,
        phi: None,
        a1: None,
        a2: None,
    };
    let ce = cfg.counterexample.clone().unwrap_or(default_ce);
    let kappa = p.kappa();
    let weights = WeightTriple {
        a1: profile_of(&ce.a1, Profile::new(1.0, -1.0), kappa),
        a2: profile_of(&ce.a2, Profile::new(1.0, 1.0), kappa),
        phi: profile_of(&ce.phi, Profile::new(kappa, -2.0), kappa),
    };
    let mut tcfg = TcSequenceConfig::default();
    if let Some(d) = ce.delta {
        tcfg.delta = d;
    }
    if let Some(n) = ce.n_interior {
        tcfg.n_interior = n;
    }
    if let Some(dt) = ce.dt {
        tcfg.dt = dt;
    }
    if let Some(te) = ce.t_end {
        tcfg.t_end = te;
    }
    if let Some(nm) = ce.n_max {
        tcfg.n_max = nm;
    }
    let seq = tc_counterexample(&p, &weights, &tcfg).map_err(|e| anyhow!("{e}"))?;

    let mut table = Table::new(
        "ratio_series",
        vec!["n", "numerator", "denominator", "R_n", "log_R_n"],
    );
    for e in &seq.series.entries {
        table.push(vec![
            e.n.to_string(),
            fnum(e.numerator),
            fnum(e.denominator),
            fnum(e.ratio),
            fnum(e.log_ratio),
        ]);
    }
    let mut bundle = ReportBundle::default();
    bundle.manifest.push(format!(
        "weights: a1 = {:?}, a2 = {:?}, phi = {:?}",
        weights.a1, weights.a2, weights.phi
    ));
    bundle.manifest.push(format!(
        "delta {} poincare_cp {} decay_slope {} guarantee {} sup_phi {}",
        seq.delta, seq.poincare_cp, seq.decay_slope, seq.decay_rate_guarantee, seq.sup_phi
    ));
    bundle.push_verdict(
        "divergence-slope",
        seq.series.slope > 0.0 && seq.series.slope >= 0.9 * seq.predicted_gap,
        format!(
            "slope {:.5} vs prediction {:.5}",
            seq.series.slope, seq.predicted_gap
        ),
    );
    bundle.push_verdict(
        "finiteness",
        seq.tail_fraction < 1e-6 && seq.decay_rate_guarantee > seq.sup_phi,
        format!(
            "tail {:.2e}, guarantee {:.3} vs sup phi {:.3}",
            seq.tail_fraction, seq.decay_rate_guarantee, seq.sup_phi
        ),
    );
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_counterexample_heat(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let ce = cfg.counterexample.as_ref();
    let v1 = ce
        .and_then(|c| c.v1)
        .map(|v| (v[0], v[1]))
        .unwrap_or((0.0, 1.0));
    let v2 = ce
        .and_then(|c| c.v2)
        .map(|v| (v[0], v[1]))
        .unwrap_or((3.0, 4.0));
    let domain = match ce.and_then(|c| c.domain.as_deref()) {
        None | Some("line") => KernelDomain::Line,
        Some("half-line-dirichlet") => KernelDomain::HalfLineDirichlet,
        Some(other) => {
            if let Some(rest) = other.strip_prefix("interval-dirichlet:") {
                KernelDomain::IntervalDirichlet {
                    length: rest.parse().context("field 'counterexample.domain'")?,
                }
            } else {
                bail!("field 'counterexample.domain': unknown domain '{other}'");
            }
        }
    };
    let none_profile: Option<ProfileConfig> = None;
    let weights = WeightTriple {
        a1: profile_of(
            ce.map_or(&none_profile, |c| &c.a1),
            Profile::constant(1.0),
            0.0,
        ),
        a2: profile_of(
            ce.map_or(&none_profile, |c| &c.a2),
            Profile::constant(1.0),
            0.0,
        ),
        phi: profile_of(
            ce.map_or(&none_profile, |c| &c.phi),
            Profile::new(1.0, 1.0),
            0.0,
        ),
    };
    let n_max = ce.and_then(|c| c.n_max).unwrap_or(8);
    let mut quad = HeatQuadConfig::default_for(v1, v2);
    // keep the observation window inside the kernel domain
    match domain {
        KernelDomain::HalfLineDirichlet => quad.x_lo = quad.x_lo.max(0.0),
        KernelDomain::IntervalDirichlet { length } => {
            quad.x_lo = quad.x_lo.max(0.0);
            quad.x_hi = quad.x_hi.min(length);
        }
        KernelDomain::Line => {}
    }
    let out = heat_kernel_counterexample(domain, &weights, v1, v2, n_max, &quad)
        .map_err(|e| anyhow!("{e}"))?;

    let mut table = Table::new(
        "ratio_series",
        vec!["n", "numerator", "denominator", "R_n", "log_R_n"],
    );
    for e in &out.series.entries {
        table.push(vec![
            e.n.to_string(),
            fnum(e.numerator),
            fnum(e.denominator),
            fnum(e.ratio),
            fnum(e.log_ratio),
        ]);
    }
    let mut bundle = ReportBundle::default();
    bundle.manifest.push(format!(
        "regions: V1 = {v1:?}, V2 = {v2:?}, x0 = {}, d1 = {}, d2 = {}",
        out.x0, out.d1, out.d2
    ));
    bundle.push_verdict(
        "positivity",
        out.w_at_1_x0 > 0.0,
        format!("w(1, x0) = {:.4e}", out.w_at_1_x0),
    );
    bundle.push_verdict(
        "divergence-slope",
        out.series.slope >= 0.9 * (out.d2 - out.d1),
        format!(
            "slope {:.3} vs 0.9 (d2 - d1) = {:.3}",
            out.series.slope,
            0.9 * (out.d2 - out.d1)
        ),
    );
    bundle.tables.push(table);
    Ok(bundle)
}

fn run_convergence(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let target = cfg
        .convergence
        .as_ref()
        .map(|c| c.target.clone())
        .unwrap_or_else(|| "evolve".to_string());
    let mut bundle = ReportBundle::default();
    let mut table = Table::new("convergence", vec!["target", "quantity", "value"]);
    match target.as_str() {
        "evolve" => {
            let grid = grid_for(cfg, 1.0, 9.0, 255)?;
            let p = phys(cfg, cfg.phys.nu, cfg.phys.k, cfg.phys.b)?;
            let base_dt = cfg.time.as_ref().and_then(|t| t.dt).unwrap_or(0.2);
            let t_end = cfg.time.as_ref().and_then(|t| t.t_end).unwrap_or(4.0);
            let run = |dt: f64| -> Result<GridFunction> {
                let setup = EvolutionSetup::homogeneous(
                    p,
                    Arc::clone(&grid),
                    OperatorKind::TaylorCouette,
                    dt,
                    t_end,
                    initial_state(cfg, &grid, OperatorKind::TaylorCouette),
                );
                Ok(evolve(&setup).map_err(|e| anyhow!("{e}"))?.final_state)
            };
            let w1 = run(base_dt)?;
            let w2 = run(base_dt / 2.0)?;
            let w4 = run(base_dt / 4.0)?;
            let diff_norm = |a: &GridFunction, b: &GridFunction| -> Result<f64> {
                tclab_core::grid::weighted_norm(
                    &a.axpy(C64::new(-1.0, 0.0), b).map_err(|e| anyhow!("{e}"))?,
                    &WeightSpec::Unit,
                )
                .map_err(|e| anyhow!("{e}"))
            };
            let d12 = diff_norm(&w1, &w2)?;
            let d24 = diff_norm(&w2, &w4)?;
            let order = (d12 / d24).log2();
            table.push(vec!["evolve".into(), "time_order".into(), fnum(order)]);
            bundle.push_verdict(
                "time-order",
                order >= 1.8,
                format!("observed time order {order:.2} (>= 1.8)"),
            );
        }
        "pseudo-bound" => {
            let p = phys(cfg, cfg.phys.nu, cfg.phys.k, cfg.phys.b)?;
            let w_in = weight_of(cfg.weights.as_ref().and_then(|w| w.w_in));
            let w_out = weight_of(cfg.weights.as_ref().and_then(|w| w.w_out));
            let (b_end, n) = match &cfg.grid {
                Some(g) => (g.b_end, g.n_interior),
                None => (16.0, 2047),
            };
            let g1 = build_grid(1.0, b_end, n).map_err(|e| anyhow!("{e}"))?;
            let g2 = build_grid(1.0, 2.0 * b_end - 1.0, 2 * n + 1).map_err(|e| anyhow!("{e}"))?;
            let psi1 = pseudo_bound(
                OperatorKind::TaylorCouette,
                &p,
                &g1,
                &w_in,
                &w_out,
                (-0.5, 1.5),
                25,
            )
            .map_err(|e| anyhow!("{e}"))?
            .psi;
            let psi2 = pseudo_bound(
                OperatorKind::TaylorCouette,
                &p,
                &g2,
                &w_in,
                &w_out,
                (-0.5, 1.5),
                25,
            )
            .map_err(|e| anyhow!("{e}"))?
            .psi;
            let dev = (psi2 - psi1).abs() / psi1;
            table.push(vec![
                "pseudo-bound".into(),
                "truncation_dev".into(),
                fnum(dev),
            ]);
            bundle.push_verdict(
                "truncation-stability",
                dev <= 0.02,
                format!("psi deviation {dev:.4} under domain doubling (<= 0.02)"),
            );
        }
        "sharpness" => {
            let nu = cfg.phys.nu;
            let b = cfg.phys.b;
            let q = |panels: usize| -> Result<f64> {
                Ok(sharpness_witness_tc(nu, b, panels)
                    .map_err(|e| anyhow!("{e}"))?
                    .quotient)
            };
            let q_coarse = q(256)?;
            let q_mid = q(512)?;
            let q_fine = q(4096)?;
            let e1 = (q_coarse - q_fine).abs();
            let e2 = (q_mid - q_fine).abs();
            let order = (e1 / e2).log2();
            table.push(vec![
                "sharpness".into(),
                "quadrature_order".into(),
                fnum(order),
            ]);
            bundle.push_verdict(
                "quadrature-order",
                order >= 3.0,
                format!("observed quadrature order {order:.2} (>= 3)"),
            );
        }
        other => bail!("field 'convergence.target': unknown target '{other}'"),
    }
    bundle.tables.push(table);
    Ok(bundle)
}
