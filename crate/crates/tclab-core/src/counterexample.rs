//! Divergent weighted-quotient sequences.
//!
//! Two constructions share the same measurement: a family of
//! forward-in-time translates `(w_n, f_n) = (w(t-n), f(t-n))` of one
//! solution/forcing pair whose spatial supports are separated. Under any
//! exponential space-time weight `e^{t phi(r)}` with `phi` larger on the
//! solution's private support than on the forcing's, the quotient
//!
//! `R_n = ||e^{t phi} a1 w_n|| / ||e^{t phi} a2 f_n||`
//!
//! grows geometrically in `n`. The radial construction drives a boundary
//! layer problem and extends it; the generic construction convolves heat
//! kernels.

use crate::error::{CoreError, Result};
use crate::grid::{build_grid, Grid, GridFunction};
use crate::operators::{assemble, OperatorKind, PhysParams};
use crate::profiles::{boundary_signal, boundary_signal_d1, plateau, smoothstep, smoothstep_d2};
use crate::tridiag::TridiagonalOperator;
use crate::C64;
use std::sync::Arc;

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Radial profile `coef * r^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub coef: f64,
    pub exponent: f64,
}

impl Profile {
    pub fn new(coef: f64, exponent: f64) -> Self {
        Profile { coef, exponent }
    }

    pub fn constant(c: f64) -> Self {
        Profile {
            coef: c,
            exponent: 0.0,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.coef * r.powf(self.exponent)
    }

    pub fn is_constant(&self) -> bool {
        self.coef == 0.0 || self.exponent == 0.0
    }

    /// Sign of the derivative on `r > 0`: decreasing iff `coef * exponent < 0`.
    pub fn is_strictly_decreasing(&self) -> bool {
        self.coef * self.exponent < 0.0
    }
}

/// Weight triple `(a1, a2, phi)` of the quotient.
#[derive(Debug, Clone, Copy)]
pub struct WeightTriple {
    pub a1: Profile,
    pub a2: Profile,
    pub phi: Profile,
}

impl WeightTriple {
    fn validate_positive(&self, lo: f64, hi: f64) -> Result<()> {
        for t in 0..=64 {
            let r = lo + (hi - lo) * t as f64 / 64.0;
            if !(self.a1.eval(r) > 0.0) || !(self.a2.eval(r) > 0.0) {
                return Err(CoreError::InvalidParameter(format!(
                    "weights a1, a2 must be positive on [{lo}, {hi}] (fails at r = {r})"
                )));
            }
        }
        Ok(())
    }
}

/// Boundary-layer problem on `[1, 1+delta]` driven by the fixed smooth
/// signal at the outer edge. The lift profile is the quintic smoothstep.
#[derive(Debug, Clone, Copy)]
pub struct LocalProblem {
    pub delta: f64,
    /// Scales the boundary signal (zero gives the trivial run).
    pub amplitude: f64,
}

impl LocalProblem {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.25) {
            return Err(CoreError::InvalidParameter(format!(
                "need 0 < delta <= 1/4, got {delta}"
            )));
        }
        Ok(LocalProblem {
            delta,
            amplitude: 1.0,
        })
    }
}

/// One stored step of the local solve: interior samples of `eta_tilde`
/// (solution including the lift) plus its outer boundary value.
#[derive(Debug, Clone)]
pub struct LocalStep {
    pub values: Vec<C64>,
    pub boundary: f64,
}

/// Full history of a boundary-layer run.
pub struct LocalRun {
    pub params: PhysParams,
    pub problem: LocalProblem,
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub steps: Vec<LocalStep>,
    /// Discrete Poincare constant of the interval (close to 1/pi).
    pub poincare_cp: f64,
    /// Fitted slope of `log ||eta||` after the signal switches off.
    pub decay_slope: f64,
    /// Guaranteed decay rate `nu / (4 C_P^2 delta^2)`.
    pub decay_rate_guarantee: f64,
    /// Interior residual of the discrete homogeneous equation at the
    /// mid-signal time, relative to the operator scale.
    pub interior_residual_rel: f64,
}

fn lift_values(grid: &Grid, delta: f64, g: f64) -> Vec<C64> {
    grid.nodes()
        .iter()
        .map(|&r| C64::new(g * smoothstep((r - 1.0) / delta), 0.0))
        .collect()
}

/// Crank-Nicolson solve of the boundary-driven layer problem. The lift
/// residual is evaluated with the discrete operator, so the returned
/// solution satisfies the discrete homogeneous equation exactly (to
/// rounding) on the interior; all discretization error lives in how well
/// the discrete equation approximates the continuum one.
pub fn local_boundary_solve(
    p: &PhysParams,
    lp: &LocalProblem,
    n_interior: usize,
    dt: f64,
    t_end: f64,
) -> Result<LocalRun> {
    if n_interior < 64 {
        return Err(CoreError::InvalidParameter(format!(
            "the layer grid needs at least 64 interior nodes, got {n_interior}"
        )));
    }
    if !(dt > 0.0) || t_end < 2.5 {
        return Err(CoreError::InvalidParameter(
            "need dt > 0 and t_end >= 2.5 to cover the signal and its decay".into(),
        ));
    }
    let delta = lp.delta;
    let grid = build_grid(1.0, 1.0 + delta, n_interior)?;
    let a = assemble(OperatorKind::TaylorCouette, p, &grid)?;
    let h = grid.h();
    let bc_coef = C64::new(-p.nu() / (h * h), 0.0);
    let one = C64::new(1.0, 0.0);
    let half = C64::new(0.5 * dt, 0.0);
    let m_plus = a.affine(one, half);
    let m_minus = a.affine(one, -half);
    let factor = m_plus.factorize()?;

    let n_steps = ((t_end / dt).round() as usize).max(1);
    let g_at = |t: f64| lp.amplitude * boundary_signal(t);

    let mut eta = GridFunction::zeros(Arc::clone(&grid));
    let mut steps = Vec::with_capacity(n_steps + 1);
    steps.push(LocalStep {
        values: lift_values(&grid, delta, g_at(0.0))
            .iter()
            .zip(eta.values())
            .map(|(f, e)| f + e)
            .collect(),
        boundary: g_at(0.0),
    });

    for n in 0..n_steps {
        let t0 = n as f64 * dt;
        let t1 = (n + 1) as f64 * dt;
        let g0 = g_at(t0);
        let g1 = g_at(t1);
        let g_mid = 0.5 * (g0 + g1);
        let f0 = GridFunction::new(Arc::clone(&grid), lift_values(&grid, delta, g0))?;
        let f1 = GridFunction::new(Arc::clone(&grid), lift_values(&grid, delta, g1))?;
        // Discrete lift residual G_h = D_t f + A f_mid (+ boundary term).
        let f_mid = f0.axpy(one, &f1)?.scale(C64::new(0.5, 0.0));
        let af = a.apply_with_boundary(
            &f_mid,
            bc_coef,
            C64::new(0.0, 0.0),
            bc_coef,
            C64::new(g_mid, 0.0),
        )?;
        let dtf = f1
            .axpy(C64::new(-1.0, 0.0), &f0)?
            .scale(C64::new(1.0 / dt, 0.0));
        let g_h = dtf.axpy(one, &af)?;

        let rhs = m_minus.apply(&eta)?.axpy(C64::new(-dt, 0.0), &g_h)?;
        eta = m_plus
            .solve_with(&factor, &rhs)
            .map_err(|e| CoreError::StepFailure {
                step: n,
                source: Box::new(e),
            })?;
        let eta_tilde: Vec<C64> = f1
            .values()
            .iter()
            .zip(eta.values())
            .map(|(f, e)| f + e)
            .collect();
        steps.push(LocalStep {
            values: eta_tilde,
            boundary: g1,
        });
    }

    // Discrete Poincare constant from the Dirichlet Laplacian on the layer.
    let lam1 = crate::eig::dirichlet_laplacian_smallest_eig(delta, n_interior);
    let poincare_cp = 1.0 / (delta * lam1.sqrt());
    let decay_rate_guarantee = p.nu() / (4.0 * poincare_cp * poincare_cp * delta * delta);

    // Decay slope of log ||eta|| after the signal turns off. eta equals
    // eta_tilde there because the lift vanishes with g.
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (n, step) in steps.iter().enumerate() {
        let t = n as f64 * dt;
        if t >= 2.2 {
            let norm_sq: f64 = step.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * h;
            if norm_sq > 1e-280 {
                ts.push(t);
                logs.push(norm_sq.sqrt().ln());
            }
        }
    }
    let decay_slope = if logs.len() >= 8 && lp.amplitude != 0.0 {
        let s = ls_slope(&ts, &logs);
        if s >= 0.0 {
            return Err(CoreError::NonDecay { slope: s });
        }
        s
    } else {
        0.0
    };

    let mut run = LocalRun {
        params: *p,
        problem: *lp,
        grid,
        dt,
        steps,
        poincare_cp,
        decay_slope,
        decay_rate_guarantee,
        interior_residual_rel: 0.0,
    };
    run.interior_residual_rel = interior_residual(&run, &a, 1.5)?;
    Ok(run)
}

/// Consistency of the stored solution with the continuum equation at time
/// `t_probe`: `(eta^{n+1} - eta^n)/dt + T_h eta_mid` with the analytic lift
/// derivative in place of the discrete one, relative to the operator scale.
/// Decays at `O(dt^2 + h^2)`.
fn interior_residual(run: &LocalRun, a: &TridiagonalOperator, t_probe: f64) -> Result<f64> {
    let n = ((t_probe / run.dt).round() as usize).clamp(1, run.steps.len() - 2);
    let grid = &run.grid;
    let h = grid.h();
    let p = &run.params;
    let delta = run.problem.delta;
    let bc_coef = C64::new(-p.nu() / (h * h), 0.0);
    let s0 = &run.steps[n];
    let s1 = &run.steps[n + 1];
    let t_mid = (n as f64 + 0.5) * run.dt;

    let mid: Vec<C64> = s0
        .values
        .iter()
        .zip(&s1.values)
        .map(|(u, v)| 0.5 * (u + v))
        .collect();
    let mid_f = GridFunction::new(Arc::clone(grid), mid)?;
    let g_mid = 0.5 * (s0.boundary + s1.boundary);
    let a_mid = a.apply_with_boundary(
        &mid_f,
        bc_coef,
        C64::new(0.0, 0.0),
        bc_coef,
        C64::new(g_mid, 0.0),
    )?;
    // Continuum time derivative of the stored solution: discrete difference
    // of eta plus the analytic time derivative of the lift where this
    // differs only at O(dt^2).
    let mut resid_sq = 0.0f64;
    let mut scale_sq = 0.0f64;
    let g_d1 = run.problem.amplitude * boundary_signal_d1(t_mid);
    for i in 0..grid.n_interior() {
        let r = grid.node(i);
        let dt_eta = (s1.values[i] - s0.values[i]) / run.dt;
        // replace discrete lift slope by analytic to probe the continuum
        // equation (difference is O(dt^2) for the smooth signal)
        let lift_slope_discrete =
            (s1.boundary - s0.boundary) / run.dt * smoothstep((r - 1.0) / delta);
        let lift_slope_analytic = g_d1 * smoothstep((r - 1.0) / delta);
        let corr = C64::new(lift_slope_analytic - lift_slope_discrete, 0.0);
        // analytic spatial curvature correction of the lift
        let d2_lift_analytic = g_mid * smoothstep_d2((r - 1.0) / delta) / (delta * delta);
        let lift_mid = g_mid * smoothstep((r - 1.0) / delta);
        let left = if i == 0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new(g_mid * smoothstep((grid.node(i - 1) - 1.0) / delta), 0.0)
        };
        let right = if i + 1 == grid.n_interior() {
            C64::new(g_mid, 0.0)
        } else {
            C64::new(g_mid * smoothstep((grid.node(i + 1) - 1.0) / delta), 0.0)
        };
        let d2_lift_discrete = (left + right - C64::new(2.0 * lift_mid, 0.0)) / (h * h);
        let spatial_corr =
            C64::new(-p.nu(), 0.0) * (C64::new(d2_lift_analytic, 0.0) - d2_lift_discrete);
        let res = dt_eta + a_mid.values()[i] + corr + spatial_corr;
        resid_sq += res.norm_sqr() * h;
        scale_sq += a_mid.values()[i].norm_sqr() * h;
    }
    Ok((resid_sq / scale_sq.max(1e-300)).sqrt())
}

/// Hestenes reflection coefficients matching value and first two
/// derivatives across the seam: extension(s) = sum_m c_m f(-m s).
pub const HESTENES_COEFFS: [f64; 3] = [6.0, -8.0, 3.0];

/// Geometry of the extension of a layer run to a larger radial domain with
/// the identical mesh spacing (reflection sample points land exactly on
/// grid nodes).
pub struct ExtensionGeometry {
    pub grid: Arc<Grid>,
    pub n_local: usize,
    pub sigma: f64,
    /// Cutoff value per extension offset index (1-based beyond the seam).
    cut: Vec<f64>,
}

impl ExtensionGeometry {
    pub fn new(local_grid: &Grid, delta: f64, reach: f64) -> Result<Self> {
        let n_local = local_grid.n_interior();
        if n_local < 8 {
            return Err(CoreError::InvalidParameter(
                "extension needs at least 8 interior layer nodes".into(),
            ));
        }
        let h = local_grid.h();
        let sigma = (delta / 3.0).min(1.0 - delta);
        let m_intervals = ((reach - 1.0) / h).ceil() as usize;
        let grid = build_grid(1.0, 1.0 + m_intervals as f64 * h, m_intervals - 1)?;
        let cut = (1..m_intervals)
            .map(|off| {
                let s = off as f64 * h;
                if s <= 0.5 * sigma {
                    1.0
                } else if s >= sigma {
                    0.0
                } else {
                    1.0 - smoothstep((s - 0.5 * sigma) / (0.5 * sigma))
                }
            })
            .collect();
        Ok(ExtensionGeometry {
            grid,
            n_local,
            sigma,
            cut,
        })
    }

    /// Extend one stored step to the large grid. Nodes at or left of the
    /// seam copy the layer values; nodes beyond it take the cut-off
    /// reflection sum, whose sample points are exact grid nodes.
    pub fn extend(&self, step: &LocalStep) -> GridFunction {
        let n_ext = self.grid.n_interior();
        let nl = self.n_local;
        let value_at = |idx: isize| -> C64 {
            // index on the layer grid: 0 = inner boundary, nl+1 = seam
            if idx <= 0 {
                C64::new(0.0, 0.0)
            } else if (idx as usize) <= nl {
                step.values[idx as usize - 1]
            } else {
                C64::new(step.boundary, 0.0)
            }
        };
        let mut out = vec![C64::new(0.0, 0.0); n_ext];
        for (i, o) in out.iter_mut().enumerate() {
            let idx = i + 1; // node index on the extended grid
            if idx <= nl {
                *o = step.values[i];
            } else if idx == nl + 1 {
                *o = C64::new(step.boundary, 0.0);
            } else {
                let off = idx - (nl + 1);
                let cut = self.cut[off - 1];
                if cut != 0.0 {
                    let mut acc = C64::new(0.0, 0.0);
                    for (m, c) in HESTENES_COEFFS.iter().enumerate() {
                        let src = nl as isize + 1 - ((m + 1) * off) as isize;
                        acc += C64::new(*c, 0.0) * value_at(src);
                    }
                    *o = acc * cut;
                }
            }
        }
        GridFunction::new(Arc::clone(&self.grid), out).expect("extension length")
    }

    /// Relative jumps of (value, d1, d2) across the seam, evaluated through
    /// the reflection coefficients applied to one-sided derivative
    /// estimates: exact-arithmetic identities of the coefficient sums, so
    /// the jumps are rounding-level when the coefficients are correct.
    pub fn seam_jump(&self, step: &LocalStep) -> (f64, f64, f64) {
        let nl = self.n_local;
        let h = self.grid.h();
        // one-sided estimates at the seam from layer data
        let v = |k: usize| -> f64 {
            // k nodes left of the seam
            if k == 0 {
                step.boundary
            } else {
                step.values[nl - k].re
            }
        };
        let d1 = (11.0 / 6.0 * v(0) - 3.0 * v(1) + 1.5 * v(2) - v(3) / 3.0) / h;
        let d2 = (2.0 * v(0) - 5.0 * v(1) + 4.0 * v(2) - v(3)) / (h * h);
        let sums: Vec<f64> = (0..3)
            .map(|pw| {
                HESTENES_COEFFS
                    .iter()
                    .enumerate()
                    .map(|(m, c)| c * (-((m + 1) as f64)).powi(pw))
                    .sum()
            })
            .collect();
        let rel = |sum: f64, d: f64| -> f64 {
            if d.abs() > 0.0 {
                ((sum * d) - d).abs() / d.abs()
            } else {
                (sum - 1.0).abs()
            }
        };
        (rel(sums[0], v(0)), rel(sums[1], d1), rel(sums[2], d2))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RatioEntry {
    pub n: u32,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    pub log_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct RatioSeries {
    pub entries: Vec<RatioEntry>,
    /// Least-squares slope of `log R_n` against `n`.
    pub slope: f64,
}

fn ratio_series(log_num_sq: &[f64], log_den_sq: &[f64]) -> RatioSeries {
    let mut entries = Vec::with_capacity(log_num_sq.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (n, (ln, ld)) in log_num_sq.iter().zip(log_den_sq).enumerate() {
        let log_ratio = 0.5 * (ln - ld);
        entries.push(RatioEntry {
            n: n as u32,
            numerator: (0.5 * ln).exp(),
            denominator: (0.5 * ld).exp(),
            ratio: log_ratio.exp(),
            log_ratio,
        });
        xs.push(n as f64);
        ys.push(log_ratio);
    }
    let slope = ls_slope(&xs, &ys);
    RatioSeries { entries, slope }
}

/// `ln sum_i exp(log_mass_i + shift_i)` with max-shift stabilization.
fn log_weighted_sum(log_mass: &[f64], shift: impl Fn(usize) -> f64) -> f64 {
    let mut top = f64::NEG_INFINITY;
    for (i, lm) in log_mass.iter().enumerate() {
        if lm.is_finite() {
            top = top.max(lm + shift(i));
        }
    }
    if !top.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0f64;
    for (i, lm) in log_mass.iter().enumerate() {
        if lm.is_finite() {
            acc += (lm + shift(i) - top).exp();
        }
    }
    top + acc.ln()
}

#[derive(Debug, Clone)]
pub struct TcSequence {
    pub series: RatioSeries,
    /// Final layer width after the finiteness-driven halving loop.
    pub delta: f64,
    pub poincare_cp: f64,
    pub decay_slope: f64,
    pub decay_rate_guarantee: f64,
    /// Sup of `phi` over the working region.
    pub sup_phi: f64,
    /// Tilted spatial mass centroid of the numerator at the fit midpoint.
    pub mass_centroid: f64,
    /// `phi(centroid) - phi(1 + delta)`: the support-gap slope prediction.
    pub predicted_gap: f64,
    /// Fraction of the forcing mass located strictly left of the seam
    /// (must be rounding-level: the discrete construction is exact there).
    pub forcing_mass_left_of_seam: f64,
    /// Certified relative weight of the neglected time tail.
    pub tail_fraction: f64,
    pub interior_residual_rel: f64,
}

/// Configuration of the radial counterexample driver.
#[derive(Debug, Clone, Copy)]
pub struct TcSequenceConfig {
    pub delta: f64,
    pub n_interior: usize,
    pub dt: f64,
    pub t_end: f64,
    pub n_max: u32,
}

impl Default for TcSequenceConfig {
    fn default() -> Self {
        TcSequenceConfig {
            delta: 0.1,
            n_interior: 127,
            dt: 1e-3,
            t_end: 4.0,
            n_max: 12,
        }
    }
}

/// Build the translated-sequence quotients for the radial operator:
/// solve the boundary layer, extend it, form the forcing with the discrete
/// operator, and reweight per node for each translate.
///
/// The layer width is halved (at most six times) until the guaranteed decay
/// rate exceeds `sup phi`, which certifies finiteness of both weighted
/// norms.
pub fn tc_counterexample(
    p: &PhysParams,
    weights: &WeightTriple,
    cfg: &TcSequenceConfig,
) -> Result<TcSequence> {
    if !weights.phi.is_strictly_decreasing() {
        return Err(CoreError::InvalidParameter(
            "phi must be strictly decreasing for the radial construction".into(),
        ));
    }
    let mut delta = cfg.delta;
    for _ in 0..=6 {
        let lp = LocalProblem::new(delta)?;
        // sup phi over [1, 2 + delta]; phi decreasing means the sup is at 1.
        let sup_phi = weights.phi.eval(1.0);
        let run = local_boundary_solve(p, &lp, cfg.n_interior, cfg.dt, cfg.t_end)?;
        if run.decay_rate_guarantee > 1.05 * sup_phi.max(0.0) {
            return build_tc_sequence(p, &run, weights, cfg.n_max);
        }
        delta *= 0.5;
    }
    Err(CoreError::HypothesisViolation(
        "could not certify weighted-norm finiteness within six layer halvings".into(),
    ))
}

/// Measure the quotient series of an existing layer run.
pub fn build_tc_sequence(
    p: &PhysParams,
    run: &LocalRun,
    weights: &WeightTriple,
    n_max: u32,
) -> Result<TcSequence> {
    let delta = run.problem.delta;
    weights.validate_positive(1.0, 2.0 + delta)?;
    if !weights.phi.is_strictly_decreasing() {
        return Err(CoreError::InvalidParameter(
            "phi must be strictly decreasing for the radial construction".into(),
        ));
    }
    let geom = ExtensionGeometry::new(&run.grid, delta, 2.0 + delta + 0.4)?;
    let ext_grid = &geom.grid;
    let a_ext = assemble(OperatorKind::TaylorCouette, p, ext_grid)?;
    let h = ext_grid.h();
    let dt = run.dt;
    let n_ext = ext_grid.n_interior();
    let n_local = geom.n_local;

    // Per-node time-weighted masses of solution and forcing.
    let mut mass_num = vec![0.0f64; n_ext];
    let mut mass_den = vec![0.0f64; n_ext];
    let mut den_left_of_seam = 0.0f64;
    let mut prev_ext: Option<GridFunction> = None;
    let mut last_num_integrand = vec![0.0f64; n_ext];

    for (step_idx, step) in run.steps.iter().enumerate() {
        let t = step_idx as f64 * dt;
        let ext = geom.extend(step);
        // solution mass (trapezoid in time)
        let trap = if step_idx == 0 || step_idx + 1 == run.steps.len() {
            0.5
        } else {
            1.0
        };
        for (i, v) in ext.values().iter().enumerate() {
            let r = ext_grid.node(i);
            let a1 = weights.a1.eval(r);
            let cell = (2.0 * t * weights.phi.eval(r)).exp() * a1 * a1 * v.norm_sqr() * h * dt;
            mass_num[i] += trap * cell;
            last_num_integrand[i] = cell / dt;
        }
        // forcing at the previous midpoint
        if let Some(prev) = prev_ext {
            let t_mid = t - 0.5 * dt;
            let mid = prev
                .axpy(C64::new(1.0, 0.0), &ext)?
                .scale(C64::new(0.5, 0.0));
            let a_mid = a_ext.apply(&mid)?;
            for i in 0..n_ext {
                let r = ext_grid.node(i);
                let f = (ext.values()[i] - prev.values()[i]) / dt + a_mid.values()[i];
                let a2 = weights.a2.eval(r);
                let cell =
                    (2.0 * t_mid * weights.phi.eval(r)).exp() * a2 * a2 * f.norm_sqr() * h * dt;
                mass_den[i] += cell;
                if i + 1 <= n_local {
                    den_left_of_seam += cell;
                }
            }
        }
        prev_ext = Some(ext);
    }

    let total_den: f64 = mass_den.iter().sum();
    if total_den <= 0.0 {
        return Err(CoreError::EmptyForcing(
            "the extended forcing has no mass".into(),
        ));
    }
    let forcing_mass_left_of_seam = (den_left_of_seam / total_den).sqrt();
    if forcing_mass_left_of_seam > 1e-6 {
        return Err(CoreError::HypothesisViolation(format!(
            "forcing leaks left of the seam: relative mass {forcing_mass_left_of_seam:.3e}"
        )));
    }

    // Tail certificate: past t_end the layer decays at least at the fitted
    // rate, while the weight grows at most like sup phi.
    let sup_phi = weights.phi.eval(1.0);
    let decay = -run.decay_slope;
    let tail_fraction = if decay > sup_phi {
        let last_total: f64 = last_num_integrand.iter().sum();
        (last_total / (2.0 * (decay - sup_phi))) / mass_num.iter().sum::<f64>()
    } else {
        f64::INFINITY
    };

    let log_mass_num: Vec<f64> = mass_num.iter().map(|m| m.ln()).collect();
    let log_mass_den: Vec<f64> = mass_den.iter().map(|m| m.ln()).collect();
    let phi_at: Vec<f64> = (0..n_ext)
        .map(|i| weights.phi.eval(ext_grid.node(i)))
        .collect();

    let mut log_num_sq = Vec::with_capacity(n_max as usize + 1);
    let mut log_den_sq = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let shift = |i: usize| 2.0 * n as f64 * phi_at[i];
        log_num_sq.push(log_weighted_sum(&log_mass_num, shift));
        log_den_sq.push(log_weighted_sum(&log_mass_den, shift));
    }
    let series = ratio_series(&log_num_sq, &log_den_sq);

    // Tilted numerator centroid at the fit midpoint.
    let n_mid = 0.5 * n_max as f64;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    let log_top = log_weighted_sum(&log_mass_num, |i| 2.0 * n_mid * phi_at[i]);
    for i in 0..n_ext {
        if log_mass_num[i].is_finite() {
            let w = (log_mass_num[i] + 2.0 * n_mid * phi_at[i] - log_top).exp();
            num += ext_grid.node(i) * w;
            den += w;
        }
    }
    let mass_centroid = num / den;
    let predicted_gap = weights.phi.eval(mass_centroid) - weights.phi.eval(1.0 + delta);

    Ok(TcSequence {
        series,
        delta,
        poincare_cp: run.poincare_cp,
        decay_slope: run.decay_slope,
        decay_rate_guarantee: run.decay_rate_guarantee,
        sup_phi,
        mass_centroid,
        predicted_gap,
        forcing_mass_left_of_seam,
        tail_fraction,
        interior_residual_rel: run.interior_residual_rel,
    })
}

/// Direct (non-reweighted) evaluation of the numerator of the translated
/// quotient at a given `n`, used to validate the reweighting identity.
pub fn tc_direct_numerator(run: &LocalRun, weights: &WeightTriple, n: u32) -> Result<f64> {
    let delta = run.problem.delta;
    let geom = ExtensionGeometry::new(&run.grid, delta, 2.0 + delta + 0.4)?;
    let ext_grid = &geom.grid;
    let h = ext_grid.h();
    let dt = run.dt;
    let mut total = 0.0f64;
    for (step_idx, step) in run.steps.iter().enumerate() {
        let t = step_idx as f64 * dt;
        let trap = if step_idx == 0 || step_idx + 1 == run.steps.len() {
            0.5
        } else {
            1.0
        };
        let ext = geom.extend(step);
        for (i, v) in ext.values().iter().enumerate() {
            let r = ext_grid.node(i);
            let a1 = weights.a1.eval(r);
            total += trap
                * (2.0 * (t + n as f64) * weights.phi.eval(r)).exp()
                * a1
                * a1
                * v.norm_sqr()
                * h
                * dt;
        }
    }
    Ok(total.sqrt())
}

/// Domain of the closed-form diffusion kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelDomain {
    Line,
    /// `[0, oo)` with an absorbing boundary at 0.
    HalfLineDirichlet,
    /// `[0, length]` with absorbing boundaries.
    IntervalDirichlet {
        length: f64,
    },
}

fn gauss_kernel(t: f64, d: f64) -> f64 {
    (4.0 * std::f64::consts::PI * t).powf(-0.5) * (-d * d / (4.0 * t)).exp()
}

/// Fundamental solution of the unit-diffusivity heat flow on the domain
/// (image method for the absorbing boundaries).
pub fn heat_kernel(domain: KernelDomain, t: f64, x: f64, y: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match domain {
        KernelDomain::Line => gauss_kernel(t, x - y),
        KernelDomain::HalfLineDirichlet => gauss_kernel(t, x - y) - gauss_kernel(t, x + y),
        KernelDomain::IntervalDirichlet { length } => {
            let mut acc = 0.0;
            for m in -16i32..=16 {
                let shift = 2.0 * m as f64 * length;
                acc += gauss_kernel(t, x - y - shift) - gauss_kernel(t, x + y - shift);
            }
            acc
        }
    }
}

/// Quadrature windows and resolutions for the kernel construction.
#[derive(Debug, Clone, Copy)]
pub struct HeatQuadConfig {
    pub t_window: f64,
    pub n_t: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub s_panels: usize,
    pub y_panels: usize,
}

impl HeatQuadConfig {
    pub fn default_for(v1: (f64, f64), v2: (f64, f64)) -> Self {
        HeatQuadConfig {
            t_window: 2.0,
            n_t: 96,
            x_lo: v1.0 - 2.0,
            x_hi: v2.1 + 2.0,
            n_x: 320,
            s_panels: 64,
            y_panels: 192,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatCounterexample {
    pub series: RatioSeries,
    /// `sup phi` on the forcing region and `inf phi` on the observation
    /// region.
    pub d1: f64,
    pub d2: f64,
    /// Direct evaluation of the solution at `(1, x0)` (must be positive).
    pub w_at_1_x0: f64,
    pub x0: f64,
}

/// Translated-sequence quotients for a flow with an everywhere-positive
/// closed-form kernel: forcing concentrated on `v1` built from the kernel
/// itself, observation centered in `v2`.
pub fn heat_kernel_counterexample(
    domain: KernelDomain,
    weights: &WeightTriple,
    v1: (f64, f64),
    v2: (f64, f64),
    n_max: u32,
    quad: &HeatQuadConfig,
) -> Result<HeatCounterexample> {
    if weights.phi.is_constant() {
        return Err(CoreError::InvalidParameter(
            "phi must be non-constant for the kernel construction".into(),
        ));
    }
    if !(v1.0 < v1.1) || !(v2.0 < v2.1) {
        return Err(CoreError::InvalidParameter("empty region".into()));
    }
    match domain {
        KernelDomain::HalfLineDirichlet => {
            if quad.x_lo < 0.0 || v1.0 < 0.0 {
                return Err(CoreError::InvalidParameter(
                    "half-line domain requires nonnegative coordinates".into(),
                ));
            }
        }
        KernelDomain::IntervalDirichlet { length } => {
            if quad.x_lo < 0.0 || quad.x_hi > length || v2.1 > length {
                return Err(CoreError::InvalidParameter(
                    "window exceeds the interval domain".into(),
                ));
            }
        }
        KernelDomain::Line => {}
    }
    weights.validate_positive(quad.x_lo.max(1e-9), quad.x_hi)?;

    // Region constants by fine scan of the continuous profile.
    let scan_extreme = |(lo, hi): (f64, f64), want_sup: bool| -> f64 {
        let mut best = if want_sup {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        for i in 0..=10_000 {
            let x = lo + (hi - lo) * i as f64 / 10_000.0;
            let v = weights.phi.eval(x);
            best = if want_sup { best.max(v) } else { best.min(v) };
        }
        best
    };
    let d1 = scan_extreme(v1, true);
    let d2 = scan_extreme(v2, false);
    if !(d1 < d2) {
        return Err(CoreError::HypothesisViolation(format!(
            "need sup_V1 phi < inf_V2 phi, got {d1} >= {d2}"
        )));
    }
    let x0 = 0.5 * (v2.0 + v2.1);
    let ramp1 = (v1.1 - v1.0) / 4.0;
    let zeta = |s: f64| plateau(s, 0.125, 0.875, 0.125);
    let xi = move |y: f64| plateau(y, v1.0, v1.1, ramp1);

    // w(t, x) by nested quadrature of the kernel representation.
    let tau_floor = 1e-3;
    let inner = |s: f64, t: f64, x: f64| -> f64 {
        let tau = t - s;
        crate::resolvent::simpson(v1.0, v1.1, quad.y_panels, |y| {
            xi(y) * heat_kernel(domain, tau, x, y) * heat_kernel(domain, 1.0 - s, x0, y)
        })
    };
    let w_at = |t: f64, x: f64| -> f64 {
        let s_hi_full = t.min(0.875);
        if s_hi_full <= 0.125 {
            return 0.0;
        }
        let s_hi = (t - tau_floor).min(0.875);
        let mut acc = 0.0;
        if s_hi > 0.125 {
            acc +=
                crate::resolvent::simpson(0.125, s_hi, quad.s_panels, |s| zeta(s) * inner(s, t, x));
        }
        // near-diagonal sliver: the kernel acts as a point evaluation
        if s_hi_full > s_hi.max(0.125) {
            let lo = s_hi.max(0.125);
            let sliver = s_hi_full - lo;
            let s_bar = 0.5 * (lo + s_hi_full);
            acc += sliver * zeta(s_bar) * xi(x) * heat_kernel(domain, 1.0 - s_bar, x0, x);
        }
        acc
    };

    // Positivity probe at (1, x0) by direct quadrature of the squared kernel.
    let w_at_1_x0 = crate::resolvent::simpson(0.125, 0.875, 128, |s| {
        zeta(s)
            * crate::resolvent::simpson(v1.0, v1.1, 256, |y| {
                let k = heat_kernel(domain, 1.0 - s, x0, y);
                xi(y) * k * k
            })
    });

    // Per-x solution masses on the window.
    let dt = quad.t_window / quad.n_t as f64;
    let dx = (quad.x_hi - quad.x_lo) / quad.n_x as f64;
    let mut mass_num = vec![0.0f64; quad.n_x];
    let mut xs = vec![0.0f64; quad.n_x];
    for (i, (m, xv)) in mass_num.iter_mut().zip(xs.iter_mut()).enumerate() {
        let x = quad.x_lo + (i as f64 + 0.5) * dx;
        *xv = x;
        let a1 = weights.a1.eval(x);
        let mut acc = 0.0;
        for j in 1..=quad.n_t {
            let t = j as f64 * dt;
            let w = w_at(t, x);
            acc += (2.0 * t * weights.phi.eval(x)).exp() * a1 * a1 * w * w * dt;
        }
        *m = acc * dx;
    }

    // Per-y forcing masses.
    let n_y = 256usize;
    let dy = (v1.1 - v1.0) / n_y as f64;
    let mut mass_den = vec![0.0f64; n_y];
    let mut ys = vec![0.0f64; n_y];
    for (i, (m, yv)) in mass_den.iter_mut().zip(ys.iter_mut()).enumerate() {
        let y = v1.0 + (i as f64 + 0.5) * dy;
        *yv = y;
        let a2 = weights.a2.eval(y);
        let acc = crate::resolvent::simpson(0.125, 0.875, 128, |s| {
            let f = zeta(s) * xi(y) * heat_kernel(domain, 1.0 - s, x0, y);
            (2.0 * s * weights.phi.eval(y)).exp() * f * f
        });
        *m = acc * a2 * a2 * dy;
    }

    let log_mass_num: Vec<f64> = mass_num.iter().map(|m| m.ln()).collect();
    let log_mass_den: Vec<f64> = mass_den.iter().map(|m| m.ln()).collect();
    let mut log_num_sq = Vec::new();
    let mut log_den_sq = Vec::new();
    for n in 0..=n_max {
        log_num_sq.push(log_weighted_sum(&log_mass_num, |i| {
            2.0 * n as f64 * weights.phi.eval(xs[i])
        }));
        log_den_sq.push(log_weighted_sum(&log_mass_den, |i| {
            2.0 * n as f64 * weights.phi.eval(ys[i])
        }));
    }
    let series = ratio_series(&log_num_sq, &log_den_sq);
    Ok(HeatCounterexample {
        series,
        d1,
        d2,
        w_at_1_x0,
        x0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PhysParams {
        PhysParams::new(1e-2, 1, 1.0).unwrap()
    }

    #[test]
    fn zero_signal_gives_zero_run() {
        let p = params();
        let mut lp = LocalProblem::new(0.1).unwrap();
        lp.amplitude = 0.0;
        let run = local_boundary_solve(&p, &lp, 64, 5e-3, 3.0).unwrap();
        for step in &run.steps {
            assert!(step.values.iter().all(|v| v.norm() == 0.0));
            assert_eq!(step.boundary, 0.0);
        }
    }

    #[test]
    fn poincare_constant_close_to_inverse_pi() {
        let p = params();
        let lp = LocalProblem::new(0.1).unwrap();
        let run = local_boundary_solve(&p, &lp, 127, 2e-3, 3.0).unwrap();
        let inv_pi = 1.0 / std::f64::consts::PI;
        assert!(
            (run.poincare_cp - inv_pi).abs() < 0.01 * inv_pi,
            "C_P = {}",
            run.poincare_cp
        );
    }

    #[test]
    fn layer_decays_faster_than_guaranteed_rate() {
        let p = params();
        let lp = LocalProblem::new(0.1).unwrap();
        let run = local_boundary_solve(&p, &lp, 127, 1e-3, 4.0).unwrap();
        // sharp discrete rate is nu pi^2 / delta^2; the guarantee is a
        // quarter of that; the measured slope must beat half of sharp.
        let half_sharp = 0.5 * p.nu() * std::f64::consts::PI.powi(2) / (0.1f64 * 0.1);
        assert!(
            run.decay_slope <= -0.95 * half_sharp,
            "slope {} vs requirement {}",
            run.decay_slope,
            -0.95 * half_sharp
        );
        assert!(run.decay_slope <= -run.decay_rate_guarantee);
    }

    #[test]
    fn interior_residual_refines() {
        let p = params();
        let lp = LocalProblem::new(0.1).unwrap();
        let coarse = local_boundary_solve(&p, &lp, 95, 4e-3, 3.0)
            .unwrap()
            .interior_residual_rel;
        let fine = local_boundary_solve(&p, &lp, 191, 2e-3, 3.0)
            .unwrap()
            .interior_residual_rel;
        assert!(coarse < 0.05, "coarse residual {coarse}");
        assert!(fine < coarse / 2.5, "no refinement: {coarse} -> {fine}");
    }

    #[test]
    fn extension_is_exact_on_quadratics() {
        let g = build_grid(1.0, 1.1, 99).unwrap();
        let geom = ExtensionGeometry::new(&g, 0.1, 2.5).unwrap();
        let quad = |r: f64| (r - 1.0) * (r - 1.0);
        let step = LocalStep {
            values: g.nodes().iter().map(|&r| C64::new(quad(r), 0.0)).collect(),
            boundary: quad(1.1),
        };
        let ext = geom.extend(&step);
        for (i, v) in ext.values().iter().enumerate() {
            let r = geom.grid.node(i);
            if r > 1.1 && r < 1.1 + 0.5 * geom.sigma {
                assert!(
                    (v.re - quad(r)).abs() <= 1e-12 * quad(r),
                    "extension at {r}: {} vs {}",
                    v.re,
                    quad(r)
                );
            }
        }
        // and identically zero far beyond the cutoff
        for (i, v) in ext.values().iter().enumerate() {
            if geom.grid.node(i) > 1.1 + geom.sigma {
                assert_eq!(v.norm(), 0.0);
            }
        }
    }

    #[test]
    fn extension_seam_is_c2() {
        let p = params();
        let lp = LocalProblem::new(0.1).unwrap();
        let run = local_boundary_solve(&p, &lp, 127, 2e-3, 3.0).unwrap();
        let geom = ExtensionGeometry::new(&run.grid, 0.1, 2.5).unwrap();
        // probe a step where the signal is active
        let step = &run.steps[(1.5 / run.dt) as usize];
        let (v, d1, d2) = geom.seam_jump(step);
        assert!(v <= 1e-8, "value jump {v}");
        assert!(d1 <= 1e-8, "d1 jump {d1}");
        assert!(d2 <= 1e-8, "d2 jump {d2}");
    }

    #[test]
    fn tc_sequence_rejects_constant_phi() {
        let p = params();
        let weights = WeightTriple {
            a1: Profile::constant(1.0),
            a2: Profile::constant(1.0),
            phi: Profile::constant(1.0),
        };
        let cfg = TcSequenceConfig::default();
        assert!(matches!(
            tc_counterexample(&p, &weights, &cfg),
            Err(CoreError::InvalidParameter(_))
        ));
    }

    #[test]
    fn tc_sequence_diverges_with_inverse_radius_weight() {
        let p = params();
        let weights = WeightTriple {
            a1: Profile::constant(1.0),
            a2: Profile::constant(1.0),
            phi: Profile::new(1.0, -1.0),
        };
        let cfg = TcSequenceConfig {
            n_interior: 95,
            dt: 2e-3,
            t_end: 3.5,
            n_max: 10,
            ..TcSequenceConfig::default()
        };
        let seq = tc_counterexample(&p, &weights, &cfg).unwrap();
        assert!(seq.series.slope > 0.0, "slope {}", seq.series.slope);
        assert!(
            seq.series.slope >= 0.9 * seq.predicted_gap,
            "slope {} vs prediction {}",
            seq.series.slope,
            seq.predicted_gap
        );
        // eventually increasing, and the ratio of successive ratios
        // stabilizes within 5% past n = 8
        let e = &seq.series.entries;
        for k in (e.len() / 2)..e.len() - 1 {
            assert!(e[k + 1].ratio > e[k].ratio);
        }
        for k in 8..e.len() - 1 {
            let g_prev = e[k].log_ratio - e[k - 1].log_ratio;
            let g_next = e[k + 1].log_ratio - e[k].log_ratio;
            let growth_ratio = (g_next - g_prev).abs() / g_prev.abs();
            assert!(growth_ratio <= 0.05, "gap drift {growth_ratio} at n = {k}");
        }
        assert!(seq.forcing_mass_left_of_seam <= 1e-6);
        assert!(seq.tail_fraction < 1e-6);
        assert!(seq.mass_centroid < 1.0 + seq.delta);
    }

    #[test]
    fn tc_reweighting_matches_direct_evaluation() {
        let p = params();
        let lp = LocalProblem::new(0.1).unwrap();
        let run = local_boundary_solve(&p, &lp, 95, 4e-3, 3.0).unwrap();
        let weights = WeightTriple {
            a1: Profile::new(1.0, -1.0),
            a2: Profile::new(1.0, 1.0),
            phi: Profile::new(p.kappa(), -2.0),
        };
        let seq = build_tc_sequence(&p, &run, &weights, 6).unwrap();
        let direct = tc_direct_numerator(&run, &weights, 3).unwrap();
        let reweighted = seq.series.entries[3].numerator;
        assert!(
            (direct - reweighted).abs() <= 1e-10 * direct,
            "direct {direct} vs reweighted {reweighted}"
        );
    }

    #[test]
    fn heat_kernel_mass_and_domination() {
        // free kernel integrates to one
        let mass = crate::resolvent::simpson(-30.0, 30.0, 4000, |y| {
            heat_kernel(KernelDomain::Line, 0.7, 1.3, y)
        });
        assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
        // absorbing kernels are nonnegative and dominated by the free one
        for &(t, x, y) in &[(0.3, 0.5, 1.0), (1.0, 2.0, 0.3), (0.05, 0.2, 0.25)] {
            let free = heat_kernel(KernelDomain::Line, t, x, y);
            let half = heat_kernel(KernelDomain::HalfLineDirichlet, t, x, y);
            let boxed = heat_kernel(KernelDomain::IntervalDirichlet { length: 8.0 }, t, x, y);
            assert!(half >= 0.0 && half <= free + 1e-15);
            assert!(boxed >= 0.0 && boxed <= free + 1e-15);
        }
    }

    #[test]
    fn heat_counterexample_rejects_bad_inputs() {
        let weights = WeightTriple {
            a1: Profile::constant(1.0),
            a2: Profile::constant(1.0),
            phi: Profile::constant(2.0),
        };
        let quad = HeatQuadConfig::default_for((0.0, 1.0), (3.0, 4.0));
        assert!(heat_kernel_counterexample(
            KernelDomain::Line,
            &weights,
            (0.0, 1.0),
            (3.0, 4.0),
            4,
            &quad
        )
        .is_err());

        // overlapping phi levels: sup phi on V1 >= inf phi on V2
        let weights = WeightTriple {
            a1: Profile::constant(1.0),
            a2: Profile::constant(1.0),
            phi: Profile::new(-1.0, 1.0),
        };
        assert!(matches!(
            heat_kernel_counterexample(
                KernelDomain::Line,
                &weights,
                (0.0, 1.0),
                (3.0, 4.0),
                4,
                &quad
            ),
            Err(CoreError::HypothesisViolation(_))
        ));
    }

    #[test]
    fn heat_counterexample_small_instance() {
        let weights = WeightTriple {
            a1: Profile::constant(1.0),
            a2: Profile::constant(1.0),
            phi: Profile::new(1.0, 1.0),
        };
        let quad = HeatQuadConfig {
            n_t: 24,
            n_x: 80,
            s_panels: 24,
            y_panels: 48,
            ..HeatQuadConfig::default_for((0.0, 1.0), (3.0, 4.0))
        };
        let out = heat_kernel_counterexample(
            KernelDomain::Line,
            &weights,
            (0.0, 1.0),
            (3.0, 4.0),
            4,
            &quad,
        )
        .unwrap();
        assert!(out.w_at_1_x0 > 0.0);
        assert!((out.d2 - out.d1 - 2.0).abs() < 1e-9);
        assert!(out.series.slope > 0.0);
    }

    #[test]
    fn heat_counterexample_half_line_instance() {
        let weights = WeightTriple {
            a1: Profile::constant(1.0),
            a2: Profile::constant(1.0),
            phi: Profile::new(1.0, 1.0),
        };
        let quad = HeatQuadConfig {
            x_lo: 0.0,
            n_t: 24,
            n_x: 80,
            s_panels: 24,
            y_panels: 48,
            ..HeatQuadConfig::default_for((0.5, 1.5), (3.0, 4.0))
        };
        let out = heat_kernel_counterexample(
            KernelDomain::HalfLineDirichlet,
            &weights,
            (0.5, 1.5),
            (3.0, 4.0),
            4,
            &quad,
        )
        .unwrap();
        assert!(out.w_at_1_x0 > 0.0);
        assert!(out.series.slope > 0.0);
    }
}
