//! Analytic gadgets: the dyadic partition of unity on `[1, oo)`, the odd
//! plateau cutoff, a pointwise Hardy-type inequality audit, the logarithmic
//! ring integral, and the enhanced-dissipation region split of a damped-flow
//! run.

use crate::error::{CoreError, Result};
use crate::evolution::Snapshots;
use crate::grid::{derivative, weighted_norm, GridFunction, WeightSpec};

/// Piecewise-polynomial evaluation of the dyadic shape function and its two
/// derivatives.
#[derive(Debug, Clone, Copy)]
pub struct ShapeEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

// Coefficients of the rising edge q(r) = 6*12^5 r^2 - 123*12^4 r + 631*12^3.
const QA: f64 = 1_492_992.0;
const QB: f64 = -2_550_528.0;
const QC: f64 = 1_090_368.0;

fn left_piece(r: f64) -> ShapeEval {
    let u = r - 0.75;
    let q = QA * r * r + QB * r + QC;
    let qd1 = 2.0 * QA * r + QB;
    let qd2 = 2.0 * QA;
    ShapeEval {
        value: u * u * u * q,
        d1: 3.0 * u * u * q + u * u * u * qd1,
        d2: 6.0 * u * q + 6.0 * u * u * qd1 + u * u * u * qd2,
    }
}

/// The fixed dyadic shape: a cubic-weighted rise on `[3/4, 5/6]`, a plateau
/// of 1 on `[5/6, 11/6]`, the mirrored fall on `[11/6, 23/12]`, zero
/// elsewhere. C^2 on the half line.
pub fn dyadic_shape_eval(r: f64) -> ShapeEval {
    const L0: f64 = 0.75;
    const L1: f64 = 5.0 / 6.0;
    const R1: f64 = 11.0 / 6.0;
    const R0: f64 = 23.0 / 12.0;
    if r <= L0 || r >= R0 {
        ShapeEval {
            value: 0.0,
            d1: 0.0,
            d2: 0.0,
        }
    } else if r < L1 {
        left_piece(r)
    } else if r <= R1 {
        ShapeEval {
            value: 1.0,
            d1: 0.0,
            d2: 0.0,
        }
    } else {
        // mirror of the rising edge about r = 4/3
        let m = left_piece(8.0 / 3.0 - r);
        ShapeEval {
            value: m.value,
            d1: -m.d1,
            d2: m.d2,
        }
    }
}

/// The induced partition `chi_j = phi(r/2^j) / sum_l phi(r/2^l)` for
/// `j = 0..=j_max`.
#[derive(Debug, Clone, Copy)]
pub struct DyadicPartition {
    pub j_max: u32,
}

impl DyadicPartition {
    pub fn new(j_max: u32) -> Self {
        DyadicPartition { j_max }
    }

    fn scaled_shape(&self, j: u32, r: f64) -> ShapeEval {
        let s = 2.0f64.powi(-(j as i32));
        let e = dyadic_shape_eval(r * s);
        ShapeEval {
            value: e.value,
            d1: e.d1 * s,
            d2: e.d2 * s * s,
        }
    }

    fn shape_sum(&self, r: f64) -> ShapeEval {
        let mut acc = ShapeEval {
            value: 0.0,
            d1: 0.0,
            d2: 0.0,
        };
        for j in 0..=self.j_max {
            let e = self.scaled_shape(j, r);
            acc.value += e.value;
            acc.d1 += e.d1;
            acc.d2 += e.d2;
        }
        acc
    }

    /// `chi_j(r)` with first and second derivatives by the quotient rule.
    pub fn chi_eval(&self, j: u32, r: f64) -> ShapeEval {
        let u = self.scaled_shape(j, r);
        if u.value == 0.0 && u.d1 == 0.0 && u.d2 == 0.0 {
            return u;
        }
        let s = self.shape_sum(r);
        let inv = 1.0 / s.value;
        let value = u.value * inv;
        let d1 = (u.d1 - value * s.d1) * inv;
        let d2 = (u.d2 - 2.0 * d1 * s.d1 - value * s.d2) * inv;
        ShapeEval { value, d1, d2 }
    }

    pub fn chi(&self, j: u32, r: f64) -> f64 {
        self.chi_eval(j, r).value
    }

    pub fn chi_sum(&self, r: f64) -> f64 {
        (0..=self.j_max).map(|j| self.chi(j, r)).sum()
    }

    pub fn chi_sum_sq(&self, r: f64) -> f64 {
        (0..=self.j_max).map(|j| self.chi(j, r).powi(2)).sum()
    }

    /// Nominal support of `chi_j`.
    pub fn support(&self, j: u32) -> (f64, f64) {
        let two_j1 = 2.0f64.powi(j as i32 + 1);
        (two_j1 / 3.0, two_j1)
    }
}

#[derive(Debug, Clone)]
pub struct PartitionViolation {
    pub what: String,
    pub r: f64,
    pub j: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct PartitionReport {
    pub max_sum_err: f64,
    pub min_sum_sq: f64,
    pub max_sum_sq: f64,
    /// `max_j 2^j |chi_j'|` over the sample set.
    pub max_scaled_d1: f64,
    /// `max_j 4^j |chi_j''|`.
    pub max_scaled_d2: f64,
    pub violations: Vec<PartitionViolation>,
}

impl PartitionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scan the partition invariants on a log-spaced sample of
/// `[1, 2^{j_max}]`: partition of unity to 1e-12, square-sum pinching,
/// supports, pair disjointness, and the scaled derivative bounds
/// `|chi_j'| <= 4e6 * 2^{-j}`, `|chi_j''| <= 4e6 * 2^{-2j}`.
pub fn partition_audit(j_max: u32, r_samples: usize) -> Result<PartitionReport> {
    if j_max < 4 {
        return Err(CoreError::InvalidParameter(format!(
            "need j_max >= 4, got {j_max}"
        )));
    }
    if r_samples < 10_000 {
        return Err(CoreError::InvalidParameter(format!(
            "need at least 10^4 samples, got {r_samples}"
        )));
    }
    // Partition with two guard scales so chi_j for j <= j_max is not
    // distorted near the top of the sample range.
    let part = DyadicPartition::new(j_max + 2);
    let mut violations = Vec::new();
    let mut max_sum_err = 0.0f64;
    let mut min_sum_sq = f64::INFINITY;
    let mut max_sum_sq = f64::NEG_INFINITY;
    let mut max_scaled_d1 = 0.0f64;
    let mut max_scaled_d2 = 0.0f64;

    let top = (j_max as f64) * std::f64::consts::LN_2;
    for i in 0..r_samples {
        let t = i as f64 / (r_samples - 1) as f64;
        let r = (t * top).exp();
        let sum: f64 = (0..=part.j_max).map(|j| part.chi(j, r)).sum();
        let err = (sum - 1.0).abs();
        max_sum_err = max_sum_err.max(err);
        if err > 1e-12 {
            violations.push(PartitionViolation {
                what: format!("partition sum deviates by {err:.3e}"),
                r,
                j: None,
            });
        }
        let sum_sq: f64 = (0..=part.j_max).map(|j| part.chi(j, r).powi(2)).sum();
        min_sum_sq = min_sum_sq.min(sum_sq);
        max_sum_sq = max_sum_sq.max(sum_sq);
        if !(0.5..=1.0 + 1e-12).contains(&sum_sq) {
            violations.push(PartitionViolation {
                what: format!("square sum {sum_sq} outside [1/2, 1]"),
                r,
                j: None,
            });
        }
        for j in 0..=j_max {
            let e = part.chi_eval(j, r);
            let (lo, hi) = part.support(j);
            if (r < lo || r > hi) && e.value != 0.0 {
                violations.push(PartitionViolation {
                    what: format!("chi_{j} = {} outside its support", e.value),
                    r,
                    j: Some(j),
                });
            }
            let scale1 = 2.0f64.powi(j as i32);
            let scale2 = scale1 * scale1;
            max_scaled_d1 = max_scaled_d1.max(e.d1.abs() * scale1);
            max_scaled_d2 = max_scaled_d2.max(e.d2.abs() * scale2);
            if e.d1.abs() > 4e6 / scale1 {
                violations.push(PartitionViolation {
                    what: format!("|chi_{j}'| = {:.3e} exceeds 4e6 * 2^-j", e.d1.abs()),
                    r,
                    j: Some(j),
                });
            }
            if e.d2.abs() > 4e6 / scale2 {
                violations.push(PartitionViolation {
                    what: format!("|chi_{j}''| = {:.3e} exceeds 4e6 * 4^-j", e.d2.abs()),
                    r,
                    j: Some(j),
                });
            }
            // pair disjointness with all l >= j + 2
            for l in (j + 2)..=j_max {
                let prod = e.value * part.chi(l, r);
                if prod != 0.0 {
                    violations.push(PartitionViolation {
                        what: format!("chi_{j} chi_{l} = {prod:.3e} != 0"),
                        r,
                        j: Some(j),
                    });
                }
            }
        }
    }
    // anchor value at the left endpoint
    let chi0_at_1 = part.chi(0, 1.0);
    if (chi0_at_1 - 1.0).abs() > 1e-14 {
        violations.push(PartitionViolation {
            what: format!("chi_0(1) = {chi0_at_1}, expected 1"),
            r: 1.0,
            j: Some(0),
        });
    }
    Ok(PartitionReport {
        max_sum_err,
        min_sum_sq,
        max_sum_sq,
        max_scaled_d1,
        max_scaled_d2,
        violations,
    })
}

/// Odd quintic plateau cutoff: 1 for `z <= -1`, -1 for `z >= 1`, and
/// `-(15 z - 10 z^3 + 3 z^5)/8` in between (C^2, strictly decreasing on
/// the open interval, |rho'| <= 15/8).
pub fn rho_cutoff(z: f64) -> f64 {
    if z <= -1.0 {
        1.0
    } else if z >= 1.0 {
        -1.0
    } else {
        -(15.0 * z - 10.0 * z * z * z + 3.0 * z * z * z * z * z) / 8.0
    }
}

pub fn rho_cutoff_d1(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - z * z;
        -15.0 * q * q / 8.0
    }
}

/// `rho((r - r0)/delta)`.
pub fn rho_delta(r: f64, r0: f64, delta: f64) -> f64 {
    rho_cutoff((r - r0) / delta)
}

#[derive(Debug, Clone, Copy)]
pub struct HardyAudit {
    /// `max_i |f_i|^2 / r_i`.
    pub lhs: f64,
    /// `||f/r|| ||f'|| + ||f/r||^2`.
    pub rhs: f64,
    pub quotient: f64,
}

/// Pointwise-versus-integral Hardy audit. The product-rule constant is 2;
/// discrete slack allows 2.5.
pub fn hardy_audit(f: &GridFunction) -> Result<HardyAudit> {
    let grid = f.grid();
    let lhs = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.norm_sqr() / grid.node(i))
        .fold(0.0f64, f64::max);
    let over_r = weighted_norm(f, &WeightSpec::Power(-2.0))?;
    let grad = weighted_norm(&derivative(f), &WeightSpec::Unit)?;
    let rhs = over_r * grad + over_r * over_r;
    let quotient = if rhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(HardyAudit { lhs, rhs, quotient })
}

#[derive(Debug, Clone, Copy)]
pub struct LogIntegral {
    /// Closed-form `int_{r0(1-d)}^{r0(1+d)} dr/r = ln((1+d)/(1-d))`.
    pub value: f64,
    /// `2 d / (1 - d)`.
    pub bound: f64,
}

pub fn log_integral_audit(r0: f64, delta_tilde: f64) -> Result<LogIntegral> {
    if !(r0 > 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "need r0 > 1, got {r0}"
        )));
    }
    if !(delta_tilde > 0.0 && delta_tilde <= 0.5) {
        return Err(CoreError::InvalidParameter(format!(
            "need 0 < delta <= 1/2, got {delta_tilde}"
        )));
    }
    Ok(LogIntegral {
        value: ((1.0 + delta_tilde) / (1.0 - delta_tilde)).ln(),
        bound: 2.0 * delta_tilde / (1.0 - delta_tilde),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RegionSplit {
    /// Weighted mass over the enhanced-dissipation region `r^2 <= kappa tau`.
    pub i1: f64,
    /// Weighted mass over the complementary region.
    pub i2: f64,
    pub total: f64,
    /// `2 kappa^3 ||tau/r^3 w||^2` (dominates `i1`).
    pub bound1: f64,
    /// `36 sum_j sup_tau ||chi_j w(tau)||^2` (dominates `i2`).
    pub bound2: f64,
}

/// Split `kappa ||w/r||^2_{L2_t L2}` of a stored run into the two space-time
/// regions and evaluate the dominating quantities with the same quadrature.
pub fn region_split_measure(snaps: &Snapshots, kappa: f64) -> Result<RegionSplit> {
    if snaps.states.len() < 2 {
        return Err(CoreError::InvalidParameter(
            "region split requires at least two stored snapshots".into(),
        ));
    }
    let grid = snaps.states[0].grid().clone();
    let h = grid.h();
    let j_top = (grid.b_end().log2().ceil() as u32).max(1);
    let part = DyadicPartition::new(j_top + 2);

    let mut i1 = 0.0f64;
    let mut i2 = 0.0f64;
    let mut bound1 = 0.0f64;
    let mut sup_chi = vec![0.0f64; (j_top + 1) as usize];

    for idx in 0..snaps.states.len() {
        let tau = snaps.times[idx];
        let state = &snaps.states[idx];
        // left-rectangle step weight
        let dt = if idx + 1 < snaps.times.len() {
            snaps.times[idx + 1] - snaps.times[idx]
        } else {
            0.0
        };
        let mut chi_mass = vec![0.0f64; (j_top + 1) as usize];
        for (i, v) in state.values().iter().enumerate() {
            let r = grid.node(i);
            let m = v.norm_sqr() * h;
            if dt > 0.0 {
                let cell = kappa * m / (r * r) * dt;
                if r * r <= kappa * tau {
                    i1 += cell;
                } else {
                    i2 += cell;
                }
                let t_over_r3 = tau / (r * r * r);
                bound1 += 2.0 * kappa.powi(3) * t_over_r3 * t_over_r3 * m * dt;
            }
            for j in 0..=j_top {
                let c = part.chi(j, r);
                if c != 0.0 {
                    chi_mass[j as usize] += c * c * m;
                }
            }
        }
        for j in 0..=(j_top as usize) {
            sup_chi[j] = sup_chi[j].max(chi_mass[j]);
        }
    }
    let bound2 = 36.0 * sup_chi.iter().sum::<f64>();
    Ok(RegionSplit {
        i1,
        i2,
        total: i1 + i2,
        bound1,
        bound2,
    })
}
