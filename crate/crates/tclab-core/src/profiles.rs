//! Analytic profile library: compactly supported bumps, smoothstep lifts,
//! and seeded families of smooth test functions.

use crate::grid::{Grid, GridFunction};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// `exp(-1/(1-s^2))` on (-1, 1), zero outside. Smooth, compactly supported.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Bump centered at `c` with half-width `w`.
pub fn bump_at(r: f64, c: f64, w: f64) -> f64 {
    bump((r - c) / w)
}

/// First derivative of [`bump`] in the normalized variable.
pub fn bump_d1(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        bump(s) * (-2.0 * s / (q * q))
    }
}

/// Second derivative of [`bump`] in the normalized variable.
pub fn bump_d2(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        let g = -2.0 * s / (q * q);
        let gp = -2.0 / (q * q) - 8.0 * s * s / (q * q * q);
        bump(s) * (g * g + gp)
    }
}

/// Quintic smoothstep `s^3 (10 - 15 s + 6 s^2)` clamped to [0, 1].
/// Value/first/second derivatives vanish at 0 and match 1 at 1.
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

pub fn smoothstep_d1(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        30.0 * s * s * (1.0 - s) * (1.0 - s)
    }
}

pub fn smoothstep_d2(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    }
}

/// Peak-normalized smooth signal supported on (1, 2):
/// `exp(4 - 1/((t-1)(2-t)))` there, zero elsewhere.
pub fn boundary_signal(t: f64) -> f64 {
    if t <= 1.0 || t >= 2.0 {
        0.0
    } else {
        let u = (t - 1.0) * (2.0 - t);
        (4.0 - 1.0 / u).exp()
    }
}

pub fn boundary_signal_d1(t: f64) -> f64 {
    if t <= 1.0 || t >= 2.0 {
        0.0
    } else {
        let u = (t - 1.0) * (2.0 - t);
        boundary_signal(t) * (3.0 - 2.0 * t) / (u * u)
    }
}

/// Smooth plateau which is 1 on `[lo + ramp, hi - ramp]`, 0 outside
/// `[lo, hi]`, with quintic ramps.
pub fn plateau(x: f64, lo: f64, hi: f64, ramp: f64) -> f64 {
    if x <= lo || x >= hi {
        0.0
    } else if x < lo + ramp {
        smoothstep((x - lo) / ramp)
    } else if x > hi - ramp {
        smoothstep((hi - x) / ramp)
    } else {
        1.0
    }
}

/// Deterministic family of smooth compactly supported complex functions in
/// the operator domain: zero at both endpoints, supported away from the
/// boundary. Centers default to the span `[a + 0.1 L, a + 0.6 L]`.
pub struct BumpFamily {
    rng: ChaCha8Rng,
}

impl BumpFamily {
    pub fn new(seed: u64) -> Self {
        BumpFamily {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, grid: &Arc<Grid>) -> GridFunction {
        let a = grid.a_end();
        let b = grid.b_end();
        let span = b - a;
        let n_bumps = self.rng.random_range(1..=3usize);
        let mut parts = Vec::with_capacity(n_bumps);
        for _ in 0..n_bumps {
            let c = a + span * self.rng.random_range(0.1..0.6);
            let wmax = (c - a).min(b - c) * 0.8;
            let w = self.rng.random_range(0.05 * span..0.25 * span).min(wmax);
            let amp = C64::new(
                self.rng.random_range(-1.0..1.0),
                self.rng.random_range(-1.0..1.0),
            );
            parts.push((c, w, amp));
        }
        GridFunction::from_complex_fn(Arc::clone(grid), move |r| {
            parts
                .iter()
                .map(|&(c, w, amp)| amp * bump_at(r, c, w))
                .sum()
        })
    }
}

/// Standard initial-data bump: support `[c - w, c + w]`, unit peak.
pub fn initial_bump(grid: &Arc<Grid>, center: f64, half_width: f64) -> GridFunction {
    // bump(0) = exp(-1); normalize to unit peak.
    let peak = bump(0.0);
    GridFunction::from_real_fn(Arc::clone(grid), move |r| {
        bump_at(r, center, half_width) / peak
    })
}
