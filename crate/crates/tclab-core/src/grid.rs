//! Uniform grids on truncated intervals, complex grid functions, and
//! weighted L2 quadrature.
//!
//! All grid functions carry homogeneous Dirichlet data implicitly: only
//! interior node values are stored, the endpoint values are zero by
//! convention, and the quadrature is the interior rectangle rule (equal to
//! the trapezoid rule under that convention).

use crate::error::{CoreError, Result};
use crate::C64;
use std::sync::Arc;

/// Uniform mesh on `[a_end, b_end]` storing only interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a_end: f64,
    b_end: f64,
    n_interior: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn a_end(&self) -> f64 {
        self.a_end
    }

    pub fn b_end(&self) -> f64 {
        self.b_end
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Mesh spacing `(b_end - a_end) / (n_interior + 1)`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Interior nodes, strictly increasing, excluding both endpoints.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Two grids are compatible when they discretize the same interval with
    /// the same resolution.
    pub fn compatible(&self, other: &Grid) -> bool {
        self.a_end == other.a_end
            && self.b_end == other.b_end
            && self.n_interior == other.n_interior
    }
}

/// Build a uniform grid with `n_interior >= 8` interior nodes.
pub fn build_grid(a_end: f64, b_end: f64, n_interior: usize) -> Result<Arc<Grid>> {
    if !a_end.is_finite() || !b_end.is_finite() {
        return Err(CoreError::InvalidGrid(format!(
            "endpoints must be finite, got [{a_end}, {b_end}]"
        )));
    }
    if a_end >= b_end {
        return Err(CoreError::InvalidGrid(format!(
            "need a_end < b_end, got [{a_end}, {b_end}]"
        )));
    }
    if n_interior < 8 {
        return Err(CoreError::InvalidGrid(format!(
            "need at least 8 interior nodes, got {n_interior}"
        )));
    }
    let h = (b_end - a_end) / (n_interior as f64 + 1.0);
    let nodes = (1..=n_interior).map(|i| a_end + i as f64 * h).collect();
    Ok(Arc::new(Grid {
        a_end,
        b_end,
        n_interior,
        h,
        nodes,
    }))
}

/// Complex-valued samples at the interior nodes of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n_interior() {
            return Err(CoreError::InvalidGrid(format!(
                "value count {} does not match {} interior nodes",
                values.len(),
                grid.n_interior()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_interior();
        GridFunction {
            grid,
            values: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// Sample a real-valued function of the node coordinate.
    pub fn from_real_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| C64::new(f(r), 0.0)).collect();
        GridFunction { grid, values }
    }

    /// Sample a complex-valued function of the node coordinate.
    pub fn from_complex_fn(grid: Arc<Grid>, f: impl Fn(f64) -> C64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Pointwise map of the values, keeping the grid.
    pub fn map(&self, f: impl Fn(f64, C64) -> C64) -> GridFunction {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&r, &v)| f(r, v))
            .collect();
        GridFunction {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// `self + c * other` on a shared grid.
    pub fn axpy(&self, c: C64, other: &GridFunction) -> Result<GridFunction> {
        if !self.grid.compatible(other.grid()) {
            return Err(CoreError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + c * b)
            .collect();
        Ok(GridFunction {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    pub fn scale(&self, c: C64) -> GridFunction {
        self.map(|_, v| c * v)
    }
}

/// Radial quadrature weight. `Power(p)` means the measure `r^p dr`;
/// `Custom` carries one strictly positive sample per interior node.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Unit,
    Power(f64),
    Custom(Vec<f64>),
}

impl WeightSpec {
    pub fn custom(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "custom weights must be strictly positive and finite".into(),
            ));
        }
        Ok(WeightSpec::Custom(samples))
    }

    pub fn at(&self, grid: &Grid, i: usize) -> f64 {
        match self {
            WeightSpec::Unit => 1.0,
            WeightSpec::Power(p) => grid.node(i).powf(*p),
            WeightSpec::Custom(w) => w[i],
        }
    }

    fn check_len(&self, grid: &Grid) -> Result<()> {
        if let WeightSpec::Custom(w) = self {
            if w.len() != grid.n_interior() {
                return Err(CoreError::GridMismatch);
            }
        }
        Ok(())
    }
}

/// `sqrt( sum_i w(r_i) |f_i|^2 h )`. Zero exactly when `f` vanishes.
pub fn weighted_norm(f: &GridFunction, w: &WeightSpec) -> Result<f64> {
    w.check_len(f.grid())?;
    let grid = f.grid();
    let h = grid.h();
    let sum: f64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| w.at(grid, i) * v.norm_sqr())
        .sum();
    Ok((sum * h).sqrt())
}

/// Weighted inner product, conjugate-linear in the second slot:
/// `sum_i f_i * conj(g_i) * w(r_i) * h`.
pub fn inner_product(f: &GridFunction, g: &GridFunction, w: &WeightSpec) -> Result<C64> {
    if !f.grid().compatible(g.grid()) {
        return Err(CoreError::GridMismatch);
    }
    w.check_len(f.grid())?;
    let grid = f.grid();
    let h = grid.h();
    let mut acc = C64::new(0.0, 0.0);
    for (i, (a, b)) in f.values().iter().zip(g.values()).enumerate() {
        acc += a * b.conj() * w.at(grid, i);
    }
    Ok(acc * h)
}

/// Second-order central difference with implicit zero ghost values at both
/// endpoints.
pub fn derivative(f: &GridFunction) -> GridFunction {
    let n = f.len();
    let h = f.grid().h();
    let v = f.values();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        let left = if i == 0 { C64::new(0.0, 0.0) } else { v[i - 1] };
        let right = if i + 1 == n {
            C64::new(0.0, 0.0)
        } else {
            v[i + 1]
        };
        *o = (right - left) / (2.0 * h);
    }
    GridFunction {
        grid: Arc::clone(f.grid()),
        values: out,
    }
}

/// Squared norm of the staggered forward-difference gradient,
/// `sum_{i=0..n} |f_{i+1} - f_i|^2 / h` with zero Dirichlet ghosts. Its
/// adjoint composition is exactly the discrete Laplacian, so energy
/// identities based on it hold to rounding.
pub fn staggered_gradient_sq(f: &GridFunction) -> f64 {
    let n = f.len();
    let h = f.grid().h();
    let v = f.values();
    let mut sum = 0.0;
    for i in 0..=n {
        let a = if i == 0 { C64::new(0.0, 0.0) } else { v[i - 1] };
        let b = if i == n { C64::new(0.0, 0.0) } else { v[i] };
        sum += (b - a).norm_sqr();
    }
    sum / h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> GridFunction {
        let values = (0..grid.n_interior())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        GridFunction::new(Arc::clone(grid), values).unwrap()
    }

    #[test]
    fn build_grid_rejects_small_node_count() {
        assert!(build_grid(1.0, 65.0, 7).is_err());
        assert!(build_grid(1.0, 1.0, 16).is_err());
        assert!(build_grid(f64::NAN, 2.0, 16).is_err());
    }

    #[test]
    fn build_grid_spacing() {
        let g = build_grid(1.0, 2.0, 15).unwrap();
        assert_eq!(g.h(), 1.0 / 16.0);
        assert_eq!(g.node(0), 1.0 + 1.0 / 16.0);
        assert!((g.node(14) - (2.0 - 1.0 / 16.0)).abs() < 1e-15);

        let g = build_grid(1.0, 129.0, 4095).unwrap();
        assert_eq!(g.h(), 1.0 / 32.0);
    }

    #[test]
    fn norm_of_zero_is_zero() {
        let g = build_grid(1.0, 2.0, 15).unwrap();
        let f = GridFunction::zeros(g);
        assert_eq!(weighted_norm(&f, &WeightSpec::Unit).unwrap(), 0.0);
    }

    #[test]
    fn norm_of_single_spike() {
        let g = build_grid(1.0, 2.0, 15).unwrap();
        let mut f = GridFunction::zeros(g);
        f.values_mut()[6] = C64::new(1.0, 0.0);
        let n = weighted_norm(&f, &WeightSpec::Unit).unwrap();
        assert!((n - 0.25).abs() < 1e-15, "sqrt(1/16) = 0.25, got {n}");
    }

    #[test]
    fn norm_matches_closed_form_integral() {
        // integral of (r-1)^2 exp(-2(r-1)) over (1, inf) is 1/4.
        let g = build_grid(1.0, 65.0, 2047).unwrap();
        let f = GridFunction::from_real_fn(g, |r| (r - 1.0) * (-(r - 1.0)).exp());
        let n = weighted_norm(&f, &WeightSpec::Unit).unwrap();
        assert!((n - 0.5).abs() < 1e-4, "expected 0.5, got {n}");
    }

    #[test]
    fn inner_product_examples() {
        let g = build_grid(1.0, 3.0, 31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_fn(&g, &mut rng);
        let gg = random_fn(&g, &mut rng);

        let ip_ff = inner_product(&f, &f, &WeightSpec::Unit).unwrap();
        let nf = weighted_norm(&f, &WeightSpec::Unit).unwrap();
        assert!((ip_ff.re - nf * nf).abs() < 1e-14 * nf * nf);
        assert!(ip_ff.im.abs() < 1e-15);

        let ab = inner_product(&f, &gg, &WeightSpec::Unit).unwrap();
        let ba = inner_product(&gg, &f, &WeightSpec::Unit).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-14);

        // Disjoint spikes are orthogonal.
        let mut s1 = GridFunction::zeros(Arc::clone(&g));
        let mut s2 = GridFunction::zeros(Arc::clone(&g));
        s1.values_mut()[3] = C64::new(1.0, 0.0);
        s2.values_mut()[17] = C64::new(1.0, 0.0);
        let ip = inner_product(&s1, &s2, &WeightSpec::Unit).unwrap();
        assert_eq!(ip, C64::new(0.0, 0.0));
    }

    #[test]
    fn inner_product_rejects_grid_mismatch() {
        let g1 = build_grid(1.0, 3.0, 31).unwrap();
        let g2 = build_grid(1.0, 3.0, 63).unwrap();
        let f = GridFunction::zeros(g1);
        let gg = GridFunction::zeros(g2);
        assert!(matches!(
            inner_product(&f, &gg, &WeightSpec::Unit),
            Err(CoreError::GridMismatch)
        ));
    }

    #[test]
    fn derivative_of_zero() {
        let g = build_grid(1.0, 2.0, 31).unwrap();
        let f = GridFunction::zeros(g);
        let d = derivative(&f);
        assert!(d.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn derivative_matches_analytic_cosine() {
        let g = build_grid(1.0, 2.0, 255).unwrap();
        let h = g.h();
        let f = GridFunction::from_real_fn(Arc::clone(&g), |r| {
            (std::f64::consts::PI * (r - 1.0)).sin()
        });
        let d = derivative(&f);
        let max_err = g
            .nodes()
            .iter()
            .zip(d.values())
            .map(|(&r, v)| {
                let exact = std::f64::consts::PI * (std::f64::consts::PI * (r - 1.0)).cos();
                (v.re - exact).abs()
            })
            .fold(0.0f64, f64::max);
        // Truncation constant for central differences is |f'''| h^2 / 6.
        let bound = std::f64::consts::PI.powi(3) * h * h / 6.0 * 1.5;
        assert!(max_err < bound, "max_err {max_err} vs bound {bound}");
    }

    #[test]
    fn derivative_exact_on_interior_affine_pieces() {
        let g = build_grid(0.0, 1.0, 63).unwrap();
        let f = GridFunction::from_real_fn(Arc::clone(&g), |x| 2.0 * x);
        let d = derivative(&f);
        // Interior nodes away from the boundary stencil see an affine
        // function and central differences are exact there.
        for i in 1..g.n_interior() - 1 {
            assert!((d.values()[i].re - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn staggered_gradient_matches_laplacian_quadratic_form() {
        let g = build_grid(1.0, 2.0, 63).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_fn(&g, &mut rng);
        let h = g.h();
        // <(-D2) f, f> with the standard second-difference stencil.
        let n = f.len();
        let v = f.values();
        let mut quad = C64::new(0.0, 0.0);
        for i in 0..n {
            let left = if i == 0 { C64::new(0.0, 0.0) } else { v[i - 1] };
            let right = if i + 1 == n {
                C64::new(0.0, 0.0)
            } else {
                v[i + 1]
            };
            let lap = (2.0 * v[i] - left - right) / (h * h);
            quad += lap * v[i].conj();
        }
        quad *= h;
        let sg = staggered_gradient_sq(&f);
        assert!((quad.re - sg).abs() <= 1e-12 * sg.abs());
        assert!(quad.im.abs() <= 1e-12 * sg.abs());
    }

    proptest! {
        #[test]
        fn triangle_and_cauchy_schwarz(seed in 0u64..500) {
            let g = build_grid(1.0, 4.0, 47).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_fn(&g, &mut rng);
            let gg = random_fn(&g, &mut rng);
            let w = WeightSpec::Power(-2.0);

            let nf = weighted_norm(&f, &w).unwrap();
            let ng = weighted_norm(&gg, &w).unwrap();
            let sum = f.axpy(C64::new(1.0, 0.0), &gg).unwrap();
            let ns = weighted_norm(&sum, &w).unwrap();
            prop_assert!(ns <= (nf + ng) * (1.0 + 1e-12));

            let ip = inner_product(&f, &gg, &w).unwrap();
            prop_assert!(ip.norm() <= nf * ng * (1.0 + 1e-12));
        }

        #[test]
        fn disjoint_support_additivity(split in 8usize..40) {
            let g = build_grid(1.0, 4.0, 47).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(split as u64);
            let full = random_fn(&g, &mut rng);
            let mut a = GridFunction::zeros(Arc::clone(&g));
            let mut b = GridFunction::zeros(Arc::clone(&g));
            for i in 0..g.n_interior() {
                if i < split {
                    a.values_mut()[i] = full.values()[i];
                } else {
                    b.values_mut()[i] = full.values()[i];
                }
            }
            let na = weighted_norm(&a, &WeightSpec::Unit).unwrap();
            let nb = weighted_norm(&b, &WeightSpec::Unit).unwrap();
            let nfull = weighted_norm(&full, &WeightSpec::Unit).unwrap();
            // Exact additivity of squares for disjoint supports.
            prop_assert!((na * na + nb * nb - nfull * nfull).abs() <= 1e-14 * nfull * nfull);
        }
    }
}
