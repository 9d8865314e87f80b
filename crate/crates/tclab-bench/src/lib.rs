//! Shared builders for the kernel benchmarks.

use std::sync::Arc;
use tclab_core::grid::{build_grid, Grid, GridFunction};
use tclab_core::operators::{assemble, OperatorKind, PhysParams};
use tclab_core::profiles::initial_bump;
use tclab_core::tridiag::TridiagonalOperator;
use tclab_core::C64;

pub fn radial_grid(n: usize) -> Arc<Grid> {
    build_grid(1.0, 16.0, n).unwrap()
}

pub fn radial_operator(n: usize, nu: f64) -> TridiagonalOperator {
    let g = radial_grid(n);
    let p = PhysParams::new(nu, 1, 1.0).unwrap();
    assemble(OperatorKind::TaylorCouette, &p, &g).unwrap()
}

pub fn shifted_couette(n: usize, nu: f64, lambda: f64) -> TridiagonalOperator {
    let g = build_grid(0.0, 1.0, n).unwrap();
    let p = PhysParams::new(nu, 1, 0.0).unwrap();
    let a = assemble(OperatorKind::Couette, &p, &g).unwrap();
    a.shift(C64::new(0.0, -lambda))
}

pub fn bump_state(grid: &Arc<Grid>) -> GridFunction {
    initial_bump(grid, 2.0, 0.5)
}
