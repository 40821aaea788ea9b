#![allow(dead_code)]

use cmc_core::model::uniform_grid;
use cmc_core::{FactorScenario, GeneratorPath, Matrix, RatePath};
use proptest::prelude::*;

/// Valid generator with off-diagonal rates drawn from `[0, max_rate)`.
pub fn generator(n: usize, max_rate: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0..max_rate, n * n).prop_map(move |v| {
        let mut g = Matrix::zeros(n, n);
        for x in 0..n {
            let mut exit = 0.0;
            for y in (0..n).filter(|&y| y != x) {
                g[(x, y)] = v[x * n + y];
                exit += v[x * n + y];
            }
            g[(x, x)] = -exit;
        }
        g
    })
}

/// Piecewise-constant generator path with `cells` random cells on `[0, horizon]`.
pub fn generator_cells(n: usize, cells: usize) -> impl Strategy<Value = Vec<Matrix>> {
    prop::collection::vec(generator(n, 2.0), cells)
}

pub fn path(horizon: f64, cells: Vec<Matrix>) -> GeneratorPath {
    let scenario = FactorScenario::uniform(horizon, cells.len()).unwrap();
    GeneratorPath::new(scenario, cells, 1e-10).unwrap()
}

pub fn rate(horizon: f64, steps: usize, v: f64) -> RatePath {
    RatePath::constant(uniform_grid(horizon, steps), v).unwrap()
}

/// Classical RK4 on `dP/dt = P Λ_t` with `sub` steps per cell.
pub fn rk4_transition(path: &GeneratorPath, from_cell: usize, to_cell: usize, sub: usize) -> Matrix {
    let d = path.dim();
    let mut p = Matrix::identity(d);
    for j in from_cell..to_cell {
        let g = path.cell(j).as_matrix();
        let h = path.cell_length(j) / sub as f64;
        for _ in 0..sub {
            let k1 = p.matmul(g);
            let k2 = (&p + &k1.scale(h / 2.0)).matmul(g);
            let k3 = (&p + &k2.scale(h / 2.0)).matmul(g);
            let k4 = (&p + &k3.scale(h)).matmul(g);
            let incr = &(&(&k1 + &k2.scale(2.0)) + &k3.scale(2.0)) + &k4;
            p = &p + &incr.scale(h / 6.0);
        }
    }
    p
}
