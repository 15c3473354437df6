//! Fixtures shared by the criterion benchmarks in `benches/`.

use reflector_ot::problems::{off_axis_config, PlaneReflector};
use reflector_ot::{CostSign, ReflectorSolver};

/// Off-axis problem with `c = +log(1 - x.y)` and a potential near its optimum.
pub fn off_axis_fixture(n: usize) -> (ReflectorSolver, Vec<f64>) {
    let solver = ReflectorSolver::new(off_axis_config(n, CostSign::PosLog)).expect("valid configuration");
    let exact = PlaneReflector::sending_down_axis_to(&reflector_ot::problems::off_axis(), CostSign::PosLog)
        .zero_mean_on(solver.space());
    let u = solver.space().interpolate(|x| exact.value(x) + 0.01 * x.x * x.y);
    (solver, u)
}
