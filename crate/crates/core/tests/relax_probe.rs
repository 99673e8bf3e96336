use cavmhd::assembly::*;
use cavmhd::geometry::*;
use cavmhd::mesh::*;
use cavmhd::solver::*;
use std::sync::Arc;

#[test]
#[ignore]
fn newton_stiff_cases() {
    let geom = CavityGeometry::default();
    let mesh = Arc::new(generate_mesh(&geom, Sizing::graded(0.08, 0.035)).unwrap());
    println!("mesh {} elements", mesh.num_triangles());
    // Fig. 2 parameters direct and the stiffest corner via continuation
    let cases = [
        ("fig2 direct", 5.0, 50.0, 1, 0.8),
        ("fig2 relaxed", 5.0, 50.0, 1, 0.6),
        ("corner c3", 10.0, 150.0, 3, 0.6),
        ("ha0 ri10", 10.0, 0.0, 3, 0.6),
    ];
    for (name, ri, ha, steps, omega) in cases {
        let g = DimensionlessGroups { re: 100.0, pr: 7.0, ri, ha, br: 20.0, le: 20.0 };
        let opts = SolverOptions { relaxation: omega, max_iters: 200, continuation_steps: steps, ..SolverOptions::default() };
        let t0 = std::time::Instant::now();
        match continuation_solve(&mesh, &g, &opts) {
            Ok(sol) => println!("{name}: converged, {} iters final stage, {:?}", sol.iterations, t0.elapsed()),
            Err(SolverError::NotConverged { worst, stage, .. }) => println!("{name}: NOT converged (worst {worst:.2e}, stage {stage:?})"),
            Err(e) => println!("{name}: {e}"),
        }
    }
}
