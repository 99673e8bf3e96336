//! Picard iteration driver: assembles the frozen-velocity system, applies
//! boundary conditions, solves the sparse linear system directly, and
//! under-relaxes the update until the summed nodal change of every field
//! drops below the tolerance. Parameter continuation ramps Ri and Ha for the
//! stiff corners of the parameter space.

use crate::assembly::{
    apply_boundary_conditions, assemble_system, AssemblyError, BcTable, DimensionlessGroups,
    DiscreteSystem, Fields, Linearization, SourceSet,
};
use crate::mesh::Mesh;
use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::SparseColMat;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear system is singular: {hint}")]
    Singular { hint: String },
    #[error(
        "Picard iteration did not converge after {iterations} iterations \
         (worst field change {worst:.3e}{})",
        stage.map(|s| format!(", continuation stage {s}")).unwrap_or_default()
    )]
    NotConverged {
        solution: Box<FieldSolution>,
        iterations: usize,
        worst: f64,
        stage: Option<usize>,
    },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the summed absolute nodal change per field.
    pub tol: f64,
    pub max_iters: usize,
    /// Under-relaxation factor applied to field updates, in (0, 1].
    pub relaxation: f64,
    /// Ramp stages for Ri and Ha (1 = no ramp).
    pub continuation_steps: usize,
    /// Advection linearization. Newton is the default: the plain frozen
    /// velocity iteration is not contractive at strong solutal buoyancy
    /// (Ri Br Re^2 of order 1e6 in the studied range).
    pub linearization: Linearization,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 200,
            relaxation: 0.7,
            continuation_steps: 1,
            linearization: Linearization::Newton,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        if !(self.tol > 0.0) || !(self.relaxation > 0.0 && self.relaxation <= 1.0)
            || self.max_iters < 1
            || self.continuation_steps < 1
        {
            return Err(AssemblyError::InvalidGroups(format!(
                "solver options out of range: tol {}, relaxation {}, max_iters {}, continuation_steps {}",
                self.tol, self.relaxation, self.max_iters, self.continuation_steps
            )));
        }
        Ok(())
    }
}

/// Per-iteration change of each field, ordered (U, V, P, theta, C).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// The stopping criterion: summed absolute nodal change.
    pub l1: [f64; 5],
    /// Mesh-size-independent companion diagnostic.
    pub rms: [f64; 5],
}

impl IterationRecord {
    pub fn worst_l1(&self) -> f64 {
        self.l1.iter().copied().fold(0.0, f64::max)
    }
}

/// Converged (or partial) nodal solution plus its iteration history.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub mesh: Arc<Mesh>,
    pub fields: Fields,
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

/// Solve the constrained linear system with a sparse direct LU
/// factorization, with iterative refinement. Deterministic for fixed input.
pub fn solve_linear(system: &DiscreteSystem) -> Result<Vec<f64>, SolverError> {
    let mut cache = FactorCache::default();
    solve_linear_cached(system, &mut cache)
}

/// Direct solve of a raw triplet system (used by post-processing Poisson
/// problems that do not share the coupled unknown layout).
pub fn solve_sparse(
    n: usize,
    triplets: &[(usize, usize, f64)],
    rhs: &[f64],
) -> Result<Vec<f64>, SolverError> {
    use crate::assembly::DofMap;
    let system = DiscreteSystem {
        dof_map: DofMap {
            n_quad: 0,
            n_vert: n,
        },
        triplets: triplets.to_vec(),
        rhs: rhs.to_vec(),
        constraints: vec![None; n],
        constrained: true,
    };
    solve_linear(&system)
}

/// Symbolic LU factorization cache: Picard iterations share one sparsity
/// pattern, so the fill-reducing analysis is done once per mesh.
#[derive(Default)]
pub struct FactorCache {
    symbolic: Option<SymbolicLu<usize>>,
}

fn singular_hint(system: &DiscreteSystem) -> String {
    if !system.constrained {
        return "boundary conditions were never applied (missing pressure pin)".into();
    }
    let n_constrained = system.constraints.iter().filter(|c| c.is_some()).count();
    format!(
        "factorization failed on a constrained system ({n_constrained} Dirichlet dofs); \
         check for untagged boundaries or a degenerate mesh"
    )
}

pub fn solve_linear_cached(
    system: &DiscreteSystem,
    cache: &mut FactorCache,
) -> Result<Vec<f64>, SolverError> {
    let n = system.size();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &system.triplets)
        .map_err(|e| SolverError::Singular {
            hint: format!("could not build sparse matrix: {e:?}"),
        })?;
    if cache.symbolic.is_none() {
        cache.symbolic = Some(SymbolicLu::try_new(mat.symbolic()).map_err(|_| {
            SolverError::Singular {
                hint: singular_hint(system),
            }
        })?);
    }
    let symbolic = cache.symbolic.as_ref().unwrap().clone();
    let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref()).map_err(|_| {
        SolverError::Singular {
            hint: singular_hint(system),
        }
    })?;
    let rhs = faer::Mat::from_fn(n, 1, |i, _| system.rhs[i]);
    let mut x: faer::Mat<f64> = lu.solve(&rhs);
    let norm_b = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-10 * (1.0 + norm_b);
    for _refine in 0..3 {
        let xv: Vec<f64> = (0..n).map(|i| x.read(i, 0)).collect();
        let ax = system.apply(&xv);
        let res: Vec<f64> = (0..n).map(|i| system.rhs[i] - ax[i]).collect();
        let norm_r = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_r <= tol {
            return Ok(xv);
        }
        let r_mat = faer::Mat::from_fn(n, 1, |i, _| res[i]);
        let dx: faer::Mat<f64> = lu.solve(&r_mat);
        for i in 0..n {
            x.write(i, 0, x.read(i, 0) + dx.read(i, 0));
        }
    }
    let xv: Vec<f64> = (0..n).map(|i| x.read(i, 0)).collect();
    let ax = system.apply(&xv);
    let norm_r = (0..n)
        .map(|i| (system.rhs[i] - ax[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm_r <= tol {
        Ok(xv)
    } else {
        Err(SolverError::Singular {
            hint: format!(
                "direct solve stalled at residual {norm_r:.3e} (tolerance {tol:.3e}); \
                 the system is likely singular ({})",
                singular_hint(system)
            ),
        })
    }
}

/// Steady cavity solve with the standard boundary conditions.
pub fn solve_steady(
    mesh: &Arc<Mesh>,
    groups: &DimensionlessGroups,
    options: &SolverOptions,
) -> Result<FieldSolution, SolverError> {
    solve_problem(mesh, groups, &BcTable::cavity(), None, options, None)
}

/// General Picard driver: assemble at the current state, constrain, solve,
/// under-relax, and stop once the per-field L1 nodal change is below `tol`
/// for all five fields.
pub fn solve_problem(
    mesh: &Arc<Mesh>,
    groups: &DimensionlessGroups,
    bcs: &BcTable,
    sources: Option<&SourceSet>,
    options: &SolverOptions,
    initial: Option<&Fields>,
) -> Result<FieldSolution, SolverError> {
    options.validate()?;
    groups.validate()?;
    let mut state = initial.cloned().unwrap_or_else(|| Fields::zeros(mesh));
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut cache = FactorCache::default();
    let omega = options.relaxation;

    for iteration in 1..=options.max_iters {
        let system = assemble_system(mesh, groups, &state, sources, options.linearization)?;
        let system = apply_boundary_conditions(system, mesh, bcs)?;
        let x = solve_linear_cached(&system, &mut cache)?;
        let solved = Fields::from_vector(&system.dof_map, &x);

        let mut next = relaxed_update(&state, &solved, omega);
        // Dirichlet dofs hold their exact values, never a relaxed blend
        for (dof, c) in system.constraints.iter().enumerate() {
            if c.is_some() {
                set_dof(&mut next, &system.dof_map, dof, x[dof]);
            }
        }

        let record = IterationRecord {
            l1: next.l1_delta(&state),
            rms: next.rms_delta(&state),
        };
        history.push(record);
        state = next;
        if record.l1.iter().all(|&d| d <= options.tol) {
            return Ok(FieldSolution {
                mesh: Arc::clone(mesh),
                fields: state,
                converged: true,
                iterations: iteration,
                history,
            });
        }
    }

    let worst = history.last().map(|r| r.worst_l1()).unwrap_or(f64::NAN);
    let iterations = history.len();
    Err(SolverError::NotConverged {
        solution: Box::new(FieldSolution {
            mesh: Arc::clone(mesh),
            fields: state,
            converged: false,
            iterations,
            history,
        }),
        iterations,
        worst,
        stage: None,
    })
}

fn relaxed_update(old: &Fields, new: &Fields, omega: f64) -> Fields {
    let blend = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| x + omega * (y - x))
            .collect()
    };
    Fields {
        u: blend(&old.u, &new.u),
        v: blend(&old.v, &new.v),
        p: blend(&old.p, &new.p),
        theta: blend(&old.theta, &new.theta),
        conc: blend(&old.conc, &new.conc),
    }
}

fn set_dof(fields: &mut Fields, dof_map: &crate::assembly::DofMap, dof: usize, value: f64) {
    use crate::assembly::Field;
    for f in Field::ALL {
        let r = dof_map.range(f);
        if r.contains(&dof) {
            let local = dof - r.start;
            match f {
                Field::U => fields.u[local] = value,
                Field::V => fields.v[local] = value,
                Field::P => fields.p[local] = value,
                Field::Theta => fields.theta[local] = value,
                Field::Conc => fields.conc[local] = value,
            }
            return;
        }
    }
}

/// Intermediate values of a geometric ramp toward `target` over `steps`
/// stages: `target^(i/steps)` (0 stays 0, sign preserved).
pub fn continuation_values(target: f64, steps: usize) -> Vec<f64> {
    (1..=steps)
        .map(|i| {
            if target == 0.0 {
                0.0
            } else {
                let frac = i as f64 / steps as f64;
                target.signum() * target.abs().powf(frac)
            }
        })
        .collect()
}

/// Solve a sequence of problems with Ri and Ha ramped geometrically to their
/// targets, warm-starting each stage from the previous solution.
pub fn continuation_solve(
    mesh: &Arc<Mesh>,
    groups: &DimensionlessGroups,
    options: &SolverOptions,
) -> Result<FieldSolution, SolverError> {
    continuation_solve_with(mesh, groups, &BcTable::cavity(), None, options)
}

pub fn continuation_solve_with(
    mesh: &Arc<Mesh>,
    groups: &DimensionlessGroups,
    bcs: &BcTable,
    sources: Option<&SourceSet>,
    options: &SolverOptions,
) -> Result<FieldSolution, SolverError> {
    options.validate()?;
    let steps = options.continuation_steps;
    let ri_ramp = continuation_values(groups.ri, steps);
    let ha_ramp = continuation_values(groups.ha, steps);
    let mut warm: Option<Fields> = None;
    let mut last: Option<FieldSolution> = None;
    for stage in 0..steps {
        let stage_groups = DimensionlessGroups {
            ri: ri_ramp[stage],
            ha: ha_ramp[stage],
            ..*groups
        };
        match solve_problem(mesh, &stage_groups, bcs, sources, options, warm.as_ref()) {
            Ok(sol) => {
                warm = Some(sol.fields.clone());
                last = Some(sol);
            }
            Err(SolverError::NotConverged {
                solution,
                iterations,
                worst,
                ..
            }) => {
                return Err(SolverError::NotConverged {
                    solution,
                    iterations,
                    worst,
                    stage: Some(stage + 1),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(last.expect("continuation_steps >= 1"))
}

/// Criterion history as CSV: `iteration,dU,dV,dP,dTheta,dC`.
pub fn write_history_csv(path: &std::path::Path, solution: &FieldSolution) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,dU,dV,dP,dTheta,dC")?;
    for (i, rec) in solution.history.iter().enumerate() {
        writeln!(
            w,
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            i + 1,
            rec.l1[0],
            rec.l1[1],
            rec.l1[2],
            rec.l1[3],
            rec.l1[4]
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{BcValue, BoundaryCondition, DofMap, Field};
    use crate::geometry::BoundaryTag;
    use crate::mesh::structured_unit_square;

    fn manual_system(triplets: Vec<(usize, usize, f64)>, rhs: Vec<f64>) -> DiscreteSystem {
        let n = rhs.len();
        DiscreteSystem {
            dof_map: DofMap {
                n_quad: 0,
                n_vert: n,
            },
            triplets,
            rhs,
            constraints: vec![None; n],
            constrained: true,
        }
    }

    #[test]
    fn identity_system() {
        let sys = manual_system(vec![(0, 0, 1.0), (1, 1, 1.0)], vec![1.0, 0.0]);
        let x = solve_linear(&sys).unwrap();
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn diagonal_two_by_two() {
        let sys = manual_system(vec![(0, 0, 2.0), (1, 1, 4.0)], vec![2.0, 8.0]);
        let x = solve_linear(&sys).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_system_reports_hint() {
        let sys = manual_system(vec![(0, 0, 1.0), (1, 0, 1.0)], vec![1.0, 1.0]);
        let err = solve_linear(&sys).unwrap_err();
        assert!(matches!(err, SolverError::Singular { .. }), "{err}");
    }

    fn groups(re: f64) -> DimensionlessGroups {
        DimensionlessGroups {
            re,
            pr: 1.0,
            ri: 0.0,
            ha: 0.0,
            br: 0.0,
            le: 1.0,
        }
    }

    /// All-zero boundary data must produce the zero solution in one
    /// iteration.
    #[test]
    fn zero_data_null_test() {
        let mesh = Arc::new(structured_unit_square(4));
        let bcs = BcTable::cavity_with_lid_speed(0.0);
        let sol = solve_problem(&mesh, &groups(10.0), &bcs, None, &SolverOptions::default(), None)
            .unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        let max = sol
            .fields
            .u
            .iter()
            .chain(&sol.fields.v)
            .chain(&sol.fields.theta)
            .chain(&sol.fields.conc)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-12, "nonzero solution from zero data: {max}");
    }

    /// Uniform hot boundary data with a stationary lid: buoyancy is constant
    /// and absorbed by the (linear) pressure, so the velocity vanishes.
    #[test]
    fn pure_conduction_limit_has_zero_velocity() {
        let mesh = Arc::new(structured_unit_square(6));
        let hot = BoundaryCondition::no_slip();
        let mut entries = Vec::new();
        for tag in BoundaryTag::ALL {
            let mut bc = hot.clone();
            bc.theta = Some(BcValue::Const(1.0));
            bc.conc = Some(BcValue::Const(1.0));
            entries.push((tag, bc));
        }
        let bcs = BcTable::new(entries);
        let g = DimensionlessGroups {
            re: 100.0,
            pr: 7.0,
            ri: 5.0,
            ha: 0.0,
            br: 20.0,
            le: 20.0,
        };
        let sol = solve_problem(&mesh, &g, &bcs, None, &SolverOptions::default(), None).unwrap();
        assert!(sol.converged);
        let vmax = sol
            .fields
            .u
            .iter()
            .chain(&sol.fields.v)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(vmax < 1e-9, "conduction limit velocity {vmax}");
        // interior theta approaches 1 geometrically under relaxation; the
        // leftover is bounded by the stopping tolerance
        assert!(sol.fields.theta.iter().all(|&t| (t - 1.0).abs() < 1e-5));
    }

    #[test]
    fn lid_driven_square_converges_and_is_deterministic() {
        let mesh = Arc::new(structured_unit_square(12));
        let opts = SolverOptions::default();
        let a = solve_steady(&mesh, &groups(100.0), &opts).unwrap();
        let b = solve_steady(&mesh, &groups(100.0), &opts).unwrap();
        assert!(a.converged);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.fields.u, b.fields.u);
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.l1, rb.l1);
        }
        // lid drags fluid: U near the lid is positive, deep flow reversed
        let mid_low = mesh
            .vertices
            .iter()
            .position(|p| (p.x - 0.5).abs() < 1e-9 && (p.y - 0.25).abs() < 1e-9)
            .unwrap();
        assert!(a.fields.u[mid_low] < 0.0);
    }

    /// Feeding a converged solution back as the initial state must converge
    /// immediately (fixed-point consistency).
    #[test]
    fn fixed_point_consistency() {
        let mesh = Arc::new(structured_unit_square(8));
        let opts = SolverOptions::default();
        let sol = solve_steady(&mesh, &groups(100.0), &opts).unwrap();
        let again = solve_problem(
            &mesh,
            &groups(100.0),
            &BcTable::cavity(),
            None,
            &opts,
            Some(&sol.fields),
        )
        .unwrap();
        assert!(again.iterations <= 2, "warm restart took {}", again.iterations);
    }

    #[test]
    fn continuation_ramp_is_geometric() {
        let vals = continuation_values(10.0, 3);
        assert!((vals[0] - 10f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!((vals[1] - 10f64.powf(2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(vals[2], 10.0);
        assert_eq!(continuation_values(0.0, 3), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_step_continuation_matches_direct_solve() {
        let mesh = Arc::new(structured_unit_square(8));
        let g = DimensionlessGroups {
            re: 100.0,
            pr: 7.0,
            ri: 1.0,
            ha: 10.0,
            br: 1.0,
            le: 2.0,
        };
        let opts = SolverOptions::default();
        let direct = solve_steady(&mesh, &g, &opts).unwrap();
        let cont = continuation_solve(&mesh, &g, &opts).unwrap();
        let diff = direct
            .fields
            .u
            .iter()
            .zip(&cont.fields.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 10.0 * opts.tol, "continuation diverges from direct: {diff}");
    }

    /// Picard and Newton share the same fixed point: the steady equations.
    #[test]
    fn newton_and_picard_agree_on_mild_problem() {
        let mesh = Arc::new(structured_unit_square(8));
        let g = DimensionlessGroups {
            re: 50.0,
            pr: 1.0,
            ri: 1.0,
            ha: 5.0,
            br: 1.0,
            le: 2.0,
        };
        let tight = SolverOptions {
            tol: 1e-9,
            ..SolverOptions::default()
        };
        let newton = solve_steady(&mesh, &g, &tight).unwrap();
        let picard = solve_steady(
            &mesh,
            &g,
            &SolverOptions {
                linearization: crate::assembly::Linearization::Picard,
                ..tight
            },
        )
        .unwrap();
        let diff = newton
            .fields
            .u
            .iter()
            .zip(&picard.fields.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-6, "linearizations disagree by {diff}");
        assert!(
            newton.iterations <= picard.iterations,
            "Newton ({}) should not need more iterations than Picard ({})",
            newton.iterations,
            picard.iterations
        );
    }

    #[test]
    fn not_converged_carries_partial_solution() {
        let mesh = Arc::new(structured_unit_square(8));
        let opts = SolverOptions {
            max_iters: 2,
            ..SolverOptions::default()
        };
        let err = solve_steady(&mesh, &groups(100.0), &opts).unwrap_err();
        match err {
            SolverError::NotConverged {
                solution,
                iterations,
                ..
            } => {
                assert_eq!(iterations, 2);
                assert_eq!(solution.history.len(), 2);
                assert!(!solution.converged);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn history_csv_roundtrip() {
        let mesh = Arc::new(structured_unit_square(4));
        let sol = solve_steady(&mesh, &groups(10.0), &SolverOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history_csv(&path, &sol).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,dU,dV,dP,dTheta,dC"));
        assert_eq!(lines.count(), sol.history.len());
    }
}
