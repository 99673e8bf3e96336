//! Galerkin discretization of the dimensionless governing system on
//! Taylor-Hood triangles (quadratic velocity/temperature/concentration,
//! linear pressure), one Picard step at a time.
//!
//! The assembled operator freezes the advecting velocity at the supplied
//! linearization state. Buoyancy `Ri (theta + Br C)` and the Lorentz damping
//! `(Ha^2 / Re) V` act on the vertical momentum rows only. All boundary
//! integrals vanish (pure Dirichlet velocity, zero-flux scalars elsewhere).

pub mod basis;

use crate::geometry::{BoundaryTag, Point};
use crate::mesh::Mesh;
use basis::element_points;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("division by zero in nondimensionalization: {quantity} is zero")]
    DivisionByZero { quantity: &'static str },
    #[error("state/mesh dimension mismatch: state has {state} quadratic nodes, mesh has {mesh}")]
    DimensionMismatch { state: usize, mesh: usize },
    #[error("invalid dimensionless groups: {0}")]
    InvalidGroups(String),
    #[error("no boundary condition entry for tag {0:?}")]
    MissingBc(BoundaryTag),
}

/// The dimensionless groups governing the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessGroups {
    pub re: f64,
    pub pr: f64,
    pub ri: f64,
    pub ha: f64,
    pub br: f64,
    pub le: f64,
}

impl DimensionlessGroups {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        let all = [self.re, self.pr, self.ri, self.ha, self.br, self.le];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(AssemblyError::InvalidGroups(
                "all groups must be finite".into(),
            ));
        }
        if !(self.re > 0.0 && self.pr > 0.0 && self.le > 0.0) {
            return Err(AssemblyError::InvalidGroups(format!(
                "Re, Pr, Le must be positive, got {}, {}, {}",
                self.re, self.pr, self.le
            )));
        }
        if self.ha < 0.0 {
            return Err(AssemblyError::InvalidGroups(format!(
                "Ha must be nonnegative, got {}",
                self.ha
            )));
        }
        Ok(())
    }
}

/// Dimensional inputs accepted by [`nondimensionalize`].
#[derive(Debug, Clone, Copy)]
pub struct PhysicalProperties {
    pub rho: f64,
    pub mu: f64,
    pub k: f64,
    pub c_p: f64,
    pub mass_diffusivity: f64,
    pub g: f64,
    pub beta_t: f64,
    pub beta_c: f64,
    pub sigma: f64,
    pub b0: f64,
    pub u0: f64,
    pub length: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub c_hot: f64,
    pub c_cold: f64,
}

/// Map dimensional properties to the dimensionless groups:
/// `Re = rho u0 L / mu`, `Pr = nu / alpha`, `Le = alpha / D`,
/// `Ri = g beta_T dT L / u0^2`, `Ha = B0 L sqrt(sigma / mu)`,
/// `Br = beta_C dC / (beta_T dT)`.
pub fn nondimensionalize(p: &PhysicalProperties) -> Result<DimensionlessGroups, AssemblyError> {
    let nonzero = |v: f64, name: &'static str| {
        if v == 0.0 {
            Err(AssemblyError::DivisionByZero { quantity: name })
        } else {
            Ok(v)
        }
    };
    let rho = nonzero(p.rho, "rho")?;
    let mu = nonzero(p.mu, "mu")?;
    let c_p = nonzero(p.c_p, "c_p")?;
    let k = nonzero(p.k, "k")?;
    let d = nonzero(p.mass_diffusivity, "D")?;
    let u0 = nonzero(p.u0, "u0")?;
    let dt = nonzero(p.t_hot - p.t_cold, "T_H - T_L")?;
    let beta_t = nonzero(p.beta_t, "beta_T")?;
    let nu = mu / rho;
    let alpha = k / (rho * c_p);
    Ok(DimensionlessGroups {
        re: p.length * u0 * rho / mu,
        pr: nu / alpha,
        le: alpha / d,
        ri: p.g * beta_t * dt * p.length / (u0 * u0),
        ha: p.b0 * p.length * (p.sigma / mu).sqrt(),
        br: p.beta_c * (p.c_hot - p.c_cold) / (beta_t * dt),
    })
}

/// Unknown fields: velocities and scalars on quadratic nodes, pressure on
/// corner nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    U,
    V,
    P,
    Theta,
    Conc,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::U, Field::V, Field::P, Field::Theta, Field::Conc];

    pub fn name(self) -> &'static str {
        match self {
            Field::U => "U",
            Field::V => "V",
            Field::P => "P",
            Field::Theta => "theta",
            Field::Conc => "concentration",
        }
    }
}

/// Maps (field, node) pairs to global unknown indices. Layout: U block, V
/// block, P block, theta block, concentration block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    pub n_quad: usize,
    pub n_vert: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        Self {
            n_quad: mesh.num_nodes(),
            n_vert: mesh.num_vertices(),
        }
    }

    pub fn total(&self) -> usize {
        4 * self.n_quad + self.n_vert
    }

    pub fn index(&self, field: Field, node: usize) -> usize {
        match field {
            Field::U => node,
            Field::V => self.n_quad + node,
            Field::P => {
                debug_assert!(node < self.n_vert);
                2 * self.n_quad + node
            }
            Field::Theta => 2 * self.n_quad + self.n_vert + node,
            Field::Conc => 3 * self.n_quad + self.n_vert + node,
        }
    }

    /// Global index range of one field block.
    pub fn range(&self, field: Field) -> std::ops::Range<usize> {
        match field {
            Field::U => 0..self.n_quad,
            Field::V => self.n_quad..2 * self.n_quad,
            Field::P => 2 * self.n_quad..2 * self.n_quad + self.n_vert,
            Field::Theta => {
                2 * self.n_quad + self.n_vert..3 * self.n_quad + self.n_vert
            }
            Field::Conc => 3 * self.n_quad + self.n_vert..4 * self.n_quad + self.n_vert,
        }
    }
}

/// Nodal field values: `u`, `v`, `theta`, `conc` on quadratic nodes, `p` on
/// corner nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
    pub conc: Vec<f64>,
}

impl Fields {
    pub fn zeros(mesh: &Mesh) -> Self {
        let nq = mesh.num_nodes();
        let nv = mesh.num_vertices();
        Self {
            u: vec![0.0; nq],
            v: vec![0.0; nq],
            p: vec![0.0; nv],
            theta: vec![0.0; nq],
            conc: vec![0.0; nq],
        }
    }

    pub fn from_vector(dof_map: &DofMap, x: &[f64]) -> Self {
        assert_eq!(x.len(), dof_map.total());
        let take = |f: Field| x[dof_map.range(f)].to_vec();
        Self {
            u: take(Field::U),
            v: take(Field::V),
            p: take(Field::P),
            theta: take(Field::Theta),
            conc: take(Field::Conc),
        }
    }

    pub fn to_vector(&self, dof_map: &DofMap) -> Vec<f64> {
        let mut x = Vec::with_capacity(dof_map.total());
        x.extend_from_slice(&self.u);
        x.extend_from_slice(&self.v);
        x.extend_from_slice(&self.p);
        x.extend_from_slice(&self.theta);
        x.extend_from_slice(&self.conc);
        x
    }

    /// Summed absolute nodal change per field, ordered (U, V, P, theta, C).
    pub fn l1_delta(&self, other: &Fields) -> [f64; 5] {
        let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        [
            l1(&self.u, &other.u),
            l1(&self.v, &other.v),
            l1(&self.p, &other.p),
            l1(&self.theta, &other.theta),
            l1(&self.conc, &other.conc),
        ]
    }

    /// Root-mean-square nodal change per field, same ordering.
    pub fn rms_delta(&self, other: &Fields) -> [f64; 5] {
        let rms = |a: &[f64], b: &[f64]| {
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (s / a.len() as f64).sqrt()
        };
        [
            rms(&self.u, &other.u),
            rms(&self.v, &other.v),
            rms(&self.p, &other.p),
            rms(&self.theta, &other.theta),
            rms(&self.conc, &other.conc),
        ]
    }
}

/// Dirichlet value: constant or position-dependent (used by manufactured
/// solutions).
#[derive(Clone)]
pub enum BcValue {
    Const(f64),
    Fn(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl BcValue {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            BcValue::Const(c) => *c,
            BcValue::Fn(f) => f(p),
        }
    }

    fn is_zero_const(&self) -> bool {
        matches!(self, BcValue::Const(c) if *c == 0.0)
    }
}

impl std::fmt::Debug for BcValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BcValue::Const(c) => write!(f, "{c}"),
            BcValue::Fn(_) => write!(f, "<fn>"),
        }
    }
}

/// Per-tag boundary condition. `None` fields are natural (zero-flux for the
/// scalars; velocity is always prescribed on every wall of these problems).
#[derive(Debug, Clone, Default)]
pub struct BoundaryCondition {
    pub velocity: Option<(BcValue, BcValue)>,
    pub theta: Option<BcValue>,
    pub conc: Option<BcValue>,
}

impl BoundaryCondition {
    pub fn no_slip() -> Self {
        Self {
            velocity: Some((BcValue::Const(0.0), BcValue::Const(0.0))),
            theta: None,
            conc: None,
        }
    }

    fn with_theta(mut self, v: f64) -> Self {
        self.theta = Some(BcValue::Const(v));
        self
    }

    fn with_conc(mut self, v: f64) -> Self {
        self.conc = Some(BcValue::Const(v));
        self
    }

    fn moving(ux: f64, uy: f64) -> Self {
        Self {
            velocity: Some((BcValue::Const(ux), BcValue::Const(uy))),
            theta: None,
            conc: None,
        }
    }

    fn is_stationary(&self) -> bool {
        match &self.velocity {
            Some((u, v)) => u.is_zero_const() && v.is_zero_const(),
            None => false,
        }
    }
}

/// Tag-indexed table of boundary conditions.
///
/// Where two tags meet at a node, stationary walls win the velocity (so the
/// moving lid never drags a corner of a watertight cavity), and scalar
/// Dirichlet data is resolved by tag declaration order (cold side walls
/// first).
#[derive(Debug, Clone)]
pub struct BcTable {
    entries: Vec<(BoundaryTag, BoundaryCondition)>,
}

impl BcTable {
    pub fn new(entries: Vec<(BoundaryTag, BoundaryCondition)>) -> Self {
        Self { entries }
    }

    /// The cavity problem: cold side walls, lid sliding in +x, adiabatic
    /// bottom, hot heaters and obstacle.
    pub fn cavity() -> Self {
        Self::cavity_with_lid_speed(1.0)
    }

    pub fn cavity_with_lid_speed(speed: f64) -> Self {
        use BoundaryTag::*;
        Self::new(vec![
            (LeftWall, BoundaryCondition::no_slip().with_theta(0.0).with_conc(0.0)),
            (RightWall, BoundaryCondition::no_slip().with_theta(0.0).with_conc(0.0)),
            (Lid, BoundaryCondition::moving(speed, 0.0)),
            (BottomAdiabatic, BoundaryCondition::no_slip()),
            (HeaterLeft, BoundaryCondition::no_slip().with_theta(1.0).with_conc(1.0)),
            (HeaterRight, BoundaryCondition::no_slip().with_theta(1.0).with_conc(1.0)),
            (Obstacle, BoundaryCondition::no_slip().with_theta(1.0).with_conc(1.0)),
        ])
    }

    /// The right-triangular validation configuration: cold vertical wall
    /// sliding upward, hot hypotenuse, adiabatic bottom.
    pub fn triangular_validation() -> Self {
        use BoundaryTag::*;
        Self::new(vec![
            (
                LeftWall,
                BoundaryCondition {
                    velocity: Some((BcValue::Const(0.0), BcValue::Const(1.0))),
                    theta: Some(BcValue::Const(0.0)),
                    conc: Some(BcValue::Const(0.0)),
                },
            ),
            (BottomAdiabatic, BoundaryCondition::no_slip()),
            (HeaterLeft, BoundaryCondition::no_slip().with_theta(1.0).with_conc(1.0)),
        ])
    }

    /// Exact Dirichlet data on every boundary, for manufactured solutions.
    pub fn manufactured(
        u: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        v: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        theta: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        conc: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    ) -> Self {
        let bc = BoundaryCondition {
            velocity: Some((BcValue::Fn(u), BcValue::Fn(v))),
            theta: Some(BcValue::Fn(theta)),
            conc: Some(BcValue::Fn(conc)),
        };
        Self::new(
            BoundaryTag::ALL
                .iter()
                .map(|&tag| (tag, bc.clone()))
                .collect(),
        )
    }

    pub fn get(&self, tag: BoundaryTag) -> Option<&BoundaryCondition> {
        self.entries.iter().find(|(t, _)| *t == tag).map(|(_, bc)| bc)
    }

    fn priority(&self, tag: BoundaryTag) -> usize {
        self.entries
            .iter()
            .position(|(t, _)| *t == tag)
            .unwrap_or(usize::MAX)
    }
}

/// Volumetric source terms added to the right-hand side (manufactured
/// solutions only; zero for the physical problem).
#[derive(Clone)]
pub struct SourceSet {
    pub u: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub v: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub theta: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub conc: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
}

/// Sparse linear system for one Picard step, in triplet form plus right-hand
/// side. Triplets with equal coordinates accumulate.
pub struct DiscreteSystem {
    pub dof_map: DofMap,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    /// Dirichlet values per global dof, populated by
    /// [`apply_boundary_conditions`].
    pub constraints: Vec<Option<f64>>,
    pub constrained: bool,
}

impl DiscreteSystem {
    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    /// y = A x over the triplet representation.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.size());
        let mut y = vec![0.0; self.size()];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    /// Dense copy for small-system tests.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        let mut a = vec![vec![0.0; n]; n];
        for &(r, c, v) in &self.triplets {
            a[r][c] += v;
        }
        a
    }

    pub fn constrained_dofs(&self) -> Vec<(usize, f64)> {
        self.constraints
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|v| (i, v)))
            .collect()
    }
}

/// Linearization of the advection nonlinearity.
///
/// `Picard` freezes the advecting velocity at the previous iterate. `Newton`
/// additionally carries the derivative of the advection terms with respect
/// to the advecting velocity (needed for convergence at strong solutal
/// buoyancy, where the plain fixed-point map is not contractive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    Picard,
    #[default]
    Newton,
}

/// Assemble the coupled Picard-step operator with the advecting velocity
/// frozen at `state`.
pub fn assemble_picard_system(
    mesh: &Mesh,
    groups: &DimensionlessGroups,
    state: &Fields,
) -> Result<DiscreteSystem, AssemblyError> {
    assemble_with_sources(mesh, groups, state, None)
}

pub fn assemble_with_sources(
    mesh: &Mesh,
    groups: &DimensionlessGroups,
    state: &Fields,
    sources: Option<&SourceSet>,
) -> Result<DiscreteSystem, AssemblyError> {
    assemble_system(mesh, groups, state, sources, Linearization::Picard)
}

/// One Newton step: the matrix is the Jacobian of the steady residual at
/// `state` and the right-hand side is arranged so the solve returns the next
/// iterate directly (`J x = J x_old - F(x_old)`), keeping the same solve and
/// update path as the Picard step.
pub fn assemble_newton_system(
    mesh: &Mesh,
    groups: &DimensionlessGroups,
    state: &Fields,
    sources: Option<&SourceSet>,
) -> Result<DiscreteSystem, AssemblyError> {
    assemble_system(mesh, groups, state, sources, Linearization::Newton)
}

pub fn assemble_system(
    mesh: &Mesh,
    groups: &DimensionlessGroups,
    state: &Fields,
    sources: Option<&SourceSet>,
    linearization: Linearization,
) -> Result<DiscreteSystem, AssemblyError> {
    groups.validate()?;
    if state.u.len() != mesh.num_nodes() {
        return Err(AssemblyError::DimensionMismatch {
            state: state.u.len(),
            mesh: mesh.num_nodes(),
        });
    }
    let dof_map = DofMap::new(mesh);
    let total = dof_map.total();
    let mut triplets: Vec<(usize, usize, f64)> =
        Vec::with_capacity(mesh.num_triangles() * 270);
    let mut rhs = vec![0.0; total];

    let visc = 1.0 / groups.re;
    let lorentz = groups.ha * groups.ha / groups.re;
    let kappa_t = 1.0 / (groups.pr * groups.re);
    let kappa_c = 1.0 / (groups.le * groups.pr * groups.re);

    for t in 0..mesh.num_triangles() {
        let nodes = mesh.element_nodes(t);
        let coords = std::array::from_fn(|k| mesh.node(nodes[k]));
        let pverts = mesh.triangles[t];

        let mut k2 = [[0.0f64; 6]; 6];
        let mut m2 = [[0.0f64; 6]; 6];
        let mut n_adv = [[0.0f64; 6]; 6];
        let mut gx = [[0.0f64; 3]; 6];
        let mut gy = [[0.0f64; 3]; 6];
        let mut dx = [[0.0f64; 6]; 3];
        let mut dy = [[0.0f64; 6]; 3];
        let mut f_u = [0.0f64; 6];
        let mut f_v = [0.0f64; 6];
        let mut f_t = [0.0f64; 6];
        let mut f_c = [0.0f64; 6];
        // Newton extras: phi_i phi_j weighted by the state gradients
        // (columns U and V per transported field) and the advection of the
        // state by itself on the right-hand side
        let newton = linearization == Linearization::Newton;
        let mut j_u = [[[0.0f64; 6]; 6]; 2];
        let mut j_v = [[[0.0f64; 6]; 6]; 2];
        let mut j_t = [[[0.0f64; 6]; 6]; 2];
        let mut j_c = [[[0.0f64; 6]; 6]; 2];
        let mut adv = [[0.0f64; 6]; 4];

        for ep in element_points(&coords) {
            let w = ep.w_det;
            let mut uq = 0.0;
            let mut vq = 0.0;
            for k in 0..6 {
                uq += ep.n2[k] * state.u[nodes[k]];
                vq += ep.n2[k] * state.v[nodes[k]];
            }
            for i in 0..6 {
                let ni = ep.n2[i];
                let gi = ep.grad2[i];
                for j in 0..6 {
                    let nj = ep.n2[j];
                    let gj = ep.grad2[j];
                    k2[i][j] += w * (gi[0] * gj[0] + gi[1] * gj[1]);
                    m2[i][j] += w * ni * nj;
                    n_adv[i][j] += w * ni * (uq * gj[0] + vq * gj[1]);
                }
                for j in 0..3 {
                    let qj = ep.n1[j];
                    gx[i][j] += -w * gi[0] * qj;
                    gy[i][j] += -w * gi[1] * qj;
                }
            }
            for i in 0..3 {
                let qi = ep.n1[i];
                for j in 0..6 {
                    let gj = ep.grad2[j];
                    dx[i][j] += w * qi * gj[0];
                    dy[i][j] += w * qi * gj[1];
                }
            }
            if newton {
                // state gradients at this quadrature point: U, V, theta, C
                let mut gs = [[0.0f64; 2]; 4];
                for k in 0..6 {
                    let g = ep.grad2[k];
                    let vals = [
                        state.u[nodes[k]],
                        state.v[nodes[k]],
                        state.theta[nodes[k]],
                        state.conc[nodes[k]],
                    ];
                    for (f, val) in vals.iter().enumerate() {
                        gs[f][0] += g[0] * val;
                        gs[f][1] += g[1] * val;
                    }
                }
                for i in 0..6 {
                    let wni = w * ep.n2[i];
                    for j in 0..6 {
                        let f = wni * ep.n2[j];
                        for d in 0..2 {
                            j_u[d][i][j] += f * gs[0][d];
                            j_v[d][i][j] += f * gs[1][d];
                            j_t[d][i][j] += f * gs[2][d];
                            j_c[d][i][j] += f * gs[3][d];
                        }
                    }
                    for (f, a) in adv.iter_mut().enumerate() {
                        a[i] += wni * (uq * gs[f][0] + vq * gs[f][1]);
                    }
                }
            }
            if let Some(src) = sources {
                let (su, sv, st, sc) = (
                    (src.u)(ep.pos),
                    (src.v)(ep.pos),
                    (src.theta)(ep.pos),
                    (src.conc)(ep.pos),
                );
                for i in 0..6 {
                    let wni = w * ep.n2[i];
                    f_u[i] += wni * su;
                    f_v[i] += wni * sv;
                    f_t[i] += wni * st;
                    f_c[i] += wni * sc;
                }
            }
        }

        for i in 0..6 {
            let ui = dof_map.index(Field::U, nodes[i]);
            let vi = dof_map.index(Field::V, nodes[i]);
            let ti = dof_map.index(Field::Theta, nodes[i]);
            let ci = dof_map.index(Field::Conc, nodes[i]);
            for j in 0..6 {
                let a_visc = visc * k2[i][j] + n_adv[i][j];
                triplets.push((ui, dof_map.index(Field::U, nodes[j]), a_visc));
                triplets.push((
                    vi,
                    dof_map.index(Field::V, nodes[j]),
                    a_visc + lorentz * m2[i][j],
                ));
                // buoyancy moved to the left-hand side; skip the blocks
                // entirely when the coupling coefficient vanishes
                if groups.ri != 0.0 {
                    triplets.push((
                        vi,
                        dof_map.index(Field::Theta, nodes[j]),
                        -groups.ri * m2[i][j],
                    ));
                    if groups.br != 0.0 {
                        triplets.push((
                            vi,
                            dof_map.index(Field::Conc, nodes[j]),
                            -groups.ri * groups.br * m2[i][j],
                        ));
                    }
                }
                triplets.push((
                    ti,
                    dof_map.index(Field::Theta, nodes[j]),
                    kappa_t * k2[i][j] + n_adv[i][j],
                ));
                triplets.push((
                    ci,
                    dof_map.index(Field::Conc, nodes[j]),
                    kappa_c * k2[i][j] + n_adv[i][j],
                ));
                if newton {
                    let uj = dof_map.index(Field::U, nodes[j]);
                    let vj = dof_map.index(Field::V, nodes[j]);
                    triplets.push((ui, uj, j_u[0][i][j]));
                    triplets.push((ui, vj, j_u[1][i][j]));
                    triplets.push((vi, uj, j_v[0][i][j]));
                    triplets.push((vi, vj, j_v[1][i][j]));
                    triplets.push((ti, uj, j_t[0][i][j]));
                    triplets.push((ti, vj, j_t[1][i][j]));
                    triplets.push((ci, uj, j_c[0][i][j]));
                    triplets.push((ci, vj, j_c[1][i][j]));
                }
            }
            for j in 0..3 {
                let pj = dof_map.index(Field::P, pverts[j]);
                triplets.push((ui, pj, gx[i][j]));
                triplets.push((vi, pj, gy[i][j]));
            }
            rhs[ui] += f_u[i];
            rhs[vi] += f_v[i];
            rhs[ti] += f_t[i];
            rhs[ci] += f_c[i];
            if newton {
                // J x = J x_old - F(x_old): the advection-derivative terms
                // applied to the old state land on the right-hand side
                rhs[ui] += adv[0][i];
                rhs[vi] += adv[1][i];
                rhs[ti] += adv[2][i];
                rhs[ci] += adv[3][i];
            }
        }
        for i in 0..3 {
            let pi = dof_map.index(Field::P, pverts[i]);
            for j in 0..6 {
                triplets.push((pi, dof_map.index(Field::U, nodes[j]), dx[i][j]));
                triplets.push((pi, dof_map.index(Field::V, nodes[j]), dy[i][j]));
            }
        }
    }

    Ok(DiscreteSystem {
        dof_map,
        triplets,
        rhs,
        constraints: vec![None; total],
        constrained: false,
    })
}

/// Dirichlet constraints per quadratic node, resolved across tag corners.
pub fn node_constraints(
    mesh: &Mesh,
    bcs: &BcTable,
) -> Result<HashMap<usize, [Option<f64>; 4]>, AssemblyError> {
    // per node: best (priority, bc) for velocity and per-scalar choices
    let mut plan: HashMap<usize, NodePlan> = HashMap::new();
    for be in &mesh.boundary_edges {
        let bc = bcs.get(be.tag).ok_or(AssemblyError::MissingBc(be.tag))?;
        let prio = bcs.priority(be.tag);
        let (a, m, b) = mesh.boundary_edge_nodes(be);
        for node in [a, m, b] {
            let entry = plan.entry(node).or_default();
            entry.consider(prio, bc);
        }
    }
    let mut out = HashMap::with_capacity(plan.len());
    for (node, entry) in plan {
        let p = mesh.node(node);
        out.insert(node, entry.resolve(p));
    }
    Ok(out)
}

#[derive(Default)]
struct NodePlan {
    // (stationary-first, declaration order) for the velocity pair
    velocity: Option<((bool, usize), (BcValue, BcValue))>,
    theta: Option<(usize, BcValue)>,
    conc: Option<(usize, BcValue)>,
}

impl NodePlan {
    fn consider(&mut self, prio: usize, bc: &BoundaryCondition) {
        if let Some(vel) = &bc.velocity {
            // moving walls lose corners to stationary ones
            let key = (!bc.is_stationary(), prio);
            if self.velocity.as_ref().map_or(true, |(k, _)| key < *k) {
                self.velocity = Some((key, vel.clone()));
            }
        }
        if let Some(th) = &bc.theta {
            if self.theta.as_ref().map_or(true, |(k, _)| prio < *k) {
                self.theta = Some((prio, th.clone()));
            }
        }
        if let Some(c) = &bc.conc {
            if self.conc.as_ref().map_or(true, |(k, _)| prio < *k) {
                self.conc = Some((prio, c.clone()));
            }
        }
    }

    /// Values ordered (U, V, theta, C); `None` leaves the dof free.
    fn resolve(&self, p: Point) -> [Option<f64>; 4] {
        let (u, v) = match &self.velocity {
            Some((_, (u, v))) => (Some(u.eval(p)), Some(v.eval(p))),
            None => (None, None),
        };
        [
            u,
            v,
            self.theta.as_ref().map(|(_, t)| t.eval(p)),
            self.conc.as_ref().map(|(_, c)| c.eval(p)),
        ]
    }
}

/// Replace constrained rows by identity rows carrying the Dirichlet values,
/// and pin one pressure dof to zero (the velocity problem is pure Dirichlet,
/// so pressure has a one-dimensional null space).
pub fn apply_boundary_conditions(
    mut system: DiscreteSystem,
    mesh: &Mesh,
    bcs: &BcTable,
) -> Result<DiscreteSystem, AssemblyError> {
    let dof_map = system.dof_map;
    let per_node = node_constraints(mesh, bcs)?;
    for (&node, values) in &per_node {
        let fields = [Field::U, Field::V, Field::Theta, Field::Conc];
        for (f, val) in fields.iter().zip(values) {
            if let Some(g) = val {
                system.constraints[dof_map.index(*f, node)] = Some(*g);
            }
        }
    }
    system.constraints[dof_map.index(Field::P, pressure_pin_vertex(mesh))] = Some(0.0);

    let constraints = &system.constraints;
    system
        .triplets
        .retain(|&(r, _, _)| constraints[r].is_none());
    for (dof, c) in system.constraints.iter().enumerate() {
        if let Some(g) = c {
            system.triplets.push((dof, dof, 1.0));
            system.rhs[dof] = *g;
        }
    }
    system.constrained = true;
    Ok(system)
}

/// Deterministic gauge choice: the bottom-left-most corner vertex.
pub fn pressure_pin_vertex(mesh: &Mesh) -> usize {
    let mut best = 0;
    for (i, p) in mesh.vertices.iter().enumerate() {
        let q = mesh.vertices[best];
        if (p.y, p.x) < (q.y, q.x) {
            best = i;
        }
    }
    best
}

/// Nonlinear residual L2 norms per equation, evaluated with `state` as both
/// the linearization point and the candidate solution. Constrained rows are
/// excluded (Dirichlet mismatch is a separate diagnostic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    pub continuity: f64,
    pub u_momentum: f64,
    pub v_momentum: f64,
    pub energy: f64,
    pub species: f64,
}

pub fn residual_norms(
    mesh: &Mesh,
    groups: &DimensionlessGroups,
    bcs: &BcTable,
    state: &Fields,
) -> Result<ResidualNorms, AssemblyError> {
    residual_norms_with_sources(mesh, groups, bcs, state, None)
}

pub fn residual_norms_with_sources(
    mesh: &Mesh,
    groups: &DimensionlessGroups,
    bcs: &BcTable,
    state: &Fields,
    sources: Option<&SourceSet>,
) -> Result<ResidualNorms, AssemblyError> {
    let system = assemble_with_sources(mesh, groups, state, sources)?;
    let dof_map = system.dof_map;
    let x = state.to_vector(&dof_map);
    let ax = system.apply(&x);
    let per_node = node_constraints(mesh, bcs)?;
    let mut constrained = vec![false; dof_map.total()];
    for (&node, values) in &per_node {
        for (f, val) in [Field::U, Field::V, Field::Theta, Field::Conc]
            .iter()
            .zip(values)
        {
            if val.is_some() {
                constrained[dof_map.index(*f, node)] = true;
            }
        }
    }
    constrained[dof_map.index(Field::P, pressure_pin_vertex(mesh))] = true;
    let norm = |field: Field| -> f64 {
        dof_map.range(field)
            .filter(|&d| !constrained[d])
            .map(|d| {
                let r = ax[d] - system.rhs[d];
                r * r
            })
            .sum::<f64>()
            .sqrt()
    };
    Ok(ResidualNorms {
        continuity: norm(Field::P),
        u_momentum: norm(Field::U),
        v_momentum: norm(Field::V),
        energy: norm(Field::Theta),
        species: norm(Field::Conc),
    })
}

/// Root-sum-square mismatch between `state` and its Dirichlet data.
pub fn dirichlet_violation(
    mesh: &Mesh,
    bcs: &BcTable,
    state: &Fields,
) -> Result<f64, AssemblyError> {
    let per_node = node_constraints(mesh, bcs)?;
    let mut s = 0.0;
    for (&node, values) in &per_node {
        let actual = [
            state.u[node],
            state.v[node],
            state.theta[node],
            state.conc[node],
        ];
        for (a, g) in actual.iter().zip(values) {
            if let Some(g) = g {
                s += (a - g) * (a - g);
            }
        }
    }
    Ok(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::mesh::structured_unit_square;
    use basis::{element_point, TRI_QUADRATURE};

    fn unit_groups() -> DimensionlessGroups {
        DimensionlessGroups {
            re: 1.0,
            pr: 1.0,
            ri: 0.0,
            ha: 0.0,
            br: 0.0,
            le: 1.0,
        }
    }

    #[test]
    fn nondimensionalize_unit_plugins() {
        let base = PhysicalProperties {
            rho: 1.0,
            mu: 1.0,
            k: 1.0,
            c_p: 1.0,
            mass_diffusivity: 1.0,
            g: 1.0,
            beta_t: 1.0,
            beta_c: 1.0,
            sigma: 1.0,
            b0: 1.0,
            u0: 1.0,
            length: 1.0,
            t_hot: 1.0,
            t_cold: 0.0,
            c_hot: 1.0,
            c_cold: 0.0,
        };
        let g = nondimensionalize(&base).unwrap();
        assert_eq!(g.ha, 1.0);
        assert_eq!(g.re, 1.0);

        let no_field = PhysicalProperties { b0: 0.0, ..base };
        assert_eq!(nondimensionalize(&no_field).unwrap().ha, 0.0);

        let ri_case = PhysicalProperties {
            g: 10.0,
            beta_t: 0.1,
            ..base
        };
        assert!((nondimensionalize(&ri_case).unwrap().ri - 1.0).abs() < 1e-15);

        let broken = PhysicalProperties { mu: 0.0, ..base };
        let err = nondimensionalize(&broken).unwrap_err();
        assert!(err.to_string().contains("mu"), "{err}");
    }

    /// The P1 diffusion matrix on the unit right triangle is the classic
    /// 0.5 * [[2,-1,-1],[-1,1,0],[-1,0,1]] stencil; the same quadrature and
    /// geometry machinery must reproduce it exactly.
    #[test]
    fn p1_stiffness_on_unit_right_triangle() {
        let coords = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.0),
            Point::new(0.5, 0.5),
            Point::new(0.0, 0.5),
        ];
        let mut k = [[0.0f64; 3]; 3];
        for &(xi, eta, w) in &TRI_QUADRATURE {
            let ep = element_point(&coords, xi, eta, w);
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] += ep.w_det
                        * (ep.grad1[i][0] * ep.grad1[j][0] + ep.grad1[i][1] * ep.grad1[j][1]);
                }
            }
        }
        let expect = [
            [1.0, -0.5, -0.5],
            [-0.5, 0.5, 0.0],
            [-0.5, 0.0, 0.5],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (k[i][j] - expect[i][j]).abs() < 1e-14,
                    "K[{i}][{j}] = {}",
                    k[i][j]
                );
            }
        }
    }

    #[test]
    fn zero_state_gives_symmetric_velocity_blocks() {
        let mesh = structured_unit_square(3);
        let state = Fields::zeros(&mesh);
        let sys = assemble_picard_system(&mesh, &unit_groups(), &state).unwrap();
        let a = sys.dense();
        let r = sys.dof_map.range(Field::U);
        for i in r.clone() {
            for j in r.clone() {
                assert!(
                    (a[i][j] - a[j][i]).abs() < 1e-13,
                    "U block not symmetric at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn lorentz_term_is_scaled_v_mass_matrix() {
        let mesh = structured_unit_square(3);
        let state = Fields::zeros(&mesh);
        let g0 = DimensionlessGroups { ha: 0.0, re: 100.0, ..unit_groups() };
        let g1 = DimensionlessGroups { ha: 10.0, re: 100.0, ..unit_groups() };
        let a0 = assemble_picard_system(&mesh, &g0, &state).unwrap();
        let a1 = assemble_picard_system(&mesh, &g1, &state).unwrap();
        let d0 = a0.dense();
        let d1 = a1.dense();
        let dof = a0.dof_map;
        // independently computed P2 mass matrix
        let nq = dof.n_quad;
        let mut mass = vec![vec![0.0; nq]; nq];
        for t in 0..mesh.num_triangles() {
            let nodes = mesh.element_nodes(t);
            let coords = std::array::from_fn(|k| mesh.node(nodes[k]));
            for &(xi, eta, w) in &TRI_QUADRATURE {
                let ep = element_point(&coords, xi, eta, w);
                for i in 0..6 {
                    for j in 0..6 {
                        mass[nodes[i]][nodes[j]] += ep.w_det * ep.n2[i] * ep.n2[j];
                    }
                }
            }
        }
        // Ha = 10, Re = 100 puts exactly +1.0 * M into the V-V block
        for i in 0..nq {
            for j in 0..nq {
                let vi = dof.index(Field::V, i);
                let vj = dof.index(Field::V, j);
                let diff = d1[vi][vj] - d0[vi][vj];
                assert!(
                    (diff - mass[i][j]).abs() < 1e-13,
                    "Lorentz mismatch at ({i},{j}): {diff} vs {}",
                    mass[i][j]
                );
                // U-U block must be untouched by Ha
                let ui = dof.index(Field::U, i);
                let uj = dof.index(Field::U, j);
                assert_eq!(d1[ui][uj], d0[ui][uj]);
            }
        }
    }

    #[test]
    fn buoyancy_coupling_ratio_is_br() {
        let mesh = structured_unit_square(2);
        let state = Fields::zeros(&mesh);
        let g = DimensionlessGroups {
            ri: 2.5,
            br: 20.0,
            ..unit_groups()
        };
        let sys = assemble_picard_system(&mesh, &g, &state).unwrap();
        let a = sys.dense();
        let dof = sys.dof_map;
        let mut seen = 0;
        for i in 0..dof.n_quad {
            for j in 0..dof.n_quad {
                let vt = a[dof.index(Field::V, i)][dof.index(Field::Theta, j)];
                let vc = a[dof.index(Field::V, i)][dof.index(Field::Conc, j)];
                if vt.abs() > 1e-14 {
                    assert!((vc / vt - g.br).abs() < 1e-10);
                    seen += 1;
                }
            }
        }
        assert!(seen > 0, "no buoyancy entries found");
    }

    /// With a divergence-free frozen velocity that is exactly representable
    /// (linear), the advection block restricted to interior nodes is
    /// skew-symmetric up to round-off.
    #[test]
    fn advection_block_skew_symmetry() {
        let mesh = structured_unit_square(4);
        let mut state = Fields::zeros(&mesh);
        for n in 0..mesh.num_nodes() {
            let p = mesh.node(n);
            state.u[n] = p.y;
            state.v[n] = p.x;
        }
        let sys0 = assemble_picard_system(&mesh, &unit_groups(), &Fields::zeros(&mesh)).unwrap();
        let sys1 = assemble_picard_system(&mesh, &unit_groups(), &state).unwrap();
        let a0 = sys0.dense();
        let a1 = sys1.dense();
        let dof = sys1.dof_map;
        let boundary: std::collections::HashSet<usize> = mesh
            .boundary_edges
            .iter()
            .flat_map(|be| {
                let (a, m, b) = mesh.boundary_edge_nodes(be);
                [a, m, b]
            })
            .collect();
        for i in 0..dof.n_quad {
            for j in 0..dof.n_quad {
                if boundary.contains(&i) || boundary.contains(&j) {
                    continue;
                }
                let ui = dof.index(Field::U, i);
                let uj = dof.index(Field::U, j);
                let n_ij = a1[ui][uj] - a0[ui][uj];
                let n_ji = a1[uj][ui] - a0[uj][ui];
                assert!(
                    (n_ij + n_ji).abs() < 1e-12,
                    "advection not skew at ({i},{j}): {n_ij} + {n_ji}"
                );
            }
        }
    }

    #[test]
    fn boundary_constraints_follow_the_tag_table() {
        let mesh = structured_unit_square(3);
        let state = Fields::zeros(&mesh);
        let sys = assemble_picard_system(&mesh, &unit_groups(), &state).unwrap();
        let sys = apply_boundary_conditions(sys, &mesh, &BcTable::cavity()).unwrap();
        let dof = sys.dof_map;
        // lid-sidewall corner: the stationary side wall wins U = 0
        let corner = mesh
            .vertices
            .iter()
            .position(|p| p.dist(Point::new(0.0, 1.0)) < 1e-12)
            .unwrap();
        assert_eq!(sys.constraints[dof.index(Field::U, corner)], Some(0.0));
        // a lid-interior node carries the sliding speed
        let lid_mid = (0..mesh.num_nodes())
            .find(|&n| {
                let p = mesh.node(n);
                (p.y - 1.0).abs() < 1e-12 && p.x > 0.2 && p.x < 0.8
            })
            .unwrap();
        assert_eq!(sys.constraints[dof.index(Field::U, lid_mid)], Some(1.0));
        // lid leaves theta free
        assert_eq!(sys.constraints[dof.index(Field::Theta, lid_mid)], None);
        // interior nodes unconstrained, rows untouched
        let interior = (0..mesh.num_nodes())
            .find(|&n| {
                let p = mesh.node(n);
                p.x > 0.2 && p.x < 0.8 && p.y > 0.2 && p.y < 0.8
            })
            .unwrap();
        for f in [Field::U, Field::V, Field::Theta, Field::Conc] {
            assert_eq!(sys.constraints[dof.index(f, interior)], None);
        }
        // constrained rows are identity rows
        let a = sys.dense();
        for (dof_idx, c) in sys.constraints.iter().enumerate() {
            if c.is_some() {
                for (j, row_val) in a[dof_idx].iter().enumerate() {
                    let expect = if j == dof_idx { 1.0 } else { 0.0 };
                    assert_eq!(*row_val, expect);
                }
            }
        }
    }

    #[test]
    fn heater_nodes_get_hot_dirichlet_values() {
        use crate::geometry::{CavityGeometry, Domain};
        use crate::mesh::{generate_mesh, Sizing};
        let geom = CavityGeometry::default();
        let mesh = generate_mesh(&geom, Sizing::graded(0.2, 0.1)).unwrap();
        let state = Fields::zeros(&mesh);
        let g = DimensionlessGroups { re: 100.0, pr: 7.0, ri: 1.0, ha: 50.0, br: 20.0, le: 20.0 };
        let sys = assemble_picard_system(&mesh, &g, &state).unwrap();
        let sys = apply_boundary_conditions(sys, &mesh, &BcTable::cavity()).unwrap();
        let dof = sys.dof_map;
        let nodes = mesh.nodes_with_tag(crate::geometry::BoundaryTag::HeaterRight);
        assert!(!nodes.is_empty());
        for n in nodes {
            // interior heater-arc nodes away from the bottom wall belong to
            // the heater alone
            if mesh.node(n).y > 1e-6 {
                assert_eq!(sys.constraints[dof.index(Field::U, n)], Some(0.0));
                assert_eq!(sys.constraints[dof.index(Field::V, n)], Some(0.0));
                assert_eq!(sys.constraints[dof.index(Field::Theta, n)], Some(1.0));
                assert_eq!(sys.constraints[dof.index(Field::Conc, n)], Some(1.0));
            }
        }
        let _ = geom.fluid_area();
    }

    #[test]
    fn residual_norms_behave() {
        let mesh = structured_unit_square(3);
        let g = unit_groups();
        let bcs = BcTable::cavity();
        let zero = Fields::zeros(&mesh);
        let r0 = residual_norms(&mesh, &g, &bcs, &zero).unwrap();
        // zero interior state has zero PDE residual (no sources), finite by definition
        assert!(r0.u_momentum.is_finite());
        assert!(r0.continuity < 1e-14);
        // scaling V changes the V-momentum norm
        let mut scaled = zero.clone();
        for n in 0..mesh.num_nodes() {
            let p = mesh.node(n);
            scaled.v[n] = 2.0 * p.x * (1.0 - p.x) * p.y;
        }
        let r1 = residual_norms(&mesh, &g, &bcs, &scaled).unwrap();
        assert!(r1.v_momentum > 1e-6);
        // Dirichlet violation reported separately
        assert!(dirichlet_violation(&mesh, &bcs, &zero).unwrap() > 0.9);
    }
}
