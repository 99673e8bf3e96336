//! Post-processing of converged solutions: local and average Nusselt numbers
//! along heated boundaries, the stream function, boundary heat fluxes, field
//! export, and point sampling.
//!
//! Boundary quantities use one-sided isoparametric element gradients
//! evaluated from the fluid side; on curved heater edges the quadratic edge
//! geometry (mid-node on the arc) carries the curvature.

use crate::assembly::basis::{element_point, element_points, EDGE_QUADRATURE};
use crate::geometry::{BoundaryTag, Point};
use crate::mesh::{BoundaryEdge, Mesh};
use crate::solver::{solve_sparse, FieldSolution, SolverError};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PostError {
    #[error("{0:?} is not a heated boundary (expected HeaterLeft, HeaterRight or Obstacle)")]
    BadTag(BoundaryTag),
    #[error("empty Nusselt trace")]
    EmptyTrace,
    #[error("boundary tag {0:?} has no edges in this mesh")]
    MissingBoundary(BoundaryTag),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const HEATED_TAGS: [BoundaryTag; 3] = [
    BoundaryTag::HeaterLeft,
    BoundaryTag::HeaterRight,
    BoundaryTag::Obstacle,
];

/// Local Nusselt trace along one heated boundary: arc-length coordinate and
/// the temperature-gradient magnitude at each boundary node.
#[derive(Debug, Clone)]
pub struct NusseltTrace {
    pub tag: BoundaryTag,
    pub samples: Vec<(f64, f64)>,
    /// True arc length of the boundary (trapezoid perimeter for the
    /// obstacle), used as the averaging normalizer.
    pub arc_length: f64,
}

/// Nusselt summary for all heated boundaries of a solution.
#[derive(Debug, Clone)]
pub struct NusseltReport {
    pub traces: Vec<NusseltTrace>,
}

impl NusseltReport {
    pub fn average(&self, tag: BoundaryTag) -> Option<f64> {
        self.traces
            .iter()
            .find(|t| t.tag == tag)
            .map(|t| average_nusselt(&t.samples, t.arc_length).expect("nonempty trace"))
    }

    pub fn trace(&self, tag: BoundaryTag) -> Option<&NusseltTrace> {
        self.traces.iter().find(|t| t.tag == tag)
    }
}

/// Compute traces for every heated boundary present in the mesh.
pub fn nusselt_report(solution: &FieldSolution) -> Result<NusseltReport, PostError> {
    let mut traces = Vec::new();
    for tag in HEATED_TAGS {
        if solution.mesh.boundary_edges.iter().any(|be| be.tag == tag) {
            traces.push(local_nusselt(solution, tag)?);
        }
    }
    Ok(NusseltReport { traces })
}

/// Reference coordinates of the six element nodes.
const NODE_REF: [(f64, f64); 6] = [
    (0.0, 0.0),
    (1.0, 0.0),
    (0.0, 1.0),
    (0.5, 0.0),
    (0.5, 0.5),
    (0.0, 0.5),
];

/// Reference-space path of local edge `k`: point and tangent at parameter t.
fn edge_ref_path(k: usize, t: f64) -> ((f64, f64), (f64, f64)) {
    match k {
        0 => ((t, 0.0), (1.0, 0.0)),
        1 => ((1.0 - t, t), (-1.0, 1.0)),
        _ => ((0.0, 1.0 - t), (0.0, -1.0)),
    }
}

/// Physical tangent vector d(position)/dt along a local edge at parameter t.
fn edge_tangent(mesh: &Mesh, be: &BoundaryEdge, t: f64) -> (Point, Point) {
    let nodes = mesh.element_nodes(be.triangle);
    let coords: [Point; 6] = std::array::from_fn(|k| mesh.node(nodes[k]));
    let ((xi, eta), (dxi, deta)) = edge_ref_path(be.local_edge, t);
    let ep = element_point(&coords, xi, eta, 1.0);
    let j = ep.jacobian;
    let tangent = Point::new(
        j[0][0] * dxi + j[0][1] * deta,
        j[1][0] * dxi + j[1][1] * deta,
    );
    (ep.pos, tangent)
}

/// Isoparametric length of the sub-segment of a boundary edge between
/// parameters t0 and t1.
fn edge_sublength(mesh: &Mesh, be: &BoundaryEdge, t0: f64, t1: f64) -> f64 {
    EDGE_QUADRATURE
        .iter()
        .map(|&(q, w)| {
            let t = t0 + (t1 - t0) * q;
            let (_, tangent) = edge_tangent(mesh, be, t);
            w * (t1 - t0) * tangent.norm()
        })
        .sum()
}

/// Gradient of a quadratic nodal field inside element `t` at reference
/// coordinates (xi, eta).
fn field_gradient_at(mesh: &Mesh, t: usize, xi: f64, eta: f64, field: &[f64]) -> (f64, f64) {
    let nodes = mesh.element_nodes(t);
    let coords: [Point; 6] = std::array::from_fn(|k| mesh.node(nodes[k]));
    let ep = element_point(&coords, xi, eta, 1.0);
    let mut gx = 0.0;
    let mut gy = 0.0;
    for k in 0..6 {
        gx += ep.grad2[k][0] * field[nodes[k]];
        gy += ep.grad2[k][1] * field[nodes[k]];
    }
    (gx, gy)
}

/// Ordered chain of boundary edges sharing one tag. Each entry is the edge
/// plus a flag telling whether the walk traverses it against the triangle's
/// local orientation.
struct BoundaryChain {
    edges: Vec<(BoundaryEdge, bool)>,
    closed: bool,
}

fn chain_boundary(mesh: &Mesh, tag: BoundaryTag) -> Result<BoundaryChain, PostError> {
    let edges: Vec<BoundaryEdge> = mesh
        .boundary_edges
        .iter()
        .copied()
        .filter(|be| be.tag == tag)
        .collect();
    if edges.is_empty() {
        return Err(PostError::MissingBoundary(tag));
    }
    // endpoint -> incident edge list
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, be) in edges.iter().enumerate() {
        let (a, b) = mesh.boundary_edge_corner_ids(be);
        incident.entry(a).or_default().push(i);
        incident.entry(b).or_default().push(i);
    }
    let mut ends: Vec<usize> = incident
        .iter()
        .filter(|(_, es)| es.len() == 1)
        .map(|(&v, _)| v)
        .collect();
    let closed = ends.is_empty();
    let start_vertex = if closed {
        // deterministic: lexicographically smallest corner
        let mut vs: Vec<usize> = incident.keys().copied().collect();
        vs.sort_by(|&a, &b| {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            (pa.x, pa.y).partial_cmp(&(pb.x, pb.y)).unwrap()
        });
        vs[0]
    } else {
        ends.sort_by(|&a, &b| {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            (pa.x, pa.y).partial_cmp(&(pb.x, pb.y)).unwrap()
        });
        ends[0]
    };
    let mut used = vec![false; edges.len()];
    let mut walk = Vec::with_capacity(edges.len());
    let mut at = start_vertex;
    loop {
        let Some(&next) = incident[&at].iter().find(|&&e| !used[e]) else {
            break;
        };
        used[next] = true;
        let (a, b) = mesh.boundary_edge_corner_ids(&edges[next]);
        let reversed = at == b;
        walk.push((edges[next], reversed));
        at = if reversed { a } else { b };
        if closed && at == start_vertex {
            break;
        }
    }
    if walk.len() != edges.len() {
        // boundary with this tag is not a single chain; keep the walked part
        // but report the inconsistency loudly
        return Err(PostError::MissingBoundary(tag));
    }
    Ok(BoundaryChain { edges: walk, closed })
}

/// Local Nusselt number |grad theta| along a heated boundary, sampled at the
/// boundary nodes (corner samples shared by two edges are averaged).
pub fn local_nusselt(solution: &FieldSolution, tag: BoundaryTag) -> Result<NusseltTrace, PostError> {
    if !HEATED_TAGS.contains(&tag) {
        return Err(PostError::BadTag(tag));
    }
    trace_gradient_magnitude(&solution.mesh, &solution.fields.theta, tag)
}

fn trace_gradient_magnitude(
    mesh: &Mesh,
    field: &[f64],
    tag: BoundaryTag,
) -> Result<NusseltTrace, PostError> {
    let chain = chain_boundary(mesh, tag)?;
    // gradient magnitude per node, averaged over incident tagged elements
    let mut acc: HashMap<usize, (f64, u32)> = HashMap::new();
    for (be, _) in &chain.edges {
        let nodes = mesh.element_nodes(be.triangle);
        let (a, m, b) = mesh.boundary_edge_nodes(be);
        for node in [a, m, b] {
            let local = nodes.iter().position(|&n| n == node).expect("node in element");
            let (xi, eta) = NODE_REF[local];
            let (gx, gy) = field_gradient_at(mesh, be.triangle, xi, eta, field);
            let e = acc.entry(node).or_insert((0.0, 0));
            e.0 += gx.hypot(gy);
            e.1 += 1;
        }
    }
    let nu = |node: usize| {
        let (sum, count) = acc[&node];
        sum / count as f64
    };

    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut s = 0.0;
    for (i, (be, reversed)) in chain.edges.iter().enumerate() {
        let (a, m, b) = mesh.boundary_edge_nodes(be);
        let (first, last) = if *reversed { (b, a) } else { (a, b) };
        let (len_first_half, len_second_half) = {
            let l0 = edge_sublength(mesh, be, 0.0, 0.5);
            let l1 = edge_sublength(mesh, be, 0.5, 1.0);
            if *reversed {
                (l1, l0)
            } else {
                (l0, l1)
            }
        };
        if i == 0 {
            samples.push((s, nu(first)));
        }
        s += len_first_half;
        samples.push((s, nu(m)));
        s += len_second_half;
        samples.push((s, nu(last)));
    }
    if chain.closed {
        // close the loop explicitly so trapezoidal averaging wraps around
        debug_assert!(samples.first().map(|f| f.1) == samples.last().map(|l| l.1));
    }
    Ok(NusseltTrace {
        tag,
        samples,
        arc_length: s,
    })
}

/// Composite trapezoidal integral of the trace divided by the arc length.
pub fn average_nusselt(trace: &[(f64, f64)], arc_length: f64) -> Result<f64, PostError> {
    if trace.len() < 2 {
        return Err(PostError::EmptyTrace);
    }
    let mut integral = 0.0;
    for w in trace.windows(2) {
        let (s0, n0) = w[0];
        let (s1, n1) = w[1];
        debug_assert!(s1 >= s0, "trace coordinates must increase");
        integral += 0.5 * (n0 + n1) * (s1 - s0);
    }
    Ok(integral / arc_length)
}

/// Signed conductive heat flux through a tagged boundary,
/// `int (grad theta . n) ds` with the outward normal.
pub fn boundary_heat_flux(solution: &FieldSolution, tag: BoundaryTag) -> Result<f64, PostError> {
    let mesh = &solution.mesh;
    let theta = &solution.fields.theta;
    let mut total = 0.0;
    let mut any = false;
    for be in &mesh.boundary_edges {
        if be.tag != tag {
            continue;
        }
        any = true;
        for &(q, w) in &EDGE_QUADRATURE {
            let ((xi, eta), _) = edge_ref_path(be.local_edge, q);
            let (gx, gy) = field_gradient_at(mesh, be.triangle, xi, eta, theta);
            let (_, tangent) = edge_tangent(mesh, be, q);
            // CCW elements: outward normal is the tangent rotated -90 deg
            let n = Point::new(tangent.y, -tangent.x);
            total += w * (gx * n.x + gy * n.y);
        }
    }
    if !any {
        return Err(PostError::MissingBoundary(tag));
    }
    Ok(total)
}

/// Net conductive flux over the whole boundary, normalized by the heated
/// inflow; vanishes under refinement for the source-free energy equation.
pub fn heat_balance_residual(solution: &FieldSolution) -> Result<f64, PostError> {
    let mesh = &solution.mesh;
    let mut tags: Vec<BoundaryTag> = mesh.boundary_edges.iter().map(|be| be.tag).collect();
    tags.sort_unstable();
    tags.dedup();
    let mut net = 0.0;
    let mut inflow = 0.0;
    for tag in tags {
        let f = boundary_heat_flux(solution, tag)?;
        net += f;
        if HEATED_TAGS.contains(&tag) {
            inflow += f.abs();
        }
    }
    Ok(net.abs() / inflow.max(1e-300))
}

/// L2 norm of the discrete velocity divergence.
pub fn divergence_norm(solution: &FieldSolution) -> f64 {
    let mesh = &solution.mesh;
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let nodes = mesh.element_nodes(t);
        let coords: [Point; 6] = std::array::from_fn(|k| mesh.node(nodes[k]));
        for ep in element_points(&coords) {
            let mut div = 0.0;
            for k in 0..6 {
                div += ep.grad2[k][0] * solution.fields.u[nodes[k]]
                    + ep.grad2[k][1] * solution.fields.v[nodes[k]];
            }
            total += ep.w_det * div * div;
        }
    }
    total.sqrt()
}

/// Overshoot of theta and concentration beyond the Dirichlet range [0, 1].
pub fn scalar_overshoot(solution: &FieldSolution) -> (f64, f64) {
    let over = |vals: &[f64]| {
        vals.iter().fold(0.0f64, |m, &v| {
            m.max(v - 1.0).max(-v)
        })
    };
    (
        over(&solution.fields.theta),
        over(&solution.fields.conc),
    )
}

/// Stream function with psi = 0 on the full boundary (outer walls and
/// obstacle). In the multiply-connected cavity this gauge distorts
/// streamlines only if the net circulation around the obstacle is nonzero;
/// [`psi_velocity_mismatch`] reports the reconstruction quality.
pub fn stream_function(solution: &FieldSolution) -> Result<Vec<f64>, PostError> {
    stream_function_on(solution, &BoundaryTag::ALL)
}

/// Stream function with psi = 0 on the given tags only; other boundary
/// pieces carry the natural inhomogeneous Neumann data from the velocity.
pub fn stream_function_on(
    solution: &FieldSolution,
    dirichlet_tags: &[BoundaryTag],
) -> Result<Vec<f64>, PostError> {
    let mesh = &solution.mesh;
    let nq = mesh.num_nodes();
    let fields = &solution.fields;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.num_triangles() * 36);
    let mut rhs = vec![0.0; nq];

    for t in 0..mesh.num_triangles() {
        let nodes = mesh.element_nodes(t);
        let coords: [Point; 6] = std::array::from_fn(|k| mesh.node(nodes[k]));
        for ep in element_points(&coords) {
            // vorticity dV/dx - dU/dy from the velocity solution
            let mut omega = 0.0;
            for k in 0..6 {
                omega += ep.grad2[k][0] * fields.v[nodes[k]]
                    - ep.grad2[k][1] * fields.u[nodes[k]];
            }
            for i in 0..6 {
                rhs[nodes[i]] += ep.w_det * ep.n2[i] * omega;
                for j in 0..6 {
                    triplets.push((
                        nodes[i],
                        nodes[j],
                        ep.w_det
                            * (ep.grad2[i][0] * ep.grad2[j][0] + ep.grad2[i][1] * ep.grad2[j][1]),
                    ));
                }
            }
        }
    }

    // natural boundary term: d psi / dn = U n_y - V n_x on non-Dirichlet walls
    for be in &mesh.boundary_edges {
        if dirichlet_tags.contains(&be.tag) {
            continue;
        }
        let nodes = mesh.element_nodes(be.triangle);
        for &(q, w) in &EDGE_QUADRATURE {
            let ((xi, eta), _) = edge_ref_path(be.local_edge, q);
            let coords: [Point; 6] = std::array::from_fn(|k| mesh.node(nodes[k]));
            let ep = element_point(&coords, xi, eta, 1.0);
            let (_, tangent) = edge_tangent(mesh, be, q);
            let n = Point::new(tangent.y, -tangent.x) * (1.0 / tangent.norm());
            let mut u = 0.0;
            let mut v = 0.0;
            for k in 0..6 {
                u += ep.n2[k] * fields.u[nodes[k]];
                v += ep.n2[k] * fields.v[nodes[k]];
            }
            let flux = u * n.y - v * n.x;
            for k in 0..6 {
                rhs[nodes[k]] += w * tangent.norm() * ep.n2[k] * flux;
            }
        }
    }

    // Dirichlet rows
    let mut constrained = vec![false; nq];
    for be in &mesh.boundary_edges {
        if !dirichlet_tags.contains(&be.tag) {
            continue;
        }
        let (a, m, b) = mesh.boundary_edge_nodes(be);
        for n in [a, m, b] {
            constrained[n] = true;
        }
    }
    if !constrained.iter().any(|&c| c) {
        // pure Neumann: fix the gauge at one reference node
        constrained[crate::assembly::pressure_pin_vertex(mesh)] = true;
    }
    triplets.retain(|&(r, _, _)| !constrained[r]);
    for (n, c) in constrained.iter().enumerate() {
        if *c {
            triplets.push((n, n, 1.0));
            rhs[n] = 0.0;
        }
    }
    Ok(solve_sparse(nq, &triplets, &rhs)?)
}

/// Relative L2 mismatch between (dpsi/dy, -dpsi/dx) and the velocity field.
pub fn psi_velocity_mismatch(solution: &FieldSolution, psi: &[f64]) -> f64 {
    let mesh = &solution.mesh;
    let mut err = 0.0;
    let mut norm = 0.0;
    for t in 0..mesh.num_triangles() {
        let nodes = mesh.element_nodes(t);
        let coords: [Point; 6] = std::array::from_fn(|k| mesh.node(nodes[k]));
        for ep in element_points(&coords) {
            let mut u = 0.0;
            let mut v = 0.0;
            let mut px = 0.0;
            let mut py = 0.0;
            for k in 0..6 {
                u += ep.n2[k] * solution.fields.u[nodes[k]];
                v += ep.n2[k] * solution.fields.v[nodes[k]];
                px += ep.grad2[k][0] * psi[nodes[k]];
                py += ep.grad2[k][1] * psi[nodes[k]];
            }
            err += ep.w_det * ((py - u) * (py - u) + (-px - v) * (-px - v));
            norm += ep.w_det * (u * u + v * v);
        }
    }
    (err / norm.max(1e-300)).sqrt()
}

/// Write the solution fields (corner-node samples) as a legacy ASCII VTK
/// unstructured grid: scalars theta, concentration, pressure, psi and the
/// velocity vector.
pub fn export_fields(
    solution: &FieldSolution,
    psi: &[f64],
    path: &Path,
) -> Result<(), PostError> {
    let mesh = &solution.mesh;
    let nv = mesh.num_vertices();
    let f = &solution.fields;
    let velocity: Vec<(f64, f64)> = (0..nv).map(|i| (f.u[i], f.v[i])).collect();
    crate::vtk::write_unstructured(
        path,
        "cavity fields",
        &mesh.vertices,
        &mesh.triangles,
        &[
            ("theta", &f.theta[..nv]),
            ("concentration", &f.conc[..nv]),
            ("pressure", &f.p[..nv]),
            ("psi", &psi[..nv]),
        ],
        &[("velocity", &velocity)],
    )?;
    Ok(())
}

/// Nu traces as CSV rows `boundary,s,Nu`.
pub fn write_trace_csv(path: &Path, report: &NusseltReport) -> Result<(), PostError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "boundary,s,Nu")?;
    for trace in &report.traces {
        for (s, nu) in &trace.samples {
            writeln!(w, "{},{:.9e},{:.9e}", trace.tag.name(), s, nu)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary CSV rows `boundary,Nu_avg,arc_length`.
pub fn write_summary_csv(path: &Path, report: &NusseltReport) -> Result<(), PostError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "boundary,Nu_avg,arc_length")?;
    for trace in &report.traces {
        let avg = average_nusselt(&trace.samples, trace.arc_length)?;
        writeln!(w, "{},{:.9e},{:.9e}", trace.tag.name(), avg, trace.arc_length)?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluate the quadratic velocity at an arbitrary point by brute-force
/// triangle location (straight-sided barycentric lookup; curved heater
/// elements are only approximate, which is fine away from the arcs).
pub fn sample_velocity(solution: &FieldSolution, p: Point) -> Option<(f64, f64)> {
    let mesh = &solution.mesh;
    let (t, xi, eta) = locate_point(mesh, p)?;
    let nodes = mesh.element_nodes(t);
    let n2 = crate::assembly::basis::p2_shape(xi, eta);
    let mut u = 0.0;
    let mut v = 0.0;
    for k in 0..6 {
        u += n2[k] * solution.fields.u[nodes[k]];
        v += n2[k] * solution.fields.v[nodes[k]];
    }
    Some((u, v))
}

fn locate_point(mesh: &Mesh, p: Point) -> Option<(usize, f64, f64)> {
    const TOL: f64 = 1e-10;
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangles[t];
        let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let det = crate::geometry::cross(pa, pb, pc);
        let l1 = crate::geometry::cross(pa, pb, p) / det; // weight of c... careful below
        let l2 = crate::geometry::cross(pb, pc, p) / det; // weight of a
        let l3 = crate::geometry::cross(pc, pa, p) / det; // weight of b
        if l1 >= -TOL && l2 >= -TOL && l3 >= -TOL {
            // barycentric (a, b, c) = (l2, l3, l1); reference xi = b, eta = c
            return Some((t, l3, l1));
        }
    }
    None
}

/// U-velocity profile along the vertical line x = `x`, at `n` evenly spaced
/// heights inside the domain.
pub fn u_profile_on_vertical_line(
    solution: &FieldSolution,
    x: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    let mesh = &solution.mesh;
    let (ymin, ymax) = mesh
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    (0..=n)
        .filter_map(|i| {
            let y = ymin + (ymax - ymin) * i as f64 / n as f64;
            sample_velocity(solution, Point::new(x, y)).map(|(u, _)| (y, u))
        })
        .collect()
}

/// V-velocity profile along the horizontal line y = `y`.
pub fn v_profile_on_horizontal_line(
    solution: &FieldSolution,
    y: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    let mesh = &solution.mesh;
    let (xmin, xmax) = mesh
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.x), hi.max(p.x))
        });
    (0..=n)
        .filter_map(|i| {
            let x = xmin + (xmax - xmin) * i as f64 / n as f64;
            sample_velocity(solution, Point::new(x, y)).map(|(_, v)| (x, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::Fields;
    use crate::mesh::{structured_rectangle, structured_unit_square, BoundaryEdge};
    use crate::solver::FieldSolution;
    use std::sync::Arc;

    fn fake_solution(mesh: Arc<Mesh>, theta: impl Fn(Point) -> f64) -> FieldSolution {
        let mut fields = Fields::zeros(&mesh);
        for n in 0..mesh.num_nodes() {
            fields.theta[n] = theta(mesh.node(n));
        }
        FieldSolution {
            mesh,
            fields,
            converged: true,
            iterations: 1,
            history: vec![],
        }
    }

    fn retag(mesh: &mut Mesh, from: BoundaryTag, to: BoundaryTag) {
        for be in &mut mesh.boundary_edges {
            if be.tag == from {
                *be = BoundaryEdge { tag: to, ..*be };
            }
        }
    }

    #[test]
    fn linear_field_gives_unit_nusselt() {
        // theta = 1 - x on a strip; the right wall plays the heated boundary
        let mut mesh = structured_rectangle(8, 2, 1.0, 0.25);
        retag(&mut mesh, BoundaryTag::RightWall, BoundaryTag::HeaterLeft);
        let sol = fake_solution(Arc::new(mesh), |p| 1.0 - p.x);
        let trace = local_nusselt(&sol, BoundaryTag::HeaterLeft).unwrap();
        assert!(!trace.samples.is_empty());
        for &(_, nu) in &trace.samples {
            assert!((nu - 1.0).abs() < 1e-12, "Nu = {nu}");
        }
        let avg = average_nusselt(&trace.samples, trace.arc_length).unwrap();
        assert!((avg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_field_gives_zero_nusselt() {
        let mut mesh = structured_unit_square(4);
        retag(&mut mesh, BoundaryTag::RightWall, BoundaryTag::HeaterRight);
        let sol = fake_solution(Arc::new(mesh), |_| 1.0);
        let trace = local_nusselt(&sol, BoundaryTag::HeaterRight).unwrap();
        for &(_, nu) in &trace.samples {
            assert!(nu.abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_field_gradient_recovered() {
        // theta = x^2 along the wall x = 1: |grad theta| = 2 exactly for P2
        let mut mesh = structured_unit_square(6);
        retag(&mut mesh, BoundaryTag::RightWall, BoundaryTag::HeaterLeft);
        let sol = fake_solution(Arc::new(mesh), |p| p.x * p.x);
        let trace = local_nusselt(&sol, BoundaryTag::HeaterLeft).unwrap();
        for &(_, nu) in &trace.samples {
            assert!((nu - 2.0).abs() < 1e-11, "Nu = {nu}");
        }
    }

    #[test]
    fn non_heated_tag_is_rejected() {
        let mesh = Arc::new(structured_unit_square(2));
        let sol = fake_solution(mesh, |_| 0.0);
        assert!(matches!(
            local_nusselt(&sol, BoundaryTag::Lid),
            Err(PostError::BadTag(_))
        ));
    }

    #[test]
    fn average_of_constant_trace_is_constant() {
        let trace = vec![(0.0, 3.5), (0.4, 3.5), (1.1, 3.5)];
        let avg = average_nusselt(&trace, 1.1).unwrap();
        assert!((avg - 3.5).abs() < 1e-14);
        assert!(matches!(
            average_nusselt(&[(0.0, 1.0)], 1.0),
            Err(PostError::EmptyTrace)
        ));
    }

    #[test]
    fn heater_arc_length_is_pi_r() {
        use crate::geometry::{CavityGeometry, Domain};
        use crate::mesh::{generate_mesh, Sizing};
        let geom = CavityGeometry::default();
        let mesh = Arc::new(generate_mesh(&geom, Sizing::graded(0.12, 0.05)).unwrap());
        let sol = fake_solution(mesh, |_| 0.0);
        for tag in [BoundaryTag::HeaterLeft, BoundaryTag::HeaterRight] {
            let trace = local_nusselt(&sol, tag).unwrap();
            let expect = std::f64::consts::PI * geom.heater_radius;
            assert!(
                (trace.arc_length - expect).abs() < 1e-5,
                "{tag:?} arc length {} vs {expect}",
                trace.arc_length
            );
        }
        let _ = geom.fluid_area();
    }

    #[test]
    fn obstacle_trace_closes_with_perimeter_normalizer() {
        use crate::geometry::{CavityGeometry, Domain};
        use crate::mesh::{generate_mesh, Sizing};
        let geom = CavityGeometry::default();
        let mesh = Arc::new(generate_mesh(&geom, Sizing::graded(0.12, 0.05)).unwrap());
        let sol = fake_solution(mesh, |p| p.x);
        let trace = local_nusselt(&sol, BoundaryTag::Obstacle).unwrap();
        let t = geom.trapezoid;
        let slant = ((t.bottom_half_width - t.top_half_width).powi(2) + t.height * t.height).sqrt();
        let perimeter = 2.0 * t.bottom_half_width + 2.0 * t.top_half_width + 2.0 * slant;
        assert!(
            (trace.arc_length - perimeter).abs() < 1e-9,
            "obstacle arc length {} vs perimeter {perimeter}",
            trace.arc_length
        );
        let _ = geom.fluid_area();
    }

    #[test]
    fn stream_function_of_uniform_flow_is_height() {
        // U = 1 everywhere, psi pinned only on the bottom: psi = y
        let mesh = Arc::new(structured_unit_square(6));
        let mut sol = fake_solution(Arc::clone(&mesh), |_| 0.0);
        for n in 0..mesh.num_nodes() {
            sol.fields.u[n] = 1.0;
        }
        let psi = stream_function_on(&sol, &[BoundaryTag::BottomAdiabatic]).unwrap();
        for n in 0..mesh.num_nodes() {
            let p = mesh.node(n);
            assert!(
                (psi[n] - p.y).abs() < 1e-9,
                "psi({}, {}) = {}",
                p.x,
                p.y,
                psi[n]
            );
        }
    }

    #[test]
    fn stream_function_of_zero_velocity_is_zero() {
        let mesh = Arc::new(structured_unit_square(4));
        let sol = fake_solution(mesh, |_| 0.0);
        let psi = stream_function(&sol).unwrap();
        assert!(psi.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn stream_function_of_rigid_rotation() {
        // U = -(y - c), V = x - c. With U = dpsi/dY and V = -dpsi/dX the
        // stream function is -((x-c)^2 + (y-c)^2)/2 up to a constant. No wall
        // is a streamline here, so the gauge is a single reference node.
        let mesh = Arc::new(structured_unit_square(8));
        let mut sol = fake_solution(Arc::clone(&mesh), |_| 0.0);
        let c = 0.5;
        for n in 0..mesh.num_nodes() {
            let p = mesh.node(n);
            sol.fields.u[n] = -(p.y - c);
            sol.fields.v[n] = p.x - c;
        }
        let psi = stream_function_on(&sol, &[]).unwrap();
        let anchor = (0..mesh.num_nodes())
            .find(|&n| mesh.node(n).dist(Point::new(c, c)) < 1e-9)
            .unwrap();
        let exact = |p: Point| -0.5 * ((p.x - c).powi(2) + (p.y - c).powi(2));
        let shift = psi[anchor] - exact(mesh.node(anchor));
        for n in 0..mesh.num_nodes() {
            let p = mesh.node(n);
            assert!(
                (psi[n] - shift - exact(p)).abs() < 1e-8,
                "psi({}, {}) = {} vs {}",
                p.x,
                p.y,
                psi[n] - shift,
                exact(p)
            );
        }
        let mismatch = psi_velocity_mismatch(&sol, &psi);
        assert!(mismatch < 1e-8, "rigid rotation mismatch {mismatch}");
    }

    #[test]
    fn vtk_roundtrip_preserves_coordinates_and_values() {
        let mesh = Arc::new(structured_unit_square(3));
        let sol = fake_solution(Arc::clone(&mesh), |p| p.x + p.y);
        let psi = vec![0.25; mesh.num_nodes()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.vtk");
        export_fields(&sol, &psi, &path).unwrap();
        let read = crate::vtk::read_unstructured(&path).unwrap();
        assert_eq!(read.points.len(), mesh.num_vertices());
        assert_eq!(read.triangles.len(), mesh.num_triangles());
        for (a, b) in read.points.iter().zip(&mesh.vertices) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
        let theta = read.scalars.iter().find(|(n, _)| n == "theta").unwrap();
        assert_eq!(theta.1.len(), mesh.num_vertices());
        for (v, p) in theta.1.iter().zip(&mesh.vertices) {
            assert!((v - (p.x + p.y)).abs() < 1e-15);
        }
        assert_eq!(read.vectors.len(), 1);
    }

    #[test]
    fn velocity_sampling_interpolates_quadratically() {
        let mesh = Arc::new(structured_unit_square(4));
        let mut sol = fake_solution(Arc::clone(&mesh), |_| 0.0);
        for n in 0..mesh.num_nodes() {
            let p = mesh.node(n);
            sol.fields.u[n] = p.x * p.x + p.y;
        }
        let (u, _) = sample_velocity(&sol, Point::new(0.37, 0.61)).unwrap();
        assert!((u - (0.37f64 * 0.37 + 0.61)).abs() < 1e-12);
        assert!(sample_velocity(&sol, Point::new(2.0, 2.0)).is_none());
    }
}
