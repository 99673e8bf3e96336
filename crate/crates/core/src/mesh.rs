//! Unstructured triangular meshing of the cavity domains.
//!
//! Boundary loops are chord-discretized at the boundary target size, fed into
//! a constrained Delaunay triangulation, refined (Ruppert-style) to an angle
//! limit and interior area cap, then graded against a distance-based sizing
//! field. Faces outside the fluid region are dropped, heater-arc nodes are
//! snapped back onto the true circles, and interior vertices are smoothed.
//!
//! Meshes are quadratic-geometry ready: every unique edge carries a mid-edge
//! node, and mid-edge nodes of arc boundary edges lie on the circle.

use crate::geometry::{
    point_segment_distance, BoundaryTag, Chord, Domain, InvalidGeometry, Point,
};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error(transparent)]
    InvalidGeometry(#[from] InvalidGeometry),
    #[error("mesh generation failed: {0}")]
    Failure(String),
    #[error("boundary edge near ({0:.6}, {1:.6}) carries no tag")]
    UntaggedBoundary(f64, f64),
}

/// Target element sizes. `h_boundary` applies at tagged walls, `h_interior`
/// away from them; `grading_ratio` bounds the size growth per boundary-layer
/// thickness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sizing {
    pub h_interior: f64,
    pub h_boundary: f64,
    pub grading_ratio: f64,
}

impl Sizing {
    pub fn uniform(h: f64) -> Self {
        Self {
            h_interior: h,
            h_boundary: h,
            grading_ratio: 1.3,
        }
    }

    pub fn graded(h_interior: f64, h_boundary: f64) -> Self {
        Self {
            h_interior,
            h_boundary,
            grading_ratio: 1.3,
        }
    }

    /// Target edge length at distance `d` from the nearest boundary.
    fn target_h(&self, d: f64) -> f64 {
        let growth = self.h_boundary + (self.grading_ratio - 1.0) * d;
        growth.min(self.h_interior)
    }
}

/// Minimum interior angle accepted by the mesher, in degrees.
pub const MIN_ANGLE_DEG: f64 = 20.0;
/// Angle limit passed to Delaunay refinement (strictly above the acceptance
/// threshold so that snapping and smoothing keep the final mesh legal).
const REFINE_ANGLE_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub triangle: usize,
    /// Local edge `k` connects local vertices `k` and `(k + 1) % 3`.
    pub local_edge: usize,
    pub tag: BoundaryTag,
}

/// Conforming triangulation with tagged boundary edges and one mid-edge node
/// per unique edge for quadratic interpolation.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Vertex indices, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Unique edges as sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Edge index of each triangle's local edge.
    pub triangle_edges: Vec<[usize; 3]>,
    /// One node per unique edge; arc mid-edge nodes are snapped to the circle.
    pub edge_nodes: Vec<Point>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub sizing: Sizing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub min_angle: f64,
    pub max_angle: f64,
    pub element_count: usize,
    pub node_count: usize,
    pub min_boundary_h: f64,
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Total node count of the quadratic interpolation space: corner nodes
    /// followed by mid-edge nodes.
    pub fn num_nodes(&self) -> usize {
        self.vertices.len() + self.edge_nodes.len()
    }

    pub fn node(&self, id: usize) -> Point {
        if id < self.vertices.len() {
            self.vertices[id]
        } else {
            self.edge_nodes[id - self.vertices.len()]
        }
    }

    /// The six quadratic nodes of triangle `t`: three corners, then the
    /// mid-edge nodes opposite in the usual P2 order (edge 0-1, 1-2, 2-0).
    pub fn element_nodes(&self, t: usize) -> [usize; 6] {
        let [a, b, c] = self.triangles[t];
        let nv = self.vertices.len();
        let e = self.triangle_edges[t];
        [a, b, c, nv + e[0], nv + e[1], nv + e[2]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * crate::geometry::cross(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Interior angles of triangle `t` in degrees.
    pub fn triangle_angles(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let p = [self.vertices[a], self.vertices[b], self.vertices[c]];
        let mut out = [0.0; 3];
        for k in 0..3 {
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            let dot = u.x * v.x + u.y * v.y;
            let det = u.x * v.y - u.y * v.x;
            out[k] = det.atan2(dot).abs().to_degrees();
        }
        out
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_angle = f64::INFINITY;
        let mut max_angle: f64 = 0.0;
        for t in 0..self.triangles.len() {
            for a in self.triangle_angles(t) {
                min_angle = min_angle.min(a);
                max_angle = max_angle.max(a);
            }
        }
        let min_boundary_h = self
            .boundary_edges
            .iter()
            .map(|be| {
                let (a, b) = self.boundary_edge_vertices(be);
                a.dist(b)
            })
            .fold(f64::INFINITY, f64::min);
        MeshQuality {
            min_angle,
            max_angle,
            element_count: self.triangles.len(),
            node_count: self.num_nodes(),
            min_boundary_h,
        }
    }

    pub fn boundary_edge_vertices(&self, be: &BoundaryEdge) -> (Point, Point) {
        let tri = self.triangles[be.triangle];
        let a = tri[be.local_edge];
        let b = tri[(be.local_edge + 1) % 3];
        (self.vertices[a], self.vertices[b])
    }

    /// Corner vertex indices of a boundary edge, in boundary orientation.
    pub fn boundary_edge_corner_ids(&self, be: &BoundaryEdge) -> (usize, usize) {
        let tri = self.triangles[be.triangle];
        (tri[be.local_edge], tri[(be.local_edge + 1) % 3])
    }

    /// Global quadratic node ids (start corner, mid-edge, end corner) of a
    /// boundary edge.
    pub fn boundary_edge_nodes(&self, be: &BoundaryEdge) -> (usize, usize, usize) {
        let (a, b) = self.boundary_edge_corner_ids(be);
        let mid = self.vertices.len() + self.triangle_edges[be.triangle][be.local_edge];
        (a, mid, b)
    }

    /// All quadratic node ids lying on edges with the given tag.
    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out = Vec::new();
        for be in &self.boundary_edges {
            if be.tag != tag {
                continue;
            }
            let (a, m, b) = self.boundary_edge_nodes(be);
            out.extend_from_slice(&[a, m, b]);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Write the triangulation as a legacy ASCII VTK unstructured grid, for
    /// inspection in ParaView and friends.
    pub fn write_vtk(&self, path: &std::path::Path) -> std::io::Result<()> {
        crate::vtk::write_unstructured(path, "mesh", &self.vertices, &self.triangles, &[], &[])
    }
}

/// Reported diagnostics of per-operation mesh statistics.
pub fn mesh_quality(mesh: &Mesh) -> MeshQuality {
    mesh.quality()
}

struct ChordRef {
    a: Point,
    b: Point,
    chord: Chord,
}

/// Generate a conforming quadratic-ready mesh over `domain` at the requested
/// sizing.
pub fn generate_mesh(domain: &dyn Domain, sizing: Sizing) -> Result<Mesh, MeshError> {
    domain.validate()?;
    if !(sizing.h_boundary > 0.0 && sizing.h_boundary <= sizing.h_interior) {
        return Err(MeshError::Failure(format!(
            "sizing requires 0 < h_boundary <= h_interior, got {} and {}",
            sizing.h_boundary, sizing.h_interior
        )));
    }
    let chord_tol = domain.chord_tolerance();
    let loops: Vec<_> = domain
        .boundary_loops()
        .iter()
        .map(|l| l.discretize(sizing.h_boundary, chord_tol))
        .collect();
    let mut all_chords: Vec<ChordRef> = Vec::new();
    for dl in &loops {
        let n = dl.points.len();
        for i in 0..n {
            all_chords.push(ChordRef {
                a: dl.points[i],
                b: dl.points[(i + 1) % n],
                chord: dl.chords[i],
            });
        }
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    for dl in &loops {
        let handles: Vec<_> = dl
            .points
            .iter()
            .map(|p| {
                cdt.insert(Point2::new(p.x, p.y))
                    .map_err(|e| MeshError::Failure(format!("point insertion failed: {e:?}")))
            })
            .collect::<Result<_, _>>()?;
        let n = handles.len();
        for i in 0..n {
            cdt.add_constraint(handles[i], handles[(i + 1) % n]);
        }
    }

    let interior_area_cap = 0.5 * sizing.h_interior * sizing.h_interior;
    let budget = refinement_budget(domain, sizing);
    let refine = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>| {
        let params = RefinementParameters::<f64>::new()
            .exclude_outer_faces(true)
            .with_angle_limit(AngleLimit::from_deg(REFINE_ANGLE_DEG))
            .with_max_allowed_area(interior_area_cap)
            .with_max_additional_vertices(budget);
        cdt.refine(params)
    };
    let result = refine(&mut cdt);
    if !result.refinement_complete {
        return Err(MeshError::Failure(format!(
            "refinement exceeded its vertex budget of {budget}"
        )));
    }

    // grade against the sizing field: split oversized faces at their centroid
    // until every kept face respects the local target size
    if sizing.h_boundary < sizing.h_interior {
        for _pass in 0..30 {
            let mut inserts: Vec<Point2<f64>> = Vec::new();
            for face in cdt.inner_faces() {
                let vs = face.vertices();
                let p: Vec<Point> = vs
                    .iter()
                    .map(|v| Point::new(v.position().x, v.position().y))
                    .collect();
                let c = Point::new(
                    (p[0].x + p[1].x + p[2].x) / 3.0,
                    (p[0].y + p[1].y + p[2].y) / 3.0,
                );
                if !domain.contains(c) {
                    continue;
                }
                let d = distance_to_chords(c, &all_chords);
                // the boundary band belongs to the Delaunay refinement with
                // its proper encroachment handling; inserting centroids next
                // to constraint edges risks degenerate slivers
                if d < sizing.h_boundary {
                    continue;
                }
                let h = sizing.target_h(d);
                let longest = p[0]
                    .dist(p[1])
                    .max(p[1].dist(p[2]))
                    .max(p[2].dist(p[0]));
                if longest > 1.45 * h {
                    inserts.push(Point2::new(c.x, c.y));
                }
            }
            if inserts.is_empty() {
                break;
            }
            for p in inserts {
                cdt.insert(p)
                    .map_err(|e| MeshError::Failure(format!("grading insertion failed: {e:?}")))?;
            }
        }
        // restore the angle limit after grading inserts
        let result = refine(&mut cdt);
        if !result.refinement_complete {
            return Err(MeshError::Failure(format!(
                "refinement exceeded its vertex budget of {budget}"
            )));
        }
    }

    extract_mesh(&cdt, domain, sizing, &all_chords)
}

fn refinement_budget(domain: &dyn Domain, sizing: Sizing) -> usize {
    let area = domain.fluid_area();
    let per = domain.perimeter();
    let est = area / (0.4 * sizing.h_boundary * sizing.h_boundary) + 4.0 * per / sizing.h_boundary;
    (20.0 * est) as usize + 20_000
}

fn distance_to_chords(p: Point, chords: &[ChordRef]) -> f64 {
    chords
        .iter()
        .map(|c| point_segment_distance(p, c.a, c.b))
        .fold(f64::INFINITY, f64::min)
}

fn extract_mesh(
    cdt: &ConstrainedDelaunayTriangulation<Point2<f64>>,
    domain: &dyn Domain,
    sizing: Sizing,
    all_chords: &[ChordRef],
) -> Result<Mesh, MeshError> {
    let mut vertex_ids: HashMap<usize, usize> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    for face in cdt.inner_faces() {
        let vs = face.vertices();
        let pts: Vec<Point> = vs
            .iter()
            .map(|v| Point::new(v.position().x, v.position().y))
            .collect();
        // collinear boundary points produce exactly degenerate hull slivers;
        // they carry no area and must not survive extraction
        let area = 0.5 * crate::geometry::cross(pts[0], pts[1], pts[2]);
        if area.abs() < 1e-13 * sizing.h_boundary * sizing.h_boundary {
            continue;
        }
        let c = Point::new(
            (pts[0].x + pts[1].x + pts[2].x) / 3.0,
            (pts[0].y + pts[1].y + pts[2].y) / 3.0,
        );
        if !domain.contains(c) {
            continue;
        }
        let mut ids = [0usize; 3];
        for (k, v) in vs.iter().enumerate() {
            let key = v.index();
            let id = *vertex_ids.entry(key).or_insert_with(|| {
                vertices.push(pts[k]);
                vertices.len() - 1
            });
            ids[k] = id;
        }
        // spade inner faces are counterclockwise already; enforce anyway
        if crate::geometry::cross(vertices[ids[0]], vertices[ids[1]], vertices[ids[2]]) < 0.0 {
            ids.swap(1, 2);
        }
        triangles.push(ids);
    }
    if triangles.is_empty() {
        return Err(MeshError::Failure("no triangles inside the domain".into()));
    }

    // unique edges and incidence
    let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut edge_use: Vec<u32> = Vec::new();
    let mut triangle_edges: Vec<[usize; 3]> = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let mut te = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = [a.min(b), a.max(b)];
            let id = *edge_ids.entry(key).or_insert_with(|| {
                edges.push(key);
                edge_use.push(0);
                edges.len() - 1
            });
            edge_use[id] += 1;
            te[k] = id;
        }
        triangle_edges.push(te);
    }
    if let Some(id) = edge_use.iter().position(|&c| c > 2) {
        let [a, b] = edges[id];
        return Err(MeshError::Failure(format!(
            "non-conforming edge between ({:.4},{:.4}) and ({:.4},{:.4})",
            vertices[a].x, vertices[a].y, vertices[b].x, vertices[b].y
        )));
    }

    // tag boundary edges by matching midpoints against the input chords
    let mut boundary_edges: Vec<BoundaryEdge> = Vec::new();
    let mut vertex_tag: Vec<Option<Chord>> = vec![None; vertices.len()];
    let match_tol = 1e-6 * (1.0 + domain.perimeter());
    for (t, te) in triangle_edges.iter().enumerate() {
        for k in 0..3 {
            if edge_use[te[k]] != 1 {
                continue;
            }
            let (a, b) = (triangles[t][k], triangles[t][(k + 1) % 3]);
            let mid = (vertices[a] + vertices[b]) * 0.5;
            let mut best = f64::INFINITY;
            let mut best_chord: Option<&ChordRef> = None;
            for c in all_chords {
                let d = point_segment_distance(mid, c.a, c.b);
                if d < best {
                    best = d;
                    best_chord = Some(c);
                }
            }
            let Some(chord_ref) = best_chord.filter(|_| best < match_tol) else {
                return Err(MeshError::UntaggedBoundary(mid.x, mid.y));
            };
            boundary_edges.push(BoundaryEdge {
                triangle: t,
                local_edge: k,
                tag: chord_ref.chord.tag,
            });
            for v in [a, b] {
                // prefer keeping an arc chord so arc vertices get snapped
                if vertex_tag[v].is_none() || chord_ref.chord.circle.is_some() {
                    vertex_tag[v] = Some(chord_ref.chord);
                }
            }
        }
    }

    // snap arc vertices onto their true circle
    for (v, tag) in vertex_tag.iter().enumerate() {
        if let Some(Chord {
            circle: Some(circle),
            ..
        }) = tag
        {
            vertices[v] = circle.project(vertices[v]);
        }
    }

    let boundary_vertex: Vec<bool> = {
        let mut b = vec![false; vertices.len()];
        for be in &boundary_edges {
            let (x, y) = {
                let tri = triangles[be.triangle];
                (tri[be.local_edge], tri[(be.local_edge + 1) % 3])
            };
            b[x] = true;
            b[y] = true;
        }
        b
    };

    smooth_interior(&mut vertices, &triangles, &boundary_vertex);

    // mid-edge nodes, snapped on tagged arc edges
    let nv = vertices.len();
    let mut edge_nodes: Vec<Point> = edges
        .iter()
        .map(|&[a, b]| (vertices[a] + vertices[b]) * 0.5)
        .collect();
    for be in &boundary_edges {
        if let Some(circle) = domain.circle_for_tag(be.tag) {
            let e = triangle_edges[be.triangle][be.local_edge];
            edge_nodes[e] = circle.project(edge_nodes[e]);
        }
    }
    let _ = nv;

    let mesh = Mesh {
        vertices,
        triangles,
        edges,
        triangle_edges,
        edge_nodes,
        boundary_edges,
        sizing,
    };
    check_mesh(&mesh, domain)?;
    Ok(mesh)
}

/// Smart Laplacian smoothing: move each interior vertex toward the average of
/// its neighbors, keeping the move only if the worst incident angle does not
/// degrade.
fn smooth_interior(vertices: &mut [Point], triangles: &[[usize; 3]], boundary: &[bool]) {
    let n = vertices.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            neighbors[a].push(b);
            neighbors[b].push(a);
            incident[tri[k]].push(t);
        }
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
        nb.dedup();
    }
    let min_angle = |vertices: &[Point], t: usize| -> f64 {
        let [a, b, c] = triangles[t];
        let p = [vertices[a], vertices[b], vertices[c]];
        let mut worst = f64::INFINITY;
        for k in 0..3 {
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            let det = u.x * v.y - u.y * v.x;
            let dot = u.x * v.x + u.y * v.y;
            worst = worst.min(det.atan2(dot));
        }
        worst
    };
    for _sweep in 0..3 {
        for v in 0..n {
            if boundary[v] || neighbors[v].is_empty() {
                continue;
            }
            let old = vertices[v];
            let before = incident[v]
                .iter()
                .map(|&t| min_angle(vertices, t))
                .fold(f64::INFINITY, f64::min);
            let mut avg = Point::new(0.0, 0.0);
            for &nb in &neighbors[v] {
                avg = avg + vertices[nb];
            }
            vertices[v] = avg * (1.0 / neighbors[v].len() as f64);
            let after = incident[v]
                .iter()
                .map(|&t| min_angle(vertices, t))
                .fold(f64::INFINITY, f64::min);
            if after < before {
                vertices[v] = old;
            }
        }
    }
}

fn check_mesh(mesh: &Mesh, domain: &dyn Domain) -> Result<(), MeshError> {
    let mut worst = (f64::INFINITY, 0usize);
    for t in 0..mesh.triangles.len() {
        if mesh.triangle_area(t) <= 0.0 {
            return Err(MeshError::Failure(format!(
                "triangle {t} has nonpositive area"
            )));
        }
        let a = mesh.triangle_angles(t).into_iter().fold(f64::INFINITY, f64::min);
        if a < worst.0 {
            worst = (a, t);
        }
    }
    if worst.0 < MIN_ANGLE_DEG {
        let [a, b, c] = mesh.triangles[worst.1];
        return Err(MeshError::Failure(format!(
            "worst triangle {} at ({:.6},{:.6})-({:.6},{:.6})-({:.6},{:.6}) \
             has min angle {:.4} deg (limit {} deg)",
            worst.1,
            mesh.vertices[a].x,
            mesh.vertices[a].y,
            mesh.vertices[b].x,
            mesh.vertices[b].y,
            mesh.vertices[c].x,
            mesh.vertices[c].y,
            worst.0,
            MIN_ANGLE_DEG
        )));
    }
    let area = mesh.total_area();
    let tol = 10.0 * domain.chord_tolerance() * domain.perimeter();
    if (area - domain.fluid_area()).abs() > tol {
        return Err(MeshError::Failure(format!(
            "mesh area {:.6} deviates from fluid area {:.6} beyond {:.2e}",
            area,
            domain.fluid_area(),
            tol
        )));
    }
    Ok(())
}

/// Graded sequence of meshes with monotonically increasing element counts,
/// each level roughly 1.5-2x the previous count.
pub fn grid_sequence(domain: &dyn Domain, n_levels: usize) -> Result<Vec<Mesh>, MeshError> {
    grid_sequence_from(domain, coarsest_study_sizing(), n_levels)
}

/// Sizing whose coarsest level lands near a few hundred elements on the
/// default cavity, so a six-level sequence spans the usual grid-study range.
pub fn coarsest_study_sizing() -> Sizing {
    Sizing::graded(0.34, 0.20)
}

pub fn grid_sequence_from(
    domain: &dyn Domain,
    coarsest: Sizing,
    n_levels: usize,
) -> Result<Vec<Mesh>, MeshError> {
    if n_levels < 2 {
        return Err(MeshError::Failure(format!(
            "grid sequence needs at least 2 levels, got {n_levels}"
        )));
    }
    // shrink h so counts grow by roughly 1.5-2x per level: coarse levels are
    // boundary-dominated (count ~ 1/h), fine levels interior-dominated (~ 1/h^2)
    let factor = 1.54f64;
    let mut meshes = Vec::with_capacity(n_levels);
    for level in 0..n_levels {
        let s = factor.powi(level as i32);
        let sizing = Sizing {
            h_interior: coarsest.h_interior / s,
            h_boundary: coarsest.h_boundary / s,
            grading_ratio: coarsest.grading_ratio,
        };
        meshes.push(generate_mesh(domain, sizing)?);
    }
    for w in meshes.windows(2) {
        if w[1].num_triangles() <= w[0].num_triangles() {
            return Err(MeshError::Failure(format!(
                "grid sequence not strictly increasing: {} then {}",
                w[0].num_triangles(),
                w[1].num_triangles()
            )));
        }
    }
    Ok(meshes)
}

/// Structured triangulation of a `width` x `height` rectangle with `nx` x
/// `ny` cells, each split into two triangles. Used by the manufactured
/// solution study and the lid-driven benchmark.
pub fn structured_rectangle(nx: usize, ny: usize, width: f64, height: f64) -> Mesh {
    assert!(nx >= 1 && ny >= 1);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point::new(
                width * i as f64 / nx as f64,
                height * j as f64 / ny as f64,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut edge_use: Vec<u32> = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let mut te = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = [a.min(b), a.max(b)];
            let id = *edge_ids.entry(key).or_insert_with(|| {
                edges.push(key);
                edge_use.push(0);
                edges.len() - 1
            });
            edge_use[id] += 1;
            te[k] = id;
        }
        triangle_edges.push(te);
    }
    let mut boundary_edges = Vec::new();
    for (t, te) in triangle_edges.iter().enumerate() {
        for k in 0..3 {
            if edge_use[te[k]] != 1 {
                continue;
            }
            let (a, b) = (triangles[t][k], triangles[t][(k + 1) % 3]);
            let mid = (vertices[a] + vertices[b]) * 0.5;
            let tag = if mid.y.abs() < 1e-12 {
                BoundaryTag::BottomAdiabatic
            } else if (mid.y - height).abs() < 1e-12 {
                BoundaryTag::Lid
            } else if mid.x.abs() < 1e-12 {
                BoundaryTag::LeftWall
            } else {
                BoundaryTag::RightWall
            };
            boundary_edges.push(BoundaryEdge {
                triangle: t,
                local_edge: k,
                tag,
            });
        }
    }
    let edge_nodes = edges
        .iter()
        .map(|&[a, b]| (vertices[a] + vertices[b]) * 0.5)
        .collect();
    let h = (width / nx as f64).max(height / ny as f64);
    Mesh {
        vertices,
        triangles,
        edges,
        triangle_edges,
        edge_nodes,
        boundary_edges,
        sizing: Sizing::uniform(h),
    }
}

pub fn structured_unit_square(n: usize) -> Mesh {
    structured_rectangle(n, n, 1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CavityGeometry, RectangleDomain, TriangularCavity};

    fn edge_use_counts(mesh: &Mesh) -> Vec<u32> {
        let mut counts = vec![0u32; mesh.edges.len()];
        for te in &mesh.triangle_edges {
            for &e in te {
                counts[e] += 1;
            }
        }
        counts
    }

    #[test]
    fn coarse_unit_square_is_two_triangles() {
        let square = RectangleDomain::unit_square();
        let mesh = generate_mesh(&square, Sizing::uniform(1.5)).unwrap();
        assert_eq!(mesh.num_triangles(), 2);
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structured_square_topology() {
        let mesh = structured_unit_square(4);
        assert_eq!(mesh.num_triangles(), 32);
        assert_eq!(mesh.num_vertices(), 25);
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        // Euler: V - E + F(incl outer) = 2 for a disc
        let v = mesh.num_vertices() as i64;
        let e = mesh.edges.len() as i64;
        let f = mesh.num_triangles() as i64 + 1;
        assert_eq!(v - e + f, 2);
        let q = mesh.quality();
        assert!((q.min_angle - 45.0).abs() < 1e-9);
        assert!((q.max_angle - 90.0).abs() < 1e-9);
    }

    #[test]
    fn default_cavity_mesh_is_conforming_and_tagged() {
        let geom = CavityGeometry::default();
        let mesh = generate_mesh(&geom, Sizing::graded(0.09, 0.045)).unwrap();
        // conformity: every edge used once (boundary) or twice (interior)
        let counts = edge_use_counts(&mesh);
        assert!(counts.iter().all(|&c| c == 1 || c == 2));
        let n_boundary = counts.iter().filter(|&&c| c == 1).count();
        assert_eq!(n_boundary, mesh.boundary_edges.len());
        // Euler characteristic with one hole
        let v = mesh.num_vertices() as i64;
        let e = mesh.edges.len() as i64;
        let f = mesh.num_triangles() as i64 + 1;
        assert_eq!(v - e + f, 2 - 1, "expected exactly one hole");
        // all seven tags present
        for tag in BoundaryTag::ALL {
            assert!(
                mesh.boundary_edges.iter().any(|be| be.tag == tag),
                "missing tag {tag:?}"
            );
        }
        // quality and orientation
        let q = mesh.quality();
        assert!(q.min_angle >= MIN_ANGLE_DEG);
        assert!((0..mesh.num_triangles()).all(|t| mesh.triangle_area(t) > 0.0));
    }

    #[test]
    fn arc_nodes_lie_on_circle() {
        let geom = CavityGeometry::default();
        let mesh = generate_mesh(&geom, Sizing::graded(0.09, 0.045)).unwrap();
        for (tag, idx) in [(BoundaryTag::HeaterLeft, 0), (BoundaryTag::HeaterRight, 1)] {
            let circle = crate::geometry::Circle {
                center: Point::new(geom.heater_centers[idx], 0.0),
                radius: geom.heater_radius,
            };
            let nodes = mesh.nodes_with_tag(tag);
            assert!(!nodes.is_empty());
            for id in nodes {
                let p = mesh.node(id);
                // arc endpoints on the bottom wall are shared with adiabatic
                // chords; they sit on the circle by construction too
                assert!(
                    circle.distance_to(p) < 1e-9,
                    "node {id} at ({}, {}) off circle by {}",
                    p.x,
                    p.y,
                    circle.distance_to(p)
                );
            }
        }
    }

    #[test]
    fn refinement_is_finer_near_boundary() {
        let geom = CavityGeometry::default();
        let mesh = generate_mesh(&geom, Sizing::graded(0.12, 0.04)).unwrap();
        let boundary_tris: std::collections::HashSet<usize> =
            mesh.boundary_edges.iter().map(|be| be.triangle).collect();
        let mut b_area = (0.0, 0usize);
        let mut i_area = (0.0, 0usize);
        for t in 0..mesh.num_triangles() {
            let a = mesh.triangle_area(t);
            if boundary_tris.contains(&t) {
                b_area = (b_area.0 + a, b_area.1 + 1);
            } else {
                i_area = (i_area.0 + a, i_area.1 + 1);
            }
        }
        let mean_b = b_area.0 / b_area.1 as f64;
        let mean_i = i_area.0 / i_area.1 as f64;
        assert!(
            mean_b < mean_i,
            "boundary mean area {mean_b} not below interior {mean_i}"
        );
    }

    #[test]
    fn grid_sequence_counts_increase() {
        let geom = CavityGeometry::default();
        let meshes = grid_sequence(&geom, 3).unwrap();
        assert_eq!(meshes.len(), 3);
        for w in meshes.windows(2) {
            let ratio = w[1].num_triangles() as f64 / w[0].num_triangles() as f64;
            assert!(ratio > 1.2 && ratio < 2.6, "level ratio {ratio}");
        }
    }

    #[test]
    fn grid_sequence_needs_two_levels() {
        let geom = CavityGeometry::default();
        assert!(grid_sequence(&geom, 1).is_err());
        assert_eq!(grid_sequence(&geom, 2).unwrap().len(), 2);
    }

    #[test]
    fn triangular_cavity_meshes() {
        let tri = TriangularCavity { height: 1.0 };
        let mesh = generate_mesh(&tri, Sizing::graded(0.1, 0.05)).unwrap();
        assert!((mesh.total_area() - 0.5).abs() < 1e-6);
        for tag in [
            BoundaryTag::LeftWall,
            BoundaryTag::BottomAdiabatic,
            BoundaryTag::HeaterLeft,
        ] {
            assert!(mesh.boundary_edges.iter().any(|be| be.tag == tag));
        }
    }

    #[test]
    fn bad_sizing_is_rejected() {
        let square = RectangleDomain::unit_square();
        let bad = Sizing {
            h_interior: 0.05,
            h_boundary: 0.1,
            grading_ratio: 1.3,
        };
        assert!(matches!(
            generate_mesh(&square, bad),
            Err(MeshError::Failure(_))
        ));
    }
}
