//! Quadratic (P2) and linear (P1) triangle shape functions on the reference
//! triangle, isoparametric element geometry, and quadrature rules.

use crate::geometry::Point;

/// Dunavant 7-point rule, exact for degree 5 (enough for the advection
/// trilinear form with quadratic velocities). Weights sum to the reference
/// triangle area 1/2.
pub const TRI_QUADRATURE: [(f64, f64, f64); 7] = {
    const A: f64 = 0.470_142_064_105_115_1;
    const B: f64 = 0.101_286_507_323_456_3;
    const WA: f64 = 0.132_394_152_788_506_2 * 0.5;
    const WB: f64 = 0.125_939_180_544_827_1 * 0.5;
    [
        (1.0 / 3.0, 1.0 / 3.0, 0.225 * 0.5),
        (A, A, WA),
        (1.0 - 2.0 * A, A, WA),
        (A, 1.0 - 2.0 * A, WA),
        (B, B, WB),
        (1.0 - 2.0 * B, B, WB),
        (B, 1.0 - 2.0 * B, WB),
    ]
};

/// 3-point Gauss rule on [0, 1] (degree 5), for boundary-edge integrals.
pub const EDGE_QUADRATURE: [(f64, f64); 3] = {
    const S: f64 = 0.387_298_334_620_741_7; // sqrt(3/5)/2
    [
        (0.5 - S, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + S, 5.0 / 18.0),
    ]
};

/// P2 shape functions at reference coordinates. Nodes: corners 0-2, then
/// mid-edge nodes on edges (0,1), (1,2), (2,0).
pub fn p2_shape(xi: f64, eta: f64) -> [f64; 6] {
    let l0 = 1.0 - xi - eta;
    let l1 = xi;
    let l2 = eta;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// Reference-coordinate gradients of the P2 shape functions.
pub fn p2_grad_ref(xi: f64, eta: f64) -> [[f64; 2]; 6] {
    let l0 = 1.0 - xi - eta;
    [
        [1.0 - 4.0 * l0, 1.0 - 4.0 * l0],
        [4.0 * xi - 1.0, 0.0],
        [0.0, 4.0 * eta - 1.0],
        [4.0 * (l0 - xi), -4.0 * xi],
        [4.0 * eta, 4.0 * xi],
        [-4.0 * eta, 4.0 * (l0 - eta)],
    ]
}

pub fn p1_shape(xi: f64, eta: f64) -> [f64; 3] {
    [1.0 - xi - eta, xi, eta]
}

pub const P1_GRAD_REF: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Shape values and physical-space gradients of one isoparametric quadratic
/// element at one quadrature point.
#[derive(Debug, Clone)]
pub struct ElementPoint {
    pub pos: Point,
    /// quadrature weight times |det J|
    pub w_det: f64,
    /// Jacobian of the reference-to-physical map, row-major.
    pub jacobian: [[f64; 2]; 2],
    pub n2: [f64; 6],
    pub grad2: [[f64; 2]; 6],
    pub n1: [f64; 3],
    pub grad1: [[f64; 2]; 3],
}

/// Evaluate the quadratic geometry map of an element with the given six node
/// coordinates at reference point (xi, eta) with quadrature weight `w`.
pub fn element_point(coords: &[Point; 6], xi: f64, eta: f64, w: f64) -> ElementPoint {
    let n2 = p2_shape(xi, eta);
    let g2r = p2_grad_ref(xi, eta);
    let mut pos = Point::new(0.0, 0.0);
    // Jacobian of the quadratic map x(xi, eta)
    let mut j = [[0.0f64; 2]; 2];
    for k in 0..6 {
        pos = pos + coords[k] * n2[k];
        j[0][0] += coords[k].x * g2r[k][0];
        j[0][1] += coords[k].x * g2r[k][1];
        j[1][0] += coords[k].y * g2r[k][0];
        j[1][1] += coords[k].y * g2r[k][1];
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let inv_det = 1.0 / det;
    // rows of J^{-1}
    let ji = [
        [j[1][1] * inv_det, -j[0][1] * inv_det],
        [-j[1][0] * inv_det, j[0][0] * inv_det],
    ];
    let to_phys = |gr: [f64; 2]| {
        [
            ji[0][0] * gr[0] + ji[1][0] * gr[1],
            ji[0][1] * gr[0] + ji[1][1] * gr[1],
        ]
    };
    let mut grad2 = [[0.0; 2]; 6];
    for k in 0..6 {
        grad2[k] = to_phys(g2r[k]);
    }
    let mut grad1 = [[0.0; 2]; 3];
    for k in 0..3 {
        grad1[k] = to_phys(P1_GRAD_REF[k]);
    }
    ElementPoint {
        pos,
        w_det: w * det.abs(),
        jacobian: j,
        n2,
        grad2,
        n1: p1_shape(xi, eta),
        grad1,
    }
}

/// Quadrature sweep over one element.
pub fn element_points(coords: &[Point; 6]) -> impl Iterator<Item = ElementPoint> + '_ {
    TRI_QUADRATURE
        .iter()
        .map(move |&(xi, eta, w)| element_point(coords, xi, eta, w))
}
