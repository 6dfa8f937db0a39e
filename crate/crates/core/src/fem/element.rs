//! Reference-triangle quadrature and P1/P2 shape functions.

use super::mesh::ElementOrder;

/// Barycentric point with weight relative to the triangle area.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Symmetric rules, so a cell and its rotated image sample the same physical points.
pub fn quadrature(order: ElementOrder) -> Vec<QuadPoint> {
    match order {
        // degree 2
        ElementOrder::Linear => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            vec![
                QuadPoint { bary: [a, b, b], weight: 1.0 / 3.0 },
                QuadPoint { bary: [b, a, b], weight: 1.0 / 3.0 },
                QuadPoint { bary: [b, b, a], weight: 1.0 / 3.0 },
            ]
        }
        // degree 4
        ElementOrder::Quadratic => {
            let (a1, w1) = (0.445948490915965, 0.223381589678011);
            let (a2, w2) = (0.091576213509771, 0.109951743655322);
            let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
            vec![
                QuadPoint { bary: [b1, a1, a1], weight: w1 },
                QuadPoint { bary: [a1, b1, a1], weight: w1 },
                QuadPoint { bary: [a1, a1, b1], weight: w1 },
                QuadPoint { bary: [b2, a2, a2], weight: w2 },
                QuadPoint { bary: [a2, b2, a2], weight: w2 },
                QuadPoint { bary: [a2, a2, b2], weight: w2 },
            ]
        }
    }
}

/// Geometry of an affine triangle.
#[derive(Debug, Clone, Copy)]
pub struct Triangle {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_bary: [[f64; 2]; 3],
}

impl Triangle {
    pub fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grad_bary = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Self {
            vertices,
            area: 0.5 * det,
            grad_bary,
        }
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let [p0, p1, p2] = self.vertices;
        [
            bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
            bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
        ]
    }
}

/// Shape function values at a barycentric point, ordered `[v0, v1, v2, m01, m12, m20]`.
pub fn shape_values(order: ElementOrder, l: [f64; 3]) -> Vec<f64> {
    match order {
        ElementOrder::Linear => l.to_vec(),
        ElementOrder::Quadratic => vec![
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ],
    }
}

pub fn shape_gradients(order: ElementOrder, tri: &Triangle, l: [f64; 3]) -> Vec<[f64; 2]> {
    let g = &tri.grad_bary;
    match order {
        ElementOrder::Linear => g.to_vec(),
        ElementOrder::Quadratic => {
            let vertex = |i: usize| {
                let s = 4.0 * l[i] - 1.0;
                [s * g[i][0], s * g[i][1]]
            };
            let edge = |i: usize, j: usize| {
                [
                    4.0 * (l[j] * g[i][0] + l[i] * g[j][0]),
                    4.0 * (l[j] * g[i][1] + l[i] * g[j][1]),
                ]
            };
            vec![vertex(0), vertex(1), vertex(2), edge(0, 1), edge(1, 2), edge(2, 0)]
        }
    }
}

/// Integrals of the 1D edge shape functions over an edge of length 1, ordered
/// `[start, end, mid]`.
pub fn edge_shape_integrals(order: ElementOrder) -> [f64; 3] {
    match order {
        ElementOrder::Linear => [0.5, 0.5, 0.0],
        ElementOrder::Quadratic => [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    }
}

/// Edge mass matrix for an edge of length 1, ordered `[start, end, mid]`.
pub fn edge_mass(order: ElementOrder) -> [[f64; 3]; 3] {
    match order {
        ElementOrder::Linear => [
            [1.0 / 3.0, 1.0 / 6.0, 0.0],
            [1.0 / 6.0, 1.0 / 3.0, 0.0],
            [0.0, 0.0, 0.0],
        ],
        ElementOrder::Quadratic => [
            [4.0 / 30.0, -1.0 / 30.0, 2.0 / 30.0],
            [-1.0 / 30.0, 4.0 / 30.0, 2.0 / 30.0],
            [2.0 / 30.0, 2.0 / 30.0, 16.0 / 30.0],
        ],
    }
}
