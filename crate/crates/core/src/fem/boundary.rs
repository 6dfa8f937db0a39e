//! Discretisation of the closed outer boundary of a rectangular mesh.
//!
//! Traces are stored in the canonical ordering: ring nodes anticlockwise from the
//! bottom-left corner, components interleaved `(x, y)`.

use nalgebra::{DVector, Matrix2, Vector3};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::element::{edge_mass, edge_shape_integrals};
use super::mesh::{Mesh, Side};
use crate::error::{invalid, Error, Result};

pub const ORDERING: &str = "ccw-bl-interleaved";

#[derive(Debug, Clone)]
pub struct BoundaryDiscretisation {
    /// Mesh node index of every ring position.
    pub nodes: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    /// Mass matrix on the interleaved trace vector.
    pub mass: CsrMatrix<f64>,
    /// `(1/|Omega|) int N_a n` for every ring node.
    pub moment_weights: Vec<[f64; 2]>,
    pub nodes_per_side: [usize; 4],
    pub perimeter: f64,
    pub enclosed_area: f64,
    pub centre: [f64; 2],
    pub mesh_hash: String,
    mesh_dofs: usize,
}

impl BoundaryDiscretisation {
    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.mass * b))
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Restriction of a nodal field to the boundary ring.
    pub fn trace(&self, field: &DVector<f64>) -> Result<DVector<f64>> {
        if field.len() != self.mesh_dofs {
            return Err(Error::DimensionMismatch {
                expected: self.mesh_dofs,
                actual: field.len(),
                context: "field does not live on the boundary's mesh",
            });
        }
        let mut t = DVector::zeros(self.n_dofs());
        for (k, &n) in self.nodes.iter().enumerate() {
            t[2 * k] = field[2 * n];
            t[2 * k + 1] = field[2 * n + 1];
        }
        Ok(t)
    }

    /// Trace of the affine field `y -> a (y - centre)`.
    pub fn affine_trace(&self, a: &Matrix2<f64>) -> DVector<f64> {
        let mut t = DVector::zeros(self.n_dofs());
        for (k, p) in self.coords.iter().enumerate() {
            let y = [p[0] - self.centre[0], p[1] - self.centre[1]];
            t[2 * k] = a[(0, 0)] * y[0] + a[(0, 1)] * y[1];
            t[2 * k + 1] = a[(1, 0)] * y[0] + a[(1, 1)] * y[1];
        }
        t
    }

    /// `<w (x) n>` over the boundary, scaled by the enclosed area.
    pub fn boundary_moment(&self, w: &DVector<f64>) -> Matrix2<f64> {
        let mut m = Matrix2::zeros();
        for (k, g) in self.moment_weights.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] += w[2 * k + i] * g[j];
                }
            }
        }
        m
    }

    /// Symmetric part of the boundary moment in Voigt strain form.
    pub fn symmetric_moment(&self, w: &DVector<f64>) -> Vector3<f64> {
        let m = self.boundary_moment(w);
        Vector3::new(m[(0, 0)], m[(1, 1)], m[(0, 1)] + m[(1, 0)])
    }

    pub fn is_quarter_symmetric(&self) -> bool {
        let s = self.nodes_per_side[0];
        if self.nodes_per_side.iter().any(|&n| n != s) {
            return false;
        }
        let n = self.n_nodes();
        let tol = 1e-12 * self.perimeter;
        (0..n).all(|k| {
            let p = self.coords[(k + n - s) % n];
            let q = self.coords[k];
            let (x, y) = (p[0] - self.centre[0], p[1] - self.centre[1]);
            (q[0] - self.centre[0] + y).abs() < tol && (q[1] - self.centre[1] - x).abs() < tol
        })
    }

    /// Anticlockwise rotation of a trace by `turns` quarter turns:
    /// `(Q w)(y) = R w(R^-1 y)`.
    pub fn quarter_turn(&self, w: &DVector<f64>, turns: i32) -> Result<DVector<f64>> {
        if !self.is_quarter_symmetric() {
            return Err(invalid("quarter turn needs a square, symmetric boundary"));
        }
        if w.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                actual: w.len(),
                context: "trace",
            });
        }
        let n = self.n_nodes();
        let s = self.nodes_per_side[0];
        let mut out = w.clone();
        for _ in 0..turns.rem_euclid(4) {
            let prev = out.clone();
            for k in 0..n {
                let src = (k + n - s) % n;
                out[2 * k] = -prev[2 * src + 1];
                out[2 * k + 1] = prev[2 * src];
            }
        }
        Ok(out)
    }
}

/// Boundary mass and moments on the closed union of `sides`.
pub fn boundary_mass(mesh: &Mesh, sides: &[Side]) -> Result<BoundaryDiscretisation> {
    if !Side::ALL.iter().all(|s| sides.contains(s)) {
        return Err(invalid("boundary curve must be closed (all four sides)"));
    }
    let ring = &mesh.boundary_ring;
    let mut position = vec![usize::MAX; mesh.n_nodes()];
    for (k, &n) in ring.iter().enumerate() {
        position[n] = k;
    }
    let nb = ring.len();
    let local = edge_mass(mesh.order);
    let integrals = edge_shape_integrals(mesh.order);
    let count = mesh.order.nodes_per_cell() / 3 + 1;
    let area = mesh.domain.area();
    let mut coo = CooMatrix::new(2 * nb, 2 * nb);
    let mut moment_weights = vec![[0.0; 2]; nb];
    let mut perimeter = 0.0;
    let mut per_side = [0usize; 4];
    for e in &mesh.boundary_edges {
        let (a, b) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        perimeter += len;
        let side_index = Side::ALL.iter().position(|&s| s == e.side).unwrap_or(0);
        per_side[side_index] += count - 1;
        let normal = e.side.outward_normal();
        for i in 0..count {
            let pi = position[e.nodes[i]];
            moment_weights[pi][0] += integrals[i] * len * normal[0] / area;
            moment_weights[pi][1] += integrals[i] * len * normal[1] / area;
            for j in 0..count {
                let pj = position[e.nodes[j]];
                let v = local[i][j] * len;
                coo.push(2 * pi, 2 * pj, v);
                coo.push(2 * pi + 1, 2 * pj + 1, v);
            }
        }
    }
    Ok(BoundaryDiscretisation {
        nodes: ring.clone(),
        coords: ring.iter().map(|&n| mesh.nodes[n]).collect(),
        mass: CsrMatrix::from(&coo),
        moment_weights,
        nodes_per_side: per_side,
        perimeter,
        enclosed_area: area,
        centre: mesh.domain.centre(),
        mesh_hash: mesh.hash(),
        mesh_dofs: mesh.n_dofs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{build_mesh, ElementOrder, Rect};

    fn ones_component(bd: &BoundaryDiscretisation, c: usize) -> DVector<f64> {
        DVector::from_fn(bd.n_dofs(), |i, _| if i % 2 == c { 1.0 } else { 0.0 })
    }

    #[test]
    fn perimeter_per_component() {
        for order in [ElementOrder::Linear, ElementOrder::Quadratic] {
            let mesh = build_mesh(5, order, Rect::unit()).unwrap();
            let bd = boundary_mass(&mesh, &Side::ALL).unwrap();
            for c in 0..2 {
                let one = ones_component(&bd, c);
                assert!((bd.inner(&one, &one) - 4.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn linear_trace_on_one_edge() {
        for order in [ElementOrder::Linear, ElementOrder::Quadratic] {
            let mesh = build_mesh(4, order, Rect::unit()).unwrap();
            let bd = boundary_mass(&mesh, &Side::ALL).unwrap();
            // u = (s, 0) on the bottom edge, zero elsewhere
            let mut u = DVector::zeros(bd.n_dofs());
            for (k, p) in bd.coords.iter().enumerate() {
                if p[1] == 0.0 {
                    u[2 * k] = p[0];
                }
            }
            // the right corner carries s = 1 into the adjacent edge of the right side
            let corner_tail = match order {
                ElementOrder::Linear => 1.0 / 3.0 * 0.25,
                ElementOrder::Quadratic => 4.0 / 30.0 * 0.25,
            };
            assert!((bd.inner(&u, &u) - (1.0 / 3.0 + corner_tail)).abs() < 1e-13);
        }
    }

    #[test]
    fn open_curve_rejected() {
        let mesh = build_mesh(2, ElementOrder::Linear, Rect::unit()).unwrap();
        assert!(boundary_mass(&mesh, &[Side::Bottom, Side::Right]).is_err());
    }

    #[test]
    fn trace_of_affine_field() {
        let mesh = build_mesh(3, ElementOrder::Quadratic, Rect::centred_square(1.0)).unwrap();
        let bd = boundary_mass(&mesh, &Side::ALL).unwrap();
        let mut u = DVector::zeros(mesh.n_dofs());
        for (i, p) in mesh.nodes.iter().enumerate() {
            u[2 * i] = p[0];
        }
        let t = bd.trace(&u).unwrap();
        for (k, p) in bd.coords.iter().enumerate() {
            assert_eq!(t[2 * k], p[0]);
            assert_eq!(t[2 * k + 1], 0.0);
        }
        assert!(bd.trace(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn quarter_turn_has_order_four_and_preserves_mass() {
        let mesh = build_mesh(4, ElementOrder::Quadratic, Rect::centred_square(0.5)).unwrap();
        let bd = boundary_mass(&mesh, &Side::ALL).unwrap();
        let w = DVector::from_fn(bd.n_dofs(), |i, _| ((i * 37 % 11) as f64).sin());
        let v = DVector::from_fn(bd.n_dofs(), |i, _| ((i * 13 % 7) as f64).cos());
        let mut r = w.clone();
        for _ in 0..4 {
            r = bd.quarter_turn(&r, 1).unwrap();
        }
        assert!((&r - &w).amax() == 0.0);
        let (qw, qv) = (bd.quarter_turn(&w, 1).unwrap(), bd.quarter_turn(&v, 1).unwrap());
        assert!((bd.inner(&qw, &qv) - bd.inner(&w, &v)).abs() < 1e-13);
        assert_eq!(bd.quarter_turn(&w, -1).unwrap(), bd.quarter_turn(&w, 3).unwrap());
    }

    #[test]
    fn quarter_turn_rotates_affine_fields() {
        // Q(A y) = R A R^T y
        let mesh = build_mesh(3, ElementOrder::Linear, Rect::centred_square(1.0)).unwrap();
        let bd = boundary_mass(&mesh, &Side::ALL).unwrap();
        let a = Matrix2::new(0.3, -0.7, 1.1, 0.2);
        let r = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let lhs = bd.quarter_turn(&bd.affine_trace(&a), 1).unwrap();
        let rhs = bd.affine_trace(&(r * a * r.transpose()));
        assert!((lhs - rhs).amax() < 1e-15);
    }

    #[test]
    fn moment_of_affine_trace_is_the_gradient() {
        let mesh = build_mesh(3, ElementOrder::Quadratic, Rect::centred_square(0.5)).unwrap();
        let bd = boundary_mass(&mesh, &Side::ALL).unwrap();
        let a = Matrix2::new(0.3, -0.7, 1.1, 0.2);
        let m = bd.boundary_moment(&bd.affine_trace(&a));
        assert!((m - a).amax() < 1e-14);
        let t = bd.affine_trace(&Matrix2::new(0.0, 1.0, 0.0, 0.0));
        let s = bd.symmetric_moment(&t);
        assert!((s - Vector3::new(0.0, 0.0, 1.0)).amax() < 1e-14);
    }
}
