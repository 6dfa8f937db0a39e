//! Element integration for plane linear elasticity in Voigt form
//! `(e11, e22, 2 e12)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::element::{edge_shape_integrals, quadrature, shape_gradients, shape_values, Triangle};
use super::mesh::{Mesh, Side};
use super::solver::{Constraints, LinearSystem};
use crate::error::{Error, Result};
use crate::micro::Material;

/// Voigt stiffness sampled at every quadrature point, cell-major.
#[derive(Debug, Clone)]
pub struct MaterialField {
    pub n_qp: usize,
    pub values: Vec<Matrix3<f64>>,
}

impl MaterialField {
    pub fn sample(mesh: &Mesh, material: &dyn Material) -> Self {
        let rule = quadrature(mesh.order);
        let mut values = Vec::with_capacity(mesh.n_cells() * rule.len());
        for c in 0..mesh.n_cells() {
            let tri = Triangle::new(mesh.cell_vertices(c));
            for q in &rule {
                values.push(material.voigt_at(tri.point(q.bary)));
            }
        }
        Self {
            n_qp: rule.len(),
            values,
        }
    }

    /// One stiffness per cell, repeated over its quadrature points.
    pub fn per_cell(mesh: &Mesh, cells: &[Matrix3<f64>]) -> Result<Self> {
        if cells.len() != mesh.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_cells(),
                actual: cells.len(),
                context: "per-cell stiffness",
            });
        }
        let n_qp = quadrature(mesh.order).len();
        Ok(Self {
            n_qp,
            values: cells
                .iter()
                .flat_map(|c| std::iter::repeat_n(*c, n_qp))
                .collect(),
        })
    }

    pub fn uniform(mesh: &Mesh, d: Matrix3<f64>) -> Self {
        let n_qp = quadrature(mesh.order).len();
        Self {
            n_qp,
            values: vec![d; mesh.n_cells() * n_qp],
        }
    }

    fn at(&self, cell: usize, q: usize) -> &Matrix3<f64> {
        &self.values[cell * self.n_qp + q]
    }
}

fn checked_triangle(mesh: &Mesh, c: usize) -> Result<Triangle> {
    let tri = Triangle::new(mesh.cell_vertices(c));
    let scale = mesh.domain.width().max(mesh.domain.height());
    if !(tri.area > 1e-14 * scale * scale / mesh.n_cells() as f64) {
        return Err(Error::DegenerateElement {
            cell: c,
            area: tri.area,
        });
    }
    Ok(tri)
}

/// Strain-displacement rows for every local node: `B_a` as `[[dx, 0], [0, dy], [dy, dx]]`.
fn b_columns(grads: &[[f64; 2]]) -> Vec<[Vector3<f64>; 2]> {
    grads
        .iter()
        .map(|g| [Vector3::new(g[0], 0.0, g[1]), Vector3::new(0.0, g[1], g[0])])
        .collect()
}

pub fn assemble_stiffness(mesh: &Mesh, field: &MaterialField) -> Result<CsrMatrix<f64>> {
    let n = mesh.n_dofs();
    let npc = mesh.order.nodes_per_cell();
    let rule = quadrature(mesh.order);
    let mut coo = CooMatrix::new(n, n);
    let mut ke = DMatrix::<f64>::zeros(2 * npc, 2 * npc);
    for c in 0..mesh.n_cells() {
        let tri = checked_triangle(mesh, c)?;
        ke.fill(0.0);
        for (qi, q) in rule.iter().enumerate() {
            let b = b_columns(&shape_gradients(mesh.order, &tri, q.bary));
            let d = field.at(c, qi);
            let w = q.weight * tri.area;
            for a in 0..npc {
                for da in 0..2 {
                    let db = d * b[a][da];
                    for e in 0..npc {
                        for de in 0..2 {
                            ke[(2 * a + da, 2 * e + de)] += w * b[e][de].dot(&db);
                        }
                    }
                }
            }
        }
        let nodes = mesh.cell_nodes(c);
        for a in 0..2 * npc {
            for e in 0..2 * npc {
                let (ga, ge) = (2 * nodes[a / 2] + a % 2, 2 * nodes[e / 2] + e % 2);
                coo.push(ga, ge, ke[(a, e)]);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Right-hand sides `-(C e_k, grad^s v)` for the three unit Voigt strains.
pub fn assemble_strain_loads(mesh: &Mesh, field: &MaterialField) -> Result<[DVector<f64>; 3]> {
    let n = mesh.n_dofs();
    let npc = mesh.order.nodes_per_cell();
    let rule = quadrature(mesh.order);
    let mut loads = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
    for c in 0..mesh.n_cells() {
        let tri = checked_triangle(mesh, c)?;
        let nodes = mesh.cell_nodes(c);
        for (qi, q) in rule.iter().enumerate() {
            let b = b_columns(&shape_gradients(mesh.order, &tri, q.bary));
            let d = field.at(c, qi);
            let w = q.weight * tri.area;
            for (k, load) in loads.iter_mut().enumerate() {
                let stress = d.column(k);
                for a in 0..npc {
                    for da in 0..2 {
                        load[2 * nodes[a] + da] -= w * b[a][da].dot(&stress);
                    }
                }
            }
        }
    }
    Ok(loads)
}

pub fn combine_loads(loads: &[DVector<f64>; 3], eps: &Vector3<f64>) -> DVector<f64> {
    &loads[0] * eps[0] + &loads[1] * eps[1] + &loads[2] * eps[2]
}

/// Translations and the infinitesimal rotation about the domain centre.
pub fn rigid_modes(mesh: &Mesh) -> DMatrix<f64> {
    let [cx, cy] = mesh.domain.centre();
    let mut r = DMatrix::zeros(mesh.n_dofs(), 3);
    for (i, p) in mesh.nodes.iter().enumerate() {
        r[(2 * i, 0)] = 1.0;
        r[(2 * i + 1, 1)] = 1.0;
        r[(2 * i, 2)] = -(p[1] - cy);
        r[(2 * i + 1, 2)] = p[0] - cx;
    }
    r
}

/// Unconstrained corrector system for the macroscopic strain `eps`.
pub fn assemble_corrector(
    mesh: &Mesh,
    material: &dyn Material,
    eps: &Vector3<f64>,
) -> Result<LinearSystem> {
    let field = MaterialField::sample(mesh, material);
    let stiffness = assemble_stiffness(mesh, &field)?;
    let loads = assemble_strain_loads(mesh, &field)?;
    Ok(LinearSystem {
        stiffness,
        rhs: combine_loads(&loads, eps),
        constraints: Constraints::default(),
        rigid_modes: rigid_modes(mesh),
    })
}

/// `(1/|Omega|) int C (eps + grad^s u)`.
pub fn average_stress(
    mesh: &Mesh,
    field: &MaterialField,
    eps: &Vector3<f64>,
    u: &DVector<f64>,
) -> Vector3<f64> {
    let rule = quadrature(mesh.order);
    let mut total = Vector3::zeros();
    let mut area = 0.0;
    for c in 0..mesh.n_cells() {
        let tri = Triangle::new(mesh.cell_vertices(c));
        let nodes = mesh.cell_nodes(c);
        for (qi, q) in rule.iter().enumerate() {
            let strain = eps + strain_at(mesh, &tri, nodes, q.bary, u);
            total += field.at(c, qi) * strain * (q.weight * tri.area);
        }
        area += tri.area;
    }
    total / area
}

/// Volume average of the stiffness.
pub fn average_material(mesh: &Mesh, field: &MaterialField) -> Matrix3<f64> {
    let rule = quadrature(mesh.order);
    let mut total = Matrix3::zeros();
    let mut area = 0.0;
    for c in 0..mesh.n_cells() {
        let a = 0.5 * mesh.cell_area2(c);
        for (qi, q) in rule.iter().enumerate() {
            total += field.at(c, qi) * (q.weight * a);
        }
        area += a;
    }
    total / area
}

fn strain_at(
    mesh: &Mesh,
    tri: &Triangle,
    nodes: &[usize],
    bary: [f64; 3],
    u: &DVector<f64>,
) -> Vector3<f64> {
    let g = shape_gradients(mesh.order, tri, bary);
    let mut e = Vector3::zeros();
    for (a, &n) in nodes.iter().enumerate() {
        let (ux, uy) = (u[2 * n], u[2 * n + 1]);
        e[0] += g[a][0] * ux;
        e[1] += g[a][1] * uy;
        e[2] += g[a][1] * ux + g[a][0] * uy;
    }
    e
}

/// Voigt strain of `u` at the centroid of every cell.
pub fn cell_strains(mesh: &Mesh, u: &DVector<f64>) -> Vec<Vector3<f64>> {
    let third = 1.0 / 3.0;
    (0..mesh.n_cells())
        .map(|c| {
            let tri = Triangle::new(mesh.cell_vertices(c));
            strain_at(mesh, &tri, mesh.cell_nodes(c), [third; 3], u)
        })
        .collect()
}

/// `int_Omega N_a` for every node.
pub fn node_volume_weights(mesh: &Mesh) -> Vec<f64> {
    let rule = quadrature(mesh.order);
    let mut w = vec![0.0; mesh.n_nodes()];
    for c in 0..mesh.n_cells() {
        let a = 0.5 * mesh.cell_area2(c);
        for q in &rule {
            let n = shape_values(mesh.order, q.bary);
            for (k, &node) in mesh.cell_nodes(c).iter().enumerate() {
                w[node] += q.weight * a * n[k];
            }
        }
    }
    w
}

/// Exact volume average of a nodal vector field.
pub fn volume_average(mesh: &Mesh, u: &DVector<f64>) -> [f64; 2] {
    let w = node_volume_weights(mesh);
    let area: f64 = w.iter().sum();
    let mut s = [0.0; 2];
    for (i, wi) in w.iter().enumerate() {
        s[0] += wi * u[2 * i];
        s[1] += wi * u[2 * i + 1];
    }
    [s[0] / area, s[1] / area]
}

/// `sqrt(int_Omega |u|^2)`.
pub fn l2_norm(mesh: &Mesh, u: &DVector<f64>) -> f64 {
    let rule = quadrature(mesh.order);
    let mut s = 0.0;
    for c in 0..mesh.n_cells() {
        let a = 0.5 * mesh.cell_area2(c);
        for q in &rule {
            let n = shape_values(mesh.order, q.bary);
            let mut v = [0.0; 2];
            for (k, &node) in mesh.cell_nodes(c).iter().enumerate() {
                v[0] += n[k] * u[2 * node];
                v[1] += n[k] * u[2 * node + 1];
            }
            s += q.weight * a * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    s.sqrt()
}

/// Consistent nodal forces of a constant traction on the given sides.
pub fn traction_load(mesh: &Mesh, sides: &[Side], traction: [f64; 2]) -> DVector<f64> {
    let mut f = DVector::zeros(mesh.n_dofs());
    let w = edge_shape_integrals(mesh.order);
    for e in mesh.boundary_edges.iter().filter(|e| sides.contains(&e.side)) {
        let (a, b) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let count = if e.nodes[2] == usize::MAX { 2 } else { 3 };
        for k in 0..count {
            f[2 * e.nodes[k]] += w[k] * len * traction[0];
            f[2 * e.nodes[k] + 1] += w[k] * len * traction[1];
        }
    }
    f
}

/// Value of a nodal vector field at an arbitrary point of the mesh.
pub fn evaluate(mesh: &Mesh, u: &DVector<f64>, p: [f64; 2]) -> Option<[f64; 2]> {
    let (c, l) = mesh.locate(p)?;
    let n = shape_values(mesh.order, l);
    let mut v = [0.0; 2];
    for (k, &node) in mesh.cell_nodes(c).iter().enumerate() {
        v[0] += n[k] * u[2 * node];
        v[1] += n[k] * u[2 * node + 1];
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{build_mesh, ElementOrder, Rect};
    use crate::micro::{Homogeneous, LatticeConfig, Lame, Microstructure};

    fn sample_micro() -> Microstructure {
        let cfg = LatticeConfig::standard(2, 1.0);
        Microstructure::from_theta(cfg, &[0.3, -0.5, 0.9, -1.0]).unwrap()
    }

    #[test]
    fn stiffness_is_symmetric_and_annihilates_rigid_modes() {
        for order in [ElementOrder::Linear, ElementOrder::Quadratic] {
            let mesh = build_mesh(4, order, Rect::centred_square(1.0)).unwrap();
            let field = MaterialField::sample(&mesh, &sample_micro());
            let k = assemble_stiffness(&mesh, &field).unwrap();
            let max = k.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let kt = k.transpose();
            let diff = (&k - &kt).values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(diff <= 1e-14 * max);
            let r = rigid_modes(&mesh);
            for c in 0..3 {
                let kr = &k * &r.column(c).into_owned();
                assert!(kr.amax() < 1e-12 * max);
            }
        }
    }

    #[test]
    fn zero_strain_gives_zero_load() {
        let mesh = build_mesh(3, ElementOrder::Linear, Rect::centred_square(1.0)).unwrap();
        let sys = assemble_corrector(&mesh, &sample_micro(), &Vector3::zeros()).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_is_linear_in_strain() {
        let mesh = build_mesh(4, ElementOrder::Quadratic, Rect::centred_square(1.0)).unwrap();
        let m = sample_micro();
        let e1 = Vector3::new(0.3, -0.2, 0.7);
        let e2 = Vector3::new(-1.1, 0.4, 0.25);
        let f = |e: &Vector3<f64>| assemble_corrector(&mesh, &m, e).unwrap().rhs;
        let lhs = f(&(e1 + e2));
        let rhs = f(&e1) + f(&e2);
        assert!((&lhs - &rhs).amax() <= 1e-14 * lhs.amax());
    }

    #[test]
    fn homogeneous_load_vanishes_in_the_interior() {
        let mesh = build_mesh(4, ElementOrder::Linear, Rect::centred_square(1.0)).unwrap();
        let d = Lame::REFERENCE.voigt();
        let sys = assemble_corrector(&mesh, &Homogeneous(d), &Vector3::new(1.0, 0.5, 0.2)).unwrap();
        let ring: std::collections::HashSet<usize> = mesh.boundary_ring.iter().copied().collect();
        for i in (0..mesh.n_nodes()).filter(|i| !ring.contains(i)) {
            assert!(sys.rhs[2 * i].abs() < 1e-13 && sys.rhs[2 * i + 1].abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let mut mesh = build_mesh(1, ElementOrder::Linear, Rect::unit()).unwrap();
        let centre = mesh.cells[0][2];
        mesh.nodes[centre] = [0.5, 0.0];
        let field = MaterialField::uniform(&mesh, Lame::REFERENCE.voigt());
        assert!(matches!(
            assemble_stiffness(&mesh, &field),
            Err(Error::DegenerateElement { .. })
        ));
    }

    #[test]
    fn volume_weights_and_traction_totals() {
        for order in [ElementOrder::Linear, ElementOrder::Quadratic] {
            let mesh = build_mesh(3, order, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
            let w: f64 = node_volume_weights(&mesh).iter().sum();
            assert!((w - 2.0).abs() < 1e-13);
            let f = traction_load(&mesh, &[Side::Right], [0.0, 0.5]);
            let fy: f64 = (0..mesh.n_nodes()).map(|i| f[2 * i + 1]).sum();
            assert!((fy - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_field_has_exact_strain_and_average() {
        let mesh = build_mesh(3, ElementOrder::Quadratic, Rect::centred_square(1.0)).unwrap();
        let mut u = DVector::zeros(mesh.n_dofs());
        for (i, p) in mesh.nodes.iter().enumerate() {
            u[2 * i] = 0.2 * p[0] + 0.1 * p[1] + 1.0;
            u[2 * i + 1] = 0.3 * p[0] - 0.4 * p[1];
        }
        for e in cell_strains(&mesh, &u) {
            assert!((e - Vector3::new(0.2, -0.4, 0.4)).amax() < 1e-13);
        }
        let avg = volume_average(&mesh, &u);
        assert!((avg[0] - 1.0).abs() < 1e-14 && avg[1].abs() < 1e-14);
        let v = evaluate(&mesh, &u, [0.1, 0.2]).unwrap();
        assert!((v[0] - (0.02 + 0.02 + 1.0)).abs() < 1e-14);
    }
}
