//! Fluctuation spaces of the corrector problem as constraint sets.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::assembly::node_volume_weights;
use super::boundary::BoundaryDiscretisation;
use super::mesh::Mesh;
use super::solver::{ConstraintRow, Constraints, Factorization, LinearSystem, Solution};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcKind {
    Taylor,
    Linear,
    Periodic,
    Minimal,
}

impl BcKind {
    pub const ALL: [BcKind; 4] = [BcKind::Taylor, BcKind::Linear, BcKind::Periodic, BcKind::Minimal];

    pub fn name(self) -> &'static str {
        match self {
            BcKind::Taylor => "taylor",
            BcKind::Linear => "linear",
            BcKind::Periodic => "periodic",
            BcKind::Minimal => "minimal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BcModel {
    Classic(BcKind),
    /// Dirichlet trace in canonical ring ordering.
    PrescribedTrace(DVector<f64>),
}

impl From<BcKind> for BcModel {
    fn from(k: BcKind) -> Self {
        BcModel::Classic(k)
    }
}

/// Number of scalar multipliers a model adds on top of eliminations.
pub fn physical_multiplier_count(kind: BcKind) -> usize {
    match kind {
        BcKind::Taylor | BcKind::Linear => 0,
        BcKind::Periodic => 2,
        BcKind::Minimal => 5,
    }
}

fn zero_average_rows(mesh: &Mesh) -> [ConstraintRow; 2] {
    let w = node_volume_weights(mesh);
    let area = mesh.domain.area();
    let row = |c: usize| ConstraintRow {
        coefficients: w
            .iter()
            .enumerate()
            .map(|(i, wi)| (2 * i + c, wi / area))
            .collect(),
        target: 0.0,
    };
    [row(0), row(1)]
}

fn periodic_pairs(mesh: &Mesh) -> Vec<(usize, usize)> {
    let (kx_max, ky_max) = (4 * mesh.nx as i64, 4 * mesh.ny as i64);
    let mut pairs = Vec::new();
    for (i, k) in mesh.keys.iter().enumerate() {
        let master = if k[0] == kx_max {
            mesh.node_by_key([0, k[1]])
        } else if k[1] == ky_max {
            mesh.node_by_key([k[0], 0])
        } else {
            None
        };
        if let Some(m) = master {
            pairs.push((2 * i, 2 * m));
            pairs.push((2 * i + 1, 2 * m + 1));
        }
    }
    pairs
}

/// Adds the constraints of `model` to an unconstrained system on `mesh`.
pub fn constrain(mut sys: LinearSystem, mesh: &Mesh, model: &BcModel) -> Result<LinearSystem> {
    if sys.stiffness.nrows() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_dofs(),
            actual: sys.stiffness.nrows(),
            context: "system does not belong to the mesh",
        });
    }
    sys.constraints = constraints_for(mesh, model, None)?;
    Ok(sys)
}

/// Constraint set of `model`; `boundary` is only needed for the minimal model.
pub fn constraints_for(
    mesh: &Mesh,
    model: &BcModel,
    boundary: Option<&BoundaryDiscretisation>,
) -> Result<Constraints> {
    let ring = &mesh.boundary_ring;
    let mut c = Constraints::default();
    match model {
        BcModel::Classic(BcKind::Taylor) => {
            c.dirichlet = (0..mesh.n_dofs()).map(|d| (d, 0.0)).collect();
        }
        BcModel::Classic(BcKind::Linear) => {
            c.dirichlet = ring
                .iter()
                .flat_map(|&n| [(2 * n, 0.0), (2 * n + 1, 0.0)])
                .collect();
        }
        BcModel::Classic(BcKind::Periodic) => {
            if mesh.nodes_on_side(super::mesh::Side::Left).len()
                != mesh.nodes_on_side(super::mesh::Side::Right).len()
            {
                return Err(invalid("periodic pairing needs matching opposite sides"));
            }
            c.periodic = periodic_pairs(mesh);
            c.rows.extend(zero_average_rows(mesh));
        }
        BcModel::Classic(BcKind::Minimal) => {
            let owned;
            let bd = match boundary {
                Some(b) => b,
                None => {
                    owned = super::boundary::boundary_mass(mesh, &super::mesh::Side::ALL)?;
                    &owned
                }
            };
            c.rows.extend(zero_average_rows(mesh));
            // symmetric boundary moment: 11, 22, 12
            let g = &bd.moment_weights;
            let mut m11 = Vec::new();
            let mut m22 = Vec::new();
            let mut m12 = Vec::new();
            for (k, &n) in bd.nodes.iter().enumerate() {
                m11.push((2 * n, g[k][0]));
                m22.push((2 * n + 1, g[k][1]));
                m12.push((2 * n, 0.5 * g[k][1]));
                m12.push((2 * n + 1, 0.5 * g[k][0]));
            }
            for coefficients in [m11, m22, m12] {
                c.rows.push(ConstraintRow {
                    coefficients,
                    target: 0.0,
                });
            }
            // infinitesimal rotations satisfy every constraint above and carry no
            // energy; fix their amplitude
            let w = node_volume_weights(mesh);
            let [cx, cy] = mesh.domain.centre();
            let area = mesh.domain.area();
            let mut rot = Vec::with_capacity(2 * mesh.n_nodes());
            for (i, p) in mesh.nodes.iter().enumerate() {
                rot.push((2 * i, -(p[1] - cy) * w[i] / area));
                rot.push((2 * i + 1, (p[0] - cx) * w[i] / area));
            }
            c.rows.push(ConstraintRow {
                coefficients: rot,
                target: 0.0,
            });
        }
        BcModel::PrescribedTrace(w) => {
            if w.len() != 2 * ring.len() {
                return Err(Error::DimensionMismatch {
                    expected: 2 * ring.len(),
                    actual: w.len(),
                    context: "prescribed trace",
                });
            }
            c.dirichlet = ring
                .iter()
                .enumerate()
                .flat_map(|(k, &n)| [(2 * n, w[2 * k]), (2 * n + 1, w[2 * k + 1])])
                .collect();
        }
    }
    Ok(c)
}

/// Shifts a prescribed-trace solution to zero volume average.
pub fn finish(mesh: &Mesh, model: &BcModel, field: &mut DVector<f64>) {
    if let BcModel::PrescribedTrace(_) = model {
        let avg = super::assembly::volume_average(mesh, field);
        for i in 0..mesh.n_nodes() {
            field[2 * i] -= avg[0];
            field[2 * i + 1] -= avg[1];
        }
    }
}

/// Solves `sys` under `model` and applies the model's post-processing.
pub fn solve_with(mesh: &Mesh, sys: LinearSystem, model: &BcModel) -> Result<Solution> {
    let sys = constrain(sys, mesh, model)?;
    let fact = Factorization::new(&sys.stiffness, &sys.constraints, &sys.rigid_modes)?;
    let mut sol = fact.solve(&sys.rhs, &sys.constraints)?;
    finish(mesh, model, &mut sol.field);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::{assemble_corrector, volume_average};
    use crate::fem::mesh::{build_mesh, ElementOrder, Rect};
    use crate::micro::{Homogeneous, Lame, LatticeConfig, Microstructure};
    use nalgebra::Vector3;

    fn micro() -> Microstructure {
        Microstructure::from_theta(LatticeConfig::standard(2, 1.0), &[0.5, -0.3, 0.1, 0.9]).unwrap()
    }

    fn mesh() -> Mesh {
        build_mesh(6, ElementOrder::Linear, Rect::centred_square(1.0)).unwrap()
    }

    #[test]
    fn minimal_has_five_physical_constraints() {
        assert_eq!(physical_multiplier_count(BcKind::Minimal), 5);
        let c = constraints_for(&mesh(), &BcKind::Minimal.into(), None).unwrap();
        // plus the rotation gauge
        assert_eq!(c.row_count(), 6);
    }

    #[test]
    fn taylor_gives_zero_field() {
        let m = mesh();
        let sys = assemble_corrector(&m, &micro(), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let sol = solve_with(&m, sys, &BcKind::Taylor.into()).unwrap();
        assert!(sol.field.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn homogeneous_material_has_zero_fluctuation_for_every_model() {
        let m = mesh();
        let mat = Homogeneous(Lame::REFERENCE.voigt());
        for kind in BcKind::ALL {
            let sys = assemble_corrector(&m, &mat, &Vector3::new(1.0, 0.3, -0.4)).unwrap();
            let sol = solve_with(&m, sys, &kind.into()).unwrap();
            assert!(sol.field.amax() < 1e-12, "{kind:?}: {}", sol.field.amax());
        }
    }

    #[test]
    fn periodic_solution_matches_on_paired_nodes() {
        let m = mesh();
        let sys = assemble_corrector(&m, &micro(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let sol = solve_with(&m, sys, &BcKind::Periodic.into()).unwrap();
        assert!(sol.residual <= 1e-10);
        for (s, master) in periodic_pairs(&m) {
            assert!((sol.field[s] - sol.field[master]).abs() < 1e-14);
        }
        let avg = volume_average(&m, &sol.field);
        assert!(avg[0].abs() < 1e-14 && avg[1].abs() < 1e-14);
        assert!(sol.field.amax() > 1e-4);
    }

    #[test]
    fn minimal_solution_has_zero_moment() {
        let m = mesh();
        let bd = crate::fem::boundary::boundary_mass(&m, &crate::fem::mesh::Side::ALL).unwrap();
        let sys = assemble_corrector(&m, &micro(), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let sol = solve_with(&m, sys, &BcKind::Minimal.into()).unwrap();
        assert!(sol.residual <= 1e-10);
        let moment = bd.symmetric_moment(&bd.trace(&sol.field).unwrap());
        assert!(moment.amax() < 1e-13);
    }

    #[test]
    fn prescribed_trace_length_checked_and_average_removed() {
        let m = mesh();
        let sys = assemble_corrector(&m, &micro(), &Vector3::zeros()).unwrap();
        let bad = BcModel::PrescribedTrace(DVector::zeros(3));
        assert!(constrain(sys.clone(), &m, &bad).is_err());
        let w = DVector::from_element(2 * m.boundary_ring.len(), 0.7);
        let sol = solve_with(&m, sys, &BcModel::PrescribedTrace(w)).unwrap();
        // constant datum with no load: the constant is removed by the average shift
        assert!(sol.field.amax() < 1e-12);
    }
}
