//! Microscale corrector problems on the enlarged cell and on the reduced window.

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::assembly::{
    assemble_stiffness, assemble_strain_loads, average_material, average_stress, rigid_modes,
    volume_average, MaterialField,
};
use crate::fem::constraints::{constraints_for, finish, BcKind, BcModel};
use crate::fem::mesh::{build_mesh, nested_node_map, ElementOrder, Mesh, Rect, Side};
use crate::fem::{boundary_mass, BoundaryDiscretisation, Factorization};
use crate::micro::{LatticeConfig, Material};

pub type VoigtStrain = Vector3<f64>;

/// Unit Voigt strain for load index `i` in `1..=3`.
pub fn unit_strain(i: usize) -> Result<VoigtStrain> {
    match i {
        1 => Ok(Vector3::new(1.0, 0.0, 0.0)),
        2 => Ok(Vector3::new(0.0, 1.0, 0.0)),
        3 => Ok(Vector3::new(0.0, 0.0, 1.0)),
        _ => Err(invalid(format!("load index {i} outside 1..=3"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Hf,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMeshConfig {
    pub reduced_blocks: usize,
    pub divisions_per_block: usize,
    pub order: u32,
}

impl Default for CellMeshConfig {
    fn default() -> Self {
        Self {
            reduced_blocks: 2,
            divisions_per_block: 6,
            order: 1,
        }
    }
}

/// Nested meshes of the enlarged cell and its central reduced window.
#[derive(Debug, Clone)]
pub struct CellSetup {
    pub lattice: LatticeConfig,
    pub mesh_config: CellMeshConfig,
    pub hf_mesh: Mesh,
    pub reduced_mesh: Mesh,
    /// Reduced node -> coincident HF node.
    pub node_map: Vec<usize>,
    pub boundary: BoundaryDiscretisation,
}

impl CellSetup {
    pub fn new(lattice: LatticeConfig, mesh_config: CellMeshConfig) -> Result<Self> {
        lattice.validate()?;
        let CellMeshConfig {
            reduced_blocks,
            divisions_per_block,
            order,
        } = mesh_config;
        if reduced_blocks == 0 || reduced_blocks > lattice.n_side || divisions_per_block == 0 {
            return Err(invalid("reduced window must hold between 1 and n_side blocks"));
        }
        let order = ElementOrder::from_degree(order)?;
        let hf_mesh = build_mesh(
            lattice.n_side * divisions_per_block,
            order,
            Rect::centred_square(lattice.domain_length),
        )?;
        let reduced_mesh = build_mesh(
            reduced_blocks * divisions_per_block,
            order,
            Rect::centred_square(lattice.spacing() * reduced_blocks as f64),
        )?;
        let node_map = nested_node_map(&hf_mesh, &reduced_mesh)
            .map_err(|e| invalid(format!("reduced window not mesh-aligned: {e}")))?;
        let boundary = boundary_mass(&reduced_mesh, &Side::ALL)?;
        Ok(Self {
            lattice,
            mesh_config,
            hf_mesh,
            reduced_mesh,
            node_map,
            boundary,
        })
    }

    pub fn mesh(&self, domain: Domain) -> &Mesh {
        match domain {
            Domain::Hf => &self.hf_mesh,
            Domain::Reduced => &self.reduced_mesh,
        }
    }

    /// Index of the lattice block at the lower-left corner of the reduced window.
    pub fn window_offset(&self) -> usize {
        (self.lattice.n_side - self.mesh_config.reduced_blocks) / 2
    }

    /// Restriction of an HF nodal field to the reduced mesh.
    pub fn restrict(&self, hf_field: &DVector<f64>) -> Result<DVector<f64>> {
        if hf_field.len() != self.hf_mesh.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.hf_mesh.n_dofs(),
                actual: hf_field.len(),
                context: "HF field",
            });
        }
        let mut out = DVector::zeros(self.reduced_mesh.n_dofs());
        for (r, &h) in self.node_map.iter().enumerate() {
            out[2 * r] = hf_field[2 * h];
            out[2 * r + 1] = hf_field[2 * h + 1];
        }
        Ok(out)
    }
}

/// Boundary trace on the reduced window with its removed volume average.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalTrace {
    pub w: DVector<f64>,
    pub average: [f64; 2],
    pub load: usize,
}

/// Solves several strains on one mesh sharing a single factorisation. All models
/// must have the same constraint structure (same variant, same trace length).
pub fn solve_many(
    mesh: &Mesh,
    material: &dyn Material,
    models: &[BcModel],
    strains: &[VoigtStrain],
    boundary: Option<&BoundaryDiscretisation>,
) -> Result<Vec<DVector<f64>>> {
    if models.len() != strains.len() || models.is_empty() {
        return Err(invalid("one model per strain required"));
    }
    let field = MaterialField::sample(mesh, material);
    let stiffness = assemble_stiffness(mesh, &field)?;
    let loads = assemble_strain_loads(mesh, &field)?;
    let modes = rigid_modes(mesh);
    let first = constraints_for(mesh, &models[0], boundary)?;
    let fact = Factorization::new(&stiffness, &first, &modes)?;
    models
        .iter()
        .zip(strains)
        .map(|(model, eps)| {
            let c = constraints_for(mesh, model, boundary)?;
            let rhs = crate::fem::assembly::combine_loads(&loads, eps);
            let mut sol = fact.solve(&rhs, &c)?;
            if sol.residual > 1e-10 {
                tracing::warn!(residual = sol.residual, "constrained solve residual above 1e-10");
            }
            finish(mesh, model, &mut sol.field);
            Ok(sol.field)
        })
        .collect()
}

pub fn solve_corrector(
    setup: &CellSetup,
    material: &dyn Material,
    eps: &VoigtStrain,
    bc: &BcModel,
    domain: Domain,
) -> Result<DVector<f64>> {
    if domain == Domain::Hf && matches!(bc, BcModel::PrescribedTrace(_)) {
        return Err(invalid("prescribed traces apply to the reduced window only"));
    }
    let boundary = (domain == Domain::Reduced).then_some(&setup.boundary);
    let mut out = solve_many(setup.mesh(domain), material, &[bc.clone()], &[*eps], boundary)?;
    Ok(out.remove(0))
}

/// Volume-averaged stress of the corrector solution `fluct` on `mesh`.
pub fn homogenise_stress(
    mesh: &Mesh,
    material: &dyn Material,
    eps: &VoigtStrain,
    fluct: &DVector<f64>,
) -> Result<Vector3<f64>> {
    if fluct.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_dofs(),
            actual: fluct.len(),
            context: "fluctuation field",
        });
    }
    let field = MaterialField::sample(mesh, material);
    Ok(average_stress(mesh, &field, eps, fluct))
}

fn tangent_from(
    mesh: &Mesh,
    material: &dyn Material,
    fields: &[DVector<f64>],
) -> Matrix3<f64> {
    let field = MaterialField::sample(mesh, material);
    let mut c = Matrix3::zeros();
    for (k, u) in fields.iter().enumerate() {
        let eps = unit_strain(k + 1).expect("three loads");
        c.set_column(k, &average_stress(mesh, &field, &eps, u));
    }
    c
}

/// Homogenised Voigt tangent of a classical model on the chosen domain.
pub fn homogenised_tangent(
    setup: &CellSetup,
    material: &dyn Material,
    bc: BcKind,
    domain: Domain,
) -> Result<Matrix3<f64>> {
    let mesh = setup.mesh(domain);
    if bc == BcKind::Taylor {
        return Ok(average_material(mesh, &MaterialField::sample(mesh, material)));
    }
    let strains = [unit_strain(1)?, unit_strain(2)?, unit_strain(3)?];
    let models = vec![BcModel::Classic(bc); 3];
    let boundary = (domain == Domain::Reduced).then_some(&setup.boundary);
    let fields = solve_many(mesh, material, &models, &strains, boundary)?;
    Ok(tangent_from(mesh, material, &fields))
}

/// Tangent of the reduced window closed by one prescribed trace per unit load.
pub fn reduced_tangent(
    setup: &CellSetup,
    material: &dyn Material,
    traces: &[DVector<f64>; 3],
) -> Result<Matrix3<f64>> {
    let strains = [unit_strain(1)?, unit_strain(2)?, unit_strain(3)?];
    let models: Vec<BcModel> = traces.iter().cloned().map(BcModel::PrescribedTrace).collect();
    let fields = solve_many(
        &setup.reduced_mesh,
        material,
        &models,
        &strains,
        Some(&setup.boundary),
    )?;
    Ok(tangent_from(&setup.reduced_mesh, material, &fields))
}

/// Periodic HF fluctuations for the given loads.
pub fn solve_hf(
    setup: &CellSetup,
    material: &dyn Material,
    loads: &[usize],
) -> Result<Vec<DVector<f64>>> {
    let strains = loads
        .iter()
        .map(|&i| unit_strain(i))
        .collect::<Result<Vec<_>>>()?;
    let models = vec![BcModel::Classic(BcKind::Periodic); loads.len()];
    solve_many(&setup.hf_mesh, material, &models, &strains, None)
}

/// Goal trace of an HF fluctuation: restriction to the window boundary minus the
/// exact window average.
pub fn goal_trace_from_field(
    setup: &CellSetup,
    hf_field: &DVector<f64>,
    load: usize,
) -> Result<GoalTrace> {
    let restricted = setup.restrict(hf_field)?;
    let average = volume_average(&setup.reduced_mesh, &restricted);
    let mut w = setup.boundary.trace(&restricted)?;
    for k in 0..setup.boundary.n_nodes() {
        w[2 * k] -= average[0];
        w[2 * k + 1] -= average[1];
    }
    Ok(GoalTrace { w, average, load })
}

pub fn extract_goal_trace(
    setup: &CellSetup,
    material: &dyn Material,
    load: usize,
) -> Result<GoalTrace> {
    let field = solve_hf(setup, material, &[load])?.remove(0);
    goal_trace_from_field(setup, &field, load)
}

/// Reduced problem closed by the Dirichlet datum `w`.
pub fn solve_reduced(
    setup: &CellSetup,
    material: &dyn Material,
    eps: &VoigtStrain,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    if w.len() != setup.boundary.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: setup.boundary.n_dofs(),
            actual: w.len(),
            context: "reduced trace",
        });
    }
    solve_corrector(
        setup,
        material,
        eps,
        &BcModel::PrescribedTrace(w.clone()),
        Domain::Reduced,
    )
}

/// Stress averaged over the reduced window of an HF solution: the reference the
/// reduced models are measured against.
pub fn hf_restricted_stress(
    setup: &CellSetup,
    material: &dyn Material,
    eps: &VoigtStrain,
    hf_field: &DVector<f64>,
) -> Result<Vector3<f64>> {
    let restricted = setup.restrict(hf_field)?;
    homogenise_stress(&setup.reduced_mesh, material, eps, &restricted)
}

pub fn hf_tangent(setup: &CellSetup, material: &dyn Material) -> Result<Matrix3<f64>> {
    let fields = solve_hf(setup, material, &[1, 2, 3])?;
    let restricted = fields
        .iter()
        .map(|f| setup.restrict(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(tangent_from(&setup.reduced_mesh, material, &restricted))
}
