//! Boundary-condition predictor built from the axial and shear submodels.
//!
//! The vertical load is never learned: its trace is the axial prediction for the
//! quarter-turned microstructure, rotated back.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::corrector::{solve_many, unit_strain, CellSetup, VoigtStrain};
use crate::error::{invalid, Error, Result};
use crate::fem::assembly::{average_stress, MaterialField};
use crate::fem::{BcModel, BoundaryDiscretisation};
use crate::micro::{permute_params, theta_from_radius, Material};
use crate::mlp::MlpModel;
use crate::rb::{admissibility_correct, rotate_basis, ReducedBasis};

#[derive(Debug, Clone)]
pub struct DeepBndModel {
    pub axial: MlpModel,
    pub shear: MlpModel,
    pub basis_axial: ReducedBasis,
    pub basis_shear: ReducedBasis,
    pub basis_vertical: ReducedBasis,
    pub r_min: f64,
    pub r_max: f64,
    /// Number of leading coefficients used (at most the network output size).
    pub n_rb: usize,
}

impl DeepBndModel {
    pub fn new(
        axial: MlpModel,
        shear: MlpModel,
        basis_axial: ReducedBasis,
        basis_shear: ReducedBasis,
        boundary: &BoundaryDiscretisation,
        r_min: f64,
        r_max: f64,
    ) -> Result<Self> {
        if axial.output_dim() != basis_axial.n_rb() || shear.output_dim() != basis_shear.n_rb() {
            return Err(Error::Incompatible(
                "submodel outputs must match their basis sizes".into(),
            ));
        }
        if axial.output_dim() != shear.output_dim() {
            return Err(Error::Incompatible(
                "axial and shear models must use the same number of modes".into(),
            ));
        }
        if axial.input_dim() != shear.input_dim() {
            return Err(Error::Incompatible("submodel input sizes differ".into()));
        }
        if basis_axial.mesh_hash != basis_shear.mesh_hash
            || basis_axial.mesh_hash != boundary.mesh_hash
            || basis_axial.n_gamma() != boundary.n_dofs()
        {
            return Err(Error::Incompatible(
                "bases must share the boundary discretisation".into(),
            ));
        }
        let basis_vertical = rotate_basis(&basis_axial, boundary)?;
        let n_rb = axial.output_dim();
        Ok(Self {
            axial,
            shear,
            basis_axial,
            basis_shear,
            basis_vertical,
            r_min,
            r_max,
            n_rb,
        })
    }

    pub fn n_inclusions(&self) -> usize {
        self.axial.input_dim()
    }

    /// Same networks, only the first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.axial.output_dim() {
            return Err(invalid(format!(
                "cannot use {n} of {} modes",
                self.axial.output_dim()
            )));
        }
        Ok(Self {
            n_rb: n,
            ..self.clone()
        })
    }

    pub fn basis(&self, load: usize) -> Result<&ReducedBasis> {
        match load {
            1 => Ok(&self.basis_axial),
            2 => Ok(&self.basis_vertical),
            3 => Ok(&self.basis_shear),
            _ => Err(invalid(format!("load index {load} outside 1..=3"))),
        }
    }

    fn theta(&self, radii: &[f64]) -> Result<DVector<f64>> {
        if radii.len() != self.n_inclusions() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inclusions(),
                actual: radii.len(),
                context: "radii",
            });
        }
        Ok(DVector::from_iterator(
            radii.len(),
            radii.iter().map(|&r| theta_from_radius(r, self.r_min, self.r_max)),
        ))
    }

    /// Predicted coefficients of load `load` from network inputs `theta`.
    pub fn coefficients_theta(&self, load: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let full = match load {
            1 => self.axial.predict(theta)?,
            2 => {
                let turned = permute_params(theta.as_slice(), 1)?;
                self.axial.predict(&DVector::from_vec(turned))?
            }
            3 => self.shear.predict(theta)?,
            _ => return Err(invalid(format!("load index {load} outside 1..=3"))),
        };
        Ok(full.rows(0, self.n_rb).into_owned())
    }

    pub fn coefficients(&self, load: usize, radii: &[f64]) -> Result<DVector<f64>> {
        self.coefficients_theta(load, &self.theta(radii)?)
    }

    /// Trace predicted for the unit strain of load `load`.
    pub fn load_trace(&self, load: usize, radii: &[f64]) -> Result<DVector<f64>> {
        let beta = self.coefficients(load, radii)?;
        Ok(self.basis(load)?.basis.columns(0, self.n_rb) * beta)
    }
}

/// Predicted boundary datum `sum_I p_I (B^(I) N^(I)(p_c))`.
pub fn predict_bc(dbm: &DeepBndModel, radii: &[f64], eps: &VoigtStrain) -> Result<DVector<f64>> {
    let mut w = DVector::zeros(dbm.basis_axial.n_gamma());
    for load in 1..=3 {
        if eps[load - 1] != 0.0 {
            w += dbm.load_trace(load, radii)? * eps[load - 1];
        }
    }
    Ok(w)
}

/// Dirichlet datum of the learned space; the corrected variant carries the extra
/// macroscopic strain that restores the removed boundary moment.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedSpace {
    pub trace: DVector<f64>,
    pub strain_shift: Vector3<f64>,
}

impl LearnedSpace {
    pub fn model(&self) -> BcModel {
        BcModel::PrescribedTrace(self.trace.clone())
    }
}

pub fn make_learned_space(
    dbm: &DeepBndModel,
    boundary: &BoundaryDiscretisation,
    radii: &[f64],
    eps: &VoigtStrain,
    corrected: bool,
) -> Result<LearnedSpace> {
    let trace = predict_bc(dbm, radii, eps)?;
    if !corrected {
        return Ok(LearnedSpace {
            trace,
            strain_shift: Vector3::zeros(),
        });
    }
    let mut out = DVector::zeros(trace.len());
    let mut shift = Vector3::zeros();
    for load in 1..=3 {
        if eps[load - 1] == 0.0 {
            continue;
        }
        let basis = dbm.basis(load)?.truncated(dbm.n_rb)?;
        let (fixed, strains) = admissibility_correct(&basis, boundary)?;
        let beta = dbm.coefficients(load, radii)?;
        out += &fixed.basis * &beta * eps[load - 1];
        for (j, e) in strains.iter().enumerate() {
            shift += e * (beta[j] * eps[load - 1]);
        }
    }
    Ok(LearnedSpace {
        trace: out,
        strain_shift: shift,
    })
}

/// Homogenised tangent on the reduced window closed by the learned datum.
pub fn deepbnd_tangent(
    setup: &CellSetup,
    material: &dyn Material,
    radii: &[f64],
    dbm: &DeepBndModel,
    corrected: bool,
) -> Result<Matrix3<f64>> {
    let mut models = Vec::with_capacity(3);
    let mut strains = Vec::with_capacity(3);
    for load in 1..=3 {
        let e = unit_strain(load)?;
        let space = make_learned_space(dbm, &setup.boundary, radii, &e, corrected)?;
        models.push(space.model());
        strains.push(e + space.strain_shift);
    }
    let mesh = &setup.reduced_mesh;
    let fields = solve_many(mesh, material, &models, &strains, Some(&setup.boundary))?;
    let field = MaterialField::sample(mesh, material);
    let mut c = Matrix3::zeros();
    for k in 0..3 {
        c.set_column(k, &average_stress(mesh, &field, &strains[k], &fields[k]));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSplit {
    pub total_sq: f64,
    pub dnn_sq: f64,
    /// Empirical projection error of the dataset.
    pub pod_sq: f64,
    /// `|E_T^2 - E_DNN^2 - E_POD^2| / E_T^2`.
    pub split_defect: f64,
}

/// Splits the error of predicted coefficients `beta_hat` (n x N) against true
/// traces `w` (n_gamma x N) on the first `n` modes of `basis`.
pub fn error_split(
    w: &DMatrix<f64>,
    beta_hat: &DMatrix<f64>,
    basis: &ReducedBasis,
    mass: &CsrMatrix<f64>,
) -> Result<ErrorSplit> {
    let n = beta_hat.nrows();
    if w.ncols() != beta_hat.ncols() || n > basis.n_rb() || w.nrows() != basis.n_gamma() {
        return Err(invalid("traces, predictions and basis do not fit together"));
    }
    let ns = w.ncols().max(1) as f64;
    let b = basis.basis.columns(0, n);
    let beta = b.transpose() * (mass * w);
    let w_hat = &b * beta_hat;
    let projected = &b * &beta;
    let m_norm = |m: &DMatrix<f64>| {
        let mm = mass * m;
        (0..m.ncols())
            .map(|j| m.column(j).dot(&mm.column(j)))
            .sum::<f64>()
            / ns
    };
    let total_sq = m_norm(&(w_hat - w));
    let pod_sq = m_norm(&(w - projected));
    let dnn_sq = (beta_hat - beta).norm_squared() / ns;
    let split_defect = if total_sq > 0.0 {
        (total_sq - dnn_sq - pod_sq).abs() / total_sq
    } else {
        (dnn_sq + pod_sq).abs()
    };
    Ok(ErrorSplit {
        total_sq,
        dnn_sq,
        pod_sq,
        split_defect,
    })
}

/// Error split of the model's load `load` over a dataset of goal traces (columns)
/// and network inputs (columns).
pub fn error_decomposition(
    traces: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    dbm: &DeepBndModel,
    load: usize,
    mass: &CsrMatrix<f64>,
) -> Result<ErrorSplit> {
    if traces.ncols() != theta.ncols() {
        return Err(invalid("traces and parameters hold different sample counts"));
    }
    let mut beta_hat = DMatrix::zeros(dbm.n_rb, theta.ncols());
    for c in 0..theta.ncols() {
        let b = dbm.coefficients_theta(load, &theta.column(c).into_owned())?;
        beta_hat.set_column(c, &b);
    }
    error_split(traces, &beta_hat, dbm.basis(load)?, mass)
}
