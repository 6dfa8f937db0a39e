//! Proper orthogonal decomposition of boundary traces.

use nalgebra::{DMatrix, DVector, Matrix2, Vector3};
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::BoundaryDiscretisation;

/// Modes with eigenvalue below this fraction of the largest are discarded.
pub const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PodSize {
    /// Smallest size whose relative discarded energy is below the tolerance.
    Tolerance(f64),
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    /// `n_gamma x n_rb`, columns M-orthonormal.
    pub basis: DMatrix<f64>,
    /// Full spectrum of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub load: usize,
    pub mesh_hash: String,
}

impl ReducedBasis {
    pub fn n_gamma(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_rb(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_snapshots(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.n_rb() {
            return Err(invalid(format!("cannot truncate {} modes to {n}", self.n_rb())));
        }
        Ok(Self {
            basis: self.basis.columns(0, n).into_owned(),
            ..self.clone()
        })
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self, mass: &CsrMatrix<f64>) -> f64 {
        let mb = mass * &self.basis;
        let gram = self.basis.transpose() * mb;
        (gram - DMatrix::identity(self.n_rb(), self.n_rb())).amax()
    }
}

/// Snapshot POD. `snapshots` holds one trace per column.
pub fn pod(
    snapshots: &DMatrix<f64>,
    mass: &CsrMatrix<f64>,
    size: PodSize,
    load: usize,
    mesh_hash: &str,
) -> Result<ReducedBasis> {
    let (n_gamma, ns) = snapshots.shape();
    if ns == 0 {
        return Err(invalid("POD needs at least one snapshot"));
    }
    if mass.nrows() != n_gamma {
        return Err(Error::DimensionMismatch {
            expected: mass.nrows(),
            actual: n_gamma,
            context: "snapshot length vs boundary mass",
        });
    }
    if let PodSize::Tolerance(t) = size {
        if !(t > 0.0 && t < 1.0) {
            return Err(invalid("POD tolerance must lie in (0, 1)"));
        }
    }
    let mw = mass * snapshots;
    let mut corr = snapshots.transpose() * mw / ns as f64;
    // symmetrise against round-off before the symmetric eigensolver
    corr = (&corr + corr.transpose()) * 0.5;
    let eig = corr.symmetric_eigen();
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let lambda1 = eigenvalues[0];
    let rank = if lambda1 > 0.0 {
        eigenvalues
            .iter()
            .take_while(|&&l| l >= RANK_CUTOFF * lambda1)
            .count()
    } else {
        tracing::warn!("all snapshots vanish; POD basis is empty");
        0
    };
    let n_rb = match size {
        PodSize::Count(n) => {
            if n > rank {
                return Err(invalid(format!(
                    "requested {n} modes but the snapshots span only {rank}"
                )));
            }
            n
        }
        PodSize::Tolerance(tol) => {
            let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
            let mut acc = 0.0;
            let mut n = rank;
            for (i, l) in eigenvalues.iter().take(rank).enumerate() {
                acc += l.max(0.0);
                if 1.0 - acc / total < tol {
                    n = i + 1;
                    break;
                }
            }
            n
        }
    };

    let mut basis = DMatrix::zeros(n_gamma, n_rb);
    for (c, &i) in order.iter().take(n_rb).enumerate() {
        let v = eig.eigenvectors.column(i);
        let mut xi = snapshots * v / (eigenvalues[c] * ns as f64).sqrt();
        let scale = xi.amax();
        if let Some(first) = xi.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                xi = -xi;
            }
        }
        basis.set_column(c, &xi);
    }
    Ok(ReducedBasis {
        basis,
        eigenvalues,
        load,
        mesh_hash: mesh_hash.to_owned(),
    })
}

/// `sum_{j > n} lambda_j`.
pub fn pod_error(basis: &ReducedBasis, n: usize) -> Result<f64> {
    if n > basis.n_snapshots() {
        return Err(invalid(format!(
            "n = {n} exceeds the {} snapshots",
            basis.n_snapshots()
        )));
    }
    Ok(basis.eigenvalues[n..].iter().map(|l| l.max(0.0)).sum())
}

/// Coefficients `xi_i^T M w`.
pub fn project(
    w: &DVector<f64>,
    basis: &ReducedBasis,
    mass: &CsrMatrix<f64>,
) -> Result<DVector<f64>> {
    if w.len() != basis.n_gamma() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_gamma(),
            actual: w.len(),
            context: "trace vs basis",
        });
    }
    Ok(basis.basis.transpose() * (mass * w))
}

/// Projects every column of `snapshots`; returns `n_rb x N_s`.
pub fn project_all(
    snapshots: &DMatrix<f64>,
    basis: &ReducedBasis,
    mass: &CsrMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if snapshots.nrows() != basis.n_gamma() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_gamma(),
            actual: snapshots.nrows(),
            context: "snapshots vs basis",
        });
    }
    Ok(basis.basis.transpose() * (mass * snapshots))
}

pub fn reconstruct(beta: &DVector<f64>, basis: &ReducedBasis) -> Result<DVector<f64>> {
    if beta.len() > basis.n_rb() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_rb(),
            actual: beta.len(),
            context: "coefficients vs basis",
        });
    }
    Ok(basis.basis.columns(0, beta.len()) * beta)
}

/// Basis of the vertical load from the axial one: every mode turned a quarter.
pub fn rotate_basis(basis: &ReducedBasis, bd: &BoundaryDiscretisation) -> Result<ReducedBasis> {
    if !bd.is_quarter_symmetric() {
        return Err(invalid("basis rotation needs a quarter-symmetric boundary"));
    }
    let mut rotated = DMatrix::zeros(basis.n_gamma(), basis.n_rb());
    for c in 0..basis.n_rb() {
        let col = basis.basis.column(c).into_owned();
        rotated.set_column(c, &bd.quarter_turn(&col, 1)?);
    }
    Ok(ReducedBasis {
        basis: rotated,
        eigenvalues: basis.eigenvalues.clone(),
        load: 2,
        mesh_hash: basis.mesh_hash.clone(),
    })
}

/// Symmetric Voigt strain as a tensor.
pub fn voigt_tensor(e: &Vector3<f64>) -> Matrix2<f64> {
    Matrix2::new(e[0], 0.5 * e[2], 0.5 * e[2], e[1])
}

/// Removes the symmetric boundary moment of every mode:
/// `xi'_i = xi_i - eps_i y` with `eps_i = sym <xi_i (x) n>`.
pub fn admissibility_correct(
    basis: &ReducedBasis,
    bd: &BoundaryDiscretisation,
) -> Result<(ReducedBasis, Vec<Vector3<f64>>)> {
    if basis.n_gamma() != bd.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: bd.n_dofs(),
            actual: basis.n_gamma(),
            context: "basis vs boundary",
        });
    }
    let mut corrected = basis.basis.clone();
    let mut strains = Vec::with_capacity(basis.n_rb());
    for c in 0..basis.n_rb() {
        let xi = basis.basis.column(c).into_owned();
        let e = bd.symmetric_moment(&xi);
        let fixed = xi - bd.affine_trace(&voigt_tensor(&e));
        corrected.set_column(c, &fixed);
        strains.push(e);
    }
    Ok((
        ReducedBasis {
            basis: corrected,
            ..basis.clone()
        },
        strains,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{build_mesh, ElementOrder, Rect, Side};
    use crate::fem::boundary_mass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn boundary() -> BoundaryDiscretisation {
        let mesh = build_mesh(3, ElementOrder::Linear, Rect::centred_square(0.5)).unwrap();
        boundary_mass(&mesh, &Side::ALL).unwrap()
    }

    fn random_snapshots(n_gamma: usize, ns: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n_gamma, ns, |_, _| rng.random_range(-1.0..1.0))
    }

    fn mse(snap: &DMatrix<f64>, basis: &DMatrix<f64>, mass: &CsrMatrix<f64>) -> f64 {
        let beta = basis.transpose() * (mass * snap);
        let r = snap - basis * beta;
        let mr = mass * &r;
        (0..snap.ncols())
            .map(|j| r.column(j).dot(&mr.column(j)))
            .sum::<f64>()
            / snap.ncols() as f64
    }

    #[test]
    fn single_snapshot() {
        let bd = boundary();
        let w = random_snapshots(bd.n_dofs(), 1, 1);
        let b = pod(&w, &bd.mass, PodSize::Count(1), 1, "").unwrap();
        let wc = w.column(0).into_owned();
        let norm = bd.norm(&wc);
        assert!((b.eigenvalues[0] - norm * norm).abs() < 1e-12 * norm * norm);
        let expected = &wc / norm;
        let got = b.basis.column(0).into_owned();
        assert!((&got - &expected).amax() < 1e-12 || (&got + &expected).amax() < 1e-12);
    }

    #[test]
    fn duplicated_snapshots_have_rank_one() {
        let bd = boundary();
        let w = random_snapshots(bd.n_dofs(), 1, 2);
        let both = DMatrix::from_columns(&[w.column(0), w.column(0)]);
        let b = pod(&both, &bd.mass, PodSize::Tolerance(1e-6), 1, "").unwrap();
        assert_eq!(b.n_rb(), 1);
        assert!(b.eigenvalues[1].abs() < 1e-12 * b.eigenvalues[0]);
        assert!(pod_error(&b, 1).unwrap() < 1e-12 * b.eigenvalues[0]);
    }

    #[test]
    fn projection_error_equals_eigenvalue_tail() {
        let bd = boundary();
        let snap = random_snapshots(bd.n_dofs(), 10, 3);
        let b = pod(&snap, &bd.mass, PodSize::Count(10), 1, "").unwrap();
        assert!(b.orthonormality_defect(&bd.mass) < 1e-10);
        for n in 0..=10 {
            let direct = mse(&snap, &b.basis.columns(0, n).into_owned(), &bd.mass);
            let tail = pod_error(&b, n).unwrap();
            assert!((direct - tail).abs() <= 1e-10 * tail.max(1e-300) || n == 10);
        }
        let total: f64 = b.eigenvalues.iter().sum();
        let mean_norm: f64 = (0..10)
            .map(|j| bd.norm(&snap.column(j).into_owned()).powi(2))
            .sum::<f64>()
            / 10.0;
        assert!((total - mean_norm).abs() < 1e-10 * mean_norm);
        assert!((pod_error(&b, 0).unwrap() - mean_norm).abs() < 1e-10 * mean_norm);
        assert!(pod_error(&b, 10).unwrap() == 0.0);
        assert!(pod_error(&b, 11).is_err());
    }

    #[test]
    fn tolerance_rule_is_strict() {
        let bd = boundary();
        let snap = random_snapshots(bd.n_dofs(), 6, 4);
        let b = pod(&snap, &bd.mass, PodSize::Count(6), 1, "").unwrap();
        let total: f64 = b.eigenvalues.iter().sum();
        // discarded energy after two modes, used as the tolerance itself
        let tol = 1.0 - (b.eigenvalues[0] + b.eigenvalues[1]) / total;
        let t = pod(&snap, &bd.mass, PodSize::Tolerance(tol), 1, "").unwrap();
        assert_eq!(t.n_rb(), 3);
        let t = pod(&snap, &bd.mass, PodSize::Tolerance(tol * 1.000001), 1, "").unwrap();
        assert_eq!(t.n_rb(), 2);
    }

    #[test]
    fn pod_beats_random_bases() {
        let bd = boundary();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for ns in [3, 5, 8] {
            let snap = random_snapshots(bd.n_dofs(), ns, ns as u64);
            let b = pod(&snap, &bd.mass, PodSize::Count(2), 1, "").unwrap();
            for n in [1, 2] {
                let best = mse(&snap, &b.basis.columns(0, n).into_owned(), &bd.mass);
                for _ in 0..200 {
                    // random M-orthonormal candidates from random combinations
                    let cand = random_snapshots(bd.n_dofs(), n, rng.random());
                    let q = pod(&cand, &bd.mass, PodSize::Count(n), 1, "").unwrap();
                    assert!(best <= mse(&snap, &q.basis, &bd.mass) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn projection_identities() {
        let bd = boundary();
        let snap = random_snapshots(bd.n_dofs(), 5, 5);
        let b = pod(&snap, &bd.mass, PodSize::Count(3), 1, "").unwrap();
        let xi1 = b.basis.column(0).into_owned();
        let beta = project(&xi1, &b, &bd.mass).unwrap();
        assert!((beta - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-12);
        let w = random_snapshots(bd.n_dofs(), 1, 6).column(0).into_owned();
        let beta = project(&w, &b, &bd.mass).unwrap();
        let r = &w - reconstruct(&beta, &b).unwrap();
        let lhs = bd.norm(&w).powi(2);
        let rhs = beta.norm_squared() + bd.norm(&r).powi(2);
        assert!((lhs - rhs).abs() < 1e-12 * lhs);
        // orthogonal complement projects to zero
        assert!(project(&r, &b, &bd.mass).unwrap().amax() < 1e-12);
        assert!(project(&DVector::zeros(3), &b, &bd.mass).is_err());
    }

    #[test]
    fn rotation_keeps_orthonormality() {
        let bd = boundary();
        let snap = random_snapshots(bd.n_dofs(), 6, 7);
        let b = pod(&snap, &bd.mass, PodSize::Count(4), 1, "").unwrap();
        let mut r = rotate_basis(&b, &bd).unwrap();
        assert!(r.orthonormality_defect(&bd.mass) < 1e-12);
        for _ in 0..3 {
            r = rotate_basis(&r, &bd).unwrap();
        }
        assert_eq!(r.basis, b.basis);
    }

    #[test]
    fn admissibility_correction_of_affine_modes() {
        let bd = boundary();
        let a = Matrix2::new(0.4, 0.9, -0.3, 0.1);
        let trace = bd.affine_trace(&a);
        let basis = ReducedBasis {
            basis: DMatrix::from_columns(&[trace.column(0)]),
            eigenvalues: vec![1.0],
            load: 1,
            mesh_hash: String::new(),
        };
        let (fixed, strains) = admissibility_correct(&basis, &bd).unwrap();
        let sym = 0.5 * (a + a.transpose());
        assert!((voigt_tensor(&strains[0]) - sym).amax() < 1e-14);
        let col = fixed.basis.column(0).into_owned();
        assert!(bd.symmetric_moment(&col).amax() < 1e-14);

        // a mode with zero moment is left untouched
        let (again, e) = admissibility_correct(&fixed, &bd).unwrap();
        assert!(e[0].amax() < 1e-14);
        assert!((again.basis - fixed.basis).amax() < 1e-14);
    }
}
