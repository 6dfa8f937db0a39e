//! Linear systems with Dirichlet values, periodic identification and a handful of
//! dense multiplier rows.
//!
//! Dirichlet and periodic (slave) DOFs are eliminated. The remaining operator may
//! still carry rigid-body modes; those are removed by pinning as many DOFs as there
//! are surviving modes and carrying the mode amplitudes as extra unknowns in the
//! small dense Schur system of the multipliers. The pinned operator is SPD and is
//! factorised once by a sparse Cholesky, so several right-hand sides (or Dirichlet
//! data) share one factorisation.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub coefficients: Vec<(usize, f64)>,
    pub target: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    /// `(dof, value)` pairs.
    pub dirichlet: Vec<(usize, f64)>,
    /// `(slave dof, master dof)` identifications `u[slave] = u[master]`.
    pub periodic: Vec<(usize, usize)>,
    pub rows: Vec<ConstraintRow>,
}

impl Constraints {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub stiffness: CsrMatrix<f64>,
    pub rhs: DVector<f64>,
    pub constraints: Constraints,
    /// Candidate nullspace of the unconstrained stiffness (columns).
    pub rigid_modes: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: DVector<f64>,
    pub multipliers: DVector<f64>,
    /// Relative residual of the reduced KKT system.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DofKind {
    Dirichlet(usize),
    Reduced(usize),
}

/// Factorised constrained operator.
pub struct Factorization {
    n_dofs: usize,
    kind: Vec<DofKind>,
    n_reduced: usize,
    dirichlet_dofs: Vec<usize>,
    reduced_k: CsrMatrix<f64>,
    /// `(reduced row, dirichlet index, value)` couplings used to lift Dirichlet data.
    lift: Vec<(usize, usize, f64)>,
    null_basis: DMatrix<f64>,
    /// `v` index -> reduced index, for unpinned reduced DOFs (in RCM order).
    v_to_reduced: Vec<usize>,
    cholesky: Option<CscCholesky<f64>>,
    rows_reduced: Vec<Vec<(usize, f64)>>,
    rows_dirichlet: Vec<Vec<(usize, f64)>>,
    z: DMatrix<f64>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Factorization {
    pub fn new(
        stiffness: &CsrMatrix<f64>,
        constraints: &Constraints,
        rigid_modes: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = stiffness.nrows();
        if stiffness.ncols() != n {
            return Err(invalid("stiffness must be square"));
        }
        if rigid_modes.nrows() != n && rigid_modes.ncols() > 0 {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rigid_modes.nrows(),
                context: "rigid modes",
            });
        }

        // --- classify DOFs
        let mut master: Vec<usize> = (0..n).collect();
        for &(s, m) in &constraints.periodic {
            if s >= n || m >= n {
                return Err(invalid("periodic pair out of range"));
            }
            master[s] = m;
        }
        for i in 0..n {
            let mut m = master[i];
            let mut hops = 0;
            while master[m] != m {
                m = master[m];
                hops += 1;
                if hops > n {
                    return Err(invalid("cyclic periodic identification"));
                }
            }
            master[i] = m;
        }
        let mut kind = vec![DofKind::Reduced(usize::MAX); n];
        let mut dirichlet_dofs = Vec::with_capacity(constraints.dirichlet.len());
        for (k, &(d, _)) in constraints.dirichlet.iter().enumerate() {
            if d >= n {
                return Err(invalid("Dirichlet dof out of range"));
            }
            if master[d] != d || matches!(kind[d], DofKind::Dirichlet(_)) {
                return Err(invalid(format!("dof {d} constrained twice")));
            }
            kind[d] = DofKind::Dirichlet(k);
            dirichlet_dofs.push(d);
        }
        let mut n_reduced = 0;
        for i in 0..n {
            if master[i] == i && kind[i] == DofKind::Reduced(usize::MAX) {
                kind[i] = DofKind::Reduced(n_reduced);
                n_reduced += 1;
            }
        }
        for i in 0..n {
            if master[i] != i {
                kind[i] = match kind[master[i]] {
                    DofKind::Reduced(r) => DofKind::Reduced(r),
                    DofKind::Dirichlet(_) => {
                        return Err(invalid("periodic master carries a Dirichlet value"))
                    }
                };
            }
        }

        // --- reduced operator and Dirichlet lifting
        let mut coo = CooMatrix::new(n_reduced, n_reduced);
        let mut lift = Vec::new();
        for (i, j, &v) in stiffness.triplet_iter() {
            if let DofKind::Reduced(ri) = kind[i] {
                match kind[j] {
                    DofKind::Reduced(rj) => coo.push(ri, rj, v),
                    DofKind::Dirichlet(dj) => lift.push((ri, dj, v)),
                }
            }
        }
        let reduced_k = CsrMatrix::from(&coo);

        // --- surviving rigid modes: combinations vanishing on Dirichlet DOFs and
        // consistent across periodic pairs
        let n_modes = rigid_modes.ncols();
        let null_coeffs = if n_modes == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let mut cond: Vec<Vec<f64>> = Vec::new();
            for &d in &dirichlet_dofs {
                cond.push(rigid_modes.row(d).iter().copied().collect());
            }
            for i in 0..n {
                if master[i] != i {
                    cond.push(
                        (0..n_modes)
                            .map(|c| rigid_modes[(i, c)] - rigid_modes[(master[i], c)])
                            .collect(),
                    );
                }
            }
            kernel(&cond, n_modes)
        };
        let k = null_coeffs.ncols();
        let mut null_basis = DMatrix::zeros(n_reduced, k);
        if k > 0 {
            let modes = rigid_modes * &null_coeffs;
            for i in 0..n {
                if let (DofKind::Reduced(r), true) = (kind[i], master[i] == i) {
                    for c in 0..k {
                        null_basis[(r, c)] = modes[(i, c)];
                    }
                }
            }
        }

        // --- pins: greedy pivoting on the mode rows
        let pins = choose_pins(&null_basis);
        let mut pinned = vec![false; n_reduced];
        for &p in &pins {
            pinned[p] = true;
        }
        let unpinned: Vec<usize> = (0..n_reduced).filter(|&r| !pinned[r]).collect();

        // --- RCM order on the unpinned operator, then sparse Cholesky
        let mut reduced_to_local = vec![usize::MAX; n_reduced];
        for (l, &r) in unpinned.iter().enumerate() {
            reduced_to_local[r] = l;
        }
        let nv = unpinned.len();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (i, j, _) in reduced_k.triplet_iter() {
            let (li, lj) = (reduced_to_local[i], reduced_to_local[j]);
            if li != usize::MAX && lj != usize::MAX && li != lj {
                adjacency[li].push(lj);
            }
        }
        let order = reverse_cuthill_mckee(&adjacency);
        let mut local_to_v = vec![0; nv];
        for (v, &l) in order.iter().enumerate() {
            local_to_v[l] = v;
        }
        let v_to_reduced: Vec<usize> = order.iter().map(|&l| unpinned[l]).collect();
        let mut reduced_to_v = vec![usize::MAX; n_reduced];
        for (v, &r) in v_to_reduced.iter().enumerate() {
            reduced_to_v[r] = v;
        }

        let cholesky = if nv > 0 {
            let mut coo = CooMatrix::new(nv, nv);
            for (i, j, &v) in reduced_k.triplet_iter() {
                let (vi, vj) = (reduced_to_v[i], reduced_to_v[j]);
                if vi != usize::MAX && vj != usize::MAX {
                    coo.push(vi, vj, v);
                }
            }
            let csc = CscMatrix::from(&coo);
            match CscCholesky::factor(&csc) {
                Ok(c) => Some(c),
                Err(_) => {
                    return Err(Error::Singular {
                        nullspace_dim: estimate_nullspace(&csc),
                    })
                }
            }
        } else {
            None
        };

        // --- multiplier rows in reduced coordinates
        let m = constraints.rows.len();
        let mut rows_reduced = Vec::with_capacity(m);
        let mut rows_dirichlet = Vec::with_capacity(m);
        for row in &constraints.rows {
            let mut red: Vec<(usize, f64)> = Vec::new();
            let mut dir: Vec<(usize, f64)> = Vec::new();
            for &(d, c) in &row.coefficients {
                if d >= n {
                    return Err(invalid("constraint row dof out of range"));
                }
                match kind[d] {
                    DofKind::Reduced(r) => red.push((r, c)),
                    DofKind::Dirichlet(k) => dir.push((k, c)),
                }
            }
            red.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(red.len());
            for (r, c) in red {
                match merged.last_mut() {
                    Some(last) if last.0 == r => last.1 += c,
                    _ => merged.push((r, c)),
                }
            }
            rows_reduced.push(merged);
            rows_dirichlet.push(dir);
        }

        // Z = K_vv^{-1} C_v^T
        let mut ct = DMatrix::zeros(nv, m);
        for (q, row) in rows_reduced.iter().enumerate() {
            for &(r, c) in row {
                let v = reduced_to_v[r];
                if v != usize::MAX {
                    ct[(v, q)] += c;
                }
            }
        }
        let z = match &cholesky {
            Some(ch) if m > 0 => ch.solve(&ct),
            _ => DMatrix::zeros(nv, m),
        };

        // Schur system [[-C_v Z, C N], [(C N)^T, 0]]
        let size = m + k;
        let schur = if size > 0 {
            let mut s = DMatrix::zeros(size, size);
            let cz = ct.transpose() * &z;
            for a in 0..m {
                for b in 0..m {
                    s[(a, b)] = -cz[(a, b)];
                }
                for c in 0..k {
                    let cn: f64 = rows_reduced[a]
                        .iter()
                        .map(|&(r, coef)| coef * null_basis[(r, c)])
                        .sum();
                    s[(a, m + c)] = cn;
                    s[(m + c, a)] = cn;
                }
            }
            let sv = s.clone().singular_values();
            let smax = sv.max();
            let deficient = sv.iter().filter(|&&x| !(x > 1e-12 * smax)).count();
            if deficient > 0 || smax == 0.0 {
                return Err(Error::Singular {
                    nullspace_dim: deficient.max(1),
                });
            }
            Some(s.lu())
        } else {
            None
        };

        Ok(Self {
            n_dofs: n,
            kind,
            n_reduced,
            dirichlet_dofs,
            reduced_k,
            lift,
            null_basis,
            v_to_reduced,
            cholesky,
            rows_reduced,
            rows_dirichlet,
            z,
            schur,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Number of rigid modes left after elimination (resolved by multipliers).
    pub fn surviving_modes(&self) -> usize {
        self.null_basis.ncols()
    }

    /// Solves with load `rhs`; Dirichlet values and row targets come from
    /// `constraints`, which must have the structure used at factorisation.
    pub fn solve(&self, rhs: &DVector<f64>, constraints: &Constraints) -> Result<Solution> {
        if rhs.len() != self.n_dofs {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs,
                actual: rhs.len(),
                context: "right-hand side",
            });
        }
        if constraints.dirichlet.len() != self.dirichlet_dofs.len()
            || constraints.rows.len() != self.rows_reduced.len()
            || constraints
                .dirichlet
                .iter()
                .zip(&self.dirichlet_dofs)
                .any(|(a, &b)| a.0 != b)
        {
            return Err(invalid("constraint structure differs from the factorisation"));
        }
        let ud: Vec<f64> = constraints.dirichlet.iter().map(|d| d.1).collect();

        let mut fr = DVector::zeros(self.n_reduced);
        for i in 0..self.n_dofs {
            if let DofKind::Reduced(r) = self.kind[i] {
                fr[r] += rhs[i];
            }
        }
        for &(r, d, v) in &self.lift {
            fr[r] -= v * ud[d];
        }
        let m = self.rows_reduced.len();
        let k = self.null_basis.ncols();
        let g: Vec<f64> = constraints
            .rows
            .iter()
            .zip(&self.rows_dirichlet)
            .map(|(row, dir)| row.target - dir.iter().map(|&(d, c)| c * ud[d]).sum::<f64>())
            .collect();

        let nv = self.v_to_reduced.len();
        let fv = DVector::from_iterator(nv, self.v_to_reduced.iter().map(|&r| fr[r]));
        let v0 = match &self.cholesky {
            Some(ch) => ch.solve(&fv).column(0).into_owned(),
            None => DVector::zeros(0),
        };

        let mut v = v0.clone();
        let mut lambda = DVector::zeros(m);
        let mut amp = DVector::zeros(k);
        if let Some(schur) = &self.schur {
            let mut small = DVector::zeros(m + k);
            let mut reduced_v0 = DVector::zeros(self.n_reduced);
            for (vi, &r) in self.v_to_reduced.iter().enumerate() {
                reduced_v0[r] = v0[vi];
            }
            for q in 0..m {
                let cv0: f64 = self.rows_reduced[q]
                    .iter()
                    .map(|&(r, c)| c * reduced_v0[r])
                    .sum();
                small[q] = g[q] - cv0;
            }
            for c in 0..k {
                small[m + c] = self.null_basis.column(c).dot(&fr);
            }
            let sol = schur
                .solve(&small)
                .ok_or(Error::Singular { nullspace_dim: 1 })?;
            lambda = sol.rows(0, m).into_owned();
            amp = sol.rows(m, k).into_owned();
            if m > 0 {
                v -= &self.z * &lambda;
            }
        }

        let mut x = &self.null_basis * &amp;
        for (vi, &r) in self.v_to_reduced.iter().enumerate() {
            x[r] += v[vi];
        }

        // residual of K_r x + C_r^T lambda - f_r
        let kx = &self.reduced_k * &x;
        let mut ctl = DVector::zeros(self.n_reduced);
        for (q, row) in self.rows_reduced.iter().enumerate() {
            for &(r, c) in row {
                ctl[r] += c * lambda[q];
            }
        }
        let res = (&kx + &ctl - &fr).norm();
        let scale = fr.norm().max(kx.norm()).max(ctl.norm());
        let residual = if scale > 0.0 { res / scale } else { 0.0 };

        let mut field = DVector::zeros(self.n_dofs);
        for i in 0..self.n_dofs {
            field[i] = match self.kind[i] {
                DofKind::Reduced(r) => x[r],
                DofKind::Dirichlet(d) => ud[d],
            };
        }
        Ok(Solution {
            field,
            multipliers: lambda,
            residual,
        })
    }
}

pub fn solve(sys: &LinearSystem) -> Result<Solution> {
    Factorization::new(&sys.stiffness, &sys.constraints, &sys.rigid_modes)?
        .solve(&sys.rhs, &sys.constraints)
}

/// Orthonormal basis (columns) of the right kernel of the rows in `cond`.
fn kernel(cond: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    if cond.is_empty() {
        return DMatrix::identity(n, n);
    }
    // kernel of A equals the kernel of A^T A (n x n)
    let mut ata = DMatrix::<f64>::zeros(n, n);
    for row in cond {
        for a in 0..n {
            for b in 0..n {
                ata[(a, b)] += row[a] * row[b];
            }
        }
    }
    let eig = ata.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cols: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-12 * max.max(1e-300))
        .collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

/// Rows whose restriction of `basis` is well conditioned, by greedy pivoting.
fn choose_pins(basis: &DMatrix<f64>) -> Vec<usize> {
    let k = basis.ncols();
    let mut work = basis.clone();
    let mut pins = Vec::with_capacity(k);
    for c in 0..k {
        let mut best = (0usize, -1.0f64);
        for r in 0..work.nrows() {
            let v = work[(r, c)].abs();
            if v > best.1 + 1e-14 * best.1.abs() && !pins.contains(&r) {
                best = (r, v);
            }
        }
        let (p, piv) = (best.0, work[(best.0, c)]);
        pins.push(p);
        for c2 in (c + 1)..k {
            let f = work[(p, c2)] / piv;
            for r in 0..work.nrows() {
                work[(r, c2)] -= f * work[(r, c)];
            }
        }
    }
    pins
}

/// Reverse Cuthill-McKee ordering of a graph given by adjacency lists.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let node = order[head];
            head += 1;
            let mut next: Vec<usize> = adjacency[node]
                .iter()
                .copied()
                .filter(|&j| !visited[j])
                .collect();
            next.sort_by_key(|&j| (degree[j], j));
            next.dedup();
            for j in next {
                if !visited[j] {
                    visited[j] = true;
                    order.push(j);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Rough nullspace dimension of a matrix that failed to factorise.
fn estimate_nullspace(a: &CscMatrix<f64>) -> usize {
    if a.nrows() > 1500 {
        return 1;
    }
    let mut dense = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, &v) in a.triplet_iter() {
        dense[(i, j)] = v;
    }
    let eig = dense.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    eig.eigenvalues
        .iter()
        .filter(|&&v| v <= 1e-10 * max)
        .count()
        .max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn csr_from_dense(a: &DMatrix<f64>) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    coo.push(i, j, a[(i, j)]);
                }
            }
        }
        CsrMatrix::from(&coo)
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * n as f64
    }

    #[test]
    fn unconstrained_spd_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(6, &mut rng);
        let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let sys = LinearSystem {
            stiffness: csr_from_dense(&a),
            rhs: b.clone(),
            constraints: Constraints::default(),
            rigid_modes: DMatrix::zeros(6, 0),
        };
        let x = solve(&sys).unwrap().field;
        let oracle = a.clone().lu().solve(&b).unwrap();
        assert!((&x - &oracle).norm() / oracle.norm() < 1e-12);
    }

    #[test]
    fn multipliers_and_dirichlet_match_dense_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let a = random_spd(n, &mut rng);
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let constraints = Constraints {
            dirichlet: vec![(2, 0.3)],
            periodic: vec![(7, 4)],
            rows: vec![ConstraintRow {
                coefficients: vec![(0, 1.0), (1, -2.0), (5, 0.5), (2, 1.0)],
                target: 0.1,
            }],
        };
        let sol = solve(&LinearSystem {
            stiffness: csr_from_dense(&a),
            rhs: b.clone(),
            constraints,
            rigid_modes: DMatrix::zeros(n, 0),
        })
        .unwrap();

        // dense oracle: unknowns u (n) with T mapping, equality rows, multipliers
        // rows: u2 = 0.3, u7 - u4 = 0, row above
        let mut c = DMatrix::zeros(3, n);
        c[(0, 2)] = 1.0;
        c[(1, 7)] = 1.0;
        c[(1, 4)] = -1.0;
        c[(2, 0)] = 1.0;
        c[(2, 1)] = -2.0;
        c[(2, 5)] = 0.5;
        c[(2, 2)] = 1.0;
        // the periodic identification is a constraint on the trial and test spaces:
        // project with T (u = T x) rather than adding a multiplier
        let keep: Vec<usize> = (0..n).filter(|&i| i != 7).collect();
        let mut t = DMatrix::zeros(n, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            t[(i, col)] = 1.0;
        }
        t[(7, keep.iter().position(|&i| i == 4).unwrap())] = 1.0;
        let ar = t.transpose() * &a * &t;
        let br = t.transpose() * &b;
        let cr = DMatrix::from_rows(&[
            (c.row(0) * &t).into_owned(),
            (c.row(2) * &t).into_owned(),
        ]);
        let nr = keep.len();
        let mut kkt = DMatrix::zeros(nr + 2, nr + 2);
        kkt.view_mut((0, 0), (nr, nr)).copy_from(&ar);
        kkt.view_mut((0, nr), (nr, 2)).copy_from(&cr.transpose());
        kkt.view_mut((nr, 0), (2, nr)).copy_from(&cr);
        let mut rhs = DVector::zeros(nr + 2);
        rhs.rows_mut(0, nr).copy_from(&br);
        rhs[nr] = 0.3;
        rhs[nr + 1] = 0.1;
        let z = kkt.lu().solve(&rhs).unwrap();
        let u = &t * z.rows(0, nr);
        assert!((&sol.field - &u).norm() / u.norm() < 1e-12);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn floating_operator_needs_gauge_rows() {
        // 1D chain with a constant nullspace
        let n = 5;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i)] += 1.0;
            a[(i + 1, i + 1)] += 1.0;
            a[(i, i + 1)] -= 1.0;
            a[(i + 1, i)] -= 1.0;
        }
        let modes = DMatrix::from_element(n, 1, 1.0);
        let rhs = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, -1.0]);
        let bare = LinearSystem {
            stiffness: csr_from_dense(&a),
            rhs: rhs.clone(),
            constraints: Constraints::default(),
            rigid_modes: modes.clone(),
        };
        match solve(&bare) {
            Err(Error::Singular { nullspace_dim }) => assert_eq!(nullspace_dim, 1),
            other => panic!("expected singular, got {other:?}"),
        }
        let gauged = LinearSystem {
            constraints: Constraints {
                rows: vec![ConstraintRow {
                    coefficients: (0..n).map(|i| (i, 1.0)).collect(),
                    target: 0.0,
                }],
                ..Default::default()
            },
            ..bare
        };
        let sol = solve(&gauged).unwrap();
        assert!(sol.field.sum().abs() < 1e-13);
        assert!((sol.field[0] - sol.field[1] - 1.0).abs() < 1e-13);
        assert!(sol.residual < 1e-13);
    }

    #[test]
    fn fully_constrained_system_is_dirichlet_data() {
        let a = DMatrix::identity(3, 3);
        let sol = solve(&LinearSystem {
            stiffness: csr_from_dense(&a),
            rhs: DVector::from_element(3, 1.0),
            constraints: Constraints {
                dirichlet: vec![(0, 0.0), (1, 0.0), (2, 0.0)],
                ..Default::default()
            },
            rigid_modes: DMatrix::zeros(3, 0),
        })
        .unwrap();
        assert_eq!(sol.field, DVector::zeros(3));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let adj = vec![vec![1, 3], vec![0, 2], vec![1], vec![0], vec![]];
        let mut o = reverse_cuthill_mckee(&adj);
        o.sort();
        assert_eq!(o, vec![0, 1, 2, 3, 4]);
    }
}
