//! Macroscale elasticity, FE² coupling and the clamped-bar reference simulation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::{hf_tangent, homogenised_tangent, CellSetup, Domain};
use crate::deepbnd::{deepbnd_tangent, DeepBndModel};
use crate::error::{invalid, Error, Result};
use crate::fem::assembly::{
    assemble_stiffness, cell_strains, evaluate, l2_norm, traction_load, MaterialField,
};
use crate::fem::mesh::{build_grid_mesh, ElementOrder, Mesh, Rect, Side};
use crate::fem::{BcKind, Constraints, Factorization};
use crate::micro::{lhs_sample, radii_from_theta, LatticeConfig, Material, Microstructure};

/// Plane-stress von Mises stress of a Voigt stress.
pub fn von_mises(s: &Vector3<f64>) -> f64 {
    (s[0] * s[0] - s[0] * s[1] + s[1] * s[1] + 3.0 * s[2] * s[2])
        .max(0.0)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TangentProvider {
    Taylor,
    Linear,
    Periodic,
    Minimal,
    Hf,
    Deepbnd,
}

impl TangentProvider {
    pub const ALL: [TangentProvider; 6] = [
        TangentProvider::Taylor,
        TangentProvider::Linear,
        TangentProvider::Periodic,
        TangentProvider::Minimal,
        TangentProvider::Hf,
        TangentProvider::Deepbnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TangentProvider::Taylor => "taylor",
            TangentProvider::Linear => "linear",
            TangentProvider::Periodic => "periodic",
            TangentProvider::Minimal => "minimal",
            TangentProvider::Hf => "hf",
            TangentProvider::Deepbnd => "deepbnd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown boundary model '{s}'")))
    }

    fn classic(self) -> Option<BcKind> {
        match self {
            TangentProvider::Taylor => Some(BcKind::Taylor),
            TangentProvider::Linear => Some(BcKind::Linear),
            TangentProvider::Periodic => Some(BcKind::Periodic),
            TangentProvider::Minimal => Some(BcKind::Minimal),
            _ => None,
        }
    }
}

/// Homogenised tangent of one microstructure under a provider. Classical models act
/// on the reduced window, `Hf` is the enlarged-cell reference restricted to it.
pub fn tangent(
    setup: &CellSetup,
    micro: &Microstructure,
    provider: TangentProvider,
    model: Option<&DeepBndModel>,
) -> Result<Matrix3<f64>> {
    if let Some(kind) = provider.classic() {
        return homogenised_tangent(setup, micro, kind, Domain::Reduced);
    }
    match provider {
        TangentProvider::Hf => hf_tangent(setup, micro),
        _ => {
            let model = model.ok_or_else(|| invalid("the deepbnd provider needs a model bundle"))?;
            deepbnd_tangent(setup, micro, &micro.radii, model, false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletSide {
    pub side: Side,
    /// Prescribed value per component; `None` leaves the component free.
    pub value: [Option<f64>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub name: char,
    pub point: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct MacroProblem {
    pub name: String,
    pub mesh: Mesh,
    pub dirichlet: Vec<DirichletSide>,
    pub traction: Vec<(Side, [f64; 2])>,
    pub probes: Vec<Probe>,
}

/// Standard 48 x 44 / 16 Cook trapezoid scaled by 1/48, clamped on the left, loaded
/// in shear on the right.
pub fn cook_problem(divisions: usize, traction: [f64; 2]) -> Result<MacroProblem> {
    let s = 1.0 / 48.0;
    let map = move |p: [f64; 2]| {
        let (xi, eta) = (p[0], p[1]);
        let lower = 44.0 * xi;
        let upper = 44.0 + 16.0 * xi;
        [48.0 * xi * s, (lower + eta * (upper - lower)) * s]
    };
    let mesh = build_grid_mesh(divisions, divisions, ElementOrder::Linear, Rect::unit())?.mapped(map)?;
    let probe = |name, xi: f64, eta: f64| Probe {
        name,
        point: map([xi, eta]),
    };
    Ok(MacroProblem {
        name: "cook".into(),
        mesh,
        dirichlet: vec![DirichletSide {
            side: Side::Left,
            value: [Some(0.0), Some(0.0)],
        }],
        traction: vec![(Side::Right, traction)],
        probes: vec![
            probe('A', 1.0, 1.0),
            probe('B', 0.5, 0.5),
            probe('C', 0.25, 0.25),
            probe('D', 0.75, 0.75),
        ],
    })
}

pub const BAR_LENGTH: f64 = 4.0;
pub const BAR_HEIGHT: f64 = 1.0;

/// `[0, 4] x [0, 1]` bar clamped on the left with a traction on the right.
pub fn bar_problem(nx: usize, ny: usize, traction: [f64; 2]) -> Result<MacroProblem> {
    let mesh = build_grid_mesh(
        nx,
        ny,
        ElementOrder::Linear,
        Rect::new(0.0, 0.0, BAR_LENGTH, BAR_HEIGHT),
    )?;
    Ok(MacroProblem {
        name: "bar".into(),
        mesh,
        dirichlet: vec![DirichletSide {
            side: Side::Left,
            value: [Some(0.0), Some(0.0)],
        }],
        traction: vec![(Side::Right, traction)],
        probes: bar_probes(),
    })
}

pub fn bar_probes() -> Vec<Probe> {
    vec![
        Probe {
            name: 'A',
            point: [BAR_LENGTH, 0.5 * BAR_HEIGHT],
        },
        Probe {
            name: 'B',
            point: [0.5 * BAR_LENGTH, 0.5 * BAR_HEIGHT],
        },
        Probe {
            name: 'C',
            point: [0.25 * BAR_LENGTH, 0.25 * BAR_HEIGHT],
        },
        Probe {
            name: 'D',
            point: [0.75 * BAR_LENGTH, 0.75 * BAR_HEIGHT],
        },
    ]
}

#[derive(Debug, Clone)]
pub struct MacroSolution {
    pub mesh: Mesh,
    pub u: DVector<f64>,
    /// Per-cell Voigt stress.
    pub stress: Vec<Vector3<f64>>,
    pub von_mises: Vec<f64>,
}

impl MacroSolution {
    pub fn displacement_at(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        evaluate(&self.mesh, &self.u, p)
    }

    pub fn von_mises_at(&self, p: [f64; 2]) -> Option<f64> {
        self.mesh.locate(p).map(|(c, _)| self.von_mises[c])
    }
}

fn dirichlet_constraints(prob: &MacroProblem) -> Result<Constraints> {
    let mut fixed = std::collections::BTreeMap::new();
    for d in &prob.dirichlet {
        for node in prob.mesh.nodes_on_side(d.side) {
            for (c, v) in d.value.iter().enumerate() {
                if let Some(v) = v {
                    fixed.insert(2 * node + c, *v);
                }
            }
        }
    }
    if fixed.is_empty() {
        return Err(invalid("macro problem needs a Dirichlet boundary"));
    }
    Ok(Constraints {
        dirichlet: fixed.into_iter().collect(),
        ..Default::default()
    })
}

/// Elasticity solve with one tangent per cell.
pub fn solve_macro(prob: &MacroProblem, tangents: &[Matrix3<f64>]) -> Result<MacroSolution> {
    let mesh = &prob.mesh;
    if tangents.len() != mesh.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_cells(),
            actual: tangents.len(),
            context: "one tangent per macro element",
        });
    }
    for (k, c) in tangents.iter().enumerate() {
        let sym = (c + c.transpose()) * 0.5;
        let min = sym.symmetric_eigenvalues().min();
        if !(min > 0.0) {
            return Err(invalid(format!("tangent of element {k} is not positive definite")));
        }
    }
    let field = MaterialField::per_cell(mesh, tangents)?;
    solve_with_field(prob, &field, |c| tangents[c])
}

fn solve_with_field(
    prob: &MacroProblem,
    field: &MaterialField,
    cell_tangent: impl Fn(usize) -> Matrix3<f64>,
) -> Result<MacroSolution> {
    let mesh = &prob.mesh;
    let k = assemble_stiffness(mesh, field)?;
    let mut f = DVector::zeros(mesh.n_dofs());
    for (side, t) in &prob.traction {
        f += traction_load(mesh, &[*side], *t);
    }
    let constraints = dirichlet_constraints(prob)?;
    let fact = Factorization::new(&k, &constraints, &DMatrix::zeros(mesh.n_dofs(), 0))?;
    let sol = fact.solve(&f, &constraints)?;
    let strains = cell_strains(mesh, &sol.field);
    let stress: Vec<Vector3<f64>> = strains
        .iter()
        .enumerate()
        .map(|(c, e)| cell_tangent(c) * e)
        .collect();
    let von_mises = stress.iter().map(von_mises).collect();
    Ok(MacroSolution {
        mesh: mesh.clone(),
        u: sol.field,
        stress,
        von_mises,
    })
}

/// How macro elements receive microstructures.
#[derive(Debug, Clone)]
pub enum MicroAssignment {
    /// One distinct microstructure per element.
    PerElement(Vec<Microstructure>),
    /// Elements sharing a window share the microstructure: `(window per element, windows)`.
    Windows {
        element_window: Vec<usize>,
        windows: Vec<Microstructure>,
    },
}

impl MicroAssignment {
    /// Fresh LHS draw, one row per element (no repetition).
    pub fn random_draw(lattice: &LatticeConfig, n_elements: usize, seed: u64) -> Result<Self> {
        let s = lhs_sample(n_elements, lattice.n_inclusions(), seed)?;
        let micro = s
            .iter_rows()
            .map(|row| Microstructure::from_theta(lattice.clone(), row))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::PerElement(micro))
    }

    fn groups(&self) -> (Vec<usize>, &[Microstructure]) {
        match self {
            MicroAssignment::PerElement(m) => ((0..m.len()).collect(), m),
            MicroAssignment::Windows {
                element_window,
                windows,
            } => (element_window.clone(), windows),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fe2Outcome {
    pub solution: MacroSolution,
    pub tangents: Vec<Matrix3<f64>>,
    pub provider: TangentProvider,
}

pub fn fe2(
    prob: &MacroProblem,
    assignment: &MicroAssignment,
    provider: TangentProvider,
    setup: &CellSetup,
    model: Option<&DeepBndModel>,
) -> Result<Fe2Outcome> {
    let (element_group, micro) = assignment.groups();
    if element_group.len() != prob.mesh.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: prob.mesh.n_cells(),
            actual: element_group.len(),
            context: "microstructure assignment",
        });
    }
    let group_tangents = micro
        .par_iter()
        .map(|m| tangent(setup, m, provider, model))
        .collect::<Result<Vec<_>>>()?;
    let tangents: Vec<Matrix3<f64>> = element_group.iter().map(|&g| group_tangents[g]).collect();
    let solution = solve_macro(prob, &tangents)?;
    Ok(Fe2Outcome {
        solution,
        tangents,
        provider,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsConfig {
    /// Blocks across the bar height; the length holds four times as many.
    pub ny: usize,
    pub seed: u64,
    /// Mesh squares per block side (h = block / divisions).
    pub divisions_per_block: usize,
    pub traction: [f64; 2],
    /// Largest number of DOFs accepted.
    pub max_dofs: usize,
}

impl Default for DnsConfig {
    fn default() -> Self {
        Self {
            ny: 4,
            seed: 1,
            divisions_per_block: 15,
            traction: [0.0, -0.2],
            max_dofs: 400_000,
        }
    }
}

/// Bar filled with one inclusion per square block.
#[derive(Debug, Clone)]
pub struct BarMicrostructure {
    pub nx: usize,
    pub ny: usize,
    pub block: f64,
    /// Unit-cell lattice the blocks are scaled from.
    pub lattice: LatticeConfig,
    /// Sampling coordinate per block, row-major from the bottom-left.
    pub theta: Vec<f64>,
    radii: Vec<f64>,
}

impl BarMicrostructure {
    pub fn new(ny: usize, lattice: LatticeConfig, theta: Vec<f64>) -> Result<Self> {
        let nx = 4 * ny;
        if ny == 0 || theta.len() != nx * ny {
            return Err(invalid("one sampling coordinate per bar block required"));
        }
        let block = BAR_HEIGHT / ny as f64;
        // a lattice cell of the unit cell is scaled onto one block
        let scale = block / lattice.spacing();
        let radii = radii_from_theta(&theta, lattice.r_min * scale, lattice.r_max * scale)?;
        Ok(Self {
            nx,
            ny,
            block,
            lattice,
            theta,
            radii,
        })
    }

    pub fn random(ny: usize, lattice: LatticeConfig, seed: u64) -> Result<Self> {
        let s = crate::micro::uniform_sample(1, 4 * ny * ny, seed)?;
        Self::new(ny, lattice, s.theta)
    }

    pub fn block_radius(&self, row: usize, col: usize) -> f64 {
        self.radii[row * self.nx + col]
    }

    /// Closest `n x n` window of blocks to `p`, as `(row0, col0)`.
    pub fn window_for(&self, p: [f64; 2], n: usize) -> Result<(usize, usize)> {
        if n > self.ny || n > self.nx {
            return Err(invalid("window larger than the bar"));
        }
        let pick = |coord: f64, count: usize| {
            let start = (coord / self.block - 0.5 * n as f64).round();
            start.clamp(0.0, (count - n) as f64) as usize
        };
        Ok((pick(p[1], self.ny), pick(p[0], self.nx)))
    }

    /// Window of blocks as a unit-cell microstructure.
    pub fn window(&self, row0: usize, col0: usize) -> Result<Microstructure> {
        let n = self.lattice.n_side;
        let mut theta = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                theta.push(self.theta[(row0 + i) * self.nx + col0 + j]);
            }
        }
        Microstructure::from_theta(self.lattice.clone(), &theta)
    }

    /// Window assignment for every cell of a macro mesh.
    pub fn assignment(&self, mesh: &Mesh) -> Result<MicroAssignment> {
        let n = self.lattice.n_side;
        let mut index = std::collections::BTreeMap::new();
        let mut windows = Vec::new();
        let mut element_window = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let v = mesh.cell_vertices(c);
            let centroid = [
                (v[0][0] + v[1][0] + v[2][0]) / 3.0,
                (v[0][1] + v[1][1] + v[2][1]) / 3.0,
            ];
            let key = self.window_for(centroid, n)?;
            let next = windows.len();
            let id = *index.entry(key).or_insert(next);
            if id == next {
                windows.push(self.window(key.0, key.1)?);
            }
            element_window.push(id);
        }
        Ok(MicroAssignment::Windows {
            element_window,
            windows,
        })
    }
}

impl Material for BarMicrostructure {
    fn voigt_at(&self, y: [f64; 2]) -> Matrix3<f64> {
        let col = ((y[0] / self.block).floor().max(0.0) as usize).min(self.nx - 1);
        let row = ((y[1] / self.block).floor().max(0.0) as usize).min(self.ny - 1);
        let cx = (col as f64 + 0.5) * self.block;
        let cy = (row as f64 + 0.5) * self.block;
        let r = self.block_radius(row, col);
        let (dx, dy) = (y[0] - cx, y[1] - cy);
        let chi = if dx * dx + dy * dy < r * r {
            self.lattice.gamma
        } else {
            1.0
        };
        self.lattice.lame.voigt() * chi
    }
}

/// Fully resolved solve of the heterogeneous bar.
pub fn dns(bar: &BarMicrostructure, cfg: &DnsConfig) -> Result<MacroSolution> {
    dns_with_material(bar, cfg, bar)
}

/// Same harness with an arbitrary material field on the bar mesh.
pub fn dns_with_material(
    bar: &BarMicrostructure,
    cfg: &DnsConfig,
    material: &dyn Material,
) -> Result<MacroSolution> {
    let nx = bar.nx * cfg.divisions_per_block;
    let ny = bar.ny * cfg.divisions_per_block;
    let nodes = (nx + 1) * (ny + 1) + nx * ny;
    if 2 * nodes > cfg.max_dofs {
        return Err(Error::MeshTooLarge {
            dofs: 2 * nodes,
            limit: cfg.max_dofs,
        });
    }
    let prob = bar_problem(nx, ny, cfg.traction)?;
    let field = MaterialField::sample(&prob.mesh, material);
    let mesh = &prob.mesh;
    let third = 1.0 / 3.0;
    let centroid_tangent = |c: usize| {
        let v = mesh.cell_vertices(c);
        material.voigt_at([
            third * (v[0][0] + v[1][0] + v[2][0]),
            third * (v[0][1] + v[1][1] + v[2][1]),
        ])
    };
    solve_with_field(&prob, &field, centroid_tangent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case: String,
    pub metric: String,
    pub value: f64,
}

/// Relative errors of candidates against a reference: L2 displacement on the
/// reference mesh, displacement and von Mises at probes.
pub fn error_report(
    reference: &MacroSolution,
    candidates: &[(String, MacroSolution)],
    probes: &[Probe],
) -> Result<Vec<ReportRow>> {
    let ref_norm = l2_norm(&reference.mesh, &reference.u);
    let mut rows = Vec::new();
    for (name, cand) in candidates {
        let mut diff = DVector::zeros(reference.mesh.n_dofs());
        for (i, p) in reference.mesh.nodes.iter().enumerate() {
            let v = cand
                .displacement_at(*p)
                .ok_or_else(|| invalid(format!("candidate '{name}' does not cover {p:?}")))?;
            diff[2 * i] = v[0] - reference.u[2 * i];
            diff[2 * i + 1] = v[1] - reference.u[2 * i + 1];
        }
        let rel = if ref_norm > 0.0 {
            l2_norm(&reference.mesh, &diff) / ref_norm
        } else {
            l2_norm(&reference.mesh, &diff)
        };
        rows.push(ReportRow {
            case: name.clone(),
            metric: "l2_displacement_rel".into(),
            value: rel,
        });
        for probe in probes {
            let missing = || invalid(format!("probe {} outside the domain", probe.name));
            let r = reference.displacement_at(probe.point).ok_or_else(missing)?;
            let c = cand.displacement_at(probe.point).ok_or_else(missing)?;
            let rn = (r[0] * r[0] + r[1] * r[1]).sqrt();
            let dn = ((c[0] - r[0]).powi(2) + (c[1] - r[1]).powi(2)).sqrt();
            rows.push(ReportRow {
                case: name.clone(),
                metric: format!("u_{}_rel", probe.name),
                value: if rn > 0.0 { dn / rn } else { dn },
            });
            let rv = reference.von_mises_at(probe.point).ok_or_else(missing)?;
            let cv = cand.von_mises_at(probe.point).ok_or_else(missing)?;
            rows.push(ReportRow {
                case: name.clone(),
                metric: format!("vm_{}_rel", probe.name),
                value: if rv > 0.0 { (cv - rv).abs() / rv } else { (cv - rv).abs() },
            });
        }
    }
    Ok(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("case,metric,value\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.17e}\n", r.case, r.metric, r.value));
    }
    out
}
