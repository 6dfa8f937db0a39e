//! Request and response types of the service, with the synchronous handlers behind
//! each endpoint. Paths are interpreted on the machine running the handlers.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::corrector::{CellMeshConfig, CellSetup};
use crate::deepbnd::predict_bc;
use crate::error::{invalid, Result};
use crate::fem::boundary::ORDERING;
use crate::macroscale::{
    bar_problem, cook_problem, dns, fe2, tangent, BarMicrostructure, DnsConfig, MacroSolution,
    MicroAssignment, Probe, TangentProvider,
};
use crate::micro::{lhs_sample, uniform_sample, LatticeConfig, Microstructure, SampleSet, SamplingMethod};
use crate::pipeline::{
    offline_bases, offline_models, offline_snapshots, run_offline, run_online,
    validate_artifacts, with_workers, Bundle, OnlineSummary, PipelineConfig, StageOutcome,
    ValidationReport,
};
use crate::store::{save_field, save_samples, write_atomic, write_json, DatasetUse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

pub fn health() -> Health {
    Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub n: usize,
    pub dims: usize,
    pub seed: u64,
    pub method: SamplingMethod,
    /// Writes `<out>.bin` and `<out>.json` when set.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub samples: SampleSet,
    pub stratified: bool,
}

pub fn sample(req: &SampleRequest) -> Result<SampleResponse> {
    let samples = match req.method {
        SamplingMethod::Lhs => lhs_sample(req.n, req.dims, req.seed)?,
        SamplingMethod::UniformIid => uniform_sample(req.n, req.dims, req.seed)?,
    };
    if let Some(out) = &req.out {
        save_samples(out, &samples)?;
    }
    Ok(SampleResponse {
        stratified: samples.is_stratified(),
        samples,
    })
}

/// Which offline stage to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Snapshots,
    Pod,
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRequest {
    pub config: PipelineConfig,
    pub workspace: PathBuf,
    pub stage: Stage,
    /// Restricts the snapshot stage to one dataset.
    #[serde(default)]
    pub usage: Option<DatasetUse>,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineResponse {
    pub stage: StageOutcome,
    /// Set once the bundle manifest has been written.
    pub bundle: Option<PathBuf>,
    pub config_hash: String,
}

pub fn offline(req: &OfflineRequest) -> Result<OfflineResponse> {
    let cfg = &req.config;
    let root = &req.workspace;
    with_workers(req.workers, || {
        let (stage, bundle) = match req.stage {
            Stage::Snapshots => (offline_snapshots(cfg, root, req.usage)?, None),
            Stage::Pod => (offline_bases(cfg, root)?, None),
            Stage::Train => (offline_models(cfg, root)?, None),
            Stage::All => {
                let o = run_offline(cfg, root)?;
                (
                    StageOutcome {
                        artifacts: o.manifest.artifacts,
                        reused: o.reused,
                    },
                    Some(o.bundle_path),
                )
            }
        };
        Ok(OfflineResponse {
            stage,
            bundle,
            config_hash: cfg.hash()?,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub bundle: PathBuf,
    /// Inclusion radii of the enlarged cell, row-major from the bottom-left.
    pub radii: Vec<f64>,
    /// Macroscopic Voigt strain `(e11, e22, 2 e12)`.
    pub strain: [f64; 3],
    /// Leading modes used; all when unset.
    #[serde(default)]
    pub n_rb: Option<usize>,
    /// Writes the trace as a field file `<out>.bin` / `<out>.json`.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub trace: Vec<f64>,
    pub coefficients: [Vec<f64>; 3],
    pub mesh_hash: String,
    pub ordering: String,
    pub n_rb: usize,
}

pub fn predict(bundle: &Bundle, req: &PredictRequest) -> Result<PredictResponse> {
    let model = match req.n_rb {
        Some(n) => bundle.model.truncated(n)?,
        None => bundle.model.clone(),
    };
    let eps = Vector3::from(req.strain);
    let trace = predict_bc(&model, &req.radii, &eps)?;
    let coefficients = [1, 2, 3].map(|l| {
        model
            .coefficients(l, &req.radii)
            .map(|c| c.as_slice().to_vec())
    });
    let [a, b, c] = coefficients;
    let mesh_hash = bundle.setup.boundary.mesh_hash.clone();
    if let Some(out) = &req.out {
        save_field(out, &trace, &mesh_hash)?;
    }
    Ok(PredictResponse {
        trace: trace.as_slice().to_vec(),
        coefficients: [a?, b?, c?],
        mesh_hash,
        ordering: ORDERING.into(),
        n_rb: model.n_rb,
    })
}

/// Cell used when no bundle is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub lattice: LatticeConfig,
    pub mesh: CellMeshConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentRequest {
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    #[serde(default)]
    pub cell: Option<CellSpec>,
    pub radii: Vec<f64>,
    pub provider: TangentProvider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentResponse {
    /// Row-major Voigt tangent.
    pub tangent: [[f64; 3]; 3],
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

/// Bundle from the request, or the one already loaded by the caller.
fn cell_and_model<'a>(
    bundle: Option<&'a Bundle>,
    cell: Option<&CellSpec>,
) -> Result<(std::borrow::Cow<'a, CellSetup>, Option<&'a crate::deepbnd::DeepBndModel>)> {
    match (bundle, cell) {
        (Some(b), _) => Ok((std::borrow::Cow::Borrowed(&b.setup), Some(&b.model))),
        (None, Some(c)) => Ok((
            std::borrow::Cow::Owned(CellSetup::new(c.lattice.clone(), c.mesh)?),
            None,
        )),
        (None, None) => Err(invalid("either a bundle or a cell description is required")),
    }
}

pub fn homogenised(bundle: Option<&Bundle>, req: &TangentRequest) -> Result<TangentResponse> {
    let (setup, model) = cell_and_model(bundle, req.cell.as_ref())?;
    let micro = Microstructure::new(setup.lattice.clone(), req.radii.clone())?;
    let c = tangent(&setup, &micro, req.provider, model)?;
    Ok(TangentResponse { tangent: rows(&c) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroKind {
    Cook,
    Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fe2Request {
    #[serde(rename = "macro")]
    pub geometry: MacroKind,
    pub provider: TangentProvider,
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    /// Cell for classical providers when no bundle is given.
    #[serde(default)]
    pub cell: Option<CellSpec>,
    pub seed: u64,
    /// Cook: grid divisions per side. Bar: macro elements per block side.
    pub divisions: usize,
    /// Bar only: blocks across the height.
    #[serde(default = "default_ny")]
    pub ny: usize,
    #[serde(default)]
    pub traction: Option<[f64; 2]>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_ny() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeValue {
    pub name: char,
    pub point: [f64; 2],
    pub displacement: [f64; 2],
    pub von_mises: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSummary {
    pub case: String,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub mesh_hash: String,
    pub probes: Vec<ProbeValue>,
    pub von_mises: String,
}

fn summarise(case: String, sol: &MacroSolution, probes: &[Probe], out: Option<&Path>) -> Result<MacroSummary> {
    let probes = probes
        .iter()
        .map(|p| {
            let missing = || invalid(format!("probe {} outside the mesh", p.name));
            Ok(ProbeValue {
                name: p.name,
                point: p.point,
                displacement: sol.displacement_at(p.point).ok_or_else(missing)?,
                von_mises: sol.von_mises_at(p.point).ok_or_else(missing)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = MacroSummary {
        case,
        n_elements: sol.mesh.n_cells(),
        n_dofs: sol.mesh.n_dofs(),
        mesh_hash: sol.mesh.hash(),
        probes,
        von_mises: "plane-stress".into(),
    };
    if let Some(dir) = out {
        save_field(&dir.join("displacement"), &sol.u, &summary.mesh_hash)?;
        let mut csv = String::from("cell,s11,s22,s12,von_mises\n");
        for (c, (s, vm)) in sol.stress.iter().zip(&sol.von_mises).enumerate() {
            csv.push_str(&format!("{c},{:.17e},{:.17e},{:.17e},{vm:.17e}\n", s[0], s[1], s[2]));
        }
        write_atomic(&dir.join("stress.csv"), csv.as_bytes())?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

pub fn run_fe2(bundle: Option<&Bundle>, req: &Fe2Request) -> Result<MacroSummary> {
    let (setup, model) = cell_and_model(bundle, req.cell.as_ref())?;
    with_workers(req.workers, || {
        let (prob, assign) = match req.geometry {
            MacroKind::Cook => {
                let prob = cook_problem(req.divisions, req.traction.unwrap_or([0.0, 0.05]))?;
                let assign = MicroAssignment::random_draw(&setup.lattice, prob.mesh.n_cells(), req.seed)?;
                (prob, assign)
            }
            MacroKind::Bar => {
                let bar = BarMicrostructure::random(req.ny, setup.lattice.clone(), req.seed)?;
                let m = req.divisions.max(1);
                let prob = bar_problem(bar.nx * m, bar.ny * m, req.traction.unwrap_or([0.0, -0.2]))?;
                let assign = bar.assignment(&prob.mesh)?;
                (prob, assign)
            }
        };
        let outcome = fe2(&prob, &assign, req.provider, &setup, model)?;
        summarise(
            format!("{}/{}", prob.name, req.provider.name()),
            &outcome.solution,
            &prob.probes,
            req.out.as_deref(),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsRequest {
    pub config: DnsConfig,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

pub fn run_dns(req: &DnsRequest) -> Result<MacroSummary> {
    with_workers(req.workers, || {
        let bar = BarMicrostructure::random(req.config.ny, req.lattice.clone(), req.config.seed)?;
        let sol = dns(&bar, &req.config)?;
        summarise(
            format!("dns/ny{}/seed{}", req.config.ny, req.config.seed),
            &sol,
            &crate::macroscale::bar_probes(),
            req.out.as_deref(),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub config: PipelineConfig,
    pub bundle: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
}

pub fn report(bundle: &Bundle, req: &ReportRequest) -> Result<OnlineSummary> {
    with_workers(req.workers, || run_online(&req.config, bundle, &req.out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub workspace: PathBuf,
}

pub fn validate(req: &ValidateRequest) -> ValidationReport {
    validate_artifacts(&req.workspace)
}

/// JSON body of every failed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl From<&crate::Error> for ErrorBody {
    fn from(e: &crate::Error) -> Self {
        Self {
            error: e.code().into(),
            message: e.to_string(),
        }
    }
}
