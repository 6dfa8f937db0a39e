//! Offline (snapshots, POD, training) and online (experiments) orchestration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::{
    goal_trace_from_field, hf_restricted_stress, homogenised_tangent, solve_hf, solve_reduced,
    unit_strain, CellMeshConfig, CellSetup, Domain,
};
use crate::deepbnd::{error_decomposition, DeepBndModel};
use crate::error::{invalid, Error, Result};
use crate::fem::BcKind;
use crate::macroscale::{
    bar_problem, cook_problem, dns, error_report, fe2, report_csv, tangent, BarMicrostructure,
    DnsConfig, MicroAssignment, ReportRow, TangentProvider,
};
use crate::micro::{lhs_sample, LatticeConfig, Microstructure};
use crate::mlp::{train, Dataset, TrainConfig};
use crate::rb::{pod, project_all, PodSize};
use crate::store::{
    artifact_ref, dir_hash, load_basis, load_model, read_json, save_basis, save_model,
    save_samples, value_hash, write_atomic, write_json, ArtifactRef, DatasetUse, LoadKind,
    SnapshotDataset, SnapshotManifest, MANIFEST,
};

pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_s: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub train_rb: DatasetSpec,
    pub validation: DatasetSpec,
    pub test: DatasetSpec,
}

impl DatasetSizes {
    pub fn get(&self, usage: DatasetUse) -> DatasetSpec {
        match usage {
            DatasetUse::TrainRb => self.train_rb,
            DatasetUse::Validation => self.validation,
            DatasetUse::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fe2Experiment {
    pub cook_divisions: usize,
    pub realisations: usize,
    pub seed: u64,
    pub traction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsExperiment {
    pub dns: DnsConfig,
    /// Macro elements per block side in the FE² bar.
    pub macro_per_block: usize,
    pub realisations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiments {
    /// Number of test microstructures in the single-cell comparison.
    pub single_cell: usize,
    /// Allows HF solves on the enlarged cell during the online phase.
    pub hf_comparison: bool,
    pub providers: Vec<TangentProvider>,
    pub fe2: Option<Fe2Experiment>,
    pub dns: Option<DnsExperiment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub lattice: LatticeConfig,
    pub mesh: CellMeshConfig,
    pub datasets: DatasetSizes,
    /// Basis size kept and predicted by the networks.
    pub n_rb: usize,
    pub n_rb_sweep: Vec<usize>,
    pub train: TrainConfig,
    pub experiments: Experiments,
}

impl PipelineConfig {
    /// Desk-scale run: 4x4 lattice, 2x2 window, 256 training snapshots, 8 modes.
    pub fn desk() -> Self {
        Self {
            lattice: LatticeConfig::standard(4, 1.0),
            mesh: CellMeshConfig {
                reduced_blocks: 2,
                divisions_per_block: 6,
                order: 1,
            },
            datasets: DatasetSizes {
                train_rb: DatasetSpec { n_s: 256, seed: 1 },
                validation: DatasetSpec { n_s: 64, seed: 2 },
                test: DatasetSpec { n_s: 32, seed: 3 },
            },
            n_rb: 8,
            n_rb_sweep: vec![1, 2, 4, 8],
            train: TrainConfig::default(),
            experiments: Experiments {
                single_cell: 32,
                hf_comparison: true,
                providers: TangentProvider::ALL.to_vec(),
                fe2: Some(Fe2Experiment {
                    cook_divisions: 4,
                    realisations: 5,
                    seed: 100,
                    traction: [0.0, 0.05],
                }),
                dns: Some(DnsExperiment {
                    dns: DnsConfig {
                        ny: 4,
                        seed: 200,
                        divisions_per_block: 8,
                        ..DnsConfig::default()
                    },
                    macro_per_block: 1,
                    realisations: 3,
                }),
            },
        }
    }

    /// Tiny end-to-end configuration.
    pub fn smoke() -> Self {
        let mut cfg = Self::desk();
        cfg.mesh.divisions_per_block = 2;
        cfg.datasets = DatasetSizes {
            train_rb: DatasetSpec { n_s: 2, seed: 1 },
            validation: DatasetSpec { n_s: 2, seed: 2 },
            test: DatasetSpec { n_s: 2, seed: 3 },
        };
        cfg.n_rb = 1;
        cfg.n_rb_sweep = vec![1];
        cfg.train = TrainConfig {
            hidden: vec![4],
            epochs: 5,
            batch_size: 2,
            lr_end_epoch: 5,
            ..TrainConfig::default()
        };
        cfg.experiments = Experiments {
            single_cell: 1,
            hf_comparison: true,
            providers: TangentProvider::ALL.to_vec(),
            fe2: None,
            dns: None,
        };
        cfg
    }

    /// Full-scale dataset sizes and architecture (configuration only).
    pub fn full() -> Self {
        let mut cfg = Self::desk();
        cfg.lattice = LatticeConfig::standard(6, 1.0);
        cfg.datasets = DatasetSizes {
            train_rb: DatasetSpec { n_s: 51200, seed: 1 },
            validation: DatasetSpec { n_s: 10240, seed: 2 },
            test: DatasetSpec { n_s: 5120, seed: 3 },
        };
        cfg.n_rb = 160;
        cfg.n_rb_sweep = vec![10, 20, 40, 80, 140, 160];
        cfg.train = TrainConfig {
            hidden: vec![300, 300, 300],
            epochs: 5000,
            lr_end_epoch: 5000,
            ..TrainConfig::default()
        };
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.train.validate()?;
        let d = &self.datasets;
        if d.validation.seed == d.train_rb.seed || d.test.seed == d.train_rb.seed {
            return Err(invalid("validation and test seeds must differ from the training seed"));
        }
        if DatasetUse::ALL.iter().any(|&u| d.get(u).n_s == 0) {
            return Err(invalid("every dataset needs at least one sample"));
        }
        if self.n_rb == 0 || self.n_rb > d.train_rb.n_s {
            return Err(invalid("n_rb must lie in 1..=N_s of the training set"));
        }
        if self.n_rb_sweep.iter().any(|&n| n == 0 || n > self.n_rb) {
            return Err(invalid("sweep entries must lie in 1..=n_rb"));
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        value_hash(self)
    }
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(invalid("--workers must be at least 1"));
        }
        b = b.num_threads(n);
    }
    let pool = b
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub config_hash: String,
    pub lattice: LatticeConfig,
    pub mesh: CellMeshConfig,
    pub n_rb: usize,
    /// Artifacts by role, e.g. `basis/axial`, addressed by content hash.
    pub artifacts: BTreeMap<String, ArtifactRef>,
}

#[derive(Debug, Clone)]
pub struct OfflineOutcome {
    pub bundle_path: PathBuf,
    pub manifest: BundleManifest,
    /// Artifacts reused from an earlier run.
    pub reused: Vec<String>,
}

pub fn dataset_dir(root: &Path, load: LoadKind, usage: DatasetUse) -> PathBuf {
    root.join("datasets").join(format!("{}-{}", load.name(), usage.name()))
}

fn basis_dir(root: &Path, load: LoadKind) -> PathBuf {
    root.join("bases").join(load.name())
}

fn model_dir(root: &Path, load: LoadKind) -> PathBuf {
    root.join("models").join(load.name())
}

/// Existing manifest with the given inputs hash; a manifest that does not parse aborts.
fn reusable(dir: &Path, inputs_hash: &str) -> Result<bool> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(false);
    }
    let v: serde_json::Value = read_json(&path)?;
    Ok(v.get("inputs_hash").and_then(|h| h.as_str()) == Some(inputs_hash))
}

/// HF goal traces of one LHS design for the axial and shear loads.
pub fn generate_snapshots(
    setup: &CellSetup,
    spec: DatasetSpec,
    usage: DatasetUse,
    inputs_hash: &str,
) -> Result<[SnapshotDataset; 2]> {
    let nb = setup.lattice.n_inclusions();
    let samples = lhs_sample(spec.n_s, nb, spec.seed)?;
    let traces: Vec<[nalgebra::DVector<f64>; 2]> = (0..spec.n_s)
        .into_par_iter()
        .map(|i| {
            let m = Microstructure::from_theta(setup.lattice.clone(), samples.row(i))?;
            let hf = solve_hf(setup, &m, &[1, 3])?;
            Ok([
                goal_trace_from_field(setup, &hf[0], 1)?.w,
                goal_trace_from_field(setup, &hf[1], 3)?.w,
            ])
        })
        .collect::<Result<_>>()?;
    let n_gamma = setup.boundary.n_dofs();
    let params = DMatrix::from_column_slice(nb, spec.n_s, &samples.theta);
    let make = |k: usize, load: LoadKind| SnapshotDataset {
        manifest: SnapshotManifest {
            load,
            usage,
            n_s: spec.n_s,
            seed: spec.seed,
            n_gamma,
            n_b: nb,
            mesh_hash: setup.boundary.mesh_hash.clone(),
            ordering: crate::fem::boundary::ORDERING.into(),
            inputs_hash: inputs_hash.to_owned(),
            traces_sha256: String::new(),
            params_sha256: String::new(),
        },
        traces: DMatrix::from_fn(n_gamma, spec.n_s, |r, c| traces[c][k][r]),
        params: params.clone(),
    };
    Ok([make(0, LoadKind::Axial), make(1, LoadKind::Shear)])
}

/// Artifacts produced or reused by one offline stage, keyed by bundle role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub artifacts: BTreeMap<String, ArtifactRef>,
    pub reused: Vec<String>,
}

impl StageOutcome {
    fn merge(&mut self, other: StageOutcome) {
        self.artifacts.extend(other.artifacts);
        self.reused.extend(other.reused);
    }
}

/// Snapshot datasets for the selected uses (all when `only` is `None`).
pub fn offline_snapshots(cfg: &PipelineConfig, root: &Path, only: Option<DatasetUse>) -> Result<StageOutcome> {
    cfg.validate()?;
    fs::create_dir_all(root)?;
    let setup = CellSetup::new(cfg.lattice.clone(), cfg.mesh)?;
    let mut out = StageOutcome::default();
    for usage in DatasetUse::ALL.into_iter().filter(|u| only.is_none_or(|o| o == *u)) {
        let spec = cfg.datasets.get(usage);
        let inputs = value_hash(&(&cfg.lattice, &cfg.mesh, usage, spec))?;
        let dirs = LoadKind::ALL.map(|l| dataset_dir(root, l, usage));
        let mut reuse = true;
        for d in &dirs {
            reuse &= reusable(d, &inputs)?;
        }
        if reuse {
            for d in &dirs {
                SnapshotDataset::load(d)?;
                out.reused.push(d.strip_prefix(root).unwrap_or(d).display().to_string());
            }
        } else {
            tracing::info!(dataset = usage.name(), n_s = spec.n_s, "generating snapshots");
            let sets = generate_snapshots(&setup, spec, usage, &inputs)?;
            for (mut set, dir) in sets.into_iter().zip(&dirs) {
                set.save(dir)?;
            }
            let samples = lhs_sample(spec.n_s, cfg.lattice.n_inclusions(), spec.seed)?;
            save_samples(&root.join("samples").join(usage.name()), &samples)?;
        }
        for (load, dir) in LoadKind::ALL.iter().zip(&dirs) {
            out.artifacts
                .insert(format!("dataset/{}-{}", load.name(), usage.name()), artifact_ref(root, dir)?);
        }
    }
    Ok(out)
}

/// POD bases of the training traces.
pub fn offline_bases(cfg: &PipelineConfig, root: &Path) -> Result<StageOutcome> {
    cfg.validate()?;
    let setup = CellSetup::new(cfg.lattice.clone(), cfg.mesh)?;
    let mut out = StageOutcome::default();
    for load in LoadKind::ALL {
        let train_set = SnapshotDataset::load(&dataset_dir(root, load, DatasetUse::TrainRb))?;
        let bdir = basis_dir(root, load);
        let inputs = value_hash(&(&train_set.manifest.traces_sha256, cfg.n_rb))?;
        if reusable(&bdir, &inputs)? {
            out.reused.push(format!("bases/{}", load.name()));
        } else {
            tracing::info!(load = load.name(), "reduced basis");
            let basis = pod(
                &train_set.traces,
                &setup.boundary.mass,
                PodSize::Count(cfg.n_rb),
                load.index(),
                &setup.boundary.mesh_hash,
            )?;
            save_basis(&bdir, &basis, &inputs)?;
        }
        out.artifacts.insert(format!("basis/{}", load.name()), artifact_ref(root, &bdir)?);
    }
    Ok(out)
}

/// Networks mapping parameters to projected training traces.
pub fn offline_models(cfg: &PipelineConfig, root: &Path) -> Result<StageOutcome> {
    cfg.validate()?;
    let setup = CellSetup::new(cfg.lattice.clone(), cfg.mesh)?;
    let mut out = StageOutcome::default();
    for load in LoadKind::ALL {
        let train_set = SnapshotDataset::load(&dataset_dir(root, load, DatasetUse::TrainRb))?;
        let val_set = SnapshotDataset::load(&dataset_dir(root, load, DatasetUse::Validation))?;
        let (basis, bman) = load_basis(&basis_dir(root, load))?;
        let mdir = model_dir(root, load);
        let inputs = value_hash(&(
            &bman.basis_sha256,
            &train_set.manifest.traces_sha256,
            &val_set.manifest.traces_sha256,
            &cfg.train,
        ))?;
        if reusable(&mdir, &inputs)? {
            out.reused.push(format!("models/{}", load.name()));
        } else {
            tracing::info!(load = load.name(), epochs = cfg.train.epochs, "training");
            let targets = project_all(&train_set.traces, &basis, &setup.boundary.mass)?;
            let val_targets = project_all(&val_set.traces, &basis, &setup.boundary.mass)?;
            let data = Dataset::new(train_set.params.clone(), targets)?;
            let val = Dataset::new(val_set.params.clone(), val_targets)?;
            let outcome = train(&data, &val, &cfg.train)?;
            save_model(
                &mdir,
                &outcome.model,
                &cfg.train,
                &bman.basis_sha256,
                &inputs,
                outcome.best_epoch,
            )?;
        }
        out.artifacts.insert(format!("model/{}", load.name()), artifact_ref(root, &mdir)?);
    }
    Ok(out)
}

/// Datasets, bases and networks plus the bundle manifest, reusing any artifact whose
/// recorded inputs match.
pub fn run_offline(cfg: &PipelineConfig, root: &Path) -> Result<OfflineOutcome> {
    let mut stages = offline_snapshots(cfg, root, None)?;
    stages.merge(offline_bases(cfg, root)?);
    stages.merge(offline_models(cfg, root)?);
    let manifest = BundleManifest {
        config_hash: cfg.hash()?,
        lattice: cfg.lattice.clone(),
        mesh: cfg.mesh,
        n_rb: cfg.n_rb,
        artifacts: stages.artifacts,
    };
    let bundle_path = root.join(BUNDLE_FILE);
    write_json(&bundle_path, &manifest)?;
    write_json(&root.join("config.json"), cfg)?;
    Ok(OfflineOutcome {
        bundle_path,
        manifest,
        reused: stages.reused,
    })
}

/// Loaded bundle: the cell discretisation and the combined predictor.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub root: PathBuf,
    pub manifest: BundleManifest,
    pub setup: CellSetup,
    pub model: DeepBndModel,
}

impl Bundle {
    pub fn artifact(&self, role: &str) -> Result<PathBuf> {
        self.manifest
            .artifacts
            .get(role)
            .map(|a| self.root.join(&a.path))
            .ok_or_else(|| Error::Artifact(format!("bundle has no '{role}' artifact")))
    }
}

/// Accepts the workspace directory or its `bundle.json`.
pub fn load_bundle(path: &Path) -> Result<Bundle> {
    let (root, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(BUNDLE_FILE))
    } else {
        (
            path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            path.to_path_buf(),
        )
    };
    let manifest: BundleManifest = read_json(&file)?;
    let setup = CellSetup::new(manifest.lattice.clone(), manifest.mesh)?;
    let get = |role: &str| {
        manifest
            .artifacts
            .get(role)
            .map(|a| root.join(&a.path))
            .ok_or_else(|| Error::Artifact(format!("bundle has no '{role}' artifact")))
    };
    let (ba, _) = load_basis(&get("basis/axial")?)?;
    let (bs, _) = load_basis(&get("basis/shear")?)?;
    let (ma, _) = load_model(&get("model/axial")?)?;
    let (ms, _) = load_model(&get("model/shear")?)?;
    let model = DeepBndModel::new(
        ma,
        ms,
        ba,
        bs,
        &setup.boundary,
        manifest.lattice.r_min,
        manifest.lattice.r_max,
    )?;
    Ok(Bundle {
        root,
        manifest,
        setup,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.ok)
    }

    fn push(&mut self, name: impl Into<String>, r: Result<String>) {
        let (ok, detail) = match r {
            Ok(d) => (true, d),
            Err(e) => (false, e.to_string()),
        };
        self.checks.push(Check {
            name: name.into(),
            ok,
            detail,
        });
    }
}

/// Checks hashes, orthonormality, mesh compatibility and the dimension chain of
/// every artifact in the workspace.
pub fn validate_artifacts(root: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest: Result<BundleManifest> = read_json(&root.join(BUNDLE_FILE));
    let manifest = match manifest {
        Ok(m) => {
            report.push("bundle manifest", Ok(format!("{} artifacts", m.artifacts.len())));
            m
        }
        Err(e) => {
            report.push("bundle manifest", Err(e));
            return report;
        }
    };
    for (role, a) in &manifest.artifacts {
        let dir = root.join(&a.path);
        report.push(
            format!("{role}: content hash"),
            dir_hash(&dir).and_then(|h| {
                if h == a.sha256 {
                    Ok(h)
                } else {
                    Err(Error::Artifact(format!("hash {h} differs from bundle {}", a.sha256)))
                }
            }),
        );
    }
    let setup = match CellSetup::new(manifest.lattice.clone(), manifest.mesh) {
        Ok(s) => s,
        Err(e) => {
            report.push("cell discretisation", Err(e));
            return report;
        }
    };
    let path = |role: &str| -> Result<PathBuf> {
        manifest
            .artifacts
            .get(role)
            .map(|a| root.join(&a.path))
            .ok_or_else(|| Error::Artifact(format!("missing '{role}'")))
    };
    let nb = manifest.lattice.n_inclusions();
    for load in LoadKind::ALL {
        let l = load.name();
        let mut trace_hash = None;
        for usage in DatasetUse::ALL {
            let role = format!("dataset/{l}-{}", usage.name());
            let r = path(&role).and_then(|d| SnapshotDataset::load(&d)).and_then(|d| {
                if d.manifest.n_b != nb || d.manifest.n_gamma != setup.boundary.n_dofs() {
                    return Err(Error::Incompatible("dataset dimensions do not match the cell".into()));
                }
                if usage == DatasetUse::TrainRb {
                    trace_hash = Some(d.manifest.mesh_hash.clone());
                }
                Ok(format!("{} snapshots", d.manifest.n_s))
            });
            report.push(role, r);
        }
        let basis = path(&format!("basis/{l}")).and_then(|d| load_basis(&d));
        let basis_check = basis.as_ref().map_err(|e| Error::Artifact(e.to_string())).and_then(|(b, _)| {
            if b.mesh_hash != setup.boundary.mesh_hash {
                return Err(Error::Incompatible("basis mesh_hash differs from the cell boundary".into()));
            }
            if let Some(t) = &trace_hash {
                if *t != b.mesh_hash {
                    return Err(Error::Incompatible(format!(
                        "basis mesh_hash {} differs from trace file mesh_hash {t}",
                        b.mesh_hash
                    )));
                }
            }
            let defect = b.orthonormality_defect(&setup.boundary.mass);
            if defect > 1e-10 {
                return Err(Error::Artifact(format!("orthonormality defect {defect:.3e}")));
            }
            Ok(format!("n_rb = {}, defect {defect:.1e}", b.n_rb()))
        });
        report.push(format!("basis/{l}"), basis_check);
        let chain = path(&format!("model/{l}"))
            .and_then(|d| load_model(&d))
            .and_then(|(m, man)| {
                let (b, bman) = basis.as_ref().map_err(|e| Error::Artifact(e.to_string()))?;
                if m.input_dim() != nb {
                    return Err(Error::Incompatible(format!("network input {} != N_b {nb}", m.input_dim())));
                }
                if m.output_dim() != b.n_rb() {
                    return Err(Error::Incompatible(format!(
                        "network output {} != basis size {}",
                        m.output_dim(),
                        b.n_rb()
                    )));
                }
                if man.basis_hash != bman.basis_sha256 {
                    return Err(Error::Incompatible("network was trained on another basis".into()));
                }
                Ok(format!("{:?}", m.layer_dims()))
            });
        report.push(format!("model/{l}: dimension chain"), chain);
    }
    report
}

/// Relative Frobenius distance.
pub fn tangent_error(c: &Matrix3<f64>, reference: &Matrix3<f64>) -> f64 {
    (c - reference).norm() / reference.norm()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Tangents of each microstructure under each provider.
pub fn tangents_for(
    setup: &CellSetup,
    micro: &[Microstructure],
    providers: &[TangentProvider],
    model: Option<&DeepBndModel>,
) -> Result<Vec<BTreeMap<TangentProvider, Matrix3<f64>>>> {
    micro
        .par_iter()
        .map(|m| {
            providers
                .iter()
                .map(|&p| Ok((p, tangent(setup, m, p, model)?)))
                .collect()
        })
        .collect()
}

fn test_microstructures(bundle: &Bundle, n: usize) -> Result<Vec<Microstructure>> {
    let test = SnapshotDataset::load(&bundle.artifact("dataset/axial-test")?)?;
    (0..n.min(test.manifest.n_s))
        .map(|c| Microstructure::from_theta(bundle.manifest.lattice.clone(), test.params.column(c).as_slice()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_rb: usize,
    pub load: LoadKind,
    pub e_pod: f64,
    pub e_dnn: f64,
    pub e_total: f64,
    pub split_defect: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("n_rb,load,e_pod,e_dnn,e_total\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.17e}\n",
            r.n_rb,
            r.load.name(),
            r.e_pod,
            r.e_dnn,
            r.e_total
        ));
    }
    s
}

/// Error split on the test datasets for each basis size in `sizes`.
pub fn n_rb_sweep(bundle: &Bundle, sizes: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for load in LoadKind::ALL {
        let test = SnapshotDataset::load(&bundle.artifact(&format!("dataset/{}-test", load.name()))?)?;
        for &n in sizes {
            let m = bundle.model.truncated(n)?;
            let s = error_decomposition(&test.traces, &test.params, &m, load.index(), &bundle.setup.boundary.mass)?;
            rows.push(SweepRow {
                n_rb: n,
                load,
                e_pod: s.pod_sq.sqrt(),
                e_dnn: s.dnn_sq.sqrt(),
                e_total: s.total_sq.sqrt(),
                split_defect: s.split_defect,
            });
        }
    }
    Ok(rows)
}

fn row(case: impl Into<String>, metric: impl Into<String>, value: f64) -> ReportRow {
    ReportRow {
        case: case.into(),
        metric: metric.into(),
        value,
    }
}

/// Single-cell comparison rows: tangent errors against HF, exact-trace oracle and the
/// bounds ordering on the first cell.
pub fn single_cell_report(bundle: &Bundle, exp: &Experiments) -> Result<Vec<ReportRow>> {
    let setup = &bundle.setup;
    let micro = test_microstructures(bundle, exp.single_cell)?;
    let mut rows = Vec::new();
    if let Some(m) = micro.first() {
        let strain = Vector3::new(1.0, -0.5, 0.25);
        let mut energies = Vec::new();
        for kind in BcKind::ALL {
            let c = homogenised_tangent(setup, m, kind, Domain::Reduced)?;
            let e = strain.dot(&(c * strain));
            rows.push(row("cell0", format!("energy_{}", kind.name()), e));
            energies.push(e);
        }
        let holds = energies.windows(2).all(|w| w[0] >= w[1] - 1e-10 * w[0].abs());
        rows.push(row("cell0", "bounds_chain_holds", if holds { 1.0 } else { 0.0 }));
    }
    if !exp.hf_comparison {
        return Ok(rows);
    }
    let mut providers = exp.providers.clone();
    if !providers.contains(&TangentProvider::Hf) {
        providers.push(TangentProvider::Hf);
    }
    let tangents = tangents_for(setup, &micro, &providers, Some(&bundle.model))?;
    let mut errs: BTreeMap<TangentProvider, Vec<f64>> = BTreeMap::new();
    for (i, t) in tangents.iter().enumerate() {
        let hf = t[&TangentProvider::Hf];
        for (&p, c) in t {
            let e = tangent_error(c, &hf);
            rows.push(row(format!("cell{i}"), format!("tangent_rel_{}", p.name()), e));
            errs.entry(p).or_default().push(e);
        }
    }
    for (p, e) in &errs {
        rows.push(row("median", format!("tangent_rel_{}", p.name()), median(e)));
    }
    if let Some(m) = micro.first() {
        let eps = unit_strain(1)?;
        let hf = solve_hf(setup, m, &[1])?.remove(0);
        let goal = goal_trace_from_field(setup, &hf, 1)?;
        let reduced = solve_reduced(setup, m, &eps, &goal.w)?;
        let s_red = crate::corrector::homogenise_stress(&setup.reduced_mesh, m, &eps, &reduced)?;
        let s_hf = hf_restricted_stress(setup, m, &eps, &hf)?;
        rows.push(row("cell0", "exact_trace_stress_rel", (s_red - s_hf).norm() / s_hf.norm()));
    }
    Ok(rows)
}

/// Cook membrane with randomly drawn microstructures: probe-A displacement per
/// provider and its distance to the HF provider.
pub fn cook_report(bundle: &Bundle, exp: &Experiments, fe: &Fe2Experiment) -> Result<Vec<ReportRow>> {
    let prob = cook_problem(fe.cook_divisions, fe.traction)?;
    let probe = prob.probes[0].point;
    let mut rows = Vec::new();
    let mut dist: BTreeMap<TangentProvider, Vec<f64>> = BTreeMap::new();
    for r in 0..fe.realisations {
        let assign = MicroAssignment::random_draw(&bundle.manifest.lattice, prob.mesh.n_cells(), fe.seed + r as u64)?;
        let mut ua = BTreeMap::new();
        for &p in &exp.providers {
            if p == TangentProvider::Hf && !exp.hf_comparison {
                continue;
            }
            let out = fe2(&prob, &assign, p, &bundle.setup, Some(&bundle.model))?;
            let u = out
                .solution
                .displacement_at(probe)
                .ok_or_else(|| invalid("probe A outside the Cook mesh"))?;
            rows.push(row(format!("r{r}/{}", p.name()), "u_A_x", u[0]));
            rows.push(row(format!("r{r}/{}", p.name()), "u_A_y", u[1]));
            ua.insert(p, u);
        }
        if let Some(h) = ua.get(&TangentProvider::Hf).copied() {
            for (&p, u) in &ua {
                let d = ((u[0] - h[0]).powi(2) + (u[1] - h[1]).powi(2)).sqrt();
                rows.push(row(format!("r{r}/{}", p.name()), "u_A_dist_hf", d));
                dist.entry(p).or_default().push(d);
            }
        }
    }
    for (p, d) in &dist {
        rows.push(row(format!("median/{}", p.name()), "u_A_dist_hf", median(d)));
    }
    Ok(rows)
}

/// Clamped bar: DNS reference against FE² with sliding-window microstructures.
pub fn dns_report(bundle: &Bundle, exp: &Experiments, d: &DnsExperiment) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let mut l2: BTreeMap<TangentProvider, Vec<f64>> = BTreeMap::new();
    for r in 0..d.realisations {
        let cfg = DnsConfig {
            seed: d.dns.seed + r as u64,
            ..d.dns.clone()
        };
        let bar = BarMicrostructure::random(cfg.ny, bundle.manifest.lattice.clone(), cfg.seed)?;
        let reference = dns(&bar, &cfg)?;
        let m = d.macro_per_block.max(1);
        let prob = bar_problem(bar.nx * m, bar.ny * m, cfg.traction)?;
        let assign = bar.assignment(&prob.mesh)?;
        let mut candidates = Vec::new();
        for &p in &exp.providers {
            if p == TangentProvider::Hf && !exp.hf_comparison {
                continue;
            }
            let out = fe2(&prob, &assign, p, &bundle.setup, Some(&bundle.model))?;
            candidates.push((format!("r{r}/{}", p.name()), out.solution));
        }
        let rep = error_report(&reference, &candidates, &prob.probes)?;
        for x in &rep {
            if x.metric == "l2_displacement_rel" {
                let name = x.case.rsplit('/').next().unwrap_or_default();
                l2.entry(TangentProvider::parse(name)?).or_default().push(x.value);
            }
        }
        rows.extend(rep);
    }
    for (p, v) in &l2 {
        rows.push(row(format!("median/{}", p.name()), "l2_displacement_rel", median(v)));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSummary {
    pub files: Vec<PathBuf>,
    pub von_mises: String,
    pub cook_geometry: String,
    pub sweep: Vec<SweepRow>,
}

/// Runs the configured experiments and writes CSV reports into `out`.
pub fn run_online(cfg: &PipelineConfig, bundle: &Bundle, out: &Path) -> Result<OnlineSummary> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let p = out.join(name);
        write_atomic(&p, text.as_bytes())?;
        files.push(p);
        Ok(())
    };
    let sizes: Vec<usize> = cfg
        .n_rb_sweep
        .iter()
        .copied()
        .filter(|&n| n <= bundle.model.n_rb)
        .collect();
    let sweep = n_rb_sweep(bundle, &sizes)?;
    emit("sweep.csv", sweep_csv(&sweep))?;
    let exp = &cfg.experiments;
    emit("single_cell.csv", report_csv(&single_cell_report(bundle, exp)?))?;
    if let Some(fe) = &exp.fe2 {
        emit("fe2_cook.csv", report_csv(&cook_report(bundle, exp, fe)?))?;
    }
    if let Some(d) = &exp.dns {
        emit("dns.csv", report_csv(&dns_report(bundle, exp, d)?))?;
    }
    let summary = OnlineSummary {
        files: files.clone(),
        von_mises: "plane-stress".into(),
        cook_geometry: "48x44/16 trapezoid scaled by 1/48, left edge clamped, shear traction on the right edge".into(),
        sweep,
    };
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        PipelineConfig::desk().validate().unwrap();
        PipelineConfig::smoke().validate().unwrap();
        PipelineConfig::full().validate().unwrap();
        let mut bad = PipelineConfig::desk();
        bad.datasets.test.seed = bad.datasets.train_rb.seed;
        assert!(bad.validate().is_err());
        let mut bad = PipelineConfig::desk();
        bad.n_rb_sweep.push(9);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
