//! On-disk artifacts: raw little-endian float64 arrays with JSON manifests.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fem::boundary::ORDERING;
use crate::micro::{SampleSet, SamplingMethod};
use crate::mlp::{Layer, MlpModel, Scaling, TrainConfig};
use crate::rb::ReducedBasis;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of any serialisable value through its canonical JSON form.
pub fn value_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

pub fn f64_bytes(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f64_from_bytes(bytes: &[u8], context: &str) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Artifact(format!(
            "{context}: {} bytes is not a whole number of float64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes through a temporary file so readers never see a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Artifact(format!("{}: corrupted manifest ({e})", path.display())))
}

fn read_f64_checked(path: &Path, expected_len: usize, expected_hash: Option<&str>) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if let Some(h) = expected_hash {
        let actual = sha256_hex(&bytes);
        if actual != h {
            return Err(Error::Artifact(format!(
                "{}: content hash {actual} differs from manifest {h}",
                path.display()
            )));
        }
    }
    let data = f64_from_bytes(&bytes, &path.display().to_string())?;
    if data.len() != expected_len {
        return Err(Error::DimensionMismatch {
            expected: expected_len,
            actual: data.len(),
            context: "binary artifact length",
        });
    }
    Ok(data)
}

// --- sample sets -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub method: SamplingMethod,
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn save_samples(stem: &Path, s: &SampleSet) -> Result<()> {
    write_atomic(&stem.with_extension("bin"), &f64_bytes(&s.theta))?;
    write_json(
        &stem.with_extension("json"),
        &SampleSidecar {
            rows: s.rows,
            cols: s.cols,
            seed: s.seed,
            method: s.method,
        },
    )
}

pub fn load_samples(stem: &Path) -> Result<SampleSet> {
    let side: SampleSidecar = read_json(&stem.with_extension("json"))?;
    let theta = read_f64_checked(&stem.with_extension("bin"), side.rows * side.cols, None)?;
    Ok(SampleSet {
        rows: side.rows,
        cols: side.cols,
        seed: side.seed,
        method: side.method,
        theta,
    })
}

// --- nodal fields and traces ------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub mesh_hash: String,
    pub ordering: String,
    pub n_dofs: usize,
}

pub fn save_field(stem: &Path, data: &DVector<f64>, mesh_hash: &str) -> Result<()> {
    write_atomic(&stem.with_extension("bin"), &f64_bytes(data.as_slice()))?;
    write_json(
        &stem.with_extension("json"),
        &FieldSidecar {
            mesh_hash: mesh_hash.to_owned(),
            ordering: ORDERING.to_owned(),
            n_dofs: data.len(),
        },
    )
}

pub fn load_field(stem: &Path) -> Result<(DVector<f64>, FieldSidecar)> {
    let side: FieldSidecar = read_json(&stem.with_extension("json"))?;
    if side.ordering != ORDERING {
        return Err(Error::Incompatible(format!(
            "field ordering '{}' is not '{ORDERING}'",
            side.ordering
        )));
    }
    let data = read_f64_checked(&stem.with_extension("bin"), side.n_dofs, None)?;
    Ok((DVector::from_vec(data), side))
}

// --- snapshot datasets -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadKind {
    Axial,
    Shear,
}

impl LoadKind {
    pub const ALL: [LoadKind; 2] = [LoadKind::Axial, LoadKind::Shear];

    /// Voigt load index: 1 for axial, 3 for shear.
    pub fn index(self) -> usize {
        match self {
            LoadKind::Axial => 1,
            LoadKind::Shear => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LoadKind::Axial => "axial",
            LoadKind::Shear => "shear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetUse {
    TrainRb,
    Validation,
    Test,
}

impl DatasetUse {
    pub const ALL: [DatasetUse; 3] = [DatasetUse::TrainRb, DatasetUse::Validation, DatasetUse::Test];

    pub fn name(self) -> &'static str {
        match self {
            DatasetUse::TrainRb => "train-rb",
            DatasetUse::Validation => "validation",
            DatasetUse::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub load: LoadKind,
    #[serde(rename = "use")]
    pub usage: DatasetUse,
    #[serde(rename = "N_s")]
    pub n_s: usize,
    pub seed: u64,
    pub n_gamma: usize,
    pub n_b: usize,
    pub mesh_hash: String,
    pub ordering: String,
    /// Hash of everything the dataset was generated from.
    pub inputs_hash: String,
    pub traces_sha256: String,
    pub params_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub manifest: SnapshotManifest,
    /// One goal trace per column (`n_gamma x N_s`).
    pub traces: DMatrix<f64>,
    /// One parameter vector per column (`N_b x N_s`).
    pub params: DMatrix<f64>,
}

impl SnapshotDataset {
    /// Fills in the content hashes and writes the dataset directory.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        // column-major storage of n_gamma x N_s is the row-major N_s x n_gamma layout
        let traces = f64_bytes(self.traces.as_slice());
        let params = f64_bytes(self.params.as_slice());
        self.manifest.traces_sha256 = sha256_hex(&traces);
        self.manifest.params_sha256 = sha256_hex(&params);
        write_atomic(&dir.join("traces.bin"), &traces)?;
        write_atomic(&dir.join("params.bin"), &params)?;
        write_json(&dir.join(MANIFEST), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: SnapshotManifest = read_json(&dir.join(MANIFEST))?;
        let t = read_f64_checked(&dir.join("traces.bin"), m.n_s * m.n_gamma, Some(&m.traces_sha256))?;
        let p = read_f64_checked(&dir.join("params.bin"), m.n_s * m.n_b, Some(&m.params_sha256))?;
        Ok(Self {
            traces: DMatrix::from_vec(m.n_gamma, m.n_s, t),
            params: DMatrix::from_vec(m.n_b, m.n_s, p),
            manifest: m,
        })
    }
}

// --- reduced bases -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisManifest {
    pub n_gamma: usize,
    pub n_rb: usize,
    pub load_index: usize,
    pub mesh_hash: String,
    pub eigenvalues: Vec<f64>,
    pub inputs_hash: String,
    pub basis_sha256: String,
}

pub fn save_basis(dir: &Path, basis: &ReducedBasis, inputs_hash: &str) -> Result<BasisManifest> {
    let bytes = f64_bytes(basis.basis.as_slice());
    let manifest = BasisManifest {
        n_gamma: basis.n_gamma(),
        n_rb: basis.n_rb(),
        load_index: basis.load,
        mesh_hash: basis.mesh_hash.clone(),
        eigenvalues: basis.eigenvalues.clone(),
        inputs_hash: inputs_hash.to_owned(),
        basis_sha256: sha256_hex(&bytes),
    };
    write_atomic(&dir.join("basis.bin"), &bytes)?;
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_basis(dir: &Path) -> Result<(ReducedBasis, BasisManifest)> {
    let m: BasisManifest = read_json(&dir.join(MANIFEST))?;
    let data = read_f64_checked(&dir.join("basis.bin"), m.n_gamma * m.n_rb, Some(&m.basis_sha256))?;
    let basis = ReducedBasis {
        basis: DMatrix::from_vec(m.n_gamma, m.n_rb, data),
        eigenvalues: m.eigenvalues.clone(),
        load: m.load_index,
        mesh_hash: m.mesh_hash.clone(),
    };
    Ok((basis, m))
}

// --- networks -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub layer_dims: Vec<usize>,
    pub activation: String,
    pub scaling: Scaling,
    pub train_config: TrainConfig,
    /// Content hash of the basis the outputs refer to.
    pub basis_hash: String,
    pub inputs_hash: String,
    pub best_epoch: usize,
    pub weights_sha256: String,
}

pub fn save_model(
    dir: &Path,
    model: &MlpModel,
    train_config: &TrainConfig,
    basis_hash: &str,
    inputs_hash: &str,
    best_epoch: usize,
) -> Result<ModelManifest> {
    let bytes = f64_bytes(&model.parameters());
    let manifest = ModelManifest {
        layer_dims: model.layer_dims(),
        activation: "swish".into(),
        scaling: model.scaling.clone(),
        train_config: train_config.clone(),
        basis_hash: basis_hash.to_owned(),
        inputs_hash: inputs_hash.to_owned(),
        best_epoch,
        weights_sha256: sha256_hex(&bytes),
    };
    write_atomic(&dir.join("weights.bin"), &bytes)?;
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Loads a network, checking the weight count against the layer dimensions
/// before the content hash so truncation is reported as a dimension problem.
pub fn load_model(dir: &Path) -> Result<(MlpModel, ModelManifest)> {
    let m: ModelManifest = read_json(&dir.join(MANIFEST))?;
    if m.activation != "swish" {
        return Err(Error::Incompatible(format!("unsupported activation '{}'", m.activation)));
    }
    if m.layer_dims.len() < 2 {
        return Err(Error::Artifact("a network needs at least two layer sizes".into()));
    }
    let expected = parameter_count(&m.layer_dims);
    let weights = read_f64_checked(&dir.join("weights.bin"), expected, None)?;
    let actual = sha256_hex(&f64_bytes(&weights));
    if actual != m.weights_sha256 {
        return Err(Error::Artifact(format!(
            "{}: weights hash {actual} differs from manifest",
            dir.display()
        )));
    }
    let layers = m
        .layer_dims
        .windows(2)
        .map(|w| Layer {
            weights: DMatrix::zeros(w[1], w[0]),
            bias: DVector::zeros(w[1]),
        })
        .collect();
    let mut model = MlpModel::new(layers, m.scaling.clone())?;
    model.set_parameters(&weights)?;
    Ok((model, m))
}

// --- bundles -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Path relative to the bundle's workspace root.
    pub path: PathBuf,
    pub sha256: String,
}

/// Content hash of an artifact directory: its manifest and binaries in name order.
pub fn dir_hash(dir: &Path) -> Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|x| x == "json" || x == "bin")
        })
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        h.update(fs::read(&p)?);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn artifact_ref(root: &Path, dir: &Path) -> Result<ArtifactRef> {
    let rel = dir.strip_prefix(root).unwrap_or(dir).to_path_buf();
    Ok(ArtifactRef {
        path: rel,
        sha256: dir_hash(dir)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micro::lhs_sample;

    #[test]
    fn sample_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = lhs_sample(5, 3, 4).unwrap();
        save_samples(&dir.path().join("s"), &s).unwrap();
        assert_eq!(load_samples(&dir.path().join("s")).unwrap(), s);
        assert_eq!(fs::metadata(dir.path().join("s.bin")).unwrap().len(), 5 * 3 * 8);
    }

    #[test]
    fn field_round_trip_keeps_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let f = DVector::from_vec(vec![1.0, -2.5, 3.25, 0.0]);
        save_field(&dir.path().join("u"), &f, "abc").unwrap();
        let (g, side) = load_field(&dir.path().join("u")).unwrap();
        assert_eq!(f, g);
        assert_eq!(side.ordering, ORDERING);
        assert_eq!(side.mesh_hash, "abc");
    }

    #[test]
    fn model_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let model = MlpModel::random(&[3, 4, 2], Scaling::identity(2), 1).unwrap();
        save_model(dir.path(), &model, &TrainConfig::default(), "b", "i", 0).unwrap();
        let (back, _) = load_model(dir.path()).unwrap();
        assert_eq!(back.parameters(), model.parameters());

        let w = dir.path().join("weights.bin");
        let bytes = fs::read(&w).unwrap();
        fs::write(&w, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_model(dir.path()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn corrupted_manifest_is_an_artifact_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST), b"{ not json").unwrap();
        assert!(matches!(
            SnapshotDataset::load(dir.path()),
            Err(Error::Artifact(_))
        ));
    }

    #[test]
    fn odd_byte_count_rejected() {
        assert!(f64_from_bytes(&[0u8; 12], "x").is_err());
    }
}
