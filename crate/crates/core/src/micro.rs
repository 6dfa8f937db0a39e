//! Two-phase lattice microstructures: a matrix with circular inclusions placed on a
//! regular `n_side x n_side` grid, plus the samplers that generate their radii.

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Lamé pair `(lambda, G)` of the matrix phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lame {
    pub lambda: f64,
    pub shear: f64,
}

impl Lame {
    /// Matrix phase with E = 1, nu = 0.3.
    pub const REFERENCE: Lame = Lame {
        lambda: 0.576923,
        shear: 0.384615,
    };

    pub fn voigt(&self) -> Matrix3<f64> {
        isotropic_voigt(self.lambda, self.shear)
    }
}

/// Isotropic plane elasticity in Voigt form, acting on `(e11, e22, 2 e12)`.
pub fn isotropic_voigt(lambda: f64, shear: f64) -> Matrix3<f64> {
    let d = lambda + 2.0 * shear;
    Matrix3::new(d, lambda, 0.0, lambda, d, 0.0, 0.0, 0.0, shear)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub n_side: usize,
    /// Side length of the high-fidelity cell.
    pub domain_length: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub gamma: f64,
    pub lame: Lame,
}

impl LatticeConfig {
    /// Radii bounds at 0.1 and 0.4 of the lattice spacing with contrast 10.
    pub fn standard(n_side: usize, domain_length: f64) -> Self {
        let spacing = domain_length / n_side as f64;
        Self {
            n_side,
            domain_length,
            r_min: 0.1 * spacing,
            r_max: 0.4 * spacing,
            gamma: 10.0,
            lame: Lame::REFERENCE,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn n_inclusions(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn spacing(&self) -> f64 {
        self.domain_length / self.n_side as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_side == 0 {
            return Err(invalid("n_side must be positive"));
        }
        if !(self.domain_length > 0.0) {
            return Err(invalid("domain length must be positive"));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(invalid(format!(
                "need 0 < r_min < r_max, got r_min={}, r_max={}",
                self.r_min, self.r_max
            )));
        }
        if self.r_max > 0.5 * self.spacing() {
            return Err(invalid(format!(
                "r_max={} exceeds half the lattice spacing {}",
                self.r_max,
                0.5 * self.spacing()
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(invalid("gamma must be positive"));
        }
        if !(self.lame.lambda > 0.0 && self.lame.shear > 0.0) {
            return Err(invalid("Lamé parameters must be positive"));
        }
        Ok(())
    }

    /// Inclusion centres in the zero-centroid frame of the cell, row-major from the
    /// bottom-left: index `i * n_side + j` is row `i` (upwards), column `j` (rightwards).
    pub fn centres(&self) -> Vec<[f64; 2]> {
        let n = self.n_side;
        let s = self.spacing();
        let half = 0.5 * self.domain_length;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push([(j as f64 + 0.5) * s - half, (i as f64 + 0.5) * s - half]);
            }
        }
        out
    }
}

/// Anything that can report a Voigt stiffness at a point.
pub trait Material: Sync {
    fn voigt_at(&self, y: [f64; 2]) -> Matrix3<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Microstructure {
    pub config: LatticeConfig,
    pub centres: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
}

impl Microstructure {
    pub fn new(config: LatticeConfig, radii: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if radii.len() != config.n_inclusions() {
            return Err(Error::DimensionMismatch {
                expected: config.n_inclusions(),
                actual: radii.len(),
                context: "microstructure radii",
            });
        }
        if let Some(r) = radii
            .iter()
            .find(|&&r| !(r >= config.r_min && r <= config.r_max))
        {
            return Err(invalid(format!(
                "radius {r} outside [{}, {}]",
                config.r_min, config.r_max
            )));
        }
        let centres = config.centres();
        Ok(Self {
            config,
            centres,
            radii,
        })
    }

    pub fn from_theta(config: LatticeConfig, theta: &[f64]) -> Result<Self> {
        let radii = radii_from_theta(theta, config.r_min, config.r_max)?;
        Self::new(config, radii)
    }

    /// All inclusions at the same radius.
    pub fn uniform(config: LatticeConfig, radius: f64) -> Result<Self> {
        let n = config.n_inclusions();
        Self::new(config, vec![radius; n])
    }

    /// Recovers the sampling coordinates of the radii.
    pub fn theta(&self) -> Vec<f64> {
        self.radii
            .iter()
            .map(|&r| theta_from_radius(r, self.config.r_min, self.config.r_max))
            .collect()
    }

    pub fn contrast_at(&self, y: [f64; 2]) -> f64 {
        let inside = self.centres.iter().zip(&self.radii).any(|(c, &r)| {
            let dx = y[0] - c[0];
            let dy = y[1] - c[1];
            dx * dx + dy * dy < r * r
        });
        if inside {
            self.config.gamma
        } else {
            1.0
        }
    }

    /// `chi_gamma(y) * C1` in Voigt form.
    pub fn stiffness_at(&self, y: [f64; 2]) -> Matrix3<f64> {
        self.config.lame.voigt() * self.contrast_at(y)
    }

    pub fn volume_fraction(&self) -> f64 {
        let area: f64 = self.radii.iter().map(|r| std::f64::consts::PI * r * r).sum();
        area / (self.config.domain_length * self.config.domain_length)
    }

    /// Pairwise-disjoint balls strictly inside the cell.
    pub fn is_admissible(&self) -> bool {
        let half = 0.5 * self.config.domain_length;
        let inside = self.centres.iter().zip(&self.radii).all(|(c, &r)| {
            c[0] - r > -half && c[0] + r < half && c[1] - r > -half && c[1] + r < half
        });
        let disjoint = (0..self.radii.len()).all(|a| {
            ((a + 1)..self.radii.len()).all(|b| {
                let dx = self.centres[a][0] - self.centres[b][0];
                let dy = self.centres[a][1] - self.centres[b][1];
                (dx * dx + dy * dy).sqrt() > self.radii[a] + self.radii[b]
            })
        });
        inside && disjoint
    }

    /// Sub-lattice of `blocks x blocks` inclusions starting at lattice row `row0`,
    /// column `col0`, re-centred as a microstructure of its own.
    pub fn window(&self, row0: usize, col0: usize, blocks: usize) -> Result<Self> {
        let n = self.config.n_side;
        if blocks == 0 || row0 + blocks > n || col0 + blocks > n {
            return Err(invalid("window outside the lattice"));
        }
        let mut config = self.config.clone();
        config.n_side = blocks;
        config.domain_length = self.config.spacing() * blocks as f64;
        let mut radii = Vec::with_capacity(blocks * blocks);
        for i in 0..blocks {
            for j in 0..blocks {
                radii.push(self.radii[(row0 + i) * n + col0 + j]);
            }
        }
        Self::new(config, radii)
    }

    pub fn record(&self) -> MicrostructureRecord {
        MicrostructureRecord {
            n_side: self.config.n_side,
            domain_length: self.config.domain_length,
            r_min: self.config.r_min,
            r_max: self.config.r_max,
            gamma: self.config.gamma,
            lame: [self.config.lame.lambda, self.config.lame.shear],
            radii: self.radii.clone(),
        }
    }
}

impl Material for Microstructure {
    fn voigt_at(&self, y: [f64; 2]) -> Matrix3<f64> {
        self.stiffness_at(y)
    }
}

/// Constant stiffness everywhere.
#[derive(Debug, Clone, Copy)]
pub struct Homogeneous(pub Matrix3<f64>);

impl Material for Homogeneous {
    fn voigt_at(&self, _y: [f64; 2]) -> Matrix3<f64> {
        self.0
    }
}

/// JSON form of a microstructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrostructureRecord {
    pub n_side: usize,
    #[serde(rename = "L_H")]
    pub domain_length: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub gamma: f64,
    pub lame: [f64; 2],
    pub radii: Vec<f64>,
}

impl MicrostructureRecord {
    pub fn config(&self) -> LatticeConfig {
        LatticeConfig {
            n_side: self.n_side,
            domain_length: self.domain_length,
            r_min: self.r_min,
            r_max: self.r_max,
            gamma: self.gamma,
            lame: Lame {
                lambda: self.lame[0],
                shear: self.lame[1],
            },
        }
    }

    pub fn into_microstructure(self) -> Result<Microstructure> {
        let config = self.config();
        Microstructure::new(config, self.radii)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    Lhs,
    UniformIid,
}

/// `rows x cols` matrix of sampling coordinates in `[-1, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub method: SamplingMethod,
    pub theta: Vec<f64>,
}

impl SampleSet {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.theta.chunks_exact(self.cols.max(1))
    }

    /// One sample per equal-width stratum of `[-1, 1]`, in every dimension.
    pub fn is_stratified(&self) -> bool {
        (0..self.cols).all(|d| {
            let mut seen = vec![false; self.rows];
            (0..self.rows).all(|i| {
                let v = self.theta[i * self.cols + d];
                if !(-1.0..=1.0).contains(&v) {
                    return false;
                }
                let s = stratum(v, self.rows);
                !std::mem::replace(&mut seen[s], true)
            })
        })
    }
}

/// Index of the stratum of `[-1, 1]` holding `v`; the last stratum is closed.
pub fn stratum(v: f64, n: usize) -> usize {
    let s = ((v + 1.0) * n as f64 / 2.0).floor();
    (s.max(0.0) as usize).min(n - 1)
}

/// Latin hypercube sample on `[-1, 1]^n_dims`.
pub fn lhs_sample(n_samples: usize, n_dims: usize, seed: u64) -> Result<SampleSet> {
    if n_samples == 0 || n_dims == 0 {
        return Err(invalid("LHS needs at least one sample and one dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; n_samples * n_dims];
    let width = 2.0 / n_samples as f64;
    let mut perm: Vec<usize> = (0..n_samples).collect();
    for d in 0..n_dims {
        perm.shuffle(&mut rng);
        for (i, &k) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            let mut v = (-1.0 + (k as f64 + u) * width).clamp(-1.0, 1.0);
            // keep round-off from pushing the draw across a stratum edge
            while stratum(v, n_samples) < k {
                v = v.next_up();
            }
            while stratum(v, n_samples) > k {
                v = v.next_down();
            }
            theta[i * n_dims + d] = v;
        }
    }
    Ok(SampleSet {
        rows: n_samples,
        cols: n_dims,
        seed,
        method: SamplingMethod::Lhs,
        theta,
    })
}

/// Independent uniform draws on `[-1, 1]^n_dims`.
pub fn uniform_sample(n_samples: usize, n_dims: usize, seed: u64) -> Result<SampleSet> {
    if n_samples == 0 || n_dims == 0 {
        return Err(invalid("sampling needs at least one sample and one dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = (0..n_samples * n_dims)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Ok(SampleSet {
        rows: n_samples,
        cols: n_dims,
        seed,
        method: SamplingMethod::UniformIid,
        theta,
    })
}

/// Log-uniform map `r = exp(a + theta b)` from `[-1, 1]` onto `[r_min, r_max]`.
pub fn radii_from_theta(theta: &[f64], r_min: f64, r_max: f64) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_min < r_max) {
        return Err(invalid("need 0 < r_min < r_max"));
    }
    let a = 0.5 * (r_max * r_min).ln();
    let b = 0.5 * (r_max / r_min).ln();
    theta
        .iter()
        .map(|&t| {
            if !(-1.0..=1.0).contains(&t) {
                return Err(invalid(format!("theta {t} outside [-1, 1]")));
            }
            Ok((a + t * b).exp().clamp(r_min, r_max))
        })
        .collect()
}

pub fn theta_from_radius(r: f64, r_min: f64, r_max: f64) -> f64 {
    let a = 0.5 * (r_max * r_min).ln();
    let b = 0.5 * (r_max / r_min).ln();
    ((r.ln() - a) / b).clamp(-1.0, 1.0)
}

/// Reorders lattice parameters so that the returned pattern, rotated anticlockwise by
/// `quarter_turns * pi/2`, reproduces the input pattern.
pub fn permute_params<T: Clone>(params: &[T], quarter_turns: i32) -> Result<Vec<T>> {
    let n = (params.len() as f64).sqrt().round() as usize;
    if n * n != params.len() || n == 0 {
        return Err(invalid(format!(
            "parameter count {} is not a nonzero perfect square",
            params.len()
        )));
    }
    if !(-3..=3).contains(&quarter_turns) {
        return Err(invalid("quarter_turns must lie in -3..=3"));
    }
    let mut out = params.to_vec();
    for _ in 0..quarter_turns.rem_euclid(4) {
        let prev = out.clone();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = prev[j * n + (n - 1 - i)].clone();
            }
        }
    }
    Ok(out)
}
