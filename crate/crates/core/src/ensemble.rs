//! Seeded lognormal permeability ensembles and their on-disk format.
//!
//! Member `i` is drawn from its own ChaCha stream keyed by `(seed, i)`:
//! white Gaussian noise on a padded grid, separable Gaussian smoothing,
//! renormalization to unit variance, then `exp(log_mean + log_std * z)`.
//!
//! On disk an ensemble is a directory holding `manifest.json` and one CSV
//! per member (`ny` rows of `nx` comma-separated values).

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resim::ReservoirModel;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EnsembleError + '_ {
    move |source| EnsembleError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_d: usize,
    pub seed: u64,
    /// Mean of `ln k` with `k` in m^2.
    pub log_mean: f64,
    pub log_std: f64,
    /// Smoothing standard deviation in cells along x.
    pub corr_len: f64,
    /// Smoothing along y when different from x (channel-like fields).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr_len_y: Option<f64>,
    pub nx: usize,
    pub ny: usize,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let corr_y = self.corr_len_y.unwrap_or(self.corr_len);
        if self.n_d == 0 {
            return Err(EnsembleError::InvalidSpec("n_d must be at least 1".into()));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(EnsembleError::InvalidSpec("grid must have at least one cell".into()));
        }
        if !self.log_mean.is_finite() || !(self.log_std >= 0.0) || !self.log_std.is_finite() {
            return Err(EnsembleError::InvalidSpec("log_mean must be finite and log_std >= 0".into()));
        }
        if !(self.corr_len >= 0.0 && corr_y >= 0.0) || !self.corr_len.is_finite() || !corr_y.is_finite() {
            return Err(EnsembleError::InvalidSpec("correlation lengths must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    /// Per-member cell permeabilities (m^2), row-major `j * nx + i`.
    pub members: Vec<Vec<f64>>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// One reservoir model per member, sharing everything but permeability.
    pub fn models(&self, base: &ReservoirModel) -> Result<Vec<ReservoirModel>, EnsembleError> {
        if base.grid.nx != self.spec.nx || base.grid.ny != self.spec.ny {
            return Err(EnsembleError::InvalidSpec(format!(
                "ensemble grid {}x{} does not match model grid {}x{}",
                self.spec.nx, self.spec.ny, base.grid.nx, base.grid.ny
            )));
        }
        Ok(self.members.iter().map(|k| base.with_perm(k.clone())).collect())
    }
}

/// Normalized 1-D Gaussian kernel with standard deviation `sigma` cells,
/// truncated at `3 sigma`. `sigma = 0` gives the identity.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let half = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-half..=half).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Smoothed unit-variance Gaussian field for one member.
fn member_field(spec: &EnsembleSpec, index: usize) -> Vec<f64> {
    let kx = gaussian_kernel(spec.corr_len);
    let ky = gaussian_kernel(spec.corr_len_y.unwrap_or(spec.corr_len));
    let (px, py) = (kx.len() / 2, ky.len() / 2);
    let (wx, wy) = (spec.nx + 2 * px, spec.ny + 2 * py);

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let noise: Vec<f64> = (0..wx * wy).map(|_| StandardNormal.sample(&mut rng)).collect();

    // smooth along x: wy rows of nx values
    let mut tmp = vec![0.0; spec.nx * wy];
    for j in 0..wy {
        let row = &noise[j * wx..(j + 1) * wx];
        for i in 0..spec.nx {
            tmp[j * spec.nx + i] = kx.iter().zip(&row[i..i + kx.len()]).map(|(w, v)| w * v).sum();
        }
    }
    // smooth along y
    let mut field = vec![0.0; spec.nx * spec.ny];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            field[j * spec.nx + i] = ky.iter().enumerate().map(|(k, w)| w * tmp[(j + k) * spec.nx + i]).sum();
        }
    }
    let std: f64 = (kx.iter().map(|w| w * w).sum::<f64>() * ky.iter().map(|w| w * w).sum::<f64>()).sqrt();
    field.iter_mut().for_each(|z| *z /= std);
    field
}

pub fn generate(spec: &EnsembleSpec) -> Result<Ensemble, EnsembleError> {
    spec.validate()?;
    let members = (0..spec.n_d)
        .into_par_iter()
        .map(|i| member_field(spec, i).into_iter().map(|z| (spec.log_mean + spec.log_std * z).exp()).collect())
        .collect();
    Ok(Ensemble { spec: spec.clone(), members })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n_d: usize,
    spec: EnsembleSpec,
    members: Vec<String>,
}

fn member_file(i: usize) -> String {
    format!("member_{i:04}.csv")
}

/// Writes the ensemble into `dir` (created if missing). Values use the
/// shortest representation that parses back to the same bits.
pub fn save(ensemble: &Ensemble, dir: &Path) -> Result<(), EnsembleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let nx = ensemble.spec.nx;
    let mut names = Vec::with_capacity(ensemble.len());
    for (i, perm) in ensemble.members.iter().enumerate() {
        let name = member_file(i);
        let path = dir.join(&name);
        let mut text = String::with_capacity(perm.len() * 24);
        for row in perm.chunks(nx) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        fs::write(&path, text).map_err(io_err(&path))?;
        names.push(name);
    }
    let manifest = Manifest { n_d: ensemble.len(), spec: ensemble.spec.clone(), members: names };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| EnsembleError::Manifest(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(io_err(&path))
}

fn parse_member(path: &Path, nx: usize, ny: usize) -> Result<Vec<f64>, EnsembleError> {
    let parse_err = |line: u64, message: String| EnsembleError::Parse { path: path.to_path_buf(), line, message };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let mut values = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if rows == ny {
            return Err(parse_err(line, format!("more than {ny} rows")));
        }
        if record.len() != nx {
            return Err(parse_err(line, format!("expected {nx} values, found {}", record.len())));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| parse_err(line, format!("invalid number {field:?}")))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(parse_err(line, format!("permeability must be positive and finite, got {v}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != ny {
        return Err(parse_err(rows as u64 + 1, format!("expected {ny} rows, found {rows}")));
    }
    Ok(values)
}

pub fn load(dir: &Path) -> Result<Ensemble, EnsembleError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| EnsembleError::Parse {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let spec = manifest.spec;
    if manifest.n_d != manifest.members.len() || manifest.n_d != spec.n_d {
        return Err(EnsembleError::Manifest(format!(
            "n_d = {} but {} member files listed (spec n_d = {})",
            manifest.n_d,
            manifest.members.len(),
            spec.n_d
        )));
    }
    spec.validate()?;
    let members = manifest
        .members
        .iter()
        .map(|name| parse_member(&dir.join(name), spec.nx, spec.ny))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble { spec, members })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> EnsembleSpec {
        EnsembleSpec {
            n_d: 4,
            seed: 7,
            log_mean: (1e-12f64).ln(),
            log_std: 1.0,
            corr_len: 2.0,
            corr_len_y: None,
            nx: 9,
            ny: 6,
        }
    }

    #[test]
    fn zero_log_std_gives_homogeneous_members() {
        let e = generate(&EnsembleSpec { log_std: 0.0, ..spec() }).unwrap();
        let k = (1e-12f64).ln().exp();
        assert!(e.members.iter().flatten().all(|&v| v == k));
    }

    #[test]
    fn members_depend_only_on_seed_and_index() {
        let a = generate(&spec()).unwrap();
        let b = generate(&EnsembleSpec { n_d: 7, ..spec() }).unwrap();
        assert_eq!(a.members[..], b.members[..4]);
        assert_ne!(a.members[0], a.members[1]);
        let c = generate(&EnsembleSpec { seed: 8, ..spec() }).unwrap();
        assert_ne!(a.members[0], c.members[0]);
    }

    #[test]
    fn kernel_is_normalized() {
        for sigma in [0.0, 0.5, 1.0, 3.7] {
            let k = gaussian_kernel(sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert_eq!(k.len() % 2, 1);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&EnsembleSpec { n_d: 0, ..spec() }).is_err());
        assert!(generate(&EnsembleSpec { log_std: -1.0, ..spec() }).is_err());
        assert!(generate(&EnsembleSpec { corr_len: -0.5, ..spec() }).is_err());
    }
}
