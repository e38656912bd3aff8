use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::dose_noise;
use super::phantom::{make_phantom, normalize_hu};
use super::projection::{default_detector_count, fbp, radon};
use crate::error::{Error, Result};
use crate::tensor::{read_ntsr_file, write_ntsr_file, Dtype, Tensor};

/// Scanner and dose settings shared by every simulated image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: usize,
    pub n_angles: usize,
    /// Defaults to `ceil(sqrt(2) * grid)`.
    #[serde(default)]
    pub n_det: Option<usize>,
    /// Unattenuated photon count per detector bin.
    pub i0: f64,
    /// Dose fraction of the low-dose pool.
    pub alpha: f64,
    /// Dose fraction of the standard-dose pool.
    pub sd_alpha: f64,
    /// Pixel size; scales line integrals to physical attenuation.
    pub pixel_mm: f64,
    /// Linear attenuation of water, per mm.
    pub mu_water: f64,
    /// Inclusive range of ellipses per phantom.
    pub ellipses: (usize, usize),
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            grid: 64,
            n_angles: 180,
            n_det: None,
            i0: 1e5,
            alpha: 0.25,
            sd_alpha: 1.0,
            pixel_mm: 0.05,
            mu_water: 0.02,
            ellipses: (4, 10),
        }
    }
}

impl SimConfig {
    pub fn detectors(&self) -> usize {
        self.n_det.unwrap_or_else(|| default_detector_count(self.grid))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid < 2 {
            return bad(format!("grid must be at least 2, got {}", self.grid));
        }
        if self.n_angles == 0 || self.detectors() == 0 {
            return bad("projection geometry needs angles and detector bins".into());
        }
        if !(self.i0 > 0.0) {
            return bad(format!("i0 must be positive, got {}", self.i0));
        }
        for (name, a) in [("alpha", self.alpha), ("sd_alpha", self.sd_alpha)] {
            if !(a > 0.0 && a <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {a}"));
            }
        }
        if !(self.pixel_mm > 0.0 && self.mu_water > 0.0) {
            return bad("pixel_mm and mu_water must be positive".into());
        }
        if self.ellipses.0 > self.ellipses.1 {
            return bad(format!("empty ellipse range {:?}", self.ellipses));
        }
        Ok(())
    }

    fn mu_scale(&self) -> f64 {
        self.mu_water * self.pixel_mm
    }

    /// Normalized image -> per-pixel attenuation (air maps to 0).
    pub fn to_attenuation(&self, image: &Tensor) -> Tensor {
        let k = self.mu_scale();
        image.map(|v| k * (1.0 + 4.0 * v).max(0.0))
    }

    /// Per-pixel attenuation -> normalized image, truncated below air.
    pub fn from_attenuation(&self, mu: &Tensor) -> Tensor {
        let k = self.mu_scale();
        mu.map(|m| normalize_hu(1000.0 * (m / k - 1.0)))
    }

    /// Projects, optionally adds dose noise `(alpha, seed)`, reconstructs.
    pub fn scan(&self, image: &Tensor, dose: Option<(f64, u64)>) -> Result<Tensor> {
        let sino = radon(&self.to_attenuation(image), self.n_angles, self.detectors())?;
        let sino = match dose {
            Some((alpha, seed)) => dose_noise(&sino, self.i0, alpha, seed)?,
            None => sino,
        };
        Ok(self.from_attenuation(&fbp(&sino, self.grid)?))
    }
}

/// Consecutive phantom seeds `start .. start + count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub count: usize,
}

impl SeedRange {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.start..self.start + self.count as u64
    }

    fn end(&self) -> u64 {
        self.start + self.count as u64
    }

    pub fn overlaps(&self, other: &SeedRange) -> bool {
        self.count > 0 && other.count > 0 && self.start < other.end() && other.start < self.end()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub sim: SimConfig,
    pub train_ld: SeedRange,
    pub train_sd: SeedRange,
    pub eval: SeedRange,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            sim: SimConfig::default(),
            train_ld: SeedRange { start: 0, count: 200 },
            train_sd: SeedRange { start: 100_000, count: 200 },
            eval: SeedRange { start: 200_000, count: 50 },
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let named = [("train_ld", self.train_ld), ("train_sd", self.train_sd), ("eval", self.eval)];
        for i in 0..3 {
            for j in i + 1..3 {
                if named[i].1.overlaps(&named[j].1) {
                    return Err(Error::Config(format!(
                        "phantom seed ranges {} {:?} and {} {:?} overlap; the pools would share phantoms",
                        named[i].0, named[i].1, named[j].0, named[j].1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Noise seed for one phantom and pool, decorrelated from the phantom seed.
pub fn noise_seed(phantom_seed: u64, pool: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = phantom_seed ^ pool.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const POOL_LD: u64 = 1;
const POOL_SD: u64 = 2;
const POOL_EVAL: u64 = 3;
const POOL_EVAL_SD: u64 = 4;

/// One low-dose eval pair from a shared phantom.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub seed: u64,
    /// Noiseless reconstruction.
    pub clean: Tensor,
    /// Reconstruction from low-dose projections.
    pub noisy: Tensor,
}

/// Clean (noiseless-projection) reconstruction of phantom `seed`.
pub fn clean_image(sim: &SimConfig, seed: u64) -> Result<Tensor> {
    let (_, img) = make_phantom(seed, sim.grid, sim.ellipses)?;
    sim.scan(&img, None)
}

pub fn eval_pair(sim: &SimConfig, seed: u64) -> Result<ImagePair> {
    let (_, img) = make_phantom(seed, sim.grid, sim.ellipses)?;
    Ok(ImagePair {
        seed,
        clean: sim.scan(&img, None)?,
        noisy: sim.scan(&img, Some((sim.alpha, noise_seed(seed, POOL_EVAL))))?,
    })
}

/// Standard-dose reconstruction of an eval phantom, from its own noise draw.
pub fn standard_dose_image(sim: &SimConfig, seed: u64) -> Result<Tensor> {
    let (_, img) = make_phantom(seed, sim.grid, sim.ellipses)?;
    sim.scan(&img, Some((sim.sd_alpha, noise_seed(seed, POOL_EVAL_SD))))
}

fn pool(sim: &SimConfig, range: SeedRange, alpha: f64, tag: u64) -> Result<Vec<Tensor>> {
    range
        .seeds()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|seed| {
            let (_, img) = make_phantom(seed, sim.grid, sim.ellipses)?;
            sim.scan(&img, Some((alpha, noise_seed(seed, tag))))
        })
        .collect()
}

/// Counts and settings recorded next to the files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config: DatasetConfig,
    pub grid: usize,
    pub i0: f64,
    pub alpha: f64,
    pub train_ld_count: usize,
    pub train_sd_count: usize,
    pub eval_count: usize,
    pub train_ld_seeds: Vec<u64>,
    pub train_sd_seeds: Vec<u64>,
    pub eval_seeds: Vec<u64>,
}

/// Unpaired training pools plus paired eval images.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train_ld: Vec<Tensor>,
    pub train_sd: Vec<Tensor>,
    pub eval: Vec<ImagePair>,
}

pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let sim = &cfg.sim;
    let train_ld = pool(sim, cfg.train_ld, sim.alpha, POOL_LD)?;
    let train_sd = pool(sim, cfg.train_sd, sim.sd_alpha, POOL_SD)?;
    let eval = cfg
        .eval
        .seeds()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| eval_pair(sim, s))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format_version: 1,
        config: cfg.clone(),
        grid: sim.grid,
        i0: sim.i0,
        alpha: sim.alpha,
        train_ld_count: train_ld.len(),
        train_sd_count: train_sd.len(),
        eval_count: eval.len(),
        train_ld_seeds: cfg.train_ld.seeds().collect(),
        train_sd_seeds: cfg.train_sd.seeds().collect(),
        eval_seeds: cfg.eval.seeds().collect(),
    };
    Ok(Dataset { manifest, train_ld, train_sd, eval })
}

fn file_name(i: usize) -> String {
    format!("{i:05}.ntsr")
}

fn make_dir(p: &Path) -> Result<()> {
    match fs::create_dir(p) {
        Err(e) if e.kind() != std::io::ErrorKind::AlreadyExists => Err(Error::at_path(p)(e)),
        _ => Ok(()),
    }
}

impl Dataset {
    /// Writes `train/ld`, `train/sd`, `eval/pairs` and `manifest.json` into
    /// `dir`. The parent of `dir` must exist.
    pub fn write(&self, dir: &Path) -> Result<()> {
        if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return Err(Error::at_path(parent)(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "output directory's parent does not exist",
                )));
            }
        }
        make_dir(dir)?;
        for sub in ["train", "train/ld", "train/sd", "eval", "eval/pairs"] {
            make_dir(&dir.join(sub))?;
        }
        for (i, t) in self.train_ld.iter().enumerate() {
            write_ntsr_file(dir.join("train/ld").join(file_name(i)), t, Dtype::F64)?;
        }
        for (i, t) in self.train_sd.iter().enumerate() {
            write_ntsr_file(dir.join("train/sd").join(file_name(i)), t, Dtype::F64)?;
        }
        for (i, p) in self.eval.iter().enumerate() {
            let both = Tensor::stack(&[p.clean.clone(), p.noisy.clone()])?;
            write_ntsr_file(dir.join("eval/pairs").join(file_name(i)), &both, Dtype::F64)?;
        }
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, json + "\n").map_err(Error::at_path(path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest = read_manifest(dir)?;
        let read_pool = |sub: &str, n: usize| -> Result<Vec<Tensor>> {
            (0..n).map(|i| read_ntsr_file(dir.join(sub).join(file_name(i)))).collect()
        };
        let train_ld = read_pool("train/ld", manifest.train_ld_count)?;
        let train_sd = read_pool("train/sd", manifest.train_sd_count)?;
        let eval = read_pool("eval/pairs", manifest.eval_count)?
            .into_iter()
            .zip(&manifest.eval_seeds)
            .map(|(t, &seed)| split_pair(&t, seed))
            .collect::<Result<_>>()?;
        Ok(Dataset { manifest, train_ld, train_sd, eval })
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path: PathBuf = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(Error::at_path(&path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Splits a stored `(2,1,H,W)` pair into clean and noisy images.
pub fn split_pair(t: &Tensor, seed: u64) -> Result<ImagePair> {
    let s = t.shape();
    if s.batch != 2 || s.channels != 1 {
        return Err(Error::Format(format!(
            "eval pair must be a (2,1,H,W) tensor of clean and noisy images, got {s}"
        )));
    }
    Ok(ImagePair {
        seed,
        clean: t.batch_item(0),
        noisy: t.batch_item(1),
    })
}

/// Residual-domain variance used to compare noise levels.
pub fn residual_variance(image: &Tensor, levels: usize) -> Result<f64> {
    Ok(crate::wavelet::wavelet_residual(image, levels)?.0.variance())
}


#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetConfig {
        DatasetConfig {
            sim: SimConfig { grid: 16, n_angles: 24, ..SimConfig::default() },
            train_ld: SeedRange { start: 0, count: 3 },
            train_sd: SeedRange { start: 10, count: 2 },
            eval: SeedRange { start: 20, count: 2 },
        }
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let mut c = tiny();
        c.train_sd.start = 2;
        let err = build_dataset(&c).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
        c.train_sd.count = 0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn counts_and_rerender() {
        let c = tiny();
        let d = build_dataset(&c).unwrap();
        assert_eq!(d.manifest.train_ld_count, 3);
        assert_eq!(d.train_sd.len(), 2);
        assert_eq!(d.eval.len(), 2);
        for p in &d.eval {
            assert_eq!(p.clean, clean_image(&c.sim, p.seed).unwrap());
            assert_ne!(p.clean, p.noisy);
        }
    }

    #[test]
    fn attenuation_round_trip() {
        let sim = SimConfig::default();
        let img = Tensor::image(1, 3, vec![-0.25, 0.0, 0.1]).unwrap();
        let back = sim.from_attenuation(&sim.to_attenuation(&img));
        assert!(back.max_abs_diff(&img).unwrap() < 1e-12);
    }
}
