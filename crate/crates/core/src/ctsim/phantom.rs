use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Attenuation of air, the phantom background.
pub const AIR_HU: f64 = -1000.0;
/// Maximum attenuation a phantom may carry.
pub const MAX_HU: f64 = 3000.0;
/// Divisor mapping HU to normalized units.
pub const HU_SCALE: f64 = 4000.0;

/// HU to normalized units, truncating below air.
pub fn normalize_hu(hu: f64) -> f64 {
    hu.max(AIR_HU) / HU_SCALE
}

pub fn to_hu(v: f64) -> f64 {
    v * HU_SCALE
}

/// An ellipse in coordinates where the image spans `[-1, 1]` on both axes
/// (`x` to the right, `y` down).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    /// Rotation in radians.
    pub angle: f64,
    pub hu: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Ellipses painted in order over an air background; later ellipses
/// replace earlier values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub grid: usize,
    pub ellipses: Vec<Ellipse>,
}

impl Phantom {
    pub fn new(grid: usize, ellipses: Vec<Ellipse>) -> Result<Self> {
        if grid == 0 {
            return Err(Error::InvalidArgument("phantom grid must be positive".into()));
        }
        for e in &ellipses {
            if !(e.a > 0.0 && e.b > 0.0) {
                return Err(Error::InvalidArgument(format!("degenerate ellipse axes {} x {}", e.a, e.b)));
            }
            if !(AIR_HU..=MAX_HU).contains(&e.hu) {
                return Err(Error::InvalidArgument(format!(
                    "ellipse attenuation {} HU outside [{AIR_HU}, {MAX_HU}]",
                    e.hu
                )));
            }
        }
        Ok(Phantom { grid, ellipses })
    }

    /// Rasterizes by testing each pixel center; returns `(1,1,grid,grid)`
    /// in normalized units.
    pub fn render(&self) -> Tensor {
        let g = self.grid;
        let mut data = vec![normalize_hu(AIR_HU); g * g];
        for row in 0..g {
            let y = (row as f64 + 0.5) / g as f64 * 2.0 - 1.0;
            for col in 0..g {
                let x = (col as f64 + 0.5) / g as f64 * 2.0 - 1.0;
                if let Some(e) = self.ellipses.iter().rev().find(|e| e.contains(x, y)) {
                    data[row * g + col] = normalize_hu(e.hu);
                }
            }
        }
        Tensor::image(g, g, data).expect("grid x grid buffer")
    }
}

/// Tissue classes for inner structures: (low HU, high HU).
const TISSUES: [(f64, f64); 5] = [
    (-900.0, -700.0), // gas / lung
    (-120.0, -60.0),  // fat
    (20.0, 80.0),     // soft tissue
    (100.0, 250.0),   // enhanced vessel
    (400.0, 1200.0),  // bone
];

/// Random body-like phantom: a large soft-tissue ellipse followed by
/// smaller inner structures. The ellipse count is drawn from
/// `n_ellipses` (inclusive); zero gives plain air.
pub fn make_phantom(seed: u64, grid: usize, n_ellipses: (usize, usize)) -> Result<(Phantom, Tensor)> {
    let (lo, hi) = n_ellipses;
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty ellipse-count range {lo}..={hi}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(lo..=hi);
    let mut ellipses = Vec::with_capacity(n);
    if n > 0 {
        ellipses.push(Ellipse {
            cx: rng.gen_range(-0.05..0.05),
            cy: rng.gen_range(-0.05..0.05),
            a: rng.gen_range(0.65..0.85),
            b: rng.gen_range(0.5..0.7),
            angle: rng.gen_range(-0.3..0.3),
            hu: rng.gen_range(0.0..60.0),
        });
    }
    for _ in 1..n {
        let (tlo, thi) = TISSUES[rng.gen_range(0..TISSUES.len())];
        let r: f64 = rng.gen_range(0.0..0.45);
        let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        ellipses.push(Ellipse {
            cx: r * t.cos(),
            cy: r * t.sin() * 0.8,
            a: rng.gen_range(0.04..0.2),
            b: rng.gen_range(0.04..0.2),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            hu: rng.gen_range(tlo..thi),
        });
    }
    let phantom = Phantom::new(grid, ellipses)?;
    let image = phantom.render();
    Ok((phantom, image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_phantom_is_air() {
        let (_, img) = make_phantom(5, 16, (0, 0)).unwrap();
        assert!(img.data().iter().all(|&v| v == -0.25));
    }

    #[test]
    fn disk_area() {
        let g = 128;
        let e = Ellipse { cx: 0.0, cy: 0.0, a: 0.5, b: 0.5, angle: 0.0, hu: 0.0 };
        let img = Phantom::new(g, vec![e]).unwrap().render();
        let inside = img.data().iter().filter(|&&v| v == 0.0).count() as f64;
        let r = g as f64 / 4.0;
        let area = std::f64::consts::PI * r * r;
        assert!((inside - area).abs() / area < 0.02, "{inside} vs {area}");
    }

    #[test]
    fn deterministic_and_validated() {
        let a = make_phantom(42, 32, (3, 8)).unwrap();
        let b = make_phantom(42, 32, (3, 8)).unwrap();
        assert_eq!(a, b);
        let bad = Ellipse { cx: 0.0, cy: 0.0, a: 0.0, b: 0.1, angle: 0.0, hu: 0.0 };
        assert!(Phantom::new(8, vec![bad]).is_err());
        let hot = Ellipse { a: 0.1, hu: 3500.0, ..bad };
        assert!(Phantom::new(8, vec![hot]).is_err());
        assert_eq!(normalize_hu(-1500.0), -0.25);
    }
}
