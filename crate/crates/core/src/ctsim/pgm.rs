use std::path::Path;

use super::phantom::to_hu;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Display window for images, in HU.
pub const IMAGE_WINDOW_HU: (f64, f64) = (-1000.0, 1000.0);
/// Display window for difference images, in HU.
pub const DIFF_WINDOW_HU: (f64, f64) = (-200.0, 200.0);

/// Encodes a single-plane normalized image as 16-bit binary PGM. Values are
/// converted to HU and mapped linearly so `lo` is 0 and `hi` is 65535,
/// clamping outside the window; the mapping is repeated in a header comment.
pub fn encode_pgm16(image: &Tensor, window: (f64, f64)) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.batch != 1 || s.channels != 1 {
        return Err(Error::shape("pgm", format!("expected one image plane, got {s}")));
    }
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("empty display window ({lo}, {hi})")));
    }
    let mut out = format!(
        "P5\n# window_hu {lo} {hi}; gray = 65535 * (clamp(hu, {lo}, {hi}) - {lo}) / ({hi} - {lo}); hu = 4000 * value\n{} {}\n65535\n",
        s.width, s.height
    )
    .into_bytes();
    for &v in image.data() {
        let t = ((to_hu(v) - lo) / (hi - lo)).clamp(0.0, 1.0);
        let g = (t * 65535.0).round() as u16;
        out.extend_from_slice(&g.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm16(path: impl AsRef<Path>, image: &Tensor, window: (f64, f64)) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm16(image, window)?).map_err(Error::at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_mapping() {
        let img = Tensor::image(1, 3, vec![-0.25, 0.0, 1.0]).unwrap();
        let bytes = encode_pgm16(&img, IMAGE_WINDOW_HU).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("P5\n# window_hu -1000 1000"));
        let px = &bytes[bytes.len() - 6..];
        assert_eq!(px, &[0, 0, 0x80, 0x00, 0xff, 0xff]);
    }
}
