//! Synthetic test images: soft bright blobs on a dark gray background.

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

const CHANNELS: usize = 3;
const BG_RANGE: (f64, f64) = (0.1, 0.25);
const AMP_RANGE: (f64, f64) = (0.55, 0.7);
const TINT: f64 = 0.05;
const RADIUS_RANGE: (f64, f64) = (3.0, 8.0);
const EDGE_SHARPNESS: f64 = 4.0;
const NOISE: f64 = 0.02;

/// A deterministic `[3, h, w]` image in `[0, 1]` with 2 to 4 blobs.
///
/// Draw order from `Rng::new(seed)`: background level, blob count
/// (`2 + next_u64 % 3`), then per blob centre y, centre x, radius, amplitude and
/// three channel tints, and finally one noise sample per element in row-major
/// order. A blob adds `a_c / (1 + exp(4 (d / r - 1)))` at distance `d`.
pub fn blob_image(seed: u64, h: usize, w: usize) -> Result<Tensor> {
    let mut rng = Rng::new(seed);
    let bg = rng.uniform(BG_RANGE.0, BG_RANGE.1);
    let blobs = 2 + (rng.next_u64() % 3) as usize;
    let plane = h * w;
    let mut data = vec![bg; CHANNELS * plane];
    for _ in 0..blobs {
        let cy = rng.uniform(0.0, h as f64);
        let cx = rng.uniform(0.0, w as f64);
        let r = rng.uniform(RADIUS_RANGE.0, RADIUS_RANGE.1);
        let a = rng.uniform(AMP_RANGE.0, AMP_RANGE.1);
        let amp: Vec<f64> = (0..CHANNELS)
            .map(|_| a + rng.uniform(-TINT, TINT))
            .collect();
        for y in 0..h {
            for x in 0..w {
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                let weight = 1.0 / (1.0 + ((d / r - 1.0) * EDGE_SHARPNESS).exp());
                for (c, ac) in amp.iter().enumerate() {
                    data[c * plane + y * w + x] += ac * weight;
                }
            }
        }
    }
    for v in data.iter_mut() {
        *v = (*v + rng.uniform(-NOISE, NOISE)).clamp(0.0, 1.0);
    }
    Tensor::new(vec![CHANNELS, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_range_and_determinism() {
        let a = blob_image(3, 20, 24).unwrap();
        assert_eq!(a.shape(), &[3, 20, 24]);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, blob_image(3, 20, 24).unwrap());
        assert_ne!(a, blob_image(4, 20, 24).unwrap());
    }

    #[test]
    fn has_bright_and_dark_regions() {
        let a = blob_image(1, 32, 32).unwrap();
        let max = a.data().iter().cloned().fold(f64::MIN, f64::max);
        let min = a.data().iter().cloned().fold(f64::MAX, f64::min);
        assert!(max > 0.6 && min < 0.3, "{min} {max}");
    }
}
