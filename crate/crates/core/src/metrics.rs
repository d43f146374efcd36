//! SSIM, Dice and per-metric summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
fn gaussian_1d() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, gi) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *gi = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Valid-mode separable Gaussian filter of one `h × w` plane.
fn filter(img: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                acc += gk * img[y * w + x + k];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                acc += gk * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term, both averaged over valid
/// window positions and then over channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimComponents {
    pub ssim: f64,
    pub contrast_structure: f64,
}

fn image_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidShape(format!(
            "SSIM of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (c, h, w) = match a.shape() {
        [c, h, w] => (*c, *h, *w),
        [h, w] => (1, *h, *w),
        s => {
            return Err(Error::InvalidShape(format!(
                "SSIM needs [c, h, w] images, got {s:?}"
            )))
        }
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidShape(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    Ok((c, h, w))
}

pub fn ssim_components(a: &Tensor, b: &Tensor, dynamic_range: f64) -> Result<SsimComponents> {
    let (c, h, w) = image_dims(a, b)?;
    if !(dynamic_range > 0.0 && dynamic_range.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "dynamic range must be positive, got {dynamic_range}"
        )));
    }
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let g = gaussian_1d();
    let plane = h * w;
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    for ch in 0..c {
        let pa = &a.data()[ch * plane..(ch + 1) * plane];
        let pb = &b.data()[ch * plane..(ch + 1) * plane];
        let aa: Vec<f64> = pa.iter().map(|x| x * x).collect();
        let bb: Vec<f64> = pb.iter().map(|x| x * x).collect();
        let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();
        let mu_a = filter(pa, h, w, &g);
        let mu_b = filter(pb, h, w, &g);
        let e_aa = filter(&aa, h, w, &g);
        let e_bb = filter(&bb, h, w, &g);
        let e_ab = filter(&ab, h, w, &g);
        let count = mu_a.len();
        let (mut s_map, mut cs_map) = (0.0, 0.0);
        for i in 0..count {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let (maa, mbb, mab) = (ma * ma, mb * mb, ma * mb);
            let var_a = e_aa[i] - maa;
            let var_b = e_bb[i] - mbb;
            let cov = e_ab[i] - mab;
            let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
            let lum = (2.0 * mab + c1) / (maa + mbb + c1);
            s_map += lum * cs;
            cs_map += cs;
        }
        ssim_sum += s_map / count as f64;
        cs_sum += cs_map / count as f64;
    }
    Ok(SsimComponents {
        ssim: ssim_sum / c as f64,
        contrast_structure: cs_sum / c as f64,
    })
}

/// Mean structural similarity over all valid 11×11 Gaussian windows
/// (σ = 1.5, K₁ = 0.01, K₂ = 0.03), computed per channel and averaged.
/// Accepts `[c, h, w]` or `[h, w]` with `h, w ≥ 11`.
pub fn ssim(a: &Tensor, b: &Tensor, dynamic_range: f64) -> Result<f64> {
    ssim_components(a, b, dynamic_range).map(|s| s.ssim)
}

/// `2|P ∩ R| / (|P| + |R|)` for masks `x >= threshold`; 1 when both are empty.
pub fn dice(pred: &Tensor, reference: &Tensor, threshold: f64) -> Result<f64> {
    if pred.shape() != reference.shape() {
        return Err(Error::InvalidShape(format!(
            "Dice of {:?} and {:?}",
            pred.shape(),
            reference.shape()
        )));
    }
    let (mut both, mut p, mut r) = (0usize, 0usize, 0usize);
    for (a, b) in pred.data().iter().zip(reference.data()) {
        let (pa, rb) = (*a >= threshold, *b >= threshold);
        p += pa as usize;
        r += rb as usize;
        both += (pa && rb) as usize;
    }
    if p + r == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + r) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ssim: f64,
    pub dice: f64,
    pub eigenvalue: f64,
    pub penetration_ratio: f64,
    pub oracle_evals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population variance (divides by N).
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub ssim: Stat,
    pub dice: Stat,
    pub eigenvalue: Stat,
    pub penetration_ratio: Stat,
    pub oracle_evals: Stat,
}

/// Two-pass mean and population variance.
pub fn mean_variance(values: &[f64]) -> Result<Stat> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Stat { mean, variance })
}

pub fn summarize(reports: &[MetricReport]) -> Result<Summary> {
    let col =
        |f: fn(&MetricReport) -> f64| mean_variance(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(Summary {
        count: reports.len(),
        ssim: col(|r| r.ssim)?,
        dice: col(|r| r.dice)?,
        eigenvalue: col(|r| r.eigenvalue)?,
        penetration_ratio: col(|r| r.penetration_ratio)?,
        oracle_evals: col(|r| r.oracle_evals as f64)?,
    })
}
