use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::{luma, Image, Rgb};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Reported PSNR for identical images (dB).
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

fn check_sizes<T, U>(a: &Image<T>, b: &Image<U>) -> Result<()> {
    if !a.same_size(b) {
        return Err(invalid("images differ in size"));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

pub fn psnr(a: &Image<Rgb>, b: &Image<Rgb>) -> Result<f64> {
    check_sizes(a, b)?;
    if a.is_empty() {
        return Err(invalid("cannot compare empty images"));
    }
    Ok(psnr_from_mse(mse(a, b, None)))
}

fn mse(a: &Image<Rgb>, b: &Image<Rgb>, valid: Option<&Image<bool>>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (x, y)) in a.pixels().iter().zip(b.pixels()).enumerate() {
        if valid.is_some_and(|m| !m.pixels()[i]) {
            continue;
        }
        for k in 0..3 {
            sum += (x[k] - y[k]) * (x[k] - y[k]);
        }
        n += 3;
    }
    sum / n as f64
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// SSIM of the window with top-left corner `(x0, y0)`.
fn window_ssim(a: &Image<f64>, b: &Image<f64>, g: &[f64], x0: usize, y0: usize) -> f64 {
    let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..SSIM_WINDOW {
        for i in 0..SSIM_WINDOW {
            let w = g[i] * g[j];
            let (x, y) = (*a.get(x0 + i, y0 + j), *b.get(x0 + i, y0 + j));
            ma += w * x;
            mb += w * y;
            saa += w * x * x;
            sbb += w * y * y;
            sab += w * x * y;
        }
    }
    let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

fn ssim_over(a: &Image<Rgb>, b: &Image<Rgb>, valid: Option<&Image<bool>>) -> Result<f64> {
    check_sizes(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(invalid("image is smaller than the 11x11 SSIM window"));
    }
    let ga = a.map(luma);
    let gb = b.map(luma);
    let g = gaussian_window();
    let mut sum = 0.0;
    let mut n = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            if let Some(m) = valid {
                let inside = (0..SSIM_WINDOW).all(|j| (0..SSIM_WINDOW).all(|i| *m.get(x0 + i, y0 + j)));
                if !inside {
                    continue;
                }
            }
            sum += window_ssim(&ga, &gb, &g, x0, y0);
            n += 1;
        }
    }
    if n == 0 {
        return Err(invalid("no SSIM window lies fully inside the mask"));
    }
    Ok(sum / n as f64)
}

/// Mean SSIM of the luma channel over all valid 11x11 Gaussian windows.
pub fn ssim(a: &Image<Rgb>, b: &Image<Rgb>) -> Result<f64> {
    ssim_over(a, b, None)
}

/// PSNR over pixels where `valid` is set; SSIM over windows fully inside it.
pub fn masked_metrics(a: &Image<Rgb>, b: &Image<Rgb>, valid: &Image<bool>) -> Result<ImageMetrics> {
    check_sizes(a, b)?;
    check_sizes(a, valid)?;
    if !valid.pixels().iter().any(|v| *v) {
        return Err(invalid("mask selects no pixels"));
    }
    Ok(ImageMetrics {
        psnr: psnr_from_mse(mse(a, b, Some(valid))),
        ssim: ssim_over(a, b, Some(valid))?,
    })
}
