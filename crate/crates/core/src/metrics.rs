//! Image quality (SSIM) and the maximum-step sweep used to trade samples
//! for quality.
//!
//! SSIM uses the usual constants: an 11x11 Gaussian window with σ = 1.5,
//! K1 = 0.01, K2 = 0.03 and L = 255, computed on Rec.709 luminance of the
//! 8-bit RGB values. The score is the mean over all window positions that
//! fit entirely inside the image (no padding).

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::render::{render, AdaptiveParams, Camera, RenderMode, RenderOptions};
use crate::scene::Scene;
use crate::transfer::Rgba;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }
}

/// Rec.709 luma of each pixel, on the 0..255 scale.
pub fn luminance(img: &RgbImage) -> Vec<f64> {
    img.data
        .chunks_exact(3)
        .map(|p| 0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64)
        .collect()
}

pub fn ssim(a: &RgbImage, b: &RgbImage, config: &SsimConfig) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let (w, h) = (a.width, a.height);
    let win = config.window;
    if w < win || h < win {
        return Err(Error::InvalidParams(format!(
            "SSIM needs images of at least {win}x{win}, got {w}x{h}"
        )));
    }
    let la = luminance(a);
    let lb = luminance(b);
    let kernel = config.kernel();

    let aa: Vec<f64> = la.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = lb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(&la, w, h, &kernel);
    let mu_b = filter_valid(&lb, w, h, &kernel);
    let e_aa = filter_valid(&aa, w, h, &kernel);
    let e_bb = filter_valid(&bb, w, h, &kernel);
    let e_ab = filter_valid(&ab, w, h, &kernel);

    let c1 = config.c1();
    let c2 = config.c2();
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Separable "valid" correlation: output is `(w - k + 1) x (h - k + 1)`.
fn filter_valid(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = kernel.iter().zip(&row[x..x + k]).map(|(c, v)| c * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, c)| c * horiz[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s2: f64,
    /// `None` when timing was not measured.
    pub fps: Option<f64>,
    pub samples: u64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub reference_samples: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with header `s2,fps,samples,ssim`. Untimed rows write `nan` for fps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s2,fps,samples,ssim\n");
        for r in &self.rows {
            let fps = r
                .fps
                .map_or_else(|| "nan".to_string(), |f| format!("{f:.3}"));
            // Rounded so linspace noise such as 0.060000000000000005 prints as 0.06.
            let s2 = (r.s2 * 1e12).round() / 1e12;
            let _ = writeln!(out, "{},{},{},{:.6}", s2, fps, r.samples, r.ssim);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timing {
    /// One render per point, no fps column. Output is fully deterministic.
    Off,
    /// Median frame time over `frames` renders after `warmup` discarded ones.
    Measured { warmup: usize, frames: usize },
}

impl Default for Timing {
    fn default() -> Self {
        Timing::Measured {
            warmup: 1,
            frames: 5,
        }
    }
}

/// `count` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Renders the reference image once, then `SkipAdaptive` for each `s2`
/// (with the other parameters from `base`), recording samples, SSIM against
/// the reference and optionally frame rate. Rows come back sorted by `s2`.
pub fn run_sweep(
    scene: &Scene,
    camera: &Camera,
    base: &AdaptiveParams,
    s2_values: &[f64],
    background: Rgba,
    options: &RenderOptions,
    timing: Timing,
) -> Result<SweepResult> {
    let mut s2s = s2_values.to_vec();
    s2s.sort_by(f64::total_cmp);
    let (ref_fb, ref_stats) = render(
        scene,
        camera,
        RenderMode::Reference,
        base,
        background,
        options,
    )?;
    let reference = RgbImage::from_framebuffer(&ref_fb);
    let cfg = SsimConfig::default();

    let mut rows = Vec::with_capacity(s2s.len());
    for s2 in s2s {
        let params = AdaptiveParams { s2, ..*base };
        params.validate()?;
        let (fb, stats) = render(
            scene,
            camera,
            RenderMode::SkipAdaptive,
            &params,
            background,
            options,
        )?;
        let fps = match timing {
            Timing::Off => None,
            Timing::Measured { warmup, frames } => {
                for _ in 0..warmup {
                    render(
                        scene,
                        camera,
                        RenderMode::SkipAdaptive,
                        &params,
                        background,
                        options,
                    )?;
                }
                let mut times: Vec<Duration> = (0..frames.max(1))
                    .map(|_| {
                        render(
                            scene,
                            camera,
                            RenderMode::SkipAdaptive,
                            &params,
                            background,
                            options,
                        )
                        .map(|(_, s)| s.wall_time)
                    })
                    .collect::<Result<_>>()?;
                times.sort();
                let median = times[times.len() / 2].as_secs_f64();
                Some(if median > 0.0 {
                    1.0 / median
                } else {
                    f64::INFINITY
                })
            }
        };
        let score = ssim(&reference, &RgbImage::from_framebuffer(&fb), &cfg)?;
        rows.push(SweepRow {
            s2,
            fps,
            samples: stats.total_samples,
            ssim: score,
        });
    }
    Ok(SweepResult {
        reference_samples: ref_stats.total_samples,
        rows,
    })
}
