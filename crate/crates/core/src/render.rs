//! Front-to-back ray marching.
//!
//! Three modes share one marching kernel:
//!
//! * `Reference` clips each ray to the mesh bounds and marches the whole
//!   range at the base step `s1`, with no partition structure.
//! * `SkipOnly` marches only the active partitions a ray passes through, at `s1`.
//! * `SkipAdaptive` does the same with a per-partition step chosen from the
//!   partition's normalized variance.
//!
//! Samples sit at the midpoints of consecutive steps starting at the interval
//! entry, so two modes that march the same interval with the same step take
//! bit-identical samples. An interval shorter than half a step gets a single
//! sample at its midpoint, with opacity corrected for the interval's length.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Ray, Vec3};
use crate::mesh::{MeshSampler, SampleHint};
use crate::par::{self, Parallelism};
use crate::scene::Scene;
use crate::transfer::{Rgba, TransferFunction};
use crate::traversal::{PartitionInterval, Traversal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderMode {
    Reference,
    #[serde(alias = "skip")]
    SkipOnly,
    SkipAdaptive,
}

impl RenderMode {
    pub fn name(self) -> &'static str {
        match self {
            RenderMode::Reference => "reference",
            RenderMode::SkipOnly => "skip",
            RenderMode::SkipAdaptive => "skip-adaptive",
        }
    }
}

impl std::str::FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference" => Ok(RenderMode::Reference),
            "skip" | "skip-only" => Ok(RenderMode::SkipOnly),
            "skip-adaptive" | "adaptive" => Ok(RenderMode::SkipAdaptive),
            other => Err(format!(
                "unknown mode {other:?} (expected reference, skip or skip-adaptive)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    /// Minimum (finest) step, world units.
    pub s1: f64,
    /// Maximum (coarsest) step, world units.
    pub s2: f64,
    /// Adaptive power; larger values keep medium-variance partitions closer to `s1`.
    pub p: f64,
    /// Stop marching once accumulated opacity reaches this. `1.0` only stops
    /// on a fully opaque ray.
    pub termination_opacity: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        AdaptiveParams {
            s1: 0.1,
            s2: 0.1,
            p: 1.0,
            termination_opacity: 0.99,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        if !self.s1.is_finite() || self.s1 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "s1 must be positive, got {}",
                self.s1
            )));
        }
        if !self.s2.is_finite() || self.s2 < self.s1 {
            return Err(Error::InvalidParams(format!(
                "s2 ({}) must be at least s1 ({})",
                self.s2, self.s1
            )));
        }
        if !self.p.is_finite() || self.p < 1.0 {
            return Err(Error::InvalidParams(format!(
                "p must be at least 1, got {}",
                self.p
            )));
        }
        if !(self.termination_opacity > 0.0 && self.termination_opacity <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "termination_opacity must be in (0, 1], got {}",
                self.termination_opacity
            )));
        }
        Ok(())
    }
}

/// `s = max(s1 + (s2 - s1) |min(σ, 1) - 1|^p, s1)`
#[inline]
pub fn compute_step_size(params: &AdaptiveParams, sigma: f64) -> f64 {
    let s1 = params.s1;
    let s2 = params.s2;
    (s1 + (s2 - s1) * (sigma.min(1.0) - 1.0).abs().powf(params.p)).max(s1)
}

/// `α̃ = 1 - (1 - α)^(s / s1)`; returns `alpha` unchanged when `s == s1`.
#[inline]
pub fn correct_opacity(alpha: f64, s: f64, s1: f64) -> f64 {
    if s == s1 {
        return alpha;
    }
    1.0 - (1.0 - alpha).powf(s / s1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Looks at the center of `bounds` from direction `dir`, far enough back
    /// for the whole box to fit the vertical field of view.
    pub fn framing(
        bounds: &crate::geom::Aabb,
        dir: Vec3,
        fov: f64,
        width: usize,
        height: usize,
    ) -> Camera {
        let c = bounds.center();
        let r = bounds.diagonal() * 0.5;
        let dist = r / (fov.to_radians() * 0.5).sin();
        let pos = c - dir.normalize() * dist;
        let up = if dir.normalize().cross(&Vec3::z()).norm() > 1e-6 {
            Vec3::z()
        } else {
            Vec3::y()
        };
        Camera {
            position: pos.into(),
            look_at: c.into(),
            up: up.into(),
            fov,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size {}x{} is empty",
                self.width, self.height
            )));
        }
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return Err(Error::InvalidCamera(format!(
                "fov {} not in (0, 180)",
                self.fov
            )));
        }
        let forward = Vec3::from(self.look_at) - Vec3::from(self.position);
        if forward.norm() == 0.0 {
            return Err(Error::InvalidCamera("position equals look_at".into()));
        }
        if forward.cross(&Vec3::from(self.up)).norm() <= 1e-12 * forward.norm() {
            return Err(Error::InvalidCamera(
                "up is parallel to the view direction".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (Vec3::from(self.look_at) - Vec3::from(self.position)).normalize();
        let right = forward.cross(&Vec3::from(self.up)).normalize();
        let up = right.cross(&forward);
        (forward, right, up)
    }

    /// Primary ray through the center of pixel `(x, y)`, row 0 at the top.
    pub fn primary_ray(&self, x: usize, y: usize) -> Ray {
        let (forward, right, up) = self.basis();
        self.ray_with_basis(x, y, &forward, &right, &up)
    }

    #[inline]
    fn ray_with_basis(&self, x: usize, y: usize, forward: &Vec3, right: &Vec3, up: &Vec3) -> Ray {
        let half = (self.fov.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let u = ((x as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * half * aspect;
        let v = (1.0 - (y as f64 + 0.5) / self.height as f64 * 2.0) * half;
        Ray::new(Vec3::from(self.position), forward + right * u + up * v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accum {
    /// Premultiplied color.
    pub color: [f64; 3],
    pub opacity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarchOutcome {
    pub samples: u32,
    pub terminated: bool,
}

/// Integrates `[t_enter, t_exit)` of `ray` at fixed `step` into `accum`.
///
/// `offset` is the fraction of a step before the first sample (½ unless
/// jittering). `termination` is the opacity at which the march stops early.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn march_interval(
    sampler: &MeshSampler,
    tf: &TransferFunction,
    ray: &Ray,
    t_enter: f64,
    t_exit: f64,
    step: f64,
    s1: f64,
    offset: f64,
    termination: f64,
    accum: &mut Accum,
    hint: &mut SampleHint,
) -> MarchOutcome {
    let mut samples = 0u32;
    let mut k = 0u64;
    // An interval too short to hold the first position still gets one
    // sample, at its midpoint, weighted by its own length.
    let sliver = t_exit > t_enter && t_enter + offset * step >= t_exit;
    loop {
        let (t, seg) = if sliver {
            if k > 0 {
                break;
            }
            (0.5 * (t_enter + t_exit), t_exit - t_enter)
        } else {
            (t_enter + (k as f64 + offset) * step, step)
        };
        if t >= t_exit {
            break;
        }
        k += 1;
        samples += 1;
        let Some(value) = sampler.sample_field_hinted(&ray.at(t), hint) else {
            continue;
        };
        let rgba = tf.lookup(value);
        if rgba[3] <= 0.0 {
            continue;
        }
        let a = correct_opacity(rgba[3], seg, s1);
        let w = (1.0 - accum.opacity) * a;
        accum.color[0] += w * rgba[0];
        accum.color[1] += w * rgba[1];
        accum.color[2] += w * rgba[2];
        accum.opacity += w;
        if accum.opacity >= termination {
            return MarchOutcome {
                samples,
                terminated: true,
            };
        }
    }
    MarchOutcome {
        samples,
        terminated: false,
    }
}

/// [`march_interval`] over one partition interval, with midpoint placement.
pub fn march_partition(
    sampler: &MeshSampler,
    tf: &TransferFunction,
    ray: &Ray,
    interval: &PartitionInterval,
    step: f64,
    params: &AdaptiveParams,
    accum: &mut Accum,
) -> MarchOutcome {
    let mut hint = None;
    march_interval(
        sampler,
        tf,
        ray,
        interval.t_enter,
        interval.t_exit,
        step,
        params.s1,
        0.5,
        params.termination_opacity,
        accum,
        &mut hint,
    )
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub parallelism: Parallelism,
    /// Per-pixel pseudo-random first-sample offset instead of the midpoint.
    /// Deterministic for a given pixel.
    #[serde(default)]
    pub jitter: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Framebuffer {
    pub width: usize,
    pub height: usize,
    /// Non-premultiplied RGBA after compositing with the background.
    pub rgba: Vec<[f32; 4]>,
    pub samples: Vec<u32>,
    pub background: Rgba,
}

impl Framebuffer {
    /// 8-bit RGBA, row-major, rounding half up.
    pub fn to_rgba8(&self) -> Vec<u8> {
        self.rgba.iter().flat_map(|px| px.map(quantize)).collect()
    }

    /// 8-bit RGB, row-major.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgba
            .iter()
            .flat_map(|px| [quantize(px[0]), quantize(px[1]), quantize(px[2])])
            .collect()
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderStats {
    pub total_samples: u64,
    /// Sum over pixels of the number of partitions marched.
    pub partitions_visited: u64,
    pub partitions_visited_mean: f64,
    /// Samples taken inside each partition; empty in reference mode.
    pub partition_samples: Vec<u64>,
    pub wall_time: Duration,
}

struct RowResult {
    rgba: Vec<[f32; 4]>,
    samples: Vec<u32>,
    visited: u64,
    partition_samples: Vec<(u32, u64)>,
}

pub fn render(
    scene: &Scene,
    camera: &Camera,
    mode: RenderMode,
    params: &AdaptiveParams,
    background: Rgba,
    options: &RenderOptions,
) -> Result<(Framebuffer, RenderStats)> {
    camera.validate()?;
    params.validate()?;
    let start = Instant::now();
    let (forward, right, up) = camera.basis();
    let w = camera.width;
    let h = camera.height;

    let rows = par::map_indexed(h, options.parallelism, |y| {
        let mut row = RowResult {
            rgba: Vec::with_capacity(w),
            samples: Vec::with_capacity(w),
            visited: 0,
            partition_samples: Vec::new(),
        };
        for x in 0..w {
            let ray = camera.ray_with_basis(x, y, &forward, &right, &up);
            let offset = if options.jitter {
                pixel_jitter(x, y)
            } else {
                0.5
            };
            let (accum, samples, visited) = shade(
                scene,
                &ray,
                mode,
                params,
                offset,
                &mut row.partition_samples,
            );
            row.rgba.push(composite_background(&accum, &background));
            row.samples.push(samples);
            row.visited += visited;
        }
        row
    });

    let mut fb = Framebuffer {
        width: w,
        height: h,
        rgba: Vec::with_capacity(w * h),
        samples: Vec::with_capacity(w * h),
        background,
    };
    let mut partition_samples = if mode == RenderMode::Reference {
        Vec::new()
    } else {
        vec![0u64; scene.partitions().len()]
    };
    let mut visited = 0;
    for row in rows {
        fb.rgba.extend(row.rgba);
        fb.samples.extend(row.samples);
        visited += row.visited;
        for (pid, n) in row.partition_samples {
            partition_samples[pid as usize] += n;
        }
    }
    let total_samples = fb.samples.iter().map(|&s| s as u64).sum();
    let stats = RenderStats {
        total_samples,
        partitions_visited: visited,
        partitions_visited_mean: visited as f64 / (w * h) as f64,
        partition_samples,
        wall_time: start.elapsed(),
    };
    Ok((fb, stats))
}

/// Marches one primary ray. Returns the accumulated color, sample count and
/// number of partitions marched.
fn shade(
    scene: &Scene,
    ray: &Ray,
    mode: RenderMode,
    params: &AdaptiveParams,
    offset: f64,
    partition_samples: &mut Vec<(u32, u64)>,
) -> (Accum, u32, u64) {
    let sampler = scene.sampler();
    let tf = scene.transfer_function();
    let mut accum = Accum::default();
    let mut hint = None;
    let mut samples = 0u32;
    let termination = if params.termination_opacity >= 1.0 {
        f64::INFINITY
    } else {
        params.termination_opacity
    };

    if mode == RenderMode::Reference {
        if let Some((a, b)) = ray.box_interval(&scene.mesh().bounds()) {
            let t0 = a.max(ray.t_min);
            // Same floor traversal applies to partition intervals.
            if b - t0 >= scene.traversal_config().epsilon {
                let out = march_interval(
                    sampler,
                    tf,
                    ray,
                    t0,
                    b,
                    params.s1,
                    params.s1,
                    offset,
                    termination,
                    &mut accum,
                    &mut hint,
                );
                samples += out.samples;
            }
        }
        return (accum, samples, 0);
    }

    let metas = scene.metas();
    let mut visited = 0;
    let traversal = Traversal::new(
        scene.bvh(),
        scene.partitions(),
        metas,
        *ray,
        scene.traversal_config(),
    )
    .with_active_nodes(scene.active_nodes());
    for iv in traversal {
        let step = match mode {
            RenderMode::SkipAdaptive => {
                compute_step_size(params, metas[iv.partition_id].normalized_variance)
            }
            _ => params.s1,
        };
        let out = march_interval(
            sampler,
            tf,
            ray,
            iv.t_enter,
            iv.t_exit,
            step,
            params.s1,
            offset,
            termination,
            &mut accum,
            &mut hint,
        );
        visited += 1;
        samples += out.samples;
        if out.samples > 0 {
            match partition_samples.last_mut() {
                Some((pid, n)) if *pid as usize == iv.partition_id => *n += out.samples as u64,
                _ => partition_samples.push((iv.partition_id as u32, out.samples as u64)),
            }
        }
        if out.terminated {
            break;
        }
    }
    (accum, samples, visited)
}

fn composite_background(accum: &Accum, bg: &Rgba) -> [f32; 4] {
    if accum.opacity <= 0.0 {
        return bg.map(|c| c as f32);
    }
    let rest = (1.0 - accum.opacity).max(0.0);
    let a = accum.opacity + rest * bg[3];
    let mut out = [0.0f32; 4];
    for k in 0..3 {
        let premult = accum.color[k] + rest * bg[3] * bg[k];
        out[k] = if a > 0.0 {
            (premult / a).clamp(0.0, 1.0) as f32
        } else {
            0.0
        };
    }
    out[3] = a.min(1.0) as f32;
    out
}

fn pixel_jitter(x: usize, y: usize) -> f64 {
    // splitmix64 finalizer over the pixel coordinates.
    let mut z = (x as u64) << 32 ^ y as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
