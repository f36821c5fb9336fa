//! The render state owned by the service loop, and how edits change it.

use std::time::Instant;

use tetskip::config::SceneConfig;
use tetskip::image::sample_heatmap;
use tetskip::metrics::{ssim, SsimConfig};
use tetskip::render::{render, AdaptiveParams, Camera, RenderMode, RenderOptions};
use tetskip::transfer::{Rgba, TransferFunction};
use tetskip::{Error, RgbImage, Scene};

use crate::protocol::{FrameMessage, FrameStats, ViewerMessage};

/// Largest accepted frame edge, in pixels.
pub const MAX_FRAME_EDGE: usize = 8192;

/// Extra per-frame outputs some client asked for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameExtras {
    pub heatmap: bool,
    pub ssim: bool,
}

pub struct ViewerState {
    scene: Scene,
    camera: Camera,
    params: AdaptiveParams,
    mode: RenderMode,
    background: Rgba,
    options: RenderOptions,
    version: u64,
    next_frame_id: u64,
}

impl ViewerState {
    pub fn new(
        scene: Scene,
        camera: Camera,
        params: AdaptiveParams,
        mode: RenderMode,
        background: Rgba,
        options: RenderOptions,
    ) -> Result<Self, Error> {
        camera.validate()?;
        params.validate()?;
        Ok(ViewerState {
            scene,
            camera,
            params,
            mode,
            background,
            options,
            version: 0,
            next_frame_id: 0,
        })
    }

    pub fn from_config(cfg: &SceneConfig, options: RenderOptions) -> Result<Self, Error> {
        let scene = cfg.build_scene()?;
        Self::new(
            scene,
            cfg.camera,
            cfg.params,
            cfg.mode,
            cfg.background,
            options,
        )
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn params(&self) -> &AdaptiveParams {
        &self.params
    }

    pub fn mode(&self) -> RenderMode {
        self.mode
    }

    pub fn background(&self) -> Rgba {
        self.background
    }

    pub fn options(&self) -> &RenderOptions {
        &self.options
    }

    /// Number of edits accepted so far.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Applies one edit. On error the state is untouched. `Hello` carries
    /// connection options only and is rejected here.
    pub fn apply(&mut self, msg: &ViewerMessage) -> Result<(), Error> {
        match msg {
            ViewerMessage::Hello { .. } => {
                return Err(Error::InvalidParams(
                    "Hello is a connection option, not a state edit".into(),
                ))
            }
            ViewerMessage::SetCamera {
                position,
                look_at,
                up,
                fov,
            } => {
                let camera = Camera {
                    position: *position,
                    look_at: *look_at,
                    up: *up,
                    fov: *fov,
                    ..self.camera
                };
                camera.validate()?;
                self.camera = camera;
            }
            ViewerMessage::SetTransferFunction { domain, rgba } => {
                let tf = TransferFunction::new((domain[0], domain[1]), rgba.clone())?;
                self.scene
                    .update_transfer_function(tf, self.options.parallelism);
            }
            ViewerMessage::SetParams {
                s1,
                s2,
                p,
                mode,
                termination_opacity,
            } => {
                let params = AdaptiveParams {
                    s1: *s1,
                    s2: *s2,
                    p: *p,
                    termination_opacity: *termination_opacity,
                };
                params.validate()?;
                self.params = params;
                self.mode = *mode;
            }
            ViewerMessage::RequestFrame { width, height } => {
                if *width > MAX_FRAME_EDGE || *height > MAX_FRAME_EDGE {
                    return Err(Error::InvalidCamera(format!(
                        "frame {width}x{height} exceeds {MAX_FRAME_EDGE} pixels per edge"
                    )));
                }
                let camera = Camera {
                    width: *width,
                    height: *height,
                    ..self.camera
                };
                camera.validate()?;
                self.camera = camera;
            }
        }
        self.version += 1;
        Ok(())
    }

    /// Renders the current state. A render failure becomes an error frame
    /// with empty payloads; the frame id is consumed either way.
    pub fn render_frame(&mut self, extras: FrameExtras) -> FrameMessage {
        let frame_id = self.next_frame_id;
        self.next_frame_id += 1;
        let start = Instant::now();
        let result = render(
            &self.scene,
            &self.camera,
            self.mode,
            &self.params,
            self.background,
            &self.options,
        );
        let (fb, stats) = match result {
            Ok(r) => r,
            Err(e) => {
                return FrameMessage {
                    frame_id,
                    state_version: self.version,
                    width: self.camera.width,
                    height: self.camera.height,
                    pixels: Vec::new(),
                    stats: FrameStats {
                        ms: start.elapsed().as_secs_f64() * 1e3,
                        total_samples: 0,
                        ssim_vs_reference: None,
                    },
                    heatmap: None,
                    error: Some(e.to_string()),
                }
            }
        };
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let ssim_vs_reference = if extras.ssim {
            self.reference_ssim(&RgbImage::from_framebuffer(&fb))
        } else {
            None
        };
        let heatmap = extras.heatmap.then(|| {
            sample_heatmap(fb.width, fb.height, &fb.samples, None)
                .data
                .chunks_exact(3)
                .flat_map(|c| [c[0], c[1], c[2], 255])
                .collect()
        });
        FrameMessage {
            frame_id,
            state_version: self.version,
            width: fb.width,
            height: fb.height,
            pixels: fb.to_rgba8(),
            stats: FrameStats {
                ms,
                total_samples: stats.total_samples,
                ssim_vs_reference,
            },
            heatmap,
            error: None,
        }
    }

    fn reference_ssim(&self, image: &RgbImage) -> Option<f64> {
        if self.mode == RenderMode::Reference {
            return Some(1.0);
        }
        let (reference, _) = render(
            &self.scene,
            &self.camera,
            RenderMode::Reference,
            &self.params,
            self.background,
            &self.options,
        )
        .ok()?;
        ssim(
            &RgbImage::from_framebuffer(&reference),
            image,
            &SsimConfig::default(),
        )
        .ok()
    }
}
