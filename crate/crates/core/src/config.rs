//! Scene configuration file: one JSON document naming the mesh, transfer
//! function, camera and sampling parameters of an experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::load_mesh;
use crate::partition::KdBuildConfig;
use crate::render::{AdaptiveParams, Camera, RenderMode};
use crate::scene::Scene;
use crate::transfer::{Rgba, TransferFunction};

fn default_background() -> Rgba {
    [0.0, 0.0, 0.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// `TET1` mesh file; relative paths are resolved against the config file.
    pub mesh: PathBuf,
    /// Transfer function JSON file, same path rules.
    pub transfer_function: PathBuf,
    pub camera: Camera,
    #[serde(default)]
    pub params: AdaptiveParams,
    #[serde(default = "default_mode")]
    pub mode: RenderMode,
    #[serde(default)]
    pub kd: Option<KdBuildConfig>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_background")]
    pub background: Rgba,
}

fn default_mode() -> RenderMode {
    RenderMode::SkipAdaptive
}

impl SceneConfig {
    /// Reads the config and makes its file paths absolute.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: SceneConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.mesh = resolve(base, &cfg.mesh);
        cfg.transfer_function = resolve(base, &cfg.transfer_function);
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_transfer_function(&self) -> Result<TransferFunction> {
        TransferFunction::load(&self.transfer_function)
    }

    /// Loads mesh and transfer function and builds the scene.
    pub fn build_scene(&self) -> Result<Scene> {
        let mesh = load_mesh(&self.mesh)?;
        let tf = self.load_transfer_function()?;
        Scene::build(mesh, self.kd, tf, self.epsilon)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
