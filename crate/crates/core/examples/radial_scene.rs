//! Writes a ready-to-render scene directory for the radial test volume:
//! `radial<N>.tet`, `tf.json` and `scene.json`.
//!
//! ```text
//! cargo run --example radial_scene -- scenes/radial16 16
//! ```

use std::path::PathBuf;

use tetskip::mesh::{generate_synthetic, save_mesh, AnalyticField};
use tetskip::render::{AdaptiveParams, Camera, RenderMode};
use tetskip::{Centering, SceneConfig, TransferFunction, Vec3};

fn main() -> tetskip::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "scenes/radial16".into()));
    let n: usize = args
        .next()
        .map_or(16, |s| s.parse().expect("N must be an integer"));
    std::fs::create_dir_all(&dir)?;

    let mesh = generate_synthetic(n, AnalyticField::Radial, Centering::Vertex)?;
    let mesh_name = format!("radial{n}.tet");
    save_mesh(&mesh, dir.join(&mesh_name))?;

    // Shells of increasing radius: a faint core, an opaque orange shell,
    // then thin blue and green layers, transparent beyond half the cube.
    let h = n as f64;
    let tf = TransferFunction::from_control_points(
        (0.0, 0.875 * h),
        &[
            (0.0, [1.0, 1.0, 0.8, 0.0]),
            (0.09375 * h, [1.0, 0.9, 0.2, 0.0]),
            (0.15625 * h, [1.0, 0.6, 0.1, 0.25]),
            (0.21875 * h, [0.9, 0.2, 0.1, 0.05]),
            (0.3125 * h, [0.2, 0.5, 0.9, 0.02]),
            (0.375 * h, [0.1, 0.8, 0.6, 0.12]),
            (0.4375 * h, [0.1, 0.3, 0.9, 0.0]),
            (0.875 * h, [0.0, 0.0, 0.0, 0.0]),
        ],
        256,
    )?;
    tf.save(dir.join("tf.json"))?;

    let camera = Camera::framing(&mesh.bounds(), Vec3::new(-1.0, -0.8, -0.6), 35.0, 128, 128);
    let cfg = SceneConfig {
        mesh: mesh_name.into(),
        transfer_function: "tf.json".into(),
        camera,
        params: AdaptiveParams {
            s1: 0.05,
            s2: 0.2,
            p: 1.0,
            termination_opacity: 0.99,
        },
        mode: RenderMode::SkipAdaptive,
        kd: None,
        epsilon: None,
        background: [0.0, 0.0, 0.0, 1.0],
    };
    cfg.save(dir.join("scene.json"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
