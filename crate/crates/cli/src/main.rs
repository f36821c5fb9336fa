use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tetskip::image::sample_heatmap;
use tetskip::mesh::{generate_synthetic, load_mesh, save_mesh, AnalyticField};
use tetskip::metrics::{linspace, run_sweep, Timing};
use tetskip::par;
use tetskip::render::{render, RenderMode, RenderOptions, RenderStats};
use tetskip::{Centering, KdBuildConfig, Parallelism, RgbImage, Scene, SceneConfig};
use tetskip_viewer::{Server, ViewerState};

#[derive(Parser)]
#[command(
    name = "tetskip",
    version,
    about = "Direct volume rendering of tetrahedral meshes"
)]
struct Cli {
    /// Worker threads for rendering (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic N×N×N cube mesh in TET1 format.
    Generate {
        /// Cubes per axis; each cube holds five tets.
        #[arg(long)]
        n: usize,
        /// ramp, radial, sinusoidal or void
        #[arg(long, default_value = "radial")]
        field: AnalyticField,
        /// vertex or cell
        #[arg(long, default_value = "vertex")]
        centering: Centering,
        /// Output mesh file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one image.
    Render {
        #[command(flatten)]
        scene: SceneArgs,
        /// Output image; `.png` writes PNG, anything else binary PPM.
        #[arg(long)]
        out: PathBuf,
        /// Per-pixel sample count heatmap image.
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Also write the stats JSON here (it always goes to stdout).
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Write a text listing of all partitions.
        #[arg(long)]
        dump_partitions: Option<PathBuf>,
    },
    /// Time renders, or sweep s2 against the reference image.
    Bench {
        #[command(flatten)]
        scene: SceneArgs,
        /// `start:end:count`, evenly spaced s2 values; writes CSV.
        #[arg(long)]
        sweep_s2: Option<String>,
        /// CSV destination (default stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Untimed renders before measuring.
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Timed renders; the median is reported.
        #[arg(long, default_value_t = 5)]
        frames: usize,
        /// One render per point, no timing; output is reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Run the interactive viewer service.
    Serve {
        #[command(flatten)]
        scene: SceneArgs,
        /// Listen address for WebSocket clients.
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
    },
}

/// Scene config plus per-field overrides.
#[derive(Args)]
struct SceneArgs {
    /// Scene JSON file.
    #[arg(long)]
    scene: PathBuf,
    /// Mesh file, replacing the scene's.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Transfer function JSON, replacing the scene's.
    #[arg(long)]
    tf: Option<PathBuf>,
    /// reference, skip or skip-adaptive
    #[arg(long)]
    mode: Option<RenderMode>,
    /// Base step size.
    #[arg(long)]
    s1: Option<f64>,
    /// Largest adaptive step size.
    #[arg(long)]
    s2: Option<f64>,
    /// Variance exponent of the step mapping.
    #[arg(long)]
    p: Option<f64>,
    /// Stop a ray at this opacity; 1 disables early termination.
    #[arg(long)]
    termination_opacity: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Vertical field of view in degrees.
    #[arg(long)]
    fov: Option<f64>,
    /// Traversal backstep in world units.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Most elements per KD leaf.
    #[arg(long)]
    leaf_size: Option<usize>,
    /// Deepest KD split.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Per-pixel jittered first sample instead of the interval midpoint.
    #[arg(long)]
    jitter: bool,
    /// Render on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug)]
enum Failure {
    /// Bad arguments, config or I/O.
    Setup(String),
    Render(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Setup(_) => 1,
            Failure::Render(_) => 2,
        }
    }
}

fn setup<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Setup(format!("{context}: {e}"))
}

fn rendering<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Render(format!("render failed: {e}"))
}

#[derive(Serialize)]
struct StatsJson {
    total_samples: u64,
    partitions: u32,
    partitions_visited_mean: f64,
    ms_per_frame: f64,
}

impl StatsJson {
    fn new(scene: &Scene, stats: &RenderStats, frame_time: Duration) -> Self {
        StatsJson {
            total_samples: stats.total_samples,
            partitions: scene.partitions().len() as u32,
            partitions_visited_mean: stats.partitions_visited_mean,
            ms_per_frame: frame_time.as_secs_f64() * 1e3,
        }
    }
}

struct Loaded {
    cfg: SceneConfig,
    scene: Scene,
    options: RenderOptions,
}

impl SceneArgs {
    fn config(&self) -> Result<SceneConfig, Failure> {
        let mut cfg = SceneConfig::load(&self.scene).map_err(setup(self.scene.display()))?;
        if let Some(m) = &self.mesh {
            cfg.mesh = m.clone();
        }
        if let Some(t) = &self.tf {
            cfg.transfer_function = t.clone();
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        let p = &mut cfg.params;
        p.s1 = self.s1.unwrap_or(p.s1);
        p.s2 = self.s2.unwrap_or(p.s2);
        p.p = self.p.unwrap_or(p.p);
        p.termination_opacity = self.termination_opacity.unwrap_or(p.termination_opacity);
        let c = &mut cfg.camera;
        c.width = self.width.unwrap_or(c.width);
        c.height = self.height.unwrap_or(c.height);
        c.fov = self.fov.unwrap_or(c.fov);
        if self.epsilon.is_some() {
            cfg.epsilon = self.epsilon;
        }
        cfg.params.validate().map_err(setup("parameters"))?;
        cfg.camera.validate().map_err(setup("camera"))?;
        Ok(cfg)
    }

    fn load(&self) -> Result<Loaded, Failure> {
        let cfg = self.config()?;
        let mesh = load_mesh(&cfg.mesh).map_err(setup(cfg.mesh.display()))?;
        let tf = cfg
            .load_transfer_function()
            .map_err(setup(cfg.transfer_function.display()))?;
        let mut kd = cfg
            .kd
            .unwrap_or_else(|| KdBuildConfig::for_tet_count(mesh.tet_count()));
        kd.max_leaf_elements = self.leaf_size.unwrap_or(kd.max_leaf_elements);
        kd.max_depth = self.max_depth.unwrap_or(kd.max_depth);
        let scene = Scene::build(mesh, Some(kd), tf, cfg.epsilon).map_err(setup("scene"))?;
        let options = RenderOptions {
            parallelism: if self.sequential {
                Parallelism::Sequential
            } else {
                Parallelism::Parallel
            },
            jitter: self.jitter,
        };
        Ok(Loaded {
            cfg,
            scene,
            options,
        })
    }
}

fn parse_sweep(arg: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Setup(format!("--sweep-s2 expects start:end:count, got {arg:?}"));
    let parts: Vec<&str> = arg.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let start: f64 = a.parse().map_err(|_| bad())?;
    let end: f64 = b.parse().map_err(|_| bad())?;
    let count: usize = n.parse().map_err(|_| bad())?;
    if count == 0 {
        return Err(bad());
    }
    Ok(linspace(start, end, count))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(setup(path.display()))
}

fn cmd_generate(
    n: usize,
    field: AnalyticField,
    centering: Centering,
    out: &Path,
) -> Result<(), Failure> {
    let mesh = generate_synthetic(n, field, centering).map_err(setup("generate"))?;
    save_mesh(&mesh, out).map_err(setup(out.display()))?;
    eprintln!(
        "wrote {} ({} vertices, {} tets, {} field)",
        out.display(),
        mesh.vertex_count(),
        mesh.tet_count(),
        field.name()
    );
    Ok(())
}

fn cmd_render(
    args: &SceneArgs,
    out: &Path,
    heatmap: Option<&Path>,
    stats_path: Option<&Path>,
    dump: Option<&Path>,
) -> Result<(), Failure> {
    let Loaded {
        cfg,
        scene,
        options,
    } = args.load()?;
    if let Some(path) = dump {
        write_file(path, scene.dump_partitions())?;
    }
    let (fb, stats) = render(
        &scene,
        &cfg.camera,
        cfg.mode,
        &cfg.params,
        cfg.background,
        &options,
    )
    .map_err(rendering)?;
    RgbImage::from_framebuffer(&fb)
        .write(out)
        .map_err(setup(out.display()))?;
    if let Some(path) = heatmap {
        sample_heatmap(fb.width, fb.height, &fb.samples, None)
            .write(path)
            .map_err(setup(path.display()))?;
    }
    let json = serde_json::to_string_pretty(&StatsJson::new(&scene, &stats, stats.wall_time))
        .expect("stats serialize");
    if let Some(path) = stats_path {
        write_file(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_bench(
    args: &SceneArgs,
    sweep: Option<&str>,
    csv: Option<&Path>,
    warmup: usize,
    frames: usize,
    no_timing: bool,
) -> Result<(), Failure> {
    let s2_values = sweep.map(parse_sweep).transpose()?;
    let Loaded {
        cfg,
        scene,
        options,
    } = args.load()?;
    let timing = if no_timing {
        Timing::Off
    } else {
        Timing::Measured { warmup, frames }
    };
    if let Some(s2s) = s2_values {
        for &s2 in &s2s {
            tetskip::AdaptiveParams { s2, ..cfg.params }
                .validate()
                .map_err(setup("--sweep-s2"))?;
        }
        let result = run_sweep(
            &scene,
            &cfg.camera,
            &cfg.params,
            &s2s,
            cfg.background,
            &options,
            timing,
        )
        .map_err(rendering)?;
        let text = result.to_csv();
        match csv {
            Some(path) => write_file(path, text)?,
            None => print!("{text}"),
        }
        eprintln!("reference samples: {}", result.reference_samples);
        return Ok(());
    }
    let frame = || {
        render(
            &scene,
            &cfg.camera,
            cfg.mode,
            &cfg.params,
            cfg.background,
            &options,
        )
        .map_err(rendering)
    };
    let (frames, warmup) = if no_timing {
        (1, 0)
    } else {
        (frames.max(1), warmup)
    };
    for _ in 0..warmup {
        frame()?;
    }
    let mut runs = (0..frames)
        .map(|_| frame().map(|(_, s)| s))
        .collect::<Result<Vec<_>, _>>()?;
    runs.sort_by_key(|s| s.wall_time);
    let median = &runs[runs.len() / 2];
    let time = if no_timing {
        Duration::ZERO
    } else {
        median.wall_time
    };
    let json = serde_json::to_string_pretty(&StatsJson::new(&scene, median, time))
        .expect("stats serialize");
    match csv {
        Some(path) => write_file(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_serve(args: &SceneArgs, bind: &str) -> Result<(), Failure> {
    let Loaded {
        cfg,
        scene,
        options,
    } = args.load()?;
    let state = ViewerState::new(
        scene,
        cfg.camera,
        cfg.params,
        cfg.mode,
        cfg.background,
        options,
    )
    .map_err(setup("viewer state"))?;
    let server = Server::bind(bind, state).map_err(setup(bind))?;
    let addr = server.local_addr().map_err(setup(bind))?;
    eprintln!("serving on ws://{addr}");
    server.run().map_err(setup("serve"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Setup("--threads must be at least 1".into()));
        }
        par::init_global_threads(n);
    }
    match &cli.command {
        Command::Generate {
            n,
            field,
            centering,
            out,
        } => cmd_generate(*n, *field, *centering, out),
        Command::Render {
            scene,
            out,
            heatmap,
            stats,
            dump_partitions,
        } => cmd_render(
            scene,
            out,
            heatmap.as_deref(),
            stats.as_deref(),
            dump_partitions.as_deref(),
        ),
        Command::Bench {
            scene,
            sweep_s2,
            csv,
            warmup,
            frames,
            no_timing,
        } => cmd_bench(
            scene,
            sweep_s2.as_deref(),
            csv.as_deref(),
            *warmup,
            *frames,
            *no_timing,
        ),
        Command::Serve { scene, bind } => cmd_serve(scene, bind),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Setup(m) | Failure::Render(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
