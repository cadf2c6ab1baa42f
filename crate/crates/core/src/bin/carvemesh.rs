use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use carvemesh::bench::{self, mode_matrix};
use carvemesh::config::{Config, ConfigError, Mode};
use carvemesh::io::{self, IoError, KeyframeBatch, MeshFormat};
use carvemesh::reconstructor::{ReconstructError, Reconstructor};
use carvemesh::synth::{self, GroundTruth, SceneSpec, SynthError};

#[derive(Parser)]
#[command(name = "carvemesh", version, about = "Incremental manifold mesh reconstruction from SLAM keyframes")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a mesh from a keyframe log.
    Reconstruct {
        log: PathBuf,
        /// Output directory for meshes and stats.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Also write the mesh after every N-th keyframe.
        #[arg(long)]
        every: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Ply)]
        format: Format,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a log under the baseline, the proposed mode and ablations.
    Bench {
        log: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Only compare baseline and proposed.
        #[arg(long)]
        no_ablations: bool,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Generate a synthetic keyframe log from a scene file.
    Synth {
        scene: PathBuf,
        /// Log output path.
        #[arg(short, long)]
        out: PathBuf,
        /// Ground truth output path (JSON).
        #[arg(long)]
        truth: PathBuf,
        /// Overrides the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Depth error of a mesh against synthetic ground truth.
    Eval { mesh: PathBuf, truth: PathBuf },
}

#[derive(Args)]
struct RunOpts {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Preset>,
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    no_hash: bool,
    #[arg(long)]
    spherical_enclosing: bool,
    #[arg(long)]
    moving_points: bool,
    #[arg(long)]
    debug_invariants: bool,
    /// Accepted for reproducibility records; reconstruction is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Read the log on the core thread instead of a reader thread.
    #[arg(long)]
    single_thread: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Proposed,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ply,
    Off,
}

impl From<Format> for MeshFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Ply => MeshFormat::Ply,
            Format::Off => MeshFormat::Off,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Reconstruct(ReconstructError::Config(_)) => 2,
            Failure::Reconstruct(_) | Failure::Synth(SynthError::NoHits) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(IoError::Io(e))
    }
}

impl RunOpts {
    fn config(&self) -> Result<Config, Failure> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(p) = self.mode {
            cfg.mode = match p {
                Preset::Proposed => Mode::proposed(),
                Preset::Baseline => Mode::baseline(),
            };
        }
        let m = &mut cfg.mode;
        m.next_tet_cache &= !self.no_cache;
        m.boundary_hash &= !self.no_hash;
        m.spherical_enclosing |= self.spherical_enclosing;
        m.moving_points |= self.moving_points;
        cfg.debug_invariants |= self.debug_invariants;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("carvemesh: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Reconstruct {
            log,
            out,
            every,
            format,
            opts,
        } => reconstruct(&log, &out, every, format.into(), &opts),
        Command::Bench {
            log,
            out,
            no_ablations,
            opts,
        } => {
            let cfg = opts.config()?;
            let batches = io::read_log(&log)?;
            let mut modes = mode_matrix();
            if no_ablations {
                modes.truncate(2);
            }
            let report = bench::bench(&cfg, &batches, &modes)?;
            for r in &report.runs {
                eprintln!(
                    "{:<20} total {:>9.3}s  freq {:>8.2}/s  slope {:>+.3e}s  speedup {:>6.2}x  same mesh {}",
                    r.name,
                    r.total_seconds,
                    r.freq,
                    r.slope,
                    r.speedup_vs_baseline.unwrap_or(f64::NAN),
                    r.mesh_matches_proposed.map_or("-".into(), |b| b.to_string()),
                );
            }
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(p) => std::fs::write(p, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Synth { scene, out, truth, seed } => {
            let text = std::fs::read_to_string(&scene)?;
            let mut spec: SceneSpec = toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", scene.display())))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let (batches, gt) = synth::generate(&spec)?;
            io::write_log(&batches, &out)?;
            let json = serde_json::to_string(&gt).map_err(IoError::Json)?;
            std::fs::write(&truth, json)?;
            eprintln!(
                "{} keyframes, {} points, {} observations",
                batches.len(),
                gt.points.len(),
                gt.observations.len()
            );
            Ok(())
        }
        Command::Eval { mesh, truth } => {
            let mesh = io::read_mesh(&mesh)?;
            let gt: GroundTruth = serde_json::from_str(&std::fs::read_to_string(&truth)?).map_err(IoError::Json)?;
            let r = synth::evaluate_depth_mae(&mesh, &gt)?;
            println!("{}", serde_json::to_string(&r).expect("report serializes"));
            Ok(())
        }
    }
}

fn reconstruct(log: &Path, out: &Path, every: Option<usize>, format: MeshFormat, opts: &RunOpts) -> Result<(), Failure> {
    if every == Some(0) {
        return Err(Failure::Usage("--every must be at least 1".into()));
    }
    let cfg = opts.config()?;
    let mut rec = Reconstructor::new(cfg)?;
    // Fail on a missing log before creating any output.
    let reader = io::open_log(log)?;
    std::fs::create_dir_all(out)?;
    let ext = format.extension();
    let mut stats = Vec::new();
    let started = Instant::now();

    let mut step = |rec: &mut Reconstructor, batch: KeyframeBatch, n: usize| -> Result<(), Failure> {
        let s = rec.process_keyframe(batch)?;
        if every.is_some_and(|e| n % e == 0) {
            io::write_mesh(&rec.surface(), &out.join(format!("mesh_{:06}.{ext}", s.index)), format)?;
        }
        stats.push(s);
        Ok(())
    };

    let mut n = 0;
    if opts.single_thread {
        for batch in reader {
            step(&mut rec, batch?, n)?;
            n += 1;
        }
    } else {
        let (tx, rx) = sync_channel::<Result<KeyframeBatch, IoError>>(8);
        let ingest = std::thread::spawn(move || {
            for b in reader {
                let stop = b.is_err();
                if tx.send(b).is_err() || stop {
                    break;
                }
            }
        });
        let result = (|| {
            for batch in rx.iter() {
                step(&mut rec, batch?, n)?;
                n += 1;
            }
            Ok::<(), Failure>(())
        })();
        ingest.join().expect("reader thread panicked");
        result?;
    }
    if n == 0 {
        return Err(ReconstructError::Empty.into());
    }
    let wall = started.elapsed().as_secs_f64();
    let mesh = rec.surface();
    io::write_mesh(&mesh, &out.join(format!("mesh.{ext}")), format)?;
    io::write_stats_file(&stats, &out.join("stats.jsonl"))?;
    let core: f64 = stats.iter().map(|s| s.timings.total).sum();
    println!(
        "keyframes {n}  core time {core:.3}s  wall {wall:.3}s  freq {:.2}/s  surface {} vertices {} triangles",
        n as f64 / core,
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    Ok(())
}
