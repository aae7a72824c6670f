//! `figforge` command-line tool.
//!
//! Exit codes: 0 success, 1 other failure, 2 validation findings,
//! 3 backend failure, 4 bad input.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use figforge_core::image;
use figforge_core::pipeline::store;
use figforge_core::{
    parse_svg, resume_job, run_pipeline, vectorize_existing, verify_editable_figure, verify_job, Backends, Dims,
    ErrorClass, MattingMode, PipelineConfig, PipelineError, Provenance, RasterDraft, RunReport, SegmenterMode,
    SourceText, StyleReference, VerifyMode,
};
use figforge_service::{ServiceConfig, EDITED_FILE};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "figforge", version, about = "Turn long-form text into an editable, component-grouped SVG figure")]
struct Cli {
    /// More log output (repeat for more). `RUST_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a figure from a text file and an optional style image.
    Generate {
        #[arg(long, value_name = "FILE")]
        text: PathBuf,
        #[arg(long, value_name = "IMG")]
        style: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Convert an existing raster figure into an editable SVG.
    Vectorize {
        #[arg(long, value_name = "PNG")]
        image: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Re-run whatever is missing or stale in a job directory.
    Resume {
        #[arg(long, value_name = "DIR")]
        job: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Re-run every validator over a finished job.
    Verify {
        #[arg(long, value_name = "DIR")]
        job: PathBuf,
    },
    /// Run the HTTP job service.
    Serve {
        #[arg(long, value_name = "HOST:PORT", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Require a rating before the final figure can be downloaded.
        #[arg(long)]
        gate_download: bool,
        /// Editor build to serve under /app.
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
        /// Allowed CORS origin (repeatable). Any origin when omitted.
        #[arg(long = "cors-origin", value_name = "ORIGIN")]
        cors_origins: Vec<String>,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Use the offline mock backends for any endpoint that is not configured.
    #[arg(long)]
    mock: bool,
    #[arg(long, value_name = "N")]
    max_iterations: Option<u32>,
    /// Positional tolerance as a fraction of the draft diagonal.
    #[arg(long, value_name = "F")]
    tolerance: Option<f64>,
    /// Draft size as WIDTHxHEIGHT.
    #[arg(long, value_name = "WxH", value_parser = parse_dims)]
    draft_size: Option<Dims>,
    /// Use the geometry-faithful template if the model's template is invalid.
    #[arg(long)]
    template_fallback: bool,
    /// Segment with the remote endpoint (FIGFORGE_SEGMENT_URL).
    #[arg(long)]
    remote_segmentation: bool,
    /// Matte assets with the remote endpoint (FIGFORGE_MATTING_URL).
    #[arg(long)]
    remote_matting: bool,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let n = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Dims { width: n(w)?, height: n(h)? })
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn bad_input(message: impl Into<String>) -> Self {
        Self::new(4, message)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Backend => 3,
            ErrorClass::BadInput => 4,
            ErrorClass::Other => 1,
        };
        Self::new(code, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

impl PipelineArgs {
    fn config(&self, out: &Path) -> Result<PipelineConfig, Failure> {
        let backends = Backends::from_env(self.mock).map_err(|e| Failure::bad_input(e.to_string()))?;
        let mut cfg = PipelineConfig::new(out, backends);
        if let Some(n) = self.max_iterations {
            cfg.refinement.max_iterations = n;
        }
        if let Some(t) = self.tolerance {
            cfg.refinement.tolerance = t;
        }
        if let Some(d) = self.draft_size {
            cfg.draft_dims = d;
        }
        cfg.template_fallback = self.template_fallback;
        if self.remote_segmentation {
            cfg.segmenter.mode = SegmenterMode::Remote;
        }
        if self.remote_matting {
            cfg.matting.mode = MattingMode::RemoteMatting;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_rgb(path: &Path) -> Result<image::RgbImage, Failure> {
    image::open(path).map(|i| i.to_rgb8()).map_err(|e| Failure::bad_input(format!("{}: {e}", path.display())))
}

fn report(r: &RunReport) {
    let summary = json!({
        "job_dir": r.job_dir,
        "k_count": r.manifest.k_count,
        "refinement_iterations": r.manifest.refinement_iterations,
        "stages_run": r.stages_run,
        "final": r.job_dir.join(figforge_core::pipeline::FINAL_FILE),
    });
    println!("{summary}");
}

fn generate(text: &Path, style: Option<&Path>, out: &Path, seed: Option<u64>, args: &PipelineArgs) -> Outcome {
    let body = std::fs::read_to_string(text).map_err(|e| Failure::bad_input(format!("{}: {e}", text.display())))?;
    let style = match style {
        Some(p) => Some(StyleReference::new(read_rgb(p)?).map_err(|e| Failure::bad_input(e.to_string()))?),
        None => None,
    };
    let mut cfg = args.config(out)?;
    cfg.seed = seed;
    report(&run_pipeline(&SourceText::new(body), style.as_ref(), &cfg)?);
    Ok(())
}

fn vectorize(image: &Path, out: &Path, args: &PipelineArgs) -> Outcome {
    let provenance = Provenance { backend: "upload".into(), seed: None };
    let draft = RasterDraft::new(read_rgb(image)?, provenance).map_err(|e| Failure::bad_input(e.to_string()))?;
    report(&vectorize_existing(&draft, &args.config(out)?)?);
    Ok(())
}

fn resume(job: &Path, args: &PipelineArgs) -> Outcome {
    if !job.is_dir() {
        return Err(Failure::bad_input(format!("{} is not a job directory", job.display())));
    }
    report(&resume_job(job, &args.config(job)?)?);
    Ok(())
}

fn verify(job: &Path) -> Outcome {
    if !job.is_dir() {
        return Err(Failure::bad_input(format!("{} is not a job directory", job.display())));
    }
    let mut checks: Vec<(String, _)> =
        verify_job(job)?.into_iter().map(|(stage, r)| (stage.name().to_string(), r)).collect();
    // A saved edit is checked with the relaxed rules the editor relies on.
    let edited = job.join(EDITED_FILE);
    if edited.exists() {
        let k = figforge_core::load_manifest(job).map_err(|e| Failure::new(1, e.to_string()))?.k_count;
        let text = store::read_text(&edited).map_err(|e| Failure::new(1, e.to_string()))?;
        let doc = parse_svg(&text).map_err(|e| Failure::new(2, format!("{EDITED_FILE}: {e}")))?;
        checks.push((EDITED_FILE.into(), verify_editable_figure(&doc, k, VerifyMode::Edited)));
    }
    let mut dirty = 0;
    for (what, r) in &checks {
        if r.is_clean() {
            println!("{what}: ok");
        } else {
            dirty += 1;
            println!("{what}: {r}");
        }
    }
    if dirty > 0 {
        return Err(Failure::new(2, format!("{dirty} artifact(s) have findings")));
    }
    Ok(())
}

fn serve(cfg: ServiceConfig, addr: SocketAddr) -> Outcome {
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(1, e.to_string()))?;
    rt.block_on(figforge_service::serve(cfg, addr)).map_err(|e| Failure::new(1, format!("serve {addr}: {e}")))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Generate { text, style, out, seed, pipeline } => {
            generate(&text, style.as_deref(), &out, seed, &pipeline)
        }
        Command::Vectorize { image, out, pipeline } => vectorize(&image, &out, &pipeline),
        Command::Resume { job, pipeline } => resume(&job, &pipeline),
        Command::Verify { job } => verify(&job),
        Command::Serve { addr, data, gate_download, static_dir, cors_origins, workers, pipeline } => {
            let cfg = ServiceConfig {
                pipeline: pipeline.config(&data)?,
                root: data,
                gate_download,
                static_dir,
                cors_origins,
                workers,
            };
            serve(cfg, addr)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose + u8::from(matches!(cli.command, Command::Serve { .. })));
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
