//! Stage orchestration with per-stage artifacts and resume.
//!
//! Every stage reads its inputs from memory or, when resuming, from the job
//! directory, and writes its artifact atomically. The manifest is written
//! only once all stages have succeeded.

pub mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use thiserror::Error;

use crate::assets::{extract_asset, AssetError, MattingConfig, MattingMode};
use crate::backend::mock::{faithful_template, GeometryFaithfulVlm, MockT2iBackend};
use crate::backend::prompt::PromptSet;
use crate::backend::remote::{RemoteClient, RemoteMatting, RemoteSegmentation, RemoteT2i, RemoteVlm};
use crate::backend::{
    component_hints, generate_raster_draft, generate_svg_template, BackendDescriptor, BackendError, BackendKind,
    MattingBackend, SegmentationBackend, T2iBackend, T2iRequest, Transport, UreqTransport, VlmBackend,
    DEFAULT_DRAFT_DIMS,
};
use crate::index::{assign_tones, render_indexed_layout, IndexError, IndexedLayout};
use crate::inject::{inject_assets, verify_editable_figure, InjectError, VerifyMode};
use crate::manifest::{ManifestError, PipelineManifest, Stage, MANIFEST_FILE};
use crate::model::{Dims, Provenance, RasterDraft, RgbaAsset, SegmentationResult, SourceText, StyleReference};
use crate::refine::{refine_template, RefineError, RefinementContext, RefinementLog, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::segment::{filter_and_merge, segment_with, SegmentError, SegmenterConfig, SegmenterMode};
use crate::svg::{parse_svg, serialize_svg, validate_template, SvgDocument, SvgError, ValidationReport};
use store::{JobLock, JobMode, JobSpec, StoreError};

pub const FINAL_FILE: &str = "final.svg";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementSettings {
    pub max_iterations: u32,
    pub tolerance: f64,
}

impl Default for RefinementSettings {
    fn default() -> Self {
        Self { max_iterations: DEFAULT_MAX_ITERATIONS, tolerance: DEFAULT_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendChoice {
    Mock,
    Remote(BackendDescriptor),
}

#[derive(Clone)]
pub struct Backends {
    pub t2i: Arc<dyn T2iBackend>,
    pub vlm: Arc<dyn VlmBackend>,
    pub segmentation: Option<Arc<dyn SegmentationBackend>>,
    pub matting: Option<Arc<dyn MattingBackend>>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends").field("t2i", &self.t2i.name()).field("vlm", &self.vlm.name()).finish_non_exhaustive()
    }
}

impl Backends {
    pub fn mock() -> Self {
        Self { t2i: Arc::new(MockT2iBackend::new()), vlm: Arc::new(GeometryFaithfulVlm), segmentation: None, matting: None }
    }

    pub fn resolve(
        t2i: &BackendChoice,
        vlm: &BackendChoice,
        segmentation: Option<BackendDescriptor>,
        matting: Option<BackendDescriptor>,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, BackendError> {
        let client = |d: &BackendDescriptor| RemoteClient::new(d.clone(), transport.clone());
        let t2i: Arc<dyn T2iBackend> = match t2i {
            BackendChoice::Mock => Arc::new(MockT2iBackend::new()),
            BackendChoice::Remote(d) => Arc::new(RemoteT2i(client(d)?)),
        };
        let vlm: Arc<dyn VlmBackend> = match vlm {
            BackendChoice::Mock => Arc::new(GeometryFaithfulVlm),
            BackendChoice::Remote(d) => Arc::new(RemoteVlm(client(d)?)),
        };
        let segmentation = match segmentation {
            Some(d) => Some(Arc::new(RemoteSegmentation(client(&d)?)) as Arc<dyn SegmentationBackend>),
            None => None,
        };
        let matting = match matting {
            Some(d) => Some(Arc::new(RemoteMatting(client(&d)?)) as Arc<dyn MattingBackend>),
            None => None,
        };
        Ok(Self { t2i, vlm, segmentation, matting })
    }

    /// Remote backends for every `FIGFORGE_*_URL` that is set. T2I and VLM
    /// endpoints are required unless `allow_missing` substitutes mocks.
    pub fn from_env(allow_missing: bool) -> Result<Self, BackendError> {
        let choice = |kind: BackendKind| match BackendDescriptor::from_env(kind) {
            Some(d) => Ok(BackendChoice::Remote(d)),
            None if allow_missing => Ok(BackendChoice::Mock),
            None => Err(BackendError::Config(format!("{} is not set (or pass --mock)", kind.url_env()))),
        };
        Self::resolve(
            &choice(BackendKind::T2i)?,
            &choice(BackendKind::Vlm)?,
            BackendDescriptor::from_env(BackendKind::Segmentation),
            BackendDescriptor::from_env(BackendKind::Matting),
            Arc::new(UreqTransport),
        )
    }
}

/// Called with each stage just before it runs.
#[derive(Clone)]
pub struct StageObserver(pub Arc<dyn Fn(Stage) + Send + Sync>);

impl fmt::Debug for StageObserver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("StageObserver")
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub segmenter: SegmenterConfig,
    pub matting: MattingConfig,
    pub refinement: RefinementSettings,
    pub backends: Backends,
    pub output_dir: PathBuf,
    pub draft_dims: Dims,
    pub seed: Option<u64>,
    pub prompts: PromptSet,
    /// Fall back to the geometry-faithful template when the VLM's template
    /// does not parse or validate.
    pub template_fallback: bool,
    pub observer: Option<StageObserver>,
}

impl PipelineConfig {
    pub fn new(output_dir: impl Into<PathBuf>, backends: Backends) -> Self {
        Self {
            segmenter: SegmenterConfig::default(),
            matting: MattingConfig::default(),
            refinement: RefinementSettings::default(),
            backends,
            output_dir: output_dir.into(),
            draft_dims: DEFAULT_DRAFT_DIMS,
            seed: None,
            prompts: PromptSet::from_env(),
            template_fallback: false,
            observer: None,
        }
    }

    pub fn mock(output_dir: impl Into<PathBuf>) -> Self {
        Self { prompts: PromptSet::builtin(), ..Self::new(output_dir, Backends::mock()) }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let Err(e) = self.segmenter.validate() {
            return bad(e.to_string());
        }
        if self.segmenter.mode == SegmenterMode::Remote && self.backends.segmentation.is_none() {
            return bad("remote segmentation needs a segmentation backend".into());
        }
        if self.matting.mode == MattingMode::RemoteMatting && self.backends.matting.is_none() {
            return bad("remote matting needs a matting backend".into());
        }
        let t = self.refinement.tolerance;
        if !(t > 0.0 && t < 0.5) {
            return bad(format!("tolerance {t} outside (0, 0.5)"));
        }
        if self.draft_dims.width < 16 || self.draft_dims.height < 16 {
            return bad("draft dimensions must be at least 16x16".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error("template is not valid SVG: {0}")]
    TemplateSyntax(SvgError),
    #[error("template findings:\n{0}")]
    TemplateFindings(ValidationReport),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error("final figure findings:\n{0}")]
    Verify(ValidationReport),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Backend,
    BadInput,
    Other,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
    #[error("bad input: {0}")]
    Input(String),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("job directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn backend_class(e: &BackendError) -> ErrorClass {
    match e {
        BackendError::EmptyInput | BackendError::Config(_) => ErrorClass::BadInput,
        _ => ErrorClass::Backend,
    }
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Input(_) | PipelineError::Config(_) => ErrorClass::BadInput,
            PipelineError::Stage { source, .. } => match source {
                StageError::Backend(e)
                | StageError::Segment(SegmentError::Backend(e))
                | StageError::Asset(AssetError::Backend(e))
                | StageError::Refine(RefineError::Backend(e)) => backend_class(e),
                StageError::Segment(SegmentError::NoComponents) => ErrorClass::BadInput,
                StageError::TemplateSyntax(_)
                | StageError::TemplateFindings(_)
                | StageError::Verify(_)
                | StageError::Inject(_)
                | StageError::Refine(RefineError::InvalidInput(_)) => ErrorClass::Validation,
                _ => ErrorClass::Other,
            },
            _ => ErrorClass::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub manifest: PipelineManifest,
    pub job_dir: PathBuf,
    /// Stages executed by this run, in order.
    pub stages_run: Vec<Stage>,
}

struct Job<'a> {
    dir: PathBuf,
    spec: JobSpec,
    cfg: &'a PipelineConfig,
    draft: Option<RasterDraft>,
    seg: Option<SegmentationResult>,
    indexed: Option<IndexedLayout>,
    assets: Option<Vec<RgbaAsset>>,
    template: Option<SvgDocument>,
    refined: Option<SvgDocument>,
    refine_log: Option<RefinementLog>,
}

impl<'a> Job<'a> {
    fn new(dir: &Path, spec: JobSpec, cfg: &'a PipelineConfig) -> Self {
        Self {
            dir: dir.to_path_buf(),
            spec,
            cfg,
            draft: None,
            seg: None,
            indexed: None,
            assets: None,
            template: None,
            refined: None,
            refine_log: None,
        }
    }

    fn provenance(&self) -> Provenance {
        match self.spec.mode {
            JobMode::Generate => Provenance { backend: self.cfg.backends.t2i.name().to_string(), seed: self.spec.seed },
            JobMode::Vectorize => Provenance { backend: "upload".into(), seed: None },
        }
    }

    fn ensure_draft(&mut self) -> Result<(), StageError> {
        if self.draft.is_none() {
            self.draft = Some(store::read_draft(&self.dir, self.provenance())?);
        }
        Ok(())
    }

    fn ensure_seg(&mut self) -> Result<(), StageError> {
        self.ensure_draft()?;
        if self.seg.is_none() {
            let dims = self.draft.as_ref().expect("loaded").dims();
            self.seg = Some(store::read_masks(&self.dir, dims)?);
        }
        Ok(())
    }

    fn ensure_indexed(&mut self) -> Result<(), StageError> {
        if self.indexed.is_none() {
            self.indexed = Some(store::read_indexed(&self.dir)?);
        }
        Ok(())
    }

    fn ensure_assets(&mut self) -> Result<(), StageError> {
        if self.assets.is_none() {
            self.assets = Some(store::read_assets(&self.dir)?);
        }
        Ok(())
    }

    fn load_svg(&self, stage: Stage) -> Result<SvgDocument, StageError> {
        let text = store::read_text(&store::artifact_path(&self.dir, stage))?;
        parse_svg(&text).map_err(StageError::TemplateSyntax)
    }

    fn run(&mut self, stage: Stage) -> Result<(), StageError> {
        let cfg = self.cfg;
        match stage {
            Stage::Draft => {
                let draft = match self.spec.mode {
                    JobMode::Generate => {
                        let text = store::read_text(&self.dir.join(store::SOURCE_TEXT))?;
                        let style_path = self.dir.join(store::STYLE_IMAGE);
                        let style = if style_path.is_file() {
                            let px = store::read_png(&style_path)?;
                            Some(StyleReference::new(px).map_err(|e| BackendError::Config(e.to_string()))?)
                        } else {
                            None
                        };
                        let req = T2iRequest {
                            text: SourceText::new(text),
                            style,
                            target_dims: cfg.draft_dims,
                            seed: self.spec.seed,
                        };
                        generate_raster_draft(&req, cfg.backends.t2i.as_ref())?
                    }
                    JobMode::Vectorize => {
                        let path = self.dir.join(store::SOURCE_IMAGE);
                        let px = store::read_png(&path)?;
                        RasterDraft::new(px, self.provenance())
                            .map_err(|e| StoreError::Invalid { path, reason: e.to_string() })?
                    }
                };
                store::write_draft(&self.dir, &draft)?;
                self.draft = Some(draft);
            }
            Stage::Segmentation => {
                self.ensure_draft()?;
                let draft = self.draft.as_ref().expect("loaded");
                let raw = segment_with(draft, &cfg.segmenter, cfg.backends.segmentation.as_deref())?;
                let seg = filter_and_merge(raw, &cfg.segmenter)?;
                store::write_masks(&self.dir, &seg)?;
                self.seg = Some(seg);
            }
            Stage::Indexed => {
                self.ensure_seg()?;
                let seg = self.seg.as_ref().expect("loaded");
                let layout = render_indexed_layout(seg.dims(), seg, &assign_tones(seg.k_count()))?;
                store::write_indexed(&self.dir, &layout)?;
                self.indexed = Some(layout);
            }
            Stage::Assets => {
                self.ensure_seg()?;
                let (draft, seg) = (self.draft.as_ref().expect("loaded"), self.seg.as_ref().expect("loaded"));
                let assets = seg
                    .components()
                    .iter()
                    .map(|c| extract_asset(draft, &c.mask, &c.bbox, &cfg.matting, cfg.backends.matting.as_deref()))
                    .collect::<Result<Vec<_>, _>>()?;
                store::write_assets(&self.dir, &assets)?;
                self.assets = Some(assets);
            }
            Stage::Template => {
                self.ensure_seg()?;
                self.ensure_indexed()?;
                let (seg, indexed) = (self.seg.as_ref().expect("loaded"), self.indexed.as_ref().expect("loaded"));
                let k = seg.k_count();
                let hints = component_hints(seg, indexed);
                let answer =
                    generate_svg_template(indexed, k, hints.clone(), &cfg.prompts, cfg.backends.vlm.as_ref())?;
                let checked = parse_svg(&answer).map_err(StageError::TemplateSyntax).and_then(|doc| {
                    let report = validate_template(&doc, k);
                    if report.is_clean() {
                        Ok(doc)
                    } else {
                        Err(StageError::TemplateFindings(report))
                    }
                });
                let doc = match checked {
                    Ok(doc) => doc,
                    Err(_) if cfg.template_fallback => faithful_template(seg.dims(), &hints),
                    Err(e) => return Err(e),
                };
                store::write_text(&store::artifact_path(&self.dir, Stage::Template), &serialize_svg(&doc))?;
                self.template = Some(doc);
            }
            Stage::Refined => {
                self.ensure_seg()?;
                self.ensure_indexed()?;
                if self.template.is_none() {
                    self.template = Some(self.load_svg(Stage::Template)?);
                }
                let ctx = RefinementContext {
                    draft: self.draft.as_ref().expect("loaded"),
                    indexed: self.indexed.as_ref().expect("loaded"),
                    segmentation: self.seg.as_ref().expect("loaded"),
                    current: self.template.clone().expect("loaded"),
                    max_iterations: cfg.refinement.max_iterations,
                    tolerance: cfg.refinement.tolerance,
                    prompts: &cfg.prompts,
                };
                let (doc, log) = refine_template(ctx, cfg.backends.vlm.as_ref())?;
                store::write_text(&self.dir.join(store::REFINE_LOG), &log.to_json())?;
                store::write_text(&store::artifact_path(&self.dir, Stage::Refined), &serialize_svg(&doc))?;
                self.refined = Some(doc);
                self.refine_log = Some(log);
            }
            Stage::Final => {
                self.ensure_assets()?;
                if self.refined.is_none() {
                    self.refined = Some(self.load_svg(Stage::Refined)?);
                }
                let k = self.assets.as_ref().expect("loaded").len();
                let mut fig = inject_assets(self.refined.as_ref().expect("loaded"), self.assets.as_ref().expect("loaded"))?;
                fig.job_id = Some(self.spec.job_id.clone());
                let report = verify_editable_figure(&fig.doc, k, VerifyMode::Strict);
                if !report.is_clean() {
                    return Err(StageError::Verify(report));
                }
                store::write_text(&store::artifact_path(&self.dir, Stage::Final), &serialize_svg(&fig.doc))?;
            }
        }
        Ok(())
    }
}

fn job_id_for(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "job".into())
}

fn refine_calls(dir: &Path) -> Option<u32> {
    let text = std::fs::read_to_string(dir.join(store::REFINE_LOG)).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    Some(v.get("iterations")?.as_array()?.len() as u32)
}

/// Runs `to_run` (plus every stage downstream of a re-run stage) and writes
/// the manifest.
fn execute(
    dir: &Path,
    spec: JobSpec,
    cfg: &PipelineConfig,
    previous: Option<PipelineManifest>,
    missing: impl Fn(Stage) -> bool,
) -> Result<RunReport, PipelineError> {
    let _lock = JobLock::acquire(dir)?.ok_or_else(|| PipelineError::Locked(dir.to_path_buf()))?;
    let mut manifest = previous.unwrap_or_else(|| PipelineManifest::new(spec.job_id.clone()));
    manifest.job_id = spec.job_id.clone();
    manifest.style_hash = spec.style_hash.clone();
    let mut job = Job::new(dir, spec, cfg);
    let mut rerun: BTreeSet<Stage> = BTreeSet::new();
    for stage in Stage::ALL {
        let needed = missing(stage) || stage.upstream().iter().any(|u| rerun.contains(u));
        if needed {
            if let Some(obs) = &cfg.observer {
                (obs.0)(stage);
            }
            job.run(stage).map_err(|source| PipelineError::Stage { stage, source })?;
            store::append_run_log(dir, &format!("{} ran {stage}", Utc::now().to_rfc3339()))?;
            rerun.insert(stage);
            manifest.record(stage, Utc::now());
        } else if manifest.artifact(stage).is_none() {
            manifest.record(stage, Utc::now());
        }
    }
    job.ensure_seg().map_err(|source| PipelineError::Stage { stage: Stage::Segmentation, source })?;
    manifest.k_count = job.seg.as_ref().map_or(0, SegmentationResult::k_count);
    manifest.refinement_iterations = match &job.refine_log {
        Some(log) => log.backend_calls(),
        None => refine_calls(dir).unwrap_or(manifest.refinement_iterations),
    };
    manifest.save(dir)?;
    Ok(RunReport { manifest, job_dir: dir.to_path_buf(), stages_run: rerun.into_iter().collect() })
}

fn prepare_dir(cfg: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
    let _ = std::fs::remove_file(dir.join(MANIFEST_FILE));
    Ok(dir)
}

/// Text (and optional style reference) to `final.svg`.
pub fn run_pipeline(
    text: &SourceText,
    style: Option<&StyleReference>,
    cfg: &PipelineConfig,
) -> Result<RunReport, PipelineError> {
    text.for_generation().map_err(|e| PipelineError::Input(e.to_string()))?;
    let dir = prepare_dir(cfg)?;
    let spec = JobSpec {
        job_id: job_id_for(&dir),
        mode: JobMode::Generate,
        seed: cfg.seed,
        style_hash: style.map(|s| s.content_hash().to_string()),
    };
    store::write_text(&dir.join(store::SOURCE_TEXT), &text.body)?;
    let style_path = dir.join(store::STYLE_IMAGE);
    match style {
        Some(s) => store::write_png(&style_path, s.pixels())?,
        None => {
            let _ = std::fs::remove_file(&style_path);
        }
    }
    store::write_job_spec(&dir, &spec)?;
    execute(&dir, spec, cfg, None, |_| true)
}

/// Existing raster to `final.svg`; the image becomes the draft.
pub fn vectorize_existing(image: &RasterDraft, cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let dir = prepare_dir(cfg)?;
    let spec = JobSpec { job_id: job_id_for(&dir), mode: JobMode::Vectorize, seed: None, style_hash: None };
    store::write_png(&dir.join(store::SOURCE_IMAGE), image.pixels())?;
    store::write_job_spec(&dir, &spec)?;
    execute(&dir, spec, cfg, None, |_| true)
}

/// Re-runs stages whose artifacts are missing, plus everything downstream
/// of them. Present artifacts of untouched stages are reused as they are.
pub fn resume_job(job_dir: &Path, cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let spec = store::read_job_spec(job_dir)?;
    let previous = if job_dir.join(MANIFEST_FILE).exists() { Some(PipelineManifest::read(job_dir)?) } else { None };
    execute(job_dir, spec, cfg, previous, |stage| !store::artifact_present(job_dir, stage))
}

/// Re-runs every validator over a finished job.
pub fn verify_job(job_dir: &Path) -> Result<Vec<(Stage, ValidationReport)>, PipelineError> {
    let manifest = crate::manifest::load_manifest(job_dir)?;
    let k = manifest.k_count;
    let read_svg = |stage: Stage| -> Result<SvgDocument, PipelineError> {
        let text = store::read_text(&store::artifact_path(job_dir, stage))?;
        parse_svg(&text).map_err(|e| PipelineError::Stage { stage, source: StageError::TemplateSyntax(e) })
    };
    let mut out = vec![
        (Stage::Template, validate_template(&read_svg(Stage::Template)?, k)),
        (Stage::Refined, validate_template(&read_svg(Stage::Refined)?, k)),
        (Stage::Final, verify_editable_figure(&read_svg(Stage::Final)?, k, VerifyMode::Strict)),
    ];
    let draft = store::read_draft(job_dir, Provenance { backend: "disk".into(), seed: None })?;
    let seg = store::read_masks(job_dir, draft.dims())?;
    let mut seg_findings = Vec::new();
    if seg.k_count() != k {
        seg_findings.push(crate::svg::Finding::MissingComponent { af_id: k as u32 });
    }
    out.insert(0, (Stage::Segmentation, ValidationReport::new(seg_findings)));
    Ok(out)
}
