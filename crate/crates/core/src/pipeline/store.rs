//! On-disk layout of a job directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::assets::{asset_index, AssetIndexEntry};
use crate::codec::{decode_png_rgb, decode_png_rgba, encode_png_rgb, encode_png_rgba};
use crate::index::IndexedLayout;
use crate::manifest::Stage;
use crate::model::{
    Bitmap, BoundingBox, Component, ComponentMask, Dims, Provenance, RasterDraft, RgbaAsset, SegmentationResult,
};

pub const JOB_FILE: &str = "job.json";
pub const SOURCE_TEXT: &str = "source.txt";
pub const STYLE_IMAGE: &str = "style.png";
pub const SOURCE_IMAGE: &str = "source.png";
pub const LEGEND_FILE: &str = "indexed.legend.json";
pub const REFINE_LOG: &str = "refine.log.json";
pub const INDEX_FILE: &str = "index.json";
pub const RUN_LOG: &str = "run.log";
pub const LOCK_FILE: &str = "job.lock";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn invalid(path: &Path, reason: impl ToString) -> StoreError {
    StoreError::Invalid { path: path.to_path_buf(), reason: reason.to_string() }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn read(path: &Path) -> Result<Vec<u8>, StoreError> {
    fs::read(path).map_err(io(path))
}

/// Fills a fresh directory through `fill`, then swaps it in for `dir`.
fn write_dir_atomic(dir: &Path, fill: impl FnOnce(&Path) -> Result<(), StoreError>) -> Result<(), StoreError> {
    let tmp = dir.with_extension("partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io(&tmp))?;
    }
    fs::create_dir_all(&tmp).map_err(io(&tmp))?;
    fill(&tmp)?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io(dir))?;
    }
    fs::rename(&tmp, dir).map_err(io(dir))
}

pub fn artifact_path(job: &Path, stage: Stage) -> PathBuf {
    job.join(stage.artifact().trim_end_matches('/'))
}

/// Directory artifacts count as present once their index is written.
pub fn artifact_present(job: &Path, stage: Stage) -> bool {
    let p = artifact_path(job, stage);
    if stage.artifact().ends_with('/') {
        p.join(INDEX_FILE).is_file()
    } else {
        p.is_file()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobMode {
    Generate,
    Vectorize,
}

/// Inputs needed to (re)run a job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub mode: JobMode,
    pub seed: Option<u64>,
    pub style_hash: Option<String>,
}

pub fn write_job_spec(job: &Path, spec: &JobSpec) -> Result<(), StoreError> {
    let json = serde_json::to_vec_pretty(spec).expect("job spec serializes");
    write_atomic(&job.join(JOB_FILE), &json)
}

pub fn read_job_spec(job: &Path) -> Result<JobSpec, StoreError> {
    let path = job.join(JOB_FILE);
    serde_json::from_slice(&read(&path)?).map_err(|e| invalid(&path, e))
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<(), StoreError> {
    write_atomic(path, &encode_png_rgb(img))
}

pub fn read_png(path: &Path) -> Result<RgbImage, StoreError> {
    decode_png_rgb(&read(path)?).map_err(|e| invalid(path, e))
}

pub fn write_draft(job: &Path, draft: &RasterDraft) -> Result<(), StoreError> {
    write_png(&artifact_path(job, Stage::Draft), draft.pixels())
}

pub fn read_draft(job: &Path, provenance: Provenance) -> Result<RasterDraft, StoreError> {
    let path = artifact_path(job, Stage::Draft);
    RasterDraft::new(read_png(&path)?, provenance).map_err(|e| invalid(&path, e))
}

/// 1-bit grayscale PNG, set bits white.
pub fn encode_mask_png(bm: &Bitmap) -> Vec<u8> {
    let (w, h) = (bm.width(), bm.height());
    let stride = (w as usize).div_ceil(8);
    let mut data = vec![0u8; stride * h as usize];
    for (x, y) in bm.iter_set() {
        data[y as usize * stride + x as usize / 8] |= 0x80 >> (x % 8);
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer.write_image_data(&data).expect("in-memory PNG data");
    }
    out
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<Bitmap, String> {
    let decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let info = reader.info();
    let (w, h) = (info.width, info.height);
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::One {
        return Err(format!("expected a 1-bit grayscale mask, got {:?} {:?}", info.color_type, info.bit_depth));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or("mask too large")?];
    let frame = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let stride = frame.line_size;
    let mut bm = Bitmap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if buf[y as usize * stride + x as usize / 8] & (0x80 >> (x % 8)) != 0 {
                bm.set(x, y, true);
            }
        }
    }
    Ok(bm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskIndexEntry {
    pub bbox: [u32; 4],
    pub area: u32,
}

pub fn write_masks(job: &Path, seg: &SegmentationResult) -> Result<(), StoreError> {
    write_dir_atomic(&artifact_path(job, Stage::Segmentation), |dir| {
        let mut index = BTreeMap::new();
        for c in seg.components() {
            let path = dir.join(format!("AF-{}.png", c.id()));
            fs::write(&path, encode_mask_png(c.mask.bitmap())).map_err(io(&path))?;
            index.insert(c.id().to_string(), MaskIndexEntry { bbox: c.bbox.as_array(), area: c.mask.area() });
        }
        let path = dir.join(INDEX_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&index).expect("index serializes")).map_err(io(&path))
    })
}

pub fn read_masks(job: &Path, dims: Dims) -> Result<SegmentationResult, StoreError> {
    let dir = artifact_path(job, Stage::Segmentation);
    let index_path = dir.join(INDEX_FILE);
    let index: BTreeMap<String, MaskIndexEntry> =
        serde_json::from_slice(&read(&index_path)?).map_err(|e| invalid(&index_path, e))?;
    let mut comps = Vec::new();
    for (k, entry) in &index {
        let id: u32 = k.parse().map_err(|_| invalid(&index_path, format!("bad key `{k}`")))?;
        let path = dir.join(format!("AF-{id}.png"));
        let bm = decode_mask_png(&read(&path)?).map_err(|e| invalid(&path, e))?;
        let [x, y, w, h] = entry.bbox;
        let bbox = BoundingBox::new(x, y, w, h).map_err(|e| invalid(&index_path, e))?;
        comps.push(Component { mask: ComponentMask::new(id, bm), bbox });
    }
    comps.sort_by_key(|c| c.id());
    SegmentationResult::new(dims, comps).map_err(|e| invalid(&dir, e))
}

pub fn write_indexed(job: &Path, layout: &IndexedLayout) -> Result<(), StoreError> {
    write_atomic(&job.join(LEGEND_FILE), layout.legend_json().as_bytes())?;
    write_png(&artifact_path(job, Stage::Indexed), &layout.pixels)
}

pub fn read_indexed(job: &Path) -> Result<IndexedLayout, StoreError> {
    let pixels = read_png(&artifact_path(job, Stage::Indexed))?;
    let legend_path = job.join(LEGEND_FILE);
    let legend = String::from_utf8(read(&legend_path)?).map_err(|e| invalid(&legend_path, e))?;
    IndexedLayout::from_parts(pixels, &legend).map_err(|e| invalid(&legend_path, e))
}

pub fn write_assets(job: &Path, assets: &[RgbaAsset]) -> Result<(), StoreError> {
    write_dir_atomic(&artifact_path(job, Stage::Assets), |dir| {
        for a in assets {
            let path = dir.join(format!("AF-{}.png", a.id));
            fs::write(&path, encode_png_rgba(&a.pixels)).map_err(io(&path))?;
        }
        let path = dir.join(INDEX_FILE);
        let index = asset_index(assets);
        fs::write(&path, serde_json::to_vec_pretty(&index).expect("index serializes")).map_err(io(&path))
    })
}

pub fn read_assets(job: &Path) -> Result<Vec<RgbaAsset>, StoreError> {
    let dir = artifact_path(job, Stage::Assets);
    let index_path = dir.join(INDEX_FILE);
    let index: BTreeMap<String, AssetIndexEntry> =
        serde_json::from_slice(&read(&index_path)?).map_err(|e| invalid(&index_path, e))?;
    let mut assets = Vec::new();
    for (k, entry) in index {
        let id: u32 = k.parse().map_err(|_| invalid(&index_path, format!("bad key `{k}`")))?;
        let path = dir.join(format!("AF-{id}.png"));
        let pixels = decode_png_rgba(&read(&path)?).map_err(|e| invalid(&path, e))?;
        let [x, y] = entry.origin;
        let [w, h] = entry.size;
        if (w, h) != pixels.dimensions() {
            return Err(invalid(&path, "size differs from the asset index"));
        }
        let origin_box = BoundingBox::new(x, y, w, h).map_err(|e| invalid(&index_path, e))?;
        assets.push(RgbaAsset { id, pixels, origin_box, trimmed: entry.trimmed });
    }
    assets.sort_by_key(|a| a.id);
    Ok(assets)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), StoreError> {
    write_atomic(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> Result<String, StoreError> {
    String::from_utf8(read(path)?).map_err(|e| invalid(path, e))
}

pub fn append_run_log(job: &Path, line: &str) -> Result<(), StoreError> {
    use std::io::Write as _;
    let path = job.join(RUN_LOG);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?;
    writeln!(f, "{line}").map_err(io(&path))
}

/// Exclusive ownership of a job directory for one pipeline run.
#[derive(Debug)]
pub struct JobLock {
    path: PathBuf,
}

impl JobLock {
    pub fn acquire(job: &Path) -> Result<Option<Self>, StoreError> {
        let path = job.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Some(Self { path })),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Ok(None),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }
}

impl Drop for JobLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_png_is_one_bit_and_round_trips() {
        let mut bm = Bitmap::new(13, 5);
        for (x, y) in [(0, 0), (7, 1), (8, 1), (12, 4)] {
            bm.set(x, y, true);
        }
        let bytes = encode_mask_png(&bm);
        assert_eq!(bytes[24], 1, "bit depth");
        assert_eq!(bytes[25], 0, "grayscale");
        assert_eq!(decode_mask_png(&bytes).unwrap(), bm);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let a = JobLock::acquire(dir.path()).unwrap();
        assert!(a.is_some());
        assert!(JobLock::acquire(dir.path()).unwrap().is_none());
        drop(a);
        assert!(JobLock::acquire(dir.path()).unwrap().is_some());
    }
}
