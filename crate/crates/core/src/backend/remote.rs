//! Clients for the generic JSON protocol.
//!
//! Request: `{task, images: [base64 PNG], text, svg, seed}`.
//! Response: `{image?: base64 PNG, svg?: text}`.

use std::sync::Arc;

use image::{RgbImage, RgbaImage};
use serde::{Deserialize, Serialize};

use super::transport::{invoke_backend, Limiter, Transport};
use super::{
    BackendDescriptor, BackendError, MattingBackend, SegmentationBackend, T2iBackend, T2iRequest, VlmBackend,
    VlmSvgRequest, VlmTask,
};
use crate::codec::{b64, decode_png_rgb, decode_png_rgba, encode_png_rgb, unb64};
use crate::model::RasterDraft;

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub task: &'a str,
    pub images: Vec<String>,
    pub text: &'a str,
    pub svg: Option<&'a str>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
pub struct WireResponse {
    pub image: Option<String>,
    pub svg: Option<String>,
}

pub struct RemoteClient {
    desc: BackendDescriptor,
    transport: Arc<dyn Transport>,
    limiter: Limiter,
}

impl RemoteClient {
    pub fn new(desc: BackendDescriptor, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        desc.validate()?;
        let limiter = Limiter::new(desc.max_concurrency);
        Ok(Self { desc, transport, limiter })
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    pub fn call(&self, req: &WireRequest<'_>) -> Result<WireResponse, BackendError> {
        let payload = serde_json::to_vec(req).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let (body, _log) = {
            let _permit = self.limiter.acquire();
            invoke_backend(&self.desc, self.transport.as_ref(), &payload)?
        };
        serde_json::from_slice(&body).map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))
    }

    fn image(resp: WireResponse) -> Result<Vec<u8>, BackendError> {
        let data = resp.image.ok_or_else(|| BackendError::Protocol("response carries no image".into()))?;
        unb64(&data).map_err(|e| BackendError::Protocol(format!("image is not base64: {e}")))
    }
}

fn png_b64(img: &RgbImage) -> String {
    b64(&encode_png_rgb(img))
}

fn bad_png(e: image::ImageError) -> BackendError {
    BackendError::Protocol(format!("image is not a PNG: {e}"))
}

pub struct RemoteT2i(pub RemoteClient);

impl T2iBackend for RemoteT2i {
    fn name(&self) -> &str {
        "remote-t2i"
    }

    fn generate(&self, req: &T2iRequest) -> Result<RgbImage, BackendError> {
        let images = req.style.iter().map(|s| png_b64(s.pixels())).collect();
        let wire = WireRequest { task: "draft", images, text: &req.text.body, svg: None, seed: req.seed };
        let bytes = RemoteClient::image(self.0.call(&wire)?)?;
        decode_png_rgb(&bytes).map_err(bad_png)
    }
}

pub struct RemoteVlm(pub RemoteClient);

impl VlmBackend for RemoteVlm {
    fn name(&self) -> &str {
        "remote-vlm"
    }

    fn complete(&self, req: &VlmSvgRequest) -> Result<String, BackendError> {
        let task = match req.task {
            VlmTask::Template => "template",
            VlmTask::Refine => "refine",
        };
        let wire = WireRequest {
            task,
            images: req.images.iter().map(png_b64).collect(),
            text: &req.instructions,
            svg: req.svg_code.as_deref(),
            seed: None,
        };
        self.0.call(&wire)?.svg.ok_or_else(|| BackendError::Protocol("response carries no svg".into()))
    }
}

pub struct RemoteSegmentation(pub RemoteClient);

impl SegmentationBackend for RemoteSegmentation {
    fn instance_map(&self, draft: &RasterDraft) -> Result<RgbImage, BackendError> {
        let wire = WireRequest { task: "segment", images: vec![png_b64(draft.pixels())], text: "", svg: None, seed: None };
        let bytes = RemoteClient::image(self.0.call(&wire)?)?;
        decode_png_rgb(&bytes).map_err(bad_png)
    }
}

pub struct RemoteMatting(pub RemoteClient);

impl MattingBackend for RemoteMatting {
    fn matte(&self, crop: &RgbImage) -> Result<RgbaImage, BackendError> {
        let wire = WireRequest { task: "matte", images: vec![png_b64(crop)], text: "", svg: None, seed: None };
        let bytes = RemoteClient::image(self.0.call(&wire)?)?;
        decode_png_rgba(&bytes).map_err(bad_png)
    }
}
