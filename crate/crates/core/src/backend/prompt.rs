//! Prompt resources.
//!
//! Templates are read from a directory at run time (`FIGFORGE_PROMPT_DIR` or
//! an explicit path) so they can be iterated without a rebuild; the copies
//! compiled into the binary are the fallback.

use std::fmt::Write as _;
use std::path::Path;

use super::ComponentHint;
use crate::model::Dims;

pub const PROMPT_DIR_ENV: &str = "FIGFORGE_PROMPT_DIR";
pub const TEMPLATE_FILE: &str = "template_v1.txt";
pub const REFINE_FILE: &str = "refine_v1.txt";

const BUILTIN_TEMPLATE: &str = include_str!("../../prompts/template_v1.txt");
const BUILTIN_REFINE: &str = include_str!("../../prompts/refine_v1.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub template: String,
    pub refine: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self { template: BUILTIN_TEMPLATE.into(), refine: BUILTIN_REFINE.into() }
    }

    /// Files present in `dir` override the built-in copies one by one.
    pub fn load(dir: &Path) -> Self {
        let read = |name: &str, fallback: &str| std::fs::read_to_string(dir.join(name)).unwrap_or_else(|_| fallback.into());
        Self { template: read(TEMPLATE_FILE, BUILTIN_TEMPLATE), refine: read(REFINE_FILE, BUILTIN_REFINE) }
    }

    pub fn from_env() -> Self {
        match std::env::var_os(PROMPT_DIR_ENV) {
            Some(dir) => Self::load(Path::new(&dir)),
            None => Self::builtin(),
        }
    }

    pub fn template_instructions(&self, dims: Dims, hints: &[ComponentHint]) -> String {
        render(
            &self.template,
            &[
                ("width", dims.width.to_string()),
                ("height", dims.height.to_string()),
                ("k_count", hints.len().to_string()),
                ("components", component_lines(hints)),
            ],
        )
    }

    pub fn refine_instructions(&self, dims: Dims, hints: &[ComponentHint], discrepancies: &str) -> String {
        render(
            &self.refine,
            &[
                ("width", dims.width.to_string()),
                ("height", dims.height.to_string()),
                ("discrepancies", discrepancies.to_string()),
                ("components", component_lines(hints)),
            ],
        )
    }
}

fn component_lines(hints: &[ComponentHint]) -> String {
    if hints.is_empty() {
        return "(none)".into();
    }
    let mut out = String::new();
    for h in hints {
        let b = h.bbox;
        let _ = writeln!(
            out,
            "- AF-{}: box x={} y={} w={} h={}, centroid ({:.1}, {:.1}), tone #{:02x}{:02x}{:02x}",
            h.af_id, b.x, b.y, b.w, b.h, h.centroid.x, h.centroid.y, h.tone[0], h.tone[1], h.tone[2]
        );
    }
    out.truncate(out.trim_end().len());
    out
}

/// Replaces `{name}` markers; unknown markers are left alone.
pub fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
