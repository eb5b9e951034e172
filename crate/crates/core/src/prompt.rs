//! Prompt construction: interleaved instruction text, design code and
//! screenshot references, with decoding parameters and a token budget.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{token_count, validate_layout, LayoutDoc, Violation};

pub const INTRO: &str = "Your are improving the layout design of an app.";
pub const INTRO_FIXED: &str = "You are improving the layout design of an app.";
pub const INITIAL_LAYOUT: &str = "The initial layout is:";
pub const DIRECT_OUTRO: &str = "Now, improve the layout based on the initial layout's screenshot:";
pub const EDITS_HEADER: &str = "You made some edits to the initial layout:";
pub const REVISION_OUTRO: &str =
    "Now, follow the edits and make further improvements. As a reference, here is the screenshot of the initial layout:";

pub const DEFAULT_BUDGET: usize = 8192;
pub const MULTI_REVISION_BUDGET: usize = 16384;
pub const IMAGE_TOKEN_ALLOWANCE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSetup {
    Direct,
    Hop,
    SingleRevision,
    MultiRevision,
}

impl ModelSetup {
    pub const ALL: [ModelSetup; 4] =
        [ModelSetup::Direct, ModelSetup::Hop, ModelSetup::SingleRevision, ModelSetup::MultiRevision];

    pub fn name(self) -> &'static str {
        match self {
            ModelSetup::Direct => "direct",
            ModelSetup::Hop => "hop",
            ModelSetup::SingleRevision => "single",
            ModelSetup::MultiRevision => "multi",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn uses_revisions(self) -> bool {
        matches!(self, ModelSetup::SingleRevision | ModelSetup::MultiRevision)
    }

    pub fn budget(self) -> usize {
        match self {
            ModelSetup::MultiRevision => MULTI_REVISION_BUDGET,
            _ => DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub max_tokens: usize,
    pub temperature: f64,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self { max_tokens: 400, temperature: 0.0 }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.max_tokens == 0 {
            return Err(PromptError::InvalidDecoding("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(PromptError::InvalidDecoding(format!("temperature {} is negative", self.temperature)));
        }
        Ok(())
    }
}

/// Screenshot slot. The id is the layout's content id, so the same state
/// always resolves to the same render.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub id: String,
    pub layout: LayoutDoc,
}

impl ImageRef {
    pub fn of(layout: &LayoutDoc) -> Self {
        Self { id: layout.content_id(), layout: layout.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptPart {
    Text(String),
    Code(String),
    Image(ImageRef),
}

impl PromptPart {
    pub fn kind(&self) -> PartKind {
        match self {
            PromptPart::Text(_) => PartKind::Text,
            PromptPart::Code(_) => PartKind::Code,
            PromptPart::Image(_) => PartKind::ImageRef,
        }
    }

    pub fn payload(&self) -> &str {
        match self {
            PromptPart::Text(s) | PromptPart::Code(s) => s,
            PromptPart::Image(img) => &img.id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Text,
    Code,
    ImageRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub parts: Vec<PromptPart>,
    pub decoding: DecodingParams,
    pub budget: usize,
}

impl PromptBundle {
    /// Text and code tokens plus the fixed allowance per image.
    pub fn token_count(&self) -> usize {
        self.parts
            .iter()
            .map(|p| match p {
                PromptPart::Text(s) | PromptPart::Code(s) => token_count(s),
                PromptPart::Image(_) => IMAGE_TOKEN_ALLOWANCE,
            })
            .sum()
    }

    pub fn code_parts(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            PromptPart::Code(c) => Some(c.as_str()),
            _ => None,
        })
    }

    pub fn last_code(&self) -> Option<&str> {
        self.code_parts().last()
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.parts.iter().filter_map(|p| match p {
            PromptPart::Image(img) => Some(img),
            _ => None,
        })
    }

    pub fn to_wire(&self) -> WirePrompt {
        WirePrompt {
            parts: self.parts.iter().map(|p| WirePart { kind: p.kind(), payload: p.payload().to_string() }).collect(),
            decoding: self.decoding,
        }
    }

    fn check_budget(self) -> Result<Self, PromptError> {
        let tokens = self.token_count();
        if tokens > self.budget {
            return Err(PromptError::BudgetExceeded { tokens, budget: self.budget });
        }
        Ok(self)
    }
}

/// Transport form of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrompt {
    pub parts: Vec<WirePart>,
    pub decoding: DecodingParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePart {
    pub kind: PartKind,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("prompt needs {tokens} tokens, budget is {budget}")]
    BudgetExceeded { tokens: usize, budget: usize },
    #[error("revision prompt needs at least one edit")]
    NoEdits,
    #[error("layout is invalid: {}", .0.first().map(|v| v.message.as_str()).unwrap_or("?"))]
    InvalidLayout(Vec<Violation>),
    #[error("invalid decoding parameters: {0}")]
    InvalidDecoding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    /// Writes "You are" instead of the template's "Your are".
    pub fix_typos: bool,
    pub decoding: DecodingParams,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self { fix_typos: false, decoding: DecodingParams::default() }
    }
}

impl PromptOptions {
    fn intro(&self) -> &'static str {
        if self.fix_typos {
            INTRO_FIXED
        } else {
            INTRO
        }
    }
}

fn checked_code(doc: &LayoutDoc) -> Result<String, PromptError> {
    let report = validate_layout(doc);
    if !report.ok {
        return Err(PromptError::InvalidLayout(report.violations));
    }
    Ok(doc.to_code())
}

/// Direct/Hop prompt over one state and its screenshot.
pub fn build_direct_prompt(prompt: &str, state: &LayoutDoc, opts: &PromptOptions) -> Result<PromptBundle, PromptError> {
    opts.decoding.validate()?;
    let code = checked_code(state)?;
    PromptBundle {
        parts: alloc::vec![
            PromptPart::Text(opts.intro().into()),
            PromptPart::Text(prompt.into()),
            PromptPart::Text(INITIAL_LAYOUT.into()),
            PromptPart::Code(code),
            PromptPart::Text(DIRECT_OUTRO.into()),
            PromptPart::Image(ImageRef::of(state)),
        ],
        decoding: opts.decoding,
        budget: DEFAULT_BUDGET,
    }
    .check_budget()
}

/// Single/Multi-revision prompt: the initial layout, the edits in order, and
/// the initial screenshot only.
pub fn build_revision_prompt(
    setup: ModelSetup,
    prompt: &str,
    initial: &LayoutDoc,
    edits: &[LayoutDoc],
    opts: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    opts.decoding.validate()?;
    if edits.is_empty() {
        return Err(PromptError::NoEdits);
    }
    let mut parts = alloc::vec![
        PromptPart::Text(opts.intro().into()),
        PromptPart::Text(prompt.into()),
        PromptPart::Text(INITIAL_LAYOUT.into()),
        PromptPart::Code(checked_code(initial)?),
        PromptPart::Text(EDITS_HEADER.into()),
    ];
    for edit in edits {
        parts.push(PromptPart::Code(checked_code(edit)?));
    }
    parts.push(PromptPart::Text(REVISION_OUTRO.into()));
    parts.push(PromptPart::Image(ImageRef::of(initial)));
    PromptBundle { parts, decoding: opts.decoding, budget: setup.budget() }.check_budget()
}

/// Flat text form. Parts are joined by one space; consecutive code blocks are
/// separated by a blank line. Images become `<image:ID>`.
pub fn render_prompt_text(bundle: &PromptBundle) -> String {
    let mut out = String::new();
    let mut prev: Option<PartKind> = None;
    for part in &bundle.parts {
        if let Some(kind) = prev {
            out.push_str(if kind == PartKind::Code && part.kind() == PartKind::Code { "\n" } else { " " });
        }
        match part {
            PromptPart::Text(s) | PromptPart::Code(s) => out.push_str(s),
            PromptPart::Image(img) => {
                out.push_str("<image:");
                out.push_str(&img.id);
                out.push('>');
            }
        }
        prev = Some(part.kind());
    }
    out
}
