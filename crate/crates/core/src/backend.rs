//! Reviser backends: prompt bundle in, design code out.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::hash::Hasher;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{
    parse_layout_code, parse_layout_lenient, token_count, truncate_tokens, ClassRegistry, Element, LayoutDoc,
    Violation, DEFAULT_CANVAS_H, DEFAULT_CANVAS_W,
};
use crate::prompt::{render_prompt_text, PromptBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_temperature: bool,
    pub supports_images: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("prompt has no code part")]
    NoCode,
    #[error("backend is misconfigured: {0}")]
    Config(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("service refused the request: {0}")]
    Refused(String),
}

/// One backend call. `layout` is always usable: the output parsed leniently
/// and clipped to its canvas. `parsed` is set only when the code parses
/// strictly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub backend: String,
    pub code_text: String,
    pub parsed: Option<LayoutDoc>,
    pub parse_error: Option<String>,
    pub layout: LayoutDoc,
    pub skipped: Vec<String>,
    pub violations: Vec<Violation>,
    pub latency_ms: u64,
}

impl GenerationResult {
    pub fn from_code(
        backend: &str,
        code_text: String,
        registry: &ClassRegistry,
        fallback_canvas: (i32, i32),
        latency_ms: u64,
    ) -> Self {
        let (parsed, parse_error) = match parse_layout_code(&code_text, registry) {
            Ok(doc) => (Some(doc), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let lenient = parse_layout_lenient(&code_text, registry, fallback_canvas);
        Self {
            backend: backend.to_string(),
            code_text,
            parsed,
            parse_error,
            layout: lenient.doc,
            skipped: lenient.skipped,
            violations: lenient.violations,
            latency_ms,
        }
    }

    /// Canonical code of the usable layout.
    pub fn canonical_code(&self) -> String {
        self.layout.to_code()
    }
}

pub trait ReviserBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn revise(&self, bundle: &PromptBundle) -> Result<GenerationResult, BackendError>;
}

impl<B: ReviserBackend + ?Sized> ReviserBackend for alloc::boxed::Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn revise(&self, bundle: &PromptBundle) -> Result<GenerationResult, BackendError> {
        (**self).revise(bundle)
    }
}

impl<B: ReviserBackend + ?Sized> ReviserBackend for alloc::sync::Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn revise(&self, bundle: &PromptBundle) -> Result<GenerationResult, BackendError> {
        (**self).revise(bundle)
    }
}

/// Returns the last code part of the prompt unchanged.
#[derive(Debug, Clone)]
pub struct EchoReviser {
    registry: ClassRegistry,
}

impl EchoReviser {
    pub fn new(registry: ClassRegistry) -> Self {
        Self { registry }
    }
}

impl ReviserBackend for EchoReviser {
    fn name(&self) -> &str {
        "echo"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_temperature: false, supports_images: false }
    }

    fn revise(&self, bundle: &PromptBundle) -> Result<GenerationResult, BackendError> {
        let code = bundle.last_code().ok_or(BackendError::NoCode)?;
        let text = truncate_tokens(code, bundle.decoding.max_tokens).to_string();
        Ok(GenerationResult::from_code(self.name(), text, &self.registry, (DEFAULT_CANVAS_W, DEFAULT_CANVAS_H), 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub grid: i32,
    pub tolerance: i32,
    /// Share of elements jittered per unit of temperature.
    pub jitter_per_temperature: f64,
    pub seed: u64,
    pub max_passes: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self { grid: 8, tolerance: 8, jitter_per_temperature: 0.05, seed: 0, max_passes: 16 }
    }
}

/// Deterministic tidy-up of the working layout: grid snapping, size
/// unification, left alignment, de-duplication and clipping.
#[derive(Debug, Clone)]
pub struct HeuristicReviser {
    registry: ClassRegistry,
    cfg: HeuristicConfig,
}

impl HeuristicReviser {
    pub fn new(registry: ClassRegistry, cfg: HeuristicConfig) -> Self {
        Self { registry, cfg }
    }

    pub fn config(&self) -> &HeuristicConfig {
        &self.cfg
    }

    /// Applies the rules until the layout stops changing.
    pub fn tidy(&self, doc: &LayoutDoc) -> LayoutDoc {
        let mut cur = doc.clipped().0;
        for _ in 0..self.cfg.max_passes {
            let next = tidy_pass(&cur, self.cfg.grid, self.cfg.tolerance);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }

    fn jitter(&self, doc: &mut LayoutDoc, bundle: &PromptBundle) {
        let share = (self.cfg.jitter_per_temperature * bundle.decoding.temperature).min(1.0);
        if share <= 0.0 {
            return;
        }
        let mut hasher = fnv::FnvHasher::default();
        hasher.write(render_prompt_text(bundle).as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ hasher.finish());
        let g = self.cfg.grid;
        for e in &mut doc.elements {
            if rng.random_bool(share) {
                e.x = e.x.saturating_add(rng.random_range(-g..=g));
                e.y = e.y.saturating_add(rng.random_range(-g..=g));
            }
        }
    }

    /// Output code with trailing elements dropped until it fits `max_tokens`.
    fn fit(doc: &LayoutDoc, max_tokens: usize) -> String {
        let mut out = doc.clone();
        let mut code = out.to_code();
        while token_count(&code) > max_tokens && !out.elements.is_empty() {
            out.elements.pop();
            code = out.to_code();
        }
        if token_count(&code) > max_tokens {
            code = truncate_tokens(&code, max_tokens).to_string();
        }
        code
    }
}

impl ReviserBackend for HeuristicReviser {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_temperature: true, supports_images: false }
    }

    fn revise(&self, bundle: &PromptBundle) -> Result<GenerationResult, BackendError> {
        let code = bundle.last_code().ok_or(BackendError::NoCode)?;
        let mut doc = parse_layout_lenient(code, &self.registry, (DEFAULT_CANVAS_W, DEFAULT_CANVAS_H)).doc;
        self.jitter(&mut doc, bundle);
        let out = self.tidy(&doc);
        let text = Self::fit(&out, bundle.decoding.max_tokens);
        Ok(GenerationResult::from_code(self.name(), text, &self.registry, (doc.canvas_w, doc.canvas_h), 0))
    }
}

/// Rounds to the nearest multiple of `grid`, ties toward the lower one.
pub fn snap(v: i32, grid: i32) -> i32 {
    let lower = v.div_euclid(grid) * grid;
    if v - lower > grid / 2 {
        lower + grid
    } else {
        lower
    }
}

/// Groups sorted values into runs that stay within `tol` of the run's first
/// value; maps each value to its run minimum.
fn anchor_groups(mut values: Vec<i32>, tol: i32) -> BTreeMap<i32, i32> {
    values.sort_unstable();
    values.dedup();
    let mut out = BTreeMap::new();
    let mut anchor = None;
    for v in values {
        let a = match anchor {
            Some(a) if v - a <= tol => a,
            _ => {
                anchor = Some(v);
                v
            }
        };
        out.insert(v, a);
    }
    out
}

fn tidy_pass(doc: &LayoutDoc, grid: i32, tol: i32) -> LayoutDoc {
    let mut els: Vec<Element> = doc.elements.clone();
    for e in &mut els {
        e.x = snap(e.x, grid);
        e.y = snap(e.y, grid);
    }

    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, e) in els.iter().enumerate() {
        by_class.entry(e.class.id).or_default().push(i);
    }
    for idx in by_class.values() {
        let ws = anchor_groups(idx.iter().map(|&i| els[i].w).collect(), tol);
        let hs = anchor_groups(idx.iter().map(|&i| els[i].h).collect(), tol);
        for &i in idx {
            els[i].w = ws[&els[i].w];
            els[i].h = hs[&els[i].h];
        }
    }

    let xs = anchor_groups(els.iter().map(|e| e.x).collect(), tol);
    for e in &mut els {
        e.x = xs[&e.x];
    }

    let mut unique: Vec<Element> = Vec::with_capacity(els.len());
    for e in els {
        if !unique.contains(&e) {
            unique.push(e);
        }
    }
    LayoutDoc::with_elements(doc.canvas_w, doc.canvas_h, unique).clipped().0
}

/// Off-grid coordinates plus near-miss pairs: x positions within `tol`, and
/// same-class widths or heights within `tol`, that are not equal.
pub fn alignment_cost(doc: &LayoutDoc, grid: i32, tol: i32) -> usize {
    let els = &doc.elements;
    let near = |a: i32, b: i32| a != b && (a - b).abs() <= tol;
    let mut cost = els.iter().map(|e| (e.x.rem_euclid(grid) != 0) as usize + (e.y.rem_euclid(grid) != 0) as usize).sum();
    for (i, a) in els.iter().enumerate() {
        for b in &els[i + 1..] {
            cost += near(a.x, b.x) as usize;
            if a.class.id == b.class.id {
                cost += near(a.w, b.w) as usize + near(a.h, b.h) as usize;
            }
        }
    }
    cost
}
