//! Layout design code: element classes, documents, the line-based DSL and
//! validation.
//!
//! The DSL is line oriented:
//!
//! ```text
//! # comment
//! CANVAS 360 800
//! APP_BAR 0 0 360 56 "Library"
//! BUTTON 16 96 160 48
//! ```
//!
//! The first non-blank, non-comment line must be the `CANVAS` header. Every
//! following line is one element: class name, `x y w h` in integer canvas
//! units and an optional double-quoted label.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::hash::Hasher;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default canvas: mobile portrait.
pub const DEFAULT_CANVAS_W: i32 = 360;
pub const DEFAULT_CANVAS_H: i32 = 800;

const DEFAULT_CLASSES: [&str; 20] = [
    "BUTTON",
    "TEXT",
    "IMAGE",
    "ICON",
    "TEXT_FIELD",
    "CHECKBOX",
    "TOOLBAR",
    "LIST_ITEM",
    "CARD",
    "NAV_BAR",
    "FAB",
    "CHIP",
    "SLIDER",
    "SWITCH",
    "DIVIDER",
    "APP_BAR",
    "TAB",
    "DIALOG",
    "MENU",
    "AVATAR",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementClass {
    pub id: u16,
    pub name: String,
}

/// Returns true when `name` matches `[A-Z][A-Z0-9_]*`.
pub fn is_class_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("duplicate class id {0}")]
    DuplicateId(u16),
    #[error("duplicate class name {0}")]
    DuplicateName(String),
    #[error("invalid class name {0:?}")]
    InvalidName(String),
    #[error("registry is empty")]
    Empty,
}

/// The set of element classes a layout may use, ordered by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    classes: Vec<ElementClass>,
}

impl ClassRegistry {
    pub fn new(mut classes: Vec<ElementClass>) -> Result<Self, RegistryError> {
        if classes.is_empty() {
            return Err(RegistryError::Empty);
        }
        classes.sort_by_key(|c| c.id);
        for (i, class) in classes.iter().enumerate() {
            if !is_class_name(&class.name) {
                return Err(RegistryError::InvalidName(class.name.clone()));
            }
            if i > 0 && classes[i - 1].id == class.id {
                return Err(RegistryError::DuplicateId(class.id));
            }
            if classes[..i].iter().any(|c| c.name == class.name) {
                return Err(RegistryError::DuplicateName(class.name.clone()));
            }
        }
        Ok(Self { classes })
    }

    /// The twenty Material-style classes, ids 0..20.
    pub fn material_default() -> Self {
        let classes = DEFAULT_CLASSES
            .iter()
            .enumerate()
            .map(|(id, name)| ElementClass { id: id as u16, name: (*name).to_owned() })
            .collect();
        Self { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ElementClass] {
        &self.classes
    }

    pub fn by_name(&self, name: &str) -> Option<&ElementClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn by_id(&self, id: u16) -> Option<&ElementClass> {
        self.index_of(id).map(|i| &self.classes[i])
    }

    /// Dense position of a class id within the registry (feature index).
    pub fn index_of(&self, id: u16) -> Option<usize> {
        self.classes.binary_search_by_key(&id, |c| c.id).ok()
    }
}

impl Default for ClassRegistry {
    fn default() -> Self {
        Self::material_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub class: ElementClass,
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Element {
    pub fn new(class: ElementClass, x: i32, y: i32, w: i32, h: i32) -> Self {
        Self { class, x, y, w, h, label: None }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn right(&self) -> i64 {
        self.x as i64 + self.w as i64
    }

    pub fn bottom(&self) -> i64 {
        self.y as i64 + self.h as i64
    }

    fn fits(&self, canvas_w: i32, canvas_h: i32) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x >= 0
            && self.y >= 0
            && self.right() <= canvas_w as i64
            && self.bottom() <= canvas_h as i64
    }
}

/// A design-code document: a canvas and its elements in z/serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub canvas_w: i32,
    pub canvas_h: i32,
    pub elements: Vec<Element>,
}

impl LayoutDoc {
    pub fn new(canvas_w: i32, canvas_h: i32) -> Self {
        Self { canvas_w, canvas_h, elements: Vec::new() }
    }

    pub fn with_elements(canvas_w: i32, canvas_h: i32, elements: Vec<Element>) -> Self {
        Self { canvas_w, canvas_h, elements }
    }

    pub fn is_valid(&self) -> bool {
        self.canvas_w >= 1
            && self.canvas_h >= 1
            && self.elements.iter().all(|e| e.fits(self.canvas_w, self.canvas_h))
    }

    pub fn to_code(&self) -> String {
        serialize_layout_code(self)
    }

    /// Stable content id: 64-bit FNV-1a of the canonical serialization, hex.
    pub fn content_id(&self) -> String {
        let mut hasher = fnv::FnvHasher::default();
        hasher.write(self.to_code().as_bytes());
        format!("{:016x}", hasher.finish())
    }

    /// Clips every element into the canvas, dropping elements left without
    /// area. Returns the clipped document and one violation per element that
    /// had to change.
    pub fn clipped(&self) -> (LayoutDoc, Vec<Violation>) {
        let report = validate_layout(self);
        let cw = self.canvas_w.max(1) as i64;
        let ch = self.canvas_h.max(1) as i64;
        let elements = self
            .elements
            .iter()
            .filter_map(|e| {
                let x0 = (e.x as i64).clamp(0, cw);
                let y0 = (e.y as i64).clamp(0, ch);
                let x1 = e.right().clamp(0, cw);
                let y1 = e.bottom().clamp(0, ch);
                (x1 > x0 && y1 > y0).then(|| Element {
                    class: e.class.clone(),
                    x: x0 as i32,
                    y: y0 as i32,
                    w: (x1 - x0) as i32,
                    h: (y1 - y0) as i32,
                    label: e.label.clone(),
                })
            })
            .collect();
        let doc = LayoutDoc { canvas_w: cw as i32, canvas_h: ch as i32, elements };
        (doc, report.violations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    InvalidCanvas,
    NonpositiveSize,
    NegativeCoordinate,
    OverflowX,
    OverflowY,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::InvalidCanvas => "invalid-canvas",
            Rule::NonpositiveSize => "nonpositive-size",
            Rule::NegativeCoordinate => "negative-coordinate",
            Rule::OverflowX => "overflow-x",
            Rule::OverflowY => "overflow-y",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for document-level violations.
    pub element: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Reports every nonpositive-size and out-of-bounds element.
pub fn validate_layout(doc: &LayoutDoc) -> ValidationReport {
    let mut violations = Vec::new();
    if doc.canvas_w < 1 || doc.canvas_h < 1 {
        violations.push(Violation {
            element: None,
            rule: Rule::InvalidCanvas,
            message: format!("canvas {}x{} must be at least 1x1", doc.canvas_w, doc.canvas_h),
        });
    }
    for (i, e) in doc.elements.iter().enumerate() {
        let mut push = |rule: Rule, message: String| {
            violations.push(Violation { element: Some(i), rule, message })
        };
        if e.w < 1 || e.h < 1 {
            push(Rule::NonpositiveSize, format!("{} has size {}x{}", e.class.name, e.w, e.h));
        }
        if e.x < 0 || e.y < 0 {
            push(
                Rule::NegativeCoordinate,
                format!("{} at ({}, {}) has a negative coordinate", e.class.name, e.x, e.y),
            );
        }
        if e.right() > doc.canvas_w as i64 {
            push(
                Rule::OverflowX,
                format!("{} right edge {} exceeds canvas width {}", e.class.name, e.right(), doc.canvas_w),
            );
        }
        if e.bottom() > doc.canvas_h as i64 {
            push(
                Rule::OverflowY,
                format!(
                    "{} bottom edge {} exceeds canvas height {}",
                    e.class.name,
                    e.bottom(),
                    doc.canvas_h
                ),
            );
        }
    }
    ValidationReport { ok: violations.is_empty(), violations }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("missing CANVAS header")]
    MissingCanvas,
    #[error("invalid canvas size")]
    InvalidCanvas,
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("non-integer coordinate {0:?}")]
    NotAnInteger(String),
    #[error("expected {expected} fields, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("malformed label: {0}")]
    BadLabel(&'static str),
    #[error("nonpositive width")]
    NonpositiveWidth,
    #[error("nonpositive height")]
    NonpositiveHeight,
    #[error("element outside the canvas")]
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(line: usize, kind: ParseErrorKind) -> Self {
        Self { line, kind }
    }
}

/// Parses design code and enforces the element invariants.
pub fn parse_layout_code(text: &str, registry: &ClassRegistry) -> Result<LayoutDoc, ParseError> {
    parse_with(text, registry, true)
}

/// Parses design code checking only the grammar. Out-of-bounds and
/// nonpositive-size elements are kept so [`validate_layout`] can report them.
pub fn parse_layout_raw(text: &str, registry: &ClassRegistry) -> Result<LayoutDoc, ParseError> {
    parse_with(text, registry, false)
}

fn parse_with(text: &str, registry: &ClassRegistry, strict: bool) -> Result<LayoutDoc, ParseError> {
    let mut doc: Option<LayoutDoc> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match doc.as_mut() {
            None => doc = Some(parse_canvas(line).map_err(|k| ParseError::new(line_no, k))?),
            Some(doc) => {
                let element =
                    parse_element(line, registry).map_err(|k| ParseError::new(line_no, k))?;
                if strict {
                    check_element(&element, doc).map_err(|k| ParseError::new(line_no, k))?;
                }
                doc.elements.push(element);
            }
        }
    }
    doc.ok_or_else(|| ParseError::new(text.lines().count().max(1), ParseErrorKind::MissingCanvas))
}

fn check_element(e: &Element, doc: &LayoutDoc) -> Result<(), ParseErrorKind> {
    if e.w < 1 {
        return Err(ParseErrorKind::NonpositiveWidth);
    }
    if e.h < 1 {
        return Err(ParseErrorKind::NonpositiveHeight);
    }
    if !e.fits(doc.canvas_w, doc.canvas_h) {
        return Err(ParseErrorKind::OutOfBounds);
    }
    Ok(())
}

fn parse_int(tok: &str) -> Result<i32, ParseErrorKind> {
    tok.parse::<i32>().map_err(|_| ParseErrorKind::NotAnInteger(tok.to_owned()))
}

fn parse_canvas(line: &str) -> Result<LayoutDoc, ParseErrorKind> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields[0] != "CANVAS" {
        return Err(ParseErrorKind::MissingCanvas);
    }
    if fields.len() != 3 {
        return Err(ParseErrorKind::Arity { expected: 3, found: fields.len() });
    }
    let w = parse_int(fields[1])?;
    let h = parse_int(fields[2])?;
    if w < 1 || h < 1 {
        return Err(ParseErrorKind::InvalidCanvas);
    }
    Ok(LayoutDoc::new(w, h))
}

/// Splits off the first whitespace-delimited field.
fn next_field(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    if s.is_empty() {
        return None;
    }
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    Some((&s[..end], &s[end..]))
}

fn parse_element(line: &str, registry: &ClassRegistry) -> Result<Element, ParseErrorKind> {
    let mut rest = line;
    let mut fields = [""; 5];
    for (i, slot) in fields.iter_mut().enumerate() {
        match next_field(rest) {
            Some((field, tail)) if !(i > 0 && field.starts_with('"')) => {
                *slot = field;
                rest = tail;
            }
            _ => return Err(ParseErrorKind::Arity { expected: 5, found: i }),
        }
    }
    let class = registry
        .by_name(fields[0])
        .ok_or_else(|| ParseErrorKind::UnknownClass(fields[0].to_owned()))?
        .clone();
    let x = parse_int(fields[1])?;
    let y = parse_int(fields[2])?;
    let w = parse_int(fields[3])?;
    let h = parse_int(fields[4])?;
    let rest = rest.trim();
    let label = if rest.is_empty() {
        None
    } else if rest.starts_with('"') {
        Some(parse_label(rest)?)
    } else {
        let found = 5 + rest.split_whitespace().count();
        return Err(ParseErrorKind::Arity { expected: 5, found });
    };
    Ok(Element { class, x, y, w, h, label })
}

fn parse_label(s: &str) -> Result<String, ParseErrorKind> {
    let mut out = String::new();
    let mut chars = s[1..].chars();
    loop {
        match chars.next() {
            None => return Err(ParseErrorKind::BadLabel("unterminated string")),
            Some('"') => break,
            Some('\\') => match chars.next() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some('t') => out.push('\t'),
                _ => return Err(ParseErrorKind::BadLabel("unknown escape")),
            },
            Some(c) => out.push(c),
        }
    }
    if chars.as_str().trim().is_empty() {
        Ok(out)
    } else {
        Err(ParseErrorKind::BadLabel("trailing characters after label"))
    }
}

fn write_label(out: &mut String, label: &str) {
    out.push('"');
    for c in label.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Canonical form: single spaces, one newline-terminated line per element.
pub fn serialize_layout_code(doc: &LayoutDoc) -> String {
    let mut out = String::with_capacity(16 + doc.elements.len() * 24);
    let _ = writeln!(out, "CANVAS {} {}", doc.canvas_w, doc.canvas_h);
    for e in &doc.elements {
        let _ = write!(out, "{} {} {} {} {}", e.class.name, e.x, e.y, e.w, e.h);
        if let Some(label) = &e.label {
            out.push(' ');
            write_label(&mut out, label);
        }
        out.push('\n');
    }
    out
}

impl fmt::Display for LayoutDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_layout_code(self))
    }
}

/// Whitespace-token count, the budget proxy for the backbone tokenizer.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Cuts `text` right after its `max_tokens`-th whitespace token, keeping the
/// original line structure up to that point.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    if token_count(text) <= max_tokens {
        return text;
    }
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                if seen == max_tokens {
                    return &text[..i];
                }
            }
        } else if !in_token {
            in_token = true;
            seen += 1;
            if seen > max_tokens {
                return &text[..i];
            }
        }
    }
    text
}

/// Outcome of parsing untrusted design code (model output).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LenientParse {
    /// Valid document; out-of-bounds elements clipped.
    pub doc: LayoutDoc,
    /// Lines that could not be used, as `line N: reason`.
    pub skipped: Vec<String>,
    /// Elements that had to be clipped or dropped.
    pub violations: Vec<Violation>,
}

impl LenientParse {
    pub fn is_clean(&self) -> bool {
        self.skipped.is_empty() && self.violations.is_empty()
    }
}

/// Parses as much of `text` as possible. Malformed lines are skipped, a
/// missing header falls back to `fallback_canvas`, and the result is clipped
/// to the canvas.
pub fn parse_layout_lenient(
    text: &str,
    registry: &ClassRegistry,
    fallback_canvas: (i32, i32),
) -> LenientParse {
    let mut skipped = Vec::new();
    let mut doc: Option<LayoutDoc> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if doc.is_none() {
            match parse_canvas(line) {
                Ok(d) => {
                    doc = Some(d);
                    continue;
                }
                Err(kind) => {
                    skipped.push(format!("line {line_no}: {kind}"));
                    doc = Some(LayoutDoc::new(fallback_canvas.0, fallback_canvas.1));
                }
            }
        }
        let doc = doc.as_mut().expect("canvas initialised above");
        match parse_element(line, registry) {
            Ok(e) => doc.elements.push(e),
            Err(kind) => skipped.push(format!("line {line_no}: {kind}")),
        }
    }
    let doc = doc.unwrap_or_else(|| {
        skipped.push(ParseErrorKind::MissingCanvas.to_string());
        LayoutDoc::new(fallback_canvas.0, fallback_canvas.1)
    });
    let (doc, violations) = doc.clipped();
    LenientParse { doc, skipped, violations }
}
