//! Wireframe rasterization of layouts with a per-class color legend.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{ClassRegistry, ElementClass, LayoutDoc, RegistryError, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn from_hex(s: &str) -> Option<Self> {
        let s = s.strip_prefix('#').unwrap_or(s);
        if s.len() != 6 || !s.is_ascii() {
            return None;
        }
        let v = u32::from_str_radix(s, 16).ok()?;
        Some(Rgb((v >> 16) as u8, (v >> 8) as u8, v as u8))
    }

    /// Border shade: every channel scaled by 7/10.
    pub fn darker(self) -> Self {
        let d = |c: u8| (c as u16 * 7 / 10) as u8;
        Rgb(d(self.0), d(self.1), d(self.2))
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

const DEFAULT_PALETTE: [Rgb; 20] = [
    Rgb(0xe6, 0x19, 0x4b),
    Rgb(0x3c, 0xb4, 0x4b),
    Rgb(0xff, 0xe1, 0x19),
    Rgb(0x43, 0x63, 0xd8),
    Rgb(0xf5, 0x82, 0x31),
    Rgb(0x91, 0x1e, 0xb4),
    Rgb(0x46, 0xf0, 0xf0),
    Rgb(0xf0, 0x32, 0xe6),
    Rgb(0xbc, 0xf6, 0x0c),
    Rgb(0xfa, 0xbe, 0xbe),
    Rgb(0x00, 0x80, 0x80),
    Rgb(0xe6, 0xbe, 0xff),
    Rgb(0x9a, 0x63, 0x24),
    Rgb(0xff, 0xfa, 0xc8),
    Rgb(0x80, 0x00, 0x00),
    Rgb(0xaa, 0xff, 0xc3),
    Rgb(0x80, 0x80, 0x00),
    Rgb(0xff, 0xd8, 0xb1),
    Rgb(0x00, 0x00, 0x75),
    Rgb(0x80, 0x80, 0x80),
];

const DEFAULT_BACKGROUND: Rgb = Rgb(0xff, 0xff, 0xff);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LegendError {
    #[error("class {0} has no color")]
    MissingColor(String),
    #[error("classes {0} and {1} share color {2}")]
    DuplicateColor(String, String, Rgb),
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Class id to fill color, plus the background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorLegend {
    pub colors: BTreeMap<u16, Rgb>,
    pub background: Rgb,
}

impl ColorLegend {
    /// Checks the legend is total over `registry` with pairwise distinct colors.
    pub fn new(
        colors: BTreeMap<u16, Rgb>,
        background: Rgb,
        registry: &ClassRegistry,
    ) -> Result<Self, LegendError> {
        let mut seen: BTreeMap<Rgb, &str> = BTreeMap::new();
        for class in registry.classes() {
            let color = colors
                .get(&class.id)
                .ok_or_else(|| LegendError::MissingColor(class.name.clone()))?;
            if let Some(other) = seen.insert(*color, &class.name) {
                return Err(LegendError::DuplicateColor(other.into(), class.name.clone(), *color));
            }
        }
        Ok(Self { colors, background })
    }

    /// The shipped 20-color palette, assigned to classes in id order.
    pub fn default_for(registry: &ClassRegistry) -> Self {
        let colors = registry
            .classes()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let base = DEFAULT_PALETTE[i % DEFAULT_PALETTE.len()];
                // Registries beyond 20 classes get shifted variants.
                let shift = (i / DEFAULT_PALETTE.len()) as u8;
                let color = Rgb(base.0.wrapping_add(shift * 37), base.1, base.2.wrapping_sub(shift * 53));
                (c.id, color)
            })
            .collect();
        Self { colors, background: DEFAULT_BACKGROUND }
    }

    pub fn color(&self, class: &ElementClass) -> Option<Rgb> {
        self.colors.get(&class.id).copied()
    }
}

impl PartialOrd for Rgb {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rgb {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.0, self.1, self.2).cmp(&(other.0, other.1, other.2))
    }
}

/// Parses the class config: `class_id<TAB>NAME<TAB>rgb_hex` per line, an
/// optional `BACKGROUND<TAB>rgb_hex` line, `#` comments and blank lines.
pub fn parse_class_config(text: &str) -> Result<(ClassRegistry, ColorLegend), LegendError> {
    let mut classes = Vec::new();
    let mut colors = BTreeMap::new();
    let mut background = DEFAULT_BACKGROUND;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let err = |message: String| LegendError::Config { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        match fields.as_slice() {
            ["BACKGROUND", hex] => {
                background = Rgb::from_hex(hex).ok_or_else(|| err(format!("bad color {hex:?}")))?;
            }
            [id, name, hex] => {
                let id: u16 = id.parse().map_err(|_| err(format!("bad class id {id:?}")))?;
                let color = Rgb::from_hex(hex).ok_or_else(|| err(format!("bad color {hex:?}")))?;
                classes.push(ElementClass { id, name: name.to_string() });
                colors.insert(id, color);
            }
            _ => return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len()))),
        }
    }
    let registry = ClassRegistry::new(classes)?;
    let legend = ColorLegend::new(colors, background, &registry)?;
    Ok((registry, legend))
}

/// Inverse of [`parse_class_config`].
pub fn format_class_config(registry: &ClassRegistry, legend: &ColorLegend) -> String {
    let mut out = String::from("# class_id\tNAME\trgb_hex\n");
    out.push_str(&format!("BACKGROUND\t{}\n", legend.background));
    for class in registry.classes() {
        let color = legend.color(class).unwrap_or(legend.background);
        out.push_str(&format!("{}\t{}\t{}\n", class.id, class.name, color));
    }
    out
}

/// Row-major RGBA8 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Bitmap {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let mut pixels = vec![0; width as usize * height as usize * 4];
        for px in pixels.chunks_exact_mut(4) {
            px.copy_from_slice(&[color.0, color.1, color.2, 0xff]);
        }
        Self { width, height, pixels }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2], self.pixels[i + 3]]
    }

    fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb) {
        let rgba = [color.0, color.1, color.2, 0xff];
        for y in y0..y1 {
            let row = y as usize * self.width as usize;
            for x in x0..x1 {
                let i = (row + x as usize) * 4;
                self.pixels[i..i + 4].copy_from_slice(&rgba);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("layout is invalid: {}", .0.first().map(|v| v.message.as_str()).unwrap_or("?"))]
    InvalidLayout(Vec<Violation>),
    #[error("legend has no color for class {0}")]
    MissingColor(String),
    #[error("scale must be positive")]
    ZeroScale,
    #[error("bitmap of {0}x{1} pixels is too large")]
    TooLarge(u64, u64),
}

const MAX_PIXELS: u64 = 1 << 28;

/// Renders a valid layout: background, then each element as a solid rectangle
/// with a one-pixel darker border, in element order.
pub fn render(doc: &LayoutDoc, legend: &ColorLegend, scale: u32) -> Result<Bitmap, RenderError> {
    let report = crate::layout::validate_layout(doc);
    if !report.ok {
        return Err(RenderError::InvalidLayout(report.violations));
    }
    paint(doc, legend, scale)
}

/// Renders any layout, clipping out-of-bounds rectangles to the canvas.
pub fn render_clipped(doc: &LayoutDoc, legend: &ColorLegend, scale: u32) -> Result<Bitmap, RenderError> {
    let (clipped, _) = doc.clipped();
    paint(&clipped, legend, scale)
}

fn paint(doc: &LayoutDoc, legend: &ColorLegend, scale: u32) -> Result<Bitmap, RenderError> {
    if scale == 0 {
        return Err(RenderError::ZeroScale);
    }
    let width = doc.canvas_w as u64 * scale as u64;
    let height = doc.canvas_h as u64 * scale as u64;
    if width * height > MAX_PIXELS {
        return Err(RenderError::TooLarge(width, height));
    }
    let mut bm = Bitmap::filled(width as u32, height as u32, legend.background);
    for e in &doc.elements {
        let fill = legend.color(&e.class).ok_or_else(|| RenderError::MissingColor(e.class.name.clone()))?;
        let x0 = e.x as u32 * scale;
        let y0 = e.y as u32 * scale;
        let x1 = (e.x + e.w) as u32 * scale;
        let y1 = (e.y + e.h) as u32 * scale;
        bm.fill_rect(x0, y0, x1, y1, fill.darker());
        if x1 - x0 > 2 && y1 - y0 > 2 {
            bm.fill_rect(x0 + 1, y0 + 1, x1 - 1, y1 - 1, fill);
        }
    }
    Ok(bm)
}
