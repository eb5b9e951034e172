use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::layout::{ClassRegistry, LayoutDoc};

/// Layout feature vector, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    /// Grid side; each class gets `grid * grid` occupancy channels.
    pub grid: usize,
    /// Element count at which the per-class count channel saturates.
    pub count_cap: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { grid: 4, count_cap: 16 }
    }
}

impl EmbedConfig {
    pub fn dim(&self, registry: &ClassRegistry) -> usize {
        registry.len() * (1 + self.grid * self.grid)
    }
}

/// Per class, in registry order: `min(count / count_cap, 1)` followed by the
/// row-major grid of covered area fractions (summed over elements, capped at 1).
pub fn embed(doc: &LayoutDoc, registry: &ClassRegistry, cfg: &EmbedConfig) -> FeatureVector {
    let g = cfg.grid;
    let stride = 1 + g * g;
    let mut values = vec![0.0; registry.len() * stride];
    let mut counts = vec![0usize; registry.len()];
    let cell_w = doc.canvas_w as f64 / g as f64;
    let cell_h = doc.canvas_h as f64 / g as f64;
    let cell_area = cell_w * cell_h;
    for e in &doc.elements {
        let Some(class) = registry.index_of(e.class.id) else { continue };
        counts[class] += 1;
        let (x0, x1) = (e.x as f64, e.x as f64 + e.w as f64);
        let (y0, y1) = (e.y as f64, e.y as f64 + e.h as f64);
        for row in 0..g {
            let (cy0, cy1) = (row as f64 * cell_h, (row + 1) as f64 * cell_h);
            let oy = y1.min(cy1) - y0.max(cy0);
            if oy <= 0.0 {
                continue;
            }
            for col in 0..g {
                let (cx0, cx1) = (col as f64 * cell_w, (col + 1) as f64 * cell_w);
                let ox = x1.min(cx1) - x0.max(cx0);
                if ox > 0.0 {
                    values[class * stride + 1 + row * g + col] += ox * oy / cell_area;
                }
            }
        }
    }
    for (class, count) in counts.iter().enumerate() {
        values[class * stride] = (*count as f64 / cfg.count_cap as f64).min(1.0);
        for v in &mut values[class * stride + 1..(class + 1) * stride] {
            *v = v.min(1.0);
        }
    }
    FeatureVector(values)
}

pub fn embed_all<'a>(
    docs: impl IntoIterator<Item = &'a LayoutDoc>,
    registry: &ClassRegistry,
    cfg: &EmbedConfig,
) -> Vec<FeatureVector> {
    docs.into_iter().map(|d| embed(d, registry, cfg)).collect()
}
