//! Revision trajectories, a synthetic trajectory generator and the stage
//! profile (bucket-wise FID against the final designs).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{ClassRegistry, Element, ElementClass, LayoutDoc};
use crate::metrics::{embed_all, fid, EmbedConfig, FidConfig, FidResult, MetricError};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Synthetic,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("trajectory {id}: needs at least 2 states, got {got}")]
    TooShort { id: String, got: usize },
    #[error("trajectory {id}: state {index} is not a valid layout")]
    InvalidState { id: String, index: usize },
    #[error("duplicate trajectory id {0}")]
    DuplicateId(String),
}

/// A prompt and the ordered layout states `S0..Sn` leading to the final design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionTrajectory {
    pub id: String,
    pub prompt: String,
    pub source: Source,
    states: Vec<LayoutDoc>,
}

impl RevisionTrajectory {
    pub fn new(
        id: impl Into<String>,
        prompt: impl Into<String>,
        source: Source,
        states: Vec<LayoutDoc>,
    ) -> Result<Self, TrajectoryError> {
        let id = id.into();
        if states.len() < 2 {
            return Err(TrajectoryError::TooShort { id, got: states.len() });
        }
        if let Some(index) = states.iter().position(|s| !s.is_valid()) {
            return Err(TrajectoryError::InvalidState { id, index });
        }
        Ok(Self { id, prompt: prompt.into(), source, states })
    }

    pub fn states(&self) -> &[LayoutDoc] {
        &self.states
    }

    /// `n`, the index of the final design.
    pub fn last_index(&self) -> usize {
        self.states.len() - 1
    }

    pub fn initial(&self) -> &LayoutDoc {
        &self.states[0]
    }

    pub fn final_state(&self) -> &LayoutDoc {
        &self.states[self.last_index()]
    }

    pub fn state(&self, index: usize) -> Option<&LayoutDoc> {
        self.states.get(index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    trajectories: Vec<RevisionTrajectory>,
    pub split: Split,
}

impl Corpus {
    pub fn new(trajectories: Vec<RevisionTrajectory>, split: Split) -> Result<Self, TrajectoryError> {
        let mut ids: Vec<&str> = trajectories.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(TrajectoryError::DuplicateId(w[0].into()));
        }
        Ok(Self { trajectories, split })
    }

    pub fn trajectories(&self) -> &[RevisionTrajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&RevisionTrajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    pub fn finals(&self) -> Vec<LayoutDoc> {
        self.trajectories.iter().map(|t| t.final_state().clone()).collect()
    }

    pub fn into_trajectories(self) -> Vec<RevisionTrajectory> {
        self.trajectories
    }
}

/// Stage bucket of state `index` in a trajectory of `states` states.
pub fn bucket_of(index: usize, states: usize, buckets: usize) -> usize {
    index * buckets / states
}

/// Indices `lo..hi` of the states falling into `bucket`.
pub fn bucket_range(bucket: usize, states: usize, buckets: usize) -> core::ops::Range<usize> {
    let lo = (bucket * states).div_ceil(buckets);
    let hi = ((bucket + 1) * states).div_ceil(buckets);
    lo..hi.min(states)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub canvas_w: i32,
    pub canvas_h: i32,
    /// Inclusive range of element counts in the final layout.
    pub elements: (usize, usize),
    /// Inclusive range of trajectory lengths (number of states, >= 2).
    pub states: (usize, usize),
    /// Global noise scale; 0 makes every state equal to the final layout.
    pub noise: f64,
    /// Initial position/size jitter in canvas units, decaying linearly to 0.
    pub jitter: i32,
    pub drop_prob: f64,
    pub dup_prob: f64,
    pub swap_prob: f64,
    /// Expected experiments opened per step at the peak of the schedule.
    pub experiment_rate: f64,
    /// Trajectory position (0..1) where experimentation peaks.
    pub experiment_peak: f64,
    /// Half width of the experimentation window.
    pub experiment_width: f64,
    /// Per-step probability that an open experiment is reverted.
    pub revert_prob: f64,
    /// Position after which every open experiment is reverted.
    pub settle_at: f64,
    /// Position after which corrections snap exactly to the final layout.
    pub align_at: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            canvas_w: 360,
            canvas_h: 800,
            elements: (4, 12),
            states: (12, 40),
            noise: 1.0,
            jitter: 24,
            drop_prob: 0.15,
            dup_prob: 0.1,
            swap_prob: 0.1,
            experiment_rate: 0.3,
            experiment_peak: 0.25,
            experiment_width: 0.2,
            revert_prob: 0.3,
            settle_at: 0.7,
            align_at: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("registry lacks class {0}")]
    MissingClass(&'static str),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.canvas_w < 64 || self.canvas_h < 160 {
            return bad("canvas must be at least 64x160");
        }
        if self.elements.0 < 1 || self.elements.0 > self.elements.1 {
            return bad("element range must be non-empty and start at 1 or more");
        }
        if self.states.0 < 2 || self.states.0 > self.states.1 {
            return bad("state range must be non-empty and start at 2 or more");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || self.jitter < 0 {
            return bad("noise and jitter must be non-negative");
        }
        let unit = [
            self.drop_prob,
            self.dup_prob,
            self.swap_prob,
            self.revert_prob,
            self.experiment_peak,
            self.settle_at,
            self.align_at,
        ];
        if unit.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities and positions must lie in [0, 1]");
        }
        if !(self.experiment_rate >= 0.0) || !(self.experiment_width > 0.0) {
            return bad("experiment rate must be >= 0 and width > 0");
        }
        Ok(())
    }
}

const CONTENT: [(&str, &[i32]); 11] = [
    ("LIST_ITEM", &[56, 72]),
    ("CARD", &[96, 160]),
    ("BUTTON", &[40]),
    ("TEXT", &[24, 48]),
    ("IMAGE", &[120, 200]),
    ("TEXT_FIELD", &[56]),
    ("CHIP", &[32]),
    ("SWITCH", &[32]),
    ("SLIDER", &[24]),
    ("TAB", &[48]),
    ("DIVIDER", &[8]),
];

const LABELS: [&str; 10] = ["Play", "Search", "Next", "Save", "Sign in", "Settings", "Share", "Add", "Filter", "Done"];

const APPS: [&str; 12] = [
    "music player",
    "recipe browser",
    "fitness tracker",
    "weather",
    "banking",
    "note taking",
    "photo gallery",
    "food delivery",
    "travel booking",
    "podcast",
    "chat",
    "to-do list",
];

const FEATURES: [&str; 10] = [
    "a search bar",
    "a list of recent items",
    "a featured banner",
    "quick action buttons",
    "a settings toggle",
    "category tabs",
    "a sign-in form",
    "a detail card",
    "a progress slider",
    "filter chips",
];

struct Palette {
    content: Vec<(ElementClass, &'static [i32])>,
    app_bar: ElementClass,
    nav_bar: ElementClass,
    fab: ElementClass,
    all: Vec<ElementClass>,
}

impl Palette {
    fn new(registry: &ClassRegistry) -> Result<Self, SynthError> {
        let get = |name: &'static str| registry.by_name(name).cloned().ok_or(SynthError::MissingClass(name));
        let content = CONTENT
            .iter()
            .map(|(name, heights)| Ok((get(name)?, *heights)))
            .collect::<Result<Vec<_>, SynthError>>()?;
        Ok(Self {
            content,
            app_bar: get("APP_BAR")?,
            nav_bar: get("NAV_BAR")?,
            fab: get("FAB")?,
            all: registry.classes().to_vec(),
        })
    }
}

fn snap(v: i32) -> i32 {
    v.div_euclid(8) * 8
}

/// Grid-aligned final layout: optional app bar, full- or half-width content
/// rows with 16-unit gutters, optional navigation bar and floating button.
fn final_layout<R: Rng>(rng: &mut R, cfg: &SynthConfig, palette: &Palette) -> LayoutDoc {
    let (cw, ch) = (cfg.canvas_w, cfg.canvas_h);
    let mut doc = LayoutDoc::new(cw, ch);
    let target = rng.random_range(cfg.elements.0..=cfg.elements.1);
    let margin = 16;
    let content_w = snap(cw - 2 * margin);
    let half_w = snap((content_w - 8) / 2);
    let mut y = margin;
    if rng.random_bool(0.8) {
        doc.elements.push(Element::new(palette.app_bar.clone(), 0, 0, cw, 56));
        y = 72;
    }
    let mut limit = snap(ch - margin);
    if doc.elements.len() < target && rng.random_bool(0.6) {
        doc.elements.push(Element::new(palette.nav_bar.clone(), 0, snap(ch - 80), cw, ch - snap(ch - 80)));
        limit = snap(ch - 80) - margin;
    }
    let want_fab = rng.random_bool(0.3);
    let rows_target = if want_fab { target.saturating_sub(1) } else { target };
    while doc.elements.len() < rows_target {
        let (class, heights) = palette.content.choose(rng).expect("non-empty palette");
        let h = *heights.choose(rng).expect("non-empty heights");
        if y + h > limit {
            break;
        }
        let two = rows_target - doc.elements.len() >= 2 && rng.random_bool(0.35);
        let label = |rng: &mut R| {
            matches!(class.name.as_str(), "BUTTON" | "TEXT" | "CHIP" | "TAB")
                .then(|| String::from(*LABELS.choose(rng).expect("labels")))
        };
        if two {
            let mut a = Element::new(class.clone(), margin, y, half_w, h);
            a.label = label(rng);
            let mut b = Element::new(class.clone(), margin + half_w + 8, y, half_w, h);
            b.label = label(rng);
            doc.elements.push(a);
            doc.elements.push(b);
        } else {
            let mut a = Element::new(class.clone(), margin, y, content_w, h);
            a.label = label(rng);
            doc.elements.push(a);
        }
        y += h + margin;
    }
    if want_fab && doc.elements.len() < target && limit >= 56 && cw >= 56 + 2 * margin {
        doc.elements.push(Element::new(palette.fab.clone(), snap(cw - margin - 56), snap(limit - 56), 56, 56));
    }
    doc
}

fn clamp_into(mut e: Element, cw: i32, ch: i32) -> Element {
    e.w = e.w.clamp(1, cw);
    e.h = e.h.clamp(1, ch);
    e.x = e.x.clamp(0, cw - e.w);
    e.y = e.y.clamp(0, ch - e.h);
    e
}

fn jittered<R: Rng>(e: &Element, amp: i32, rng: &mut R, cw: i32, ch: i32) -> Element {
    if amp == 0 {
        return e.clone();
    }
    let mut j = || rng.random_range(-amp..=amp);
    let mut out = e.clone();
    out.x += j();
    out.y += j();
    out.w = (out.w + j()).max(8);
    out.h = (out.h + j()).max(8);
    clamp_into(out, cw, ch)
}

fn random_element<R: Rng>(rng: &mut R, palette: &Palette, cw: i32, ch: i32) -> Element {
    let class = palette.all.choose(rng).expect("non-empty registry").clone();
    let w = rng.random_range((cw / 4).max(1)..=cw);
    let h = rng.random_range(48.min(ch)..=(ch * 2 / 5).max(48.min(ch)));
    let x = rng.random_range(0..=cw - w);
    let y = rng.random_range(0..=ch - h);
    Element::new(class, x, y, w, h)
}

#[derive(Clone)]
struct Item {
    current: Option<Element>,
    target: Option<Element>,
}

struct OpenExperiment {
    item: usize,
    saved: Option<Element>,
}

/// Builds a trajectory whose affinity to the final layout is non-monotone:
/// a clean final design, a perturbed initial state, then a path mixing slow
/// corrections, experiments that are later reverted and closing alignment
/// passes.
pub fn synthesize_trajectory<R: Rng>(
    rng: &mut R,
    cfg: &SynthConfig,
    registry: &ClassRegistry,
    id: impl Into<String>,
) -> Result<RevisionTrajectory, SynthError> {
    cfg.validate()?;
    let palette = Palette::new(registry)?;
    let (cw, ch) = (cfg.canvas_w, cfg.canvas_h);
    let final_doc = final_layout(rng, cfg, &palette);
    let states_len = rng.random_range(cfg.states.0..=cfg.states.1);
    let n = states_len - 1;
    let s = cfg.noise;
    let amp0 = libm::round(cfg.jitter as f64 * s) as i32;
    let prob = |p: f64| (p * s).clamp(0.0, 1.0);

    let mut items: Vec<Item> = Vec::new();
    for e in &final_doc.elements {
        let current = if rng.random_bool(prob(cfg.drop_prob)) {
            None
        } else {
            let mut c = jittered(e, amp0, rng, cw, ch);
            if rng.random_bool(prob(cfg.swap_prob)) {
                c.class = palette.content.choose(rng).expect("palette").0.clone();
            }
            Some(c)
        };
        items.push(Item { current, target: Some(e.clone()) });
        if rng.random_bool(prob(cfg.dup_prob)) {
            items.push(Item { current: Some(jittered(e, amp0.max(8), rng, cw, ch)), target: None });
        }
    }

    let snapshot = |items: &[Item]| {
        LayoutDoc::with_elements(cw, ch, items.iter().filter_map(|i| i.current.clone()).collect())
    };
    let mut states = Vec::with_capacity(states_len);
    states.push(snapshot(&items));
    let mut open: Vec<OpenExperiment> = Vec::new();

    for t in 1..n {
        let p = t as f64 / n as f64;

        // Revert experiments.
        let settle = p >= cfg.settle_at;
        let mut still_open = Vec::new();
        for exp in open.drain(..) {
            if settle || rng.random_bool(cfg.revert_prob) {
                items[exp.item].current = exp.saved;
            } else {
                still_open.push(exp);
            }
        }
        open = still_open;

        // Open new experiments around the peak of the schedule.
        if !settle {
            let bump = (1.0 - libm::fabs(p - cfg.experiment_peak) / cfg.experiment_width).max(0.0);
            let lambda = cfg.experiment_rate * s * bump;
            let mut k = libm::floor(lambda) as usize;
            if rng.random_bool(lambda - libm::floor(lambda)) {
                k += 1;
            }
            for _ in 0..k {
                let busy = |i: usize| open.iter().any(|o| o.item == i);
                let candidates: Vec<usize> =
                    (0..items.len()).filter(|&i| items[i].current.is_some() && !busy(i)).collect();
                if rng.random_bool(0.5) || candidates.is_empty() {
                    items.push(Item { current: Some(random_element(rng, &palette, cw, ch)), target: None });
                    open.push(OpenExperiment { item: items.len() - 1, saved: None });
                } else {
                    let i = *candidates.choose(rng).expect("non-empty");
                    let saved = items[i].current.clone();
                    let mut moved = random_element(rng, &palette, cw, ch);
                    if rng.random_bool(0.5) {
                        moved.class = saved.as_ref().expect("present").class.clone();
                    }
                    items[i].current = Some(moved);
                    open.push(OpenExperiment { item: i, saved });
                }
            }
        }

        // Corrections toward the final layout, slow early, exact late.
        let pending: Vec<usize> = (0..items.len())
            .filter(|&i| items[i].current != items[i].target && !open.iter().any(|o| o.item == i))
            .collect();
        let exact = p >= cfg.align_at;
        let share = if exact { 0.5 } else { p * p };
        let count = libm::ceil(pending.len() as f64 * share) as usize;
        let amp = libm::round(cfg.jitter as f64 * s * (1.0 - p)) as i32;
        for &i in pending.choose_multiple(rng, count) {
            items[i].current = match &items[i].target {
                None => None,
                Some(target) if exact => Some(target.clone()),
                Some(target) => Some(jittered(target, amp, rng, cw, ch)),
            };
        }
        states.push(snapshot(&items));
    }
    if n >= 1 {
        states.push(final_doc);
    }

    let prompt = format!(
        "A {} app with {} and {}.",
        APPS.choose(rng).expect("apps"),
        FEATURES.choose(rng).expect("features"),
        FEATURES.choose(rng).expect("features"),
    );
    let traj = RevisionTrajectory::new(id, prompt, Source::Synthetic, states)
        .map_err(|e| SynthError::InvalidConfig(format!("generator produced an invalid state: {e}")))?;
    Ok(traj)
}

/// `count` trajectories with ids `synth-00000...`; trajectory `k` draws from
/// its own stream seeded by `(seed, k)`.
pub fn synthesize_corpus(
    count: usize,
    seed: u64,
    cfg: &SynthConfig,
    registry: &ClassRegistry,
) -> Result<Corpus, SynthError> {
    let trajectories = (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64, 0));
            synthesize_trajectory(&mut rng, cfg, registry, format!("synth-{k:05}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus::new(trajectories, Split::Train).expect("generated ids are unique"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageProfile {
    /// FID per stage bucket, from the `S0` bucket to the `Sn` bucket.
    pub bucket_fids: Vec<f64>,
    pub sample_counts: Vec<usize>,
    pub details: Vec<FidResult>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("bucket count must be positive")]
    ZeroBuckets,
    #[error("bucket {bucket} has {got} samples, need {need}")]
    TooFewSamples { bucket: usize, got: usize, need: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Bucket-wise FID of trajectory stages against the population of final
/// states. Each trajectory contributes one uniformly drawn state per bucket it
/// populates; trajectories shorter than `bucket_count` skip empty buckets.
pub fn stage_profile<R: Rng>(
    corpus: &Corpus,
    bucket_count: usize,
    rng: &mut R,
    registry: &ClassRegistry,
    embed_cfg: &EmbedConfig,
    fid_cfg: &FidConfig,
) -> Result<StageProfile, ProfileError> {
    if corpus.is_empty() {
        return Err(ProfileError::EmptyCorpus);
    }
    if bucket_count == 0 {
        return Err(ProfileError::ZeroBuckets);
    }
    let finals = corpus.finals();
    let reference = embed_all(&finals, registry, embed_cfg);
    let mut buckets: Vec<Vec<&LayoutDoc>> = (0..bucket_count).map(|_| Vec::new()).collect();
    for traj in corpus.trajectories() {
        let len = traj.states().len();
        for (b, bucket) in buckets.iter_mut().enumerate() {
            let range = bucket_range(b, len, bucket_count);
            if !range.is_empty() {
                bucket.push(&traj.states()[rng.random_range(range)]);
            }
        }
    }
    let mut profile = StageProfile { bucket_fids: Vec::new(), sample_counts: Vec::new(), details: Vec::new() };
    for (b, docs) in buckets.iter().enumerate() {
        if docs.len() < fid_cfg.min_samples.max(1) {
            return Err(ProfileError::TooFewSamples { bucket: b, got: docs.len(), need: fid_cfg.min_samples });
        }
        let feats = embed_all(docs.iter().copied(), registry, embed_cfg);
        let result = fid(&feats, &reference, fid_cfg)?;
        profile.bucket_fids.push(result.score);
        profile.sample_counts.push(docs.len());
        profile.details.push(result);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn reg() -> ClassRegistry {
        ClassRegistry::material_default()
    }

    #[test]
    fn bucket_ranges_partition_indices() {
        for states in 1..40 {
            for buckets in 1..8 {
                let mut covered = Vec::new();
                for b in 0..buckets {
                    for i in bucket_range(b, states, buckets) {
                        assert_eq!(bucket_of(i, states, buckets), b);
                        covered.push(i);
                    }
                }
                assert_eq!(covered, (0..states).collect::<Vec<_>>());
            }
        }
        // Ten states in five buckets: pairs.
        assert_eq!(bucket_range(2, 10, 5), 4..6);
    }

    #[test]
    fn trajectory_invariants() {
        let s = LayoutDoc::new(10, 10);
        assert_eq!(
            RevisionTrajectory::new("a", "p", Source::Human, vec![s.clone()]),
            Err(TrajectoryError::TooShort { id: "a".into(), got: 1 })
        );
        let bad = LayoutDoc::new(0, 10);
        assert_eq!(
            RevisionTrajectory::new("a", "p", Source::Human, vec![s.clone(), bad]),
            Err(TrajectoryError::InvalidState { id: "a".into(), index: 1 })
        );
        let t = RevisionTrajectory::new("a", "p", Source::Human, vec![s.clone(), s]).unwrap();
        assert_eq!(
            Corpus::new(vec![t.clone(), t], Split::Test),
            Err(TrajectoryError::DuplicateId("a".into()))
        );
    }

    #[test]
    fn degenerate_length_gives_initial_and_final() {
        let cfg = SynthConfig { states: (2, 2), ..SynthConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = synthesize_trajectory(&mut rng, &cfg, &reg(), "t").unwrap();
        assert_eq!(t.states().len(), 2);
        assert_eq!(t.last_index(), 1);
    }

    #[test]
    fn zero_noise_keeps_every_state_final() {
        let cfg = SynthConfig { noise: 0.0, ..SynthConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 0..20 {
            let t = synthesize_trajectory(&mut rng, &cfg, &reg(), format!("t{k}")).unwrap();
            assert!(t.states().iter().all(|s| s == t.final_state()));
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = synthesize_corpus(5, 11, &SynthConfig::default(), &reg()).unwrap();
        let b = synthesize_corpus(5, 11, &SynthConfig::default(), &reg()).unwrap();
        assert_eq!(a, b);
        let c = synthesize_corpus(5, 12, &SynthConfig::default(), &reg()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn finals_are_grid_aligned_and_valid() {
        let corpus = synthesize_corpus(50, 5, &SynthConfig::default(), &reg()).unwrap();
        for t in corpus.trajectories() {
            let cfg = SynthConfig::default();
            let n = t.final_state().elements.len();
            assert!(n >= 1 && n <= cfg.elements.1, "{n}");
            assert!(t.states().len() >= cfg.states.0 && t.states().len() <= cfg.states.1);
            for e in &t.final_state().elements {
                assert_eq!((e.x % 8, e.y % 8), (0, 0));
            }
            assert_ne!(t.initial(), t.final_state());
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SynthConfig { states: (1, 4), ..SynthConfig::default() },
            SynthConfig { states: (5, 4), ..SynthConfig::default() },
            SynthConfig { elements: (0, 4), ..SynthConfig::default() },
            SynthConfig { noise: -1.0, ..SynthConfig::default() },
            SynthConfig { revert_prob: 1.5, ..SynthConfig::default() },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for cfg in bad {
            assert!(matches!(
                synthesize_trajectory(&mut rng, &cfg, &reg(), "x"),
                Err(SynthError::InvalidConfig(_))
            ));
        }
        let tiny = ClassRegistry::new(vec![ElementClass { id: 0, name: "BUTTON".into() }]).unwrap();
        assert!(matches!(
            synthesize_trajectory(&mut rng, &SynthConfig::default(), &tiny, "x"),
            Err(SynthError::MissingClass(_))
        ));
    }

    #[test]
    fn profile_of_constant_corpus_is_zero() {
        let cfg = SynthConfig { noise: 0.0, ..SynthConfig::default() };
        let corpus = synthesize_corpus(64, 3, &cfg, &reg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = stage_profile(&corpus, 5, &mut rng, &reg(), &EmbedConfig::default(), &FidConfig::default()).unwrap();
        assert_eq!(p.bucket_fids.len(), 5);
        assert!(p.bucket_fids.iter().all(|f| *f < 1e-6), "{:?}", p.bucket_fids);
        assert_eq!(p.sample_counts, vec![64; 5]);
    }

    #[test]
    fn profile_errors() {
        let empty = Corpus::new(Vec::new(), Split::Train).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (r, e, f) = (reg(), EmbedConfig::default(), FidConfig::default());
        assert!(matches!(stage_profile(&empty, 5, &mut rng, &r, &e, &f), Err(ProfileError::EmptyCorpus)));
        let one = synthesize_corpus(1, 0, &SynthConfig::default(), &r).unwrap();
        assert!(matches!(
            stage_profile(&one, 5, &mut rng, &r, &e, &f),
            Err(ProfileError::TooFewSamples { bucket: 0, got: 1, need: 2 })
        ));
    }
}
