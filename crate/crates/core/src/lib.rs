//! Core of the layout revision engine.
//!
//! Everything here is pure and `no_std` (with `alloc`): the design-code DSL,
//! wireframe rendering, revision trajectories and their synthesis, training
//! example samplers, prompt construction, reviser backends that need no IO,
//! evaluation metrics and the multi-round revision loop. File formats, PNG
//! encoding, the remote backend client, the CLI and the HTTP service live in
//! the `layrev` crate.

#![no_std]

extern crate alloc;

pub mod backend;
pub mod layout;
pub mod metrics;
pub mod orchestrator;
pub mod prompt;
pub mod render;
pub mod sampler;
pub mod seed;
pub mod trajectory;

pub use layout::{
    parse_layout_code, parse_layout_lenient, parse_layout_raw, serialize_layout_code, token_count,
    validate_layout, ClassRegistry, Element, ElementClass, LayoutDoc, ParseError, ValidationReport,
};
pub use render::{render, render_clipped, Bitmap, ColorLegend, Rgb};
pub use backend::{EchoReviser, GenerationResult, HeuristicReviser, ReviserBackend};
pub use orchestrator::{run_chain, run_chain_with_human, ChainConfig, ChainReport, SessionState};
pub use prompt::{build_direct_prompt, build_revision_prompt, render_prompt_text, ModelSetup, PromptBundle};
pub use trajectory::{Corpus, RevisionTrajectory};
