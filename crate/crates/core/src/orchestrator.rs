//! Inference protocols: one-shot revision, guided revision, iterative
//! self-revision chains with optional human edits, and echo detection.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationResult, ReviserBackend};
use crate::layout::{validate_layout, ClassRegistry, LayoutDoc, Violation};
use crate::metrics::{fid_layouts, text_metrics, EmbedConfig, FidConfig, FidResult, MetricError, TextMetrics};
use crate::prompt::{
    build_direct_prompt, build_revision_prompt, DecodingParams, ModelSetup, PromptBundle, PromptError, PromptOptions,
};

pub const MULTI_REVISION_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error("layout is invalid: {}", .0.first().map(|v| v.message.as_str()).unwrap_or("?"))]
    InvalidLayout(Vec<Violation>),
    #[error("guided revision needs at least one edit")]
    NoEdits,
    #[error("chain needs at least one round")]
    ZeroRounds,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend {backend} failed: {source}")]
    Backend { backend: String, source: BackendError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub rounds: usize,
    pub setup: ModelSetup,
    pub temperature: f64,
    pub max_tokens: usize,
    pub echo_rouge_threshold: f64,
    pub echo_window: usize,
    pub fix_typos: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            setup: ModelSetup::SingleRevision,
            temperature: 0.0,
            max_tokens: 400,
            echo_rouge_threshold: 99.0,
            echo_window: 1,
            fix_typos: false,
        }
    }
}

impl ChainConfig {
    pub fn prompt_options(&self) -> PromptOptions {
        PromptOptions {
            fix_typos: self.fix_typos,
            decoding: DecodingParams { max_tokens: self.max_tokens, temperature: self.temperature },
        }
    }
}

fn check_valid(doc: &LayoutDoc) -> Result<(), OrchestratorError> {
    let report = validate_layout(doc);
    if report.ok {
        Ok(())
    } else {
        Err(OrchestratorError::InvalidLayout(report.violations))
    }
}

fn call(backend: &dyn ReviserBackend, bundle: &PromptBundle) -> Result<GenerationResult, OrchestratorError> {
    backend.revise(bundle).map_err(|source| OrchestratorError::Backend { backend: backend.name().into(), source })
}

/// Prompt for one round: Direct/Hop see only the working state; revision
/// setups see `S0` and the edit list (the latest edit only for single).
pub fn setup_prompt(
    setup: ModelSetup,
    prompt: &str,
    s0: &LayoutDoc,
    edits: &[LayoutDoc],
    opts: &PromptOptions,
) -> Result<PromptBundle, OrchestratorError> {
    let last = edits.last().ok_or(OrchestratorError::NoEdits)?;
    let bundle = match setup {
        ModelSetup::Direct | ModelSetup::Hop => build_direct_prompt(prompt, last, opts)?,
        ModelSetup::SingleRevision => build_revision_prompt(setup, prompt, s0, core::slice::from_ref(last), opts)?,
        ModelSetup::MultiRevision => {
            let start = edits.len().saturating_sub(MULTI_REVISION_CAP);
            build_revision_prompt(setup, prompt, s0, &edits[start..], opts)?
        }
    };
    Ok(bundle)
}

/// `f(S0)`; revision setups get `S0` duplicated into the edit slot.
pub fn direct_infer(
    backend: &dyn ReviserBackend,
    prompt: &str,
    s0: &LayoutDoc,
    setup: ModelSetup,
    opts: &PromptOptions,
) -> Result<GenerationResult, OrchestratorError> {
    check_valid(s0)?;
    let bundle = setup_prompt(setup, prompt, s0, core::slice::from_ref(s0), opts)?;
    call(backend, &bundle)
}

/// `f(S0, edits)` with externally supplied edits.
pub fn guided_infer(
    backend: &dyn ReviserBackend,
    prompt: &str,
    s0: &LayoutDoc,
    edits: &[LayoutDoc],
    setup: ModelSetup,
    opts: &PromptOptions,
) -> Result<GenerationResult, OrchestratorError> {
    check_valid(s0)?;
    if edits.is_empty() {
        return Err(OrchestratorError::NoEdits);
    }
    for e in edits {
        check_valid(e)?;
    }
    let bundle = setup_prompt(setup, prompt, s0, edits, opts)?;
    call(backend, &bundle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    SelfRevision,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    EchoFlagged,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub kind: RoundKind,
    /// Code parts of the prompt, in order.
    pub input_codes: Vec<String>,
    pub result: GenerationResult,
    /// Output against the previous round's output (`S0` for round 1).
    pub metrics: TextMetrics,
}

impl RoundRecord {
    pub fn output(&self) -> &LayoutDoc {
        &self.result.layout
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanInjection {
    pub round: usize,
    pub layout: LayoutDoc,
}

/// A chain in progress. Rounds are append-only and the echo flag, once set,
/// stays set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub prompt: String,
    pub s0: LayoutDoc,
    pub config: ChainConfig,
    pub rounds: Vec<RoundRecord>,
    pub human_injections: Vec<HumanInjection>,
    /// Revision list fed to the next round: starts with `S0` (or the first
    /// human edit) and accumulates outputs and edits, most recent last.
    pub revisions: Vec<LayoutDoc>,
    pub echo_flagged_at: Option<usize>,
    pub echo_streak: usize,
    pub closed: bool,
}

impl SessionState {
    pub fn new(
        id: impl Into<String>,
        prompt: impl Into<String>,
        s0: LayoutDoc,
        config: ChainConfig,
    ) -> Result<Self, OrchestratorError> {
        check_valid(&s0)?;
        Ok(Self {
            id: id.into(),
            prompt: prompt.into(),
            s0,
            config,
            rounds: Vec::new(),
            human_injections: Vec::new(),
            revisions: Vec::new(),
            echo_flagged_at: None,
            echo_streak: 0,
            closed: false,
        })
    }

    pub fn status(&self) -> SessionStatus {
        if self.closed {
            SessionStatus::Done
        } else if self.echo_flagged_at.is_some() {
            SessionStatus::EchoFlagged
        } else {
            SessionStatus::Active
        }
    }

    pub fn latest(&self) -> &LayoutDoc {
        self.rounds.last().map(|r| r.output()).unwrap_or(&self.s0)
    }

    fn push_revision(&mut self, doc: LayoutDoc) {
        self.revisions.push(doc);
        if self.revisions.len() > MULTI_REVISION_CAP {
            self.revisions.remove(0);
        }
    }

    /// The prompt the next self-revision round would send.
    pub fn next_prompt(&self) -> Result<PromptBundle, OrchestratorError> {
        let mut edits = self.revisions.clone();
        if edits.is_empty() {
            edits.push(self.s0.clone());
        }
        setup_prompt(self.config.setup, &self.prompt, &self.s0, &edits, &self.config.prompt_options())
    }

    fn run_round(
        &mut self,
        backend: &dyn ReviserBackend,
        kind: RoundKind,
        bundle: PromptBundle,
    ) -> Result<&RoundRecord, OrchestratorError> {
        let result = call(backend, &bundle)?;
        let round = self.rounds.len() + 1;
        let metrics = text_metrics(&self.latest().to_code(), &result.canonical_code());
        match kind {
            RoundKind::Human => self.echo_streak = 0,
            RoundKind::SelfRevision if round >= 2 && metrics.rouge_l_f1 >= self.config.echo_rouge_threshold => {
                self.echo_streak += 1;
                if self.echo_streak >= self.config.echo_window.max(1) && self.echo_flagged_at.is_none() {
                    self.echo_flagged_at = Some(round);
                }
            }
            RoundKind::SelfRevision => self.echo_streak = 0,
        }
        self.push_revision(result.layout.clone());
        let input_codes = bundle.code_parts().map(String::from).collect();
        self.rounds.push(RoundRecord { round, kind, input_codes, result, metrics });
        Ok(self.rounds.last().expect("just pushed"))
    }

    /// One self-revision round on the current revision list.
    pub fn self_revise(&mut self, backend: &dyn ReviserBackend) -> Result<&RoundRecord, OrchestratorError> {
        let bundle = self.next_prompt()?;
        if self.revisions.is_empty() {
            self.push_revision(self.s0.clone());
        }
        self.run_round(backend, RoundKind::SelfRevision, bundle)
    }

    /// Records a human edit and runs a guided round with it as the latest revision.
    pub fn human_revise(
        &mut self,
        backend: &dyn ReviserBackend,
        edit: LayoutDoc,
    ) -> Result<&RoundRecord, OrchestratorError> {
        check_valid(&edit)?;
        let mut edits = self.revisions.clone();
        edits.push(edit.clone());
        let bundle = setup_prompt(self.config.setup, &self.prompt, &self.s0, &edits, &self.config.prompt_options())?;
        let round = self.rounds.len() + 1;
        self.push_revision(edit.clone());
        self.human_injections.push(HumanInjection { round, layout: edit });
        match self.run_round(backend, RoundKind::Human, bundle) {
            Ok(_) => Ok(self.rounds.last().expect("just pushed")),
            Err(e) => {
                self.revisions.pop();
                self.human_injections.pop();
                Err(e)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub trajectory_id: Option<String>,
    pub state: SessionState,
}

impl ChainReport {
    pub fn round(&self, r: usize) -> Option<&RoundRecord> {
        self.state.rounds.get(r.checked_sub(1)?)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("chain stopped after {} rounds: {error}", partial.state.rounds.len())]
pub struct ChainAbort {
    pub error: OrchestratorError,
    pub partial: Box<ChainReport>,
}

fn chain(
    backend: &dyn ReviserBackend,
    prompt: &str,
    s0: &LayoutDoc,
    human_edit: Option<&LayoutDoc>,
    cfg: &ChainConfig,
) -> Result<ChainReport, ChainAbort> {
    let abort = |error, state: Option<SessionState>| ChainAbort {
        error,
        partial: Box::new(ChainReport {
            trajectory_id: None,
            state: state.unwrap_or_else(|| SessionState {
                id: String::new(),
                prompt: prompt.into(),
                s0: s0.clone(),
                config: *cfg,
                rounds: Vec::new(),
                human_injections: Vec::new(),
                revisions: Vec::new(),
                echo_flagged_at: None,
                echo_streak: 0,
                closed: false,
            }),
        }),
    };
    if cfg.rounds == 0 {
        return Err(abort(OrchestratorError::ZeroRounds, None));
    }
    let mut state = SessionState::new("", prompt, s0.clone(), *cfg).map_err(|e| abort(e, None))?;
    for r in 1..=cfg.rounds {
        let step = match (r, human_edit) {
            (1, Some(edit)) => state.human_revise(backend, edit.clone()).map(|_| ()),
            _ => state.self_revise(backend).map(|_| ()),
        };
        if let Err(e) = step {
            return Err(abort(e, Some(state)));
        }
    }
    state.closed = true;
    Ok(ChainReport { trajectory_id: None, state })
}

/// `cfg.rounds` self-revision rounds starting from `S0`.
pub fn run_chain(
    backend: &dyn ReviserBackend,
    prompt: &str,
    s0: &LayoutDoc,
    cfg: &ChainConfig,
) -> Result<ChainReport, ChainAbort> {
    chain(backend, prompt, s0, None, cfg)
}

/// Round 1 is guided by `human_edit`; later rounds self-revise with the edit
/// kept in the revision list.
pub fn run_chain_with_human(
    backend: &dyn ReviserBackend,
    prompt: &str,
    s0: &LayoutDoc,
    human_edit: &LayoutDoc,
    cfg: &ChainConfig,
) -> Result<ChainReport, ChainAbort> {
    chain(backend, prompt, s0, Some(human_edit), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub sessions: usize,
    pub fid: FidResult,
    /// Percentage of outputs identical to the previous round's.
    pub identical_rate: f64,
    pub mean_rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no reports to evaluate")]
    NoReports,
    #[error("round {round}: {source}")]
    Metric { round: usize, source: MetricError },
}

fn subsample<'a, R: Rng>(docs: Vec<&'a LayoutDoc>, size: usize, rng: &mut R) -> Vec<LayoutDoc> {
    if docs.len() <= size {
        docs.into_iter().cloned().collect()
    } else {
        docs.choose_multiple(rng, size).map(|d| (*d).clone()).collect()
    }
}

/// Per-round FID against the reference population plus mean identical rate
/// and ROUGE-L. Populations larger than `fid_cfg.sample_size` are subsampled.
pub fn evaluate_run<R: Rng>(
    reports: &[ChainReport],
    reference: &[LayoutDoc],
    registry: &ClassRegistry,
    embed_cfg: &EmbedConfig,
    fid_cfg: &FidConfig,
    rng: &mut R,
) -> Result<Vec<RoundSummary>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut per_round: BTreeMap<usize, Vec<&RoundRecord>> = BTreeMap::new();
    for report in reports {
        for rec in &report.state.rounds {
            per_round.entry(rec.round).or_default().push(rec);
        }
    }
    let reference = subsample(reference.iter().collect(), fid_cfg.sample_size, rng);
    let mut out = Vec::with_capacity(per_round.len());
    for (round, recs) in per_round {
        let outputs = subsample(recs.iter().map(|r| r.output()).collect(), fid_cfg.sample_size, rng);
        let fid = fid_layouts(&outputs, &reference, registry, embed_cfg, fid_cfg)
            .map_err(|source| EvalError::Metric { round, source })?;
        let n = recs.len() as f64;
        let identical_rate = 100.0 * recs.iter().filter(|r| r.metrics.identical).count() as f64 / n;
        let mean_rouge_l = recs.iter().map(|r| r.metrics.rouge_l_f1).sum::<f64>() / n;
        out.push(RoundSummary { round, sessions: recs.len(), fid, identical_rate, mean_rouge_l });
    }
    Ok(out)
}
