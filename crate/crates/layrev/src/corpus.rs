//! JSON-lines corpus and training-example files.
//!
//! One trajectory per line: `{"id", "prompt", "source", "states": [dsl, ...]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use layrev_core::layout::{parse_layout_code, ClassRegistry};
use layrev_core::sampler::TrainingExample;
use layrev_core::trajectory::{Corpus, RevisionTrajectory, Source, Split};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("line {line}, state {state}: {message}")]
    State { line: usize, state: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] layrev_core::trajectory::TrajectoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub prompt: String,
    pub source: Source,
    pub states: Vec<String>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(t: &RevisionTrajectory) -> Self {
        Self {
            id: t.id.clone(),
            prompt: t.prompt.clone(),
            source: t.source,
            states: t.states().iter().map(|s| s.to_code()).collect(),
        }
    }

    fn into_trajectory(self, line: usize, registry: &ClassRegistry) -> Result<RevisionTrajectory, CorpusError> {
        let states = self
            .states
            .iter()
            .enumerate()
            .map(|(state, dsl)| {
                parse_layout_code(dsl, registry).map_err(|e| CorpusError::State { line, state, message: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        RevisionTrajectory::new(self.id, self.prompt, self.source, states)
            .map_err(|e| CorpusError::Record { line, message: e.to_string() })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

pub fn read_corpus<R: BufRead>(reader: R, registry: &ClassRegistry, split: Split) -> Result<Corpus, CorpusError> {
    let mut trajectories = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Record { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Record { line: line_no, message: e.to_string() })?;
        trajectories.push(record.into_trajectory(line_no, registry)?);
    }
    Ok(Corpus::new(trajectories, split)?)
}

pub fn write_corpus<W: Write>(mut writer: W, corpus: &Corpus) -> std::io::Result<()> {
    for t in corpus.trajectories() {
        serde_json::to_writer(&mut writer, &TrajectoryRecord::from_trajectory(t))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn load_corpus(path: &Path, registry: &ClassRegistry, split: Split) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_corpus(BufReader::new(file), registry, split)
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_corpus(BufWriter::new(file), corpus).map_err(io_err(path))
}

/// Any serializable records, one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut writer: W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Record { line: idx + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Record { line: idx + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn save_examples(path: &Path, examples: &[TrainingExample]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_jsonl(BufWriter::new(file), examples).map_err(io_err(path))
}
