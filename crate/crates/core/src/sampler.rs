//! Training-example construction over revision trajectories.
//!
//! Each strategy picks input state indices and a target index from a
//! trajectory `S0..Sn`:
//!
//! * direct: `S0` (or a uniformly drawn `Si`, `i < n`) to `Sn`;
//! * hop, j-then-i: `j` from a Gaussian near `0.9 n`, then `i` uniform in `[0, j)`;
//! * hop, quantized: `i` and `j` from two different stage buckets, `i < j`;
//! * single revision: `(S0, Si)` with `Si` an intermediate state, to `Sn`;
//! * multi revision: `S0` plus a sorted subset of intermediates of size
//!   uniform in `[0, 20]`, to `Sn`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::derive_seed;
use crate::trajectory::{bucket_range, Corpus, RevisionTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    DirectS0,
    DirectSi,
    Hop,
    SingleRev,
    MultiRev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Direct,
    DirectSi,
    HopJti,
    HopQuant,
    Single,
    Multi,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Direct,
        Strategy::DirectSi,
        Strategy::HopJti,
        Strategy::HopQuant,
        Strategy::Single,
        Strategy::Multi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::DirectSi => "direct-si",
            Strategy::HopJti => "hop-jti",
            Strategy::HopQuant => "hop-quant",
            Strategy::Single => "single",
            Strategy::Multi => "multi",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub setup: Setup,
    pub trajectory_id: String,
    pub input_indices: Vec<usize>,
    pub target_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub repeats: usize,
    pub gaussian_center_quantile: f64,
    pub gaussian_sigma_fraction: f64,
    pub bucket_count: usize,
    pub multi_rev_max: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Direct,
            repeats: 10,
            gaussian_center_quantile: 0.9,
            gaussian_sigma_fraction: 0.05,
            bucket_count: 5,
            multi_rev_max: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("trajectory {id} has {states} states, fewer than {buckets} buckets")]
    TooShortForBuckets { id: String, states: usize, buckets: usize },
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if !(self.gaussian_center_quantile > 0.0 && self.gaussian_center_quantile <= 1.0) {
            return Err(SampleError::InvalidConfig(format!(
                "center quantile {} outside (0, 1]",
                self.gaussian_center_quantile
            )));
        }
        if !(self.gaussian_sigma_fraction > 0.0 && self.gaussian_sigma_fraction.is_finite()) {
            return Err(SampleError::InvalidConfig("sigma fraction must be positive".into()));
        }
        if self.bucket_count < 2 {
            return Err(SampleError::InvalidConfig("need at least 2 buckets".into()));
        }
        Ok(())
    }
}

/// Input index for the direct setups over a trajectory with last index `n`.
pub fn direct_index<R: Rng>(n: usize, rng: &mut R, use_intermediate: bool) -> usize {
    if use_intermediate {
        rng.random_range(0..n)
    } else {
        0
    }
}

/// `(i, j)` with `j = clamp(round(N(q n, (s n)^2)), 1, n)` and `i ~ U[0, j)`.
pub fn hop_j_then_i<R: Rng>(n: usize, rng: &mut R, cfg: &SamplerConfig) -> (usize, usize) {
    debug_assert!(n >= 1);
    let mean = cfg.gaussian_center_quantile * n as f64;
    let sigma = cfg.gaussian_sigma_fraction * n as f64;
    let draw = Normal::new(mean, sigma).map(|d| d.sample(rng)).unwrap_or(mean);
    let j = (libm::round(draw).max(1.0) as usize).min(n);
    let i = rng.random_range(0..j);
    (i, j)
}

/// `(i, j)` from two different stage buckets `b_i < b_j`, the bucket pair
/// uniform over all such pairs.
pub fn hop_quantized<R: Rng>(n: usize, rng: &mut R, buckets: usize) -> Option<(usize, usize)> {
    let states = n + 1;
    if states < buckets || buckets < 2 {
        return None;
    }
    let pair = rng.random_range(0..buckets * (buckets - 1) / 2);
    let (mut bi, mut rest) = (0, pair);
    while rest >= buckets - 1 - bi {
        rest -= buckets - 1 - bi;
        bi += 1;
    }
    let bj = bi + 1 + rest;
    let i = rng.random_range(bucket_range(bi, states, buckets));
    let j = rng.random_range(bucket_range(bj, states, buckets));
    Some((i, j))
}

/// Intermediate revision index: uniform in `[1, n-1]`, or 0 (a duplicated
/// `S0`) when the trajectory has no intermediates.
pub fn single_revision_index<R: Rng>(n: usize, rng: &mut R) -> usize {
    if n >= 2 {
        rng.random_range(1..n)
    } else {
        0
    }
}

/// Sorted, distinct intermediate indices; the subset size is uniform in
/// `[0, min(max, n-1)]`.
pub fn multi_revision_indices<R: Rng>(n: usize, rng: &mut R, max: usize) -> Vec<usize> {
    let pool = n.saturating_sub(1);
    let k = rng.random_range(0..=max.min(pool));
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool, k).into_iter().map(|i| i + 1).collect();
    picked.sort_unstable();
    picked
}

fn example(traj: &RevisionTrajectory, setup: Setup, input_indices: Vec<usize>, target_index: usize) -> TrainingExample {
    TrainingExample { setup, trajectory_id: traj.id.clone(), input_indices, target_index }
}

pub fn sample_direct<R: Rng>(traj: &RevisionTrajectory, rng: &mut R, use_intermediate: bool) -> TrainingExample {
    let n = traj.last_index();
    let setup = if use_intermediate { Setup::DirectSi } else { Setup::DirectS0 };
    example(traj, setup, vec![direct_index(n, rng, use_intermediate)], n)
}

pub fn sample_hop_j_then_i<R: Rng>(traj: &RevisionTrajectory, rng: &mut R, cfg: &SamplerConfig) -> TrainingExample {
    let (i, j) = hop_j_then_i(traj.last_index(), rng, cfg);
    example(traj, Setup::Hop, vec![i], j)
}

pub fn sample_hop_quantized<R: Rng>(
    traj: &RevisionTrajectory,
    rng: &mut R,
    cfg: &SamplerConfig,
) -> Result<TrainingExample, SampleError> {
    let (i, j) = hop_quantized(traj.last_index(), rng, cfg.bucket_count).ok_or_else(|| {
        SampleError::TooShortForBuckets { id: traj.id.clone(), states: traj.states().len(), buckets: cfg.bucket_count }
    })?;
    Ok(example(traj, Setup::Hop, vec![i], j))
}

pub fn sample_single_revision<R: Rng>(traj: &RevisionTrajectory, rng: &mut R) -> TrainingExample {
    let n = traj.last_index();
    example(traj, Setup::SingleRev, vec![0, single_revision_index(n, rng)], n)
}

pub fn sample_multi_revision<R: Rng>(traj: &RevisionTrajectory, rng: &mut R, cfg: &SamplerConfig) -> TrainingExample {
    let n = traj.last_index();
    let mut input = vec![0];
    input.extend(multi_revision_indices(n, rng, cfg.multi_rev_max));
    example(traj, Setup::MultiRev, input, n)
}

pub fn sample<R: Rng>(traj: &RevisionTrajectory, rng: &mut R, cfg: &SamplerConfig) -> Result<TrainingExample, SampleError> {
    Ok(match cfg.strategy {
        Strategy::Direct => sample_direct(traj, rng, false),
        Strategy::DirectSi => sample_direct(traj, rng, true),
        Strategy::HopJti => sample_hop_j_then_i(traj, rng, cfg),
        Strategy::HopQuant => sample_hop_quantized(traj, rng, cfg)?,
        Strategy::Single => sample_single_revision(traj, rng),
        Strategy::Multi => sample_multi_revision(traj, rng, cfg),
    })
}

/// `repeats` examples per trajectory, trajectory-major. Example `(t, r)` uses
/// its own stream derived from `(seed, t, r)`.
pub fn expand_corpus(corpus: &Corpus, cfg: &SamplerConfig) -> Result<Vec<TrainingExample>, SampleError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(SampleError::EmptyCorpus);
    }
    let mut out = Vec::with_capacity(corpus.len() * cfg.repeats);
    for (t, traj) in corpus.trajectories().iter().enumerate() {
        for r in 0..cfg.repeats {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64, r as u64));
            out.push(sample(traj, &mut rng, cfg)?);
        }
    }
    Ok(out)
}

/// Checks an example against its setup's index contract.
pub fn satisfies_contract(ex: &TrainingExample, n: usize) -> bool {
    let in_range = ex.target_index <= n && ex.input_indices.iter().all(|&i| i <= n);
    in_range
        && match ex.setup {
            Setup::DirectS0 => ex.input_indices == [0] && ex.target_index == n,
            Setup::DirectSi => ex.input_indices.len() == 1 && ex.input_indices[0] < n.max(1) && ex.target_index == n,
            Setup::Hop => ex.input_indices.len() == 1 && ex.input_indices[0] < ex.target_index,
            Setup::SingleRev => {
                ex.target_index == n
                    && ex.input_indices.len() == 2
                    && ex.input_indices[0] == 0
                    && (if n >= 2 { (1..n).contains(&ex.input_indices[1]) } else { ex.input_indices[1] == 0 })
            }
            Setup::MultiRev => {
                ex.target_index == n
                    && ex.input_indices.first() == Some(&0)
                    && ex.input_indices[1..].iter().all(|&i| i >= 1 && i < n)
                    && ex.input_indices.windows(2).all(|w| w[0] < w[1])
            }
        }
}
