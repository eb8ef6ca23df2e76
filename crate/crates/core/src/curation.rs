//! Winner/loser labeling at a score threshold and preference pair emission.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fixed6;
use crate::trajectory::{DsrScoreReport, DsrType};

pub const DEFAULT_TAU_TRAIN: f64 = 0.7;
pub const DEFAULT_PAIR_CAP: usize = 16;

/// A scored sample. `score` is present exactly when the sample is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub sample_id: String,
    pub prompt_id: String,
    pub dsr_type: DsrType,
    score: Option<f64>,
}

impl ScoredSample {
    pub fn valid(
        sample_id: impl Into<String>,
        prompt_id: impl Into<String>,
        dsr_type: DsrType,
        score: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::OutOfRange(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            prompt_id: prompt_id.into(),
            dsr_type,
            score: Some(score),
        })
    }

    pub fn invalid(
        sample_id: impl Into<String>,
        prompt_id: impl Into<String>,
        dsr_type: DsrType,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            prompt_id: prompt_id.into(),
            dsr_type,
            score: None,
        }
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }

    pub fn is_valid(&self) -> bool {
        self.score.is_some()
    }
}

impl From<&DsrScoreReport> for ScoredSample {
    fn from(r: &DsrScoreReport) -> Self {
        Self {
            sample_id: r.sample_id.clone(),
            prompt_id: r.prompt_id.clone(),
            dsr_type: r.dsr_type,
            score: if r.valid { r.score() } else { None },
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("threshold {tau} outside [0, 1]")));
    }
    Ok(())
}

/// Winners and losers under one prompt, each sorted by sample id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptSplit {
    pub winners: Vec<ScoredSample>,
    pub losers: Vec<ScoredSample>,
}

/// Partitions valid samples per prompt: `score >= tau` wins, the rest lose.
/// Invalid samples land on neither side.
pub fn split_winners_losers(
    samples: &[ScoredSample],
    tau: f64,
) -> Result<BTreeMap<String, PromptSplit>> {
    check_tau(tau)?;
    let mut out: BTreeMap<String, PromptSplit> = BTreeMap::new();
    for s in samples {
        let entry = out.entry(s.prompt_id.clone()).or_default();
        match s.score {
            Some(score) if score >= tau => entry.winners.push(s.clone()),
            Some(_) => entry.losers.push(s.clone()),
            None => {}
        }
    }
    for split in out.values_mut() {
        split.winners.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        split.losers.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    AllCross,
    RandomK,
}

impl FromStr for PairStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_cross" => Ok(Self::AllCross),
            "random_k" => Ok(Self::RandomK),
            _ => Err(Error::InvalidConfig(format!("unknown pair strategy {s:?}"))),
        }
    }
}

impl fmt::Display for PairStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AllCross => "all_cross",
            Self::RandomK => "random_k",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub winner_id: String,
    pub loser_id: String,
    #[serde(serialize_with = "fixed6")]
    pub winner_score: f64,
    #[serde(serialize_with = "fixed6")]
    pub loser_score: f64,
}

// FNV-1a, so per-prompt streams do not depend on which other prompts exist.
fn prompt_seed(seed: u64, prompt_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in prompt_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}

/// Forms pairs for one prompt.
///
/// `AllCross` walks winners then losers in sample-id order and keeps the first
/// `cap`. `RandomK` draws `min(cap, |W|·|L|)` distinct pairs with a stream
/// derived from `seed` and the prompt id.
pub fn make_pairs(
    prompt_id: &str,
    split: &PromptSplit,
    strategy: PairStrategy,
    cap: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    if cap == 0 {
        return Err(Error::InvalidConfig("pair cap must be >= 1".into()));
    }
    let (nw, nl) = (split.winners.len(), split.losers.len());
    let total = nw * nl;
    if total == 0 {
        return Ok(Vec::new());
    }
    let mut picks: Vec<usize> = match strategy {
        PairStrategy::AllCross => (0..total.min(cap)).collect(),
        PairStrategy::RandomK => {
            let mut rng = ChaCha8Rng::seed_from_u64(prompt_seed(seed, prompt_id));
            index::sample(&mut rng, total, total.min(cap)).into_vec()
        }
    };
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|i| {
            let (w, l) = (&split.winners[i / nl], &split.losers[i % nl]);
            let (Some(ws), Some(ls)) = (w.score, l.score) else {
                return Err(Error::InvalidConfig("pairs require scored samples".into()));
            };
            Ok(PreferencePair {
                prompt_id: prompt_id.to_string(),
                winner_id: w.sample_id.clone(),
                loser_id: l.sample_id.clone(),
                winner_score: ws,
                loser_score: ls,
            })
        })
        .collect()
}

/// Pair manifest over every prompt, ordered by prompt then winner then loser.
pub fn pair_manifest(
    samples: &[ScoredSample],
    tau: f64,
    strategy: PairStrategy,
    cap: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    let splits = split_winners_losers(samples, tau)?;
    let mut out = Vec::new();
    for (prompt_id, split) in &splits {
        out.extend(make_pairs(prompt_id, split, strategy, cap, seed)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub n_total: usize,
    pub n_valid: usize,
    pub n_winner: usize,
    pub n_loser: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationSummary {
    pub tau_train: f64,
    pub n_total: usize,
    pub n_valid: usize,
    pub n_winner: usize,
    pub n_loser: usize,
    pub n_prompts: usize,
    pub n_prompts_with_pairs: usize,
    pub per_dsr_type: BTreeMap<DsrType, TypeCounts>,
}

pub fn curation_summary(samples: &[ScoredSample], tau: f64) -> Result<CurationSummary> {
    check_tau(tau)?;
    let mut per_type: BTreeMap<DsrType, TypeCounts> =
        DsrType::ALL.into_iter().map(|t| (t, TypeCounts::default())).collect();
    for s in samples {
        let c = per_type.entry(s.dsr_type).or_default();
        c.n_total += 1;
        if let Some(score) = s.score {
            c.n_valid += 1;
            if score >= tau {
                c.n_winner += 1;
            } else {
                c.n_loser += 1;
            }
        }
    }
    let splits = split_winners_losers(samples, tau)?;
    let sum = |f: fn(&TypeCounts) -> usize| per_type.values().map(f).sum::<usize>();
    Ok(CurationSummary {
        tau_train: tau,
        n_total: sum(|c| c.n_total),
        n_valid: sum(|c| c.n_valid),
        n_winner: sum(|c| c.n_winner),
        n_loser: sum(|c| c.n_loser),
        n_prompts: splits.len(),
        n_prompts_with_pairs: splits
            .values()
            .filter(|s| !s.winners.is_empty() && !s.losers.is_empty())
            .count(),
        per_dsr_type: per_type,
    })
}
