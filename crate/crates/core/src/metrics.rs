//! Evaluation metrics: correctness at a threshold and its curve, identity
//! consistency over per-frame crop embeddings, yes/no answer binning against
//! relation scores, and group similarity of cross-attention maps.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curation::ScoredSample;
use crate::error::{Error, Result};

/// Fraction of all samples that are valid and score at least `tau`.
/// Invalid samples stay in the denominator, so `tau = 0` gives the valid fraction.
pub fn correctness_at(samples: &[ScoredSample], tau: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("correctness over zero samples".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("threshold {tau} outside [0, 1]")));
    }
    let hits = samples
        .iter()
        .filter(|s| s.score().is_some_and(|v| v >= tau))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

pub fn correctness_curve(samples: &[ScoredSample], grid: &[f64]) -> Result<CorrectnessCurve> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("correctness over zero samples".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("threshold grid must be strictly ascending".into()));
    }
    let fractions = grid
        .iter()
        .map(|&t| correctness_at(samples, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrectnessCurve {
        thresholds: grid.to_vec(),
        fractions,
    })
}

/// Uniform threshold grid from `lo` to `hi` that always contains both ends.
///
/// Values are computed as `lo + i * step` and rounded to 9 decimals so that
/// grids like `0:1:0.05` print cleanly.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "bad grid {lo}:{hi}:{step} (need lo <= hi, step > 0)"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
        .collect();
    if let Some(&last) = grid.last() {
        if hi - last > 1e-9 {
            grid.push(hi);
        } else {
            *grid.last_mut().unwrap() = hi;
        }
    }
    Ok(grid)
}

/// Per-frame embedding vectors of one animal crop track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct EmbeddingSequence(Vec<Vec<f64>>);

impl EmbeddingSequence {
    pub fn new(frames: Vec<Vec<f64>>) -> Result<Self> {
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        if frames.is_empty() || dim == 0 {
            return Err(Error::EmptyInput("embedding sequence needs d >= 1".into()));
        }
        if let Some(i) = frames.iter().position(|f| f.len() != dim) {
            return Err(Error::ShapeMismatch(format!(
                "frame {i} has dimension {} but frame 0 has {dim}",
                frames[i].len()
            )));
        }
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("embedding contains a non-finite value".into()));
        }
        Ok(Self(frames))
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.0
    }
}

impl TryFrom<Vec<Vec<f64>>> for EmbeddingSequence {
    type Error = Error;

    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EmbeddingSequence> for Vec<Vec<f64>> {
    fn from(e: EmbeddingSequence) -> Self {
        e.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (norm(a) * norm(b))).clamp(-1.0, 1.0)
}

/// Mean over frames 2..N of the average of the cosine to the first frame and
/// the cosine to the previous frame.
pub fn id_consistency(seq: &EmbeddingSequence) -> Result<f64> {
    let z = seq.frames();
    if z.len() < 2 {
        return Err(Error::EmptyInput("identity consistency needs >= 2 frames".into()));
    }
    if let Some(i) = z.iter().position(|v| norm(v) == 0.0) {
        return Err(Error::Degenerate(format!("frame {i} embedding is the zero vector")));
    }
    let total: f64 = (1..z.len())
        .map(|i| 0.5 * (cosine(&z[i], &z[0]) + cosine(&z[i], &z[i - 1])))
        .sum();
    Ok(total / (z.len() - 1) as f64)
}

/// One bin of the yes/no answer histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub yes: usize,
    /// `None` for empty bins.
    pub yes_fraction: Option<f64>,
}

impl AnswerBin {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn no(&self) -> usize {
        self.count - self.yes
    }
}

/// Uniform bin edges over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || lo.partial_cmp(&hi) != Some(Ordering::Less) {
        return Err(Error::InvalidConfig(format!(
            "need bins >= 1 and lo < hi (got {bins} bins over [{lo}, {hi}])"
        )));
    }
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    edges[bins] = hi;
    Ok(edges)
}

/// Buckets `(score, answered_yes)` pairs into half-open bins `[e_k, e_k+1)`;
/// the last bin is closed on the right.
pub fn answer_score_bins(pairs: &[(f64, bool)], edges: &[f64]) -> Result<Vec<AnswerBin>> {
    if edges.len() < 2 {
        return Err(Error::InvalidConfig("need at least two bin edges".into()));
    }
    if edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(Error::InvalidConfig("bin edges must be strictly ascending".into()));
    }
    let mut bins: Vec<AnswerBin> = edges
        .windows(2)
        .map(|w| AnswerBin {
            lo: w[0],
            hi: w[1],
            count: 0,
            yes: 0,
            yes_fraction: None,
        })
        .collect();
    let (first, last) = (edges[0], edges[edges.len() - 1]);
    for &(score, yes) in pairs {
        if !(first..=last).contains(&score) {
            return Err(Error::OutOfRange(format!(
                "score {score} outside bin range [{first}, {last}]"
            )));
        }
        // index of the last edge <= score, capped at the final bin
        let k = edges.partition_point(|&e| e <= score).saturating_sub(1).min(bins.len() - 1);
        bins[k].count += 1;
        if yes {
            bins[k].yes += 1;
        }
    }
    for b in &mut bins {
        if b.count > 0 {
            b.yes_fraction = Some(b.yes as f64 / b.count as f64);
        }
    }
    Ok(bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenGroup {
    Animal,
    Object,
    InitialSsr,
    FinalSsr,
    Other,
}

impl TokenGroup {
    pub const ALL: [TokenGroup; 5] = [
        Self::Animal,
        Self::Object,
        Self::InitialSsr,
        Self::FinalSsr,
        Self::Other,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Animal => "animal",
            Self::Object => "object",
            Self::InitialSsr => "initial_ssr",
            Self::FinalSsr => "final_ssr",
            Self::Other => "other",
        }
    }
}

impl fmt::Display for TokenGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for TokenGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.tag() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown token group {s:?}")))
    }
}

/// Cross-attention activations (tokens x latent positions) with a group per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAttention")]
pub struct AttentionGroups {
    activations: Vec<Vec<f64>>,
    labels: Vec<TokenGroup>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttention {
    activations: Vec<Vec<f64>>,
    labels: Vec<TokenGroup>,
}

impl TryFrom<RawAttention> for AttentionGroups {
    type Error = Error;

    fn try_from(r: RawAttention) -> Result<Self> {
        Self::new(r.activations, r.labels)
    }
}

impl AttentionGroups {
    pub fn new(activations: Vec<Vec<f64>>, labels: Vec<TokenGroup>) -> Result<Self> {
        if activations.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} activation rows but {} labels",
                activations.len(),
                labels.len()
            )));
        }
        let width = activations.first().map(Vec::len).unwrap_or(0);
        if activations.is_empty() || width == 0 {
            return Err(Error::EmptyInput("attention map has no tokens or positions".into()));
        }
        if activations.iter().any(|r| r.len() != width) {
            return Err(Error::ShapeMismatch("activation rows differ in length".into()));
        }
        if activations.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("activation map contains a non-finite value".into()));
        }
        Ok(Self { activations, labels })
    }

    fn group_mean(&self, g: TokenGroup) -> Option<Vec<f64>> {
        let rows: Vec<&Vec<f64>> = self
            .activations
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == g)
            .map(|(r, _)| r)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; rows[0].len()];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        let n = rows.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Some(mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSimilarity {
    pub groups: Vec<TokenGroup>,
    pub matrix: Vec<Vec<f64>>,
}

impl GroupSimilarity {
    pub fn get(&self, a: TokenGroup, b: TokenGroup) -> Option<f64> {
        let i = self.groups.iter().position(|g| *g == a)?;
        let j = self.groups.iter().position(|g| *g == b)?;
        Some(self.matrix[i][j])
    }
}

/// Cosine similarity between the mean activation vectors of every pair of
/// non-empty token groups.
pub fn camap_group_similarity(ag: &AttentionGroups) -> Result<GroupSimilarity> {
    let mut groups = Vec::new();
    let mut means = Vec::new();
    for g in TokenGroup::ALL {
        if let Some(m) = ag.group_mean(g) {
            if norm(&m) == 0.0 {
                return Err(Error::Degenerate(format!("group {g} has a zero mean activation")));
            }
            groups.push(g);
            means.push(m);
        }
    }
    let matrix = means
        .iter()
        .enumerate()
        .map(|(i, a)| {
            means
                .iter()
                .enumerate()
                .map(|(j, b)| if i == j { 1.0 } else { cosine(a, b) })
                .collect()
        })
        .collect();
    Ok(GroupSimilarity { groups, matrix })
}
