//! Preference losses over predicted noise: the diffusion DPO objective, the
//! supervised and zeroth-order regularizers, implicit-reward diagnostics, and
//! the sum/difference gradient decomposition as a checkable computation.
//!
//! Squared errors are summed over the latent dimension and averaged over the
//! batch before entering the sigmoid, giving one margin per batch:
//!
//! ```text
//! A_w = mean ||eps_w - eps_theta||^2 - mean ||eps_w - eps_ref||^2
//! A_l = (same on the loser batch)
//! z   = -beta * T * w * (A_w - A_l)
//! L_dpo = -log sigmoid(z)
//! ```
//!
//! `z` is positive when the trained model fits the winner better than the
//! loser, relative to the reference.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::denoiser::ToyDenoiser;
use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_LAMBDA_ZO: f64 = 0.25;

/// Target, predicted and reference noise for one side of a preference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBatch {
    pub eps_target: Array2<f64>,
    pub eps_theta: Array2<f64>,
    pub eps_ref: Array2<f64>,
    /// Diffusion timestep, only consulted by a tabulated weight.
    pub timestep: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBatch {
    eps_target: Vec<Vec<f64>>,
    eps_theta: Vec<Vec<f64>>,
    eps_ref: Vec<Vec<f64>>,
    #[serde(default)]
    timestep: Option<usize>,
}

fn to_array(name: &str, rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let b = rows.len();
    let d = rows.first().map(Vec::len).unwrap_or(0);
    if b == 0 || d == 0 {
        return Err(Error::EmptyInput(format!("field {name} is empty")));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch(format!("field {name} has ragged rows")));
    }
    Array2::from_shape_vec((b, d), rows.into_iter().flatten().collect())
        .map_err(|e| Error::ShapeMismatch(format!("field {name}: {e}")))
}

impl<'de> Deserialize<'de> for NoiseBatch {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawBatch::deserialize(de)?;
        let build = || -> Result<NoiseBatch> {
            NoiseBatch::new(
                to_array("eps_target", raw.eps_target)?,
                to_array("eps_theta", raw.eps_theta)?,
                to_array("eps_ref", raw.eps_ref)?,
            )
            .map(|b| b.with_timestep(raw.timestep))
        };
        build().map_err(D::Error::custom)
    }
}

impl Serialize for NoiseBatch {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let rows = |a: &Array2<f64>| -> Vec<Vec<f64>> {
            a.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
        };
        let mut st = s.serialize_struct("NoiseBatch", 4)?;
        st.serialize_field("eps_target", &rows(&self.eps_target))?;
        st.serialize_field("eps_theta", &rows(&self.eps_theta))?;
        st.serialize_field("eps_ref", &rows(&self.eps_ref))?;
        if let Some(t) = self.timestep {
            st.serialize_field("timestep", &t)?;
        }
        st.end()
    }
}

impl NoiseBatch {
    pub fn new(eps_target: Array2<f64>, eps_theta: Array2<f64>, eps_ref: Array2<f64>) -> Result<Self> {
        if eps_target.dim() != eps_theta.dim() || eps_target.dim() != eps_ref.dim() {
            return Err(Error::ShapeMismatch(format!(
                "eps_target {:?}, eps_theta {:?}, eps_ref {:?}",
                eps_target.dim(),
                eps_theta.dim(),
                eps_ref.dim()
            )));
        }
        if eps_target.nrows() == 0 {
            return Err(Error::EmptyInput("noise batch has no rows".into()));
        }
        let finite = |a: &Array2<f64>| a.iter().all(|v| v.is_finite());
        if !(finite(&eps_target) && finite(&eps_theta) && finite(&eps_ref)) {
            return Err(Error::Degenerate("noise batch contains a non-finite value".into()));
        }
        Ok(Self {
            eps_target,
            eps_theta,
            eps_ref,
            timestep: None,
        })
    }

    pub fn with_timestep(mut self, t: Option<usize>) -> Self {
        self.timestep = t;
        self
    }

    pub fn batch_size(&self) -> usize {
        self.eps_target.nrows()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.eps_target.dim()
    }

    /// Mean over the batch of `||eps_target - eps_theta||^2`.
    pub fn model_error(&self) -> f64 {
        mean_sq_dist(&self.eps_target, &self.eps_theta)
    }

    /// Mean over the batch of `||eps_target - eps_ref||^2`.
    pub fn reference_error(&self) -> f64 {
        mean_sq_dist(&self.eps_target, &self.eps_ref)
    }

    /// Reference-relative error `A` for this side.
    pub fn relative_error(&self) -> f64 {
        self.model_error() - self.reference_error()
    }

    /// Mean over the batch of `||eps_ref - eps_theta||^2`.
    pub fn anchor_error(&self) -> f64 {
        mean_sq_dist(&self.eps_ref, &self.eps_theta)
    }
}

fn mean_sq_dist(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let total: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    total / a.nrows() as f64
}

/// The per-timestep weight `w(lambda_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    ConstantOne,
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub beta: f64,
    pub timesteps: u32,
    pub weight: WeightMode,
    pub lambda_sft: f64,
    pub lambda_zo: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            timesteps: 1,
            weight: WeightMode::ConstantOne,
            lambda_sft: 0.0,
            lambda_zo: DEFAULT_LAMBDA_ZO,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be > 0 (got {})", self.beta)));
        }
        if self.timesteps == 0 {
            return Err(Error::InvalidConfig("timesteps must be >= 1".into()));
        }
        for (name, v) in [("lambda_sft", self.lambda_sft), ("lambda_zo", self.lambda_zo)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0 (got {v})")));
            }
        }
        if let WeightMode::Table(t) = &self.weight {
            if t.is_empty() || t.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::InvalidConfig("weight table must be non-empty and positive".into()));
            }
        }
        Ok(())
    }

    fn weight(&self, winner: &NoiseBatch, loser: &NoiseBatch) -> Result<f64> {
        match &self.weight {
            WeightMode::ConstantOne => Ok(1.0),
            WeightMode::Table(table) => {
                let t = match (winner.timestep, loser.timestep) {
                    (Some(a), Some(b)) if a == b => a,
                    _ => {
                        return Err(Error::InvalidConfig(
                            "tabulated weight needs one shared timestep on both batches".into(),
                        ))
                    }
                };
                table.get(t).copied().ok_or_else(|| {
                    Error::OutOfRange(format!("timestep {t} outside weight table of {}", table.len()))
                })
            }
        }
    }

    /// Scale `beta * T * w` multiplying the error difference.
    pub fn scale(&self, winner: &NoiseBatch, loser: &NoiseBatch) -> Result<f64> {
        self.validate()?;
        Ok(self.beta * f64::from(self.timesteps) * self.weight(winner, loser)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Dpo,
    DpoSft,
    DpoZo,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [Self::Dpo, Self::DpoSft, Self::DpoZo];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Dpo => "dpo",
            Self::DpoSft => "dpo_sft",
            Self::DpoZo => "dpo_zo",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown loss mode {s:?}")))
    }
}

/// Implicit-reward quantities and loss components of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDiagnostics {
    pub a_w: f64,
    pub a_l: f64,
    pub z: f64,
    pub score_pos: f64,
    pub score_neg: f64,
    pub score_margin: f64,
    pub dpo: f64,
    pub sft: f64,
    pub zo: f64,
    pub total: f64,
}

/// `-log(sigmoid(u))`, stable for large `|u|`.
pub fn neg_log_sigmoid(u: f64) -> f64 {
    (-u).max(0.0) + (-u.abs()).exp().ln_1p()
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn check_pair(winner: &NoiseBatch, loser: &NoiseBatch) -> Result<()> {
    if winner.dim() != loser.dim() {
        return Err(Error::ShapeMismatch(format!(
            "winner batch {:?} vs loser batch {:?}",
            winner.dim(),
            loser.dim()
        )));
    }
    Ok(())
}

fn diagnostics(winner: &NoiseBatch, loser: &NoiseBatch, cfg: &LossConfig, mode: LossMode) -> Result<LossDiagnostics> {
    check_pair(winner, loser)?;
    let scale = cfg.scale(winner, loser)?;
    let a_w = winner.relative_error();
    let a_l = loser.relative_error();
    let z = -scale * (a_w - a_l);
    let dpo = neg_log_sigmoid(z);
    let sft = winner.model_error() + loser.model_error();
    let zo = winner.anchor_error() + loser.anchor_error();
    let total = match mode {
        LossMode::Dpo => dpo,
        LossMode::DpoSft => dpo + cfg.lambda_sft * sft,
        LossMode::DpoZo => dpo + cfg.lambda_zo * zo,
    };
    Ok(LossDiagnostics {
        a_w,
        a_l,
        z,
        score_pos: -a_w,
        score_neg: -a_l,
        score_margin: a_l - a_w,
        dpo,
        sft,
        zo,
        total,
    })
}

pub fn dpo_loss(winner: &NoiseBatch, loser: &NoiseBatch, cfg: &LossConfig) -> Result<(f64, LossDiagnostics)> {
    let d = diagnostics(winner, loser, cfg, LossMode::Dpo)?;
    Ok((d.dpo, d))
}

/// Supervised term: model error on both sides.
pub fn sft_reg(winner: &NoiseBatch, loser: &NoiseBatch) -> Result<f64> {
    check_pair(winner, loser)?;
    Ok(winner.model_error() + loser.model_error())
}

/// Zeroth-order anchor: distance of the model from the reference on both sides.
pub fn zo_reg(winner: &NoiseBatch, loser: &NoiseBatch) -> Result<f64> {
    check_pair(winner, loser)?;
    Ok(winner.anchor_error() + loser.anchor_error())
}

pub fn combined_loss(
    winner: &NoiseBatch,
    loser: &NoiseBatch,
    cfg: &LossConfig,
    mode: LossMode,
) -> Result<(f64, LossDiagnostics)> {
    let d = diagnostics(winner, loser, cfg, mode)?;
    Ok((d.total, d))
}

/// Gradient of `combined_loss` with respect to `eps_theta` on each side.
pub fn output_gradients(
    winner: &NoiseBatch,
    loser: &NoiseBatch,
    cfg: &LossConfig,
    mode: LossMode,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = diagnostics(winner, loser, cfg, mode)?;
    let scale = cfg.scale(winner, loser)?;
    let b = winner.batch_size() as f64;
    // dL/dA_w = scale * (1 - sigmoid(z)) and dL/dA_l is its negation
    let k = scale * (1.0 - sigmoid(d.z));
    let mut g_w = (&winner.eps_theta - &winner.eps_target) * (2.0 * k / b);
    let mut g_l = (&loser.eps_theta - &loser.eps_target) * (-2.0 * k / b);
    match mode {
        LossMode::Dpo => {}
        LossMode::DpoSft => {
            let c = 2.0 * cfg.lambda_sft / b;
            g_w = g_w + (&winner.eps_theta - &winner.eps_target) * c;
            g_l = g_l + (&loser.eps_theta - &loser.eps_target) * c;
        }
        LossMode::DpoZo => {
            let c = 2.0 * cfg.lambda_zo / b;
            g_w = g_w + (&winner.eps_theta - &winner.eps_ref) * c;
            g_l = g_l + (&loser.eps_theta - &loser.eps_ref) * c;
        }
    }
    Ok((g_w, g_l))
}

/// Half-sum and half-difference of winner/loser deltas and Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct SumDiff {
    pub delta_sum: Array1<f64>,
    pub delta_diff: Array1<f64>,
    pub jac_sum: Array2<f64>,
    pub jac_diff: Array2<f64>,
}

pub fn sum_diff_decompose(
    delta_w: &Array1<f64>,
    delta_l: &Array1<f64>,
    jac_w: &Array2<f64>,
    jac_l: &Array2<f64>,
) -> Result<SumDiff> {
    if delta_w.len() != delta_l.len() || jac_w.dim() != jac_l.dim() || jac_w.nrows() != delta_w.len() {
        return Err(Error::ShapeMismatch(format!(
            "deltas {} / {}, jacobians {:?} / {:?}",
            delta_w.len(),
            delta_l.len(),
            jac_w.dim(),
            jac_l.dim()
        )));
    }
    Ok(SumDiff {
        delta_sum: (delta_w + delta_l) * 0.5,
        delta_diff: (delta_w - delta_l) * 0.5,
        jac_sum: (jac_w + jac_l) * 0.5,
        jac_diff: (jac_w - jac_l) * 0.5,
    })
}

/// Inputs and targets of a decomposition check. Rows are paired samples.
#[derive(Debug, Clone)]
pub struct PairInputs {
    pub x_w: Array2<f64>,
    pub x_l: Array2<f64>,
    pub eps_w: Array2<f64>,
    pub eps_l: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// True when every target equals the reference prediction.
    pub exact_regime: bool,
    pub target_ref_gap: f64,
    /// Max abs deviation between the direct and decomposed gradient of `z`.
    pub z_deviation: f64,
    /// Max abs deviation between the direct and decomposed gradient of `L_zo`.
    pub zo_deviation: f64,
    pub z_grad_norm: f64,
    pub zo_grad_norm: f64,
    pub tol: f64,
    pub pass: bool,
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2(a: &Array1<f64>) -> f64 {
    a.dot(a).sqrt()
}

/// Compares backpropagated gradients of `z` and `L_zo` with their
/// sum/difference forms built from explicit Jacobians:
///
/// ```text
/// grad z    = -(beta T w) * 4/B * sum_b (J_S^T d_D + J_D^T d_S)
/// grad L_zo =               4/B * sum_b (J_S^T d_S + J_D^T d_D)
/// ```
///
/// with `d = eps_theta - eps_ref`. The `z` identity is exact only when the
/// targets equal the reference predictions; otherwise its deviation is
/// reported but does not affect `pass`.
pub fn grad_decomposition_check(
    model: &ToyDenoiser,
    reference: &ToyDenoiser,
    inputs: &PairInputs,
    cfg: &LossConfig,
    tol: f64,
) -> Result<DecompositionReport> {
    if !model.is_linear() || !reference.is_linear() {
        return Err(Error::InvalidConfig(
            "exact decomposition check needs linear models".into(),
        ));
    }
    let y_w = model.forward_batch(&inputs.x_w);
    let y_l = model.forward_batch(&inputs.x_l);
    let r_w = reference.forward_batch(&inputs.x_w);
    let r_l = reference.forward_batch(&inputs.x_l);
    let winner = NoiseBatch::new(inputs.eps_w.clone(), y_w.clone(), r_w.clone())?;
    let loser = NoiseBatch::new(inputs.eps_l.clone(), y_l.clone(), r_l.clone())?;
    check_pair(&winner, &loser)?;
    let scale = cfg.scale(&winner, &loser)?;
    let b = winner.batch_size() as f64;

    // direct route: dz/dy then backprop through the model
    let gz_w = (&y_w - &inputs.eps_w) * (-2.0 * scale / b);
    let gz_l = (&y_l - &inputs.eps_l) * (2.0 * scale / b);
    let direct_z = model.vjp_batch(&inputs.x_w, &gz_w) + model.vjp_batch(&inputs.x_l, &gz_l);
    let direct_zo = model.vjp_batch(&inputs.x_w, &((&y_w - &r_w) * (2.0 / b)))
        + model.vjp_batch(&inputs.x_l, &((&y_l - &r_l) * (2.0 / b)));

    // decomposed route
    let p = model.n_params();
    let mut dec_z = Array1::zeros(p);
    let mut dec_zo = Array1::zeros(p);
    for i in 0..inputs.x_w.nrows() {
        let jw = model.jacobian(inputs.x_w.row(i));
        let jl = model.jacobian(inputs.x_l.row(i));
        let dw = &y_w.row(i) - &r_w.row(i);
        let dl = &y_l.row(i) - &r_l.row(i);
        let sd = sum_diff_decompose(&dw, &dl, &jw, &jl)?;
        dec_z = dec_z + sd.jac_sum.t().dot(&sd.delta_diff) + sd.jac_diff.t().dot(&sd.delta_sum);
        dec_zo = dec_zo + sd.jac_sum.t().dot(&sd.delta_sum) + sd.jac_diff.t().dot(&sd.delta_diff);
    }
    let dec_z = dec_z * (-4.0 * scale / b);
    let dec_zo = dec_zo * (4.0 / b);

    let gap = inputs
        .eps_w
        .iter()
        .zip(r_w.iter())
        .chain(inputs.eps_l.iter().zip(r_l.iter()))
        .map(|(e, r)| (e - r).abs())
        .fold(0.0, f64::max);
    let exact_regime = gap == 0.0;
    let z_deviation = max_abs_diff(&direct_z, &dec_z);
    let zo_deviation = max_abs_diff(&direct_zo, &dec_zo);
    Ok(DecompositionReport {
        exact_regime,
        target_ref_gap: gap,
        z_deviation,
        zo_deviation,
        z_grad_norm: l2(&direct_z),
        zo_grad_norm: l2(&direct_zo),
        tol,
        pass: zo_deviation <= tol && (!exact_regime || z_deviation <= tol),
    })
}
