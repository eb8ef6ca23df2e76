//! Small-scale preference training on synthetic noise pairs, used to observe
//! how the winner-side implicit reward moves under each loss mode, plus a
//! central finite-difference oracle for every analytic gradient.

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoiser::ToyDenoiser;
use crate::error::{Error, Result};
use crate::loss::{
    combined_loss, grad_decomposition_check, output_gradients, DecompositionReport, LossConfig,
    LossDiagnostics, LossMode, NoiseBatch, PairInputs,
};

/// Reference fixture for the displacement runs.
pub const REF_SEED: u64 = 0;
pub const REF_PAIRS: usize = 64;
pub const REF_DIM: usize = 2;
pub const REF_MU_GAP: f64 = 2.0;
/// Standard deviation of the clean component shared by both sides of a pair.
pub const REF_SIGNAL_SCALE: f64 = 3.0;
pub const REF_STEPS: usize = 2000;
/// Chosen with `examples/pilot_sweep.rs`.
pub const REF_LR: f64 = 0.02;

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidConfig(format!("step h must be > 0 (got {h})")));
    }
    let mut p = params.to_vec();
    let mut g = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p)?;
        p[i] = orig - h;
        let down = f(&p)?;
        p[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite {
                step: i,
                what: "loss during finite differences".into(),
            });
        }
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// Paired inputs `x = x0 + eps` whose targets differ in mean by `mu_gap`
/// per coordinate: winners around `+mu_gap/2`, losers around `-mu_gap/2`.
/// Both sides of a pair share `x0 ~ N(0, signal_scale^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPairDataset {
    pub seed: u64,
    pub mu_gap: f64,
    pub signal_scale: f64,
    pub x_w: Vec<Vec<f64>>,
    pub x_l: Vec<Vec<f64>>,
    pub eps_w: Vec<Vec<f64>>,
    pub eps_l: Vec<Vec<f64>>,
}

fn rows_to_array(rows: &[Vec<f64>], idx: &[usize]) -> Array2<f64> {
    let d = rows.first().map(Vec::len).unwrap_or(0);
    Array2::from_shape_fn((idx.len(), d), |(i, j)| rows[idx[i]][j])
}

impl ToyPairDataset {
    pub fn len(&self) -> usize {
        self.x_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_w.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x_w.first().map(Vec::len).unwrap_or(0)
    }

    /// Array view of the selected rows.
    pub fn inputs(&self, idx: &[usize]) -> PairInputs {
        PairInputs {
            x_w: rows_to_array(&self.x_w, idx),
            x_l: rows_to_array(&self.x_l, idx),
            eps_w: rows_to_array(&self.eps_w, idx),
            eps_l: rows_to_array(&self.eps_l, idx),
        }
    }

    pub fn all_inputs(&self) -> PairInputs {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.inputs(&idx)
    }
}

/// Pairs with the reference signal scale.
pub fn make_synthetic_pairs(seed: u64, n: usize, dim: usize, mu_gap: f64) -> Result<ToyPairDataset> {
    make_synthetic_pairs_scaled(seed, n, dim, mu_gap, REF_SIGNAL_SCALE)
}

pub fn make_synthetic_pairs_scaled(
    seed: u64,
    n: usize,
    dim: usize,
    mu_gap: f64,
    signal_scale: f64,
) -> Result<ToyPairDataset> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidConfig("need n >= 1 and dim >= 1".into()));
    }
    if !mu_gap.is_finite() {
        return Err(Error::InvalidConfig("mu_gap must be finite".into()));
    }
    if !(signal_scale.is_finite() && signal_scale >= 0.0) {
        return Err(Error::InvalidConfig("signal_scale must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |scale: f64, shift: f64| -> Vec<f64> {
        (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z + shift
            })
            .collect()
    };
    let (mut x_w, mut x_l, mut eps_w, mut eps_l) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let x0 = draw(signal_scale, 0.0);
        let ew = draw(1.0, mu_gap / 2.0);
        let el = draw(1.0, -mu_gap / 2.0);
        x_w.push(x0.iter().zip(&ew).map(|(a, b)| a + b).collect());
        x_l.push(x0.iter().zip(&el).map(|(a, b)| a + b).collect());
        eps_w.push(ew);
        eps_l.push(el);
    }
    Ok(ToyPairDataset {
        seed,
        mu_gap,
        signal_scale,
        x_w,
        x_l,
        eps_w,
        eps_l,
    })
}

/// Loss value and parameter gradient of one mode on a set of pairs.
pub fn loss_and_grad(
    model: &ToyDenoiser,
    reference: &ToyDenoiser,
    inputs: &PairInputs,
    cfg: &LossConfig,
    mode: LossMode,
) -> Result<(LossDiagnostics, Array1<f64>)> {
    let (winner, loser) = batches(model, reference, inputs)?;
    let (_, diag) = combined_loss(&winner, &loser, cfg, mode)?;
    let (g_w, g_l) = output_gradients(&winner, &loser, cfg, mode)?;
    let grad = model.vjp_batch(&inputs.x_w, &g_w) + model.vjp_batch(&inputs.x_l, &g_l);
    Ok((diag, grad))
}

fn batches(model: &ToyDenoiser, reference: &ToyDenoiser, inputs: &PairInputs) -> Result<(NoiseBatch, NoiseBatch)> {
    let winner = NoiseBatch::new(
        inputs.eps_w.clone(),
        model.forward_batch(&inputs.x_w),
        reference.forward_batch(&inputs.x_w),
    )?;
    let loser = NoiseBatch::new(
        inputs.eps_l.clone(),
        model.forward_batch(&inputs.x_l),
        reference.forward_batch(&inputs.x_l),
    )?;
    Ok((winner, loser))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Pairs per step; `None` uses every pair.
    pub batch_size: Option<usize>,
}

impl TrainConfig {
    pub fn full_batch(steps: usize, lr: f64) -> Self {
        Self {
            steps,
            lr,
            seed: 0,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub step: usize,
    pub loss: f64,
    pub score_pos: f64,
    pub score_neg: f64,
    pub score_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub mode: LossMode,
    pub records: Vec<CurveRecord>,
}

/// Plain gradient descent from `model`, with the initial model frozen as the
/// reference. Records are taken on the full dataset before each update, so
/// the curve has `steps + 1` entries.
pub fn train(
    model: &ToyDenoiser,
    data: &ToyPairDataset,
    cfg: &LossConfig,
    mode: LossMode,
    tc: &TrainConfig,
) -> Result<(ToyDenoiser, TrainingCurves)> {
    if !(tc.lr.is_finite() && tc.lr > 0.0) {
        return Err(Error::InvalidConfig(format!("lr must be > 0 (got {})", tc.lr)));
    }
    if data.is_empty() || data.dim() != model.dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dim {} vs model dim {}",
            data.dim(),
            model.dim()
        )));
    }
    if tc.batch_size == Some(0) {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    cfg.validate()?;
    let reference = model.clone();
    let mut model = model.clone();
    let full = data.all_inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut records = Vec::with_capacity(tc.steps + 1);
    for step in 0..=tc.steps {
        let (diag, full_grad) = loss_and_grad(&model, &reference, &full, cfg, mode)?;
        if !diag.total.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: "training loss".into(),
            });
        }
        records.push(CurveRecord {
            step,
            loss: diag.total,
            score_pos: diag.score_pos,
            score_neg: diag.score_neg,
            score_margin: diag.score_margin,
        });
        if step == tc.steps {
            break;
        }
        let grad = match tc.batch_size {
            Some(b) if b < data.len() => {
                let idx = index::sample(&mut rng, data.len(), b).into_vec();
                loss_and_grad(&model, &reference, &data.inputs(&idx), cfg, mode)?.1
            }
            _ => full_grad,
        };
        let params: Vec<f64> = model
            .params()
            .iter()
            .zip(grad.iter())
            .map(|(p, g)| p - tc.lr * g)
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                step,
                what: "parameters after update".into(),
            });
        }
        model.set_params(&params)?;
    }
    Ok((model, TrainingCurves { mode, records }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub steps: usize,
    pub initial_score_pos: f64,
    pub final_score_pos: f64,
    pub initial_score_neg: f64,
    pub final_score_neg: f64,
    pub initial_margin: f64,
    pub final_margin: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Margin grew while the winner-side reward fell below its start.
    pub displacement: bool,
}

pub fn curve_summary(records: &[CurveRecord]) -> Result<CurveSummary> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Err(Error::EmptyInput("training curve has no records".into()));
    };
    Ok(CurveSummary {
        steps: last.step,
        initial_score_pos: first.score_pos,
        final_score_pos: last.score_pos,
        initial_score_neg: first.score_neg,
        final_score_neg: last.score_neg,
        initial_margin: first.score_margin,
        final_margin: last.score_margin,
        initial_loss: first.loss,
        final_loss: last.loss,
        displacement: last.score_margin > first.score_margin && last.score_pos < first.score_pos,
    })
}

/// Trains one mode on the reference fixture from a zero linear model.
pub fn reference_run(mode: LossMode, cfg: &LossConfig, lr: f64) -> Result<TrainingCurves> {
    let data = make_synthetic_pairs(REF_SEED, REF_PAIRS, REF_DIM, REF_MU_GAP)?;
    let model = ToyDenoiser::linear_zeros(REF_DIM);
    let (_, curves) = train(&model, &data, cfg, mode, &TrainConfig::full_batch(REF_STEPS, lr))?;
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp2,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp2" => Ok(Self::Mlp2),
            _ => Err(Error::InvalidConfig(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCheck {
    pub mode: LossMode,
    pub loss: f64,
    /// `|a - f| / (|a| + |f|)` over the full parameter vector.
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub model: ModelKind,
    pub seed: u64,
    pub tol: f64,
    pub h: f64,
    pub modes: Vec<ModeCheck>,
    /// Present for linear models only.
    pub decomposition: Option<DecompositionReport>,
    pub pass: bool,
}

pub const GRADCHECK_H: f64 = 1e-5;
const GRADCHECK_DIM: usize = 3;
const GRADCHECK_HIDDEN: usize = 4;
const GRADCHECK_PAIRS: usize = 5;
const GRADCHECK_SCALE: f64 = 0.3;

pub fn relative_error(a: &[f64], f: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(f).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nf: f64 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na + nf == 0.0 {
        0.0
    } else {
        diff / (na + nf)
    }
}

/// Analytic versus finite-difference gradients of every loss mode on a
/// seeded model whose reference is a separate random draw.
pub fn gradient_check(kind: ModelKind, seed: u64, cfg: &LossConfig, tol: f64) -> Result<GradCheckReport> {
    let (model, reference) = match kind {
        ModelKind::Linear => (
            ToyDenoiser::linear_random(GRADCHECK_DIM, GRADCHECK_SCALE, seed),
            ToyDenoiser::linear_random(GRADCHECK_DIM, GRADCHECK_SCALE, seed ^ 0x9e37_79b9_7f4a_7c15),
        ),
        ModelKind::Mlp2 => (
            ToyDenoiser::mlp2_random(GRADCHECK_DIM, GRADCHECK_HIDDEN, GRADCHECK_SCALE, seed),
            ToyDenoiser::mlp2_random(GRADCHECK_DIM, GRADCHECK_HIDDEN, GRADCHECK_SCALE, seed ^ 0x9e37_79b9_7f4a_7c15),
        ),
    };
    // unit-scale inputs and small weights keep the sigmoid away from saturation
    let data = make_synthetic_pairs_scaled(seed, GRADCHECK_PAIRS, GRADCHECK_DIM, 1.0, 1.0)?;
    let inputs = data.all_inputs();
    let mut modes = Vec::new();
    for mode in LossMode::ALL {
        let (diag, analytic) = loss_and_grad(&model, &reference, &inputs, cfg, mode)?;
        let f = |p: &[f64]| -> Result<f64> {
            let mut m = model.clone();
            m.set_params(p)?;
            let (w, l) = batches(&m, &reference, &inputs)?;
            Ok(combined_loss(&w, &l, cfg, mode)?.0)
        };
        let fd = finite_diff_grad(f, &model.params(), GRADCHECK_H)?;
        let rel = relative_error(analytic.as_slice().expect("contiguous"), &fd);
        modes.push(ModeCheck {
            mode,
            loss: diag.total,
            rel_error: rel,
            pass: rel <= tol,
        });
    }
    let decomposition = match kind {
        ModelKind::Linear => {
            let mut exact = inputs.clone();
            exact.eps_w = reference.forward_batch(&exact.x_w);
            exact.eps_l = reference.forward_batch(&exact.x_l);
            Some(grad_decomposition_check(&model, &reference, &exact, cfg, 1e-9)?)
        }
        ModelKind::Mlp2 => None,
    };
    let pass = modes.iter().all(|m| m.pass) && decomposition.as_ref().is_none_or(|d| d.pass);
    Ok(GradCheckReport {
        model: kind,
        seed,
        tol,
        h: GRADCHECK_H,
        modes,
        decomposition,
        pass,
    })
}

/// Column means of the winner and loser targets.
pub fn target_means(data: &ToyPairDataset) -> (Array1<f64>, Array1<f64>) {
    let all = data.all_inputs();
    (
        all.eps_w.mean_axis(Axis(0)).expect("non-empty"),
        all.eps_l.mean_axis(Axis(0)).expect("non-empty"),
    )
}
