use dsrkit::denoiser::ToyDenoiser;
use dsrkit::loss::{
    combined_loss, dpo_loss, grad_decomposition_check, neg_log_sigmoid, zo_reg, LossConfig, LossMode, NoiseBatch,
    PairInputs,
};
use dsrkit::toy::{gradient_check, make_synthetic_pairs_scaled, ModelKind};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(b: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0..2.0f64, b * d).prop_map(move |v| Array2::from_shape_vec((b, d), v).unwrap())
}

prop_compose! {
    fn pair()(b in 1usize..6, d in 1usize..5)(
        w in (matrix(b, d), matrix(b, d), matrix(b, d)),
        l in (matrix(b, d), matrix(b, d), matrix(b, d)),
    ) -> (NoiseBatch, NoiseBatch) {
        (NoiseBatch::new(w.0, w.1, w.2).unwrap(), NoiseBatch::new(l.0, l.1, l.2).unwrap())
    }
}

fn permute(b: &NoiseBatch, perm: &[usize]) -> NoiseBatch {
    let pick = |a: &Array2<f64>| a.select(ndarray::Axis(0), perm);
    NoiseBatch::new(pick(&b.eps_target), pick(&b.eps_theta), pick(&b.eps_ref)).unwrap()
}

fn config() -> impl Strategy<Value = LossConfig> {
    (0.1..5.0f64, 1u32..4, 0.0..2.0f64, 0.0..2.0f64).prop_map(|(beta, timesteps, lambda_sft, lambda_zo)| LossConfig {
        beta,
        timesteps,
        lambda_sft,
        lambda_zo,
        ..LossConfig::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn loss_decreases_in_margin(beta in 0.1..5.0f64, m1 in -5.0..5.0f64, dm in 1e-3..5.0f64) {
        let cfg = LossConfig { beta, ..LossConfig::default() };
        // scalar batches with A_w = -m/2 and A_l = m/2, so the margin is m
        let side = |a: f64| {
            let e = a.abs().sqrt();
            if a >= 0.0 {
                NoiseBatch::new(Array2::zeros((1, 1)), Array2::from_elem((1, 1), e), Array2::zeros((1, 1))).unwrap()
            } else {
                NoiseBatch::new(Array2::zeros((1, 1)), Array2::zeros((1, 1)), Array2::from_elem((1, 1), e)).unwrap()
            }
        };
        let loss_at = |m: f64| {
            let (l, d) = dpo_loss(&side(-m / 2.0), &side(m / 2.0), &cfg).unwrap();
            assert!((d.score_margin - m).abs() < 1e-9);
            l
        };
        prop_assert!(loss_at(m1 + dm) < loss_at(m1));
    }

    #[test]
    fn swap_symmetry((w, l) in pair(), cfg in config()) {
        let (a, d) = dpo_loss(&w, &l, &cfg).unwrap();
        let (b, e) = dpo_loss(&l, &w, &cfg).unwrap();
        prop_assert_eq!(d.score_margin, -e.score_margin);
        let u = d.z;
        prop_assert!((a + b - (neg_log_sigmoid(u) + neg_log_sigmoid(-u))).abs() < 1e-12);
        prop_assert!((d.score_margin - (d.score_pos - d.score_neg)).abs() < 1e-12);
    }

    #[test]
    fn zo_zero_iff_anchor((w, l) in pair()) {
        let anchored = |b: &NoiseBatch| NoiseBatch::new(b.eps_target.clone(), b.eps_ref.clone(), b.eps_ref.clone()).unwrap();
        prop_assert!(zo_reg(&anchored(&w), &anchored(&l)).unwrap().abs() < 1e-12);
        let is_anchor = w.eps_theta == w.eps_ref && l.eps_theta == l.eps_ref;
        prop_assert_eq!(zo_reg(&w, &l).unwrap() == 0.0, is_anchor);
    }

    #[test]
    fn batch_permutation_invariant((w, l) in pair(), cfg in config(), seed in any::<u64>()) {
        let b = w.batch_size();
        let mut perm: Vec<usize> = (0..b).collect();
        let mut s = seed;
        for i in (1..b).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let (wp, lp) = (permute(&w, &perm), permute(&l, &perm));
        for mode in LossMode::ALL {
            let (a, _) = combined_loss(&w, &l, &cfg, mode).unwrap();
            let (c, _) = combined_loss(&wp, &lp, &cfg, mode).unwrap();
            prop_assert!((a - c).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let cfg = LossConfig {
        lambda_sft: 0.5,
        ..LossConfig::default()
    };
    for seed in 0..20 {
        for kind in [ModelKind::Linear, ModelKind::Mlp2] {
            let r = gradient_check(kind, seed, &cfg, 1e-4).unwrap();
            assert!(r.pass, "{kind:?} seed {seed}: {:?}", r.modes);
        }
    }
}

fn fixture(seed: u64, exact: bool) -> (ToyDenoiser, ToyDenoiser, PairInputs) {
    let model = ToyDenoiser::linear_random(4, 0.5, seed);
    let reference = ToyDenoiser::linear_random(4, 0.5, seed + 1000);
    let data = make_synthetic_pairs_scaled(seed, 6, 4, 1.0, 1.0).unwrap();
    let mut inputs = data.all_inputs();
    if exact {
        inputs.eps_w = reference.forward_batch(&inputs.x_w);
        inputs.eps_l = reference.forward_batch(&inputs.x_l);
    }
    (model, reference, inputs)
}

#[test]
fn decomposition_exact_regime() {
    let cfg = LossConfig::default();
    let (m, r, i) = fixture(7, true);
    let rep = grad_decomposition_check(&m, &r, &i, &cfg, 1e-9).unwrap();
    assert!(rep.exact_regime && rep.pass, "{rep:?}");
    assert!(rep.z_grad_norm > 0.0);

    let rep = grad_decomposition_check(&r, &r, &i, &cfg, 1e-9).unwrap();
    assert_eq!((rep.z_grad_norm, rep.zo_grad_norm), (0.0, 0.0));
    assert!(rep.pass);
}

#[test]
fn decomposition_approximate_regime_is_reported() {
    let (m, r, i) = fixture(7, false);
    let rep = grad_decomposition_check(&m, &r, &i, &LossConfig::default(), 1e-9).unwrap();
    assert!(!rep.exact_regime);
    assert!(rep.target_ref_gap > 0.0);
    assert!(rep.z_deviation.is_finite());
    assert!(rep.zo_deviation <= 1e-9);
}

#[test]
fn decomposition_rejects_nonlinear() {
    let m = ToyDenoiser::mlp2_random(4, 3, 0.5, 1);
    let (_, _, i) = fixture(1, true);
    assert!(grad_decomposition_check(&m, &m, &i, &LossConfig::default(), 1e-9).is_err());
}
