use dsrkit::denoiser::ToyDenoiser;
use dsrkit::loss::{LossConfig, LossMode};
use dsrkit::toy::{curve_summary, make_synthetic_pairs, reference_run, train, TrainConfig, REF_LR};

#[test]
fn displacement_contrast_on_reference_fixture() {
    let cfg = LossConfig::default();
    let dpo = curve_summary(&reference_run(LossMode::Dpo, &cfg, REF_LR).unwrap().records).unwrap();
    let zo = curve_summary(&reference_run(LossMode::DpoZo, &cfg, REF_LR).unwrap().records).unwrap();

    assert!(dpo.displacement, "{dpo:?}");
    assert!(dpo.final_score_pos < dpo.initial_score_pos);
    assert!(dpo.final_margin > dpo.initial_margin);

    assert!(!zo.displacement, "{zo:?}");
    assert!(zo.final_score_pos >= zo.initial_score_pos - 0.05);
    assert!(zo.final_margin > 0.0);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let data = make_synthetic_pairs(4, 32, 3, 2.0).unwrap();
    let tc = TrainConfig { batch_size: Some(8), seed: 9, ..TrainConfig::full_batch(300, 0.02) };
    for mode in LossMode::ALL {
        let cfg = LossConfig { lambda_sft: 0.5, ..LossConfig::default() };
        let (m1, c1) = train(&ToyDenoiser::linear_zeros(3), &data, &cfg, mode, &tc).unwrap();
        let (m2, c2) = train(&ToyDenoiser::linear_zeros(3), &data, &cfg, mode, &tc).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(m1, m2);
        assert_eq!(c1.records.len(), 301);
        let s = curve_summary(&c1.records).unwrap();
        assert!(s.final_loss <= s.initial_loss, "{mode:?}: {s:?}");
    }
}

#[test]
fn diverging_run_reports_step() {
    let data = make_synthetic_pairs(0, 16, 2, 2.0).unwrap();
    let err = train(
        &ToyDenoiser::linear_zeros(2),
        &data,
        &LossConfig::default(),
        LossMode::Dpo,
        &TrainConfig::full_batch(200, 1e6),
    )
    .unwrap_err();
    assert_eq!(err.kind(), "non_finite");
}
