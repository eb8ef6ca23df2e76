//! Sweeps the shared signal scale, learning rate and data seed for the toy
//! displacement runs. Used to choose `REF_SIGNAL_SCALE` and `REF_LR`.
//!
//! cargo run --release --example pilot_sweep

use dsrkit::denoiser::ToyDenoiser;
use dsrkit::loss::{LossConfig, LossMode};
use dsrkit::toy::{
    curve_summary, make_synthetic_pairs_scaled, train, TrainConfig, REF_DIM, REF_MU_GAP, REF_PAIRS, REF_STEPS,
};

const SEEDS: u64 = 20;

fn main() {
    let cfg = LossConfig::default();
    println!("scale\tlr\tdpo_displaced\tdpo_median_pos\tzo_ok\tseed0_dpo_pos\tseed0_zo_pos\tseed0_zo_margin");
    for scale in [1.0, 2.0, 3.0, 4.0] {
        for lr in [0.01, 0.02, 0.05, 0.1] {
            let mut displaced = 0;
            let mut zo_ok = 0;
            let mut pos = Vec::new();
            let mut seed0 = String::from("-\t-\t-");
            for seed in 0..SEEDS {
                let data = make_synthetic_pairs_scaled(seed, REF_PAIRS, REF_DIM, REF_MU_GAP, scale).expect("valid sizes");
                let run = |mode| {
                    let model = ToyDenoiser::linear_zeros(REF_DIM);
                    train(&model, &data, &cfg, mode, &TrainConfig::full_batch(REF_STEPS, lr))
                        .ok()
                        .and_then(|(_, c)| curve_summary(&c.records).ok())
                };
                let (Some(d), Some(z)) = (run(LossMode::Dpo), run(LossMode::DpoZo)) else {
                    continue;
                };
                displaced += usize::from(d.displacement);
                let ok = !z.displacement && z.final_score_pos >= z.initial_score_pos - 0.05 && z.final_margin > 0.0;
                zo_ok += usize::from(ok);
                pos.push(d.final_score_pos);
                if seed == 0 {
                    seed0 = format!("{:.4}\t{:.4}\t{:.4}", d.final_score_pos, z.final_score_pos, z.final_margin);
                }
            }
            pos.sort_by(f64::total_cmp);
            let median = pos.get(pos.len() / 2).copied().unwrap_or(f64::NAN);
            println!("{scale}\t{lr}\t{displaced}/{SEEDS}\t{median:.4}\t{zo_ok}/{SEEDS}\t{seed0}");
        }
    }
}
