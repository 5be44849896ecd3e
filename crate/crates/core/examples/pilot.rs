use colornorm::model::{Mode};
use colornorm::synth::generate_slide;
use colornorm::train::{evaluate_offset_recovery, sample_patches, train, TrainConfig};
use colornorm::Rng;

fn main() {
    let slides: Vec<_> = (0..4).map(|i| generate_slide(512, 512, 9_000 + i)).collect();
    let mut rng = Rng::new(0xDE5C);
    let patches = sample_patches(&slides, 200, 64, &mut rng).unwrap();
    let cfg = TrainConfig {
        batch_size: 16, patch_size: 64, lr: 0.001, lambda: 0.1,
        iterations: 300, seed: 2, offset_range: 0.2, holdout_fraction: 0.1,
    };
    let t0 = std::time::Instant::now();
    let (model, log) = train(&patches, &cfg).unwrap();
    println!("train time: {:?}", t0.elapsed());
    println!("initial holdout (infer stats): {}", log.initial_holdout);
    for r in &log.records {
        if r.iteration % 50 == 0 || r.iteration <= 5 || r.iteration == 300 {
            println!("iter {:3}: train loss {:.5} holdout {:?}", r.iteration, r.loss, r.holdout);
        }
    }
    assert!(matches!(model.mode(), Mode::Infer));
    let (_, holdout) = patches.split_holdout(0.1);
    let mut rng = Rng::new(0x0FF5E7);
    let rec = evaluate_offset_recovery(&model, holdout, 1000, 0.2, &mut rng).unwrap();
    println!("trained MAE: R {:.4} G {:.4} B {:.4}", rec.mae[0], rec.mae[1], rec.mae[2]);
}
