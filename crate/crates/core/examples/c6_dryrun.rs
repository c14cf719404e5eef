use corrff::corr::CorrConfig;
use corrff::md::{generate_dataset, DatagenConfig};
use corrff::sched::SchedulerKind;
use corrff::train::{train, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let dg = DatagenConfig { seed, n_frames: 12, ..DatagenConfig::default() };
    let ds = generate_dataset(&corrff::lj::LjMixture::default_preset(), &dg).unwrap();
    let mut train_frames = ds.frames.clone();
    let val_frames = train_frames.split_off(8);
    let ds_train = corrff::Dataset { frames: train_frames, composition: "1:2".into() };
    let ds_val = corrff::Dataset { frames: val_frames, composition: "1:2".into() };
    let model = corrff::ModelConfig::default();

    for decorr in [false, true] {
        let mut cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
        let cmax: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
        cfg.scheduler.c_max = cmax;
        if !decorr {
            cfg.scheduler.kind = SchedulerKind::Fixed;
            cfg.scheduler.c_max = 0.0;
        }
        let t0 = std::time::Instant::now();
        let st = train(&ds_train, &ds_val, &model, &cfg).unwrap();
        let corr_cfg = CorrConfig::default();
        let rep = corrff::corr::dataset_corr_value(&st.final_params, &ds_val, &corr_cfg).unwrap();
        println!(
            "seed {seed} decorr {decorr}: corr_value {:.4}, best FMAE {:.2} meV/A (epoch {}), {:.1}s",
            rep.scalar, st.best_fmae, st.best_epoch, t0.elapsed().as_secs_f64()
        );
    }
}
