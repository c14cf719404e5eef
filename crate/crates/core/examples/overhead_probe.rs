use corrff::corr::{CorrConfig, IrrepMode, SamplePolicy};
use corrff::md::{generate_dataset, DatagenConfig};
use corrff::sched::SchedulerKind;
use corrff::train::{epoch_tape_ops, TrainConfig};

fn main() {
    let n_atoms: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(512);
    let box_len: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(31.0);
    let dg = DatagenConfig {
        n_atoms,
        box_len,
        n_frames: 6,
        equil_steps: 500,
        stride: 50,
        ..DatagenConfig::default()
    };
    let ds = generate_dataset(&corrff::lj::LjMixture::default_preset(), &dg).unwrap();
    let mut train_frames = ds.frames.clone();
    let _val = train_frames.split_off(4);
    let ds_train = corrff::Dataset { frames: train_frames, composition: "1:2".into() };
    let model = corrff::ModelConfig::default();

    let mut base = TrainConfig { val_interval: 1000, ..TrainConfig::default() };
    base.scheduler.kind = SchedulerKind::Fixed;
    base.scheduler.c_max = 0.0;

    for irreps in [IrrepMode::Only0e, IrrepMode::Only1o] {
        let mut on = base.clone();
        on.scheduler.c_max = 0.1;
        on.corr = CorrConfig { irreps, sampling: SamplePolicy::Fixed(1024), ..CorrConfig::default() };
        let a = epoch_tape_ops(&ds_train, &model, &base).unwrap();
        let b = epoch_tape_ops(&ds_train, &model, &on).unwrap();
        println!("{n_atoms} atoms {irreps:?}: ops base {a}, corr {b}, ratio {:.4}", b as f64 / a as f64);
    }
}
