//! Command-line pipeline: generate data, train, simulate, analyze.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use corrff::config::RunConfig;
use corrff::corr::{dataset_corr_value, FeatureSource, IrrepMode};
use corrff::io::atomic::write_atomic;
use corrff::io::dump::{parse_dump, write_dump};
use corrff::io::{read_dataset_auto, write_dataset_auto};
use corrff::lj::LjMixture;
use corrff::md::{generate_dataset, lattice_frame, run_md, ModelForce};
use corrff::model::ModelParams;
use corrff::stability::{fill_temperatures, rdf, stability_index};
use corrff::train::{evaluate_mae, train};
use corrff::{Dataset, ExitStatus};

#[derive(Parser)]
#[command(name = "corrff", about = "Train and stress-test a small decorrelated neural force field", version)]
struct Cli {
    /// Flat key:value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate labelled datasets from the reference potential.
    Datagen {
        /// Comma-separated composition ratios, e.g. "1:2,1:1.1".
        #[arg(long, default_value = "1:2")]
        ratios: String,
    },
    /// Train the model on a dataset.
    Train {
        /// Training dataset (.xyz or .json).
        #[arg(long)]
        dataset: PathBuf,
        /// Validation dataset; defaults to a 2:1 split of --dataset.
        #[arg(long)]
        val: Option<PathBuf>,
        /// "off" forces c_max = 0 (baseline); "on" keeps the configured scheduler.
        #[arg(long, default_value = "on")]
        corr: String,
        /// Scheduler kind override: fixed|linear|cosine.
        #[arg(long)]
        scheduler: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run MD and write a LAMMPS-style dump.
    Simulate {
        /// "model" (needs --checkpoint) or "ref".
        #[arg(long, default_value = "model")]
        potential: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Start from the first frame of this dataset instead of a fresh lattice.
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Stability report for a dump file.
    Analyze {
        dump: PathBuf,
        /// Per-species masses "m1,m2,..." (amu) to recover temperatures from velocities.
        #[arg(long)]
        masses: Option<String>,
        /// Also emit g(r) CSVs per species pair.
        #[arg(long)]
        rdf: bool,
    },
    /// Feature-correlation report for a checkpoint on a dataset.
    Corr {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// edge|node
        #[arg(long)]
        features: Option<String>,
        /// 0e|1o|both|both_summed
        #[arg(long)]
        irreps: Option<String>,
    },
    /// Radial distribution function from a dump.
    Rdf {
        dump: PathBuf,
        /// Species pair, e.g. "1:2".
        #[arg(long, default_value = "1:1")]
        pair: String,
        #[arg(long, default_value_t = 8.0)]
        r_max: f64,
        #[arg(long, default_value_t = 80)]
        bins: usize,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env()?;
            c
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg.train.corr.seed = seed;
        cfg.md.seed = seed;
        cfg.datagen.seed = seed;
    } else {
        cfg.train.seed = cfg.seed;
        cfg.train.corr.seed = cfg.seed;
        cfg.md.seed = cfg.seed;
        cfg.datagen.seed = cfg.seed;
    }
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn potential(cfg: &RunConfig) -> anyhow::Result<LjMixture> {
    let pot = match &cfg.preset {
        Some(path) => LjMixture::load(Path::new(path))?,
        None => LjMixture::default_preset(),
    };
    Ok(pot)
}

fn ratio_slug(ratio: &str) -> String {
    ratio.replace([':', '.'], "_")
}

fn cmd_datagen(cli: &Cli, ratios: &str) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let pot = potential(&cfg)?;
    std::fs::create_dir_all(&cli.out)?;
    for ratio in ratios.split(',') {
        let ratio = ratio.trim();
        let mut dg = cfg.datagen.clone();
        dg.ratio = ratio.to_string();
        let ds = generate_dataset(&pot, &dg)?;
        let counts = corrff::md::composition_counts(ratio, dg.n_atoms)?;
        let path = cli.out.join(format!("dataset_{}.xyz", ratio_slug(ratio)));
        write_dataset_auto(&ds, &path)?;
        println!(
            "{ratio}: {} frames of {} atoms ({} + {}) -> {}",
            ds.frames.len(),
            dg.n_atoms,
            counts.0,
            counts.1,
            path.display()
        );
    }
    Ok(())
}

fn split_dataset(ds: Dataset) -> (Dataset, Dataset) {
    let n_val = (ds.frames.len() / 3).max(1);
    let mut train_frames = ds.frames;
    let val_frames = train_frames.split_off(train_frames.len() - n_val);
    (
        Dataset { frames: train_frames, composition: ds.composition.clone() },
        Dataset { frames: val_frames, composition: ds.composition },
    )
}

fn cmd_train(
    cli: &Cli,
    dataset: &Path,
    val: Option<&Path>,
    corr: &str,
    scheduler: Option<&str>,
    epochs: Option<usize>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(cli)?;
    match corr {
        "on" => {}
        "off" => {
            cfg.train.scheduler.c_min = 0.0;
            cfg.train.scheduler.c_max = 0.0;
        }
        other => anyhow::bail!("--corr must be on|off, got '{other}'"),
    }
    if let Some(kind) = scheduler {
        cfg.set("scheduler.kind", kind)?;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }

    let (ds_train, ds_val) = match val {
        Some(vp) => (read_dataset_auto(dataset)?, read_dataset_auto(vp)?),
        None => split_dataset(read_dataset_auto(dataset)?),
    };

    std::fs::create_dir_all(&cli.out)?;
    let state = train(&ds_train, &ds_val, &cfg.model, &cfg.train)?;
    for w in &state.warnings {
        eprintln!("warning: {w}");
    }
    let ckpt = cli.out.join("checkpoint.json");
    state.params.save(&ckpt)?;
    write_atomic(&cli.out.join("metrics.csv"), state.metrics_csv().as_bytes())?;

    let (fmae, emae) = evaluate_mae(&state.params, &ds_val)?;
    let report = dataset_corr_value(&state.params, &ds_val, &cfg.train.corr)?;
    println!(
        "best epoch {} | corr value {:.4} | FMAE {fmae:.2} meV/A | EMAE {emae:.2} meV/atom",
        state.best_epoch, report.scalar
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn cmd_simulate(
    cli: &Cli,
    pot_kind: &str,
    checkpoint: Option<&Path>,
    start: Option<&Path>,
    steps: Option<usize>,
) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(cli)?;
    if let Some(s) = steps {
        cfg.md.steps = s;
    }
    let pot = potential(&cfg)?;
    let start_frame = match start {
        Some(path) => {
            let ds = read_dataset_auto(path)?;
            ds.frames
                .into_iter()
                .next()
                .ok_or_else(|| anyhow::anyhow!("dataset {} is empty", path.display()))?
        }
        None => lattice_frame(&pot, &cfg.datagen.ratio, cfg.datagen.n_atoms, cfg.datagen.box_len, cfg.seed)?,
    };

    let record = match pot_kind {
        "ref" => {
            let mut provider = pot.clone();
            run_md(&mut provider, &start_frame, &cfg.md)?
        }
        "model" => {
            let ckpt = checkpoint
                .ok_or_else(|| anyhow::anyhow!("--potential model requires --checkpoint"))?;
            let params = ModelParams::load(ckpt)?;
            let mut provider = ModelForce::new(params);
            run_md(&mut provider, &start_frame, &cfg.md)?
        }
        other => anyhow::bail!("--potential must be model|ref, got '{other}'"),
    };

    std::fs::create_dir_all(&cli.out)?;
    let path = cli.out.join("traj.dump");
    write_atomic(&path, write_dump(&record).as_bytes())?;
    println!("{} snapshots -> {}", record.num(), path.display());
    match &record.exit {
        ExitStatus::Completed => Ok(ExitCode::SUCCESS),
        ExitStatus::Crashed { step, reason } => {
            println!("crash at step {step}: {reason}");
            Ok(ExitCode::from(3))
        }
    }
}

fn cmd_analyze(cli: &Cli, dump: &Path, masses: Option<&str>, with_rdf: bool) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let mut traj = parse_dump(&std::fs::read_to_string(dump)?)?;
    if let Some(spec) = masses {
        let masses: Vec<f64> = spec
            .split(',')
            .map(|m| m.trim().parse::<f64>().map_err(|_| anyhow::anyhow!("bad mass '{m}'")))
            .collect::<anyhow::Result<_>>()?;
        fill_temperatures(&mut traj, Some(&masses))?;
    }
    let report = stability_index(&traj, &cfg.stability)?;
    std::fs::create_dir_all(&cli.out)?;
    write_atomic(
        &cli.out.join("stability.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    write_atomic(&cli.out.join("stability.csv"), report.to_csv().as_bytes())?;
    println!(
        "s_index {:.4}{}",
        report.s_index,
        match report.crash_step {
            Some(s) => format!(" (crashed at step {s})"),
            None => String::new(),
        }
    );
    if with_rdf {
        let r_max = traj.snapshots[0]
            .box_lengths
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
            / 2.0;
        for &(a, b) in &report.pair_labels {
            match rdf(&traj, (a, b), r_max, 80) {
                Ok((r, g)) => {
                    let mut csv = String::from("r,g\n");
                    for (ri, gi) in r.iter().zip(&g) {
                        csv.push_str(&format!("{ri},{gi}\n"));
                    }
                    write_atomic(&cli.out.join(format!("rdf_{a}_{b}.csv")), csv.as_bytes())?;
                }
                Err(e) => eprintln!("rdf {a}-{b} skipped: {e}"),
            }
        }
    }
    Ok(())
}

fn cmd_corr(
    cli: &Cli,
    checkpoint: &Path,
    dataset: &Path,
    features: Option<&str>,
    irreps: Option<&str>,
) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let params = ModelParams::load(checkpoint)?;
    let ds = read_dataset_auto(dataset)?;
    let mut corr_cfg = cfg.train.corr;
    if let Some(f) = features {
        corr_cfg.source = match f {
            "edge" => FeatureSource::Edge,
            "node" => FeatureSource::Node,
            other => anyhow::bail!("--features must be edge|node, got '{other}'"),
        };
    }
    if let Some(ir) = irreps {
        corr_cfg.irreps = match ir {
            "0e" => IrrepMode::Only0e,
            "1o" => IrrepMode::Only1o,
            "both" => IrrepMode::BothMixed,
            "both_summed" => IrrepMode::BothSummed,
            other => anyhow::bail!("--irreps must be 0e|1o|both|both_summed, got '{other}'"),
        };
    }
    let report = dataset_corr_value(&params, &ds, &corr_cfg)?;
    std::fs::create_dir_all(&cli.out)?;
    write_atomic(
        &cli.out.join("corr.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    println!("corr value {:.6}", report.scalar);
    Ok(())
}

fn cmd_rdf(cli: &Cli, dump: &Path, pair: &str, r_max: f64, bins: usize) -> anyhow::Result<()> {
    let traj = parse_dump(&std::fs::read_to_string(dump)?)?;
    let (a, b) = pair
        .split_once([':', '-'])
        .ok_or_else(|| anyhow::anyhow!("--pair must look like 1:2"))?;
    let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
    let (r, g) = rdf(&traj, (a, b), r_max, bins)?;
    std::fs::create_dir_all(&cli.out)?;
    let mut csv = String::from("r,g\n");
    for (ri, gi) in r.iter().zip(&g) {
        csv.push_str(&format!("{ri},{gi}\n"));
    }
    let path = cli.out.join(format!("rdf_{a}_{b}.csv"));
    write_atomic(&path, csv.as_bytes())?;
    println!("{} bins -> {}", bins, path.display());
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.cmd {
        Cmd::Datagen { ratios } => cmd_datagen(cli, ratios).map(|_| ExitCode::SUCCESS),
        Cmd::Train { dataset, val, corr, scheduler, epochs } => cmd_train(
            cli,
            dataset,
            val.as_deref(),
            corr,
            scheduler.as_deref(),
            *epochs,
        )
        .map(|_| ExitCode::SUCCESS),
        Cmd::Simulate { potential, checkpoint, start, steps } => {
            cmd_simulate(cli, potential, checkpoint.as_deref(), start.as_deref(), *steps)
        }
        Cmd::Analyze { dump, masses, rdf } => {
            cmd_analyze(cli, dump, masses.as_deref(), *rdf).map(|_| ExitCode::SUCCESS)
        }
        Cmd::Corr { checkpoint, dataset, features, irreps } => {
            cmd_corr(cli, checkpoint, dataset, features.as_deref(), irreps.as_deref())
                .map(|_| ExitCode::SUCCESS)
        }
        Cmd::Rdf { dump, pair, r_max, bins } => {
            cmd_rdf(cli, dump, pair, *r_max, *bins).map(|_| ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
