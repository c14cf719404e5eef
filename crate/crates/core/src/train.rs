//! Training loop: Adam on the flat weight vector, mean-squared force and
//! per-atom energy losses, plus the scheduled feature-decorrelation term.
//!
//! The decorrelation machinery is strictly additive: when the scheduled
//! coefficient is zero for an epoch, no features are captured and no
//! correlation RNG is consumed, so a `c_max = 0` run is bit-identical to a
//! baseline without the machinery.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corr::{corr_loss_tape, sample_edges, sample_space, CorrConfig};
use crate::error::{Error, Result};
use crate::frame::Dataset;
use crate::graph::{build_graph, EdgeGraph};
use crate::model::{forward_tape, predict_batch, ModelConfig, ModelParams};
use crate::sched::{coeff_at, SchedulerConfig};
use crate::tape::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub c_f: f64,
    pub c_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { c_f: 1.0, c_e: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.c_f < 0.0 || self.c_e < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub scheduler: SchedulerConfig,
    pub weights: LossWeights,
    pub corr: CorrConfig,
    /// Validate (and consider checkpointing) every this many epochs; the
    /// final epoch is always validated.
    pub val_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 4,
            lr: 1e-3,
            seed: 0,
            scheduler: SchedulerConfig::default(),
            weights: LossWeights::default(),
            corr: CorrConfig::default(),
            val_interval: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.val_interval == 0 {
            return Err(Error::Config(
                "epochs, batch_size and val_interval must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be > 0".into()));
        }
        self.scheduler.validate()?;
        self.weights.validate()
    }
}

/// Weighted total loss and its components (plain floats, for reporting and
/// for the spreadsheet-style oracle tests).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub loss_f: f64,
    pub loss_e: f64,
    pub loss_corr: f64,
}

/// Combine pre-computed component losses per the weighted sum.
pub fn total_loss(loss_f: f64, loss_e: f64, loss_corr: f64, w: &LossWeights, c: f64) -> LossComponents {
    LossComponents {
        total: w.c_f * loss_f + w.c_e * loss_e + c * loss_corr,
        loss_f,
        loss_e,
        loss_corr,
    }
}

/// Mean-squared force-component error and mean-squared per-atom energy
/// error over a batch of (prediction, frame) pairs.
pub fn batch_mse(
    preds: &[(f64, Vec<[f64; 3]>)],
    frames: &[crate::frame::Frame],
) -> Result<(f64, f64)> {
    if preds.len() != frames.len() || frames.is_empty() {
        return Err(Error::Precondition("prediction/target shape mismatch".into()));
    }
    let mut sse_f = 0.0;
    let mut n_comp = 0usize;
    let mut sse_e = 0.0;
    for ((e_pred, f_pred), frame) in preds.iter().zip(frames) {
        let f_ref = frame
            .forces
            .as_ref()
            .ok_or_else(|| Error::Precondition("frame lacks force labels".into()))?;
        let e_ref = frame
            .energy
            .ok_or_else(|| Error::Precondition("frame lacks an energy label".into()))?;
        if f_pred.len() != f_ref.len() {
            return Err(Error::Precondition("force shape mismatch".into()));
        }
        for (a, b) in f_pred.iter().zip(f_ref) {
            for k in 0..3 {
                sse_f += (a[k] - b[k]).powi(2);
                n_comp += 1;
            }
        }
        let n = frame.n_atoms() as f64;
        sse_e += ((e_pred - e_ref) / n).powi(2);
    }
    Ok((sse_f / n_comp as f64, sse_e / preds.len() as f64))
}

/// Force and energy mean absolute errors in meV/Å and meV/atom.
pub fn evaluate_mae(params: &ModelParams, ds: &Dataset) -> Result<(f64, f64)> {
    if ds.frames.is_empty() {
        return Err(Error::Precondition("empty dataset".into()));
    }
    let preds = predict_batch(params, &ds.frames)?;
    let mut abs_f = 0.0;
    let mut n_comp = 0usize;
    let mut abs_e = 0.0;
    for ((e_pred, f_pred), frame) in preds.iter().zip(&ds.frames) {
        let f_ref = frame
            .forces
            .as_ref()
            .ok_or_else(|| Error::Precondition("frame lacks force labels".into()))?;
        let e_ref = frame
            .energy
            .ok_or_else(|| Error::Precondition("frame lacks an energy label".into()))?;
        for (a, b) in f_pred.iter().zip(f_ref) {
            for k in 0..3 {
                abs_f += (a[k] - b[k]).abs();
                n_comp += 1;
            }
        }
        abs_e += (e_pred - e_ref).abs() / frame.n_atoms() as f64;
    }
    Ok((
        1000.0 * abs_f / n_comp as f64,
        1000.0 * abs_e / ds.frames.len() as f64,
    ))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_f: f64,
    pub loss_e: f64,
    pub loss_corr: f64,
    pub c_corr: f64,
    pub fmae_val: Option<f64>,
    pub emae_val: Option<f64>,
    pub sec_per_epoch: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    /// Best-validation parameters.
    pub params: ModelParams,
    /// Parameters after the last epoch.
    pub final_params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_fmae: f64,
    pub warnings: Vec<String>,
}

impl TrainState {
    pub fn metrics_csv(&self) -> String {
        let mut out =
            String::from("epoch,loss_f,loss_e,loss_corr,c_corr,FMAE_val,EMAE_val,sec_per_epoch\n");
        for r in &self.history {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.loss_f,
                r.loss_e,
                r.loss_corr,
                r.c_corr,
                opt(r.fmae_val),
                opt(r.emae_val),
                r.sec_per_epoch
            ));
        }
        out
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..weights.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            weights[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Per-frame recorded loss: builds forces through a second differentiation
/// of the recorded energy, then returns the scalar loss variable plus the
/// float components (already weighted into batch-mean form by the caller's
/// scale factors).
struct FrameLoss {
    total: crate::tape::Var,
    sse_f: f64,
    se_e: f64,
    corr: f64,
}

#[allow(clippy::too_many_arguments)]
fn frame_loss_tape(
    tape: &mut Tape,
    params: &ModelParams,
    frame: &crate::frame::Frame,
    graph: &EdgeGraph,
    w: &LossWeights,
    c_corr: f64,
    inv_3n_batch: f64,
    inv_batch: f64,
    corr_indices: Option<&[usize]>,
    corr_cfg: &CorrConfig,
) -> Result<(FrameLoss, Vec<crate::tape::Var>)> {
    tape.clear();
    let capture = corr_indices.is_some();
    let fp = forward_tape(tape, params, frame, graph, capture)?;
    let f_ref = frame
        .forces
        .as_ref()
        .ok_or_else(|| Error::Precondition("frame lacks force labels".into()))?;
    let e_ref = frame
        .energy
        .ok_or_else(|| Error::Precondition("frame lacks an energy label".into()))?;

    // Forces as tape variables via a recorded backward pass.
    let adj = tape.grad_graph(fp.energy);
    let mut sq_terms = Vec::with_capacity(3 * frame.n_atoms());
    let mut sse_f = 0.0;
    for (i, pos) in fp.positions.iter().enumerate() {
        for k in 0..3 {
            let force = match adj[pos[k].0 as usize] {
                Some(a) => tape.neg(a),
                None => tape.leaf(0.0),
            };
            let diff = tape.add_const(force, -f_ref[i][k]);
            sse_f += (tape.val(force) - f_ref[i][k]).powi(2);
            sq_terms.push(tape.square(diff));
        }
    }
    let sse_f_var = tape.sum(&sq_terms);

    let n = frame.n_atoms() as f64;
    let e_per_atom = tape.scale(fp.energy, 1.0 / n);
    let e_diff = tape.add_const(e_per_atom, params.energy_shift - e_ref / n);
    let se_e_var = tape.square(e_diff);
    let se_e = tape.val(se_e_var);

    let f_term = tape.scale(sse_f_var, w.c_f * inv_3n_batch);
    let e_term = tape.scale(se_e_var, w.c_e * inv_batch);
    let mut total = tape.add(f_term, e_term);

    let mut corr = 0.0;
    if let Some(indices) = corr_indices {
        let corr_var = corr_loss_tape(tape, &fp.layers, indices, corr_cfg)?;
        corr = tape.val(corr_var);
        let c_term = tape.scale(corr_var, c_corr * inv_batch);
        total = tape.add(total, c_term);
    }

    Ok((FrameLoss { total, sse_f, se_e, corr }, fp.params))
}

/// Full training run. Deterministic given the seed; retains the parameters
/// with the best validation FMAE.
pub fn train(
    ds_train: &Dataset,
    ds_val: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainState> {
    cfg.validate()?;
    if ds_train.frames.is_empty() || ds_val.frames.is_empty() {
        return Err(Error::Precondition("training and validation sets must be non-empty".into()));
    }
    let mut warnings = Vec::new();
    if cfg.scheduler.c_max > cfg.weights.c_f.max(cfg.weights.c_e) {
        warnings.push(format!(
            "scheduler c_max {} exceeds max(c_f, c_e) = {}; the correlation term may dominate",
            cfg.scheduler.c_max,
            cfg.weights.c_f.max(cfg.weights.c_e)
        ));
    }

    let mut params = ModelParams::init(model_cfg.clone(), cfg.seed);
    // Per-atom energy shift from the training labels; kept fixed.
    let mut shift = 0.0;
    for f in &ds_train.frames {
        shift += f
            .energy
            .ok_or_else(|| Error::Precondition("frame lacks an energy label".into()))?
            / f.n_atoms() as f64;
    }
    params.energy_shift = shift / ds_train.frames.len() as f64;

    // Pre-build graphs once; frames are static during training.
    let graphs: Vec<EdgeGraph> = ds_train
        .frames
        .iter()
        .map(|f| build_graph(f, model_cfg.r_max))
        .collect::<Result<_>>()?;

    let mut opt = Adam::new(params.weights.len(), cfg.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed_ba7c));
    let mut tape = Tape::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_fmae = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    // Dedicated stream for correlation-loss row sampling so the baseline
    // RNG sequence is untouched when the coefficient is zero.
    let mut corr_counter: u64 = 0;

    let mut order: Vec<usize> = (0..ds_train.frames.len()).collect();
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        // Coefficient updated before the epoch.
        let c = coeff_at(&cfg.scheduler, epoch as u64);
        order.shuffle(&mut shuffle_rng);

        let mut ep_loss_f = 0.0;
        let mut ep_loss_e = 0.0;
        let mut ep_loss_corr = 0.0;
        let mut n_batches = 0usize;

        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let n_comp: usize = batch
                .iter()
                .map(|&i| 3 * ds_train.frames[i].n_atoms())
                .sum();
            let inv_3n = 1.0 / n_comp as f64;
            let inv_b = 1.0 / batch.len() as f64;

            let mut grad = vec![0.0; params.weights.len()];
            let mut b_loss_f = 0.0;
            let mut b_loss_e = 0.0;
            let mut b_loss_corr = 0.0;

            for &fi in batch {
                let frame = &ds_train.frames[fi];
                let graph = &graphs[fi];
                let indices = if c > 0.0 {
                    let space = sample_space(&cfg.corr, graph, frame.n_atoms());
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.corr.seed);
                    rng.set_stream(corr_counter);
                    corr_counter += 1;
                    Some(sample_edges(space, cfg.corr.sampling, &mut rng))
                } else {
                    None
                };
                let (fl, pvars) = frame_loss_tape(
                    &mut tape,
                    &params,
                    frame,
                    graph,
                    &cfg.weights,
                    c,
                    inv_3n,
                    inv_b,
                    indices.as_deref(),
                    &cfg.corr,
                )?;
                if !tape.val(fl.total).is_finite() {
                    return Err(Error::Numeric(format!(
                        "training diverged: non-finite loss at epoch {epoch}, batch {batch_no}"
                    )));
                }
                let g = tape.grad_values(fl.total);
                for (gi, pv) in grad.iter_mut().zip(&pvars) {
                    *gi += g[pv.0 as usize];
                }
                b_loss_f += fl.sse_f * inv_3n;
                b_loss_e += fl.se_e * inv_b;
                b_loss_corr += fl.corr * inv_b;
            }

            if grad.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite gradient at epoch {epoch}, batch {batch_no}"
                )));
            }
            opt.step(&mut params.weights, &grad);
            ep_loss_f += b_loss_f;
            ep_loss_e += b_loss_e;
            ep_loss_corr += b_loss_corr;
            n_batches += 1;
        }

        let nb = n_batches as f64;
        let validate_now = (epoch + 1) % cfg.val_interval == 0 || epoch + 1 == cfg.epochs;
        let (fmae_val, emae_val) = if validate_now {
            let (f, e) = evaluate_mae(&params, ds_val)?;
            if f < best_fmae {
                best_fmae = f;
                best_epoch = epoch;
                best_params = params.clone();
            }
            (Some(f), Some(e))
        } else {
            (None, None)
        };
        history.push(EpochRecord {
            epoch,
            loss_f: ep_loss_f / nb,
            loss_e: ep_loss_e / nb,
            loss_corr: ep_loss_corr / nb,
            c_corr: c,
            fmae_val,
            emae_val,
            sec_per_epoch: t0.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainState {
        params: best_params,
        final_params: params,
        history,
        best_epoch,
        best_fmae,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OverheadReport {
    pub sec_per_epoch_a: f64,
    pub sec_per_epoch_b: f64,
    pub ratio: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median seconds/epoch for two training configurations plus their ratio
/// (B relative to A).
pub fn measure_overhead(
    ds_train: &Dataset,
    ds_val: &Dataset,
    model_cfg: &ModelConfig,
    cfg_a: &TrainConfig,
    cfg_b: &TrainConfig,
    epochs: usize,
) -> Result<OverheadReport> {
    if epochs < 5 {
        return Err(Error::Config("overhead measurement needs >= 5 epochs".into()));
    }
    // Interleave the two configurations round by round so that slow drifts in
    // machine speed (frequency scaling, cache pressure) hit both sides
    // equally instead of biasing whichever config runs second.
    let mut a = cfg_a.clone();
    a.epochs = 1;
    let mut b = cfg_b.clone();
    b.epochs = 1;
    let one_epoch = |cfg: &TrainConfig| -> Result<f64> {
        let state = train(ds_train, ds_val, model_cfg, cfg)?;
        Ok(state.history[0].sec_per_epoch)
    };
    // Warm-up round, discarded: first epochs pay allocator growth.
    one_epoch(&a)?;
    one_epoch(&b)?;
    let mut secs_a = Vec::with_capacity(epochs);
    let mut secs_b = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        secs_a.push(one_epoch(&a)?);
        secs_b.push(one_epoch(&b)?);
    }
    let sec_a = median(secs_a);
    let sec_b = median(secs_b);
    Ok(OverheadReport { sec_per_epoch_a: sec_a, sec_per_epoch_b: sec_b, ratio: sec_b / sec_a })
}

/// Deterministic per-epoch work measure: total tape nodes recorded across one
/// epoch's loss evaluations. Single-threaded epoch time is proportional to
/// this count, and unlike wall clock it is immune to machine-speed jitter.
pub fn epoch_tape_ops(
    ds_train: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<u64> {
    cfg.validate()?;
    let params = ModelParams::init(model_cfg.clone(), cfg.seed);
    let graphs: Vec<EdgeGraph> = ds_train
        .frames
        .iter()
        .map(|f| crate::graph::build_graph(f, model_cfg.r_max))
        .collect::<Result<_>>()?;
    let c = crate::sched::coeff_at(&cfg.scheduler, 0);
    let mut corr_rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.corr.seed);
    let mut tape = Tape::new();
    let mut ops = 0u64;
    let inv_batch = 1.0 / cfg.batch_size.min(ds_train.frames.len()) as f64;
    for (frame, graph) in ds_train.frames.iter().zip(&graphs) {
        let indices = if c > 0.0 {
            Some(crate::corr::sample_edges(
                graph.edges.len(),
                cfg.corr.sampling,
                &mut corr_rng,
            ))
        } else {
            None
        };
        let inv_3n = inv_batch / (3.0 * frame.n_atoms() as f64);
        frame_loss_tape(
            &mut tape,
            &params,
            frame,
            graph,
            &cfg.weights,
            c,
            inv_3n,
            inv_batch,
            indices.as_deref(),
            &cfg.corr,
        )?;
        ops += tape.len() as u64;
    }
    Ok(ops)
}
