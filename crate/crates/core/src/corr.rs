//! Feature correlation: |Pearson| matrices on sampled edges, per-layer and
//! total correlation losses, and the dataset-level scalar correlation value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Dataset;
use crate::graph::EdgeGraph;
use crate::model::{forward_tape, LayerFeatures, ModelParams};
use crate::tape::{Tape, Var};

/// Variance guard in the Pearson denominator.
pub const PEARSON_EPS: f64 = 1e-12;

/// Which features feed the correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Edge,
    Node,
}

/// Irrep channels entering the correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrrepMode {
    Only0e,
    Only1o,
    /// 0e columns and per-component 1o columns side by side.
    BothMixed,
    /// Separate 0e and 1o correlation losses, added.
    BothSummed,
}

/// Edge (or atom) sample-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplePolicy {
    /// ceil(sqrt(f)) samples.
    SqrtF,
    /// min(s, f) samples.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrConfig {
    pub source: FeatureSource,
    pub irreps: IrrepMode,
    pub sampling: SamplePolicy,
    /// Represent each 1o channel by its vector norm instead of stacking the
    /// three Cartesian components along the sample axis.
    pub one_o_norms: bool,
    pub seed: u64,
}

impl Default for CorrConfig {
    fn default() -> Self {
        Self {
            source: FeatureSource::Edge,
            irreps: IrrepMode::Only1o,
            sampling: SamplePolicy::SqrtF,
            one_o_norms: false,
            seed: 0,
        }
    }
}

/// |Pearson| matrix of one layer's features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMatrix {
    /// dim×dim row-major values, all in [0, 1].
    pub values: Vec<Vec<f64>>,
    pub layer: usize,
    pub samples: usize,
}

impl CorrMatrix {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Uniform distinct sample of `count(policy)` indices out of `f`, sorted.
pub fn sample_edges(f: usize, policy: SamplePolicy, rng: &mut impl rand::Rng) -> Vec<usize> {
    if f == 0 {
        return Vec::new();
    }
    let want = match policy {
        SamplePolicy::SqrtF => (f as f64).sqrt().ceil() as usize,
        SamplePolicy::Fixed(s) => s,
    };
    let count = want.clamp(1, f);
    if count == f {
        return (0..f).collect();
    }
    let mut idx: Vec<usize> = rand::seq::index::sample(rng, f, count).into_vec();
    idx.sort_unstable();
    idx
}

/// Column-major feature matrix: `cols[k]` is feature dimension k over the
/// sample axis.
pub type Columns<T> = Vec<Vec<T>>;

/// |Pearson| correlation matrix of the columns (population covariance,
/// ε-guarded denominator). Zero-variance columns give 0 off-diagonal and 1
/// on the diagonal.
pub fn pearson_abs(cols: &Columns<f64>, layer: usize) -> Result<CorrMatrix> {
    let dim = cols.len();
    let s = cols.first().map(|c| c.len()).unwrap_or(0);
    if s < 2 {
        return Err(Error::Precondition(format!(
            "pearson_abs needs at least 2 samples, got {s}"
        )));
    }
    if cols.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    let inv_s = 1.0 / s as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() * inv_s).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .zip(&means)
        .map(|(c, &m)| c.iter().map(|x| x - m).collect())
        .collect();
    let sigmas: Vec<f64> = centered
        .iter()
        .map(|c| (c.iter().map(|x| x * x).sum::<f64>() * inv_s).sqrt())
        .collect();
    let mut values = vec![vec![0.0; dim]; dim];
    for k in 0..dim {
        values[k][k] = 1.0;
        for j in (k + 1)..dim {
            let cov: f64 = centered[k]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * inv_s;
            let rho = cov.abs() / (sigmas[k] * sigmas[j] + PEARSON_EPS);
            let rho = rho.min(1.0);
            values[k][j] = rho;
            values[j][k] = rho;
        }
    }
    Ok(CorrMatrix {
        values,
        layer,
        samples: s,
    })
}

/// Per-layer correlation loss: Σ|C − I| / (dim·(dim−1)), the mean absolute
/// off-diagonal for a well-formed matrix.
pub fn corr_loss_layer(c: &CorrMatrix) -> Result<f64> {
    let dim = c.dim();
    if dim < 2 {
        return Err(Error::Precondition(
            "correlation loss needs dim >= 2".into(),
        ));
    }
    let mut sum = 0.0;
    for (k, row) in c.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let target = if k == j { 1.0 } else { 0.0 };
            sum += (v - target).abs();
        }
    }
    Ok(sum / (dim * (dim - 1)) as f64)
}

/// Total correlation loss: sum over layers.
pub fn corr_loss_total(per_layer: &[f64]) -> f64 {
    per_layer.iter().sum()
}

/// Feature matrices selected from one captured layer, grouped so that the
/// loss is the sum of per-group losses (one group except for both-summed).
pub fn select_features<T: Copy>(
    layer: &LayerFeatures,
    indices: &[usize],
    cfg: &CorrConfig,
    source_rows: FeatureSource,
    read: impl Fn(Var) -> T,
    norm3: impl Fn([Var; 3]) -> T,
) -> Result<Vec<Columns<T>>> {
    let dim = match source_rows {
        FeatureSource::Edge => layer
            .edge_scalars
            .first()
            .map(|r| r.len())
            .unwrap_or(0),
        FeatureSource::Node => layer
            .node_scalars
            .first()
            .map(|r| r.len())
            .unwrap_or(0),
    };
    let scalars_0e = |idx: &[usize]| -> Columns<T> {
        let rows: &Vec<Vec<Var>> = match source_rows {
            FeatureSource::Edge => &layer.edge_scalars,
            FeatureSource::Node => &layer.node_scalars,
        };
        (0..dim)
            .map(|ch| idx.iter().map(|&i| read(rows[i][ch])).collect())
            .collect()
    };
    let vectors_1o_stacked = |idx: &[usize]| -> Result<Columns<T>> {
        if source_rows == FeatureSource::Node {
            return Err(Error::Config(
                "1o correlation is only defined for edge features".into(),
            ));
        }
        Ok((0..dim)
            .map(|ch| {
                if cfg.one_o_norms {
                    idx.iter()
                        .map(|&i| norm3(layer.edge_vectors[i][ch]))
                        .collect()
                } else {
                    // Stack the 3 Cartesian components along the sample axis.
                    (0..3)
                        .flat_map(|k| idx.iter().map(move |&i| (i, k)))
                        .map(|(i, k)| read(layer.edge_vectors[i][ch][k]))
                        .collect()
                }
            })
            .collect())
    };
    let vectors_1o_component_cols = |idx: &[usize]| -> Columns<T> {
        (0..dim)
            .flat_map(|ch| (0..3).map(move |k| (ch, k)))
            .map(|(ch, k)| {
                idx.iter()
                    .map(|&i| read(layer.edge_vectors[i][ch][k]))
                    .collect()
            })
            .collect()
    };

    match (cfg.irreps, source_rows) {
        (_, FeatureSource::Node) => Ok(vec![scalars_0e(indices)]),
        (IrrepMode::Only0e, _) => Ok(vec![scalars_0e(indices)]),
        (IrrepMode::Only1o, _) => Ok(vec![vectors_1o_stacked(indices)?]),
        (IrrepMode::BothMixed, _) => {
            let mut cols = scalars_0e(indices);
            if cfg.one_o_norms {
                cols.extend(vectors_1o_stacked(indices)?);
            } else {
                cols.extend(vectors_1o_component_cols(indices));
            }
            Ok(vec![cols])
        }
        (IrrepMode::BothSummed, _) => Ok(vec![scalars_0e(indices), vectors_1o_stacked(indices)?]),
    }
}

/// Number of rows available to sample from for the configured source.
pub fn sample_space(cfg: &CorrConfig, graph: &EdgeGraph, n_atoms: usize) -> usize {
    match cfg.source {
        FeatureSource::Edge => graph.n_edges(),
        FeatureSource::Node => n_atoms,
    }
}

/// Recorded (differentiable) total correlation loss over all captured
/// layers, using the given sampled row indices for every layer.
pub fn corr_loss_tape(
    tape: &mut Tape,
    layers: &[LayerFeatures],
    indices: &[usize],
    cfg: &CorrConfig,
) -> Result<Var> {
    let mut per_layer = Vec::with_capacity(layers.len());
    for layer in layers {
        // The norm variant needs tape ops, so it bypasses the generic
        // selector closure.
        let groups = if cfg.one_o_norms {
            select_features_norms_tape(tape, layer, indices, cfg)?
        } else {
            select_features(layer, indices, cfg, cfg.source, |v| v, |v3| v3[0])?
        };
        for cols in groups {
            per_layer.push(pearson_loss_tape(tape, &cols)?);
        }
    }
    Ok(tape.sum(&per_layer))
}

fn select_features_norms_tape(
    tape: &mut Tape,
    layer: &LayerFeatures,
    indices: &[usize],
    cfg: &CorrConfig,
) -> Result<Vec<Columns<Var>>> {
    // Precompute norms once, then reuse the generic selector.
    let mut norms: Vec<Vec<Var>> = Vec::with_capacity(layer.edge_vectors.len());
    for vecs in &layer.edge_vectors {
        let mut per_ch = Vec::with_capacity(vecs.len());
        for v in vecs {
            let s0 = tape.square(v[0]);
            let s1 = tape.square(v[1]);
            let s2 = tape.square(v[2]);
            let a = tape.add(s0, s1);
            let b = tape.add(a, s2);
            let guarded = tape.add_const(b, 1e-24);
            per_ch.push(tape.sqrt(guarded));
        }
        norms.push(per_ch);
    }
    let shadow = LayerFeatures {
        edge_scalars: layer.edge_scalars.clone(),
        edge_vectors: layer
            .edge_vectors
            .iter()
            .enumerate()
            .map(|(e, vecs)| {
                vecs.iter()
                    .enumerate()
                    .map(|(ch, _)| [norms[e][ch]; 3])
                    .collect()
            })
            .collect(),
        node_scalars: layer.node_scalars.clone(),
    };
    let mut cfg2 = *cfg;
    cfg2.one_o_norms = true;
    select_features(&shadow, indices, &cfg2, cfg.source, |v| v, |v3| v3[0])
}

/// Recorded per-layer correlation loss: mean absolute off-diagonal of the
/// |Pearson| matrix of the columns. Equals Eq-style Σ|C−I|/(dim(dim−1))
/// because the diagonal deviation vanishes for non-degenerate columns.
pub fn pearson_loss_tape(tape: &mut Tape, cols: &Columns<Var>) -> Result<Var> {
    let dim = cols.len();
    if dim < 2 {
        return Err(Error::Precondition(
            "correlation loss needs dim >= 2".into(),
        ));
    }
    let s = cols[0].len();
    if s < 2 {
        // Degenerate sample: no usable correlation signal.
        return Ok(tape.leaf(0.0));
    }
    let inv_s = 1.0 / s as f64;
    let mut centered: Vec<Vec<Var>> = Vec::with_capacity(dim);
    let mut sigmas: Vec<Var> = Vec::with_capacity(dim);
    for col in cols {
        let total = tape.sum(col);
        let mean = tape.scale(total, inv_s);
        let c: Vec<Var> = col.iter().map(|&x| tape.sub(x, mean)).collect();
        let sq: Vec<Var> = c.iter().map(|&x| tape.square(x)).collect();
        let var_sum = tape.sum(&sq);
        let var = tape.scale(var_sum, inv_s);
        // Tiny guard inside the sqrt keeps the gradient finite for dead
        // channels; the ε in the denominator below matches pearson_abs.
        let guarded = tape.add_const(var, 1e-24);
        sigmas.push(tape.sqrt(guarded));
        centered.push(c);
    }
    let mut terms = Vec::with_capacity(dim * (dim - 1) / 2);
    for k in 0..dim {
        for j in (k + 1)..dim {
            let prods: Vec<Var> = centered[k]
                .iter()
                .zip(&centered[j])
                .map(|(&a, &b)| tape.mul(a, b))
                .collect();
            let cov_sum = tape.sum(&prods);
            let cov = tape.scale(cov_sum, inv_s);
            let sksj = tape.mul(sigmas[k], sigmas[j]);
            let denom = tape.add_const(sksj, PEARSON_EPS);
            let rho = tape.div(cov, denom);
            terms.push(tape.abs(rho));
        }
    }
    let total = tape.sum(&terms);
    Ok(tape.scale(total, 2.0 / (dim * (dim - 1)) as f64))
}

/// CLI-facing correlation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrReport {
    pub per_layer: Vec<CorrMatrix>,
    /// Mean absolute off-diagonal of the sample-averaged last-layer matrix.
    pub scalar: f64,
    pub sample_sizes: Vec<usize>,
    pub config: CorrConfig,
}

/// Dataset-level correlation value: the last-layer |Pearson| matrix averaged
/// over frames, reduced to its mean absolute off-diagonal.
///
/// Uses all edges when f <= 4096, otherwise a fixed sample of 4096.
pub fn dataset_corr_value(
    params: &ModelParams,
    ds: &Dataset,
    cfg: &CorrConfig,
) -> Result<CorrReport> {
    if ds.is_empty() {
        return Err(Error::Precondition("empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tape = Tape::new();
    let mut acc: Vec<CorrMatrix> = Vec::new();
    let mut sample_sizes = Vec::new();
    let layers_n = params.config.layers;
    for frame in &ds.frames {
        let graph = crate::graph::build_graph(frame, params.config.r_max)?;
        tape.clear();
        let fp = forward_tape(&mut tape, params, frame, &graph, true)?;
        let space = sample_space(cfg, &graph, frame.n_atoms());
        let indices = if space <= 4096 {
            (0..space).collect::<Vec<_>>()
        } else {
            sample_edges(space, SamplePolicy::Fixed(4096), &mut rng)
        };
        sample_sizes.push(indices.len());
        let last = fp
            .layers
            .last()
            .ok_or_else(|| Error::Precondition("model produced no layers".into()))?;
        let groups = select_float_groups(&tape, last, &indices, cfg)?;
        for (gi, cols) in groups.iter().enumerate() {
            let m = pearson_abs(cols, layers_n)?;
            match acc.get_mut(gi) {
                Some(a) => {
                    for (ra, rm) in a.values.iter_mut().zip(&m.values) {
                        for (va, vm) in ra.iter_mut().zip(rm) {
                            *va += vm;
                        }
                    }
                    a.samples += m.samples;
                }
                None => acc.push(m),
            }
        }
    }
    let b = ds.len() as f64;
    for m in &mut acc {
        for row in &mut m.values {
            for v in row.iter_mut() {
                *v /= b;
            }
        }
    }
    let scalar = acc
        .iter()
        .map(|m| corr_loss_layer(m))
        .sum::<Result<f64>>()?;
    Ok(CorrReport {
        per_layer: acc,
        scalar,
        sample_sizes,
        config: *cfg,
    })
}

/// Float feature groups for one captured layer.
pub fn select_float_groups(
    tape: &Tape,
    layer: &LayerFeatures,
    indices: &[usize],
    cfg: &CorrConfig,
) -> Result<Vec<Columns<f64>>> {
    select_features(
        layer,
        indices,
        cfg,
        cfg.source,
        |v| tape.val(v),
        |v3| {
            let (a, b, c) = (tape.val(v3[0]), tape.val(v3[1]), tape.val(v3[2]));
            (a * a + b * b + c * c).sqrt()
        },
    )
}

/// Full per-layer report for a single frame's captured features.
pub fn frame_corr_report(
    tape: &Tape,
    layers: &[LayerFeatures],
    indices: &[usize],
    cfg: &CorrConfig,
) -> Result<Vec<CorrMatrix>> {
    let mut out = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        for cols in select_float_groups(tape, layer, indices, cfg)? {
            out.push(pearson_abs(&cols, l + 1)?);
        }
    }
    Ok(out)
}
