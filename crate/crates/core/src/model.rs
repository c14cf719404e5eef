//! Edge-based message-passing force field.
//!
//! The architecture is deliberately small: a per-edge two-body embedding
//! (species-pair one-hot ⊕ radial Bessel basis under a smooth polynomial
//! cutoff envelope), followed by L blocks that mix edge scalars with
//! aggregated neighbor scalars and build vector (1o) features from learned
//! gates on unit bond vectors plus aggregated neighbor vectors. The energy
//! is a sum of per-edge terms read off the last-layer scalars; forces are
//! the exact negative gradient with respect to positions, obtained from the
//! tape.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::graph::EdgeGraph;
use crate::tape::{Tape, Var};

/// Rotation-order/parity channel of a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrrepTag {
    Scalar0e,
    Vector1o,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_species: usize,
    /// Message-passing block count L (>= 1).
    pub layers: usize,
    /// Feature channels per layer per irrep.
    pub dim: usize,
    pub n_basis: usize,
    /// Model cutoff, Å.
    pub r_max: f64,
    /// Polynomial cutoff envelope power p.
    pub envelope_p: u32,
    /// Aggregation normalizer (average neighbor count).
    pub avg_neighbors: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_species: 2,
            layers: 2,
            dim: 4,
            n_basis: 4,
            r_max: 4.5,
            envelope_p: 6,
            avg_neighbors: 8.0,
        }
    }
}

/// Flat weight ranges for one message-passing block.
struct BlockOffsets {
    w_scalar: std::ops::Range<usize>,
    b_scalar: std::ops::Range<usize>,
    w_gate: std::ops::Range<usize>,
    w_vmix: std::ops::Range<usize>,
}

impl ModelConfig {
    fn embed_in(&self) -> usize {
        self.n_species * self.n_species + self.n_basis
    }

    fn block_offsets(&self, l: usize) -> BlockOffsets {
        let d = self.dim;
        let embed = d * self.embed_in() + d;
        let per_block = d * 3 * d + d + d * d + d;
        let base = embed + l * per_block;
        let w_scalar = base..base + d * 3 * d;
        let b_scalar = w_scalar.end..w_scalar.end + d;
        let w_gate = b_scalar.end..b_scalar.end + d * d;
        let w_vmix = w_gate.end..w_gate.end + d;
        BlockOffsets {
            w_scalar,
            b_scalar,
            w_gate,
            w_vmix,
        }
    }

    fn out_offsets(&self) -> (std::ops::Range<usize>, usize) {
        let d = self.dim;
        let embed = d * self.embed_in() + d;
        let per_block = d * 3 * d + d + d * d + d;
        let base = embed + self.layers * per_block;
        (base..base + d, base + d)
    }

    pub fn n_params(&self) -> usize {
        self.out_offsets().1 + 1
    }
}

/// Model parameters: configuration, flat weight vector and normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: Vec<f64>,
    /// Per-atom energy shift (dataset mean), eV.
    pub energy_shift: f64,
}

impl ModelParams {
    /// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per tensor.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0.0; config.n_params()];
        let d = config.dim;
        let fill = |w: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        };
        let embed_in = config.embed_in();
        let embed_end = d * embed_in + d;
        fill(&mut weights[0..embed_end], embed_in, &mut rng);
        for l in 0..config.layers {
            let off = config.block_offsets(l);
            fill(&mut weights[off.w_scalar], 3 * d, &mut rng);
            fill(&mut weights[off.b_scalar.clone()], 3 * d, &mut rng);
            fill(&mut weights[off.w_gate], d, &mut rng);
            fill(&mut weights[off.w_vmix], d, &mut rng);
        }
        let (out_w, out_b) = config.out_offsets();
        fill(&mut weights[out_w], d, &mut rng);
        fill(&mut weights[out_b..out_b + 1], d, &mut rng);
        Self {
            config,
            weights,
            energy_shift: 0.0,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::atomic::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let p: ModelParams = serde_json::from_str(&text)?;
        if p.weights.len() != p.config.n_params() {
            return Err(Error::Validation(format!(
                "checkpoint weight count {} does not match configuration ({})",
                p.weights.len(),
                p.config.n_params()
            )));
        }
        Ok(p)
    }
}

/// Captured per-layer features as tape variables.
#[derive(Debug, Clone)]
pub struct LayerFeatures {
    /// Edge scalar (0e) features, [f][dim].
    pub edge_scalars: Vec<Vec<Var>>,
    /// Edge vector (1o) features, [f][dim][3].
    pub edge_vectors: Vec<Vec<[Var; 3]>>,
    /// Node scalar features, [n][dim].
    pub node_scalars: Vec<Vec<Var>>,
}

/// Result of one recorded forward pass.
pub struct ForwardPass {
    /// Total energy without the per-atom shift.
    pub energy: Var,
    pub edge_energies: Vec<Var>,
    /// Position leaves, [n][3].
    pub positions: Vec<[Var; 3]>,
    /// Parameter leaves in flat weight order.
    pub params: Vec<Var>,
    /// Captured features for layers 1..=L; empty unless capture requested.
    pub layers: Vec<LayerFeatures>,
}

/// Smooth polynomial cutoff envelope of power p on x = r/r_max.
/// u(0) = 1, u(1) = 0 with p-fold smoothness at the cutoff.
fn envelope(t: &mut Tape, x: Var, p: u32) -> Var {
    let p = p as i32;
    let pf = p as f64;
    let c1 = -(pf + 1.0) * (pf + 2.0) / 2.0;
    let c2 = pf * (pf + 2.0);
    let c3 = -pf * (pf + 1.0) / 2.0;
    let xp = t.powi(x, p);
    let xp1 = t.mul(xp, x);
    let xp2 = t.mul(xp1, x);
    let t1 = t.scale(xp, c1);
    let t2 = t.scale(xp1, c2);
    let t3 = t.scale(xp2, c3);
    let s = t.add(t1, t2);
    let s = t.add(s, t3);
    t.add_const(s, 1.0)
}

fn linear(t: &mut Tape, w: &[Var], bias: Option<Var>, inputs: &[Var]) -> Var {
    debug_assert_eq!(w.len(), inputs.len());
    let mut acc = match bias {
        Some(b) => b,
        None => t.leaf(0.0),
    };
    for (&wi, &xi) in w.iter().zip(inputs) {
        let p = t.mul(wi, xi);
        acc = t.add(acc, p);
    }
    acc
}

/// Record the full forward pass on `tape`.
///
/// Positions and all weights become tape leaves, so both forces (gradient
/// w.r.t. positions) and parameter gradients are available afterwards.
pub fn forward_tape(
    tape: &mut Tape,
    params: &ModelParams,
    frame: &Frame,
    graph: &EdgeGraph,
    capture: bool,
) -> Result<ForwardPass> {
    let cfg = &params.config;
    let n = frame.n_atoms();
    let f = graph.n_edges();
    let d = cfg.dim;

    let pvars: Vec<Var> = params.weights.iter().map(|&w| tape.leaf(w)).collect();
    let positions: Vec<[Var; 3]> = frame
        .positions
        .iter()
        .map(|r| [tape.leaf(r[0]), tape.leaf(r[1]), tape.leaf(r[2])])
        .collect();

    if f == 0 {
        let energy = tape.leaf(0.0);
        return Ok(ForwardPass {
            energy,
            edge_energies: Vec::new(),
            positions,
            params: pvars,
            layers: Vec::new(),
        });
    }

    for &s in &frame.species {
        if (s as usize) > cfg.n_species {
            return Err(Error::Validation(format!(
                "species id {s} exceeds model n_species {}",
                cfg.n_species
            )));
        }
    }

    // Edge geometry: displacement re-expressed through the position leaves
    // with the image shift (a constant) taken from the prebuilt graph.
    let mut dist: Vec<Var> = Vec::with_capacity(f);
    let mut unit: Vec<[Var; 3]> = Vec::with_capacity(f);
    let mut env: Vec<Var> = Vec::with_capacity(f);
    for e in 0..f {
        let (i, j) = graph.edges[e];
        let (i, j) = (i as usize, j as usize);
        let mut comps = [Var(0); 3];
        for k in 0..3 {
            let shift = graph.disp[e][k] - (frame.positions[j][k] - frame.positions[i][k]);
            let diff = tape.sub(positions[j][k], positions[i][k]);
            comps[k] = tape.add_const(diff, shift);
        }
        let sq0 = tape.square(comps[0]);
        let sq1 = tape.square(comps[1]);
        let sq2 = tape.square(comps[2]);
        let s01 = tape.add(sq0, sq1);
        let r2 = tape.add(s01, sq2);
        let r = tape.sqrt(r2);
        let u = [
            tape.div(comps[0], r),
            tape.div(comps[1], r),
            tape.div(comps[2], r),
        ];
        let x = tape.scale(r, 1.0 / cfg.r_max);
        dist.push(r);
        unit.push(u);
        env.push(envelope(tape, x, cfg.envelope_p));
    }

    // Two-body embedding: species-pair one-hot ⊕ radial Bessel basis.
    let c = cfg.n_species;
    let embed_w = &pvars[0..d * cfg.embed_in()];
    let embed_b = &pvars[d * cfg.embed_in()..d * cfg.embed_in() + d];
    let basis_pref = (2.0 / cfg.r_max).sqrt();
    let mut x_prev: Vec<Vec<Var>> = Vec::with_capacity(f);
    for e in 0..f {
        let (i, j) = graph.edges[e];
        let pair = (frame.species[i as usize] as usize - 1) * c
            + (frame.species[j as usize] as usize - 1);
        // Bessel-like basis b_k = sqrt(2/rc) sin(kπ r/rc)/r · env
        let mut basis = Vec::with_capacity(cfg.n_basis);
        for k in 1..=cfg.n_basis {
            let arg = tape.scale(dist[e], k as f64 * std::f64::consts::PI / cfg.r_max);
            let s = tape.sin(arg);
            let sr = tape.div(s, dist[e]);
            let be = tape.mul(sr, env[e]);
            basis.push(tape.scale(be, basis_pref));
        }
        let mut feats = Vec::with_capacity(d);
        for ch in 0..d {
            let row = &embed_w[ch * cfg.embed_in()..(ch + 1) * cfg.embed_in()];
            // One-hot input: only the pair column and the basis columns
            // contribute; the remaining products are identically zero.
            let mut acc = tape.add(embed_b[ch], row[pair]);
            for (k, &b) in basis.iter().enumerate() {
                let p = tape.mul(row[c * c + k], b);
                acc = tape.add(acc, p);
            }
            feats.push(tape.tanh(acc));
        }
        x_prev.push(feats);
    }

    let zero = tape.leaf(0.0);
    let mut v_prev: Vec<Vec<[Var; 3]>> = vec![vec![[zero; 3]; d]; f];
    let agg_norm = 1.0 / cfg.avg_neighbors.max(1.0).sqrt();
    let mut layers: Vec<LayerFeatures> = Vec::new();

    for l in 0..cfg.layers {
        let off = cfg.block_offsets(l);
        let w_scalar = &pvars[off.w_scalar.clone()];
        let b_scalar = &pvars[off.b_scalar.clone()];
        let w_gate = &pvars[off.w_gate.clone()];
        let w_vmix = &pvars[off.w_vmix.clone()];

        // Aggregated neighbor scalars per atom.
        let mut agg: Vec<Vec<Var>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut a = Vec::with_capacity(d);
            for ch in 0..d {
                let terms: Vec<Var> = graph.incoming[i]
                    .iter()
                    .map(|&e| x_prev[e as usize][ch])
                    .collect();
                let s = tape.sum(&terms);
                a.push(tape.scale(s, agg_norm));
            }
            agg.push(a);
        }

        // Aggregated neighbor vectors per atom (skipped for the first
        // block, where all vectors are identically zero).
        let vec_agg: Option<Vec<Vec<[Var; 3]>>> = if l == 0 {
            None
        } else {
            let mut va = Vec::with_capacity(n);
            for i in 0..n {
                let mut per_ch = Vec::with_capacity(d);
                for ch in 0..d {
                    let mut comp = [zero; 3];
                    for k in 0..3 {
                        let terms: Vec<Var> = graph.incoming[i]
                            .iter()
                            .map(|&e| v_prev[e as usize][ch][k])
                            .collect();
                        let s = tape.sum(&terms);
                        comp[k] = tape.scale(s, agg_norm);
                    }
                    per_ch.push(comp);
                }
                va.push(per_ch);
            }
            Some(va)
        };

        let mut x_new: Vec<Vec<Var>> = Vec::with_capacity(f);
        let mut v_new: Vec<Vec<[Var; 3]>> = Vec::with_capacity(f);
        for e in 0..f {
            let src = graph.edges[e].0 as usize;
            // Invariant inputs: own scalars, source-node aggregate, and
            // (from the second block on) bond-projected vector features.
            let mut inputs: Vec<Var> = Vec::with_capacity(3 * d);
            inputs.extend_from_slice(&x_prev[e]);
            inputs.extend_from_slice(&agg[src]);
            if l > 0 {
                for ch in 0..d {
                    let px = tape.mul(v_prev[e][ch][0], unit[e][0]);
                    let py = tape.mul(v_prev[e][ch][1], unit[e][1]);
                    let pz = tape.mul(v_prev[e][ch][2], unit[e][2]);
                    let s = tape.add(px, py);
                    inputs.push(tape.add(s, pz));
                }
            }
            let in_width = inputs.len();
            let mut xs = Vec::with_capacity(d);
            for ch in 0..d {
                let row = &w_scalar[ch * 3 * d..ch * 3 * d + in_width];
                let pre = linear(tape, row, Some(b_scalar[ch]), &inputs);
                xs.push(tape.tanh(pre));
            }

            let mut vs = Vec::with_capacity(d);
            for ch in 0..d {
                let gate = linear(tape, &w_gate[ch * d..(ch + 1) * d], None, &xs);
                let mut comp = [zero; 3];
                for k in 0..3 {
                    let g = tape.mul(gate, unit[e][k]);
                    comp[k] = match &vec_agg {
                        Some(va) => {
                            let mixed = tape.mul(w_vmix[ch], va[src][ch][k]);
                            tape.add(g, mixed)
                        }
                        None => g,
                    };
                }
                vs.push(comp);
            }
            x_new.push(xs);
            v_new.push(vs);
        }

        // Per-layer numeric health check (cheap scan over stored values).
        for xe in &x_new {
            for &v in xe {
                if !tape.val(v).is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite edge feature in layer {}",
                        l + 1
                    )));
                }
            }
        }

        if capture {
            // Node features for this layer: aggregation of the new scalars.
            let mut node_scalars = Vec::with_capacity(n);
            for i in 0..n {
                let mut a = Vec::with_capacity(d);
                for ch in 0..d {
                    let terms: Vec<Var> = graph.incoming[i]
                        .iter()
                        .map(|&e| x_new[e as usize][ch])
                        .collect();
                    let s = tape.sum(&terms);
                    a.push(tape.scale(s, agg_norm));
                }
                node_scalars.push(a);
            }
            layers.push(LayerFeatures {
                edge_scalars: x_new.clone(),
                edge_vectors: v_new.clone(),
                node_scalars,
            });
        }

        x_prev = x_new;
        v_prev = v_new;
    }

    // Per-edge energy head on last-layer scalars, smoothly switched off at
    // the cutoff by the envelope.
    let (out_w_range, out_b_idx) = cfg.out_offsets();
    let out_w = &pvars[out_w_range];
    let out_b = pvars[out_b_idx];
    let mut edge_energies = Vec::with_capacity(f);
    for e in 0..f {
        let head = linear(tape, out_w, Some(out_b), &x_prev[e]);
        edge_energies.push(tape.mul(head, env[e]));
    }
    let energy = tape.sum(&edge_energies);
    if !tape.val(energy).is_finite() {
        return Err(Error::Numeric("non-finite total energy".into()));
    }

    Ok(ForwardPass {
        energy,
        edge_energies,
        positions,
        params: pvars,
        layers,
    })
}

/// Total energy in eV (including the per-atom shift).
pub fn energy(params: &ModelParams, frame: &Frame, graph: &EdgeGraph) -> Result<f64> {
    let mut tape = Tape::new();
    let fp = forward_tape(&mut tape, params, frame, graph, false)?;
    Ok(tape.val(fp.energy) + params.energy_shift * frame.n_atoms() as f64)
}

/// Energy and forces F = -dE/dr, eV and eV/Å.
pub fn energy_forces(
    params: &ModelParams,
    frame: &Frame,
    graph: &EdgeGraph,
) -> Result<(f64, Vec<[f64; 3]>)> {
    let mut tape = Tape::new();
    energy_forces_on(&mut tape, params, frame, graph)
}

/// Same as [`energy_forces`] but reusing a caller-provided tape (cleared
/// first); avoids per-step allocation in MD loops.
pub fn energy_forces_on(
    tape: &mut Tape,
    params: &ModelParams,
    frame: &Frame,
    graph: &EdgeGraph,
) -> Result<(f64, Vec<[f64; 3]>)> {
    tape.clear();
    let fp = forward_tape(tape, params, frame, graph, false)?;
    let adj = tape.grad_values(fp.energy);
    let forces: Vec<[f64; 3]> = fp
        .positions
        .iter()
        .map(|p| {
            [
                -adj[p[0].0 as usize],
                -adj[p[1].0 as usize],
                -adj[p[2].0 as usize],
            ]
        })
        .collect();
    if forces.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite force".into()));
    }
    Ok((
        tape.val(fp.energy) + params.energy_shift * frame.n_atoms() as f64,
        forces,
    ))
}

/// Map energy/forces over a batch of frames; errors carry the frame index.
pub fn predict_batch(
    params: &ModelParams,
    frames: &[Frame],
) -> Result<Vec<(f64, Vec<[f64; 3]>)>> {
    let mut tape = Tape::new();
    frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let graph = crate::graph::build_graph(frame, params.config.r_max)
                .map_err(|e| Error::Validation(format!("frame {i}: {e}")))?;
            energy_forces_on(&mut tape, params, frame, &graph)
                .map_err(|e| Error::Numeric(format!("frame {i}: {e}")))
        })
        .collect()
}
