//! Cutoff-radius edge graph with periodic minimum-image displacements.

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Directed edge list within a cutoff radius.
///
/// Both (i, j) and (j, i) are present for every pair within the cutoff.
/// `disp[e]` is the minimum-image vector from src to dst and `dist[e]` its
/// norm. Edges are sorted by (src, dst).
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    pub edges: Vec<(u32, u32)>,
    pub disp: Vec<[f64; 3]>,
    pub dist: Vec<f64>,
    pub r_max: f64,
    /// Per-atom list of incoming edge indices (edges whose dst is the atom).
    pub incoming: Vec<Vec<u32>>,
}

impl EdgeGraph {
    /// Edge count f, the feature-sample axis for correlation.
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Minimum-image displacement r_j - r_i for an orthorhombic cell.
///
/// Non-periodic axes use the plain difference.
pub fn min_image_disp(ri: &[f64; 3], rj: &[f64; 3], cell: &[f64; 3], pbc: &[bool; 3]) -> [f64; 3] {
    let mut d = [0.0; 3];
    for k in 0..3 {
        let mut x = rj[k] - ri[k];
        if pbc[k] {
            x -= cell[k] * (x / cell[k]).round();
        }
        d[k] = x;
    }
    d
}

fn norm(d: &[f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn check_cutoff(frame: &Frame, r_max: f64) -> Result<()> {
    if !(r_max > 0.0) {
        return Err(Error::Precondition(format!("r_max must be > 0, got {r_max}")));
    }
    for k in 0..3 {
        if frame.pbc[k] && r_max > frame.cell[k] / 2.0 {
            return Err(Error::Precondition(format!(
                "r_max {} exceeds half the cell length {} along axis {} (minimum image invalid)",
                r_max, frame.cell[k], k
            )));
        }
    }
    Ok(())
}

/// Build the directed edge graph with all pairs at minimum-image distance
/// <= r_max. Uses a cell list above 256 atoms, an O(n²) scan otherwise;
/// the two paths produce identical output.
pub fn build_graph(frame: &Frame, r_max: f64) -> Result<EdgeGraph> {
    check_cutoff(frame, r_max)?;
    let pairs = if frame.n_atoms() > 256 {
        candidate_pairs_cell_list(frame, r_max)
    } else {
        candidate_pairs_all(frame.n_atoms())
    };

    let mut raw: Vec<(u32, u32, [f64; 3], f64)> = Vec::new();
    for (i, j) in pairs {
        let d = min_image_disp(
            &frame.positions[i],
            &frame.positions[j],
            &frame.cell,
            &frame.pbc,
        );
        let r = norm(&d);
        if r > 0.0 && r <= r_max {
            raw.push((i as u32, j as u32, d, r));
            raw.push((j as u32, i as u32, [-d[0], -d[1], -d[2]], r));
        }
    }
    raw.sort_by_key(|&(s, d, _, _)| (s, d));

    let n = frame.n_atoms();
    let mut g = EdgeGraph {
        edges: Vec::with_capacity(raw.len()),
        disp: Vec::with_capacity(raw.len()),
        dist: Vec::with_capacity(raw.len()),
        r_max,
        incoming: vec![Vec::new(); n],
    };
    for (e, (s, d, disp, r)) in raw.into_iter().enumerate() {
        g.edges.push((s, d));
        g.disp.push(disp);
        g.dist.push(r);
        g.incoming[d as usize].push(e as u32);
    }
    Ok(g)
}

fn candidate_pairs_all(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push((i, j));
        }
    }
    v
}

/// Candidate pairs (i < j) from a linked-cell decomposition. May contain
/// pairs beyond the cutoff; the caller filters by distance.
fn candidate_pairs_cell_list(frame: &Frame, r_max: f64) -> Vec<(usize, usize)> {
    let n = frame.n_atoms();
    let mut nc = [0usize; 3];
    for k in 0..3 {
        nc[k] = ((frame.cell[k] / r_max).floor() as usize).max(1);
    }
    // With fewer than 3 cells per axis the 27-stencil double counts; fall
    // back to the all-pairs scan.
    if nc.iter().any(|&c| c < 3) {
        return candidate_pairs_all(n);
    }
    let ncells = nc[0] * nc[1] * nc[2];
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); ncells];
    let cell_of = |r: &[f64; 3]| -> usize {
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let mut x = r[k] / frame.cell[k];
            x -= x.floor();
            let c = ((x * nc[k] as f64) as usize).min(nc[k] - 1);
            idx[k] = c;
        }
        (idx[0] * nc[1] + idx[1]) * nc[2] + idx[2]
    };
    for (i, r) in frame.positions.iter().enumerate() {
        cells[cell_of(r)].push(i);
    }

    let mut pairs = Vec::new();
    for cx in 0..nc[0] {
        for cy in 0..nc[1] {
            for cz in 0..nc[2] {
                let home = (cx * nc[1] + cy) * nc[2] + cz;
                for dx in -1isize..=1 {
                    for dy in -1isize..=1 {
                        for dz in -1isize..=1 {
                            let nx = ((cx as isize + dx).rem_euclid(nc[0] as isize)) as usize;
                            let ny = ((cy as isize + dy).rem_euclid(nc[1] as isize)) as usize;
                            let nz = ((cz as isize + dz).rem_euclid(nc[2] as isize)) as usize;
                            let other = (nx * nc[1] + ny) * nc[2] + nz;
                            if other < home {
                                continue;
                            }
                            for &i in &cells[home] {
                                for &j in &cells[other] {
                                    if other == home {
                                        if i < j {
                                            pairs.push((i, j));
                                        }
                                    } else if i < j {
                                        pairs.push((i, j));
                                    } else {
                                        pairs.push((j, i));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Minimum interatomic distance per species pair, minimum image.
///
/// Returns a C×C symmetric matrix of options; entry (a, b) is None when no
/// pair of that combination exists (e.g. a species with a single atom for
/// the same-species entry). Self pairs are excluded.
pub fn min_pair_distances(frame: &Frame) -> Vec<Vec<Option<f64>>> {
    let c = frame.n_species();
    let mut m: Vec<Vec<Option<f64>>> = vec![vec![None; c]; c];
    let n = frame.n_atoms();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = min_image_disp(
                &frame.positions[i],
                &frame.positions[j],
                &frame.cell,
                &frame.pbc,
            );
            let r = norm(&d);
            let (a, b) = (
                (frame.species[i] - 1) as usize,
                (frame.species[j] - 1) as usize,
            );
            let cur = m[a][b];
            if cur.map_or(true, |x| r < x) {
                m[a][b] = Some(r);
                m[b][a] = Some(r);
            }
        }
    }
    m
}
