//! Trajectory diagnostics: a product-form stability index, force
//! abnormality, minimum species-pair distances, and radial distribution
//! functions.
//!
//! The index multiplies an atom-count factor, a temperature factor, and one
//! distance factor per species pair, then averages over consecutive snapshot
//! transitions. Two distance-factor flavours exist: `literal` multiplies the
//! raw differences of consecutive minimum pair distances (which collapses to
//! ~0 for any stable run), `ratio` — the default — uses the symmetric
//! min/max ratio so that "unchanged" scores 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::graph::min_pair_distances;
use crate::traj::{ExitStatus, Snapshot, TrajectoryRecord};
use crate::units::temperature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Π_i (r_min_n - r_min_{n-1}) verbatim.
    Literal,
    /// Π_i min(r_n, r_{n-1}) / max(r_n, r_{n-1}), in (0, 1].
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Atom-count exponent.
    pub alpha: f64,
    /// Temperature exponent.
    pub beta: f64,
    /// Thermostat set point the temperature factor compares against, K.
    pub t_set: f64,
    pub mode: DistanceMode,
    /// Limit each per-transition index to [0, 1].
    pub clamp: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            alpha: 1.0,
            beta: 0.25,
            t_set: 120.0,
            mode: DistanceMode::Ratio,
            clamp: true,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        if !(self.t_set > 0.0) {
            return Err(Error::Config("t_set must be > 0".into()));
        }
        Ok(())
    }
}

/// One transition's index with its factor breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionIndex {
    pub step: u64,
    pub atom_factor: f64,
    pub temperature_factor: f64,
    pub distance_factor: f64,
    pub index: f64,
    /// Species pairs skipped because one species had < 2 members.
    pub skipped_pairs: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub s_index: f64,
    pub transitions: Vec<TransitionIndex>,
    /// Minimum distance per species pair per snapshot; pairs keyed in the
    /// same order as `pair_labels`.
    pub pair_labels: Vec<(u32, u32)>,
    pub r_min_series: Vec<Vec<Option<f64>>>,
    pub temperature_series: Vec<Option<f64>>,
    pub force_abnormality_series: Option<Vec<f64>>,
    pub force_abnormality_max: Option<f64>,
    pub crashed: bool,
    pub crash_step: Option<u64>,
    pub config: StabilityConfig,
}

impl StabilityReport {
    /// Flat CSV, one row per snapshot.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,temperature,force_abnormality");
        for (a, b) in &self.pair_labels {
            out.push_str(&format!(",r_min_{a}_{b}"));
        }
        out.push_str(",s_index_transition\n");
        for (n, rmins) in self.r_min_series.iter().enumerate() {
            let step = self
                .transitions
                .get(n.saturating_sub(1))
                .map(|t| if n == 0 { 0 } else { t.step })
                .unwrap_or(0);
            out.push_str(&step.to_string());
            match self.temperature_series[n] {
                Some(t) => out.push_str(&format!(",{t}")),
                None => out.push(','),
            }
            match self.force_abnormality_series.as_ref().map(|s| s[n]) {
                Some(f) => out.push_str(&format!(",{f}")),
                None => out.push(','),
            }
            for r in rmins {
                match r {
                    Some(v) => out.push_str(&format!(",{v}")),
                    None => out.push(','),
                }
            }
            if n == 0 {
                out.push(',');
            } else {
                out.push_str(&format!(",{}", self.transitions[n - 1].index));
            }
            out.push('\n');
        }
        out
    }
}

fn snapshot_frame(snap: &Snapshot) -> Frame {
    let max_species = snap.species.iter().copied().max().unwrap_or(1) as usize;
    Frame {
        species: snap.species.clone(),
        positions: snap.positions.clone(),
        cell: snap.box_lengths,
        pbc: [true; 3],
        energy: None,
        forces: snap.forces.clone(),
        velocities: snap.velocities.clone(),
        masses: vec![1.0; max_species],
    }
}

/// Minimum distances for every species pair (i ≤ j), `None` when a pair is
/// absent (fewer than two atoms across the pair). Padded to `n_species`.
pub fn snapshot_min_distances(snap: &Snapshot, n_species: usize) -> Vec<Vec<Option<f64>>> {
    let m = min_pair_distances(&snapshot_frame(snap));
    (0..n_species)
        .map(|a| {
            (0..n_species)
                .map(|b| m.get(a).and_then(|row| row.get(b)).copied().flatten())
                .collect()
        })
        .collect()
}

/// Index for the transition `prev` -> `cur`.
pub fn snapshot_index(
    prev: &Snapshot,
    cur: &Snapshot,
    n0: usize,
    cfg: &StabilityConfig,
) -> Result<TransitionIndex> {
    cfg.validate()?;
    let t_n = cur
        .temperature
        .ok_or_else(|| Error::Precondition("snapshot carries no temperature".into()))?;
    let n_species = prev
        .species
        .iter()
        .chain(cur.species.iter())
        .copied()
        .max()
        .unwrap_or(1) as usize;
    let atom_factor = (cur.species.len() as f64 / n0 as f64).powf(cfg.alpha);
    // A non-positive temperature is pathological; the index is defined 0.
    let temperature_factor = if t_n > 0.0 { (cfg.t_set / t_n).powf(cfg.beta) } else { 0.0 };

    let d_prev = snapshot_min_distances(prev, n_species);
    let d_cur = snapshot_min_distances(cur, n_species);
    let mut distance_factor = 1.0;
    let mut skipped = Vec::new();
    for a in 0..n_species {
        for b in a..n_species {
            match (d_prev[a][b], d_cur[a][b]) {
                (Some(rp), Some(rc)) => {
                    distance_factor *= match cfg.mode {
                        DistanceMode::Literal => rc - rp,
                        DistanceMode::Ratio => {
                            if rp == rc {
                                1.0
                            } else {
                                rp.min(rc) / rp.max(rc)
                            }
                        }
                    };
                }
                _ => skipped.push((a as u32 + 1, b as u32 + 1)),
            }
        }
    }

    let mut index = atom_factor * temperature_factor * distance_factor;
    if cfg.clamp {
        index = index.clamp(0.0, 1.0);
    }
    Ok(TransitionIndex {
        step: cur.step,
        atom_factor,
        temperature_factor,
        distance_factor,
        index,
        skipped_pairs: skipped,
    })
}

fn max_force_norm(forces: &[[f64; 3]]) -> f64 {
    forces
        .iter()
        .map(|f| (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt())
        .fold(0.0, f64::max)
}

/// Per-snapshot maximum per-atom force norm; `None` if any snapshot lacks
/// forces.
pub fn force_abnormality(traj: &TrajectoryRecord) -> Option<Vec<f64>> {
    traj.snapshots
        .iter()
        .map(|s| s.forces.as_ref().map(|f| max_force_norm(f)))
        .collect()
}

fn snapshot_is_pathological(snap: &Snapshot, n0: usize) -> bool {
    if snap.species.len() < n0 {
        return true;
    }
    let finite3 = |v: &[[f64; 3]]| v.iter().all(|x| x.iter().all(|c| c.is_finite()));
    if !finite3(&snap.positions) {
        return true;
    }
    if let Some(f) = &snap.forces {
        if !finite3(f) {
            return true;
        }
    }
    false
}

/// Full report: transition indices averaged into a scalar, with hard zero on
/// any crash, atom loss, or non-finite snapshot.
pub fn stability_index(traj: &TrajectoryRecord, cfg: &StabilityConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    if traj.num() < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 snapshots, got {}",
            traj.num()
        )));
    }
    let mut traj = traj.clone();
    fill_temperatures(&mut traj, None)?;

    let n_species = traj
        .snapshots
        .iter()
        .flat_map(|s| s.species.iter().copied())
        .max()
        .unwrap_or(1) as usize;
    let mut pair_labels = Vec::new();
    for a in 0..n_species {
        for b in a..n_species {
            pair_labels.push((a as u32 + 1, b as u32 + 1));
        }
    }

    let mut transitions = Vec::with_capacity(traj.num() - 1);
    for w in traj.snapshots.windows(2) {
        transitions.push(snapshot_index(&w[0], &w[1], traj.n0, cfg)?);
    }

    let crashed = matches!(traj.exit, ExitStatus::Crashed { .. })
        || traj.snapshots.iter().any(|s| snapshot_is_pathological(s, traj.n0));
    let crash_step = match &traj.exit {
        ExitStatus::Crashed { step, .. } => Some(*step),
        ExitStatus::Completed => traj
            .snapshots
            .iter()
            .find(|s| snapshot_is_pathological(s, traj.n0))
            .map(|s| s.step),
    };

    let s_index = if crashed {
        0.0
    } else {
        transitions.iter().map(|t| t.index).sum::<f64>() / transitions.len() as f64
    };

    let r_min_series: Vec<Vec<Option<f64>>> = traj
        .snapshots
        .iter()
        .map(|s| {
            let d = snapshot_min_distances(s, n_species);
            pair_labels
                .iter()
                .map(|&(a, b)| d[(a - 1) as usize][(b - 1) as usize])
                .collect()
        })
        .collect();
    let fa = force_abnormality(&traj);
    let fa_max = fa.as_ref().map(|s| s.iter().copied().fold(0.0, f64::max));

    Ok(StabilityReport {
        s_index,
        transitions,
        pair_labels,
        r_min_series,
        temperature_series: traj.snapshots.iter().map(|s| s.temperature).collect(),
        force_abnormality_series: fa,
        force_abnormality_max: fa_max,
        crashed,
        crash_step,
        config: *cfg,
    })
}

/// Fill in missing snapshot temperatures, either from per-species `masses`
/// and stored velocities, or left `None` when neither is available.
pub fn fill_temperatures(traj: &mut TrajectoryRecord, masses: Option<&[f64]>) -> Result<()> {
    for snap in traj.snapshots.iter_mut() {
        if snap.temperature.is_some() {
            continue;
        }
        let (Some(masses), Some(v)) = (masses, &snap.velocities) else { continue };
        let atom_masses: Vec<f64> = snap
            .species
            .iter()
            .map(|&s| {
                masses.get((s - 1) as usize).copied().ok_or_else(|| {
                    Error::Precondition(format!("no mass for species {s}"))
                })
            })
            .collect::<Result<_>>()?;
        snap.temperature = Some(temperature(&atom_masses, v));
    }
    Ok(())
}

/// Radial distribution function g(r) for one species pair, averaged over all
/// snapshots. Normalization uses exact spherical-shell volumes and the
/// partner-species number density, so an ideal gas gives g(r) = 1.
pub fn rdf(
    traj: &TrajectoryRecord,
    species_pair: (u32, u32),
    r_max: f64,
    bins: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if bins < 1 {
        return Err(Error::Config("rdf needs at least 1 bin".into()));
    }
    if traj.snapshots.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    for snap in &traj.snapshots {
        let min_box = snap.box_lengths.iter().copied().fold(f64::INFINITY, f64::min);
        if r_max > min_box / 2.0 {
            return Err(Error::Config(format!(
                "rdf r_max {r_max} exceeds half the box ({})",
                min_box / 2.0
            )));
        }
    }

    let dr = r_max / bins as f64;
    let mut hist = vec![0.0f64; bins];
    let (sa, sb) = species_pair;
    let mut norm = 0.0;
    for snap in &traj.snapshots {
        let frame = snapshot_frame(snap);
        let idx_a: Vec<usize> =
            (0..frame.n_atoms()).filter(|&i| frame.species[i] == sa).collect();
        let idx_b: Vec<usize> =
            (0..frame.n_atoms()).filter(|&i| frame.species[i] == sb).collect();
        if idx_a.is_empty() || idx_b.is_empty() {
            continue;
        }
        let volume: f64 = snap.box_lengths.iter().product();
        let rho_b = idx_b.len() as f64 / volume;
        for &i in &idx_a {
            for &j in &idx_b {
                if i == j {
                    continue;
                }
                let d = crate::graph::min_image_disp(
                    &frame.positions[i],
                    &frame.positions[j],
                    &frame.cell,
                    &frame.pbc,
                );
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if r < r_max {
                    hist[(r / dr) as usize] += 1.0;
                }
            }
        }
        norm += idx_a.len() as f64 * rho_b;
    }
    if norm == 0.0 {
        return Err(Error::Precondition(format!(
            "species pair ({sa},{sb}) never present"
        )));
    }

    let mut g = vec![0.0f64; bins];
    let mut centers = vec![0.0f64; bins];
    for k in 0..bins {
        let r_lo = k as f64 * dr;
        let r_hi = r_lo + dr;
        centers[k] = 0.5 * (r_lo + r_hi);
        let shell = 4.0 / 3.0 * std::f64::consts::PI * (r_hi.powi(3) - r_lo.powi(3));
        g[k] = hist[k] / (norm * shell);
    }
    Ok((centers, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(step: u64, species: Vec<u32>, positions: Vec<[f64; 3]>, t: f64) -> Snapshot {
        Snapshot {
            step,
            species,
            positions,
            forces: None,
            velocities: None,
            box_lengths: [20.0; 3],
            temperature: Some(t),
        }
    }

    #[test]
    fn identical_snapshots_at_t_set() {
        let s = snap(0, vec![1, 2], vec![[1.0; 3], [4.0; 3]], 120.0);
        let cfg = StabilityConfig::default();
        let t = snapshot_index(&s, &s, 2, &cfg).unwrap();
        assert!((t.index - 1.0).abs() < 1e-15);
        // Pair (1,1) and (2,2) absent with single atoms of each species.
        assert_eq!(t.skipped_pairs, vec![(1, 1), (2, 2)]);

        let literal = StabilityConfig { mode: DistanceMode::Literal, ..cfg };
        let t = snapshot_index(&s, &s, 2, &literal).unwrap();
        assert_eq!(t.index, 0.0);
    }

    #[test]
    fn temperature_scale_monotonicity() {
        let s0 = snap(0, vec![1, 1], vec![[1.0; 3], [4.0; 3]], 120.0);
        let s1 = snap(100, vec![1, 1], vec![[1.0; 3], [4.2; 3]], 120.0);
        let cfg = StabilityConfig::default();
        let base = snapshot_index(&s0, &s1, 2, &cfg).unwrap();
        let mut hot = s1.clone();
        hot.temperature = Some(240.0);
        let hotter = snapshot_index(&s0, &hot, 2, &cfg).unwrap();
        assert!(hotter.index < base.index);
        assert_eq!(hotter.atom_factor, base.atom_factor);
        assert_eq!(hotter.distance_factor, base.distance_factor);
    }

    #[test]
    fn lost_atom_zeroes_everything() {
        let s0 = snap(0, vec![1, 1, 1], vec![[1.0; 3], [4.0; 3], [7.0; 3]], 120.0);
        let mut s1 = snap(100, vec![1, 1], vec![[1.0; 3], [4.0; 3]], 120.0);
        s1.temperature = Some(120.0);
        let traj = TrajectoryRecord {
            n0: 3,
            snapshots: vec![s0, s1],
            exit: ExitStatus::Completed,
        };
        let report = stability_index(&traj, &StabilityConfig::default()).unwrap();
        assert_eq!(report.s_index, 0.0);
        assert!(report.crashed);
    }

    #[test]
    fn static_trajectory_scores_one() {
        let s = snap(0, vec![1, 1], vec![[2.0; 3], [5.0; 3]], 120.0);
        let mut s1 = s.clone();
        s1.step = 100;
        let mut s2 = s.clone();
        s2.step = 200;
        let traj = TrajectoryRecord {
            n0: 2,
            snapshots: vec![s, s1, s2],
            exit: ExitStatus::Completed,
        };
        let report = stability_index(&traj, &StabilityConfig::default()).unwrap();
        assert!((report.s_index - 1.0).abs() < 1e-15);
        assert!(!report.crashed);
    }

    #[test]
    fn force_abnormality_norm() {
        let mut s = snap(0, vec![1, 1], vec![[1.0; 3], [4.0; 3]], 120.0);
        s.forces = Some(vec![[3.0, 4.0, 0.0], [0.0; 3]]);
        let traj = TrajectoryRecord { n0: 2, snapshots: vec![s], exit: ExitStatus::Completed };
        let fa = force_abnormality(&traj).unwrap();
        assert!((fa[0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn rdf_single_pair_bin() {
        let s = snap(0, vec![1, 1], vec![[5.0, 5.0, 5.0], [8.0, 5.0, 5.0]], 120.0);
        let traj = TrajectoryRecord { n0: 2, snapshots: vec![s], exit: ExitStatus::Completed };
        let (centers, g) = rdf(&traj, (1, 1), 9.0, 30).unwrap();
        let nonzero: Vec<usize> = (0..30).filter(|&k| g[k] > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((centers[nonzero[0]] - 3.0).abs() <= 0.15);
    }

    #[test]
    fn rdf_invariant_under_snapshot_duplication() {
        let s = snap(0, vec![1, 1, 1], vec![[2.0; 3], [6.0; 3], [9.0, 2.0, 4.0]], 120.0);
        let t1 = TrajectoryRecord {
            n0: 3,
            snapshots: vec![s.clone()],
            exit: ExitStatus::Completed,
        };
        let t2 = TrajectoryRecord {
            n0: 3,
            snapshots: vec![s.clone(), s],
            exit: ExitStatus::Completed,
        };
        let (_, g1) = rdf(&t1, (1, 1), 9.0, 20).unwrap();
        let (_, g2) = rdf(&t2, (1, 1), 9.0, 20).unwrap();
        for k in 0..20 {
            assert!((g1[k] - g2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rdf_rejects_large_r_max() {
        let s = snap(0, vec![1], vec![[1.0; 3]], 120.0);
        let traj = TrajectoryRecord { n0: 1, snapshots: vec![s], exit: ExitStatus::Completed };
        assert!(rdf(&traj, (1, 1), 11.0, 10).is_err());
    }
}
