//! Lennard-Jones binary mixture reference potential.
//!
//! Stands in for ab-initio labels: it generates training data and drives
//! reference MD runs. Energies are shifted to zero at the cutoff; forces
//! are analytic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::graph::min_image_disp;

/// 12-6 mixture parameters per species pair, eV / Å. Treated as data: the
/// default preset ships as JSON and any preset file can be loaded instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LjMixture {
    /// Pair well depths, eV; [i][j] for species i+1, j+1.
    pub epsilon: Vec<Vec<f64>>,
    /// Pair length scales, Å.
    pub sigma: Vec<Vec<f64>>,
    /// Interaction cutoff, Å.
    pub cutoff: f64,
    /// Per-species masses, amu.
    pub masses: Vec<f64>,
}

/// Default binary mixture preset (Kob-Andersen-style asymmetry on an
/// argon-like energy scale, ε_AA/k_B ≈ 121 K).
pub const DEFAULT_PRESET: &str = include_str!("../presets/lj_mixture.json");

impl LjMixture {
    pub fn default_preset() -> Self {
        serde_json::from_str(DEFAULT_PRESET).expect("built-in preset parses")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let pot: LjMixture = serde_json::from_str(&text)?;
        pot.validate()?;
        Ok(pot)
    }

    pub fn n_species(&self) -> usize {
        self.epsilon.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.n_species();
        if self.sigma.len() != c || self.masses.len() != c {
            return Err(Error::Validation("preset matrices must agree in size".into()));
        }
        let mut max_sigma: f64 = 0.0;
        for i in 0..c {
            for j in 0..c {
                if !(self.epsilon[i][j] > 0.0) || !(self.sigma[i][j] > 0.0) {
                    return Err(Error::Validation(format!(
                        "epsilon/sigma for pair ({},{}) must be > 0",
                        i + 1,
                        j + 1
                    )));
                }
                max_sigma = max_sigma.max(self.sigma[i][j]);
            }
        }
        let r_min = 2f64.powf(1.0 / 6.0) * max_sigma;
        if self.cutoff < r_min {
            return Err(Error::Validation(format!(
                "cutoff {} must reach beyond the potential minimum {r_min:.3}",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Unshifted pair energy at distance r.
    fn pair_energy_raw(&self, a: usize, b: usize, r: f64) -> f64 {
        let sr6 = (self.sigma[a][b] / r).powi(6);
        4.0 * self.epsilon[a][b] * (sr6 * sr6 - sr6)
    }

    /// Shifted pair energy: zero at the cutoff.
    pub fn pair_energy(&self, a: usize, b: usize, r: f64) -> f64 {
        self.pair_energy_raw(a, b, r) - self.pair_energy_raw(a, b, self.cutoff)
    }

    /// Magnitude of dU/dr (pair force is -dU/dr along the bond).
    pub fn pair_dudr(&self, a: usize, b: usize, r: f64) -> f64 {
        let sr6 = (self.sigma[a][b] / r).powi(6);
        -24.0 * self.epsilon[a][b] * (2.0 * sr6 * sr6 - sr6) / r
    }

    /// Total energy and per-atom forces.
    pub fn energy_forces(&self, frame: &Frame) -> Result<(f64, Vec<[f64; 3]>)> {
        let n = frame.n_atoms();
        let mut energy = 0.0;
        let mut forces = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = min_image_disp(
                    &frame.positions[i],
                    &frame.positions[j],
                    &frame.cell,
                    &frame.pbc,
                );
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let r = r2.sqrt();
                if r >= self.cutoff {
                    continue;
                }
                if r < 1e-6 {
                    return Err(Error::Numeric(format!(
                        "overlapping atoms {i} and {j} (r = {r:.2e} Å)"
                    )));
                }
                let (a, b) = (
                    (frame.species[i] - 1) as usize,
                    (frame.species[j] - 1) as usize,
                );
                energy += self.pair_energy(a, b, r);
                // F_j = -dU/dr · d/r (d points i -> j); F_i = -F_j.
                let coeff = -self.pair_dudr(a, b, r) / r;
                for k in 0..3 {
                    forces[j][k] += coeff * d[k];
                    forces[i][k] -= coeff * d[k];
                }
            }
        }
        Ok((energy, forces))
    }
}
