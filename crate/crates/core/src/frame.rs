//! Atomic configurations and datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One atomic configuration: species, positions, orthorhombic periodic cell
/// and optional reference labels.
///
/// Units are eV / Å / fs / amu throughout. Species ids are small 1-based
/// integers; `masses[s - 1]` is the mass of species `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub species: Vec<u32>,
    pub positions: Vec<[f64; 3]>,
    /// Orthorhombic box edge lengths, Å.
    pub cell: [f64; 3],
    pub pbc: [bool; 3],
    /// Total potential energy, eV.
    pub energy: Option<f64>,
    /// Per-atom forces, eV/Å.
    pub forces: Option<Vec<[f64; 3]>>,
    /// Per-atom velocities, Å/fs.
    pub velocities: Option<Vec<[f64; 3]>>,
    /// Per-species masses, amu (index = species id - 1).
    pub masses: Vec<f64>,
}

impl Frame {
    pub fn n_atoms(&self) -> usize {
        self.species.len()
    }

    /// Number of distinct species referenced (max species id).
    pub fn n_species(&self) -> usize {
        self.species.iter().copied().max().unwrap_or(0) as usize
    }

    /// Per-atom masses resolved through the species table.
    pub fn atom_masses(&self) -> Vec<f64> {
        self.species
            .iter()
            .map(|&s| self.masses[(s - 1) as usize])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.species.len();
        if self.positions.len() != n {
            return Err(Error::Validation(format!(
                "species length {} != positions rows {}",
                n,
                self.positions.len()
            )));
        }
        if let Some(f) = &self.forces {
            if f.len() != n {
                return Err(Error::Validation(format!(
                    "forces rows {} != atom count {}",
                    f.len(),
                    n
                )));
            }
        }
        if let Some(v) = &self.velocities {
            if v.len() != n {
                return Err(Error::Validation(format!(
                    "velocity rows {} != atom count {}",
                    v.len(),
                    n
                )));
            }
        }
        for (axis, &l) in self.cell.iter().enumerate() {
            if !(l > 0.0) {
                return Err(Error::Validation(format!(
                    "cell length along axis {axis} must be > 0, got {l}"
                )));
            }
        }
        if self.positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite position".into()));
        }
        for &s in &self.species {
            if s == 0 || (s as usize) > self.masses.len() {
                return Err(Error::Validation(format!(
                    "species id {s} has no mass entry (table has {})",
                    self.masses.len()
                )));
            }
        }
        Ok(())
    }

    /// Kinetic temperature from the stored velocities, K.
    pub fn temperature(&self) -> Option<f64> {
        self.velocities
            .as_ref()
            .map(|v| crate::units::temperature(&self.atom_masses(), v))
    }
}

/// A sequence of frames sharing one unit system, plus a composition label
/// such as "1:2".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub composition: String,
}

impl Dataset {
    pub fn new(frames: Vec<Frame>, composition: impl Into<String>) -> Self {
        Self {
            frames,
            composition: composition.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            f.validate()
                .map_err(|e| Error::Validation(format!("frame {i}: {e}")))?;
        }
        Ok(())
    }
}
