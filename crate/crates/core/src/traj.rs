//! Trajectory snapshots dumped during MD and consumed by the stability
//! analyzer.

use serde::{Deserialize, Serialize};

/// One dumped simulation snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    /// Atom types (1-based species ids), length N_n.
    pub species: Vec<u32>,
    pub positions: Vec<[f64; 3]>,
    pub forces: Option<Vec<[f64; 3]>>,
    pub velocities: Option<Vec<[f64; 3]>>,
    /// Orthorhombic box lengths, Å.
    pub box_lengths: [f64; 3],
    /// Instantaneous kinetic temperature, K, when known.
    pub temperature: Option<f64>,
}

impl Snapshot {
    pub fn n_atoms(&self) -> usize {
        self.species.len()
    }
}

/// How a simulation ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitStatus {
    Completed,
    Crashed { step: u64, reason: String },
}

impl ExitStatus {
    pub fn is_crash(&self) -> bool {
        matches!(self, ExitStatus::Crashed { .. })
    }
}

/// A dumped trajectory: snapshots plus the initial atom count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub snapshots: Vec<Snapshot>,
    /// Atom count of the first snapshot, N_0.
    pub n0: usize,
    pub exit: ExitStatus,
}

impl TrajectoryRecord {
    pub fn new(snapshots: Vec<Snapshot>, exit: ExitStatus) -> Self {
        let n0 = snapshots.first().map(|s| s.n_atoms()).unwrap_or(0);
        Self {
            snapshots,
            n0,
            exit,
        }
    }

    pub fn num(&self) -> usize {
        self.snapshots.len()
    }

    /// True when any snapshot lost atoms relative to N_0.
    pub fn atom_count_changed(&self) -> bool {
        self.snapshots.iter().any(|s| s.n_atoms() != self.n0)
    }
}
