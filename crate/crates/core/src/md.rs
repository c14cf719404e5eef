//! Velocity-Verlet molecular dynamics with an optional Langevin thermostat.
//!
//! Runs either the analytic reference potential or a learned model through
//! the same [`ForceProvider`] interface, records snapshots at a fixed dump
//! interval, and downgrades numerical blow-ups to a `Crashed` exit status
//! instead of an error so stability analysis can score them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::graph::build_graph;
use crate::lj::LjMixture;
use crate::model::ModelParams;
use crate::tape::Tape;
use crate::traj::{ExitStatus, Snapshot, TrajectoryRecord};
use crate::units::{temperature, EV_PER_AMU_A2_FS2, KB_EV_PER_K};

/// Anything that maps a frame to (energy, forces).
pub trait ForceProvider {
    fn energy_forces(&mut self, frame: &Frame) -> Result<(f64, Vec<[f64; 3]>)>;
}

impl ForceProvider for LjMixture {
    fn energy_forces(&mut self, frame: &Frame) -> Result<(f64, Vec<[f64; 3]>)> {
        LjMixture::energy_forces(self, frame)
    }
}

/// Learned model behind the provider interface; reuses one tape across steps.
pub struct ModelForce {
    pub params: ModelParams,
    tape: Tape,
}

impl ModelForce {
    pub fn new(params: ModelParams) -> Self {
        ModelForce { params, tape: Tape::new() }
    }
}

impl ForceProvider for ModelForce {
    fn energy_forces(&mut self, frame: &Frame) -> Result<(f64, Vec<[f64; 3]>)> {
        let graph = build_graph(frame, self.params.config.r_max)?;
        crate::model::energy_forces_on(&mut self.tape, &self.params, frame, &graph)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thermostat {
    /// Plain NVE.
    None,
    /// Langevin friction + Gaussian random force. `damp` is the damping
    /// time in fs.
    Langevin { damp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityInit {
    Zero,
    /// Maxwell-Boltzmann at the set temperature, centre-of-mass motion
    /// removed.
    Maxwell,
    /// Keep whatever velocities the starting frame carries.
    FromFrame,
}

#[derive(Debug, Clone)]
pub struct MdConfig {
    /// Integration timestep, fs.
    pub dt: f64,
    pub steps: usize,
    /// Thermostat / velocity-init target temperature, K.
    pub t_set: f64,
    pub thermostat: Thermostat,
    /// Record a snapshot every this many steps (step 0 always recorded).
    pub dump_interval: usize,
    pub velocity_init: VelocityInit,
    pub seed: u64,
}

impl Default for MdConfig {
    fn default() -> Self {
        MdConfig {
            dt: 0.25,
            steps: 40_000,
            t_set: 120.0,
            thermostat: Thermostat::Langevin { damp: 25.0 },
            dump_interval: 100,
            velocity_init: VelocityInit::Maxwell,
            seed: 0,
        }
    }
}

impl MdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if self.dump_interval == 0 {
            return Err(Error::Config("dump_interval must be >= 1".into()));
        }
        if let Thermostat::Langevin { damp } = self.thermostat {
            if !(damp > 0.0) {
                return Err(Error::Config("langevin damp must be > 0".into()));
            }
            if !(self.t_set > 0.0) {
                return Err(Error::Config("t_set must be > 0 with a thermostat".into()));
            }
        }
        Ok(())
    }
}

/// Draw Maxwell-Boltzmann velocities at `t_set`, remove net momentum.
pub fn maxwell_velocities(
    masses: &[f64],
    t_set: f64,
    rng: &mut impl Rng,
) -> Vec<[f64; 3]> {
    let n = masses.len();
    let mut v = vec![[0.0; 3]; n];
    for (i, vel) in v.iter_mut().enumerate() {
        // kB T in amu Å²/fs² so that ½ m v² comes out in those units.
        let std = (KB_EV_PER_K * t_set / (masses[i] * EV_PER_AMU_A2_FS2)).sqrt();
        for k in 0..3 {
            let z: f64 = StandardNormal.sample(rng);
            vel[k] = std * z;
        }
    }
    let total_mass: f64 = masses.iter().sum();
    let mut p = [0.0; 3];
    for i in 0..n {
        for k in 0..3 {
            p[k] += masses[i] * v[i][k];
        }
    }
    for vel in v.iter_mut() {
        for k in 0..3 {
            vel[k] -= p[k] / total_mass;
        }
    }
    v
}

/// Langevin modification added on top of the conservative force, eV/Å:
/// friction `-m v / damp` plus a Gaussian kick with per-component std
/// sqrt(2 kB T m / (damp dt)).
pub fn langevin_force(
    masses: &[f64],
    velocities: &[[f64; 3]],
    t_set: f64,
    damp: f64,
    dt: f64,
    rng: &mut impl Rng,
) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; masses.len()];
    for i in 0..masses.len() {
        let m = masses[i];
        let friction = -m * EV_PER_AMU_A2_FS2 / damp;
        let std = (2.0 * KB_EV_PER_K * t_set * m * EV_PER_AMU_A2_FS2 / (damp * dt)).sqrt();
        for k in 0..3 {
            let z: f64 = StandardNormal.sample(rng);
            out[i][k] = friction * velocities[i][k] + std * z;
        }
    }
    out
}

fn wrap_positions(frame: &mut Frame) {
    for pos in frame.positions.iter_mut() {
        for k in 0..3 {
            if frame.pbc[k] {
                pos[k] = pos[k].rem_euclid(frame.cell[k]);
            }
        }
    }
}

fn all_finite(v: &[[f64; 3]]) -> bool {
    v.iter().all(|x| x.iter().all(|c| c.is_finite()))
}

fn snapshot(step: u64, frame: &Frame, forces: &[[f64; 3]], velocities: &[[f64; 3]]) -> Snapshot {
    let masses = frame.atom_masses();
    Snapshot {
        step,
        species: frame.species.clone(),
        positions: frame.positions.clone(),
        forces: Some(forces.to_vec()),
        velocities: Some(velocities.to_vec()),
        box_lengths: frame.cell,
        temperature: Some(temperature(&masses, velocities)),
    }
}

/// Integrate `cfg.steps` velocity-Verlet steps from `start`.
///
/// Returns a record whose exit status is `Crashed` when the provider errors
/// mid-run or any coordinate/velocity goes non-finite; snapshots collected up
/// to that point are kept. Only a failure on the very first force evaluation
/// is a hard error.
pub fn run_md(
    provider: &mut dyn ForceProvider,
    start: &Frame,
    cfg: &MdConfig,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    start.validate()?;
    let mut frame = start.clone();
    let masses = frame.atom_masses();
    let n = frame.n_atoms();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut velocities = match cfg.velocity_init {
        VelocityInit::Zero => vec![[0.0; 3]; n],
        VelocityInit::Maxwell => maxwell_velocities(&masses, cfg.t_set, &mut rng),
        VelocityInit::FromFrame => frame
            .velocities
            .clone()
            .ok_or_else(|| Error::Precondition("starting frame carries no velocities".into()))?,
    };

    let total_force = |frame: &Frame,
                           velocities: &[[f64; 3]],
                           provider: &mut dyn ForceProvider,
                           rng: &mut ChaCha8Rng|
     -> Result<Vec<[f64; 3]>> {
        let (_, mut f) = provider.energy_forces(frame)?;
        if let Thermostat::Langevin { damp } = cfg.thermostat {
            let extra = langevin_force(&masses, velocities, cfg.t_set, damp, cfg.dt, rng);
            for i in 0..f.len() {
                for k in 0..3 {
                    f[i][k] += extra[i][k];
                }
            }
        }
        Ok(f)
    };

    let mut forces = total_force(&frame, &velocities, provider, &mut rng)?;
    let mut snapshots = vec![snapshot(0, &frame, &forces, &velocities)];
    let mut exit = ExitStatus::Completed;

    for step in 1..=cfg.steps as u64 {
        // Half kick, drift, new forces, half kick.
        for i in 0..n {
            let c = 0.5 * cfg.dt / (masses[i] * EV_PER_AMU_A2_FS2);
            for k in 0..3 {
                velocities[i][k] += c * forces[i][k];
                frame.positions[i][k] += velocities[i][k] * cfg.dt;
            }
        }
        if !all_finite(&frame.positions) {
            exit = ExitStatus::Crashed { step, reason: "non-finite position".into() };
            break;
        }
        wrap_positions(&mut frame);
        forces = match total_force(&frame, &velocities, provider, &mut rng) {
            Ok(f) => f,
            Err(e) => {
                exit = ExitStatus::Crashed { step, reason: e.to_string() };
                break;
            }
        };
        if !all_finite(&forces) {
            exit = ExitStatus::Crashed { step, reason: "non-finite force".into() };
            break;
        }
        for i in 0..n {
            let c = 0.5 * cfg.dt / (masses[i] * EV_PER_AMU_A2_FS2);
            for k in 0..3 {
                velocities[i][k] += c * forces[i][k];
            }
        }
        if !all_finite(&velocities) {
            exit = ExitStatus::Crashed { step, reason: "non-finite velocity".into() };
            break;
        }
        if step % cfg.dump_interval as u64 == 0 {
            snapshots.push(snapshot(step, &frame, &forces, &velocities));
        }
    }

    Ok(TrajectoryRecord { n0: n, snapshots, exit })
}

/// Split `n` atoms between two species according to a ratio string "a:b".
pub fn composition_counts(ratio: &str, n: usize) -> Result<(usize, usize)> {
    let (a, b) = ratio
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("composition '{ratio}' is not of the form a:b")))?;
    let a: f64 = a
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("composition '{ratio}': bad left term")))?;
    let b: f64 = b
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("composition '{ratio}': bad right term")))?;
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Config(format!("composition '{ratio}': terms must be > 0")));
    }
    let na = (n as f64 * a / (a + b)).round() as usize;
    if na == 0 || na == n {
        return Err(Error::Config(format!(
            "composition '{ratio}' leaves one species with zero atoms at n = {n}"
        )));
    }
    Ok((na, n - na))
}

/// Place `n` atoms on a simple cubic lattice inside the box, species
/// assignment shuffled deterministically.
pub fn lattice_frame(
    pot: &LjMixture,
    ratio: &str,
    n: usize,
    box_len: f64,
    seed: u64,
) -> Result<Frame> {
    let (na, _nb) = composition_counts(ratio, n)?;
    let mut species: Vec<u32> = (0..n).map(|i| if i < na { 1 } else { 2 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    species.shuffle(&mut rng);

    let per_side = (n as f64).cbrt().ceil() as usize;
    let spacing = box_len / per_side as f64;
    let mut positions = Vec::with_capacity(n);
    'fill: for ix in 0..per_side {
        for iy in 0..per_side {
            for iz in 0..per_side {
                if positions.len() == n {
                    break 'fill;
                }
                positions.push([
                    (ix as f64 + 0.5) * spacing,
                    (iy as f64 + 0.5) * spacing,
                    (iz as f64 + 0.5) * spacing,
                ]);
            }
        }
    }
    let frame = Frame {
        species,
        positions,
        cell: [box_len; 3],
        pbc: [true; 3],
        energy: None,
        forces: None,
        velocities: None,
        masses: pot.masses.clone(),
    };
    frame.validate()?;
    Ok(frame)
}

#[derive(Debug, Clone)]
pub struct DatagenConfig {
    pub ratio: String,
    pub n_atoms: usize,
    pub box_len: f64,
    pub t_set: f64,
    pub dt: f64,
    /// Thermostatted steps discarded before sampling starts.
    pub equil_steps: usize,
    /// Steps between sampled frames.
    pub stride: usize,
    pub n_frames: usize,
    pub seed: u64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            ratio: "1:2".into(),
            n_atoms: 96,
            box_len: 18.0,
            t_set: 120.0,
            dt: 0.25,
            equil_steps: 2_000,
            stride: 50,
            n_frames: 24,
            seed: 0,
        }
    }
}

/// Run thermostatted reference MD and harvest labelled frames.
pub fn generate_dataset(pot: &LjMixture, cfg: &DatagenConfig) -> Result<crate::frame::Dataset> {
    pot.validate()?;
    let start = lattice_frame(pot, &cfg.ratio, cfg.n_atoms, cfg.box_len, cfg.seed)?;
    let md = MdConfig {
        dt: cfg.dt,
        steps: cfg.equil_steps + cfg.stride * cfg.n_frames,
        t_set: cfg.t_set,
        thermostat: Thermostat::Langevin { damp: 100.0 * cfg.dt },
        dump_interval: cfg.stride,
        velocity_init: VelocityInit::Maxwell,
        seed: cfg.seed,
    };
    let mut provider = pot.clone();
    let record = run_md(&mut provider, &start, &md)?;
    if let ExitStatus::Crashed { step, reason } = &record.exit {
        return Err(Error::Numeric(format!(
            "reference MD crashed at step {step} during data generation: {reason}"
        )));
    }
    let mut frames = Vec::with_capacity(cfg.n_frames);
    for snap in &record.snapshots {
        if snap.step <= cfg.equil_steps as u64 || frames.len() == cfg.n_frames {
            continue;
        }
        let mut frame = Frame {
            species: snap.species.clone(),
            positions: snap.positions.clone(),
            cell: snap.box_lengths,
            pbc: [true; 3],
            energy: None,
            forces: None,
            velocities: snap.velocities.clone(),
            masses: pot.masses.clone(),
        };
        // Labels come from the bare potential, not the thermostatted force.
        let (e, f) = LjMixture::energy_forces(pot, &frame)?;
        frame.energy = Some(e);
        frame.forces = Some(f);
        frames.push(frame);
    }
    if frames.len() < cfg.n_frames {
        return Err(Error::Numeric(format!(
            "harvested only {} of {} requested frames",
            frames.len(),
            cfg.n_frames
        )));
    }
    Ok(crate::frame::Dataset { frames, composition: cfg.ratio.clone() })
}
