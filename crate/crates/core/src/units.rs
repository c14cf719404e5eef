//! Internal unit system: eV, Å, fs, amu, K.
//!
//! All derived constants come from the CODATA 2018 values of the elementary
//! charge and the atomic mass constant so conversions round-trip exactly.

/// Boltzmann constant in eV/K.
pub const KB_EV_PER_K: f64 = 8.617333262e-5;

/// One electronvolt in joules (exact, SI 2019).
pub const EV_J: f64 = 1.602176634e-19;

/// One atomic mass unit in kilograms (CODATA 2018).
pub const AMU_KG: f64 = 1.66053906660e-27;

/// Energy conversion: 1 amu·Å²/fs² expressed in eV.
///
/// 1 Å/fs = 1e5 m/s, so 1 amu·Å²/fs² = AMU_KG · 1e10 J.
pub const EV_PER_AMU_A2_FS2: f64 = AMU_KG * 1e10 / EV_J;

/// Acceleration conversion: a [Å/fs²] = F [eV/Å] / m [amu] · this factor.
pub const ACCEL_CONV: f64 = 1.0 / EV_PER_AMU_A2_FS2;

/// Kinetic energy in eV from masses (amu) and velocities (Å/fs).
pub fn kinetic_energy(masses: &[f64], velocities: &[[f64; 3]]) -> f64 {
    let mut ke = 0.0;
    for (m, v) in masses.iter().zip(velocities) {
        ke += 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    ke * EV_PER_AMU_A2_FS2
}

/// Instantaneous kinetic temperature, T = 2·KE / (3·n·k_B).
///
/// Degrees of freedom are fixed at 3n (bulk system, no constraints).
pub fn temperature(masses: &[f64], velocities: &[[f64; 3]]) -> f64 {
    let n = velocities.len();
    if n == 0 {
        return 0.0;
    }
    2.0 * kinetic_energy(masses, velocities) / (3.0 * n as f64 * KB_EV_PER_K)
}
