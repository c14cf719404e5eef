//! LAMMPS dump text format: bit-exact writer, tolerant reader.
//!
//! ```text
//! ITEM: TIMESTEP
//! <step>
//! ITEM: NUMBER OF ATOMS
//! <N>
//! ITEM: BOX BOUNDS pp pp pp
//! <xlo> <xhi>
//! <ylo> <yhi>
//! <zlo> <zhi>
//! ITEM: ATOMS id type x y z fx fy fz [vx vy vz]
//! <rows...>
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::traj::{ExitStatus, Snapshot, TrajectoryRecord};

pub fn write_dump(traj: &TrajectoryRecord) -> String {
    let mut out = String::new();
    for snap in &traj.snapshots {
        write_snapshot(&mut out, snap);
    }
    out
}

fn write_snapshot(out: &mut String, snap: &Snapshot) {
    writeln!(out, "ITEM: TIMESTEP").unwrap();
    writeln!(out, "{}", snap.step).unwrap();
    writeln!(out, "ITEM: NUMBER OF ATOMS").unwrap();
    writeln!(out, "{}", snap.n_atoms()).unwrap();
    writeln!(out, "ITEM: BOX BOUNDS pp pp pp").unwrap();
    for k in 0..3 {
        writeln!(out, "0 {}", snap.box_lengths[k]).unwrap();
    }
    let has_f = snap.forces.is_some();
    let has_v = snap.velocities.is_some();
    write!(out, "ITEM: ATOMS id type x y z").unwrap();
    if has_f {
        write!(out, " fx fy fz").unwrap();
    }
    if has_v {
        write!(out, " vx vy vz").unwrap();
    }
    out.push('\n');
    for i in 0..snap.n_atoms() {
        let r = snap.positions[i];
        write!(out, "{} {} {} {} {}", i + 1, snap.species[i], r[0], r[1], r[2]).unwrap();
        if let Some(f) = &snap.forces {
            write!(out, " {} {} {}", f[i][0], f[i][1], f[i][2]).unwrap();
        }
        if let Some(v) = &snap.velocities {
            write!(out, " {} {} {}", v[i][0], v[i][1], v[i][2]).unwrap();
        }
        out.push('\n');
    }
}

/// Line iterator that tracks the byte offset of each line start.
struct OffsetLines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Iterator for OffsetLines<'a> {
    type Item = (usize, &'a str);
    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos = start + advance;
        Some((start, line.trim_end_matches('\r')))
    }
}

fn err_at(offset: usize, msg: impl Into<String>) -> Error {
    Error::ParseAt {
        offset,
        msg: msg.into(),
    }
}

pub fn parse_dump(text: &str) -> Result<TrajectoryRecord> {
    let mut lines = OffsetLines { text, pos: 0 }.peekable();
    let mut snapshots = Vec::new();
    while let Some(&(off, line)) = lines.peek() {
        if line.trim().is_empty() {
            lines.next();
            continue;
        }
        if !line.starts_with("ITEM: TIMESTEP") {
            return Err(err_at(off, format!("expected ITEM: TIMESTEP, got '{line}'")));
        }
        snapshots.push(parse_snapshot(&mut lines)?);
    }
    if snapshots.is_empty() {
        return Err(err_at(0, "dump contains no snapshots"));
    }
    Ok(TrajectoryRecord::new(snapshots, ExitStatus::Completed))
}

fn expect_line<'a>(
    lines: &mut std::iter::Peekable<OffsetLines<'a>>,
    what: &str,
) -> Result<(usize, &'a str)> {
    lines
        .next()
        .ok_or_else(|| err_at(usize::MAX, format!("truncated snapshot: missing {what}")))
}

fn parse_snapshot(lines: &mut std::iter::Peekable<OffsetLines>) -> Result<Snapshot> {
    let (off, header) = expect_line(lines, "ITEM: TIMESTEP")?;
    if !header.starts_with("ITEM: TIMESTEP") {
        return Err(err_at(off, "expected ITEM: TIMESTEP"));
    }
    let (off, step_line) = expect_line(lines, "timestep value")?;
    let step: u64 = step_line
        .trim()
        .parse()
        .map_err(|_| err_at(off, format!("invalid timestep '{step_line}'")))?;

    let (off, natoms_hdr) = expect_line(lines, "ITEM: NUMBER OF ATOMS")?;
    if !natoms_hdr.starts_with("ITEM: NUMBER OF ATOMS") {
        return Err(err_at(off, "expected ITEM: NUMBER OF ATOMS"));
    }
    let (off, n_line) = expect_line(lines, "atom count")?;
    let n: usize = n_line
        .trim()
        .parse()
        .map_err(|_| err_at(off, format!("invalid atom count '{n_line}'")))?;

    let (off, bounds_hdr) = expect_line(lines, "ITEM: BOX BOUNDS")?;
    if !bounds_hdr.starts_with("ITEM: BOX BOUNDS") {
        return Err(err_at(off, "expected ITEM: BOX BOUNDS"));
    }
    let mut box_lengths = [0.0; 3];
    for axis in box_lengths.iter_mut() {
        let (off, b_line) = expect_line(lines, "box bound")?;
        let toks: Vec<&str> = b_line.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(err_at(off, "box bound needs lo and hi"));
        }
        let lo: f64 = toks[0]
            .parse()
            .map_err(|_| err_at(off, format!("invalid bound '{}'", toks[0])))?;
        let hi: f64 = toks[1]
            .parse()
            .map_err(|_| err_at(off, format!("invalid bound '{}'", toks[1])))?;
        *axis = hi - lo;
    }

    let (off, atoms_hdr) = expect_line(lines, "ITEM: ATOMS")?;
    let cols: Vec<&str> = atoms_hdr
        .strip_prefix("ITEM: ATOMS")
        .ok_or_else(|| err_at(off, "expected ITEM: ATOMS"))?
        .split_whitespace()
        .collect();
    let col = |name: &str| cols.iter().position(|&c| c == name);
    let (ci, cx) = match (col("type"), col("x")) {
        (Some(t), Some(x)) => (t, x),
        _ => return Err(err_at(off, "missing mandatory columns 'type x y z'")),
    };
    if col("y") != Some(cx + 1) || col("z") != Some(cx + 2) {
        return Err(err_at(off, "x y z columns must be contiguous"));
    }
    let cf = col("fx");
    let cv = col("vx");

    let mut rows: Vec<(u64, u32, [f64; 3], Option<[f64; 3]>, Option<[f64; 3]>)> =
        Vec::with_capacity(n);
    for _ in 0..n {
        let (off, row) = expect_line(lines, "atom row")?;
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != cols.len() {
            return Err(err_at(
                off,
                format!("expected {} columns, got {}", cols.len(), toks.len()),
            ));
        }
        let getf = |i: usize| -> Result<f64> {
            toks[i]
                .parse::<f64>()
                .map_err(|_| err_at(off, format!("invalid number '{}'", toks[i])))
        };
        let id: u64 = col("id")
            .map(|i| toks[i].parse::<u64>())
            .transpose()
            .map_err(|_| err_at(off, "invalid id"))?
            .unwrap_or(0);
        let ty: u32 = toks[ci]
            .parse()
            .map_err(|_| err_at(off, format!("invalid type '{}'", toks[ci])))?;
        let pos = [getf(cx)?, getf(cx + 1)?, getf(cx + 2)?];
        let force = match cf {
            Some(i) => Some([getf(i)?, getf(i + 1)?, getf(i + 2)?]),
            None => None,
        };
        let vel = match cv {
            Some(i) => Some([getf(i)?, getf(i + 1)?, getf(i + 2)?]),
            None => None,
        };
        rows.push((id, ty, pos, force, vel));
    }
    // Rows ordered by id when present.
    rows.sort_by_key(|r| r.0);

    let species = rows.iter().map(|r| r.1).collect();
    let positions = rows.iter().map(|r| r.2).collect();
    let forces = if cf.is_some() {
        Some(rows.iter().map(|r| r.3.unwrap()).collect())
    } else {
        None
    };
    let velocities = if cv.is_some() {
        Some(rows.iter().map(|r| r.4.unwrap()).collect())
    } else {
        None
    };
    Ok(Snapshot {
        step,
        species,
        positions,
        forces,
        velocities,
        box_lengths,
        temperature: None,
    })
}
