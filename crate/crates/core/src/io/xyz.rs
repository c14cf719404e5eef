//! Extended-XYZ-style text frames.
//!
//! ```text
//! <n_atoms>
//! energy=<eV> cell="Lx Ly Lz" pbc="T T T" masses="m1 m2 ..." [composition="1:2"]
//! <species> x y z [fx fy fz] [vx vy vz]
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! read(write(ds)) reproduces every f64 bit-exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frame::{Dataset, Frame};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn write_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    for frame in &ds.frames {
        let n = frame.n_atoms();
        writeln!(out, "{n}").unwrap();
        if let Some(e) = frame.energy {
            write!(out, "energy={e} ").unwrap();
        }
        write!(
            out,
            "cell=\"{} {} {}\" pbc=\"{} {} {}\" masses=\"",
            frame.cell[0],
            frame.cell[1],
            frame.cell[2],
            tf(frame.pbc[0]),
            tf(frame.pbc[1]),
            tf(frame.pbc[2]),
        )
        .unwrap();
        for (i, m) in frame.masses.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{m}").unwrap();
        }
        write!(out, "\"").unwrap();
        if !ds.composition.is_empty() {
            write!(out, " composition=\"{}\"", ds.composition).unwrap();
        }
        let has_f = frame.forces.is_some();
        let has_v = frame.velocities.is_some();
        write!(out, " columns=\"species x y z").unwrap();
        if has_f {
            write!(out, " fx fy fz").unwrap();
        }
        if has_v {
            write!(out, " vx vy vz").unwrap();
        }
        writeln!(out, "\"").unwrap();
        for i in 0..n {
            let r = frame.positions[i];
            write!(out, "{} {} {} {}", frame.species[i], r[0], r[1], r[2]).unwrap();
            if let Some(f) = &frame.forces {
                write!(out, " {} {} {}", f[i][0], f[i][1], f[i][2]).unwrap();
            }
            if let Some(v) = &frame.velocities {
                write!(out, " {} {} {}", v[i][0], v[i][1], v[i][2]).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

fn tf(b: bool) -> &'static str {
    if b {
        "T"
    } else {
        "F"
    }
}

/// Split a comment line into key=value pairs; values may be quoted.
fn comment_fields(line: &str) -> Vec<(String, String)> {
    let mut fields = Vec::new();
    let mut rest = line.trim();
    while !rest.is_empty() {
        let eq = match rest.find('=') {
            Some(i) => i,
            None => break,
        };
        let key = rest[..eq].trim().to_string();
        rest = &rest[eq + 1..];
        let value;
        if let Some(stripped) = rest.strip_prefix('"') {
            let close = stripped.find('"').unwrap_or(stripped.len());
            value = stripped[..close].to_string();
            rest = stripped.get(close + 1..).unwrap_or("").trim_start();
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            value = rest[..end].to_string();
            rest = rest[end..].trim_start();
        }
        fields.push((key, value));
    }
    fields
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number '{s}'")))
}

pub fn read_dataset(text: &str) -> Result<Dataset> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut composition = String::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let lineno = i + 1;
        let n: usize = lines[i]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("expected atom count, got '{}'", lines[i])))?;
        let comment = *lines
            .get(i + 1)
            .ok_or_else(|| parse_err(lineno + 1, "missing comment line"))?;
        let fields = comment_fields(comment);
        let get = |k: &str| fields.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());

        let cell_str = get("cell").ok_or_else(|| parse_err(lineno + 1, "missing cell="))?;
        let cs: Vec<&str> = cell_str.split_whitespace().collect();
        if cs.len() != 3 {
            return Err(parse_err(lineno + 1, "cell must have 3 lengths"));
        }
        let cell = [
            parse_f64(cs[0], lineno + 1)?,
            parse_f64(cs[1], lineno + 1)?,
            parse_f64(cs[2], lineno + 1)?,
        ];
        let pbc_str = get("pbc").unwrap_or("T T T");
        let ps: Vec<&str> = pbc_str.split_whitespace().collect();
        if ps.len() != 3 {
            return Err(parse_err(lineno + 1, "pbc must have 3 flags"));
        }
        let mut pbc = [true; 3];
        for (k, p) in ps.iter().enumerate() {
            pbc[k] = matches!(*p, "T" | "t" | "true" | "1");
        }
        let masses: Vec<f64> = match get("masses") {
            Some(ms) => ms
                .split_whitespace()
                .map(|m| parse_f64(m, lineno + 1))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let energy = match get("energy") {
            Some(e) => Some(parse_f64(e, lineno + 1)?),
            None => None,
        };
        if let Some(c) = get("composition") {
            if composition.is_empty() {
                composition = c.to_string();
            }
        }
        let (has_f, has_v) = match get("columns") {
            Some(cols) => (cols.contains("fx"), cols.contains("vx")),
            None => (false, false),
        };

        let mut species = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        let mut forces = if has_f { Some(Vec::with_capacity(n)) } else { None };
        let mut velocities = if has_v { Some(Vec::with_capacity(n)) } else { None };
        for a in 0..n {
            let lineno = i + 2 + a + 1;
            let row = *lines
                .get(i + 2 + a)
                .ok_or_else(|| parse_err(lineno, "truncated frame"))?;
            let toks: Vec<&str> = row.split_whitespace().collect();
            let (has_f, has_v) = if get("columns").is_some() {
                (has_f, has_v)
            } else {
                // No column spec: infer from token count (4 / 7 / 10).
                (toks.len() >= 7, toks.len() >= 10)
            };
            let expected = 4 + if has_f { 3 } else { 0 } + if has_v { 3 } else { 0 };
            if toks.len() != expected {
                return Err(parse_err(
                    lineno,
                    format!("expected {expected} columns, got {}", toks.len()),
                ));
            }
            species.push(
                toks[0]
                    .parse::<u32>()
                    .map_err(|_| parse_err(lineno, format!("invalid species '{}'", toks[0])))?,
            );
            positions.push([
                parse_f64(toks[1], lineno)?,
                parse_f64(toks[2], lineno)?,
                parse_f64(toks[3], lineno)?,
            ]);
            let mut col = 4;
            if has_f {
                forces.get_or_insert_with(Vec::new).push([
                    parse_f64(toks[col], lineno)?,
                    parse_f64(toks[col + 1], lineno)?,
                    parse_f64(toks[col + 2], lineno)?,
                ]);
                col += 3;
            }
            if has_v {
                velocities.get_or_insert_with(Vec::new).push([
                    parse_f64(toks[col], lineno)?,
                    parse_f64(toks[col + 1], lineno)?,
                    parse_f64(toks[col + 2], lineno)?,
                ]);
            }
        }
        let frame = Frame {
            species,
            positions,
            cell,
            pbc,
            energy,
            forces,
            velocities,
            masses,
        };
        frame
            .validate()
            .map_err(|e| Error::Validation(format!("frame starting line {lineno}: {e}")))?;
        frames.push(frame);
        i += 2 + n;
    }
    Ok(Dataset {
        frames,
        composition,
    })
}
