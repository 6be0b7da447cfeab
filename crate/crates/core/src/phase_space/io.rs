//! Field files.
//!
//! Binary layout, all little-endian: `n` as u64, then for each of the `2n`
//! axes its point count (u64) and half width (f64), then the row-major payload
//! as `(re, im)` f64 pairs. One-dimensional fields can also be written as CSV
//! with columns `x,v,re,im`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{Axis, Field, PhaseGrid};
use crate::error::{Error, Result};

/// Writes through a temporary file in the target directory and renames it into place.
pub(crate) fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_field(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        let grid = f.grid();
        w.write_all(&(grid.dim() as u64).to_le_bytes())?;
        for ax in grid.axes() {
            w.write_all(&(ax.points as u64).to_le_bytes())?;
            w.write_all(&ax.half_width.to_le_bytes())?;
        }
        for z in f.values() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    })
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated field header".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let mut r = BufReader::new(File::open(path)?);
    let n = read_u64(&mut r)?;
    if !(1..=3).contains(&n) {
        return Err(Error::Format(format!("dimension {n} in header is not 1, 2 or 3")));
    }
    let n = n as usize;
    let mut axes = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        let points = read_u64(&mut r)? as usize;
        let half_width = f64::from_bits(read_u64(&mut r)?);
        axes.push(Axis::new(half_width, points).map_err(|e| Error::Format(e.to_string()))?);
    }
    let grid = PhaseGrid::new(n, axes).map_err(|e| Error::Format(e.to_string()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != grid.len() * 16 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            grid.len() * 16
        )));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Field::from_values(&grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_field_csv(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    let grid = f.grid();
    if grid.dim() != 1 {
        return Err(Error::capability("CSV field output is only defined for n = 1"));
    }
    let (xa, va) = (*grid.x_axis(0), *grid.v_axis(0));
    write_atomic(path.as_ref(), |w| {
        writeln!(w, "x,v,re,im")?;
        for i in 0..xa.points {
            for j in 0..va.points {
                let z = f.values()[i * va.points + j];
                writeln!(w, "{:e},{:e},{:e},{:e}", xa.node(i), va.node(j), z.re, z.im)?;
            }
        }
        Ok(())
    })
}

fn axis_from_nodes(nodes: &[f64]) -> Result<Axis> {
    let points = nodes.len();
    let half_width = -nodes[0];
    let ax = Axis::new(half_width, points).map_err(|e| Error::Format(e.to_string()))?;
    let tol = 1e-9 * ax.spacing();
    if nodes.iter().enumerate().any(|(j, &x)| (x - ax.node(j)).abs() > tol) {
        return Err(Error::Format("CSV nodes do not form a symmetric uniform axis".into()));
    }
    Ok(ax)
}

pub fn read_field_csv(path: impl AsRef<Path>) -> Result<Field> {
    let r = BufReader::new(File::open(path)?);
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("x,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("line {}: expected 4 columns", lineno + 1)));
        }
        let mut row = [0.0; 4];
        for (dst, s) in row.iter_mut().zip(&parts) {
            *dst = s
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad number {s:?}", lineno + 1)))?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty CSV field".into()));
    }
    let x0 = rows[0][0];
    let nv = rows.iter().take_while(|r| r[0] == x0).count();
    if rows.len() % nv != 0 {
        return Err(Error::Format("CSV rows do not form a full grid".into()));
    }
    let xs: Vec<f64> = rows.iter().step_by(nv).map(|r| r[0]).collect();
    let vs: Vec<f64> = rows[..nv].iter().map(|r| r[1]).collect();
    if rows
        .iter()
        .enumerate()
        .any(|(k, r)| r[0] != xs[k / nv] || r[1] != vs[k % nv])
    {
        return Err(Error::Format("CSV rows are not in x-major grid order".into()));
    }
    let grid = PhaseGrid::new(1, vec![axis_from_nodes(&xs)?, axis_from_nodes(&vs)?])
        .map_err(|e| Error::Format(e.to_string()))?;
    let values = rows.iter().map(|r| Complex64::new(r[2], r[3])).collect();
    Field::from_values(&grid, values)
}
