//! File formats for grids.
//!
//! Snapshot layout (little endian throughout):
//!
//! | bytes            | content                                  |
//! |------------------|------------------------------------------|
//! | 4                | magic `PWL1`                             |
//! | 4                | format version, `u32` (currently 1)      |
//! | 4                | dims, `u32`                              |
//! | 8 · dims         | points per axis, `u64`                   |
//! | 16 · dims        | `(lower, upper)` per axis, `f64`         |
//! | dims             | boundary flag per axis (0 periodic, 1 reflecting) |
//! | 8                | time label, `f64`                        |
//! | 16 · len         | `(re, im)` pairs in row-major order      |
//!
//! The CSV export has one row per grid point with columns
//! `i0[,i1[,i2]],q0[,q1[,q2]],re,im`. Values are written with Rust's
//! shortest round-trip formatting, so reading a CSV back is exact even
//! though the format is documented as lossy.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Axis, Boundary, GridSpec, RealField, WaveFunction};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PWL1";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_snapshot(psi: &WaveFunction) -> Vec<u8> {
    let grid = psi.grid();
    let mut out = Vec::with_capacity(64 + 16 * grid.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dims() as u32).to_le_bytes());
    for a in grid.axes() {
        out.extend_from_slice(&(a.points as u64).to_le_bytes());
    }
    for a in grid.axes() {
        out.extend_from_slice(&a.lower.to_le_bytes());
        out.extend_from_slice(&a.upper.to_le_bytes());
    }
    for a in grid.axes() {
        out.push(match a.boundary {
            Boundary::Periodic => 0,
            Boundary::Reflecting => 1,
        });
    }
    out.extend_from_slice(&psi.time().to_le_bytes());
    for z in psi.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("snapshot truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_snapshot(bytes: &[u8]) -> Result<WaveFunction> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != SNAPSHOT_MAGIC {
        return Err(Error::Format("missing PWL1 magic".into()));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let dims = r.u32()? as usize;
    if !(1..=3).contains(&dims) {
        return Err(Error::Format(format!("snapshot has {dims} dimensions")));
    }
    let points: Vec<u64> = (0..dims).map(|_| r.u64()).collect::<Result<_>>()?;
    let bounds: Vec<(f64, f64)> = (0..dims).map(|_| Ok((r.f64()?, r.f64()?))).collect::<Result<_>>()?;
    let flags = r.take(dims)?.to_vec();
    let mut axes = Vec::with_capacity(dims);
    for d in 0..dims {
        let boundary = match flags[d] {
            0 => Boundary::Periodic,
            1 => Boundary::Reflecting,
            f => return Err(Error::Format(format!("unknown boundary flag {f}"))),
        };
        let points = usize::try_from(points[d]).map_err(|_| Error::Format("axis too large".into()))?;
        axes.push(Axis { points, lower: bounds[d].0, upper: bounds[d].1, boundary });
    }
    let grid = GridSpec::new(axes)?;
    let time = r.f64()?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(Complex64::new(r.f64()?, r.f64()?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after snapshot", bytes.len() - r.pos)));
    }
    WaveFunction::new(grid, values, time)
}

fn csv_header(dims: usize) -> String {
    let mut cols: Vec<String> = (0..dims).map(|d| format!("i{d}")).collect();
    cols.extend((0..dims).map(|d| format!("q{d}")));
    cols.push("re".into());
    cols.push("im".into());
    cols.join(",")
}

fn write_rows(grid: &GridSpec, value: impl Fn(usize) -> (f64, f64)) -> String {
    let dims = grid.dims();
    let mut out = csv_header(dims);
    out.push('\n');
    for flat in 0..grid.len() {
        let idx = grid.multi_index(flat);
        let q = grid.point(flat);
        let (re, im) = value(flat);
        let mut row: Vec<String> = idx[..dims].iter().map(|i| i.to_string()).collect();
        row.extend(q.iter().map(|x| x.to_string()));
        row.push(re.to_string());
        row.push(im.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn wavefunction_csv(psi: &WaveFunction) -> String {
    write_rows(psi.grid(), |i| (psi.values()[i].re, psi.values()[i].im))
}

/// Real fields use the same layout with `im = 0`.
pub fn field_csv(field: &RealField) -> String {
    write_rows(field.grid(), |i| (field.values()[i], 0.0))
}

/// Reads grid CSV rows and checks them against `grid`: every node must
/// appear exactly once and its coordinates must match to `1e-9` of the
/// axis spacing.
pub fn read_grid_csv(text: &str, grid: &GridSpec) -> Result<Vec<Complex64>> {
    let dims = grid.dims();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.join(",") != csv_header(dims) {
        return Err(Error::Format(format!("line 1: expected header `{}`, got `{}`", csv_header(dims), header.trim())));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut seen = vec![false; grid.len()];
    for (n, line) in lines {
        let line_no = n + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 * dims + 2 {
            return Err(Error::Format(format!("line {line_no}: expected {} columns", 2 * dims + 2)));
        }
        let mut idx = [0usize; 3];
        for d in 0..dims {
            idx[d] = fields[d].parse().map_err(|_| Error::Format(format!("line {line_no}: bad index `{}`", fields[d])))?;
            if idx[d] >= grid.axis(d).points {
                return Err(Error::Format(format!("line {line_no}: index {} outside axis {d}", idx[d])));
            }
        }
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Format(format!("line {line_no}: bad number `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Format(format!("line {line_no}: non-finite value")))
            }
        };
        for d in 0..dims {
            let q = num(fields[dims + d])?;
            let a = grid.axis(d);
            if (q - a.coord(idx[d])).abs() > 1e-9 * a.spacing() {
                return Err(Error::Format(format!(
                    "line {line_no}: coordinate {q} does not match node {} of axis {d} at {}",
                    idx[d],
                    a.coord(idx[d])
                )));
            }
        }
        let flat = grid.flat_index(&idx[..dims]);
        if seen[flat] {
            return Err(Error::Format(format!("line {line_no}: node listed twice")));
        }
        seen[flat] = true;
        values[flat] = Complex64::new(num(fields[2 * dims])?, num(fields[2 * dims + 1])?);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!("node {:?} missing from CSV", grid.point(missing))));
    }
    Ok(values)
}

/// Tabulated potential: the `re` column of a grid CSV. A non-zero `im`
/// column is rejected.
pub fn read_potential_csv(text: &str, grid: &GridSpec) -> Result<RealField> {
    let values = read_grid_csv(text, grid)?;
    if let Some(i) = values.iter().position(|z| z.im != 0.0) {
        return Err(Error::Format(format!("potential has imaginary part at {:?}", grid.point(i))));
    }
    RealField::new(grid.clone(), values.into_iter().map(|z| z.re).collect())
}
