//! Plain-text formats: sampled metrics, deformation and immersion
//! checkpoints. All numeric output goes through `Display`, which for
//! `f32`/`f64` is the shortest round-trip form, so files are
//! byte-deterministic and re-parse to identical bits.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix2, Vector3};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mesh2, Rect};
use crate::kirchhoff::ImmersionField2D;
use crate::metric::MetricField;
use crate::plate::DeformationField3D;
use crate::scalar::{real, Real};

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse number {tok:?}")))
}

// ---------------------------------------------------------------------------
// Sampled metric: `x1,x2,g11,g12,g22`
// ---------------------------------------------------------------------------

/// Writes a metric sampled on a uniform grid, row-major with `x2` varying
/// fastest. The header names the columns.
pub fn write_sampled_metric<T: Real>(
    path: &Path,
    mesh: &Mesh2<T>,
    sample: impl Fn(T, T) -> Matrix2<T>,
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x1,x2,g11,g12,g22")?;
    for i in 0..mesh.nx {
        for j in 0..mesh.ny {
            let (x1, x2) = mesh.node_pos(i, j);
            let g = sample(x1, x2);
            writeln!(w, "{},{},{},{},{}", x1, x2, g[(0, 0)], g[(0, 1)], g[(1, 1)])?;
        }
    }
    Ok(())
}

/// Reads a sampled metric. Grid dimensions are inferred from the distinct
/// coordinate counts; the row order is immaterial.
pub fn read_sampled_metric<T: Real>(path: &Path) -> Result<MetricField<T>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut rows: Vec<(f64, f64, [f64; 3])> = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("x1") {
            continue;
        }
        let toks: Vec<&str> = trimmed.split(',').collect();
        if toks.len() != 5 {
            return Err(Error::Parse(format!(
                "line {}: expected 5 columns, got {}",
                idx + 1,
                toks.len()
            )));
        }
        let x1 = parse_f64(toks[0], idx + 1)?;
        let x2 = parse_f64(toks[1], idx + 1)?;
        let g = [
            parse_f64(toks[2], idx + 1)?,
            parse_f64(toks[3], idx + 1)?,
            parse_f64(toks[4], idx + 1)?,
        ];
        if !xs.contains(&x1) {
            xs.push(x1);
        }
        if !ys.contains(&x2) {
            ys.push(x2);
        }
        rows.push((x1, x2, g));
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (nx, ny) = (xs.len(), ys.len());
    if nx < 2 || ny < 2 || rows.len() != nx * ny {
        return Err(Error::Parse(format!(
            "grid inference failed: {} distinct x1, {} distinct x2, {} rows",
            nx,
            ny,
            rows.len()
        )));
    }
    // Uniform spacing check.
    for (coords, label) in [(&xs, "x1"), (&ys, "x2")] {
        let step = coords[1] - coords[0];
        for w in coords.windows(2) {
            if ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0) {
                return Err(Error::Parse(format!("non-uniform {label} grid spacing")));
            }
        }
    }
    let rect = Rect::new(
        real::<T>(xs[0]),
        real::<T>(xs[nx - 1]),
        real::<T>(ys[0]),
        real::<T>(ys[ny - 1]),
    );
    let mesh = Mesh2::new(rect, nx, ny);
    let mut samples = vec![Matrix2::zeros(); nx * ny];
    let mut seen = vec![false; nx * ny];
    for (x1, x2, g) in rows {
        let i = xs.iter().position(|&v| v == x1).unwrap();
        let j = ys.iter().position(|&v| v == x2).unwrap();
        let idx = mesh.node_index(i, j);
        if seen[idx] {
            return Err(Error::Parse(format!("duplicate sample at ({x1}, {x2})")));
        }
        seen[idx] = true;
        samples[idx] = Matrix2::new(
            real::<T>(g[0]),
            real::<T>(g[1]),
            real::<T>(g[1]),
            real::<T>(g[2]),
        );
    }
    MetricField::from_samples(mesh, samples)
}

// ---------------------------------------------------------------------------
// Deformation checkpoint: `# h=.. nx=.. ny=.. nz=..` then `i,j,k,u1,u2,u3`
// ---------------------------------------------------------------------------

pub fn write_deformation<T: Real>(path: &Path, u: &DeformationField3D<T>) -> Result<()> {
    let g = &u.grid;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "# h={} nx={} ny={} nz={}",
        g.h, g.mesh.nx, g.mesh.ny, g.nz
    )?;
    writeln!(w, "i,j,k,u1,u2,u3")?;
    for k in 0..g.nz {
        for j in 0..g.mesh.ny {
            for i in 0..g.mesh.nx {
                let v = u.u[g.node_index(i, j, k)];
                writeln!(w, "{i},{j},{k},{},{},{}", v[0], v[1], v[2])?;
            }
        }
    }
    Ok(())
}

/// Reads a deformation checkpoint; the in-plane rectangle comes from the
/// caller (checkpoints store indices, not coordinates).
pub fn read_deformation<T: Real>(path: &Path, rect: Rect<T>) -> Result<DeformationField3D<T>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header: Option<(f64, usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, usize, Vector3<T>)> = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            let mut h = None;
            let mut nx = None;
            let mut ny = None;
            let mut nz = None;
            for tok in trimmed.trim_start_matches('#').split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    match k {
                        "h" => h = v.parse::<f64>().ok(),
                        "nx" => nx = v.parse::<usize>().ok(),
                        "ny" => ny = v.parse::<usize>().ok(),
                        "nz" => nz = v.parse::<usize>().ok(),
                        _ => {}
                    }
                }
            }
            if let (Some(h), Some(nx), Some(ny), Some(nz)) = (h, nx, ny, nz) {
                header = Some((h, nx, ny, nz));
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('i') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split(',').collect();
        if toks.len() != 6 {
            return Err(Error::Parse(format!("line {}: expected 6 columns", idx + 1)));
        }
        let i = toks[0].trim().parse::<usize>().map_err(|_| {
            Error::Parse(format!("line {}: bad index", idx + 1))
        })?;
        let j = toks[1].trim().parse::<usize>().map_err(|_| {
            Error::Parse(format!("line {}: bad index", idx + 1))
        })?;
        let k = toks[2].trim().parse::<usize>().map_err(|_| {
            Error::Parse(format!("line {}: bad index", idx + 1))
        })?;
        entries.push((
            i,
            j,
            k,
            Vector3::new(
                real::<T>(parse_f64(toks[3], idx + 1)?),
                real::<T>(parse_f64(toks[4], idx + 1)?),
                real::<T>(parse_f64(toks[5], idx + 1)?),
            ),
        ));
    }
    let (h, nx, ny, nz) =
        header.ok_or_else(|| Error::Parse("missing checkpoint header".into()))?;
    let mesh = Mesh2::new(rect, nx, ny);
    let grid = Grid3::new(mesh, nz, real::<T>(h))?;
    if entries.len() != grid.n_nodes() {
        return Err(Error::Parse(format!(
            "expected {} nodes, got {}",
            grid.n_nodes(),
            entries.len()
        )));
    }
    let mut u = vec![Vector3::zeros(); grid.n_nodes()];
    for (i, j, k, v) in entries {
        if i >= nx || j >= ny || k >= nz {
            return Err(Error::Parse(format!("index ({i},{j},{k}) out of range")));
        }
        u[grid.node_index(i, j, k)] = v;
    }
    DeformationField3D::new(grid, u)
}

// ---------------------------------------------------------------------------
// Immersion checkpoint: `# nx=.. ny=..` then `i,j,y1,y2,y3`
// ---------------------------------------------------------------------------

pub fn write_immersion<T: Real>(path: &Path, y: &ImmersionField2D<T>) -> Result<()> {
    let mesh = &y.mesh;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# nx={} ny={}", mesh.nx, mesh.ny)?;
    writeln!(w, "i,j,y1,y2,y3")?;
    for j in 0..mesh.ny {
        for i in 0..mesh.nx {
            let v = y.y[mesh.node_index(i, j)];
            writeln!(w, "{i},{j},{},{},{}", v[0], v[1], v[2])?;
        }
    }
    Ok(())
}

pub fn read_immersion<T: Real>(path: &Path, rect: Rect<T>) -> Result<ImmersionField2D<T>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut dims: Option<(usize, usize)> = None;
    let mut entries: Vec<(usize, usize, Vector3<T>)> = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            let mut nx = None;
            let mut ny = None;
            for tok in trimmed.trim_start_matches('#').split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    match k {
                        "nx" => nx = v.parse::<usize>().ok(),
                        "ny" => ny = v.parse::<usize>().ok(),
                        _ => {}
                    }
                }
            }
            if let (Some(nx), Some(ny)) = (nx, ny) {
                dims = Some((nx, ny));
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('i') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split(',').collect();
        if toks.len() != 5 {
            return Err(Error::Parse(format!("line {}: expected 5 columns", idx + 1)));
        }
        let i = toks[0].trim().parse::<usize>().map_err(|_| {
            Error::Parse(format!("line {}: bad index", idx + 1))
        })?;
        let j = toks[1].trim().parse::<usize>().map_err(|_| {
            Error::Parse(format!("line {}: bad index", idx + 1))
        })?;
        entries.push((
            i,
            j,
            Vector3::new(
                real::<T>(parse_f64(toks[2], idx + 1)?),
                real::<T>(parse_f64(toks[3], idx + 1)?),
                real::<T>(parse_f64(toks[4], idx + 1)?),
            ),
        ));
    }
    let (nx, ny) = dims.ok_or_else(|| Error::Parse("missing checkpoint header".into()))?;
    let mesh = Mesh2::new(rect, nx, ny);
    if entries.len() != mesh.n_nodes() {
        return Err(Error::Parse(format!(
            "expected {} nodes, got {}",
            mesh.n_nodes(),
            entries.len()
        )));
    }
    let mut y = vec![Vector3::zeros(); mesh.n_nodes()];
    for (i, j, v) in entries {
        if i >= nx || j >= ny {
            return Err(Error::Parse(format!("index ({i},{j}) out of range")));
        }
        y[mesh.node_index(i, j)] = v;
    }
    ImmersionField2D::new(mesh, y)
}
