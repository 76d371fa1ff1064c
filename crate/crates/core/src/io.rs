//! Raster file formats.
//!
//! Flow and field files share one layout: a text header of `key value` lines
//! terminated by a line reading `data`, followed by little-endian `f32`
//! planes in row-major order (x fastest, rows from the bottom of the domain).
//! A flow snapshot stores the `wx` plane then the `wy` plane; a scalar field
//! stores one plane.
//!
//! ```text
//! ergosearch-raster 1
//! kind flow
//! nx 100
//! ny 100
//! origin 0 0
//! h 0.01
//! planes 2
//! times 0 10
//! data
//! ```
//!
//! Mask files are raw row-major bytes, `0` for fluid and `1` for obstacle.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{CellKind, FlowSeries, Grid2D, ScalarField, VectorField};

const MAGIC: &str = "ergosearch-raster 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    Flow,
    Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub kind: RasterKind,
    pub nx: usize,
    pub ny: usize,
    pub origin: Vec2,
    pub h: f64,
    pub times: Vec<f64>,
}

impl RasterHeader {
    fn planes(&self) -> usize {
        match self.kind {
            RasterKind::Flow => 2,
            RasterKind::Scalar => 1,
        }
    }

    fn for_grid(kind: RasterKind, g: &Grid2D, times: Vec<f64>) -> Self {
        Self { kind, nx: g.nx(), ny: g.ny(), origin: g.origin(), h: g.h(), times }
    }

    fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        let kind = match self.kind {
            RasterKind::Flow => "flow",
            RasterKind::Scalar => "scalar",
        };
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "kind {kind}")?;
        writeln!(out, "nx {}", self.nx)?;
        writeln!(out, "ny {}", self.ny)?;
        writeln!(out, "origin {} {}", self.origin.x, self.origin.y)?;
        writeln!(out, "h {}", self.h)?;
        writeln!(out, "planes {}", self.planes())?;
        let times: Vec<String> = self.times.iter().map(|t| t.to_string()).collect();
        writeln!(out, "times {}", times.join(" "))?;
        writeln!(out, "data")
    }

    pub fn matches(&self, g: &Grid2D) -> bool {
        self.nx == g.nx()
            && self.ny == g.ny()
            && (self.h - g.h()).abs() <= 1e-9 * g.h()
            && self.origin.dist(g.origin()) <= 1e-9 * g.h().max(1.0)
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Reads a raster file: header plus one `Vec<f64>` per stored plane.
pub fn read_raster(path: &Path) -> Result<(RasterHeader, Vec<Vec<f64>>)> {
    let mut rd = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    rd.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(bad(path, "missing raster magic line"));
    }
    let (mut kind, mut nx, mut ny, mut origin, mut h, mut planes, mut times) =
        (None, None, None, None, None, None, None);
    loop {
        line.clear();
        if rd.read_line(&mut line)? == 0 {
            return Err(bad(path, "header not terminated by `data`"));
        }
        let mut it = line.split_whitespace();
        let Some(key) = it.next() else { continue };
        let rest: Vec<&str> = it.collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(path, format!("bad number `{s}`")));
        let one = match rest.as_slice() {
            [v] => Some(*v),
            _ => None,
        };
        let single = || one.ok_or_else(|| bad(path, format!("`{key}` expects one value")));
        match key {
            "data" => break,
            "kind" => {
                kind = Some(match single()? {
                    "flow" => RasterKind::Flow,
                    "scalar" => RasterKind::Scalar,
                    other => return Err(bad(path, format!("unknown kind `{other}`"))),
                })
            }
            "nx" => nx = Some(single()?.parse::<usize>().map_err(|_| bad(path, "bad nx"))?),
            "ny" => ny = Some(single()?.parse::<usize>().map_err(|_| bad(path, "bad ny"))?),
            "h" => h = Some(num(single()?)?),
            "planes" => planes = Some(single()?.parse::<usize>().map_err(|_| bad(path, "bad planes"))?),
            "origin" => match rest.as_slice() {
                [x, y] => origin = Some(Vec2::new(num(x)?, num(y)?)),
                _ => return Err(bad(path, "`origin` expects two values")),
            },
            "times" => times = Some(rest.iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?),
            _ => return Err(bad(path, format!("unknown header key `{key}`"))),
        }
    }
    let missing = |k: &str| bad(path, format!("header lacks `{k}`"));
    let header = RasterHeader {
        kind: kind.ok_or_else(|| missing("kind"))?,
        nx: nx.ok_or_else(|| missing("nx"))?,
        ny: ny.ok_or_else(|| missing("ny"))?,
        origin: origin.ok_or_else(|| missing("origin"))?,
        h: h.ok_or_else(|| missing("h"))?,
        times: times.ok_or_else(|| missing("times"))?,
    };
    if planes.ok_or_else(|| missing("planes"))? != header.planes() {
        return Err(bad(path, "plane count does not match kind"));
    }
    if header.times.is_empty() {
        return Err(bad(path, "no snapshot times"));
    }
    let per_plane = header.nx * header.ny;
    let n_planes = header.planes() * header.times.len();
    let mut bytes = Vec::new();
    rd.read_to_end(&mut bytes)?;
    if bytes.len() != per_plane * n_planes * 4 {
        return Err(bad(
            path,
            format!("expected {} data bytes, found {}", per_plane * n_planes * 4, bytes.len()),
        ));
    }
    let planes = bytes
        .chunks_exact(per_plane * 4)
        .map(|plane| {
            plane
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()
        })
        .collect();
    Ok((header, planes))
}

fn write_planes<'a>(
    path: &Path,
    header: &RasterHeader,
    planes: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    header.write(&mut out)?;
    for plane in planes {
        for v in plane {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_flow(path: &Path, flow: &FlowSeries) -> Result<()> {
    let header = RasterHeader::for_grid(RasterKind::Flow, flow.grid(), flow.times().to_vec());
    let planes = flow
        .snapshots()
        .iter()
        .flat_map(|f| [f.wx.as_slice(), f.wy.as_slice()]);
    write_planes(path, &header, planes)
}

/// Loads a flow file onto `grid`; dimensions, origin and spacing must agree.
pub fn read_flow(path: &Path, grid: Arc<Grid2D>) -> Result<FlowSeries> {
    let (header, mut planes) = read_raster(path)?;
    if header.kind != RasterKind::Flow {
        return Err(bad(path, "not a flow file"));
    }
    if !header.matches(&grid) {
        return Err(bad(path, "flow raster does not match the configured grid"));
    }
    let mut snapshots = Vec::with_capacity(header.times.len());
    let mut drain = planes.drain(..);
    for &t in &header.times {
        let (wx, wy) = (drain.next().unwrap(), drain.next().unwrap());
        snapshots.push((t, VectorField { wx, wy }));
    }
    FlowSeries::new(grid, snapshots)
}

pub fn write_scalar(path: &Path, field: &ScalarField, t: f64) -> Result<()> {
    let header = RasterHeader::for_grid(RasterKind::Scalar, field.grid(), vec![t]);
    write_planes(path, &header, std::iter::once(field.values()))
}

pub fn read_mask(path: &Path, nx: usize, ny: usize) -> Result<Vec<CellKind>> {
    let bytes = fs::read(path)?;
    if bytes.len() != nx * ny {
        return Err(bad(path, format!("mask has {} bytes, expected {}", bytes.len(), nx * ny)));
    }
    bytes
        .into_iter()
        .map(|b| match b {
            0 => Ok(CellKind::Fluid),
            1 => Ok(CellKind::Obstacle),
            other => Err(bad(path, format!("invalid mask byte {other}"))),
        })
        .collect()
}

pub fn write_mask(path: &Path, grid: &Grid2D) -> Result<()> {
    let bytes: Vec<u8> = grid.mask().iter().map(|&c| c as u8).collect();
    fs::write(path, bytes)?;
    Ok(())
}

/// Maps values linearly onto 0..=255; rows are flipped so north is up.
pub fn to_gray8(values: &[f64], nx: usize, ny: usize) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Vec::with_capacity(nx * ny);
    for j in (0..ny).rev() {
        for i in 0..nx {
            let v = values[j * nx + i];
            let s = if v.is_finite() { (v - lo) / span } else { 0.0 };
            out.push((s * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Binary 8-bit PGM preview of a scalar field.
pub fn write_pgm(path: &Path, values: &[f64], nx: usize, ny: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{nx} {ny}\n255\n")?;
    out.write_all(&to_gray8(values, nx, ny))?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Polygon, Rect};
    use crate::grid::{build_grid, RimEdges};

    fn grid() -> Arc<Grid2D> {
        let obstacle = Polygon::rectangle(Vec2::new(0.3, 0.3), Vec2::new(0.5, 0.5));
        Arc::new(
            build_grid(
                Rect::new(Vec2::new(1.0, 2.0), Vec2::new(2.0, 2.5)),
                0.05,
                &[Polygon::new(obstacle.vertices.iter().map(|v| *v + Vec2::new(1.0, 2.0)).collect())],
                RimEdges::closed(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn flow_file_round_trips_through_f32() {
        let g = grid();
        let n = g.len();
        let field = |s: f64| VectorField {
            wx: (0..n).map(|k| if g.is_fluid(k) { s * k as f64 } else { 0.0 }).collect(),
            wy: (0..n).map(|k| if g.is_fluid(k) { -0.25 * s } else { 0.0 }).collect(),
        };
        let flow = FlowSeries::new(g.clone(), vec![(0.0, field(0.5)), (30.0, field(1.0))]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.bin");
        write_flow(&path, &flow).unwrap();
        let back = read_flow(&path, g.clone()).unwrap();
        assert_eq!(back.times(), flow.times());
        assert_eq!(back.snapshots(), flow.snapshots());

        let bytes = fs::read(&path).unwrap();
        let text_end = bytes.windows(5).position(|w| w == b"data\n").unwrap() + 5;
        assert_eq!(bytes.len() - text_end, 2 * 2 * n * 4);
        // first data value is wx of cell 0 at t=0
        assert_eq!(&bytes[text_end + 4..text_end + 8], &0.5f32.to_le_bytes());
    }

    #[test]
    fn mismatched_or_truncated_files_are_rejected() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let s = ScalarField::constant(g.clone(), 1.0);
        write_scalar(&path, &s, 4.0).unwrap();
        assert!(matches!(read_flow(&path, g.clone()), Err(Error::Format { .. })));
        let (hdr, planes) = read_raster(&path).unwrap();
        assert_eq!(hdr.times, vec![4.0]);
        assert_eq!(planes[0], s.values());

        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(read_raster(&path).is_err());
    }

    #[test]
    fn mask_round_trip() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.bin");
        write_mask(&path, &g).unwrap();
        assert_eq!(read_mask(&path, g.nx(), g.ny()).unwrap(), g.mask());
        assert!(read_mask(&path, g.nx() + 1, g.ny()).is_err());
    }

    #[test]
    fn gray_preview_flips_rows() {
        let px = to_gray8(&[0.0, 1.0, 2.0, 3.0], 2, 2);
        assert_eq!(px, vec![170, 255, 0, 85]);
    }
}
