//! ASCII PLY point-cloud interchange (x y z, optional nx ny nz).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::cloud::PointCloud;
use crate::geom::Point3;
use crate::{Error, Result};

pub fn write_ply<W: Write>(cloud: &PointCloud, mut w: W) -> Result<()> {
    let with_normals = cloud.normals.is_some();
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if with_normals {
        writeln!(w, "property double nx")?;
        writeln!(w, "property double ny")?;
        writeln!(w, "property double nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        if let Some(ns) = &cloud.normals {
            let n = ns[i];
            writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n[0], n[1], n[2])?;
        } else {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
    }
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_ply(cloud, std::io::BufWriter::new(file))
}

pub fn read_ply<R: Read>(r: R) -> Result<PointCloud> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();

    let magic = lines
        .next()
        .ok_or_else(|| Error::Parse("empty ply".into()))??;
    if magic.trim() != "ply" {
        return Err(Error::Parse("missing ply magic".into()));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    loop {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("unterminated ply header".into()))??;
        let line = line.trim().to_string();
        if line == "end_header" {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", kind, _] => {
                if *kind != "ascii" {
                    return Err(Error::Parse(format!("unsupported ply format {kind}")));
                }
            }
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse()
                        .map_err(|_| Error::Parse("bad vertex count".into()))?,
                );
                in_vertex_element = true;
            }
            ["element", ..] => {
                in_vertex_element = false;
            }
            ["property", _ty, name] if in_vertex_element => {
                properties.push((*name).to_string());
            }
            _ => {}
        }
    }
    let vertex_count = vertex_count.ok_or_else(|| Error::Parse("no vertex element".into()))?;
    let col = |name: &str| properties.iter().position(|p| p == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse("vertex element lacks x/y/z".into())),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::with_capacity(vertex_count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(vertex_count));
    for _ in 0..vertex_count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("truncated vertex list".into()))??;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad vertex line: {e}")))?;
        if vals.len() < properties.len() {
            return Err(Error::Parse("short vertex line".into()));
        }
        points.push(Point3::new(vals[ix], vals[iy], vals[iz]));
        if let (Some(ns), Some((a, b, c))) = (&mut normals, normal_cols) {
            ns.push([vals[a], vals[b], vals[c]]);
        }
    }
    Ok(PointCloud { points, normals })
}

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    read_ply(std::fs::File::open(path)?)
}
