use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::geometry::{Label, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlyFormat {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

fn header(mesh: &TriangleMesh, format: PlyFormat) -> String {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )
}

pub fn write_ply_to<W: Write>(mesh: &TriangleMesh, mut w: W, format: PlyFormat) -> io::Result<()> {
    w.write_all(header(mesh, format).as_bytes())?;
    let color = |i: usize| mesh.colors.get(i).copied().unwrap_or([255; 3]);
    match format {
        PlyFormat::Ascii => {
            for (i, p) in mesh.vertices.iter().enumerate() {
                let [r, g, b] = color(i);
                writeln!(w, "{:.6} {:.6} {:.6} {r} {g} {b}", p.x, p.y, p.z)?;
            }
            for t in &mesh.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in mesh.vertices.iter().enumerate() {
                for c in [p.x, p.y, p.z] {
                    w.write_all(&(c as f32).to_le_bytes())?;
                }
                w.write_all(&color(i))?;
            }
            for t in &mesh.triangles {
                w.write_all(&[3])?;
                for &v in t {
                    w.write_all(&(v as i32).to_le_bytes())?;
                }
            }
        }
    }
    w.flush()
}

pub fn write_ply(mesh: &TriangleMesh, path: &Path, format: PlyFormat) -> io::Result<()> {
    write_ply_to(mesh, BufWriter::new(File::create(path)?), format)
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Reads meshes in the layout produced by `write_ply`. Vertex labels are not
/// stored in the file and come back as `Label(0)`.
pub fn read_ply(path: &Path) -> io::Result<TriangleMesh> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let (mut format, mut nv, mut nf) = (None, None, None);
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(invalid("missing end_header"));
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, ..] => return Err(invalid(format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                nv = Some(n.parse().map_err(|_| invalid("bad vertex count"))?)
            }
            ["element", "face", n] => nf = Some(n.parse().map_err(|_| invalid("bad face count"))?),
            _ => {}
        }
    }
    let format = format.ok_or_else(|| invalid("missing format"))?;
    let (nv, nf): (usize, usize) = (
        nv.ok_or_else(|| invalid("no vertices"))?,
        nf.ok_or_else(|| invalid("no faces"))?,
    );
    let mut mesh = TriangleMesh::default();
    match format {
        PlyFormat::Ascii => {
            let mut rest = String::new();
            r.read_to_string(&mut rest)?;
            let mut lines = rest.lines();
            for _ in 0..nv {
                let l = lines.next().ok_or_else(|| invalid("truncated vertices"))?;
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 6 {
                    return Err(invalid(format!("bad vertex line {l:?}")));
                }
                let f = |i: usize| t[i].parse::<f64>().map_err(|_| invalid("bad coordinate"));
                let c = |i: usize| t[i].parse::<u8>().map_err(|_| invalid("bad color"));
                mesh.vertices.push(Vec3::new(f(0)?, f(1)?, f(2)?));
                mesh.colors.push([c(3)?, c(4)?, c(5)?]);
            }
            for _ in 0..nf {
                let l = lines.next().ok_or_else(|| invalid("truncated faces"))?;
                let t: Vec<u32> = l
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| invalid("bad index")))
                    .collect::<Result<_, _>>()?;
                if t.len() != 4 || t[0] != 3 {
                    return Err(invalid(format!("bad face line {l:?}")));
                }
                mesh.triangles.push([t[1], t[2], t[3]]);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut buf4 = [0u8; 4];
            for _ in 0..nv {
                let mut p = [0.0; 3];
                for c in &mut p {
                    r.read_exact(&mut buf4)?;
                    *c = f32::from_le_bytes(buf4) as f64;
                }
                let mut rgb = [0u8; 3];
                r.read_exact(&mut rgb)?;
                mesh.vertices.push(Vec3::from_array(p));
                mesh.colors.push(rgb);
            }
            for _ in 0..nf {
                let mut n = [0u8; 1];
                r.read_exact(&mut n)?;
                if n[0] != 3 {
                    return Err(invalid("non-triangular face"));
                }
                let mut t = [0u32; 3];
                for v in &mut t {
                    r.read_exact(&mut buf4)?;
                    *v = i32::from_le_bytes(buf4) as u32;
                }
                mesh.triangles.push(t);
            }
        }
    }
    if mesh.triangles.iter().flatten().any(|&v| v as usize >= nv) {
        return Err(invalid("face index out of range"));
    }
    mesh.labels = vec![Label(0); nv];
    Ok(mesh)
}
