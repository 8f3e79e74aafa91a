//! ASCII OFF and OBJ readers/writers.
//!
//! Positions are written with 17 significant digits so that a save/load cycle
//! reproduces every `f64` coordinate bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MeshError, TriangleMesh};
use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(ext) if ext == "off" => Ok(Self::Off),
            Some(ext) if ext == "obj" => Ok(Self::Obj),
            _ => Err(MeshError::UnknownFormat(path.display().to_string())),
        }
    }
}

pub fn load_mesh<T: Real>(path: &Path, format: Option<MeshFormat>) -> Result<TriangleMesh<T>, MeshError> {
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let text = fs::read_to_string(path)
        .map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    match format {
        MeshFormat::Off => read_off(&text),
        MeshFormat::Obj => read_obj(&text),
    }
}

pub fn save_mesh<T: Real>(mesh: &TriangleMesh<T>, path: &Path) -> Result<(), MeshError> {
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Off => write_off(mesh),
        MeshFormat::Obj => write_obj(mesh),
    };
    fs::write(path, text).map_err(|source| MeshError::Io { path: path.display().to_string(), source })
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, MeshError> {
    tok.parse::<f64>()
        .map_err(|_| MeshError::Parse { line, msg: format!("expected a number, found {tok:?}") })
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, MeshError> {
    tok.parse::<usize>()
        .map_err(|_| MeshError::Parse { line, msg: format!("expected an index, found {tok:?}") })
}

pub fn read_off<T: Real>(text: &str) -> Result<TriangleMesh<T>, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let eof = |what: &str| MeshError::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") };

    let (line, head) = lines.next().ok_or_else(|| eof("OFF header"))?;
    let mut head_toks = head.split_whitespace();
    if head_toks.next() != Some("OFF") {
        return Err(MeshError::Parse { line, msg: "missing OFF header".into() });
    }
    // Counts may follow the keyword on the same line.
    let rest: Vec<&str> = head_toks.collect();
    let (count_line, counts) = if rest.is_empty() {
        let (l, c) = lines.next().ok_or_else(|| eof("element counts"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (line, rest)
    };
    if counts.len() < 2 {
        return Err(MeshError::Parse { line: count_line, msg: "expected vertex and face counts".into() });
    }
    let nv = parse_usize(counts[0], count_line)?;
    let nf = parse_usize(counts[1], count_line)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or_else(|| eof("vertex record"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(MeshError::Parse { line, msg: "vertex record needs 3 coordinates".into() });
        }
        let p = [parse_f64(toks[0], line)?, parse_f64(toks[1], line)?, parse_f64(toks[2], line)?];
        vertices.push(Vec3::from_f64(p));
    }

    // Face records may carry trailing colour values after the indices.
    let mut polygons = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or_else(|| eof("face record"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let k = parse_usize(toks[0], line)?;
        if k < 3 || toks.len() < k + 1 {
            return Err(MeshError::Parse { line, msg: format!("bad polygon record with {k} corners") });
        }
        let poly = toks[1..=k].iter().map(|t| parse_usize(t, line)).collect::<Result<Vec<_>, _>>()?;
        polygons.push(poly);
    }
    TriangleMesh::from_polygons(vertices, &polygons)
}

pub fn read_obj<T: Real>(text: &str) -> Result<TriangleMesh<T>, MeshError> {
    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("");
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let t = toks.next().ok_or(MeshError::Parse { line, msg: "short vertex record".into() })?;
                    *c = parse_f64(t, line)?;
                }
                vertices.push(Vec3::from_f64(p));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let idx = t.split('/').next().unwrap_or("");
                    let k: i64 = idx
                        .parse()
                        .map_err(|_| MeshError::Parse { line, msg: format!("bad face index {t:?}") })?;
                    let resolved = if k > 0 {
                        k - 1
                    } else if k < 0 {
                        vertices.len() as i64 + k
                    } else {
                        return Err(MeshError::Parse { line, msg: "OBJ indices are 1-based".into() });
                    };
                    if resolved < 0 {
                        return Err(MeshError::Parse { line, msg: format!("relative index {k} out of range") });
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(MeshError::Parse { line, msg: "face with fewer than 3 corners".into() });
                }
                polygons.push(poly);
            }
            _ => {}
        }
    }
    TriangleMesh::from_polygons(vertices, &polygons)
}

fn fmt_coord(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_off<T: Real>(mesh: &TriangleMesh<T>) -> String {
    let mut s = String::with_capacity(64 * (mesh.n_vertices() + mesh.n_faces()));
    let _ = writeln!(s, "OFF");
    let _ = writeln!(s, "{} {} {}", mesh.n_vertices(), mesh.n_faces(), mesh.n_edges());
    for v in mesh.vertices() {
        let [x, y, z] = v.to_f64();
        let _ = writeln!(s, "{} {} {}", fmt_coord(x), fmt_coord(y), fmt_coord(z));
    }
    for [a, b, c] in mesh.faces() {
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    s
}

pub fn write_obj<T: Real>(mesh: &TriangleMesh<T>) -> String {
    let mut s = String::with_capacity(64 * (mesh.n_vertices() + mesh.n_faces()));
    for v in mesh.vertices() {
        let [x, y, z] = v.to_f64();
        let _ = writeln!(s, "v {} {} {}", fmt_coord(x), fmt_coord(y), fmt_coord(z));
    }
    for [a, b, c] in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_icosphere, torus};

    const TET_OFF: &str = "OFF\n# tetrahedron\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn tetrahedron_off() {
        let m: TriangleMesh<f64> = read_off(TET_OFF).unwrap();
        assert_eq!((m.n_vertices(), m.n_edges(), m.n_faces()), (4, 6, 4));
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.genus(), 0);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn counts_on_header_line_and_colours_tolerated() {
        let text = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2 255 0 0\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";
        let m: TriangleMesh<f64> = read_off(text).unwrap();
        assert_eq!(m.n_faces(), 4);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let cube = "OFF\n8 6 12\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
                    4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 1 2 6 5\n4 2 3 7 6\n4 3 0 4 7\n";
        let m: TriangleMesh<f64> = read_off(cube).unwrap();
        assert_eq!(m.n_faces(), 12);
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn obj_with_slashes_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1/1 3/1 2/1\nf 1 2 4\nf -4 -1 -2\nf 2 3 4\n";
        let m: TriangleMesh<f64> = read_obj(text).unwrap();
        assert_eq!(m.n_faces(), 4);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(read_off::<f64>("PLY\n"), Err(MeshError::Parse { .. })));
        assert!(matches!(read_off::<f64>("OFF\n4 4 6\n0 0 x\n"), Err(MeshError::Parse { .. })));
        assert!(matches!(read_obj::<f64>("v 0 0 0\nf 0 1 2\n"), Err(MeshError::Parse { .. })));
    }

    #[test]
    fn open_mesh_rejected_at_load() {
        let text = "OFF\n4 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n";
        assert!(matches!(read_off::<f64>(text), Err(MeshError::OpenBoundary { .. })));
    }

    #[test]
    fn off_round_trip_is_bit_exact() {
        let m = make_icosphere::<f64>(2, 0.7, Vec3::new(0.1, -0.2, 0.3)).unwrap();
        let back: TriangleMesh<f64> = read_off(&write_off(&m)).unwrap();
        assert_eq!(back.faces(), m.faces());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            assert_eq!(a.to_f64().map(f64::to_bits), b.to_f64().map(f64::to_bits));
        }
        let t = torus::<f64>(1.0, 0.3, 16, 8).unwrap();
        let back: TriangleMesh<f64> = read_obj(&write_obj(&t)).unwrap();
        assert_eq!(back.faces(), t.faces());
        assert_eq!(back.vertices(), t.vertices());
    }

    #[test]
    fn load_and_save_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tet.off");
        std::fs::write(&path, TET_OFF).unwrap();
        let m: TriangleMesh<f64> = load_mesh(&path, None).unwrap();
        let out = dir.path().join("tet.obj");
        save_mesh(&m, &out).unwrap();
        let again: TriangleMesh<f64> = load_mesh(&out, Some(MeshFormat::Obj)).unwrap();
        assert_eq!(again.faces(), m.faces());
        assert!(matches!(
            load_mesh::<f64>(&dir.path().join("missing.off"), None),
            Err(MeshError::Io { .. })
        ));
        assert!(matches!(MeshFormat::from_path(Path::new("x.stl")), Err(MeshError::UnknownFormat(_))));
    }
}
