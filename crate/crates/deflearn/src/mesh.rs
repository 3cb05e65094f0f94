//! Wavefront OBJ export/import and an SVG overlay of projected meshes.

use std::fmt::Write as _;
use std::path::Path;

use deflearn_core::geom::Vec3;
use deflearn_core::regist::SampleAnnotation;

use crate::error::{Error, Result};
use crate::json::write_text;

/// Vertex positions and triangles with 0-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

pub fn obj_string(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(40 * (vertices.len() + faces.len()));
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    write_text(path, &obj_string(vertices, faces))
}

/// Parse `v` and triangular `f` records; other record types are skipped.
pub fn parse_obj(path: &Path, text: &str) -> Result<ObjMesh> {
    let mut mesh = ObjMesh::default();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let at = || format!("line {}", i + 1);
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let xyz: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>().map_err(|e| Error::format(path, at(), format!("vertex coordinate `{f}`: {e}"))))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(Error::format(path, at(), "vertex needs three coordinates"));
                }
                mesh.vertices.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = fields
                    .map(|f| {
                        let head = f.split('/').next().unwrap_or(f);
                        match head.parse::<usize>() {
                            Ok(k) if k >= 1 => Ok(k - 1),
                            _ => Err(Error::format(path, at(), format!("face index `{f}` is not a positive integer"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::format(path, at(), format!("only triangles are supported, found {} indices", idx.len())));
                }
                faces.push((i + 1, [idx[0], idx[1], idx[2]]));
            }
            _ => {}
        }
    }
    for (line, f) in faces {
        if f.iter().any(|&k| k >= mesh.vertices.len()) {
            return Err(Error::format(path, format!("line {line}"), "face references a missing vertex"));
        }
        mesh.faces.push(f);
    }
    Ok(mesh)
}

pub fn read_obj(path: &Path) -> Result<ObjMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(path, &text)
}

/// Projected mesh wireframe over the image frame, with dense points and keypoints.
pub fn svg_overlay(image: [f64; 2], projected: &[[f64; 2]], faces: &[[usize; 3]], ann: Option<&SampleAnnotation>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = image[0],
        h = image[1]
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<g fill="none" stroke="#4a6fa5" stroke-width="0.3">"##);
    for f in faces {
        let p = f.map(|k| projected[k]);
        let _ = writeln!(s, r#"<polygon points="{},{} {},{} {},{}"/>"#, p[0][0], p[0][1], p[1][0], p[1][1], p[2][0], p[2][1]);
    }
    let _ = writeln!(s, "</g>");
    if let Some(ann) = ann {
        let _ = writeln!(s, r##"<g fill="#d1495b">"##);
        for d in &ann.dense {
            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="0.8"/>"#, d.point[0], d.point[1]);
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r##"<g fill="#edae49" stroke="#000000" stroke-width="0.3">"##);
        for k in ann.keypoints.iter().filter(|k| k.visible) {
            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="2"/>"#, k.position[0], k.position[1]);
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_name_the_line() {
        let p = Path::new("m.obj");
        let e = parse_obj(p, "v 0 0 0\nv 1 0 x\n").unwrap_err().to_string();
        assert!(e.starts_with("m.obj: line 2"), "{e}");
        let e = parse_obj(p, "v 0 0 0\nf 1 2 3\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("missing vertex"), "{e}");
        let e = parse_obj(p, "v 0 0 0\nf 1 1 1 1\n").unwrap_err().to_string();
        assert!(e.contains("only triangles"), "{e}");
        assert!(parse_obj(p, "f 0 1 1\n").is_err());
    }

    #[test]
    fn slash_indices_and_comments_are_accepted() {
        let m = parse_obj(Path::new("m.obj"), "# c\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1/1/1 2//1 3\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert_eq!(m.vertices.len(), 3);
    }

    #[test]
    fn point_cloud_has_no_faces() {
        let s = obj_string(&[[0.5, -1.0, 2.0]], &[]);
        assert_eq!(s, "v 0.5 -1 2\n");
        assert!(parse_obj(Path::new("p.obj"), &s).unwrap().faces.is_empty());
    }

    #[test]
    fn svg_has_one_polygon_per_face() {
        let s = svg_overlay([10.0, 10.0], &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0, 1, 2], [2, 1, 0]], None);
        assert_eq!(s.matches("<polygon").count(), 2);
        assert!(s.ends_with("</svg>\n"));
    }
}
