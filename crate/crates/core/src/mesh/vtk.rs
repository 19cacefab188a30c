//! Legacy VTK (ASCII, version 3.0) for triangle meshes with scalar fields.
//!
//! Floats are written with 17 significant digits so that reading a file
//! back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

const VTK_TRIANGLE: usize = 5;

/// Points, triangles and named scalar fields of a legacy VTK file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub point_data: Vec<(String, Vec<f64>)>,
    pub cell_data: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn from_mesh(mesh: &Mesh, title: &str) -> Self {
        Self {
            title: title.to_string(),
            points: mesh.nodes.clone(),
            triangles: mesh.triangles.clone(),
            ..Default::default()
        }
    }

    pub fn with_point_scalar(mut self, name: &str, values: Vec<f64>) -> Self {
        self.point_data.push((name.to_string(), values));
        self
    }

    pub fn with_cell_scalar(mut self, name: &str, values: Vec<f64>) -> Self {
        self.cell_data.push((name.to_string(), values));
        self
    }

    pub fn point_scalar(&self, name: &str) -> Option<&[f64]> {
        self.point_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_unstructured_grid(&self) -> String {
        let mut s = String::new();
        let np = self.points.len();
        let nc = self.triangles.len();
        let title = if self.title.is_empty() { "mesh" } else { self.title.lines().next().unwrap_or("mesh") };
        let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {np} double");
        for p in &self.points {
            let _ = writeln!(s, "{:.16e} {:.16e} 0", p[0], p[1]);
        }
        let _ = writeln!(s, "CELLS {nc} {}", 4 * nc);
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {nc}");
        for _ in 0..nc {
            let _ = writeln!(s, "{VTK_TRIANGLE}");
        }
        write_scalars(&mut s, "POINT_DATA", np, &self.point_data);
        write_scalars(&mut s, "CELL_DATA", nc, &self.cell_data);
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_unstructured_grid())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses UNSTRUCTURED_GRID (triangle cells) or POLYDATA (triangle
    /// polygons) files with SCALARS sections.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if !header.starts_with("# vtk DataFile") {
            return Err(Error::Parse("missing VTK header".into()));
        }
        let title = lines.next().unwrap_or_default().to_string();
        let format = lines.next().unwrap_or_default().trim();
        if format != "ASCII" {
            return Err(Error::Parse(format!("unsupported VTK format {format:?}")));
        }
        let mut tok = lines.flat_map(str::split_whitespace).peekable();
        let mut out = VtkData {
            title,
            ..Default::default()
        };
        let mut next = |what: &str| tok.next().ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")));
        fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
        }

        let mut section = String::new();
        let mut section_len = 0usize;
        loop {
            let key = match next("keyword") {
                Ok(k) => k,
                Err(_) => break,
            };
            match key {
                "DATASET" => {
                    let kind = next("dataset type")?;
                    if kind != "UNSTRUCTURED_GRID" && kind != "POLYDATA" {
                        return Err(Error::Parse(format!("unsupported dataset {kind}")));
                    }
                }
                "POINTS" => {
                    let n: usize = num(next("point count")?)?;
                    next("point type")?;
                    for _ in 0..n {
                        let x = num(next("x")?)?;
                        let y = num(next("y")?)?;
                        next("z")?;
                        out.points.push([x, y]);
                    }
                }
                "CELLS" | "POLYGONS" => {
                    let n: usize = num(next("cell count")?)?;
                    next("cell list size")?;
                    for _ in 0..n {
                        let k: usize = num(next("cell size")?)?;
                        if k != 3 {
                            return Err(Error::Parse(format!("only triangles are supported, got {k}-gon")));
                        }
                        out.triangles.push([num(next("index")?)?, num(next("index")?)?, num(next("index")?)?]);
                    }
                }
                "CELL_TYPES" => {
                    let n: usize = num(next("cell type count")?)?;
                    for _ in 0..n {
                        let t: usize = num(next("cell type")?)?;
                        if t != VTK_TRIANGLE {
                            return Err(Error::Parse(format!("unsupported cell type {t}")));
                        }
                    }
                }
                "POINT_DATA" | "CELL_DATA" => {
                    section = key.to_string();
                    section_len = num(next("data count")?)?;
                }
                "SCALARS" => {
                    let name = next("scalar name")?.to_string();
                    next("scalar type")?;
                    let mut t = next("LOOKUP_TABLE")?;
                    if t != "LOOKUP_TABLE" {
                        // optional component count
                        t = next("LOOKUP_TABLE")?;
                    }
                    if t != "LOOKUP_TABLE" {
                        return Err(Error::Parse("expected LOOKUP_TABLE".into()));
                    }
                    next("table name")?;
                    let values = (0..section_len).map(|_| num(next("scalar")?)).collect::<Result<Vec<f64>>>()?;
                    match section.as_str() {
                        "POINT_DATA" => out.point_data.push((name, values)),
                        "CELL_DATA" => out.cell_data.push((name, values)),
                        _ => return Err(Error::Parse("SCALARS outside a data section".into())),
                    }
                }
                other => return Err(Error::Parse(format!("unexpected keyword {other:?}"))),
            }
        }
        Ok(out)
    }
}

fn write_scalars(s: &mut String, section: &str, count: usize, fields: &[(String, Vec<f64>)]) {
    if fields.is_empty() {
        return;
    }
    let _ = writeln!(s, "{section} {count}");
    for (name, values) in fields {
        let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", name.replace(char::is_whitespace, "_"));
        for v in values {
            let _ = writeln!(s, "{v:.16e}");
        }
    }
}
