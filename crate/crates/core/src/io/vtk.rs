//! Legacy ASCII VTK export of P2 velocity and P1 pressure.
//!
//! Cells are written as 6-node quadratic triangles (VTK type 22), whose
//! node order (three vertices, then the midpoints of edges 01, 12, 20)
//! matches the space's local numbering.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::{CoefficientVector, FunctionSpace};
use crate::io::table::format_float;

const QUADRATIC_TRIANGLE: u8 = 22;

pub fn vtk_string(space: &FunctionSpace, u: &CoefficientVector, p: &CoefficientVector) -> Result<String> {
    space.check_velocity(u)?;
    space.check_pressure(p)?;
    let n = space.n_nodes();
    let nv = space.mesh().n_vertices();
    let nc = space.n_cells();
    let (uv, pv) = (u.values(), p.values());
    let mut s = String::with_capacity(64 * n);
    // writing to a String cannot fail
    let _ = writeln!(s, "# vtk DataFile Version 3.0\npenflow field\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for x in space.node_coords() {
        let _ = writeln!(s, "{} {} 0", format_float(x[0]), format_float(x[1]));
    }
    let _ = writeln!(s, "CELLS {nc} {}", 7 * nc);
    for c in 0..nc {
        let k = space.cell_nodes(c);
        let _ = writeln!(s, "6 {} {} {} {} {} {}", k[0], k[1], k[2], k[3], k[4], k[5]);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(s, "{QUADRATIC_TRIANGLE}");
    }
    let _ = writeln!(s, "POINT_DATA {n}\nVECTORS velocity double");
    for i in 0..n {
        let _ = writeln!(s, "{} {} 0", format_float(uv[i]), format_float(uv[i + n]));
    }
    let _ = writeln!(s, "SCALARS pressure double 1\nLOOKUP_TABLE default");
    for i in 0..nv {
        let _ = writeln!(s, "{}", format_float(pv[i]));
    }
    // P1 pressure is linear along each edge
    for e in space.edges() {
        let _ = writeln!(s, "{}", format_float(0.5 * (pv[e[0]] + pv[e[1]])));
    }
    Ok(s)
}

pub fn write_vtk(space: &FunctionSpace, u: &CoefficientVector, p: &CoefficientVector, path: &Path) -> Result<()> {
    let text = vtk_string(space, u, p)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::{interpolate_pressure, interpolate_velocity};
    use crate::mesh::{generate_unit_square, BoundaryEdge, Mesh};

    fn single_triangle() -> FunctionSpace {
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            [[0, 1], [1, 2], [2, 0]]
                .map(|vertices| BoundaryEdge { vertices, tag: 1 })
                .to_vec(),
            Default::default(),
        )
        .unwrap();
        FunctionSpace::new(Arc::new(mesh))
    }

    fn section<'a>(text: &'a str, key: &str, count: usize) -> Vec<&'a str> {
        text.lines().skip_while(|l| !l.starts_with(key)).skip(1).take(count).collect()
    }

    #[test]
    fn single_triangle_file() {
        let s = single_triangle();
        let text = vtk_string(&s, &s.zero_velocity(), &s.zero_pressure()).unwrap();
        assert!(text.contains("POINTS 6 double"));
        assert!(text.contains("CELLS 1 7"));
        assert_eq!(section(&text, "CELL_TYPES", 1), vec!["22"]);
        assert!(section(&text, "VECTORS", 6).iter().all(|l| *l == "0 0 0"));
        assert!(section(&text, "LOOKUP_TABLE", 6).iter().all(|l| *l == "0"));
    }

    #[test]
    fn connectivity_in_range_and_pressure_interpolated() {
        let s = FunctionSpace::new(Arc::new(generate_unit_square(3).unwrap()));
        let u = interpolate_velocity(&s, |x| [x[1], -x[0]]);
        let p = interpolate_pressure(&s, |x| 2.0 * x[0] - x[1]);
        let text = vtk_string(&s, &u, &p).unwrap();
        let n = s.n_nodes();
        for line in text.lines().skip_while(|l| !l.starts_with("CELLS")).skip(1).take(s.n_cells()) {
            let idx: Vec<usize> = line.split_whitespace().map(|v| v.parse().unwrap()).collect();
            assert_eq!(idx[0], 6);
            assert!(idx[1..].iter().all(|&i| i < n));
        }
        let pressures: Vec<f64> = text
            .lines()
            .skip_while(|l| !l.starts_with("LOOKUP_TABLE"))
            .skip(1)
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(pressures.len(), n);
        for (x, p) in s.node_coords().iter().zip(&pressures) {
            assert!((p - (2.0 * x[0] - x[1])).abs() < 1e-14);
        }
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let s = single_triangle();
        assert!(vtk_string(&s, &s.zero_velocity(), &CoefficientVector::pressure(vec![0.0; 2])).is_err());
    }
}
