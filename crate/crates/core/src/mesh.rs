//! Conforming 2D triangulations with tagged boundary edges.
//!
//! Meshes come either from the structured unit-square generator or from
//! Gmsh ASCII files (format 2.2). A [`Mesh`] is validated on construction
//! and immutable afterwards.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Physical tag attached to boundary edges.
pub type Tag = i32;

/// A tagged boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    tags: BTreeMap<Tag, String>,
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn distance(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

impl Mesh {
    /// Builds a mesh and checks its structural invariants.
    ///
    /// Triangles must be counterclockwise with positive area, no edge may be
    /// shared by more than two triangles, and every boundary edge must be an
    /// edge of exactly one triangle and appear only once.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        tags: BTreeMap<Tag, String>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::MeshStructure(format!(
                    "triangle {t} references vertex {v}, but only {nv} vertices exist"
                )));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area.is_nan() || area <= 0.0 {
                return Err(Error::MeshStructure(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            for k in 0..3 {
                *edge_count
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default() += 1;
            }
        }
        if let Some((e, _)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::MeshStructure(format!(
                "edge {e:?} is shared by more than two triangles"
            )));
        }
        let mut seen = HashMap::new();
        for be in &boundary_edges {
            let [a, b] = be.vertices;
            if a >= nv || b >= nv {
                return Err(Error::MeshStructure(format!(
                    "boundary edge ({a}, {b}) references a missing vertex"
                )));
            }
            let key = edge_key(a, b);
            if edge_count.get(&key).copied() != Some(1) {
                return Err(Error::MeshStructure(format!(
                    "boundary edge ({a}, {b}) does not belong to exactly one triangle"
                )));
            }
            if let Some(prev) = seen.insert(key, be.tag) {
                return Err(Error::MeshStructure(format!(
                    "boundary edge ({a}, {b}) tagged twice ({prev} and {})",
                    be.tag
                )));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            tags,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn tags(&self) -> &BTreeMap<Tag, String> {
        &self.tags
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// Total area of the triangulation.
    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Largest distance between any two vertices; used as a Poincaré-Friedrichs
    /// constant surrogate.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, &a) in self.vertices.iter().enumerate() {
            for &b in &self.vertices[i + 1..] {
                best = best.max(distance(a, b));
            }
        }
        best
    }

    /// Returns a copy with the triangle list permuted; mainly useful for
    /// checking that assembly does not depend on element order.
    pub fn with_triangle_order(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.triangles.len() {
            return Err(Error::Dimension(format!(
                "permutation has {} entries for {} triangles",
                order.len(),
                self.triangles.len()
            )));
        }
        let triangles = order.iter().map(|&i| self.triangles[i]).collect();
        Self::new(
            self.vertices.clone(),
            triangles,
            self.boundary_edges.clone(),
            self.tags.clone(),
        )
    }
}

/// Structured triangulation of the unit square with `g` cells per side.
///
/// Every cell is split along its lower-left to upper-right diagonal. All
/// boundary edges carry tag `1`.
pub fn generate_unit_square(g: usize) -> Result<Mesh> {
    if g == 0 {
        return Err(Error::InvalidArgument(
            "unit square needs at least one cell per side".into(),
        ));
    }
    let n = g + 1;
    let idx = |i: usize, j: usize| i + j * n;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push([i as f64 / g as f64, j as f64 / g as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * g * g);
    for j in 0..g {
        for i in 0..g {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * g);
    let mut push = |a, b| boundary_edges.push(BoundaryEdge { vertices: [a, b], tag: 1 });
    for i in 0..g {
        push(idx(i, 0), idx(i + 1, 0));
        push(idx(g, i), idx(g, i + 1));
        push(idx(i + 1, g), idx(i, g));
        push(idx(0, i + 1), idx(0, i));
    }
    let tags = BTreeMap::from([(1, "boundary".to_string())]);
    Mesh::new(vertices, triangles, boundary_edges, tags)
}

/// Longest edge over all triangles.
pub fn mesh_size(mesh: &Mesh) -> Result<f64> {
    if mesh.n_triangles() == 0 {
        return Err(Error::InvalidArgument("mesh has no triangles".into()));
    }
    let mut h = 0.0f64;
    for t in 0..mesh.n_triangles() {
        let p = mesh.triangle_points(t);
        for k in 0..3 {
            h = h.max(distance(p[k], p[(k + 1) % 3]));
        }
    }
    Ok(h)
}

/// Result of importing a Gmsh file.
#[derive(Debug, Clone)]
pub struct MshImport {
    pub mesh: Mesh,
    /// Elements whose type is neither a 2-node line nor a 3-node triangle.
    pub skipped_elements: usize,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                return Some((i + 1, l));
            }
        }
        None
    }

    fn expect(&mut self, what: &str, last: usize) -> Result<(usize, &'a str)> {
        self.next_line().ok_or_else(|| Error::MeshParse {
            line: last,
            message: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::MeshParse {
        line,
        message: format!("expected {what}"),
    })
}

/// Reads a Gmsh ASCII 2.2 mesh.
///
/// Triangles (type 2) become mesh triangles and lines (type 1) become
/// boundary edges tagged with their physical tag; other element types are
/// counted and skipped. Node ids are remapped densely and nodes not used by
/// any triangle are dropped. Clockwise triangles are reoriented.
pub fn read_msh(text: &str) -> Result<MshImport> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let mut format_seen = false;
    let mut nodes: Vec<(usize, Point)> = Vec::new();
    let mut raw_triangles: Vec<(usize, [usize; 3])> = Vec::new();
    let mut raw_lines: Vec<(usize, [usize; 2], Tag)> = Vec::new();
    let mut tags = BTreeMap::new();
    let mut skipped = 0usize;
    let mut elements_seen = false;
    let mut nodes_seen = false;
    let mut last = 0;

    while let Some((ln, header)) = lines.next_line() {
        if !header.starts_with('$') {
            return Err(Error::MeshParse {
                line: ln,
                message: format!("expected a section header, found `{header}`"),
            });
        }
        let name = &header[1..];
        match name {
            "MeshFormat" => {
                let (l, v) = lines.expect("format line", ln)?;
                let mut it = v.split_whitespace();
                let version = it.next().unwrap_or("");
                let file_type = it.next().unwrap_or("");
                if version != "2.2" || file_type != "0" {
                    return Err(Error::MeshParse {
                        line: l,
                        message: format!("unsupported mesh format `{v}`, expected `2.2 0 8`"),
                    });
                }
                format_seen = true;
            }
            "PhysicalNames" => {
                let (l, c) = lines.expect("physical name count", ln)?;
                let count: usize = parse_num(Some(c), l, "physical name count")?;
                for _ in 0..count {
                    let (l, row) = lines.expect("physical name", ln)?;
                    let mut it = row.splitn(3, char::is_whitespace);
                    let _dim: i32 = parse_num(it.next(), l, "dimension")?;
                    let tag: Tag = parse_num(it.next(), l, "physical tag")?;
                    let label = it.next().unwrap_or("").trim().trim_matches('"');
                    tags.insert(tag, label.to_string());
                }
            }
            "Nodes" => {
                let (l, c) = lines.expect("node count", ln)?;
                let count: usize = parse_num(Some(c), l, "node count")?;
                nodes.reserve(count);
                for _ in 0..count {
                    let (l, row) = lines.expect("node record", ln)?;
                    let mut it = row.split_whitespace();
                    let id: usize = parse_num(it.next(), l, "node id")?;
                    let x: f64 = parse_num(it.next(), l, "x coordinate")?;
                    let y: f64 = parse_num(it.next(), l, "y coordinate")?;
                    nodes.push((id, [x, y]));
                }
                nodes_seen = true;
            }
            "Elements" => {
                let (l, c) = lines.expect("element count", ln)?;
                let count: usize = parse_num(Some(c), l, "element count")?;
                for _ in 0..count {
                    let (l, row) = lines.expect("element record", ln)?;
                    let fields: Vec<&str> = row.split_whitespace().collect();
                    let mut it = fields.iter().copied();
                    let _id: usize = parse_num(it.next(), l, "element id")?;
                    let ty: u32 = parse_num(it.next(), l, "element type")?;
                    let ntags: usize = parse_num(it.next(), l, "tag count")?;
                    let tag_vals: Vec<Tag> = (0..ntags)
                        .map(|_| parse_num(it.next(), l, "element tag"))
                        .collect::<Result<_>>()?;
                    let conn: Vec<usize> = it
                        .map(|t| parse_num(Some(t), l, "node id"))
                        .collect::<Result<_>>()?;
                    match ty {
                        1 => {
                            if conn.len() != 2 {
                                return Err(Error::MeshParse {
                                    line: l,
                                    message: "line element needs 2 nodes".into(),
                                });
                            }
                            let tag = tag_vals.first().copied().unwrap_or(0);
                            raw_lines.push((l, [conn[0], conn[1]], tag));
                        }
                        2 => {
                            if conn.len() != 3 {
                                return Err(Error::MeshParse {
                                    line: l,
                                    message: "triangle element needs 3 nodes".into(),
                                });
                            }
                            raw_triangles.push((l, [conn[0], conn[1], conn[2]]));
                        }
                        _ => skipped += 1,
                    }
                }
                elements_seen = true;
            }
            _ => {}
        }
        let end = format!("$End{name}");
        loop {
            let (l, row) = lines.expect(&end, ln)?;
            last = l;
            if row == end {
                break;
            }
            if row.starts_with('$') {
                return Err(Error::MeshParse {
                    line: l,
                    message: format!("found `{row}` before `{end}`"),
                });
            }
        }
    }
    if !format_seen || !nodes_seen || !elements_seen {
        return Err(Error::MeshParse {
            line: last,
            message: "missing $MeshFormat, $Nodes or $Elements section".into(),
        });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} mesh elements of unsupported type");
    }

    let node_pos: HashMap<usize, usize> =
        nodes.iter().enumerate().map(|(i, &(id, _))| (id, i)).collect();
    let lookup = |id: usize, line: usize| {
        node_pos.get(&id).copied().ok_or_else(|| {
            Error::MeshStructure(format!("element at line {line} references missing node {id}"))
        })
    };

    // Dense renumbering over nodes used by triangles, in file order.
    let mut used = vec![false; nodes.len()];
    let mut tri_local = Vec::with_capacity(raw_triangles.len());
    for &(l, conn) in &raw_triangles {
        let mut t = [0; 3];
        for k in 0..3 {
            t[k] = lookup(conn[k], l)?;
            used[t[k]] = true;
        }
        tri_local.push(t);
    }
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut vertices = Vec::new();
    for (i, &(_, p)) in nodes.iter().enumerate() {
        if used[i] {
            remap[i] = vertices.len();
            vertices.push(p);
        }
    }
    let triangles = tri_local
        .into_iter()
        .map(|t| {
            let mut t = t.map(|v| remap[v]);
            if signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
            t
        })
        .collect();
    let mut boundary_edges = Vec::with_capacity(raw_lines.len());
    for &(l, conn, tag) in &raw_lines {
        let a = remap[lookup(conn[0], l)?];
        let b = remap[lookup(conn[1], l)?];
        if a == usize::MAX || b == usize::MAX {
            return Err(Error::MeshStructure(format!(
                "line element at line {l} uses a node not attached to any triangle"
            )));
        }
        boundary_edges.push(BoundaryEdge {
            vertices: [a, b],
            tag,
        });
    }
    let mesh = Mesh::new(vertices, triangles, boundary_edges, tags)?;
    Ok(MshImport {
        mesh,
        skipped_elements: skipped,
    })
}

/// Serializes a mesh as Gmsh ASCII 2.2. Coordinates use shortest
/// round-trip formatting so [`read_msh`] reproduces them exactly.
pub fn write_msh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    if !mesh.tags.is_empty() {
        let _ = writeln!(s, "$PhysicalNames\n{}", mesh.tags.len());
        for (tag, name) in &mesh.tags {
            let _ = writeln!(s, "1 {tag} \"{name}\"");
        }
        s.push_str("$EndPhysicalNames\n");
    }
    let _ = writeln!(s, "$Nodes\n{}", mesh.vertices.len());
    for (i, p) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(s, "{} {} {} 0", i + 1, p[0], p[1]);
    }
    s.push_str("$EndNodes\n");
    let n_el = mesh.boundary_edges.len() + mesh.triangles.len();
    let _ = writeln!(s, "$Elements\n{n_el}");
    let mut id = 1;
    for be in &mesh.boundary_edges {
        let _ = writeln!(
            s,
            "{id} 1 2 {} {} {} {}",
            be.tag,
            be.tag,
            be.vertices[0] + 1,
            be.vertices[1] + 1
        );
        id += 1;
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "{id} 2 2 0 0 {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}
