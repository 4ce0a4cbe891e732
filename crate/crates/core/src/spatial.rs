//! Spatial meshes, P1 finite element matrices and load assembly.
//!
//! Supported domains are intervals (segment meshes) and polygons (triangle
//! meshes). Dirichlet conditions are enforced by elimination: the assembled
//! mass and stiffness matrices act on the free nodes only, and load
//! functionals are restricted accordingly. Coefficients and data are sampled
//! with the one-point centroid rule, which keeps every sampled quantity an
//! elementwise constant; the matrices stay symmetric positive definite as
//! long as the diffusion coefficient samples positive.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Factorization, SparseMatrix};

/// Scalar field on the domain; evaluation may fail with a message.
pub type SpatialFn<'a> = &'a (dyn Fn([f64; 2]) -> std::result::Result<f64, String> + Sync);

/// Cells of a mesh, fixing its dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Cells {
    /// 1d elements as node index pairs, oriented left to right.
    Segments(Vec<[usize; 2]>),
    /// 2d elements as node index triples, oriented counterclockwise.
    Triangles(Vec<[usize; 3]>),
}

/// Boundary facets: single nodes in 1d, edges in 2d.
#[derive(Debug, Clone, PartialEq)]
pub enum Facets {
    Nodes(Vec<usize>),
    Edges(Vec<[usize; 2]>),
}

impl Facets {
    fn len(&self) -> usize {
        match self {
            Facets::Nodes(v) => v.len(),
            Facets::Edges(v) => v.len(),
        }
    }
}

/// Conforming spatial mesh with a disjoint Dirichlet/Neumann split of its
/// boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    coords: Vec<[f64; 2]>,
    cells: Cells,
    dirichlet: Facets,
    neumann: Facets,
}

impl SpatialMesh {
    /// Interval mesh from explicit data. Segments are reoriented left to
    /// right; boundary nodes must be split between the two condition sets.
    pub fn new_1d(
        coords: Vec<f64>,
        mut segments: Vec<[usize; 2]>,
        dirichlet: Vec<usize>,
        neumann: Vec<usize>,
    ) -> Result<Self> {
        let n = coords.len();
        for seg in &mut segments {
            for &i in seg.iter() {
                if i >= n {
                    return Err(Error::InvalidMesh(format!(
                        "segment references node {i} of {n}"
                    )));
                }
            }
            if coords[seg[0]] > coords[seg[1]] {
                seg.swap(0, 1);
            }
            if coords[seg[0]] == coords[seg[1]] {
                return Err(Error::InvalidMesh(format!(
                    "segment ({}, {}) has zero length",
                    seg[0], seg[1]
                )));
            }
        }
        // Boundary nodes occur in exactly one segment.
        let mut degree = vec![0usize; n];
        for seg in &segments {
            degree[seg[0]] += 1;
            degree[seg[1]] += 1;
        }
        if degree.iter().any(|&d| d > 2) {
            return Err(Error::InvalidMesh(
                "a node is shared by more than two segments".into(),
            ));
        }
        let boundary: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        check_facet_split(&boundary, &dirichlet, &neumann, |&i| format!("node {i}"))?;
        Ok(SpatialMesh {
            coords: coords.into_iter().map(|x| [x, 0.0]).collect(),
            cells: Cells::Segments(segments),
            dirichlet: Facets::Nodes(dirichlet),
            neumann: Facets::Nodes(neumann),
        })
    }

    /// Triangle mesh from explicit data. Triangles are reoriented
    /// counterclockwise; boundary edges must be split between the two
    /// condition sets (edges compare as unordered pairs).
    pub fn new_2d(
        coords: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        dirichlet: Vec<[usize; 2]>,
        neumann: Vec<[usize; 2]>,
    ) -> Result<Self> {
        let n = coords.len();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &mut triangles {
            for &i in tri.iter() {
                if i >= n {
                    return Err(Error::InvalidMesh(format!(
                        "triangle references node {i} of {n}"
                    )));
                }
            }
            let area = signed_area(&coords, *tri);
            if area == 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle ({}, {}, {}) is degenerate",
                    tri[0], tri[1], tri[2]
                )));
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
            for e in 0..3 {
                let key = edge_key(tri[e], tri[(e + 1) % 3]);
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        if edge_count.values().any(|&c| c > 2) {
            return Err(Error::InvalidMesh(
                "an edge is shared by more than two triangles".into(),
            ));
        }
        let boundary: Vec<(usize, usize)> = {
            let mut b: Vec<_> = edge_count
                .iter()
                .filter(|&(_, &c)| c == 1)
                .map(|(&k, _)| k)
                .collect();
            b.sort_unstable();
            b
        };
        let dirichlet: Vec<[usize; 2]> = normalize_edges(dirichlet);
        let neumann: Vec<[usize; 2]> = normalize_edges(neumann);
        let dir_keys: Vec<(usize, usize)> = dirichlet.iter().map(|e| (e[0], e[1])).collect();
        let neu_keys: Vec<(usize, usize)> = neumann.iter().map(|e| (e[0], e[1])).collect();
        check_facet_split(&boundary, &dir_keys, &neu_keys, |&(a, b)| {
            format!("edge ({a}, {b})")
        })?;
        Ok(SpatialMesh {
            coords,
            cells: Cells::Triangles(triangles),
            dirichlet: Facets::Edges(dirichlet),
            neumann: Facets::Edges(neumann),
        })
    }

    /// Uniform mesh of `[0, 1]` with `n` segments and Dirichlet ends.
    pub fn unit_interval(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "interval mesh needs at least one element".into(),
            ));
        }
        let coords: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let segments: Vec<[usize; 2]> = (0..n).map(|i| [i, i + 1]).collect();
        SpatialMesh::new_1d(coords, segments, vec![0, n], vec![])
    }

    /// L-shaped domain `(-1,1)^2` without the closed upper right quadrant,
    /// triangulated from three unit squares and refined `nrefine` times;
    /// the whole boundary is Dirichlet.
    pub fn lshape(nrefine: usize) -> Result<Self> {
        let coords = vec![
            [-1.0, -1.0],
            [0.0, -1.0],
            [1.0, -1.0],
            [-1.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [-1.0, 1.0],
            [0.0, 1.0],
        ];
        let triangles = vec![
            [0, 1, 4],
            [0, 4, 3],
            [1, 2, 5],
            [1, 5, 4],
            [3, 4, 7],
            [3, 7, 6],
        ];
        let dirichlet = vec![
            [0, 1],
            [1, 2],
            [2, 5],
            [4, 5],
            [4, 7],
            [7, 6],
            [6, 3],
            [3, 0],
        ];
        let mut mesh = SpatialMesh::new_2d(coords, triangles, dirichlet, vec![])?;
        for _ in 0..nrefine {
            mesh = mesh.refine_regular();
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        match self.cells {
            Cells::Segments(_) => 1,
            Cells::Triangles(_) => 2,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_cells(&self) -> usize {
        match &self.cells {
            Cells::Segments(v) => v.len(),
            Cells::Triangles(v) => v.len(),
        }
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn cells(&self) -> &Cells {
        &self.cells
    }

    pub fn dirichlet(&self) -> &Facets {
        &self.dirichlet
    }

    pub fn neumann(&self) -> &Facets {
        &self.neumann
    }

    /// Total measure (length resp. area) of the domain.
    pub fn measure(&self) -> f64 {
        match &self.cells {
            Cells::Segments(segs) => segs
                .iter()
                .map(|s| self.coords[s[1]][0] - self.coords[s[0]][0])
                .sum(),
            Cells::Triangles(tris) => tris
                .iter()
                .map(|&t| 0.5 * signed_area(&self.coords, t))
                .sum(),
        }
    }

    /// Marks nodes pinned by a Dirichlet facet.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.coords.len()];
        match &self.dirichlet {
            Facets::Nodes(nodes) => {
                for &i in nodes {
                    mask[i] = true;
                }
            }
            Facets::Edges(edges) => {
                for e in edges {
                    mask[e[0]] = true;
                    mask[e[1]] = true;
                }
            }
        }
        mask
    }

    /// Uniform (red) refinement. Each segment splits at the midpoint, each
    /// triangle into four via its edge midpoints; boundary facets split with
    /// the cells and keep their condition type.
    pub fn refine_regular(&self) -> SpatialMesh {
        match &self.cells {
            Cells::Segments(segs) => {
                let mut coords = self.coords.clone();
                let mut fine = Vec::with_capacity(2 * segs.len());
                for s in segs {
                    let mid = coords.len();
                    coords.push([0.5 * (self.coords[s[0]][0] + self.coords[s[1]][0]), 0.0]);
                    fine.push([s[0], mid]);
                    fine.push([mid, s[1]]);
                }
                SpatialMesh {
                    coords,
                    cells: Cells::Segments(fine),
                    dirichlet: self.dirichlet.clone(),
                    neumann: self.neumann.clone(),
                }
            }
            Cells::Triangles(tris) => {
                let mut coords = self.coords.clone();
                let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
                let mut midpoint_of = |a: usize, b: usize, coords: &mut Vec<[f64; 2]>| {
                    *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                        let pa = coords[a];
                        let pb = coords[b];
                        coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                        coords.len() - 1
                    })
                };
                let mut fine = Vec::with_capacity(4 * tris.len());
                for t in tris {
                    let mab = midpoint_of(t[0], t[1], &mut coords);
                    let mbc = midpoint_of(t[1], t[2], &mut coords);
                    let mca = midpoint_of(t[2], t[0], &mut coords);
                    fine.push([t[0], mab, mca]);
                    fine.push([t[1], mbc, mab]);
                    fine.push([t[2], mca, mbc]);
                    fine.push([mab, mbc, mca]);
                }
                let split_edges = |edges: &[[usize; 2]],
                                   midpoint: &HashMap<(usize, usize), usize>|
                 -> Vec<[usize; 2]> {
                    edges
                        .iter()
                        .flat_map(|e| {
                            let m = midpoint[&edge_key(e[0], e[1])];
                            [[e[0], m], [m, e[1]]]
                        })
                        .collect()
                };
                let dirichlet = match &self.dirichlet {
                    Facets::Edges(e) => Facets::Edges(normalize_edges(split_edges(e, &midpoint))),
                    other => other.clone(),
                };
                let neumann = match &self.neumann {
                    Facets::Edges(e) => Facets::Edges(normalize_edges(split_edges(e, &midpoint))),
                    other => other.clone(),
                };
                SpatialMesh {
                    coords,
                    cells: Cells::Triangles(fine),
                    dirichlet,
                    neumann,
                }
            }
        }
    }

    /// Reads a mesh from the directory files `coordinates`, `elements`,
    /// `dirichlet` and optionally `neumann` (1-based node ids, whitespace
    /// separated columns).
    pub fn load(dir: &Path) -> Result<Self> {
        let coord_rows = read_rows(&dir.join("coordinates"))?;
        let elem_rows = read_rows(&dir.join("elements"))?;
        let dir_rows = read_rows(&dir.join("dirichlet"))?;
        let neu_path = dir.join("neumann");
        let neu_rows = if neu_path.exists() {
            read_rows(&neu_path)?
        } else {
            Vec::new()
        };

        let ncols = coord_rows
            .first()
            .map(|r| r.1.len())
            .ok_or_else(|| Error::InvalidMesh("coordinates file is empty".into()))?;
        let dim = match ncols {
            2 => 1,
            3 => 2,
            _ => {
                return Err(Error::InvalidMesh(format!(
                    "coordinates rows must have 2 or 3 columns, got {ncols}"
                )))
            }
        };

        // Node ids may be arbitrary; remember their order of appearance.
        let mut id_to_index: HashMap<i64, usize> = HashMap::new();
        let mut coords: Vec<[f64; 2]> = Vec::with_capacity(coord_rows.len());
        for (line, row) in &coord_rows {
            if row.len() != ncols {
                return Err(Error::InvalidMesh(format!(
                    "coordinates line {line}: expected {ncols} columns"
                )));
            }
            let id = parse_id(&row[0], "coordinates", *line)?;
            if id_to_index.insert(id, coords.len()).is_some() {
                return Err(Error::InvalidMesh(format!(
                    "coordinates line {line}: duplicate node id {id}"
                )));
            }
            let x = parse_float(&row[1], "coordinates", *line)?;
            let y = if dim == 2 {
                parse_float(&row[2], "coordinates", *line)?
            } else {
                0.0
            };
            coords.push([x, y]);
        }
        let resolve = |token: &str, file: &str, line: usize| -> Result<usize> {
            let id = parse_id(token, file, line)?;
            id_to_index.get(&id).copied().ok_or_else(|| {
                Error::InvalidMesh(format!("{file} line {line}: unknown node id {id}"))
            })
        };

        let want = dim + 2;
        let mut cells: Vec<Vec<usize>> = Vec::with_capacity(elem_rows.len());
        for (line, row) in &elem_rows {
            if row.len() != want {
                return Err(Error::InvalidMesh(format!(
                    "elements line {line}: expected {want} columns"
                )));
            }
            let nodes: Vec<usize> = row[1..]
                .iter()
                .map(|t| resolve(t, "elements", *line))
                .collect::<Result<_>>()?;
            cells.push(nodes);
        }
        let parse_facets = |rows: &[(usize, Vec<String>)], file: &str| -> Result<Vec<Vec<usize>>> {
            let want = dim + 1;
            rows.iter()
                .map(|(line, row)| {
                    if row.len() != want {
                        return Err(Error::InvalidMesh(format!(
                            "{file} line {line}: expected {want} columns"
                        )));
                    }
                    row[1..].iter().map(|t| resolve(t, file, *line)).collect()
                })
                .collect()
        };
        let dirichlet = parse_facets(&dir_rows, "dirichlet")?;
        let neumann = parse_facets(&neu_rows, "neumann")?;

        if dim == 1 {
            SpatialMesh::new_1d(
                coords.iter().map(|c| c[0]).collect(),
                cells.iter().map(|c| [c[0], c[1]]).collect(),
                dirichlet.iter().map(|f| f[0]).collect(),
                neumann.iter().map(|f| f[0]).collect(),
            )
        } else {
            SpatialMesh::new_2d(
                coords,
                cells.iter().map(|c| [c[0], c[1], c[2]]).collect(),
                dirichlet.iter().map(|f| [f[0], f[1]]).collect(),
                neumann.iter().map(|f| [f[0], f[1]]).collect(),
            )
        }
    }

    /// Writes the mesh in the same four-file format `load` reads.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let dim = self.dim();
        let mut text = String::new();
        for (i, c) in self.coords.iter().enumerate() {
            if dim == 1 {
                writeln!(text, "{} {}", i + 1, c[0]).unwrap();
            } else {
                writeln!(text, "{} {} {}", i + 1, c[0], c[1]).unwrap();
            }
        }
        std::fs::write(dir.join("coordinates"), text)?;

        let mut text = String::new();
        match &self.cells {
            Cells::Segments(segs) => {
                for (i, s) in segs.iter().enumerate() {
                    writeln!(text, "{} {} {}", i + 1, s[0] + 1, s[1] + 1).unwrap();
                }
            }
            Cells::Triangles(tris) => {
                for (i, t) in tris.iter().enumerate() {
                    writeln!(text, "{} {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
                }
            }
        }
        std::fs::write(dir.join("elements"), text)?;

        let write_facets = |facets: &Facets| -> String {
            let mut text = String::new();
            match facets {
                Facets::Nodes(nodes) => {
                    for (i, n) in nodes.iter().enumerate() {
                        writeln!(text, "{} {}", i + 1, n + 1).unwrap();
                    }
                }
                Facets::Edges(edges) => {
                    for (i, e) in edges.iter().enumerate() {
                        writeln!(text, "{} {} {}", i + 1, e[0] + 1, e[1] + 1).unwrap();
                    }
                }
            }
            text
        };
        std::fs::write(dir.join("dirichlet"), write_facets(&self.dirichlet))?;
        if self.neumann.len() > 0 {
            std::fs::write(dir.join("neumann"), write_facets(&self.neumann))?;
        }
        Ok(())
    }
}

fn signed_area(coords: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [a, b, c] = t;
    (coords[b][0] - coords[a][0]) * (coords[c][1] - coords[a][1])
        - (coords[c][0] - coords[a][0]) * (coords[b][1] - coords[a][1])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn normalize_edges(edges: Vec<[usize; 2]>) -> Vec<[usize; 2]> {
    edges
        .into_iter()
        .map(|e| [e[0].min(e[1]), e[0].max(e[1])])
        .collect()
}

/// Checks that `dirichlet` and `neumann` partition `boundary` (given sorted)
/// with a nonempty Dirichlet part.
fn check_facet_split<T: Ord + Copy>(
    boundary: &[T],
    dirichlet: &[T],
    neumann: &[T],
    describe: impl Fn(&T) -> String,
) -> Result<()> {
    let mut claimed: Vec<(T, bool)> = dirichlet
        .iter()
        .map(|&f| (f, true))
        .chain(neumann.iter().map(|&f| (f, false)))
        .collect();
    claimed.sort_by_key(|&(f, _)| f);
    for w in claimed.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::InvalidMesh(format!(
                "boundary facet {} is listed twice",
                describe(&w[0].0)
            )));
        }
    }
    let mut sorted_boundary = boundary.to_vec();
    sorted_boundary.sort_unstable();
    for (f, _) in &claimed {
        if sorted_boundary.binary_search(f).is_err() {
            return Err(Error::InvalidMesh(format!(
                "{} is not a boundary facet",
                describe(f)
            )));
        }
    }
    if claimed.len() != sorted_boundary.len() {
        return Err(Error::InvalidMesh(format!(
            "boundary has {} facets but {} carry a condition",
            sorted_boundary.len(),
            claimed.len()
        )));
    }
    if dirichlet.is_empty() {
        return Err(Error::InvalidMesh(
            "at least one Dirichlet facet is required".into(),
        ));
    }
    Ok(())
}

fn read_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let content = std::fs::read_to_string(path)?;
    Ok(content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split_whitespace().map(str::to_owned).collect()))
        .collect())
}

fn parse_id(token: &str, file: &str, line: usize) -> Result<i64> {
    token.parse::<i64>().map_err(|_| {
        Error::InvalidMesh(format!("{file} line {line}: bad integer {token:?}"))
    })
}

fn parse_float(token: &str, file: &str, line: usize) -> Result<f64> {
    token.parse::<f64>().map_err(|_| {
        Error::InvalidMesh(format!("{file} line {line}: bad number {token:?}"))
    })
}

/// Free-node mass and stiffness matrices of a mesh.
#[derive(Debug)]
pub struct SpatialOperators {
    /// Mass matrix on the free nodes.
    pub mass: SparseMatrix<f64>,
    /// Diffusion stiffness matrix on the free nodes.
    pub stiffness: SparseMatrix<f64>,
    /// Mesh node index of each free unknown, ascending.
    pub free_nodes: Vec<usize>,
    /// Inverse map; `None` marks Dirichlet nodes.
    pub node_to_free: Vec<Option<usize>>,
}

impl SpatialOperators {
    /// Assembles mass and stiffness with Dirichlet elimination.
    ///
    /// The diffusion coefficient is sampled once per element at the
    /// centroid; nonpositive samples are rejected.
    pub fn assemble(mesh: &SpatialMesh, diffusion: SpatialFn) -> Result<Self> {
        let mask = mesh.dirichlet_mask();
        let node_to_free = {
            let mut map = vec![None; mesh.num_nodes()];
            let mut next = 0;
            for (i, m) in map.iter_mut().enumerate() {
                if !mask[i] {
                    *m = Some(next);
                    next += 1;
                }
            }
            map
        };
        let free_nodes: Vec<usize> = (0..mesh.num_nodes()).filter(|&i| !mask[i]).collect();
        if free_nodes.is_empty() {
            return Err(Error::InvalidMesh(
                "no free nodes: every node carries a Dirichlet condition".into(),
            ));
        }
        let nf = free_nodes.len();
        let mut mass_triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut stiff_triplets: Vec<(usize, usize, f64)> = Vec::new();
        let scatter = |local_nodes: &[usize],
                           local_mass: &[f64],
                           local_stiff: &[f64],
                           mass_triplets: &mut Vec<(usize, usize, f64)>,
                           stiff_triplets: &mut Vec<(usize, usize, f64)>| {
            let k = local_nodes.len();
            for (a, &na) in local_nodes.iter().enumerate() {
                let Some(ia) = node_to_free[na] else { continue };
                for (b, &nb) in local_nodes.iter().enumerate() {
                    let Some(ib) = node_to_free[nb] else { continue };
                    mass_triplets.push((ia, ib, local_mass[a * k + b]));
                    stiff_triplets.push((ia, ib, local_stiff[a * k + b]));
                }
            }
        };

        match &mesh.cells {
            Cells::Segments(segs) => {
                for (e, s) in segs.iter().enumerate() {
                    let xa = mesh.coords[s[0]][0];
                    let xb = mesh.coords[s[1]][0];
                    let h = xb - xa;
                    let centroid = [0.5 * (xa + xb), 0.0];
                    let a = sample_coefficient(diffusion, centroid, e)?;
                    let m = [h / 3.0, h / 6.0, h / 6.0, h / 3.0];
                    let g = a / h;
                    let k = [g, -g, -g, g];
                    scatter(s, &m, &k, &mut mass_triplets, &mut stiff_triplets);
                }
            }
            Cells::Triangles(tris) => {
                for (e, t) in tris.iter().enumerate() {
                    let (area, centroid, grads) = triangle_geometry(&mesh.coords, *t);
                    let a = sample_coefficient(diffusion, centroid, e)?;
                    let mut m = [0.0; 9];
                    let mut k = [0.0; 9];
                    for i in 0..3 {
                        for j in 0..3 {
                            m[i * 3 + j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                            k[i * 3 + j] =
                                a * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                        }
                    }
                    scatter(t, &m, &k, &mut mass_triplets, &mut stiff_triplets);
                }
            }
        }
        let mass = SparseMatrix::from_triplets(nf, nf, &mass_triplets)?;
        let stiffness = SparseMatrix::from_triplets(nf, nf, &stiff_triplets)?;
        Ok(SpatialOperators {
            mass,
            stiffness,
            free_nodes,
            node_to_free,
        })
    }

    /// Assembles the full (pre-elimination) matrices over all nodes; used by
    /// invariance checks that need the unconstrained operators.
    pub fn assemble_full(
        mesh: &SpatialMesh,
        diffusion: SpatialFn,
    ) -> Result<(SparseMatrix<f64>, SparseMatrix<f64>)> {
        let n = mesh.num_nodes();
        let mut mass_triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut stiff_triplets: Vec<(usize, usize, f64)> = Vec::new();
        match &mesh.cells {
            Cells::Segments(segs) => {
                for (e, s) in segs.iter().enumerate() {
                    let xa = mesh.coords[s[0]][0];
                    let xb = mesh.coords[s[1]][0];
                    let h = xb - xa;
                    let a = sample_coefficient(diffusion, [0.5 * (xa + xb), 0.0], e)?;
                    let idx = [s[0], s[1]];
                    let m = [h / 3.0, h / 6.0, h / 6.0, h / 3.0];
                    let g = a / h;
                    let k = [g, -g, -g, g];
                    for i in 0..2 {
                        for j in 0..2 {
                            mass_triplets.push((idx[i], idx[j], m[i * 2 + j]));
                            stiff_triplets.push((idx[i], idx[j], k[i * 2 + j]));
                        }
                    }
                }
            }
            Cells::Triangles(tris) => {
                for (e, t) in tris.iter().enumerate() {
                    let (area, centroid, grads) = triangle_geometry(&mesh.coords, *t);
                    let a = sample_coefficient(diffusion, centroid, e)?;
                    for i in 0..3 {
                        for j in 0..3 {
                            mass_triplets.push((
                                t[i],
                                t[j],
                                area / 12.0 * if i == j { 2.0 } else { 1.0 },
                            ));
                            stiff_triplets.push((
                                t[i],
                                t[j],
                                a * area
                                    * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]),
                            ));
                        }
                    }
                }
            }
        }
        Ok((
            SparseMatrix::from_triplets(n, n, &mass_triplets)?,
            SparseMatrix::from_triplets(n, n, &stiff_triplets)?,
        ))
    }

    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }

    /// Cholesky factorizations of mass and stiffness, doubling as their
    /// positive definiteness checks.
    pub fn factorize(&self) -> Result<(Factorization<f64>, Factorization<f64>)> {
        Ok((
            Factorization::cholesky(&self.mass)?,
            Factorization::cholesky(&self.stiffness)?,
        ))
    }
}

fn sample_coefficient(diffusion: SpatialFn, centroid: [f64; 2], element: usize) -> Result<f64> {
    let value = diffusion(centroid).map_err(|message| Error::Evaluation {
        location: format!(
            "diffusion coefficient on element {element} at ({}, {})",
            centroid[0], centroid[1]
        ),
        message,
    })?;
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::NonpositiveCoefficient { element, value });
    }
    Ok(value)
}

/// Doubled area is positive for counterclockwise triangles; returns
/// (area, centroid, barycentric gradients).
fn triangle_geometry(coords: &[[f64; 2]], t: [usize; 3]) -> (f64, [f64; 2], [[f64; 2]; 3]) {
    let [a, b, c] = t;
    let (pa, pb, pc) = (coords[a], coords[b], coords[c]);
    let double_area = signed_area(coords, t);
    let area = 0.5 * double_area;
    let centroid = [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0];
    let grads = [
        [(pb[1] - pc[1]) / double_area, (pc[0] - pb[0]) / double_area],
        [(pc[1] - pa[1]) / double_area, (pa[0] - pc[0]) / double_area],
        [(pa[1] - pb[1]) / double_area, (pb[0] - pa[0]) / double_area],
    ];
    (area, centroid, grads)
}

/// Load vector over the free nodes for volume data `f` and Neumann data `g`,
/// both sampled with the one-point centroid (midpoint) rule.
pub fn assemble_load(
    mesh: &SpatialMesh,
    ops: &SpatialOperators,
    f: SpatialFn,
    g: SpatialFn,
) -> Result<Vec<f64>> {
    let mut b = vec![0.0; ops.num_free()];
    match &mesh.cells {
        Cells::Segments(segs) => {
            for (e, s) in segs.iter().enumerate() {
                let xa = mesh.coords[s[0]][0];
                let xb = mesh.coords[s[1]][0];
                let centroid = [0.5 * (xa + xb), 0.0];
                let fc = eval_data(f, centroid, || format!("element {e}"))?;
                let w = 0.5 * (xb - xa) * fc;
                for &n in s {
                    if let Some(i) = ops.node_to_free[n] {
                        b[i] += w;
                    }
                }
            }
        }
        Cells::Triangles(tris) => {
            for (e, t) in tris.iter().enumerate() {
                let (area, centroid, _) = triangle_geometry(&mesh.coords, *t);
                let fc = eval_data(f, centroid, || format!("element {e}"))?;
                let w = area * fc / 3.0;
                for &n in t {
                    if let Some(i) = ops.node_to_free[n] {
                        b[i] += w;
                    }
                }
            }
        }
    }
    match &mesh.neumann {
        Facets::Nodes(nodes) => {
            for &n in nodes {
                let p = mesh.coords[n];
                let gv = eval_data(g, p, || format!("Neumann node {n}"))?;
                if let Some(i) = ops.node_to_free[n] {
                    b[i] += gv;
                }
            }
        }
        Facets::Edges(edges) => {
            for (k, e) in edges.iter().enumerate() {
                let pa = mesh.coords[e[0]];
                let pb = mesh.coords[e[1]];
                let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                let gv = eval_data(g, mid, || format!("Neumann edge {k}"))?;
                let w = 0.5 * len * gv;
                for &n in e {
                    if let Some(i) = ops.node_to_free[n] {
                        b[i] += w;
                    }
                }
            }
        }
    }
    Ok(b)
}

fn eval_data(
    f: SpatialFn,
    point: [f64; 2],
    location: impl Fn() -> String,
) -> Result<f64> {
    let v = f(point).map_err(|message| Error::Evaluation {
        location: format!("{} at ({}, {})", location(), point[0], point[1]),
        message,
    })?;
    if !v.is_finite() {
        return Err(Error::Evaluation {
            location: format!("{} at ({}, {})", location(), point[0], point[1]),
            message: format!("non-finite sample {v}"),
        });
    }
    Ok(v)
}

/// Writes nodal values as `id value` lines with zeros on Dirichlet nodes.
pub fn export_snapshot(
    mesh: &SpatialMesh,
    ops: &SpatialOperators,
    free_values: &[f64],
    path: &Path,
) -> Result<()> {
    if free_values.len() != ops.num_free() {
        return Err(Error::shape(
            "snapshot",
            (ops.num_free(), 1),
            (free_values.len(), 1),
        ));
    }
    let mut text = String::new();
    for node in 0..mesh.num_nodes() {
        let v = match ops.node_to_free[node] {
            Some(i) => free_values[i],
            None => 0.0,
        };
        writeln!(text, "{} {}", node + 1, v).unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}
