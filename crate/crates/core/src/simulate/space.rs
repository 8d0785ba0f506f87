use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use petgraph::algo::{connected_components, dijkstra};
use petgraph::graph::{NodeIndex, UnGraph};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::GroundMetric;

/// Largest geodesic extent targeted by the surrogate geometries, in mm.
pub const TARGET_EXTENT_MM: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// `rows × cols` lattice with 4-neighbour edges.
    Grid { rows: usize, cols: usize },
    /// Subdivided icosahedron with `10·4^k + 2` vertices.
    Icosphere { subdivisions: u32 },
}

impl SpaceKind {
    pub fn n_vertices(&self) -> usize {
        match *self {
            SpaceKind::Grid { rows, cols } => rows * cols,
            SpaceKind::Icosphere { subdivisions } => 10 * 4usize.pow(subdivisions) + 2,
        }
    }
}

/// Mesh surrogate for a cortical source space.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpace {
    pub positions: Vec<[f64; 3]>,
    /// Undirected edges `(i, j, length)` with `i < j`.
    pub edges: Vec<(usize, usize, f64)>,
    /// Disjoint vertex sets.
    pub labels: Vec<Vec<usize>>,
}

impl SourceSpace {
    /// Validates the invariants and returns the space.
    pub fn new(positions: Vec<[f64; 3]>, edges: Vec<(usize, usize, f64)>, labels: Vec<Vec<usize>>) -> Result<Self> {
        let p = positions.len();
        if p == 0 {
            return Err(Error::EmptySupport("source space has no vertices".into()));
        }
        for &(i, j, len) in &edges {
            if i >= p || j >= p || i == j {
                return Err(Error::Shape(format!("edge ({i}, {j}) is invalid for {p} vertices")));
            }
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidParameter(format!("edge ({i}, {j}) has length {len}")));
            }
        }
        let mut owner = vec![None; p];
        for (l, label) in labels.iter().enumerate() {
            for &v in label {
                if v >= p {
                    return Err(Error::Shape(format!("label {l} names vertex {v} beyond {p}")));
                }
                if let Some(other) = owner[v].replace(l) {
                    return Err(Error::InvalidParameter(format!("vertex {v} is in labels {other} and {l}")));
                }
            }
        }
        let space = Self { positions, edges, labels };
        let reached = space.largest_component();
        if reached != p {
            return Err(Error::Disconnected { reached, total: p });
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn graph(&self) -> UnGraph<(), f64> {
        let mut g = UnGraph::with_capacity(self.len(), self.edges.len());
        for _ in 0..self.len() {
            g.add_node(());
        }
        for &(i, j, len) in &self.edges {
            g.add_edge(NodeIndex::new(i), NodeIndex::new(j), len);
        }
        g
    }

    /// Vertex count of the component holding vertex 0.
    fn largest_component(&self) -> usize {
        if connected_components(&self.graph()) == 1 {
            self.len()
        } else {
            let g = self.graph();
            dijkstra(&g, NodeIndex::new(0), None, |e| *e.weight()).len()
        }
    }

    /// Neighbour lists derived from the edges.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for &(i, j, _) in &self.edges {
            out[i].push(j);
            out[j].push(i);
        }
        out
    }

    /// Label index of each vertex, `None` when unlabelled.
    pub fn label_of(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.len()];
        for (l, label) in self.labels.iter().enumerate() {
            for &v in label {
                out[v] = Some(l);
            }
        }
        out
    }
}

/// Builds a grid or icosphere surrogate scaled so that geodesic distances
/// span roughly [`TARGET_EXTENT_MM`], partitioned into `n_labels` contiguous
/// patches by seeded region growing.
pub fn build_source_space<R: Rng>(kind: SpaceKind, n_labels: usize, rng: &mut R) -> Result<SourceSpace> {
    let p = kind.n_vertices();
    if !(50..=5000).contains(&p) {
        return Err(Error::InvalidParameter(format!("source space must have 50..=5000 vertices, got {p}")));
    }
    if n_labels == 0 || n_labels > p {
        return Err(Error::InvalidParameter(format!("label count must lie in 1..={p}, got {n_labels}")));
    }
    let (positions, edges) = match kind {
        SpaceKind::Grid { rows, cols } => grid(rows, cols),
        SpaceKind::Icosphere { subdivisions } => icosphere(subdivisions),
    };
    let unlabelled = SourceSpace::new(positions, edges, Vec::new())?;
    let labels = grow_labels(&unlabelled.neighbors(), n_labels, rng);
    SourceSpace::new(unlabelled.positions, unlabelled.edges, labels)
}

fn grid(rows: usize, cols: usize) -> (Vec<[f64; 3]>, Vec<(usize, usize, f64)>) {
    let h = TARGET_EXTENT_MM / (rows + cols - 2).max(1) as f64;
    let index = |r: usize, c: usize| r * cols + c;
    let mut positions = Vec::with_capacity(rows * cols);
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            positions.push([c as f64 * h, r as f64 * h, 0.0]);
            if c + 1 < cols {
                edges.push((index(r, c), index(r, c + 1), h));
            }
            if r + 1 < rows {
                edges.push((index(r, c), index(r + 1, c), h));
            }
        }
    }
    (positions, edges)
}

fn icosphere(subdivisions: u32) -> (Vec<[f64; 3]>, Vec<(usize, usize, f64)>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    verts.iter_mut().for_each(|v| *v = normalize(*v));
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (va, vb) = (verts[a], verts[b]);
                verts.push(normalize([(va[0] + vb[0]) / 2.0, (va[1] + vb[1]) / 2.0, (va[2] + vb[2]) / 2.0]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let radius = TARGET_EXTENT_MM / std::f64::consts::PI;
    let positions: Vec<[f64; 3]> = verts.iter().map(|v| [v[0] * radius, v[1] * radius, v[2] * radius]).collect();
    let mut seen = std::collections::BTreeSet::new();
    for [a, b, c] in faces {
        for (i, j) in [(a, b), (b, c), (c, a)] {
            seen.insert((i.min(j), i.max(j)));
        }
    }
    let edges = seen
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (positions[i], positions[j]);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            (i, j, d)
        })
        .collect();
    (positions, edges)
}

/// Simultaneous region growing from random seeds; each round every label
/// absorbs one random unassigned neighbour. Covers every vertex of a
/// connected graph.
fn grow_labels<R: Rng>(neighbors: &[Vec<usize>], n_labels: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let p = neighbors.len();
    let seeds = rand::seq::index::sample(rng, p, n_labels).into_vec();
    let mut owner: Vec<Option<usize>> = vec![None; p];
    let mut labels: Vec<Vec<usize>> = seeds.iter().map(|&s| vec![s]).collect();
    for (l, &s) in seeds.iter().enumerate() {
        owner[s] = Some(l);
    }
    let mut assigned = n_labels;
    while assigned < p {
        let mut grew = false;
        for l in 0..n_labels {
            let frontier: Vec<usize> = labels[l]
                .iter()
                .flat_map(|&v| neighbors[v].iter().copied())
                .filter(|&w| owner[w].is_none())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            if let Some(&w) = frontier.choose(rng) {
                owner[w] = Some(l);
                labels[l].push(w);
                assigned += 1;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    for label in &mut labels {
        label.sort_unstable();
    }
    labels
}

/// All-pairs shortest-path distances along the mesh edges.
pub fn geodesic_metric(space: &SourceSpace) -> Result<GroundMetric> {
    let p = space.len();
    let g = space.graph();
    let mut costs = DMatrix::zeros(p, p);
    for i in 0..p {
        let dist = dijkstra(&g, NodeIndex::new(i), None, |e| *e.weight());
        if dist.len() != p {
            return Err(Error::Disconnected { reached: dist.len(), total: p });
        }
        for (node, d) in dist {
            costs[(i, node.index())] = d;
        }
    }
    // Dijkstra sums edges in different orders from each end; symmetrize.
    let sym = (&costs + costs.transpose()) * 0.5;
    GroundMetric::new(sym)
}

/// Writes the text format:
///
/// ```text
/// vertices <p>
/// <x> <y> <z>            (p lines)
/// edges <e>
/// <i> <j> <length>       (e lines)
/// labels <l>
/// <v1> <v2> ...          (l lines)
/// ```
pub fn write_source_space<W: Write>(mut out: W, space: &SourceSpace) -> Result<()> {
    writeln!(out, "vertices {}", space.len())?;
    for [x, y, z] in &space.positions {
        writeln!(out, "{x} {y} {z}")?;
    }
    writeln!(out, "edges {}", space.edges.len())?;
    for (i, j, len) in &space.edges {
        writeln!(out, "{i} {j} {len}")?;
    }
    writeln!(out, "labels {}", space.labels.len())?;
    for label in &space.labels {
        let items: Vec<String> = label.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", items.join(" "))?;
    }
    Ok(())
}

pub fn read_source_space<R: Read>(input: R, origin: &str) -> Result<SourceSpace> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(Error::parse(origin, 0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let section = |name: &str, next: &mut dyn FnMut(&str) -> Result<(usize, String)>| -> Result<usize> {
        let (no, line) = next(name)?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next().map(str::parse::<usize>), parts.next()) {
            (Some(tag), Some(Ok(count)), None) if tag == name => Ok(count),
            _ => Err(Error::parse(origin, no, format!("expected `{name} <count>`"))),
        }
    };
    fn numbers<T: std::str::FromStr>(line: &str, origin: &str, no: usize) -> Result<Vec<T>> {
        line.split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| Error::parse(origin, no, format!("invalid number `{t}`"))))
            .collect()
    }

    let p = section("vertices", &mut next)?;
    let mut positions = Vec::with_capacity(p);
    for _ in 0..p {
        let (no, line) = next("a vertex")?;
        let v: Vec<f64> = numbers(&line, origin, no)?;
        if v.len() != 3 {
            return Err(Error::parse(origin, no, "vertex needs 3 coordinates"));
        }
        positions.push([v[0], v[1], v[2]]);
    }
    let e = section("edges", &mut next)?;
    let mut edges = Vec::with_capacity(e);
    for _ in 0..e {
        let (no, line) = next("an edge")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::parse(origin, no, "edge needs `i j length`"));
        }
        let idx: Vec<usize> = numbers(&parts[..2].join(" "), origin, no)?;
        let len: Vec<f64> = numbers(parts[2], origin, no)?;
        edges.push((idx[0], idx[1], len[0]));
    }
    let l = section("labels", &mut next)?;
    let mut labels = Vec::with_capacity(l);
    for _ in 0..l {
        let (no, line) = next("a label")?;
        labels.push(numbers(&line, origin, no)?);
    }
    SourceSpace::new(positions, edges, labels)
}
