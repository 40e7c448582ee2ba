//! Undirected simple graphs and the network statistics the models are built on.
//!
//! Vertices are 0-based everywhere in the library. Text formats use 1-based
//! ids, and the conversion happens in the parsers and writers of this module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A structural statistic of a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    Edges,
    TwoStars,
    Triangles,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 3] = [Self::Edges, Self::TwoStars, Self::Triangles];

    pub fn name(self) -> &'static str {
        match self {
            Self::Edges => "edges",
            Self::TwoStars => "twostars",
            Self::Triangles => "triangles",
        }
    }

    /// Parses a comma separated list such as `edges,triangles`.
    pub fn parse_list(text: &str) -> Result<Vec<StatisticKind>> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let kind: StatisticKind = part.parse()?;
            if out.contains(&kind) {
                return Err(Error::domain(format!("statistic `{part}` listed twice")));
            }
            out.push(kind);
        }
        Ok(out)
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edges" => Ok(Self::Edges),
            "twostars" | "two-stars" | "2stars" | "2-stars" | "kstar2" => Ok(Self::TwoStars),
            "triangles" | "triangle" => Ok(Self::Triangles),
            other => Err(Error::domain(format!(
                "unknown statistic `{other}` (expected edges, twostars or triangles)"
            ))),
        }
    }
}

/// Statistic values aligned with a list of [`StatisticKind`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatVector(pub Vec<f64>);

impl StatVector {
    pub fn dot(&self, coef: &[f64]) -> f64 {
        debug_assert_eq!(self.0.len(), coef.len());
        self.0.iter().zip(coef).map(|(s, c)| s * c).sum()
    }
}

impl std::ops::Deref for StatVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Number of unordered vertex pairs on `n` vertices.
pub fn dyad_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Undirected simple graph on `n` labeled vertices.
///
/// Adjacency is held as one bit row per vertex. Both bits of a pair are
/// always written together by [`Graph::toggle`], so the relation is
/// symmetric and loop-free by construction. Degrees and the edge count are
/// maintained incrementally.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    degrees: Vec<u32>,
    edges: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.edge_list())
            .finish()
    }
}

impl Graph {
    /// Empty graph on `n ≥ 1` vertices.
    pub fn empty(n: usize) -> Graph {
        assert!(n >= 1, "a graph needs at least one vertex");
        let words = n.div_ceil(64);
        Graph {
            n,
            words,
            rows: vec![0; n * words],
            degrees: vec![0; n],
            edges: 0,
        }
    }

    pub fn complete(n: usize) -> Graph {
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.toggle(i, j);
            }
        }
        g
    }

    /// Builds a graph from 0-based pairs. Duplicates collapse to one edge.
    pub fn from_edges(n: usize, pairs: &[(usize, usize)]) -> Result<Graph> {
        if n == 0 {
            return Err(Error::domain("vertex count must be at least 1"));
        }
        let mut g = Graph::empty(n);
        for &(i, j) in pairs {
            g.check_dyad(i, j)?;
            if !g.has_edge(i, j) {
                g.toggle(i, j);
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn dyad_count(&self) -> usize {
        dyad_count(self.n)
    }

    #[inline]
    fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        (self.rows[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    #[inline]
    pub fn degree(&self, i: usize) -> u32 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    /// Number of vertices adjacent to both `i` and `j`.
    #[inline]
    pub fn common_neighbors(&self, i: usize, j: usize) -> u32 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    /// Edges as 0-based pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edges);
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Flips dyad `{i, j}` in place and returns its new state.
    ///
    /// Callers guarantee `i != j` and both in range; the sampler's inner loop
    /// relies on this being unchecked in release builds.
    #[inline]
    pub fn toggle(&mut self, i: usize, j: usize) -> bool {
        debug_assert!(i != j && i < self.n && j < self.n);
        let wi = i * self.words + j / 64;
        let wj = j * self.words + i / 64;
        self.rows[wi] ^= 1 << (j % 64);
        self.rows[wj] ^= 1 << (i % 64);
        let on = (self.rows[wi] >> (j % 64)) & 1 == 1;
        if on {
            self.degrees[i] += 1;
            self.degrees[j] += 1;
            self.edges += 1;
        } else {
            self.degrees[i] -= 1;
            self.degrees[j] -= 1;
            self.edges -= 1;
        }
        on
    }

    pub(crate) fn check_dyad(&self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::domain(format!("dyad ({i}, {j}) is a self-loop")));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::domain(format!(
                "dyad ({i}, {j}) out of range for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Relabels vertices: vertex `v` of `self` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.n);
        let mut g = Graph::empty(self.n);
        for (i, j) in self.edge_list() {
            g.toggle(perm[i], perm[j]);
        }
        g
    }
}

/// Change in one statistic when dyad `{i, j}` goes from absent to present.
#[inline]
pub(crate) fn change_stat(kind: StatisticKind, g: &Graph, i: usize, j: usize) -> f64 {
    match kind {
        StatisticKind::Edges => 1.0,
        StatisticKind::TwoStars => {
            let own = g.has_edge(i, j) as u32;
            f64::from(g.degree(i) - own + g.degree(j) - own)
        }
        StatisticKind::Triangles => f64::from(g.common_neighbors(i, j)),
    }
}

/// Parses the edge-list text format.
///
/// A header line `n=<count>` must precede the edges. Every other non-blank
/// line that does not start with `#` holds two 1-based vertex ids.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut graph: Option<Graph> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("n=").or_else(|| line.strip_prefix("n =")) {
            if graph.is_some() {
                return Err(Error::parse(line_no, "duplicate `n=` header"));
            }
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad vertex count `{}`", rest.trim())))?;
            if n == 0 {
                return Err(Error::parse(line_no, "vertex count must be at least 1"));
            }
            graph = Some(Graph::empty(n));
            continue;
        }
        let g = graph
            .as_mut()
            .ok_or_else(|| Error::parse(line_no, "edge line before `n=<count>` header"))?;
        let mut fields = line.split_whitespace();
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(Error::parse(line_no, format!("expected two vertex ids, got `{line}`"))),
        };
        let parse_id = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad vertex id `{s}`")))?;
            if id == 0 || id > g.n() {
                return Err(Error::parse(
                    line_no,
                    format!("vertex id {id} out of range 1..={}", g.n()),
                ));
            }
            Ok(id - 1)
        };
        let (i, j) = (parse_id(a)?, parse_id(b)?);
        if i == j {
            return Err(Error::parse(line_no, format!("self-loop on vertex {}", i + 1)));
        }
        if !g.has_edge(i, j) {
            g.toggle(i, j);
        }
    }
    graph.ok_or_else(|| Error::parse(0, "missing `n=<count>` header"))
}

/// Parses an `n × n` comma separated 0/1 adjacency matrix.
pub fn parse_adjacency_csv(text: &str) -> Result<Graph> {
    let rows: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
        .collect();
    let n = rows.len();
    if n == 0 {
        return Err(Error::parse(0, "empty adjacency matrix"));
    }
    let mut cells = vec![false; n * n];
    for (r, (line_no, fields)) in rows.iter().enumerate() {
        if fields.len() != n {
            return Err(Error::parse(
                *line_no,
                format!("expected {n} columns, found {}", fields.len()),
            ));
        }
        for (c, f) in fields.iter().enumerate() {
            cells[r * n + c] = match *f {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(*line_no, format!("cell `{other}` is not 0 or 1"))),
            };
        }
        if cells[r * n + r] {
            return Err(Error::parse(*line_no, "diagonal entry must be 0"));
        }
    }
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if cells[i * n + j] != cells[j * n + i] {
                return Err(Error::parse(
                    rows[i].0,
                    format!("matrix not symmetric at ({}, {})", i + 1, j + 1),
                ));
            }
            if cells[i * n + j] {
                g.toggle(i, j);
            }
        }
    }
    Ok(g)
}

/// Renders `g` in the edge-list format accepted by [`parse_edge_list`].
pub fn write_edge_list(g: &Graph) -> String {
    let mut out = format!("n={}\n", g.n());
    for (i, j) in g.edge_list() {
        out.push_str(&format!("{} {}\n", i + 1, j + 1));
    }
    out
}

pub fn density(g: &Graph) -> Result<f64> {
    if g.n() < 2 {
        return Err(Error::domain("density needs at least 2 vertices"));
    }
    Ok(g.edge_count() as f64 / g.dyad_count() as f64)
}

fn statistic(g: &Graph, kind: StatisticKind) -> f64 {
    match kind {
        StatisticKind::Edges => g.edge_count() as f64,
        StatisticKind::TwoStars => g
            .degrees()
            .iter()
            .map(|&d| f64::from(d) * f64::from(d.saturating_sub(1)) / 2.0)
            .sum(),
        StatisticKind::Triangles => {
            let mut closed = 0u64;
            for (i, j) in g.edge_list() {
                closed += u64::from(g.common_neighbors(i, j));
            }
            (closed / 3) as f64
        }
    }
}

pub fn sufficient_stats(g: &Graph, kinds: &[StatisticKind]) -> StatVector {
    StatVector(kinds.iter().map(|&k| statistic(g, k)).collect())
}

/// Degree of every vertex, the statistic paired with the nodal effects.
pub fn degree_stats(g: &Graph) -> Vec<f64> {
    g.degrees().iter().map(|&d| f64::from(d)).collect()
}

/// `s(g with {i,j} present) − s(g with {i,j} absent)`, from local structure only.
pub fn change_stats(g: &Graph, i: usize, j: usize, kinds: &[StatisticKind]) -> Result<StatVector> {
    g.check_dyad(i, j)?;
    Ok(StatVector(kinds.iter().map(|&k| change_stat(k, g, i, j)).collect()))
}

/// Copy of `g` with dyad `{i, j}` flipped.
pub fn toggle_edge(g: &Graph, i: usize, j: usize) -> Result<Graph> {
    g.check_dyad(i, j)?;
    let mut out = g.clone();
    out.toggle(i, j);
    Ok(out)
}
