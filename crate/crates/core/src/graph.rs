//! Undirected simple graphs with indexed complement edges.
//!
//! The solver works on the product of the simplex over vertices and a capped
//! box over *complement* edges, so the graph keeps, next to the usual
//! adjacency, an ordered list of the non-edges together with a reverse index.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("vertex {v} out of range [0:{n})")]
    VertexOutOfRange { v: usize, n: usize },
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: vertex index {v} out of [1:{n}]")]
    VertexOutOfRange { line: usize, v: i64, n: usize },
    #[error("line {line}: self-loop e {v} {v} rejected")]
    SelfLoop { line: usize, v: usize },
    #[error("missing problem line `p edge <n> <m>`")]
    MissingProblemLine,
    #[error("line {line}: second problem line")]
    DuplicateProblemLine { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Undirected simple graph over vertices `0..n`.
///
/// `comp_edges` lists the non-edges `{i, j}`, `i < j`, in lexicographic
/// order; this ordering defines the coordinate indexing of the solver's
/// `y` variables and is identical across runs and platforms.
#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    /// Row-major symmetric adjacency bitset, `n` rows of `words_per_row` u64s.
    bits: Vec<u64>,
    words_per_row: usize,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    comp_edges: Vec<(usize, usize)>,
    comp_index: HashMap<(usize, usize), usize>,
    /// Per-vertex list of (other endpoint, comp edge index), sorted by endpoint.
    comp_neighbors: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate and reversed pairs collapse.
    pub fn from_edge_list(n: usize, list: &[(usize, usize)]) -> Result<Self, GraphError> {
        let words_per_row = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words_per_row];
        for &(a, b) in list {
            if a >= n {
                return Err(GraphError::VertexOutOfRange { v: a, n });
            }
            if b >= n {
                return Err(GraphError::VertexOutOfRange { v: b, n });
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            bits[a * words_per_row + b / 64] |= 1 << (b % 64);
            bits[b * words_per_row + a / 64] |= 1 << (a % 64);
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut edges = Vec::new();
        let mut comp_edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && bits[i * words_per_row + j / 64] >> (j % 64) & 1 == 1 {
                    neighbors[i].push(j);
                    if i < j {
                        edges.push((i, j));
                    }
                } else if i < j && i != j {
                    comp_edges.push((i, j));
                }
            }
        }
        let mut comp_index = HashMap::with_capacity(comp_edges.len());
        let mut comp_neighbors = vec![Vec::new(); n];
        for (k, &(i, j)) in comp_edges.iter().enumerate() {
            comp_index.insert((i, j), k);
            comp_neighbors[i].push((j, k));
            comp_neighbors[j].push((i, k));
        }
        Ok(Graph {
            n,
            bits,
            words_per_row,
            neighbors,
            edges,
            comp_edges,
            comp_index,
            comp_neighbors,
        })
    }

    /// Parses the DIMACS ASCII clique format (`c` comments, one `p edge n m`
    /// problem line, `e i j` edge lines with 1-based endpoints). Tolerates
    /// `\r\n`, extra whitespace, duplicate and reversed edge lines; `p col`
    /// is accepted as an alias seen in the wild.
    pub fn parse_dimacs<R: BufRead>(reader: R) -> Result<Self, ParseError> {
        let mut n: Option<usize> = None;
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("p") => {
                    if n.is_some() {
                        return Err(ParseError::DuplicateProblemLine { line: lineno });
                    }
                    let fmt = tok.next().ok_or_else(|| ParseError::Malformed {
                        line: lineno,
                        msg: "problem line missing format token".into(),
                    })?;
                    if fmt != "edge" && fmt != "col" {
                        return Err(ParseError::Malformed {
                            line: lineno,
                            msg: format!("unknown problem format `{fmt}`"),
                        });
                    }
                    let nv: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| ParseError::Malformed {
                            line: lineno,
                            msg: "problem line: bad vertex count".into(),
                        })?;
                    // The edge count on the p line is advisory; files disagree with it.
                    n = Some(nv);
                }
                Some("e") => {
                    let nv = n.ok_or(ParseError::MissingProblemLine)?;
                    let mut endpoint = |t: Option<&str>| -> Result<usize, ParseError> {
                        let raw: i64 = t
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| ParseError::Malformed {
                                line: lineno,
                                msg: "edge line: bad vertex token".into(),
                            })?;
                        if raw < 1 || raw as usize > nv {
                            return Err(ParseError::VertexOutOfRange {
                                line: lineno,
                                v: raw,
                                n: nv,
                            });
                        }
                        Ok(raw as usize - 1)
                    };
                    let a = endpoint(tok.next())?;
                    let b = endpoint(tok.next())?;
                    if a == b {
                        return Err(ParseError::SelfLoop { line: lineno, v: a + 1 });
                    }
                    list.push((a, b));
                }
                Some(other) => {
                    return Err(ParseError::Malformed {
                        line: lineno,
                        msg: format!("unknown line type `{other}`"),
                    })
                }
                None => unreachable!(),
            }
        }
        let n = n.ok_or(ParseError::MissingProblemLine)?;
        Graph::from_edge_list(n, &list).map_err(|e| ParseError::Malformed {
            line: 0,
            msg: e.to_string(),
        })
    }

    /// Canonical DIMACS writer: sorted `e i j` lines, 1-based, i < j.
    pub fn write_dimacs<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "p edge {} {}", self.n, self.edges.len())?;
        for &(i, j) in &self.edges {
            writeln!(w, "e {} {}", i + 1, j + 1)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn comp_edge_count(&self) -> usize {
        self.comp_edges.len()
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.n && j < self.n);
        self.bits[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Non-edges `{i,j}`, `i < j`, lexicographic; the index set of `y`.
    pub fn comp_edges(&self) -> &[(usize, usize)] {
        &self.comp_edges
    }

    /// Position of the non-edge `{i,j}` in `comp_edges`, in either orientation.
    pub fn comp_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.comp_index.get(&key).copied()
    }

    /// (other endpoint, comp edge index) pairs incident to `v`.
    pub fn comp_neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.comp_neighbors[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Number of pairs inside `c` that are not edges of the graph.
    /// `c` is an s-defective clique iff this is at most s.
    pub fn missing_edge_count(&self, c: &[usize]) -> usize {
        let mut missing = 0;
        for (a, &i) in c.iter().enumerate() {
            for &j in &c[a + 1..] {
                if !self.has_edge(i, j) {
                    missing += 1;
                }
            }
        }
        missing
    }

    /// Uniform G(n, p) random graph; the one generator the test suites need.
    pub fn gnp<R: Rng>(n: usize, p: f64, rng: &mut R) -> Self {
        let mut list = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    list.push((i, j));
                }
            }
        }
        Graph::from_edge_list(n, &list).expect("gnp edges are in range by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> Graph {
        Graph::parse_dimacs("p edge 3 2\ne 1 2\ne 2 3\n".as_bytes()).unwrap()
    }

    #[test]
    fn parse_path_graph() {
        let g = path3();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.comp_edges(), &[(0, 2)]);
        assert_eq!(g.comp_index(2, 0), Some(0));
    }

    #[test]
    fn parse_complete_graph_has_empty_complement() {
        let g = Graph::parse_dimacs("p edge 3 3\ne 1 2\ne 2 3\ne 1 3\n".as_bytes()).unwrap();
        assert_eq!(g.comp_edge_count(), 0);
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let g =
            Graph::parse_dimacs("c dup\np edge 3 4\ne 1 2\ne 2 1\ne 1 2\ne 2 3\n".as_bytes())
                .unwrap();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn crlf_and_whitespace_tolerated() {
        let g = Graph::parse_dimacs("c x\r\np  edge  3  1\r\n e  1   3 \r\n".as_bytes()).unwrap();
        assert!(g.has_edge(0, 2));
    }

    #[test]
    fn rejects_self_loop_and_bad_vertices() {
        assert!(matches!(
            Graph::parse_dimacs("p edge 3 1\ne 2 2\n".as_bytes()),
            Err(ParseError::SelfLoop { line: 2, .. })
        ));
        assert!(matches!(
            Graph::parse_dimacs("p edge 3 1\ne 1 4\n".as_bytes()),
            Err(ParseError::VertexOutOfRange { line: 2, v: 4, .. })
        ));
        assert!(matches!(
            Graph::parse_dimacs("e 1 2\n".as_bytes()),
            Err(ParseError::MissingProblemLine)
        ));
    }

    #[test]
    fn parse_error_names_line() {
        let err = Graph::parse_dimacs("p edge 3 1\ne 1 x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn max_degree_examples() {
        assert_eq!(path3().max_degree(), 2);
        let k5: Vec<_> = (0..5).flat_map(|i| ((i + 1)..5).map(move |j| (i, j))).collect();
        assert_eq!(Graph::from_edge_list(5, &k5).unwrap().max_degree(), 4);
        assert_eq!(Graph::from_edge_list(4, &[]).unwrap().max_degree(), 0);
    }

    #[test]
    fn missing_edge_count_examples() {
        // K4 minus one edge, C = everything
        let mut k4m: Vec<_> = (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))).collect();
        k4m.retain(|&e| e != (0, 1));
        let g = Graph::from_edge_list(4, &k4m).unwrap();
        assert_eq!(g.missing_edge_count(&[0, 1, 2, 3]), 1);
        assert_eq!(g.missing_edge_count(&[2]), 0);
        assert_eq!(g.missing_edge_count(&[]), 0);
    }

    #[test]
    fn missing_edge_count_matches_pair_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Graph::gnp(10, 0.5, &mut rng);
        let c = [0, 2, 3, 5, 8, 9];
        let mut brute = 0;
        for a in 0..c.len() {
            for b in (a + 1)..c.len() {
                if !g.has_edge(c[a], c[b]) {
                    brute += 1;
                }
            }
        }
        assert_eq!(g.missing_edge_count(&c), brute);
        // whole vertex set: every complement edge is missing
        let all: Vec<_> = (0..10).collect();
        assert_eq!(g.missing_edge_count(&all), g.comp_edge_count());
    }

    #[test]
    fn edge_and_complement_partition_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &p in &[0.0, 0.3, 1.0] {
            let g = Graph::gnp(9, p, &mut rng);
            assert_eq!(g.edge_count() + g.comp_edge_count(), 9 * 8 / 2);
        }
    }

    #[test]
    fn dimacs_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Graph::gnp(12, 0.4, &mut rng);
        let mut buf = Vec::new();
        g.write_dimacs(&mut buf).unwrap();
        let h = Graph::parse_dimacs(&buf[..]).unwrap();
        assert_eq!(g.n(), h.n());
        assert_eq!(g.edges(), h.edges());
        assert_eq!(g.comp_edges(), h.comp_edges());
    }
}
