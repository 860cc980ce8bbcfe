use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use super::NetError;
use crate::Position;

pub type VertexId = usize;

/// Undirected road network with edge lengths in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    vertices: Vec<Position>,
    /// Sorted by neighbour id.
    adjacency: Vec<Vec<(VertexId, f64)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    vertex: VertexId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Two path lengths closer than this are treated as equal.
const LENGTH_EPS: f64 = 1e-9;

impl RoadGraph {
    pub fn new(vertices: Vec<Position>, edges: &[(VertexId, VertexId, Option<f64>)]) -> Result<Self, NetError> {
        let n = vertices.len();
        if n == 0 {
            return Err(NetError::Graph("graph has no vertices".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, len) in edges {
            if a >= n || b >= n || a == b {
                return Err(NetError::Graph(format!("bad edge {a}-{b}")));
            }
            let len = len.unwrap_or_else(|| vertices[a].distance(&vertices[b]));
            if !(len > 0.0 && len.is_finite()) {
                return Err(NetError::Graph(format!("edge {a}-{b} has length {len}")));
            }
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
        }
        for adj in &mut adjacency {
            adj.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            adj.dedup_by_key(|e| e.0);
        }
        let g = RoadGraph { vertices, adjacency };
        if !g.is_connected() {
            return Err(NetError::Graph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// `n × n` lattice spanning `[0, side]²`.
    pub fn grid(n: usize, side: f64) -> Result<Self, NetError> {
        if n < 2 {
            return Err(NetError::Graph("grid needs at least 2 vertices per side".into()));
        }
        let step = side / (n - 1) as f64;
        let idx = |r: usize, c: usize| r * n + c;
        let vertices = (0..n * n).map(|i| Position::new((i % n) as f64 * step, (i / n) as f64 * step)).collect();
        let mut edges = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if c + 1 < n {
                    edges.push((idx(r, c), idx(r, c + 1), None));
                }
                if r + 1 < n {
                    edges.push((idx(r, c), idx(r + 1, c), None));
                }
            }
        }
        RoadGraph::new(vertices, &edges)
    }

    /// Parses the text form:
    ///
    /// ```text
    /// # comment
    /// vertex <id> <x> <y>
    /// edge <a> <b> [length]
    /// ```
    ///
    /// Vertex ids must be `0..n` in order.
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| NetError::Graph(format!("line {}: {msg}", lineno + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number {s:?}")));
            let id = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("bad vertex id {s:?}")));
            match (f[0], f.len()) {
                ("vertex", 4) => {
                    if id(f[1])? != vertices.len() {
                        return Err(err("vertex ids must be consecutive from 0"));
                    }
                    vertices.push(Position::new(num(f[2])?, num(f[3])?));
                }
                ("edge", 3) => edges.push((id(f[1])?, id(f[2])?, None)),
                ("edge", 4) => edges.push((id(f[1])?, id(f[2])?, Some(num(f[3])?))),
                _ => return Err(err("expected `vertex id x y` or `edge a b [len]`")),
            }
        }
        RoadGraph::new(vertices, &edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(out, "vertex {i} {} {}", v.x, v.y).unwrap();
        }
        for (a, adj) in self.adjacency.iter().enumerate() {
            for &(b, len) in adj.iter().filter(|(b, _)| *b > a) {
                writeln!(out, "edge {a} {b} {len}").unwrap();
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn position(&self, v: VertexId) -> Position {
        self.vertices[v]
    }

    pub fn neighbours(&self, v: VertexId) -> &[(VertexId, f64)] {
        &self.adjacency[v]
    }

    pub fn edge_length(&self, a: VertexId, b: VertexId) -> Option<f64> {
        self.adjacency.get(a)?.iter().find(|(n, _)| *n == b).map(|(_, l)| *l)
    }

    /// Bounding box `(min, max)` of all vertices.
    pub fn bounds(&self) -> (Position, Position) {
        let mut lo = Position::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Position::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = Position::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Position::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    /// Vertex nearest to `p` (lowest id on ties).
    pub fn nearest_vertex(&self, p: Position) -> VertexId {
        let mut best = 0;
        for (i, v) in self.vertices.iter().enumerate() {
            if v.distance(&p) < self.vertices[best].distance(&p) {
                best = i;
            }
        }
        best
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(n, _) in &self.adjacency[v] {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn distances_to(&self, target: VertexId) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[target] = 0.0;
        heap.push(Entry { dist: 0.0, vertex: target });
        while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(n, len) in &self.adjacency[v] {
                let nd = d + len;
                if nd < dist[n] {
                    dist[n] = nd;
                    heap.push(Entry { dist: nd, vertex: n });
                }
            }
        }
        dist
    }

    /// Shortest path from `from` to `to`, inclusive of both ends. Among
    /// equal-length paths the lexicographically smallest vertex sequence wins.
    pub fn plan_route(&self, from: VertexId, to: VertexId) -> Result<Vec<VertexId>, NetError> {
        if from >= self.len() || to >= self.len() {
            return Err(NetError::Unreachable { from, to });
        }
        let dist = self.distances_to(to);
        if !dist[from].is_finite() {
            return Err(NetError::Unreachable { from, to });
        }
        let mut path = vec![from];
        let mut v = from;
        while v != to {
            // Neighbours are sorted by id, so the first one on a shortest
            // path gives the smallest sequence.
            v = self.adjacency[v]
                .iter()
                .find(|&&(n, len)| (len + dist[n] - dist[v]).abs() <= LENGTH_EPS * dist[v].max(1.0))
                .map(|&(n, _)| n)
                .expect("a shortest-path successor exists");
            path.push(v);
        }
        Ok(path)
    }

    pub fn path_length(&self, path: &[VertexId]) -> f64 {
        path.windows(2).map(|w| self.edge_length(w[0], w[1]).unwrap_or(f64::INFINITY)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 0 -- 1
    /// |  / |
    /// 3 -- 2   with the 1-3 diagonal.
    fn square(diagonal: f64) -> RoadGraph {
        let v = vec![
            Position::new(0.0, 0.0),
            Position::new(10.0, 0.0),
            Position::new(10.0, 10.0),
            Position::new(0.0, 10.0),
        ];
        RoadGraph::new(v, &[(0, 1, None), (1, 2, None), (2, 3, None), (3, 0, None), (1, 3, Some(diagonal))]).unwrap()
    }

    /// Every simple path between two vertices, by brute force.
    fn all_paths(g: &RoadGraph, from: VertexId, to: VertexId) -> Vec<Vec<VertexId>> {
        fn go(g: &RoadGraph, path: &mut Vec<VertexId>, to: VertexId, out: &mut Vec<Vec<VertexId>>) {
            let v = *path.last().unwrap();
            if v == to {
                out.push(path.clone());
                return;
            }
            for &(n, _) in g.neighbours(v) {
                if !path.contains(&n) {
                    path.push(n);
                    go(g, path, to, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(g, &mut vec![from], to, &mut out);
        out
    }

    fn brute_force(g: &RoadGraph, from: VertexId, to: VertexId) -> Vec<VertexId> {
        let mut paths = all_paths(g, from, to);
        paths.sort_by(|a, b| {
            let (la, lb) = (g.path_length(a), g.path_length(b));
            if (la - lb).abs() <= 1e-9 {
                a.cmp(b)
            } else {
                la.total_cmp(&lb)
            }
        });
        paths.swap_remove(0)
    }

    #[test]
    fn trivial_route() {
        let g = square(5.0);
        assert_eq!(g.plan_route(2, 2).unwrap(), vec![2]);
    }

    #[test]
    fn diagonal_taken_iff_shorter() {
        assert_eq!(square(5.0).plan_route(1, 3).unwrap(), vec![1, 3]);
        assert_eq!(square(25.0).plan_route(1, 3).unwrap(), vec![1, 0, 3]);
        // Exactly 20: three equal candidates, lowest sequence wins.
        assert_eq!(square(20.0).plan_route(1, 3).unwrap(), vec![1, 0, 3]);
    }

    #[test]
    fn matches_enumeration_on_grids() {
        let g = RoadGraph::grid(4, 300.0).unwrap();
        for from in 0..g.len() {
            for to in 0..g.len() {
                assert_eq!(g.plan_route(from, to).unwrap(), brute_force(&g, from, to), "{from}->{to}");
            }
        }
    }

    #[test]
    fn grid_shape() {
        let g = RoadGraph::grid(7, 3000.0).unwrap();
        assert_eq!(g.len(), 49);
        assert_eq!(g.bounds(), (Position::new(0.0, 0.0), Position::new(3000.0, 3000.0)));
        assert_eq!(g.neighbours(24).len(), 4);
        assert_eq!(g.position(24), Position::new(1500.0, 1500.0));
        assert_eq!(g.nearest_vertex(Position::new(1400.0, 1600.0)), 24);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let g = square(7.5);
        assert_eq!(RoadGraph::parse(&g.to_text()).unwrap(), g);
        assert!(RoadGraph::parse("vertex 0 0 0\nvertex 1 5 0\n").is_err(), "disconnected");
        assert!(RoadGraph::parse("vertex 1 0 0\n").is_err());
        assert!(RoadGraph::parse("vertex 0 0 0\nvertex 1 5 0\nedge 0 7\n").is_err());
        let parsed = RoadGraph::parse("# tiny\nvertex 0 0 0\nvertex 1 3 4 # five away\nedge 0 1\n").unwrap();
        assert_eq!(parsed.edge_length(0, 1), Some(5.0));
    }
}
