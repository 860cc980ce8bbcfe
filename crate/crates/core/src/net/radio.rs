use std::collections::{HashMap, VecDeque};

use crate::{Position, SimTime};

/// Unit-disc radio with a fixed bit rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioModel {
    pub range: f64,
    pub bandwidth_bps: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel { range: 100.0, bandwidth_bps: 1_000_000.0 }
    }
}

impl RadioModel {
    pub fn in_range(&self, a: Position, b: Position) -> bool {
        a.distance(&b) <= self.range
    }

    /// Time to push `size_bytes` over one hop.
    pub fn hop_latency(&self, size_bytes: usize) -> SimTime {
        SimTime::from_secs_f64(size_bytes as f64 * 8.0 / self.bandwidth_bps)
    }
}

/// Connectivity snapshot: who can hear whom at one instant.
#[derive(Debug, Clone)]
pub struct Topology {
    positions: Vec<Position>,
    neighbours: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds the unit-disc graph with a spatial hash of cell size `range`.
    /// Nodes with `active[i] == false` (phones off) have no links.
    pub fn build(positions: &[Position], active: &[bool], range: f64) -> Self {
        let cell = |p: &Position| ((p.x / range).floor() as i64, (p.y / range).floor() as i64);
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            if active[i] {
                grid.entry(cell(p)).or_default().push(i);
            }
        }
        let mut neighbours = vec![Vec::new(); positions.len()];
        for (i, p) in positions.iter().enumerate() {
            if !active[i] {
                continue;
            }
            let (cx, cy) = cell(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = grid.get(&(cx + dx, cy + dy)) {
                        for &j in list {
                            if j != i && p.distance(&positions[j]) <= range {
                                neighbours[i].push(j);
                            }
                        }
                    }
                }
            }
            neighbours[i].sort_unstable();
        }
        Topology { positions: positions.to_vec(), neighbours }
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    pub fn position(&self, i: usize) -> Position {
        self.positions[i]
    }

    pub fn linked(&self, a: usize, b: usize) -> bool {
        self.neighbours[a].binary_search(&b).is_ok()
    }

    /// Fewest-hop path from `from` to `to` (inclusive), preferring lower
    /// node indices on ties. `None` if disconnected.
    pub fn route(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut prev = vec![usize::MAX; self.positions.len()];
        prev[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for &n in &self.neighbours[v] {
                if prev[n] == usize::MAX {
                    prev[n] = v;
                    if n == to {
                        let mut path = vec![to];
                        let mut cur = to;
                        while cur != from {
                            cur = prev[cur];
                            path.push(cur);
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Longest single hop along `path`, metres.
    pub fn max_span(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|w| self.positions[w[0]].distance(&self.positions[w[1]])).fold(0.0, f64::max)
    }
}

/// Store-carry-forward buffer with oldest-first eviction.
#[derive(Debug, Clone)]
pub struct StoreBuffer<T> {
    capacity_bytes: usize,
    used: usize,
    items: VecDeque<(T, usize)>,
}

impl<T> StoreBuffer<T> {
    pub fn new(capacity_bytes: usize) -> Self {
        StoreBuffer { capacity_bytes, used: 0, items: VecDeque::new() }
    }

    /// Stores `item`; returns whatever had to be evicted to make room
    /// (possibly the item itself if it can never fit).
    pub fn push(&mut self, item: T, size: usize) -> Vec<T> {
        if size > self.capacity_bytes {
            return vec![item];
        }
        let mut dropped = Vec::new();
        while self.used + size > self.capacity_bytes {
            let (old, s) = self.items.pop_front().expect("used > 0 implies items");
            self.used -= s;
            dropped.push(old);
        }
        self.used += size;
        self.items.push_back((item, size));
        dropped
    }

    pub fn used_bytes(&self) -> usize {
        self.used
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Removes and returns every item for which `take` is true, in order.
    pub fn drain_where(&mut self, mut take: impl FnMut(&T) -> bool) -> Vec<T> {
        let mut out = Vec::new();
        let mut keep = VecDeque::with_capacity(self.items.len());
        for (item, s) in self.items.drain(..) {
            if take(&item) {
                self.used -= s;
                out.push(item);
            } else {
                keep.push_back((item, s));
            }
        }
        self.items = keep;
        out
    }
}
