use std::collections::VecDeque;

use crate::Position;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    /// Two samples match when they are at most this far apart (metres).
    pub epsilon: f64,
    /// Fraction of shared samples that must match.
    pub threshold: f64,
    /// Fewer shared samples than this never count as similar.
    pub min_shared: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams { epsilon: 20.0, threshold: 0.9, min_shared: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub shared: usize,
    pub matching: usize,
    pub similar: bool,
}

impl Similarity {
    pub fn ratio(&self) -> f64 {
        if self.shared == 0 {
            0.0
        } else {
            self.matching as f64 / self.shared as f64
        }
    }
}

/// Recent reported positions keyed by sampling slot (e.g. hello tick).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocationHistory {
    samples: VecDeque<(u64, Position)>,
    capacity: usize,
}

impl LocationHistory {
    pub fn new(capacity: usize) -> Self {
        LocationHistory { samples: VecDeque::with_capacity(capacity), capacity: capacity.max(1) }
    }

    pub fn from_samples(capacity: usize, samples: impl IntoIterator<Item = (u64, Position)>) -> Self {
        let mut h = Self::new(capacity);
        for (slot, p) in samples {
            h.record(slot, p);
        }
        h
    }

    /// Records a sample. A repeated slot overwrites; older slots are ignored.
    pub fn record(&mut self, slot: u64, p: Position) {
        match self.samples.back_mut() {
            Some((s, q)) if *s == slot => *q = p,
            Some((s, _)) if *s > slot => {}
            _ => {
                if self.samples.len() == self.capacity {
                    self.samples.pop_front();
                }
                self.samples.push_back((slot, p));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &(u64, Position)> {
        self.samples.iter()
    }
}

/// Compares two histories on the slots they share.
pub fn location_similarity(a: &LocationHistory, b: &LocationHistory, params: &SimilarityParams) -> Similarity {
    let (mut i, mut j) = (0, 0);
    let (mut shared, mut matching) = (0, 0);
    while i < a.samples.len() && j < b.samples.len() {
        let (sa, pa) = a.samples[i];
        let (sb, pb) = b.samples[j];
        if sa < sb {
            i += 1;
        } else if sb < sa {
            j += 1;
        } else {
            shared += 1;
            if pa.distance(&pb) <= params.epsilon {
                matching += 1;
            }
            i += 1;
            j += 1;
        }
    }
    let similar = shared >= params.min_shared && matching as f64 >= params.threshold * shared as f64;
    Similarity { shared, matching, similar }
}
