//! Binary Merkle trees. Odd levels duplicate their last node.

use super::LedgerError;
use crate::crypto::{hash_parts, Digest};

fn parent(l: &Digest, r: &Digest) -> Digest {
    hash_parts(&[l, r])
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level.chunks(2).map(|pair| parent(&pair[0], pair.get(1).unwrap_or(&pair[0]))).collect()
}

/// Root over `leaves`. A single leaf `L` yields `hash(L || L)`.
pub fn merkle_root(leaves: &[Digest]) -> Result<Digest, LedgerError> {
    if leaves.is_empty() {
        return Err(LedgerError::EmptyLeaves);
    }
    let mut level = next_level(leaves);
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(level[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProofStep {
    pub sibling: Digest,
    /// True when the sibling sits to the left of the running hash.
    pub sibling_is_left: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn new(leaves: Vec<Digest>) -> Result<Self, LedgerError> {
        if leaves.is_empty() {
            return Err(LedgerError::EmptyLeaves);
        }
        let mut levels = vec![leaves];
        loop {
            let next = next_level(levels.last().unwrap());
            let done = next.len() == 1;
            levels.push(next);
            if done {
                break;
            }
        }
        Ok(MerkleTree { levels })
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    /// Sibling path from leaf `index` to the root.
    pub fn proof(&self, index: usize) -> Option<Vec<ProofStep>> {
        if index >= self.levels[0].len() {
            return None;
        }
        let mut idx = index;
        let mut steps = Vec::with_capacity(self.levels.len() - 1);
        for level in &self.levels[..self.levels.len() - 1] {
            let sib = if idx % 2 == 0 { (idx + 1).min(level.len() - 1) } else { idx - 1 };
            steps.push(ProofStep { sibling: level[sib], sibling_is_left: idx % 2 == 1 });
            idx /= 2;
        }
        Some(steps)
    }
}

pub fn verify_proof(leaf: &Digest, proof: &[ProofStep], root: &Digest) -> bool {
    let acc = proof.iter().fold(*leaf, |acc, step| {
        if step.sibling_is_left {
            parent(&step.sibling, &acc)
        } else {
            parent(&acc, &step.sibling)
        }
    });
    acc == *root
}
