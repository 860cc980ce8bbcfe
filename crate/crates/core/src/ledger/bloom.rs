use super::{CoinId, LedgerError};
use crate::crypto::{hash_parts, Digest, DigestBuilder};

/// Bloom filter over spent coin IDs.
///
/// Bit positions come from double hashing of a SHA-256 digest of the coin
/// ID: `h1 + i * h2 (mod m)` for `i in 0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpentCoinFilter {
    words: Vec<u64>,
    m: usize,
    k: u32,
    inserted: usize,
}

impl SpentCoinFilter {
    /// Sizes the filter with `m = ceil(-n ln p / ln^2 2)` and
    /// `k = round(m / n * ln 2)`.
    pub fn new(n_expected: usize, target_fpr: f64) -> Result<Self, LedgerError> {
        if !(target_fpr > 0.0 && target_fpr < 1.0) {
            return Err(LedgerError::InvalidParameter("target_fpr must lie in (0, 1)"));
        }
        if n_expected == 0 {
            return Err(LedgerError::InvalidParameter("n_expected must be positive"));
        }
        let ln2 = std::f64::consts::LN_2;
        let n = n_expected as f64;
        let m = (-n * target_fpr.ln() / (ln2 * ln2)).ceil() as usize;
        let k = ((m as f64 / n) * ln2).round().max(1.0) as u32;
        Self::with_params(m, k)
    }

    pub fn with_params(m: usize, k: u32) -> Result<Self, LedgerError> {
        if m == 0 || k == 0 {
            return Err(LedgerError::InvalidParameter("m and k must be positive"));
        }
        Ok(SpentCoinFilter { words: vec![0; m.div_ceil(64)], m, k, inserted: 0 })
    }

    pub fn bits(&self) -> usize {
        self.m
    }

    pub fn hashes(&self) -> u32 {
        self.k
    }

    pub fn inserted_count(&self) -> usize {
        self.inserted
    }

    pub fn size_bytes(&self) -> usize {
        self.m.div_ceil(8)
    }

    fn positions(&self, coin: &CoinId) -> impl Iterator<Item = usize> {
        let d = hash_parts(&[b"bloom", &coin.0]);
        let h1 = u64::from_be_bytes(d[..8].try_into().unwrap());
        let h2 = u64::from_be_bytes(d[8..16].try_into().unwrap()) | 1;
        let m = self.m as u64;
        (0..self.k as u64).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    pub fn insert(&mut self, coin: &CoinId) {
        let pos: Vec<usize> = self.positions(coin).collect();
        for p in pos {
            self.words[p / 64] |= 1 << (p % 64);
        }
        self.inserted += 1;
    }

    pub fn contains(&self, coin: &CoinId) -> bool {
        self.positions(coin).all(|p| self.words[p / 64] & (1 << (p % 64)) != 0)
    }

    /// Digest recorded in each block after the block's spends are inserted.
    pub fn anchor(&self) -> Digest {
        let mut h = DigestBuilder::new();
        h.update(b"bloom-anchor").update(&(self.m as u64).to_be_bytes()).update(&self.k.to_be_bytes());
        for w in &self.words {
            h.update(&w.to_be_bytes());
        }
        h.finish()
    }

    pub fn empty_like(&self) -> Self {
        SpentCoinFilter { words: vec![0; self.words.len()], m: self.m, k: self.k, inserted: 0 }
    }

    pub fn same_bits(&self, other: &Self) -> bool {
        self.m == other.m && self.k == other.k && self.words == other.words
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sizing_formula() {
        let f = SpentCoinFilter::new(3000, 0.01).unwrap();
        assert_eq!(f.bits(), 28756);
        assert_eq!(f.hashes(), 7);
        assert_eq!(f.size_bytes(), 3595);
        let g = SpentCoinFilter::new(1, 0.5).unwrap();
        assert_eq!(g.bits(), 2);
        assert_eq!(g.hashes(), 1);
    }

    #[test]
    fn invalid_rates() {
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(SpentCoinFilter::new(10, p), Err(LedgerError::InvalidParameter(_))));
        }
    }

    #[test]
    fn insert_query() {
        let mut f = SpentCoinFilter::new(100, 0.01).unwrap();
        let c1 = CoinId::from_u64(1);
        assert!(!f.contains(&c1));
        f.insert(&c1);
        assert!(f.contains(&c1));
        assert_eq!(f.inserted_count(), 1);
    }

    #[test]
    fn no_false_negatives_exhaustive() {
        let mut f = SpentCoinFilter::new(2000, 0.01).unwrap();
        for i in 0..2000 {
            f.insert(&CoinId::from_u64(i * 7919));
        }
        assert!((0..2000).all(|i| f.contains(&CoinId::from_u64(i * 7919))));
    }

    #[test]
    fn false_positive_rate_monte_carlo() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut f = SpentCoinFilter::new(3000, 0.01).unwrap();
        let inserted: std::collections::HashSet<u64> = (0..3000).map(|_| rng.gen()).collect();
        for &c in &inserted {
            f.insert(&CoinId::from_u64(c));
        }
        let mut fp = 0;
        let mut queried = 0;
        while queried < 100_000 {
            let c: u64 = rng.gen();
            if inserted.contains(&c) {
                continue;
            }
            queried += 1;
            fp += f.contains(&CoinId::from_u64(c)) as usize;
        }
        let rate = fp as f64 / queried as f64;
        assert!((0.005..=0.02).contains(&rate), "fpr {rate}");
    }
}
