use sha2::{Digest as _, Sha256};

pub type Digest = [u8; 32];

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Incremental hashing for canonical encodings.
#[derive(Default, Clone)]
pub struct DigestBuilder(Sha256);

impl DigestBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.update(bytes);
        self
    }

    pub fn finish(self) -> Digest {
        self.0.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn hex(d: &Digest) -> String {
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn empty_input_vector() {
        assert_eq!(hex(&hash(b"")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn deterministic_and_parts_agree() {
        assert_eq!(hash(b"abc"), hash(b"abc"));
        assert_eq!(hash(b"abcdef"), hash_parts(&[b"abc", b"def"]));
        let mut b = DigestBuilder::new();
        b.update(b"ab").update(b"cdef");
        assert_eq!(b.finish(), hash(b"abcdef"));
    }

    #[test]
    fn single_bit_flips_change_digest() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let len = rng.gen_range(1..64);
            let x: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let mut y = x.clone();
            let bit = rng.gen_range(0..len * 8);
            y[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(hash(&x), hash(&y));
        }
    }
}
