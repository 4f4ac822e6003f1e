//! Counter-based random numbers.
//!
//! Every Gaussian increment is a pure function of `(seed, particle, step)`:
//! Philox4x32-10 is keyed by the seed and fed a counter built from the
//! particle index, step index and a block index, so draws do not depend on
//! evaluation order or thread count.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32-10 block.
#[inline]
pub fn philox4x32(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named sub-stream (initial sampling, replicas, ...).
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    splitmix64(seed ^ splitmix64(domain))
}

/// Stream of uniform bits for one `(seed, particle, step)` triple.
#[derive(Clone, Debug)]
pub struct StreamRng {
    key: [u32; 2],
    ctr: [u32; 4],
    block: u32,
    buf: [u32; 4],
    pos: usize,
}

impl StreamRng {
    pub fn new(seed: u64, particle: u64, step: u64) -> Self {
        StreamRng {
            key: [seed as u32, (seed >> 32) as u32],
            ctr: [step as u32, (step >> 32) as u32, particle as u32, (particle >> 32) as u32],
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    fn refill(&mut self) {
        let mut ctr = self.ctr;
        // block index lives in the top byte of the last word
        ctr[3] ^= self.block << 24;
        self.buf = philox4x32(ctr, self.key);
        self.block = self.block.wrapping_add(1);
        self.pos = 0;
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(4) {
            let bytes = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// Writes `√h · ξ` for the `(particle, step)` noise vector into `out`.
#[inline]
pub fn gaussian_increments(seed: u64, particle: u64, step: u64, sqrt_h: f64, out: &mut [f64]) {
    let mut rng = StreamRng::new(seed, particle, step);
    for v in out.iter_mut() {
        *v = sqrt_h * rng.normal();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32([0; 4], [0; 2]), [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]);
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32([0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344], [0xa4093822, 0x299f31d0]),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = StreamRng::new(7, 3, 11);
            (0..10).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = StreamRng::new(7, 3, 11);
            (0..10).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut other = StreamRng::new(7, 4, 11);
        assert_ne!(a[0], other.next_u64());
        let mut other = StreamRng::new(8, 3, 11);
        assert_ne!(a[0], other.next_u64());
        let mut other = StreamRng::new(7, 3, 12);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn normals_have_unit_variance() {
        let n = 200_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let z = StreamRng::new(42, i, 0).normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn uniform_in_range() {
        let mut r = StreamRng::new(1, 2, 3);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
