//! Counter-based random numbers.
//!
//! Every normal variate is a pure function of `(seed, particle, step,
//! component)`, so a simulation produces the same numbers no matter how the
//! particle loop is split across threads. The bijection is Philox-4x32-10
//! (Salmon et al., SC'11); normals come from Box-Muller on pairs of 53-bit
//! uniforms.

const PHILOX_M0: u64 = 0xD251_1F53;
const PHILOX_M1: u64 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u64, b: u32) -> (u32, u32) {
    let p = a * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox-4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer; used to derive independent sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x6A09_E667_F3BC_C909)))
}

/// Step index reserved for drawing initial conditions.
pub const INIT_STEP: u32 = u32::MAX;

/// Stateless normal generator keyed by a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    key: [u32; 2],
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    #[inline]
    fn block(&self, particle: u64, step: u32, pair: u32) -> [u32; 4] {
        philox4x32([particle as u32, (particle >> 32) as u32, step, pair], self.key)
    }

    /// Two independent uniforms in (0, 1).
    #[inline]
    pub fn uniform_pair(&self, particle: u64, step: u32, pair: u32) -> (f64, f64) {
        let r = self.block(particle, step, pair);
        let a = ((r[0] as u64) << 21) ^ (r[1] as u64 >> 11);
        let b = ((r[2] as u64) << 21) ^ (r[3] as u64 >> 11);
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((a as f64 + 0.5) * SCALE, (b as f64 + 0.5) * SCALE)
    }

    /// Fills `out` with independent standard normals for one (particle, step).
    #[inline]
    pub fn fill(&self, particle: u64, step: u32, out: &mut [f64]) {
        let mut pair = 0u32;
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            let (u1, u2) = self.uniform_pair(particle, step, pair);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            chunk[0] = r * c;
            if chunk.len() > 1 {
                chunk[1] = r * s;
            }
            pair += 1;
        }
    }

    pub fn normal(&self, particle: u64, step: u32, component: usize) -> f64 {
        let mut buf = [0.0; 2];
        let (u1, u2) = self.uniform_pair(particle, step, (component / 2) as u32);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        buf[0] = r * c;
        buf[1] = r * s;
        buf[component % 2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answer() {
        // Random123 kat_vectors for philox4x32_10.
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn fill_matches_single_draws() {
        let s = NormalStream::new(17);
        let mut buf = [0.0; 5];
        s.fill(3, 9, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            assert_eq!(*v, s.normal(3, 9, j));
        }
    }

    #[test]
    fn normals_have_unit_moments() {
        let s = NormalStream::new(2024);
        let n = 200_000u64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..n {
            let z = s.normal(i, 0, 0);
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 4.0 / (n as f64).sqrt());
        assert!((m2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
