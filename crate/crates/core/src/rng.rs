//! Counter-based random numbers.
//!
//! Every variate used by the lattice integrator is a pure function of
//! `(seed, step, site)`, so moving the simulation window, skipping inactive
//! sites, or running replicas on different workers never changes the noise a
//! given space-time cell receives.

use rand::SeedableRng;
use statrs::function::erf::erfc_inv;
use rand_chacha::ChaCha8Rng;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
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

#[inline(always)]
fn unit_open(hi: u32, lo: u32) -> f64 {
    // 53 random bits mapped into (0, 1).
    let bits = (((hi as u64) << 32) | lo as u64) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Two independent uniforms on `(0, 1)` owned by the cell `(seed, step, site)`.
#[inline]
pub fn cell_uniforms(seed: u64, step: u64, site: i64) -> (f64, f64) {
    let site = site as u64;
    let out = philox4x32(
        [step as u32, (step >> 32) as u32, site as u32, (site >> 32) as u32],
        [seed as u32, (seed >> 32) as u32],
    );
    (unit_open(out[0], out[1]), unit_open(out[2], out[3]))
}

/// `Phi^{-1}(u)`.
#[inline]
pub fn normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Standard normal attached to one lattice cell: the quantile of its first uniform.
#[inline]
pub fn normal_at(seed: u64, step: u64, site: i64) -> f64 {
    normal_quantile(cell_uniforms(seed, step, site).0)
}

/// SplitMix64 finaliser, used to derive independent sub-seeds.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replica `index` of a stream identified by `master` and `tag`.
pub fn replica_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(tag)) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// A conventional sequential generator for event-driven code.
pub fn replica_rng(master: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replica_seed(master, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors published with the Random123 library.
    #[test]
    fn philox_known_answers() {
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
    fn normals_have_unit_moments() {
        let n = 200_000;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let z = normal_at(42, 7, i);
            s1 += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
        let nf = n as f64;
        assert!((s1 / nf).abs() < 0.01);
        assert!((s2 / nf - 1.0).abs() < 0.01);
        assert!((s4 / nf - 3.0).abs() < 0.06);
    }

    #[test]
    fn quantile_matches_tables() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-14);
        assert!((normal_quantile(1e-10) + 6.361340902404056).abs() < 1e-12);
    }

    #[test]
    fn distinct_steps_are_uncorrelated() {
        let n = 100_000;
        let c: f64 = (0..n).map(|i| normal_at(1, 0, i) * normal_at(1, 1, i)).sum::<f64>() / n as f64;
        assert!(c.abs() < 0.015);
    }
}
