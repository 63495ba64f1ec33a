//! Probability kernel: standard normal and χ²₂ distribution functions and a
//! seedable, splittable random stream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal density φ(x).
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF Φ(x).
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(invalid(format!("normal cdf requires a finite argument, got {x}")));
    }
    Ok(0.5 * libm::erfc(-x / SQRT_2))
}

/// Upper tail 1 − Φ(x), computed without cancellation for large `x`.
pub fn std_normal_sf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(invalid(format!("normal sf requires a finite argument, got {x}")));
    }
    Ok(0.5 * libm::erfc(x / SQRT_2))
}

/// Standard normal quantile Φ⁻¹(p).
///
/// Acklam's rational approximation followed by one Halley step against the
/// erfc-based CDF, which brings the round-trip error to machine precision.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("normal quantile requires p in (0,1), got {p}")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement. In the upper half work with the survival function so
    // the residual keeps full relative precision.
    let (err, sign) = if x > 0.0 {
        (0.5 * libm::erfc(x / SQRT_2) - (1.0 - p), -1.0)
    } else {
        (0.5 * libm::erfc(-x / SQRT_2) - p, 1.0)
    };
    let u = sign * err * SQRT_2PI * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// CDF of the χ² distribution with two degrees of freedom, `1 − exp(−x/2)`.
pub fn chisq2_cdf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid(format!("chi-square cdf requires x >= 0, got {x}")));
    }
    Ok(-(-0.5 * x).exp_m1())
}

/// Upper tail of χ²₂, `exp(−x/2)`.
pub fn chisq2_sf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid(format!("chi-square sf requires x >= 0, got {x}")));
    }
    Ok((-0.5 * x).exp())
}

/// Quantile of χ²₂, `−2 ln(1 − p)`.
pub fn chisq2_quantile(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid(format!("chi-square quantile requires p in [0,1), got {p}")));
    }
    Ok(-2.0 * (-p).ln_1p())
}

/// A deterministic random stream identified by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8 with the master seed (and an optional lane) as key and the
/// stream index as the 64-bit ChaCha stream id, so constructing stream `k` is
/// O(1) and distinct indices never share keystream blocks.
#[derive(Clone, Debug)]
pub struct RandomStream {
    master_seed: u64,
    lane: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self::with_lane(master_seed, 0, stream_index)
    }

    /// A stream in a separate key lane. Lanes let independent experiment
    /// components use the same index space without colliding.
    pub fn with_lane(master_seed: u64, lane: u64, stream_index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&lane.to_le_bytes());
        key[16..24].copy_from_slice(b"twostage");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_index);
        Self { master_seed, lane, stream_index, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Child stream `index` of this stream. Children of distinct parents live in
    /// distinct lanes; the parent's own position is not consumed.
    pub fn substream(&self, index: u64) -> RandomStream {
        let lane = splitmix64(self.lane ^ splitmix64(self.stream_index.wrapping_add(0x5851_f42d)));
        RandomStream::with_lane(self.master_seed, lane | 1, index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Draw from N(mean, sd²); `sd = 0` returns `mean` without consuming randomness.
    pub fn sample_normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(invalid(format!("normal sd must be non-negative, got {sd}")));
        }
        if !mean.is_finite() {
            return Err(invalid(format!("normal mean must be finite, got {mean}")));
        }
        if sd == 0.0 {
            return Ok(mean);
        }
        Ok(mean + sd * self.standard_normal())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
