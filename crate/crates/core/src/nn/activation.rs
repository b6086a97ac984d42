use super::FeatureMap;

/// `ln 2` split so that `k * LN2_HI` is exact for the exponents in use.
const LN2_HI: f64 = f64::from_bits(0x3FE6_2E42_FEE0_0000);
const LN2_LO: f64 = f64::from_bits(0x3DEA_39EF_3579_3C76);
/// Adding and subtracting this rounds to the nearest integer and leaves the
/// integer in the low mantissa bits.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;
/// Below this `exp(x) - 1` rounds to `-1`; also keeps the exponent in range.
const EXPM1_FLOOR: f64 = -700.0;

/// `exp(x) - 1` for `x <= 0`, branch free so the loop in [`elu_in_place`]
/// vectorizes. Relative error is a few ulp over the whole range.
#[inline(always)]
fn expm1_nonpositive(x: f64) -> f64 {
    let x = if x < EXPM1_FLOOR { EXPM1_FLOOR } else { x };
    let shifted = x * std::f64::consts::LOG2_E + ROUND_MAGIC;
    let k = shifted - ROUND_MAGIC;
    // x = k ln2 + r with |r| <= ln2 / 2.
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // expm1(r) by its Taylor series through r^12.
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    let em1_r = r + r * r * p;
    // 2^k built from the integer held in the low bits of `shifted`.
    let k_bits = shifted.to_bits().wrapping_sub(ROUND_MAGIC.to_bits());
    let scale = f64::from_bits(k_bits.wrapping_add(1023) << 52);
    // exp(x) - 1 = 2^k expm1(r) + (2^k - 1)
    scale * em1_r + (scale - 1.0)
}

/// `x` for positive inputs, `alpha * (exp(x) - 1)` otherwise.
#[inline(always)]
pub fn elu_scalar(x: f64, alpha: f64) -> f64 {
    let neg = alpha * expm1_nonpositive(if x > 0.0 { 0.0 } else { x });
    if x > 0.0 {
        x
    } else {
        neg
    }
}

pub fn elu_in_place(data: &mut [f64], alpha: f64) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just checked.
        unsafe { elu_avx2(data, alpha) };
        return;
    }
    elu_loop(data, alpha);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn elu_avx2(data: &mut [f64], alpha: f64) {
    elu_loop(data, alpha);
}

#[inline(always)]
fn elu_loop(data: &mut [f64], alpha: f64) {
    for v in data {
        *v = elu_scalar(*v, alpha);
    }
}

pub fn elu(x: &FeatureMap, alpha: f64) -> FeatureMap {
    let mut out = x.clone();
    elu_in_place(out.data_mut(), alpha);
    out
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
