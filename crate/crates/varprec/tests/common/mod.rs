//! Shared test oracles and helpers.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use varprec::fpcodec::FpFormat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mantissa-code parity of a nonnegative grid value: the integer step index
/// within its binade (subnormals use the bottom binade's quantum).
fn mantissa_code_is_even(fmt: &FpFormat, v: f64) -> bool {
    if v == 0.0 {
        return true;
    }
    let bias = fmt.bias();
    let min_exp = 1 - bias;
    let e = (v.log2().floor() as i32).max(min_exp);
    let quantum = (2.0f64).powi(e - fmt.mantissa_bits() as i32);
    let k = (v / quantum).round() as u64;
    k % 2 == 0
}

/// Nearest-representable oracle: scans the enumerated grid (plus negation),
/// ties resolved to the even mantissa code. Saturates beyond the grid.
pub fn nearest_representable(fmt: &FpFormat, x: f64) -> f64 {
    assert!(!x.is_nan());
    let values = fmt
        .representable_values()
        .expect("oracle needs a narrow format");
    let a = x.abs();
    let sign = if x.is_sign_negative() { -1.0 } else { 1.0 };
    // Binary search for the closest pair around `a`.
    let idx = values.partition_point(|&v| v < a);
    let mut best = f64::INFINITY;
    let mut best_dist = f64::INFINITY;
    let lo = idx.saturating_sub(1);
    let hi = (idx + 1).min(values.len() - 1);
    for &v in &values[lo..=hi] {
        let d = (v - a).abs();
        if d < best_dist {
            best_dist = d;
            best = v;
        } else if d == best_dist && best != v {
            // Exact midpoint: prefer the even mantissa code.
            if mantissa_code_is_even(fmt, v) {
                best = v;
            }
        }
    }
    if sign < 0.0 && best == 0.0 {
        -0.0
    } else {
        sign * best
    }
}

/// A mixed input distribution stressing every regime of a format: uniform
/// around the range, log-uniform magnitudes, exact grid points, and exact
/// midpoints between neighbors.
pub fn stress_inputs(fmt: &FpFormat, count: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let values = fmt.representable_values().unwrap();
    let max = *values.last().unwrap();
    let min_positive = values[1];
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let x: f64 = match i % 4 {
            0 => r.random_range(-2.0 * max..2.0 * max),
            1 => {
                // log-uniform magnitude from below the subnormals to above max
                let lo = (min_positive / 4.0).ln();
                let hi = (2.0 * max).ln();
                let m = r.random_range(lo..hi).exp();
                if r.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
            2 => {
                let v = values[r.random_range(0..values.len())];
                if r.random::<bool>() {
                    v
                } else {
                    -v
                }
            }
            _ => {
                let j = r.random_range(0..values.len() - 1);
                let mid = (values[j] + values[j + 1]) / 2.0;
                if r.random::<bool>() {
                    mid
                } else {
                    -mid
                }
            }
        };
        out.push(x);
    }
    out
}

/// Every legal format with at most `max_bits` total width.
pub fn formats_up_to(max_bits: u32) -> Vec<FpFormat> {
    (4..=max_bits)
        .flat_map(varprec::fpcodec::splits_at_bitwidth)
        .collect()
}
