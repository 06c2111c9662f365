//! Minifloat quantization codec over arbitrary exponent/mantissa splits.
//!
//! A format `E<e>M<m>` is a sign bit, `e` exponent bits and `m` mantissa bits.
//! Unlike IEEE formats, no exponent code is reserved for infinities or NaN:
//! every code denotes a finite value and out-of-range magnitudes saturate to
//! `max_finite`. Rounding is round-to-nearest with ties to the even mantissa.
//! Subnormals are supported and the exponent bias is `2^(e-1) - 1`.
//!
//! Values live in 32-bit containers: quantizing clips the representable set
//! to what fits in an `f32`, which only affects the top binade of the three
//! 8-bit-exponent formats (`E8M1`-class grids would otherwise reach `2^128`).
//! `E8M23` is therefore exactly the identity on every finite `f32`.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors produced by format construction and the enumeration oracle.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FpError {
    #[error("invalid format E{exponent_bits}M{mantissa_bits}: exponent must be 2..=8, mantissa >= 1, total <= 32")]
    InvalidFormat {
        exponent_bits: u32,
        mantissa_bits: u32,
    },
    #[error("cannot parse {0:?} as an E<e>M<m> format string")]
    ParseFormat(String),
    #[error("format {0} is too wide to enumerate (total bits > 12)")]
    FormatTooWide(FpFormat),
}

/// A minifloat format: 1 sign bit + `exponent_bits` + `mantissa_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FpFormat {
    exponent_bits: u32,
    mantissa_bits: u32,
}

/// Widest exponent field supported; reproduces the 21-format space below.
pub const MAX_EXPONENT_BITS: u32 = 8;
/// Exponent fields narrower than 2 bits degenerate; disallowed.
pub const MIN_EXPONENT_BITS: u32 = 2;

impl FpFormat {
    /// Validates and builds a format. `exponent_bits` must be 2..=8,
    /// `mantissa_bits` at least 1, and the total width at most 32.
    pub fn new(exponent_bits: u32, mantissa_bits: u32) -> Result<Self, FpError> {
        let valid = (MIN_EXPONENT_BITS..=MAX_EXPONENT_BITS).contains(&exponent_bits)
            && mantissa_bits >= 1
            && 1 + exponent_bits + mantissa_bits <= 32;
        if valid {
            Ok(Self {
                exponent_bits,
                mantissa_bits,
            })
        } else {
            Err(FpError::InvalidFormat {
                exponent_bits,
                mantissa_bits,
            })
        }
    }

    pub const fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub const fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    /// Sign + exponent + mantissa.
    pub const fn total_bits(&self) -> u32 {
        1 + self.exponent_bits + self.mantissa_bits
    }

    /// IEEE-style bias `2^(e-1) - 1`.
    pub const fn bias(&self) -> i32 {
        (1 << (self.exponent_bits - 1)) - 1
    }

    /// How many values fit in a 32-bit register: `floor(32 / total_bits)`.
    pub const fn packing_factor(&self) -> u32 {
        32 / self.total_bits()
    }

    /// Exponent of the top binade. All exponent codes are finite, so this is
    /// `2^(e-1)`, clipped to 127 so the grid stays inside `f32`.
    fn max_exponent(&self) -> i32 {
        (1i32 << (self.exponent_bits - 1)).min(127)
    }

    /// Exponent of the bottom normal binade, `1 - bias`.
    fn min_exponent(&self) -> i32 {
        1 - self.bias()
    }

    /// Largest representable magnitude, `(2 - 2^-m) * 2^max_exponent`.
    pub fn max_finite(&self) -> f64 {
        (2.0 - exp2i(-(self.mantissa_bits as i32))) * exp2i(self.max_exponent())
    }

    /// Round `x` to the nearest representable value of this format.
    ///
    /// NaN passes through unchanged, signed zero is preserved, and anything
    /// at or beyond `max_finite` in magnitude (including infinities)
    /// saturates to `±max_finite`.
    pub fn quantize64(&self, x: f64) -> f64 {
        if x.is_nan() {
            return x;
        }
        let a = x.abs();
        if a == 0.0 {
            return x;
        }
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let max = self.max_finite();
        if a >= max {
            return sign * max;
        }
        let exp = floor_log2(a).max(self.min_exponent());
        let quantum = exp2i(exp - self.mantissa_bits as i32);
        // a/quantum < 2^(m+1), so the division and the product are exact.
        let steps = (a / quantum).round_ties_even();
        sign * steps * quantum
    }

    /// 32-bit quantize-dequantize. Exact: every grid point fits in `f32`.
    pub fn quantize(&self, x: f32) -> f32 {
        self.quantize64(x as f64) as f32
    }

    /// True for `E8M23`, whose grid is every finite `f32`: the identity on
    /// 32-bit data.
    pub fn is_identity(&self) -> bool {
        self.exponent_bits == 8 && self.mantissa_bits == 23
    }

    /// Elementwise in-place quantization of a tensor.
    pub fn quantize_tensor(&self, values: &mut [f32]) {
        // E8M23 is the identity; skip the per-element work on the hot path.
        if self.is_identity() {
            return;
        }
        for v in values {
            *v = self.quantize(*v);
        }
    }

    /// Every nonnegative representable value, ascending from zero.
    ///
    /// Enumeration oracle for narrow formats; errors on totals above 12 bits
    /// to keep the list small.
    pub fn representable_values(&self) -> Result<Vec<f64>, FpError> {
        if self.total_bits() > 12 {
            return Err(FpError::FormatTooWide(*self));
        }
        let m = self.mantissa_bits;
        let mut out = Vec::with_capacity(1usize << (self.exponent_bits + m));
        let sub_quantum = exp2i(self.min_exponent() - m as i32);
        for k in 0..(1u64 << m) {
            out.push(k as f64 * sub_quantum); // k = 0 is zero itself
        }
        for e in self.min_exponent()..=self.max_exponent() {
            let quantum = exp2i(e - m as i32);
            for k in (1u64 << m)..(1u64 << (m + 1)) {
                out.push(k as f64 * quantum);
            }
        }
        Ok(out)
    }

    /// Bytes moved for `element_count` values under register packing,
    /// `count * 4 / packing_factor`.
    pub fn data_movement_bytes(&self, element_count: u64) -> f64 {
        element_count as f64 * 4.0 / self.packing_factor() as f64
    }
}

impl fmt::Display for FpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}M{}", self.exponent_bits, self.mantissa_bits)
    }
}

impl FromStr for FpFormat {
    type Err = FpError;

    /// Parses `E<e>M<m>`, case-insensitive.
    fn from_str(s: &str) -> Result<Self, FpError> {
        let err = || FpError::ParseFormat(s.to_string());
        let rest = s
            .strip_prefix('E')
            .or_else(|| s.strip_prefix('e'))
            .ok_or_else(err)?;
        let m_pos = rest.find(['M', 'm']).ok_or_else(err)?;
        let e: u32 = rest[..m_pos].parse().map_err(|_| err())?;
        let m: u32 = rest[m_pos + 1..].parse().map_err(|_| err())?;
        FpFormat::new(e, m).map_err(|_| err())
    }
}

impl Serialize for FpFormat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FpFormat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// An ordered collection of candidate formats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpace {
    formats: Vec<FpFormat>,
}

impl FormatSpace {
    pub fn formats(&self) -> &[FpFormat] {
        &self.formats
    }

    pub fn len(&self) -> usize {
        self.formats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formats.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FpFormat> {
        self.formats.iter()
    }

    pub fn contains(&self, fmt: &FpFormat) -> bool {
        self.formats.contains(fmt)
    }
}

/// The 21-format candidate space, FP4 through FP32.
///
/// Bitwidths 4, 5, 6, 8 and 10 contribute every legal exponent/mantissa
/// split; 16 bits contributes `E5M10` and `E8M7`; 32 bits only `E8M23`.
/// Ordered by total width, then exponent width.
pub fn enumerate_formats() -> FormatSpace {
    let mut formats = Vec::with_capacity(21);
    for bits in [4u32, 5, 6, 8, 10] {
        formats.extend(splits_at_bitwidth(bits));
    }
    formats.push(FpFormat::new(5, 10).unwrap());
    formats.push(FpFormat::new(8, 7).unwrap());
    formats.push(FpFormat::new(8, 23).unwrap());
    FormatSpace { formats }
}

/// All legal exponent/mantissa splits at a given total width, exponent
/// ascending. Used by the per-tensor bitwidth probes, which are not limited
/// to the 21-format space.
pub fn splits_at_bitwidth(total_bits: u32) -> Vec<FpFormat> {
    (MIN_EXPONENT_BITS..=MAX_EXPONENT_BITS)
        .filter_map(|e| {
            let m = total_bits.checked_sub(1 + e)?;
            FpFormat::new(e, m).ok()
        })
        .collect()
}

/// Formats with at least `min_bits` total width, order preserved.
pub fn formats_at_or_above(space: &FormatSpace, min_bits: u32) -> FormatSpace {
    FormatSpace {
        formats: space
            .formats
            .iter()
            .copied()
            .filter(|f| f.total_bits() >= min_bits)
            .collect(),
    }
}

/// `2^x` as f64 for in-range integer exponents.
fn exp2i(x: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&x));
    f64::from_bits(((1023 + x) as u64) << 52)
}

/// `floor(log2(a))` for positive `a`, via the raw exponent field.
fn floor_log2(a: f64) -> i32 {
    let exp = ((a.to_bits() >> 52) & 0x7FF) as i32;
    if exp == 0 {
        // Subnormal f64: far below any format's range; any value this small
        // lands in the caller's subnormal branch.
        -1075
    } else {
        exp - 1023
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt(e: u32, m: u32) -> FpFormat {
        FpFormat::new(e, m).unwrap()
    }

    #[test]
    fn make_format_validation() {
        let f = fmt(2, 1);
        assert_eq!(f.total_bits(), 4);
        assert_eq!(f.bias(), 1);
        assert_eq!(f.packing_factor(), 8);

        let f32fmt = fmt(8, 23);
        assert_eq!(f32fmt.total_bits(), 32);
        assert_eq!(f32fmt.packing_factor(), 1);

        assert!(matches!(
            FpFormat::new(1, 2),
            Err(FpError::InvalidFormat { .. })
        ));
        assert!(matches!(
            FpFormat::new(9, 1),
            Err(FpError::InvalidFormat { .. })
        ));
        assert!(matches!(
            FpFormat::new(8, 0),
            Err(FpError::InvalidFormat { .. })
        ));
        assert!(matches!(
            FpFormat::new(8, 24),
            Err(FpError::InvalidFormat { .. })
        ));
    }

    #[test]
    fn packing_factors_match_register_model() {
        for (bits, packing) in [(4, 8), (5, 6), (6, 5), (8, 4), (10, 3), (16, 2), (32, 1)] {
            let f = splits_at_bitwidth(bits)[0];
            assert_eq!(f.packing_factor(), packing, "FP{bits}");
        }
    }

    #[test]
    fn enumerate_is_the_21_format_space() {
        let space = enumerate_formats();
        assert_eq!(space.len(), 21);

        let by_width = |w: u32| {
            space
                .iter()
                .filter(|f| f.total_bits() == w)
                .cloned()
                .collect::<Vec<_>>()
        };
        assert_eq!(by_width(4), vec![fmt(2, 1)]);
        assert_eq!(by_width(6), vec![fmt(2, 3), fmt(3, 2), fmt(4, 1)]);
        assert_eq!(by_width(16), vec![fmt(5, 10), fmt(8, 7)]);
        assert_eq!(by_width(32), vec![fmt(8, 23)]);
        for (w, n) in [(4, 1), (5, 2), (6, 3), (8, 5), (10, 7), (16, 2), (32, 1)] {
            assert_eq!(by_width(w).len(), n, "count at width {w}");
        }
    }

    #[test]
    fn at_or_above_counts() {
        let space = enumerate_formats();
        for (min_bits, expect) in [
            (4, 21),
            (5, 20),
            (6, 18),
            (8, 15),
            (10, 10),
            (13, 3),
            (16, 3),
            (17, 1),
            (32, 1),
        ] {
            assert_eq!(
                formats_at_or_above(&space, min_bits).len(),
                expect,
                "min_bits={min_bits}"
            );
        }
    }

    #[test]
    fn e2m1_representables() {
        let vals = fmt(2, 1).representable_values().unwrap();
        assert_eq!(vals, vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0]);
    }

    #[test]
    fn e3m1_max_is_formula_value() {
        // bias 3, top exponent code 7 -> (1 + 1/2) * 2^(7-3) = 24
        let f = fmt(3, 1);
        assert_eq!(f.max_finite(), 24.0);
        let vals = f.representable_values().unwrap();
        assert_eq!(*vals.last().unwrap(), 24.0);
    }

    #[test]
    fn representable_guard() {
        assert!(matches!(
            fmt(8, 23).representable_values(),
            Err(FpError::FormatTooWide(_))
        ));
        assert!(fmt(8, 3).representable_values().is_ok()); // 12 bits, at the cap
    }

    #[test]
    fn quantize_spec_values() {
        let e2m1 = fmt(2, 1);
        assert_eq!(e2m1.quantize(0.0), 0.0);
        assert_eq!(e2m1.quantize(0.3), 0.5);
        assert_eq!(e2m1.quantize(7.0), 6.0);
        assert_eq!(e2m1.quantize(-7.0), -6.0);
        assert_eq!(e2m1.quantize(1.25), 1.0); // tie to even mantissa
        assert_eq!(e2m1.quantize(1.75), 2.0);
        assert_eq!(e2m1.quantize(f32::INFINITY), 6.0);
        assert_eq!(e2m1.quantize(f32::NEG_INFINITY), -6.0);
        assert!(e2m1.quantize(f32::NAN).is_nan());
        assert!(e2m1.quantize(-0.0).is_sign_negative());
        assert_eq!(e2m1.quantize(-0.0), 0.0);
    }

    #[test]
    fn e8m23_is_identity_on_f32() {
        let f = fmt(8, 23);
        for x in [
            0.0f32,
            -0.0,
            1.0,
            -1.5,
            f32::MAX,
            f32::MIN_POSITIVE,
            1.0e-40, // subnormal f32
            core::f32::consts::PI,
        ] {
            assert_eq!(f.quantize(x).to_bits(), x.to_bits(), "x={x:?}");
        }
    }

    #[test]
    fn quantize_tensor_elementwise() {
        let e2m1 = fmt(2, 1);
        let mut v = vec![0.0f32, 0.3, -7.0];
        e2m1.quantize_tensor(&mut v);
        assert_eq!(v, vec![0.0, 0.5, -6.0]);

        let mut empty: Vec<f32> = vec![];
        e2m1.quantize_tensor(&mut empty);
        assert!(empty.is_empty());

        let mut passthrough = vec![1.1f32, -2.2, 3.3];
        let orig = passthrough.clone();
        fmt(8, 23).quantize_tensor(&mut passthrough);
        assert_eq!(passthrough, orig);
    }

    #[test]
    fn data_movement_examples() {
        assert_eq!(fmt(2, 1).data_movement_bytes(1024), 512.0);
        assert_eq!(fmt(8, 23).data_movement_bytes(1024), 4096.0);
        assert_eq!(fmt(3, 6).data_movement_bytes(300), 400.0); // FP10
        assert_eq!(fmt(2, 1).data_movement_bytes(0), 0.0);
    }

    #[test]
    fn format_string_round_trip() {
        let f: FpFormat = "E2M1".parse().unwrap();
        assert_eq!(f, fmt(2, 1));
        let f: FpFormat = "e5m10".parse().unwrap();
        assert_eq!(f.to_string(), "E5M10");
        assert!("M5E2".parse::<FpFormat>().is_err());
        assert!("E1M2".parse::<FpFormat>().is_err());
        assert!("".parse::<FpFormat>().is_err());

        let json = serde_json::to_string(&fmt(8, 7)).unwrap();
        assert_eq!(json, "\"E8M7\"");
        let back: FpFormat = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fmt(8, 7));
    }

    #[test]
    fn splits_at_13_include_e6m6() {
        let splits = splits_at_bitwidth(13);
        assert_eq!(splits.len(), 7);
        assert!(splits.contains(&fmt(6, 6)));
        assert_eq!(splits_at_bitwidth(4), vec![fmt(2, 1)]);
    }

    #[test]
    fn top_binade_clip_keeps_grid_inside_f32() {
        // E8M1's uncapped grid would reach 1.5 * 2^128; the container clip
        // stops at 1.5 * 2^127, which is still a valid f32.
        let f = fmt(8, 1);
        let max = f.max_finite();
        assert_eq!(max, 1.5 * (2.0f64).powi(127));
        assert!((max as f32).is_finite());
        assert_eq!(f.quantize(f32::MAX), max as f32);
    }
}
