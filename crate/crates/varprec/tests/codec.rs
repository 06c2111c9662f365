//! Codec integration tests: enumeration-oracle equivalence, the IEEE
//! binary16 cross-check, and property-based invariants.

mod common;

use common::{formats_up_to, nearest_representable, rng, stress_inputs};
use proptest::prelude::*;
use rand::Rng;
use varprec::fpcodec::{enumerate_formats, FpFormat};

#[test]
fn quantize_matches_enumeration_oracle() {
    // Smaller volume than the acceptance suite; the acceptance run does 1e5
    // inputs per format.
    for fmt in formats_up_to(10) {
        for x in stress_inputs(&fmt, 20_000, 0xC0DEC + fmt.total_bits() as u64) {
            let got = fmt.quantize64(x);
            let want = nearest_representable(&fmt, x);
            assert_eq!(
                got.to_bits(),
                want.to_bits(),
                "{fmt}: quantize64({x:e}) = {got:e}, oracle {want:e}"
            );
        }
    }
}

#[test]
fn f32_api_agrees_with_oracle() {
    for fmt in formats_up_to(10) {
        for x in stress_inputs(&fmt, 4_000, 0xF32 + fmt.total_bits() as u64) {
            let x32 = x as f32;
            if x32.is_infinite() {
                continue;
            }
            let got = fmt.quantize(x32) as f64;
            let want = nearest_representable(&fmt, x32 as f64);
            assert_eq!(got.to_bits(), want.to_bits(), "{fmt}: quantize({x32:e})");
        }
    }
}

#[test]
fn e5m10_matches_reference_binary16() {
    let fmt = FpFormat::new(5, 10).unwrap();
    let mut r = rng(0xB16);
    let mut checked = 0;
    while checked < 100_000 {
        // Log-uniform magnitudes across the binary16 range and beyond its
        // subnormals; skip inputs whose binary16 image is infinite.
        let m = r.random_range(-30.0f64..17.5).exp2();
        let x = (if r.random::<bool>() { m } else { -m }) as f32;
        let reference = half::f16::from_f32(x);
        if reference.is_infinite() {
            continue;
        }
        let want = reference.to_f32();
        let got = fmt.quantize(x);
        assert_eq!(
            got.to_bits(),
            want.to_bits(),
            "quantize({x:e}) = {got:e}, binary16 {want:e}"
        );
        checked += 1;
    }
    // Signed zero and exact values.
    assert_eq!(fmt.quantize(-0.0).to_bits(), (-0.0f32).to_bits());
    assert_eq!(fmt.quantize(65504.0), 65504.0);
    assert_eq!(fmt.quantize(65519.9), 65504.0);
}

fn any_space_format() -> impl Strategy<Value = FpFormat> {
    let formats: Vec<FpFormat> = enumerate_formats().formats().to_vec();
    prop::sample::select(formats)
}

proptest! {
    #[test]
    fn idempotent(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                  fmt in any_space_format()) {
        let once = fmt.quantize64(x);
        prop_assert_eq!(once.to_bits(), fmt.quantize64(once).to_bits());
    }

    #[test]
    fn symmetric(x in prop::num::f64::NORMAL, fmt in any_space_format()) {
        prop_assert_eq!((-fmt.quantize64(x)).to_bits(), fmt.quantize64(-x).to_bits());
    }

    #[test]
    fn monotone(a in -1e30f64..1e30, b in -1e30f64..1e30, fmt in any_space_format()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(fmt.quantize64(lo) <= fmt.quantize64(hi));
    }

    #[test]
    fn saturates_never_overflows(x in prop::num::f64::NORMAL, fmt in any_space_format()) {
        let q = fmt.quantize64(x);
        prop_assert!(q.abs() <= fmt.max_finite());
        prop_assert!((q as f32).is_finite());
    }
}
