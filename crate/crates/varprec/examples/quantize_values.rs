//! The minifloat codec: parse formats, inspect their grids, quantize values.
//!
//! ```bash
//! cargo run --example quantize_values
//! ```

use varprec::fpcodec::{enumerate_formats, formats_at_or_above, FpFormat};

fn main() {
    // The canonical 21-format search space, FP4 through FP32.
    let space = enumerate_formats();
    println!("search space: {} formats", space.len());
    for width in [4u32, 5, 6, 8, 10, 16, 32] {
        let at: Vec<String> = space
            .iter()
            .filter(|f| f.total_bits() == width)
            .map(|f| f.to_string())
            .collect();
        println!("  FP{width:2}: {}", at.join(", "));
    }
    println!(
        "at least 13 bits: {} formats (the per-tensor elimination step)",
        formats_at_or_above(&space, 13).len()
    );

    // Every value a 4-bit float can hold.
    let e2m1: FpFormat = "E2M1".parse().unwrap();
    println!(
        "\nE2M1 nonnegative grid: {:?}",
        e2m1.representable_values().unwrap()
    );

    // Round-to-nearest-even with saturation.
    for x in [0.3f32, 1.25, 1.75, 7.0, -0.4, 1e6] {
        println!("  quantize({x:>8}) -> {}", e2m1.quantize(x));
    }

    // A quantize-dequantize pass over a tensor, exactly what the pipeline
    // hooks inject at each tensor slot.
    let mut tensor: Vec<f32> = vec![0.0, 0.031, -0.06, 0.72, 2.4, -5.1];
    let e4m3: FpFormat = "E4M3".parse().unwrap();
    println!("\nbefore E4M3: {tensor:?}");
    e4m3.quantize_tensor(&mut tensor);
    println!("after  E4M3: {tensor:?}");

    // E8M23 is the identity on 32-bit data.
    let fp32: FpFormat = "E8M23".parse().unwrap();
    assert_eq!(fp32.quantize(0.1), 0.1);
    println!("\nE8M23 is the identity: quantize(0.1) == 0.1");
}
