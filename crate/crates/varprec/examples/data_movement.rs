//! Register packing and the tensor-size model: how many bytes each slot
//! tensor moves at a given format, and how sizes scale with seed counts.
//!
//! ```bash
//! cargo run --example data_movement
//! ```

use varprec::arm::ArmModel;
use varprec::fpcodec::enumerate_formats;
use varprec::pipeline::{PipelineSettings, TensorSlot};
use varprec::report::{slot_elements_iko, slot_elements_to};

fn main() {
    // Packing: how many values of each width fit in a 32-bit register.
    println!("format  packing  bytes for 1024 elements");
    for fmt in enumerate_formats().iter() {
        println!(
            "{:6}  {:7}  {:10.1}",
            fmt.to_string(),
            fmt.packing_factor(),
            fmt.data_movement_bytes(1024)
        );
    }

    // Slot tensor sizes grow linearly with the optimization seed counts.
    let model = ArmModel::default_7link();
    let settings = PipelineSettings::default();
    println!("\nIK-phase tensor bytes at FP32 (columns: ik_seeds):");
    print!("{:18}", "");
    for seeds in [64u64, 128, 256, 512, 1024] {
        print!("{seeds:>12}");
    }
    println!();
    for slot in TensorSlot::ALL {
        if slot_elements_iko(slot, 1, &model) == 0 {
            continue;
        }
        print!("{:18}", slot.as_str());
        for seeds in [64u64, 128, 256, 512, 1024] {
            let bytes = 4 * slot_elements_iko(slot, seeds, &model);
            print!("{bytes:>12}");
        }
        println!();
    }

    println!("\nTO-phase tensor bytes at FP32 (columns: to_seeds):");
    print!("{:18}", "");
    for seeds in [4u64, 8, 16, 32, 64] {
        print!("{seeds:>12}");
    }
    println!();
    for slot in TensorSlot::ALL {
        if slot_elements_to(slot, 1, &model, &settings) == 0 {
            continue;
        }
        print!("{:18}", slot.as_str());
        for seeds in [4u64, 8, 16, 32, 64] {
            let bytes = 4 * slot_elements_to(slot, seeds, &model, &settings);
            print!("{bytes:>12}");
        }
        println!();
    }

    // Compression of a mixed configuration against the FP32 baseline.
    let config: varprec::pipeline::PrecisionConfig = serde_json::from_value(serde_json::json!({
        "out_spheres": "E5M10",
        "grad_out_spheres": "E4M3",
        "out_vec": "E2M1",
        "closest_pt": "E2M2",
        "closest_pt_swept": "E4M3"
    }))
    .unwrap();
    println!(
        "\nexample config {config}: {} total bits, {:.2}x whole-config reduction",
        config.total_bits(),
        160.0 / config.total_bits() as f64
    );
}
