//! Report rendering: turns the logged artifacts into markdown and CSV
//! tables plus the tensor-size model data. Works purely from artifacts; it
//! never touches the pipeline.

use std::fmt::Write as _;
use std::fs;

use crate::arm::{sweep_count, ArmModel};
use crate::config::Experiment;
use crate::orchestrate::{BaselineArtifact, ReportPaths, SearchArtifact};
use crate::pipeline::{PipelineSettings, PrecisionConfig, TensorSlot};
use crate::search::Trial;

/// Elements of one slot tensor during inverse-kinematics optimization, as a
/// function of the seed count. Spheres carry (x, y, radius), gradients
/// (x, y), the pair vector one term per non-adjacent sphere pair.
pub fn slot_elements_iko(slot: TensorSlot, ik_seeds: u64, model: &ArmModel) -> u64 {
    let spheres = model.n_spheres() as u64;
    let pairs = model.self_collision_pairs().len() as u64;
    match slot {
        TensorSlot::OutSpheres => ik_seeds * spheres * 3,
        TensorSlot::GradOutSpheres => ik_seeds * spheres * 2,
        TensorSlot::OutVec => ik_seeds * pairs,
        TensorSlot::ClosestPt => ik_seeds * spheres * 3,
        TensorSlot::ClosestPtSwept => 0, // trajectory phase only
    }
}

/// Elements of one slot tensor during trajectory optimization. The swept
/// tensors cover every sweep evaluation point of every seed trajectory.
pub fn slot_elements_to(
    slot: TensorSlot,
    to_seeds: u64,
    model: &ArmModel,
    settings: &PipelineSettings,
) -> u64 {
    let spheres = model.n_spheres() as u64;
    let pairs = model.self_collision_pairs().len() as u64;
    let rows = sweep_count(settings.horizon, settings.interpolation_substeps) as u64;
    let horizon = settings.horizon as u64;
    match slot {
        TensorSlot::OutSpheres => to_seeds * rows * spheres * 3,
        TensorSlot::GradOutSpheres => to_seeds * rows * spheres * 2,
        TensorSlot::OutVec => to_seeds * horizon * pairs,
        TensorSlot::ClosestPt => 0, // IK phase only
        TensorSlot::ClosestPtSwept => to_seeds * rows * spheres * 3,
    }
}

fn fmt_bytes(b: f64) -> String {
    if b >= 1024.0 * 1024.0 {
        format!("{:.2} MiB", b / (1024.0 * 1024.0))
    } else if b >= 1024.0 {
        format!("{:.2} KiB", b / 1024.0)
    } else {
        format!("{b:.0} B")
    }
}

pub(crate) fn render(
    exp: &Experiment,
    baseline: &BaselineArtifact,
    search: &SearchArtifact,
    trials_by_scope: &[Vec<Trial>],
) -> Result<ReportPaths, String> {
    let dir = &exp.output_dir;
    let mut md = String::new();
    let fp32 = PrecisionConfig::full_precision();

    writeln!(md, "# Precision search report\n").unwrap();

    // Baseline targets and attempt statistics.
    writeln!(md, "## Baseline (all-E8M23) success rates\n").unwrap();
    writeln!(
        md,
        "| environment | success rate | attempts (median, 75%, mean) |"
    )
    .unwrap();
    writeln!(md, "|---|---|---|").unwrap();
    for (name, env) in &baseline.environments {
        writeln!(
            md,
            "| {name} | {:.3} | ({}, {}, {:.2}) |",
            env.success_rate,
            env.attempt_stats.median,
            env.attempt_stats.p75,
            env.attempt_stats.mean
        )
        .unwrap();
    }

    // Phase-1 minima.
    writeln!(md, "\n## Per-tensor minima (phase 1)\n").unwrap();
    writeln!(md, "| tensor | min bits |").unwrap();
    writeln!(md, "|---|---|").unwrap();
    for slot in TensorSlot::ALL {
        if let Some(bits) = search.minima.get(slot.as_str()) {
            writeln!(md, "| {slot} | {bits} |").unwrap();
        }
    }
    writeln!(
        md,
        "\nReduced search space: {} configurations ({:.2}x reduction from {}).",
        search.space_size, search.reduction_factor, 4_084_101u64
    )
    .unwrap();

    // Phase-2 format grid.
    writeln!(
        md,
        "\n## Selected formats (phase 2, {} mode)\n",
        search.mode
    )
    .unwrap();
    let mut grid_csv = String::from(
        "scope,out_spheres,grad_out_spheres,out_vec,closest_pt,closest_pt_swept,total_bits,feasible\n",
    );
    write!(md, "| scope |").unwrap();
    for slot in TensorSlot::ALL {
        write!(md, " {slot} |").unwrap();
    }
    writeln!(md, " total bits | feasible |").unwrap();
    writeln!(md, "|---|---|---|---|---|---|---|---|").unwrap();
    for result in &search.results {
        let f = result.best.config.formats();
        write!(md, "| {} |", result.scope).unwrap();
        for fmt in f {
            write!(md, " {fmt} |").unwrap();
        }
        writeln!(md, " {} | {} |", result.best.total_bits, result.feasible).unwrap();
        grid_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            result.scope, f[0], f[1], f[2], f[3], f[4], result.best.total_bits, result.feasible
        ));
    }

    // Trial-log statistics.
    writeln!(md, "\n### Trial log\n").unwrap();
    for (result, trials) in search.results.iter().zip(trials_by_scope) {
        let feasible = trials.iter().filter(|t| t.feasible).count();
        let max_bits = trials.iter().map(|t| t.total_bits).max().unwrap_or(0);
        writeln!(
            md,
            "- `{}`: {} unique evaluations, {} feasible, best {} bits, widest sampled {} bits",
            result.scope,
            trials.len(),
            feasible,
            result.best.total_bits,
            max_bits
        )
        .unwrap();
    }

    // Aggregate reduction, both definitions (they differ; neither is
    // asserted against anything).
    writeln!(md, "\n## Aggregate tensor-size reduction\n").unwrap();
    for result in &search.results {
        let total = result.best.total_bits as f64;
        let whole = 160.0 / total;
        let per_slot: f64 = result
            .best
            .config
            .formats()
            .iter()
            .map(|f| 32.0 / f.total_bits() as f64)
            .sum::<f64>()
            / 5.0;
        writeln!(
            md,
            "- `{}`: 160/total_bits = {whole:.2}x; mean per-slot 32/bits = {per_slot:.2}x",
            result.scope
        )
        .unwrap();
    }

    // Tensor-size model: linear in the seed counts.
    let best = &search.results[0].best.config;
    let sweep = |base: u64| [base, base * 2, base * 4, base * 8];
    let mut iko_csv =
        String::from("slot,ik_seeds,elements,fp32_bytes,selected_bytes,compression\n");
    writeln!(
        md,
        "\n## Data movement, IK phase (selected formats from `{}`)\n",
        search.results[0].scope
    )
    .unwrap();
    writeln!(
        md,
        "| tensor | ik seeds | elements | FP32 | selected | ratio |"
    )
    .unwrap();
    writeln!(md, "|---|---|---|---|---|---|").unwrap();
    for slot in TensorSlot::ALL {
        for seeds in sweep(exp.pipeline.ik_seeds as u64) {
            let elements = slot_elements_iko(slot, seeds, &exp.model);
            if elements == 0 {
                continue;
            }
            let fp32_bytes = fp32.get(slot).data_movement_bytes(elements);
            let sel_bytes = best.get(slot).data_movement_bytes(elements);
            writeln!(
                md,
                "| {slot} | {seeds} | {elements} | {} | {} | {:.1}x |",
                fmt_bytes(fp32_bytes),
                fmt_bytes(sel_bytes),
                fp32_bytes / sel_bytes
            )
            .unwrap();
            iko_csv.push_str(&format!(
                "{slot},{seeds},{elements},{fp32_bytes},{sel_bytes},{}\n",
                fp32_bytes / sel_bytes
            ));
        }
    }

    let mut to_csv = String::from("slot,to_seeds,elements,fp32_bytes,selected_bytes,compression\n");
    writeln!(md, "\n## Data movement, trajectory phase\n").unwrap();
    writeln!(
        md,
        "| tensor | to seeds | elements | FP32 | selected | ratio |"
    )
    .unwrap();
    writeln!(md, "|---|---|---|---|---|---|").unwrap();
    for slot in TensorSlot::ALL {
        for seeds in sweep(exp.pipeline.to_seeds as u64) {
            let elements = slot_elements_to(slot, seeds, &exp.model, &exp.pipeline);
            if elements == 0 {
                continue;
            }
            let fp32_bytes = fp32.get(slot).data_movement_bytes(elements);
            let sel_bytes = best.get(slot).data_movement_bytes(elements);
            writeln!(
                md,
                "| {slot} | {seeds} | {elements} | {} | {} | {:.1}x |",
                fmt_bytes(fp32_bytes),
                fmt_bytes(sel_bytes),
                fp32_bytes / sel_bytes
            )
            .unwrap();
            to_csv.push_str(&format!(
                "{slot},{seeds},{elements},{fp32_bytes},{sel_bytes},{}\n",
                fp32_bytes / sel_bytes
            ));
        }
    }

    // Sparsity, measured on the baseline run.
    writeln!(md, "\n## Tensor sparsity (zero fraction, baseline run)\n").unwrap();
    write!(md, "| environment |").unwrap();
    for slot in TensorSlot::ALL {
        write!(md, " {slot} |").unwrap();
    }
    writeln!(md).unwrap();
    writeln!(md, "|---|---|---|---|---|---|").unwrap();
    for (name, env) in &baseline.environments {
        write!(md, "| {name} |").unwrap();
        for slot in TensorSlot::ALL {
            let frac = env.sparsity.get(slot.as_str()).copied().unwrap_or(1.0);
            write!(md, " {frac:.3} |").unwrap();
        }
        writeln!(md).unwrap();
    }

    let paths = ReportPaths {
        markdown: dir.join("report.md"),
        grid_csv: dir.join("report_grid.csv"),
        sizes_iko_csv: dir.join("sizes_iko.csv"),
        sizes_to_csv: dir.join("sizes_to.csv"),
    };
    fs::write(&paths.markdown, md).map_err(|e| e.to_string())?;
    fs::write(&paths.grid_csv, grid_csv).map_err(|e| e.to_string())?;
    fs::write(&paths.sizes_iko_csv, iko_csv).map_err(|e| e.to_string())?;
    fs::write(&paths.sizes_to_csv, to_csv).map_err(|e| e.to_string())?;
    Ok(paths)
}
