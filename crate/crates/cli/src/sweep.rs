//! The `sweep` workflow: fan a base config out over a grid of overrides,
//! one independent run per grid line, then merge per-run summaries into a
//! single CSV ordered by run id.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use crate::config::Config;
use crate::simulate;

/// One non-comment grid line = one run: whitespace-separated
/// `section.key=value` overrides applied on top of the base config.
fn parse_grid(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn summary_field(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.trim().to_string())
        })
        .unwrap_or_default()
}

pub fn command(config: &Path, grid: &Path, out_dir: &Path) -> Result<i32> {
    let base = Config::load(config)?;
    let grid_text = std::fs::read_to_string(grid)
        .with_context(|| format!("cannot read grid {}", grid.display()))?;
    let lines = parse_grid(&grid_text);
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;

    // Fan out: every run owns its run_NNN directory, so workers never share
    // a file. Failures are recorded per run instead of aborting the sweep.
    let results: Vec<(usize, String, Result<usize>)> = lines
        .par_iter()
        .enumerate()
        .map(|(idx, line)| {
            let run = || -> Result<usize> {
                let mut cfg = base.clone();
                for tok in line.split_whitespace() {
                    cfg.set(tok)?;
                }
                let out = simulate::execute(&cfg)?;
                let dir = out_dir.join(format!("run_{idx:03}"));
                simulate::write_run(&dir, &out)?;
                Ok(out.saturation_count)
            };
            let result = run();
            if let Err(e) = &result {
                let dir = out_dir.join(format!("run_{idx:03}"));
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(dir.join("error.txt"), format!("{e:#}\n"));
            }
            (idx, line.clone(), result)
        })
        .collect();

    // Deterministic merge: read the per-run files back in run-id order.
    let mut merged = String::from("run,overrides,status,saturation_count,ratio,fitted_rate\n");
    let mut failed = 0usize;
    let mut ids: Vec<_> = results.iter().map(|(idx, ..)| *idx).collect();
    ids.sort_unstable();
    for idx in ids {
        let (_, line, result) = &results[idx];
        let overrides = line.split_whitespace().collect::<Vec<_>>().join(" ");
        match result {
            Ok(_) => {
                let summary = std::fs::read_to_string(
                    out_dir.join(format!("run_{idx:03}")).join("summary.txt"),
                )?;
                let _ = writeln!(
                    merged,
                    "run_{idx:03},{overrides},ok,{},{},{}",
                    summary_field(&summary, "saturation_count"),
                    summary_field(&summary, "ratio"),
                    summary_field(&summary, "fitted_rate"),
                );
            }
            Err(e) => {
                failed += 1;
                let reason = e.to_string().replace([',', '\n'], " ");
                let _ = writeln!(merged, "run_{idx:03},{overrides},error: {reason},,,");
            }
        }
    }
    std::fs::write(out_dir.join("sweep_summary.csv"), &merged)?;
    println!(
        "sweep: {} runs, {} failed, summary at {}",
        results.len(),
        failed,
        out_dir.join("sweep_summary.csv").display()
    );
    Ok(if failed > 0 { 1 } else { 0 })
}
