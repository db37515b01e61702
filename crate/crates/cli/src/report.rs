use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use efsgd::harness::{expected_output_grad_norm, read_metrics_csv, IterationMetrics, RunSummary};

use crate::{out_root, CliError, CliResult};

struct LoadedRun {
    id: String,
    metrics: Vec<IterationMetrics>,
    summary: RunSummary,
}

fn load(dir: &Path) -> Result<LoadedRun, String> {
    if !dir.is_dir() {
        return Err("not a directory".into());
    }
    let metrics =
        read_metrics_csv(&dir.join("metrics.csv")).map_err(|e| format!("metrics.csv: {e}"))?;
    let summary =
        RunSummary::read(&dir.join("summary.json")).map_err(|e| format!("summary.json: {e}"))?;
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(LoadedRun {
        id,
        metrics,
        summary,
    })
}

fn write_merged(path: &Path, runs: &[LoadedRun]) -> efsgd::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "run_id",
        "t",
        "loss",
        "grad_norm_sq",
        "error_norm_sq",
        "stepsize",
        "bits_ideal",
        "bits_wire",
    ])?;
    for run in runs {
        for m in &run.metrics {
            w.write_record([
                run.id.clone(),
                m.t.to_string(),
                m.loss.to_string(),
                m.grad_norm_sq.to_string(),
                m.error_norm_sq.to_string(),
                m.stepsize.to_string(),
                m.bits_ideal.to_string(),
                m.bits_wire.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn summary_text(runs: &[LoadedRun], skipped: &[(PathBuf, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:>8} {:>14} {:>14} {:>14} {:>16} {:>16}",
        "run_id", "T", "final_loss", "grad_norm_sq", "E_out_grad_sq", "bits_ideal", "bits_wire"
    );
    for r in runs {
        // E‖∇F(x_o)‖² over the output-index distribution; needs L and η < 3/(2L)
        let expected = r
            .summary
            .smoothness
            .and_then(|l| expected_output_grad_norm(&r.metrics, l).ok())
            .map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "n/a".into());
        let bits_ideal: u64 = r.metrics.iter().map(|m| m.bits_ideal).sum();
        let bits_wire: u64 = r.metrics.iter().map(|m| m.bits_wire).sum();
        let _ = writeln!(
            s,
            "{:<24} {:>8} {:>14.6e} {:>14.6e} {:>14} {:>16} {:>16}",
            r.id,
            r.metrics.len(),
            r.summary.final_metrics.loss,
            r.summary.final_metrics.grad_norm_sq,
            expected,
            bits_ideal,
            bits_wire
        );
    }
    for (dir, why) in skipped {
        let _ = writeln!(s, "skipped {}: {why}", dir.display());
    }
    s
}

pub fn cmd_report(dirs: &[PathBuf], out: Option<PathBuf>) -> CliResult<()> {
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for dir in dirs {
        match load(dir) {
            Ok(r) => runs.push(r),
            Err(why) => {
                eprintln!("skipping {}: {why}", dir.display());
                skipped.push((dir.clone(), why));
            }
        }
    }
    if runs.is_empty() {
        return Err(CliError::Runtime("no readable run directories".into()));
    }
    let out = out.unwrap_or_else(|| out_root().join("report"));
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    write_merged(&out.join("comparison.csv"), &runs)?;
    let text = summary_text(&runs, &skipped);
    fs::write(out.join("summary.txt"), &text)
        .map_err(|e| CliError::Runtime(format!("cannot write summary: {e}")))?;
    print!("{text}");
    Ok(())
}
