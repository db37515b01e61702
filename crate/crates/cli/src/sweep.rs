use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{default_out, execute, overrides, parse_config, read_json, CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    base: Value,
    /// Dotted path → list of values; the sweep runs the cross product.
    grid: Map<String, Value>,
    #[serde(default = "one")]
    repetitions: usize,
    /// Repetition `r` runs with seed `base_seed + r` in every cell.
    #[serde(default)]
    base_seed: Option<u64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize)]
struct IndexEntry {
    cell: usize,
    repetition: usize,
    seed: u64,
    assignments: Map<String, Value>,
    dir: PathBuf,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_grad_norm_sq: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SweepIndex {
    runs: Vec<IndexEntry>,
    succeeded: usize,
    failed: usize,
}

/// Cross product of the grid axes in key order.
fn cells(grid: &Map<String, Value>) -> CliResult<Vec<Map<String, Value>>> {
    let mut out = vec![Map::new()];
    for (key, values) in grid {
        let values = values.as_array().filter(|v| !v.is_empty()).ok_or_else(|| {
            CliError::Usage(format!("grid axis `{key}` must be a non-empty list"))
        })?;
        out = out
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.insert(key.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    Ok(out)
}

pub fn cmd_sweep(config: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let sweep: SweepConfig = serde_json::from_value(read_json(config)?)
        .map_err(|e| CliError::Usage(format!("invalid sweep config: {e}")))?;
    if sweep.grid.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    if sweep.repetitions == 0 {
        return Err(CliError::Usage("repetitions must be >= 1".into()));
    }
    let base_seed = match sweep.base_seed {
        Some(s) => s,
        None => sweep.base.get("seed").and_then(Value::as_u64).unwrap_or(0),
    };
    let cells = cells(&sweep.grid)?;
    let root = out.unwrap_or_else(|| default_out(config));
    fs::create_dir_all(&root)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", root.display())))?;

    let mut runs = Vec::new();
    for (c, assignments) in cells.iter().enumerate() {
        for rep in 0..sweep.repetitions {
            let seed = base_seed + rep as u64;
            let name = format!("cell{c:03}_rep{rep:02}");
            let dir = root.join(&name);
            let result = (|| {
                let mut value = sweep.base.clone();
                for (k, v) in assignments {
                    overrides::set_path(&mut value, k, v.clone()).map_err(CliError::Usage)?;
                }
                overrides::set_path(&mut value, "seed", Value::from(seed))
                    .map_err(CliError::Usage)?;
                execute(&parse_config(value)?, &dir)
            })();
            let mut entry = IndexEntry {
                cell: c,
                repetition: rep,
                seed,
                assignments: assignments.clone(),
                dir: PathBuf::from(&name),
                status: "ok",
                error: None,
                final_loss: None,
                final_grad_norm_sq: None,
            };
            match result {
                Ok(summary) => {
                    entry.final_loss = Some(summary.final_metrics.loss);
                    entry.final_grad_norm_sq = Some(summary.final_metrics.grad_norm_sq);
                }
                Err(e) => {
                    eprintln!("{name}: {}", e.message());
                    entry.status = "failed";
                    entry.error = Some(e.message().to_string());
                }
            }
            runs.push(entry);
        }
    }

    let failed = runs.iter().filter(|r| r.status == "failed").count();
    let index = SweepIndex {
        succeeded: runs.len() - failed,
        failed,
        runs,
    };
    let path = root.join("index.json");
    let f = File::create(&path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    serde_json::to_writer_pretty(f, &index)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    println!(
        "{}: {} runs, {} failed",
        root.display(),
        index.runs.len(),
        index.failed
    );
    if failed > 0 {
        Err(CliError::Runtime(format!("{failed} sweep runs failed")))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn cross_product_order() {
        let grid = json!({"workers": [1, 2], "batch_size": [8, 16, 32]});
        let c = cells(grid.as_object().unwrap()).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(
            c[0],
            json!({"batch_size": 8, "workers": 1})
                .as_object()
                .unwrap()
                .clone()
        );
        assert_eq!(
            c[5],
            json!({"batch_size": 32, "workers": 2})
                .as_object()
                .unwrap()
                .clone()
        );
        assert!(cells(json!({"workers": []}).as_object().unwrap()).is_err());
    }
}
