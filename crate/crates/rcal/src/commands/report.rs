//! `rcal report`: markdown rendering of the CSV outputs in a directory.

use std::fmt::Write as _;
use std::path::Path;

use super::Context as RunContext;
use crate::cli::ReportArgs;
use crate::error::{CliError, Result};
use crate::io;

pub const INPUTS: [&str; 4] = ["summary.csv", "table1.csv", "table5.csv", "fit.csv"];

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", header.iter().map(|_| "---|").collect::<String>());
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    let _ = writeln!(out);
}

fn fixed(cell: &str, digits: usize) -> String {
    match cell.parse::<f64>() {
        Ok(v) if !cell.is_empty() => format!("{v:.digits$}"),
        _ => cell.to_string(),
    }
}

/// Integers stay as written, other numbers get four decimals.
fn generic(cell: &str) -> String {
    if cell.parse::<i64>().is_ok() {
        return cell.to_string();
    }
    fixed(cell, 4)
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| CliError::format(path, format!("missing column `{name}`")))
}

/// Formatted statistics keyed by model label.
type PerModel = Vec<(String, Vec<String>)>;

/// Cells as rows, models side by side, one column pair per statistic.
fn render_summary(out: &mut String, path: &Path) -> Result<()> {
    let (header, rows) = io::read_table(path)?;
    let key_cols = ["p", "n1", "n2", "sigma2v"].map(|n| column(&header, n, path));
    let key_cols: Vec<usize> = key_cols.into_iter().collect::<Result<_>>()?;
    let model_col = column(&header, "model", path)?;
    let stats = [("bias_pct", "bias %", 2), ("sd", "SD", 3), ("se", "SE", 3), ("coverage", "coverage", 1)];
    let stat_cols: Vec<usize> = stats.iter().map(|(n, _, _)| column(&header, n, path)).collect::<Result<_>>()?;

    let mut models: Vec<String> = Vec::new();
    let mut cells: Vec<(Vec<String>, PerModel)> = Vec::new();
    for r in &rows {
        let cell = |i: usize| r.get(i).cloned().unwrap_or_default();
        let key: Vec<String> = key_cols.iter().map(|&i| cell(i)).collect();
        let model = cell(model_col);
        if !models.contains(&model) {
            models.push(model.clone());
        }
        let values = stat_cols.iter().zip(&stats).map(|(&i, (_, _, d))| fixed(&cell(i), *d)).collect();
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push((model, values)),
            None => cells.push((key, vec![(model, values)])),
        }
    }
    let mut head: Vec<String> = ["p", "n1", "n2", "σ²_V"].map(String::from).to_vec();
    for (_, label, _) in &stats {
        head.extend(models.iter().map(|m| format!("{label} {m}")));
    }
    let body: Vec<Vec<String>> = cells
        .iter()
        .map(|(key, per_model)| {
            let mut row = key.clone();
            for s in 0..stats.len() {
                for m in &models {
                    let v = per_model.iter().find(|(k, _)| k == m).map_or("", |(_, v)| v[s].as_str());
                    row.push(v.to_string());
                }
            }
            row
        })
        .collect();
    let _ = writeln!(out, "## Simulation summary (exposure coefficient)\n");
    md_table(out, &head, &body);
    Ok(())
}

fn render_generic(out: &mut String, title: &str, path: &Path) -> Result<()> {
    let (header, rows) = io::read_table(path)?;
    let body: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|c| generic(c)).collect()).collect();
    let _ = writeln!(out, "## {title}\n");
    md_table(out, &header, &body);
    Ok(())
}

/// Markdown for every known output present in `dir`.
pub fn render(dir: &Path) -> Result<String> {
    let present: Vec<&str> = INPUTS.iter().copied().filter(|f| dir.join(f).is_file()).collect();
    if present.is_empty() {
        return Err(CliError::format(dir, format!("no results found; expected at least one of {}", INPUTS.join(", "))));
    }
    let mut out = String::from("# rcal results\n\n");
    for f in present {
        let path = dir.join(f);
        match f {
            "summary.csv" => render_summary(&mut out, &path)?,
            "table1.csv" => render_generic(&mut out, "Measurement-error model selection", &path)?,
            "table5.csv" => render_generic(&mut out, "Out-of-sample prediction", &path)?,
            _ => render_generic(&mut out, "Calibrated hazard model", &path)?,
        }
    }
    Ok(out)
}

pub fn run(ctx: &RunContext, args: &ReportArgs) -> Result<()> {
    let dir = args.dir.as_deref().unwrap_or(&ctx.out);
    let text = render(dir)?;
    io::write_text(&dir.join("report.md"), &text)?;
    print!("{text}");
    Ok(())
}
