use std::fs;
use std::io::{self, Write};
use std::path::Path;

use railguard_core::metrics::{render_comparison_csv, render_comparison_table, MethodRow, TableKind};

use crate::args::{require_file, ReportArgs, ReportFormat};
use crate::error::{CliError, CliResult};

/// Reads comparison rows from CSV. The first row is a header and is skipped;
/// numbers are kept as written so `85.30` still prints as `85.30`.
pub fn read_rows(path: &Path) -> CliResult<Vec<MethodRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read `{}`: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Parse(format!("{}: line {line}: {e}", path.display())))?;
        if rec.len() != 4 {
            return Err(CliError::Parse(format!(
                "{}: line {line}: expected 4 columns, found {}",
                path.display(),
                rec.len()
            )));
        }
        let row = MethodRow::parse(&rec[0], &rec[1], &rec[2], &rec[3])
            .map_err(|e| CliError::Parse(format!("{}: line {line}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn render(rows: &[MethodRow], kind: TableKind, format: ReportFormat) -> CliResult<String> {
    Ok(match format {
        ReportFormat::Text => render_comparison_table(rows, kind)?,
        ReportFormat::Csv => render_comparison_csv(rows, kind)?,
    })
}

pub fn run(args: &ReportArgs) -> CliResult<()> {
    require_file(&args.rows, "--rows")?;
    let rows = read_rows(&args.rows)?;
    let text = render(&rows, args.table.into(), args.format)?;
    match &args.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(format!("writing {}", p.display()), e)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("writing stdout", e)),
    }
}
