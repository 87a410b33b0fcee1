use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::Path;

use railguard_core::ingest::{parse_stream, ClassLabel, FrameRecord};
use railguard_core::metrics::{evaluate_frames, GroundTruthFrame, MetricsReport};

use crate::args::{prepare_out_dir, require_file, EvaluateArgs, ReportFormat};
use crate::error::{CliError, CliResult};
use crate::report;

fn read_frames(path: &Path) -> CliResult<Vec<FrameRecord>> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot read `{}`: {e}", path.display())))?;
    let (_, frames) = parse_stream(BufReader::new(file)).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    frames
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn run(args: &EvaluateArgs) -> CliResult<MetricsReport> {
    require_file(&args.detections, "--detections")?;
    require_file(&args.gt, "--gt")?;
    if let Some(p) = &args.table_rows {
        require_file(p, "--table-rows")?;
    }
    if !(0.0..=1.0).contains(&args.iou) {
        return Err(CliError::Usage(format!("--iou must lie in [0, 1], got {}", args.iou)));
    }
    if let Some(dir) = &args.out {
        prepare_out_dir(dir)?;
    }

    let preds = read_frames(&args.detections)?;
    let gt = read_frames(&args.gt)?
        .iter()
        .map(GroundTruthFrame::from_frame)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.gt.display())))?;
    let class: ClassLabel = args.class.into();
    let set = evaluate_frames(&preds, &gt, args.iou, class)?;
    let report = MetricsReport::build(&set, args.iou, class);

    match &args.out {
        Some(dir) => {
            write(&dir.join("metrics.json"), &(report.to_json() + "\n"))?;
            write(&dir.join("pr_curve.csv"), &report.pr_csv())?;
            write(&dir.join("f1_curve.csv"), &report.f1_csv())?;
            if let Some(rows) = &args.table_rows {
                let rows = report::read_rows(rows)?;
                write(&dir.join("table.txt"), &report::render(&rows, args.table.into(), ReportFormat::Text)?)?;
                write(&dir.join("table.csv"), &report::render(&rows, args.table.into(), ReportFormat::Csv)?)?;
            }
        }
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{}", report.to_json()).map_err(|e| CliError::io("writing stdout", e))?;
        }
    }

    if set.ground_truth == 0 {
        log::warn!("ground truth has no `{class}` boxes; AP reported as 0");
        return Err(CliError::EmptyGroundTruth(format!(
            "ground truth `{}` contains no `{class}` boxes",
            args.gt.display()
        )));
    }
    Ok(report)
}
