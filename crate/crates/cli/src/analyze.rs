use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use railguard_core::ingest::{parse_stream, FrameRecord, IngestError};
use railguard_core::pipeline::{Pipeline, RunSummary};

use crate::args::{open_input, prepare_out_dir, require_file, AnalyzeArgs};
use crate::error::{CliError, CliResult};
use crate::overlay::OverlayFrame;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

pub fn run(args: &AnalyzeArgs) -> CliResult<RunSummary> {
    // Everything is checked before the first frame is read.
    if args.detections != "-" {
        require_file(Path::new(&args.detections), "--detections")?;
    }
    args.pipeline.check_paths()?;
    let cfg = args.pipeline.config()?;
    if let Some(dir) = &args.out {
        prepare_out_dir(dir)?;
    }
    let cal = args.pipeline.calibration()?;

    let input = open_input(&args.detections)?;
    let (header, frames) = parse_stream(input)?;

    let stdout = io::stdout();
    let (mut alerts, mut statuses): (Box<dyn Write>, Option<Box<dyn Write>>) = match &args.out {
        Some(dir) => (
            Box::new(create(&dir.join("alerts.jsonl"))?),
            if args.emit_status {
                Some(Box::new(create(&dir.join("statuses.jsonl"))?))
            } else {
                None
            },
        ),
        // Statuses share stdout, each frame's statuses ahead of its alerts.
        None => (Box::new(BufWriter::new(stdout.lock())), None),
    };
    let status_to_alerts = args.emit_status && args.out.is_none();
    let mut overlay = args.overlay.as_deref().map(create).transpose()?;

    let mut pipeline = Pipeline::new(header.source_id.clone(), cal, cfg.clone())?;
    let sink_err = |e: io::Error| CliError::io("writing output", e);
    for frame in frames {
        let frame: FrameRecord = frame.map_err(|e: IngestError| CliError::from(e))?;
        let out = pipeline.process(&frame);
        if args.emit_status {
            let w: &mut dyn Write = match statuses.as_mut() {
                Some(w) => w.as_mut(),
                None => alerts.as_mut(),
            };
            for s in out.statuses() {
                writeln!(w, "{}", s.to_json_line()).map_err(sink_err)?;
            }
        }
        for e in &out.events {
            log::info!("{} {} at frame {}", e.kind.as_str(), e.object_key, e.frame_index);
            writeln!(alerts, "{}", e.to_json_line()).map_err(sink_err)?;
        }
        if !out.events.is_empty() || status_to_alerts {
            alerts.flush().map_err(sink_err)?;
        }
        if let Some(w) = overlay.as_mut() {
            writeln!(w, "{}", OverlayFrame::build(&frame, &out, &cfg).to_json_line()).map_err(sink_err)?;
        }
    }
    alerts.flush().map_err(sink_err)?;
    if let Some(w) = statuses.as_mut() {
        w.flush().map_err(sink_err)?;
    }
    if let Some(w) = overlay.as_mut() {
        w.flush().map_err(sink_err)?;
    }

    let summary = pipeline.summary();
    if summary.unknown_distance > 0 {
        log::warn!(
            "{} object(s) had no usable distance ({} frame(s) without a track, {} horizon failure(s))",
            summary.unknown_distance,
            summary.frames_without_track,
            summary.horizon_failures
        );
    }
    if let Some(dir) = &args.out {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(dir.join("summary.json"), text + "\n").map_err(|e| CliError::io("writing summary.json", e))?;
    }
    log::info!(
        "{} frames, {} breaches, {} alerts raised, {} cleared",
        summary.frames,
        summary.breaches,
        summary.alerts_raised,
        summary.alerts_cleared
    );
    Ok(summary)
}
