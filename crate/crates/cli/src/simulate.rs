use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use railguard_core::ingest::write_stream;
use railguard_core::simgen::{breach_document, generate, Scenario};

use crate::args::{prepare_out_dir, require_file, Preset, SimulateArgs};
use crate::error::{CliError, CliResult};

fn scenario(args: &SimulateArgs) -> CliResult<Scenario> {
    if let Some(path) = &args.scenario {
        require_file(path, "--scenario")?;
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        return Scenario::from_json(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())));
    }
    if let Some(seed) = args.random_seed {
        return Ok(Scenario::randomized(seed));
    }
    match args.preset {
        Some(Preset::LinearApproach) => Ok(Scenario::linear_approach()),
        None => unreachable!("clap requires one scenario source"),
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> CliResult<()> {
    let ctx = |e| CliError::io(format!("writing {}", path.display()), e);
    let mut w = BufWriter::new(File::create(path).map_err(ctx)?);
    f(&mut w).and_then(|_| w.flush()).map_err(ctx)
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    if !(args.threshold_m.is_finite() && args.threshold_m > 0.0) {
        return Err(CliError::Usage(format!("--threshold-m must be > 0, got {}", args.threshold_m)));
    }
    if let Some(dir) = &args.out {
        prepare_out_dir(dir)?;
    }
    let s = scenario(args)?;
    let (header, frames, truth) = generate(&s);
    if !truth.clipped.is_empty() {
        log::warn!("{} box(es) were clipped to the frame or could not be projected", truth.clipped.len());
    }

    let Some(dir) = &args.out else {
        let mut out = BufWriter::new(io::stdout().lock());
        return write_stream(&mut out, &header, &frames)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io("writing stdout", e));
    };
    write_file(&dir.join("stream.jsonl"), |w| write_stream(w, &header, &frames))?;
    write_file(&dir.join("ground_truth.jsonl"), |w| write_stream(w, &header, &truth.frames))?;
    let doc = breach_document(&s, args.threshold_m);
    write_file(&dir.join("breaches.json"), |w| {
        writeln!(w, "{}", serde_json::to_string_pretty(&doc).expect("document serializes"))
    })?;
    write_file(&dir.join("scenario.json"), |w| writeln!(w, "{}", s.to_json()))?;
    write_file(&dir.join("calibration.json"), |w| writeln!(w, "{}", s.calibration.to_json()))?;
    if !truth.clipped.is_empty() {
        write_file(&dir.join("clipped.json"), |w| {
            writeln!(w, "{}", serde_json::to_string(&truth.clipped).expect("records serialize"))
        })?;
    }
    Ok(())
}
