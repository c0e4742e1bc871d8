use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use fao::drs::run_drs;
use fao::evaluation::{render_overlay, rmse, run_experiment, ControlGrid, ExperimentSpec, Method, Report, Sweep};
use fao::features::{detect_and_describe, Feature};
use fao::imaging::{gaussian_blur, load_image, save_image, synth_pair, textured_scene, SynthSpec};
use fao::pipeline::register;
use fao::{AffineTransform, Image};
use serde_json::json;

use crate::args::{read_text, CompareArgs, EvalArgs, FeaturesArgs, RegisterArgs, ReportArgs, SweepArgs, SynthArgs};
use crate::error::{CliError, CliResult};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load_transform(path: &Path) -> CliResult<AffineTransform> {
    Ok(AffineTransform::from_json(&read_text(path)?)?)
}

fn load_pair(fixed: &Path, moving: &Path) -> CliResult<(Image, Image)> {
    Ok((load_image(fixed)?, load_image(moving)?))
}

pub fn cmd_register(args: &RegisterArgs) -> CliResult<String> {
    let cfg = args.config.resolve()?;
    let (i1, i2) = load_pair(&args.fixed, &args.moving)?;
    let out = register(&i1, &i2, &cfg)?;
    // Everything is computed before the first file is written, so a failure
    // leaves no partial outputs behind.
    let overlay = match &args.overlay {
        Some(_) => Some(render_overlay(&i1, &i2, &out.transform)?),
        None => None,
    };
    write(&args.out, out.transform.to_json())?;
    if let Some(path) = &args.trace {
        write(path, out.result.trace.to_csv_string())?;
    }
    if let Some(path) = &args.slices {
        write(path, out.slices.to_json())?;
    }
    if let (Some(path), Some(o)) = (&args.overlay, overlay) {
        save_image(&o.image, path)?;
    }
    let first = out.result.trace.entries.first().map_or(f64::NAN, |e| e.objective);
    let last = out.result.trace.entries.last().map_or(f64::NAN, |e| e.objective);
    Ok(format!(
        "generations={} converged={} objective_initial={first:.6e} objective_final={last:.6e} slices={} proportion={:.4} matches={} inliers={} elapsed_ms={:.1}",
        out.result.generations,
        out.result.converged,
        out.slices.len(),
        out.slices.proportion(),
        out.matches,
        out.inliers,
        out.timings.total_ms,
    ))
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<String> {
    let truth = load_transform(&args.transform)?;
    let source = match (&args.source, args.scene) {
        (Some(path), _) => load_image(path)?,
        (None, Some(size)) if size >= 1 => textured_scene(size, size, args.seed),
        _ => return Err(CliError::Usage("give a source image or --scene SIZE >= 1".into())),
    };
    let pair = synth_pair(&SynthSpec::new(source, truth, args.looks, args.seed))?;
    let grid = ControlGrid::lattice(pair.fixed.width(), pair.fixed.height(), args.grid, &truth);
    let mut grid_csv = Vec::new();
    grid.write_csv(&mut grid_csv)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let ext = args.format.extension();
    save_image(&pair.fixed, args.out_dir.join(format!("fixed.{ext}")))?;
    save_image(&pair.moving, args.out_dir.join(format!("moving.{ext}")))?;
    write(&args.out_dir.join("truth.json"), truth.to_json())?;
    write(&args.out_dir.join("grid.csv"), grid_csv)?;
    Ok(format!("overlap={:.4} points={}", pair.overlap_fraction(), grid.len()))
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<String> {
    let h = load_transform(&args.transform)?;
    let grid = ControlGrid::load(&args.grid)?;
    Ok(format!("rmse_px={}", rmse(&h, &grid)))
}

/// One line per feature: x, y, scale, orientation, then the descriptor.
pub fn feature_dump(features: &[Feature]) -> String {
    let mut s = String::new();
    for f in features {
        write!(s, "{} {} {} {}", f.position.x, f.position.y, f.scale, f.orientation).unwrap();
        for v in &f.descriptor {
            write!(s, " {v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn cmd_features(args: &FeaturesArgs) -> CliResult<String> {
    let cfg = args.config.resolve()?;
    let smooth = |img: Image| {
        if cfg.feature_smoothing > 0.0 {
            gaussian_blur(&img, cfg.feature_smoothing)
        } else {
            img
        }
    };
    let i1 = smooth(load_image(&args.image)?);
    let i2 = match &args.moving {
        Some(p) => Some(smooth(load_image(p)?)),
        None => None,
    };
    let start = Instant::now();
    let (f1, f2, summary) = if args.drs {
        let out = run_drs(&i1, i2.as_ref().unwrap_or(&i1), &cfg.drs())?;
        let summary = json!({
            "n_lowres_matches": out.lowres.matches.len(),
            "n_squares": out.squares.len(),
            "n_features_1": out.features1.len(),
            "n_features_2": out.features2.len(),
            "elapsed_ms": out.elapsed_ms,
        });
        (out.features1, Some(out.features2), summary)
    } else {
        let f1 = detect_and_describe(&i1)?;
        let f2 = match &i2 {
            Some(img) => Some(detect_and_describe(img)?),
            None => None,
        };
        let summary = json!({
            "n_features_1": f1.len(),
            "n_features_2": f2.as_ref().map(Vec::len),
            "elapsed_ms": start.elapsed().as_secs_f64() * 1e3,
        });
        (f1, f2, summary)
    };
    if let Some(path) = &args.out {
        write(path, feature_dump(&f1))?;
    }
    if let Some(path) = &args.moving_out {
        let f2 = f2.as_deref().unwrap_or(&f1);
        write(path, feature_dump(f2))?;
    }
    Ok(summary.to_string())
}

fn emit_report(report: &Report, out: &ReportArgs) -> CliResult<String> {
    let csv = report.to_csv_string();
    if let Some(path) = &out.summary {
        write(path, report.summary_json())?;
    }
    match &out.out {
        Some(path) => {
            write(path, &csv)?;
            Ok(format!("rows={}", report.rows.len()))
        }
        None => Ok(csv.trim_end().to_string()),
    }
}

pub fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    let methods: Vec<Method> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse().map_err(|e: fao::Error| CliError::Usage(e.to_string())))
        .collect::<CliResult<_>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("no methods given".into()));
    }
    Ok(methods)
}

pub fn cmd_compare(args: &CompareArgs) -> CliResult<String> {
    let methods = parse_methods(&args.methods)?;
    let cfg = args.config.resolve()?;
    let grid = ControlGrid::load(&args.grid)?;
    let (i1, i2) = load_pair(&args.fixed, &args.moving)?;
    let spec = ExperimentSpec {
        config: cfg,
        ncc_window: args.window,
        ..ExperimentSpec::new(Sweep::Methods(methods))
    };
    emit_report(&run_experiment(&spec, &i1, &i2, &grid)?, &args.report)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<String> {
    let mut cfg = args.config.resolve()?;
    let (i1, i2) = load_pair(&args.fixed, &args.moving)?;
    let sweep = if !args.generations.is_empty() {
        Sweep::Generations(args.generations.clone())
    } else if !args.proportions.is_empty() {
        Sweep::Proportions(args.proportions.clone())
    } else {
        cfg.enforce_rate_bound = false;
        Sweep::Rates(args.rates.clone())
    };
    let grid = match (&args.grid, &sweep) {
        (Some(path), _) => ControlGrid::load(path)?,
        // Feature fidelity needs no reference points.
        (None, Sweep::Rates(_)) => ControlGrid::lattice(i1.width(), i1.height(), 1, &AffineTransform::IDENTITY),
        (None, _) => return Err(CliError::Usage("--grid is required for this sweep".into())),
    };
    let spec = ExperimentSpec {
        config: cfg,
        match_radius: args.radius,
        ..ExperimentSpec::new(sweep)
    };
    emit_report(&run_experiment(&spec, &i1, &i2, &grid)?, &args.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fao::Point;

    #[test]
    fn dump_layout() {
        let mut descriptor = [0.0f32; 128];
        descriptor[0] = 0.5;
        let f = Feature {
            position: Point::new(1.5, 2.0),
            scale: 1.6,
            orientation: 0.25,
            descriptor,
        };
        let dump = feature_dump(&[f]);
        let fields: Vec<&str> = dump.trim_end().split(' ').collect();
        assert_eq!(fields.len(), 132);
        assert_eq!(&fields[..5], ["1.5", "2", "1.6", "0.25", "0.5"]);
    }

    #[test]
    fn method_lists() {
        assert_eq!(parse_methods("fao,ncc").unwrap(), [Method::Fao, Method::Ncc]);
        assert_eq!(parse_methods("bogus").unwrap_err().exit_code(), 2);
        assert_eq!(parse_methods(",").unwrap_err().exit_code(), 2);
    }
}
