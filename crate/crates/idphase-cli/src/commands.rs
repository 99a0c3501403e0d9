//! The six pipeline commands. Each one reads inputs, runs the library, and
//! writes its artifacts into the configured output directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use idphase::diffeo::{conformal_reparam, ot_member, warp_field, DiffeoMap, WarpKind};
use idphase::ensemble::{run_ensemble, EnsembleConfig};
use idphase::phaseshift::{decode, synthesize_fringes, wrap, FringeTriple};
use idphase::raster::{load_field, save_field, save_pgm16, ScalarField, Units};
use idphase::reconstruct::{export_ply, phase_to_depth, PhaseDepthModel};
use idphase::simbench::{add_noise, gen_double_gaussian, run_benchmark, BenchSuite, Method};
use idphase::unwrap::UnwrapResult;
use serde::Serialize;

use crate::config::{parse_mobius, parse_roi, RunConfig};
use crate::CliError;

fn runtime(e: idphase::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

/// Renders the configured scene and writes five files: the absolute-phase
/// ground truth, its wrapped version, and the three fringe images the
/// projector would emit. Noise (if enabled) is applied to the phase before
/// rendering, so the truth file is exactly the field the fringes encode.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let clean = gen_double_gaussian(&cfg.scene).map_err(runtime)?;
    let truth = if cfg.noise.sigma > 0.0 {
        add_noise(&clean, &cfg.noise).map_err(runtime)?
    } else {
        clean
    };
    let wrapped = wrap(&truth);
    let fringes = synthesize_fringes(&truth, &cfg.fringe).map_err(runtime)?;

    save_field(&truth, out_path(cfg, "truth.pfm")).map_err(runtime)?;
    save_field(&wrapped, out_path(cfg, "wrapped.pfm")).map_err(runtime)?;
    for (i, img) in fringes.images.iter().enumerate() {
        save_field(img, out_path(cfg, &format!("fringe_{i}.pfm"))).map_err(runtime)?;
    }
    let shape = truth.shape();
    println!(
        "synth: wrote truth.pfm, wrapped.pfm, fringe_0..2.pfm ({}x{}) to {}",
        shape.width,
        shape.height,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Recovers wrapped phase, ambient level and contrast from a fringe triple.
pub fn cmd_decode(cfg: &RunConfig, paths: [&Path; 3]) -> Result<(), CliError> {
    let mut images = Vec::with_capacity(3);
    for p in paths {
        let mut img = load_field(p).map_err(runtime)?;
        img.set_units(Units::Intensity);
        images.push(img);
    }
    let triple = FringeTriple {
        images: images.try_into().expect("three images"),
    };
    let decoded = decode(&triple, cfg.decode_threshold).map_err(runtime)?;

    save_field(&decoded.wrapped, out_path(cfg, "wrapped.pfm")).map_err(runtime)?;
    save_field(&decoded.ambient, out_path(cfg, "ambient.pfm")).map_err(runtime)?;
    save_field(&decoded.modulation, out_path(cfg, "modulation.pfm")).map_err(runtime)?;
    let shape = decoded.wrapped.shape();
    println!(
        "decode: {} of {} pixels lit; wrote wrapped.pfm, ambient.pfm, modulation.pfm to {}",
        decoded.wrapped.valid_count(),
        shape.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct UnwrapStats<'a> {
    method: &'a str,
    width: usize,
    height: usize,
    valid_pixels: usize,
    energy: f64,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    congruence_residual: Option<f64>,
    seconds: f64,
}

/// Unwraps a wrapped-phase image and writes the absolute phase, the fringe
/// counts (offset-encoded 16-bit), and a JSON stats file.
pub fn cmd_unwrap(cfg: &RunConfig, input: &Path, method_name: &str) -> Result<(), CliError> {
    let method =
        Method::from_str(method_name).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut phi = load_field(input).map_err(runtime)?;
    phi.set_units(Units::Radians);
    let shape = phi.shape();

    let result: UnwrapResult = match method {
        Method::Idhier => {
            let ens = cfg
                .ensemble
                .clone()
                .unwrap_or_else(|| EnsembleConfig::default_for(shape));
            ens.validate(shape)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            run_ensemble(&phi, &ens, &cfg.unwrap)
                .map(|(r, _)| r)
                .map_err(runtime)?
        }
        other => other.run(&phi, &cfg.unwrap).map_err(runtime)?,
    };

    save_field(&result.phi_abs, out_path(cfg, "phi_abs.pfm")).map_err(runtime)?;
    // Counts are signed; PGM carries them shifted by 32768. Invalid pixels
    // store the zero count — validity lives in the phi_abs mask sidecar.
    let samples: Vec<u16> = result
        .k
        .labels()
        .iter()
        .map(|&k| (i64::from(k) + 32768).clamp(0, 65535) as u16)
        .collect();
    save_pgm16(shape, &samples, out_path(cfg, "counts.pgm")).map_err(runtime)?;

    let stats = UnwrapStats {
        method: method.name(),
        width: shape.width,
        height: shape.height,
        valid_pixels: result.phi_abs.valid_count(),
        energy: result.energy,
        iterations: result.iterations,
        congruence_residual: result.congruence_residual,
        seconds: result.seconds,
    };
    let json = serde_json::to_string_pretty(&stats)
        .map_err(|e| CliError::Runtime(format!("cannot serialize stats: {e}")))?;
    std::fs::write(out_path(cfg, "stats.json"), json + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write stats.json: {e}")))?;

    println!(
        "unwrap[{}]: energy {:.6}, {} iterations, {:.3}s; wrote phi_abs.pfm, counts.pgm, stats.json to {}",
        method.name(),
        result.energy,
        result.iterations,
        result.seconds,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Resamples a field through a rectangle→rectangle reparametrization:
/// either a disk automorphism conjugated by the conformal rectangle→disk
/// map, or an optimal-transport map concentrating resolution on regions of
/// interest.
pub fn cmd_warp(
    cfg: &RunConfig,
    input: &Path,
    mobius: Option<&str>,
    rois: &[String],
    kind: WarpKind,
    invert: bool,
) -> Result<(), CliError> {
    let mut field = load_field(input).map_err(runtime)?;
    if kind == WarpKind::Phase {
        field.set_units(Units::Radians);
    }
    let shape = field.shape();

    let map: DiffeoMap = match (mobius, rois.is_empty()) {
        (Some(text), true) => {
            let params = parse_mobius(text)?;
            params
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            conformal_reparam(shape, &params).map_err(runtime)?
        }
        (None, false) => {
            let specs = rois
                .iter()
                .map(|t| parse_roi(t))
                .collect::<Result<Vec<_>, _>>()?;
            for roi in &specs {
                roi.validate(shape)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
            ot_member(shape, &specs).map_err(runtime)?
        }
        _ => {
            return Err(CliError::Usage(
                "give exactly one map spec: --mobius THETA,RE,IM or one or more --roi".into(),
            ))
        }
    };
    let map = if invert { map.inverted() } else { map };

    let warped = warp_field(&field, &map, kind).map_err(runtime)?;
    save_field(&warped, out_path(cfg, "warped.pfm")).map_err(runtime)?;
    println!(
        "warp: {} of {} pixels covered; wrote warped.pfm to {}",
        warped.valid_count(),
        shape.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Runs a benchmark suite and writes the report as JSON plus a rendered
/// text table (also echoed to stdout).
pub fn cmd_bench(cfg: &RunConfig, suite_name: &str) -> Result<(), CliError> {
    let suite =
        BenchSuite::from_str(suite_name).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_benchmark(suite, &cfg.bench).map_err(runtime)?;

    let json = report.to_json().map_err(runtime)?;
    let text = report.render_text();
    let json_name = format!("bench_{}.json", suite.name());
    let text_name = format!("bench_{}.txt", suite.name());
    std::fs::write(out_path(cfg, &json_name), json + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {json_name}: {e}")))?;
    std::fs::write(out_path(cfg, &text_name), &text)
        .map_err(|e| CliError::Runtime(format!("cannot write {text_name}: {e}")))?;
    print!("{text}");
    println!("bench: wrote {json_name}, {text_name} to {}", cfg.out_dir.display());
    Ok(())
}

/// Converts an absolute-phase image to depth, back-projects through the
/// pinhole model, and writes an ASCII PLY point set.
pub fn cmd_reconstruct(
    cfg: &RunConfig,
    input: &Path,
    texture: Option<&Path>,
) -> Result<(), CliError> {
    let mut phi_abs = load_field(input).map_err(runtime)?;
    phi_abs.set_units(Units::Radians);
    let shape = phi_abs.shape();

    let model = cfg.depth.clone().unwrap_or_else(|| {
        PhaseDepthModel::simple(
            shape.width.max(shape.height) as f64,
            [
                0.5 * (shape.width as f64 - 1.0),
                0.5 * (shape.height as f64 - 1.0),
            ],
        )
    });
    let tex: Option<ScalarField> = match texture {
        Some(p) => {
            let mut t = load_field(p).map_err(runtime)?;
            t.set_units(Units::Intensity);
            Some(t)
        }
        None => None,
    };

    let depth = phase_to_depth(&phi_abs, &model).map_err(runtime)?;
    let ply = out_path(cfg, "mesh.ply");
    export_ply(&depth, tex.as_ref(), &model, &ply).map_err(runtime)?;
    println!(
        "reconstruct: {} vertices; wrote {}",
        depth.valid_count(),
        ply.display()
    );
    Ok(())
}
