use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use ultra_core::datagen::gen_scene;
use ultra_core::metrics::{reconstruction_rmse, sre, wilcoxon_signed_rank_one_tailed};
use ultra_core::tuning::{best_cell, grid_search};
use ultra_core::unmixing::{evaluate_cost, fcls, unmix_ultra, DEFAULT_FCLS_TOL};
use ultra_core::{RunReport, SceneSpec, Tensor3, Termination, UltraConfig};

use crate::args::{EvalArgs, GridArgs, Method, Metric, RenderArgs, SimulateArgs, UnmixArgs, UnmixInputs, WilcoxonArgs};
use crate::error::CliError;
use crate::io;

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    spec: &'a SceneSpec,
    /// `null` for a noiseless scene.
    realized_snr_db: Option<f64>,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let spec = SceneSpec {
        rows: args.rows,
        cols: args.cols,
        endmembers: args.endmembers_count,
        bands: args.bands,
        pattern: args.pattern.into(),
        smoothness: args.smoothness,
        coherence: args.coherence,
        snr_db: args.snr_db,
        seed: args.seed,
    };
    let gt = gen_scene(&spec)?;
    io::write_cube(&args.out_cube, &gt.noisy)?;
    io::write_cube(&args.out_truth, gt.abundances.tensor())?;
    io::write_endmembers(&args.out_endmembers, &gt.endmembers)?;
    let sidecar = args.sidecar.clone().unwrap_or_else(|| with_suffix(&args.out_cube, ".json"));
    let realized = gt.realized_snr_db.is_finite().then_some(gt.realized_snr_db);
    io::write_json(&sidecar, &Sidecar { spec: &spec, realized_snr_db: realized })?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ultra_config(inputs: &UnmixInputs, lambda: f64, rank: usize, seed: u64) -> UltraConfig {
    let mut cfg = UltraConfig { outer_max_iters: inputs.max_outer, outer_rel_tol: inputs.tol, ..UltraConfig::new(lambda, rank) };
    cfg.cpd.seed = seed;
    cfg
}

pub fn unmix(args: &UnmixArgs) -> Result<(), CliError> {
    let cube = io::read_cube(&args.inputs.cube)?;
    let m = io::read_endmembers(&args.inputs.endmembers)?;
    let (abundances, report) = match args.method {
        Method::Fcls => {
            let start = Instant::now();
            let a = fcls(&cube, &m, DEFAULT_FCLS_TOL)?;
            let seconds = start.elapsed().as_secs_f64();
            let objective = evaluate_cost(&cube, &m, a.tensor(), &Tensor3::zeros(a.dims()), 0.0)?;
            let report = RunReport {
                method: "fcls".into(),
                lambda: 0.0,
                rank: None,
                objective_history: vec![objective],
                iterations: 1,
                termination: Termination::Converged,
                cpd_sweeps: Vec::new(),
                init_seconds: 0.0,
                a_step_seconds: seconds,
                q_step_seconds: 0.0,
                total_seconds: seconds,
            };
            (a, report)
        }
        Method::Ultra => {
            let lambda = args.lambda.ok_or_else(|| CliError::Usage("--method ultra needs --lambda".into()))?;
            let rank = args.rank.ok_or_else(|| CliError::Usage("--method ultra needs --rank".into()))?;
            let (a, _, report) = unmix_ultra(&cube, &m, &ultra_config(&args.inputs, lambda, rank, args.seed))?;
            (a, report)
        }
    };
    io::write_cube(&args.out, abundances.tensor())?;
    if let Some(path) = &args.report {
        io::write_json(path, &report)?;
    }
    Ok(())
}

/// `inf` for an exact estimate, otherwise six decimals.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY { "inf".into() } else { format!("{v:.6}") }
}

pub fn eval(args: &EvalArgs) -> Result<String, CliError> {
    let est = io::read_cube(&args.est)?;
    let (name, value) = match args.metric {
        Metric::Sre => {
            let truth = args.truth.as_ref().ok_or_else(|| CliError::Usage("--metric sre needs --truth".into()))?;
            ("sre", sre(&io::read_cube(truth)?, &est)?)
        }
        Metric::Rmse => {
            let (Some(cube), Some(m)) = (&args.cube, &args.endmembers) else {
                return Err(CliError::Usage("--metric rmse needs --cube and --endmembers".into()));
            };
            ("rmse", reconstruction_rmse(&io::read_cube(cube)?, &io::read_endmembers(m)?, &est)?)
        }
    };
    let text = format_metric(value);
    if let Some(path) = &args.csv {
        let run_id = args
            .run_id
            .clone()
            .unwrap_or_else(|| args.est.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        append_row(path, &[&run_id, name, &text])?;
    }
    Ok(text)
}

fn append_row(path: &Path, fields: &[&str]) -> Result<(), CliError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_err = |e: csv::Error| CliError::format(path, e.to_string());
    if fresh {
        w.write_record(["run_id", "metric", "value"]).map_err(to_err)?;
    }
    w.write_record(fields).map_err(to_err)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn gridsearch(args: &GridArgs) -> Result<String, CliError> {
    if args.lambda_grid.is_empty() || args.rank_grid.is_empty() || args.runs == 0 {
        return Err(CliError::Usage("--lambda-grid, --rank-grid and --runs must be non-empty".into()));
    }
    let cube = io::read_cube(&args.inputs.cube)?;
    let m = io::read_endmembers(&args.inputs.endmembers)?;
    let truth = io::read_cube(&args.truth)?;
    let seeds: Vec<u64> = (args.seed..args.seed + args.runs).collect();
    let base = ultra_config(&args.inputs, 1.0, 1, args.seed);
    let records = grid_search(&cube, &m, &truth, &args.lambda_grid, &args.rank_grid, &seeds, &base)?;

    let file = fs::File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &records {
        w.serialize(r).map_err(|e| CliError::format(&args.out, e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&args.out, e))?;

    let best = best_cell(&records).expect("grid is non-empty");
    Ok(format!(
        "best lambda={} rank={} median_sre_db={} median_rmse={:.6} runs={}",
        best.lambda,
        best.rank,
        format_metric(best.median_sre_db),
        best.median_rmse,
        best.runs
    ))
}

pub fn wilcoxon(args: &WilcoxonArgs) -> Result<String, CliError> {
    let a = io::read_values(&args.a)?;
    let b = io::read_values(&args.b)?;
    if a.len() != b.len() {
        return Err(CliError::Usage(format!("--a has {} values but --b has {}", a.len(), b.len())));
    }
    let result = wilcoxon_signed_rank_one_tailed(&a, &b, args.alpha)?;
    Ok(format!(
        "statistic {}\np-value {:.6e}\nn {}\n{} at alpha {}",
        result.statistic,
        result.p_value,
        result.n_effective,
        if result.reject_at_alpha { "reject" } else { "accept" },
        args.alpha
    ))
}

/// Blue at 0 through cyan, green and yellow to red at 1.
pub fn colormap(v: f64) -> [u8; 3] {
    let channel = |center: f64| ((1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [channel(3.0), channel(2.0), channel(1.0)]
}

/// Writes `abundance_<r>.png` for every map and returns the number of clamped values.
pub fn render(args: &RenderArgs) -> Result<usize, CliError> {
    let t = io::read_cube(&args.abundances)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let (n1, n2, r) = t.dims();
    let mut clamped = 0;
    for k in 0..r {
        let mut img = image::RgbImage::new(n2 as u32, n1 as u32);
        for i in 0..n1 {
            for j in 0..n2 {
                let v = t.get(i, j, k);
                let inside = (0.0..=1.0).contains(&v);
                if !inside {
                    clamped += 1;
                }
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                img.put_pixel(j as u32, i as u32, image::Rgb(colormap(v)));
            }
        }
        let path = args.out_dir.join(format!("abundance_{}.png", k + 1));
        img.save(&path).map_err(|e| match e {
            image::ImageError::IoError(io) => CliError::io(&path, io),
            other => CliError::format(&path, other.to_string()),
        })?;
    }
    Ok(clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints_and_middle() {
        assert_eq!(colormap(0.0), [0, 0, 128]);
        assert_eq!(colormap(1.0), [128, 0, 0]);
        assert_eq!(colormap(0.5), [128, 255, 128]);
        assert_eq!(colormap(0.25), [0, 128, 255]);
        assert_eq!(colormap(0.75), [255, 128, 0]);
    }

    #[test]
    fn metric_formatting() {
        assert_eq!(format_metric(f64::INFINITY), "inf");
        assert_eq!(format_metric(20.0), "20.000000");
    }
}
