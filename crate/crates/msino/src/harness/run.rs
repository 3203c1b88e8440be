//! Experiment configuration, the training loop, metrics persistence, and
//! the diagnostic suites behind the CLI subcommands.

use crate::error::{Error, Result};
use crate::harness::datasets::{
    gen_mesh_dataset, gen_so3_dataset, gen_sphere_dataset, gen_toy_dataset, Pool,
};
use crate::harness::svg::line_chart;
use crate::linalg::jacobi_eigh;
use crate::loss::{
    evaluate_loss, evaluate_loss_value, LabeledBatch, LossWeights, MeshContext, Sample,
    SpectralMode,
};
use crate::manifold::{
    gauss, project_to_tangent, sample_uniform, GeometryPackage, ManifoldKind, ManifoldPoint,
    TangentVector,
};
use crate::mesh::{build_laplacian, icosphere, load_off, poincare_constant, LaplaceOperator, TriMesh};
use crate::net::{evaluate, NeedFlags, NetParams};
use crate::optim::{
    pl_running, sgd_step, two_step_newton, MetricsRow, NewtonConfig, ScheduleConfig, SgdOptions,
    TrainState,
};
use crate::scalar::norm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str =
    "epoch,total,val,sob,lap,lambda_k,rho_k,L_sob,lr_cap,sigma_sample,sigma_transport,descent_ok,mu_hat";

fn d_c_lambda() -> f64 { 1.0 }
fn d_lambda_max() -> f64 { 10.0 }
fn d_epsilon() -> f64 { 1e-8 }
fn d_eta_max() -> f64 { 0.1 }
fn d_ema_decay() -> f64 { 0.9 }

/// Schedule constants as they appear in the JSON config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSettings {
    #[serde(default = "d_c_lambda")]
    pub c_lambda: f64,
    #[serde(default = "d_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_eta_max")]
    pub eta_max: f64,
    #[serde(default = "d_ema_decay")]
    pub ema_decay: f64,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        ScheduleSettings {
            c_lambda: d_c_lambda(),
            lambda_max: d_lambda_max(),
            epsilon: d_epsilon(),
            eta_max: d_eta_max(),
            ema_decay: d_ema_decay(),
        }
    }
}

fn d_gn_damping() -> f64 { 1e-8 }
fn d_backtrack_shrink() -> f64 { 0.5 }
fn d_armijo_c() -> f64 { 1e-4 }
fn d_alpha_min() -> f64 { 1e-3 }
fn d_max_backtracks() -> usize { 30 }
fn d_hessian_fd_step() -> f64 { 1e-4 }

/// Newton constants as they appear in the JSON config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSettings {
    #[serde(default = "d_gn_damping")]
    pub gn_damping: f64,
    #[serde(default = "d_backtrack_shrink")]
    pub backtrack_shrink: f64,
    #[serde(default = "d_armijo_c")]
    pub armijo_c: f64,
    #[serde(default = "d_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "d_max_backtracks")]
    pub max_backtracks: usize,
    #[serde(default = "d_hessian_fd_step")]
    pub hessian_fd_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            gn_damping: d_gn_damping(),
            backtrack_shrink: d_backtrack_shrink(),
            armijo_c: d_armijo_c(),
            alpha_min: d_alpha_min(),
            max_backtracks: d_max_backtracks(),
            hessian_fd_step: d_hessian_fd_step(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeightsConfig {
    pub lambda: f64,
    pub beta: f64,
}

/// One experiment, fully pinned by this JSON-serializable description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// mesh_thickness | sphere_field | so3_geodesic | toy_convex
    pub task: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub net_dims: Vec<usize>,
    pub loss_weights: LossWeightsConfig,
    #[serde(default)]
    pub schedule: ScheduleSettings,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default)]
    pub schedule_enabled: bool,
    #[serde(default)]
    pub newton_after_epoch: Option<usize>,
    #[serde(default)]
    pub mesh_path: Option<String>,
    pub output_dir: String,
}

/// Paths of everything a run writes, plus whether it hit the divergence
/// guard (captured as a diagnostic row, not a crash).
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics_csv: PathBuf,
    pub config_echo: PathBuf,
    pub params_snapshot: PathBuf,
    pub plots: Vec<PathBuf>,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    MeshThickness,
    SphereField,
    So3Geodesic,
    ToyConvex,
}

fn parse_task(name: &str) -> Result<Task> {
    match name {
        "mesh_thickness" => Ok(Task::MeshThickness),
        "sphere_field" => Ok(Task::SphereField),
        "so3_geodesic" => Ok(Task::So3Geodesic),
        "toy_convex" => Ok(Task::ToyConvex),
        other => Err(Error::Config(format!(
            "unknown task '{other}' (expected mesh_thickness, sphere_field, so3_geodesic, toy_convex)"
        ))),
    }
}

/// 6-significant-digit cell formatting; booleans are written as 0/1 by the
/// row writer.
pub fn fmt_cell(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.5e}")
    }
}

fn csv_row(row: &MetricsRow<f64>, val: f64) -> String {
    // the logged cells must themselves satisfy lr_cap * L_sob <= 1: nudge
    // the rounded lr_cap down until the parsed product honors the cap
    let mut lr_cap = row.lr_cap;
    if row.l_sob.is_finite() && row.lr_cap.is_finite() {
        for _ in 0..4 {
            let cap_r: f64 = fmt_cell(lr_cap).parse().unwrap();
            let l_r: f64 = fmt_cell(row.l_sob).parse().unwrap();
            if cap_r * l_r <= (1.0f64).min(row.lr_cap * row.l_sob) + 1e-9 {
                lr_cap = cap_r;
                break;
            }
            lr_cap *= 1.0 - 2e-6;
        }
    }
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.epoch,
        fmt_cell(row.total),
        fmt_cell(val),
        fmt_cell(row.sob),
        fmt_cell(row.lap),
        fmt_cell(row.lambda_k),
        fmt_cell(row.rho_k),
        fmt_cell(row.l_sob),
        fmt_cell(lr_cap),
        fmt_cell(row.sigma_sample),
        fmt_cell(row.sigma_transport),
        if row.descent_ok { 1 } else { 0 },
        fmt_cell(row.mu_hat),
    )
}

fn validate(cfg: &ExperimentConfig) -> Result<Task> {
    let task = parse_task(&cfg.task)?;
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be >= 1".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if cfg.net_dims.len() < 2 {
        return Err(Error::Config("net_dims needs at least input and output".into()));
    }
    let ambient = match task {
        Task::MeshThickness | Task::SphereField => 3,
        Task::So3Geodesic => 9,
        Task::ToyConvex => cfg.net_dims[0],
    };
    if cfg.net_dims[0] != ambient {
        return Err(Error::Config(format!(
            "net input dim {} does not match the task's ambient dim {}",
            cfg.net_dims[0], ambient
        )));
    }
    if *cfg.net_dims.last().unwrap() != 1 {
        return Err(Error::Config("all built-in tasks are scalar (last dim 1)".into()));
    }
    if cfg.loss_weights.lambda < 0.0 || cfg.loss_weights.beta < 0.0 {
        return Err(Error::Config("lambda and beta must be >= 0".into()));
    }
    if cfg.loss_weights.beta > 0.0 && task != Task::MeshThickness {
        return Err(Error::Config("beta > 0 requires the mesh task".into()));
    }
    Ok(task)
}

fn toy_geometry(pool: &Pool, d: usize) -> Result<GeometryPackage<f64>> {
    let q = d + 1;
    let mut h = vec![0.0; q * q];
    let n = pool.train_idx.len() as f64;
    for &i in &pool.train_idx {
        let z: Vec<f64> = pool.samples[i]
            .point
            .coords
            .iter()
            .copied()
            .chain(std::iter::once(1.0))
            .collect();
        for a in 0..q {
            for b in 0..q {
                h[a * q + b] += z[a] * z[b] / n;
            }
        }
    }
    let (evals, _) = jacobi_eigh(&h, q);
    let kappa = (2.0 * evals[0]).max(1e-12);
    GeometryPackage::new(2.0 * evals[q - 1], 1.0 / kappa.sqrt(), 1.0, kappa)
}

/// Execute one experiment end-to-end and persist its artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let task = validate(cfg)?;
    let out = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(out)?;

    // dataset (and mesh operator for the mesh task)
    let mesh_data: Option<(TriMesh<f64>, LaplaceOperator<f64>)> = if task == Task::MeshThickness {
        let mesh = match &cfg.mesh_path {
            Some(p) => {
                let f = std::fs::File::open(p)?;
                load_off(std::io::BufReader::new(f))?
            }
            None => icosphere(4),
        };
        let op = build_laplacian(&mesh)?;
        Some((mesh, op))
    } else {
        None
    };
    let pool = match task {
        Task::SphereField => gen_sphere_dataset(cfg.seed, 4096)?,
        Task::MeshThickness => {
            let (mesh, op) = mesh_data.as_ref().unwrap();
            gen_mesh_dataset(cfg.seed, mesh, op)?
        }
        Task::So3Geodesic => gen_so3_dataset(cfg.seed, 1000)?,
        Task::ToyConvex => gen_toy_dataset(cfg.seed, cfg.net_dims[0], 256)?,
    };

    let geo = match task {
        Task::SphereField => GeometryPackage::default_for(
            ManifoldKind::Sphere2,
            1.0 / 2f64.sqrt(),
            std::f64::consts::PI,
            2.0,
        ),
        Task::MeshThickness => {
            let (mesh, op) = mesh_data.as_ref().unwrap();
            let (p, lam2) = poincare_constant(op)?;
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for v in &mesh.vertices {
                for d in 0..3 {
                    lo[d] = lo[d].min(v[d]);
                    hi[d] = hi[d].max(v[d]);
                }
            }
            let diam = (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt();
            GeometryPackage::new(1.0, p, diam, lam2)?
        }
        Task::So3Geodesic => GeometryPackage::default_for(
            ManifoldKind::SO3,
            1.0,
            std::f64::consts::SQRT_2 * std::f64::consts::PI,
            1.0,
        ),
        Task::ToyConvex => toy_geometry(&pool, cfg.net_dims[0])?,
    };
    let mode = if task == Task::So3Geodesic { SpectralMode::So3 } else { SpectralMode::Generic };

    let sched = ScheduleConfig::new(
        cfg.schedule.c_lambda,
        cfg.schedule.lambda_max,
        cfg.schedule.epsilon,
        cfg.schedule.eta_max,
        cfg.schedule.ema_decay,
    )?;
    let ncfg = NewtonConfig {
        gn_damping: cfg.newton.gn_damping,
        backtrack_shrink: cfg.newton.backtrack_shrink,
        armijo_c: cfg.newton.armijo_c,
        alpha_min: cfg.newton.alpha_min,
        max_backtracks: cfg.newton.max_backtracks,
        hessian_fd_step: cfg.newton.hessian_fd_step,
    };
    let weights = LossWeights::new(cfg.loss_weights.lambda, cfg.loss_weights.beta)?;
    let net = if cfg.net_dims.len() >= 3 {
        NetParams::init(&cfg.net_dims, cfg.seed)?
    } else {
        NetParams::init_any(&cfg.net_dims, cfg.seed)
    };
    let mut state = TrainState::new(net, &sched);

    // config echo first, so even a diverged run documents itself
    let config_echo = out.join("config_echo.json");
    std::fs::write(&config_echo, serde_json::to_string_pretty(cfg).unwrap())?;

    let mut csv = vec![CSV_HEADER.to_string()];
    let mut series_total = Vec::new();
    let mut series_lambda = Vec::new();
    let mut series_rho = Vec::new();
    let mut series_lsob = Vec::new();
    let mut val_value_only = Vec::new();
    let mut val_full = Vec::new();
    let mut prev_epoch_total: Option<f64> = None;
    let mut diverged = false;
    let full_batch = cfg.batch_size >= pool.train_idx.len();
    let val_wv = LossWeights::new(0.0, 0.0)?;

    'epochs: for epoch in 1..=cfg.epochs {
        let newton_phase = cfg.newton_after_epoch.map_or(false, |e| epoch > e);
        let mut last_row: Option<MetricsRow<f64>> = None;
        if newton_phase {
            let ctx = mesh_data.as_ref().map(|(m, op)| MeshContext::new(m, op));
            let batch = pool.batch(&pool.train_idx, ctx);
            let lam = if cfg.schedule_enabled { state.lambda_k } else { weights.lambda };
            let w_k = LossWeights::new(lam, weights.beta)?;
            let rep =
                two_step_newton(&mut state, &batch, &w_k, &geo, mode, &ncfg, None)?;
            let bd = evaluate_loss(&state.params, &batch, &w_k)?;
            let probe: Vec<Vec<f64>> =
                batch.samples.iter().map(|s| s.point.coords.clone()).collect();
            let l = crate::loss::l_sob(&state.params, &geo, lam, mode, Some(&probe))?;
            last_row = Some(MetricsRow {
                epoch,
                total: bd.total,
                val: bd.value_term,
                sob: bd.sobolev_term,
                lap: bd.laplace_term,
                lambda_k: lam,
                rho_k: rep.rho_k,
                l_sob: l,
                lr_cap: sched.eta_max.min(1.0 / l),
                sigma_sample: 0.0,
                sigma_transport: 0.0,
                descent_ok: !rep.skipped,
                mu_hat: pl_running(&state.losses, &state.grad_norms, 0.0),
            });
        } else {
            let mut order = pool.train_idx.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64),
            );
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let n_chunks = order.len().div_ceil(cfg.batch_size);
            for (ci, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let ctx = mesh_data.as_ref().map(|(m, op)| MeshContext::new(m, op));
                let batch = pool.batch(chunk, ctx);
                let opts = SgdOptions {
                    adapt_lambda: cfg.schedule_enabled,
                    mode,
                    check_descent: full_batch,
                    compute_noise: ci + 1 == n_chunks && chunk.len() >= 2,
                    epoch,
                    loss_floor: 0.0,
                };
                match sgd_step(&mut state, &batch, &weights, &geo, &sched, &opts) {
                    Ok(row) => last_row = Some(row),
                    Err(Error::Divergence { loss }) => {
                        // captured: log the diagnostic row and stop cleanly
                        let row = *state.history.last().unwrap();
                        csv.push(csv_row(&row, f64::NAN));
                        series_total.push(loss);
                        diverged = true;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let mut row = last_row.expect("epoch produced no step");
        row.epoch = epoch;
        if !newton_phase {
            // re-measure the loss on the full training set so the epoch row
            // (and rho_k) reflects progress, not last-minibatch noise
            let ctx = mesh_data.as_ref().map(|(m, op)| MeshContext::new(m, op));
            let train_batch = pool.batch(&pool.train_idx, ctx);
            let w_k = LossWeights::new(row.lambda_k, weights.beta)?;
            let bd = evaluate_loss(&state.params, &train_batch, &w_k)?;
            row.total = bd.total;
            row.sob = bd.sobolev_term;
            row.lap = bd.laplace_term;
        }
        row.rho_k = match prev_epoch_total {
            Some(prev) if prev.abs() > 1e-300 => row.total / prev,
            _ => 1.0,
        };
        prev_epoch_total = Some(row.total);

        // validation losses on the held-out split: headline Val is the
        // value-only interpretation; the full Sobolev variant goes to the
        // run summary
        let ctx = mesh_data.as_ref().map(|(m, op)| MeshContext::new(m, op));
        let val_batch = pool.batch(&pool.val_idx, ctx);
        let vv = evaluate_loss_value(&state.params, &val_batch, &val_wv)?;
        let w_k = LossWeights::new(row.lambda_k, weights.beta)?;
        let vf = evaluate_loss_value(&state.params, &val_batch, &w_k)?;
        val_value_only.push(vv);
        val_full.push(vf);

        csv.push(csv_row(&row, vv));
        series_total.push(row.total);
        series_lambda.push(row.lambda_k);
        series_rho.push(row.rho_k);
        series_lsob.push(row.l_sob);
    }

    let metrics_csv = out.join("metrics.csv");
    let mut f = std::fs::File::create(&metrics_csv)?;
    for line in &csv {
        writeln!(f, "{line}")?;
    }
    let params_snapshot = out.join("params.bin");
    state.params.save(&params_snapshot)?;
    let plots = vec![
        out.join("total_loss.svg"),
        out.join("lambda_k.svg"),
        out.join("rho_k.svg"),
        out.join("l_sob.svg"),
    ];
    line_chart(&plots[0], "total loss vs epoch", &series_total)?;
    line_chart(&plots[1], "lambda_k vs epoch", &series_lambda)?;
    line_chart(&plots[2], "rho_k vs epoch", &series_rho)?;
    line_chart(&plots[3], "L_sob vs epoch", &series_lsob)?;
    let summary = serde_json::json!({
        "note": "synthetic data generated at the published sizes; the original measurements are unpublished, so absolute loss values are not comparable",
        "val_value_only": val_value_only,
        "val_full_sobolev": val_full,
        "diverged": diverged,
    });
    std::fs::write(out.join("run_summary.json"), serde_json::to_string_pretty(&summary).unwrap())?;

    Ok(RunArtifacts { metrics_csv, config_echo, params_snapshot, plots, diverged })
}

/// 50-case finite-difference audit of the analytic loss gradient across
/// tasks, lambda in {0, 0.5, 10}, beta in {0, 1e-3}; returns the worst
/// relative error.
pub fn gradient_fd_suite(seed: u64) -> Result<f64> {
    let mesh = icosphere::<f64>(1);
    let op = build_laplacian(&mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas = [0.0, 0.5, 10.0];
    let mut worst: f64 = 0.0;
    for case in 0..50usize {
        let lambda = lambdas[case % 3];
        let on_mesh = case % 3 == 2;
        let beta = if on_mesh && case % 2 == 0 { 1e-3 } else { 0.0 };
        let w = LossWeights::new(lambda, beta)?;
        let (net, batch) = if on_mesh {
            let net = NetParams::<f64>::init(&[3, 6, 2], case as u64)?;
            let ctx = MeshContext::new(&mesh, &op);
            let n = mesh.vertices.len();
            let b = 6;
            let samples: Vec<Sample<f64>> = (0..b)
                .map(|i| {
                    let v = (i * 11 + case) % n;
                    Sample {
                        point: ManifoldPoint::new(
                            ManifoldKind::EuclideanChart(3),
                            mesh.vertices[v].to_vec(),
                        )
                        .unwrap(),
                        vertex: Some(v),
                    }
                })
                .collect();
            let values: Vec<f64> = (0..b * 2).map(|_| gauss::<f64, _>(&mut rng)).collect();
            let grads = Some(
                samples
                    .iter()
                    .map(|s| {
                        let nrm = ctx.normals[s.vertex.unwrap()];
                        (0..2)
                            .map(|_| {
                                let raw =
                                    [gauss::<f64, _>(&mut rng), gauss(&mut rng), gauss(&mut rng)];
                                let ip: f64 =
                                    raw.iter().zip(&nrm).map(|(a, b)| a * b).sum();
                                let comps: Vec<f64> =
                                    (0..3).map(|d| raw[d] - ip * nrm[d]).collect();
                                TangentVector::new(s.point.clone(), comps).unwrap()
                            })
                            .collect()
                    })
                    .collect(),
            );
            (net, LabeledBatch { samples, values, m: 2, grads, mesh: Some(ctx) })
        } else if case % 2 == 0 {
            let net = NetParams::<f64>::init(&[3, 7, 2], case as u64)?;
            let pts = sample_uniform::<f64, _>(ManifoldKind::Sphere2, &mut rng, 5);
            let samples: Vec<Sample<f64>> =
                pts.iter().map(|p| Sample { point: p.clone(), vertex: None }).collect();
            let values: Vec<f64> = (0..10).map(|_| gauss::<f64, _>(&mut rng)).collect();
            let grads = Some(
                samples
                    .iter()
                    .map(|s| {
                        (0..2)
                            .map(|_| {
                                let raw =
                                    [gauss::<f64, _>(&mut rng), gauss(&mut rng), gauss(&mut rng)];
                                project_to_tangent(&s.point, &raw).unwrap()
                            })
                            .collect()
                    })
                    .collect(),
            );
            (net, LabeledBatch { samples, values, m: 2, grads, mesh: None })
        } else {
            let net = NetParams::<f64>::init(&[9, 6, 2], case as u64)?;
            let pts = sample_uniform::<f64, _>(ManifoldKind::SO3, &mut rng, 4);
            let samples: Vec<Sample<f64>> =
                pts.iter().map(|p| Sample { point: p.clone(), vertex: None }).collect();
            let values: Vec<f64> = (0..8).map(|_| gauss::<f64, _>(&mut rng)).collect();
            let grads = Some(
                samples
                    .iter()
                    .map(|s| {
                        (0..2)
                            .map(|_| {
                                TangentVector::new(
                                    s.point.clone(),
                                    vec![
                                        gauss::<f64, _>(&mut rng),
                                        gauss(&mut rng),
                                        gauss(&mut rng),
                                    ],
                                )
                                .unwrap()
                            })
                            .collect()
                    })
                    .collect(),
            );
            (net, LabeledBatch { samples, values, m: 2, grads, mesh: None })
        };
        let out = evaluate_loss(&net, &batch, &w)?;
        let p = net.n_params();
        let theta = net.flatten();
        let h = 1e-6;
        let gmax = out.grad_theta.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
        for k in (0..p).step_by((p / 11).max(1)) {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let mut np = net.clone();
            let mut nm = net.clone();
            np.unflatten(&tp)?;
            nm.unflatten(&tm)?;
            let fp = evaluate_loss(&np, &batch, &w)?.total;
            let fm = evaluate_loss(&nm, &batch, &w)?.total;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - out.grad_theta[k]).abs() / gmax.max(fd.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Two-step Newton contraction demo on the teacher-student toy with a known
/// optimum; returns the per-iteration parameter errors e_k.
pub fn newton_demo() -> Result<Vec<f64>> {
    let teacher: NetParams<f64> = NetParams {
        dims: vec![1, 3, 1],
        weights: vec![vec![2.0, -1.5, 0.8], vec![1.0, 0.8, -0.7]],
        biases: vec![vec![0.5, -0.3, 0.9], vec![0.1]],
        seed: 0,
    };
    let xs: Vec<Vec<f64>> = (0..21).map(|i| vec![-2.0 + 4.0 * i as f64 / 20.0]).collect();
    let mut samples = Vec::new();
    let mut values = Vec::new();
    let mut grads = Vec::new();
    for x in &xs {
        let bundle = evaluate(
            &teacher,
            x,
            NeedFlags { input_jacobian: true, ..NeedFlags::default() },
        )?;
        let point = ManifoldPoint::new(ManifoldKind::EuclideanChart(1), x.clone())?;
        values.push(bundle.value[0]);
        grads.push(vec![TangentVector::new(point.clone(), bundle.input_jacobian.clone())?]);
        samples.push(Sample { point, vertex: None });
    }
    let batch = LabeledBatch { samples, values, m: 1, grads: Some(grads), mesh: None };
    let theta_star = teacher.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut dir: Vec<f64> = (0..theta_star.len()).map(|_| gauss::<f64, _>(&mut rng)).collect();
    let dn = norm(&dir);
    for x in dir.iter_mut() {
        *x *= 1e-2 / dn;
    }
    let theta0: Vec<f64> = theta_star.iter().zip(&dir).map(|(a, b)| a + b).collect();
    let mut student = teacher.clone();
    student.unflatten(&theta0)?;
    let geo = GeometryPackage::new(50.0, 1.0, 1.0, 1.0)?;
    let sched = ScheduleConfig::default();
    let ncfg = NewtonConfig::default();
    let w = LossWeights::new(0.5, 0.0)?;
    let mut state = TrainState::new(student, &sched);
    let mut errors = vec![{
        let mut s = 0.0;
        for (a, b) in state.params.flatten().iter().zip(&theta_star) {
            s += (a - b) * (a - b);
        }
        s.sqrt()
    }];
    for _ in 0..8 {
        two_step_newton(
            &mut state,
            &batch,
            &w,
            &geo,
            SpectralMode::Generic,
            &ncfg,
            Some(&theta_star),
        )?;
        let mut s = 0.0;
        for (a, b) in state.params.flatten().iter().zip(&theta_star) {
            s += (a - b) * (a - b);
        }
        errors.push(s.sqrt());
        if *errors.last().unwrap() <= 1e-13 {
            break;
        }
    }
    Ok(errors)
}
