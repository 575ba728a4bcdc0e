//! Command bodies shared by the binary and the tests.

use std::fmt;
use std::path::Path;

use gma3d_core::flowmetrics::evaluate_split;
use gma3d_core::numkern::ParamSet;
use gma3d_core::synthgen::{generate_scene, SyntheticScene};
use gma3d_core::trainer::{
    default_check_config, grad_check, run_ablation, run_occlusion_experiment, train_on,
    ExperimentReport, FlowModel, GradCheckOptions, GradCheckReport,
};
use gma3d_core::Error;

use crate::container::TensorContainer;
use crate::report::{ablation_table, render_gradcheck, render_report, report_body, split_lines};
use crate::runconfig::RunConfig;
use crate::scene_io::{
    flow_from_container, flow_to_container, scene_from_container, scene_to_container,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

/// Discrepancy at or above which `gradcheck` fails.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Format(_) => EXIT_IO,
            Error::Divergence { .. } | Error::NonFinite { .. } => EXIT_DIVERGENCE,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())).into())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())).into())
}

pub fn params_container(model: &FlowModel) -> CliResult<TensorContainer> {
    let mut c = TensorContainer::new();
    for (name, t) in model.named_tensors() {
        c.push(&name, t)?;
    }
    Ok(c)
}

pub fn load_scene(path: &Path) -> CliResult<SyntheticScene> {
    Ok(scene_from_container(&TensorContainer::read(path)?)?)
}

/// Generates the configured scene and writes it to `out`.
pub fn cmd_gen(config: &Path, out: &Path) -> CliResult<SyntheticScene> {
    let cfg = RunConfig::load(config)?;
    let scene = generate_scene(&cfg.train.scene)?;
    scene_to_container(&scene)?.write(out)?;
    Ok(scene)
}

/// Trains on a scene file; writes `report.txt`, `params.gtc` and `pred.gtc`.
pub fn cmd_train(config: &Path, scene: &Path, out_dir: &Path) -> CliResult<ExperimentReport> {
    let cfg = RunConfig::load(config)?;
    let scene = load_scene(scene)?;
    if scene.context.cols() != cfg.train.scene.context_dim
        || scene.motion_in.cols() != cfg.train.scene.motion_dim
    {
        return Err(Error::Config(format!(
            "scene features are {}/{} wide, config says {}/{}",
            scene.context.cols(),
            scene.motion_in.cols(),
            cfg.train.scene.context_dim,
            cfg.train.scene.motion_dim
        ))
        .into());
    }
    let report = train_on(&cfg.train, &scene, "train")?;
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("report.txt"), &render_report(&report, &cfg))?;
    params_container(&report.model)?.write(&out_dir.join("params.gtc"))?;
    flow_to_container(&report.prediction)?.write(&out_dir.join("pred.gtc"))?;
    Ok(report)
}

/// Metrics of a predicted flow file against a scene, as `key=value` lines.
pub fn cmd_eval(pred: &Path, scene: &Path) -> CliResult<String> {
    let flow = flow_from_container(&TensorContainer::read(pred)?)?;
    let scene = load_scene(scene)?;
    if flow.len() != scene.len() {
        return Err(Error::Config(format!(
            "prediction has {} points, scene has {}",
            flow.len(),
            scene.len()
        ))
        .into());
    }
    let split = evaluate_split(&flow, &scene.gt_flow, &scene.occlusion_mask)?;
    let mut out = String::new();
    split_lines("", &split, &mut out);
    Ok(out)
}

/// Gradient check; fails with the verification exit code above tolerance.
pub fn cmd_gradcheck(
    config: Option<&Path>,
    inject_fault: bool,
) -> CliResult<(GradCheckReport, String)> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig {
            train: default_check_config(),
            gradcheck: GradCheckOptions::default(),
        },
    };
    let opts = GradCheckOptions {
        inject_fault,
        ..cfg.gradcheck
    };
    let report = grad_check(&cfg.train, &opts)?;
    let text = render_gradcheck(&report, GRADCHECK_TOLERANCE);
    if report.max_discrepancy >= GRADCHECK_TOLERANCE {
        return Err(CliError {
            code: EXIT_VERIFICATION,
            message: format!(
                "gradient check failed: discrepancy {:e} in {}\n{text}",
                report.max_discrepancy, report.worst_tensor
            ),
        });
    }
    Ok((report, text))
}

/// Five-variant ablation; writes `ablation.txt` (one block per variant) and
/// `table.txt`, returns the table.
pub fn cmd_ablate(config: &Path, out_dir: &Path) -> CliResult<(Vec<ExperimentReport>, String)> {
    let cfg = RunConfig::load(config)?;
    let reports = run_ablation(&cfg.train)?;
    let blocks: Vec<String> = reports.iter().map(report_body).collect();
    let table = ablation_table(&reports);
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("ablation.txt"), &blocks.join("\n"))?;
    write_text(&out_dir.join("table.txt"), &table)?;
    Ok((reports, table))
}

/// Full model against the frozen-gate baseline; writes `occlusion.txt`.
pub fn cmd_experiment(config: &Path, out_dir: &Path) -> CliResult<String> {
    let cfg = RunConfig::load(config)?;
    let cmp = run_occlusion_experiment(&cfg.train)?;
    let text = format!("{}\n{}", report_body(&cmp.full), report_body(&cmp.baseline));
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("occlusion.txt"), &text)?;
    Ok(ablation_table(&[cmp.full, cmp.baseline]))
}
