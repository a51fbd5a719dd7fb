//! Command-line entry points for the staged artery simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cvsim::config::RunConfig;
use cvsim::driver::{
    run_diameter_study, run_thickness_study, NoObserver, RunResult, Simulation, StepObserver,
    StepRecord, N_LAYERS, N_STATIONS,
};
use cvsim::export::{
    export_fields, write_run_bundle, write_study_csv,
};
use cvsim::solve::Model;
use cvsim::stent::{load_manifest, stent_succeeds, StentVerdict};

#[derive(Parser)]
#[command(
    name = "cvsim",
    about = "Staged finite-element simulation of arterial vasospasm and its mechanical treatment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full staged simulation (load, homeostasis, vasospasm,
    /// treatment) and write the result tables.
    Run(RunArgs),
    /// Parameter studies over geometry.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Evaluate stent curves against a required (diameter, pressure) point.
    StentEval(StentArgs),
    /// Run the independent verification oracles and print a pass/fail list.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonRunArgs {
    /// TOML configuration file; omit to use the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `out`, or the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the treatment-stage step count.
    #[arg(long)]
    steps_treatment: Option<usize>,
    /// Export deformed-mesh field files every N converged steps.
    #[arg(long, value_name = "N")]
    export_every: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Vary the unloaded diameter at fixed thickness-to-radius ratio.
    Diameter {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Unloaded diameters (mm).
        #[arg(long, value_delimiter = ',', default_values_t = [2.0, 2.9, 4.0])]
        diameters: Vec<f64>,
    },
    /// Vary the thickness-to-radius ratio at fixed radius.
    Thickness {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Thickness-to-radius ratios.
        #[arg(long, value_delimiter = ',', default_values_t = [0.20, 0.25, 0.30, 0.35])]
        ratios: Vec<f64>,
    },
}

#[derive(Args)]
struct StentArgs {
    /// Manifest mapping stent names to curve CSV files.
    #[arg(long, default_value = "data/stents/manifest.txt")]
    manifest: PathBuf,
    /// Required deformed diameter (mm).
    #[arg(long)]
    diameter_mm: f64,
    /// Required additional pressure (kPa).
    #[arg(long)]
    pressure_kpa: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Seed for the randomized sweeps.
    #[arg(long, default_value_t = 20260826)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Study(study) => cmd_study(study),
        Command::StentEval(args) => cmd_stent_eval(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &CommonRunArgs) -> Result<(RunConfig, PathBuf), String> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_path(path).map_err(|e| e.to_string())?,
        None => RunConfig::from_toml_str("").map_err(|e| e.to_string())?,
    };
    if let Some(n) = common.steps_treatment {
        if n == 0 {
            return Err("--steps-treatment must be at least 1".into());
        }
        cfg.stages.treatment_steps = n;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    Ok((cfg, out))
}

/// Writes field exports every N steps into `dir/fields/`.
struct FieldExporter {
    dir: PathBuf,
    every: usize,
    count: usize,
}

impl FieldExporter {
    fn new(out: &std::path::Path, every: usize) -> Result<Self, String> {
        let dir = out.join("fields");
        std::fs::create_dir_all(&dir)
            .map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(FieldExporter {
            dir,
            every,
            count: 0,
        })
    }
}

impl StepObserver for FieldExporter {
    fn on_step(&mut self, model: &Model, u: &[f64], record: &StepRecord) {
        self.count += 1;
        if self.count % self.every != 0 {
            return;
        }
        let name = format!("{}_{:05}.vtk", record.stage, record.step);
        if let Err(e) = export_fields(model, u, &self.dir.join(name)) {
            eprintln!("warning: field export failed: {e}");
        }
    }
}

fn run_with_observer(
    cfg: &RunConfig,
    out: &std::path::Path,
    export_every: Option<usize>,
) -> Result<RunResult, String> {
    let sim = Simulation::new(cfg).map_err(|e| e.to_string())?;
    let result = match export_every {
        Some(every) if every > 0 => {
            let mut obs = FieldExporter::new(out, every)?;
            sim.run_all(&mut obs)
        }
        _ => sim.run_all(&mut NoObserver),
    }
    .map_err(|e| e.to_string())?;
    Ok(result)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let (cfg, out) = load_config(&args.common)?;
    let result = run_with_observer(&cfg, &out, args.common.export_every)?;
    write_run_bundle(&result, &out).map_err(|e| e.to_string())?;
    println!(
        "run complete: {} steps, peak stenosis {:.1}%, tables in {}",
        result.records.len(),
        result.peak_stenosis_pct,
        out.display()
    );
    print_damage_summary(&result);
    Ok(ExitCode::SUCCESS)
}

fn print_damage_summary(result: &RunResult) {
    println!("mid-length damage pressures (kPa of additional pressure):");
    println!("  layer   onset complete");
    for h in 0..N_LAYERS {
        let cell = result.damage.cells[N_STATIONS - 1][h];
        let fmt = |p: Option<cvsim::driver::DamagePoint>| match p {
            Some(p) => format!("{:7.2}", p.p_add_kpa),
            None => "      -".into(),
        };
        println!("  h{}    {} {}", h + 1, fmt(cell.onset), fmt(cell.complete));
    }
}

fn cmd_study(study: StudyCommand) -> Result<ExitCode, String> {
    let (common, cases) = match study {
        StudyCommand::Diameter { common, diameters } => {
            let (cfg, out) = load_config(&common)?;
            let cases =
                run_diameter_study(&cfg, &diameters, &mut NoObserver).map_err(|e| e.to_string())?;
            ((out, "diameter"), cases)
        }
        StudyCommand::Thickness { common, ratios } => {
            let (cfg, out) = load_config(&common)?;
            let cases =
                run_thickness_study(&cfg, &ratios, &mut NoObserver).map_err(|e| e.to_string())?;
            ((out, "thickness"), cases)
        }
    };
    let (out, kind) = common;
    let summary = out.join(format!("study_{kind}.csv"));
    write_study_csv(&cases, &summary).map_err(|e| e.to_string())?;
    for case in &cases {
        let dir = out.join(&case.label);
        write_run_bundle(&case.result, &dir).map_err(|e| e.to_string())?;
        let req = case
            .result
            .requirement_point()
            .map(|r| format!("requires {:.2} kPa at {:.2} mm", r.pressure_kpa, r.diameter_mm))
            .unwrap_or_else(|| "outer layer not fully damaged".into());
        println!(
            "{}: peak stenosis {:.1}%, {}",
            case.label, case.result.peak_stenosis_pct, req
        );
    }
    println!("summary written to {}", summary.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_stent_eval(args: StentArgs) -> Result<ExitCode, String> {
    if !(args.diameter_mm > 0.0 && args.pressure_kpa > 0.0) {
        return Err("requirement diameter and pressure must be positive".into());
    }
    let curves = load_manifest(&args.manifest).map_err(|e| e.to_string())?;
    if curves.is_empty() {
        return Err(format!("no curves listed in {}", args.manifest.display()));
    }
    let req = cvsim::driver::RequirementPoint {
        diameter_mm: args.diameter_mm,
        pressure_kpa: args.pressure_kpa,
    };
    println!(
        "requirement: {} kPa at {} mm",
        args.pressure_kpa, args.diameter_mm
    );
    for curve in &curves {
        if curve.non_monotone {
            eprintln!(
                "warning: curve {} is not non-increasing with diameter",
                curve.name
            );
        }
        let verdict = stent_succeeds(curve, &req);
        let text = match verdict {
            StentVerdict::Success { margin_kpa } => {
                format!("success (margin {margin_kpa:+.2} kPa)")
            }
            StentVerdict::Failure { margin_kpa } => {
                format!("failure (margin {margin_kpa:+.2} kPa)")
            }
            StentVerdict::OutOfRange => {
                let (lo, hi) = curve.diameter_span();
                format!("out of range (curve spans {lo:.2}-{hi:.2} mm)")
            }
        };
        println!("  {:<12} {}", curve.name, text);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, String> {
    let mut all_ok = true;
    let mut report = |name: &str, ok: bool, detail: String| {
        all_ok &= ok;
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    let err = cvsim::oracles::collagen_quadrature_sweep(10_000, args.seed)
        .map_err(|e| e.to_string())?;
    report(
        "collagen closed form vs quadrature",
        err <= 1e-8,
        format!("max error {err:.3e} over 10000 samples (tol 1e-8)"),
    );

    let err = cvsim::oracles::fd_tangent_sweep(100, args.seed);
    report(
        "material tangent vs finite differences",
        err <= 1e-6,
        format!("max error {err:.3e} over 100 random states (tol 1e-6)"),
    );

    // Thin-wall pressure-vessel check: the Laplace estimate is a pure
    // equilibrium statement, so the converged hoop stress of a thin tube
    // must match it within a few percent regardless of material.
    {
        use cvsim::mesh::Mesh;
        use cvsim::solve::{element_fields, solve_equilibrium, LoadCase, SolveSettings};
        let cfg = RunConfig::from_toml_str("[geometry]\nthickness_ratio = 0.04\n")
            .map_err(|e| e.to_string())?;
        let geometry = cfg.geometry().map_err(|e| e.to_string())?;
        let mesh = Mesh::build(geometry, 2, 2, 2).map_err(|e| e.to_string())?;
        let mut model = Model::new(mesh, cfg.material_params(), cfg.solver.kappa_kpa)
            .map_err(|e| e.to_string())?;
        let mut u = vec![0.0; model.n_dofs()];
        let settings = SolveSettings::default();
        let mut outcome = Ok(());
        for i in 1..=4 {
            let load = LoadCase {
                pressure: 2.0 * i as f64 / 4.0,
                axial_stretch: 1.0,
            };
            if let Err(e) = solve_equilibrium(&mut model, &mut u, &load, &settings) {
                outcome = Err(e.to_string());
                break;
            }
        }
        match outcome {
            Ok(()) => {
                let fields = element_fields(&model, &u).map_err(|e| e.to_string())?;
                let mut hoop = 0.0;
                let mut count = 0.0;
                for f in &fields {
                    for gp in &f.gp {
                        // In a pressurised tube the largest principal
                        // Cauchy stress is the hoop stress.
                        let eig = gp.cauchy.symmetric_eigenvalues();
                        hoop += eig.max();
                        count += 1.0;
                    }
                }
                hoop /= count;
                // Deformed mid-surface radius and thickness.
                let n_in = model.mesh.nearest_node(model.mesh.geometry.r_inner, 0.0, 0.0);
                let n_out = model.mesh.nearest_node(
                    model.mesh.geometry.r_inner + model.mesh.geometry.thickness,
                    0.0,
                    0.0,
                );
                let r_of = |n: usize| {
                    let x = model.mesh.nodes[n].x + u[3 * n];
                    let y = model.mesh.nodes[n].y + u[3 * n + 1];
                    x.hypot(y)
                };
                let (ri, ro) = (r_of(n_in), r_of(n_out));
                let est = cvsim::oracles::thin_wall_estimate(2.0, 0.5 * (ri + ro), ro - ri);
                let rel = (hoop - est).abs() / est;
                report(
                    "thin-wall hoop stress vs Laplace",
                    rel < 0.05,
                    format!("FE {hoop:.2} kPa vs estimate {est:.2} kPa ({:.1}% off)", 100.0 * rel),
                );
            }
            Err(e) => report("thin-wall hoop stress vs Laplace", false, e),
        }
    }

    if all_ok {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}
