//! End-to-end acceptance gate.
//!
//! Each test evaluates one numbered release criterion and prints a single
//! `criterion NN ...: PASS/FAIL` line (visible with `--nocapture`, or in the
//! failure output). The staged runs behind criteria 3-13 are shared between
//! tests through `OnceLock`s, so the suite performs one default-mesh run plus
//! one geometry sweep regardless of test order.
//!
//! Runtime note: this target performs full nonlinear FE runs and takes on the
//! order of an hour on a single core.

use std::path::Path;
use std::sync::OnceLock;

use cvsim::config::RunConfig;
use cvsim::driver::{
    run_diameter_study, run_thickness_study, NoObserver, RunResult, Simulation, Stage, StudyCase,
    SweepDelta, N_LAYERS, N_STATIONS,
};
use cvsim::element::element_response;
use cvsim::oracles;
use cvsim::solve::{element_fields, Model};
use cvsim::stent::{load_manifest, stent_succeeds, StentVerdict};

/// Treatment-ramp resolution used by the gate. The damage law scales its
/// increment by the ramp fraction per step, so the reported pressures are
/// step-count independent; 400 steps resolve the ramp to 0.03 kPa.
const TREATMENT_STEPS: usize = 400;

/// Circumferential element count for the geometry sweeps. The problem is
/// axisymmetric over the quarter-symmetry sector; four elements over 90
/// degrees keep the sweep tractable on one core while staying within a
/// fraction of a percent of the default-mesh diameters.
const SWEEP_CIRCUMFERENTIAL: usize = 4;

// ---------------------------------------------------------------------------
// Shared runs
// ---------------------------------------------------------------------------

/// Default-configuration staged run plus the mid-run captures the gate needs.
struct DefaultRun {
    result: RunResult,
    /// VSMC cell stretch at every Gauss point right after homeostasis.
    lam_m_gauss: Vec<f64>,
    /// State change caused by one extra remodelling sweep at the fixed point.
    extra_sweep: SweepDelta,
    /// Element-mean VSMC recruitment stretch at the probe grid, before and
    /// after the vasospasm stage, indexed `[station][layer]`.
    lam_m_r_pre: [[f64; N_LAYERS]; N_STATIONS],
    lam_m_r_post: [[f64; N_LAYERS]; N_STATIONS],
}

fn probe_lam_m_r(sim: &Simulation) -> [[f64; N_LAYERS]; N_STATIONS] {
    let mut out = [[0.0; N_LAYERS]; N_STATIONS];
    for (s, row) in sim.probes.elems.iter().enumerate() {
        for (h, &e) in row.iter().enumerate() {
            let states = &sim.model.states[e];
            out[s][h] = states.iter().map(|st| st.lam_m_r).sum::<f64>() / states.len() as f64;
        }
    }
    out
}

fn default_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut cfg = RunConfig::default();
        cfg.stages.treatment_steps = TREATMENT_STEPS;
        cfg.validate().expect("default configuration is valid");
        let mut sim = Simulation::new(&cfg).expect("default model builds");
        let obs = &mut NoObserver;
        sim.run_load(obs).expect("load stage converges");
        sim.run_homeostasis(obs).expect("homeostasis converges");
        let lam_m_gauss = element_fields(&sim.model, &sim.u)
            .expect("field evaluation after homeostasis")
            .iter()
            .flat_map(|f| f.gp.iter().map(|g| g.lam_m))
            .collect();
        let extra_sweep = sim
            .extra_homeostasis_sweep()
            .expect("extra sweep re-solves");
        let lam_m_r_pre = probe_lam_m_r(&sim);
        sim.run_vasospasm(obs).expect("vasospasm stage converges");
        let lam_m_r_post = probe_lam_m_r(&sim);
        sim.run_treatment(obs).expect("treatment stage converges");
        DefaultRun {
            result: sim.finish(),
            lam_m_gauss,
            extra_sweep,
            lam_m_r_pre,
            lam_m_r_post,
        }
    })
}

/// Geometry sweep: unloaded diameters 2 / 2.9 / 4 mm at H/R = 0.35, plus
/// thickness ratios 0.20 / 0.25 / 0.30 at the default radius. The 2.9 mm
/// diameter case doubles as the H/R = 0.35 thickness case (identical
/// configuration), so it is run once and shared.
struct Sweep {
    diameter: Vec<StudyCase>,
    thickness: Vec<StudyCase>,
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let mut base = RunConfig::default();
        base.mesh.n_circumferential = SWEEP_CIRCUMFERENTIAL;
        base.stages.treatment_steps = TREATMENT_STEPS;
        base.validate().expect("sweep base configuration is valid");
        let obs = &mut NoObserver;
        let diameter =
            run_diameter_study(&base, &[2.0, 2.9, 4.0], obs).expect("diameter sweep runs");
        let thickness =
            run_thickness_study(&base, &[0.20, 0.25, 0.30], obs).expect("thickness sweep runs");
        Sweep {
            diameter,
            thickness,
        }
    })
}

/// The H/R = 0.35 thickness case shares the 2.9 mm diameter-case run.
fn hr_035_result() -> &'static RunResult {
    &sweep().diameter[1].result
}

// ---------------------------------------------------------------------------
// Reporting helper
// ---------------------------------------------------------------------------

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:02} {name}: {verdict} - {detail}");
    assert!(pass, "criterion {id:02} {name}: FAIL - {detail}");
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

const MID: usize = N_STATIONS - 1; // z5, the vasospasm centre

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_collagen_stress_matches_quadrature_oracle() {
    let start = std::time::Instant::now();
    let worst = oracles::collagen_quadrature_sweep(10_000, 42).expect("quadrature oracle runs");
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && elapsed.as_secs_f64() < 10.0;
    report(
        1,
        "collagen stress vs quadrature",
        pass,
        &format!("worst relative error {worst:.2e} over 10^4 samples in {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_tangents_match_finite_differences() {
    let start = std::time::Instant::now();
    let material_err = oracles::fd_tangent_sweep(100, 7);

    // Element-level check: random nodal displacements on a coarse model,
    // analytic stiffness column vs central difference of the internal force.
    let mut cfg = RunConfig::default();
    cfg.mesh.n_radial = 2;
    cfg.mesh.n_circumferential = 2;
    cfg.mesh.n_axial = 4;
    cfg.validate().expect("coarse configuration is valid");
    let geometry = cfg.geometry().expect("geometry resolves");
    let mesh = cvsim::mesh::Mesh::build(
        geometry,
        cfg.mesh.n_radial,
        cfg.mesh.n_circumferential,
        cfg.mesh.n_axial,
    )
    .expect("coarse mesh builds");
    let model = Model::new(mesh, cfg.material_params(), cfg.solver.kappa_kpa)
        .expect("coarse model builds");

    let mut element_err = 0.0f64;
    let mut rng_state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        // xorshift, deterministic and dependency-free
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    for e in (0..model.mesh.elems.len()).step_by(3) {
        let re = &model.ref_elems[e];
        let frames = &model.mesh.frames[e];
        let states = &model.states[e];
        let scale = 0.02 * geometry.r_inner;
        let u: [nalgebra::Vector3<f64>; 8] = std::array::from_fn(|_| {
            nalgebra::Vector3::new(next() - 0.5, next() - 0.5, next() - 0.5) * scale
        });
        let base = element_response(re, &u, frames, states, &model.params, 0.0, 1e5, true)
            .expect("element response");
        let k = base.stiffness.expect("stiffness requested");
        let h = 1e-8 * geometry.r_inner;
        for dof in [0usize, 7, 13, 22] {
            let (a, i) = (dof / 3, dof % 3);
            let mut up = u;
            up[a][i] += h;
            let rp = element_response(re, &up, frames, states, &model.params, 0.0, 1e5, false)
                .expect("element response");
            let mut um = u;
            um[a][i] -= h;
            let rm = element_response(re, &um, frames, states, &model.params, 0.0, 1e5, false)
                .expect("element response");
            let mut col_norm = 0.0f64;
            let mut err = 0.0f64;
            for row in 0..24 {
                let fd = (rp.f_int[row] - rm.f_int[row]) / (2.0 * h);
                let an = k[(row, dof)];
                err += (fd - an) * (fd - an);
                col_norm += an * an;
            }
            element_err = element_err.max((err / col_norm.max(1e-30)).sqrt());
        }
    }
    let elapsed = start.elapsed();
    let pass = material_err <= 1e-6 && element_err <= 1e-6 && elapsed.as_secs_f64() < 60.0;
    report(
        2,
        "consistent tangents",
        pass,
        &format!(
            "material FD error {material_err:.2e}, element FD error {element_err:.2e} in {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_03_incompressibility_at_every_converged_step() {
    let run = default_run();
    let worst = run
        .result
        .records
        .iter()
        .map(|r| r.max_vol_error)
        .fold(0.0f64, f64::max);
    report(
        3,
        "incompressibility",
        worst <= 1e-6,
        &format!("worst per-element |mean det F - 1| = {worst:.2e} over {} steps", run.result.records.len()),
    );
}

#[test]
fn criterion_04_homeostasis_is_a_fixed_point() {
    let run = default_run();
    let lam_m_h = RunConfig::default().material.lam_m_h;
    let worst_dev = run
        .lam_m_gauss
        .iter()
        .map(|&l| (l - lam_m_h).abs())
        .fold(0.0f64, f64::max);
    let drift = run.extra_sweep.lam_m_r_change;
    let pass = worst_dev <= 1e-4 && drift < 1e-8;
    report(
        4,
        "homeostasis fixed point",
        pass,
        &format!(
            "max |lamM - {lam_m_h}| = {worst_dev:.2e} over {} Gauss points, extra-sweep lamM_R drift {drift:.2e}",
            run.lam_m_gauss.len()
        ),
    );
}

#[test]
fn criterion_05_vasospasm_stretch_recovery() {
    let run = default_run();
    let lam_m_h = RunConfig::default().material.lam_m_h;
    let mut min_overshoot = f64::INFINITY;
    let mut worst_final = 0.0f64;
    for h in 0..N_LAYERS {
        let peak = run
            .result
            .stage_records(Stage::Vasospasm)
            .map(|r| r.probes[MID][h].lam_m)
            .fold(f64::NEG_INFINITY, f64::max);
        min_overshoot = min_overshoot.min(peak - lam_m_h);
        let last = run
            .result
            .stage_records(Stage::Vasospasm)
            .last()
            .expect("vasospasm stage recorded");
        worst_final = worst_final.max((last.probes[MID][h].lam_m - lam_m_h).abs());
    }
    let pass = min_overshoot > 0.01 && worst_final <= 1e-3;
    report(
        5,
        "vasospasm stretch recovery",
        pass,
        &format!(
            "smallest mid-length overshoot {min_overshoot:.4}, worst end-of-stage deviation {worst_final:.2e}"
        ),
    );
}

/// Mean within-layer variance across the axial stations of a probe grid.
fn axial_variance(grid: &[[f64; N_LAYERS]; N_STATIONS]) -> f64 {
    let mut acc = 0.0;
    for h in 0..N_LAYERS {
        let col: Vec<f64> = (0..N_STATIONS).map(|s| grid[s][h]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        acc += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
    }
    acc / N_LAYERS as f64
}

#[test]
fn criterion_06_recruitment_field_structure() {
    let run = default_run();
    let pre = axial_variance(&run.lam_m_r_pre);
    let post = axial_variance(&run.lam_m_r_post);
    // Before vasospasm the recruitment field may vary radially but not
    // axially; the vasospasm stage must introduce genuine axial structure.
    let pass = pre < 1e-6 && post > 1e-6 && post > 100.0 * pre.max(1e-12);
    report(
        6,
        "recruitment-field structure",
        pass,
        &format!("axial variance of lamM_R: pre-vasospasm {pre:.2e}, post-vasospasm {post:.2e}"),
    );
}

#[test]
fn criterion_07_damage_monotone_and_ordered() {
    let run = default_run();
    // d non-decreasing in time at every probe.
    let mut max_drop = 0.0f64;
    let mut prev = [[0.0f64; N_LAYERS]; N_STATIONS];
    for r in &run.result.records {
        for s in 0..N_STATIONS {
            for h in 0..N_LAYERS {
                max_drop = max_drop.max(prev[s][h] - r.probes[s][h].d_m);
                prev[s][h] = r.probes[s][h].d_m;
            }
        }
    }
    // Mid-length onset and completion pressures strictly increase outward.
    let cells = &run.result.damage.cells[MID];
    let onsets: Vec<f64> = cells
        .iter()
        .filter_map(|c| c.onset.map(|p| p.p_add_kpa))
        .collect();
    let completions: Vec<f64> = cells
        .iter()
        .filter_map(|c| c.complete.map(|p| p.p_add_kpa))
        .collect();
    let ordered = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    let pass = max_drop <= 1e-12
        && onsets.len() == N_LAYERS
        && completions.len() == N_LAYERS
        && ordered(&onsets)
        && ordered(&completions);
    report(
        7,
        "damage monotone and ordered",
        pass,
        &format!(
            "largest decrease {max_drop:.2e}; mid-length onsets {onsets:.3?} kPa, completions {completions:.3?} kPa"
        ),
    );
}

#[test]
fn criterion_08_damage_threshold_readout() {
    let run = default_run();
    let threshold = 1.30;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for row in &run.result.damage.cells {
        for cell in row {
            if let Some(onset) = cell.onset {
                worst = worst.max((onset.lam_m - threshold).abs());
                n += 1;
            }
        }
    }
    let pass = n > 0 && worst <= 0.01;
    report(
        8,
        "damage threshold readout",
        pass,
        &format!("{n} recorded onsets, worst |lamM at onset - {threshold}| = {worst:.4}"),
    );
}

#[test]
fn criterion_09_peak_stenosis() {
    let run = default_run();
    let peak = run.result.peak_stenosis_pct;
    report(
        9,
        "peak stenosis",
        (peak - 36.0).abs() <= 3.0,
        &format!("{peak:.2}% against target 36 +/- 3"),
    );
}

#[test]
fn criterion_10_treatment_pressures_default_artery() {
    let run = default_run();
    let cells = &run.result.damage.cells[MID];
    let get = |h: usize, complete: bool| -> Option<f64> {
        let c = &cells[h];
        if complete { c.complete } else { c.onset }.map(|p| p.p_add_kpa)
    };
    let milestones = [
        ("onset h1", get(0, false), 5.07),
        ("completion h1", get(0, true), 8.79),
        ("onset h8", get(N_LAYERS - 1, false), 7.99),
        ("completion h8", get(N_LAYERS - 1, true), 10.48),
    ];
    let mut detail = String::new();
    let mut pass = true;
    for (name, value, target) in milestones {
        let ok = value.is_some_and(|v| within(v, target, 0.20));
        pass &= ok;
        match value {
            Some(v) => detail.push_str(&format!(
                "{name} {v:.2} kPa vs {target} +/- 20% [{}]; ",
                if ok { "ok" } else { "out" }
            )),
            None => detail.push_str(&format!("{name} not reached vs {target} [out]; ")),
        }
    }
    report(10, "treatment pressures", pass, detail.trim_end_matches("; "));
}

#[test]
fn criterion_11_diameter_study() {
    let cases = &sweep().diameter;
    let required_diameters = [1.87, 2.79, 3.72];
    let mut pressures = Vec::new();
    let mut detail = String::new();
    let mut pass = true;
    for (case, &target_d) in cases.iter().zip(&required_diameters) {
        match case.result.requirement_point() {
            Some(req) => {
                let p_ok = (8.5..=11.5).contains(&req.pressure_kpa);
                let d_ok = within(req.diameter_mm, target_d, 0.05);
                pass &= p_ok && d_ok;
                pressures.push(req.pressure_kpa);
                detail.push_str(&format!(
                    "{}: p(t1,h8) {:.2} kPa [{}], required diameter {:.3} mm vs {target_d} +/- 5% [{}]; ",
                    case.label,
                    req.pressure_kpa,
                    if p_ok { "ok" } else { "out" },
                    req.diameter_mm,
                    if d_ok { "ok" } else { "out" },
                ));
            }
            None => {
                pass = false;
                detail.push_str(&format!("{}: outer layer not fully damaged; ", case.label));
            }
        }
    }
    if pressures.len() == required_diameters.len() {
        let (lo, hi) = pressures
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| {
                (a.min(p), b.max(p))
            });
        let spread = (hi - lo) / lo;
        pass &= spread <= 0.15;
        detail.push_str(&format!("mutual spread {:.1}%", 100.0 * spread));
    }
    report(11, "diameter study", pass, detail.trim_end_matches("; "));
}

#[test]
fn criterion_12_thickness_study() {
    let thin = &sweep().thickness[0].result; // H/R = 0.20
    let thick = hr_035_result(); // H/R = 0.35
    let end = |r: &RunResult, h: usize, complete: bool| -> Option<f64> {
        let c = &r.damage.cells[MID][h];
        if complete { c.complete } else { c.onset }.map(|p| p.p_add_kpa)
    };
    let completion_ratio = match (end(thick, N_LAYERS - 1, true), end(thin, N_LAYERS - 1, true)) {
        (Some(a), Some(b)) => Some(a / b),
        _ => None,
    };
    let onset_ratio = match (end(thick, 0, false), end(thin, 0, false)) {
        (Some(a), Some(b)) => Some(a / b),
        _ => None,
    };
    let c_ok = completion_ratio.is_some_and(|r| (r - 2.3).abs() <= 0.4);
    let o_ok = onset_ratio.is_some_and(|r| (r - 2.1).abs() <= 0.4);
    let fmt = |r: Option<f64>| r.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    report(
        12,
        "thickness study",
        c_ok && o_ok,
        &format!(
            "h8-completion ratio (0.35/0.20) {} vs 2.3 +/- 0.4 [{}]; h1-onset ratio {} vs 2.1 +/- 0.4 [{}]",
            fmt(completion_ratio),
            if c_ok { "ok" } else { "out" },
            fmt(onset_ratio),
            if o_ok { "ok" } else { "out" },
        ),
    );
}

#[test]
fn criterion_13_stent_evaluation() {
    // The bundled radial-force curves are synthetic placeholders (see
    // data/stents/manifest.txt), so this criterion degrades to exercising the
    // evaluation path: every curve must load, every requirement point from
    // the diameter sweep must produce a verdict, and in-range verdicts must
    // carry finite margins. The per-case calls are printed for inspection.
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/stents/manifest.txt");
    let curves = load_manifest(&manifest).expect("stent manifest loads");
    let mut pass = curves.len() >= 4;
    let mut detail = format!("{} curves; ", curves.len());
    for case in &sweep().diameter {
        let Some(req) = case.result.requirement_point() else {
            pass = false;
            detail.push_str(&format!("{}: no requirement point; ", case.label));
            continue;
        };
        detail.push_str(&format!(
            "{} ({:.2} mm @ {:.2} kPa):",
            case.label, req.diameter_mm, req.pressure_kpa
        ));
        for curve in &curves {
            let verdict = stent_succeeds(curve, &req);
            match verdict {
                StentVerdict::Success { margin_kpa } => {
                    detail.push_str(&format!(" {} ok(+{margin_kpa:.2}kPa)", curve.name))
                }
                StentVerdict::Failure { margin_kpa } => {
                    pass &= margin_kpa.is_finite();
                    detail.push_str(&format!(" {} short({margin_kpa:.2}kPa)", curve.name))
                }
                StentVerdict::OutOfRange => detail.push_str(&format!(" {} out-of-range", curve.name)),
            }
        }
        detail.push_str("; ");
    }
    report(
        13,
        "stent evaluation (synthetic curves)",
        pass,
        detail.trim_end_matches("; "),
    );
}
