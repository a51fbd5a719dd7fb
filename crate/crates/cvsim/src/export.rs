//! Result serialization: legacy unstructured-grid field exports for
//! visualization and CSV result tables.
//!
//! The field exports use the plain-text legacy unstructured-grid format
//! (readable by common mesh viewers): deformed node coordinates, hexahedral
//! connectivity, and per-element scalars for the VSMC cell stretch,
//! recruitment stretch, tone factor, and damage. Numbers are written with
//! full round-trip precision so identical states produce identical files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::driver::{
    DamageReport, RunResult, StepRecord, StudyCase, N_LAYERS, N_STATIONS,
};
use crate::solve::{element_fields, Model, SolveError};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("field evaluation failed: {0}")]
    Solve(#[from] SolveError),
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Full-precision decimal float that parses back to the same bits.
fn full(v: f64) -> String {
    format!("{v:.17e}")
}

/// The per-element scalar fields included in every export, in order.
pub const FIELD_NAMES: [&str; 4] = ["lam_m", "lam_m_r", "k_a", "d_m"];

/// Writes the deformed mesh and element-mean state fields for one converged
/// step.
pub fn export_fields(model: &Model, u: &[f64], path: &Path) -> Result<(), ExportError> {
    let fields = element_fields(model, u)?;
    let mesh = &model.mesh;
    let ne = mesh.elems.len();

    let mut scalars: Vec<Vec<f64>> = vec![Vec::with_capacity(ne); FIELD_NAMES.len()];
    for (e, field) in fields.iter().enumerate() {
        let mut acc = [0.0f64; 4];
        for q in 0..8 {
            let st = &model.states[e][q];
            acc[0] += field.gp[q].im.sqrt() / st.lam_m_r;
            acc[1] += st.lam_m_r;
            acc[2] += st.k_a;
            acc[3] += st.d_m;
        }
        for (k, a) in acc.iter().enumerate() {
            scalars[k].push(a / 8.0);
        }
    }

    let mut text = String::new();
    text.push_str("# vtk DataFile Version 3.0\n");
    text.push_str("deformed artery state\n");
    text.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(text, "POINTS {} double", mesh.n_nodes());
    for (n, node) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(
            text,
            "{} {} {}",
            full(node.x + u[3 * n]),
            full(node.y + u[3 * n + 1]),
            full(node.z + u[3 * n + 2]),
        );
    }
    let _ = writeln!(text, "CELLS {} {}", ne, 9 * ne);
    for conn in &mesh.elems {
        let _ = write!(text, "8");
        for &n in conn {
            let _ = write!(text, " {n}");
        }
        text.push('\n');
    }
    let _ = writeln!(text, "CELL_TYPES {ne}");
    for _ in 0..ne {
        text.push_str("12\n");
    }
    let _ = writeln!(text, "CELL_DATA {ne}");
    for (name, values) in FIELD_NAMES.iter().zip(&scalars) {
        let _ = writeln!(text, "SCALARS {name} double 1");
        text.push_str("LOOKUP_TABLE default\n");
        for &v in values {
            text.push_str(&full(v));
            text.push('\n');
        }
    }

    std::fs::write(path, text).map_err(io_err(path))
}

/// A re-parsed field export, for round-trip checks and downstream scripts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedFields {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<[usize; 8]>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

/// Parses a file written by [`export_fields`].
pub fn parse_fields(path: &Path) -> Result<ExportedFields, ExportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let fail = |line: usize, message: String| ExportError::Format {
        path: path.to_path_buf(),
        line: line + 1,
        message,
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    let expect = |prefix: &str, i: &mut usize| -> Result<String, ExportError> {
        let line = *lines
            .get(*i)
            .ok_or_else(|| fail(*i, format!("expected `{prefix}`, found end of file")))?;
        if !line.starts_with(prefix) {
            return Err(fail(*i, format!("expected `{prefix}`, found `{line}`")));
        }
        *i += 1;
        Ok(line.to_string())
    };

    expect("# vtk DataFile", &mut i)?;
    i += 1; // title
    expect("ASCII", &mut i)?;
    expect("DATASET UNSTRUCTURED_GRID", &mut i)?;

    let head = expect("POINTS", &mut i)?;
    let np: usize = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail(i - 1, "bad POINTS count".into()))?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        let line = lines
            .get(i)
            .ok_or_else(|| fail(i, "truncated POINTS block".into()))?;
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        let mut coord = [0.0; 3];
        for c in &mut coord {
            *c = it
                .next()
                .and_then(Result::ok)
                .ok_or_else(|| fail(i, "bad point line".into()))?;
        }
        points.push(coord);
        i += 1;
    }

    let head = expect("CELLS", &mut i)?;
    let ne: usize = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail(i - 1, "bad CELLS count".into()))?;
    let mut cells = Vec::with_capacity(ne);
    for _ in 0..ne {
        let line = lines
            .get(i)
            .ok_or_else(|| fail(i, "truncated CELLS block".into()))?;
        let ids: Vec<usize> = line
            .split_whitespace()
            .filter_map(|s| s.parse().ok())
            .collect();
        if ids.len() != 9 || ids[0] != 8 {
            return Err(fail(i, "expected `8` plus eight node ids".into()));
        }
        let mut conn = [0usize; 8];
        conn.copy_from_slice(&ids[1..]);
        cells.push(conn);
        i += 1;
    }

    expect("CELL_TYPES", &mut i)?;
    i += ne;
    expect("CELL_DATA", &mut i)?;

    let mut scalars = Vec::new();
    while i < lines.len() {
        let head = expect("SCALARS", &mut i)?;
        let name = head
            .split_whitespace()
            .nth(1)
            .ok_or_else(|| fail(i - 1, "missing scalar name".into()))?
            .to_string();
        expect("LOOKUP_TABLE", &mut i)?;
        let mut values = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = lines
                .get(i)
                .ok_or_else(|| fail(i, "truncated scalar block".into()))?;
            values.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| fail(i, "bad scalar value".into()))?,
            );
            i += 1;
        }
        scalars.push((name, values));
    }

    Ok(ExportedFields {
        points,
        cells,
        scalars,
    })
}

/// Writes the step-level time series: loads, diameters by station, stenosis.
pub fn write_timeseries_csv(records: &[StepRecord], path: &Path) -> Result<(), ExportError> {
    let mut out = String::from(
        "stage,step,pressure_kpa,p_add_kpa,axial_stretch,\
         diameter_z1_mm,diameter_z2_mm,diameter_z3_mm,diameter_z4_mm,diameter_z5_mm,\
         stenosis_pct,max_vol_error\n",
    );
    for r in records {
        let _ = write!(out, "{},{},{},{},{}", r.stage, r.step, r.pressure_kpa, r.p_add_kpa, r.axial_stretch);
        for d in r.inner_diameter_mm {
            let _ = write!(out, ",{d}");
        }
        match r.stenosis_pct {
            Some(s) => {
                let _ = writeln!(out, ",{s},{}", r.max_vol_error);
            }
            None => {
                let _ = writeln!(out, ",,{}", r.max_vol_error);
            }
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Writes the probe time series in long format, one row per probe per step.
pub fn write_probes_csv(records: &[StepRecord], path: &Path) -> Result<(), ExportError> {
    let mut out = String::from("stage,step,station,layer,lam_m,lam_m_r,k_a,d_m\n");
    for r in records {
        for s in 0..N_STATIONS {
            for h in 0..N_LAYERS {
                let p = r.probes[s][h];
                let _ = writeln!(
                    out,
                    "{},{},z{},h{},{},{},{},{}",
                    r.stage,
                    r.step,
                    s + 1,
                    h + 1,
                    p.lam_m,
                    p.lam_m_r,
                    p.k_a,
                    p.d_m
                );
            }
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Writes the layer-wise damage pressures table.
pub fn write_damage_csv(report: &DamageReport, path: &Path) -> Result<(), ExportError> {
    let mut out = String::from(
        "station,layer,p_add_onset_kpa,lam_m_onset,p_add_complete_kpa,lam_m_complete\n",
    );
    for (s, row) in report.cells.iter().enumerate() {
        for (h, cell) in row.iter().enumerate() {
            let _ = write!(out, "z{},h{}", s + 1, h + 1);
            match cell.onset {
                Some(p) => {
                    let _ = write!(out, ",{},{}", p.p_add_kpa, p.lam_m);
                }
                None => out.push_str(",,"),
            }
            match cell.complete {
                Some(p) => {
                    let _ = writeln!(out, ",{},{}", p.p_add_kpa, p.lam_m);
                }
                None => out.push_str(",,\n"),
            }
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Writes a one-row-per-case summary of a parameter study.
pub fn write_study_csv(cases: &[StudyCase], path: &Path) -> Result<(), ExportError> {
    let mut out = String::from(
        "case,radius_mm,thickness_mm,peak_stenosis_pct,\
         p_add_onset_h1_kpa,p_add_complete_h1_kpa,\
         p_add_onset_h8_kpa,p_add_complete_h8_kpa,\
         required_diameter_mm,required_pressure_kpa\n",
    );
    for case in cases {
        let z5 = &case.result.damage.cells[N_STATIONS - 1];
        let _ = write!(
            out,
            "{},{},{},{}",
            case.label,
            case.config.geometry.radius_mm,
            case.config
                .thickness_mm()
                .expect("study config was validated"),
            case.result.peak_stenosis_pct,
        );
        for cell in [z5[0], z5[N_LAYERS - 1]] {
            for point in [cell.onset, cell.complete] {
                match point {
                    Some(p) => {
                        let _ = write!(out, ",{}", p.p_add_kpa);
                    }
                    None => out.push(','),
                }
            }
        }
        match case.result.requirement_point() {
            Some(r) => {
                let _ = writeln!(out, ",{},{}", r.diameter_mm, r.pressure_kpa);
            }
            None => out.push_str(",,\n"),
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Writes every table for one completed run into `dir`.
pub fn write_run_bundle(result: &RunResult, dir: &Path) -> Result<(), ExportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_timeseries_csv(&result.records, &dir.join("timeseries.csv"))?;
    write_probes_csv(&result.records, &dir.join("probes.csv"))?;
    write_damage_csv(&result.damage, &dir.join("damage_report.csv"))?;
    let mut summary = String::from(
        "reference_diameter_mm,peak_stenosis_pct,homeostasis_sweeps\n",
    );
    let _ = writeln!(
        summary,
        "{},{},{}",
        result.reference_diameter_mm, result.peak_stenosis_pct, result.homeostasis_sweeps
    );
    let path = dir.join("summary.csv");
    let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(summary.as_bytes()).map_err(io_err(&path))?;
    Ok(())
}
