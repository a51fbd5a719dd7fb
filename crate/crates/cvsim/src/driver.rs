//! Staged simulation driver.
//!
//! Runs the four-stage protocol — pressurisation, homeostatic remodelling,
//! vasospasm, and mechanical treatment — as a staggered loop that alternates
//! equilibrium solves with explicit remodelling/damage updates, and extracts
//! the measurements the result tables are built from (probe stretches,
//! stenosis, layer-wise damage pressures).

use thiserror::Error;

use crate::config::RunConfig;
use crate::damage::damage_step;
use crate::mesh::{Mesh, MeshError};
use crate::remodel::{
    collagen_stretch_triplet, k_a_step, k_a_target, remodel_collagen_step, remodel_vsmc_step,
    RemodelError,
};
use crate::solve::{
    element_fields, solve_equilibrium, ElementField, LoadCase, Model, SolveError, SolveSettings,
};

pub const N_STATIONS: usize = 5;
pub const N_LAYERS: usize = 8;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("mesh construction failed: {0}")]
    Mesh(#[from] MeshError),
    #[error("model construction failed: {0}")]
    Element(#[from] crate::element::ElementError),
    #[error("{stage} stage, step {step}: {source}")]
    Solve {
        stage: Stage,
        step: usize,
        source: SolveError,
    },
    #[error("{stage} stage, step {step}: {source}")]
    Remodel {
        stage: Stage,
        step: usize,
        source: RemodelError,
    },
    #[error("probe layout needs at least {needed} {direction} elements, mesh has {got}")]
    ProbeLayout {
        needed: usize,
        got: usize,
        direction: &'static str,
    },
    #[error("homeostasis did not converge within {sweeps} sweeps (stretch deviation {dev:.3e})")]
    HomeostasisStalled { sweeps: usize, dev: f64 },
}

/// The four protocol stages, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Homeostasis,
    Vasospasm,
    Treatment,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Homeostasis => "homeostasis",
            Stage::Vasospasm => "vasospasm",
            Stage::Treatment => "treatment",
        }
    }

    /// Which evolution laws run during the stage. Elastin never remodels;
    /// collagen remodels only while homeostasis is being established; the
    /// vasoconstriction tone evolves only during vasospasm; damage can only
    /// accumulate under treatment, where all remodelling is frozen.
    pub fn flags(self) -> RemodelFlags {
        match self {
            Stage::Load => RemodelFlags {
                vsmc: false,
                collagen: false,
                k_a: false,
                damage: false,
            },
            Stage::Homeostasis => RemodelFlags {
                vsmc: true,
                collagen: true,
                k_a: false,
                damage: false,
            },
            Stage::Vasospasm => RemodelFlags {
                vsmc: true,
                collagen: false,
                k_a: true,
                damage: false,
            },
            Stage::Treatment => RemodelFlags {
                vsmc: false,
                collagen: false,
                k_a: false,
                damage: true,
            },
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RemodelFlags {
    pub vsmc: bool,
    pub collagen: bool,
    pub k_a: bool,
    pub damage: bool,
}

/// Named element probes: five axial stations from the unaffected end (z1)
/// to the peak constriction at mid-length (z5), times eight through-thickness
/// layers from innermost (h1) to outermost (h8), all on the theta = 0 row.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    /// Element ids, indexed `[station][layer]`.
    pub elems: [[usize; N_LAYERS]; N_STATIONS],
    /// Axial node-plane indices of the stations, for surface measurements.
    pub node_planes: [usize; N_STATIONS],
    /// Station coordinates (m) in the reference configuration.
    pub z_stations: [f64; N_STATIONS],
}

impl ProbeSet {
    pub fn new(mesh: &Mesh) -> Result<ProbeSet, DriverError> {
        if mesh.nr < N_LAYERS {
            return Err(DriverError::ProbeLayout {
                needed: N_LAYERS,
                got: mesh.nr,
                direction: "radial",
            });
        }
        if mesh.nz < 2 * (N_STATIONS - 1) {
            return Err(DriverError::ProbeLayout {
                needed: 2 * (N_STATIONS - 1),
                got: mesh.nz,
                direction: "axial",
            });
        }
        let length = mesh.geometry.length;
        let mut elems = [[0usize; N_LAYERS]; N_STATIONS];
        let mut node_planes = [0usize; N_STATIONS];
        let mut z_stations = [0.0; N_STATIONS];
        for s in 0..N_STATIONS {
            // Equally spaced from the end to mid-length.
            let z = length * s as f64 / (2 * (N_STATIONS - 1)) as f64;
            z_stations[s] = z;
            let frac = z / length * mesh.nz as f64;
            let iz = ((frac - 0.5).round().max(0.0) as usize).min(mesh.nz - 1);
            node_planes[s] = (frac.round() as usize).min(mesh.nz);
            for h in 0..N_LAYERS {
                elems[s][h] = iz * mesh.nt * mesh.nr + h;
            }
        }
        Ok(ProbeSet {
            elems,
            node_planes,
            z_stations,
        })
    }
}

/// Gauss-point averages over one probe element.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProbeSample {
    /// VSMC cell stretch.
    pub lam_m: f64,
    /// VSMC recruitment stretch.
    pub lam_m_r: f64,
    /// Vasoconstriction tone factor.
    pub k_a: f64,
    /// VSMC damage.
    pub d_m: f64,
}

/// One converged step of the staged run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub stage: Stage,
    /// Step index within the stage, starting at 1.
    pub step: usize,
    /// Total luminal pressure (kPa) and its treatment component.
    pub pressure_kpa: f64,
    pub p_add_kpa: f64,
    pub axial_stretch: f64,
    /// Deformed luminal diameter (mm) at each axial station.
    pub inner_diameter_mm: [f64; N_STATIONS],
    /// Stenosis (percent) at the mid-length station, relative to the
    /// end-of-homeostasis diameter; `None` before that reference exists.
    pub stenosis_pct: Option<f64>,
    /// Probe samples indexed `[station][layer]`.
    pub probes: [[ProbeSample; N_LAYERS]; N_STATIONS],
    /// Worst element dilatation error accepted for this step.
    pub max_vol_error: f64,
}

/// Interpolated treatment-stage event for one probe.
#[derive(Debug, Clone, Copy)]
pub struct DamagePoint {
    pub p_add_kpa: f64,
    pub lam_m: f64,
    /// Index into the run's record list of the step that completed the event.
    pub record_index: usize,
}

/// Damage chronology of one probe element.
#[derive(Debug, Clone, Copy, Default)]
pub struct DamageCell {
    /// First crossing of the damage threshold (element-mean cell stretch).
    pub onset: Option<DamagePoint>,
    /// Element-mean damage reaching 1 (all Gauss points fully damaged).
    pub complete: Option<DamagePoint>,
}

/// Layer-wise damage pressures, indexed `[station][layer]`.
#[derive(Debug, Clone, Default)]
pub struct DamageReport {
    pub cells: [[DamageCell; N_LAYERS]; N_STATIONS],
}

/// Required (diameter, pressure) point for stent evaluation: the additional
/// pressure at which the outermost mid-length layer is fully damaged and the
/// luminal diameter the vessel has reached at that moment.
#[derive(Debug, Clone, Copy)]
pub struct RequirementPoint {
    pub diameter_mm: f64,
    pub pressure_kpa: f64,
}

/// Full output of a staged run.
#[derive(Debug)]
pub struct RunResult {
    pub records: Vec<StepRecord>,
    pub damage: DamageReport,
    /// Luminal diameter (mm) at mid-length at the end of homeostasis.
    pub reference_diameter_mm: f64,
    /// Largest mid-length stenosis observed after homeostasis.
    pub peak_stenosis_pct: f64,
    pub homeostasis_sweeps: usize,
}

impl RunResult {
    /// Records belonging to one stage.
    pub fn stage_records(&self, stage: Stage) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    /// Stent requirement from the mid-length outermost layer, if the run
    /// damaged it completely.
    pub fn requirement_point(&self) -> Option<RequirementPoint> {
        let cell = self.damage.cells[N_STATIONS - 1][N_LAYERS - 1];
        let done = cell.complete?;
        let diameter_mm = self.records[done.record_index].inner_diameter_mm[N_STATIONS - 1];
        Some(RequirementPoint {
            diameter_mm,
            pressure_kpa: done.p_add_kpa,
        })
    }
}

/// Observer invoked after every converged step, e.g. for field export.
pub trait StepObserver {
    fn on_step(&mut self, model: &Model, u: &[f64], record: &StepRecord);
}

/// No-op observer.
pub struct NoObserver;

impl StepObserver for NoObserver {
    fn on_step(&mut self, _: &Model, _: &[f64], _: &StepRecord) {}
}

impl<F: FnMut(&Model, &[f64], &StepRecord)> StepObserver for F {
    fn on_step(&mut self, model: &Model, u: &[f64], record: &StepRecord) {
        self(model, u, record)
    }
}

/// Size of the state change applied by one remodelling sweep, and of the
/// deviation from the homeostatic targets driving it.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepDelta {
    /// max |lam_M - lam_M_h| before the update.
    pub lam_m_dev: f64,
    /// max |change of lam_M_R|.
    pub lam_m_r_change: f64,
    /// max |lam_C - lam_C_h| over the fibre-stretch triplet.
    pub collagen_dev: f64,
}

impl SweepDelta {
    fn merged(&self, other: &SweepDelta) -> SweepDelta {
        SweepDelta {
            lam_m_dev: self.lam_m_dev.max(other.lam_m_dev),
            lam_m_r_change: self.lam_m_r_change.max(other.lam_m_r_change),
            collagen_dev: self.collagen_dev.max(other.collagen_dev),
        }
    }
}

/// Deepest adaptive halving of a remodelling update or pressure increment
/// before a solver failure is reported to the caller.
const MAX_SUBSTEP_DEPTH: usize = 6;

/// A staged simulation in progress. Stage methods may be called individually
/// (in protocol order) or all at once through [`Simulation::run_all`].
pub struct Simulation {
    pub model: Model,
    pub u: Vec<f64>,
    pub settings: SolveSettings,
    pub probes: ProbeSet,
    cfg: RunConfig,
    records: Vec<StepRecord>,
    reference_diameter_mm: Option<f64>,
    peak_stenosis_pct: f64,
    homeostasis_sweeps: usize,
    damage: DamageReport,
    /// Previous-step probe means used for event interpolation, `[s][h]`.
    prev_probe: [[ProbeSample; N_LAYERS]; N_STATIONS],
    prev_p_add: f64,
}

impl Simulation {
    pub fn new(cfg: &RunConfig) -> Result<Simulation, DriverError> {
        let geometry = cfg
            .geometry()
            .expect("validated config has a resolvable geometry");
        let params = cfg.material_params();
        let mesh = Mesh::build_with_angle(
            geometry,
            cfg.mesh.n_radial,
            cfg.mesh.n_circumferential,
            cfg.mesh.n_axial,
            params.phi_a0,
        )?;
        let probes = ProbeSet::new(&mesh)?;
        let model = Model::new(mesh, params, cfg.solver.kappa_kpa)?;
        let u = vec![0.0; model.n_dofs()];
        Ok(Simulation {
            settings: cfg.solve_settings(),
            probes,
            model,
            u,
            cfg: cfg.clone(),
            records: Vec::new(),
            reference_diameter_mm: None,
            peak_stenosis_pct: 0.0,
            homeostasis_sweeps: 0,
            damage: DamageReport::default(),
            prev_probe: [[ProbeSample::default(); N_LAYERS]; N_STATIONS],
            prev_p_add: 0.0,
        })
    }

    /// Runs the four stages in order and consumes the simulation.
    pub fn run_all(mut self, obs: &mut dyn StepObserver) -> Result<RunResult, DriverError> {
        self.run_load(obs)?;
        self.run_homeostasis(obs)?;
        self.run_vasospasm(obs)?;
        self.run_treatment(obs)?;
        Ok(self.finish())
    }

    pub fn finish(self) -> RunResult {
        RunResult {
            records: self.records,
            damage: self.damage,
            reference_diameter_mm: self.reference_diameter_mm.unwrap_or(f64::NAN),
            peak_stenosis_pct: self.peak_stenosis_pct,
            homeostasis_sweeps: self.homeostasis_sweeps,
        }
    }

    /// Ramps luminal pressure and axial pre-stretch to their physiological
    /// values with all evolution laws frozen.
    pub fn run_load(&mut self, obs: &mut dyn StepObserver) -> Result<(), DriverError> {
        let n = self.cfg.stages.load_steps;
        for i in 1..=n {
            let f = i as f64 / n as f64;
            let load = LoadCase {
                pressure: self.cfg.load.pressure_kpa * f,
                axial_stretch: 1.0 + (self.cfg.load.axial_stretch - 1.0) * f,
            };
            let report = self.solve_step(Stage::Load, i, &load)?;
            self.record_step(Stage::Load, i, &load, 0.0, report, obs)?;
        }
        Ok(())
    }

    /// Staggered remodelling sweeps at fixed load until the VSMC stretch and
    /// collagen fibre-stretch deviations from their homeostatic targets fall
    /// below the configured tolerances.
    pub fn run_homeostasis(&mut self, obs: &mut dyn StepObserver) -> Result<(), DriverError> {
        let load = self.physiological_load(0.0);
        let flags = Stage::Homeostasis.flags();
        let mut dev = f64::INFINITY;
        for sweep in 1..=self.cfg.stages.homeostasis_max_sweeps {
            let (delta, report) =
                self.remodel_and_solve(Stage::Homeostasis, sweep, flags, self.cfg.stages.dt, &load, 0)?;
            dev = delta.lam_m_dev;
            if delta.lam_m_dev < self.cfg.stages.homeostasis_tol
                && delta.collagen_dev < self.cfg.stages.collagen_tol
            {
                // The update this sweep applied is already negligible; the
                // current equilibrium stays valid.
                self.homeostasis_sweeps = sweep - 1;
                self.set_stenosis_reference();
                return Ok(());
            }
            self.record_step(Stage::Homeostasis, sweep, &load, 0.0, report, obs)?;
        }
        Err(DriverError::HomeostasisStalled {
            sweeps: self.cfg.stages.homeostasis_max_sweeps,
            dev,
        })
    }

    /// One extra remodelling sweep (with re-solve), returning the size of the
    /// state change it caused. Used to verify that homeostasis is a fixed
    /// point; the change should be negligible after a converged
    /// [`run_homeostasis`].
    pub fn extra_homeostasis_sweep(&mut self) -> Result<SweepDelta, DriverError> {
        let load = self.physiological_load(0.0);
        let fields = self.fields(Stage::Homeostasis, 0)?;
        let delta = self
            .apply_remodel(&fields, Stage::Homeostasis.flags(), self.cfg.stages.dt, 0.0)
            .map_err(|source| DriverError::Remodel {
                stage: Stage::Homeostasis,
                step: 0,
                source,
            })?;
        self.solve_step(Stage::Homeostasis, 0, &load)?;
        Ok(delta)
    }

    /// Fixed-length vasospasm stage: the tone factor relaxes towards its
    /// Gaussian axial target while VSMCs re-establish their homeostatic
    /// stretch on the constricting geometry.
    pub fn run_vasospasm(&mut self, obs: &mut dyn StepObserver) -> Result<(), DriverError> {
        if self.reference_diameter_mm.is_none() {
            self.set_stenosis_reference();
        }
        let load = self.physiological_load(0.0);
        let flags = Stage::Vasospasm.flags();
        for step in 1..=self.cfg.stages.vasospasm_steps {
            let (_, report) =
                self.remodel_and_solve(Stage::Vasospasm, step, flags, self.cfg.stages.dt, &load, 0)?;
            self.record_step(Stage::Vasospasm, step, &load, 0.0, report, obs)?;
        }
        Ok(())
    }

    /// Treatment stage: additional luminal pressure ramps up with all
    /// remodelling frozen while VSMC damage accumulates above its stretch
    /// threshold. The damage increment is scaled by the ramp fraction per
    /// step, so the accumulated damage at a given pressure is independent of
    /// the step count.
    pub fn run_treatment(&mut self, obs: &mut dyn StepObserver) -> Result<(), DriverError> {
        let n = self.cfg.stages.treatment_steps;
        let dt = 1.0 / n as f64;
        let flags = Stage::Treatment.flags();
        self.prev_p_add = 0.0;
        self.prev_probe = self.probe_samples(&self.fields(Stage::Treatment, 0)?);
        for step in 1..=n {
            let p_prev = self.cfg.load.treatment_pressure_kpa * (step - 1) as f64 / n as f64;
            let p_add = self.cfg.load.treatment_pressure_kpa * step as f64 / n as f64;
            let load = self.physiological_load(p_add);
            let report = self.pressurise(Stage::Treatment, step, p_prev, p_add, flags, dt, 0)?;
            self.record_step(Stage::Treatment, step, &load, p_add, report, obs)?;
        }
        Ok(())
    }

    /// One remodelling update followed by a re-solve, with adaptive halving
    /// of the update when the solver cannot track the resulting state jump
    /// (the constricting neck rides close to a structural limit point).
    fn remodel_and_solve(
        &mut self,
        stage: Stage,
        step: usize,
        flags: RemodelFlags,
        dt: f64,
        load: &LoadCase,
        depth: usize,
    ) -> Result<(SweepDelta, crate::solve::SolveReport), DriverError> {
        let fields = self.fields(stage, step)?;
        let saved_states = self.model.states.clone();
        let saved_u = self.u.clone();
        let delta = self
            .apply_remodel(&fields, flags, dt, 0.0)
            .map_err(|source| DriverError::Remodel {
                stage,
                step,
                source,
            })?;
        match solve_equilibrium(&mut self.model, &mut self.u, load, &self.settings) {
            Ok(rep) => Ok((delta, rep)),
            Err(SolveError::NoConvergence { .. }) if depth < MAX_SUBSTEP_DEPTH => {
                self.model.states = saved_states;
                self.u = saved_u;
                let (d1, _) = self.remodel_and_solve(stage, step, flags, 0.5 * dt, load, depth + 1)?;
                let (d2, rep) = self.remodel_and_solve(stage, step, flags, 0.5 * dt, load, depth + 1)?;
                Ok((d1.merged(&d2), rep))
            }
            Err(source) => Err(DriverError::Solve {
                stage,
                step,
                source,
            }),
        }
    }

    /// Advances the luminal pressure from `p_from` to `p_to` and then applies
    /// the post-solve evolution update (damage during treatment), halving the
    /// pressure increment when the solver fails to track a snap.
    #[allow(clippy::too_many_arguments)]
    fn pressurise(
        &mut self,
        stage: Stage,
        step: usize,
        p_from: f64,
        p_to: f64,
        flags: RemodelFlags,
        dt: f64,
        depth: usize,
    ) -> Result<crate::solve::SolveReport, DriverError> {
        let load = self.physiological_load(p_to);
        let saved_u = self.u.clone();
        match solve_equilibrium(&mut self.model, &mut self.u, &load, &self.settings) {
            Ok(rep) => {
                let fields = self.fields(stage, step)?;
                self.apply_remodel(&fields, flags, dt, p_to)
                    .map_err(|source| DriverError::Remodel {
                        stage,
                        step,
                        source,
                    })?;
                Ok(rep)
            }
            Err(SolveError::NoConvergence { .. }) if depth < MAX_SUBSTEP_DEPTH => {
                self.u = saved_u;
                let mid = 0.5 * (p_from + p_to);
                self.pressurise(stage, step, p_from, mid, flags, 0.5 * dt, depth + 1)?;
                self.pressurise(stage, step, mid, p_to, flags, 0.5 * dt, depth + 1)
            }
            Err(source) => Err(DriverError::Solve {
                stage,
                step,
                source,
            }),
        }
    }

    fn physiological_load(&self, p_add: f64) -> LoadCase {
        LoadCase {
            pressure: self.cfg.load.pressure_kpa + p_add,
            axial_stretch: self.cfg.load.axial_stretch,
        }
    }

    fn solve_step(
        &mut self,
        stage: Stage,
        step: usize,
        load: &LoadCase,
    ) -> Result<crate::solve::SolveReport, DriverError> {
        solve_equilibrium(&mut self.model, &mut self.u, load, &self.settings).map_err(|source| {
            DriverError::Solve {
                stage,
                step,
                source,
            }
        })
    }

    fn fields(&self, stage: Stage, step: usize) -> Result<Vec<ElementField>, DriverError> {
        element_fields(&self.model, &self.u).map_err(|source| DriverError::Solve {
            stage,
            step,
            source,
        })
    }

    /// One explicit update of the evolution laws selected by `flags`.
    /// `dt` is the remodelling pseudo-time step, or the ramp fraction per
    /// step during treatment; `p_add` is only used for damage bookkeeping.
    fn apply_remodel(
        &mut self,
        fields: &[ElementField],
        flags: RemodelFlags,
        dt: f64,
        p_add: f64,
    ) -> Result<SweepDelta, RemodelError> {
        let p = self.model.params.clone();
        let mut delta = SweepDelta::default();
        for (e, field) in fields.iter().enumerate() {
            for q in 0..8 {
                let gp = &field.gp[q];
                let state = &mut self.model.states[e][q];
                if flags.vsmc {
                    let lam_m = gp.im.sqrt() / state.lam_m_r;
                    let updated =
                        remodel_vsmc_step(state.lam_m_r, lam_m, p.lam_m_h, p.alpha_m, dt)?;
                    delta.lam_m_dev = delta.lam_m_dev.max((lam_m - p.lam_m_h).abs());
                    delta.lam_m_r_change =
                        delta.lam_m_r_change.max((updated - state.lam_m_r).abs());
                    state.lam_m_r = updated;
                }
                if flags.collagen {
                    // The two helical families see the same stretch in an
                    // axisymmetric state; remodel their shared recruitment
                    // distribution with the family average.
                    let lam = (0.5 * (gp.i4 + gp.i6)).sqrt();
                    let current = collagen_stretch_triplet(lam, &state.triplet);
                    for k in 0..3 {
                        delta.collagen_dev =
                            delta.collagen_dev.max((current[k] - p.lam_c_h[k]).abs());
                    }
                    state.triplet = remodel_collagen_step(
                        &state.triplet,
                        current,
                        p.lam_c_h,
                        p.alpha_c,
                        dt,
                    )?;
                }
                if flags.k_a {
                    let target = k_a_target(state.z_ref, p.k_a_max, p.z_mid, p.sigma);
                    state.k_a = k_a_step(state.k_a, target, dt);
                }
                if flags.damage {
                    let lam_m = gp.im.sqrt() / state.lam_m_r;
                    state.d_m =
                        damage_step(state.d_m, lam_m * lam_m, p.i_md_min, p.alpha_d * dt);
                }
            }
        }
        let _ = p_add;
        Ok(delta)
    }

    /// Deformed luminal diameter (mm) at an axial node plane: twice the mean
    /// radial coordinate of the inner-surface nodes there.
    fn inner_diameter_mm(&self, plane: usize) -> f64 {
        let mesh = &self.model.mesh;
        let npr = mesh.nr + 1;
        let npt = mesh.nt + 1;
        let mut sum = 0.0;
        for it in 0..npt {
            let n = plane * npt * npr + it * npr;
            let x = mesh.nodes[n].x + self.u[3 * n];
            let y = mesh.nodes[n].y + self.u[3 * n + 1];
            sum += x.hypot(y);
        }
        2.0 * sum / npt as f64 * 1e3
    }

    fn set_stenosis_reference(&mut self) {
        let d = self.inner_diameter_mm(self.probes.node_planes[N_STATIONS - 1]);
        self.reference_diameter_mm = Some(d);
    }

    fn probe_samples(
        &self,
        fields: &[ElementField],
    ) -> [[ProbeSample; N_LAYERS]; N_STATIONS] {
        let mut out = [[ProbeSample::default(); N_LAYERS]; N_STATIONS];
        for s in 0..N_STATIONS {
            for h in 0..N_LAYERS {
                let e = self.probes.elems[s][h];
                let mut acc = ProbeSample::default();
                for q in 0..8 {
                    let state = &self.model.states[e][q];
                    acc.lam_m += fields[e].gp[q].im.sqrt() / state.lam_m_r;
                    acc.lam_m_r += state.lam_m_r;
                    acc.k_a += state.k_a;
                    acc.d_m += state.d_m;
                }
                out[s][h] = ProbeSample {
                    lam_m: acc.lam_m / 8.0,
                    lam_m_r: acc.lam_m_r / 8.0,
                    k_a: acc.k_a / 8.0,
                    d_m: acc.d_m / 8.0,
                };
            }
        }
        out
    }

    fn record_step(
        &mut self,
        stage: Stage,
        step: usize,
        load: &LoadCase,
        p_add: f64,
        report: crate::solve::SolveReport,
        obs: &mut dyn StepObserver,
    ) -> Result<(), DriverError> {
        let fields = self.fields(stage, step)?;
        let probes = self.probe_samples(&fields);
        let mut inner_diameter_mm = [0.0; N_STATIONS];
        for s in 0..N_STATIONS {
            inner_diameter_mm[s] = self.inner_diameter_mm(self.probes.node_planes[s]);
        }
        let stenosis_pct = self
            .reference_diameter_mm
            .map(|d_ref| measure_stenosis(d_ref, inner_diameter_mm[N_STATIONS - 1]));
        if let Some(st) = stenosis_pct {
            self.peak_stenosis_pct = self.peak_stenosis_pct.max(st);
        }
        let record = StepRecord {
            stage,
            step,
            pressure_kpa: load.pressure,
            p_add_kpa: p_add,
            axial_stretch: load.axial_stretch,
            inner_diameter_mm,
            stenosis_pct,
            probes,
            max_vol_error: report.max_vol_error,
        };
        if stage == Stage::Treatment {
            self.update_damage_report(&record);
        }
        obs.on_step(&self.model, &self.u, &record);
        self.records.push(record);
        Ok(())
    }

    /// Detects onset (threshold crossing of the element-mean cell stretch)
    /// and completion (element-mean damage reaching 1) for every probe,
    /// interpolating the additional pressure between steps.
    fn update_damage_report(&mut self, record: &StepRecord) {
        let lam_thr = self.model.params.i_md_min.sqrt();
        let record_index = self.records.len();
        for s in 0..N_STATIONS {
            for h in 0..N_LAYERS {
                let prev = self.prev_probe[s][h];
                let cur = record.probes[s][h];
                let cell = &mut self.damage.cells[s][h];
                if cell.onset.is_none() && cur.d_m > 0.0 {
                    // Interpolate to the stretch-threshold crossing if the
                    // bracketing samples allow it, else take this step.
                    let frac = if prev.lam_m < lam_thr && cur.lam_m > prev.lam_m {
                        ((lam_thr - prev.lam_m) / (cur.lam_m - prev.lam_m)).clamp(0.0, 1.0)
                    } else {
                        1.0
                    };
                    cell.onset = Some(DamagePoint {
                        p_add_kpa: self.prev_p_add + frac * (record.p_add_kpa - self.prev_p_add),
                        lam_m: prev.lam_m + frac * (cur.lam_m - prev.lam_m),
                        record_index,
                    });
                }
                if cell.complete.is_none() && cur.d_m >= 1.0 {
                    cell.complete = Some(DamagePoint {
                        p_add_kpa: record.p_add_kpa,
                        lam_m: cur.lam_m,
                        record_index,
                    });
                }
                self.prev_probe[s][h] = cur;
            }
        }
        self.prev_p_add = record.p_add_kpa;
    }
}

/// Stenosis percentage from reference and current luminal diameters.
pub fn measure_stenosis(d_ref: f64, d_current: f64) -> f64 {
    100.0 * (d_ref - d_current) / d_ref
}

/// One configuration of a parameter study with its completed run.
pub struct StudyCase {
    pub label: String,
    pub config: RunConfig,
    pub result: RunResult,
}

/// Runs the staged protocol for several unloaded diameters (mm), scaling the
/// wall thickness to keep H/R fixed and leaving all material parameters
/// unchanged.
pub fn run_diameter_study(
    base: &RunConfig,
    diameters_mm: &[f64],
    obs: &mut dyn StepObserver,
) -> Result<Vec<StudyCase>, DriverError> {
    let ratio = base
        .thickness_mm()
        .expect("validated config has a resolvable thickness")
        / base.geometry.radius_mm;
    let mut out = Vec::with_capacity(diameters_mm.len());
    for &d in diameters_mm {
        let mut cfg = base.clone();
        cfg.geometry.radius_mm = 0.5 * d;
        cfg.geometry.thickness_mm = None;
        cfg.geometry.thickness_ratio = Some(ratio);
        let result = Simulation::new(&cfg)?.run_all(obs)?;
        out.push(StudyCase {
            label: format!("diameter_{d}mm"),
            config: cfg,
            result,
        });
    }
    Ok(out)
}

/// Runs the staged protocol for several thickness-to-radius ratios at fixed
/// unloaded radius.
pub fn run_thickness_study(
    base: &RunConfig,
    ratios: &[f64],
    obs: &mut dyn StepObserver,
) -> Result<Vec<StudyCase>, DriverError> {
    let mut out = Vec::with_capacity(ratios.len());
    for &hr in ratios {
        let mut cfg = base.clone();
        cfg.geometry.thickness_mm = None;
        cfg.geometry.thickness_ratio = Some(hr);
        let result = Simulation::new(&cfg)?.run_all(obs)?;
        out.push(StudyCase {
            label: format!("hr_{hr}"),
            config: cfg,
            result,
        });
    }
    Ok(out)
}
