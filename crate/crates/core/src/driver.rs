//! Run configuration, the adaptive loop and uniform convergence studies.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{build_maps, solve_problem, DiscreteSolution, Maps, ProblemData, Spaces, ThetaMode, Variant};
use crate::error::{Error, Result};
use crate::estimator::{dorfler_mark, energy_error, estimate, exact_energy_norm, indices, interpolation_error, to_csv, trace_shift, ErrorReport};
use crate::exact::{ExactFields, RigidRotation, Shifted, SmoothCase};
use crate::fespace::{normal_jump, weighted_trace, Viscosity};
use crate::kellogg::{solve_kellogg, table, ExactSolution, KelloggData};
use crate::mesh::{build_structured_mesh, Mesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    /// Singular solution from data set `data` (1..=5), or any `alpha`.
    Kellogg {
        #[serde(default)]
        data: Option<usize>,
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// `smooth` (trigonometric stream function) or `rigid` (rigid rotation).
    Manufactured {
        name: String,
        #[serde(default = "default_nu1")]
        nu1: f64,
    },
}

fn default_nu1() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Stopping {
    pub rel_err: Option<f64>,
    pub eta: Option<f64>,
    pub max_loops: Option<usize>,
    pub max_elements: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub spaces: Spaces,
    pub theta: ThetaMode,
    pub variant: Variant,
    pub fraction: f64,
    pub stopping: Stopping,
    pub initial_n: usize,
    pub uniform_sizes: Vec<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSource::Kellogg { data: Some(1), alpha: None },
            spaces: Spaces::Rt0P1,
            theta: ThetaMode::Constant1,
            variant: Variant::NonSymmetric,
            fraction: 0.15,
            stopping: Stopping { rel_err: Some(0.11), eta: None, max_loops: Some(200), max_elements: Some(200_000) },
            initial_n: 4,
            uniform_sizes: vec![4, 8, 16, 32],
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_n == 0 || self.initial_n % 2 != 0 {
            return Err(Error::Config(format!("initial_n must be positive and even, got {}", self.initial_n)));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config(format!("fraction must lie in (0, 1), got {}", self.fraction)));
        }
        for (name, v) in [("rel_err", self.stopping.rel_err), ("eta", self.stopping.eta)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("stopping.{name} must be positive, got {v}")));
                }
            }
        }
        if self.uniform_sizes.iter().any(|&n| n == 0 || n % 2 != 0) {
            return Err(Error::Config("uniform_sizes must be positive and even".into()));
        }
        match &self.problem {
            ProblemSource::Kellogg { data: None, alpha: None } => Err(Error::Config("kellogg problem needs data or alpha".into())),
            ProblemSource::Kellogg { data: Some(d), .. } if !(1..=5).contains(d) => Err(Error::Config(format!("data set must be 1..=5, got {d}"))),
            ProblemSource::Kellogg { alpha: Some(a), .. } if !(*a > 0.0 && *a < 1.0) => Err(Error::Config(format!("alpha must lie in (0, 1), got {a}"))),
            ProblemSource::Manufactured { name, .. } if name != "smooth" && name != "rigid" => Err(Error::Config(format!("unknown manufactured case {name:?}"))),
            ProblemSource::Manufactured { nu1, .. } if !(*nu1 > 0.0) => Err(Error::Config(format!("nu1 must be positive, got {nu1}"))),
            _ => Ok(()),
        }
    }
}

/// Coefficients for a Kellogg problem source: a data set (seeded from its
/// table) or a free `α`, seeded from the nearest tabulated set.
pub fn kellogg_coefficients(data: Option<usize>, alpha: Option<f64>) -> Result<KelloggData> {
    match (data, alpha) {
        (Some(d), a) => {
            let seed = table(d)?;
            solve_kellogg(a.unwrap_or(seed.alpha), Some(&seed))
        }
        (None, Some(a)) => {
            let nearest = crate::kellogg::TABLES
                .iter()
                .min_by(|p, q| (p.alpha - a).abs().total_cmp(&(q.alpha - a).abs()))
                .copied()
                .expect("tables are non-empty");
            solve_kellogg(a, Some(&nearest)).or_else(|_| solve_kellogg(a, None))
        }
        (None, None) => Err(Error::Config("kellogg problem needs data or alpha".into())),
    }
}

/// Per-loop constraint and conformity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Audit {
    pub weighted_trace: f64,
    pub normal_jump: f64,
    pub mesh_ok: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub reports: Vec<ErrorReport>,
    pub audits: Vec<Audit>,
    pub mesh: Mesh,
    pub kellogg: Option<KelloggData>,
}

fn dofs(maps: &Maps) -> usize {
    maps.sigma.n_dofs + maps.u.n_dofs
}

/// Stopping test on a completed loop.
fn should_stop(stop: &Stopping, r: &ErrorReport) -> bool {
    stop.rel_err.is_some_and(|t| r.rel_err < t)
        || stop.eta.is_some_and(|t| r.eta < t)
        || stop.max_loops.is_some_and(|m| r.k >= m)
        || stop.max_elements.is_some_and(|m| r.n >= m)
}

fn solve_on(mesh: &Mesh, cfg: &RunConfig, exact: &impl ExactFields) -> Result<(Maps, DiscreteSolution)> {
    let maps = build_maps(mesh, cfg.spaces);
    let f = |p| exact.source(p);
    let g = |p| exact.velocity(p);
    let data = ProblemData::from_exact(exact, &f, &g, cfg.variant, cfg.theta, cfg.spaces);
    let sol = solve_problem(mesh, &maps, &data)?;
    Ok((maps, sol))
}

fn adaptive_loop(cfg: &RunConfig, exact: &impl ExactFields) -> Result<(Vec<ErrorReport>, Vec<Audit>, Mesh)> {
    let nu = exact.viscosity();
    let mut mesh = build_structured_mesh(cfg.initial_n)?;
    let mut reports = Vec::new();
    let mut audits = Vec::new();
    for k in 0.. {
        let step = (|| -> Result<(ErrorReport, Audit, Vec<f64>)> {
            let (maps, sol) = solve_on(&mesh, cfg, exact)?;
            let est = estimate(&mesh, &maps, &nu, cfg.theta, &sol, &|p| exact.source(p));
            let err = energy_error(&mesh, &maps, cfg.theta, &sol, exact);
            let interp = interpolation_error(&mesh, &maps, cfg.theta, exact)?;
            let norm = exact_energy_norm(&mesh, &maps, cfg.theta, exact);
            let report = indices(k, mesh.num_triangles(), dofs(&maps), est.global(), err, interp, norm);
            let audit = Audit {
                weighted_trace: weighted_trace(&sol.sigma, &maps.sigma, &mesh, &nu).abs(),
                normal_jump: normal_jump(&sol.sigma, &maps.sigma, &mesh),
                mesh_ok: mesh.audit().is_ok(),
            };
            Ok((report, audit, est.indicators))
        })();
        let (report, audit, indicators) = match step {
            Ok(s) => s,
            Err(e) => return Err(Error::Aborted { loop_index: k, source: Box::new(e), partial: reports }),
        };
        reports.push(report);
        audits.push(audit);
        if should_stop(&cfg.stopping, &report) {
            break;
        }
        let marked = dorfler_mark(&crate::estimator::Estimate { indicators }, cfg.fraction);
        if marked.is_empty() {
            break;
        }
        mesh = mesh.bisect(&marked).map_err(|e| Error::Aborted { loop_index: k, source: Box::new(e), partial: reports.clone() })?;
    }
    Ok((reports, audits, mesh))
}

/// Exact solution of a problem source, shifted so that its stress has zero
/// ν⁻¹-weighted trace.
enum Exact {
    Kellogg(Shifted<ExactSolution>, KelloggData),
    Smooth(Shifted<SmoothCase>),
    Rigid(RigidRotation),
}

fn build_exact(problem: &ProblemSource) -> Result<Exact> {
    Ok(match problem {
        ProblemSource::Kellogg { data, alpha } => {
            let k = kellogg_coefficients(*data, *alpha)?;
            let inner = ExactSolution::new(k);
            let shift = trace_shift(&inner);
            Exact::Kellogg(Shifted { inner, shift }, k)
        }
        ProblemSource::Manufactured { name, nu1 } if name == "smooth" => {
            let inner = SmoothCase { nu: Viscosity::checkerboard(*nu1) };
            let shift = trace_shift(&inner);
            Exact::Smooth(Shifted { inner, shift })
        }
        ProblemSource::Manufactured { nu1, .. } => Exact::Rigid(RigidRotation { nu: Viscosity::checkerboard(*nu1) }),
    })
}

/// SOLVE → ESTIMATE → MARK → REFINE until the stopping rule fires. Output
/// files are written when `output_dir` is set.
pub fn run_adaptive(cfg: &RunConfig) -> Result<AdaptiveRun> {
    cfg.validate()?;
    let exact = build_exact(&cfg.problem)?;
    let (reports, audits, mesh, kellogg) = match &exact {
        Exact::Kellogg(e, k) => {
            let (r, a, m) = adaptive_loop(cfg, e)?;
            (r, a, m, Some(*k))
        }
        Exact::Smooth(e) => {
            let (r, a, m) = adaptive_loop(cfg, e)?;
            (r, a, m, None)
        }
        Exact::Rigid(e) => {
            let (r, a, m) = adaptive_loop(cfg, e)?;
            (r, a, m, None)
        }
    };
    let run = AdaptiveRun { reports, audits, mesh, kellogg };
    if let Some(dir) = &cfg.output_dir {
        write_adaptive_outputs(dir, &run)?;
    }
    Ok(run)
}

fn two_column(rows: impl Iterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for (x, y) in rows {
        writeln!(s, "{x:.10e} {y:.10e}").unwrap();
    }
    s
}

pub fn write_adaptive_outputs(dir: &Path, run: &AdaptiveRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), to_csv(&run.reports))?;
    run.mesh.write_text(&dir.join("final_mesh.txt"))?;
    let labels: Vec<f64> = run.mesh.triangles.iter().map(|t| t.label as f64).collect();
    run.mesh.write_vtk(&dir.join("final_mesh.vtk"), &[("subdomain", &labels)])?;
    let r = &run.reports;
    std::fs::write(dir.join("dof_eta.dat"), two_column(r.iter().map(|x| (x.dofs as f64, x.eta))))?;
    std::fs::write(dir.join("dof_energy_error.dat"), two_column(r.iter().map(|x| (x.dofs as f64, x.energy_err))))?;
    std::fs::write(dir.join("dof_interp_error.dat"), two_column(r.iter().map(|x| (x.dofs as f64, x.interp_full_err))))?;
    if let Some(first) = r.first() {
        let c = first.energy_err * (first.dofs as f64).sqrt();
        std::fs::write(dir.join("dof_reference.dat"), two_column(r.iter().map(|x| (x.dofs as f64, c / (x.dofs as f64).sqrt()))))?;
    }
    if let Some(k) = &run.kellogg {
        std::fs::write(dir.join("kellogg.json"), serde_json::to_string_pretty(k)?)?;
    }
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformRow {
    pub n: usize,
    pub elements: usize,
    pub dofs: usize,
    pub h: f64,
    pub energy_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformStudy {
    pub rows: Vec<UniformRow>,
    /// Fitted order in `h`; `None` when every error is at solver tolerance.
    pub rate: Option<f64>,
    pub exact: bool,
}

impl UniformStudy {
    pub fn to_text(&self) -> String {
        let mut s = String::from("n,elements,dofs,h,energy_err\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{:.6e},{:.10e}", r.n, r.elements, r.dofs, r.h, r.energy_err).unwrap();
        }
        match self.rate {
            Some(rate) => writeln!(s, "rate,{rate:.6}").unwrap(),
            None => writeln!(s, "rate,exact").unwrap(),
        }
        s
    }
}

/// Level below which errors count as solver round-off.
pub const EXACT_TOLERANCE: f64 = 1e-9;

fn uniform_with(cfg: &RunConfig, exact: &impl ExactFields) -> Result<UniformStudy> {
    let mut rows = Vec::new();
    for &n in &cfg.uniform_sizes {
        let mesh = build_structured_mesh(n)?;
        let (maps, sol) = solve_on(&mesh, cfg, exact)?;
        let err = energy_error(&mesh, &maps, cfg.theta, &sol, exact);
        rows.push(UniformRow { n, elements: mesh.num_triangles(), dofs: dofs(&maps), h: 2.0 / n as f64, energy_err: err });
    }
    let exact_flag = rows.iter().all(|r| r.energy_err <= EXACT_TOLERANCE);
    let rate = if exact_flag || rows.len() < 2 {
        None
    } else {
        let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.energy_err).collect();
        Some(loglog_slope(&h, &e))
    };
    Ok(UniformStudy { rows, rate, exact: exact_flag })
}

/// Energy errors on structured meshes of sizes `uniform_sizes` and the
/// fitted convergence order.
pub fn run_uniform(cfg: &RunConfig) -> Result<UniformStudy> {
    cfg.validate()?;
    let study = match build_exact(&cfg.problem)? {
        Exact::Kellogg(e, _) => uniform_with(cfg, &e)?,
        Exact::Smooth(e) => uniform_with(cfg, &e)?,
        Exact::Rigid(e) => uniform_with(cfg, &e)?,
    };
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("uniform.csv"), study.to_text())?;
    }
    Ok(study)
}

/// One row of a reference table for the adaptive experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub value: f64,
    pub k: usize,
    pub n: usize,
    pub a: f64,
    pub b: f64,
}

/// Tabulated adaptive results. `value` is ind-err (tables 4 to 6) or
/// eff-index (7 to 9); `a, b` are the energy and interpolation errors, or
/// `η` and the energy error.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceTable {
    pub number: usize,
    pub spaces: Spaces,
    pub theta: ThetaMode,
    pub rel_err: f64,
    pub efficiency: bool,
    pub rows: [ReferenceRow; 5],
}

const fn row(value: f64, k: usize, n: usize, a: f64, b: f64) -> ReferenceRow {
    ReferenceRow { value, k, n, a, b }
}

pub const REFERENCE_TABLES: [ReferenceTable; 6] = [
    ReferenceTable {
        number: 4,
        spaces: Spaces::Rt0P1,
        theta: ThetaMode::Constant1,
        rel_err: 0.11,
        efficiency: false,
        rows: [
            row(0.9855, 49, 4416, 0.4914, 0.4986),
            row(0.9558, 39, 4548, 0.2279, 0.2384),
            row(0.9437, 27, 3318, 0.1677, 0.1777),
            row(0.9242, 19, 2064, 0.2285, 0.2472),
            row(0.9239, 14, 1296, 0.7443, 0.7750),
        ],
    },
    ReferenceTable {
        number: 5,
        spaces: Spaces::Rt0P1,
        theta: ThetaMode::MeshSquared,
        rel_err: 0.11,
        efficiency: false,
        rows: [
            row(0.9798, 57, 3896, 0.4665, 0.4761),
            row(0.9550, 43, 4114, 0.2237, 0.2343),
            row(0.9454, 29, 3002, 0.1675, 0.1772),
            row(0.9308, 21, 2084, 0.2160, 0.2320),
            row(0.9239, 15, 1256, 0.7333, 0.7937),
        ],
    },
    ReferenceTable {
        number: 6,
        spaces: Spaces::Bdm1P2,
        theta: ThetaMode::MeshSquared,
        rel_err: 0.05,
        efficiency: false,
        rows: [
            row(0.9820, 101, 4140, 0.0605, 0.0616),
            row(0.9761, 63, 2528, 0.0382, 0.0391),
            row(0.9762, 40, 1564, 0.0311, 0.0319),
            row(0.9693, 28, 1048, 0.0410, 0.0423),
            row(0.9458, 21, 768, 0.1225, 0.1295),
        ],
    },
    ReferenceTable {
        number: 7,
        spaces: Spaces::Rt0P1,
        theta: ThetaMode::Constant1,
        rel_err: 0.11,
        efficiency: true,
        rows: [
            row(1.1737, 49, 4388, 0.4228, 0.4962),
            row(1.2099, 39, 4548, 0.1883, 0.2279),
            row(1.2123, 27, 3318, 0.1383, 0.1677),
            row(1.2082, 19, 2064, 0.1891, 0.2285),
            row(1.1909, 14, 1296, 0.6250, 0.7443),
        ],
    },
    ReferenceTable {
        number: 8,
        spaces: Spaces::Rt0P1,
        theta: ThetaMode::MeshSquared,
        rel_err: 0.11,
        efficiency: true,
        rows: [
            row(1.2973, 57, 3896, 0.3596, 0.4665),
            row(1.2717, 43, 4114, 0.1759, 0.2237),
            row(1.2512, 29, 3002, 0.1339, 0.1675),
            row(1.2413, 21, 2084, 0.1740, 0.2160),
            row(1.2346, 15, 1256, 0.5939, 0.7333),
        ],
    },
    ReferenceTable {
        number: 9,
        spaces: Spaces::Bdm1P2,
        theta: ThetaMode::MeshSquared,
        rel_err: 0.02,
        efficiency: true,
        rows: [
            row(1.3586, 101, 4140, 0.0445, 0.0605),
            row(1.3293, 63, 2528, 0.0287, 0.0382),
            row(1.3038, 40, 1564, 0.0239, 0.0311),
            row(1.2751, 28, 1048, 0.0321, 0.0410),
            row(1.2417, 21, 768, 0.0986, 0.1225),
        ],
    },
];

/// Adaptive run for data set `data` with the setup of a reference table.
pub fn table_config(t: &ReferenceTable, data: usize) -> RunConfig {
    RunConfig {
        problem: ProblemSource::Kellogg { data: Some(data), alpha: None },
        spaces: t.spaces,
        theta: t.theta,
        stopping: Stopping { rel_err: Some(t.rel_err), eta: None, max_loops: Some(400), max_elements: Some(200_000) },
        ..RunConfig::default()
    }
}

/// Reproduced row next to its reference.
#[derive(Debug, Clone, Copy)]
pub struct TableComparison {
    pub table: usize,
    pub data: usize,
    pub reference: ReferenceRow,
    pub computed: ErrorReport,
}

impl TableComparison {
    pub fn value(&self, efficiency: bool) -> f64 {
        if efficiency {
            self.computed.eff_index
        } else {
            self.computed.ind_err
        }
    }
}

/// Text diff of the Kellogg coefficient tables against their solved values.
pub fn regress_kellogg() -> Result<(String, f64)> {
    let mut s = String::new();
    let mut worst: f64 = 0.0;
    for (id, t) in crate::kellogg::TABLES.iter().enumerate() {
        let sol = solve_kellogg(t.alpha, Some(t))?;
        let mut dev = (sol.nu1 - t.nu1).abs();
        for i in 0..4 {
            for j in 0..4 {
                dev = dev.max((sol.coeffs[i][j] - t.coeffs[i][j]).abs());
            }
        }
        worst = worst.max(dev);
        writeln!(s, "Data{}: alpha {:.2} nu1 {:.8} (table {:.4}) max coefficient deviation {:.2e}", id + 1, t.alpha, sol.nu1, t.nu1, dev).unwrap();
        s.push_str(&sol.format_table());
    }
    Ok((s, worst))
}

/// Runs every data set for one reference table.
pub fn regress_table(t: &ReferenceTable) -> Result<Vec<TableComparison>> {
    (1..=5)
        .map(|d| {
            let run = run_adaptive(&table_config(t, d))?;
            let computed = *run.reports.last().expect("at least one loop");
            Ok(TableComparison { table: t.number, data: d, reference: t.rows[d - 1], computed })
        })
        .collect()
}

pub fn format_comparison(t: &ReferenceTable, rows: &[TableComparison]) -> String {
    let name = if t.efficiency { "eff-index" } else { "ind-err" };
    let mut s = format!("Table {} ({:?}, {:?}, rel-err < {}): {name}\n", t.number, t.spaces, t.theta, t.rel_err);
    writeln!(s, "{:>6} {:>10} {:>10} {:>9} {:>5} {:>5} {:>7} {:>7}", "", "reference", "computed", "diff", "k_ref", "k", "n_ref", "n").unwrap();
    for r in rows {
        let v = r.value(t.efficiency);
        writeln!(
            s,
            "{:>6} {:>10.4} {:>10.4} {:>+9.4} {:>5} {:>5} {:>7} {:>7}",
            format!("Data{}", r.data),
            r.reference.value,
            v,
            v - r.reference.value,
            r.reference.k,
            r.computed.k,
            r.reference.n,
            r.computed.n
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_roundtrips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = RunConfig::from_json(r#"{"problem": {"kind": "kellogg", "data": 3}, "spaces": "Bdm1P2"}"#).unwrap();
        assert_eq!(cfg.fraction, 0.15);
        assert_eq!(cfg.initial_n, 4);
        assert_eq!(cfg.spaces, Spaces::Bdm1P2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            r#"{"initial_n": 3}"#,
            r#"{"fraction": 1.5}"#,
            r#"{"stopping": {"rel_err": -1.0}}"#,
            r#"{"problem": {"kind": "kellogg", "data": 9}}"#,
            r#"{"problem": {"kind": "manufactured", "name": "nope"}}"#,
            r#"{"uniform_sizes": [4, 5]}"#,
        ] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_loops_gives_single_row() {
        let cfg = RunConfig {
            problem: ProblemSource::Manufactured { name: "smooth".into(), nu1: 5.0 },
            stopping: Stopping { max_loops: Some(0), ..Stopping::default() },
            ..RunConfig::default()
        };
        let run = run_adaptive(&cfg).unwrap();
        assert_eq!(run.reports.len(), 1);
        assert_eq!(run.reports[0].n, 128);
    }

    #[test]
    fn rigid_rotation_is_flagged_exact() {
        let cfg = RunConfig {
            problem: ProblemSource::Manufactured { name: "rigid".into(), nu1: 100.0 },
            uniform_sizes: vec![4, 8],
            ..RunConfig::default()
        };
        let study = run_uniform(&cfg).unwrap();
        assert!(study.exact);
        assert!(study.rate.is_none());
        assert!(study.to_text().contains("rate,exact"));
    }

    #[test]
    fn loops_increase_element_count() {
        let cfg = RunConfig {
            problem: ProblemSource::Kellogg { data: Some(5), alpha: None },
            stopping: Stopping { max_loops: Some(4), ..Stopping::default() },
            ..RunConfig::default()
        };
        let run = run_adaptive(&cfg).unwrap();
        assert_eq!(run.reports.len(), 5);
        for w in run.reports.windows(2) {
            assert!(w[1].n > w[0].n);
        }
        for a in &run.audits {
            assert!(a.mesh_ok && a.weighted_trace <= 1e-10 && a.normal_jump <= 1e-12);
        }
    }

    #[test]
    fn outputs_are_deterministic() {
        let cfg = |dir: &Path| RunConfig {
            problem: ProblemSource::Kellogg { data: Some(4), alpha: None },
            stopping: Stopping { max_loops: Some(2), ..Stopping::default() },
            output_dir: Some(dir.to_path_buf()),
            ..RunConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_adaptive(&cfg(a.path())).unwrap();
        run_adaptive(&cfg(b.path())).unwrap();
        for f in ["report.csv", "final_mesh.txt", "dof_eta.dat", "dof_energy_error.dat", "dof_reference.dat", "kellogg.json"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
