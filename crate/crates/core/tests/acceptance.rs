use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};

use amfem::assembly::{bilinear_form, build_maps, pair_norms_sq, solve_problem, ProblemData, Spaces, ThetaMode, Variant};
use amfem::driver::{loglog_slope, run_adaptive, run_uniform, table_config, AdaptiveRun, ProblemSource, RunConfig, REFERENCE_TABLES};
use amfem::estimator::ErrorReport;
use amfem::exact::{ExactFields, Shifted};
use amfem::fespace::{trace_correction, Viscosity};
use amfem::kellogg::{kellogg_residual, max_abs, solve_kellogg, table, ExactSolution, TABLES};
use amfem::mesh::{build_structured_mesh, Mesh};
use amfem::tensor::Vec2;

fn report(criterion: usize, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {criterion:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" }).unwrap();
}

#[test]
fn criterion_01_kellogg_regression() {
    let mut worst_dev: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for t in &TABLES {
        let start = Instant::now();
        let sol = solve_kellogg(t.alpha, Some(t)).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        worst_res = worst_res.max(max_abs(&kellogg_residual(&sol)));
        worst_dev = worst_dev.max((sol.nu1 - t.nu1).abs());
        for i in 0..4 {
            for j in 0..4 {
                worst_dev = worst_dev.max((sol.coeffs[i][j] - t.coeffs[i][j]).abs());
            }
        }
    }
    let pass = worst_res <= 1e-10 && worst_dev <= 5e-4 && slowest < 1.0;
    report(1, pass, &format!("residual {worst_res:.2e} <= 1e-10, deviation {worst_dev:.2e} <= 5e-4, slowest {slowest:.3}s < 1s"));
    assert!(pass);
}

#[test]
fn criterion_02_exact_solution_physics() {
    let start = Instant::now();
    let mut rng = rand::rngs::StdRng::seed_from_u64(2);
    let mut div_u: f64 = 0.0;
    let mut jumps: f64 = 0.0;
    let mut div_sigma: f64 = 0.0;
    for id in 1..=5 {
        let e = ExactSolution::new(solve_kellogg(table(id).unwrap().alpha, Some(&table(id).unwrap())).unwrap());
        for _ in 0..1000 {
            let q = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let g = e.eval_exact(q).unwrap().grad_u;
            div_u = div_u.max(g.trace().abs() / g.norm().max(1.0));
        }
        jumps = jumps.max(e.check_jumps(&[1e-3, 0.05, 0.2, 0.5, 0.9, 1.0]));
        let mut checked = 0;
        while checked < 200 {
            let q = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if q.x.abs() < 0.05 || q.y.abs() < 0.05 {
                continue;
            }
            checked += 1;
            let i = amfem::kellogg::quadrant_of(q);
            let r = q.norm();
            let h = 1e-5 * r;
            let s = |p: Vec2| e.eval_in(i, p).unwrap().sigma;
            let dx = (s(q + Vec2::new(h, 0.0)) - s(q - Vec2::new(h, 0.0))) * (0.5 / h);
            let dy = (s(q + Vec2::new(0.0, h)) - s(q - Vec2::new(0.0, h))) * (0.5 / h);
            let div = Vec2::new(dx.t11 + dy.t12, dx.t21 + dy.t22);
            div_sigma = div_sigma.max(div.norm() * r / s(q).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = div_u <= 1e-10 && jumps <= 1e-8 && div_sigma <= 1e-4 && secs < 5.0;
    report(2, pass, &format!("|div u| {div_u:.2e} <= 1e-10, jumps {jumps:.2e} <= 1e-8, fd div sigma {div_sigma:.2e} <= 1e-4, {secs:.2}s < 5s"));
    assert!(pass);
}

fn test_mesh() -> Mesh {
    let mesh = build_structured_mesh(4).unwrap();
    let mesh = mesh.bisect(&[0, 7, 40, 77, 101]).unwrap();
    let n = mesh.num_triangles();
    mesh.bisect(&[1, n / 2, n - 1]).unwrap()
}

/// Random discrete pair with zero boundary velocity and zero weighted trace.
fn random_pair(rng: &mut impl Rng, mesh: &Mesh, maps: &amfem::assembly::Maps, nu: &Viscosity) -> (Vec<f64>, Vec<f64>) {
    let sigma: Vec<f64> = (0..maps.sigma.n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sigma = trace_correction(&sigma, &maps.sigma, mesh, nu);
    let u = (0..maps.u.n_dofs).map(|d| if maps.u.boundary[d] { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
    (sigma, u)
}

fn viscosities() -> [Viscosity; 2] {
    [table(1).unwrap().viscosity(), table(5).unwrap().viscosity()]
}

#[test]
fn criterion_03_coercivity_identity() {
    let mesh = test_mesh();
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
        let maps = build_maps(&mesh, spaces);
        for theta in [ThetaMode::Constant1, ThetaMode::MeshSquared] {
            for nu in viscosities() {
                for _ in 0..100 {
                    let (s, u) = random_pair(&mut rng, &mesh, &maps, &nu);
                    let b = bilinear_form(&mesh, &maps, &nu, theta, Variant::NonSymmetric, (&s, &u), (&s, &u));
                    let (eg, _) = pair_norms_sq(&mesh, &maps, &nu, theta, &s, &u);
                    worst = worst.max((b - eg).abs() / eg);
                    cases += 1;
                }
            }
        }
    }
    let pass = worst <= 1e-10;
    report(3, pass, &format!("{cases} pairs, max relative deviation {worst:.2e} <= 1e-10"));
    assert!(pass);
}

#[test]
fn criterion_04_continuity_bound() {
    let mesh = test_mesh();
    let mut rng = rand::rngs::StdRng::seed_from_u64(4);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut cases = 0;
    for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
        let maps = build_maps(&mesh, spaces);
        for theta in [ThetaMode::Constant1, ThetaMode::MeshSquared] {
            for nu in viscosities() {
                for _ in 0..100 {
                    let x = random_pair(&mut rng, &mesh, &maps, &nu);
                    let y = random_pair(&mut rng, &mesh, &maps, &nu);
                    let b = bilinear_form(&mesh, &maps, &nu, theta, Variant::NonSymmetric, (&x.0, &x.1), (&y.0, &y.1));
                    let (eg, _) = pair_norms_sq(&mesh, &maps, &nu, theta, &x.0, &x.1);
                    let (_, full) = pair_norms_sq(&mesh, &maps, &nu, theta, &y.0, &y.1);
                    let bound = 2.0 * eg.sqrt() * full.sqrt();
                    if b > bound + 1e-10 {
                        violations += 1;
                    }
                    worst_ratio = worst_ratio.max(b.abs() / bound);
                    cases += 1;
                }
            }
        }
    }
    let pass = violations == 0;
    report(4, pass, &format!("{cases} pairs, {violations} violations, max |B|/(2 eg full) {worst_ratio:.3}"));
    assert!(pass);
}

#[test]
fn criterion_05_variant_equivalence() {
    let data = solve_kellogg(table(2).unwrap().alpha, Some(&table(2).unwrap())).unwrap();
    let inner = ExactSolution::new(data);
    let exact = Shifted { inner, shift: amfem::estimator::trace_shift(&inner) };
    let mesh = build_structured_mesh(4).unwrap();
    let f = |p: Vec2| exact.source(p);
    let g = |p: Vec2| exact.velocity(p);
    let mut worst: f64 = 0.0;
    for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
        for theta in [ThetaMode::Constant1, ThetaMode::MeshSquared] {
            let maps = build_maps(&mesh, spaces);
            let solve = |variant| solve_problem(&mesh, &maps, &ProblemData::from_exact(&exact, &f, &g, variant, theta, spaces)).unwrap();
            let a = solve(Variant::NonSymmetric);
            let b = solve(Variant::Symmetric);
            let x: Vec<f64> = a.sigma.iter().chain(&a.u).copied().collect();
            let y: Vec<f64> = b.sigma.iter().chain(&b.u).copied().collect();
            let diff = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let norm = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
        }
    }
    let pass = worst <= 1e-8;
    report(5, pass, &format!("max relative difference {worst:.2e} <= 1e-8"));
    assert!(pass);
}

#[test]
fn criterion_06_uniform_rates() {
    let start = Instant::now();
    let cases = [(Spaces::Rt0P1, ThetaMode::Constant1, 1.0), (Spaces::Rt0P1, ThetaMode::MeshSquared, 1.0), (Spaces::Bdm1P2, ThetaMode::MeshSquared, 2.0)];
    let mut pass = true;
    let mut detail = Vec::new();
    for (spaces, theta, expect) in cases {
        let cfg = RunConfig {
            problem: ProblemSource::Manufactured { name: "smooth".into(), nu1: 10.0 },
            spaces,
            theta,
            ..RunConfig::default()
        };
        let rate = run_uniform(&cfg).unwrap().rate.unwrap();
        pass &= (rate - expect).abs() <= 0.15;
        detail.push(format!("{spaces:?}/{theta:?} {rate:.3} (want {expect} ± 0.15)"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    report(6, pass, &format!("{}, {secs:.1}s < 120s", detail.join(", ")));
    assert!(pass);
}

/// Runs behind Tables 4 to 9: RT₀ with `θ = 1`, RT₀ with `θ = h²` and
/// BDM₁ with `θ = h²` down to the finer BDM threshold.
struct Runs {
    rt1: Vec<AdaptiveRun>,
    rth2: Vec<AdaptiveRun>,
    bdm: Vec<AdaptiveRun>,
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let go = |number: usize| (1..=5).map(|d| run_adaptive(&table_config(&REFERENCE_TABLES.iter().find(|t| t.number == number).unwrap(), d)).unwrap()).collect();
        Runs { rt1: go(4), rth2: go(5), bdm: go(9) }
    })
}

/// Report at which a run with the given threshold stops.
fn stop_at(run: &AdaptiveRun, rel_err: f64) -> ErrorReport {
    *run.reports.iter().find(|r| r.rel_err < rel_err).unwrap_or_else(|| run.reports.last().unwrap())
}

fn table_rows(number: usize) -> Vec<(ErrorReport, amfem::driver::ReferenceRow)> {
    let t = REFERENCE_TABLES.iter().find(|t| t.number == number).unwrap();
    let r = runs();
    let set = match (t.spaces, t.theta) {
        (Spaces::Rt0P1, ThetaMode::Constant1) => &r.rt1,
        (Spaces::Rt0P1, ThetaMode::MeshSquared) => &r.rth2,
        _ => &r.bdm,
    };
    set.iter().zip(t.rows).map(|(run, reference)| (stop_at(run, t.rel_err), reference)).collect()
}

/// Value checks and element-count checks for one table.
fn check_table(number: usize, tol: f64) -> (bool, bool, String) {
    let t = REFERENCE_TABLES.iter().find(|t| t.number == number).unwrap();
    let mut values = true;
    let mut counts = true;
    let mut parts = Vec::new();
    for (d, (got, want)) in table_rows(number).iter().enumerate() {
        let v = if t.efficiency { got.eff_index } else { got.ind_err };
        let ok = (v - want.value).abs() <= tol && (t.efficiency || v < 1.0);
        let n_ok = (got.n as f64 - want.n as f64).abs() <= 0.3 * want.n as f64;
        values &= ok;
        counts &= n_ok;
        parts.push(format!("D{} {v:.4}/{:.4} n {}/{}", d + 1, want.value, got.n, want.n));
    }
    (values, counts, format!("table {number}: {}", parts.join("; ")))
}

#[test]
fn criterion_07_table4_ind_err() {
    let (values, _, detail) = check_table(4, 0.05);
    report(7, values, &format!("ind-err ± 0.05 and < 1, {detail}"));
    assert!(values);
}

#[test]
fn criterion_08_tables_5_to_9() {
    let mut pass = true;
    let mut lines = Vec::new();
    for (number, tol) in [(7, 0.10), (5, 0.05), (8, 0.10), (6, 0.05), (9, 0.10), (4, 0.05)] {
        let (values, counts, detail) = check_table(number, tol);
        let ok = if number == 4 { counts } else { values && counts };
        pass &= ok;
        lines.push(format!("[{}] {detail}", if ok { "ok" } else { "miss" }));
    }
    report(8, pass, &format!("values and element counts ± 30%:\n    {}", lines.join("\n    ")));
    assert!(pass);
}

#[test]
fn criterion_09_adaptive_optimality() {
    let r = runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, run) in [("RT", &r.rt1[0]), ("BDM", &r.bdm[0])] {
        let tail = &run.reports[run.reports.len().saturating_sub(10)..];
        let dofs: Vec<f64> = tail.iter().map(|x| x.dofs as f64).collect();
        let err: Vec<f64> = tail.iter().map(|x| x.energy_err).collect();
        let slope = loglog_slope(&dofs, &err);
        pass &= (slope + 0.5).abs() <= 0.1;
        parts.push(format!("{name} {slope:.3}"));
    }
    report(9, pass, &format!("Data1 slope over final 10 loops (want -0.5 ± 0.1): {}", parts.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_10_constraint_and_conformity() {
    let r = runs();
    let audits = r.rt1.iter().chain(&r.rth2).chain(&r.bdm).flat_map(|run| run.audits.iter());
    let (mut trace, mut jump, mut mesh_ok, mut count) = (0.0f64, 0.0f64, true, 0);
    for a in audits {
        trace = trace.max(a.weighted_trace);
        jump = jump.max(a.normal_jump);
        mesh_ok &= a.mesh_ok;
        count += 1;
    }
    let pass = trace <= 1e-10 && jump <= 1e-12 && mesh_ok;
    report(10, pass, &format!("{count} solves: weighted trace {trace:.2e} <= 1e-10, normal jump {jump:.2e} <= 1e-12, conformity {}", if mesh_ok { "ok" } else { "broken" }));
    assert!(pass);
}

#[test]
fn inf_sup_witness_has_unit_constant() {
    let mesh = test_mesh();
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
        let maps = build_maps(&mesh, spaces);
        for theta in [ThetaMode::Constant1, ThetaMode::MeshSquared] {
            for nu in viscosities() {
                for _ in 0..20 {
                    let (s, u) = random_pair(&mut rng, &mesh, &maps, &nu);
                    let neg: Vec<f64> = u.iter().map(|x| -x).collect();
                    let b = bilinear_form(&mesh, &maps, &nu, theta, Variant::Symmetric, (&s, &u), (&s, &neg));
                    let (eg, _) = pair_norms_sq(&mesh, &maps, &nu, theta, &s, &u);
                    assert!((b - eg).abs() <= 1e-10 * eg, "{b} vs {eg}");
                }
            }
        }
    }
}

#[test]
fn eff_index_stays_in_loose_band() {
    for run in &runs().rt1 {
        for r in &run.reports {
            assert!((0.5..=3.0).contains(&r.eff_index), "loop {} eff-index {}", r.k, r.eff_index);
        }
    }
}

#[test]
fn ind_err_below_one_at_stopping_points() {
    for t in REFERENCE_TABLES.iter().filter(|t| !t.efficiency) {
        for (got, _) in table_rows(t.number) {
            assert!(got.ind_err < 1.0, "table {} n {} ind-err {}", t.number, got.n, got.ind_err);
        }
    }
}
