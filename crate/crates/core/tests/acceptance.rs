//! End-to-end acceptance checks, run without the libtest harness so each
//! criterion prints exactly one `[PASS]` / `[FAIL]` line. The process exits
//! non-zero if any criterion fails.

use std::panic;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use switchstab::error::Error;
use switchstab::linalg::{self, Matrix};
use switchstab::lyapunov;
use switchstab::mcsim::{self, SimulationPlan};
use switchstab::models::{self, MarkovJumpSystem, MatrixDistribution, Problem};
use switchstab::radius;

const MARKOV_OPEN_LOOP: f64 = 1.221;
const MARKOV_OPEN_LOOP_TOL: f64 = 0.001;
const MARKOV_CLOSED_LOOP: f64 = 0.9554;
const MARKOV_CLOSED_LOOP_TOL: f64 = 0.0005;
const CONE_F0: f64 = 0.3838;
const CONE_F0_TOL: f64 = 0.0005;
const CONE_GAMMA_TOL: f64 = 1e-6;
const SCALAR_TOL: f64 = 1e-10;
const SCALAR_JSR_FRACTION: f64 = 0.20;
const LIFTING_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-9;
const RESIDUAL_REL_TOL: f64 = 1e-9;
const Q_ANALYTIC_TOL: f64 = 1e-10;
const SIGMA_BAND: f64 = 4.0;
const JSR_DOMINATION_TOL: f64 = 1e-9;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn load(name: &str) -> Problem {
    models::load_problem(&std::fs::read_to_string(data(name)).unwrap()).unwrap()
}

fn markov_system() -> MarkovJumpSystem {
    load("three_mode_markov.json").as_markov().unwrap().clone()
}

fn interval_box() -> MatrixDistribution {
    load("interval_box.json").as_iid().unwrap().clone()
}

static PASSED: AtomicBool = AtomicBool::new(false);

fn verdict(n: u32, ok: bool, detail: String) {
    println!(
        "[{}] criterion {n}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    PASSED.store(ok, Ordering::SeqCst);
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

fn random_atomic(
    rng: &mut ChaCha8Rng,
    d: usize,
    atoms: usize,
    lo: f64,
    hi: f64,
) -> Vec<(f64, Matrix)> {
    let weights: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights
        .into_iter()
        .map(|w| (w / total, random_matrix(rng, d, lo, hi)))
        .collect()
}

fn rescaled(atoms: &[(f64, Matrix)], factor: f64) -> MatrixDistribution {
    MatrixDistribution::atomic(atoms.iter().map(|(p, m)| (*p, m.scale(factor))).collect()).unwrap()
}

fn criterion_01_markov_open_loop_radius() {
    let sys = markov_system();
    let start = Instant::now();
    let r = radius::markov_p_radius(&sys, 1).unwrap();
    let elapsed = start.elapsed();
    let value = r.radius.value.unwrap();
    let ok = (value - MARKOV_OPEN_LOOP).abs() <= MARKOV_OPEN_LOOP_TOL
        && r.verdict == Some(radius::Verdict::Unstable)
        && elapsed < Duration::from_secs(1);
    verdict(
        1,
        ok,
        format!("rho_1(T_1) = {value:.6} (want {MARKOV_OPEN_LOOP} ± {MARKOV_OPEN_LOOP_TOL}), {elapsed:?}"),
    );
}

fn criterion_02_markov_closed_loop_radius() {
    let sys = markov_system();
    let start = Instant::now();
    let closed = sys.apply_feedback().unwrap();
    let r = radius::markov_p_radius(&closed, 1).unwrap();
    let elapsed = start.elapsed();
    let value = r.radius.value.unwrap();
    let ok = (value - MARKOV_CLOSED_LOOP).abs() <= MARKOV_CLOSED_LOOP_TOL
        && r.verdict == Some(radius::Verdict::Stable)
        && elapsed < Duration::from_secs(1);
    verdict(
        2,
        ok,
        format!(
            "closed-loop rho_1(T_1) = {value:.6} (want {MARKOV_CLOSED_LOOP} ± {MARKOV_CLOSED_LOOP_TOL}), {elapsed:?}"
        ),
    );
}

fn criterion_03_interval_box_cone_certificate() {
    let mu = interval_box();
    let cert = lyapunov::synthesize_cone_norm(&mu).unwrap();
    let f = match cert.kind() {
        lyapunov::CertificateKind::ConeLinearNorm { f } => f.clone(),
        other => panic!("unexpected certificate {other:?}"),
    };
    // E[A] = [[0.75, 0.9], [0.075, 0.6]]: λ² − 1.35λ + 0.3825 = 0
    let oracle = (1.35 + (1.35f64 * 1.35 - 4.0 * 0.3825).sqrt()) / 2.0;
    let ok = (f[0] - CONE_F0).abs() <= CONE_F0_TOL
        && f[1] == 1.0
        && (cert.gamma() - oracle).abs() <= CONE_GAMMA_TOL;
    verdict(
        3,
        ok,
        format!(
            "f = [{:.6}, {}] (want [{CONE_F0} ± {CONE_F0_TOL}, 1]), gamma = {:.9} vs oracle {oracle:.9}",
            f[0],
            f[1],
            cert.gamma()
        ),
    );
}

fn criterion_04_scalar_uniform_sequence() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut increasing = true;
    let mut final_gap: f64 = 0.0;
    for gamma in [0.5, 1.0, 2.0] {
        let mu = MatrixDistribution::uniform_entries(Matrix::scalar(0.0), Matrix::scalar(gamma))
            .unwrap();
        let seq = radius::limit_sequence(&mu, 12, false).unwrap();
        assert_eq!(seq.entries.len(), 12);
        for e in &seq.entries {
            let direct = radius::p_radius(&mu, e.p).unwrap().value.unwrap();
            let closed = gamma * f64::from(e.p + 1).powf(-1.0 / f64::from(e.p));
            worst = worst
                .max((direct - closed).abs())
                .max((e.value - closed).abs());
        }
        increasing &= seq.entries.windows(2).all(|w| w[1].value > w[0].value);
        let last = seq.entries.last().unwrap().value;
        final_gap = final_gap.max((gamma - last) / gamma);
    }
    let elapsed = start.elapsed();
    let ok = worst <= SCALAR_TOL
        && increasing
        && final_gap <= SCALAR_JSR_FRACTION
        && elapsed < Duration::from_secs(1);
    verdict(
        4,
        ok,
        format!(
            "max |rho_p - gamma(p+1)^(-1/p)| = {worst:.2e}, increasing = {increasing}, \
             relative gap at p = 12 = {final_gap:.4}, {elapsed:?}"
        ),
    );
}

fn criterion_05_lifting_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n_atoms = rng.random_range(2..=3);
        let atoms = random_atomic(&mut rng, 2, n_atoms, -1.0, 1.0);
        let mu = MatrixDistribution::atomic(atoms.clone()).unwrap();
        let rho4 = radius::p_radius(&mu, 4).unwrap().value.unwrap();
        // μ^{⊗2} built by hand as the image of μ under A ↦ A ⊗ A
        let squared = atoms
            .iter()
            .map(|(p, a)| (*p, linalg::kron(a, a).unwrap()))
            .collect();
        let mu2 = MatrixDistribution::atomic(squared).unwrap();
        let rho2_lifted = radius::p_radius(&mu2, 2).unwrap().value.unwrap().sqrt();
        worst = worst.max((rho4 - rho2_lifted).abs());
        worst = worst.max(radius::lifting_identity_check(&mu, 4, 2).unwrap());
    }
    let elapsed = start.elapsed();
    let ok = worst <= LIFTING_TOL && elapsed < Duration::from_secs(10);
    verdict(
        5,
        ok,
        format!("max |rho_4 - rho_2(mu^2)^(1/2)| over 20 laws = {worst:.2e}, {elapsed:?}"),
    );
}

fn criterion_06_quadratic_certificate_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut stable_ok = 0;
    let mut worst_psd: f64 = f64::INFINITY;
    let mut worst_residual: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..=3);
        let n_atoms = rng.random_range(2..=4);
        let atoms = random_atomic(&mut rng, d, n_atoms, -1.0, 1.0);
        let base = radius::p_radius(&MatrixDistribution::atomic(atoms.clone()).unwrap(), 2)
            .unwrap()
            .value
            .unwrap();
        let target = rng.random_range(0.3..0.95);
        let mu = rescaled(&atoms, target / base);
        let rho2 = radius::p_radius(&mu, 2).unwrap().value.unwrap();
        assert!(rho2 < 0.95);
        let cert = lyapunov::synthesize_quadratic(&mu).unwrap();
        let h = match cert.kind() {
            lyapunov::CertificateKind::QuadraticForm { h } => h.clone(),
            other => panic!("unexpected certificate {other:?}"),
        };
        let gap = h
            .scale(cert.gamma())
            .sub(&mu.expected_sandwich(&h))
            .unwrap();
        let min_eig = linalg::symmetric_eigenvalues(&gap.symmetric_part()).unwrap()[0];
        let psd = linalg::is_positive_semidefinite(&gap, PSD_TOL).unwrap();
        let residual = lyapunov::quadratic_residual(&mu, &h).unwrap() / h.norm_spectral().unwrap();
        worst_psd = worst_psd.min(min_eig);
        worst_residual = worst_residual.max(residual);
        if psd && residual <= RESIDUAL_REL_TOL {
            stable_ok += 1;
        }
    }
    let mut unstable_ok = 0;
    for _ in 0..5 {
        let atoms = random_atomic(&mut rng, 2, 3, -1.0, 1.0);
        let base = radius::p_radius(&MatrixDistribution::atomic(atoms.clone()).unwrap(), 2)
            .unwrap()
            .value
            .unwrap();
        let target = rng.random_range(1.06..1.5);
        let mu = rescaled(&atoms, target / base);
        if matches!(lyapunov::synthesize_quadratic(&mu), Err(Error::Unstable(_))) {
            unstable_ok += 1;
        }
    }
    let ok = stable_ok == 20 && unstable_ok == 5;
    verdict(
        6,
        ok,
        format!(
            "{stable_ok}/20 stable laws certified (min eig of gamma H - E[A'HA] = {worst_psd:.2e}, \
             max residual/|H| = {worst_residual:.2e}); {unstable_ok}/5 unstable laws rejected"
        ),
    );
}

fn criterion_07_q_recursion() {
    let sys = markov_system();
    let plan = SimulationPlan::new(10_000, 20, 7, vec![1.0, 1.0]).with_initial_mode(0);
    let r = mcsim::check_q_recursion(&sys, &plan).unwrap();
    let ok = r.analytic_residual <= Q_ANALYTIC_TOL && r.mc_within_band;
    verdict(
        7,
        ok,
        format!(
            "analytic residual = {:.2e} (tol {Q_ANALYTIC_TOL:e}), max |z| = {:.2} (band {SIGMA_BAND})",
            r.analytic_residual, r.max_abs_z
        ),
    );
}

fn run_simulate(p: u32, threads: usize, dir: &std::path::Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_switchstab"))
        .args(["simulate", "-i"])
        .arg(data("scalar_uniform.json"))
        .args([
            "--paths",
            "100000",
            "--horizon",
            "10",
            "--seed",
            "2024",
            "--x0",
            "1",
        ])
        .args([
            "--p",
            &p.to_string(),
            "--threads",
            &threads.to_string(),
            "--out-dir",
        ])
        .arg(dir)
        .output()
        .unwrap();
    let csv = std::fs::read_to_string(dir.join("moments.csv")).unwrap_or_default();
    (out.status.code().unwrap_or(-1), csv)
}

fn criterion_08_simulation_statistics() {
    let gamma: f64 = 0.9;
    let mut worst_z: f64 = 0.0;
    let mut identical = true;
    let mut exits_ok = true;
    for p in [1u32, 2] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (code1, csv1) = run_simulate(p, 1, a.path());
        let (code8, csv8) = run_simulate(p, 8, b.path());
        exits_ok &= code1 == 0 && code8 == 0;
        identical &= !csv1.is_empty() && csv1 == csv8;
        let mut reader = csv::Reader::from_reader(csv1.as_bytes());
        for row in reader.records() {
            let row = row.unwrap();
            let k: i32 = row[0].parse().unwrap();
            let mean: f64 = row[1].parse().unwrap();
            let se: f64 = row[2].parse().unwrap();
            let exact = (gamma.powi(p as i32) / f64::from(p + 1)).powi(k);
            let z = if se > 0.0 {
                (mean - exact).abs() / se
            } else if mean == exact {
                0.0
            } else {
                f64::INFINITY
            };
            worst_z = worst_z.max(z);
        }
    }
    let ok = exits_ok && identical && worst_z <= SIGMA_BAND;
    verdict(
        8,
        ok,
        format!("max |z| over k <= 10, p in {{1,2}} = {worst_z:.2}; CSV identical across 1 and 8 threads = {identical}"),
    );
}

fn criterion_09_interval_box_certificate_decay() {
    let mu = interval_box();
    let cert = lyapunov::synthesize_cone_norm(&mu).unwrap();
    let plan = SimulationPlan::new(200, 30, 1, vec![0.0, 1.0]);
    let sim = mcsim::simulate_iid(&mu, &plan, Some(&cert)).unwrap();
    let series = sim.certificate.unwrap();
    let est = mcsim::log_slope(&series, 0..31).unwrap();
    let (lo, hi) = (0.90f64.ln(), 0.99f64.ln());
    let ok = est.slope < 0.0 && (lo..=hi).contains(&est.slope);
    verdict(
        9,
        ok,
        format!(
            "OLS slope of log mean V(x(k)) over k = 0..30 = {:.4} (rate {:.4}), want in [ln 0.90, ln 0.99]",
            est.slope, est.rate
        ),
    );
}

fn criterion_10_jsr_bracket() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0010);
    let mut ordered = true;
    let mut singleton_err: f64 = 0.0;
    let mut singleton_bracketed = true;
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..20 {
        let pair = [
            random_matrix(&mut rng, 2, 0.0, 1.0),
            random_matrix(&mut rng, 2, 0.0, 1.0),
        ];
        let b = radius::jsr_bounds(&pair, 8).unwrap();
        ordered &= b.lower <= b.upper && !b.truncated;
        for m in &pair {
            // closed-form ρ for a 2×2 nonnegative matrix (real dominant root)
            let (tr, det) = (
                m[(0, 0)] + m[(1, 1)],
                m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
            );
            let rho = (tr + (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0;
            let s = radius::jsr_bounds(std::slice::from_ref(m), 8).unwrap();
            singleton_err = singleton_err.max((s.lower - rho).abs());
            singleton_bracketed &= s.lower <= rho + 1e-12 && rho <= s.upper + 1e-12;
            ordered &= b.lower >= rho - 1e-12;
        }
        let w: f64 = rng.random_range(0.05..0.95);
        let mu = MatrixDistribution::atomic(vec![(w, pair[0].clone()), (1.0 - w, pair[1].clone())])
            .unwrap();
        for p in 1..=6 {
            let r = radius::p_radius(&mu, p).unwrap();
            if let Some(v) = r.value {
                worst_excess = worst_excess.max(v - b.upper);
            }
        }
    }
    let ok = ordered
        && singleton_bracketed
        && singleton_err <= 1e-10
        && worst_excess <= JSR_DOMINATION_TOL;
    verdict(
        10,
        ok,
        format!(
            "lower <= upper on 20 pairs = {ordered}; singleton |lower - rho| <= {singleton_err:.1e}; \
             max(rho_p - upper) = {worst_excess:.2e}"
        ),
    );
}

fn main() -> ExitCode {
    let criteria: [(u32, fn()); 10] = [
        (1, criterion_01_markov_open_loop_radius),
        (2, criterion_02_markov_closed_loop_radius),
        (3, criterion_03_interval_box_cone_certificate),
        (4, criterion_04_scalar_uniform_sequence),
        (5, criterion_05_lifting_identity),
        (6, criterion_06_quadratic_certificate_suite),
        (7, criterion_07_q_recursion),
        (8, criterion_08_simulation_statistics),
        (9, criterion_09_interval_box_certificate_decay),
        (10, criterion_10_jsr_bracket),
    ];
    let mut failed = Vec::new();
    for (n, run) in criteria {
        PASSED.store(false, Ordering::SeqCst);
        if panic::catch_unwind(run).is_err() {
            println!("[FAIL] criterion {n}: panicked before reaching a verdict");
        }
        if !PASSED.load(Ordering::SeqCst) {
            failed.push(n);
        }
    }
    println!(
        "acceptance: {} passed, {} failed{}",
        10 - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
