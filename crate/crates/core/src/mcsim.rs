//! Monte Carlo simulation of i.i.d. and Markov-switched systems.
//!
//! Path `i` draws from its own ChaCha8 stream (`seed`, stream `i`), and
//! every reduction walks paths in index order with pairwise summation, so
//! results are bit-identical for any worker count.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lyapunov::LyapunovCertificate;
use crate::models::{Law, MarkovJumpSystem, MatrixDistribution};
use crate::radius;

/// Statistical band, in standard errors, used by the consistency checks.
pub const SIGMA_BAND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub paths: usize,
    pub horizon: usize,
    pub seed: u64,
    pub initial_state: Vec<f64>,
    /// Zero-based; Markov systems only.
    pub initial_mode: Option<usize>,
    pub moment_exponent: u32,
}

impl SimulationPlan {
    pub fn new(paths: usize, horizon: usize, seed: u64, initial_state: Vec<f64>) -> Self {
        Self {
            paths,
            horizon,
            seed,
            initial_state,
            initial_mode: None,
            moment_exponent: 1,
        }
    }

    pub fn with_exponent(mut self, p: u32) -> Self {
        self.moment_exponent = p;
        self
    }

    pub fn with_initial_mode(mut self, mode: usize) -> Self {
        self.initial_mode = Some(mode);
        self
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.paths == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument(
                "paths and horizon must be at least 1".into(),
            ));
        }
        if self.moment_exponent == 0 {
            return Err(Error::InvalidArgument(
                "moment exponent must be positive".into(),
            ));
        }
        if self.initial_state.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "initial state of length {} for dimension {dim}",
                self.initial_state.len()
            )));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "initial state must be finite".into(),
            ));
        }
        Ok(())
    }

    fn path_rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }
}

/// Draws one matrix from `mu`.
pub fn sample_matrix<R: Rng + ?Sized>(mu: &MatrixDistribution, rng: &mut R) -> Matrix {
    match mu.law() {
        Law::Atomic(atoms) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for a in atoms {
                acc += a.prob;
                if u < acc {
                    return a.matrix.clone();
                }
            }
            atoms.last().expect("non-empty").matrix.clone()
        }
        Law::UniformEntries { lower, upper } => {
            let d = mu.dim();
            let mut out = lower.clone();
            for i in 0..d {
                for j in 0..d {
                    let u: f64 = rng.random();
                    out[(i, j)] += u * (upper[(i, j)] - lower[(i, j)]);
                }
            }
            out
        }
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding in the row sum; fall back to the last state with mass
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Pairwise (cascade) sum in slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and standard error of the mean (zero for fewer than two
/// values).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesNorm {
    /// `‖x‖₂^p`.
    Euclidean,
    /// `V(x)` of a supplied certificate.
    Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub k: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Paths still finite at step `k`.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub norm: SeriesNorm,
    pub exponent: u32,
    pub points: Vec<MomentPoint>,
}

impl MomentSeries {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    /// `k,mean,stderr` CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["k", "mean", "stderr"]).map_err(io)?;
        for p in &self.points {
            w.write_record([p.k.to_string(), p.mean.to_string(), p.stderr.to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    /// `x(0), …, x(K)`, cut at the first non-finite value.
    pub states: Vec<Vec<f64>>,
    /// `σ_0, …` for Markov paths.
    pub modes: Option<Vec<usize>>,
    /// First step at which the state or a tracked norm stopped being finite.
    pub truncated_at: Option<usize>,
}

impl SamplePath {
    fn alive_at(&self, k: usize) -> bool {
        self.truncated_at.is_none_or(|t| k < t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IidSimulation {
    pub paths: Vec<SamplePath>,
    pub euclidean: MomentSeries,
    pub certificate: Option<MomentSeries>,
    pub truncated_paths: usize,
}

fn euclidean_power(x: &[f64], p: u32) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let norm = scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt();
    norm.powi(p as i32)
}

struct RawPath {
    path: SamplePath,
    euclid: Vec<f64>,
    cert: Vec<f64>,
}

fn record(
    raw: &mut RawPath,
    x: Vec<f64>,
    k: usize,
    p: u32,
    cert: Option<&LyapunovCertificate>,
) -> bool {
    let e = euclidean_power(&x, p);
    let c = match cert {
        Some(c) => c.evaluate(&x).unwrap_or(f64::NAN),
        None => 0.0,
    };
    if !x.iter().all(|v| v.is_finite()) || !e.is_finite() || !c.is_finite() {
        raw.path.truncated_at = Some(k);
        return false;
    }
    raw.euclid.push(e);
    if cert.is_some() {
        raw.cert.push(c);
    }
    raw.path.states.push(x);
    true
}

fn series(raws: &[RawPath], horizon: usize, norm: SeriesNorm, p: u32) -> MomentSeries {
    let points = (0..=horizon)
        .map(|k| {
            let vals: Vec<f64> = raws
                .iter()
                .filter(|r| r.path.alive_at(k))
                .map(|r| match norm {
                    SeriesNorm::Euclidean => r.euclid[k],
                    SeriesNorm::Certificate => r.cert[k],
                })
                .collect();
            let (mean, stderr) = mean_and_stderr(&vals);
            MomentPoint {
                k,
                mean,
                stderr,
                count: vals.len(),
            }
        })
        .collect();
    MomentSeries {
        norm,
        exponent: p,
        points,
    }
}

/// Simulates `x(k+1) = A_k x(k)` with `A_k ~ μ` i.i.d.
pub fn simulate_iid(
    mu: &MatrixDistribution,
    plan: &SimulationPlan,
    cert: Option<&LyapunovCertificate>,
) -> Result<IidSimulation> {
    plan.validate(mu.dim())?;
    if let Some(c) = cert {
        if c.state_dim() != mu.dim() {
            return Err(Error::InvalidArgument(
                "certificate dimension does not match the system".into(),
            ));
        }
    }
    let p = plan.moment_exponent;
    let raws: Vec<RawPath> = (0..plan.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = plan.path_rng(i);
            let mut raw = RawPath {
                path: SamplePath {
                    states: Vec::with_capacity(plan.horizon + 1),
                    modes: None,
                    truncated_at: None,
                },
                euclid: Vec::with_capacity(plan.horizon + 1),
                cert: Vec::new(),
            };
            let mut x = plan.initial_state.clone();
            if !record(&mut raw, x.clone(), 0, p, cert) {
                return raw;
            }
            for k in 1..=plan.horizon {
                let a = sample_matrix(mu, &mut rng);
                x = a.mul_vec(&x).expect("dimension checked");
                if !record(&mut raw, x.clone(), k, p, cert) {
                    break;
                }
            }
            raw
        })
        .collect();
    let euclidean = series(&raws, plan.horizon, SeriesNorm::Euclidean, p);
    let certificate =
        cert.map(|c| series(&raws, plan.horizon, SeriesNorm::Certificate, c.degree()));
    let truncated_paths = raws
        .iter()
        .filter(|r| r.path.truncated_at.is_some())
        .count();
    Ok(IidSimulation {
        paths: raws.into_iter().map(|r| r.path).collect(),
        euclidean,
        certificate,
        truncated_paths,
    })
}

/// Estimates of `Q_i(k) = E[x(k) 1{σ_k = i}]`, indexed `[k][i][component]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMoments {
    pub q: Vec<Vec<Vec<f64>>>,
    pub stderr: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSimulation {
    pub paths: Vec<SamplePath>,
    pub euclidean: MomentSeries,
    pub conditional: ConditionalMoments,
    /// Plain sample mean of `x(k)` over the same paths.
    pub mean_state: Vec<Vec<f64>>,
    pub truncated_paths: usize,
}

fn resolve_initial_mode(sys: &MarkovJumpSystem, plan: &SimulationPlan) -> Result<usize> {
    let mode = plan
        .initial_mode
        .or(sys.initial_mode())
        .ok_or_else(|| Error::InvalidArgument("Markov simulation needs an initial mode".into()))?;
    if mode >= sys.mode_count() {
        return Err(Error::InvalidArgument(format!(
            "initial mode {} outside 1..={}",
            mode + 1,
            sys.mode_count()
        )));
    }
    Ok(mode)
}

/// Simulates `x(k+1) = M_{σ_k} x(k)` with `σ` driven by the transition
/// matrix from the initial mode.
pub fn simulate_markov(sys: &MarkovJumpSystem, plan: &SimulationPlan) -> Result<MarkovSimulation> {
    plan.validate(sys.dim())?;
    let sigma0 = resolve_initial_mode(sys, plan)?;
    let p = plan.moment_exponent;
    let transition = sys.transition();
    let raws: Vec<RawPath> = (0..plan.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = plan.path_rng(i);
            let mut raw = RawPath {
                path: SamplePath {
                    states: Vec::with_capacity(plan.horizon + 1),
                    modes: Some(Vec::with_capacity(plan.horizon + 1)),
                    truncated_at: None,
                },
                euclid: Vec::with_capacity(plan.horizon + 1),
                cert: Vec::new(),
            };
            let mut x = plan.initial_state.clone();
            let mut sigma = sigma0;
            for k in 0..=plan.horizon {
                if k > 0 {
                    x = sys.modes()[sigma].mul_vec(&x).expect("dimension checked");
                    sigma = sample_index(transition.row(sigma), &mut rng);
                }
                if !record(&mut raw, x.clone(), k, p, None) {
                    break;
                }
                raw.path.modes.as_mut().expect("markov path").push(sigma);
            }
            raw
        })
        .collect();
    let euclidean = series(&raws, plan.horizon, SeriesNorm::Euclidean, p);
    let (n, d) = (sys.mode_count(), sys.dim());
    let mut q = Vec::with_capacity(plan.horizon + 1);
    let mut q_se = Vec::with_capacity(plan.horizon + 1);
    let mut mean_state = Vec::with_capacity(plan.horizon + 1);
    for k in 0..=plan.horizon {
        let alive: Vec<&SamplePath> = raws
            .iter()
            .map(|r| &r.path)
            .filter(|p| p.alive_at(k))
            .collect();
        let mut qk = vec![vec![0.0; d]; n];
        let mut sek = vec![vec![0.0; d]; n];
        for (i, (qi, sei)) in qk.iter_mut().zip(sek.iter_mut()).enumerate() {
            for c in 0..d {
                let vals: Vec<f64> = alive
                    .iter()
                    .map(|p| {
                        let modes = p.modes.as_ref().expect("markov path");
                        if modes[k] == i {
                            p.states[k][c]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let (mean, se) = mean_and_stderr(&vals);
                qi[c] = mean;
                sei[c] = se;
            }
        }
        let mk: Vec<f64> = (0..d)
            .map(|c| {
                let vals: Vec<f64> = alive.iter().map(|p| p.states[k][c]).collect();
                mean_and_stderr(&vals).0
            })
            .collect();
        q.push(qk);
        q_se.push(sek);
        mean_state.push(mk);
    }
    let truncated_paths = raws
        .iter()
        .filter(|r| r.path.truncated_at.is_some())
        .count();
    Ok(MarkovSimulation {
        paths: raws.into_iter().map(|r| r.path).collect(),
        euclidean,
        conditional: ConditionalMoments { q, stderr: q_se },
        mean_state,
        truncated_paths,
    })
}

/// Exact `Q(k)` for `k = 0..=horizon` from `Q_i(0) = x_0 1{σ_0 = i}` and
/// `Q_j(k+1) = Σ_i p_ij M_i Q_i(k)`.
pub fn analytic_conditional_moments(
    sys: &MarkovJumpSystem,
    x0: &[f64],
    sigma0: usize,
    horizon: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let (n, d) = (sys.mode_count(), sys.dim());
    if x0.len() != d || sigma0 >= n {
        return Err(Error::InvalidArgument(
            "initial condition does not match the system".into(),
        ));
    }
    let mut q0 = vec![vec![0.0; d]; n];
    q0[sigma0] = x0.to_vec();
    let mut out = vec![q0];
    let transition = sys.transition();
    for _ in 0..horizon {
        let prev = out.last().expect("non-empty");
        let pushed: Vec<Vec<f64>> = sys
            .modes()
            .iter()
            .zip(prev)
            .map(|(m, qi)| m.mul_vec(qi).expect("square"))
            .collect();
        let next = (0..n)
            .map(|j| {
                let mut acc = vec![0.0; d];
                for (i, mq) in pushed.iter().enumerate() {
                    let pij = transition[(i, j)];
                    for (a, v) in acc.iter_mut().zip(mq) {
                        *a += pij * v;
                    }
                }
                acc
            })
            .collect();
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRecursionReport {
    pub horizon: usize,
    /// `max_k ‖vec Q(k+1) − T_1 vec Q(k)‖_∞` over the exact moments.
    pub analytic_residual: f64,
    /// Largest `|Q̂ − Q| / stderr` over steps, modes and components.
    pub max_abs_z: f64,
    pub mc_within_band: bool,
}

/// Checks `vec Q(k+1) = T_1 vec Q(k)` on the exact conditional moments and
/// compares those against Monte Carlo estimates.
pub fn check_q_recursion(
    sys: &MarkovJumpSystem,
    plan: &SimulationPlan,
) -> Result<QRecursionReport> {
    let sigma0 = resolve_initial_mode(sys, plan)?;
    let exact = analytic_conditional_moments(sys, &plan.initial_state, sigma0, plan.horizon)?;
    let t1 = radius::markov_tp(sys, 1)?;
    let mut residual: f64 = 0.0;
    for k in 0..plan.horizon {
        let lhs = linalg::vec_of(&exact[k + 1])?;
        let rhs = t1.mul_vec(&linalg::vec_of(&exact[k])?)?;
        for (a, b) in lhs.iter().zip(&rhs) {
            residual = residual.max((a - b).abs());
        }
    }
    let sim = simulate_markov(sys, plan)?;
    let mut max_abs_z: f64 = 0.0;
    let mut within = true;
    for (k, exact_k) in exact.iter().enumerate() {
        for (i, exact_ki) in exact_k.iter().enumerate() {
            for (c, &want) in exact_ki.iter().enumerate() {
                let got = sim.conditional.q[k][i][c];
                let se = sim.conditional.stderr[k][i][c];
                let diff = (got - want).abs();
                if se > 0.0 {
                    max_abs_z = max_abs_z.max(diff / se);
                    within &= diff <= SIGMA_BAND * se;
                } else {
                    within &= diff <= 1e-9 * (1.0 + want.abs());
                }
            }
        }
    }
    Ok(QRecursionReport {
        horizon: plan.horizon,
        analytic_residual: residual,
        max_abs_z,
        mc_within_band: within,
    })
}

/// Ordinary least-squares fit of `log mean` against `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub slope: f64,
    pub stderr: f64,
    /// `exp(slope)`, the per-step growth factor.
    pub rate: f64,
    pub window_start: usize,
    pub window_end: usize,
}

/// OLS slope of `ln(mean)` over steps `window` (points with non-positive
/// means are skipped). `None` with fewer than two usable points.
pub fn log_slope(series: &MomentSeries, window: Range<usize>) -> Option<DecayEstimate> {
    let pts: Vec<(f64, f64)> = series
        .points
        .iter()
        .filter(|p| window.contains(&p.k) && p.mean > 0.0 && p.mean.is_finite())
        .map(|p| (p.k as f64, p.mean.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let stderr = if n > 2 {
        let ssr: f64 = pts
            .iter()
            .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(DecayEstimate {
        slope,
        stderr,
        rate: slope.exp(),
        window_start: window.start,
        window_end: window.end,
    })
}

/// Decay estimate over the second half of the horizon.
pub fn decay_rate(series: &MomentSeries) -> Option<DecayEstimate> {
    let horizon = series.points.len().saturating_sub(1);
    log_slope(series, horizon / 2..horizon + 1)
}
