//! p-radius evaluation, Markovian `T_p` radii, joint spectral radius
//! brackets and the `p → ∞` limit sequence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, checked_pow, LinalgError, Matrix};
use crate::models::{ConeFlags, Law, MarkovJumpSystem, MatrixDistribution};

/// Half-width of the band around 1 reported as `Marginal`.
pub const DEFAULT_DECISION_MARGIN: f64 = 1e-9;

/// Maximum number of matrix products enumerated by [`jsr_bounds`].
pub const DEFAULT_PRODUCT_BUDGET: usize = 1_000_000;

/// Product depth of the joint spectral radius bracket attached to limit
/// sequences of atomic laws.
pub const LIMIT_JSR_DEPTH: usize = 8;

/// Which hypothesis licenses `ρ_{p,μ} = ρ(E[A^{⊗p}])^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionPath {
    EvenP,
    OrthantInvariant,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRadiusResult {
    pub p: u32,
    /// Absent on the unsupported path.
    pub value: Option<f64>,
    pub lifted_dim: usize,
    pub assumption_path: AssumptionPath,
}

impl PRadiusResult {
    pub fn is_licensed(&self) -> bool {
        self.assumption_path != AssumptionPath::Unsupported
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
    Unsupported,
}

/// Strict comparison against 1 with a marginal band of half-width `margin`.
pub fn classify(value: Option<f64>, margin: f64) -> Verdict {
    match value {
        None => Verdict::Unsupported,
        Some(v) if v < 1.0 - margin => Verdict::Stable,
        Some(v) if v > 1.0 + margin => Verdict::Unstable,
        Some(_) => Verdict::Marginal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p: u32,
    pub verdict: Verdict,
    pub decision_margin: f64,
    pub radius: PRadiusResult,
    pub cone_flags: ConeFlags,
}

fn assumption_path(p: u32, orthant_invariant: bool) -> AssumptionPath {
    if p.is_multiple_of(2) {
        AssumptionPath::EvenP
    } else if orthant_invariant {
        AssumptionPath::OrthantInvariant
    } else {
        AssumptionPath::Unsupported
    }
}

fn check_p(p: u32) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidArgument(
            "p must be a positive integer".into(),
        ));
    }
    Ok(())
}

/// `ρ_{p,μ} = ρ(E[A^{⊗p}])^{1/p}`, when `p` is even or the support keeps the
/// positive orthant invariant.
pub fn p_radius(mu: &MatrixDistribution, p: u32) -> Result<PRadiusResult> {
    check_p(p)?;
    let lifted_dim = checked_pow(mu.dim(), p);
    let path = assumption_path(p, mu.is_orthant_invariant());
    if path == AssumptionPath::Unsupported {
        return Ok(PRadiusResult {
            p,
            value: None,
            lifted_dim,
            assumption_path: path,
        });
    }
    let lifted = mu.expected_kron_power(p)?;
    let rho = linalg::spectral_radius(&lifted)?;
    Ok(PRadiusResult {
        p,
        value: Some(rho.powf(1.0 / f64::from(p))),
        lifted_dim,
        assumption_path: path,
    })
}

pub fn check_mean_stability(mu: &MatrixDistribution, p: u32) -> Result<StabilityReport> {
    check_mean_stability_with_margin(mu, p, DEFAULT_DECISION_MARGIN)
}

pub fn check_mean_stability_with_margin(
    mu: &MatrixDistribution,
    p: u32,
    margin: f64,
) -> Result<StabilityReport> {
    let radius = p_radius(mu, p)?;
    Ok(StabilityReport {
        p,
        verdict: classify(radius.value, margin),
        decision_margin: margin,
        cone_flags: mu.cone_flags(p),
        radius,
    })
}

/// `T_p = (Pᵀ ⊗ I_{d^p}) · diag(M_1^{⊗p}, …, M_N^{⊗p})`. Block `(j, i)` is
/// `p_ij · M_i^{⊗p}`.
pub fn markov_tp(sys: &MarkovJumpSystem, p: u32) -> Result<Matrix> {
    check_p(p)?;
    let n = sys.mode_count();
    let block = checked_pow(sys.dim(), p);
    let total = n.saturating_mul(block);
    let cap = linalg::lift_cap();
    if (total as u128) * (total as u128) > cap as u128 {
        return Err(LinalgError::DimensionCap {
            rows: total,
            cols: total,
            requested: (total as u128) * (total as u128),
            cap,
        }
        .into());
    }
    let lifted = sys
        .modes()
        .iter()
        .map(|m| linalg::kron_power(m, p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let transition = sys.transition();
    let mut t = Matrix::zeros(total, total);
    for j in 0..n {
        for (i, mi) in lifted.iter().enumerate() {
            let pij = transition[(i, j)];
            if pij == 0.0 {
                continue;
            }
            for r in 0..block {
                for c in 0..block {
                    t[(j * block + r, i * block + c)] = pij * mi[(r, c)];
                }
            }
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovRadiusResult {
    #[serde(flatten)]
    pub radius: PRadiusResult,
    /// `None` for experimental orders outside `{1, 2}`.
    pub verdict: Option<Verdict>,
    pub experimental: bool,
}

/// Markovian p-radius `ρ(T_p)^{1/p}` for `p ∈ {1, 2}`. For `p = 1` every
/// mode must be entrywise nonnegative, otherwise the unsupported path is
/// returned.
pub fn markov_p_radius(sys: &MarkovJumpSystem, p: u32) -> Result<MarkovRadiusResult> {
    markov_p_radius_with_margin(sys, p, DEFAULT_DECISION_MARGIN)
}

pub fn markov_p_radius_with_margin(
    sys: &MarkovJumpSystem,
    p: u32,
    margin: f64,
) -> Result<MarkovRadiusResult> {
    let path = match p {
        1 if sys.is_orthant_invariant() => AssumptionPath::OrthantInvariant,
        1 => AssumptionPath::Unsupported,
        2 => AssumptionPath::EvenP,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "Markovian p-radius verdicts are defined for p in {{1, 2}}, got {p}"
            )))
        }
    };
    let lifted_dim = sys.mode_count() * checked_pow(sys.dim(), p);
    let value = if path == AssumptionPath::Unsupported {
        None
    } else {
        Some(linalg::spectral_radius(&markov_tp(sys, p)?)?.powf(1.0 / f64::from(p)))
    };
    Ok(MarkovRadiusResult {
        verdict: Some(classify(value, margin)),
        radius: PRadiusResult {
            p,
            value,
            lifted_dim,
            assumption_path: path,
        },
        experimental: false,
    })
}

/// `ρ(T_p)^{1/p}` for any `p`, without a stability verdict.
pub fn markov_p_radius_experimental(sys: &MarkovJumpSystem, p: u32) -> Result<MarkovRadiusResult> {
    let tp = markov_tp(sys, p)?;
    let path = assumption_path(p, sys.is_orthant_invariant());
    Ok(MarkovRadiusResult {
        radius: PRadiusResult {
            p,
            value: Some(linalg::spectral_radius(&tp)?.powf(1.0 / f64::from(p))),
            lifted_dim: tp.rows(),
            assumption_path: path,
        },
        verdict: None,
        experimental: true,
    })
}

/// Bracket on the joint spectral radius of a finite matrix set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsrBounds {
    pub lower: f64,
    pub upper: f64,
    /// Longest product length fully enumerated.
    pub depth: usize,
    pub truncated: bool,
    pub products_evaluated: usize,
}

pub fn jsr_bounds(atoms: &[Matrix], depth: usize) -> Result<JsrBounds> {
    jsr_bounds_with_budget(atoms, depth, DEFAULT_PRODUCT_BUDGET)
}

/// Enumerates every product of length `1..=depth`. The lower bound is the
/// largest `ρ(Π)^{1/ℓ}`, the upper bound the smallest over `ℓ` of
/// `max_{|Π| = ℓ} ‖Π‖₂^{1/ℓ}`. Stops early, flagged as truncated, when the
/// next length would exceed `budget` products in total.
pub fn jsr_bounds_with_budget(atoms: &[Matrix], depth: usize, budget: usize) -> Result<JsrBounds> {
    let first = atoms
        .first()
        .ok_or_else(|| Error::InvalidArgument("joint spectral radius of an empty set".into()))?;
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let d = first.rows();
    if atoms.iter().any(|a| !a.is_square() || a.rows() != d) {
        return Err(Error::InvalidArgument(
            "atoms must share one square dimension".into(),
        ));
    }
    if atoms.len() > budget {
        return Err(Error::InvalidArgument(format!(
            "{} atoms exceed the product budget of {budget}",
            atoms.len()
        )));
    }
    let mut lower: f64 = 0.0;
    let mut upper = f64::INFINITY;
    let mut evaluated = 0usize;
    let mut completed = 0usize;
    let mut level: Vec<Matrix> = Vec::new();
    for len in 1..=depth {
        let count = level.len().max(1) * atoms.len();
        if evaluated + count > budget {
            break;
        }
        level = if len == 1 {
            atoms.to_vec()
        } else {
            level
                .par_iter()
                .flat_map_iter(|prev| atoms.iter().map(move |a| a.matmul(prev).expect("square")))
                .collect()
        };
        let exponent = 1.0 / len as f64;
        let (rho_max, norm_max) = level
            .par_iter()
            .map(|m| -> Result<(f64, f64)> {
                Ok((
                    linalg::spectral_radius(m)?.powf(exponent),
                    m.norm_spectral()?.powf(exponent),
                ))
            })
            .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0.max(b.0), a.1.max(b.1))))?;
        lower = lower.max(rho_max);
        upper = upper.min(norm_max);
        evaluated += count;
        completed = len;
    }
    Ok(JsrBounds {
        lower,
        // spectral norms and radii are computed independently, so keep the
        // bracket ordered when they agree to rounding
        upper: upper.max(lower),
        depth: completed,
        truncated: completed < depth,
        products_evaluated: evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEntry {
    pub p: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSequence {
    pub entries: Vec<LimitEntry>,
    pub even_only: bool,
    /// Set when the dimension cap stopped the sequence before `p_max`.
    pub truncated: bool,
    pub jsr_reference: Option<JsrBounds>,
}

/// `(p, ρ_{p,μ})` for `p = 1..=p_max`, or even `p` only. Odd orders require
/// an orthant-invariant support.
pub fn limit_sequence(
    mu: &MatrixDistribution,
    p_max: u32,
    even_only: bool,
) -> Result<LimitSequence> {
    check_p(p_max)?;
    let orders: Vec<u32> = (1..=p_max).filter(|p| !even_only || p % 2 == 0).collect();
    if orders.is_empty() {
        return Err(Error::InvalidArgument("no even order up to p_max".into()));
    }
    let mut entries = Vec::with_capacity(orders.len());
    let mut truncated = false;
    for p in orders {
        match p_radius(mu, p) {
            Ok(PRadiusResult {
                value: Some(value), ..
            }) => entries.push(LimitEntry { p, value }),
            Ok(_) => {
                return Err(Error::AssumptionsNotMet(format!(
                    "p = {p} is odd and the support does not keep the positive orthant invariant"
                )))
            }
            Err(Error::Linalg(LinalgError::DimensionCap { .. })) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let jsr_reference = match mu.law() {
        Law::Atomic(atoms) => {
            let mats: Vec<Matrix> = atoms.iter().map(|a| a.matrix.clone()).collect();
            Some(jsr_bounds(&mats, LIMIT_JSR_DEPTH)?)
        }
        Law::UniformEntries { .. } => None,
    };
    Ok(LimitSequence {
        entries,
        even_only,
        truncated,
        jsr_reference,
    })
}

/// The law of `A^{⊗k}` for `A ~ μ`.
enum LiftedLaw<'a> {
    Atomic(MatrixDistribution),
    UniformPower {
        lower: &'a Matrix,
        upper: &'a Matrix,
        k: u32,
    },
}

impl LiftedLaw<'_> {
    fn expected_kron_power(&self, q: u32) -> Result<Matrix> {
        match self {
            LiftedLaw::Atomic(mu) => Ok(mu.expected_kron_power(q)?),
            LiftedLaw::UniformPower { lower, upper, k } => {
                // Row index of (A^{⊗k})^{⊗q} is q digits base d^k, each of
                // which is k digits base d.
                let d = lower.rows();
                let base = d.pow(*k);
                let lifted = checked_pow(base, q);
                let cap = linalg::lift_cap();
                if (lifted as u128) * (lifted as u128) > cap as u128 {
                    return Err(LinalgError::DimensionCap {
                        rows: lifted,
                        cols: lifted,
                        requested: (lifted as u128) * (lifted as u128),
                        cap,
                    }
                    .into());
                }
                let order = k * q;
                let split = |idx: usize| -> Vec<usize> {
                    let mut outer = idx;
                    let mut out = Vec::with_capacity(order as usize);
                    let mut blocks = Vec::with_capacity(q as usize);
                    for _ in 0..q {
                        blocks.push(outer % base);
                        outer /= base;
                    }
                    for &b in blocks.iter().rev() {
                        let mut inner = b;
                        let mut digits = vec![0; *k as usize];
                        for slot in digits.iter_mut().rev() {
                            *slot = inner % d;
                            inner /= d;
                        }
                        out.extend(digits);
                    }
                    out
                };
                let idx: Vec<Vec<usize>> = (0..lifted).map(split).collect();
                let mut out = Matrix::zeros(lifted, lifted);
                let mut counts = vec![vec![0u32; d]; d];
                for r in 0..lifted {
                    for c in 0..lifted {
                        counts.iter_mut().flatten().for_each(|v| *v = 0);
                        for (&i, &j) in idx[r].iter().zip(&idx[c]) {
                            counts[i][j] += 1;
                        }
                        let mut v = 1.0;
                        for i in 0..d {
                            for j in 0..d {
                                let m = counts[i][j];
                                if m > 0 {
                                    v *= crate::models::uniform_moment(
                                        lower[(i, j)],
                                        upper[(i, j)],
                                        m,
                                    );
                                }
                            }
                        }
                        out[(r, c)] = v;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// `|ρ_{p,μ} − ρ_{p/k, μ^{⊗k}}^{1/k}|`, with the lifted law realised by
/// pushing atoms (or entry moments) through the `k`-th Kronecker power.
pub fn lifting_identity_check(mu: &MatrixDistribution, p: u32, k: u32) -> Result<f64> {
    check_p(p)?;
    if k == 0 || !p.is_multiple_of(k) {
        return Err(Error::InvalidArgument(format!("{k} does not divide {p}")));
    }
    let direct = p_radius(mu, p)?.value.ok_or_else(|| {
        Error::AssumptionsNotMet(format!("ρ_{{{p},μ}} is not licensed for this law"))
    })?;
    if k == 1 {
        let again = p_radius(mu, p)?.value.expect("licensed above");
        return Ok((direct - again).abs());
    }
    let q = p / k;
    let lifted_orthant = mu.is_orthant_invariant();
    if !q.is_multiple_of(2) && !lifted_orthant {
        return Err(Error::AssumptionsNotMet(format!(
            "ρ_{{{q},μ^⊗{k}}} is not licensed: odd order without orthant invariance"
        )));
    }
    let lifted = match mu.law() {
        Law::Atomic(atoms) => LiftedLaw::Atomic(MatrixDistribution::atomic(
            atoms
                .iter()
                .map(|a| Ok((a.prob, linalg::kron_power(&a.matrix, k)?)))
                .collect::<Result<Vec<_>>>()?,
        )?),
        Law::UniformEntries { lower, upper } => LiftedLaw::UniformPower { lower, upper, k },
    };
    let rho = linalg::spectral_radius(&lifted.expected_kron_power(q)?)?;
    let via_lift = rho.powf(1.0 / f64::from(q)).powf(1.0 / f64::from(k));
    Ok((direct - via_lift).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MarkovJumpSystem;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn scalar_uniform(gamma: f64) -> MatrixDistribution {
        MatrixDistribution::uniform_entries(Matrix::scalar(0.0), Matrix::scalar(gamma)).unwrap()
    }

    #[test]
    fn scalar_uniform_root_form() {
        for p in 1..=8u32 {
            let r = p_radius(&scalar_uniform(2.0), p).unwrap();
            let want = 2.0 * f64::from(p + 1).powf(-1.0 / f64::from(p));
            assert!((r.value.unwrap() - want).abs() < 1e-12);
            assert_eq!(r.lifted_dim, 1);
        }
    }

    #[test]
    fn interval_box_first_radius() {
        let mu = MatrixDistribution::uniform_entries(
            Matrix::zeros(2, 2),
            m(&[&[1.5, 1.8], &[0.15, 1.2]]),
        )
        .unwrap();
        let r = p_radius(&mu, 1).unwrap();
        assert_eq!(r.assumption_path, AssumptionPath::OrthantInvariant);
        let oracle = (1.35 + (1.35f64 * 1.35 - 4.0 * 0.3825).sqrt()) / 2.0;
        assert!((r.value.unwrap() - oracle).abs() < 1e-12);
        let report = check_mean_stability(&mu, 1).unwrap();
        assert_eq!(report.verdict, Verdict::Stable);
        assert!(report.cone_flags.orthant_invariant);
    }

    #[test]
    fn unsupported_odd_order() {
        let mu = MatrixDistribution::deterministic(m(&[&[0.5, -0.1], &[0.0, 0.5]])).unwrap();
        let r = p_radius(&mu, 1).unwrap();
        assert_eq!(r.assumption_path, AssumptionPath::Unsupported);
        assert!(r.value.is_none());
        assert_eq!(
            check_mean_stability(&mu, 3).unwrap().verdict,
            Verdict::Unsupported
        );
        assert_eq!(
            p_radius(&mu, 2).unwrap().assumption_path,
            AssumptionPath::EvenP
        );
    }

    #[test]
    fn verdicts() {
        assert_eq!(
            check_mean_stability(&scalar_uniform(0.5), 1)
                .unwrap()
                .verdict,
            Verdict::Stable
        );
        assert!((p_radius(&scalar_uniform(0.5), 1).unwrap().value.unwrap() - 0.25).abs() < 1e-15);
        let two = MatrixDistribution::deterministic(Matrix::identity(2).scale(2.0)).unwrap();
        assert_eq!(
            check_mean_stability(&two, 2).unwrap().verdict,
            Verdict::Unstable
        );
        let one = MatrixDistribution::deterministic(Matrix::identity(2)).unwrap();
        assert_eq!(
            check_mean_stability(&one, 2).unwrap().verdict,
            Verdict::Marginal
        );
        assert_eq!(classify(Some(1.0 - 1e-8), 1e-9), Verdict::Stable);
    }

    #[test]
    fn deterministic_collapse() {
        let a = m(&[&[0.4, 0.3], &[-0.2, 0.7]]);
        let rho = linalg::spectral_radius(&a).unwrap();
        let mu = MatrixDistribution::deterministic(a).unwrap();
        for p in [2u32, 4, 6] {
            let v = p_radius(&mu, p).unwrap().value.unwrap();
            assert!((v - rho).abs() <= 1e-9 * rho);
        }
    }

    #[test]
    fn tp_structure() {
        let a = m(&[&[0.5, 0.1], &[0.2, 0.3]]);
        let sys = MarkovJumpSystem::new(Matrix::scalar(1.0), vec![a.clone()]).unwrap();
        assert_eq!(
            markov_tp(&sys, 2).unwrap(),
            linalg::kron_power(&a, 2).unwrap()
        );

        let p = m(&[&[0.1, 0.9], &[0.6, 0.4]]);
        let sys = MarkovJumpSystem::new(p.clone(), vec![Matrix::scalar(2.0), Matrix::scalar(-3.0)])
            .unwrap();
        let t = markov_tp(&sys, 1).unwrap();
        for j in 0..2 {
            for i in 0..2 {
                let mi = [2.0, -3.0][i];
                assert_eq!(t[(j, i)], p[(i, j)] * mi);
            }
        }
    }

    #[test]
    fn markov_single_mode_contraction() {
        let sys = MarkovJumpSystem::new(Matrix::scalar(1.0), vec![Matrix::identity(2).scale(0.5)])
            .unwrap();
        let r = markov_p_radius(&sys, 2).unwrap();
        assert!((r.radius.value.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.verdict, Some(Verdict::Stable));
        assert!(markov_p_radius(&sys, 3).is_err());
        let exp = markov_p_radius_experimental(&sys, 3).unwrap();
        assert!(exp.verdict.is_none() && exp.experimental);
        assert!((exp.radius.value.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn markov_negative_mode_first_order_unsupported() {
        let sys = MarkovJumpSystem::new(Matrix::scalar(1.0), vec![m(&[&[0.5, -0.1], &[0.0, 0.5]])])
            .unwrap();
        let r = markov_p_radius(&sys, 1).unwrap();
        assert_eq!(r.radius.assumption_path, AssumptionPath::Unsupported);
        assert_eq!(r.verdict, Some(Verdict::Unsupported));
    }

    #[test]
    fn jsr_single_atom_and_identity() {
        let a = m(&[&[0.5, 1.0], &[0.0, 0.3]]);
        let b = jsr_bounds(std::slice::from_ref(&a), 1).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-12);
        assert!((b.upper - a.norm_spectral().unwrap()).abs() < 1e-12);
        let deep = jsr_bounds(&[a], 12).unwrap();
        assert!(deep.upper < b.upper && deep.upper - deep.lower < b.upper - b.lower);

        let b = jsr_bounds(&[Matrix::zeros(2, 2), Matrix::identity(2)], 5).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
        assert_eq!(b.products_evaluated, 2 + 4 + 8 + 16 + 32);
    }

    #[test]
    fn jsr_budget_truncates() {
        let atoms = vec![Matrix::identity(1); 3];
        let b = jsr_bounds_with_budget(&atoms, 10, 50).unwrap();
        assert!(b.truncated);
        assert_eq!(b.depth, 3); // 3 + 9 + 27 = 39, next level would be 120
        assert_eq!(b.products_evaluated, 39);
        assert!(jsr_bounds(&[], 2).is_err());
    }

    #[test]
    fn limit_sequence_scalar_and_single_atom() {
        let seq = limit_sequence(&scalar_uniform(1.0), 6, false).unwrap();
        assert_eq!(seq.entries.len(), 6);
        assert!(seq.entries.windows(2).all(|w| w[0].value < w[1].value));
        assert!(seq.jsr_reference.is_none());

        let a = m(&[&[0.6, 0.2], &[0.1, 0.5]]);
        let rho = linalg::spectral_radius(&a).unwrap();
        let seq = limit_sequence(&MatrixDistribution::deterministic(a).unwrap(), 4, false).unwrap();
        assert!(seq.entries.iter().all(|e| (e.value - rho).abs() < 1e-9));
        let jsr = seq.jsr_reference.unwrap();
        assert!(jsr.lower <= rho + 1e-12 && rho <= jsr.upper + 1e-12);
    }

    #[test]
    fn limit_sequence_truncates_at_cap() {
        // (3^8)^2 entries exceed the default cap of 10^7
        let a = m(&[&[0.6, 0.2, 0.0], &[0.1, 0.5, 0.1], &[0.0, 0.3, 0.4]]);
        let seq = limit_sequence(&MatrixDistribution::deterministic(a).unwrap(), 9, true).unwrap();
        assert!(seq.truncated);
        assert_eq!(
            seq.entries.iter().map(|e| e.p).collect::<Vec<_>>(),
            vec![2, 4, 6]
        );
    }

    #[test]
    fn limit_sequence_odd_requires_orthant() {
        let mu = MatrixDistribution::deterministic(m(&[&[0.5, -0.1], &[0.0, 0.5]])).unwrap();
        assert!(matches!(
            limit_sequence(&mu, 3, false),
            Err(Error::AssumptionsNotMet(_))
        ));
        assert_eq!(limit_sequence(&mu, 4, true).unwrap().entries.len(), 2);
    }

    #[test]
    fn lifting_identity_cases() {
        let mu = scalar_uniform(0.8);
        assert_eq!(lifting_identity_check(&mu, 3, 1).unwrap(), 0.0);
        assert!(lifting_identity_check(&mu, 2, 2).unwrap() <= 1e-10);
        let mu2 = MatrixDistribution::uniform_entries(
            Matrix::zeros(2, 2),
            m(&[&[1.5, 1.8], &[0.15, 1.2]]),
        )
        .unwrap();
        assert!(lifting_identity_check(&mu2, 4, 2).unwrap() <= 1e-8);
        assert!(lifting_identity_check(&mu2, 3, 2).is_err());

        let atoms = MatrixDistribution::atomic(vec![
            (0.4, m(&[&[0.3, -0.8], &[0.5, 0.1]])),
            (0.6, m(&[&[0.9, 0.2], &[-0.4, 0.6]])),
        ])
        .unwrap();
        assert!(lifting_identity_check(&atoms, 4, 2).unwrap() <= 1e-8);
    }
}
