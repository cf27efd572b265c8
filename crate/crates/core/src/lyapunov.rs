//! Homogeneous Lyapunov certificates: synthesis, evaluation and validation.
//!
//! Three certificate shapes are produced:
//!
//! * weighted ℓ1 norms `V(x) = Σ f_i |x_i|` for first-mean stability of
//!   orthant-invariant laws, with `f` the left Perron vector of `E[A]`;
//! * quadratic forms `V(x) = xᵀHx` for second-mean stability, with `H` the
//!   fixed point of `H = I + E[AᵀHA]`;
//! * lifts `W(x) = V(x^{⊗q})` of either shape for higher even orders (or odd
//!   orders on the orthant).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mcsim;
use crate::models::{Law, MatrixDistribution};
use crate::radius::{self, DEFAULT_DECISION_MARGIN};

/// Relative step tolerance of the quadratic fixed-point iteration.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
/// Iteration budget of the quadratic fixed-point iteration.
pub const FIXED_POINT_BUDGET: usize = 1_000_000;
/// The iteration is declared divergent once `‖H_n‖_∞` exceeds this multiple
/// of `1 / (1 − ρ_2²)`.
pub const DIVERGENCE_SAFETY_FACTOR: f64 = 10.0;
/// Number of random unit vectors used by default during validation.
pub const DEFAULT_TEST_VECTORS: usize = 1000;
pub const DEFAULT_VALIDATION_SEED: u64 = 42;
/// Statistical band, in standard errors, for Monte Carlo validation.
pub const MC_SIGMA_BAND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateKind {
    ConeLinearNorm {
        f: Vec<f64>,
    },
    QuadraticForm {
        h: Matrix,
    },
    Lifted {
        base: Box<LyapunovCertificate>,
        lift_power: u32,
    },
}

/// `V` with `E[V(Ax)] ≤ γ V(x)` for every `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    degree: u32,
    kind: CertificateKind,
    gamma: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "decay factor must lie in [0, 1), got {gamma}"
        )));
    }
    Ok(())
}

impl LyapunovCertificate {
    pub fn cone_linear_norm(f: Vec<f64>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if f.is_empty() || f.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(
                "cone norm weights must be finite and strictly positive".into(),
            ));
        }
        Ok(Self {
            degree: 1,
            kind: CertificateKind::ConeLinearNorm { f },
            gamma,
        })
    }

    pub fn quadratic(h: Matrix, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !h.is_square() {
            return Err(Error::InvalidArgument(
                "quadratic form must be square".into(),
            ));
        }
        if h.asymmetry() > 1e-12 * h.max_abs() {
            return Err(Error::InvalidArgument(
                "quadratic form must be symmetric".into(),
            ));
        }
        let min_eig = linalg::symmetric_eigenvalues(&h)?[0];
        if min_eig <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "quadratic form must be positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self {
            degree: 2,
            kind: CertificateKind::QuadraticForm { h },
            gamma,
        })
    }

    /// `W(x) = base(x^{⊗q})`; the base acts on dimension `d^q`.
    pub fn lifted(base: LyapunovCertificate, lift_power: u32) -> Result<Self> {
        if lift_power == 0 {
            return Err(Error::InvalidArgument("lift power must be positive".into()));
        }
        if lift_power == 1 {
            return Ok(base);
        }
        if matches!(base.kind, CertificateKind::Lifted { .. }) {
            return Err(Error::InvalidArgument(
                "cannot lift a lifted certificate".into(),
            ));
        }
        if integer_root(base.state_dim(), lift_power).is_none() {
            return Err(Error::InvalidArgument(format!(
                "base dimension {} is not a {lift_power}-th power",
                base.state_dim()
            )));
        }
        Ok(Self {
            degree: base.degree * lift_power,
            gamma: base.gamma,
            kind: CertificateKind::Lifted {
                base: Box::new(base),
                lift_power,
            },
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> &CertificateKind {
        &self.kind
    }

    /// Dimension of the state `x` the certificate is evaluated on.
    pub fn state_dim(&self) -> usize {
        match &self.kind {
            CertificateKind::ConeLinearNorm { f } => f.len(),
            CertificateKind::QuadraticForm { h } => h.rows(),
            CertificateKind::Lifted { base, lift_power } => {
                integer_root(base.state_dim(), *lift_power).expect("checked at construction")
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.state_dim() {
            return Err(Error::InvalidArgument(format!(
                "state of length {} for a certificate on dimension {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(match &self.kind {
            CertificateKind::ConeLinearNorm { f } => {
                f.iter().zip(x).map(|(fi, xi)| fi * xi.abs()).sum()
            }
            CertificateKind::QuadraticForm { h } => {
                let hx = h.mul_vec(x)?;
                x.iter().zip(&hx).map(|(a, b)| a * b).sum::<f64>().max(0.0)
            }
            CertificateKind::Lifted { base, lift_power } => {
                base.evaluate(&linalg::kron_power_vec(x, *lift_power))?
            }
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CertificateDoc::from(self)).expect("serialisable")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&CertificateDoc::from(self)).expect("serialisable")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: CertificateDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("certificate JSON: {e}")))?;
        doc.try_into()
    }
}

fn integer_root(n: usize, q: u32) -> Option<usize> {
    let guess = (n as f64).powf(1.0 / f64::from(q)).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&d| d.checked_pow(q) == Some(n))
}

/// Flat JSON layout of a certificate.
#[derive(Debug, Serialize, Deserialize)]
struct CertificateDoc {
    degree: u32,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<Vec<f64>>,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    h: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lift_power: Option<u32>,
    gamma: f64,
}

impl From<&LyapunovCertificate> for CertificateDoc {
    fn from(cert: &LyapunovCertificate) -> Self {
        let (kind, base, lift_power) = match &cert.kind {
            CertificateKind::Lifted { base, lift_power } => {
                ("lifted", &base.kind, Some(*lift_power))
            }
            CertificateKind::ConeLinearNorm { .. } => ("cone_linear_norm", &cert.kind, None),
            CertificateKind::QuadraticForm { .. } => ("quadratic_form", &cert.kind, None),
        };
        let (f, h) = match base {
            CertificateKind::ConeLinearNorm { f } => (Some(f.clone()), None),
            CertificateKind::QuadraticForm { h } => (None, Some(h.to_rows())),
            CertificateKind::Lifted { .. } => unreachable!("lifts are one level deep"),
        };
        CertificateDoc {
            degree: cert.degree,
            kind: kind.to_string(),
            f,
            h,
            lift_power,
            gamma: cert.gamma,
        }
    }
}

impl TryFrom<CertificateDoc> for LyapunovCertificate {
    type Error = Error;

    fn try_from(doc: CertificateDoc) -> Result<Self> {
        let base = match (doc.f, doc.h) {
            (Some(f), None) => Self::cone_linear_norm(f, doc.gamma)?,
            (None, Some(h)) => Self::quadratic(Matrix::from_rows(&h)?, doc.gamma)?,
            _ => {
                return Err(Error::InvalidArgument(
                    "certificate needs exactly one of \"f\" and \"H\"".into(),
                ))
            }
        };
        let cert = match (doc.kind.as_str(), doc.lift_power) {
            ("cone_linear_norm", None) if base.degree == 1 => base,
            ("quadratic_form", None) if base.degree == 2 => base,
            ("lifted", Some(q)) => Self::lifted(base, q)?,
            (kind, _) => {
                return Err(Error::InvalidArgument(format!(
                    "inconsistent certificate kind {kind:?}"
                )))
            }
        };
        if cert.degree != doc.degree {
            return Err(Error::InvalidArgument(format!(
                "declared degree {} but the certificate has degree {}",
                doc.degree, cert.degree
            )));
        }
        Ok(cert)
    }
}

/// Weighted ℓ1 certificate of degree 1 for an orthant-invariant law with
/// entrywise positive mean: `f` is the left Perron vector of `E[A]` and
/// `γ = ρ(E[A])`.
pub fn synthesize_cone_norm(mu: &MatrixDistribution) -> Result<LyapunovCertificate> {
    if !mu.is_orthant_invariant() {
        return Err(Error::AssumptionsNotMet(
            "support does not keep the positive orthant invariant".into(),
        ));
    }
    let mean = mu.expected_matrix();
    cone_norm_from_mean(&mean)
}

fn cone_norm_from_mean(mean: &Matrix) -> Result<LyapunovCertificate> {
    if !mean.is_positive() {
        return Err(Error::AssumptionsNotMet(
            "expected matrix is not entrywise positive".into(),
        ));
    }
    let (rho, f) = linalg::dominant_left_eigenvector(mean)?;
    if rho >= 1.0 - DEFAULT_DECISION_MARGIN {
        return Err(Error::Unstable(format!(
            "spectral radius of the expectation is {rho}, no decaying certificate exists"
        )));
    }
    LyapunovCertificate::cone_linear_norm(f, rho)
}

/// Runs `H_{n+1} = I + S(H_n)` from `H_0 = I` until the step is below
/// `FIXED_POINT_TOLERANCE · ‖H_n‖_∞`, then derives the certified decay factor.
fn quadratic_fixed_point(
    dim: usize,
    rho2: f64,
    sandwich: impl Fn(&Matrix) -> Result<Matrix>,
) -> Result<LyapunovCertificate> {
    if rho2 >= 1.0 - DEFAULT_DECISION_MARGIN {
        return Err(Error::Unstable(format!(
            "second-order radius is {rho2}, the fixed point does not exist"
        )));
    }
    let blowup = DIVERGENCE_SAFETY_FACTOR / (1.0 - rho2 * rho2);
    let identity = Matrix::identity(dim);
    let mut h = identity.clone();
    let mut converged = false;
    for _ in 0..FIXED_POINT_BUDGET {
        let next = identity.add(&sandwich(&h)?)?.symmetric_part();
        let step = next.sub(&h)?.norm_inf();
        let scale = h.norm_inf();
        h = next;
        if !h.as_slice().iter().all(|v| v.is_finite()) || h.norm_inf() > blowup {
            return Err(Error::Unstable(format!(
                "fixed-point iteration diverged (‖H‖∞ = {:e} > {blowup:e})",
                h.norm_inf()
            )));
        }
        if step <= FIXED_POINT_TOLERANCE * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(linalg::LinalgError::SolverFailure {
            routine: "quadratic fixed point",
            iterations: FIXED_POINT_BUDGET,
            partial: Vec::new(),
        }
        .into());
    }
    let lambda_max = *linalg::symmetric_eigenvalues(&h)?
        .last()
        .expect("non-empty");
    let from_identity = 1.0 - 1.0 / lambda_max;
    // Smallest γ with γH − S(H) ⪰ 0 for the H actually returned; agrees with
    // 1 − 1/λ_max(H) up to the fixed-point residual.
    let exact = linalg::max_generalized_eigenvalue(&sandwich(&h)?, &h)?;
    let gamma = from_identity.max(exact).max(0.0);
    if gamma >= 1.0 {
        return Err(Error::Unstable(format!(
            "certified decay factor {gamma} is not below 1"
        )));
    }
    LyapunovCertificate::quadratic(h, gamma)
}

/// Quadratic certificate `xᵀHx` with `H = I + E[AᵀHA]`.
pub fn synthesize_quadratic(mu: &MatrixDistribution) -> Result<LyapunovCertificate> {
    let rho2 = radius::p_radius(mu, 2)?
        .value
        .expect("even orders are always licensed");
    quadratic_fixed_point(mu.dim(), rho2, |x| Ok(mu.expected_sandwich(x)))
}

/// `max |E[AᵀHA] − (H − I)|`.
pub fn quadratic_residual(mu: &MatrixDistribution, h: &Matrix) -> Result<f64> {
    let lhs = mu.expected_sandwich(h);
    let rhs = h.sub(&Matrix::identity(h.rows()))?;
    Ok(lhs.sub(&rhs)?.max_abs())
}

/// Degree-`p` certificate. Even orders lift a quadratic form to `μ^{⊗p/2}`;
/// odd orders need an orthant-invariant law with `E[A^{⊗p}] > 0` and lift a
/// cone norm to `μ^{⊗p}`.
pub fn synthesize_degree_p(mu: &MatrixDistribution, p: u32) -> Result<LyapunovCertificate> {
    match p {
        0 => Err(Error::InvalidArgument("degree must be positive".into())),
        1 => synthesize_cone_norm(mu),
        2 => synthesize_quadratic(mu),
        p if p % 2 == 0 => {
            let q = p / 2;
            let lifted_dim = mu.dim().pow(q);
            // vec(E[BᵀXB]) = E[A^{⊗p}]ᵀ vec(X) for B = A^{⊗q}
            let operator = mu.expected_kron_power(p)?.transpose();
            let rho_p = linalg::spectral_radius(&operator)?;
            let rho2_lifted = rho_p.sqrt();
            let base = quadratic_fixed_point(lifted_dim, rho2_lifted, |x| {
                let v = operator.mul_vec(&linalg::vec_matrix(x))?;
                Ok(linalg::unvec_square(&v, lifted_dim)?)
            })?;
            LyapunovCertificate::lifted(base, q)
        }
        p => {
            if !mu.is_orthant_invariant() {
                return Err(Error::AssumptionsNotMet(format!(
                    "odd degree {p} requires an orthant-invariant support"
                )));
            }
            let base = cone_norm_from_mean(&mu.expected_kron_power(p)?)?;
            LyapunovCertificate::lifted(base, p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ValidationMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub x: Vec<f64>,
    /// `E[V(Ax)]`, exact or estimated.
    pub expected_next: f64,
    /// `γ V(x)`.
    pub bound: f64,
    /// `expected_next / bound`.
    pub ratio: f64,
    /// Standard error of `expected_next` (zero in exact mode).
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub mode: ValidationMode,
    pub gamma: f64,
    pub vectors_checked: usize,
    pub violations: usize,
    /// Test vector with the largest `E[V(Ax)] / (γ V(x))`.
    pub worst: Option<WorstCase>,
}

/// `DEFAULT_TEST_VECTORS` seeded uniform points on the unit sphere followed
/// by the standard basis.
pub fn default_test_vectors(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(DEFAULT_TEST_VECTORS + dim);
    while out.len() < DEFAULT_TEST_VECTORS {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            out.push(g.iter().map(|v| v / norm).collect());
        }
    }
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        out.push(e);
    }
    out
}

/// Checks `E[V(Ax)] ≤ γ V(x)` on the test vectors (the default set when
/// `xs` is `None`). Exact mode needs an atomic law and allows a relative
/// slack of 1e-9; Monte Carlo mode allows `MC_SIGMA_BAND` standard errors.
pub fn validate_certificate(
    cert: &LyapunovCertificate,
    mu: &MatrixDistribution,
    xs: Option<&[Vec<f64>]>,
    mode: ValidationMode,
) -> Result<ValidationReport> {
    let d = mu.dim();
    if cert.state_dim() != d {
        return Err(Error::InvalidArgument(format!(
            "certificate on dimension {} for a law on dimension {d}",
            cert.state_dim()
        )));
    }
    let defaults;
    let xs = match xs {
        Some(xs) => xs,
        None => {
            defaults = default_test_vectors(d, DEFAULT_VALIDATION_SEED);
            &defaults
        }
    };
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::InvalidArgument(format!(
            "test vector of length {} for dimension {d}",
            bad.len()
        )));
    }
    let gamma = cert.gamma();
    let samples: Vec<(f64, Matrix)> = match mode {
        ValidationMode::Exact => match mu.law() {
            Law::Atomic(atoms) => atoms.iter().map(|a| (a.prob, a.matrix.clone())).collect(),
            Law::UniformEntries { .. } => {
                return Err(Error::InvalidArgument(
                    "exact validation requires an atomic law".into(),
                ))
            }
        },
        ValidationMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument(
                    "Monte Carlo validation needs at least 2 samples".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..samples)
                .map(|_| (1.0, mcsim::sample_matrix(mu, &mut rng)))
                .collect()
        }
    };
    let checks: Vec<(WorstCase, bool)> = xs
        .par_iter()
        .filter_map(|x| {
            let vx = match cert.evaluate(x) {
                Ok(v) if v > 0.0 => v,
                Ok(_) => return None,
                Err(e) => return Some(Err(e)),
            };
            let values: Result<Vec<f64>> = samples
                .iter()
                .map(|(_, a)| cert.evaluate(&a.mul_vec(x)?))
                .collect();
            let values = match values {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            let bound = gamma * vx;
            let (expected_next, stderr, ok) = match mode {
                ValidationMode::Exact => {
                    let e: f64 = samples.iter().zip(&values).map(|((p, _), v)| p * v).sum();
                    (e, 0.0, e <= bound * (1.0 + 1e-9))
                }
                ValidationMode::MonteCarlo { .. } => {
                    let (mean, se) = mcsim::mean_and_stderr(&values);
                    (mean, se, mean <= bound * (1.0 + 1e-9) + MC_SIGMA_BAND * se)
                }
            };
            Some(Ok((
                WorstCase {
                    x: x.clone(),
                    expected_next,
                    bound,
                    ratio: if bound > 0.0 {
                        expected_next / bound
                    } else {
                        f64::INFINITY
                    },
                    stderr,
                },
                ok,
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = checks.iter().filter(|(_, ok)| !ok).count();
    let worst = checks
        .iter()
        .max_by(|a, b| a.0.ratio.total_cmp(&b.0.ratio))
        .map(|(w, _)| w.clone());
    Ok(ValidationReport {
        passed: violations == 0,
        mode,
        gamma,
        vectors_checked: checks.len(),
        violations,
        worst,
    })
}
