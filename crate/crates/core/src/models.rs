//! Problem models: matrix distributions, Markov jump systems, positive
//! orthant checks and the JSON problem format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::linalg::{self, checked_pow, LinalgError, Matrix};

/// Tolerance on probability sums and stochastic rows.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("probabilities at {pointer} sum to {sum}, expected 1")]
    ProbabilitySum { pointer: String, sum: f64 },
    #[error("row at {pointer} is not stochastic: {message}")]
    NotStochastic { pointer: String, message: String },
    #[error("dimension mismatch at {pointer}: {message}")]
    DimensionMismatch { pointer: String, message: String },
    #[error("interval bounds at {pointer} have lower > upper")]
    BoundOrder { pointer: String },
}

impl ModelError {
    /// JSON pointer of the offending field.
    pub fn pointer(&self) -> Option<&str> {
        match self {
            ModelError::Json { .. } => None,
            ModelError::Schema { pointer, .. }
            | ModelError::ProbabilitySum { pointer, .. }
            | ModelError::NotStochastic { pointer, .. }
            | ModelError::DimensionMismatch { pointer, .. }
            | ModelError::BoundOrder { pointer } => Some(pointer),
        }
    }

    fn prefixed(self, prefix: &str) -> Self {
        let join = |p: String| format!("{prefix}{p}");
        match self {
            ModelError::Schema { pointer, message } => ModelError::Schema {
                pointer: join(pointer),
                message,
            },
            ModelError::ProbabilitySum { pointer, sum } => ModelError::ProbabilitySum {
                pointer: join(pointer),
                sum,
            },
            ModelError::NotStochastic { pointer, message } => ModelError::NotStochastic {
                pointer: join(pointer),
                message,
            },
            ModelError::DimensionMismatch { pointer, message } => ModelError::DimensionMismatch {
                pointer: join(pointer),
                message,
            },
            ModelError::BoundOrder { pointer } => ModelError::BoundOrder {
                pointer: join(pointer),
            },
            e @ ModelError::Json { .. } => e,
        }
    }
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn mismatch(pointer: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::DimensionMismatch {
        pointer: pointer.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub prob: f64,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    /// Finitely many matrices with positive probabilities.
    Atomic(Vec<Atom>),
    /// Mutually independent entries, entry `(i, j)` uniform on
    /// `[lower[i, j], upper[i, j]]`.
    UniformEntries { lower: Matrix, upper: Matrix },
}

/// A probability law on `d x d` real matrices with compact support.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDistribution {
    dim: usize,
    law: Law,
}

impl MatrixDistribution {
    /// Finite atomic law. Probabilities must lie in `(0, 1]` and sum to one.
    pub fn atomic(atoms: Vec<(f64, Matrix)>) -> Result<Self, ModelError> {
        let first = atoms
            .first()
            .ok_or_else(|| schema("/atoms", "at least one atom is required"))?;
        let dim = first.1.rows();
        let mut sum = 0.0;
        for (i, (p, m)) in atoms.iter().enumerate() {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(schema(
                    format!("/atoms/{i}/p"),
                    "probability must lie in (0, 1]",
                ));
            }
            if !m.is_square() || m.rows() != dim {
                return Err(mismatch(
                    format!("/atoms/{i}/M"),
                    format!("expected {dim}x{dim}, got {}x{}", m.rows(), m.cols()),
                ));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(ModelError::ProbabilitySum {
                pointer: "/atoms".into(),
                sum,
            });
        }
        Ok(Self {
            dim,
            law: Law::Atomic(
                atoms
                    .into_iter()
                    .map(|(prob, matrix)| Atom { prob, matrix })
                    .collect(),
            ),
        })
    }

    /// Point mass at `m`.
    pub fn deterministic(m: Matrix) -> Result<Self, ModelError> {
        Self::atomic(vec![(1.0, m)])
    }

    /// Entrywise independent uniform law on the box `[lower, upper]`.
    pub fn uniform_entries(lower: Matrix, upper: Matrix) -> Result<Self, ModelError> {
        if !lower.is_square() {
            return Err(mismatch("/lower", "bounds must be square"));
        }
        if upper.rows() != lower.rows() || upper.cols() != lower.cols() {
            return Err(mismatch(
                "/upper",
                "upper bounds must match the lower bounds' shape",
            ));
        }
        let d = lower.rows();
        for i in 0..d {
            for j in 0..d {
                if lower[(i, j)] > upper[(i, j)] {
                    return Err(ModelError::BoundOrder {
                        pointer: format!("/upper/{i}/{j}"),
                    });
                }
            }
        }
        Ok(Self {
            dim: d,
            law: Law::UniformEntries { lower, upper },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    /// Support matrices of an atomic law.
    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.law {
            Law::Atomic(atoms) => Some(atoms),
            Law::UniformEntries { .. } => None,
        }
    }

    /// Exact `E[A]`.
    pub fn expected_matrix(&self) -> Matrix {
        match &self.law {
            Law::Atomic(atoms) => {
                let mut acc = Matrix::zeros(self.dim, self.dim);
                for a in atoms {
                    acc.axpy(a.prob, &a.matrix);
                }
                acc
            }
            Law::UniformEntries { lower, upper } => {
                lower.add(upper).expect("same shape").scale(0.5)
            }
        }
    }

    /// Exact `E[A^{⊗p}]` under the process-wide lift cap.
    pub fn expected_kron_power(&self, p: u32) -> Result<Matrix, LinalgError> {
        self.expected_kron_power_with_cap(p, linalg::lift_cap())
    }

    pub fn expected_kron_power_with_cap(&self, p: u32, cap: usize) -> Result<Matrix, LinalgError> {
        if p == 0 {
            return Err(LinalgError::Precondition("p must be positive".into()));
        }
        let lifted = checked_pow(self.dim, p);
        if (lifted as u128) * (lifted as u128) > cap as u128 {
            return Err(LinalgError::DimensionCap {
                rows: lifted,
                cols: lifted,
                requested: (lifted as u128) * (lifted as u128),
                cap,
            });
        }
        if p == 1 {
            return Ok(self.expected_matrix());
        }
        match &self.law {
            Law::Atomic(atoms) => {
                let mut acc = Matrix::zeros(lifted, lifted);
                for a in atoms {
                    acc.axpy(a.prob, &linalg::kron_power_with_cap(&a.matrix, p, cap)?);
                }
                Ok(acc)
            }
            Law::UniformEntries { lower, upper } => {
                Ok(uniform_expected_kron_power(lower, upper, p))
            }
        }
    }

    /// Exact `E[Aᵀ X A]` for a `d x d` matrix `X`.
    pub fn expected_sandwich(&self, x: &Matrix) -> Matrix {
        match &self.law {
            Law::Atomic(atoms) => {
                let mut acc = Matrix::zeros(self.dim, self.dim);
                for a in atoms {
                    let t = a
                        .matrix
                        .transpose()
                        .matmul(x)
                        .and_then(|t| t.matmul(&a.matrix))
                        .expect("dimensions checked at construction");
                    acc.axpy(a.prob, &t);
                }
                acc
            }
            Law::UniformEntries { lower, upper } => {
                // (AᵀXA)_ij = Σ_kl a_ki X_kl a_lj. Entries are independent, so
                // only the k = l, i = j terms pick up the variance of a_ki.
                let mean = self.expected_matrix();
                let mut out = mean
                    .transpose()
                    .matmul(x)
                    .and_then(|t| t.matmul(&mean))
                    .expect("square");
                for i in 0..self.dim {
                    let mut extra = 0.0;
                    for k in 0..self.dim {
                        let w = upper[(k, i)] - lower[(k, i)];
                        extra += x[(k, k)] * w * w / 12.0;
                    }
                    out[(i, i)] += extra;
                }
                out
            }
        }
    }

    /// Every matrix in the support is entrywise nonnegative.
    pub fn is_orthant_invariant(&self) -> bool {
        match &self.law {
            Law::Atomic(atoms) => atoms.iter().all(|a| a.matrix.is_nonnegative()),
            Law::UniformEntries { lower, .. } => lower.is_nonnegative(),
        }
    }

    /// Positive-orthant flags for lifts `p = 1..=p_max`. Lifts beyond the
    /// dimension cap are left out of the map.
    pub fn cone_flags(&self, p_max: u32) -> ConeFlags {
        let mut expectation_positive = BTreeMap::new();
        for p in 1..=p_max {
            match self.expected_kron_power(p) {
                Ok(e) => {
                    expectation_positive.insert(p, e.is_positive());
                }
                Err(_) => break,
            }
        }
        ConeFlags {
            orthant_invariant: self.is_orthant_invariant(),
            expectation_positive,
        }
    }
}

/// Moment of order `k` of the uniform law on `[l, u]`,
/// `(u^{k+1} − l^{k+1}) / ((k+1)(u − l))`, evaluated through the
/// cancellation-free sum `Σ_j u^j l^{k−j} / (k+1)`. Equals `l^k` when
/// `l = u`.
pub fn uniform_moment(l: f64, u: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if l == u {
        return l.powi(k as i32);
    }
    let mut sum = 0.0;
    let mut up = 1.0;
    for j in 0..=k {
        sum += up * l.powi((k - j) as i32);
        up *= u;
    }
    sum / f64::from(k + 1)
}

fn uniform_expected_kron_power(lower: &Matrix, upper: &Matrix, p: u32) -> Matrix {
    let d = lower.rows();
    let lifted = d.pow(p);
    let cells = d * d;
    let moments: Vec<Vec<f64>> = (0..cells)
        .map(|c| {
            let (i, j) = (c / d, c % d);
            (0..=p)
                .map(|k| uniform_moment(lower[(i, j)], upper[(i, j)], k))
                .collect()
        })
        .collect();
    let digits = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; p as usize];
        for slot in out.iter_mut().rev() {
            *slot = idx % d;
            idx /= d;
        }
        out
    };
    let row_digits: Vec<Vec<usize>> = (0..lifted).map(digits).collect();
    let mut out = Matrix::zeros(lifted, lifted);
    let mut counts = vec![0u32; cells];
    for r in 0..lifted {
        for c in 0..lifted {
            counts.iter_mut().for_each(|v| *v = 0);
            for (&i, &j) in row_digits[r].iter().zip(&row_digits[c]) {
                counts[i * d + j] += 1;
            }
            let mut v = 1.0;
            for (cell, &k) in counts.iter().enumerate() {
                if k > 0 {
                    v *= moments[cell][k as usize];
                }
            }
            out[(r, c)] = v;
        }
    }
    out
}

/// Positive-orthant structure of a distribution. Always recomputed from the
/// law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeFlags {
    /// Every support matrix maps the positive orthant into itself.
    pub orthant_invariant: bool,
    /// `E[A^{⊗p}]` is entrywise strictly positive. For `p = 1` this is exact
    /// interior-positivity; for `p ≥ 2` it is only a sufficient condition.
    pub expectation_positive: BTreeMap<u32, bool>,
}

/// `x(k+1) = M_{σ_k} x(k)` with `σ_k` a Markov chain on `N` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovJumpSystem {
    transition: Matrix,
    modes: Vec<Matrix>,
    inputs: Option<Vec<Vec<f64>>>,
    feedback: Option<Vec<f64>>,
    initial_mode: Option<usize>,
}

impl MarkovJumpSystem {
    pub fn new(transition: Matrix, modes: Vec<Matrix>) -> Result<Self, ModelError> {
        let n = modes.len();
        if n == 0 {
            return Err(schema("/modes", "at least one mode is required"));
        }
        if transition.rows() != n || transition.cols() != n {
            return Err(mismatch(
                "/P",
                format!(
                    "expected {n}x{n}, got {}x{}",
                    transition.rows(),
                    transition.cols()
                ),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                let v = transition[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::NotStochastic {
                        pointer: format!("/P/{i}/{j}"),
                        message: format!("entry {v} outside [0, 1]"),
                    });
                }
            }
            let sum: f64 = transition.row(i).iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(ModelError::NotStochastic {
                    pointer: format!("/P/{i}"),
                    message: format!("row sums to {sum}"),
                });
            }
        }
        let d = modes[0].rows();
        for (i, m) in modes.iter().enumerate() {
            if !m.is_square() || m.rows() != d {
                return Err(mismatch(
                    format!("/modes/{i}"),
                    format!("expected {d}x{d}, got {}x{}", m.rows(), m.cols()),
                ));
            }
        }
        Ok(Self {
            transition,
            modes,
            inputs: None,
            feedback: None,
            initial_mode: None,
        })
    }

    pub fn with_inputs(mut self, inputs: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if inputs.len() != self.modes.len() {
            return Err(mismatch(
                "/inputs",
                format!(
                    "expected {} input vectors, got {}",
                    self.modes.len(),
                    inputs.len()
                ),
            ));
        }
        for (i, v) in inputs.iter().enumerate() {
            if v.len() != self.dim() {
                return Err(mismatch(
                    format!("/inputs/{i}"),
                    format!("expected length {}", self.dim()),
                ));
            }
        }
        self.inputs = Some(inputs);
        Ok(self)
    }

    pub fn with_feedback(mut self, feedback: Vec<f64>) -> Result<Self, ModelError> {
        if feedback.len() != self.dim() {
            return Err(mismatch(
                "/feedback",
                format!("expected length {}", self.dim()),
            ));
        }
        self.feedback = Some(feedback);
        Ok(self)
    }

    /// Sets the zero-based initial mode.
    pub fn with_initial_mode(mut self, mode: usize) -> Result<Self, ModelError> {
        if mode >= self.modes.len() {
            return Err(schema(
                "/initial_mode",
                format!("mode must lie in 1..={}", self.modes.len()),
            ));
        }
        self.initial_mode = Some(mode);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.modes[0].rows()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn modes(&self) -> &[Matrix] {
        &self.modes
    }

    pub fn inputs(&self) -> Option<&[Vec<f64>]> {
        self.inputs.as_deref()
    }

    pub fn feedback(&self) -> Option<&[f64]> {
        self.feedback.as_deref()
    }

    /// Zero-based initial mode, if one was given.
    pub fn initial_mode(&self) -> Option<usize> {
        self.initial_mode
    }

    /// Closed loop `M_i + n_i f`; inputs and feedback are dropped.
    pub fn apply_feedback(&self) -> Result<Self, ModelError> {
        let inputs = self
            .inputs
            .as_ref()
            .ok_or_else(|| schema("/markov/inputs", "closed loop requires input vectors"))?;
        let f = self
            .feedback
            .as_ref()
            .ok_or_else(|| schema("/markov/feedback", "closed loop requires a feedback row"))?;
        let d = self.dim();
        let modes = self
            .modes
            .iter()
            .zip(inputs)
            .map(|(m, n)| {
                let mut out = m.clone();
                for i in 0..d {
                    for j in 0..d {
                        out[(i, j)] += n[i] * f[j];
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            transition: self.transition.clone(),
            modes,
            inputs: None,
            feedback: None,
            initial_mode: self.initial_mode,
        })
    }

    /// All modes entrywise nonnegative.
    pub fn is_orthant_invariant(&self) -> bool {
        self.modes.iter().all(Matrix::is_nonnegative)
    }
}

/// A loaded problem file.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Iid(MatrixDistribution),
    Markov(MarkovJumpSystem),
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Iid(mu) => mu.dim(),
            Problem::Markov(sys) => sys.dim(),
        }
    }

    pub fn as_iid(&self) -> Option<&MatrixDistribution> {
        match self {
            Problem::Iid(mu) => Some(mu),
            Problem::Markov(_) => None,
        }
    }

    pub fn as_markov(&self) -> Option<&MarkovJumpSystem> {
        match self {
            Problem::Markov(sys) => Some(sys),
            Problem::Iid(_) => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Problem::Iid(mu) => {
                let distribution = match mu.law() {
                    Law::Atomic(atoms) => json!({
                        "kind": "atomic",
                        "atoms": atoms
                            .iter()
                            .map(|a| json!({"p": a.prob, "M": a.matrix.to_rows()}))
                            .collect::<Vec<_>>(),
                    }),
                    Law::UniformEntries { lower, upper } => json!({
                        "kind": "uniform_entries",
                        "lower": lower.to_rows(),
                        "upper": upper.to_rows(),
                    }),
                };
                json!({"type": "iid", "dim": mu.dim(), "distribution": distribution})
            }
            Problem::Markov(sys) => {
                let mut markov = Map::new();
                markov.insert("P".into(), json!(sys.transition.to_rows()));
                markov.insert(
                    "modes".into(),
                    json!(sys.modes.iter().map(Matrix::to_rows).collect::<Vec<_>>()),
                );
                if let Some(inputs) = &sys.inputs {
                    markov.insert("inputs".into(), json!(inputs));
                }
                if let Some(f) = &sys.feedback {
                    markov.insert("feedback".into(), json!(f));
                }
                if let Some(m) = sys.initial_mode {
                    markov.insert("initial_mode".into(), json!(m + 1));
                }
                json!({"type": "markov", "dim": sys.dim(), "markov": markov})
            }
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("serialisable")
    }
}

/// Parses and validates a problem document.
pub fn load_problem(document: &str) -> Result<Problem, ModelError> {
    let root: Value = serde_json::from_str(document).map_err(|e| ModelError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = root
        .as_object()
        .ok_or_else(|| schema("", "document must be an object"))?;
    check_keys(obj, "", &["type", "dim", "distribution", "markov"])?;
    let kind = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("/type", "expected \"iid\" or \"markov\""))?;
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .filter(|&d| d >= 1)
        .ok_or_else(|| schema("/dim", "expected a positive integer"))? as usize;
    match kind {
        "iid" => {
            if obj.contains_key("markov") {
                return Err(schema("/markov", "not allowed when type is \"iid\""));
            }
            let dist = obj
                .get("distribution")
                .ok_or_else(|| schema("/distribution", "required when type is \"iid\""))?;
            parse_distribution(dist, dim).map(Problem::Iid)
        }
        "markov" => {
            if obj.contains_key("distribution") {
                return Err(schema(
                    "/distribution",
                    "not allowed when type is \"markov\"",
                ));
            }
            let m = obj
                .get("markov")
                .ok_or_else(|| schema("/markov", "required when type is \"markov\""))?;
            parse_markov(m, dim).map(Problem::Markov)
        }
        other => Err(schema("/type", format!("unknown problem type {other:?}"))),
    }
}

fn check_keys(obj: &Map<String, Value>, ptr: &str, allowed: &[&str]) -> Result<(), ModelError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(format!("{ptr}/{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn parse_number(v: &Value, ptr: &str) -> Result<f64, ModelError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| schema(ptr, "expected a finite number"))
}

fn parse_vector(v: &Value, ptr: &str) -> Result<Vec<f64>, ModelError> {
    v.as_array()
        .ok_or_else(|| schema(ptr, "expected an array of numbers"))?
        .iter()
        .enumerate()
        .map(|(i, x)| parse_number(x, &format!("{ptr}/{i}")))
        .collect()
}

fn parse_square(v: &Value, ptr: &str, dim: usize) -> Result<Matrix, ModelError> {
    let rows = v
        .as_array()
        .ok_or_else(|| schema(ptr, "expected an array of rows"))?;
    if rows.len() != dim {
        return Err(mismatch(
            ptr,
            format!("expected {dim} rows, got {}", rows.len()),
        ));
    }
    let mut parsed = Vec::with_capacity(dim);
    for (i, r) in rows.iter().enumerate() {
        let rp = format!("{ptr}/{i}");
        let row = parse_vector(r, &rp)?;
        if row.len() != dim {
            return Err(mismatch(
                rp,
                format!("expected {dim} entries, got {}", row.len()),
            ));
        }
        parsed.push(row);
    }
    Matrix::from_rows(&parsed).map_err(|e| schema(ptr, e.to_string()))
}

fn parse_distribution(v: &Value, dim: usize) -> Result<MatrixDistribution, ModelError> {
    const PTR: &str = "/distribution";
    let obj = v
        .as_object()
        .ok_or_else(|| schema(PTR, "expected an object"))?;
    match obj.get("kind").and_then(Value::as_str) {
        Some("atomic") => {
            check_keys(obj, PTR, &["kind", "atoms"])?;
            let atoms = obj
                .get("atoms")
                .and_then(Value::as_array)
                .ok_or_else(|| schema(format!("{PTR}/atoms"), "expected an array of atoms"))?;
            let mut parsed = Vec::with_capacity(atoms.len());
            for (i, a) in atoms.iter().enumerate() {
                let ap = format!("{PTR}/atoms/{i}");
                let ao = a
                    .as_object()
                    .ok_or_else(|| schema(&ap, "expected an object"))?;
                check_keys(ao, &ap, &["p", "M"])?;
                let p = parse_number(
                    ao.get("p")
                        .ok_or_else(|| schema(format!("{ap}/p"), "missing"))?,
                    &format!("{ap}/p"),
                )?;
                let m = parse_square(
                    ao.get("M")
                        .ok_or_else(|| schema(format!("{ap}/M"), "missing"))?,
                    &format!("{ap}/M"),
                    dim,
                )?;
                parsed.push((p, m));
            }
            MatrixDistribution::atomic(parsed).map_err(|e| e.prefixed(PTR))
        }
        Some("uniform_entries") => {
            check_keys(obj, PTR, &["kind", "lower", "upper"])?;
            let get = |k: &str| {
                obj.get(k)
                    .ok_or_else(|| schema(format!("{PTR}/{k}"), "missing"))
                    .and_then(|v| parse_square(v, &format!("{PTR}/{k}"), dim))
            };
            MatrixDistribution::uniform_entries(get("lower")?, get("upper")?)
                .map_err(|e| e.prefixed(PTR))
        }
        _ => Err(schema(
            format!("{PTR}/kind"),
            "expected \"atomic\" or \"uniform_entries\"",
        )),
    }
}

fn parse_markov(v: &Value, dim: usize) -> Result<MarkovJumpSystem, ModelError> {
    const PTR: &str = "/markov";
    let obj = v
        .as_object()
        .ok_or_else(|| schema(PTR, "expected an object"))?;
    check_keys(
        obj,
        PTR,
        &["P", "modes", "inputs", "feedback", "initial_mode"],
    )?;
    let modes_v = obj
        .get("modes")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(format!("{PTR}/modes"), "expected an array of matrices"))?;
    let modes = modes_v
        .iter()
        .enumerate()
        .map(|(i, m)| parse_square(m, &format!("{PTR}/modes/{i}"), dim))
        .collect::<Result<Vec<_>, _>>()?;
    let n = modes.len();
    let p = parse_square(
        obj.get("P")
            .ok_or_else(|| schema(format!("{PTR}/P"), "missing"))?,
        &format!("{PTR}/P"),
        n,
    )?;
    let mut sys = MarkovJumpSystem::new(p, modes).map_err(|e| e.prefixed(PTR))?;
    if let Some(inputs) = obj.get("inputs") {
        let arr = inputs
            .as_array()
            .ok_or_else(|| schema(format!("{PTR}/inputs"), "expected an array of vectors"))?;
        let parsed = arr
            .iter()
            .enumerate()
            .map(|(i, x)| parse_vector(x, &format!("{PTR}/inputs/{i}")))
            .collect::<Result<Vec<_>, _>>()?;
        sys = sys.with_inputs(parsed).map_err(|e| e.prefixed(PTR))?;
    }
    if let Some(f) = obj.get("feedback") {
        let parsed = parse_vector(f, &format!("{PTR}/feedback"))?;
        sys = sys.with_feedback(parsed).map_err(|e| e.prefixed(PTR))?;
    }
    if let Some(m) = obj.get("initial_mode") {
        let mode = m
            .as_u64()
            .filter(|&m| m >= 1 && m as usize <= n)
            .ok_or_else(|| {
                schema(
                    format!("{PTR}/initial_mode"),
                    format!("expected an integer in 1..={n}"),
                )
            })?;
        sys = sys
            .with_initial_mode(mode as usize - 1)
            .map_err(|e| e.prefixed(PTR))?;
    }
    Ok(sys)
}
