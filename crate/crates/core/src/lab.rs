//! Experiment runner: convergence sweeps, bound checks and CSV output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbsystem::{BoasBuckSystem, DEFAULT_TRUNC_EPS};
use crate::catalog::TestFunction;
use crate::error::{Error, Result};
use crate::moments::{operator_mu1, operator_mu2};
use crate::operators::{apply_batch_with_breaks, J0Convention, OperatorConfig, OperatorKind, OperatorValue, RealFn};
use crate::smoothness::{
    lipschitz_fit, modulus_classical, modulus_ditzian_totik, phi, total_variation, Domain, DEFAULT_X_MAX,
};
use crate::special::QuadratureSpec;

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "system",
    "fn",
    "n",
    "x",
    "op_value",
    "f_value",
    "abs_err",
    "bound_value",
    "ratio",
    "note",
];

/// Relative slack for "non-increasing" sequences.
const MONOTONE_SLACK: f64 = 1.1;
/// Absolute floor below which sequence wobble is treated as roundoff.
const MONOTONE_FLOOR: f64 = 1e-9;
/// Below this a modulus is treated as zero and its ratio is not formed.
const DEGENERATE_MODULUS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Uniform,
    Modulus,
    Lipschitz,
    Dt,
    Weighted,
    Bv,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Uniform,
        CheckKind::Modulus,
        CheckKind::Lipschitz,
        CheckKind::Dt,
        CheckKind::Weighted,
        CheckKind::Bv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Uniform => "uniform",
            CheckKind::Modulus => "modulus",
            CheckKind::Lipschitz => "lipschitz",
            CheckKind::Dt => "dt",
            CheckKind::Weighted => "weighted",
            CheckKind::Bv => "bv",
        }
    }

    fn default_functions(self) -> &'static [&'static str] {
        match self {
            CheckKind::Uniform => &["one", "s", "s2", "exp_neg"],
            CheckKind::Modulus => &["exp_neg", "abs_s_minus_1", "sqrt"],
            CheckKind::Lipschitz => &["sqrt"],
            CheckKind::Dt => &["exp_neg"],
            CheckKind::Weighted => &["one", "s", "s2"],
            CheckKind::Bv => &["abs_s_minus_1"],
        }
    }

    fn default_x_grid(self) -> Option<&'static [f64]> {
        match self {
            CheckKind::Lipschitz => Some(&[0.5, 1.0, 2.0, 5.0]),
            CheckKind::Bv => Some(&[1.0]),
            _ => None,
        }
    }
}

/// One check of an experiment; unset fields fall back to per-kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub kind: CheckKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<f64>>,
    /// Uniform: tolerance on the sup error at the largest `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Lipschitz: exponent `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Ditzian-Totik: step-weight exponents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Weighted: exponent of the extra `(1 + x^2)^alpha` factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl CheckSpec {
    pub fn new(kind: CheckKind) -> Self {
        Self {
            kind,
            functions: None,
            n_grid: None,
            x_grid: None,
            tol: None,
            r: None,
            gammas: None,
            alpha: None,
        }
    }
}

fn default_operator() -> OperatorKind {
    OperatorKind::Durrmeyer
}
fn default_n_grid() -> Vec<u64> {
    vec![10, 20, 40, 80, 160, 320, 640]
}
fn default_x_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 5.0, 10.0]
}
fn default_x_max() -> f64 {
    DEFAULT_X_MAX
}
fn default_trunc_eps() -> f64 {
    DEFAULT_TRUNC_EPS
}
fn default_uniform_tol() -> f64 {
    0.25
}
fn default_lipschitz_r() -> f64 {
    1.0
}
fn default_gammas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn default_alpha() -> f64 {
    0.5
}
fn default_weighted_tols() -> [f64; 3] {
    [1e-8, 1e-3, 1e-2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Path to a system file (relative to the spec file) or `builtin:<name>`.
    pub system: String,
    #[serde(default = "default_operator")]
    pub operator: OperatorKind,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_x_grid")]
    pub x_grid: Vec<f64>,
    /// Empty means every check with its defaults.
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_trunc_eps")]
    pub trunc_eps: f64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub j0_convention: J0Convention,
    #[serde(default = "default_uniform_tol")]
    pub uniform_tol: f64,
    #[serde(default = "default_lipschitz_r")]
    pub lipschitz_r: f64,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_weighted_tols")]
    pub weighted_tols: [f64; 3],
}

impl ExperimentSpec {
    pub fn new(system: impl Into<String>) -> Self {
        Self {
            name: None,
            system: system.into(),
            operator: default_operator(),
            n_grid: default_n_grid(),
            x_grid: default_x_grid(),
            checks: Vec::new(),
            x_max: default_x_max(),
            trunc_eps: default_trunc_eps(),
            quadrature: QuadratureSpec::default(),
            j0_convention: J0Convention::default(),
            uniform_tol: default_uniform_tol(),
            lipschitz_r: default_lipschitz_r(),
            gammas: default_gammas(),
            alpha: default_alpha(),
            weighted_tols: default_weighted_tols(),
        }
    }

    pub fn with_checks(mut self, checks: Vec<CheckSpec>) -> Self {
        self.checks = checks;
        self
    }

    pub fn from_json_str(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let grids = std::iter::once(&self.n_grid).chain(self.checks.iter().filter_map(|c| c.n_grid.as_ref()));
        for g in grids {
            if g.is_empty() || g.windows(2).any(|w| w[1] <= w[0]) || g[0] < 2 {
                return Err(Error::InvalidArgument(
                    "n_grid must be nonempty, strictly increasing and start at n >= 2".into(),
                ));
            }
        }
        let xs = std::iter::once(&self.x_grid).chain(self.checks.iter().filter_map(|c| c.x_grid.as_ref()));
        for g in xs {
            if g.iter().any(|x| !(*x >= 0.0 && *x <= self.x_max)) {
                return Err(Error::InvalidArgument(format!(
                    "x_grid must lie in [0, {}]",
                    self.x_max
                )));
            }
        }
        for c in &self.checks {
            for g in c.gammas.iter().flatten().chain(&self.gammas) {
                if !(0.0..=1.0).contains(g) {
                    return Err(Error::InvalidArgument(format!("gamma {g} outside [0, 1]")));
                }
            }
        }
        self.operator_config(2).validate()
    }

    fn operator_config(&self, n: u64) -> OperatorConfig {
        OperatorConfig {
            kind: self.operator,
            n,
            trunc_eps: self.trunc_eps,
            quad: self.quadrature,
            j0_convention: self.j0_convention,
        }
    }

    fn checks(&self) -> Vec<CheckSpec> {
        if self.checks.is_empty() {
            CheckKind::ALL.iter().map(|k| CheckSpec::new(*k)).collect()
        } else {
            self.checks.clone()
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub system: String,
    #[serde(rename = "fn")]
    pub function: String,
    pub n: u64,
    pub x: f64,
    pub op_value: Option<f64>,
    pub f_value: Option<f64>,
    pub abs_err: Option<f64>,
    pub bound_value: Option<f64>,
    pub ratio: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub experiment: String,
    pub function: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}/{}: {}", self.experiment, self.function, self.detail)
    }
}

/// Least-squares fit `log err = intercept + slope log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFit {
    pub experiment: String,
    pub function: String,
    pub x: Option<f64>,
    pub fit: RateFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub assertions: Vec<Assertion>,
    pub fits: Vec<LabeledFit>,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    fn extend(&mut self, other: ExperimentResult) {
        self.rows.extend(other.rows);
        self.assertions.extend(other.assertions);
        self.fits.extend(other.fits);
    }

    pub fn rows_for(&self, experiment: &str, function: &str) -> impl Iterator<Item = &Row> {
        let (e, f) = (experiment.to_string(), function.to_string());
        self.rows.iter().filter(move |r| r.experiment == e && r.function == f)
    }
}

/// Fits the top half of the grid; `None` unless at least two positive errors remain.
pub fn fit_rate(ns: &[u64], errs: &[f64]) -> Option<RateFit> {
    let start = ns.len() / 2;
    let pts: Vec<(f64, f64)> = ns[start..]
        .iter()
        .zip(&errs[start..])
        .map(|(n, e)| ((*n as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 || pts.iter().any(|p| !p.1.is_finite()) {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some(RateFit {
        slope,
        intercept,
        residual: (rss / k).sqrt(),
        points: pts.len(),
    })
}

/// `true` when each value is at most `1.1x` the previous one (or below the floor).
fn nonincreasing_with_slack(vals: &[f64]) -> Option<usize> {
    vals.windows(2)
        .position(|w| w[1] > MONOTONE_SLACK * w[0] && w[1] > MONOTONE_FLOOR)
        .map(|i| i + 1)
}

fn fmt_seq(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

type CellKey = (u64, u64, String);

/// A loaded experiment: system, functions, and a cache of operator values.
pub struct Lab {
    spec: ExperimentSpec,
    system: BoasBuckSystem,
    functions: BTreeMap<String, TestFunction>,
    values: BTreeMap<CellKey, OperatorValue>,
}

impl fmt::Debug for Lab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lab")
            .field("spec", &self.spec)
            .field("system", &self.system.name())
            .field("cached", &self.values.len())
            .finish()
    }
}

impl Lab {
    /// `base_dir` resolves a relative system path.
    pub fn new(spec: ExperimentSpec, base_dir: Option<&Path>) -> Result<Self> {
        spec.validate()?;
        let system = if spec.system.starts_with("builtin:") {
            BoasBuckSystem::load(&spec.system)?
        } else {
            let mut p = PathBuf::from(&spec.system);
            if p.is_relative() {
                if let Some(b) = base_dir {
                    p = b.join(p);
                }
            }
            BoasBuckSystem::load(p)?
        };
        let report = system.validate();
        if !report.is_admissible() {
            let why: Vec<String> = report.failures().map(|c| c.name.clone()).collect();
            return Err(Error::Inadmissible(why.join(", ")));
        }
        Ok(Self {
            spec,
            system,
            functions: BTreeMap::new(),
            values: BTreeMap::new(),
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let spec = ExperimentSpec::load(path)?;
        Self::new(spec, path.parent())
    }

    pub fn system(&self) -> &BoasBuckSystem {
        &self.system
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    fn function(&mut self, id: &str) -> Result<TestFunction> {
        if let Some(f) = self.functions.get(id) {
            return Ok(f.clone());
        }
        let f = TestFunction::lookup(id)?;
        self.functions.insert(id.to_string(), f.clone());
        Ok(f)
    }

    fn grids(&self, c: &CheckSpec) -> (Vec<u64>, Vec<f64>, Vec<String>) {
        let ns = c.n_grid.clone().unwrap_or_else(|| self.spec.n_grid.clone());
        let xs = c
            .x_grid
            .clone()
            .or_else(|| c.kind.default_x_grid().map(|g| g.to_vec()))
            .unwrap_or_else(|| self.spec.x_grid.clone());
        let fs = c
            .functions
            .clone()
            .unwrap_or_else(|| c.kind.default_functions().iter().map(|s| s.to_string()).collect());
        (ns, xs, fs)
    }

    /// Evaluates every missing `(n, x, fn)` cell, batching functions per `(n, x)`.
    fn ensure(&mut self, ns: &[u64], xs: &[f64], fs: &[String]) -> Result<()> {
        let mut tfs = Vec::with_capacity(fs.len());
        for id in fs {
            tfs.push(self.function(id)?);
        }
        let mut groups: Vec<(u64, f64, Vec<usize>)> = Vec::new();
        for &n in ns {
            for &x in xs {
                let missing: Vec<usize> = (0..fs.len())
                    .filter(|&k| !self.values.contains_key(&(n, x.to_bits(), fs[k].clone())))
                    .collect();
                if !missing.is_empty() {
                    groups.push((n, x, missing));
                }
            }
        }
        let sys = &self.system;
        let spec = &self.spec;
        let computed: Vec<Result<Vec<(CellKey, OperatorValue)>>> = groups
            .par_iter()
            .map(|(n, x, idx)| {
                let refs: Vec<RealFn> = idx.iter().map(|&k| tfs[k].as_fn() as RealFn).collect();
                let breaks: BTreeSet<u64> = idx
                    .iter()
                    .flat_map(|&k| tfs[k].kinks().iter().map(|b| b.to_bits()))
                    .collect();
                let breaks: Vec<f64> = breaks.into_iter().map(f64::from_bits).collect();
                let vals = apply_batch_with_breaks(sys, &spec.operator_config(*n), &refs, &breaks, *x)?;
                Ok(idx
                    .iter()
                    .zip(vals)
                    .map(|(&k, v)| ((*n, x.to_bits(), fs[k].clone()), v))
                    .collect())
            })
            .collect();
        for c in computed {
            self.values.extend(c?);
        }
        Ok(())
    }

    fn value(&self, n: u64, x: f64, f: &str) -> OperatorValue {
        self.values[&(n, x.to_bits(), f.to_string())]
    }

    fn row(&self, experiment: &str, f: &str, n: u64, x: f64) -> Row {
        Row {
            experiment: experiment.to_string(),
            system: self.system.name().to_string(),
            function: f.to_string(),
            n,
            x,
            op_value: None,
            f_value: None,
            abs_err: None,
            bound_value: None,
            ratio: None,
            note: String::new(),
        }
    }

    /// Runs every configured check in order.
    pub fn run(&mut self) -> Result<ExperimentResult> {
        let mut out = ExperimentResult::default();
        for c in self.spec.checks() {
            out.extend(self.run_check(&c)?);
        }
        Ok(out)
    }

    pub fn run_check(&mut self, c: &CheckSpec) -> Result<ExperimentResult> {
        match c.kind {
            CheckKind::Uniform => self.uniform(c),
            CheckKind::Modulus => self.modulus(c),
            CheckKind::Lipschitz => self.lipschitz(c),
            CheckKind::Dt => self.dt(c),
            CheckKind::Weighted => self.weighted(c),
            CheckKind::Bv => self.bv(c),
        }
    }

    fn mu2(&self, n: u64, x: f64) -> Result<f64> {
        operator_mu2(&self.system, self.spec.operator, n, x)
            .map(|m| m.max(0.0))
            .map_err(|e| e.at(n, x))
    }

    fn error_rows(&self, label: &str, ns: &[u64], xs: &[f64], f: &TestFunction) -> Vec<Row> {
        let mut rows = Vec::new();
        for &n in ns {
            for &x in xs {
                let v = self.value(n, x, f.id());
                let fx = f.eval(x);
                let mut r = self.row(label, f.id(), n, x);
                r.op_value = Some(v.value);
                r.f_value = Some(fx);
                r.abs_err = Some((v.value - fx).abs());
                rows.push(r);
            }
        }
        rows
    }

    fn uniform(&mut self, c: &CheckSpec) -> Result<ExperimentResult> {
        let (ns, xs, fs) = self.grids(c);
        self.ensure(&ns, &xs, &fs)?;
        let tol = c.tol.unwrap_or(self.spec.uniform_tol);
        let label = "uniform";
        let mut out = ExperimentResult::default();
        for id in &fs {
            let f = self.function(id)?;
            let rows = self.error_rows(label, &ns, &xs, &f);
            let sups: Vec<f64> = ns
                .iter()
                .map(|n| {
                    rows.iter()
                        .filter(|r| r.n == *n)
                        .map(|r| r.abs_err.unwrap_or(0.0))
                        .fold(0.0, f64::max)
                })
                .collect();
            let bad = nonincreasing_with_slack(&sups);
            out.assertions.push(Assertion {
                experiment: label.into(),
                function: id.clone(),
                passed: bad.is_none(),
                detail: match bad {
                    None => format!("sup error non-increasing over n (1.1x slack): {}", fmt_seq(&sups)),
                    Some(i) => format!("sup error grows at n = {}: {}", ns[i], fmt_seq(&sups)),
                },
            });
            let last = *sups.last().expect("nonempty grid");
            out.assertions.push(Assertion {
                experiment: label.into(),
                function: id.clone(),
                passed: last <= tol,
                detail: format!("sup error {last:.3e} at n = {} vs tolerance {tol:e}", ns[ns.len() - 1]),
            });
            if let Some(fit) = fit_rate(&ns, &sups).filter(|_| sups.iter().all(|e| *e > MONOTONE_FLOOR)) {
                out.fits.push(LabeledFit {
                    experiment: label.into(),
                    function: id.clone(),
                    x: None,
                    fit,
                });
            }
            out.rows.extend(rows);
        }
        Ok(out)
    }

    fn modulus(&mut self, c: &CheckSpec) -> Result<ExperimentResult> {
        let (ns, xs, fs) = self.grids(c);
        self.ensure(&ns, &xs, &fs)?;
        let label = "modulus";
        let domain = Domain::new(0.0, self.spec.x_max)?;
        let mut out = ExperimentResult::default();
        for id in &fs {
            let f = self.function(id)?;
            let mut rows = self.error_rows(label, &ns, &xs, &f);
            let mu2s: Vec<f64> = rows.iter().map(|r| self.mu2(r.n, r.x)).collect::<Result<_>>()?;
            let fr = f.as_fn();
            let moduli: Vec<_> = mu2s
                .par_iter()
                .map(|m| modulus_classical(&|s| fr(s), m.sqrt(), domain))
                .collect();
            let mut violations = 0;
            let mut worst = 0.0_f64;
            for ((r, m), w) in rows.iter_mut().zip(&mu2s).zip(&moduli) {
                let v = self.value(r.n, r.x, id);
                let bound = 2.0 * w.value;
                let slack = 2.0 * w.resolution + v.error_budget() + 1e-12;
                let err = r.abs_err.unwrap_or(0.0);
                r.bound_value = Some(bound);
                r.ratio = (bound > 0.0).then(|| err / bound);
                r.note = format!("mu2={m:.6e};resolution={:.3e}", w.resolution);
                if err > bound + slack {
                    violations += 1;
                    worst = worst.max(err - bound - slack);
                }
            }
            out.assertions.push(Assertion {
                experiment: label.into(),
                function: id.clone(),
                passed: violations == 0,
                detail: format!(
                    "|Lf - f| <= 2 w(f, sqrt(mu2)) + slack on {} cells: {violations} violations (worst excess {worst:.3e})",
                    rows.len()
                ),
            });
            for &x in &xs {
                let errs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.x == x)
                    .map(|r| r.abs_err.unwrap_or(0.0))
                    .collect();
                if let Some(fit) = fit_rate(&ns, &errs).filter(|_| errs.iter().all(|e| *e > MONOTONE_FLOOR)) {
                    out.fits.push(LabeledFit {
                        experiment: label.into(),
                        function: id.clone(),
                        x: Some(x),
                        fit,
                    });
                }
            }
            out.rows.extend(rows);
        }
        Ok(out)
    }

    fn lipschitz(&mut self, c: &CheckSpec) -> Result<ExperimentResult> {
        let (ns, xs, fs) = self.grids(c);
        let xs: Vec<f64> = xs.into_iter().filter(|x| *x > 0.0).collect();
        self.ensure(&ns, &xs, &fs)?;
        let r_exp = c.r.unwrap_or(self.spec.lipschitz_r);
        let label = "lipschitz";
        let domain = Domain::new(0.0, self.spec.x_max)?;
        let mut out = ExperimentResult::default();
        for id in &fs {
            let f = self.function(id)?;
            let fr = f.as_fn();
            let k_fit = lipschitz_fit(&|s| fr(s), r_exp, domain)?;
            let mut rows = self.error_rows(label, &ns, &xs, &f);
            let mut violations = 0;
            let mut max_ratio = 0.0_f64;
            for r in rows.iter_mut() {
                let mu2 = self.mu2(r.n, r.x)?;
                let v = self.value(r.n, r.x, id);
                let rhs = k_fit.value / r.x.powf(r_exp / 2.0) * mu2.powf(r_exp / 2.0);
                let err = r.abs_err.unwrap_or(0.0);
                r.bound_value = Some(rhs);
                r.ratio = (rhs > 0.0).then(|| err / rhs);
                r.note = format!("K={:.6e};r={r_exp};mu2={mu2:.6e}", k_fit.value);
                if let Some(q) = r.ratio {
                    max_ratio = max_ratio.max(q);
                }
                if err > 1.05 * rhs + v.error_budget() + 1e-12 {
                    violations += 1;
                }
            }
            out.assertions.push(Assertion {
                experiment: label.into(),
                function: id.clone(),
                passed: violations == 0,
                detail: format!(
                    "|Lf - f| <= 1.05 K mu2^(r/2) / x^(r/2) with K = {:.4e}: {violations} violations, max ratio {max_ratio:.4}",
                    k_fit.value
                ),
            });
            out.rows.extend(rows);
        }
        Ok(out)
    }

    fn dt(&mut self, c: &CheckSpec) -> Result<ExperimentResult> {
        let (ns, xs, fs) = self.grids(c);
        self.ensure(&ns, &xs, &fs)?;
        let gammas = c.gammas.clone().unwrap_or_else(|| self.spec.gammas.clone());
        let domain = Domain::new(0.0, self.spec.x_max)?;
        let early_len = ns.len().div_ceil(3);
        let mut out = ExperimentResult::default();
        for &gamma in &gammas {
            let label = format!("dt[gamma={gamma}]");
            for id in &fs {
                let f = self.function(id)?;
                let fr = f.as_fn();
                let mut rows = self.error_rows(&label, &ns, &xs, &f);
                let moduli: Vec<_> = rows
                    .par_iter()
                    .map(|r| {
                        let delta = phi(r.x).powf(1.0 - gamma) / (r.n as f64).sqrt();
                        modulus_ditzian_totik(&|s| fr(s), delta, gamma, domain)
                    })
                    .collect::<Result<_>>()?;
                let mut early = 0.0_f64;
                let mut late = 0.0_f64;
                for (r, w) in rows.iter_mut().zip(&moduli) {
                    r.bound_value = Some(w.value);
                    if w.value < DEGENERATE_MODULUS {
                        r.note = "degenerate".into();
                        continue;
                    }
                    let q = r.abs_err.unwrap_or(0.0) / w.value;
                    r.ratio = Some(q);
                    r.note = format!("resolution={:.3e}", w.resolution);
                    let pos = ns.iter().position(|n| *n == r.n).expect("grid n");
                    if pos < early_len {
                        early = early.max(q);
                    } else {
                        late = late.max(q);
                    }
                }
                out.assertions.push(Assertion {
                    experiment: label.clone(),
                    function: id.clone(),
                    passed: late <= 2.0 * early,
                    detail: format!(
                        "max ratio for n >= {} is {late:.4e}, at most 2x the early max {early:.4e}",
                        ns.get(early_len).copied().unwrap_or(ns[ns.len() - 1])
                    ),
                });
                out.rows.extend(rows);
            }
        }
        Ok(out)
    }

    fn weighted(&mut self, c: &CheckSpec) -> Result<ExperimentResult> {
        let (ns, xs, _) = self.grids(c);
        let ids = ["one", "s", "s2"];
        let fs: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        self.ensure(&ns, &xs, &fs)?;
        let alpha = c.alpha.unwrap_or(self.spec.alpha);
        let tols = self.spec.weighted_tols;
        let label = "weighted";
        let mut out = ExperimentResult::default();
        for (r_pow, id) in ids.iter().enumerate() {
            let f = self.function(id)?;
            let mut rows = self.error_rows(label, &ns, &xs, &f);
            let mut norms = vec![0.0_f64; ns.len()];
            let mut corollary = vec![0.0_f64; ns.len()];
            for r in rows.iter_mut() {
                let w = 1.0 + r.x * r.x;
                let err = r.abs_err.unwrap_or(0.0);
                let q = err / w;
                let qc = err / w.powf(1.0 + alpha);
                r.ratio = Some(q);
                r.note = format!("r={r_pow};corollary_alpha={alpha}={qc:.12e}");
                let k = ns.iter().position(|n| *n == r.n).expect("grid n");
                norms[k] = norms[k].max(q);
                corollary[k] = corollary[k].max(qc);
            }
            for (name, seq) in [("norm", &norms), ("corollary norm", &corollary)] {
                let last = seq[seq.len() - 1];
                out.assertions.push(Assertion {
                    experiment: label.into(),
                    function: id.to_string(),
                    passed: last <= tols[r_pow],
                    detail: format!(
                        "weighted {name} {last:.3e} at n = {} vs {:e}",
                        ns[ns.len() - 1],
                        tols[r_pow]
                    ),
                });
                let bad = nonincreasing_with_slack(seq);
                out.assertions.push(Assertion {
                    experiment: label.into(),
                    function: id.to_string(),
                    passed: bad.is_none(),
                    detail: format!("weighted {name} non-increasing (1.1x slack): {}", fmt_seq(seq)),
                });
            }
            out.rows.extend(rows);
        }
        Ok(out)
    }

    fn bv(&mut self, c: &CheckSpec) -> Result<ExperimentResult> {
        let (ns, xs, fs) = self.grids(c);
        let xs: Vec<f64> = xs.into_iter().filter(|x| *x > 0.0).collect();
        self.ensure(&ns, &xs, &fs)?;
        let label = "bv";
        let mut out = ExperimentResult::default();
        for id in &fs {
            let f = self.function(id)?;
            let pf = f.piecewise().cloned().ok_or_else(|| {
                Error::InvalidArgument(format!("`{id}` has no piecewise descriptor for the variation check"))
            })?;
            let mut rows = self.error_rows(label, &ns, &xs, &f);
            for r in rows.iter_mut() {
                let (n, x) = (r.n, r.x);
                let mu1 = operator_mu1(&self.system, self.spec.operator, n, x).map_err(|e| e.at(n, x))?;
                let mu2 = self.mu2(n, x)?;
                let h = x / (n as f64).sqrt();
                let var_left = total_variation(&pf, (x - h).max(0.0), x, Some(x))?;
                let var_right = total_variation(&pf, x, x + h, Some(x))?;
                let m = (n as f64).sqrt().floor() as u64;
                let mut sum_left = 0.0;
                let mut sum_right = 0.0;
                for j in 1..=m {
                    let step = x / j as f64;
                    sum_left += total_variation(&pf, (x - step).max(0.0), x, Some(x))?;
                    sum_right += total_variation(&pf, x, x + step, Some(x))?;
                }
                r.note = format!(
                    "mu1={mu1:.12e};mu2={mu2:.12e};var_left={var_left:.12e};var_right={var_right:.12e};sum_left={sum_left:.12e};sum_right={sum_right:.12e}"
                );
            }
            for &x in &xs {
                let errs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.x == x)
                    .map(|r| r.abs_err.unwrap_or(0.0))
                    .collect();
                let tail: Vec<(u64, f64)> = ns
                    .iter()
                    .copied()
                    .zip(errs.iter().copied())
                    .filter(|(n, _)| *n >= 40)
                    .collect();
                let strictly = tail.windows(2).all(|w| w[1].1 < w[0].1);
                out.assertions.push(Assertion {
                    experiment: label.into(),
                    function: id.clone(),
                    passed: strictly,
                    detail: format!("x = {x}: error strictly decreasing for n >= 40: {}", fmt_seq(&errs)),
                });
                let (first, last) = (errs[0], errs[errs.len() - 1]);
                out.assertions.push(Assertion {
                    experiment: label.into(),
                    function: id.clone(),
                    passed: last <= first / 4.0,
                    detail: format!(
                        "x = {x}: error {last:.3e} at n = {} vs {first:.3e} / 4 at n = {}",
                        ns[ns.len() - 1],
                        ns[0]
                    ),
                });
                if let Some(fit) = fit_rate(&ns, &errs).filter(|_| errs.iter().all(|e| *e > MONOTONE_FLOOR)) {
                    out.fits.push(LabeledFit {
                        experiment: label.into(),
                        function: id.clone(),
                        x: Some(x),
                        fit,
                    });
                }
            }
            out.rows.extend(rows);
        }
        Ok(out)
    }
}

fn run_kind(spec: &ExperimentSpec, kind: CheckKind) -> Result<ExperimentResult> {
    let checks: Vec<CheckSpec> = spec.checks().into_iter().filter(|c| c.kind == kind).collect();
    let checks = if checks.is_empty() {
        vec![CheckSpec::new(kind)]
    } else {
        checks
    };
    let mut lab = Lab::new(spec.clone().with_checks(checks), None)?;
    lab.run()
}

pub fn run_uniform_convergence(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, CheckKind::Uniform)
}

pub fn run_modulus_bound(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, CheckKind::Modulus)
}

pub fn run_lipschitz_bound(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, CheckKind::Lipschitz)
}

pub fn run_dt_bound(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, CheckKind::Dt)
}

pub fn run_weighted_convergence(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, CheckKind::Weighted)
}

pub fn run_bv_decay(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, CheckKind::Bv)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// Writes the rows of `result` as CSV.
pub fn write_csv<W: std::io::Write>(result: &ExperimentResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.experiment.clone(),
            r.system.clone(),
            r.function.clone(),
            r.n.to_string(),
            format!("{:.12e}", r.x),
            cell(r.op_value),
            cell(r.f_value),
            cell(r.abs_err),
            cell(r.bound_value),
            cell(r.ratio),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(result, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads rows written by [`emit_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<Row>> {
    let path = path.as_ref();
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rd = csv::Reader::from_path(path).map_err(wrap)?;
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        rows.push(rec.map_err(wrap)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::new("builtin:exp1");
        s.n_grid = vec![10, 20, 40];
        s.x_grid = vec![0.5, 1.0];
        s
    }

    #[test]
    fn uniform_examples() {
        let mut spec = small_spec();
        spec.checks = vec![CheckSpec {
            functions: Some(vec!["one".into(), "s".into(), "s2".into()]),
            ..CheckSpec::new(CheckKind::Uniform)
        }];
        let res = run_uniform_convergence(&spec).unwrap();
        assert!(res.passed(), "{:?}", res.failures().collect::<Vec<_>>());
        for r in res.rows_for("uniform", "one") {
            assert!(r.abs_err.unwrap() <= 1e-8);
        }
        for r in res.rows_for("uniform", "s") {
            assert!(r.abs_err.unwrap() <= 1e-7);
        }
        for r in res.rows_for("uniform", "s2") {
            let mu2 = (r.x * r.x + 3.0 * r.x) / (r.n as f64 - 1.0);
            assert!((r.abs_err.unwrap() - mu2).abs() < 1e-6);
        }
    }

    #[test]
    fn rate_fit_recovers_power() {
        let ns = [10u64, 20, 40, 80, 160];
        let errs: Vec<f64> = ns.iter().map(|n| 3.0 / (*n as f64).sqrt()).collect();
        let fit = fit_rate(&ns, &errs).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.points, 3);
        assert!(fit_rate(&ns, &[1.0, 1.0, 1.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn monotone_slack() {
        assert_eq!(nonincreasing_with_slack(&[1.0, 1.05, 0.5]), None);
        assert_eq!(nonincreasing_with_slack(&[1.0, 1.2]), Some(1));
        assert_eq!(nonincreasing_with_slack(&[1e-15, 1e-12]), None);
    }

    #[test]
    fn csv_header_only_for_empty_result() {
        let mut buf = Vec::new();
        write_csv(&ExperimentResult::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn csv_round_trip() {
        let mut spec = small_spec();
        spec.x_grid = vec![0.5, 1.0];
        spec.n_grid = vec![10, 20, 40];
        spec.checks = vec![CheckSpec {
            functions: Some(vec!["exp_neg".into()]),
            ..CheckSpec::new(CheckKind::Modulus)
        }];
        let res = run_modulus_bound(&spec).unwrap();
        assert_eq!(res.rows.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_csv(&res, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), res.rows.len());
        for (a, b) in back.iter().zip(&res.rows) {
            assert_eq!(a.n, b.n);
            let (x, y) = (a.op_value.unwrap(), b.op_value.unwrap());
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            assert_eq!(a.ratio.is_some(), b.ratio.is_some());
        }
    }

    #[test]
    fn spec_defaults_and_validation() {
        let spec = ExperimentSpec::from_json_str(r#"{"system":"builtin:exp1"}"#).unwrap();
        assert_eq!(spec.n_grid, default_n_grid());
        assert_eq!(spec.checks().len(), 6);
        let bad = ExperimentSpec::from_json_str(r#"{"system":"builtin:exp1","n_grid":[20,10]}"#).unwrap();
        assert!(bad.validate().is_err());
        let far = ExperimentSpec::from_json_str(r#"{"system":"builtin:exp1","x_grid":[60]}"#).unwrap();
        assert!(far.validate().is_err());
        assert!(ExperimentSpec::from_json_str(r#"{"system":"x","bogus":1}"#).is_err());
        let checks = r#"{"system":"builtin:exp1","checks":[{"kind":"dt","gammas":[0.5]}]}"#;
        assert_eq!(
            ExperimentSpec::from_json_str(checks).unwrap().checks[0].gammas,
            Some(vec![0.5])
        );
    }

    #[test]
    fn constant_passes_modulus_and_lipschitz() {
        let mut spec = small_spec();
        spec.system = "builtin:exp2".into();
        let one = Some(vec!["one".to_string()]);
        spec.checks = vec![
            CheckSpec {
                functions: one.clone(),
                ..CheckSpec::new(CheckKind::Modulus)
            },
            CheckSpec {
                functions: one,
                ..CheckSpec::new(CheckKind::Lipschitz)
            },
        ];
        let res = Lab::new(spec, None).unwrap().run().unwrap();
        assert!(res.passed(), "{:?}", res.failures().collect::<Vec<_>>());
        assert!(res.rows.iter().all(|r| r.bound_value == Some(0.0)));
    }

    #[test]
    fn bv_needs_descriptor() {
        let mut spec = small_spec();
        spec.checks = vec![CheckSpec {
            functions: Some(vec!["exp_neg".into()]),
            ..CheckSpec::new(CheckKind::Bv)
        }];
        assert!(run_bv_decay(&spec).is_err());
    }

    #[test]
    fn bv_affine_has_no_variation() {
        let mut spec = small_spec();
        spec.checks = vec![CheckSpec {
            functions: Some(vec!["s".into()]),
            ..CheckSpec::new(CheckKind::Bv)
        }];
        let res = run_bv_decay(&spec).unwrap();
        for r in &res.rows {
            assert!(r.note.contains("var_left=0.000000000000e0"), "{}", r.note);
            assert!(r.note.contains("sum_right=0.000000000000e0"));
        }
    }
}
