//! The discrete, Baskakov-Durrmeyer and Szász-Durrmeyer operators.

use serde::{Deserialize, Serialize};

use crate::bbsystem::{BoasBuckSystem, Weights, DEFAULT_TRUNC_EPS};
use crate::error::{Error, Result};
use crate::special::{beta_regularized, BetaPrimeKernel, GammaKernel, QuadratureSpec};

/// Weights below this are skipped; their mass is added to the truncation bound.
const NEGLIGIBLE_WEIGHT: f64 = 1e-22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Discrete,
    Durrmeyer,
    SzaszDurrmeyer,
}

impl OperatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Discrete => "discrete",
            OperatorKind::Durrmeyer => "durrmeyer",
            OperatorKind::SzaszDurrmeyer => "szasz_durrmeyer",
        }
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(OperatorKind::Discrete),
            "durrmeyer" => Ok(OperatorKind::Durrmeyer),
            "szasz" | "szasz_durrmeyer" | "szasz-durrmeyer" => Ok(OperatorKind::SzaszDurrmeyer),
            other => Err(Error::InvalidArgument(format!("unknown operator `{other}`"))),
        }
    }
}

/// How the `j = 0` term of the Durrmeyer sum is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum J0Convention {
    /// The weight of `j = 0` multiplies `f(0)`.
    #[default]
    PointMassAtZero,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub kind: OperatorKind,
    pub n: u64,
    #[serde(default = "default_trunc_eps")]
    pub trunc_eps: f64,
    #[serde(default)]
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub j0_convention: J0Convention,
}

fn default_trunc_eps() -> f64 {
    DEFAULT_TRUNC_EPS
}

impl OperatorConfig {
    pub fn new(kind: OperatorKind, n: u64) -> Self {
        Self {
            kind,
            n,
            trunc_eps: DEFAULT_TRUNC_EPS,
            quad: QuadratureSpec::default(),
            j0_convention: J0Convention::default(),
        }
    }

    pub fn with_trunc_eps(mut self, eps: f64) -> Self {
        self.trunc_eps = eps;
        self
    }

    pub fn with_j0(mut self, conv: J0Convention) -> Self {
        self.j0_convention = conv;
        self
    }

    pub fn with_quad(mut self, quad: QuadratureSpec) -> Self {
        self.quad = quad;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.trunc_eps > 0.0 && self.trunc_eps <= 1e-3) {
            return Err(Error::InvalidArgument(format!(
                "trunc_eps must be in (0, 1e-3], got {}",
                self.trunc_eps
            )));
        }
        self.quad.validate()
    }
}

/// An operator value with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorValue {
    pub value: f64,
    /// Dropped weight mass times a growth estimate of `f` past the cut.
    pub truncation_bound: f64,
    /// Quadrature tolerance accumulated over the terms.
    pub quadrature_tol: f64,
    pub j_cut: usize,
}

impl OperatorValue {
    pub fn error_budget(&self) -> f64 {
        self.truncation_bound + self.quadrature_tol
    }
}

pub type RealFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

fn weights_for(sys: &BoasBuckSystem, cfg: &OperatorConfig, x: f64) -> Result<Weights> {
    cfg.validate()?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("x must be finite and >= 0, got {x}")));
    }
    sys.weight_distribution(cfg.n, x, cfg.trunc_eps)
}

fn truncation_bound(f: RealFn, tail: f64, j_cut: usize, n: u64) -> f64 {
    if tail == 0.0 {
        return 0.0;
    }
    let edge = f((j_cut + 1) as f64 / n as f64).abs();
    tail * edge.max(f(0.0).abs()).max(1.0)
}

/// Evaluates the operator selected by `cfg.kind`.
pub fn apply(sys: &BoasBuckSystem, cfg: &OperatorConfig, f: RealFn, x: f64) -> Result<OperatorValue> {
    Ok(apply_batch(sys, cfg, &[f], x)?.remove(0))
}

pub fn apply_discrete(sys: &BoasBuckSystem, cfg: &OperatorConfig, f: RealFn, x: f64) -> Result<OperatorValue> {
    let cfg = OperatorConfig {
        kind: OperatorKind::Discrete,
        ..*cfg
    };
    apply(sys, &cfg, f, x)
}

pub fn apply_durrmeyer(sys: &BoasBuckSystem, cfg: &OperatorConfig, f: RealFn, x: f64) -> Result<OperatorValue> {
    let cfg = OperatorConfig {
        kind: OperatorKind::Durrmeyer,
        ..*cfg
    };
    apply(sys, &cfg, f, x)
}

pub fn apply_szasz_durrmeyer(sys: &BoasBuckSystem, cfg: &OperatorConfig, f: RealFn, x: f64) -> Result<OperatorValue> {
    let cfg = OperatorConfig {
        kind: OperatorKind::SzaszDurrmeyer,
        ..*cfg
    };
    apply(sys, &cfg, f, x)
}

/// Evaluates several functions at one `(n, x)`, sharing the weights and the
/// per-index quadrature rules.
pub fn apply_batch(sys: &BoasBuckSystem, cfg: &OperatorConfig, fs: &[RealFn], x: f64) -> Result<Vec<OperatorValue>> {
    apply_batch_with_breaks(sys, cfg, fs, &[], x)
}

/// As [`apply_batch`], with points where some `f` has a kink; they are used
/// to split the integration range when a fixed rule is not accurate enough.
pub fn apply_batch_with_breaks(
    sys: &BoasBuckSystem,
    cfg: &OperatorConfig,
    fs: &[RealFn],
    breaks: &[f64],
    x: f64,
) -> Result<Vec<OperatorValue>> {
    let w = weights_for(sys, cfg, x).map_err(|e| e.at(cfg.n, x))?;
    evaluate(cfg, fs, breaks, &w).map_err(|e| e.at(cfg.n, x))
}

fn evaluate(cfg: &OperatorConfig, fs: &[RealFn], breaks: &[f64], w: &Weights) -> Result<Vec<OperatorValue>> {
    let n = cfg.n;
    let weights = w.as_slice();
    let mut sums = vec![0.0; fs.len()];
    let mut abs_sums = vec![0.0; fs.len()];
    let mut skipped = 0.0;
    for (j, &wj) in weights.iter().enumerate() {
        if wj < NEGLIGIBLE_WEIGHT {
            skipped += wj.max(0.0);
            continue;
        }
        match cfg.kind {
            OperatorKind::Discrete => {
                let s = j as f64 / n as f64;
                for (k, f) in fs.iter().enumerate() {
                    let v = f(s);
                    sums[k] += wj * v;
                    abs_sums[k] += wj * v.abs();
                }
            }
            OperatorKind::Durrmeyer if j == 0 => {
                if cfg.j0_convention == J0Convention::PointMassAtZero {
                    for (k, f) in fs.iter().enumerate() {
                        let v = f(0.0);
                        sums[k] += wj * v;
                        abs_sums[k] += wj * v.abs();
                    }
                }
            }
            OperatorKind::Durrmeyer => {
                let kernel = BetaPrimeKernel::new(j as u64, n, &cfg.quad)?;
                for (k, f) in fs.iter().enumerate() {
                    let v = kernel.expectation_with_breaks(f, breaks)?;
                    sums[k] += wj * v;
                    abs_sums[k] += wj * v.abs();
                }
            }
            OperatorKind::SzaszDurrmeyer => {
                let kernel = GammaKernel::new(j as u64, n, &cfg.quad)?;
                for (k, f) in fs.iter().enumerate() {
                    let v = kernel.expectation_with_breaks(f, breaks)?;
                    sums[k] += wj * v;
                    abs_sums[k] += wj * v.abs();
                }
            }
        }
    }
    let tail = w.tail_mass() + skipped;
    let quad_rel = match cfg.kind {
        OperatorKind::Discrete => 0.0,
        _ => cfg.quad.rel_tol,
    };
    Ok(fs
        .iter()
        .enumerate()
        .map(|(k, f)| OperatorValue {
            value: sums[k],
            truncation_bound: truncation_bound(*f, tail, w.j_cut, n),
            quadrature_tol: quad_rel * abs_sums[k],
            j_cut: w.j_cut,
        })
        .collect())
}

/// Cumulative Durrmeyer kernel mass `∫_0^y` at fixed `(n, x)`.
#[derive(Debug, Clone)]
pub struct KernelCdf {
    n: u64,
    x: f64,
    weights: Weights,
    convention: J0Convention,
}

impl KernelCdf {
    pub fn new(sys: &BoasBuckSystem, cfg: &OperatorConfig, x: f64) -> Result<Self> {
        if cfg.kind != OperatorKind::Durrmeyer {
            return Err(Error::InvalidArgument(
                "the kernel CDF is defined for the durrmeyer operator".into(),
            ));
        }
        let weights = weights_for(sys, cfg, x).map_err(|e| e.at(cfg.n, x))?;
        Ok(Self {
            n: cfg.n,
            x,
            weights,
            convention: cfg.j0_convention,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// Mass at `s = 0` carried by the `j = 0` term.
    pub fn atom(&self) -> f64 {
        match self.convention {
            J0Convention::PointMassAtZero => self.weights.as_slice()[0],
            J0Convention::Drop => 0.0,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        if !(y >= 0.0) {
            return 0.0;
        }
        let t = if y.is_infinite() { 1.0 } else { y / (1.0 + y) };
        let b = self.n as f64 + 1.0;
        let mut acc = self.atom();
        for (j, &wj) in self.weights.as_slice().iter().enumerate().skip(1) {
            if wj < NEGLIGIBLE_WEIGHT {
                continue;
            }
            acc += wj * beta_regularized(j as f64, b, t);
        }
        acc
    }
}

pub fn kernel_cdf(sys: &BoasBuckSystem, cfg: &OperatorConfig, x: f64, y: f64) -> Result<f64> {
    Ok(KernelCdf::new(sys, cfg, x)?.eval(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: OperatorKind, n: u64) -> OperatorConfig {
        OperatorConfig::new(kind, n)
    }

    fn one(_: f64) -> f64 {
        1.0
    }
    fn id(s: f64) -> f64 {
        s
    }
    fn sq(s: f64) -> f64 {
        s * s
    }

    #[test]
    fn discrete_examples() {
        let sys = BoasBuckSystem::exp1();
        let c = cfg(OperatorKind::Discrete, 10);
        let v = apply_discrete(&sys, &c, &one, 2.3).unwrap();
        assert!((v.value - 1.0).abs() < 1e-10);
        let v = apply_discrete(&sys, &c, &id, 2.3).unwrap();
        assert!((v.value - 2.3).abs() < 1e-10);
        let v = apply_discrete(&sys, &c, &|s: f64| (s + 1.0).ln(), 0.0).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.j_cut, 0);
    }

    #[test]
    fn durrmeyer_examples() {
        let sys = BoasBuckSystem::exp1();
        let c = cfg(OperatorKind::Durrmeyer, 7);
        assert!((apply_durrmeyer(&sys, &c, &one, 1.7).unwrap().value - 1.0).abs() < 1e-9);
        for n in [2, 5, 30] {
            let c = cfg(OperatorKind::Durrmeyer, n);
            assert!((apply_durrmeyer(&sys, &c, &id, 1.0).unwrap().value - 1.0).abs() < 1e-9);
        }
        let c = cfg(OperatorKind::Durrmeyer, 2);
        let v = apply_durrmeyer(&sys, &c, &sq, 1.0).unwrap().value;
        assert!((v - 5.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn drop_convention_loses_the_zero_mass() {
        let sys = BoasBuckSystem::exp1();
        let c = cfg(OperatorKind::Durrmeyer, 4).with_j0(J0Convention::Drop);
        let v = apply_durrmeyer(&sys, &c, &one, 0.5).unwrap().value;
        let w0 = sys.weight_distribution(4, 0.5, 1e-12).unwrap().as_slice()[0];
        assert!((v - (1.0 - w0)).abs() < 1e-10);
    }

    #[test]
    fn szasz_examples() {
        let sys = BoasBuckSystem::exp2();
        let c = cfg(OperatorKind::SzaszDurrmeyer, 9);
        assert!((apply_szasz_durrmeyer(&sys, &c, &one, 1.2).unwrap().value - 1.0).abs() < 1e-9);
        let d = apply_discrete(&sys, &c, &id, 1.2).unwrap().value;
        let s = apply_szasz_durrmeyer(&sys, &c, &id, 1.2).unwrap().value;
        assert!((s - d - 1.0 / 9.0).abs() < 1e-9);
        let e1 = BoasBuckSystem::exp1();
        let s0 = apply_szasz_durrmeyer(&e1, &c, &id, 0.0).unwrap().value;
        assert!((s0 - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn durrmeyer_discrete_link() {
        for sys in [BoasBuckSystem::exp1(), BoasBuckSystem::exp2()] {
            for n in [5u64, 10, 20, 40] {
                for x in [0.5, 1.0, 2.0, 5.0] {
                    let c = cfg(OperatorKind::Durrmeyer, n);
                    let d = apply_batch(&sys, &cfg(OperatorKind::Discrete, n), &[&id, &sq], x).unwrap();
                    let m = apply_batch(&sys, &c, &[&id, &sq], x).unwrap();
                    let nf = n as f64;
                    let want = (nf * d[1].value + d[0].value) / (nf - 1.0);
                    assert!((m[1].value - want).abs() <= 1e-7 * want.abs());
                    assert!((m[0].value - d[0].value).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn kernel_cdf_examples() {
        let sys = BoasBuckSystem::exp1();
        let c = cfg(OperatorKind::Durrmeyer, 10);
        let k = KernelCdf::new(&sys, &c, 1.5).unwrap();
        let w0 = sys.weight_distribution(10, 1.5, 1e-12).unwrap().as_slice()[0];
        assert!((k.eval(0.0) - w0).abs() < 1e-15);
        assert!((k.eval(1e6) - 1.0).abs() < 1e-8);
        let mut last = 0.0;
        for i in 0..200 {
            let v = k.eval(i as f64 * 0.05);
            assert!(v + 1e-15 >= last);
            last = v;
        }
        let dropped = KernelCdf::new(&sys, &c.with_j0(J0Convention::Drop), 1.5).unwrap();
        assert_eq!(dropped.eval(0.0), 0.0);
        assert!(KernelCdf::new(&sys, &cfg(OperatorKind::Discrete, 10), 1.0).is_err());
    }

    #[test]
    fn config_checks() {
        let sys = BoasBuckSystem::exp1();
        assert!(apply(&sys, &cfg(OperatorKind::Discrete, 1), &one, 1.0).is_err());
        let c = cfg(OperatorKind::Discrete, 5).with_trunc_eps(0.01);
        assert!(apply(&sys, &c, &one, 1.0).is_err());
        assert!(apply(&sys, &cfg(OperatorKind::Discrete, 5), &one, -1.0).is_err());
        assert_eq!("szasz".parse::<OperatorKind>().unwrap(), OperatorKind::SzaszDurrmeyer);
    }

    #[test]
    fn large_argument_durrmeyer() {
        let sys = BoasBuckSystem::exp1();
        let c = cfg(OperatorKind::Durrmeyer, 640);
        let v = apply_batch(&sys, &c, &[&one, &id, &sq], 10.0).unwrap();
        assert!((v[0].value - 1.0).abs() < 1e-9);
        assert!((v[1].value - 10.0).abs() < 1e-8);
        let want = (640.0 * 100.0 + 30.0) / 639.0;
        assert!((v[2].value - want).abs() < 1e-7 * want);
    }
}
