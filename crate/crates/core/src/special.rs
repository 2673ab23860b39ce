//! Log-beta, Beta-prime and Gamma kernel expectations.
//!
//! The Durrmeyer kernel of index `j` is the Beta-prime density
//! `s^{j-1} (1+s)^{-(n+j+1)} / B(j, n+1)`. Under `t = s / (1 + s)` it becomes
//! the Beta(j, n+1) density on `[0, 1)`, so a Gauss-Jacobi rule in `t` is the
//! natural quadrature. The rule is built for the weight `t^{j-1} (1-t)^{n-c}`
//! with `c = QuadratureSpec::growth_power`, which makes `f(s) = s^m` exact for
//! `m <= c`. The Szász-Durrmeyer kernel is a Gamma(j+1, n) density and uses
//! generalized Gauss-Laguerre nodes.
//!
//! Each expectation compares the `N`-node rule with the `N/2`-node rule and
//! falls back to adaptive Gauss-Kronrod when they disagree by more than
//! `rel_tol`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use statrs::function::{beta, gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureScheme {
    GaussJacobiMapped,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    pub nodes: usize,
    pub rel_tol: f64,
    /// Upper cutoff in `s` for the adaptive scheme.
    pub domain_cap: f64,
    /// Power `c` moved from the Jacobi weight into the integrand.
    pub growth_power: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: QuadratureScheme::GaussJacobiMapped,
            nodes: 48,
            rel_tol: 1e-9,
            domain_cap: 1e6,
            growth_power: 3.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least 8 nodes, got {}",
                self.nodes
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be in (0, 1e-3], got {}",
                self.rel_tol
            )));
        }
        if !(self.domain_cap > 1.0) || !(self.growth_power >= 0.0) {
            return Err(Error::InvalidArgument(
                "domain_cap must exceed 1 and growth_power must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `ln B(j, m) = ln Γ(j) + ln Γ(m) - ln Γ(j + m)`.
pub fn log_beta(j: u64, m: u64) -> Result<f64> {
    if j == 0 || m == 0 {
        return Err(Error::Pole(format!("B({j}, {m}) has a Γ(0) factor")));
    }
    Ok(ln_beta_real(j as f64, m as f64))
}

pub(crate) fn ln_beta_real(a: f64, b: f64) -> f64 {
    gamma::ln_gamma(a) + gamma::ln_gamma(b) - gamma::ln_gamma(a + b)
}

/// `E[s^m]` under Beta-prime(j, n+1): `Γ(j+m) Γ(n+1-m) / (Γ(j) Γ(n+1))`.
pub fn beta_prime_moment_closed(j: u64, n: u64, m: u32) -> Result<f64> {
    if j == 0 {
        return Err(Error::Pole("Beta-prime kernel with j = 0".into()));
    }
    if m as u64 > n {
        return Err(Error::DivergentMoment { order: m, n });
    }
    let (j, n, m) = (j as f64, n as f64, m as f64);
    Ok((gamma::ln_gamma(j + m) + gamma::ln_gamma(n + 1.0 - m) - gamma::ln_gamma(j) - gamma::ln_gamma(n + 1.0)).exp())
}

/// `E[s^m]` under Gamma(j+1, rate n): `(j+1)(j+2)...(j+m) / n^m`.
pub fn gamma_moment_closed(j: u64, n: u64, m: u32) -> f64 {
    (1..=m as u64).map(|i| (j + i) as f64 / n as f64).product()
}

/// Regularized incomplete beta `I_t(a, b)`.
pub fn beta_regularized(a: f64, b: f64, t: f64) -> f64 {
    beta::beta_reg(a, b, t.clamp(0.0, 1.0))
}

/// `(1 / B(j, n+1)) ∫_0^∞ s^{j-1} (1+s)^{-(n+j+1)} f(s) ds`.
pub fn beta_prime_expectation<F>(f: F, j: u64, n: u64, q: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    BetaPrimeKernel::new(j, n, q)?.expectation(&f)
}

/// `n ∫_0^∞ e^{-ns} (ns)^j / j! f(s) ds`.
pub fn gamma_expectation<F>(f: F, j: u64, n: u64, q: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    GammaKernel::new(j, n, q)?.expectation(&f)
}

/// Normalized Gauss rule: nodes and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Golub-Welsch from the Jacobi matrix of a monic three-term recurrence.
    /// `offdiag[k]` couples rows `k` and `k + 1`.
    pub fn from_recurrence(diag: &[f64], offdiag: &[f64]) -> Result<Self> {
        let (nodes, first) = tridiagonal_eigen(diag, offdiag)?;
        let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(first.into_iter().map(|z| z * z)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    /// Rule for the weight `t^a (1-t)^b` on `[0, 1]`, with `a, b > -1`.
    pub fn jacobi_unit(points: usize, a: f64, b: f64) -> Result<Self> {
        // shifted Jacobi: x = 2t - 1 with (1-x)^alpha (1+x)^beta, alpha = b, beta = a
        let (alpha, beta) = (b, a);
        let ab = alpha + beta;
        let mut diag = Vec::with_capacity(points);
        let mut off = Vec::with_capacity(points.saturating_sub(1));
        for k in 0..points {
            let kf = k as f64;
            let d = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            diag.push((d + 1.0) / 2.0);
        }
        for k in 1..points {
            let kf = k as f64;
            let b2 = if k == 1 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let s = 2.0 * kf + ab;
                4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            off.push(b2.sqrt() / 2.0);
        }
        Self::from_recurrence(&diag, &off)
    }

    /// Generalized Gauss-Laguerre rule for `u^alpha e^{-u}` on `[0, ∞)`.
    pub fn laguerre(points: usize, alpha: f64) -> Result<Self> {
        let diag: Vec<f64> = (0..points).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
        let off: Vec<f64> = (1..points).map(|k| (k as f64 * (k as f64 + alpha)).sqrt()).collect();
        Self::from_recurrence(&diag, &off)
    }

    pub fn apply<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * g(*x)).sum()
    }
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
/// Returns the eigenvalues and the first component of each normalized eigenvector.
fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&offdiag[..n.saturating_sub(1)]);
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::QuadratureFailure("eigenvalue iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Rules shared by every integrand at a fixed `(j, n)`.
#[derive(Debug, Clone)]
pub struct BetaPrimeKernel {
    j: u64,
    n: u64,
    spec: QuadratureSpec,
    growth: f64,
    /// `B(j, n-c+1) / B(j, n+1)`.
    rule_factor: f64,
    full: Option<GaussRule>,
    half: Option<GaussRule>,
    ln_norm: f64,
}

impl BetaPrimeKernel {
    pub fn new(j: u64, n: u64, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        if j == 0 {
            return Err(Error::Pole("Beta-prime kernel with j = 0".into()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("Beta-prime kernel needs n >= 1".into()));
        }
        let (jf, nf) = (j as f64, n as f64);
        let growth = spec.growth_power.min(nf);
        let ln_norm = ln_beta_real(jf, nf + 1.0);
        let rule_factor = (ln_beta_real(jf, nf - growth + 1.0) - ln_norm).exp();
        let (full, half) = match spec.scheme {
            QuadratureScheme::GaussJacobiMapped => (
                Some(GaussRule::jacobi_unit(spec.nodes, jf - 1.0, nf - growth)?),
                Some(GaussRule::jacobi_unit((spec.nodes / 2).max(4), jf - 1.0, nf - growth)?),
            ),
            QuadratureScheme::Adaptive => (None, None),
        };
        Ok(Self {
            j,
            n,
            spec: *spec,
            growth,
            rule_factor,
            full,
            half,
            ln_norm,
        })
    }

    fn rule_value<F: Fn(f64) -> f64>(&self, rule: &GaussRule, f: &F) -> (f64, f64) {
        let mut sum = 0.0;
        let mut abs = 0.0;
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let one_minus = 1.0 - t;
            let v = w * f(t / one_minus) * one_minus.powf(self.growth);
            sum += v;
            abs += v.abs();
        }
        (sum * self.rule_factor, abs * self.rule_factor)
    }

    pub fn expectation<F: Fn(f64) -> f64>(&self, f: &F) -> Result<f64> {
        self.expectation_with_breaks(f, &[])
    }

    /// As [`Self::expectation`]; points in `breaks` (in `s`) where `f` is not
    /// smooth are added to the adaptive partition.
    pub fn expectation_with_breaks<F: Fn(f64) -> f64>(&self, f: &F, breaks: &[f64]) -> Result<f64> {
        if let (Some(full), Some(half)) = (&self.full, &self.half) {
            let (a, scale) = self.rule_value(full, f);
            let (b, _) = self.rule_value(half, f);
            if a.is_finite() && (a - b).abs() <= self.spec.rel_tol * scale.max(f64::MIN_POSITIVE) {
                return Ok(a);
            }
        }
        self.adaptive(f, breaks)
    }

    fn adaptive<F: Fn(f64) -> f64>(&self, f: &F, breaks: &[f64]) -> Result<f64> {
        let (jf, nf) = (self.j as f64, self.n as f64);
        let ln_norm = self.ln_norm;
        let density = move |t: f64| -> f64 {
            if t <= 0.0 || t >= 1.0 {
                return 0.0;
            }
            let lt = if self.j == 1 { 0.0 } else { (jf - 1.0) * t.ln() };
            (lt + nf * (-t).ln_1p() - ln_norm).exp()
        };
        let integrand = |t: f64| {
            let d = density(t);
            if d == 0.0 {
                0.0
            } else {
                d * f(t / (1.0 - t))
            }
        };
        let cap = self.spec.domain_cap;
        let upper = cap / (1.0 + cap);
        // Beta(j, n+1) mean and spread in t
        let mean = jf / (jf + nf + 1.0);
        let sd = (mean * (1.0 - mean) / (jf + nf + 2.0)).sqrt();
        let mut cuts = vec![0.0, upper];
        for k in [-20.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 20.0] {
            let c = mean + k * sd;
            if c > 0.0 && c < upper {
                cuts.push(c);
            }
        }
        cuts.extend(breaks.iter().map(|b| b / (1.0 + b)).filter(|t| *t > 0.0 && *t < upper));
        adaptive_integrate(&integrand, &mut cuts, self.spec.rel_tol)
    }
}

#[derive(Debug, Clone)]
pub struct GammaKernel {
    j: u64,
    n: u64,
    spec: QuadratureSpec,
    full: Option<GaussRule>,
    half: Option<GaussRule>,
}

impl GammaKernel {
    pub fn new(j: u64, n: u64, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument("Gamma kernel needs n >= 1".into()));
        }
        let (full, half) = match spec.scheme {
            QuadratureScheme::GaussJacobiMapped => (
                Some(GaussRule::laguerre(spec.nodes, j as f64)?),
                Some(GaussRule::laguerre((spec.nodes / 2).max(4), j as f64)?),
            ),
            QuadratureScheme::Adaptive => (None, None),
        };
        Ok(Self {
            j,
            n,
            spec: *spec,
            full,
            half,
        })
    }

    pub fn expectation<F: Fn(f64) -> f64>(&self, f: &F) -> Result<f64> {
        self.expectation_with_breaks(f, &[])
    }

    pub fn expectation_with_breaks<F: Fn(f64) -> f64>(&self, f: &F, breaks: &[f64]) -> Result<f64> {
        let nf = self.n as f64;
        if let (Some(full), Some(half)) = (&self.full, &self.half) {
            let a = full.apply(|u| f(u / nf));
            let scale = full.apply(|u| f(u / nf).abs());
            let b = half.apply(|u| f(u / nf));
            if a.is_finite() && (a - b).abs() <= self.spec.rel_tol * scale.max(f64::MIN_POSITIVE) {
                return Ok(a);
            }
        }
        let jf = self.j as f64;
        let ln_norm = gamma::ln_gamma(jf + 1.0);
        let integrand = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let lu = if self.j == 0 { 0.0 } else { jf * u.ln() };
            let d = (lu - u - ln_norm).exp();
            if d == 0.0 {
                0.0
            } else {
                d * f(u / nf)
            }
        };
        let upper = self.spec.domain_cap * nf;
        let mean = jf + 1.0;
        let sd = mean.sqrt();
        let mut cuts = vec![0.0, upper];
        for k in [-20.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 20.0, 40.0] {
            let c = mean + k * sd;
            if c > 0.0 && c < upper {
                cuts.push(c);
            }
        }
        cuts.extend(breaks.iter().map(|b| b * nf).filter(|u| *u > 0.0 && *u < upper));
        adaptive_integrate(&integrand, &mut cuts, self.spec.rel_tol)
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    abs: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    let mut abs = K15_WEIGHTS[7] * fc.abs();
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += K15_WEIGHTS[i] * (f1 + f2);
        abs += K15_WEIGHTS[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * (f1 + f2);
        }
    }
    Segment {
        a,
        b,
        value: k * h,
        abs: abs * h,
        err: ((k - g) * h).abs(),
    }
}

const MAX_SEGMENTS: usize = 4000;

/// Globally adaptive Gauss-Kronrod 7/15 over the partition given by `cuts`.
pub(crate) fn adaptive_integrate<F: Fn(f64) -> f64>(f: &F, cuts: &mut Vec<f64>, rel_tol: f64) -> Result<f64> {
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut heap: BinaryHeap<Segment> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod(f, w[0], w[1]))
        .collect();
    loop {
        let (value, abs, err) = heap.iter().fold((0.0, 0.0, 0.0), |acc, s| {
            (acc.0 + s.value, acc.1 + s.abs, acc.2 + s.err)
        });
        if !value.is_finite() {
            return Err(Error::QuadratureFailure("non-finite integrand".into()));
        }
        let target = rel_tol * value.abs().max(abs * 1e-3).max(1e-300);
        if err <= target {
            // sum in position order so the result does not depend on heap layout
            let mut segs: Vec<Segment> = heap.into_vec();
            segs.sort_by(|x, y| x.a.total_cmp(&y.a));
            return Ok(segs.iter().map(|s| s.value).sum());
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::QuadratureFailure(format!(
                "adaptive refinement stalled at error {err:e} (target {target:e})"
            )));
        }
        let worst = heap.pop().expect("nonempty partition");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::QuadratureFailure("interval collapsed".into()));
        }
        heap.push(kronrod(f, worst.a, mid));
        heap.push(kronrod(f, mid, worst.b));
    }
}
