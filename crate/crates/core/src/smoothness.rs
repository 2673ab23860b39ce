//! Grid estimates of moduli of smoothness, weighted norms, Lipschitz
//! constants and the variation of derivatives of piecewise polynomials.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_X_MAX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid domain [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// `count + 1` equally spaced points including both ends.
    pub fn uniform(&self, count: usize) -> Vec<f64> {
        let h = self.width() / count as f64;
        (0..=count)
            .map(|k| if k == count { self.hi } else { self.lo + k as f64 * h })
            .collect()
    }
}

/// A sup over a finite grid and an estimate of how far the true sup may differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEstimate {
    pub value: f64,
    pub resolution: f64,
}

/// Growth bound `|f(x)| <= m (1 + x^sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub sigma: f64,
    pub m: f64,
}

/// Samples of a function on strictly increasing points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    points: Vec<f64>,
    values: Vec<f64>,
    growth: Option<Growth>,
}

impl GridFunction {
    pub fn new(points: Vec<f64>, values: Vec<f64>, growth: Option<Growth>) -> Result<Self> {
        if points.len() != values.len() || points.len() < 2 {
            return Err(Error::InvalidArgument(
                "need matching point and value lists of length >= 2".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "sample points must be strictly increasing".into(),
            ));
        }
        if values.iter().chain(&points).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        Ok(Self { points, values, growth })
    }

    pub fn sample(f: &dyn Fn(f64) -> f64, points: Vec<f64>, growth: Option<Growth>) -> Result<Self> {
        let values = points.iter().map(|x| f(*x)).collect();
        Self::new(points, values, growth)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn growth(&self) -> Option<Growth> {
        self.growth
    }

    pub fn domain(&self) -> Domain {
        Domain {
            lo: self.points[0],
            hi: *self.points.last().expect("nonempty"),
        }
    }

    /// Piecewise-linear interpolation, constant outside the sample range.
    pub fn eval(&self, x: f64) -> f64 {
        let p = &self.points;
        if x <= p[0] {
            return self.values[0];
        }
        if x >= p[p.len() - 1] {
            return self.values[p.len() - 1];
        }
        let k = p.partition_point(|v| *v <= x) - 1;
        let t = (x - p[k]) / (p[k + 1] - p[k]);
        self.values[k] + t * (self.values[k + 1] - self.values[k])
    }
}

/// `sup |f(x) - f(y)|` over grid pairs with `|x - y| <= delta`.
pub fn modulus_classical(f: &dyn Fn(f64) -> f64, delta: f64, domain: Domain) -> GridEstimate {
    const SUB: usize = 16;
    const MAX_POINTS: usize = 1 << 20;
    if !(delta > 0.0) {
        return GridEstimate {
            value: 0.0,
            resolution: 0.0,
        };
    }
    let mut steps = (domain.width() / (delta / SUB as f64)).ceil() as usize;
    steps = steps.clamp(1, MAX_POINTS);
    let xs = domain.uniform(steps);
    let h = domain.width() / steps as f64;
    let vals: Vec<f64> = xs.iter().map(|x| f(*x)).collect();
    let reach = ((delta / h) * (1.0 + 1e-12)).floor() as usize;
    let mut best = 0.0_f64;
    let mut resolution = 0.0_f64;
    for k in 0..vals.len() {
        if k + 1 < vals.len() {
            resolution = resolution.max((vals[k + 1] - vals[k]).abs());
        }
        for m in 1..=reach {
            if k + m >= vals.len() {
                break;
            }
            best = best.max((vals[k + m] - vals[k]).abs());
        }
    }
    GridEstimate {
        value: best,
        resolution,
    }
}

/// `phi(x) = sqrt(x (1 + x))`.
pub fn phi(x: f64) -> f64 {
    (x * (1.0 + x)).sqrt()
}

/// Ditzian-Totik first-order modulus with step weight `phi^gamma`.
pub fn modulus_ditzian_totik(f: &dyn Fn(f64) -> f64, delta: f64, gamma: f64, domain: Domain) -> Result<GridEstimate> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must be in [0, 1], got {gamma}")));
    }
    if !(delta > 0.0) {
        return Ok(GridEstimate {
            value: 0.0,
            resolution: 0.0,
        });
    }
    const I_POINTS: usize = 64;
    let mut xs = domain.uniform(512);
    // geometric refinement near the left end, where phi varies fastest
    let first = domain.width() * 1e-6;
    let ratio = (domain.width() / 2.0 / first).powf(1.0 / 255.0);
    xs.extend((0..256).map(|k| domain.lo + first * ratio.powi(k)));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut full = 0.0_f64;
    let mut half = 0.0_f64;
    for (xi, &x) in xs.iter().enumerate() {
        let w = phi(x).powf(gamma);
        for k in 1..=I_POINTS {
            let i = delta * k as f64 / I_POINTS as f64;
            let h = i * w / 2.0;
            if x - h < domain.lo || x + h > domain.hi {
                continue;
            }
            let d = (f(x + h) - f(x - h)).abs();
            full = full.max(d);
            if k % 2 == 0 && xi % 2 == 0 {
                half = half.max(d);
            }
        }
    }
    Ok(GridEstimate {
        value: full,
        resolution: full - half,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightedModulusMode {
    /// `(f(x+h) - f(x)) / (1 + (x+h)^2)` with the sign kept.
    #[default]
    Signed,
    Absolute,
}

/// Weighted modulus `sup_{x in [0, x_max], 0 < h <= delta} (f(x+h) - f(x)) / (1 + (x+h)^2)`.
pub fn weighted_modulus(f: &dyn Fn(f64) -> f64, delta: f64, x_max: f64, mode: WeightedModulusMode) -> GridEstimate {
    const H_POINTS: usize = 64;
    const X_POINTS: usize = 4096;
    if !(delta > 0.0) || !(x_max > 0.0) {
        return GridEstimate {
            value: 0.0,
            resolution: 0.0,
        };
    }
    let xs = Domain { lo: 0.0, hi: x_max }.uniform(X_POINTS);
    let mut full = f64::NEG_INFINITY;
    let mut half = f64::NEG_INFINITY;
    for (xi, &x) in xs.iter().enumerate() {
        let fx = f(x);
        for k in 1..=H_POINTS {
            let h = delta * k as f64 / H_POINTS as f64;
            let xh = x + h;
            let mut d = (f(xh) - fx) / (1.0 + xh * xh);
            if mode == WeightedModulusMode::Absolute {
                d = d.abs();
            }
            full = full.max(d);
            if k % 2 == 0 && xi % 2 == 0 {
                half = half.max(d);
            }
        }
    }
    GridEstimate {
        value: full,
        resolution: full - half,
    }
}

/// `sup |f(x)| / (1 + x^2)` on `[0, x_max]`; with a growth bound and
/// `sigma < 2`, the analytic bound on the tail past `x_max` is folded in.
pub fn weighted_norm(f: &dyn Fn(f64) -> f64, x_max: f64, growth: Option<Growth>) -> GridEstimate {
    const X_POINTS: usize = 8192;
    let xs = Domain {
        lo: 0.0,
        hi: x_max.max(f64::MIN_POSITIVE),
    }
    .uniform(X_POINTS);
    let ratios: Vec<f64> = xs.iter().map(|x| f(*x).abs() / (1.0 + x * x)).collect();
    let full = ratios.iter().cloned().fold(0.0, f64::max);
    let half = ratios.iter().step_by(2).cloned().fold(0.0, f64::max);
    let mut value = full;
    if let Some(g) = growth {
        if g.sigma < 2.0 {
            value = value.max(tail_bound(g, x_max));
        }
    }
    GridEstimate {
        value,
        resolution: full - half,
    }
}

/// `sup_{x >= x_max} m (1 + x^sigma) / (1 + x^2)` for `sigma < 2`.
fn tail_bound(g: Growth, x_max: f64) -> f64 {
    // the ratio decreases past its single critical point; scan far enough to pass it
    let mut best = 0.0_f64;
    let mut x = x_max;
    for _ in 0..200 {
        best = best.max(g.m * (1.0 + x.powf(g.sigma)) / (1.0 + x * x));
        x = x * 1.1 + 1.0;
    }
    best
}

/// Smallest `K` with `|f(s) - f(x)| <= K |s - x|^r / (s + x)^{r/2}` on grid pairs.
pub fn lipschitz_fit(f: &dyn Fn(f64) -> f64, r: f64, domain: Domain) -> Result<GridEstimate> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("r must be in (0, 1], got {r}")));
    }
    if domain.lo < 0.0 {
        return Err(Error::InvalidArgument("domain must lie in [0, inf)".into()));
    }
    const POINTS: usize = 512;
    let xs = domain.uniform(POINTS);
    let vals: Vec<f64> = xs.iter().map(|x| f(*x)).collect();
    let mut full = 0.0_f64;
    let mut half = 0.0_f64;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let sum = xs[i] + xs[j];
            if sum <= 0.0 {
                continue;
            }
            let k = (vals[j] - vals[i]).abs() * sum.powf(r / 2.0) / (xs[j] - xs[i]).powf(r);
            full = full.max(k);
            if i % 2 == 0 && j % 2 == 0 {
                half = half.max(k);
            }
        }
    }
    Ok(GridEstimate {
        value: full,
        resolution: full - half,
    })
}

/// One polynomial piece `sum coeffs[k] x^k` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub kind: PieceKind,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    Poly,
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, v)| k as f64 * v).collect()
}

/// A continuous piecewise polynomial with contiguous pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Piece>", into = "Vec<Piece>")]
pub struct PiecewiseFunction {
    pieces: Vec<Piece>,
}

impl TryFrom<Vec<Piece>> for PiecewiseFunction {
    type Error = Error;

    fn try_from(pieces: Vec<Piece>) -> Result<Self> {
        Self::new(pieces)
    }
}

impl From<PiecewiseFunction> for Vec<Piece> {
    fn from(pf: PiecewiseFunction) -> Self {
        pf.pieces
    }
}

impl PiecewiseFunction {
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("piecewise function needs a piece".into()));
        }
        for p in &pieces {
            if !(p.lo < p.hi) {
                return Err(Error::InvalidArgument(format!("empty piece [{}, {}]", p.lo, p.hi)));
            }
        }
        for w in pieces.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::InvalidArgument(format!(
                    "pieces are not contiguous at {} / {}",
                    w[0].hi, w[1].lo
                )));
            }
            let (a, b) = (poly_eval(&w[0].coeffs, w[0].hi), poly_eval(&w[1].coeffs, w[1].lo));
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "discontinuity at {}: {a} vs {b}",
                    w[0].hi
                )));
            }
        }
        Ok(Self { pieces })
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

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn domain(&self) -> Domain {
        Domain {
            lo: self.pieces[0].lo,
            hi: self.pieces[self.pieces.len() - 1].hi,
        }
    }

    fn piece_at(&self, x: f64) -> &Piece {
        self.pieces
            .iter()
            .find(|p| x < p.hi)
            .unwrap_or(&self.pieces[self.pieces.len() - 1])
    }

    pub fn eval(&self, x: f64) -> f64 {
        poly_eval(&self.piece_at(x).coeffs, x)
    }

    /// Right-hand derivative, or left-hand at the right end of the domain.
    pub fn derivative(&self, x: f64) -> f64 {
        poly_eval(&poly_derivative(&self.piece_at(x).coeffs), x)
    }

    /// Variation of `f'` on `[a, b]`: the smooth variation inside each piece
    /// plus the jumps of `f'` at breakpoints strictly inside `(a, b)`. With a
    /// `center`, the jump at the center is not counted, which is the variation
    /// of the derivative with its one-sided limits subtracted at that point.
    pub fn derivative_variation(&self, a: f64, b: f64, center: Option<f64>) -> Result<f64> {
        let dom = self.domain();
        if !(a <= b) || a < dom.lo || b > dom.hi {
            return Err(Error::InvalidArgument(format!(
                "[{a}, {b}] is not inside [{}, {}]",
                dom.lo, dom.hi
            )));
        }
        let mut total = 0.0;
        for (k, p) in self.pieces.iter().enumerate() {
            let lo = p.lo.max(a);
            let hi = p.hi.min(b);
            if lo < hi {
                total += poly_variation(&poly_derivative(&p.coeffs), lo, hi);
            }
            if k + 1 < self.pieces.len() {
                let bp = p.hi;
                if bp > a && bp < b && center != Some(bp) {
                    let left = poly_eval(&poly_derivative(&p.coeffs), bp);
                    let right = poly_eval(&poly_derivative(&self.pieces[k + 1].coeffs), bp);
                    total += (right - left).abs();
                }
            }
        }
        Ok(total)
    }
}

/// Total variation of a polynomial on `[lo, hi]`, summed between its extrema.
fn poly_variation(c: &[f64], lo: f64, hi: f64) -> f64 {
    let d = poly_derivative(c);
    let mut cuts = vec![lo];
    if d.iter().any(|v| *v != 0.0) {
        const SAMPLES: usize = 1024;
        let h = (hi - lo) / SAMPLES as f64;
        let mut prev_x = lo;
        let mut prev = poly_eval(&d, lo);
        for k in 1..=SAMPLES {
            let x = if k == SAMPLES { hi } else { lo + k as f64 * h };
            let v = poly_eval(&d, x);
            if v == 0.0 {
                cuts.push(x);
            } else if prev != 0.0 && prev.signum() != v.signum() {
                let (mut u, mut w) = (prev_x, x);
                for _ in 0..80 {
                    let m = 0.5 * (u + w);
                    if poly_eval(&d, m).signum() == prev.signum() {
                        u = m;
                    } else {
                        w = m;
                    }
                }
                cuts.push(0.5 * (u + w));
            }
            prev_x = x;
            prev = v;
        }
    }
    cuts.push(hi);
    cuts.windows(2)
        .map(|w| (poly_eval(c, w[1]) - poly_eval(c, w[0])).abs())
        .sum()
}

/// Variation of `f'` on `[a, b]`; see [`PiecewiseFunction::derivative_variation`].
pub fn total_variation(pf: &PiecewiseFunction, a: f64, b: f64, center: Option<f64>) -> Result<f64> {
    pf.derivative_variation(a, b, center)
}
