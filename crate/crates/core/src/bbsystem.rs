//! Boas-Buck generating-function systems.
//!
//! A system is the five analytic functions `xi, S, T, U, V` with
//!
//! ```text
//! S(s) * xi(y^2 T(s) + y U(s) + V(s)) = sum_j Theta_j(y) s^j
//! ```
//!
//! The polynomial values `Theta_j(y)` are the raw weights of every operator in
//! [`crate::operators`]. `xi` is carried twice: as a truncated series for the
//! composition, and as a pointwise evaluator (with its first two derivatives)
//! for the normalizer `S(1) * xi(p(x))`, whose argument grows like `n x`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{ShiftedCoeffs, TruncatedSeries, UnitDerivatives};

/// Default relative tail mass left out of the weight sum.
pub const DEFAULT_TRUNC_EPS: f64 = 1e-12;
/// Default hard cap on the truncation index.
pub const DEFAULT_WEIGHT_CAP: usize = 20_000;

const CONDITION_TOL: f64 = 1e-10;
const POSITIVITY_J: usize = 512;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Pointwise evaluators for `xi`, `xi'` and `xi''`.
#[derive(Clone)]
pub enum XiEvaluator {
    /// `xi = xi' = xi'' = exp`.
    Exp,
    /// Evaluate the stored truncated series and its formal derivatives.
    Series,
    Custom {
        value: RealFn,
        d1: RealFn,
        d2: RealFn,
    },
}

impl fmt::Debug for XiEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XiEvaluator::Exp => f.write_str("Exp"),
            XiEvaluator::Series => f.write_str("Series"),
            XiEvaluator::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// On-disk system definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(default)]
    pub name: Option<String>,
    pub xi_kind: XiKind,
    #[serde(default)]
    pub xi_coeffs: Vec<f64>,
    pub s_coeffs: Vec<f64>,
    #[serde(default)]
    pub t_coeffs: Vec<f64>,
    #[serde(default)]
    pub u_coeffs: Vec<f64>,
    #[serde(default)]
    pub v_coeffs: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiKind {
    Exp,
    SeriesOnly,
}

#[derive(Debug, Clone)]
pub struct BoasBuckSystem {
    name: String,
    xi_coeffs: Vec<f64>,
    xi_eval: XiEvaluator,
    s_fn: ShiftedCoeffs,
    t_fn: ShiftedCoeffs,
    u_fn: ShiftedCoeffs,
    v_fn: ShiftedCoeffs,
    at_one: ComponentsAtOne,
    sigma: f64,
}

/// Values and derivatives of `S, T, U, V` at `s = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentsAtOne {
    pub s: UnitDerivatives,
    pub t: UnitDerivatives,
    pub u: UnitDerivatives,
    pub v: UnitDerivatives,
}

impl BoasBuckSystem {
    /// Builds a system from raw coefficient lists (shifted representation for `T, U, V`).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        xi_coeffs: Vec<f64>,
        xi_eval: XiEvaluator,
        s_coeffs: Vec<f64>,
        t_coeffs: Vec<f64>,
        u_coeffs: Vec<f64>,
        v_coeffs: Vec<f64>,
        sigma: f64,
    ) -> Result<Self> {
        if s_coeffs.is_empty() {
            return Err(Error::InvalidArgument("s_coeffs must not be empty".into()));
        }
        if matches!(xi_eval, XiEvaluator::Series | XiEvaluator::Custom { .. }) && xi_coeffs.is_empty() {
            return Err(Error::InvalidArgument("series-only xi needs xi_coeffs".into()));
        }
        let all = xi_coeffs
            .iter()
            .chain(&s_coeffs)
            .chain(&t_coeffs)
            .chain(&u_coeffs)
            .chain(&v_coeffs);
        if all.clone().any(|c| !c.is_finite()) || !sigma.is_finite() {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        let s_fn = ShiftedCoeffs::new(s_coeffs, 0);
        let t_fn = ShiftedCoeffs::new(t_coeffs, 1);
        let u_fn = ShiftedCoeffs::new(u_coeffs, 2);
        let v_fn = ShiftedCoeffs::new(v_coeffs, 3);
        let at_one = ComponentsAtOne {
            s: s_fn.at_one(),
            t: t_fn.at_one(),
            u: u_fn.at_one(),
            v: v_fn.at_one(),
        };
        Ok(Self {
            name: name.into(),
            xi_coeffs,
            xi_eval,
            s_fn,
            t_fn,
            u_fn,
            v_fn,
            at_one,
            sigma,
        })
    }

    pub fn from_file_spec(spec: SystemFile) -> Result<Self> {
        let xi_eval = match spec.xi_kind {
            XiKind::Exp => XiEvaluator::Exp,
            XiKind::SeriesOnly => XiEvaluator::Series,
        };
        Self::new(
            spec.name.unwrap_or_else(|| "system".into()),
            spec.xi_coeffs,
            xi_eval,
            spec.s_coeffs,
            spec.t_coeffs,
            spec.u_coeffs,
            spec.v_coeffs,
            spec.sigma,
        )
    }

    pub fn from_json_str(text: &str) -> serde_json::Result<Result<Self>> {
        let spec: SystemFile = serde_json::from_str(text)?;
        Ok(Self::from_file_spec(spec))
    }

    /// Loads a system file, or one of the built-ins when `path` is `builtin:<name>`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if let Some(name) = path.to_str().and_then(|p| p.strip_prefix("builtin:")) {
            return Self::builtin(name);
        }
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut spec: SystemFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        if spec.name.is_none() {
            spec.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Self::from_file_spec(spec)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "exp1" => Ok(Self::exp1()),
            "exp2" => Ok(Self::exp2()),
            _ => Err(Error::InvalidArgument(format!("unknown built-in system `{name}`"))),
        }
    }

    /// `S = 1, xi = exp, T = 0, U = s^2/2, V = 0`.
    pub fn exp1() -> Self {
        Self::new(
            "exp1",
            vec![],
            XiEvaluator::Exp,
            vec![1.0],
            vec![],
            vec![0.5],
            vec![],
            2.0,
        )
        .expect("built-in system")
    }

    /// `S = e^s, xi = exp, T = 0, U = s^2/2, V = s^3/6`.
    pub fn exp2() -> Self {
        let s = TruncatedSeries::exp(40).into_coeffs();
        Self::new(
            "exp2",
            vec![],
            XiEvaluator::Exp,
            s,
            vec![],
            vec![0.5],
            vec![1.0 / 6.0],
            2.0,
        )
        .expect("built-in system")
    }

    pub fn to_file_spec(&self) -> SystemFile {
        SystemFile {
            name: Some(self.name.clone()),
            xi_kind: match self.xi_eval {
                XiEvaluator::Exp => XiKind::Exp,
                _ => XiKind::SeriesOnly,
            },
            xi_coeffs: self.xi_coeffs.clone(),
            s_coeffs: self.s_fn.coeffs().to_vec(),
            t_coeffs: self.t_fn.coeffs().to_vec(),
            u_coeffs: self.u_fn.coeffs().to_vec(),
            v_coeffs: self.v_fn.coeffs().to_vec(),
            sigma: self.sigma,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn at_one(&self) -> &ComponentsAtOne {
        &self.at_one
    }

    pub fn s_fn(&self) -> &ShiftedCoeffs {
        &self.s_fn
    }

    pub fn t_fn(&self) -> &ShiftedCoeffs {
        &self.t_fn
    }

    pub fn u_fn(&self) -> &ShiftedCoeffs {
        &self.u_fn
    }

    pub fn v_fn(&self) -> &ShiftedCoeffs {
        &self.v_fn
    }

    pub fn xi_evaluator(&self) -> &XiEvaluator {
        &self.xi_eval
    }

    /// Largest `j` for which `Theta_j` is exact given the stored `xi` coefficients.
    pub fn exact_theta_order(&self) -> Option<usize> {
        match self.xi_eval {
            XiEvaluator::Exp => None,
            _ => Some(self.xi_coeffs.len() - 1),
        }
    }

    /// The `xi` series to the requested order.
    pub fn xi_series(&self, order: usize) -> TruncatedSeries {
        match self.xi_eval {
            XiEvaluator::Exp => TruncatedSeries::exp(order),
            _ => TruncatedSeries::from_coeffs(&self.xi_coeffs, order),
        }
    }

    fn stored_xi(&self) -> TruncatedSeries {
        TruncatedSeries::from_coeffs(&self.xi_coeffs, self.xi_coeffs.len().saturating_sub(1))
    }

    pub fn xi_value(&self, t: f64) -> f64 {
        match &self.xi_eval {
            XiEvaluator::Exp => t.exp(),
            XiEvaluator::Series => self.stored_xi().eval(t),
            XiEvaluator::Custom { value, .. } => value(t),
        }
    }

    pub fn xi_d1(&self, t: f64) -> f64 {
        match &self.xi_eval {
            XiEvaluator::Exp => t.exp(),
            XiEvaluator::Series => self.stored_xi().derivative().eval(t),
            XiEvaluator::Custom { d1, .. } => d1(t),
        }
    }

    pub fn xi_d2(&self, t: f64) -> f64 {
        match &self.xi_eval {
            XiEvaluator::Exp => t.exp(),
            XiEvaluator::Series => self.stored_xi().derivative().derivative().eval(t),
            XiEvaluator::Custom { d2, .. } => d2(t),
        }
    }

    /// `(xi'(t)/xi(t), xi''(t)/xi(t))`; exact ones for the exponential.
    pub fn xi_ratios(&self, t: f64) -> Result<(f64, f64)> {
        if let XiEvaluator::Exp = self.xi_eval {
            return Ok((1.0, 1.0));
        }
        let v = self.xi_value(t);
        if v == 0.0 || !v.is_finite() {
            return Err(Error::DegenerateNormalizer(v));
        }
        Ok((self.xi_d1(t) / v, self.xi_d2(t) / v))
    }

    /// `ln xi(t)`, computed without overflow for the exponential.
    pub fn xi_ln_value(&self, t: f64) -> f64 {
        match self.xi_eval {
            XiEvaluator::Exp => t,
            _ => self.xi_value(t).ln(),
        }
    }

    /// `p(x) = n^2 x^2 T(1) + n x U(1) + V(1)`.
    pub fn p_of_x(&self, n: u64, x: f64) -> f64 {
        let y = n as f64 * x;
        y * y * self.at_one.t.value + y * self.at_one.u.value + self.at_one.v.value
    }

    /// `A(s) = y^2 T(s) + y U(s) + V(s)` truncated at `order`.
    pub fn inner_series(&self, y: f64, order: usize) -> TruncatedSeries {
        let t = self.t_fn.to_series(order).scale(y * y);
        let u = self.u_fn.to_series(order).scale(y);
        let v = self.v_fn.to_series(order);
        t.add(&u).and_then(|a| a.add(&v)).expect("equal orders")
    }

    /// `Theta_0(y)..=Theta_J(y)` by series composition.
    pub fn theta_values(&self, y: f64, order: usize) -> Result<ThetaTable> {
        if !(y >= 0.0) {
            return Err(Error::InvalidArgument(format!("y must be >= 0, got {y}")));
        }
        let inner = self.inner_series(y, order);
        let composed = self.xi_series(order).compose(&inner)?;
        let product = self.s_fn.to_series(order).mul(&composed)?;
        let a1 = y * y * self.at_one.t.value + y * self.at_one.u.value + self.at_one.v.value;
        let normalizer = self.at_one.s.value * self.xi_value(a1);
        let values = product.into_coeffs();
        let table = ThetaTable::new(y, 0.0, values, normalizer)?;
        table.check_positive()?;
        Ok(table)
    }

    /// Normalized operator weights at `y = n x`, truncated at the first index
    /// whose remaining mass is at most `eps`.
    pub fn weight_distribution(&self, n: u64, x: f64, eps: f64) -> Result<Weights> {
        self.weight_distribution_capped(n, x, eps, DEFAULT_WEIGHT_CAP)
    }

    pub fn weight_distribution_capped(&self, n: u64, x: f64, eps: f64, cap: usize) -> Result<Weights> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!("eps must be in (0,1), got {eps}")));
        }
        if !(x >= 0.0) || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "need n >= 1 and x >= 0, got n = {n}, x = {x}"
            )));
        }
        if self.at_one.s.value <= 0.0 {
            return Err(Error::DegenerateNormalizer(self.at_one.s.value));
        }
        let y = n as f64 * x;
        match self.xi_eval {
            XiEvaluator::Exp => self.exp_weights(n, x, y, eps, cap),
            _ => self.series_weights(y, eps, cap),
        }
    }

    fn series_weights(&self, y: f64, eps: f64, cap: usize) -> Result<Weights> {
        let order = self.exact_theta_order().unwrap_or(cap).min(cap);
        let table = self.theta_values(y, order)?;
        if !table.normalizer.is_finite() || table.normalizer <= 0.0 {
            return Err(Error::DegenerateNormalizer(table.normalizer));
        }
        let weights: Vec<f64> = table.values.iter().map(|v| v / table.normalizer).collect();
        let mut acc = KahanSum::default();
        for (j, w) in weights.iter().enumerate() {
            acc.add(*w);
            let tail = (1.0 - acc.value()).max(0.0);
            if tail <= eps {
                let values = weights[..=j].to_vec();
                return Ok(Weights {
                    table: ThetaTable {
                        point: y,
                        log_scale: table.normalizer.ln(),
                        values,
                        normalizer: 1.0,
                        tail_mass_bound: tail,
                    },
                    j_cut: j,
                    roundoff_limited: false,
                });
            }
        }
        Err(Error::TruncationFailure {
            eps,
            cap: order,
            tail: (1.0 - acc.value()).max(0.0),
        })
    }

    /// `exp(A(s))` satisfies `k e_k = sum_i i a_i e_{k-i}`; run that recurrence
    /// with per-entry log scales so `e^{-A(1)}` never underflows, then
    /// convolve with the coefficients of `S`.
    fn exp_weights(&self, n: u64, x: f64, y: f64, eps: f64, cap: usize) -> Result<Weights> {
        let degree = [self.t_fn.degree(), self.u_fn.degree(), self.v_fn.degree()]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0);
        let a = self.inner_series(y, degree.max(1));
        let ia: Vec<(usize, f64)> = a
            .coeffs()
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, i as f64 * c))
            .collect();
        let a1 = self.p_of_x(n, x);
        let s1 = self.at_one.s.value;
        let q: Vec<f64> = self.s_fn.coeffs().iter().map(|c| c / s1).collect();

        let mut mant: Vec<f64> = vec![1.0];
        let mut scale: Vec<f64> = vec![-a1];
        let mut e_hat: Vec<f64> = vec![(-a1).exp()];
        let mut weights: Vec<f64> = Vec::new();
        let mut acc = KahanSum::default();
        let mut peak = 0.0_f64;
        let mut quiet_run = 0usize;

        for j in 0..=cap {
            if j > 0 {
                let k = j;
                let base = scale[k - 1];
                let mut sum = 0.0;
                for &(i, ia_i) in &ia {
                    if i > k {
                        break;
                    }
                    let m = mant[k - i];
                    if m != 0.0 {
                        sum += ia_i * m * (scale[k - i] - base).exp();
                    }
                }
                let mut m = sum / k as f64;
                let mut sc = base;
                if m != 0.0 && !(1e-150..=1e150).contains(&m.abs()) {
                    sc += m.abs().ln();
                    m = m.signum();
                }
                mant.push(m);
                scale.push(sc);
                e_hat.push(m * sc.exp());
            }
            let w: f64 = q.iter().enumerate().take(j + 1).map(|(i, qi)| qi * e_hat[j - i]).sum();
            if w < -1e-9 {
                return Err(Error::PositivityViolation {
                    index: j,
                    point: y,
                    value: w,
                });
            }
            weights.push(w);
            acc.add(w);
            peak = peak.max(w);
            let tail = (1.0 - acc.value()).max(0.0);
            if tail <= eps {
                return Ok(Weights::scaled(y, a1 + s1.ln(), weights, tail, false));
            }
            // Past the bulk, once terms stop moving the sum in double
            // precision the residual `tail` is roundoff in the recurrence.
            if w < peak * f64::EPSILON * 1e-4 && w <= eps * 1e-3 {
                quiet_run += 1;
                if quiet_run >= 8 && tail <= 1e3 * eps.max(f64::EPSILON * (j as f64 + 1.0)) {
                    return Ok(Weights::scaled(y, a1 + s1.ln(), weights, tail, true));
                }
            } else {
                quiet_run = 0;
            }
        }
        Err(Error::TruncationFailure {
            eps,
            cap,
            tail: (1.0 - acc.value()).max(0.0),
        })
    }

    /// Checks the admissibility conditions and the sampled positivity requirements.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let c = &self.at_one;
        checks.push(Check::hard(
            "S(1) > 0",
            c.s.value > 0.0,
            format!("S(1) = {:e}", c.s.value),
        ));
        checks.push(Check::hard(
            "T'(1) = 0",
            c.t.d1.abs() <= CONDITION_TOL,
            format!("T'(1) = {:e}", c.t.d1),
        ));
        checks.push(Check::hard(
            "T''(1) = 0",
            c.t.d2.abs() <= CONDITION_TOL,
            format!("T''(1) = {:e}", c.t.d2),
        ));
        checks.push(Check::hard(
            "U'(1) = 1",
            (c.u.d1 - 1.0).abs() <= CONDITION_TOL,
            format!("U'(1) = {:e}", c.u.d1),
        ));

        if let XiEvaluator::Exp = self.xi_eval {
            if !self.xi_coeffs.is_empty() {
                let e = TruncatedSeries::exp(self.xi_coeffs.len() - 1);
                let worst = self
                    .xi_coeffs
                    .iter()
                    .zip(e.coeffs())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                checks.push(Check::hard(
                    "xi_coeffs match exp",
                    worst <= 1e-12,
                    format!("max |p_j - 1/j!| = {worst:e}"),
                ));
            }
        }

        let grid: Vec<f64> = (0..=500).map(|i| i as f64 * 0.1).collect();
        let neg_xi = grid.iter().copied().find(|&t| !(self.xi_value(t) >= 0.0));
        checks.push(Check::hard(
            "xi(t) >= 0 on sampled t",
            neg_xi.is_none(),
            match neg_xi {
                Some(t) => format!("xi({t}) = {:e}", self.xi_value(t)),
                None => "t in {0, 0.1, ..., 50}".into(),
            },
        ));
        checks.push(self.theta_positivity_check(&grid));

        let nonzero = |name: &str, coeffs: &[f64]| {
            let zero = coeffs.iter().position(|&c| c == 0.0);
            let empty = coeffs.is_empty();
            Check::warning(
                name,
                zero.is_none() && !empty,
                match (empty, zero) {
                    (true, _) => "no coefficients stored (identically zero)".to_string(),
                    (false, Some(j)) => format!("coefficient {j} is zero"),
                    (false, None) => format!("{} coefficients, all nonzero", coeffs.len()),
                },
            )
        };
        let xi_stored = match self.xi_eval {
            XiEvaluator::Exp if self.xi_coeffs.is_empty() => TruncatedSeries::exp(32).into_coeffs(),
            _ => self.xi_coeffs.clone(),
        };
        checks.push(nonzero("p_j != 0", &xi_stored));
        checks.push(nonzero("q_j != 0", self.s_fn.coeffs()));
        checks.push(nonzero("r_j != 0", self.t_fn.coeffs()));
        ValidationReport { checks }
    }

    fn theta_positivity_check(&self, grid: &[f64]) -> Check {
        let j_check = self.exact_theta_order().unwrap_or(POSITIVITY_J).min(POSITIVITY_J);
        for &y in grid {
            let table = match self.xi_eval {
                XiEvaluator::Exp => self.exp_theta_fixed(y, j_check),
                _ => self.theta_values(y, j_check),
            };
            match table {
                Ok(t) => {
                    if let Some((j, w)) = t.weights().enumerate().find(|(_, w)| *w < -1e-12) {
                        return Check::hard(
                            "Theta_j(y) >= 0 on sampled y",
                            false,
                            format!("Theta_{j}({y}) / normalizer = {w:e}"),
                        );
                    }
                }
                Err(e) => {
                    return Check::hard("Theta_j(y) >= 0 on sampled y", false, e.to_string());
                }
            }
        }
        Check::hard(
            "Theta_j(y) >= 0 on sampled y",
            true,
            format!("y in {{0, 0.1, ..., 50}}, j <= {j_check}"),
        )
    }

    /// Scaled `Theta` table of fixed length from the exponential recurrence.
    fn exp_theta_fixed(&self, y: f64, order: usize) -> Result<ThetaTable> {
        let a = self.inner_series(y, order);
        let a1 = y * y * self.at_one.t.value + y * self.at_one.u.value + self.at_one.v.value;
        let mut e = vec![(-a1).exp()];
        for k in 1..=order {
            let s: f64 = (1..=k).map(|i| i as f64 * a.coeffs()[i] * e[k - i]).sum();
            e.push(s / k as f64);
        }
        let s = self.s_fn.to_series(order);
        let values: Vec<f64> = (0..=order)
            .map(|j| (0..=j).map(|i| s.coeffs()[i] * e[j - i]).sum())
            .collect();
        ThetaTable::new(y, a1, values, self.at_one.s.value)
    }
}

/// `Theta_j(y)` values, possibly stored as `Theta_j(y) * exp(-log_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaTable {
    pub point: f64,
    /// Common log-scale of `values` and `normalizer`; zero when they are unscaled.
    pub log_scale: f64,
    pub values: Vec<f64>,
    /// `S(1) xi(A(1))` on the same scale as `values`.
    pub normalizer: f64,
    /// Upper bound on the normalized mass of the indices past the table.
    pub tail_mass_bound: f64,
}

impl ThetaTable {
    fn new(point: f64, log_scale: f64, values: Vec<f64>, normalizer: f64) -> Result<Self> {
        let partial: f64 = values.iter().sum();
        let tail_mass_bound = if normalizer > 0.0 && normalizer.is_finite() {
            (1.0 - partial / normalizer).max(0.0)
        } else {
            f64::NAN
        };
        Ok(Self {
            point,
            log_scale,
            values,
            normalizer,
            tail_mass_bound,
        })
    }

    fn check_positive(&self) -> Result<()> {
        let scale = if self.normalizer.is_finite() && self.normalizer > 0.0 {
            self.normalizer
        } else {
            1.0
        };
        match self.values.iter().position(|v| *v / scale < -1e-9) {
            Some(j) => Err(Error::PositivityViolation {
                index: j,
                point: self.point,
                value: self.values[j],
            }),
            None => Ok(()),
        }
    }

    /// `Theta_j / normalizer`.
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |v| v / self.normalizer)
    }

    pub fn order(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// Normalized weights `Theta_j(n x) / (S(1) xi(p(x)))` for `j <= j_cut`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub table: ThetaTable,
    pub j_cut: usize,
    /// The cut was taken where the terms vanished but the residual mass was
    /// still above `eps` at the level of double-precision roundoff.
    pub roundoff_limited: bool,
}

impl Weights {
    fn scaled(y: f64, log_norm: f64, values: Vec<f64>, tail: f64, roundoff_limited: bool) -> Self {
        let j_cut = values.len() - 1;
        Self {
            table: ThetaTable {
                point: y,
                log_scale: log_norm,
                values,
                normalizer: 1.0,
                tail_mass_bound: tail,
            },
            j_cut,
            roundoff_limited,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.table.values
    }

    pub fn tail_mass(&self) -> f64 {
        self.table.tail_mass_bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Hard,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub severity: Severity,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn hard(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            severity: Severity::Hard,
            passed,
            detail,
        }
    }

    fn warning(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            severity: Severity::Warning,
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    /// All hard conditions hold; warnings are ignored.
    pub fn is_admissible(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.severity == Severity::Warning)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks
            .iter()
            .filter(|c| c.severity == Severity::Warning && !c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.severity == Severity::Hard && !c.passed)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp1_theta_at_two() {
        // e^{2 s^2 / 2} = sum s^{2k} / k!
        let t = BoasBuckSystem::exp1().theta_values(2.0, 6).unwrap();
        let expect = [1.0, 0.0, 1.0, 0.0, 0.5, 0.0, 1.0 / 6.0];
        for (a, b) in t.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn exp1_theta_at_zero_and_order_zero() {
        let sys = BoasBuckSystem::exp1();
        let t = sys.theta_values(0.0, 5).unwrap();
        assert_eq!(t.values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let t0 = sys.theta_values(3.0, 0).unwrap();
        assert_eq!(t0.values, vec![1.0]);
    }

    #[test]
    fn theta_orders_agree_on_shared_indices() {
        let sys = BoasBuckSystem::exp2();
        let short = sys.theta_values(1.7, 10).unwrap();
        let long = sys.theta_values(1.7, 25).unwrap();
        assert_eq!(&long.values[..11], &short.values[..]);
    }

    #[test]
    fn p_of_x_examples() {
        assert_eq!(BoasBuckSystem::exp1().p_of_x(10, 1.0), 5.0);
        let p = BoasBuckSystem::exp2().p_of_x(2, 1.0);
        assert!((p - (1.0 + 1.0 / 6.0)).abs() < 1e-15);
        assert!((BoasBuckSystem::exp2().p_of_x(7, 0.0) - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn exp1_validation() {
        let report = BoasBuckSystem::exp1().validate();
        assert!(report.is_admissible(), "{report:#?}");
        let r = report.find("r_j != 0").unwrap();
        assert!(!r.passed);
        assert_eq!(r.severity, Severity::Warning);
    }

    #[test]
    fn bad_u_prime_is_a_hard_failure() {
        let sys = BoasBuckSystem::new(
            "bad",
            vec![],
            XiEvaluator::Exp,
            vec![1.0],
            vec![],
            vec![1.0],
            vec![],
            2.0,
        )
        .unwrap();
        let report = sys.validate();
        assert!(!report.is_admissible());
        assert!(!report.find("U'(1) = 1").unwrap().passed);
    }

    #[test]
    fn zero_s_is_a_hard_failure() {
        let sys = BoasBuckSystem::new(
            "bad",
            vec![],
            XiEvaluator::Exp,
            vec![0.0],
            vec![],
            vec![0.5],
            vec![],
            2.0,
        )
        .unwrap();
        assert!(!sys.validate().find("S(1) > 0").unwrap().passed);
    }

    #[test]
    fn weights_sum_to_one_within_eps() {
        let w = BoasBuckSystem::exp1().weight_distribution(5, 1.0, 1e-12).unwrap();
        let s: f64 = w.as_slice().iter().sum();
        assert!((1.0 - 1e-12..=1.0 + 1e-15).contains(&s), "{s}");
        assert!(!w.roundoff_limited);
    }

    #[test]
    fn weights_at_origin_concentrate() {
        let w = BoasBuckSystem::exp1().weight_distribution(5, 0.0, 1e-12).unwrap();
        assert_eq!(w.j_cut, 0);
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn looser_eps_cuts_earlier() {
        let sys = BoasBuckSystem::exp2();
        let tight = sys.weight_distribution(20, 1.5, 1e-12).unwrap();
        let loose = sys.weight_distribution(20, 1.5, 0.5).unwrap();
        assert!(loose.j_cut <= tight.j_cut);
    }

    #[test]
    fn recurrence_matches_composition() {
        let sys = BoasBuckSystem::exp2();
        let w = sys.weight_distribution(4, 2.5, 1e-14).unwrap();
        let t = sys.theta_values(10.0, w.j_cut).unwrap();
        for (a, b) in w.as_slice().iter().zip(t.weights()) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn large_argument_does_not_overflow() {
        let w = BoasBuckSystem::exp1().weight_distribution(640, 10.0, 1e-12).unwrap();
        let s: f64 = w.as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-10, "{s}");
        assert!(w.j_cut > 6000 && w.j_cut < 8000, "{}", w.j_cut);
    }

    #[test]
    fn series_only_system_uses_stored_order() {
        let xi = TruncatedSeries::exp(60).into_coeffs();
        let sys = BoasBuckSystem::new(
            "exp-series",
            xi,
            XiEvaluator::Series,
            vec![1.0],
            vec![],
            vec![0.5],
            vec![],
            2.0,
        )
        .unwrap();
        let w = sys.weight_distribution(4, 1.0, 1e-12).unwrap();
        let reference = BoasBuckSystem::exp1().weight_distribution(4, 1.0, 1e-12).unwrap();
        for (a, b) in w.as_slice().iter().zip(reference.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
        // the stored order is too short for a large argument
        let err = sys.weight_distribution(40, 5.0, 1e-12).unwrap_err();
        assert!(matches!(err, Error::TruncationFailure { .. }));
    }

    #[test]
    fn system_file_round_trip() {
        let spec = BoasBuckSystem::exp2().to_file_spec();
        let text = serde_json::to_string(&spec).unwrap();
        let back = BoasBuckSystem::from_json_str(&text).unwrap().unwrap();
        assert_eq!(back.to_file_spec(), spec);
        assert!(text.contains("\"xi_kind\":\"exp\""));
    }
}
