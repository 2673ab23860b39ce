//! Closed-form moments, central moments and their large-`n` limits.

use serde::{Deserialize, Serialize};

use crate::bbsystem::BoasBuckSystem;
use crate::error::{Error, Result};
use crate::operators::{apply_batch, OperatorConfig, OperatorKind};

/// The quantities every moment formula is built from, at one `(n, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentInputs {
    pub n: u64,
    pub x: f64,
    pub p: f64,
    /// `xi'(p(x)) / xi(p(x))`
    pub r1: f64,
    /// `xi''(p(x)) / xi(p(x))`
    pub r2: f64,
    /// `S'(1) / S(1)`
    pub s1: f64,
    /// `S''(1) / S(1)`
    pub s2: f64,
    pub u2: f64,
    pub v1: f64,
    pub v2: f64,
}

impl MomentInputs {
    pub fn new(sys: &BoasBuckSystem, n: u64, x: f64) -> Result<Self> {
        if n == 0 || !(x >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need n >= 1 and x >= 0, got n = {n}, x = {x}"
            )));
        }
        let c = sys.at_one();
        if c.s.value == 0.0 {
            return Err(Error::DegenerateNormalizer(0.0));
        }
        let p = sys.p_of_x(n, x);
        let (r1, r2) = sys.xi_ratios(p)?;
        Ok(Self {
            n,
            x,
            p,
            r1,
            r2,
            s1: c.s.d1 / c.s.value,
            s2: c.s.d2 / c.s.value,
            u2: c.u.d2,
            v1: c.v.d1,
            v2: c.v.d2,
        })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn need_two(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be >= 2, got {}", self.n)));
        }
        Ok(())
    }

    pub fn discrete(&self) -> [f64; 3] {
        let (n, x) = (self.nf(), self.x);
        let m1 = self.r1 * x + (self.s1 + self.v1 * self.r1) / n;
        let m2 = self.r2 * x * x
            + (self.r1 * (2.0 * self.s1 + self.u2 + 1.0) + 2.0 * self.v1 * self.r2) * x / n
            + (self.s2
                + self.s1
                + (2.0 * self.s1 * self.v1 + self.v2 + self.v1) * self.r1
                + self.v1 * self.v1 * self.r2)
                / (n * n);
        [1.0, m1, m2]
    }

    fn durrmeyer_with(&self, quad_coeff: f64) -> Result<[f64; 3]> {
        self.need_two()?;
        let (n, x) = (self.nf(), self.x);
        let m1 = self.r1 * x + (self.s1 + self.v1 * self.r1) / n;
        let m2 = n / (n - 1.0) * self.r2 * x * x
            + x / (n - 1.0) * (2.0 * self.v1 * self.r2 + (2.0 + 2.0 * self.s1 + self.u2) * self.r1)
            + (quad_coeff * self.r2
                + (2.0 * self.s1 * self.v1 + 2.0 * self.v1 + self.v2) * self.r1
                + 2.0 * self.s1
                + self.s2)
                / (n * (n - 1.0));
        Ok([1.0, m1, m2])
    }

    /// Durrmeyer moments with `(V'(1))^2` in the constant term, the form that
    /// agrees with `[n B_n(s^2) + B_n(s)] / (n - 1)`.
    pub fn durrmeyer(&self) -> Result<[f64; 3]> {
        self.durrmeyer_with(self.v1 * self.v1)
    }

    /// Durrmeyer moments with `(V''(1))^2` in the constant term, as the
    /// formula is usually printed. Differs from [`Self::durrmeyer`] when
    /// `V''(1) != ±V'(1)`.
    pub fn durrmeyer_as_printed(&self) -> Result<[f64; 3]> {
        self.durrmeyer_with(self.v2 * self.v2)
    }

    /// `[n B_n(s^2) + B_n(s)] / (n - 1)` from the discrete moments.
    pub fn durrmeyer_via_discrete(&self) -> Result<[f64; 3]> {
        self.need_two()?;
        let n = self.nf();
        let d = self.discrete();
        Ok([1.0, d[1], (n * d[2] + d[1]) / (n - 1.0)])
    }

    /// Coefficients `[c2, c1, c0]` of `mu2 = c2 x^2 + c1 x + c0`.
    pub fn mu2_coefficients(&self) -> Result<[f64; 3]> {
        self.need_two()?;
        let n = self.nf();
        let c2 = n / (n - 1.0) * self.r2 - 2.0 * self.r1 + 1.0;
        let c1 = 2.0 / (n - 1.0) * self.v1 * self.r2 + (2.0 + self.u2 + 2.0 * self.s1) * self.r1 / (n - 1.0)
            - 2.0 / n * (self.v1 * self.r1 + self.s1);
        let c0 = (self.v1 * self.v1 * self.r2
            + (2.0 * self.v1 * self.s1 + 2.0 * self.v1 + self.v2) * self.r1
            + (2.0 * self.s1 + self.s2))
            / (n * (n - 1.0));
        Ok([c2, c1, c0])
    }

    pub fn central(&self) -> Result<(f64, f64)> {
        let x = self.x;
        let mu1 = (self.r1 - 1.0) * x + (self.s1 + self.v1 * self.r1) / self.nf();
        let [c2, c1, c0] = self.mu2_coefficients()?;
        Ok((mu1, c2 * x * x + c1 * x + c0))
    }

    /// Szász-Durrmeyer moments: each Gamma(j+1, n) term adds `1/n` to the
    /// mean and `3 j/n^2 + 2/n^2` to the second moment.
    pub fn szasz(&self) -> [f64; 3] {
        let n = self.nf();
        let [_, m1, m2] = self.discrete();
        [1.0, m1 + 1.0 / n, m2 + 3.0 * m1 / n + 2.0 / (n * n)]
    }
}

pub fn discrete_moments(sys: &BoasBuckSystem, n: u64, x: f64) -> Result<[f64; 3]> {
    Ok(MomentInputs::new(sys, n, x)?.discrete())
}

pub fn durrmeyer_moments(sys: &BoasBuckSystem, n: u64, x: f64) -> Result<[f64; 3]> {
    MomentInputs::new(sys, n, x)?.durrmeyer()
}

pub fn durrmeyer_moments_as_printed(sys: &BoasBuckSystem, n: u64, x: f64) -> Result<[f64; 3]> {
    MomentInputs::new(sys, n, x)?.durrmeyer_as_printed()
}

/// `(mu1, mu2)` of the Durrmeyer operator.
pub fn central_moments(sys: &BoasBuckSystem, n: u64, x: f64) -> Result<(f64, f64)> {
    MomentInputs::new(sys, n, x)?.central()
}

pub fn szasz_moments(sys: &BoasBuckSystem, n: u64, x: f64) -> Result<[f64; 3]> {
    Ok(MomentInputs::new(sys, n, x)?.szasz())
}

/// Second central moment `L((s - x)^2; x)` of the chosen operator.
pub fn operator_mu2(sys: &BoasBuckSystem, kind: OperatorKind, n: u64, x: f64) -> Result<f64> {
    let inp = MomentInputs::new(sys, n, x)?;
    let m = match kind {
        OperatorKind::Discrete => inp.discrete(),
        OperatorKind::Durrmeyer => return Ok(inp.central()?.1),
        OperatorKind::SzaszDurrmeyer => inp.szasz(),
    };
    Ok(m[2] - 2.0 * x * m[1] + x * x)
}

/// First central moment `L(s - x; x)` of the chosen operator.
pub fn operator_mu1(sys: &BoasBuckSystem, kind: OperatorKind, n: u64, x: f64) -> Result<f64> {
    let inp = MomentInputs::new(sys, n, x)?;
    let m = match kind {
        OperatorKind::Discrete => inp.discrete(),
        OperatorKind::Durrmeyer => return Ok(inp.central()?.0),
        OperatorKind::SzaszDurrmeyer => inp.szasz(),
    };
    Ok(m[1] - x)
}

/// Closed forms next to quadrature values for one `(n, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: u64,
    pub x: f64,
    pub discrete: [f64; 3],
    pub durrmeyer: [f64; 3],
    pub durrmeyer_as_printed: [f64; 3],
    pub mu1: f64,
    pub mu2: f64,
    /// `m2 - 2 x m1 + x^2` from the Durrmeyer moments.
    pub mu2_from_raw: f64,
    pub discrete_quadrature: [f64; 3],
    pub durrmeyer_quadrature: [f64; 3],
    pub discrete_discrepancy: [f64; 3],
    pub durrmeyer_discrepancy: [f64; 3],
}

impl MomentReport {
    pub fn max_durrmeyer_discrepancy(&self) -> f64 {
        self.durrmeyer_discrepancy.iter().cloned().fold(0.0, f64::max)
    }
}

/// Evaluates the closed forms and the operators on `1, s, s^2`.
/// `cfg.kind` is ignored; both operators are run with `cfg`'s other settings.
pub fn moment_report(sys: &BoasBuckSystem, cfg: &OperatorConfig, x: f64) -> Result<MomentReport> {
    let n = cfg.n;
    let inputs = MomentInputs::new(sys, n, x)?;
    let discrete = inputs.discrete();
    let durrmeyer = inputs.durrmeyer()?;
    let printed = inputs.durrmeyer_as_printed()?;
    let (mu1, mu2) = inputs.central()?;
    let fs: [&(dyn Fn(f64) -> f64 + Sync); 3] = [&|_| 1.0, &|s| s, &|s| s * s];
    let run = |kind| -> Result<[f64; 3]> {
        let c = OperatorConfig { kind, ..*cfg };
        let v = apply_batch(sys, &c, &fs, x)?;
        Ok([v[0].value, v[1].value, v[2].value])
    };
    let dq = run(OperatorKind::Discrete)?;
    let mq = run(OperatorKind::Durrmeyer)?;
    let gap = |a: [f64; 3], b: [f64; 3]| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs(), (a[2] - b[2]).abs()];
    Ok(MomentReport {
        n,
        x,
        discrete,
        durrmeyer,
        durrmeyer_as_printed: printed,
        mu1,
        mu2,
        mu2_from_raw: durrmeyer[2] - 2.0 * x * durrmeyer[1] + x * x,
        discrete_quadrature: dq,
        durrmeyer_quadrature: mq,
        discrete_discrepancy: gap(discrete, dq),
        durrmeyer_discrepancy: gap(durrmeyer, mq),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimates {
    pub x: f64,
    pub ell1: f64,
    pub ell2: f64,
    /// `ell2 x^2 + (2 + U''(1)) x`
    pub eta1: f64,
    /// Extrapolated `n` times the `x` coefficient of `mu2`; tends to `2 + U''(1)`.
    pub x_coefficient_limit: f64,
    /// `max_n n mu2 / (x (x + 1))` over the grid; zero at `x = 0`.
    pub m_bound: f64,
}

/// Richardson extrapolation with model `a + b/n` on the two largest grid points.
/// Fails if the extrapolated values on successive pairs move apart.
pub fn richardson_limit(n_grid: &[u64], values: &[f64]) -> Result<f64> {
    if n_grid.len() != values.len() || n_grid.len() < 2 {
        return Err(Error::LimitEstimate("need at least two grid points".into()));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::LimitEstimate("n grid must be strictly increasing".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::LimitEstimate("non-finite sequence value".into()));
    }
    let extrap: Vec<f64> = n_grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(n, v)| {
            let (n1, n2) = (n[0] as f64, n[1] as f64);
            (n2 * v[1] - n1 * v[0]) / (n2 - n1)
        })
        .collect();
    let last = *extrap.last().expect("nonempty");
    if extrap.len() >= 3 {
        let k = extrap.len();
        let d_prev = (extrap[k - 2] - extrap[k - 3]).abs();
        let d_last = (extrap[k - 1] - extrap[k - 2]).abs();
        let floor = 1e-9 * (1.0 + last.abs());
        if d_last > floor && d_last > d_prev {
            return Err(Error::LimitEstimate(format!(
                "successive extrapolations move apart: {d_prev:e} then {d_last:e}"
            )));
        }
    }
    Ok(last)
}

pub fn limit_estimates(sys: &BoasBuckSystem, x: f64, n_grid: &[u64]) -> Result<LimitEstimates> {
    if n_grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument("every n in the grid must be >= 2".into()));
    }
    let mut a1 = Vec::with_capacity(n_grid.len());
    let mut a2 = Vec::with_capacity(n_grid.len());
    let mut b = Vec::with_capacity(n_grid.len());
    let mut m_bound = 0.0_f64;
    for &n in n_grid {
        let inp = MomentInputs::new(sys, n, x)?;
        let nf = n as f64;
        let [c2, c1, _] = inp.mu2_coefficients()?;
        a1.push(nf * (inp.r1 - 1.0));
        a2.push(nf * c2);
        b.push(nf * c1);
        if x > 0.0 {
            let (_, mu2) = inp.central()?;
            m_bound = m_bound.max(nf * mu2 / (x * (x + 1.0)));
        }
    }
    let ell1 = richardson_limit(n_grid, &a1)?;
    let ell2 = richardson_limit(n_grid, &a2)?;
    let x_coefficient_limit = richardson_limit(n_grid, &b)?;
    let u2 = sys.at_one().u.d2;
    Ok(LimitEstimates {
        x,
        ell1,
        ell2,
        eta1: ell2 * x * x + (2.0 + u2) * x,
        x_coefficient_limit,
        m_bound,
    })
}

/// `max n mu2(n, x) / (x (x + 1))` over `x > 0` in `x_grid` and all of `n_grid`.
pub fn m_bound(sys: &BoasBuckSystem, x_grid: &[f64], n_grid: &[u64]) -> Result<f64> {
    let mut best = 0.0_f64;
    for &n in n_grid {
        for &x in x_grid.iter().filter(|x| **x > 0.0) {
            let (_, mu2) = central_moments(sys, n, x)?;
            best = best.max(n as f64 * mu2 / (x * (x + 1.0)));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn exp1_closed_forms() {
        let sys = BoasBuckSystem::exp1();
        for &(n, x) in &[(2u64, 1.0), (7, 0.3), (50, 4.0)] {
            let nf = n as f64;
            let d = discrete_moments(&sys, n, x).unwrap();
            assert_eq!(d[0], 1.0);
            assert!(close(d[1], x, 1e-15));
            assert!(close(d[2], x * x + 2.0 * x / nf, 1e-14));
            let (mu1, mu2) = central_moments(&sys, n, x).unwrap();
            assert!(mu1.abs() < 1e-12);
            assert!(close(mu2, (x * x + 3.0 * x) / (nf - 1.0), 1e-12));
        }
        assert!(close(durrmeyer_moments(&sys, 2, 1.0).unwrap()[2], 5.0, 1e-14));
        assert_eq!(central_moments(&sys, 9, 0.0).unwrap().1, 0.0);
    }

    #[test]
    fn exp2_closed_forms() {
        let sys = BoasBuckSystem::exp2();
        let (n, x) = (8u64, 1.3);
        let nf = n as f64;
        let m = durrmeyer_moments(&sys, n, x).unwrap();
        assert!(close(m[1], x + 1.5 / nf, 1e-13));
        let d = discrete_moments(&sys, n, x).unwrap();
        assert!(close(d[2], x * x + 5.0 * x / nf + 4.75 / (nf * nf), 1e-13));
        let want = nf / (nf - 1.0) * x * x + 6.0 * x / (nf - 1.0) + 6.25 / (nf * (nf - 1.0));
        assert!(close(m[2], want, 1e-13));
        let printed = durrmeyer_moments_as_printed(&sys, n, x).unwrap();
        assert!(close(printed[2] - m[2], 0.75 / (nf * (nf - 1.0)), 1e-12));
    }

    #[test]
    fn central_matches_raw_algebra() {
        for sys in [BoasBuckSystem::exp1(), BoasBuckSystem::exp2()] {
            for n in [2u64, 3, 10, 100] {
                for x in [0.0, 0.2, 1.0, 7.5] {
                    let inp = MomentInputs::new(&sys, n, x).unwrap();
                    let m = inp.durrmeyer().unwrap();
                    let via = inp.durrmeyer_via_discrete().unwrap();
                    assert!(close(m[2], via[2], 1e-13));
                    let (mu1, mu2) = inp.central().unwrap();
                    assert!(close(mu1, m[1] - x, 1e-13));
                    assert!(close(mu2, m[2] - 2.0 * x * m[1] + x * x, 1e-12));
                }
            }
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        let sys = BoasBuckSystem::exp2();
        let cfg = OperatorConfig::new(OperatorKind::Durrmeyer, 12);
        let r = moment_report(&sys, &cfg, 2.0).unwrap();
        for k in 0..3 {
            assert!(r.durrmeyer_discrepancy[k] <= 1e-7 * (1.0 + r.durrmeyer[k].abs()));
            assert!(r.discrete_discrepancy[k] <= 1e-9 * (1.0 + r.discrete[k].abs()));
        }
    }

    #[test]
    fn szasz_closed_forms() {
        let sys = BoasBuckSystem::exp2();
        let (n, x) = (6u64, 0.8);
        let s = szasz_moments(&sys, n, x).unwrap();
        let cfg = OperatorConfig::new(OperatorKind::SzaszDurrmeyer, n);
        let v = apply_batch(&sys, &cfg, &[&|s| s, &|s| s * s], x).unwrap();
        assert!(close(v[0].value, s[1], 1e-9));
        assert!(close(v[1].value, s[2], 1e-9));
    }

    #[test]
    fn exp1_limits() {
        let sys = BoasBuckSystem::exp1();
        let grid = [10u64, 20, 40, 80, 160, 320, 640];
        for x in [0.5, 1.0, 3.0] {
            let l = limit_estimates(&sys, x, &grid).unwrap();
            assert!(l.ell1.abs() < 1e-12);
            // a + b/n leaves an O(1/n^2) residual from n/(n-1)
            assert!(close(l.ell2, 1.0, 1e-4));
            assert!(close(l.eta1, x * x + 3.0 * x, 1e-4));
            assert!(close(l.x_coefficient_limit, 3.0, 1e-4));
        }
        let (_, mu2) = central_moments(&sys, 640, 1.0).unwrap();
        assert!((640.0 * mu2 - 4.0).abs() / 4.0 < 2e-3);
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let m = m_bound(&sys, &xs, &[301, 320, 640]).unwrap();
        assert!(m <= 3.01);
    }

    #[test]
    fn printed_assumption_line_diverges() {
        // n [ n/(n-1) r2 - n r1 + 1 ] with r1 = r2 = 1
        let grid = [10u64, 20, 40, 80];
        let seq: Vec<f64> = grid
            .iter()
            .map(|&n| {
                let nf = n as f64;
                nf * (nf / (nf - 1.0) - nf + 1.0)
            })
            .collect();
        assert!(matches!(richardson_limit(&grid, &seq), Err(Error::LimitEstimate(_))));
    }

    #[test]
    fn n_below_two_is_rejected() {
        let sys = BoasBuckSystem::exp1();
        assert!(durrmeyer_moments(&sys, 1, 1.0).is_err());
        assert!(discrete_moments(&sys, 1, 1.0).is_ok());
    }
}
