//! Test functions addressable by id from the CLI and experiment specs.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::smoothness::{Piece, PieceKind, PiecewiseFunction};

/// Right end of the built-in piecewise descriptors.
const DESCRIPTOR_END: f64 = 1e6;

#[derive(Clone)]
pub struct TestFunction {
    id: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    kinks: Vec<f64>,
    piecewise: Option<PiecewiseFunction>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

pub const BUILTIN_IDS: &[&str] = &["one", "s", "s2", "s3", "sqrt", "exp_neg", "abs_s_minus_1"];

fn poly(lo: f64, hi: f64, coeffs: Vec<f64>) -> Piece {
    Piece {
        lo,
        hi,
        kind: PieceKind::Poly,
        coeffs,
    }
}

impl TestFunction {
    pub fn new<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            f: Arc::new(f),
            kinks: Vec::new(),
            piecewise: None,
        }
    }

    fn polynomial(id: &str, coeffs: Vec<f64>) -> Self {
        let pf = PiecewiseFunction::new(vec![poly(0.0, DESCRIPTOR_END, coeffs.clone())]).expect("single piece");
        let mut t = Self::new(id, move |s| coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c));
        t.piecewise = Some(pf);
        t
    }

    pub fn from_piecewise(id: impl Into<String>, pf: PiecewiseFunction) -> Self {
        let kinks: Vec<f64> = pf.pieces().iter().skip(1).map(|p| p.lo).collect();
        let eval = pf.clone();
        Self {
            id: id.into(),
            f: Arc::new(move |s| eval.eval(s)),
            kinks,
            piecewise: Some(pf),
        }
    }

    /// Resolves a built-in id, or `piecewise:<path>` for a JSON descriptor.
    pub fn lookup(id: &str) -> Result<Self> {
        if let Some(path) = id.strip_prefix("piecewise:") {
            return Ok(Self::from_piecewise(id, PiecewiseFunction::load(path)?));
        }
        Ok(match id {
            "one" => Self::polynomial(id, vec![1.0]),
            "s" => Self::polynomial(id, vec![0.0, 1.0]),
            "s2" => Self::polynomial(id, vec![0.0, 0.0, 1.0]),
            "s3" => Self::polynomial(id, vec![0.0, 0.0, 0.0, 1.0]),
            "sqrt" => Self::new(id, |s: f64| s.max(0.0).sqrt()),
            "exp_neg" => Self::new(id, |s: f64| (-s).exp()),
            "abs_s_minus_1" => {
                let pf = PiecewiseFunction::new(vec![
                    poly(0.0, 1.0, vec![1.0, -1.0]),
                    poly(1.0, DESCRIPTOR_END, vec![-1.0, 1.0]),
                ])
                .expect("continuous at 1");
                let mut t = Self::from_piecewise(id, pf);
                t.f = Arc::new(|s: f64| (s - 1.0).abs());
                t
            }
            other => return Err(Error::UnknownFunction(other.to_string())),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    pub fn as_fn(&self) -> &(dyn Fn(f64) -> f64 + Send + Sync) {
        &*self.f
    }

    /// Points where the function is not smooth.
    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn piecewise(&self) -> Option<&PiecewiseFunction> {
        self.piecewise.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve() {
        for id in BUILTIN_IDS {
            let f = TestFunction::lookup(id).unwrap();
            assert!(f.eval(2.0).is_finite());
        }
        assert_eq!(TestFunction::lookup("s3").unwrap().eval(2.0), 8.0);
        assert_eq!(TestFunction::lookup("abs_s_minus_1").unwrap().kinks(), &[1.0]);
        assert!(matches!(TestFunction::lookup("nope"), Err(Error::UnknownFunction(_))));
    }

    #[test]
    fn descriptor_matches_closure() {
        let f = TestFunction::lookup("abs_s_minus_1").unwrap();
        let pf = f.piecewise().unwrap();
        for k in 0..50 {
            let s = k as f64 * 0.1;
            assert!((pf.eval(s) - f.eval(s)).abs() < 1e-15);
        }
    }

    #[test]
    fn piecewise_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hat.json");
        std::fs::write(
            &path,
            r#"[{"lo":0,"hi":2,"kind":"poly","coeffs":[0,1]},{"lo":2,"hi":10,"kind":"poly","coeffs":[4,-1]}]"#,
        )
        .unwrap();
        let f = TestFunction::lookup(&format!("piecewise:{}", path.display())).unwrap();
        assert_eq!(f.eval(3.0), 1.0);
        assert_eq!(f.kinks(), &[2.0]);
    }
}
