//! Model parameters and the diffusion nonlinearity.
//!
//! The diffusivity is the family `D(s) = d0 + delta * (s + eps)^(m - 1)`.
//! With `d0 = eps = 0` it is the pure porous-medium law and degenerates at
//! `s = 0`; `d0 > 0` or `eps > 0` makes it strictly positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub delta: f64,
    pub m: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub epsilon: f64,
}

impl DiffusionSpec {
    pub fn new(delta: f64, m: f64, offset: f64, epsilon: f64) -> Result<Self> {
        let spec = Self {
            delta,
            m,
            offset,
            epsilon,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Pure power law `delta * s^(m-1)`.
    pub fn power_law(delta: f64, m: f64) -> Result<Self> {
        Self::new(delta, m, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta, self.m, self.offset, self.epsilon]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("diffusion parameters must be finite".into()));
        }
        if self.delta <= 0.0 {
            return Err(Error::Domain(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.m < 1.0 {
            return Err(Error::Domain(format!("m must be >= 1, got {}", self.m)));
        }
        if self.offset < 0.0 {
            return Err(Error::Domain(format!("offset must be >= 0, got {}", self.offset)));
        }
        if self.epsilon < 0.0 {
            return Err(Error::Domain(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Evaluates `D(s)`. Rejects negative arguments.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("diffusivity evaluated at s = {s}")));
        }
        Ok(self.eval_unchecked(s))
    }

    /// `D(s)` without the sign check; callers guarantee `s >= 0`.
    #[inline]
    pub fn eval_unchecked(&self, s: f64) -> f64 {
        let x = s + self.epsilon;
        let e = self.m - 1.0;
        let pow = if e == 0.0 {
            1.0
        } else if e == 1.0 {
            x
        } else if e == 0.5 {
            x.sqrt()
        } else {
            x.powf(e)
        };
        self.offset + self.delta * pow
    }

    /// `D(0) > 0`.
    pub fn is_nondegenerate(&self) -> bool {
        self.eval_unchecked(0.0) > 0.0
    }

    /// Returns the shifted diffusivity `D_eps(s) = D(s + eps)` of the
    /// unshifted law. Any previous shift is replaced.
    pub fn regularize(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("regularization eps must be > 0, got {eps}")));
        }
        Ok(Self {
            epsilon: eps,
            ..*self
        })
    }
}

/// Convenience wrapper matching [`DiffusionSpec::eval`].
pub fn eval_diffusion(spec: &DiffusionSpec, s: f64) -> Result<f64> {
    spec.eval(s)
}

pub fn regularize(spec: &DiffusionSpec, eps: f64) -> Result<DiffusionSpec> {
    spec.regularize(eps)
}

/// Taxis sensitivities and logistic rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub chi: f64,
    pub xi: f64,
    pub mu: f64,
}

impl ModelParams {
    pub fn new(chi: f64, xi: f64, mu: f64) -> Result<Self> {
        let p = Self { chi, xi, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("chi", self.chi), ("xi", self.xi), ("mu", self.mu)] {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub within_theorem: bool,
    pub threshold: f64,
    pub margin: f64,
}

/// Checks `m > 2 - 2/n` for the analysis dimension `n` (not the grid
/// dimension; desk-scale grids are 1D/2D).
pub fn validate_regime(spec: &DiffusionSpec, n: u32) -> RegimeVerdict {
    let threshold = 2.0 - 2.0 / f64::from(n.max(1));
    let margin = spec.m - threshold;
    RegimeVerdict {
        within_theorem: margin > 0.0,
        threshold,
        margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        let lin = DiffusionSpec::new(1.0, 2.0, 0.0, 0.0).unwrap();
        assert_eq!(lin.eval(3.0).unwrap(), 3.0);
        let shifted = DiffusionSpec::new(1.0, 2.0, 0.0, 0.1).unwrap();
        assert!((shifted.eval(0.0).unwrap() - 0.1).abs() < 1e-15);
        let sqrt = DiffusionSpec::new(2.0, 1.5, 0.0, 0.0).unwrap();
        assert!((sqrt.eval(4.0).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn eval_rejects_negative_argument() {
        let spec = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        assert!(matches!(spec.eval(-1e-3), Err(Error::Domain(_))));
        assert!(spec.eval(f64::NAN).is_err());
    }

    #[test]
    fn m_equal_one_is_constant() {
        let spec = DiffusionSpec::power_law(1.0, 1.0).unwrap();
        assert_eq!(spec.eval(0.0).unwrap(), 1.0);
        assert_eq!(spec.eval(17.0).unwrap(), 1.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DiffusionSpec::new(0.0, 2.0, 0.0, 0.0).is_err());
        assert!(DiffusionSpec::new(1.0, 0.5, 0.0, 0.0).is_err());
        assert!(DiffusionSpec::new(1.0, 2.0, -1.0, 0.0).is_err());
        assert!(DiffusionSpec::new(1.0, 2.0, 0.0, -0.1).is_err());
        assert!(ModelParams::new(-1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn regularize_examples() {
        let base = DiffusionSpec::power_law(1.0, 2.0).unwrap();
        let r = base.regularize(0.5).unwrap();
        assert_eq!(r.epsilon, 0.5);
        assert_eq!(r.delta, base.delta);
        assert_eq!(r.eval(0.0).unwrap(), 0.5);

        let cubic = DiffusionSpec::power_law(1.0, 3.0).unwrap();
        let r = cubic.regularize(0.1).unwrap();
        assert!((r.eval(0.0).unwrap() - 0.01).abs() < 1e-15);

        assert!(base.regularize(0.0).is_err());
        assert!(base.regularize(-1.0).is_err());
    }

    #[test]
    fn regularized_dominates_original_on_grid() {
        let base = DiffusionSpec::new(0.7, 2.5, 0.1, 0.0).unwrap();
        let r = base.regularize(1e-4).unwrap();
        let mut prev = r.eval(0.0).unwrap();
        for k in 0..=2000 {
            let s = k as f64 * 0.005;
            let a = r.eval(s).unwrap();
            assert!(a >= base.eval(s).unwrap());
            // small steps in s give small steps in D_eps
            assert!((a - prev).abs() < 5e-2);
            prev = a;
        }
    }

    #[test]
    fn regime_examples() {
        let v = validate_regime(&DiffusionSpec::power_law(1.0, 1.5).unwrap(), 2);
        assert!(v.within_theorem);
        assert!((v.margin - 0.5).abs() < 1e-15);
        assert_eq!(v.threshold, 1.0);

        let v = validate_regime(&DiffusionSpec::power_law(1.0, 4.0 / 3.0).unwrap(), 3);
        assert!(!v.within_theorem);
        assert!(v.margin.abs() < 1e-15);

        let v = validate_regime(&DiffusionSpec::power_law(1.0, 1.0).unwrap(), 2);
        assert!(!v.within_theorem);
    }

    proptest! {
        #[test]
        fn dominates_power_law(delta in 0.01f64..10.0, m in 1.0f64..4.0,
                               d0 in 0.0f64..2.0, eps in 0.0f64..1.0, s in 0.0f64..1e3) {
            let spec = DiffusionSpec::new(delta, m, d0, eps).unwrap();
            let d = spec.eval(s).unwrap();
            prop_assert!(d >= delta * s.powf(m - 1.0) * (1.0 - 1e-14));
            if eps > 0.0 {
                prop_assert!(spec.eval(0.0).unwrap() >= delta * eps.powf(m - 1.0) * (1.0 - 1e-14));
            }
        }

        #[test]
        fn regularize_is_shift(delta in 0.01f64..10.0, m in 1.0f64..4.0, d0 in 0.0f64..2.0,
                               eps in 1e-6f64..1.0, s in 0.0f64..1e3) {
            let base = DiffusionSpec::new(delta, m, d0, 0.0).unwrap();
            let r = base.regularize(eps).unwrap();
            prop_assert_eq!(r.eval(s).unwrap(), base.eval(s + eps).unwrap());
        }

        #[test]
        fn diffusion_is_monotone(delta in 0.01f64..10.0, m in 1.0f64..4.0, d0 in 0.0f64..2.0,
                                 eps in 0.0f64..1.0, a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let spec = DiffusionSpec::new(delta, m, d0, eps).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(spec.eval(lo).unwrap() <= spec.eval(hi).unwrap());
        }

        #[test]
        fn regime_monotone_in_m(m1 in 1.0f64..3.0, dm in 0.0f64..2.0, n in 2u32..5) {
            let a = validate_regime(&DiffusionSpec::power_law(1.0, m1).unwrap(), n);
            let b = validate_regime(&DiffusionSpec::power_law(1.0, m1 + dm).unwrap(), n);
            if a.within_theorem {
                prop_assert!(b.within_theorem);
            }
            prop_assert_eq!(a.within_theorem, a.margin > 0.0);
        }
    }
}
