//! Material functions, the regularized norm `f_ε` and the model parameter record.

use crate::error::{KwcError, Result};
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// The smoothed Euclidean norm `f_ε(y) = √(ε² + |y|²)` on ℝ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    eps: f64,
}

impl Regularizer {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(KwcError::UnsupportedParameter(format!(
                "regularization eps must be finite and >= 0, got {eps}"
            )));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn value(&self, y: [f64; 2]) -> f64 {
        (self.eps * self.eps + y[0] * y[0] + y[1] * y[1]).sqrt()
    }

    /// `y / f_ε(y)`; zero at `y = 0` (the minimal-norm element of the ε = 0 subdifferential).
    #[inline]
    pub fn gradient(&self, y: [f64; 2]) -> [f64; 2] {
        let f = self.value(y);
        if f == 0.0 {
            return [0.0, 0.0];
        }
        [y[0] / f, y[1] / f]
    }

    /// `(I − y⊗y / f²) / f`.
    pub fn hessian(&self, y: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        let f = self.value(y);
        if f == 0.0 {
            return Err(KwcError::SingularSubdifferential);
        }
        Ok(hessian_with_value(y, f))
    }
}

#[inline]
pub(crate) fn hessian_with_value(y: [f64; 2], f: f64) -> [[f64; 2]; 2] {
    let f2 = f * f;
    let inv = 1.0 / f;
    [
        [(1.0 - y[0] * y[0] / f2) * inv, -y[0] * y[1] / f2 * inv],
        [-y[0] * y[1] / f2 * inv, (1.0 - y[1] * y[1] / f2) * inv],
    ]
}

/// Membership of `s` in the set-valued sign of `y`. `y` counts as zero when
/// `|y| ≤ tol`, in which case any `|s| ≤ 1 + tol` is accepted.
pub fn sgn_membership(y: [f64; 2], s: [f64; 2], tol: f64) -> bool {
    let ny = (y[0] * y[0] + y[1] * y[1]).sqrt();
    if ny <= tol {
        (s[0] * s[0] + s[1] * s[1]).sqrt() <= 1.0 + tol
    } else {
        let d0 = s[0] - y[0] / ny;
        let d1 = s[1] - y[1] / ny;
        (d0 * d0 + d1 * d1).sqrt() <= tol
    }
}

/// Perturbation `g`, mobility `α` and time–space mobility `α₀`.
#[derive(Clone)]
pub struct MaterialFunctions {
    pub name: String,
    pub g: ScalarFn,
    pub g_prime: ScalarFn,
    /// Nonnegative primitive of `g`.
    pub big_g: ScalarFn,
    pub alpha: ScalarFn,
    pub alpha_prime: ScalarFn,
    pub alpha_double_prime: ScalarFn,
    pub alpha0: SpaceTimeFn,
    pub delta_star: f64,
    pub lip_g: f64,
    pub lip_alpha: f64,
}

impl fmt::Debug for MaterialFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaterialFunctions")
            .field("name", &self.name)
            .field("delta_star", &self.delta_star)
            .field("lip_g", &self.lip_g)
            .field("lip_alpha", &self.lip_alpha)
            .finish_non_exhaustive()
    }
}

pub const DEFAULT_PRESET: &str = "linear-g-sqrt-alpha";

impl MaterialFunctions {
    /// `g(s) = s`, `α(s) = δ* + c₁(√(1+s²) − 1)`, `α₀ ≡ 1`.
    pub fn linear_g_sqrt_alpha(delta_star: f64, c1: f64) -> Result<Self> {
        if !(delta_star.is_finite() && delta_star > 0.0) {
            return Err(KwcError::MaterialValidation {
                clause: "(A4)",
                detail: format!("delta_star must be > 0, got {delta_star}"),
            });
        }
        if !(c1.is_finite() && c1 >= 0.0) {
            return Err(KwcError::MaterialValidation {
                clause: "(A4)",
                detail: format!("c1 must be >= 0 for a convex mobility, got {c1}"),
            });
        }
        Ok(Self {
            name: DEFAULT_PRESET.to_string(),
            g: Arc::new(|s| s),
            g_prime: Arc::new(|_| 1.0),
            big_g: Arc::new(|s| 0.5 * s * s),
            alpha: Arc::new(move |s| delta_star + c1 * ((1.0 + s * s).sqrt() - 1.0)),
            alpha_prime: Arc::new(move |s| c1 * s / (1.0 + s * s).sqrt()),
            alpha_double_prime: Arc::new(move |s| c1 / (1.0 + s * s).powf(1.5)),
            alpha0: Arc::new(|_, _, _| 1.0),
            delta_star,
            lip_g: 1.0,
            lip_alpha: c1,
        })
    }

    /// Named preset with default constants (δ* = 0.1, c₁ = 1).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            DEFAULT_PRESET => Self::linear_g_sqrt_alpha(0.1, 1.0),
            "custom" => Err(KwcError::UnsupportedParameter(
                "the custom preset needs user closures; build it with MaterialFunctions::custom".into(),
            )),
            other => Err(KwcError::UnsupportedParameter(format!("unknown preset '{other}'"))),
        }
    }

    /// User-supplied material laws, validated by dense sampling.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        g: ScalarFn,
        g_prime: ScalarFn,
        big_g: ScalarFn,
        alpha: ScalarFn,
        alpha_prime: ScalarFn,
        alpha_double_prime: ScalarFn,
        alpha0: SpaceTimeFn,
        delta_star: f64,
        lip_g: f64,
        lip_alpha: f64,
    ) -> Result<Self> {
        let m = Self {
            name: "custom".to_string(),
            g,
            g_prime,
            big_g,
            alpha,
            alpha_prime,
            alpha_double_prime,
            alpha0,
            delta_star,
            lip_g,
            lip_alpha,
        };
        m.validate()?;
        Ok(m)
    }

    /// Samples the structural assumptions on `[−10, 10]` (10⁴ points) and
    /// `α₀` on `[0, 1]³`.
    pub fn validate(&self) -> Result<()> {
        const N: usize = 10_000;
        const H: f64 = 1e-5;
        let a3 = |detail: String| KwcError::MaterialValidation { clause: "(A3)", detail };
        let a4 = |detail: String| KwcError::MaterialValidation { clause: "(A4)", detail };
        if !(self.delta_star.is_finite() && self.delta_star > 0.0) {
            return Err(a4(format!("delta_star must be > 0, got {}", self.delta_star)));
        }
        if (self.alpha_prime)(0.0).abs() > 1e-12 {
            return Err(a4(format!("alpha'(0) = {} must vanish", (self.alpha_prime)(0.0))));
        }
        let fd_ok = |f: &ScalarFn, df: &ScalarFn, s: f64| {
            let d = (f(s + H) - f(s - H)) / (2.0 * H);
            (d - df(s)).abs() <= 1e-4 * (1.0 + df(s).abs())
        };
        let mut max_ap: f64 = 0.0;
        let mut lip_aap: f64 = 0.0;
        let mut max_app: f64 = 0.0;
        for k in 0..N {
            let s = -10.0 + 20.0 * k as f64 / (N - 1) as f64;
            let (a, ap, app) = ((self.alpha)(s), (self.alpha_prime)(s), (self.alpha_double_prime)(s));
            if !(a >= self.delta_star) {
                return Err(a4(format!("alpha({s}) = {a} < delta_star")));
            }
            if app < -1e-12 {
                return Err(a4(format!("alpha''({s}) = {app} < 0")));
            }
            if !fd_ok(&self.alpha, &self.alpha_prime, s) {
                return Err(a4(format!("alpha' inconsistent with alpha at {s}")));
            }
            if !fd_ok(&self.alpha_prime, &self.alpha_double_prime, s) {
                return Err(a4(format!("alpha'' inconsistent with alpha' at {s}")));
            }
            if ap.abs() > self.lip_alpha * (1.0 + 1e-9) + 1e-12 {
                return Err(a4(format!("|alpha'({s})| = {} exceeds Lip(alpha)", ap.abs())));
            }
            let bg = (self.big_g)(s);
            if bg < -1e-12 {
                return Err(a3(format!("G({s}) = {bg} < 0")));
            }
            if !fd_ok(&self.big_g, &self.g, s) {
                return Err(a3(format!("G is not a primitive of g at {s}")));
            }
            if !fd_ok(&self.g, &self.g_prime, s) {
                return Err(a3(format!("g' inconsistent with g at {s}")));
            }
            if (self.g_prime)(s).abs() > self.lip_g * (1.0 + 1e-9) + 1e-12 {
                return Err(a3(format!("|g'({s})| exceeds Lip(g)")));
            }
            max_ap = max_ap.max(ap.abs());
            lip_aap = lip_aap.max((ap * ap + a * app).abs());
            max_app = max_app.max(app.abs());
        }
        if max_app > (lip_aap + max_ap * max_ap) / self.delta_star * (1.0 + 1e-9) + 1e-12 {
            return Err(a4("alpha'' exceeds (Lip(alpha alpha') + |alpha'|^2)/delta_star".into()));
        }
        if !((self.g)(1e6) > 0.0 && (self.g)(-1e6) < 0.0) {
            return Err(a3("g must be coercive (g -> -inf at -inf, +inf at +inf)".into()));
        }
        for a in 0..10 {
            for b in 0..10 {
                for c in 0..10 {
                    let (t, x, y) = (a as f64 / 9.0, b as f64 / 9.0, c as f64 / 9.0);
                    let v = (self.alpha0)(t, x, y);
                    if !(v >= self.delta_star) {
                        return Err(a4(format!("alpha0({t},{x},{y}) = {v} < delta_star")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Model constants together with the material laws and cost weights.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub nu: f64,
    pub reg: Regularizer,
    pub materials: MaterialFunctions,
    pub m_eta: f64,
    pub m_theta: f64,
    pub m_u: f64,
    pub m_v: f64,
}

impl ModelParams {
    pub fn new(nu: f64, eps: f64, materials: MaterialFunctions) -> Result<Self> {
        let p = Self {
            nu,
            reg: Regularizer::new(eps)?,
            materials,
            m_eta: 1.0,
            m_theta: 1.0,
            m_u: 1.0,
            m_v: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default preset with `ν = 1`, all weights one.
    pub fn default_preset(eps: f64) -> Result<Self> {
        Self::new(1.0, eps, MaterialFunctions::preset(DEFAULT_PRESET)?)
    }

    pub fn with_weights(mut self, m_eta: f64, m_theta: f64, m_u: f64, m_v: f64) -> Result<Self> {
        self.m_eta = m_eta;
        self.m_theta = m_theta;
        self.m_u = m_u;
        self.m_v = m_v;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut p = self.clone();
        p.reg = Regularizer::new(eps)?;
        Ok(p)
    }

    pub fn eps(&self) -> f64 {
        self.reg.eps()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(KwcError::UnsupportedParameter(format!("nu must be > 0, got {}", self.nu)));
        }
        for (name, w) in [
            ("m_eta", self.m_eta),
            ("m_theta", self.m_theta),
            ("m_u", self.m_u),
            ("m_v", self.m_v),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(KwcError::UnsupportedParameter(format!(
                    "{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Solvers need a smooth regularizer.
    pub(crate) fn require_positive_eps(&self) -> Result<()> {
        if self.eps() > 0.0 {
            Ok(())
        } else {
            Err(KwcError::UnsupportedParameter(
                "eps must be > 0 for the state and adjoint solvers".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(v: [f64; 2]) -> f64 {
        (v[0] * v[0] + v[1] * v[1]).sqrt()
    }

    #[test]
    fn f_eps_closed_forms() {
        let r = Regularizer::new(1.0).unwrap();
        assert_eq!(r.value([0.0, 0.0]), 1.0);
        assert_eq!(r.gradient([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(r.hessian([0.0, 0.0]).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        let r0 = Regularizer::new(0.0).unwrap();
        assert_eq!(r0.value([3.0, 4.0]), 5.0);
        let g = r0.gradient([3.0, 4.0]);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        assert_eq!(r0.hessian([0.0, 0.0]), Err(KwcError::SingularSubdifferential));
        assert!(r0.hessian([1.0, 0.0]).is_ok());
        assert!(Regularizer::new(-1.0).is_err());
        assert!(Regularizer::new(f64::NAN).is_err());
    }

    #[test]
    fn hessian_eigenvalues_lie_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let eps = rng.gen_range(0.01..2.0);
            let r = Regularizer::new(eps).unwrap();
            let y = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let h = r.hessian(y).unwrap();
            assert_eq!(h[0][1], h[1][0]);
            let tr = h[0][0] + h[1][1];
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            let (lmin, lmax) = (tr / 2.0 - disc, tr / 2.0 + disc);
            let f = r.value(y);
            assert!(lmin >= eps * eps / f.powi(3) * (1.0 - 1e-10) - 1e-14);
            assert!(lmax <= 1.0 / f * (1.0 + 1e-10));
        }
    }

    #[test]
    fn pointwise_eps_limit_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e0 = Regularizer::new(0.0).unwrap();
        for _ in 0..1000 {
            let e = rng.gen_range(0.0..1.0);
            let y = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let r = Regularizer::new(e).unwrap();
            assert!((r.value(y) - e0.value(y)).abs() <= e + 1e-15);
        }
    }

    #[test]
    fn sgn_membership_cases() {
        assert!(sgn_membership([0.0, 0.0], [0.3, -0.4], 1e-9));
        assert!(sgn_membership([1.0, 0.0], [1.0, 0.0], 1e-9));
        assert!(!sgn_membership([1.0, 0.0], [0.0, 1.0], 1e-6));
        assert!(!sgn_membership([0.0, 0.0], [1.0, 1.0], 1e-6));
        let r = Regularizer::new(1e-4).unwrap();
        let y = [0.3, -0.2];
        assert!(sgn_membership(y, r.gradient(y), 1e-6));
        assert!(norm(r.gradient(y)) <= 1.0);
    }

    #[test]
    fn default_preset_values() {
        let m = MaterialFunctions::preset(DEFAULT_PRESET).unwrap();
        assert!(((m.alpha)(0.0) - 0.1).abs() < 1e-15);
        assert_eq!((m.alpha_prime)(0.0), 0.0);
        assert_eq!((m.g)(2.0), 2.0);
        assert_eq!((m.big_g)(2.0), 2.0);
        m.validate().unwrap();
        assert!(MaterialFunctions::preset("double-well").is_err());
        assert!(MaterialFunctions::preset("custom").is_err());
    }

    #[test]
    fn alpha_second_derivative_matches_finite_differences() {
        let m = MaterialFunctions::preset(DEFAULT_PRESET).unwrap();
        let h = 1e-4;
        for k in 0..1000 {
            let s = -10.0 + 20.0 * k as f64 / 999.0;
            let app = (m.alpha_double_prime)(s);
            let closed = (1.0 + s * s).powf(-1.5);
            assert!((app - closed).abs() < 1e-14);
            assert!(app >= 0.0);
            let fd = ((m.alpha_prime)(s + h) - (m.alpha_prime)(s - h)) / (2.0 * h);
            assert!((fd - app).abs() < 1e-6);
            let fd1 = ((m.alpha)(s + h) - (m.alpha)(s - h)) / (2.0 * h);
            assert!((fd1 - (m.alpha_prime)(s)).abs() < 1e-6);
        }
    }

    #[test]
    fn custom_validation_names_the_violated_clause() {
        let base = MaterialFunctions::preset(DEFAULT_PRESET).unwrap();
        // alpha'(0) != 0
        let err = MaterialFunctions::custom(
            base.g.clone(),
            base.g_prime.clone(),
            base.big_g.clone(),
            Arc::new(|s| 1.0 + 0.1 * s * s + 0.01 * s),
            Arc::new(|s| 0.2 * s + 0.01),
            Arc::new(|_| 0.2),
            base.alpha0.clone(),
            0.1,
            1.0,
            10.0,
        )
        .unwrap_err();
        assert!(matches!(err, KwcError::MaterialValidation { clause: "(A4)", .. }));
        // G negative
        let err = MaterialFunctions::custom(
            base.g.clone(),
            base.g_prime.clone(),
            Arc::new(|s| 0.5 * s * s - 1.0),
            base.alpha.clone(),
            base.alpha_prime.clone(),
            base.alpha_double_prime.clone(),
            base.alpha0.clone(),
            0.1,
            1.0,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, KwcError::MaterialValidation { clause: "(A3)", .. }));
        // alpha0 below delta_star
        let err = MaterialFunctions::custom(
            base.g.clone(),
            base.g_prime.clone(),
            base.big_g.clone(),
            base.alpha.clone(),
            base.alpha_prime.clone(),
            base.alpha_double_prime.clone(),
            Arc::new(|t, _, _| 0.05 + t),
            0.1,
            1.0,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, KwcError::MaterialValidation { clause: "(A4)", .. }));
        // a valid custom law
        let ok = MaterialFunctions::custom(
            Arc::new(|s| 2.0 * s),
            Arc::new(|_| 2.0),
            Arc::new(|s| s * s),
            base.alpha.clone(),
            base.alpha_prime.clone(),
            base.alpha_double_prime.clone(),
            Arc::new(|t, _, _| 1.0 + 0.5 * t),
            0.1,
            2.0,
            1.0,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn params_validation() {
        let m = MaterialFunctions::preset(DEFAULT_PRESET).unwrap();
        assert!(ModelParams::new(0.0, 0.5, m.clone()).is_err());
        let p = ModelParams::new(1.0, 0.5, m).unwrap();
        assert!(p.clone().with_weights(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(p.with_eps(0.0).unwrap().require_positive_eps().is_err());
    }
}
