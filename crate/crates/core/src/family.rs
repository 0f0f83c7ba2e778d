//! The objective family `f(x, y) = F(xy)` and its closed-form derivatives.
//!
//! Two branches share the same global minima (`xy = 1`) and the same
//! sharpness `x^2 + y^2` at every minimizer:
//!
//! * good regularity, `0 < a <= 1`:
//!   `F(s) = C_a (log(1+e^{s-1}) + log(1+e^{1-s}))^a`,
//!   `C_a = 1 / (a 2^{a-2} log^{a-1} 2)`, growth exponent `a`;
//! * bad regularity, odd `b >= 1`:
//!   `F(s) = (1 - s^b)^2 / (2 b^2)`, growth exponent `2b`.
//!
//! A third member perturbs the `a = 1` profile with three Gaussian bumps,
//! leaving both the growth at infinity and the local behaviour at the
//! minimum unchanged while degrading the regularity in between.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const LOG2: f64 = std::f64::consts::LN_2;

/// Gaussian bumps added by the perturbed member: (height, width, center).
const BUMPS: [(f64, f64, f64); 3] = [(1.0, 10.0, 2.0), (2.0, 100.0, 1.5), (5.0, 100.0, 0.5)];

#[derive(Debug, Error, PartialEq)]
pub enum FamilyError {
    #[error("regularity exponent a must satisfy 0 < a <= 1, got {0}")]
    BadExponentA(f64),
    #[error("polynomial degree b must be a positive odd integer, got {0}")]
    BadExponentB(u32),
    #[error("coordinate must be finite, got {0}")]
    NonFinite(f64),
    #[error("curvature constants c1/c2 are defined for the good-regularity branch only")]
    CurvatureUndefined,
    #[error("point ({0}, {1}) is not a minimizer")]
    NotAMinimizer(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    /// `0 < a <= 1`.
    Good { a: f64 },
    /// Odd `b >= 1`.
    Bad { b: u32 },
    /// Bump-perturbed `a = 1` profile.
    Perturbed,
}

/// One member of the objective family, with its normalization constant and
/// the location/value of its minima resolved at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    kind: Kind,
    norm_const: f64,
    /// Products `s` at which `F` has a local minimum, ascending.
    min_products: Vec<f64>,
    /// Global minimum value of `F`; losses are reported relative to it.
    min_value: f64,
}

impl ObjectiveSpec {
    pub fn good(a: f64) -> Result<Self, FamilyError> {
        if !(a > 0.0 && a <= 1.0) || !a.is_finite() {
            return Err(FamilyError::BadExponentA(a));
        }
        let norm_const = 1.0 / (a * 2f64.powf(a - 2.0) * LOG2.powf(a - 1.0));
        // F(1) = C_a (2 log 2)^a = 4 log(2) / a.
        let min_value = 4.0 * LOG2 / a;
        Ok(Self { kind: Kind::Good { a }, norm_const, min_products: vec![1.0], min_value })
    }

    pub fn bad(b: u32) -> Result<Self, FamilyError> {
        if b == 0 || b.is_multiple_of(2) {
            return Err(FamilyError::BadExponentB(b));
        }
        let norm_const = 1.0 / (2.0 * (b as f64) * (b as f64));
        Ok(Self { kind: Kind::Bad { b }, norm_const, min_products: vec![1.0], min_value: 0.0 })
    }

    pub fn perturbed() -> Self {
        let base = Self::good(1.0).expect("a = 1 is valid");
        let mut spec = Self {
            kind: Kind::Perturbed,
            norm_const: base.norm_const,
            min_products: Vec::new(),
            min_value: 0.0,
        };
        spec.min_products = spec.locate_minima();
        spec.min_value =
            spec.min_products.iter().map(|&s| spec.eval_f(s)).fold(f64::INFINITY, f64::min);
        spec
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Growth exponent of `|F|` at infinity: `a` or `2b` (1 for the
    /// perturbed member, whose tails match `a = 1`).
    pub fn degree_of_regularity(&self) -> f64 {
        match self.kind {
            Kind::Good { a } => a,
            Kind::Bad { b } => 2.0 * b as f64,
            Kind::Perturbed => 1.0,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// Products `s` at which `f` has minima (`xy = s`); `[1]` except for
    /// the perturbed member, whose bumps both shift the global minimum off
    /// `s = 1` slightly and carve extra local minima.
    pub fn min_products(&self) -> &[f64] {
        &self.min_products
    }

    /// Distance from the product `xy = s` to the nearest minimizer product.
    pub fn dist_to_minimizer(&self, s: f64) -> f64 {
        self.min_products.iter().map(|m| (s - m).abs()).fold(f64::INFINITY, f64::min)
    }

    /// `F(s)`.
    pub fn eval_f(&self, s: f64) -> f64 {
        match self.kind {
            Kind::Good { a } => self.norm_const * profile(s).powf(a),
            Kind::Bad { b } => {
                let t = 1.0 - s.powi(b as i32);
                self.norm_const * t * t
            }
            Kind::Perturbed => {
                let base = self.norm_const * profile(s);
                base + BUMPS.iter().map(|&(c, w, m)| c * (-w * (s - m) * (s - m)).exp()).sum::<f64>()
            }
        }
    }

    /// `F(s) - min F`.
    pub fn eval_loss(&self, s: f64) -> f64 {
        self.eval_f(s) - self.min_value
    }

    /// `F'(s)`.
    pub fn eval_df(&self, s: f64) -> f64 {
        match self.kind {
            Kind::Good { a } => {
                self.norm_const * a * profile(s).powf(a - 1.0) * ((s - 1.0) / 2.0).tanh()
            }
            Kind::Bad { b } => {
                let bf = b as f64;
                s.powi(b as i32 - 1) * (s.powi(b as i32) - 1.0) / bf
            }
            Kind::Perturbed => {
                let base = self.norm_const * ((s - 1.0) / 2.0).tanh();
                base + BUMPS
                    .iter()
                    .map(|&(c, w, m)| -2.0 * c * w * (s - m) * (-w * (s - m) * (s - m)).exp())
                    .sum::<f64>()
            }
        }
    }

    /// `F''(s)`.
    pub fn eval_ddf(&self, s: f64) -> f64 {
        match self.kind {
            Kind::Good { a } => {
                let g = profile(s);
                let t = ((s - 1.0) / 2.0).tanh();
                let gpp = 0.5 * (1.0 - t * t);
                self.norm_const * a * g.powf(a - 2.0) * ((a - 1.0) * t * t + g * gpp)
            }
            Kind::Bad { b } => {
                let bf = b as f64;
                let i = b as i32;
                (bf - 1.0) * s.powi(i - 2) * (s.powi(i) - 1.0) / bf + s.powi(2 * i - 2)
            }
            Kind::Perturbed => {
                let t = ((s - 1.0) / 2.0).tanh();
                let base = self.norm_const * 0.5 * (1.0 - t * t);
                base + BUMPS
                    .iter()
                    .map(|&(c, w, m)| {
                        let d = s - m;
                        2.0 * c * w * (2.0 * w * d * d - 1.0) * (-w * d * d).exp()
                    })
                    .sum::<f64>()
            }
        }
    }

    /// Gradient of `f(x, y) = F(xy)`: `(F'(xy) y, F'(xy) x)`.
    pub fn eval_grad(&self, p: Point2D) -> (f64, f64) {
        let l = self.eval_df(p.x * p.y);
        (l * p.y, l * p.x)
    }

    /// Full 2x2 Hessian summary of `f` at `p`.
    ///
    /// `H = [[F'' y^2, F'' xy + F'], [F'' xy + F', F'' x^2]]`, so
    /// `tr H = F''(xy)(x^2 + y^2)` and `det H = -2 F'' F' xy - F'^2`.
    pub fn eval_hessian(&self, p: Point2D) -> HessianSummary {
        let s = p.x * p.y;
        let fp = self.eval_df(s);
        let fpp = self.eval_ddf(s);
        let trace = fpp * (p.x * p.x + p.y * p.y);
        let determinant = -2.0 * fpp * fp * s - fp * fp;
        // Symmetric 2x2: discriminant (l1 - l2)^2 >= 0; clamp rounding.
        let disc = (trace * trace - 4.0 * determinant).max(0.0).sqrt();
        let lo = 0.5 * (trace - disc);
        let hi = 0.5 * (trace + disc);
        HessianSummary {
            trace,
            determinant,
            eig_max_magnitude: lo.abs().max(hi.abs()),
            eig_min: lo,
        }
    }

    /// Largest Hessian eigenvalue magnitude at `p`.
    pub fn sharpness(&self, p: Point2D) -> f64 {
        self.eval_hessian(p).eig_max_magnitude
    }

    /// `l(d) = F'(1 + d)`.
    pub fn ell(&self, delta: f64) -> f64 {
        self.eval_df(delta + 1.0)
    }

    /// `q(d) = l(d) / d`, with the removable singularity `q(0) = 1`.
    ///
    /// Near zero a quadratic (good) / linear (bad) Taylor branch avoids the
    /// 0/0 evaluation: `q = 1 - c1 d^2` and `q = 1 + 3(b-1)/2 d` respectively.
    pub fn q(&self, delta: f64) -> f64 {
        if delta == 0.0 {
            return 1.0;
        }
        if delta.abs() < 1e-6 {
            match self.kind {
                Kind::Good { a } => return 1.0 - c1_constant(a) * delta * delta,
                Kind::Bad { b } => return 1.0 + 1.5 * (b as f64 - 1.0) * delta,
                Kind::Perturbed => {}
            }
        }
        self.ell(delta) / delta
    }

    /// `L(d) = l(d) (d + 1 - l(d))`.
    pub fn l_cap(&self, delta: f64) -> f64 {
        let l = self.ell(delta);
        l * (delta + 1.0 - l)
    }

    /// `c1`, `c2` and the degree of regularity (good branch only).
    pub fn regularity_constants(&self) -> Result<RegularityConstants, FamilyError> {
        match self.kind {
            Kind::Good { a } => Ok(RegularityConstants {
                c1: c1_constant(a),
                c2: c2_constant(a),
                dor: a,
            }),
            _ => Err(FamilyError::CurvatureUndefined),
        }
    }

    /// Scan for local minima of `F` (sign changes of `F'` with `F'' > 0`),
    /// polished by bisection. The family grows on both tails, so minima of
    /// every member lie well inside the scanned range.
    fn locate_minima(&self) -> Vec<f64> {
        let (lo, hi, n) = (-2.0, 4.0, 60_000);
        let step = (hi - lo) / n as f64;
        let mut roots = Vec::new();
        let mut prev_s = lo;
        let mut prev = self.eval_df(prev_s);
        for i in 1..=n {
            let s = lo + i as f64 * step;
            let cur = self.eval_df(s);
            if prev < 0.0 && cur >= 0.0 {
                let root = bisect(|t| self.eval_df(t), prev_s, s, 1e-14);
                if self.eval_ddf(root) > 0.0 {
                    roots.push(root);
                }
            }
            prev_s = s;
            prev = cur;
        }
        roots
    }
}

/// `g(s) = softplus(s - 1) + softplus(1 - s)`, the `a = 1` profile up to
/// a factor of 2. Always `>= 2 log 2`.
fn profile(s: f64) -> f64 {
    softplus(s - 1.0) + softplus(1.0 - s)
}

/// `log(1 + e^x)` as `max(x, 0) + log1p(e^{-|x|})`; no overflow for any
/// finite `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `p(s) = 1 + s + ... + s^{b-1}`, the factor in `1 - s^b = (1 - s) p(s)`.
pub fn p_poly(b: u32, s: f64) -> f64 {
    let mut acc = 0.0;
    let mut pw = 1.0;
    for _ in 0..b {
        acc += pw;
        pw *= s;
    }
    acc
}

/// `c1(a) = (3 - 3a + 2 log 2) / (24 log 2)`: `1 - c1 d^2 <= q(d) <= 1`.
pub fn c1_constant(a: f64) -> f64 {
    -(-3.0 + 3.0 * a - 2.0 * LOG2) / (24.0 * LOG2)
}

/// `c2(a) = (3 - 3a + 2 log 2) / (30 log 2)`: `q(d) <= 1 - c2 d^2` for `|d| <= 1`.
pub fn c2_constant(a: f64) -> f64 {
    -(-3.0 + 3.0 * a - 2.0 * LOG2) / (30.0 * LOG2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularityConstants {
    pub c1: f64,
    pub c2: f64,
    pub dor: f64,
}

/// A finite point in the `(x, y)` plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Result<Self, FamilyError> {
        if !x.is_finite() {
            return Err(FamilyError::NonFinite(x));
        }
        if !y.is_finite() {
            return Err(FamilyError::NonFinite(y));
        }
        Ok(Self { x, y })
    }

    pub fn product(&self) -> f64 {
        self.x * self.y
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

/// Trace, determinant and eigenvalue summary of a symmetric 2x2 Hessian.
/// `eig_max_magnitude` is the sharpness; `eig_min` the algebraically
/// smaller root of `l^2 - tr l + det = 0`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HessianSummary {
    pub trace: f64,
    pub determinant: f64,
    pub eig_max_magnitude: f64,
    pub eig_min: f64,
}

/// Degree-of-regularity table for loss/activation compositions.
pub mod compose {
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum LossKind {
        L2,
        Huber,
    }

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum ActivationKind {
        Tanh,
        Relu,
        LeakyRelu,
        ReluK(u32),
    }

    pub fn dor_loss(loss: LossKind) -> f64 {
        match loss {
            LossKind::L2 => 2.0,
            LossKind::Huber => 1.0,
        }
    }

    pub fn dor_activation(activation: ActivationKind, batch_norm: bool) -> f64 {
        if batch_norm {
            // Standardized pre-activations are bounded with high
            // probability, so the effective activation growth is flat.
            return 0.0;
        }
        match activation {
            ActivationKind::Tanh => 0.0,
            ActivationKind::Relu | ActivationKind::LeakyRelu => 1.0,
            ActivationKind::ReluK(k) => k as f64,
        }
    }

    /// `dor(F) = dor(L) * dor(sigma)` for the composed training objective.
    pub fn dor_compose(loss: LossKind, activation: ActivationKind, batch_norm: bool) -> f64 {
        dor_loss(loss) * dor_activation(activation, batch_norm)
    }
}

/// Monotone bisection on `[lo, hi]`; assumes a sign change.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if (fmid >= 0.0) == (flo >= 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// Wire format: {"kind": "good"|"bad"|"perturbed", "a": ..., "b": ...}.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecWire {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<u32>,
}

impl Serialize for ObjectiveSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = match self.kind {
            Kind::Good { a } => SpecWire { kind: "good".into(), a: Some(a), b: None },
            Kind::Bad { b } => SpecWire { kind: "bad".into(), a: None, b: Some(b) },
            Kind::Perturbed => SpecWire { kind: "perturbed".into(), a: None, b: None },
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ObjectiveSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = SpecWire::deserialize(deserializer)?;
        match wire.kind.as_str() {
            "good" => {
                let a = wire.a.ok_or_else(|| D::Error::custom("kind \"good\" requires \"a\""))?;
                ObjectiveSpec::good(a).map_err(D::Error::custom)
            }
            "bad" => {
                let b = wire.b.ok_or_else(|| D::Error::custom("kind \"bad\" requires \"b\""))?;
                ObjectiveSpec::bad(b).map_err(D::Error::custom)
            }
            "perturbed" => {
                if wire.a.is_some() || wire.b.is_some() {
                    return Err(D::Error::custom("kind \"perturbed\" takes no exponent"));
                }
                Ok(ObjectiveSpec::perturbed())
            }
            other => Err(D::Error::custom(format!("unknown kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use compose::{dor_compose, ActivationKind, LossKind};

    fn good(a: f64) -> ObjectiveSpec {
        ObjectiveSpec::good(a).unwrap()
    }
    fn bad(b: u32) -> ObjectiveSpec {
        ObjectiveSpec::bad(b).unwrap()
    }

    #[test]
    fn construction_guards() {
        assert!(ObjectiveSpec::good(0.0).is_err());
        assert!(ObjectiveSpec::good(1.5).is_err());
        assert!(ObjectiveSpec::good(-0.2).is_err());
        assert!(ObjectiveSpec::bad(0).is_err());
        assert!(ObjectiveSpec::bad(2).is_err());
        assert!(ObjectiveSpec::bad(4).is_err());
        assert!(ObjectiveSpec::good(0.5).is_ok());
        assert!(ObjectiveSpec::bad(9).is_ok());
        assert!(Point2D::new(f64::NAN, 0.0).is_err());
        assert!(Point2D::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn f_values() {
        // b-family minimum value is 0 at s = 1.
        assert_eq!(bad(3).eval_f(1.0), 0.0);
        // 2 (log(e + 1) + log(1 + 1/e)), arbitrary-precision reference.
        assert!((good(1.0).eval_f(2.0) - 3.253046750072891).abs() < 1e-14);
        // (1 - 2^3)^2 / 18 = 49/18.
        assert!((bad(3).eval_f(2.0) - 49.0 / 18.0).abs() < 1e-14);
        // min F of the a-family is 4 log 2 / a.
        for a in [0.1, 0.3, 1.0] {
            assert!((good(a).eval_f(1.0) - 4.0 * LOG2 / a).abs() < 1e-13);
        }
    }

    #[test]
    fn perturbed_profile_matches_stated_form() {
        let p = ObjectiveSpec::perturbed();
        let base = good(1.0);
        for s in [-0.5, 0.3, 1.0, 1.4, 2.0, 3.7] {
            let bumps: f64 = [
                (-10.0 * (s - 2.0f64) * (s - 2.0)).exp(),
                2.0 * (-100.0 * (s - 1.5f64) * (s - 1.5)).exp(),
                5.0 * (-100.0 * (s - 0.5f64) * (s - 0.5)).exp(),
            ]
            .iter()
            .sum();
            assert!((p.eval_f(s) - (base.eval_f(s) + bumps)).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbed_minima_located() {
        let p = ObjectiveSpec::perturbed();
        // The bumps shift the global minimizer slightly below s = 1.
        let global = p
            .min_products()
            .iter()
            .copied()
            .min_by(|u, v| p.eval_f(*u).total_cmp(&p.eval_f(*v)))
            .unwrap();
        assert!((global - 1.0).abs() < 5e-3 && global != 1.0);
        assert!(p.min_value() > good(1.0).min_value());
        for &m in p.min_products() {
            assert!(p.eval_df(m).abs() < 1e-9, "F' at {m} = {}", p.eval_df(m));
            assert!(p.eval_ddf(m) > 0.0);
        }
        assert!(p.eval_loss(global) < 1e-15);
    }

    #[test]
    fn gradient_values() {
        // b = 1 at (2, 1): F' = xy - 1 = 1, grad = (1, 2).
        let g = bad(1).eval_grad(Point2D::new(2.0, 1.0).unwrap());
        assert!((g.0 - 1.0).abs() < 1e-15 && (g.1 - 2.0).abs() < 1e-15);
        // Stationary on the minimizer hyperbola.
        for spec in [good(0.4), bad(5)] {
            let g = spec.eval_grad(Point2D::new(4.0, 0.25).unwrap());
            assert!(g.0.abs() < 1e-14 && g.1.abs() < 1e-14);
        }
        // l(1) = 2 tanh(1/2) at a = 1, reference 0.9242343145200195.
        let g = good(1.0).eval_grad(Point2D::new(0.2, 10.0).unwrap());
        assert!((g.0 - 9.242343145200195).abs() < 1e-12);
        assert!((g.1 - 0.1848468629040039).abs() < 1e-13);
    }

    #[test]
    fn hessian_at_minimizers() {
        // Prop-style normalization: eigs {0, x^2 + y^2} at any minimizer.
        for spec in [good(1.0), bad(1), bad(3)] {
            let h = spec.eval_hessian(Point2D::new(2.0, 0.5).unwrap());
            assert!((h.eig_max_magnitude - 4.25).abs() < 1e-12);
            assert!(h.eig_min.abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_trace_closed_form() {
        // (1 + (1 - 1/b)(1 - 1/(xy)^b)) (x^2+y^2) (xy)^{2b-2} at b=3, (6,1):
        // exactly 79772.
        let h = bad(3).eval_hessian(Point2D::new(6.0, 1.0).unwrap());
        assert!((h.trace - 79772.0).abs() < 1e-9 * 79772.0);
        let xy: f64 = 6.0;
        let closed = (1.0 + (1.0 - 1.0 / 3.0) * (1.0 - xy.powi(-3))) * 37.0 * xy.powi(4);
        assert!((h.trace - closed).abs() < 1e-9 * closed);
    }

    /// Central finite differences of f along x and y.
    fn fd_grad(spec: &ObjectiveSpec, x: f64, y: f64, h: f64) -> (f64, f64) {
        let f = |x: f64, y: f64| spec.eval_f(x * y);
        (
            (f(x + h, y) - f(x - h, y)) / (2.0 * h),
            (f(x, y + h) - f(x, y - h)) / (2.0 * h),
        )
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let specs: Vec<ObjectiveSpec> = (1..=10)
            .map(|i| good(i as f64 / 10.0))
            .chain([1u32, 3, 5, 9].map(bad))
            .chain([ObjectiveSpec::perturbed()])
            .collect();
        for spec in &specs {
            for _ in 0..80 {
                let x = rng.random_range(0.05..20.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let y = rng.random_range(0.05..20.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let (gx, gy) = spec.eval_grad(Point2D::new(x, y).unwrap());
                let (fx, fy) = fd_grad(spec, x, y, 1e-6);
                for (a, b) in [(gx, fx), (gy, fy)] {
                    let scale = a.abs().max(b.abs()).max(1.0);
                    assert!(
                        (a - b).abs() <= 1e-5 * scale,
                        "{:?} at ({x}, {y}): {a} vs {b}",
                        spec.kind()
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_matches_finite_difference_of_gradient() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xded5);
        let specs = [good(1.0), good(0.3), bad(1), bad(3), bad(9), ObjectiveSpec::perturbed()];
        for spec in &specs {
            for _ in 0..60 {
                let x: f64 = rng.random_range(0.05..20.0);
                let y: f64 = rng.random_range(0.05..20.0);
                // Per-coordinate steps keep the induced step in s = xy small.
                let hx = 1e-6 * (1.0 + x.abs());
                let hy = 1e-6 * (1.0 + y.abs());
                let gxp = spec.eval_grad(Point2D::new(x + hx, y).unwrap());
                let gxm = spec.eval_grad(Point2D::new(x - hx, y).unwrap());
                let gyp = spec.eval_grad(Point2D::new(x, y + hy).unwrap());
                let gym = spec.eval_grad(Point2D::new(x, y - hy).unwrap());
                let hxx = (gxp.0 - gxm.0) / (2.0 * hx);
                let hxy = (gyp.0 - gym.0) / (2.0 * hy);
                let hyy = (gyp.1 - gym.1) / (2.0 * hy);
                let sum = spec.eval_hessian(Point2D::new(x, y).unwrap());
                let fd_trace = hxx + hyy;
                let fd_det = hxx * hyy - hxy * hxy;
                let scale_t = sum.trace.abs().max(fd_trace.abs()).max(1.0);
                assert!((sum.trace - fd_trace).abs() <= 1e-4 * scale_t);
                let scale_d = sum.determinant.abs().max(fd_det.abs()).max(1.0);
                assert!((sum.determinant - fd_det).abs() <= 2e-4 * scale_d);
            }
        }
    }

    #[test]
    fn ell_q_lcap_values() {
        let s = good(1.0);
        let two_tanh_half = 2.0 * 0.5f64.tanh();
        assert!((s.ell(1.0) - two_tanh_half).abs() < 1e-15);
        assert!((s.q(1.0) - two_tanh_half).abs() < 1e-15);
        // (1/3) 2^2 (1 + 2 + 4) = 28/3 at b = 3, d = 1.
        assert!((bad(3).q(1.0) - 28.0 / 3.0).abs() < 1e-13);
        for spec in [good(0.2), good(1.0), bad(1), bad(5)] {
            assert_eq!(spec.q(0.0), 1.0);
            // Taylor branch continuous with the direct ratio.
            let d = 1e-6;
            assert!((spec.q(d) - spec.ell(d) / d).abs() < 1e-12);
        }
        assert!((s.l_cap(1.0) - two_tanh_half * (2.0 - two_tanh_half)).abs() < 1e-15);
    }

    #[test]
    fn regularity_constants_values() {
        let rc = good(1.0).regularity_constants().unwrap();
        assert!((rc.c1 - 1.0 / 12.0).abs() < 1e-15);
        assert!((rc.c2 - 1.0 / 15.0).abs() < 1e-15);
        assert_eq!(rc.dor, 1.0);
        assert_eq!(bad(3).regularity_constants(), Err(FamilyError::CurvatureUndefined));
        assert_eq!(bad(3).degree_of_regularity(), 6.0);
    }

    #[test]
    fn dor_table() {
        assert_eq!(dor_compose(LossKind::Huber, ActivationKind::Tanh, false), 0.0);
        assert_eq!(dor_compose(LossKind::L2, ActivationKind::ReluK(3), false), 6.0);
        assert_eq!(dor_compose(LossKind::Huber, ActivationKind::ReluK(3), false), 3.0);
        assert_eq!(dor_compose(LossKind::L2, ActivationKind::Relu, false), 2.0);
        assert_eq!(dor_compose(LossKind::Huber, ActivationKind::LeakyRelu, false), 1.0);
        assert_eq!(dor_compose(LossKind::L2, ActivationKind::ReluK(3), true), 0.0);
    }

    #[test]
    fn softplus_saturates_without_nan() {
        for s in [-700.0, -300.0, 0.0, 300.0, 700.0] {
            let v = good(1.0).eval_f(s);
            assert!(v.is_finite(), "F({s}) = {v}");
        }
        assert!((softplus(700.0) - 700.0).abs() < 1e-12);
        assert!(softplus(-700.0) >= 0.0);
    }

    #[test]
    fn spec_json_round_trip() {
        for spec in [good(0.7), bad(3), ObjectiveSpec::perturbed()] {
            let s = serde_json::to_string(&spec).unwrap();
            let back: ObjectiveSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(back, spec);
        }
        assert_eq!(
            serde_json::to_string(&good(1.0)).unwrap(),
            r#"{"kind":"good","a":1.0}"#
        );
        assert!(serde_json::from_str::<ObjectiveSpec>(r#"{"kind":"good"}"#).is_err());
        assert!(serde_json::from_str::<ObjectiveSpec>(r#"{"kind":"bad","b":2}"#).is_err());
        assert!(serde_json::from_str::<ObjectiveSpec>(r#"{"kind":"good","a":1,"x":3}"#).is_err());
    }
}
