//! Sampled verification of the family's analytic properties: oddness and
//! boundedness of `l`, the `q` envelope with `c1`/`c2`, monotonicity of
//! `L`, minimizer-sharpness normalization, derivative correctness against
//! finite differences, and the growth-exponent witness.

use crate::family::{c1_constant, c2_constant, bisect, ObjectiveSpec, Point2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug)]
pub struct PropsConfig {
    /// Points per sampled-grid proposition and per family member.
    pub grid_points: usize,
    /// Random points for the gradient / Hessian difference checks.
    pub random_points: usize,
    pub seed: u64,
}

impl Default for PropsConfig {
    fn default() -> Self {
        Self { grid_points: 10_000, random_points: 1000, seed: 0x0b5e55ed }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropCheck {
    pub name: String,
    pub member: String,
    pub pass: bool,
    /// Worst margin seen; positive means the inequality held with room.
    pub worst_margin: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct PropsReport {
    pub checks: Vec<PropCheck>,
}

impl PropsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, member: &str, margin: f64, detail: String) {
        self.checks.push(PropCheck {
            name: name.to_string(),
            member: member.to_string(),
            pass: margin >= 0.0,
            worst_margin: margin,
            detail,
        });
    }
}

fn label(spec: &ObjectiveSpec) -> String {
    match spec.kind() {
        crate::family::Kind::Good { a } => format!("a={a}"),
        crate::family::Kind::Bad { b } => format!("b={b}"),
        crate::family::Kind::Perturbed => "perturbed".to_string(),
    }
}

/// Run the full suite over the given family members.
pub fn run_suite(a_values: &[f64], b_values: &[u32], cfg: PropsConfig) -> PropsReport {
    let mut report = PropsReport::default();
    let good: Vec<ObjectiveSpec> =
        a_values.iter().map(|&a| ObjectiveSpec::good(a).expect("valid a")).collect();
    let bad: Vec<ObjectiveSpec> =
        b_values.iter().map(|&b| ObjectiveSpec::bad(b).expect("valid b")).collect();

    for spec in &good {
        check_ell(&mut report, spec, cfg);
        check_q(&mut report, spec, cfg);
        check_l_cap(&mut report, spec, cfg);
    }
    for spec in good.iter().chain(bad.iter()) {
        check_normalization(&mut report, spec, cfg);
    }
    for spec in good.iter().chain(bad.iter()).chain([&ObjectiveSpec::perturbed()]) {
        check_derivatives(&mut report, spec, cfg);
        check_growth_exponent(&mut report, spec);
    }
    report
}

/// l is odd, positive on the right half-line, and uniformly bounded by 3.
fn check_ell(report: &mut PropsReport, spec: &ObjectiveSpec, cfg: PropsConfig) {
    let n = cfg.grid_points;
    let mut worst: f64 = f64::INFINITY;
    let mut detail = String::new();
    for i in 1..=n {
        let d = 100.0 * i as f64 / n as f64;
        let l = spec.ell(d);
        let odd = 1e-12 - (l + spec.ell(-d)).abs();
        let pos = l;
        let bound = 3.0 - l.abs();
        for (m, what) in [(odd, "odd"), (pos, "positive"), (bound, "|l|<=3")] {
            if m < worst {
                worst = m;
                detail = format!("{what} at d={d}: l={l}");
            }
        }
    }
    report.push("ell_odd_positive_bounded", &label(spec), worst, detail);
}

/// Symmetry, monotone decay, the `1 - c1 d^2 <= q <= 1` envelope, the
/// `q <= 1 - c2 d^2` cap on `|d| <= 1`, and `q^{-1}(1/C) <= (1+a)C`.
fn check_q(report: &mut PropsReport, spec: &ObjectiveSpec, cfg: PropsConfig) {
    let a = match spec.kind() {
        crate::family::Kind::Good { a } => a,
        _ => unreachable!("q envelope is a good-branch property"),
    };
    let (c1, c2) = (c1_constant(a), c2_constant(a));
    let n = cfg.grid_points;
    let mut worst: f64 = f64::INFINITY;
    let mut detail = String::new();
    let mut note = |m: f64, what: &str, d: f64| {
        if m < worst {
            worst = m;
            detail = format!("{what} at d={d}");
        }
    };
    let mut prev_q = spec.q(0.0);
    for i in 0..=n {
        let d = 10.0 * i as f64 / n as f64;
        let q = spec.q(d);
        note(1e-12 - (q - spec.q(-d)).abs(), "q(d)=q(-d)", d);
        note(prev_q - q + 1e-12, "monotone non-increasing", d);
        note(1.0 + 1e-12 - q, "q<=1", d);
        note(q - (1.0 - c1 * d * d) + 1e-12, "q>=1-c1 d^2", d);
        if d <= 1.0 {
            note((1.0 - c2 * d * d) - q + 1e-12, "q<=1-c2 d^2 (d<=1)", d);
        }
        prev_q = q;
    }
    // Larger-range envelope lower bound (vacuous once 1 - c1 d^2 < 0).
    for i in 0..=200 {
        let d = 10.0 + 90.0 * i as f64 / 200.0;
        let q = spec.q(d);
        note(q - (1.0 - c1 * d * d), "q>=1-c1 d^2 (far)", d);
        note(1.0 + 1e-12 - q, "q<=1 (far)", d);
    }
    for c in [2.0, 2.5, 3.0, 3.5, 4.0] {
        let root = bisect(|d| 1.0 / c - spec.q(d), 1e-9, 200.0, 1e-11);
        note((1.0 + a) * c - root, "q^{-1}(1/C) <= (1+a)C", c);
    }
    report.push("q_envelope", &label(spec), worst, detail);
}

/// `L` is non-decreasing on `[0, 50]`, `L(d) + L(-d) >= 0`, and the
/// two-step decrease bound `L(d) + L(rd) >= 0.8 (1+r) d` on the unit
/// interval where the convergence argument applies it.
fn check_l_cap(report: &mut PropsReport, spec: &ObjectiveSpec, cfg: PropsConfig) {
    let n = cfg.grid_points;
    let mut worst: f64 = f64::INFINITY;
    let mut detail = String::new();
    let mut note = |m: f64, what: &str, d: f64| {
        if m < worst {
            worst = m;
            detail = format!("{what} at d={d}");
        }
    };
    let mut prev = spec.l_cap(0.0);
    for i in 0..=n {
        let d = 50.0 * i as f64 / n as f64;
        let l = spec.l_cap(d);
        note(l - prev + 1e-12, "non-decreasing", d);
        note(l + spec.l_cap(-d) + 1e-12, "L(d)+L(-d)>=0", d);
        prev = l;
    }
    for i in 1..=100 {
        let d = i as f64 / 100.0;
        for j in 1..=19 {
            let r = -(j as f64) / 20.0;
            let lhs = spec.l_cap(d) + spec.l_cap(r * d);
            note(lhs - 0.8 * (1.0 + r) * d, "L(d)+L(rd)>=0.8(1+r)d", d);
        }
    }
    report.push("l_cap_growth", &label(spec), worst, detail);
}

/// Sharpness at any minimizer `(x, 1/x)` equals `x^2 + 1/x^2`.
fn check_normalization(report: &mut PropsReport, spec: &ObjectiveSpec, cfg: PropsConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x11);
    let mut worst: f64 = f64::INFINITY;
    let mut detail = String::new();
    for _ in 0..cfg.random_points.max(200) {
        let x = rng.random_range(0.05f64..20.0);
        let expected = x * x + 1.0 / (x * x);
        let s = spec.sharpness(Point2D::new(x, 1.0 / x).expect("finite"));
        let m = 1e-10 - ((s - expected) / expected).abs();
        if m < worst {
            worst = m;
            detail = format!("x={x}: sharpness={s}, expected={expected}");
        }
    }
    report.push("minimizer_sharpness_normalization", &label(spec), worst, detail);
}

/// Analytic gradient and Hessian against central finite differences.
fn check_derivatives(report: &mut PropsReport, spec: &ObjectiveSpec, cfg: PropsConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x22);
    let mut worst_g: f64 = f64::INFINITY;
    let mut worst_h: f64 = f64::INFINITY;
    let mut detail_g = String::new();
    let mut detail_h = String::new();
    for _ in 0..cfg.random_points {
        let sx = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let sy = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = sx * rng.random_range(0.05f64..20.0);
        let y = sy * rng.random_range(0.05f64..20.0);
        let p = Point2D::new(x, y).expect("finite");
        // Per-coordinate steps keep the induced step in s = xy small.
        let hx = 1e-6 * (1.0 + x.abs());
        let hy = 1e-6 * (1.0 + y.abs());

        let (gx, gy) = spec.eval_grad(p);
        let fdx = (spec.eval_f((x + hx) * y) - spec.eval_f((x - hx) * y)) / (2.0 * hx);
        let fdy = (spec.eval_f(x * (y + hy)) - spec.eval_f(x * (y - hy))) / (2.0 * hy);
        for (an, fd) in [(gx, fdx), (gy, fdy)] {
            let scale = an.abs().max(fd.abs()).max(1.0);
            let m = 1e-5 - (an - fd).abs() / scale;
            if m < worst_g {
                worst_g = m;
                detail_g = format!("grad at ({x}, {y}): {an} vs {fd}");
            }
        }

        let sum = spec.eval_hessian(p);
        let gp = |x: f64, y: f64| spec.eval_grad(Point2D::new(x, y).expect("finite"));
        let hxx = (gp(x + hx, y).0 - gp(x - hx, y).0) / (2.0 * hx);
        let hyy = (gp(x, y + hy).1 - gp(x, y - hy).1) / (2.0 * hy);
        let hxy = (gp(x, y + hy).0 - gp(x, y - hy).0) / (2.0 * hy);
        let fd_trace = hxx + hyy;
        let fd_det = hxx * hyy - hxy * hxy;
        for (an, fd) in [(sum.trace, fd_trace), (sum.determinant, fd_det)] {
            let scale = an.abs().max(fd.abs()).max(1.0);
            let m = 1e-4 - (an - fd).abs() / scale;
            if m < worst_h {
                worst_h = m;
                detail_h = format!("hessian at ({x}, {y}): {an} vs {fd}");
            }
        }
    }
    report.push("gradient_finite_difference", &label(spec), worst_g, detail_g);
    report.push("hessian_finite_difference", &label(spec), worst_h, detail_h);
}

/// Log-log slope of `|F|` over `s in [1e3, 1e6]` within 0.05 of the
/// closed-form degree, witnessing the growth-exponent definition.
fn check_growth_exponent(report: &mut PropsReport, spec: &ObjectiveSpec) {
    let dor = spec.degree_of_regularity();
    let n = 200;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let ls = 3.0 * LN10 + (6.0 - 3.0) * LN10 * i as f64 / (n - 1) as f64;
        let s = ls.exp();
        let lf = spec.eval_f(s).ln();
        sx += ls;
        sy += lf;
        sxx += ls * ls;
        sxy += ls * lf;
    }
    let nf = n as f64;
    let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
    let margin = 0.05 - (slope - dor).abs();
    report.push(
        "growth_exponent_witness",
        &label(spec),
        margin,
        format!("fitted slope {slope}, degree {dor}"),
    );
}

const LN10: f64 = std::f64::consts::LN_10;
