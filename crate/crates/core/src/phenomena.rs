//! Detectors for the large-learning-rate phenomena on a finished
//! trajectory: catapult, balancing, the three edge-of-stability stages,
//! one-sided stability, and the learning-rate regime.
//!
//! Every detector is a pure function of the recorded trajectory. The
//! spikes and plateaus these classify have no universally agreed
//! quantitative definition, so each threshold is an explicit, documented
//! convention held in [`DetectorConfig`].

use crate::engine::{phase_boundary, Trajectory};
use serde::Serialize;

#[derive(Clone, Copy, Debug)]
pub struct DetectorConfig {
    /// Catapult: early loss must exceed `loss_0 * (1 + catapult_rise)`.
    pub catapult_rise: f64,
    /// Balancing: final gap must undercut the initial one by this factor.
    pub balancing_drop: f64,
    /// De-sharpening: sharpness must dip to this fraction of `S_0` within
    /// the first quarter of the recorded steps.
    pub de_sharpening_factor: f64,
    /// Progressive sharpening: median-smoothed rise must recover at least
    /// this fraction of `S_inf - S_min` ...
    pub progressive_rise: f64,
    /// ... with at least this fraction of smoothed increments non-falling.
    pub progressive_fraction: f64,
    /// Median window for the smoothed sharpness series.
    pub smoothing_window: usize,
    /// Limiting sharpness: `S_inf >= (1 - limiting_rel_tol) * 2/h`.
    pub limiting_rel_tol: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            catapult_rise: 1e-3,
            balancing_drop: 1e-6,
            de_sharpening_factor: 0.75,
            progressive_rise: 0.2,
            progressive_fraction: 0.9,
            smoothing_window: 21,
            limiting_rel_tol: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CatapultStats {
    pub detected: bool,
    pub peak_loss: f64,
    pub peak_index: u64,
    pub initial_loss: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BalancingStats {
    pub detected: bool,
    pub initial_gap: f64,
    pub final_gap: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EosStages {
    pub de_sharpening: bool,
    pub progressive_sharpening: bool,
    pub limiting_at_2_over_h: bool,
    pub s_initial: f64,
    pub s_min_after_start: f64,
    pub s_inf: Option<f64>,
    pub two_over_h: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OneSidedStats {
    pub detected: bool,
    /// First recorded index from which the sign of `delta` is constant and
    /// `|delta|` non-increasing.
    pub onset_index: Option<u64>,
    pub one_over_h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LrRegime {
    RegularLr,
    LargeLr,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhenomenaReport {
    pub catapult: CatapultStats,
    pub balancing: BalancingStats,
    pub eos: EosStages,
    pub one_sided: OneSidedStats,
    pub regime: LrRegime,
    pub converged: bool,
}

impl PhenomenaReport {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self::with_config(traj, DetectorConfig::default())
    }

    pub fn with_config(traj: &Trajectory, cfg: DetectorConfig) -> Self {
        Self {
            catapult: detect_catapult(traj, cfg),
            balancing: detect_balancing(traj, cfg),
            eos: detect_eos_stages(traj, cfg),
            one_sided: detect_one_sided(traj),
            regime: classify_lr_regime(traj),
            converged: traj.converged(),
        }
    }

    /// Fixed-key JSON per the report schema.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "catapult": self.catapult.detected,
            "balancing": self.balancing.detected,
            "eos": {
                "de_sharpening": self.eos.de_sharpening,
                "progressive_sharpening": self.eos.progressive_sharpening,
                "limiting": self.eos.limiting_at_2_over_h,
            },
            "one_sided": self.one_sided.detected,
            "regime": match self.regime {
                LrRegime::RegularLr => "regular_lr",
                LrRegime::LargeLr => "large_lr",
            },
            "stats": {
                "converged": self.converged,
                "peak_loss": self.catapult.peak_loss,
                "peak_index": self.catapult.peak_index,
                "initial_loss": self.catapult.initial_loss,
                "initial_gap": self.balancing.initial_gap,
                "final_gap": self.balancing.final_gap,
                "s_initial": self.eos.s_initial,
                "s_min_after_start": self.eos.s_min_after_start,
                "s_inf": self.eos.s_inf,
                "two_over_h": self.eos.two_over_h,
                "one_sided_onset": self.one_sided.onset_index,
                "one_over_h": self.one_sided.one_over_h,
            },
        })
    }
}

/// Early loss spike above `loss_0` that later resolves below it. The
/// search window ends at the phase-1/phase-2 boundary when one exists.
pub fn detect_catapult(traj: &Trajectory, cfg: DetectorConfig) -> CatapultStats {
    let steps = &traj.steps;
    let loss0 = steps[0].loss;
    let window_end = phase_boundary(traj).unwrap_or(steps.len());
    let mut peak = loss0;
    let mut peak_index = steps[0].k;
    for s in steps.iter().take(window_end.max(1)).skip(1) {
        if s.loss > peak {
            peak = s.loss;
            peak_index = s.k;
        }
    }
    let resolved = traj.converged() && steps.last().map(|s| s.loss < loss0).unwrap_or(false);
    CatapultStats {
        detected: traj.converged() && peak > loss0 * (1.0 + cfg.catapult_rise) && resolved,
        peak_loss: peak,
        peak_index,
        initial_loss: loss0,
    }
}

/// Limit gap `(x - y)^2` strictly below the initial gap.
pub fn detect_balancing(traj: &Trajectory, cfg: DetectorConfig) -> BalancingStats {
    let first = traj.initial();
    let initial_gap = (first.x - first.y) * (first.x - first.y);
    let final_gap = traj.limit.map(|p| (p.x - p.y) * (p.x - p.y));
    let detected = match final_gap {
        Some(g) => g < initial_gap * (1.0 - cfg.balancing_drop),
        None => false,
    };
    BalancingStats { detected, initial_gap, final_gap }
}

fn rolling_median(series: &[f64], window: usize) -> Vec<f64> {
    let n = series.len();
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(window);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        buf.clear();
        buf.extend_from_slice(&series[lo..hi]);
        buf.sort_by(f64::total_cmp);
        out.push(buf[buf.len() / 2]);
    }
    out
}

/// The three stages: de-sharpening, progressive sharpening, limiting
/// sharpness near `2/h`.
pub fn detect_eos_stages(traj: &Trajectory, cfg: DetectorConfig) -> EosStages {
    let steps = &traj.steps;
    let h = traj.learning_rate;
    let two_over_h = 2.0 / h;
    let s0 = steps[0].sharpness;
    let sharp: Vec<f64> = steps.iter().map(|s| s.sharpness).collect();
    let s_inf = traj.limit_sharpness;

    let quarter = (steps.len() / 4).max(1);
    let early_min = sharp[..quarter].iter().copied().fold(f64::INFINITY, f64::min);
    let de_sharpening = traj.converged() && early_min <= cfg.de_sharpening_factor * s0;

    let s_min_after_start = sharp.iter().copied().fold(f64::INFINITY, f64::min);
    let progressive_sharpening = match s_inf {
        Some(s_inf) if s_inf > s_min_after_start => {
            let argmin = sharp
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let tail = &sharp[argmin..];
            if tail.len() < 3 {
                false
            } else {
                let smooth = rolling_median(tail, cfg.smoothing_window);
                let rise = smooth[smooth.len() - 1] - smooth[0];
                // Increments are taken at lag 2: the in-region iterates hop
                // sides of the minimum each step, so the sharpness carries a
                // period-2 ripple on top of its trend. Converged plateaus
                // additionally carry rounding noise around S_inf.
                let noise = 1e-9 * (s_inf.abs() + 1.0);
                let rising = smooth.windows(3).filter(|w| w[2] >= w[0] - noise).count();
                rise >= cfg.progressive_rise * (s_inf - s_min_after_start)
                    && rising as f64 >= cfg.progressive_fraction * (smooth.len() - 2) as f64
            }
        }
        _ => false,
    };

    let limiting_at_2_over_h = match s_inf {
        Some(s) => {
            s >= (1.0 - cfg.limiting_rel_tol) * two_over_h
                && s <= two_over_h + 10.0 * traj.convergence_tol
        }
        None => false,
    };

    EosStages {
        de_sharpening,
        progressive_sharpening,
        limiting_at_2_over_h,
        s_initial: s0,
        s_min_after_start,
        s_inf,
        two_over_h,
    }
}

/// Eventual approach from a single side: a terminal suffix of recorded
/// steps with constant `sign(delta)` and non-increasing `|delta|`, plus
/// the limiting sharpness at most `1/h`.
pub fn detect_one_sided(traj: &Trajectory) -> OneSidedStats {
    let h = traj.learning_rate;
    let one_over_h = 1.0 / h;
    if !traj.converged() {
        return OneSidedStats { detected: false, onset_index: None, one_over_h };
    }
    let steps = &traj.steps;
    // Magnitudes below the noise floor of x*y - 1 carry no sign information.
    let floor = 1e-14;
    let mut onset = steps.len() - 1;
    for i in (0..steps.len() - 1).rev() {
        let (a, b) = (&steps[i], &steps[i + 1]);
        let sign_ok = a.delta.abs() <= floor
            || b.delta.abs() <= floor
            || (a.delta > 0.0) == (b.delta > 0.0);
        let mono_ok = b.delta.abs() <= a.delta.abs() + floor;
        if sign_ok && mono_ok {
            onset = i;
        } else {
            break;
        }
    }
    let suffix_len = steps.len() - onset;
    let s_inf_ok = traj.limit_sharpness.map(|s| s <= one_over_h).unwrap_or(false);
    let detected = suffix_len >= 2 && onset < steps.len() - 1 && s_inf_ok;
    OneSidedStats {
        detected,
        onset_index: detected.then(|| steps[onset].k),
        one_over_h,
    }
}

/// Large iff `h >= 2/L (1 - 1e-3)` for the largest sharpness seen along
/// the bounded part of the trajectory.
pub fn classify_lr_regime(traj: &Trajectory) -> LrRegime {
    let l = traj.max_sharpness();
    if l > 0.0 && traj.learning_rate >= (2.0 / l) * (1.0 - 1e-3) {
        LrRegime::LargeLr
    } else {
        LrRegime::RegularLr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, RunConfig};
    use crate::family::ObjectiveSpec;

    fn fig1_traj() -> Trajectory {
        let h = 4.0 / 100.04;
        run(&RunConfig::new(ObjectiveSpec::good(1.0).unwrap(), 0.2, 10.0, h)).unwrap()
    }

    fn fig2_traj() -> Trajectory {
        let uu0 = 0.15f64 * 0.15 + 100.0;
        let h = 4.0 / (uu0 * 1.5f64.powi(4));
        run(&RunConfig::new(ObjectiveSpec::bad(3).unwrap(), 0.15, 10.0, h)).unwrap()
    }

    #[test]
    fn catapult_on_fig1_not_fig2() {
        let cfg = DetectorConfig::default();
        let r1 = detect_catapult(&fig1_traj(), cfg);
        assert!(r1.detected, "peak {} vs initial {}", r1.peak_loss, r1.initial_loss);
        assert!(r1.peak_index >= 1);
        let r2 = detect_catapult(&fig2_traj(), cfg);
        assert!(!r2.detected);
        // Monotone-decreasing loss: small-rate descent near the minimum.
        let t3 = run(&RunConfig::new(ObjectiveSpec::bad(1).unwrap(), 2.0, 0.6, 1e-3)).unwrap();
        assert!(t3.steps.windows(2).all(|w| w[1].loss <= w[0].loss));
        assert!(!detect_catapult(&t3, cfg).detected);
    }

    #[test]
    fn balancing_on_fig1_not_fig2() {
        let cfg = DetectorConfig::default();
        let t1 = fig1_traj();
        let r1 = detect_balancing(&t1, cfg);
        assert!(r1.detected);
        assert!((r1.initial_gap - 96.04).abs() < 1e-10);
        // Final gap is S_inf - 2 at a minimizer with S_inf near 2/h.
        let fg = r1.final_gap.unwrap();
        assert!((fg - (2.0 / t1.learning_rate - 2.0)).abs() < 2.0, "final gap {fg}");
        let r2 = detect_balancing(&fig2_traj(), cfg);
        assert!(!r2.detected);
        // Balanced start stays balanced: gap 0 -> 0.
        let t3 = run(&RunConfig::new(ObjectiveSpec::bad(1).unwrap(), 1.2, 1.2, 0.05)).unwrap();
        let r3 = detect_balancing(&t3, cfg);
        assert!(!r3.detected);
    }

    #[test]
    fn eos_stages_fig1_variants() {
        let cfg = DetectorConfig::default();
        let e1 = detect_eos_stages(&fig1_traj(), cfg);
        assert!(e1.de_sharpening && e1.progressive_sharpening && e1.limiting_at_2_over_h);
        // Start at small sharpness: no de-sharpening, limiting still holds.
        let h = 4.0 / 104.0;
        let t2 = run(&RunConfig::new(ObjectiveSpec::good(1.0).unwrap(), 2.0, 10.0, h)).unwrap();
        let e2 = detect_eos_stages(&t2, cfg);
        assert!(!e2.de_sharpening, "early min {}", e2.s_min_after_start);
        assert!(e2.progressive_sharpening);
        assert!(e2.limiting_at_2_over_h);
        // Bad regularity: limiting fails by an order of magnitude.
        let e3 = detect_eos_stages(&fig2_traj(), cfg);
        assert!(!e3.limiting_at_2_over_h);
        assert!(e3.s_inf.unwrap() < 0.5 * e3.two_over_h);
    }

    #[test]
    fn one_sided_fig2_not_fig1() {
        let r2 = detect_one_sided(&fig2_traj());
        assert!(r2.detected);
        assert_eq!(r2.onset_index, Some(1));
        let r1 = detect_one_sided(&fig1_traj());
        assert!(!r1.detected);
    }

    #[test]
    fn regime_classification() {
        assert_eq!(classify_lr_regime(&fig1_traj()), LrRegime::LargeLr);
        assert_eq!(classify_lr_regime(&fig2_traj()), LrRegime::LargeLr);
        let t = run(&RunConfig::new(ObjectiveSpec::bad(1).unwrap(), 2.0, 0.5, 1e-4)).unwrap();
        assert_eq!(classify_lr_regime(&t), LrRegime::RegularLr);
    }

    #[test]
    fn one_sided_excludes_limiting() {
        for traj in [fig1_traj(), fig2_traj()] {
            let report = PhenomenaReport::from_trajectory(&traj);
            if report.one_sided.detected {
                assert!(!report.eos.limiting_at_2_over_h);
            }
        }
    }

    #[test]
    fn report_json_keys_fixed() {
        let v = PhenomenaReport::from_trajectory(&fig1_traj()).to_json();
        for key in ["catapult", "balancing", "eos", "one_sided", "regime", "stats"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        for key in ["de_sharpening", "progressive_sharpening", "limiting"] {
            assert!(v["eos"].get(key).is_some());
        }
    }

    #[test]
    fn detectors_are_pure() {
        let t = fig1_traj();
        let a = serde_json::to_string(&PhenomenaReport::from_trajectory(&t).to_json()).unwrap();
        let b = serde_json::to_string(&PhenomenaReport::from_trajectory(&t).to_json()).unwrap();
        assert_eq!(a, b);
    }
}
