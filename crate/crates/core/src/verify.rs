//! Randomised self-checks behind the `verify` subcommand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupling::{coupling_residual, feasible_orientations};
use crate::forward_kinematics::{fk_chain, forward_kinematics_all, select_assembly_mode, AssemblyMode};
use crate::geometry::{angle_difference, constraint_residuals, JointCoordinates, MachineGeometry, PlatformPose};
use crate::inverse_kinematics::{
    inverse_kinematics_all, passes_selection_filters, select_working_mode, IkSolution, RESIDUAL_TOLERANCE,
};
use crate::sampling::{draw_working_configuration, SamplingBox};

const POSE_TOL: f64 = 1e-6;
const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckTally {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub n_samples: usize,
    pub checks: Vec<CheckTally>,
    /// Largest number of assembly modes seen for one input.
    pub max_modes_seen: usize,
    /// Positions where several IK solutions passed the working-mode filters.
    pub ik_ties: usize,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.failed == 0)
    }
}

struct Tallies {
    names: Vec<&'static str>,
    counts: Vec<(usize, usize)>,
}

impl Tallies {
    fn new(names: &[&'static str]) -> Self {
        Tallies { names: names.to_vec(), counts: vec![(0, 0); names.len()] }
    }

    fn record(&mut self, name: &'static str, ok: bool) {
        let i = self.names.iter().position(|n| *n == name).expect("registered check");
        if ok {
            self.counts[i].0 += 1;
        } else {
            self.counts[i].1 += 1;
        }
    }

    fn finish(self) -> Vec<CheckTally> {
        self.names
            .into_iter()
            .zip(self.counts)
            .map(|(name, (passed, failed))| CheckTally { name, passed, failed })
            .collect()
    }
}

fn matches_pose(mode: &PlatformPose, pose: &PlatformPose) -> bool {
    mode.position_distance(pose) <= POSE_TOL && angle_difference(mode.alpha, pose.alpha).abs() <= ANGLE_TOL
}

/// Rotations where the coupling relation changes sign on a uniform grid,
/// refined by bisection.
pub fn orientation_scan(geom: &MachineGeometry, x_p: f64, y_p: f64, step: f64) -> Vec<f64> {
    let f = |a: f64| coupling_residual(geom, x_p, y_p, a);
    sign_change_roots(&f, -std::f64::consts::PI, std::f64::consts::PI, step)
}

/// Rotations where the cleared forward residual changes sign, refined by
/// bisection. Grid points the elimination chain cannot evaluate are skipped.
pub fn rotation_scan(geom: &MachineGeometry, joints: &JointCoordinates, step: f64) -> Vec<f64> {
    let f = |a: f64| {
        let (s, c) = a.sin_cos();
        let spread = (joints.rho2 - joints.rho3) * (geom.platform_y_1 * c - geom.slider_y_1)
            + 2.0 * s * (geom.slider_y_23 * geom.platform_y_1 - geom.slider_y_1 * geom.platform_y_23);
        match fk_chain(geom, joints, a) {
            Ok(pose) => constraint_residuals(geom, &pose, joints)[0] * spread * spread,
            Err(_) => f64::NAN,
        }
    };
    sign_change_roots(&f, -std::f64::consts::PI, std::f64::consts::PI, step)
}

fn sign_change_roots(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    let mut out = Vec::new();
    let mut a = lo;
    let mut fa = f(a);
    for k in 1..=n {
        let b = (lo + k as f64 * step).min(hi);
        let fb = f(b);
        if fa.is_finite() && fb.is_finite() {
            if fa == 0.0 {
                out.push(a);
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                let (mut l, mut r, mut fl) = (a, b, fa);
                for _ in 0..100 {
                    let m = 0.5 * (l + r);
                    if m <= l || m >= r {
                        break;
                    }
                    let fm = f(m);
                    if !fm.is_finite() {
                        break;
                    }
                    if fm.signum() == fl.signum() {
                        l = m;
                        fl = fm;
                    } else {
                        r = m;
                    }
                }
                out.push(0.5 * (l + r));
            }
        }
        a = b;
        fa = fb;
    }
    out
}

fn mode_at(modes: &[AssemblyMode], alpha: f64, tol: f64) -> bool {
    modes.iter().any(|m| angle_difference(m.pose.alpha, alpha).abs() <= tol)
}

/// Runs the round-trip, count and scan checks on `n` working
/// configurations drawn from `seed`.
pub fn run_verification(geom: &MachineGeometry, n: usize, seed: u64) -> VerificationReport {
    let bounds = SamplingBox::for_geometry(geom);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tallies::new(&[
        "ik_residuals",
        "ik_count_bounds",
        "ik_selection",
        "orientation_scan",
        "fk_round_trip",
        "fk_selection",
        "fk_mode_bound",
        "ik_of_fk",
        "rotation_scan",
    ]);
    let mut max_modes = 0;
    let mut ik_ties = 0;

    for _ in 0..n {
        let (pose, joints) = draw_working_configuration(geom, &bounds, &mut rng);

        match inverse_kinematics_all(geom, pose.x_p, pose.y_p, pose.z_p) {
            Ok(set) => {
                t.record("ik_residuals", set.solutions.iter().all(|s| s.max_residual <= RESIDUAL_TOLERANCE));
                let mut alphas: Vec<f64> = set.solutions.iter().map(|s| s.pose.alpha).collect();
                alphas.dedup();
                let orient_ok = pose.y_p == 0.0 || alphas.len() <= 4;
                t.record("ik_count_bounds", set.solutions.len() <= 16 && orient_ok);
                let is_drawn = |sol: &IkSolution| {
                    (sol.pose.alpha - pose.alpha).abs() <= ANGLE_TOL
                        && (sol.joints.rho1 - joints.rho1).abs() <= POSE_TOL
                        && (sol.joints.rho2 - joints.rho2).abs() <= POSE_TOL
                        && (sol.joints.rho3 - joints.rho3).abs() <= POSE_TOL
                };
                let picked = select_working_mode(&set.solutions, geom);
                if picked.as_ref().is_some_and(|p| p.ambiguous) {
                    ik_ties += 1;
                }
                // a flagged tie is correct when the drawn solution survived the filters
                t.record(
                    "ik_selection",
                    picked.is_some_and(|p| {
                        is_drawn(&p.choice)
                            || (p.ambiguous
                                && set.solutions.iter().any(|s| is_drawn(s) && passes_selection_filters(geom, &s.pose, &s.joints, &s.indices)))
                    }),
                );
            }
            Err(_) => {
                t.record("ik_residuals", false);
                t.record("ik_count_bounds", false);
                t.record("ik_selection", false);
            }
        }

        let scanned = orientation_scan(geom, pose.x_p, pose.y_p, 1e-3);
        let found = feasible_orientations(geom, pose.x_p, pose.y_p).unwrap_or_default();
        t.record(
            "orientation_scan",
            scanned.iter().all(|a| found.iter().any(|b| angle_difference(*a, *b).abs() <= 1e-8)),
        );

        let set = forward_kinematics_all(geom, &joints);
        max_modes = max_modes.max(set.modes.len());
        t.record("fk_mode_bound", set.modes.len() <= 8);
        t.record("fk_round_trip", set.modes.iter().any(|m| matches_pose(&m.pose, &pose)));
        t.record(
            "fk_selection",
            select_assembly_mode(&set.modes, geom).is_some_and(|s| matches_pose(&s.choice.pose, &pose)),
        );
        t.record(
            "ik_of_fk",
            set.modes.iter().all(|m| {
                inverse_kinematics_all(geom, m.pose.x_p, m.pose.y_p, m.pose.z_p).is_ok_and(|ik| {
                    ik.solutions.iter().any(|s| {
                        angle_difference(s.pose.alpha, m.pose.alpha).abs() <= 1e-7
                            && (s.joints.rho1 - joints.rho1).abs() <= POSE_TOL
                            && (s.joints.rho2 - joints.rho2).abs() <= POSE_TOL
                            && (s.joints.rho3 - joints.rho3).abs() <= POSE_TOL
                    })
                })
            }),
        );
        let roots = rotation_scan(geom, &joints, 1e-3);
        t.record("rotation_scan", roots.iter().all(|a| mode_at(&set.modes, *a, 1e-7)));
    }

    VerificationReport { seed, n_samples: n, checks: t.finish(), max_modes_seen: max_modes, ik_ties }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_clean() {
        let g = MachineGeometry::synthetic();
        let rep = run_verification(&g, 10, 5);
        for c in &rep.checks {
            assert_eq!(c.failed, 0, "{c:?}");
        }
        assert!(rep.all_passed());
    }

    #[test]
    fn scan_finds_planted_roots() {
        let f = |x: f64| (x - 0.25) * (x + 1.5);
        let r = sign_change_roots(&f, -3.0, 3.0, 0.01);
        assert_eq!(r.len(), 2);
        assert!((r[0] + 1.5).abs() < 1e-12 && (r[1] - 0.25).abs() < 1e-12);
    }
}
