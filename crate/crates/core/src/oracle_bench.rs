//! Damped Newton solver for the forward problem and the analytic-vs-iterative
//! comparison harness.

use std::time::{Duration, Instant};

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::forward_kinematics::{forward_kinematics_all, select_assembly_mode};
pub use crate::geometry::constraint_jacobian;
use crate::geometry::{constraint_residuals, JointCoordinates, MachineGeometry, PlatformPose};
use crate::sampling::{draw_working_configuration, SamplingBox};

pub const NEWTON_TOLERANCE: f64 = 1e-8;
pub const NEWTON_MAX_ITER: usize = 50;

/// Two poses agree when their positions are this close (mm).
pub const AGREEMENT_TOLERANCE: f64 = 1e-6;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum NewtonError {
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationReport {
    pub converged: bool,
    pub iterations: usize,
    /// Euclidean norm of the four rod residuals (mm^2).
    pub final_residual: f64,
    pub pose: PlatformPose,
}

fn residual_vector(geom: &MachineGeometry, joints: &JointCoordinates, v: &Vector4<f64>) -> Vector4<f64> {
    let pose = PlatformPose { x_p: v[0], y_p: v[1], z_p: v[2], alpha: v[3] };
    Vector4::from(constraint_residuals(geom, &pose, joints))
}

/// Newton iteration on the rod equations with Armijo backtracking on the
/// squared residual norm. Convergence means residual norm `<= tol`; the
/// mode reached is whichever basin `initial` lies in.
pub fn newton_fk(
    geom: &MachineGeometry,
    joints: &JointCoordinates,
    initial: &PlatformPose,
    max_iter: usize,
    tol: f64,
) -> Result<IterationReport, NewtonError> {
    assert!(max_iter >= 1 && tol > 0.0, "max_iter >= 1 and tol > 0 required");
    let mut v = Vector4::new(initial.x_p, initial.y_p, initial.z_p, initial.alpha);
    let mut r = residual_vector(geom, joints, &v);
    let mut norm = r.norm();
    let mut iterations = 0;

    while norm > tol && iterations < max_iter {
        iterations += 1;
        let pose = PlatformPose { x_p: v[0], y_p: v[1], z_p: v[2], alpha: v[3] };
        let jac = Matrix4::from(constraint_jacobian(geom, &pose, joints)).transpose();
        let step = jac
            .lu()
            .solve(&(-r))
            .filter(|d| d.iter().all(|x| x.is_finite()))
            .ok_or(NewtonError::SingularJacobian { iteration: iterations })?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            let trial = v + step * lambda;
            let r_trial = residual_vector(geom, joints, &trial);
            let n_trial = r_trial.norm();
            if n_trial * n_trial <= (1.0 - 2.0 * ARMIJO * lambda) * norm * norm {
                v = trial;
                r = r_trial;
                norm = n_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(IterationReport {
        converged: norm <= tol,
        iterations,
        final_residual: norm,
        pose: PlatformPose::new(v[0], v[1], v[2], v[3]),
    })
}

/// Wall-clock statistics in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DurationStats {
    pub mean_us: f64,
    pub median_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

impl DurationStats {
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return DurationStats { mean_us: 0.0, median_us: 0.0, min_us: 0.0, max_us: 0.0 };
        }
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(f64::total_cmp);
        let n = us.len();
        let median = if n % 2 == 1 { us[n / 2] } else { 0.5 * (us[n / 2 - 1] + us[n / 2]) };
        DurationStats {
            mean_us: us.iter().sum::<f64>() / n as f64,
            median_us: median,
            min_us: us[0],
            max_us: us[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub n_samples: usize,
    pub seed: u64,
    pub analytic_time: DurationStats,
    pub iterative_time: DurationStats,
    /// Trials where the analytic side selected a mode and Newton converged.
    pub both_succeeded: usize,
    pub agreements: usize,
    /// `agreements / both_succeeded`, 1 when nothing was comparable.
    pub agreement_rate: f64,
    pub newton_failures: usize,
    pub analytic_failures: usize,
    /// Largest position discrepancy among comparable trials (mm).
    pub max_pose_discrepancy: f64,
    /// Trials run one after another on the calling thread.
    pub execution: &'static str,
    pub nominal_pose: PlatformPose,
}

impl BenchReport {
    /// Copy with the timing fields cleared, for determinism comparisons.
    pub fn without_timings(&self) -> BenchReport {
        let zero = DurationStats::from_samples(&[]);
        BenchReport { analytic_time: zero, iterative_time: zero, ..self.clone() }
    }
}

/// Times the analytic solver plus selection against Newton seeded at the
/// nominal home pose on `n_samples` working configurations drawn from
/// `seed`.
pub fn compare_solvers(geom: &MachineGeometry, n_samples: usize, seed: u64) -> BenchReport {
    assert!(n_samples >= 1, "n_samples >= 1 required");
    let bounds = SamplingBox::for_geometry(geom);
    let nominal = geom.home_pose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut analytic_times = Vec::with_capacity(n_samples);
    let mut iterative_times = Vec::with_capacity(n_samples);
    let (mut both, mut agree, mut newton_fail, mut analytic_fail) = (0, 0, 0, 0);
    let mut max_disc: f64 = 0.0;

    for _ in 0..n_samples {
        let (_, joints) = draw_working_configuration(geom, &bounds, &mut rng);

        let start = Instant::now();
        let set = forward_kinematics_all(geom, &joints);
        let selected = select_assembly_mode(&set.modes, geom);
        analytic_times.push(start.elapsed());

        let start = Instant::now();
        let newton = newton_fk(geom, &joints, &nominal, NEWTON_MAX_ITER, NEWTON_TOLERANCE);
        iterative_times.push(start.elapsed());

        let newton_pose = match newton {
            Ok(rep) if rep.converged => Some(rep.pose),
            _ => None,
        };
        match (selected, newton_pose) {
            (Some(sel), Some(pose)) => {
                both += 1;
                let d = sel.choice.pose.position_distance(&pose);
                max_disc = max_disc.max(d);
                if d <= AGREEMENT_TOLERANCE {
                    agree += 1;
                }
            }
            (sel, pose) => {
                if sel.is_none() {
                    analytic_fail += 1;
                }
                if pose.is_none() {
                    newton_fail += 1;
                }
            }
        }
    }

    BenchReport {
        n_samples,
        seed,
        analytic_time: DurationStats::from_samples(&analytic_times),
        iterative_time: DurationStats::from_samples(&iterative_times),
        both_succeeded: both,
        agreements: agree,
        agreement_rate: if both == 0 { 1.0 } else { agree as f64 / both as f64 },
        newton_failures: newton_fail,
        analytic_failures: analytic_fail,
        max_pose_discrepancy: max_disc,
        execution: "serial",
        nominal_pose: nominal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse_kinematics::{actuator_inputs, ConfigurationIndices};

    fn config() -> (MachineGeometry, PlatformPose, JointCoordinates) {
        let g = MachineGeometry::synthetic();
        let el = crate::coupling::coupling_ellipse(&g, 0.3).unwrap();
        let (x, y) = el.point(-0.8);
        let pose = PlatformPose::new(x, y, 1000.0, 0.3);
        let j = actuator_inputs(&g, &pose, &ConfigurationIndices::WORKING_MODE).unwrap();
        (g, pose, j)
    }

    #[test]
    fn exact_start_is_fixed_point() {
        let (g, pose, j) = config();
        let rep = newton_fk(&g, &j, &pose, NEWTON_MAX_ITER, NEWTON_TOLERANCE).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
        assert!(rep.pose.position_distance(&pose) <= 1e-10);
        assert!((rep.pose.alpha - pose.alpha).abs() <= 1e-10);
    }

    #[test]
    fn perturbed_start_returns() {
        let (g, pose, j) = config();
        let start = PlatformPose::new(pose.x_p + 1.0, pose.y_p - 1.0, pose.z_p + 1.0, pose.alpha + 0.01);
        let rep = newton_fk(&g, &j, &start, NEWTON_MAX_ITER, NEWTON_TOLERANCE).unwrap();
        assert!(rep.converged);
        assert!(rep.pose.position_distance(&pose) <= 1e-6);
    }

    #[test]
    fn duration_stats_median() {
        let s = DurationStats::from_samples(&[Duration::from_micros(3), Duration::from_micros(1), Duration::from_micros(2)]);
        assert_eq!(s.median_us, 2.0);
        assert_eq!(s.min_us, 1.0);
        assert_eq!(s.max_us, 3.0);
    }

    #[test]
    fn single_sample_report() {
        let g = MachineGeometry::synthetic();
        let rep = compare_solvers(&g, 1, 11);
        assert_eq!(rep.n_samples, 1);
        assert!((0.0..=1.0).contains(&rep.agreement_rate));
    }
}
