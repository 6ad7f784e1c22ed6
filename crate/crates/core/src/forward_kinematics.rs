//! Forward kinematics by successive elimination.
//!
//! For a trial rotation `alpha` the four rod equations are reduced one
//! unknown at a time:
//!
//! 1. the difference of the two leg-I equations is linear in `y_p` once
//!    `z_p` is known: `y_p (R1 cos - r1) = R1 sin (rho1 - z_p)`;
//! 2. the difference of the leg-II and leg-III equations, after substituting
//!    `y_p`, is linear in `z_p` with coefficient `-2 * spread`, where
//!    `spread = (rho2 - rho3)(R1 cos - r1) + 2 sin (r4 R1 - r1 R2)`;
//! 3. the difference of the first leg-I and the leg-II equations is linear
//!    in `x_p`.
//!
//! What is left is the first leg-I equation as a function of `alpha` alone.
//! Multiplied by `spread^2` it becomes a homogeneous form of degree 8 in
//! `(cos(alpha/2), sin(alpha/2))`, i.e. a degree-8 polynomial in
//! `t = tan(alpha/2)`. The `R1 cos - r1` denominator cancels out of that
//! product and does not have to be cleared.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{
    angle_difference, constraint_residuals, normalized_jacobian_determinant, JointCoordinates, MachineGeometry, PlatformPose,
};
use crate::inverse_kinematics::{
    actuator_inputs, passes_selection_filters, select_by, ConfigurationIndices, Selection, Sign, RESIDUAL_TOLERANCE,
};
use crate::oracle_bench::newton_fk;
use crate::rootfind::{real_roots, Polynomial};

/// Degree of the characteristic polynomial in `t`.
pub const FK_DEGREE: usize = 8;

/// Number of rotation samples used to fit the characteristic polynomial.
pub const FIT_NODES: usize = 24;

/// Accepted relative misfit of the characteristic polynomial.
pub const FIT_TOLERANCE: f64 = 1e-8;

/// Roots closer than this in `t` (after polishing) are one root.
pub const ROOT_DEDUP: f64 = 1e-7;

const CHAIN_EPS: f64 = 1e-12;

const REFINE_STEPS: usize = 4;
/// Largest move (mm) a refined pose may make from its chain pose.
const REFINE_RADIUS: f64 = 1e-3;

/// Normalized Jacobian determinants below this are treated as singular.
pub const SINGULAR_DETERMINANT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainDenominator {
    /// `R1 cos(alpha) - r1 = 0`: the leg-I midline is perpendicular to its
    /// slider plane and `y_p` drops out of the leg-I difference.
    LegOneTilt,
    /// `spread = 0`: the leg-II/III difference no longer fixes `z_p`.
    LegPairSpread,
}

impl fmt::Display for ChainDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainDenominator::LegOneTilt => f.write_str("R1 cos(alpha) - r1 vanishes"),
            ChainDenominator::LegPairSpread => {
                f.write_str("(rho2 - rho3)(R1 cos(alpha) - r1) + 2 sin(alpha)(r4 R1 - r1 R2) vanishes")
            }
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum FkError {
    #[error("degenerate elimination chain: {0}")]
    DegenerateChain(ChainDenominator),
    #[error("characteristic polynomial fit is unreliable (relative misfit {0:.3e})")]
    ConditioningFailure(f64),
}

fn tilt(geom: &MachineGeometry, c: f64) -> f64 {
    geom.platform_y_1 * c - geom.slider_y_1
}

fn pair_coupling(geom: &MachineGeometry) -> f64 {
    geom.slider_y_23 * geom.platform_y_1 - geom.slider_y_1 * geom.platform_y_23
}

fn spread(geom: &MachineGeometry, joints: &JointCoordinates, s: f64, c: f64) -> f64 {
    (joints.rho2 - joints.rho3) * tilt(geom, c) + 2.0 * s * pair_coupling(geom)
}

fn spread_scale(geom: &MachineGeometry, joints: &JointCoordinates) -> f64 {
    let (rp1, rs1, rp2, rs2) = (geom.platform_y_1, geom.slider_y_1, geom.platform_y_23, geom.slider_y_23);
    (joints.rho2 - joints.rho3).abs() * (rp1 + rs1) + 2.0 * (rs2 * rp1 + rs1 * rp2)
}

/// `x_p` from the difference of the first leg-I and the leg-II equations.
fn x_from_yz(geom: &MachineGeometry, joints: &JointCoordinates, y: f64, z: f64, s: f64, c: f64) -> f64 {
    let (d1, d2) = (geom.leg1_x_offset(), geom.leg23_x_offset());
    let (rp1, rs1, rp2, rs2) = (geom.platform_y_1, geom.slider_y_1, geom.platform_y_23, geom.slider_y_23);
    let [l1, l2, _] = geom.rod_length;
    let u1 = rp1 * c - rs1;
    let u2 = -rp2 * c + rs2;
    let v1 = rp1 * s - joints.rho1;
    let v2 = -rp2 * s - joints.rho2;
    let rest = (u1 - u2) * (2.0 * y + u1 + u2) + (v1 - v2) * (2.0 * z + v1 + v2) - l1 * l1 + l2 * l2;
    -((d1 - d2) * (d1 + d2) + rest) / (2.0 * (d1 - d2))
}

/// Reconstructs the pose for a trial rotation by the elimination chain. The
/// first leg-I equation is not enforced; see [`fk_residual`].
pub fn fk_chain(geom: &MachineGeometry, joints: &JointCoordinates, alpha: f64) -> Result<PlatformPose, FkError> {
    let (s, c) = alpha.sin_cos();
    let tilt = tilt(geom, c);
    if tilt.abs() <= CHAIN_EPS * geom.platform_y_1 {
        return Err(FkError::DegenerateChain(ChainDenominator::LegOneTilt));
    }
    let spread = spread(geom, joints, s, c);
    if spread.abs() <= CHAIN_EPS * spread_scale(geom, joints) {
        return Err(FkError::DegenerateChain(ChainDenominator::LegPairSpread));
    }
    let (rp1, rp2, rs2) = (geom.platform_y_1, geom.platform_y_23, geom.slider_y_23);
    let [_, l2, l3] = geom.rod_length;
    let (rho1, rho2, rho3) = (joints.rho1, joints.rho2, joints.rho3);

    let w = rp2 * c - rs2;
    let q = rho3 - rho2 - 2.0 * rp2 * s;
    let b = -(rho2 + rho3) * q * tilt - 4.0 * w * rp1 * s * rho1 - (l2 * l2 - l3 * l3) * tilt;
    let z = b / (2.0 * spread);
    let y = rp1 * s * (rho1 - z) / tilt;
    let x = x_from_yz(geom, joints, y, z, s, c);
    Ok(PlatformPose::new(x, y, z, alpha))
}

fn leg_one_first_rod(geom: &MachineGeometry, joints: &JointCoordinates, pose: &PlatformPose) -> f64 {
    constraint_residuals(geom, pose, joints)[0]
}

/// The leg-I equation left over by the chain, at `alpha = 2 atan(t)` (mm^2).
pub fn fk_residual(geom: &MachineGeometry, joints: &JointCoordinates, t: f64) -> Result<f64, FkError> {
    residual_at(geom, joints, 2.0 * t.atan())
}

fn residual_at(geom: &MachineGeometry, joints: &JointCoordinates, alpha: f64) -> Result<f64, FkError> {
    let pose = fk_chain(geom, joints, alpha)?;
    Ok(leg_one_first_rod(geom, joints, &pose))
}

/// `fk_residual * spread(alpha)^2`, continuous and bounded in `alpha`.
fn homogeneous_residual(geom: &MachineGeometry, joints: &JointCoordinates, alpha: f64) -> Result<f64, FkError> {
    let (s, c) = alpha.sin_cos();
    let sp = spread(geom, joints, s, c);
    Ok(residual_at(geom, joints, alpha)? * sp * sp)
}

/// Cleared residual `fk_residual(t) (1 + t^2)^2 d(t)^2`, where
/// `d(t) = (1 + t^2) spread(alpha)` is the spread written as a quadratic in
/// `t`. This is the polynomial that [`fk_polynomial`] represents.
pub fn fk_cleared_residual(geom: &MachineGeometry, joints: &JointCoordinates, t: f64) -> Result<f64, FkError> {
    let alpha = 2.0 * t.atan();
    let tt = 1.0 + t * t;
    Ok(homogeneous_residual(geom, joints, alpha)? * tt.powi(4))
}

/// Coefficients of the spread written as a quadratic in `t`, ascending.
pub fn spread_polynomial_coeffs(geom: &MachineGeometry, joints: &JointCoordinates) -> [f64; 3] {
    let (rp1, rs1) = (geom.platform_y_1, geom.slider_y_1);
    let dr = joints.rho2 - joints.rho3;
    [dr * (rp1 - rs1), 4.0 * pair_coupling(geom), -dr * (rp1 + rs1)]
}

/// Degree-8 characteristic polynomial in `t = tan(alpha/2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FkPolynomial {
    /// Ascending coefficients `c_0 .. c_8`.
    pub coeffs: [f64; FK_DEGREE + 1],
    /// Relative misfit of the fit at the sampling nodes.
    pub conditioning: f64,
}

impl FkPolynomial {
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// `sum |c_k| |t|^k`
    pub fn magnitude_at(&self, t: f64) -> f64 {
        let at = t.abs();
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * at + c.abs())
    }

    /// Value of the homogeneous form at `alpha`: `sum c_k sin^k cos^(8-k)` of
    /// the half angle.
    pub fn eval_angle(&self, alpha: f64) -> f64 {
        let (sh, ch) = (0.5 * alpha).sin_cos();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * sh.powi(k as i32) * ch.powi((FK_DEGREE - k) as i32))
            .sum()
    }

    pub fn degree(&self) -> usize {
        let scale = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        (0..=FK_DEGREE)
            .rev()
            .find(|&k| self.coeffs[k].abs() > crate::rootfind::TRIM_THRESHOLD * scale)
            .unwrap_or(0)
    }
}

fn half_angle_basis(alpha: f64) -> [f64; FK_DEGREE + 1] {
    let (sh, ch) = (0.5 * alpha).sin_cos();
    let mut out = [0.0; FK_DEGREE + 1];
    for (k, v) in out.iter_mut().enumerate() {
        *v = sh.powi(k as i32) * ch.powi((FK_DEGREE - k) as i32);
    }
    out
}

/// Builds the characteristic polynomial by least squares on `FIT_NODES`
/// rotations spread over the full circle. Sampling in `alpha` rather than `t`
/// keeps the system well conditioned and covers `alpha = pi`.
pub fn fk_polynomial(geom: &MachineGeometry, joints: &JointCoordinates) -> Result<FkPolynomial, FkError> {
    let mut rows = Vec::with_capacity(FIT_NODES);
    let mut values = Vec::with_capacity(FIT_NODES);
    for j in 0..FIT_NODES {
        let mut alpha = -PI + 2.0 * PI * (j as f64 + 0.5) / FIT_NODES as f64 + 0.0123;
        // step off chain singularities; the form itself is continuous there
        for _ in 0..8 {
            match homogeneous_residual(geom, joints, alpha) {
                Ok(v) => {
                    rows.push(half_angle_basis(alpha));
                    values.push(v);
                    break;
                }
                Err(_) => alpha += 1e-3,
            }
        }
    }
    if rows.len() < 2 * FK_DEGREE + 1 {
        return Err(FkError::ConditioningFailure(f64::INFINITY));
    }

    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(FkPolynomial { coeffs: [0.0; FK_DEGREE + 1], conditioning: 0.0 });
    }
    let m = DMatrix::from_fn(rows.len(), FK_DEGREE + 1, |i, k| rows[i][k]);
    let rhs = DVector::from_iterator(values.len(), values.iter().map(|v| v / scale));
    let svd = m.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|_| FkError::ConditioningFailure(f64::INFINITY))?;
    let misfit = (&m * &sol - &rhs).amax();
    if !(misfit <= FIT_TOLERANCE) {
        return Err(FkError::ConditioningFailure(misfit));
    }
    let mut coeffs = [0.0; FK_DEGREE + 1];
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c = sol[k] * scale;
    }
    Ok(FkPolynomial { coeffs, conditioning: misfit })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FkFeasibility {
    pub within_joint_limits: bool,
    pub no_rod_crossing: bool,
    /// Same Jacobian-determinant sign as the home configuration, i.e. not
    /// separated from it by a parallel singularity.
    pub same_aspect_as_home: bool,
    pub is_reachable_mode: bool,
}

/// Sign of the constraint-Jacobian determinant at the home pose in the
/// all-negative working mode. `None` when home is singular or unreachable.
pub fn home_aspect(geom: &MachineGeometry) -> Option<Sign> {
    let home = geom.home_pose();
    let joints = actuator_inputs(geom, &home, &ConfigurationIndices::WORKING_MODE).ok()?;
    aspect_of(geom, &home, &joints)
}

/// Sign of the constraint-Jacobian determinant, `None` near a singularity.
pub fn aspect_of(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates) -> Option<Sign> {
    let det = normalized_jacobian_determinant(geom, pose, joints);
    (det.abs() > SINGULAR_DETERMINANT).then(|| Sign::of(det))
}

/// One real solution of the forward problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssemblyMode {
    /// `tan(alpha/2)`; infinite for `alpha = pi`.
    #[serde(serialize_with = "finite_or_null")]
    pub t: f64,
    pub pose: PlatformPose,
    pub indices: ConfigurationIndices,
    pub feasibility: FkFeasibility,
    pub max_residual: f64,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Where a candidate rotation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Polynomial,
    HalfTurn,
    LegOneTilt,
    LegPairSpread,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FkDiagnostic {
    pub alpha: Option<f64>,
    pub source: Option<CandidateSource>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FkSolutionSet {
    pub modes: Vec<AssemblyMode>,
    pub diagnostics: Vec<FkDiagnostic>,
}

/// All verified assembly modes for the given slider positions, sorted by `t`.
pub fn forward_kinematics_all(geom: &MachineGeometry, joints: &JointCoordinates) -> FkSolutionSet {
    let mut diagnostics = Vec::new();
    let mut candidates: Vec<(f64, CandidateSource)> = Vec::new();

    match fk_polynomial(geom, joints) {
        Ok(poly) => match Polynomial::new(poly.coeffs.to_vec()) {
            Ok(p) => {
                for root in real_roots(&p, None).expect("finite coefficients") {
                    let alpha = polish_rotation(geom, joints, 2.0 * root.value.atan());
                    candidates.push((alpha, CandidateSource::Polynomial));
                }
            }
            Err(e) => diagnostics.push(FkDiagnostic {
                alpha: None,
                source: Some(CandidateSource::Polynomial),
                reason: format!("characteristic polynomial vanishes identically ({e})"),
            }),
        },
        Err(e) => diagnostics.push(FkDiagnostic {
            alpha: None,
            source: Some(CandidateSource::Polynomial),
            reason: e.to_string(),
        }),
    }

    // t = tan(alpha/2) cannot represent the half turn
    candidates.push((PI, CandidateSource::HalfTurn));

    let (rp1, rs1) = (geom.platform_y_1, geom.slider_y_1);
    if rs1 <= rp1 {
        let a = (rs1 / rp1).acos();
        candidates.push((a, CandidateSource::LegOneTilt));
        candidates.push((-a, CandidateSource::LegOneTilt));
    }

    if let Ok(p) = Polynomial::new(spread_polynomial_coeffs(geom, joints).to_vec()) {
        for root in real_roots(&p, None).expect("finite coefficients") {
            candidates.push((2.0 * root.value.atan(), CandidateSource::LegPairSpread));
        }
    } else {
        diagnostics.push(FkDiagnostic {
            alpha: None,
            source: Some(CandidateSource::LegPairSpread),
            reason: "rho2 = rho3 and r4 R1 = r1 R2: the leg-II/III difference never fixes z_p".into(),
        });
    }

    let reference = home_aspect(geom);
    let mut modes: Vec<AssemblyMode> = Vec::new();
    for (alpha, source) in candidates {
        for pose in solve_at_rotation(geom, joints, alpha) {
            let (pose, max_residual) = refine_pose(geom, joints, pose);
            if !(max_residual <= RESIDUAL_TOLERANCE) {
                if source == CandidateSource::Polynomial {
                    diagnostics.push(FkDiagnostic {
                        alpha: Some(pose.alpha),
                        source: Some(source),
                        reason: format!("substitution residual {max_residual:.3e} mm^2 exceeds tolerance"),
                    });
                }
                continue;
            }
            let mode = make_mode(geom, joints, pose, max_residual, reference);
            if let Some(existing) = modes.iter_mut().find(|m| same_mode(m, &mode)) {
                if mode.max_residual < existing.max_residual {
                    *existing = mode;
                }
            } else {
                modes.push(mode);
            }
        }
    }
    modes.sort_by(|a, b| a.pose.alpha.total_cmp(&b.pose.alpha).then(a.pose.z_p.total_cmp(&b.pose.z_p)));
    FkSolutionSet { modes, diagnostics }
}

fn max_residual(geom: &MachineGeometry, joints: &JointCoordinates, pose: &PlatformPose) -> f64 {
    constraint_residuals(geom, pose, joints).iter().fold(0.0_f64, |m, r| m.max(r.abs()))
}

/// Near a parallel singularity the chain amplifies a last-ulp rotation error
/// past the substitution tolerance. A few full-system Newton steps recover
/// the pose; the result is kept only if it stays on the same solution.
fn refine_pose(geom: &MachineGeometry, joints: &JointCoordinates, pose: PlatformPose) -> (PlatformPose, f64) {
    let r0 = max_residual(geom, joints, &pose);
    if r0 <= RESIDUAL_TOLERANCE || !r0.is_finite() {
        return (pose, r0);
    }
    match newton_fk(geom, joints, &pose, REFINE_STEPS, 1e-3 * RESIDUAL_TOLERANCE) {
        Ok(rep)
            if rep.pose.position_distance(&pose) <= REFINE_RADIUS
                && angle_difference(rep.pose.alpha, pose.alpha).abs() <= REFINE_RADIUS / geom.length_scale() =>
        {
            let r = max_residual(geom, joints, &rep.pose);
            if r < r0 { (rep.pose, r) } else { (pose, r0) }
        }
        _ => (pose, r0),
    }
}

fn same_mode(a: &AssemblyMode, b: &AssemblyMode) -> bool {
    let close_t = if a.t.is_finite() && b.t.is_finite() {
        (a.t - b.t).abs() <= ROOT_DEDUP * (1.0 + a.t.abs())
    } else {
        (angle_difference(a.pose.alpha, b.pose.alpha)).abs() <= ROOT_DEDUP
    };
    close_t && a.pose.position_distance(&b.pose) <= 1e-5
}

fn make_mode(
    geom: &MachineGeometry,
    joints: &JointCoordinates,
    pose: PlatformPose,
    max_residual: f64,
    reference: Option<Sign>,
) -> AssemblyMode {
    let indices = ConfigurationIndices::observed(geom, &pose, joints);
    let t = if pose.alpha == PI { f64::INFINITY } else { (0.5 * pose.alpha).tan() };
    // without a usable reference the aspect test is skipped
    let same_aspect_as_home = match reference {
        Some(r) => aspect_of(geom, &pose, joints) == Some(r),
        None => true,
    };
    AssemblyMode {
        t,
        pose,
        indices,
        feasibility: FkFeasibility {
            within_joint_limits: geom.within_limits(joints),
            no_rod_crossing: geom.rods_uncrossed(pose.alpha),
            same_aspect_as_home,
            is_reachable_mode: same_aspect_as_home && passes_selection_filters(geom, &pose, joints, &indices),
        },
        max_residual,
    }
}

/// Candidate poses at a fixed rotation, falling back to the degenerate
/// reductions when a chain denominator vanishes.
fn solve_at_rotation(geom: &MachineGeometry, joints: &JointCoordinates, alpha: f64) -> Vec<PlatformPose> {
    match fk_chain(geom, joints, alpha) {
        Ok(pose) => vec![pose],
        Err(FkError::DegenerateChain(ChainDenominator::LegOneTilt)) => solve_tilt_degenerate(geom, joints, alpha).into_iter().collect(),
        Err(FkError::DegenerateChain(ChainDenominator::LegPairSpread)) => solve_spread_degenerate(geom, joints, alpha),
        Err(FkError::ConditioningFailure(_)) => unreachable!("the chain never fits polynomials"),
    }
}

/// `R1 cos(alpha) = r1`: the leg-I difference forces `z_p = rho1` (for
/// `sin(alpha) != 0`) and the leg-II/III difference then fixes `y_p`.
fn solve_tilt_degenerate(geom: &MachineGeometry, joints: &JointCoordinates, alpha: f64) -> Option<PlatformPose> {
    let (s, c) = alpha.sin_cos();
    let (rp2, rs2) = (geom.platform_y_23, geom.slider_y_23);
    let [_, l2, l3] = geom.rod_length;
    let w = rp2 * c - rs2;
    if s.abs() <= CHAIN_EPS || w.abs() <= CHAIN_EPS * rp2 {
        return None;
    }
    let z = joints.rho1;
    let q = joints.rho3 - joints.rho2 - 2.0 * rp2 * s;
    let y = ((2.0 * z - joints.rho2 - joints.rho3) * q - (l2 * l2 - l3 * l3)) / (4.0 * w);
    let x = x_from_yz(geom, joints, y, z, s, c);
    Some(PlatformPose::new(x, y, z, alpha))
}

/// `spread = 0`: `z_p` is free in the leg-II/III difference. With `y_p` and
/// `x_p` affine in `z_p`, the remaining leg-I equation is a quadratic in
/// `z_p`. Poses that violate the leg-II/III difference are rejected later by
/// substitution.
fn solve_spread_degenerate(geom: &MachineGeometry, joints: &JointCoordinates, alpha: f64) -> Vec<PlatformPose> {
    let (s, c) = alpha.sin_cos();
    let tilt = tilt(geom, c);
    if tilt.abs() <= CHAIN_EPS * geom.platform_y_1 {
        return Vec::new();
    }
    let rp1 = geom.platform_y_1;
    let pose_at = |z: f64| {
        let y = rp1 * s * (joints.rho1 - z) / tilt;
        let x = x_from_yz(geom, joints, y, z, s, c);
        PlatformPose::new(x, y, z, alpha)
    };
    let h = geom.length_scale();
    let q = |z: f64| leg_one_first_rod(geom, joints, &pose_at(z));
    let (q0, qp, qm) = (q(0.0), q(h), q(-h));
    let a = (qp + qm - 2.0 * q0) / (2.0 * h * h);
    let b = (qp - qm) / (2.0 * h);
    let Ok(p) = Polynomial::new(vec![q0, b, a]) else {
        return Vec::new();
    };
    real_roots(&p, None)
        .expect("finite coefficients")
        .into_iter()
        .map(|r| pose_at(r.value))
        .collect()
}

/// Refines a rotation root on the continuous form `fk_residual * spread^2`:
/// bracket and bisect/regula-falsi when a sign change is found nearby,
/// otherwise a few guarded secant-Newton steps (double roots).
fn polish_rotation(geom: &MachineGeometry, joints: &JointCoordinates, alpha0: f64) -> f64 {
    let f = |a: f64| homogeneous_residual(geom, joints, a).ok();
    let Some(f0) = f(alpha0) else {
        return alpha0;
    };
    if f0 == 0.0 {
        return alpha0;
    }

    let mut delta = 1e-10;
    while delta <= 1e-4 {
        if let (Some(lo), Some(hi)) = (f(alpha0 - delta), f(alpha0 + delta)) {
            if lo.signum() != hi.signum() {
                if let Some(root) = illinois(&f, alpha0 - delta, lo, alpha0 + delta, hi) {
                    return root;
                }
            }
        }
        delta *= 10.0;
    }

    let mut alpha = alpha0;
    let mut fa = f0.abs();
    for _ in 0..16 {
        let h = 1e-7 * (1.0 + alpha.abs());
        let (Some(fp), Some(fm), Some(fc)) = (f(alpha + h), f(alpha - h), f(alpha)) else {
            break;
        };
        let d = (fp - fm) / (2.0 * h);
        let dd = (fp + fm - 2.0 * fc) / (h * h);
        // Newton on f, falling back to Newton on f' near a double root
        let step = if d != 0.0 && (fc / d).abs() < 1e-3 { fc / d } else if dd != 0.0 { d / dd } else { break };
        let next = alpha - step;
        match f(next) {
            Some(fnext) if fnext.abs() < fa => {
                alpha = next;
                fa = fnext.abs();
            }
            _ => break,
        }
    }
    alpha
}

/// Illinois variant of regula falsi on a sign-changing bracket.
fn illinois(f: &impl Fn(f64) -> Option<f64>, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Option<f64> {
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c)?;
        if fc == 0.0 || (b - a).abs() <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            return Some(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Some(if fa.abs() < fb.abs() { a } else { b })
}

/// The assembly mode the machine can reach: the working-mode filter stack
/// plus the home aspect. Remaining ties go to the smallest `|alpha|`.
pub fn select_assembly_mode(modes: &[AssemblyMode], _geom: &MachineGeometry) -> Option<Selection<AssemblyMode>> {
    select_by(modes, |m| m.pose.alpha, |m| m.feasibility.is_reachable_mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse_kinematics::actuator_inputs;

    fn geom() -> MachineGeometry {
        MachineGeometry::synthetic()
    }

    fn sample_config() -> (PlatformPose, JointCoordinates) {
        let g = geom();
        let el = crate::coupling::coupling_ellipse(&g, 0.35).unwrap();
        let (x, y) = el.point(-1.0);
        let pose = PlatformPose::new(x, y, 1000.0, 0.35);
        let joints = actuator_inputs(&g, &pose, &ConfigurationIndices::WORKING_MODE).unwrap();
        (pose, joints)
    }

    #[test]
    fn chain_recovers_consistent_configuration() {
        let g = geom();
        let (pose, joints) = sample_config();
        let back = fk_chain(&g, &joints, pose.alpha).unwrap();
        assert!((back.x_p - pose.x_p).abs() <= 1e-9 * pose.x_p.abs().max(1.0));
        assert!((back.y_p - pose.y_p).abs() <= 1e-9 * pose.y_p.abs().max(1.0));
        assert!((back.z_p - pose.z_p).abs() <= 1e-9 * pose.z_p.abs());
        let t = (0.5 * pose.alpha).tan();
        assert!(fk_residual(&g, &joints, t).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn chain_symmetric_inputs_give_zero_lateral_offset() {
        // rho2 = rho3 at alpha = 0 is a chain singularity; just off it the
        // reconstructed y_p tends to zero
        let g = geom();
        let joints = JointCoordinates::new(300.0, 280.0, 280.0);
        assert_eq!(
            fk_chain(&g, &joints, 0.0),
            Err(FkError::DegenerateChain(ChainDenominator::LegPairSpread))
        );
        let pose = fk_chain(&g, &joints, 1e-9).unwrap();
        assert!(pose.y_p.abs() < 1e-3, "{pose:?}");
    }

    #[test]
    fn chain_reports_tilt_singularity() {
        let g = geom();
        let a = (g.slider_y_1 / g.platform_y_1).acos();
        let (_, joints) = sample_config();
        assert_eq!(fk_chain(&g, &joints, a), Err(FkError::DegenerateChain(ChainDenominator::LegOneTilt)));
    }

    #[test]
    fn polynomial_matches_cleared_residual() {
        let g = geom();
        let (_, joints) = sample_config();
        let poly = fk_polynomial(&g, &joints).unwrap();
        for k in 0..40 {
            let t = -3.0 + 0.153 * k as f64;
            let v = fk_cleared_residual(&g, &joints, t).unwrap();
            assert!((poly.eval(t) - v).abs() <= 1e-8 * poly.magnitude_at(t), "t={t}");
        }
        assert!(poly.degree() <= FK_DEGREE);
    }

    #[test]
    fn round_trip_recovers_working_pose() {
        let g = geom();
        let (pose, joints) = sample_config();
        let set = forward_kinematics_all(&g, &joints);
        assert!(set.modes.len() <= 8);
        let hit = set
            .modes
            .iter()
            .find(|m| m.pose.position_distance(&pose) <= 1e-6)
            .expect("original pose among modes");
        assert!((hit.pose.alpha - pose.alpha).abs() <= 1e-9);
        for m in &set.modes {
            assert!(m.max_residual <= RESIDUAL_TOLERANCE);
        }
        let chosen = select_assembly_mode(&set.modes, &g).unwrap();
        assert!(chosen.choice.pose.position_distance(&pose) <= 1e-6);
    }

    #[test]
    fn reversed_slider_rejected() {
        let g = geom();
        let (_, joints) = sample_config();
        let set = forward_kinematics_all(&g, &joints);
        for m in &set.modes {
            if m.indices.s1 == crate::inverse_kinematics::Sign::Positive {
                assert!(!m.feasibility.is_reachable_mode);
            }
        }
    }
}
