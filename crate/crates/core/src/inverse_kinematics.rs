//! Inverse kinematics: every branch for a prescribed platform position.
//!
//! The position fixes up to four orientations (see [`crate::coupling`]). For
//! each orientation the slider positions follow in closed form, one square
//! root per leg. Leg I's sign is tied to the pose by the difference of its two
//! rod equations, legs II and III each contribute a free sign, which gives at
//! most sixteen solutions.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::coupling::{feasible_orientations, CouplingError};
use crate::geometry::{constraint_residuals, JointCoordinates, MachineGeometry, PlatformPose};

/// Every emitted solution satisfies all four constraints to this bound (mm^2).
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

const SIN_ZERO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IkError {
    #[error("no feasible orientation at x_p = {x_p}, y_p = {y_p}")]
    NoFeasibleOrientation { x_p: f64, y_p: f64 },
    #[error("pose is unreachable: leg {leg} radicand is {radicand}")]
    UnreachablePose { leg: usize, radicand: f64 },
    #[error("pose is inconsistent: the leg I rods cannot both be assembled (radicand {radicand})")]
    InconsistentPose { radicand: f64 },
}

impl From<CouplingError> for IkError {
    fn from(e: CouplingError) -> Self {
        match e {
            CouplingError::NoFeasibleOrientation { x_p, y_p } => IkError::NoFeasibleOrientation { x_p, y_p },
            other => unreachable!("orientation enumeration only fails as infeasible, got {other}"),
        }
    }
}

/// Sign of a square-root branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Positive => 1.0,
        }
    }

    /// Sign of `v`; zero is reported as `Negative`.
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Positive => Sign::Negative,
        }
    }

    fn product(a: f64, b: f64, c: f64) -> Sign {
        let neg = (a < 0.0) ^ (b < 0.0) ^ (c < 0.0);
        if neg {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Negative => "-1",
            Sign::Positive => "+1",
        })
    }
}

impl Serialize for Sign {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.value() as i8)
    }
}

/// Configuration indices: the branch sign of each leg's slider relative to
/// its platform reference height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ConfigurationIndices {
    pub s1: Sign,
    pub s2: Sign,
    pub s3: Sign,
}

impl ConfigurationIndices {
    pub const WORKING_MODE: ConfigurationIndices =
        ConfigurationIndices { s1: Sign::Negative, s2: Sign::Negative, s3: Sign::Negative };

    pub fn new(s1: Sign, s2: Sign, s3: Sign) -> Self {
        ConfigurationIndices { s1, s2, s3 }
    }

    /// Indices read off a configuration: signs of `rho1 - z`,
    /// `rho2 - z + R2 sin(alpha)` and `rho3 - z - R2 sin(alpha)`.
    pub fn observed(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates) -> Self {
        let offset = geom.platform_y_23 * pose.alpha.sin();
        ConfigurationIndices {
            s1: Sign::of(joints.rho1 - pose.z_p),
            s2: Sign::of(joints.rho2 - pose.z_p + offset),
            s3: Sign::of(joints.rho3 - pose.z_p - offset),
        }
    }

    /// All sliders above their platform anchors (z-axis points down).
    pub fn is_working_mode(&self) -> bool {
        *self == Self::WORKING_MODE
    }
}

impl fmt::Display for ConfigurationIndices {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.s1, self.s2, self.s3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IkFeasibility {
    pub within_joint_limits: bool,
    pub no_rod_crossing: bool,
    pub is_working_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IkSolution {
    pub pose: PlatformPose,
    pub joints: JointCoordinates,
    pub indices: ConfigurationIndices,
    pub feasibility: IkFeasibility,
    pub max_residual: f64,
}

/// A branch that was generated but not emitted, and why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IkDiagnostic {
    pub alpha: f64,
    pub indices: Option<ConfigurationIndices>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IkSolutionSet {
    pub solutions: Vec<IkSolution>,
    pub diagnostics: Vec<IkDiagnostic>,
}

/// Admissible leg-I branches for a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leg1Branch {
    /// `sin(alpha) = 0`: the two rod equations coincide, both signs are valid.
    Both,
    /// The sign forced by the leg-I rod difference equation.
    Unique(Sign),
    /// The midline is horizontal: `rho1 = z_p`.
    Forced { rho1: f64 },
}

/// Radicands of the three closed-form actuator equations.
pub fn leg_radicands(geom: &MachineGeometry, pose: &PlatformPose) -> [f64; 3] {
    let c = pose.alpha.cos();
    let e = pose.x_p + geom.leg1_x_offset();
    let f = pose.x_p + geom.leg23_x_offset();
    let (rp2, rs2) = (geom.platform_y_23, geom.slider_y_23);
    [
        geom.leg1_midline_sq(c) - e * e - pose.y_p * pose.y_p,
        geom.rod_length[1].powi(2) - f * f - (pose.y_p - rp2 * c + rs2).powi(2),
        geom.rod_length[2].powi(2) - f * f - (pose.y_p + rp2 * c - rs2).powi(2),
    ]
}

fn radicand_tolerance(geom: &MachineGeometry) -> f64 {
    1e-12 * geom.length_scale().powi(2)
}

/// Reference heights the three sliders are mirrored about.
fn reference_heights(geom: &MachineGeometry, pose: &PlatformPose) -> [f64; 3] {
    let offset = geom.platform_y_23 * pose.alpha.sin();
    [pose.z_p, pose.z_p - offset, pose.z_p + offset]
}

/// Slider positions for a pose and a choice of branch signs.
pub fn actuator_inputs(
    geom: &MachineGeometry,
    pose: &PlatformPose,
    indices: &ConfigurationIndices,
) -> Result<JointCoordinates, IkError> {
    let rad = leg_radicands(geom, pose);
    let tol = radicand_tolerance(geom);
    let base = reference_heights(geom, pose);
    let signs = [indices.s1, indices.s2, indices.s3];
    let mut rho = [0.0; 3];
    for leg in 0..3 {
        if rad[leg] < -tol {
            return Err(IkError::UnreachablePose { leg: leg + 1, radicand: rad[leg] });
        }
        rho[leg] = base[leg] + signs[leg].value() * rad[leg].max(0.0).sqrt();
    }
    Ok(JointCoordinates::new(rho[0], rho[1], rho[2]))
}

pub fn leg1_sign(geom: &MachineGeometry, pose: &PlatformPose) -> Result<Leg1Branch, IkError> {
    let (s, c) = pose.alpha.sin_cos();
    if s.abs() <= SIN_ZERO {
        return Ok(Leg1Branch::Both);
    }
    let tilt = geom.platform_y_1 * c - geom.slider_y_1;
    if tilt.abs() <= 1e-12 * geom.platform_y_1 || pose.y_p.abs() <= 1e-12 * geom.length_scale() {
        return Ok(Leg1Branch::Forced { rho1: pose.z_p });
    }
    let radicand = leg_radicands(geom, pose)[0];
    if radicand < -radicand_tolerance(geom) {
        return Err(IkError::InconsistentPose { radicand });
    }
    // sgn(rho1 - z) sgn(sin) = sgn(R1 cos - r1) sgn(y)
    Ok(Leg1Branch::Unique(Sign::product(tilt, pose.y_p, s)))
}

fn feasibility(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates, indices: &ConfigurationIndices) -> IkFeasibility {
    IkFeasibility {
        within_joint_limits: geom.within_limits(joints),
        no_rod_crossing: geom.rods_uncrossed(pose.alpha),
        is_working_mode: indices.is_working_mode(),
    }
}

/// All verified inverse kinematic solutions at `(x_p, y_p, z_p)`, sorted by
/// `alpha` and then by configuration indices.
pub fn inverse_kinematics_all(geom: &MachineGeometry, x_p: f64, y_p: f64, z_p: f64) -> Result<IkSolutionSet, IkError> {
    let alphas = feasible_orientations(geom, x_p, y_p)?;
    let tol = radicand_tolerance(geom);
    let mut solutions = Vec::with_capacity(16);
    let mut diagnostics = Vec::new();

    for alpha in alphas {
        let pose = PlatformPose::new(x_p, y_p, z_p, alpha);
        let rad = leg_radicands(geom, &pose);
        let base = reference_heights(geom, &pose);

        let leg1: Vec<(Sign, f64)> = match leg1_sign(geom, &pose) {
            Ok(Leg1Branch::Forced { rho1 }) => vec![(Sign::Negative, rho1)],
            Ok(branch) if rad[0] < -tol => {
                diagnostics.push(IkDiagnostic {
                    alpha,
                    indices: None,
                    reason: format!("leg 1 radicand {:.3e} is negative ({branch:?})", rad[0]),
                });
                continue;
            }
            Ok(Leg1Branch::Unique(s)) => vec![(s, base[0] + s.value() * rad[0].max(0.0).sqrt())],
            Ok(Leg1Branch::Both) => branch_values(base[0], rad[0], tol),
            Err(e) => {
                diagnostics.push(IkDiagnostic { alpha, indices: None, reason: e.to_string() });
                continue;
            }
        };
        let mut per_leg = vec![leg1];
        let mut unreachable = false;
        for leg in 1..3 {
            if rad[leg] < -tol {
                diagnostics.push(IkDiagnostic {
                    alpha,
                    indices: None,
                    reason: format!("leg {} radicand {:.3e} is negative", leg + 1, rad[leg]),
                });
                unreachable = true;
                break;
            }
            per_leg.push(branch_values(base[leg], rad[leg], tol));
        }
        if unreachable {
            continue;
        }

        for &(s1, rho1) in &per_leg[0] {
            for &(s2, rho2) in &per_leg[1] {
                for &(s3, rho3) in &per_leg[2] {
                    let joints = JointCoordinates::new(rho1, rho2, rho3);
                    let indices = ConfigurationIndices::new(s1, s2, s3);
                    let max_residual = constraint_residuals(geom, &pose, &joints)
                        .iter()
                        .fold(0.0_f64, |m, r| m.max(r.abs()));
                    if max_residual <= RESIDUAL_TOLERANCE {
                        solutions.push(IkSolution {
                            pose,
                            joints,
                            indices,
                            feasibility: feasibility(geom, &pose, &joints, &indices),
                            max_residual,
                        });
                    } else {
                        diagnostics.push(IkDiagnostic {
                            alpha,
                            indices: Some(indices),
                            reason: format!("substitution residual {max_residual:.3e} mm^2 exceeds tolerance"),
                        });
                    }
                }
            }
        }
    }

    solutions.sort_by(|a, b| {
        a.pose
            .alpha
            .total_cmp(&b.pose.alpha)
            .then_with(|| a.indices.cmp(&b.indices))
    });
    Ok(IkSolutionSet { solutions, diagnostics })
}

/// Both square-root branches about `base`, or one when they coincide.
fn branch_values(base: f64, radicand: f64, tol: f64) -> Vec<(Sign, f64)> {
    if radicand <= tol {
        vec![(Sign::Negative, base)]
    } else {
        let r = radicand.sqrt();
        vec![(Sign::Negative, base - r), (Sign::Positive, base + r)]
    }
}

/// Result of a working-mode or assembly-mode selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection<T> {
    pub choice: T,
    /// Number of candidates that passed every filter.
    pub survivors: usize,
    /// Set when more than one candidate survived; `choice` then has the
    /// smallest `|alpha|`.
    pub ambiguous: bool,
}

/// Shared filter stack: all indices negative, uncrossed leg-I rods, sliders
/// within travel.
pub fn passes_selection_filters(
    geom: &MachineGeometry,
    pose: &PlatformPose,
    joints: &JointCoordinates,
    indices: &ConfigurationIndices,
) -> bool {
    indices.is_working_mode() && geom.rods_uncrossed(pose.alpha) && geom.within_limits(joints)
}

pub(crate) fn select_by<T: Clone>(items: &[T], pose_of: impl Fn(&T) -> f64, keep: impl Fn(&T) -> bool) -> Option<Selection<T>> {
    let survivors: Vec<&T> = items.iter().filter(|s| keep(s)).collect();
    let choice = survivors
        .iter()
        .min_by(|a, b| pose_of(a).abs().partial_cmp(&pose_of(b).abs()).unwrap_or(Ordering::Equal))?;
    Some(Selection {
        choice: (*choice).clone(),
        survivors: survivors.len(),
        ambiguous: survivors.len() > 1,
    })
}

/// The solution the machine actually uses.
pub fn select_working_mode(solutions: &[IkSolution], geom: &MachineGeometry) -> Option<Selection<IkSolution>> {
    select_by(
        solutions,
        |s| s.pose.alpha,
        |s| passes_selection_filters(geom, &s.pose, &s.joints, &s.indices),
    )
}
