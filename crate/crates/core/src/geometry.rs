//! Dimensional model of the parallel module, anchor coordinates, the four
//! rod-length constraints and the mobility count.
//!
//! Frame convention: the fixed frame has its z-axis pointing downward, so a
//! slider "above" the platform has the smaller z-coordinate. The platform
//! frame stays parallel to the fixed frame except for the coupled rotation
//! `alpha` about the x-axis.
//!
//! Leg I joins slider 1 to the platform through two rods that do not form a
//! parallelogram (slider anchors at `y = ±slider_y_1`, platform anchors at
//! `±platform_y_1` in the rotating frame). Legs II and III are parallelograms
//! whose rod pairs are spaced along x by `parallelogram_width`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot read geometry file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("geometry schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid geometry value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

/// Fixed dimensions of the module, in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineGeometry {
    /// x-offset of the leg-I platform anchors from P (`D1`).
    pub platform_x_1: f64,
    /// x-position of the leg-I guideway (`d1`).
    pub slider_x_1: f64,
    /// x-offset of the leg-II/III platform anchors from P (`D2`).
    pub platform_x_23: f64,
    /// x-position of the leg-II/III guideways (`d2`).
    pub slider_x_23: f64,
    /// Half-spacing of the leg-I platform anchors (`R1`).
    pub platform_y_1: f64,
    /// Half-spacing of the leg-I slider anchors (`r1`).
    pub slider_y_1: f64,
    /// y-offset of the leg-II/III platform anchors (`R2`).
    pub platform_y_23: f64,
    /// y-offset of the leg-II/III slider anchors (`r4`).
    pub slider_y_23: f64,
    /// Rod lengths of legs I, II, III.
    pub rod_length: [f64; 3],
    /// Slider travel `[min, max]` per leg.
    pub rho_limits: [[f64; 2]; 3],
    /// Rod spacing along x inside the leg-II/III parallelograms. Only affects
    /// anchor placement, never the constraint equations.
    pub parallelogram_width: f64,
}

/// On-disk geometry schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFile {
    #[serde(rename = "D1")]
    d1_upper: f64,
    d1: f64,
    #[serde(rename = "D2")]
    d2_upper: f64,
    d2: f64,
    #[serde(rename = "R1")]
    r1_upper: f64,
    r1: f64,
    #[serde(rename = "R2")]
    r2_upper: f64,
    r4: f64,
    #[serde(rename = "L1")]
    l1: f64,
    #[serde(rename = "L2")]
    l2: f64,
    #[serde(rename = "L3")]
    l3: f64,
    rho_limits: [[f64; 2]; 3],
    #[serde(default = "default_parallelogram_width")]
    parallelogram_width: f64,
}

fn default_parallelogram_width() -> f64 {
    100.0
}

impl MachineGeometry {
    /// Non-official synthetic geometry used by tests and examples.
    pub fn synthetic() -> Self {
        MachineGeometry {
            platform_x_1: 0.0,
            slider_x_1: 0.0,
            platform_x_23: 0.0,
            slider_x_23: 350.0,
            platform_y_1: 300.0,
            slider_y_1: 100.0,
            platform_y_23: 250.0,
            slider_y_23: 150.0,
            rod_length: [800.0, 800.0, 800.0],
            rho_limits: [[0.0, 1200.0]; 3],
            parallelogram_width: default_parallelogram_width(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, GeometryError> {
        let raw: GeometryFile = serde_json::from_str(s)?;
        let g = MachineGeometry {
            platform_x_1: raw.d1_upper,
            slider_x_1: raw.d1,
            platform_x_23: raw.d2_upper,
            slider_x_23: raw.d2,
            platform_y_1: raw.r1_upper,
            slider_y_1: raw.r1,
            platform_y_23: raw.r2_upper,
            slider_y_23: raw.r4,
            rod_length: [raw.l1, raw.l2, raw.l3],
            rho_limits: raw.rho_limits,
            parallelogram_width: raw.parallelogram_width,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let raw = GeometryFile {
            d1_upper: self.platform_x_1,
            d1: self.slider_x_1,
            d2_upper: self.platform_x_23,
            d2: self.slider_x_23,
            r1_upper: self.platform_y_1,
            r1: self.slider_y_1,
            r2_upper: self.platform_y_23,
            r4: self.slider_y_23,
            l1: self.rod_length[0],
            l2: self.rod_length[1],
            l3: self.rod_length[2],
            rho_limits: self.rho_limits,
            parallelogram_width: self.parallelogram_width,
        };
        serde_json::to_string_pretty(&raw).expect("geometry serializes")
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [
            ("D1", self.platform_x_1),
            ("d1", self.slider_x_1),
            ("D2", self.platform_x_23),
            ("d2", self.slider_x_23),
            ("R1", self.platform_y_1),
            ("r1", self.slider_y_1),
            ("R2", self.platform_y_23),
            ("r4", self.slider_y_23),
            ("L1", self.rod_length[0]),
            ("L2", self.rod_length[1]),
            ("L3", self.rod_length[2]),
            ("parallelogram_width", self.parallelogram_width),
        ];
        for (key, v) in all {
            if !v.is_finite() {
                return Err(invalid(key, format!("must be finite, got {v}")));
            }
        }
        for (key, v) in [
            ("R1", self.platform_y_1),
            ("r1", self.slider_y_1),
            ("R2", self.platform_y_23),
            ("r4", self.slider_y_23),
            ("L1", self.rod_length[0]),
            ("L2", self.rod_length[1]),
            ("L3", self.rod_length[2]),
        ] {
            if v <= 0.0 {
                return Err(invalid(key, format!("must be strictly positive, got {v}")));
            }
        }
        if self.parallelogram_width < 0.0 {
            return Err(invalid("parallelogram_width", "must be non-negative".into()));
        }
        let (rp, rs) = (self.platform_y_1, self.slider_y_1);
        if self.rod_length[0].powi(2) <= (rp - rs).powi(2) {
            return Err(invalid(
                "L1",
                format!("leg I cannot be assembled at zero rotation: L1 = {} <= |R1 - r1|", self.rod_length[0]),
            ));
        }
        let span = self.leg1_x_offset().abs().max(self.leg23_x_offset().abs()).max(1.0);
        if (self.leg1_x_offset() - self.leg23_x_offset()).abs() <= 1e-9 * span {
            return Err(invalid(
                "D2",
                "D1 - d1 must differ from D2 - d2, otherwise x_p cannot be eliminated".into(),
            ));
        }
        for (i, [lo, hi]) in self.rho_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(invalid(
                    "rho_limits",
                    format!("leg {} limits must satisfy min < max, got [{lo}, {hi}]", i + 1),
                ));
            }
        }
        Ok(())
    }

    /// `D1 - d1`
    pub fn leg1_x_offset(&self) -> f64 {
        self.platform_x_1 - self.slider_x_1
    }

    /// `D2 - d2`
    pub fn leg23_x_offset(&self) -> f64 {
        self.platform_x_23 - self.slider_x_23
    }

    /// `L1^2 - (R1^2 + r1^2 - 2 R1 r1 cos(alpha))`: squared rod length left
    /// for the leg-I midline once the rotation is fixed.
    pub fn leg1_midline_sq(&self, cos_alpha: f64) -> f64 {
        let (rp, rs) = (self.platform_y_1, self.slider_y_1);
        self.rod_length[0].powi(2) - (rp * rp + rs * rs - 2.0 * rp * rs * cos_alpha)
    }

    /// Rod-crossing guard for leg I: `R1 cos(alpha) > r1`.
    pub fn rods_uncrossed(&self, alpha: f64) -> bool {
        self.platform_y_1 * alpha.cos() > self.slider_y_1
    }

    /// Inclusive slider travel check.
    pub fn within_limits(&self, joints: &JointCoordinates) -> bool {
        joints
            .as_array()
            .iter()
            .zip(self.rho_limits.iter())
            .all(|(rho, [lo, hi])| *lo <= *rho && *rho <= *hi)
    }

    /// Typical length scale used for relative tolerances.
    pub fn length_scale(&self) -> f64 {
        self.rod_length.iter().fold(0.0_f64, |m, l| m.max(*l))
    }

    /// Reference pose: no rotation, leg I centred, leg-I slider at mid
    /// travel above the platform.
    pub fn home_pose(&self) -> PlatformPose {
        let [lo, hi] = self.rho_limits[0];
        let z = 0.5 * (lo + hi) + self.leg1_midline_sq(1.0).max(0.0).sqrt();
        PlatformPose::new(-self.leg1_x_offset(), 0.0, z, 0.0)
    }
}

fn invalid(key: &'static str, reason: String) -> GeometryError {
    GeometryError::Invalid { key, reason }
}

/// Platform pose: reference point P and the coupled x-rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformPose {
    pub x_p: f64,
    pub y_p: f64,
    pub z_p: f64,
    pub alpha: f64,
}

impl PlatformPose {
    pub fn new(x_p: f64, y_p: f64, z_p: f64, alpha: f64) -> Self {
        PlatformPose { x_p, y_p, z_p, alpha: normalize_angle(alpha) }
    }

    pub fn position_distance(&self, other: &PlatformPose) -> f64 {
        ((self.x_p - other.x_p).powi(2) + (self.y_p - other.y_p).powi(2) + (self.z_p - other.z_p).powi(2)).sqrt()
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r == -PI {
        r = PI;
    }
    r
}

/// Signed smallest difference between two angles.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Actuated slider positions along the vertical guideways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCoordinates {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
}

impl JointCoordinates {
    pub fn new(rho1: f64, rho2: f64, rho3: f64) -> Self {
        JointCoordinates { rho1, rho2, rho3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.rho1, self.rho2, self.rho3]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Body/joint counts entering the Grübler mobility formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MobilitySummary {
    pub n_bodies: u32,
    pub n_joints: u32,
    pub sum_joint_dof: u32,
    pub n_internal_dof: u32,
    pub mobility: i64,
}

impl MobilitySummary {
    pub fn from_counts(n_bodies: u32, n_joints: u32, sum_joint_dof: u32, n_internal_dof: u32) -> Self {
        MobilitySummary {
            n_bodies,
            n_joints,
            sum_joint_dof,
            n_internal_dof,
            mobility: grubler_mobility(n_bodies, n_joints, sum_joint_dof, n_internal_dof),
        }
    }

    /// Counts of the module: 3 sliders, base, platform and 6 rods; 12 spherical
    /// and 3 prismatic joints; one spin freedom per rod.
    pub fn verne_module() -> Self {
        Self::from_counts(11, 15, 12 * 3 + 3, 6)
    }
}

/// `6 (N_p - N_i - 1) + sum f_i - m_int`, counting the ground among the bodies.
pub fn grubler_mobility(n_bodies: u32, n_joints: u32, sum_joint_dof: u32, n_internal_dof: u32) -> i64 {
    6 * (i64::from(n_bodies) - i64::from(n_joints) - 1) + i64::from(sum_joint_dof) - i64::from(n_internal_dof)
}

/// Spherical-joint centres. Index `[leg][rod]`, legs in order I, II, III.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub slider: [[Vector3<f64>; 2]; 3],
    pub platform: [[Vector3<f64>; 2]; 3],
}

impl AnchorSet {
    /// `|B - A|^2 - L^2` for every rod.
    pub fn rod_residuals(&self, geom: &MachineGeometry) -> [[f64; 2]; 3] {
        let mut out = [[0.0; 2]; 3];
        for leg in 0..3 {
            for rod in 0..2 {
                let d = self.platform[leg][rod] - self.slider[leg][rod];
                out[leg][rod] = d.norm_squared() - geom.rod_length[leg].powi(2);
            }
        }
        out
    }
}

pub fn anchor_points(geom: &MachineGeometry, joints: &JointCoordinates, pose: &PlatformPose) -> AnchorSet {
    let (s, c) = pose.alpha.sin_cos();
    let (rp1, rs1) = (geom.platform_y_1, geom.slider_y_1);
    let (rp2, rs2) = (geom.platform_y_23, geom.slider_y_23);
    let half_w = 0.5 * geom.parallelogram_width;
    let p = Vector3::new(pose.x_p, pose.y_p, pose.z_p);

    let leg1_slider = [
        Vector3::new(geom.slider_x_1, rs1, joints.rho1),
        Vector3::new(geom.slider_x_1, -rs1, joints.rho1),
    ];
    let leg1_platform = [
        p + Vector3::new(geom.platform_x_1, rp1 * c, rp1 * s),
        p + Vector3::new(geom.platform_x_1, -rp1 * c, -rp1 * s),
    ];

    let pair = |side: f64, rho: f64| {
        let slider = [
            Vector3::new(geom.slider_x_23 - half_w, side * rs2, rho),
            Vector3::new(geom.slider_x_23 + half_w, side * rs2, rho),
        ];
        let platform = [
            p + Vector3::new(geom.platform_x_23 - half_w, side * rp2 * c, side * rp2 * s),
            p + Vector3::new(geom.platform_x_23 + half_w, side * rp2 * c, side * rp2 * s),
        ];
        (slider, platform)
    };
    let (leg2_slider, leg2_platform) = pair(-1.0, joints.rho2);
    let (leg3_slider, leg3_platform) = pair(1.0, joints.rho3);

    AnchorSet {
        slider: [leg1_slider, leg2_slider, leg3_slider],
        platform: [leg1_platform, leg2_platform, leg3_platform],
    }
}

/// Left-hand sides of the four independent rod constraints, in the order
/// leg I rod 1, leg I rod 2, leg II, leg III (mm^2).
pub fn constraint_residuals(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates) -> [f64; 4] {
    let (s, c) = pose.alpha.sin_cos();
    let (x, y, z) = (pose.x_p, pose.y_p, pose.z_p);
    let e = x + geom.leg1_x_offset();
    let f = x + geom.leg23_x_offset();
    let (rp1, rs1) = (geom.platform_y_1, geom.slider_y_1);
    let (rp2, rs2) = (geom.platform_y_23, geom.slider_y_23);
    let [l1, l2, l3] = geom.rod_length;

    [
        e * e + (y + rp1 * c - rs1).powi(2) + (z + rp1 * s - joints.rho1).powi(2) - l1 * l1,
        e * e + (y - rp1 * c + rs1).powi(2) + (z - rp1 * s - joints.rho1).powi(2) - l1 * l1,
        f * f + (y - rp2 * c + rs2).powi(2) + (z - rp2 * s - joints.rho2).powi(2) - l2 * l2,
        f * f + (y + rp2 * c - rs2).powi(2) + (z + rp2 * s - joints.rho3).powi(2) - l3 * l3,
    ]
}

pub fn max_abs_residual(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates) -> f64 {
    constraint_residuals(geom, pose, joints)
        .iter()
        .fold(0.0_f64, |m, r| m.max(r.abs()))
}

/// Partial derivatives of the four rod equations with respect to
/// `(x_p, y_p, z_p, alpha)`, one row per equation.
pub fn constraint_jacobian(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates) -> [[f64; 4]; 4] {
    let (s, c) = pose.alpha.sin_cos();
    let (rp1, rs1, rp2, rs2) = (geom.platform_y_1, geom.slider_y_1, geom.platform_y_23, geom.slider_y_23);
    let e = pose.x_p + geom.leg1_x_offset();
    let f = pose.x_p + geom.leg23_x_offset();
    let (y, z) = (pose.y_p, pose.z_p);

    let y3 = y + rp1 * c - rs1;
    let z3 = z + rp1 * s - joints.rho1;
    let y4 = y - rp1 * c + rs1;
    let z4 = z - rp1 * s - joints.rho1;
    let y5 = y - rp2 * c + rs2;
    let z5 = z - rp2 * s - joints.rho2;
    let y6 = y + rp2 * c - rs2;
    let z6 = z + rp2 * s - joints.rho3;

    [
        [2.0 * e, 2.0 * y3, 2.0 * z3, 2.0 * (-y3 * rp1 * s + z3 * rp1 * c)],
        [2.0 * e, 2.0 * y4, 2.0 * z4, 2.0 * (y4 * rp1 * s - z4 * rp1 * c)],
        [2.0 * f, 2.0 * y5, 2.0 * z5, 2.0 * (y5 * rp2 * s - z5 * rp2 * c)],
        [2.0 * f, 2.0 * y6, 2.0 * z6, 2.0 * (-y6 * rp2 * s + z6 * rp2 * c)],
    ]
}

/// Determinant of [`constraint_jacobian`]. Its sign labels the aspect: two
/// assembly modes with opposite signs are separated by a parallel
/// singularity.
pub fn jacobian_determinant(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates) -> f64 {
    Matrix4::from(constraint_jacobian(geom, pose, joints)).determinant()
}

/// `jacobian_determinant` divided by the product of the row norms, in
/// `[-1, 1]`.
pub fn normalized_jacobian_determinant(geom: &MachineGeometry, pose: &PlatformPose, joints: &JointCoordinates) -> f64 {
    let jac = constraint_jacobian(geom, pose, joints);
    let scale: f64 = jac.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).product();
    if scale == 0.0 {
        0.0
    } else {
        Matrix4::from(jac).determinant() / scale
    }
}
