//! Position/orientation coupling imposed by leg I.
//!
//! Eliminating the leg-I slider position from its two rod constraints leaves
//! one relation between `x_p`, `y_p` and `alpha`. For a fixed `alpha` it is
//! an ellipse centred at `x_p = d1 - D1, y_p = 0`; read as a polynomial in
//! `cos(alpha)` it is a cubic whose real roots give the reachable
//! orientations of a position.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::MachineGeometry;
use crate::rootfind::{real_roots, Polynomial};

/// Accepted overshoot of `|cos(alpha)|` beyond 1 before clamping.
pub const COS_CLAMP_TOLERANCE: f64 = 1e-12;

/// Orientation roots closer than this are the same orientation.
pub const ORIENTATION_DEDUP: f64 = 1e-9;

const SIN_ZERO: f64 = 1e-12;
const NEAR_AXIS: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("alpha = {alpha} has sin(alpha) = 0: the locus collapses to the segment y_p = 0, |x_p - center| <= {half_length}")]
    DegenerateOrientation { alpha: f64, half_length: f64 },
    #[error("alpha = {alpha} is unreachable: leg I rods are too short for this rotation")]
    UnreachableOrientation { alpha: f64 },
    #[error("no feasible orientation at x_p = {x_p}, y_p = {y_p}")]
    NoFeasibleOrientation { x_p: f64, y_p: f64 },
    #[error("alpha step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// Iso-orientation ellipse `(x_p - center_x)^2 / a^2 + y_p^2 / b^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingEllipse {
    pub a: f64,
    pub b: f64,
    pub center_x: f64,
    pub alpha: f64,
}

impl CouplingEllipse {
    pub fn point(&self, theta: f64) -> (f64, f64) {
        (self.center_x + self.a * theta.cos(), self.b * theta.sin())
    }

    /// `n` points at evenly spaced parameter values.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| self.point(2.0 * PI * k as f64 / n as f64))
            .collect()
    }
}

pub fn coupling_ellipse(geom: &MachineGeometry, alpha: f64) -> Result<CouplingEllipse, CouplingError> {
    let (s, c) = alpha.sin_cos();
    let a_sq = geom.leg1_midline_sq(c);
    if a_sq <= 0.0 {
        return Err(CouplingError::UnreachableOrientation { alpha });
    }
    let a = a_sq.sqrt();
    if s.abs() <= SIN_ZERO {
        return Err(CouplingError::DegenerateOrientation { alpha, half_length: a });
    }
    let (rp, rs) = (geom.platform_y_1, geom.slider_y_1);
    let m = rp * rp + rs * rs - 2.0 * rp * rs * c;
    let b = (rp * rp * s * s * a_sq / m).sqrt();
    Ok(CouplingEllipse { a, b, center_x: -geom.leg1_x_offset(), alpha })
}

/// Left-hand side of the coupling relation at `(x_p, y_p, alpha)`:
/// `R1^2 sin^2 (x + D1 - d1)^2 + M y^2 - R1^2 sin^2 a^2`. Negative strictly
/// inside the ellipse, positive outside.
pub fn coupling_residual(geom: &MachineGeometry, x_p: f64, y_p: f64, alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let (rp, rs) = (geom.platform_y_1, geom.slider_y_1);
    let e = x_p + geom.leg1_x_offset();
    let m = rp * rp + rs * rs - 2.0 * rp * rs * c;
    rp * rp * s * s * e * e + m * y_p * y_p - rp * rp * s * s * geom.leg1_midline_sq(c)
}

/// `coupling_residual / (R1^2 L1^2)`: the relation expressed relative to its
/// natural mm^4 scale, so tolerances do not depend on machine size.
pub fn normalized_coupling_residual(geom: &MachineGeometry, x_p: f64, y_p: f64, alpha: f64) -> f64 {
    coupling_residual(geom, x_p, y_p, alpha) / (geom.platform_y_1 * geom.rod_length[0]).powi(2)
}

fn coupling_residual_derivative(geom: &MachineGeometry, x_p: f64, y_p: f64, alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let (rp, rs) = (geom.platform_y_1, geom.slider_y_1);
    let e = x_p + geom.leg1_x_offset();
    let gap = e * e - geom.leg1_midline_sq(c);
    2.0 * rp * rp * s * c * gap + 2.0 * rp.powi(3) * rs * s.powi(3) + 2.0 * rp * rs * s * y_p * y_p
}

/// Cubic in `cos(alpha)`: `p1 c^3 + p2 c^2 + p3 c + p4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrientationCubic {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
}

impl OrientationCubic {
    pub fn eval(&self, c: f64) -> f64 {
        ((self.p1 * c + self.p2) * c + self.p3) * c + self.p4
    }

    pub fn max_coeff(&self) -> f64 {
        [self.p1, self.p2, self.p3, self.p4]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn as_polynomial(&self) -> Polynomial {
        Polynomial::new(vec![self.p4, self.p3, self.p2, self.p1]).expect("leading coefficient 2 R1^3 r1 > 0")
    }
}

pub fn orientation_cubic(geom: &MachineGeometry, x_p: f64, y_p: f64) -> OrientationCubic {
    let (rp, rs) = (geom.platform_y_1, geom.slider_y_1);
    let l1 = geom.rod_length[0];
    let e = x_p + geom.leg1_x_offset();
    let k = l1 * l1 - rp * rp - rs * rs;
    let (rp2, y2, e2) = (rp * rp, y_p * y_p, e * e);
    OrientationCubic {
        p1: 2.0 * rp2 * rp * rs,
        p2: rp2 * k - rp2 * e2,
        p3: -2.0 * rp2 * rp * rs - 2.0 * rp * rs * y2,
        p4: rp2 * e2 + (rp2 + rs * rs) * y2 - rp2 * k,
    }
}

/// Reachable platform orientations at `(x_p, y_p)`, ascending in `(-pi, pi]`.
///
/// Each cosine root yields the pair `±alpha`; `0` and `pi` are their own
/// mirror and appear once. At most four angles are returned.
pub fn feasible_orientations(geom: &MachineGeometry, x_p: f64, y_p: f64) -> Result<Vec<f64>, CouplingError> {
    let cubic = orientation_cubic(geom, x_p, y_p);
    let bound = 1.0 + COS_CLAMP_TOLERANCE;
    let roots = real_roots(&cubic.as_polynomial(), Some((-bound, bound))).expect("cubic is never zero");

    let e = x_p + geom.leg1_x_offset();
    let reach_tol = 1e-9 * geom.rod_length[0].powi(2);
    let mut out: Vec<f64> = Vec::with_capacity(4);
    for root in roots {
        let c = root.value.clamp(-1.0, 1.0);
        // sin(alpha) = 0 roots exist for every y_p = 0; keep only reachable ones
        if geom.leg1_midline_sq(c) - e * e - y_p * y_p < -reach_tol {
            continue;
        }
        let alpha = if 1.0 - c <= NEAR_AXIS {
            near_axis_orientation(geom, x_p, y_p, 1.0, 1.0 - c)
        } else if 1.0 + c <= NEAR_AXIS {
            near_axis_orientation(geom, x_p, y_p, -1.0, 1.0 + c)
        } else {
            polish_orientation(geom, x_p, y_p, c.acos())
        };
        if alpha <= ORIENTATION_DEDUP {
            out.push(0.0);
        } else if PI - alpha <= ORIENTATION_DEDUP {
            out.push(PI);
        } else {
            out.push(alpha);
            out.push(-alpha);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= ORIENTATION_DEDUP);
    debug_assert!(out.len() <= 4);

    if out.is_empty() {
        return Err(CouplingError::NoFeasibleOrientation { x_p, y_p });
    }
    Ok(out)
}

/// Root next to `cos(alpha) = sigma`, found on the cubic rewritten in
/// `h = 1 - sigma cos(alpha)`. acos loses half the digits there; `h` does not.
fn near_axis_orientation(geom: &MachineGeometry, x_p: f64, y_p: f64, sigma: f64, h0: f64) -> f64 {
    let (rp, rs) = (geom.platform_y_1, geom.slider_y_1);
    let l1 = geom.rod_length[0];
    let e = x_p + geom.leg1_x_offset();
    let k = l1 * l1 - rp * rp - rs * rs;
    let y2 = y_p * y_p;
    let q0 = y2 * (rp - sigma * rs).powi(2);
    let q1 = -4.0 * sigma * rp.powi(3) * rs - 2.0 * rp * rp * (k - e * e) + 2.0 * sigma * rp * rs * y2;
    let q2 = 6.0 * sigma * rp.powi(3) * rs + rp * rp * (k - e * e);
    let q3 = -2.0 * sigma * rp.powi(3) * rs;
    let q = |h: f64| ((q3 * h + q2) * h + q1) * h + q0;
    let dq = |h: f64| (3.0 * q3 * h + 2.0 * q2) * h + q1;

    let mut h = h0.max(0.0);
    for _ in 0..50 {
        let d = dq(h);
        if d == 0.0 {
            break;
        }
        let next = (h - q(h) / d).max(0.0);
        if next == h || !(q(next).abs() <= q(h).abs()) {
            break;
        }
        h = next;
    }
    let half = 2.0 * (0.5 * h).sqrt().min(1.0).asin();
    if sigma > 0.0 { half } else { PI - half }
}

/// Newton refinement of a non-negative orientation root directly on the
/// trigonometric coupling relation.
fn polish_orientation(geom: &MachineGeometry, x_p: f64, y_p: f64, alpha0: f64) -> f64 {
    if alpha0.sin().abs() < 1e-6 {
        return alpha0;
    }
    let mut alpha = alpha0;
    let mut g = coupling_residual(geom, x_p, y_p, alpha).abs();
    for _ in 0..8 {
        let d = coupling_residual_derivative(geom, x_p, y_p, alpha);
        if d == 0.0 {
            break;
        }
        let next = alpha - coupling_residual(geom, x_p, y_p, alpha) / d;
        if !(0.0..=PI).contains(&next) {
            break;
        }
        let g_next = coupling_residual(geom, x_p, y_p, next).abs();
        if !(g_next < g) {
            break;
        }
        alpha = next;
        g = g_next;
    }
    alpha
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoCurve {
    pub alpha: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedOrientation {
    pub alpha: f64,
    pub reason: String,
}

/// Iso-orientation ellipses over `(-pi, pi]`, plus the orientations that had
/// no drawable ellipse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoCurves {
    pub curves: Vec<IsoCurve>,
    pub skipped: Vec<SkippedOrientation>,
}

impl IsoCurves {
    /// CSV with header `alpha_rad,x_p_mm,y_p_mm`, one row per sample.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "alpha_rad,x_p_mm,y_p_mm")?;
        let mut line = String::new();
        for curve in &self.curves {
            for (x, y) in &curve.points {
                line.clear();
                let _ = write!(line, "{:.9},{:.6},{:.6}", curve.alpha, x, y);
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

/// Samples iso-orientation ellipses at `alpha = k * alpha_step` for every
/// integer `k` with `|alpha| <= pi`. The grid is symmetric, so `alpha` and
/// `-alpha` produce identical point sets.
pub fn iso_orientation_curves(
    geom: &MachineGeometry,
    alpha_step: f64,
    samples_per_curve: usize,
) -> Result<IsoCurves, CouplingError> {
    if !(alpha_step > 0.0 && alpha_step.is_finite()) {
        return Err(CouplingError::InvalidStep(alpha_step));
    }
    let n = (PI / alpha_step + 1e-9).floor() as i64;
    let mut curves = Vec::new();
    let mut skipped = Vec::new();
    for k in -n..=n {
        let alpha = k as f64 * alpha_step;
        match coupling_ellipse(geom, alpha) {
            Ok(ellipse) => curves.push(IsoCurve { alpha, points: ellipse.sample(samples_per_curve) }),
            Err(e) => skipped.push(SkippedOrientation { alpha, reason: e.to_string() }),
        }
    }
    Ok(IsoCurves { curves, skipped })
}
