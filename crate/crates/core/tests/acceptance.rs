//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! The oracles here (dense scans, interpolation fits, finite differences,
//! anchor-point rod lengths) are written independently of the library code
//! they check.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use verne_core::coupling::{coupling_ellipse, feasible_orientations};
use verne_core::forward_kinematics::{
    fk_cleared_residual, fk_polynomial, forward_kinematics_all, select_assembly_mode, AssemblyMode,
};
use verne_core::geometry::{anchor_points, grubler_mobility, JointCoordinates, MachineGeometry, PlatformPose};
use verne_core::inverse_kinematics::{inverse_kinematics_all, select_working_mode};
use verne_core::oracle_bench::{compare_solvers, constraint_jacobian};
use verne_core::sampling::{draw_working_configuration, SamplingBox};

// pinned tolerances
const RESIDUAL_TOL: f64 = 1e-6; // mm^2
const ORIENTATION_TOL: f64 = 1e-8; // rad
const POSE_TOL: f64 = 1e-6; // mm
const ANGLE_TOL: f64 = 1e-9; // rad
const PROBE_TOL: f64 = 1e-8; // relative
const DEGREE_TAIL_TOL: f64 = 1e-8; // relative
const SCAN_MATCH_TOL: f64 = 1e-6; // in atan(t)
const JACOBIAN_TOL: f64 = 1e-5; // relative
const AGREEMENT_MIN: f64 = 0.99;

const ORIENTATION_SCAN_STEP: f64 = 1e-4;
const T_SCAN_STEP: f64 = 1e-3;
const FD_STEP: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn synthetic() -> MachineGeometry {
    MachineGeometry::synthetic()
}

/// Largest |rod length^2 - L^2| over the six rods, from the anchor points.
fn rod_misfit(geom: &MachineGeometry, joints: &JointCoordinates, pose: &PlatformPose) -> f64 {
    let anchors = anchor_points(geom, joints, pose);
    let mut worst: f64 = 0.0;
    for leg in 0..3 {
        for side in 0..2 {
            let d = anchors.platform[leg][side] - anchors.slider[leg][side];
            worst = worst.max((d.norm_squared() - geom.rod_length[leg].powi(2)).abs());
        }
    }
    worst
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sign-change roots of `f` on a uniform grid over `[lo, hi]`, skipping
/// non-finite samples.
fn scan(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    let mut roots = Vec::new();
    let mut prev = (lo, f(lo));
    for k in 1..=n {
        let x = (lo + k as f64 * step).min(hi);
        let fx = f(x);
        if prev.1.is_finite() && fx.is_finite() && prev.1 != 0.0 && fx.signum() != prev.1.signum() {
            roots.push(if fx == 0.0 { x } else { bisect(f, prev.0, x) });
        }
        prev = (x, fx);
    }
    roots
}

/// Coupling relation written directly from the two leg-I rod equations:
/// their sum and difference give `(x+D1-d1)^2 + y^2 + (z - rho1)^2 = a^2`
/// and `y (R1 c - r1) = R1 s (rho1 - z)` (with `a^2 = L1^2 - R1^2 - r1^2 +
/// 2 R1 r1 c`); eliminating `rho1 - z` and multiplying by `R1^2 s^2`.
fn coupling_oracle(g: &MachineGeometry, x: f64, y: f64, alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let (rp, rs) = (g.platform_y_1, g.slider_y_1);
    let e = x + g.platform_x_1 - g.slider_x_1;
    let a2 = g.rod_length[0].powi(2) - rp * rp - rs * rs + 2.0 * rp * rs * c;
    let tilt = rp * c - rs;
    (rp * s).powi(2) * (e * e + y * y - a2) + tilt * tilt * y * y
}

fn criterion_1() -> Outcome {
    let m = grubler_mobility(11, 15, 39, 6);
    outcome(m == 3, format!("m = {m}"))
}

fn criterion_2() -> Outcome {
    let g = synthetic();
    let bounds = SamplingBox::for_geometry(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut max_sol, mut max_orient, mut bad) = (0.0_f64, 0, 0, 0);
    for _ in 0..500 {
        let (pose, _) = draw_working_configuration(&g, &bounds, &mut rng);
        let set = match inverse_kinematics_all(&g, pose.x_p, pose.y_p, pose.z_p) {
            Ok(s) => s,
            Err(_) => {
                bad += 1;
                continue;
            }
        };
        for s in &set.solutions {
            worst = worst.max(rod_misfit(&g, &s.joints, &s.pose));
        }
        let mut alphas: Vec<f64> = set.solutions.iter().map(|s| s.pose.alpha).collect();
        alphas.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        max_sol = max_sol.max(set.solutions.len());
        if pose.y_p != 0.0 {
            max_orient = max_orient.max(alphas.len());
        }
    }
    // on-axis positions: sin(alpha) = 0 doubles the leg-I branches
    let mut max_axis = 0;
    for k in 0..20 {
        let x = -g.platform_x_1 + g.slider_x_1 - 300.0 + 30.0 * k as f64;
        if let Ok(set) = inverse_kinematics_all(&g, x, 0.0, 1000.0) {
            for s in &set.solutions {
                worst = worst.max(rod_misfit(&g, &s.joints, &s.pose));
            }
            max_axis = max_axis.max(set.solutions.len());
        }
    }
    let pass = bad == 0 && worst <= RESIDUAL_TOL && max_sol <= 16 && max_axis <= 16 && max_orient <= 4;
    outcome(
        pass,
        format!(
            "500 positions, unreachable={bad}, worst rod misfit={worst:.2e} mm^2, max solutions={max_sol} (on-axis {max_axis}), max orientations off-axis={max_orient}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let g = synthetic();
    let bounds = SamplingBox::for_geometry(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut mismatched) = (0.0_f64, 0);
    for _ in 0..100 {
        let (pose, _) = draw_working_configuration(&g, &bounds, &mut rng);
        // widen to off-pose points of the same region
        let x = pose.x_p + rng.random_range(-50.0..50.0);
        let y = pose.y_p + rng.random_range(-50.0..50.0);
        let f = |a: f64| coupling_oracle(&g, x, y, a);
        let scanned = scan(&f, -PI, PI, ORIENTATION_SCAN_STEP);
        let found = feasible_orientations(&g, x, y).unwrap_or_default();
        if scanned.len() != found.len() {
            mismatched += 1;
            continue;
        }
        for (a, b) in scanned.iter().zip(&found) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        mismatched == 0 && worst <= ORIENTATION_TOL,
        format!("100 positions, count mismatches={mismatched}, worst |delta alpha|={worst:.2e} rad"),
    )
}

fn criterion_4() -> Outcome {
    let g = synthetic();
    let bounds = SamplingBox::for_geometry(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut recovered, mut selected, mut ambiguous) = (0, 0, 0);
    let n = 500;
    for _ in 0..n {
        let (pose, joints) = draw_working_configuration(&g, &bounds, &mut rng);
        let set = forward_kinematics_all(&g, &joints);
        let same = |m: &AssemblyMode| {
            m.pose.position_distance(&pose) <= POSE_TOL && (m.pose.alpha - pose.alpha).abs() <= ANGLE_TOL
        };
        if set.modes.iter().any(same) {
            recovered += 1;
        }
        if let Some(sel) = select_assembly_mode(&set.modes, &g) {
            if sel.ambiguous {
                ambiguous += 1;
            }
            if same(&sel.choice) {
                selected += 1;
            }
        }
    }
    outcome(
        recovered == n && selected == n,
        format!("{n} poses, recovered={recovered}, selected={selected}, ambiguous selections={ambiguous}"),
    )
}

fn random_joints(g: &MachineGeometry, rng: &mut ChaCha8Rng) -> JointCoordinates {
    let r = |rng: &mut ChaCha8Rng, k: usize| rng.random_range(g.rho_limits[k][0]..g.rho_limits[k][1]);
    JointCoordinates::new(r(rng, 0), r(rng, 1), r(rng, 2))
}

/// Relative size of the degree 9..16 Chebyshev coefficients of the cleared
/// residual over `t` in [-2, 2].
fn degree_tail(g: &MachineGeometry, j: &JointCoordinates) -> f64 {
    const N: usize = 40;
    const DEG: usize = 16;
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for k in 0..N {
        let u = ((2 * k + 1) as f64 * PI / (2 * N) as f64).cos();
        if let Ok(v) = fk_cleared_residual(g, j, 2.0 * u) {
            ts.push(u);
            vs.push(v);
        }
    }
    let m = DMatrix::from_fn(ts.len(), DEG + 1, |i, k| (k as f64 * ts[i].acos()).cos());
    let coeffs = m.svd(true, true).solve(&DVector::from_vec(vs), 1e-15).expect("fit");
    let head = coeffs.rows(0, 9).amax();
    let tail = coeffs.rows(9, DEG - 8).amax();
    if head == 0.0 {
        0.0
    } else {
        tail / head
    }
}

/// Verified forward solutions located by a sign-change scan of the cleared
/// residual in `u = atan(t)`.
fn t_scan_modes(g: &MachineGeometry, j: &JointCoordinates) -> Vec<f64> {
    let f = |u: f64| fk_cleared_residual(g, j, u.tan()).unwrap_or(f64::NAN);
    let lim = 0.5 * PI - 1e-9;
    scan(&f, -lim, lim, T_SCAN_STEP)
}

fn criterion_5() -> Outcome {
    let g = synthetic();
    let bounds = SamplingBox::for_geometry(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let mut inputs: Vec<JointCoordinates> = (0..100).map(|_| draw_working_configuration(&g, &bounds, &mut rng).1).collect();
    inputs.extend((0..100).map(|_| random_joints(&g, &mut rng)));

    let (mut worst_tail, mut bad_degree, mut fit_errors) = (0.0_f64, 0, 0);
    let mut worst_probe = 0.0_f64;
    for j in &inputs {
        let poly = match fk_polynomial(&g, j) {
            Ok(p) => p,
            Err(_) => {
                fit_errors += 1;
                continue;
            }
        };
        if poly.degree() > 8 {
            bad_degree += 1;
        }
        worst_tail = worst_tail.max(degree_tail(&g, j));
        for k in 0..50 {
            let t = (-PI / 2.0 + PI * (k as f64 + 0.37) / 50.0).tan();
            if let Ok(v) = fk_cleared_residual(&g, j, t) {
                worst_probe = worst_probe.max((poly.eval(t) - v).abs() / poly.magnitude_at(t));
            }
        }
    }

    let (mut missed, mut unflagged_extra, mut checked) = (0, 0, 0);
    for j in inputs.iter().step_by(2) {
        checked += 1;
        let set = forward_kinematics_all(&g, j);
        let modes_u: Vec<f64> = set.modes.iter().filter(|m| m.t.is_finite()).map(|m| m.t.atan()).collect();
        let scanned: Vec<f64> = t_scan_modes(&g, j)
            .into_iter()
            .filter(|u| {
                // keep roots the elimination turns into genuine poses
                verne_core::forward_kinematics::fk_chain(&g, j, 2.0 * u)
                    .map(|p| verne_core::geometry::max_abs_residual(&g, &p, j) <= RESIDUAL_TOL)
                    .unwrap_or(true)
            })
            .collect();
        for u in &scanned {
            if !modes_u.iter().any(|m| (m - u).abs() <= SCAN_MATCH_TOL) {
                missed += 1;
            }
        }
        for m in &modes_u {
            if !scanned.iter().any(|u| (m - u).abs() <= SCAN_MATCH_TOL) {
                // must be an even-multiplicity root the scan cannot see
                let f = |u: f64| fk_cleared_residual(&g, j, u.tan()).unwrap_or(f64::NAN);
                let (a, b) = (f(m - 1e-4), f(m + 1e-4));
                if a.signum() != b.signum() {
                    unflagged_extra += 1;
                }
            }
        }
    }

    let pass = fit_errors == 0 && bad_degree == 0 && worst_tail <= DEGREE_TAIL_TOL && worst_probe <= PROBE_TOL && missed == 0 && unflagged_extra == 0;
    outcome(
        pass,
        format!(
            "200 inputs, fit errors={fit_errors}, degree>8={bad_degree}, worst tail={worst_tail:.1e}, worst probe={worst_probe:.1e}; scan on {checked}: missed={missed}, unexplained={unflagged_extra}"
        ),
    )
}

fn reconstructed_geometry() -> Option<MachineGeometry> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../geometry/verne_reconstructed.json");
    MachineGeometry::from_path(path).ok()
}

fn criterion_6_informational() -> String {
    let Some(g) = reconstructed_geometry() else {
        return "reconstructed geometry file missing".into();
    };
    let set = forward_kinematics_all(&g, &JointCoordinates::new(674.0, 685.0, 250.0));
    let rows: Vec<String> = set
        .modes
        .iter()
        .map(|m| format!("alpha={:.2} ({:.1}, {:.1}, {:.1})", m.pose.alpha, m.pose.x_p, m.pose.y_p, m.pose.z_p))
        .collect();
    let second = forward_kinematics_all(&g, &JointCoordinates::new(250.0, 1000.0, 750.0)).modes.len();
    let ik = inverse_kinematics_all(&g, -240.0, -86.0, 1000.0)
        .map(|s| (s.solutions.len(), select_working_mode(&s.solutions, &g).is_some()))
        .unwrap_or((0, false));
    format!(
        "reconstructed geometry: (674, 685, 250) -> {} modes [{}]; (250, 1000, 750) -> {second} modes; IK (-240, -86, 1000) -> {} solutions, selection {}",
        set.modes.len(),
        rows.join("; "),
        ik.0,
        if ik.1 { "found" } else { "none" }
    )
}

/// The three squared components of each rod equation at `(x, y, z, alpha)`.
fn rod_terms(g: &MachineGeometry, j: &JointCoordinates, v: [f64; 4]) -> [[f64; 3]; 4] {
    let [x, y, z, a] = v;
    let (s, c) = a.sin_cos();
    let e = x + g.platform_x_1 - g.slider_x_1;
    let f = x + g.platform_x_23 - g.slider_x_23;
    let (p1, q1, p2, q2) = (g.platform_y_1, g.slider_y_1, g.platform_y_23, g.slider_y_23);
    [
        [e, y + p1 * c - q1, z + p1 * s - j.rho1],
        [e, y - p1 * c + q1, z - p1 * s - j.rho1],
        [f, y - p2 * c + q2, z - p2 * s - j.rho2],
        [f, y + p2 * c - q2, z + p2 * s - j.rho3],
    ]
}

fn criterion_7() -> Outcome {
    let g = synthetic();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let pose = PlatformPose::new(
            rng.random_range(-400.0..400.0),
            rng.random_range(-300.0..300.0),
            rng.random_range(600.0..1400.0),
            rng.random_range(-PI..PI),
        );
        let joints = random_joints(&g, &mut rng);
        let jac = constraint_jacobian(&g, &pose, &joints);
        for col in 0..4 {
            let mut plus = [pose.x_p, pose.y_p, pose.z_p, pose.alpha];
            let mut minus = plus;
            plus[col] += FD_STEP;
            minus[col] -= FD_STEP;
            let (up, um) = (rod_terms(&g, &joints, plus), rod_terms(&g, &joints, minus));
            for row in 0..4 {
                // central difference of sum(u^2), each square differenced as
                // (u+ - u-)(u+ + u-) to keep the mm^2 magnitudes from cancelling
                let fd: f64 = (0..3).map(|k| (up[row][k] - um[row][k]) * (up[row][k] + um[row][k])).sum::<f64>()
                    / (2.0 * FD_STEP);
                let scale = jac[row][col].abs().max(1.0);
                worst = worst.max((fd - jac[row][col]).abs() / scale);
            }
        }
    }

    let start = Instant::now();
    let report = compare_solvers(&g, 500, 17);
    let elapsed = start.elapsed();
    let again = compare_solvers(&g, 500, 17);
    let deterministic = report.without_timings() == again.without_timings();

    let pass = worst <= JACOBIAN_TOL && report.agreement_rate >= AGREEMENT_MIN && deterministic;
    outcome(
        pass,
        format!(
            "jacobian worst rel err={worst:.1e}; agreement={:.4} ({}/{} comparable, newton failures={}, analytic failures={}), max discrepancy={:.1e} mm, deterministic={deterministic}, bench {:.2}s",
            report.agreement_rate,
            report.agreements,
            report.both_succeeded,
            report.newton_failures,
            report.analytic_failures,
            report.max_pose_discrepancy,
            elapsed.as_secs_f64()
        ),
    )
}

fn recovers(g: &MachineGeometry, joints: &JointCoordinates, pose: &PlatformPose) -> bool {
    forward_kinematics_all(g, joints).modes.iter().any(|m| {
        m.max_residual <= RESIDUAL_TOL
            && rod_misfit(g, joints, &m.pose) <= RESIDUAL_TOL
            && m.pose.position_distance(pose) <= POSE_TOL
            && (m.pose.alpha - pose.alpha).abs() <= ANGLE_TOL
    })
}

/// Joints of an IK solution at `pose` whose rotation matches.
fn joints_for(g: &MachineGeometry, pose: &PlatformPose) -> Option<JointCoordinates> {
    let set = inverse_kinematics_all(g, pose.x_p, pose.y_p, pose.z_p).ok()?;
    set.solutions
        .iter()
        .filter(|s| (s.pose.alpha - pose.alpha).abs() <= 1e-9)
        .map(|s| s.joints)
        .next()
}

fn criterion_8() -> Outcome {
    let g = synthetic();
    let mut notes = Vec::new();
    let mut pass = true;

    // leg-I midline perpendicular to the slider plane: R1 cos = r1
    let a_tilt = (g.slider_y_1 / g.platform_y_1).acos();
    let (mut tilt_ok, mut tilt_cases) = (0, 0);
    for alpha in [a_tilt, -a_tilt] {
        let el = coupling_ellipse(&g, alpha).expect("ellipse");
        for k in 0..24 {
            let (x, y) = el.point(2.0 * PI * (k as f64 + 0.5) / 24.0);
            let pose = PlatformPose::new(x, y, 1000.0, alpha);
            if let Some(j) = joints_for(&g, &pose) {
                tilt_cases += 1;
                if recovers(&g, &j, &pose) {
                    tilt_ok += 1;
                }
            }
        }
    }
    pass &= tilt_cases >= 4 && tilt_ok == tilt_cases;
    notes.push(format!("tilt branch {tilt_ok}/{tilt_cases}"));

    // rho2 = rho3 at alpha = 0: the sin term of the pair spread vanishes
    let (mut sym_ok, mut sym_cases) = (0, 0);
    for k in 0..9 {
        let dx = -400.0 + 100.0 * k as f64;
        let pose = PlatformPose::new(-g.platform_x_1 + g.slider_x_1 + dx, 0.0, 1000.0, 0.0);
        if let Some(j) = joints_for(&g, &pose) {
            sym_cases += 1;
            if (j.rho2 - j.rho3).abs() < 1e-9 && recovers(&g, &j, &pose) {
                sym_ok += 1;
            }
        }
    }
    pass &= sym_cases >= 3 && sym_ok == sym_cases;
    notes.push(format!("symmetric pair branch {sym_ok}/{sym_cases}"));

    // pair spread vanishing at a general rotation, rho2 != rho3
    let mut spread_ok = 0;
    let mut spread_cases = 0;
    for alpha in [0.3_f64, -0.5, 0.8] {
        let el = coupling_ellipse(&g, alpha).expect("ellipse");
        let (s, c) = alpha.sin_cos();
        let k = g.slider_y_23 * g.platform_y_1 - g.slider_y_1 * g.platform_y_23;
        let spread_at = |theta: f64| {
            let (x, y) = el.point(theta);
            let pose = PlatformPose::new(x, y, 1000.0, alpha);
            match joints_for(&g, &pose) {
                Some(j) => (j.rho2 - j.rho3) * (g.platform_y_1 * c - g.slider_y_1) + 2.0 * s * k,
                None => f64::NAN,
            }
        };
        for theta in scan(&spread_at, -PI, PI, 1e-2) {
            let (x, y) = el.point(theta);
            let pose = PlatformPose::new(x, y, 1000.0, alpha);
            if let Some(j) = joints_for(&g, &pose) {
                spread_cases += 1;
                if recovers(&g, &j, &pose) {
                    spread_ok += 1;
                }
            }
        }
    }
    pass &= spread_cases > 0 && spread_ok == spread_cases;
    notes.push(format!("general pair branch {spread_ok}/{spread_cases}"));

    // rho2 = rho3 with r4 R1 = r1 R2: z never fixed by the pair difference
    let mut flat = g.clone();
    flat.slider_y_23 = flat.slider_y_1 * flat.platform_y_23 / flat.platform_y_1;
    let j = JointCoordinates::new(300.0, 280.0, 280.0);
    let set = forward_kinematics_all(&flat, &j);
    let verified = set.modes.iter().all(|m| rod_misfit(&flat, &j, &m.pose) <= RESIDUAL_TOL);
    let flagged = !set.diagnostics.is_empty();
    pass &= verified && flagged;
    notes.push(format!("identically degenerate pair: {} modes verified={verified}, diagnostic={flagged}", set.modes.len()));

    outcome(pass, notes.join(", "))
}

fn main() -> ExitCode {
    let mut failed = false;
    let mut report = |id: &str, o: Outcome| {
        failed |= !o.pass;
        println!("criterion {id}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report("1", criterion_1());
    report("2", criterion_2());
    report("3", criterion_3());
    report("4", criterion_4());
    report("5", criterion_5());
    println!(
        "criterion 6: REPLACED by criteria 2-5 | reference machine dimensions unavailable; {}",
        criterion_6_informational()
    );
    report("7", criterion_7());
    report("8", criterion_8());
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
