use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::value::RawValue;

use verne_core::coupling::{coupling_ellipse, iso_orientation_curves};
use verne_core::forward_kinematics::{forward_kinematics_all, select_assembly_mode, AssemblyMode};
use verne_core::geometry::{JointCoordinates, MachineGeometry, MobilitySummary};
use verne_core::inverse_kinematics::{inverse_kinematics_all, select_working_mode, ConfigurationIndices, IkSolution};
use verne_core::oracle_bench::{compare_solvers, DurationStats};
use verne_core::verify::run_verification;

mod format;

use format::{mm, mm_str, rad, rad_str, sci, sci_str, Table};

#[derive(Parser, Debug)]
#[command(name = "verne", version, about = "Kinematics of a three-leg parallel module with coupled rotation")]
struct Cli {
    /// Geometry JSON file; the built-in synthetic geometry when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    geometry: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    /// Read angle arguments in degrees instead of radians.
    #[arg(long, global = true)]
    degrees: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// All inverse kinematic solutions at a platform position.
    Ik {
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, allow_negative_numbers = true)]
        y: f64,
        #[arg(long, allow_negative_numbers = true)]
        z: f64,
    },
    /// All assembly modes for given slider positions.
    Fk {
        #[arg(long, allow_negative_numbers = true)]
        rho1: f64,
        #[arg(long, allow_negative_numbers = true)]
        rho2: f64,
        #[arg(long, allow_negative_numbers = true)]
        rho3: f64,
    },
    /// Iso-orientation ellipse of the platform reference point.
    Ellipse {
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
    },
    /// Iso-orientation curves on a symmetric rotation grid.
    IsoCurves {
        #[arg(long)]
        step: f64,
        #[arg(long, default_value_t = 180)]
        samples: usize,
    },
    /// Mobility from body and joint counts.
    Mobility {
        #[arg(long, default_value_t = 11)]
        bodies: u32,
        #[arg(long, default_value_t = 15)]
        joints: u32,
        #[arg(long, default_value_t = 39)]
        joint_dof: u32,
        #[arg(long, default_value_t = 6)]
        internal_dof: u32,
    },
    /// Randomised round-trip and oracle checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Analytic forward kinematics against Newton iteration.
    Bench {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
}

enum Failure {
    /// Unreachable pose, no assembly mode, failed checks.
    Domain(String),
    /// Bad arguments or configuration.
    Usage(String),
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            let mut stdout = io::stdout().lock();
            if stdout.write_all(out.as_bytes()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_geometry(cli: &Cli) -> Result<MachineGeometry, Failure> {
    match &cli.geometry {
        Some(path) => MachineGeometry::from_path(path).map_err(|e| Failure::Usage(format!("--geometry: {e}"))),
        None => Ok(MachineGeometry::synthetic()),
    }
}

fn angle_arg(cli: &Cli, flag: &str, v: f64) -> Result<f64, Failure> {
    if !v.is_finite() {
        return Err(Failure::Usage(format!("{flag} must be finite, got {v}")));
    }
    Ok(if cli.degrees { v.to_radians() } else { v })
}

fn finite_arg(flag: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Usage(format!("{flag} must be finite, got {v}")))
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Mobility { bodies, joints, joint_dof, internal_dof } => {
            Ok(mobility(cli, MobilitySummary::from_counts(*bodies, *joints, *joint_dof, *internal_dof)))
        }
        command => {
            let geom = load_geometry(cli)?;
            match command {
                Command::Ik { x, y, z } => ik(cli, &geom, finite_arg("--x", *x)?, finite_arg("--y", *y)?, finite_arg("--z", *z)?),
                Command::Fk { rho1, rho2, rho3 } => fk(
                    cli,
                    &geom,
                    JointCoordinates::new(finite_arg("--rho1", *rho1)?, finite_arg("--rho2", *rho2)?, finite_arg("--rho3", *rho3)?),
                ),
                Command::Ellipse { alpha } => ellipse(cli, &geom, angle_arg(cli, "--alpha", *alpha)?),
                Command::IsoCurves { step, samples } => iso_curves(cli, &geom, angle_arg(cli, "--step", *step)?, *samples),
                Command::Verify { seed, n } => verify(cli, &geom, *seed, *n),
                Command::Bench { seed, n } => bench(cli, &geom, *seed, *n),
                Command::Mobility { .. } => unreachable!(),
            }
        }
    }
}

fn mobility(cli: &Cli, m: MobilitySummary) -> String {
    match cli.format {
        Format::Json => to_json(&m),
        Format::Csv => format!(
            "n_bodies,n_joints,sum_joint_dof,n_internal_dof,mobility\n{},{},{},{},{}\n",
            m.n_bodies, m.n_joints, m.sum_joint_dof, m.n_internal_dof, m.mobility
        ),
        Format::Table => format!(
            "m = 6({} - {} - 1) + {} - {} = {}\n",
            m.n_bodies, m.n_joints, m.sum_joint_dof, m.n_internal_dof, m.mobility
        ),
    }
}

fn indices_str(i: &ConfigurationIndices) -> String {
    format!("{}", i)
}

#[derive(Serialize)]
struct IkRecord {
    alpha: Box<RawValue>,
    x_p: Box<RawValue>,
    y_p: Box<RawValue>,
    z_p: Box<RawValue>,
    rho1: Box<RawValue>,
    rho2: Box<RawValue>,
    rho3: Box<RawValue>,
    indices: [i8; 3],
    within_joint_limits: bool,
    no_rod_crossing: bool,
    is_working_mode: bool,
    max_residual: Box<RawValue>,
}

#[derive(Serialize)]
struct SelectionRecord {
    index: usize,
    survivors: usize,
    ambiguous: bool,
}

#[derive(Serialize)]
struct DiagnosticRecord {
    alpha: Option<Box<RawValue>>,
    reason: String,
}

#[derive(Serialize)]
struct IkOutput {
    x_p: Box<RawValue>,
    y_p: Box<RawValue>,
    z_p: Box<RawValue>,
    solutions: Vec<IkRecord>,
    working_mode: Option<SelectionRecord>,
    diagnostics: Vec<DiagnosticRecord>,
}

fn sign_triplet(i: &ConfigurationIndices) -> [i8; 3] {
    [i.s1.value() as i8, i.s2.value() as i8, i.s3.value() as i8]
}

fn ik(cli: &Cli, geom: &MachineGeometry, x: f64, y: f64, z: f64) -> Outcome {
    let set = inverse_kinematics_all(geom, x, y, z).map_err(|e| Failure::Domain(e.to_string()))?;
    if set.solutions.is_empty() {
        return Err(Failure::Domain(format!(
            "no inverse kinematic solution at ({}, {}, {}): {} orientation(s) rejected",
            mm_str(x),
            mm_str(y),
            mm_str(z),
            set.diagnostics.len()
        )));
    }
    let selection = select_working_mode(&set.solutions, geom).map(|sel| {
        let index = set.solutions.iter().position(|s| *s == sel.choice).expect("choice comes from the list");
        SelectionRecord { index, survivors: sel.survivors, ambiguous: sel.ambiguous }
    });

    match cli.format {
        Format::Json => {
            let out = IkOutput {
                x_p: mm(x),
                y_p: mm(y),
                z_p: mm(z),
                solutions: set.solutions.iter().map(ik_record).collect(),
                working_mode: selection,
                diagnostics: set
                    .diagnostics
                    .iter()
                    .map(|d| DiagnosticRecord { alpha: Some(rad(d.alpha)), reason: d.reason.clone() })
                    .collect(),
            };
            Ok(to_json(&out))
        }
        Format::Csv | Format::Table => {
            let mut t = Table::new(&[
                "#", "alpha_rad", "rho1_mm", "rho2_mm", "rho3_mm", "indices", "limits", "uncrossed", "working", "residual",
            ]);
            for (k, s) in set.solutions.iter().enumerate() {
                let marker = if selection.as_ref().is_some_and(|sel| sel.index == k) { "*" } else { "" };
                t.push(vec![
                    format!("{}{marker}", k + 1),
                    rad_str(s.pose.alpha),
                    mm_str(s.joints.rho1),
                    mm_str(s.joints.rho2),
                    mm_str(s.joints.rho3),
                    indices_str(&s.indices),
                    yes_no(s.feasibility.within_joint_limits),
                    yes_no(s.feasibility.no_rod_crossing),
                    yes_no(s.feasibility.is_working_mode),
                    sci_str(s.max_residual),
                ]);
            }
            if cli.format == Format::Csv {
                return Ok(t.render_csv());
            }
            let mut out = format!("position ({}, {}, {}) mm\n", mm_str(x), mm_str(y), mm_str(z));
            out.push_str(&t.render());
            out.push_str(&match &selection {
                Some(sel) => format!(
                    "working mode: solution {}{}\n",
                    sel.index + 1,
                    if sel.ambiguous { format!(" (ambiguous, {} candidates)", sel.survivors) } else { String::new() }
                ),
                None => "working mode: none\n".into(),
            });
            Ok(out)
        }
    }
}

fn ik_record(s: &IkSolution) -> IkRecord {
    IkRecord {
        alpha: rad(s.pose.alpha),
        x_p: mm(s.pose.x_p),
        y_p: mm(s.pose.y_p),
        z_p: mm(s.pose.z_p),
        rho1: mm(s.joints.rho1),
        rho2: mm(s.joints.rho2),
        rho3: mm(s.joints.rho3),
        indices: sign_triplet(&s.indices),
        within_joint_limits: s.feasibility.within_joint_limits,
        no_rod_crossing: s.feasibility.no_rod_crossing,
        is_working_mode: s.feasibility.is_working_mode,
        max_residual: sci(s.max_residual),
    }
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.into()
}

#[derive(Serialize)]
struct FkRecord {
    case: String,
    t: Box<RawValue>,
    alpha: Box<RawValue>,
    x_p: Box<RawValue>,
    y_p: Box<RawValue>,
    z_p: Box<RawValue>,
    indices: [i8; 3],
    within_joint_limits: bool,
    no_rod_crossing: bool,
    same_aspect_as_home: bool,
    is_reachable_mode: bool,
    max_residual: Box<RawValue>,
}

#[derive(Serialize)]
struct FkOutput {
    rho1: Box<RawValue>,
    rho2: Box<RawValue>,
    rho3: Box<RawValue>,
    modes: Vec<FkRecord>,
    reachable_mode: Option<SelectionRecord>,
    diagnostics: Vec<DiagnosticRecord>,
}

fn case_label(k: usize) -> String {
    let mut k = k;
    let mut s = String::new();
    loop {
        s.insert(0, (b'a' + (k % 26) as u8) as char);
        if k < 26 {
            break;
        }
        k = k / 26 - 1;
    }
    s
}

fn fk_record(k: usize, m: &AssemblyMode) -> FkRecord {
    FkRecord {
        case: case_label(k),
        t: rad(m.t),
        alpha: rad(m.pose.alpha),
        x_p: mm(m.pose.x_p),
        y_p: mm(m.pose.y_p),
        z_p: mm(m.pose.z_p),
        indices: sign_triplet(&m.indices),
        within_joint_limits: m.feasibility.within_joint_limits,
        no_rod_crossing: m.feasibility.no_rod_crossing,
        same_aspect_as_home: m.feasibility.same_aspect_as_home,
        is_reachable_mode: m.feasibility.is_reachable_mode,
        max_residual: sci(m.max_residual),
    }
}

fn fk(cli: &Cli, geom: &MachineGeometry, joints: JointCoordinates) -> Outcome {
    let set = forward_kinematics_all(geom, &joints);
    if set.modes.is_empty() {
        return Err(Failure::Domain(format!(
            "no assembly mode for rho = ({}, {}, {})",
            mm_str(joints.rho1),
            mm_str(joints.rho2),
            mm_str(joints.rho3)
        )));
    }
    let selection = select_assembly_mode(&set.modes, geom).map(|sel| {
        let index = set.modes.iter().position(|m| *m == sel.choice).expect("choice comes from the list");
        SelectionRecord { index, survivors: sel.survivors, ambiguous: sel.ambiguous }
    });

    match cli.format {
        Format::Json => {
            let out = FkOutput {
                rho1: mm(joints.rho1),
                rho2: mm(joints.rho2),
                rho3: mm(joints.rho3),
                modes: set.modes.iter().enumerate().map(|(k, m)| fk_record(k, m)).collect(),
                reachable_mode: selection,
                diagnostics: set
                    .diagnostics
                    .iter()
                    .map(|d| DiagnosticRecord { alpha: d.alpha.map(rad), reason: d.reason.clone() })
                    .collect(),
            };
            Ok(to_json(&out))
        }
        Format::Csv | Format::Table => {
            let mut t = Table::new(&["case", "t", "alpha_rad", "x_p_mm", "y_p_mm", "z_p_mm", "indices", "reachable", "residual"]);
            for (k, m) in set.modes.iter().enumerate() {
                let marker = if selection.as_ref().is_some_and(|sel| sel.index == k) { "*" } else { "" };
                t.push(vec![
                    format!("({}){marker}", case_label(k)),
                    rad_str(m.t),
                    rad_str(m.pose.alpha),
                    mm_str(m.pose.x_p),
                    mm_str(m.pose.y_p),
                    mm_str(m.pose.z_p),
                    indices_str(&m.indices),
                    yes_no(m.feasibility.is_reachable_mode),
                    sci_str(m.max_residual),
                ]);
            }
            if cli.format == Format::Csv {
                return Ok(t.render_csv());
            }
            let mut out = format!(
                "rho = ({}, {}, {}) mm\n",
                mm_str(joints.rho1),
                mm_str(joints.rho2),
                mm_str(joints.rho3)
            );
            out.push_str(&t.render());
            out.push_str(&match &selection {
                Some(sel) => format!(
                    "reachable mode: ({}){}\n",
                    case_label(sel.index),
                    if sel.ambiguous { format!(" (ambiguous, {} candidates)", sel.survivors) } else { String::new() }
                ),
                None => "reachable mode: none\n".into(),
            });
            Ok(out)
        }
    }
}

#[derive(Serialize)]
struct EllipseOutput {
    alpha: Box<RawValue>,
    a: Box<RawValue>,
    b: Box<RawValue>,
    center_x: Box<RawValue>,
}

fn ellipse(cli: &Cli, geom: &MachineGeometry, alpha: f64) -> Outcome {
    let el = coupling_ellipse(geom, alpha).map_err(|e| Failure::Domain(e.to_string()))?;
    Ok(match cli.format {
        Format::Json => to_json(&EllipseOutput { alpha: rad(el.alpha), a: mm(el.a), b: mm(el.b), center_x: mm(el.center_x) }),
        Format::Csv => format!(
            "alpha_rad,a_mm,b_mm,center_x_mm\n{},{},{},{}\n",
            rad_str(el.alpha),
            mm_str(el.a),
            mm_str(el.b),
            mm_str(el.center_x)
        ),
        Format::Table => format!(
            "alpha = {} rad\na = {} mm\nb = {} mm\ncenter_x = {} mm\n",
            rad_str(el.alpha),
            mm_str(el.a),
            mm_str(el.b),
            mm_str(el.center_x)
        ),
    })
}

#[derive(Serialize)]
struct CurveRecord {
    alpha: Box<RawValue>,
    points: Vec<[Box<RawValue>; 2]>,
}

#[derive(Serialize)]
struct CurvesOutput {
    curves: Vec<CurveRecord>,
    skipped: Vec<DiagnosticRecord>,
}

fn iso_curves(cli: &Cli, geom: &MachineGeometry, step: f64, samples: usize) -> Outcome {
    let curves = iso_orientation_curves(geom, step, samples).map_err(|e| Failure::Usage(format!("--step: {e}")))?;
    match cli.format {
        Format::Json => Ok(to_json(&CurvesOutput {
            curves: curves
                .curves
                .iter()
                .map(|c| CurveRecord { alpha: rad(c.alpha), points: c.points.iter().map(|(x, y)| [mm(*x), mm(*y)]).collect() })
                .collect(),
            skipped: curves
                .skipped
                .iter()
                .map(|s| DiagnosticRecord { alpha: Some(rad(s.alpha)), reason: s.reason.clone() })
                .collect(),
        })),
        // CSV is streamed; the table view is the same CSV
        Format::Csv | Format::Table => {
            let stdout = io::stdout().lock();
            let mut w = BufWriter::new(stdout);
            curves
                .write_csv(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Failure::Domain(format!("writing CSV: {e}")))?;
            Ok(String::new())
        }
    }
}

fn verify(cli: &Cli, geom: &MachineGeometry, seed: u64, n: usize) -> Outcome {
    if n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let report = run_verification(geom, n, seed);
    let text = match cli.format {
        Format::Json => to_json(&report),
        Format::Csv | Format::Table => {
            let mut t = Table::new(&["check", "passed", "failed"]);
            for c in &report.checks {
                t.push(vec![c.name.to_string(), c.passed.to_string(), c.failed.to_string()]);
            }
            if cli.format == Format::Csv {
                t.render_csv()
            } else {
                format!(
                    "seed {seed}, {n} samples\n{}max assembly modes seen: {}\nflagged working-mode ties: {}\n",
                    t.render(),
                    report.max_modes_seen,
                    report.ik_ties
                )
            }
        }
    };
    if report.all_passed() {
        Ok(text)
    } else {
        print!("{text}");
        Err(Failure::Domain("verification checks failed".into()))
    }
}

#[derive(Serialize)]
struct TimingRecord {
    mean_us: Box<RawValue>,
    median_us: Box<RawValue>,
    min_us: Box<RawValue>,
    max_us: Box<RawValue>,
}

fn timing(d: &DurationStats) -> TimingRecord {
    let f = |v: f64| RawValue::from_string(format!("{v:.3}")).expect("number");
    TimingRecord { mean_us: f(d.mean_us), median_us: f(d.median_us), min_us: f(d.min_us), max_us: f(d.max_us) }
}

#[derive(Serialize)]
struct BenchOutput {
    n_samples: usize,
    seed: u64,
    execution: &'static str,
    analytic_time: TimingRecord,
    iterative_time: TimingRecord,
    both_succeeded: usize,
    agreements: usize,
    agreement_rate: Box<RawValue>,
    newton_failures: usize,
    analytic_failures: usize,
    max_pose_discrepancy: Box<RawValue>,
}

fn bench(cli: &Cli, geom: &MachineGeometry, seed: u64, n: usize) -> Outcome {
    if n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let r = compare_solvers(geom, n, seed);
    let rate = RawValue::from_string(format!("{:.6}", r.agreement_rate)).expect("number");
    Ok(match cli.format {
        Format::Json => to_json(&BenchOutput {
            n_samples: r.n_samples,
            seed: r.seed,
            execution: r.execution,
            analytic_time: timing(&r.analytic_time),
            iterative_time: timing(&r.iterative_time),
            both_succeeded: r.both_succeeded,
            agreements: r.agreements,
            agreement_rate: rate,
            newton_failures: r.newton_failures,
            analytic_failures: r.analytic_failures,
            max_pose_discrepancy: sci(r.max_pose_discrepancy),
        }),
        Format::Csv | Format::Table => {
            let mut t = Table::new(&["solver", "mean_us", "median_us", "min_us", "max_us"]);
            for (name, d) in [("analytic", &r.analytic_time), ("newton", &r.iterative_time)] {
                t.push(vec![
                    name.into(),
                    format!("{:.3}", d.mean_us),
                    format!("{:.3}", d.median_us),
                    format!("{:.3}", d.min_us),
                    format!("{:.3}", d.max_us),
                ]);
            }
            if cli.format == Format::Csv {
                t.render_csv()
            } else {
                format!(
                    "seed {}, {} samples, {} execution\n{}agreement {}/{} = {:.6}, newton failures {}, analytic failures {}, max discrepancy {} mm\n",
                    r.seed,
                    r.n_samples,
                    r.execution,
                    t.render(),
                    r.agreements,
                    r.both_succeeded,
                    r.agreement_rate,
                    r.newton_failures,
                    r.analytic_failures,
                    sci_str(r.max_pose_discrepancy)
                )
            }
        }
    })
}
