//! Kinematics of a three-leg parallel module with a coupled platform
//! rotation: geometry, the position/orientation coupling, closed-form
//! inverse kinematics, polynomial forward kinematics and a Newton reference
//! solver.

pub mod coupling;
pub mod forward_kinematics;
pub mod geometry;
pub mod inverse_kinematics;
pub mod oracle_bench;
pub mod rootfind;
pub mod sampling;
pub mod verify;

pub use coupling::{coupling_ellipse, feasible_orientations, iso_orientation_curves, CouplingEllipse, CouplingError};
pub use forward_kinematics::{
    fk_chain, fk_polynomial, fk_residual, forward_kinematics_all, select_assembly_mode, AssemblyMode, FkError,
    FkPolynomial, FkSolutionSet,
};
pub use geometry::{
    constraint_residuals, grubler_mobility, GeometryError, JointCoordinates, MachineGeometry, MobilitySummary,
    PlatformPose,
};
pub use inverse_kinematics::{
    actuator_inputs, inverse_kinematics_all, select_working_mode, ConfigurationIndices, IkError, IkSolution,
    IkSolutionSet, Selection, Sign,
};
pub use oracle_bench::{compare_solvers, newton_fk, BenchReport, IterationReport, NewtonError};
pub use rootfind::{real_roots, Polynomial, RealRoot, RootError};
pub use verify::{run_verification, VerificationReport};
