//! Random working configurations for property checks and benchmarks.

use rand::Rng;

use crate::coupling::coupling_ellipse;
use crate::forward_kinematics::{aspect_of, home_aspect};
use crate::geometry::{max_abs_residual, JointCoordinates, MachineGeometry, PlatformPose};
use crate::inverse_kinematics::{actuator_inputs, ConfigurationIndices, Sign, RESIDUAL_TOLERANCE};

/// Ranges the sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingBox {
    /// Largest `|alpha|` drawn (rad).
    pub alpha_max: f64,
    pub z_range: (f64, f64),
    /// Aspect of the home configuration; draws must share it.
    pub home_aspect: Option<Sign>,
}

impl SamplingBox {
    /// Rotations that keep leg I uncrossed, heights that keep the sliders
    /// inside their travel for typical positions.
    pub fn for_geometry(geom: &MachineGeometry) -> Self {
        let crossing = (geom.slider_y_1 / geom.platform_y_1).clamp(-1.0, 1.0).acos();
        let alpha_max = (0.9 * crossing).min(0.6);
        let lo = geom.rho_limits.iter().fold(f64::NEG_INFINITY, |m, l| m.max(l[0]));
        let hi = geom.rho_limits.iter().fold(f64::INFINITY, |m, l| m.min(l[1]));
        let l = geom.length_scale();
        // a working-mode slider sits roughly half to one rod length above P
        let z_lo = (lo + 0.9 * l).min(hi);
        let z_hi = (hi + 0.25 * l).max(z_lo);
        SamplingBox { alpha_max, z_range: (z_lo, z_hi), home_aspect: home_aspect(geom) }
    }
}

/// Draws one working-mode configuration: rotation and height uniformly, a
/// point of the iso-orientation ellipse whose lateral offset has the sign
/// the all-negative leg-I branch needs, then the slider positions. Draws
/// outside the slider limits, on an inconsistent branch or beyond a parallel
/// singularity from the home pose return `None`.
pub fn random_working_configuration<R: Rng + ?Sized>(
    geom: &MachineGeometry,
    bounds: &SamplingBox,
    rng: &mut R,
) -> Option<(PlatformPose, JointCoordinates)> {
    let alpha = rng.random_range(-bounds.alpha_max..=bounds.alpha_max);
    let z = rng.random_range(bounds.z_range.0..=bounds.z_range.1);
    let ellipse = coupling_ellipse(geom, alpha).ok()?;
    let theta = rng.random_range(0.05..(std::f64::consts::PI - 0.05));
    let (x, y_abs) = ellipse.point(theta);
    let tilt = geom.platform_y_1 * alpha.cos() - geom.slider_y_1;
    // sgn(rho1 - z) = sgn(tilt) sgn(y) sgn(sin) must be -1
    let y = -(tilt * alpha.sin()).signum() * y_abs.abs();
    let pose = PlatformPose::new(x, y, z, alpha);
    let joints = actuator_inputs(geom, &pose, &ConfigurationIndices::WORKING_MODE).ok()?;
    if !geom.within_limits(&joints) || !geom.rods_uncrossed(alpha) {
        return None;
    }
    if max_abs_residual(geom, &pose, &joints) > RESIDUAL_TOLERANCE {
        return None;
    }
    if let Some(home) = bounds.home_aspect {
        if aspect_of(geom, &pose, &joints) != Some(home) {
            return None;
        }
    }
    Some((pose, joints))
}

/// Keeps drawing until a configuration is accepted. Panics after
/// `MAX_TRIES` rejections, which indicates a sampling box that does not fit the geometry.
pub fn draw_working_configuration<R: Rng + ?Sized>(
    geom: &MachineGeometry,
    bounds: &SamplingBox,
    rng: &mut R,
) -> (PlatformPose, JointCoordinates) {
    const MAX_TRIES: usize = 10_000;
    for _ in 0..MAX_TRIES {
        if let Some(found) = random_working_configuration(geom, bounds, rng) {
            return found;
        }
    }
    panic!("sampling box {bounds:?} yields no working configuration");
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_are_working_mode_and_in_limits() {
        let g = MachineGeometry::synthetic();
        let b = SamplingBox::for_geometry(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (pose, joints) = draw_working_configuration(&g, &b, &mut rng);
            assert!(g.within_limits(&joints));
            assert!(ConfigurationIndices::observed(&g, &pose, &joints).is_working_mode());
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let g = MachineGeometry::synthetic();
        let b = SamplingBox::for_geometry(&g);
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| draw_working_configuration(&g, &b, &mut rng)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b2: Vec<_> = (0..10).map(|_| draw_working_configuration(&g, &b, &mut rng)).collect();
        assert_eq!(a, b2);
    }
}
