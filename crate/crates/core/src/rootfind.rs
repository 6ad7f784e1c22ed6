//! Real roots of univariate polynomials.
//!
//! Roots are taken as eigenvalues of the companion matrix of the scaled
//! polynomial, classified as real or complex, and then polished with Newton
//! steps on the original coefficients. Nearly-real complex pairs are tested
//! as candidate double roots by locating the nearby critical point.

use nalgebra::DMatrix;
use thiserror::Error;

/// Relative threshold below which trailing coefficients are dropped.
pub const TRIM_THRESHOLD: f64 = 1e-13;

/// Residual acceptance, relative to the largest coefficient.
const ROOT_TOLERANCE: f64 = 1e-10;

/// Imaginary-part threshold for classifying an eigenvalue as real.
const REAL_IMAG_TOLERANCE: f64 = 1e-9;

/// Widest imaginary part for which a complex pair is tested as a double root.
const PAIR_IMAG_WINDOW: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("the zero polynomial has no isolated roots")]
    DegenerateInput,
    #[error("polynomial coefficients must be finite")]
    NonFinite,
}

/// A real polynomial with coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

/// One real root. `multiple` marks roots where the derivative also vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRoot {
    pub value: f64,
    pub multiple: bool,
}

impl Polynomial {
    /// Builds a polynomial, trimming trailing coefficients below
    /// `TRIM_THRESHOLD * max|c|`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self, RootError> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RootError::NonFinite);
        }
        let scale = max_abs(&coeffs);
        if scale == 0.0 {
            return Err(RootError::DegenerateInput);
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last().unwrap().abs() <= TRIM_THRESHOLD * scale {
            coeffs.pop();
        }
        Ok(Polynomial { coeffs })
    }

    /// Monic-free construction from roots: `prod (t - r_i)`, scaled by `lead`.
    pub fn from_roots(roots: &[f64], lead: f64) -> Result<Self, RootError> {
        let mut c = vec![lead];
        for &r in roots {
            let mut next = vec![0.0; c.len() + 1];
            for (i, &ci) in c.iter().enumerate() {
                next[i + 1] += ci;
                next[i] -= r * ci;
            }
            c = next;
        }
        Polynomial::new(c)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn max_coeff(&self) -> f64 {
        max_abs(&self.coeffs)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial { coeffs: vec![0.0] };
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| i as f64 * c)
            .collect();
        Polynomial { coeffs }
    }

    /// `sum |c_i| |x|^i`, the magnitude scale of an evaluation at `x`.
    pub fn magnitude_at(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * ax + c.abs())
    }

    fn scaled(&self) -> Polynomial {
        let s = self.max_coeff();
        Polynomial {
            coeffs: self.coeffs.iter().map(|c| c / s).collect(),
        }
    }

    /// Residual bound a root `r` of the scaled polynomial must satisfy.
    fn tolerance_at(&self, r: f64) -> f64 {
        ROOT_TOLERANCE * self.max_coeff() * r.abs().max(1.0).powi(self.degree() as i32)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
}

/// All real roots of `p`, ascending, optionally restricted to `domain`.
pub fn real_roots(p: &Polynomial, domain: Option<(f64, f64)>) -> Result<Vec<RealRoot>, RootError> {
    let scaled = p.scaled();
    let mut roots = match scaled.degree() {
        0 => Vec::new(),
        1 => {
            let r = -scaled.coeffs[0] / scaled.coeffs[1];
            vec![RealRoot { value: r, multiple: false }]
        }
        _ => companion_roots(&scaled),
    };

    roots.retain(|r| r.value.is_finite());
    roots.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut roots = merge_close(&scaled, roots);
    if let Some((lo, hi)) = domain {
        roots.retain(|r| r.value >= lo && r.value <= hi);
    }
    Ok(roots)
}

fn companion_roots(p: &Polynomial) -> Vec<RealRoot> {
    let n = p.degree();
    let lead = p.leading();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -p.coeffs[i] / lead;
    }
    let eig = m.complex_eigenvalues();
    let dp = p.derivative();

    let mut out = Vec::with_capacity(n);
    for z in eig.iter() {
        let (re, im) = (z.re, z.im);
        if !re.is_finite() {
            continue;
        }
        let scale = 1.0 + re.abs();
        if im.abs() <= REAL_IMAG_TOLERANCE * scale {
            let r = polish_newton(p, re);
            if p.eval(r).abs() <= p.tolerance_at(r) {
                let multiple = dp.eval(r).abs() <= dp.max_coeff().max(1.0) * ROOT_TOLERANCE * scale;
                out.push(RealRoot { value: r, multiple });
            }
        } else if im > 0.0 && im <= PAIR_IMAG_WINDOW * scale {
            // one member of the conjugate pair is enough
            let r = polish_newton(&dp, re);
            if p.eval(r).abs() <= p.tolerance_at(r) {
                out.push(RealRoot { value: r, multiple: true });
            }
        }
    }
    out
}

/// Newton iteration that only accepts steps which reduce `|p|`.
fn polish_newton(p: &Polynomial, x0: f64) -> f64 {
    let mut x = x0;
    let mut fx = p.eval(x).abs();
    for _ in 0..32 {
        let (v, d) = p.eval_with_derivative(x);
        if v == 0.0 || d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - v / d;
        let fnext = p.eval(next).abs();
        if !(fnext < fx) {
            break;
        }
        let done = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0);
        x = next;
        fx = fnext;
        if done {
            break;
        }
    }
    x
}

/// Merges roots closer than the polishing resolution into one multiple root.
fn merge_close(p: &Polynomial, roots: Vec<RealRoot>) -> Vec<RealRoot> {
    let mut out: Vec<RealRoot> = Vec::with_capacity(roots.len());
    for r in roots {
        if let Some(last) = out.last_mut() {
            if (r.value - last.value).abs() <= 1e-7 * (1.0 + r.value.abs()) {
                if p.eval(r.value).abs() < p.eval(last.value).abs() {
                    last.value = r.value;
                }
                last.multiple = true;
                continue;
            }
        }
        out.push(r);
    }
    out
}

/// Real roots of `a x^3 + b x^2 + c x + d` from the trigonometric / Cardano
/// closed form. Used as an independent cross-check for cubic solves.
pub fn cubic_roots_closed_form(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let (b, c, d) = (b / a, c / a, d / a);
    // depressed cubic t^3 + p t + q with x = t - b/3
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let mut roots = if p == 0.0 && q == 0.0 {
        vec![0.0]
    } else if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    };
    for r in &mut roots {
        *r -= shift;
    }
    roots.sort_by(f64::total_cmp);
    roots
}
