//! Uniform cubic B-spline approximation of curves, the W^{2,inf}
//! perturbation measure `gamma`, and pullbacks between curves sharing a
//! parameter domain.
//!
//! A [`SplineCurve`] interpolates the exact curve at equally spaced knots and
//! is stored in the uniform cubic B-spline basis, so it is C^2 everywhere and
//! evaluates with two derivatives in O(1) per point.
//!
//! End conditions select how the two surplus control points are fixed:
//!
//! * [`EndCondition::SecondDifference`] (default) matches the spline's second
//!   derivative at each end to the 3-point one-sided difference of the data.
//!   The resulting family has a first-order W^{2,inf} distance to smooth
//!   curves (the end estimate is first-order accurate), so halving the knot
//!   step halves `gamma`.
//! * [`EndCondition::NotAKnot`] enforces third-derivative continuity at the
//!   first and last interior knots; it reproduces cubic polynomials exactly
//!   and converges at second order in W^{2,inf}.
//! * [`EndCondition::Natural`] zeroes the end second derivatives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fem::{block_mass, split_stiffness};
use crate::field::DiscreteVectorField;
use crate::geometry::{Curve, Orientation, DEGENERACY_THRESHOLD};
use crate::operator::DiscreteOperator;

pub const DEFAULT_GAMMA_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EndCondition {
    #[default]
    SecondDifference,
    NotAKnot,
    Natural,
}

/// Uniform cubic B-spline curve over `[a, b]` with `K` knot intervals and
/// `K + 3` control points.
pub struct SplineCurve {
    label: String,
    a: f64,
    b: f64,
    knot_step: f64,
    control: Vec<Vector2<f64>>,
    orientation: Orientation,
}

// Uniform cubic B-spline segment basis on local coordinate x in [0, 1].
fn basis(x: f64) -> [f64; 4] {
    let y = 1.0 - x;
    [
        y * y * y / 6.0,
        (3.0 * x * x * x - 6.0 * x * x + 4.0) / 6.0,
        (-3.0 * x * x * x + 3.0 * x * x + 3.0 * x + 1.0) / 6.0,
        x * x * x / 6.0,
    ]
}

fn basis_d1(x: f64) -> [f64; 4] {
    let y = 1.0 - x;
    [
        -y * y / 2.0,
        (3.0 * x * x - 4.0 * x) / 2.0,
        (-3.0 * x * x + 2.0 * x + 1.0) / 2.0,
        x * x / 2.0,
    ]
}

fn basis_d2(x: f64) -> [f64; 4] {
    [1.0 - x, 3.0 * x - 2.0, 1.0 - 3.0 * x, x]
}

impl SplineCurve {
    pub fn knot_step(&self) -> f64 {
        self.knot_step
    }

    pub fn n_intervals(&self) -> usize {
        self.control.len() - 3
    }

    pub fn control_points(&self) -> &[Vector2<f64>] {
        &self.control
    }

    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_intervals()).map(|i| self.a + self.knot_step * i as f64)
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let k = self.n_intervals();
        let raw = (t - self.a) / self.knot_step;
        let i = (raw.floor() as isize).clamp(0, k as isize - 1) as usize;
        (i, raw - i as f64)
    }

    /// Serialize as a text block: one header line `a b h count`, then one
    /// control point per line.
    pub fn write_text(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(
            w,
            "{:.16e} {:.16e} {:.16e} {}",
            self.a,
            self.b,
            self.knot_step,
            self.control.len()
        )?;
        for p in &self.control {
            writeln!(w, "{:.16e} {:.16e}", p.x, p.y)?;
        }
        Ok(())
    }

    pub fn read_text(r: &mut impl std::io::BufRead) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("bad spline header: {header:?}")));
        }
        let a: f64 = parts[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let b: f64 = parts[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let h: f64 = parts[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let count: usize = parts[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let mut control = Vec::with_capacity(count);
        for _ in 0..count {
            let mut line = String::new();
            r.read_line(&mut line)?;
            let nums: Vec<&str> = line.split_whitespace().collect();
            if nums.len() != 2 {
                return Err(Error::Parse(format!("bad control point line: {line:?}")));
            }
            control.push(Vector2::new(
                nums[0].parse().map_err(|e| Error::Parse(format!("{e}")))?,
                nums[1].parse().map_err(|e| Error::Parse(format!("{e}")))?,
            ));
        }
        if control.len() < 7 {
            return Err(Error::Parse("too few control points".into()));
        }
        Ok(SplineCurve {
            label: "spline(read)".into(),
            a,
            b,
            knot_step: h,
            control,
            orientation: Orientation::Positive,
        })
    }
}

impl Curve for SplineCurve {
    fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }
    fn point(&self, t: f64) -> Vector2<f64> {
        let (i, x) = self.locate(t);
        let b = basis(x);
        (0..4).map(|j| self.control[i + j] * b[j]).sum()
    }
    fn velocity(&self, t: f64) -> Vector2<f64> {
        let (i, x) = self.locate(t);
        let b = basis_d1(x);
        (0..4)
            .map(|j| self.control[i + j] * b[j])
            .sum::<Vector2<f64>>()
            / self.knot_step
    }
    fn acceleration(&self, t: f64) -> Vector2<f64> {
        let (i, x) = self.locate(t);
        let b = basis_d2(x);
        (0..4)
            .map(|j| self.control[i + j] * b[j])
            .sum::<Vector2<f64>>()
            / (self.knot_step * self.knot_step)
    }
    fn orientation(&self) -> Orientation {
        self.orientation
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Interpolating uniform cubic spline through `m(a + k h)` with the requested
/// end condition. The step is adjusted to the nearest one that divides the
/// domain evenly.
pub fn fit_spline(curve: &dyn Curve, h: f64, ends: EndCondition) -> Result<SplineCurve> {
    let (a, b) = curve.domain();
    let span = b - a;
    if !(h > 0.0) || (span / h).round() < 4.0 {
        return Err(Error::TooFewKnots { h, a, b });
    }
    let k = (span / h).round() as usize;
    let h = span / k as f64;
    let n = k + 3; // control points

    // rows 1..=k+1: interpolation (c_i + 4 c_{i+1} + c_{i+2})/6 = p_i
    // rows 0 and k+2: end conditions
    let mut mat = DMatrix::<f64>::zeros(n, n);
    let mut rhs_x = DVector::<f64>::zeros(n);
    let mut rhs_y = DVector::<f64>::zeros(n);
    let samples: Vec<Vector2<f64>> = (0..=k).map(|i| curve.point(a + h * i as f64)).collect();
    for i in 0..=k {
        mat[(i + 1, i)] = 1.0 / 6.0;
        mat[(i + 1, i + 1)] = 4.0 / 6.0;
        mat[(i + 1, i + 2)] = 1.0 / 6.0;
        rhs_x[i + 1] = samples[i].x;
        rhs_y[i + 1] = samples[i].y;
    }
    match ends {
        EndCondition::SecondDifference => {
            // s''(a) h^2 = c_0 - 2 c_1 + c_2 = p_0 - 2 p_1 + p_2
            mat[(0, 0)] = 1.0;
            mat[(0, 1)] = -2.0;
            mat[(0, 2)] = 1.0;
            let da = samples[0] - samples[1] * 2.0 + samples[2];
            rhs_x[0] = da.x;
            rhs_y[0] = da.y;
            mat[(n - 1, n - 3)] = 1.0;
            mat[(n - 1, n - 2)] = -2.0;
            mat[(n - 1, n - 1)] = 1.0;
            let db = samples[k] - samples[k - 1] * 2.0 + samples[k - 2];
            rhs_x[n - 1] = db.x;
            rhs_y[n - 1] = db.y;
        }
        EndCondition::NotAKnot => {
            // third-derivative continuity across the first/last interior knot
            for (row, base) in [(0usize, 0usize), (n - 1, n - 5)] {
                mat[(row, base)] = 1.0;
                mat[(row, base + 1)] = -4.0;
                mat[(row, base + 2)] = 6.0;
                mat[(row, base + 3)] = -4.0;
                mat[(row, base + 4)] = 1.0;
            }
        }
        EndCondition::Natural => {
            mat[(0, 0)] = 1.0;
            mat[(0, 1)] = -2.0;
            mat[(0, 2)] = 1.0;
            mat[(n - 1, n - 3)] = 1.0;
            mat[(n - 1, n - 2)] = -2.0;
            mat[(n - 1, n - 1)] = 1.0;
        }
    }

    let lu = mat.lu();
    let cx = lu
        .solve(&rhs_x)
        .ok_or_else(|| Error::SolverFailure("spline system is singular".into()))?;
    let cy = lu
        .solve(&rhs_y)
        .ok_or_else(|| Error::SolverFailure("spline system is singular".into()))?;
    let control: Vec<Vector2<f64>> = (0..n).map(|i| Vector2::new(cx[i], cy[i])).collect();

    let spline = SplineCurve {
        label: format!("spline({},h={h:.6})", curve.label()),
        a,
        b,
        knot_step: h,
        control,
        orientation: curve.orientation(),
    };

    // construction checks: knot interpolation and regularity
    let scale = samples.iter().map(|p| p.norm()).fold(1.0_f64, f64::max);
    for (i, p) in samples.iter().enumerate() {
        let q = spline.point(a + h * i as f64);
        if (q - p).norm() > 1e-10 * scale {
            return Err(Error::SolverFailure(format!(
                "spline interpolation defect {:.3e} at knot {i}",
                (q - p).norm()
            )));
        }
    }
    let dense = 8 * k;
    for i in 0..=dense {
        let t = a + span * i as f64 / dense as f64;
        let speed = spline.velocity(t).norm();
        if speed < DEGENERACY_THRESHOLD {
            return Err(Error::RegularityLost { t, speed });
        }
    }
    Ok(spline)
}

/// Sampled `W^{2,inf}` distance between two curves over a shared domain:
/// the sup over `sample_count` parameters of the largest of
/// `|m_h - m|`, `|m_h' - m'|`, `|m_h'' - m''|`.
pub fn gamma(exact: &dyn Curve, approx: &dyn Curve, sample_count: usize) -> Result<f64> {
    let (a, b) = exact.domain();
    let (a2, b2) = approx.domain();
    if (a - a2).abs() > 1e-10 || (b - b2).abs() > 1e-10 {
        return Err(Error::DomainMismatch(format!("[{a}, {b}] vs [{a2}, {b2}]")));
    }
    if sample_count < 256 {
        return Err(Error::InvalidArgument(format!(
            "gamma needs sample_count >= 256, got {sample_count}"
        )));
    }
    let mut worst = 0.0_f64;
    for i in 0..=sample_count {
        let t = a + (b - a) * i as f64 / sample_count as f64;
        let d0 = (approx.point(t) - exact.point(t)).norm();
        let d1 = (approx.velocity(t) - exact.velocity(t)).norm();
        let d2 = (approx.acceleration(t) - exact.acceleration(t)).norm();
        worst = worst.max(d0).max(d1).max(d2);
    }
    Ok(worst)
}

/// Re-carries fields between two curves over the same parameter domain.
///
/// Because source and target share the parameter domain, the composition
/// `v o m o m_sigma^{-1}` acts on nodal coefficients as the identity; only
/// the carrier (and with it every norm) changes.
pub struct PullbackOperator {
    source: Arc<dyn Curve>,
    target: Arc<dyn Curve>,
}

impl PullbackOperator {
    pub fn new(source: Arc<dyn Curve>, target: Arc<dyn Curve>) -> Result<Self> {
        let (a, b) = source.domain();
        let (a2, b2) = target.domain();
        if (a - a2).abs() > 1e-10 || (b - b2).abs() > 1e-10 {
            return Err(Error::DomainMismatch(format!("[{a}, {b}] vs [{a2}, {b2}]")));
        }
        Ok(PullbackOperator { source, target })
    }

    pub fn inverse(&self) -> PullbackOperator {
        PullbackOperator {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    pub fn apply(&self, field: &DiscreteVectorField) -> Result<DiscreteVectorField> {
        if field.carrier_label() != self.source.label() {
            return Err(Error::GridMismatch(format!(
                "field carried by {:?}, pullback source is {:?}",
                field.carrier_label(),
                self.source.label()
            )));
        }
        DiscreteVectorField::new(
            self.target.clone(),
            field.grid().clone(),
            field.values().to_vec(),
        )
    }
}

/// Estimate of the operator perturbation `||F_sigma - F||` between two
/// discretizations acting on the same grids, measured from the full `h1`
/// norm on the source to `L2` on the target.
///
/// Random unit-norm trial fields give a lower bound which a power iteration
/// on the composite normal operator then refines.
pub fn operator_perturbation_rho(
    f_exact: &DiscreteOperator,
    f_approx: &DiscreteOperator,
    trial_count: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if trial_count < 20 {
        return Err(Error::InvalidArgument(format!(
            "rho estimation needs trial_count >= 20, got {trial_count}"
        )));
    }
    if f_exact.source_dof() != f_approx.source_dof()
        || f_exact.target_dof() != f_approx.target_dof()
    {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            f_exact.target_dof(),
            f_exact.source_dof(),
            f_approx.target_dof(),
            f_approx.source_dof()
        )));
    }
    let n = f_exact.source_dof();
    let grid = f_exact.source_grid();
    let carrier = f_exact.source_carrier();

    // h1 Gram matrix on the exact source carrier
    let mut h = block_mass(carrier.as_ref(), grid);
    let k = split_stiffness(carrier.as_ref(), grid)?;
    h.add_scaled(&k, 1.0);
    let target_mass = f_exact.target_mass();

    let diff = |u: &DVector<f64>| f_approx.apply(u) - f_exact.apply(u);
    let rayleigh = |u: &DVector<f64>| -> f64 {
        let d = diff(u);
        let num = target_mass.quadratic_form(&d);
        let den = h.quadratic_form(u);
        if den <= 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    };

    let mut best = 0.0_f64;
    let mut best_vec = DVector::from_element(n, 1.0);
    for _ in 0..trial_count {
        let u = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let r = rayleigh(&u);
        if r > best {
            best = r;
            best_vec = u;
        }
    }

    // power iteration on H^{-1} D^T M2 D
    let mut v = best_vec;
    for _ in 0..60 {
        let d = diff(&v);
        let mut w = DVector::zeros(n);
        // D^T M2 d  via operator transposes
        let m2d = target_mass.matvec(&d);
        w += f_approx.apply_transpose(&m2d) - f_exact.apply_transpose(&m2d);
        let w = h.cholesky_solve(&w)?;
        let norm = h.quadratic_form(&w).sqrt();
        if norm <= f64::MIN_POSITIVE.sqrt() {
            break;
        }
        v = w / norm;
    }
    Ok(best.max(rayleigh(&v)))
}

/// Convenience: `gamma` of a fitted spline against its generating curve.
pub fn spline_gamma(curve: &dyn Curve, h: f64, ends: EndCondition) -> Result<f64> {
    let s = fit_spline(curve, h, ends)?;
    gamma(curve, &s, DEFAULT_GAMMA_SAMPLES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AnalyticCurve;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn spline_reproduces_straight_line() {
        let c = AnalyticCurve::segment(Vector2::new(0.0, 0.0), Vector2::new(3.0, 1.0));
        let s = fit_spline(&c, 0.1, EndCondition::default()).unwrap();
        assert!(gamma(&c, &s, 512).unwrap() < 1e-12);
    }

    #[test]
    fn not_a_knot_reproduces_cubics() {
        let c = AnalyticCurve::new(
            "cubic",
            (0.0, 2.0),
            false,
            Orientation::Positive,
            |t| Vector2::new(t, t * t * t - t),
            |t| Vector2::new(1.0, 3.0 * t * t - 1.0),
            |t| Vector2::new(0.0, 6.0 * t),
        );
        let s = fit_spline(&c, 0.25, EndCondition::NotAKnot).unwrap();
        assert!(gamma(&c, &s, 512).unwrap() < 1e-10);
    }

    #[test]
    fn second_difference_reproduces_quadratics() {
        let c = AnalyticCurve::new(
            "parabola",
            (0.0, 2.0),
            false,
            Orientation::Positive,
            |t| Vector2::new(t, 0.5 * t * t),
            |t| Vector2::new(1.0, t),
            |_| Vector2::new(0.0, 1.0),
        );
        let s = fit_spline(&c, 0.25, EndCondition::default()).unwrap();
        assert!(gamma(&c, &s, 512).unwrap() < 1e-11);
    }

    #[test]
    fn spline_interpolates_at_knots() {
        let c = AnalyticCurve::sine_graph();
        let s = fit_spline(&c, PI / 16.0, EndCondition::default()).unwrap();
        for t in s.knots() {
            assert!((s.point(t) - c.point(t)).norm() < 1e-12);
        }
    }

    #[test]
    fn spline_is_c2_at_knots() {
        let c = AnalyticCurve::sine_graph();
        let s = fit_spline(&c, PI / 8.0, EndCondition::default()).unwrap();
        let eps = 1e-9;
        for t in s.knots().skip(1).take(s.n_intervals() - 1) {
            let dl = s.acceleration(t - eps);
            let dr = s.acceleration(t + eps);
            assert!((dl - dr).norm() < 1e-7, "second-derivative jump at {t}");
        }
    }

    #[test]
    fn gamma_of_identical_curves_is_zero() {
        let c = AnalyticCurve::circle(1.0);
        let c2 = AnalyticCurve::circle(1.0);
        assert_eq!(gamma(&c, &c2, 256).unwrap(), 0.0);
    }

    #[test]
    fn gamma_of_shifted_line_is_the_shift() {
        let c = AnalyticCurve::segment(Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0));
        let eps = 3e-4;
        let c2 = AnalyticCurve::segment(Vector2::new(0.0, eps), Vector2::new(1.0, eps));
        assert_relative_eq!(gamma(&c, &c2, 512).unwrap(), eps, epsilon = 1e-15);
    }

    #[test]
    fn gamma_rejects_domain_mismatch() {
        let c = AnalyticCurve::sine_graph();
        let seg = AnalyticCurve::segment(Vector2::zeros(), Vector2::new(1.0, 0.0));
        assert!(matches!(
            gamma(&c, &seg, 512),
            Err(Error::DomainMismatch(_))
        ));
    }

    #[test]
    fn gamma_halves_with_the_knot_step() {
        let c = AnalyticCurve::sine_graph();
        let mut h = PI / 16.0;
        let mut prev = spline_gamma(&c, h, EndCondition::default()).unwrap();
        for _ in 0..3 {
            h /= 2.0;
            let g = spline_gamma(&c, h, EndCondition::default()).unwrap();
            let ratio = prev / g;
            assert!(
                (1.7..=2.3).contains(&ratio),
                "gamma ratio {ratio} outside first-order window"
            );
            prev = g;
        }
    }

    #[test]
    fn gamma_family_matches_reference_values() {
        // measured distances for the sine graph at h = pi/8, pi/16, pi/32
        let reference = [(8.0, 0.3866), (16.0, 0.1922), (32.0, 0.0971)];
        let c = AnalyticCurve::sine_graph();
        for (denom, expected) in reference {
            let g = spline_gamma(&c, PI / denom, EndCondition::default()).unwrap();
            assert!(
                (g - expected).abs() / expected < 0.05,
                "gamma {g} vs reference {expected} at h = pi/{denom}"
            );
        }
    }

    #[test]
    fn gamma_family_tracks_the_knot_step() {
        // on the sine graph the distance is dominated by the second-derivative
        // defect near the ends, which scales like the step itself
        let c = AnalyticCurve::sine_graph();
        for k in [3u32, 4, 5] {
            let h = 0.5 * PI / 2.0_f64.powi(k as i32 - 1);
            let g = spline_gamma(&c, h, EndCondition::default()).unwrap();
            assert!((g / h - 1.0).abs() < 0.12, "gamma {g} vs step {h}");
        }
    }

    #[test]
    fn fit_rejects_coarse_step() {
        let c = AnalyticCurve::sine_graph();
        assert!(matches!(
            fit_spline(&c, TAU / 3.0, EndCondition::default()),
            Err(Error::TooFewKnots { .. })
        ));
    }

    #[test]
    fn pullback_identity_roundtrip() {
        let exact: Arc<dyn Curve> = Arc::new(AnalyticCurve::sine_graph());
        let spline: Arc<dyn Curve> =
            Arc::new(fit_spline(exact.as_ref(), PI / 8.0, EndCondition::default()).unwrap());
        let grid = Grid::open(0.0, TAU, 50).unwrap();
        let field = DiscreteVectorField::from_fn(exact.clone(), grid, |t, _| {
            Vector2::new(t.sin(), t.cos())
        })
        .unwrap();
        let t = PullbackOperator::new(exact.clone(), spline.clone()).unwrap();
        let pushed = t.apply(&field).unwrap();
        assert_eq!(pushed.carrier_label(), spline.label());
        let back = t.inverse().apply(&pushed).unwrap();
        for (u, v) in field.values().iter().zip(back.values()) {
            assert_eq!(u, v);
        }
    }

    #[test]
    fn pullback_of_constant_field_is_pointwise_unchanged() {
        let exact: Arc<dyn Curve> = Arc::new(AnalyticCurve::sine_graph());
        let spline: Arc<dyn Curve> =
            Arc::new(fit_spline(exact.as_ref(), PI / 8.0, EndCondition::default()).unwrap());
        let grid = Grid::open(0.0, TAU, 32).unwrap();
        let field =
            DiscreteVectorField::constant(exact.clone(), grid, Vector2::new(1.0, 0.0)).unwrap();
        let pushed = PullbackOperator::new(exact, spline)
            .unwrap()
            .apply(&field)
            .unwrap();
        for v in pushed.values() {
            assert_eq!(*v, Vector2::new(1.0, 0.0));
        }
    }

    #[test]
    fn pullback_rejects_foreign_fields() {
        let exact: Arc<dyn Curve> = Arc::new(AnalyticCurve::sine_graph());
        let spline: Arc<dyn Curve> =
            Arc::new(fit_spline(exact.as_ref(), PI / 8.0, EndCondition::default()).unwrap());
        let grid = Grid::open(0.0, TAU, 16).unwrap();
        let on_spline =
            DiscreteVectorField::constant(spline.clone(), grid, Vector2::new(0.0, 1.0)).unwrap();
        let t = PullbackOperator::new(exact, spline).unwrap();
        assert!(matches!(t.apply(&on_spline), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn serialization_roundtrip() {
        let c = AnalyticCurve::sine_graph();
        let s = fit_spline(&c, PI / 8.0, EndCondition::default()).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let back = SplineCurve::read_text(&mut std::io::BufReader::new(&buf[..])).unwrap();
        for i in 0..=64 {
            let t = TAU * i as f64 / 64.0;
            assert_relative_eq!(s.point(t), back.point(t), epsilon = 1e-15);
        }
    }
}
