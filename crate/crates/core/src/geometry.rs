//! Differential geometry of planar parametric curves.
//!
//! A curve is a regular map `m : [a, b] -> R^2` with two derivatives. All
//! pointwise quantities derive from the frame at a parameter: unit tangent
//! `tau = m'/|m'|`, unit normal `n` (`tau` rotated a quarter turn, times the
//! curve's orientation sign), the 1x1 metric `g = |m'|^2`, and the
//! Moore-Penrose pseudoinverse of the Jacobian `dm^+ = g^{-1} (dm)^T`.
//!
//! Surface gradients of sampled functions are formed by differentiating in
//! the parameter (see [`Grid::d_param`](crate::grid::Grid::d_param)) and
//! composing with `dm^+`, which makes them independent of the chosen
//! parametrization.

use std::sync::Arc;

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const DEGENERACY_THRESHOLD: f64 = 1e-12;
const TANGENCY_TOLERANCE: f64 = 1e-8;

/// Sign convention tying the unit normal to the tangent.
///
/// `Positive` takes `n` as `tau` rotated by +90 degrees, `Negative` flips it.
/// Closed convex curves traversed counterclockwise need `Negative` for an
/// outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

/// A twice-differentiable planar parametric curve.
pub trait Curve: Send + Sync {
    fn domain(&self) -> (f64, f64);
    fn point(&self, t: f64) -> Vector2<f64>;
    fn velocity(&self, t: f64) -> Vector2<f64>;
    fn acceleration(&self, t: f64) -> Vector2<f64>;
    fn orientation(&self) -> Orientation {
        Orientation::Positive
    }
    fn is_closed(&self) -> bool {
        false
    }
    /// Short identifier used in serialized headers and error messages.
    fn label(&self) -> String;
}

pub type CurveRef = Arc<dyn Curve>;

/// Curve defined by closures for the map and its first two derivatives.
pub struct AnalyticCurve {
    label: String,
    domain: (f64, f64),
    closed: bool,
    orientation: Orientation,
    f: Box<dyn Fn(f64) -> Vector2<f64> + Send + Sync>,
    df: Box<dyn Fn(f64) -> Vector2<f64> + Send + Sync>,
    d2f: Box<dyn Fn(f64) -> Vector2<f64> + Send + Sync>,
}

impl AnalyticCurve {
    pub fn new(
        label: impl Into<String>,
        domain: (f64, f64),
        closed: bool,
        orientation: Orientation,
        f: impl Fn(f64) -> Vector2<f64> + Send + Sync + 'static,
        df: impl Fn(f64) -> Vector2<f64> + Send + Sync + 'static,
        d2f: impl Fn(f64) -> Vector2<f64> + Send + Sync + 'static,
    ) -> Self {
        AnalyticCurve {
            label: label.into(),
            domain,
            closed,
            orientation,
            f: Box::new(f),
            df: Box::new(df),
            d2f: Box::new(d2f),
        }
    }

    /// Like [`AnalyticCurve::new`], but verifies regularity on a dense
    /// parameter sample and that the supplied derivatives agree with central
    /// differences of the map.
    pub fn try_new(
        label: impl Into<String>,
        domain: (f64, f64),
        closed: bool,
        orientation: Orientation,
        f: impl Fn(f64) -> Vector2<f64> + Send + Sync + 'static,
        df: impl Fn(f64) -> Vector2<f64> + Send + Sync + 'static,
        d2f: impl Fn(f64) -> Vector2<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        let curve = AnalyticCurve::new(label, domain, closed, orientation, f, df, d2f);
        let (a, b) = domain;
        let n = 512;
        let scale = (1..n)
            .map(|i| curve.velocity(a + (b - a) * i as f64 / n as f64).norm())
            .fold(1.0_f64, f64::max);
        for i in 0..=n {
            let t = a + (b - a) * i as f64 / n as f64;
            let speed = curve.velocity(t).norm();
            if speed < DEGENERACY_THRESHOLD {
                return Err(Error::DegenerateJacobian { t, speed });
            }
        }
        // derivatives must be consistent with the map at interior points
        let e = 1e-6 * (b - a);
        for i in 1..n {
            let t = a + (b - a) * i as f64 / n as f64;
            let fd1 = (curve.point(t + e) - curve.point(t - e)) / (2.0 * e);
            if (fd1 - curve.velocity(t)).norm() > 1e-4 * scale {
                return Err(Error::InvalidArgument(format!(
                    "first derivative disagrees with central differences at t = {t}"
                )));
            }
            let fd2 = (curve.point(t + e) - curve.point(t) * 2.0 + curve.point(t - e)) / (e * e);
            if (fd2 - curve.acceleration(t)).norm() > 1e-2 * scale.max(fd2.norm()) {
                return Err(Error::InvalidArgument(format!(
                    "second derivative disagrees with central differences at t = {t}"
                )));
            }
        }
        Ok(curve)
    }

    /// Circle of the given radius, counterclockwise, outward normal.
    pub fn circle(radius: f64) -> Self {
        AnalyticCurve::new(
            format!("circle(r={radius})"),
            (0.0, std::f64::consts::TAU),
            true,
            Orientation::Negative,
            move |t| Vector2::new(radius * t.cos(), radius * t.sin()),
            move |t| Vector2::new(-radius * t.sin(), radius * t.cos()),
            move |t| Vector2::new(-radius * t.cos(), -radius * t.sin()),
        )
    }

    /// Graph of the sine function, `(t, sin t)` on `[0, 2pi]`.
    pub fn sine_graph() -> Self {
        AnalyticCurve::new(
            "sine-graph",
            (0.0, std::f64::consts::TAU),
            false,
            Orientation::Positive,
            |t| Vector2::new(t, t.sin()),
            |t| Vector2::new(1.0, t.cos()),
            |t| Vector2::new(0.0, -t.sin()),
        )
    }

    /// Upper arc of the unit circle as a graph, `(t, sqrt(1-t^2))` on
    /// `[-0.9, 0.9]`, outward normal.
    pub fn upper_circle_graph() -> Self {
        let y = |t: f64| (1.0 - t * t).sqrt();
        AnalyticCurve::new(
            "upper-circle-graph",
            (-0.9, 0.9),
            false,
            Orientation::Positive,
            move |t| Vector2::new(t, y(t)),
            move |t| Vector2::new(1.0, -t / y(t)),
            move |t| Vector2::new(0.0, -1.0 / (y(t) * y(t) * y(t))),
        )
    }

    /// Axis-aligned ellipse `(rx cos t, ry sin t)`, counterclockwise,
    /// outward normal.
    pub fn ellipse(rx: f64, ry: f64) -> Self {
        AnalyticCurve::new(
            format!("ellipse(rx={rx},ry={ry})"),
            (0.0, std::f64::consts::TAU),
            true,
            Orientation::Negative,
            move |t| Vector2::new(rx * t.cos(), ry * t.sin()),
            move |t| Vector2::new(-rx * t.sin(), ry * t.cos()),
            move |t| Vector2::new(-rx * t.cos(), -ry * t.sin()),
        )
    }

    /// Straight segment from `p0` to `p1` over `[0, 1]`.
    pub fn segment(p0: Vector2<f64>, p1: Vector2<f64>) -> Self {
        let d = p1 - p0;
        AnalyticCurve::new(
            "segment",
            (0.0, 1.0),
            false,
            Orientation::Positive,
            move |t| p0 + d * t,
            move |_| d,
            |_| Vector2::zeros(),
        )
    }
}

impl Curve for AnalyticCurve {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn point(&self, t: f64) -> Vector2<f64> {
        (self.f)(t)
    }
    fn velocity(&self, t: f64) -> Vector2<f64> {
        (self.df)(t)
    }
    fn acceleration(&self, t: f64) -> Vector2<f64> {
        (self.d2f)(t)
    }
    fn orientation(&self) -> Orientation {
        self.orientation
    }
    fn is_closed(&self) -> bool {
        self.closed
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Piecewise-linear curve through a point list, parametrized over
/// `[0, n_segments]` with one segment per unit interval.
///
/// The derivative is piecewise constant; at interior corners the value of the
/// left segment is reported. Quadrature against polylines must therefore keep
/// its nodes strictly inside segments, which Gauss points do.
pub struct PolylineCurve {
    label: String,
    points: Vec<Vector2<f64>>,
    closed: bool,
}

impl PolylineCurve {
    /// `points` are the polygon vertices; for a closed polyline the first and
    /// last point must coincide.
    pub fn new(label: impl Into<String>, points: Vec<Vector2<f64>>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "polyline needs at least 2 points".into(),
            ));
        }
        if closed && (points[0] - points[points.len() - 1]).norm() > 1e-12 {
            return Err(Error::InvalidArgument(
                "closed polyline must repeat its first point at the end".into(),
            ));
        }
        Ok(PolylineCurve {
            label: label.into(),
            points,
            closed,
        })
    }

    /// Sample a curve at `n_segments + 1` uniform parameters and connect them.
    pub fn from_curve(curve: &dyn Curve, n_segments: usize) -> Result<Self> {
        if n_segments < 3 {
            return Err(Error::InvalidArgument("need at least 3 segments".into()));
        }
        let (a, b) = curve.domain();
        let h = (b - a) / n_segments as f64;
        let mut points: Vec<Vector2<f64>> = (0..n_segments)
            .map(|i| curve.point(a + h * i as f64))
            .collect();
        if curve.is_closed() {
            points.push(points[0]);
        } else {
            points.push(curve.point(b));
        }
        PolylineCurve::new(
            format!("polygon({},n={n_segments})", curve.label()),
            points,
            curve.is_closed(),
        )
    }

    pub fn n_segments(&self) -> usize {
        self.points.len() - 1
    }

    fn segment_index(&self, t: f64) -> usize {
        (t.floor() as isize).clamp(0, self.n_segments() as isize - 1) as usize
    }
}

impl Curve for PolylineCurve {
    fn domain(&self) -> (f64, f64) {
        (0.0, self.n_segments() as f64)
    }
    fn point(&self, t: f64) -> Vector2<f64> {
        let i = self.segment_index(t);
        let x = t - i as f64;
        self.points[i] * (1.0 - x) + self.points[i + 1] * x
    }
    fn velocity(&self, t: f64) -> Vector2<f64> {
        let i = self.segment_index(t);
        self.points[i + 1] - self.points[i]
    }
    fn acceleration(&self, _t: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn orientation(&self) -> Orientation {
        Orientation::Negative
    }
    fn is_closed(&self) -> bool {
        self.closed
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Pointwise frame data of a curve.
#[derive(Debug, Clone)]
pub struct Frame {
    pub point: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub normal: Vector2<f64>,
    /// Metric `g = |m'|^2`.
    pub metric: f64,
    /// Jacobian column `m'`.
    pub jacobian: Vector2<f64>,
    /// Moore-Penrose inverse `g^{-1} (m')^T`.
    pub jacobian_pinv: RowVector2<f64>,
}

impl Frame {
    pub fn speed(&self) -> f64 {
        self.metric.sqrt()
    }
}

/// Tangential and normal projection matrices at a point.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub p_tau: Matrix2<f64>,
    pub p_n: Matrix2<f64>,
}

fn rot90(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

pub fn frame_at(curve: &dyn Curve, t: f64) -> Result<Frame> {
    let jac = curve.velocity(t);
    let speed = jac.norm();
    if speed < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateJacobian { t, speed });
    }
    let tangent = jac / speed;
    let normal = rot90(tangent) * curve.orientation().sign();
    let metric = speed * speed;
    Ok(Frame {
        point: curve.point(t),
        tangent,
        normal,
        metric,
        jacobian: jac,
        jacobian_pinv: (jac / metric).transpose(),
    })
}

pub fn projections_at(curve: &dyn Curve, t: f64) -> Result<ProjectionPair> {
    let frame = frame_at(curve, t)?;
    Ok(projections_from_normal(frame.normal))
}

pub fn projections_from_normal(n: Vector2<f64>) -> ProjectionPair {
    let p_n = n * n.transpose();
    ProjectionPair {
        p_tau: Matrix2::identity() - p_n,
        p_n,
    }
}

/// Frames at every node of a grid.
pub fn frames_on_grid(curve: &dyn Curve, grid: &Grid) -> Result<Vec<Frame>> {
    grid.nodes().map(|t| frame_at(curve, t)).collect()
}

/// Surface gradient of a sampled scalar `v o m`: rows
/// `d(v o m)(t_i) * dm^+(t_i)`, tangent to the curve up to discretization
/// error.
pub fn surface_gradient(
    curve: &dyn Curve,
    grid: &Grid,
    samples: &[f64],
) -> Result<Vec<RowVector2<f64>>> {
    let dv = grid.d_param(samples)?;
    grid.nodes()
        .zip(dv)
        .map(|(t, d)| Ok(frame_at(curve, t)?.jacobian_pinv * d))
        .collect()
}

/// Surface gradient applied to each ambient component of a vector field;
/// row `i` of the result at a node is the surface gradient of component `i`.
pub fn surface_gradient_vector(
    curve: &dyn Curve,
    grid: &Grid,
    values: &[Vector2<f64>],
) -> Result<Vec<Matrix2<f64>>> {
    let dv = grid.d_param_vec(values)?;
    grid.nodes()
        .zip(dv)
        .map(|(t, d)| {
            let pinv = frame_at(curve, t)?.jacobian_pinv;
            let mut m = Matrix2::zeros();
            m.set_row(0, &(pinv * d.x));
            m.set_row(1, &(pinv * d.y));
            Ok(m)
        })
        .collect()
}

/// Covariant derivative of a tangent field: the tangential projection of the
/// parameter derivative. Rejects fields with a normal part above 1e-8.
pub fn covariant_derivative(
    curve: &dyn Curve,
    grid: &Grid,
    values: &[Vector2<f64>],
) -> Result<Vec<Vector2<f64>>> {
    let frames = frames_on_grid(curve, grid)?;
    if values.len() != frames.len() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} nodal values, got {}",
            frames.len(),
            values.len()
        )));
    }
    let max_normal = values
        .iter()
        .zip(&frames)
        .map(|(u, f)| f.normal.dot(u).abs())
        .fold(0.0_f64, f64::max);
    if max_normal > TANGENCY_TOLERANCE {
        return Err(Error::NotTangent { max_normal });
    }
    let du = grid.d_param_vec(values)?;
    Ok(frames
        .iter()
        .zip(du)
        .map(|(f, d)| {
            let p = projections_from_normal(f.normal).p_tau;
            p * d
        })
        .collect())
}

/// Sampled supremum of the Frobenius norm of the shape operator
/// `grad_M n`; an estimate of the extrinsic curvature bound.
///
/// `n_samples` is the number of grid elements used (at least 64; 1024 gives
/// about three digits on the unit circle).
pub const DEFAULT_CURVATURE_SAMPLES: usize = 1024;

pub fn curvature_bound(curve: &dyn Curve, n_samples: usize) -> Result<f64> {
    if n_samples < 64 {
        return Err(Error::InvalidArgument(format!(
            "curvature_bound needs n_samples >= 64, got {n_samples}"
        )));
    }
    let (a, b) = curve.domain();
    let grid = if curve.is_closed() {
        Grid::closed(a, b, n_samples)?
    } else {
        Grid::open(a, b, n_samples)?
    };
    let normals: Vec<Vector2<f64>> = frames_on_grid(curve, &grid)?
        .into_iter()
        .map(|f| f.normal)
        .collect();
    let grads = surface_gradient_vector(curve, &grid, &normals)?;
    Ok(grads.iter().map(|m| m.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn frame_on_unit_circle() {
        let c = AnalyticCurve::circle(1.0);
        let f = frame_at(&c, 0.0).unwrap();
        assert_relative_eq!(f.tangent, Vector2::new(0.0, 1.0), epsilon = 1e-14);
        assert_relative_eq!(f.normal, Vector2::new(1.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(f.metric, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn frame_on_sine_graph() {
        let c = AnalyticCurve::sine_graph();
        let f = frame_at(&c, 0.0).unwrap();
        assert_relative_eq!(f.metric, 2.0, epsilon = 1e-14);
        let s = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(f.tangent, Vector2::new(s, s), epsilon = 1e-14);
    }

    #[test]
    fn frame_matches_finite_difference_oracle() {
        // central differences of the map itself, step 1e-6
        let c = AnalyticCurve::upper_circle_graph();
        let t = 0.5;
        let e = 1e-6;
        let dm = (c.point(t + e) - c.point(t - e)) / (2.0 * e);
        let f = frame_at(&c, t).unwrap();
        assert_relative_eq!(f.jacobian, dm, epsilon = 1e-8);
        assert_relative_eq!(f.metric, dm.norm_squared(), epsilon = 1e-7);
        assert_relative_eq!(f.tangent, dm / dm.norm(), epsilon = 1e-8);
        let pinv_expected = (dm / dm.norm_squared()).transpose();
        assert_relative_eq!(f.jacobian_pinv, pinv_expected, epsilon = 1e-7);
    }

    #[test]
    fn pinv_identities() {
        let c = AnalyticCurve::sine_graph();
        for t in [0.3, 1.7, 4.2] {
            let f = frame_at(&c, t).unwrap();
            // dm^+ dm = 1
            let one = (f.jacobian_pinv * f.jacobian)[(0, 0)];
            assert_relative_eq!(one, 1.0, epsilon = 1e-13);
            // dm dm^+ = P_tau
            let p = f.jacobian * f.jacobian_pinv;
            let pr = projections_at(&c, t).unwrap();
            assert_relative_eq!(p, pr.p_tau, epsilon = 1e-13);
        }
    }

    #[test]
    fn degenerate_velocity_errors() {
        let c = AnalyticCurve::new(
            "cusp",
            (-1.0, 1.0),
            false,
            Orientation::Positive,
            |t| Vector2::new(t * t, 0.0),
            |t| Vector2::new(2.0 * t, 0.0),
            |_| Vector2::new(2.0, 0.0),
        );
        assert!(matches!(
            frame_at(&c, 0.0),
            Err(Error::DegenerateJacobian { .. })
        ));
    }

    #[test]
    fn projections_on_circle() {
        let c = AnalyticCurve::circle(1.0);
        let p = projections_at(&c, 0.0).unwrap();
        assert_relative_eq!(p.p_n, Matrix2::new(1.0, 0.0, 0.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(p.p_tau, Matrix2::new(0.0, 0.0, 0.0, 1.0), epsilon = 1e-14);
    }

    #[test]
    fn projection_invariants_at_random_params() {
        let c = AnalyticCurve::sine_graph();
        for t in [0.1, 0.9, 2.3, 3.3, 5.9] {
            let p = projections_at(&c, t).unwrap();
            assert_relative_eq!(p.p_tau + p.p_n, Matrix2::identity(), epsilon = 1e-12);
            assert_relative_eq!(p.p_tau * p.p_tau, p.p_tau, epsilon = 1e-12);
            assert_relative_eq!(p.p_n * p.p_n, p.p_n, epsilon = 1e-12);
            assert_relative_eq!(p.p_tau * p.p_n, Matrix2::zeros(), epsilon = 1e-12);
        }
    }

    #[test]
    fn surface_gradient_of_constant_vanishes() {
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 64).unwrap();
        let v = vec![3.5; grid.node_count()];
        for g in surface_gradient(&c, &grid, &v).unwrap() {
            assert!(g.norm() < 1e-13);
        }
    }

    #[test]
    fn surface_gradient_of_x1_on_circle() {
        // v(x) = x_1, so v o m = cos t and grad_M v = (sin^2 t, -sin t cos t)
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 512).unwrap();
        let v: Vec<f64> = grid.nodes().map(|t| t.cos()).collect();
        let grads = surface_gradient(&c, &grid, &v).unwrap();
        for (i, t) in grid.nodes().enumerate() {
            let expect = RowVector2::new(t.sin() * t.sin(), -t.sin() * t.cos());
            assert_relative_eq!(grads[i], expect, epsilon = 5e-5);
            // tangency
            let n = frame_at(&c, t).unwrap().normal;
            assert!((grads[i] * n)[(0, 0)].abs() < 5e-5);
        }
        // spot value at t = pi/2
        let i = 128;
        assert_relative_eq!(grads[i], RowVector2::new(1.0, 0.0), epsilon = 1e-4);
        assert!((grid.node(i) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn arclength_linear_gradient_has_unit_norm() {
        // unit-speed circle: v o m = t is linear in arclength
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::open(0.1, TAU - 0.1, 256).unwrap();
        let v: Vec<f64> = grid.nodes().collect();
        for g in surface_gradient(&c, &grid, &v).unwrap() {
            assert_relative_eq!(g.norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn shape_operator_of_unit_circle() {
        // field n(x) = x on the unit circle; grad_M n = P_tau
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 512).unwrap();
        let field: Vec<Vector2<f64>> = grid.nodes().map(|t| c.point(t)).collect();
        let grads = surface_gradient_vector(&c, &grid, &field).unwrap();
        for (i, t) in grid.nodes().enumerate() {
            let p = projections_at(&c, t).unwrap();
            assert_relative_eq!(grads[i], p.p_tau, epsilon = 5e-5);
            assert_relative_eq!(grads[i].norm(), 1.0, epsilon = 5e-5);
        }
    }

    #[test]
    fn gradient_of_constant_field_is_zero_matrix() {
        let c = AnalyticCurve::sine_graph();
        let grid = Grid::open(0.0, TAU, 64).unwrap();
        let field = vec![Vector2::new(1.0, -2.0); grid.node_count()];
        for g in surface_gradient_vector(&c, &grid, &field).unwrap() {
            assert!(g.norm() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_tangent_field_on_circle() {
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 512).unwrap();
        let field: Vec<Vector2<f64>> = grid
            .nodes()
            .map(|t| frame_at(&c, t).unwrap().tangent)
            .collect();
        for g in surface_gradient_vector(&c, &grid, &field).unwrap() {
            assert_relative_eq!(g.norm(), 1.0, epsilon = 5e-5);
        }
    }

    #[test]
    fn covariant_derivative_of_tangent_frame_on_circle_is_parallel() {
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 256).unwrap();
        let field: Vec<Vector2<f64>> = grid
            .nodes()
            .map(|t| frame_at(&c, t).unwrap().tangent)
            .collect();
        for d in covariant_derivative(&c, &grid, &field).unwrap() {
            assert!(d.norm() < 2e-4);
        }
    }

    #[test]
    fn covariant_derivative_scales_like_f_prime() {
        // u = f(t) tau on the unit-speed circle has covariant derivative f'(t) tau
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 512).unwrap();
        let f = |t: f64| (2.0 * t).sin();
        let field: Vec<Vector2<f64>> = grid
            .nodes()
            .map(|t| frame_at(&c, t).unwrap().tangent * f(t))
            .collect();
        let cov = covariant_derivative(&c, &grid, &field).unwrap();
        for (i, t) in grid.nodes().enumerate() {
            let expect = frame_at(&c, t).unwrap().tangent * 2.0 * (2.0 * t).cos();
            assert_relative_eq!(cov[i], expect, epsilon = 3e-3);
        }
    }

    #[test]
    fn covariant_derivative_of_zero_field() {
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 64).unwrap();
        let field = vec![Vector2::zeros(); grid.node_count()];
        for d in covariant_derivative(&c, &grid, &field).unwrap() {
            assert_eq!(d.norm(), 0.0);
        }
    }

    #[test]
    fn covariant_derivative_rejects_normal_part() {
        let c = AnalyticCurve::circle(1.0);
        let grid = Grid::closed(0.0, TAU, 64).unwrap();
        let field: Vec<Vector2<f64>> = grid
            .nodes()
            .map(|t| frame_at(&c, t).unwrap().normal * 0.1)
            .collect();
        assert!(matches!(
            covariant_derivative(&c, &grid, &field),
            Err(Error::NotTangent { .. })
        ));
    }

    #[test]
    fn curvature_of_circles() {
        let c = AnalyticCurve::circle(1.0);
        let k = curvature_bound(&c, 1024).unwrap();
        assert_relative_eq!(k, 1.0, epsilon = 1e-3);

        let c3 = AnalyticCurve::circle(3.0);
        let k3 = curvature_bound(&c3, 1024).unwrap();
        assert_relative_eq!(k3, 1.0 / 3.0, epsilon = 1e-3);
    }

    #[test]
    fn curvature_of_segment_is_zero() {
        let c = AnalyticCurve::segment(Vector2::new(0.0, 0.0), Vector2::new(2.0, 1.0));
        let k = curvature_bound(&c, 128).unwrap();
        assert!(k < 1e-12);
    }

    #[test]
    fn curvature_rejects_sparse_sampling() {
        let c = AnalyticCurve::circle(1.0);
        assert!(curvature_bound(&c, 32).is_err());
    }

    #[test]
    fn builtin_derivative_closures_match_central_differences() {
        // first derivatives to O(e^2), second derivatives from the map
        for c in [
            AnalyticCurve::circle(2.0),
            AnalyticCurve::sine_graph(),
            AnalyticCurve::upper_circle_graph(),
            AnalyticCurve::ellipse(3.0, 2.0),
        ] {
            let (a, b) = c.domain();
            let e = 1e-5 * (b - a);
            for i in 1..40 {
                let t = a + (b - a) * i as f64 / 40.0;
                let fd1 = (c.point(t + e) - c.point(t - e)) / (2.0 * e);
                assert_relative_eq!(c.velocity(t), fd1, epsilon = 1e-6);
                let fd2 = (c.point(t + e) - c.point(t) * 2.0 + c.point(t - e)) / (e * e);
                assert_relative_eq!(c.acceleration(t), fd2, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn try_new_checks_regularity_and_derivatives() {
        let good = AnalyticCurve::try_new(
            "parabola",
            (0.0, 1.0),
            false,
            Orientation::Positive,
            |t| Vector2::new(t, t * t),
            |t| Vector2::new(1.0, 2.0 * t),
            |_| Vector2::new(0.0, 2.0),
        );
        assert!(good.is_ok());

        let degenerate = AnalyticCurve::try_new(
            "cusp",
            (-1.0, 1.0),
            false,
            Orientation::Positive,
            |t| Vector2::new(t * t, 0.0),
            |t| Vector2::new(2.0 * t, 0.0),
            |_| Vector2::new(2.0, 0.0),
        );
        assert!(matches!(degenerate, Err(Error::DegenerateJacobian { .. })));

        let wrong_derivative = AnalyticCurve::try_new(
            "mislabeled",
            (0.0, 1.0),
            false,
            Orientation::Positive,
            |t| Vector2::new(t, t * t),
            |t| Vector2::new(1.0, 3.0 * t),
            |_| Vector2::new(0.0, 2.0),
        );
        assert!(matches!(wrong_derivative, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn polyline_corners_use_left_derivative() {
        let pts = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
        ];
        let p = PolylineCurve::new("corner", pts, false).unwrap();
        assert_relative_eq!(p.velocity(0.5), Vector2::new(1.0, 0.0));
        assert_relative_eq!(p.velocity(1.5), Vector2::new(0.0, 1.0));
        assert_relative_eq!(p.point(1.5), Vector2::new(1.0, 0.5));
    }

    #[test]
    fn reparametrization_leaves_frame_and_gradient_invariant() {
        // phi : [0,1] -> [0, 2pi] smooth, monotone, non-affine
        let phi = |s: f64| PI * (2.0 * s + 0.3 * (PI * s).sin().powi(2) * (1.0 - s));
        let dphi = move |s: f64| {
            let e = 1e-6;
            (phi(s + e) - phi(s - e)) / (2.0 * e)
        };
        let d2phi = move |s: f64| {
            let e = 1e-5;
            (phi(s + e) - 2.0 * phi(s) + phi(s - e)) / (e * e)
        };
        let base = AnalyticCurve::sine_graph();
        let m = |t: f64| Vector2::new(t, t.sin());
        let dm = |t: f64| Vector2::new(1.0, t.cos());
        let d2m = |t: f64| Vector2::new(0.0, -t.sin());
        let repar = AnalyticCurve::new(
            "sine-reparametrized",
            (0.0, 1.0),
            false,
            Orientation::Positive,
            move |s| m(phi(s)),
            move |s| dm(phi(s)) * dphi(s),
            move |s| d2m(phi(s)) * dphi(s) * dphi(s) + dm(phi(s)) * d2phi(s),
        );

        // frames agree at matching points (tangent, normal; metric does not)
        for s in [0.12, 0.4, 0.77] {
            let f1 = frame_at(&base, phi(s)).unwrap();
            let f2 = frame_at(&repar, s).unwrap();
            assert_relative_eq!(f1.tangent, f2.tangent, epsilon = 1e-6);
            assert_relative_eq!(f1.normal, f2.normal, epsilon = 1e-6);
        }

        // surface gradient of the same ambient scalar agrees at matching
        // points to O(step^2); reference on a fine grid of the base curve
        let v = |p: Vector2<f64>| p.x * p.y;
        let fine = Grid::open(0.0, TAU, 8192).unwrap();
        let s_fine: Vec<f64> = fine.nodes().map(|t| v(base.point(t))).collect();
        let gr_fine = surface_gradient(&base, &fine, &s_fine).unwrap();
        let errs: Vec<f64> = [64usize, 256]
            .iter()
            .map(|&n| {
                let g2 = Grid::open(0.0, 1.0, n).unwrap();
                let s2: Vec<f64> = g2.nodes().map(|s| v(repar.point(s))).collect();
                let gr2 = surface_gradient(&repar, &g2, &s2).unwrap();
                let mut worst = 0.0_f64;
                for (j, s) in g2.nodes().enumerate() {
                    let x = phi(s) / fine.step();
                    let i = (x.floor() as usize).min(fine.node_count() - 2);
                    let frac = x - i as f64;
                    let reference = gr_fine[i] * (1.0 - frac) + gr_fine[i + 1] * frac;
                    worst = worst.max((reference - gr2[j]).norm());
                }
                worst
            })
            .collect();
        assert!(errs[0] < 5e-2, "coarse reparametrization error {}", errs[0]);
        assert!(
            errs[1] < errs[0] / 8.0,
            "no quadratic decay under refinement: {errs:?}"
        );
    }
}
