//! Discrete forward operators.
//!
//! Operators act on interleaved field dofs over a source grid and produce
//! data dofs over a target grid. The adjoint is the discrete one induced by
//! the quadrature inner products, `F* = M1^{-1} F^T M2`, so the identity
//! `<F u, y>_{L2(M2)} = <u, F* y>_{L2(M1)}` holds to solver precision by
//! construction.
//!
//! The magnetization operator integrates the field against the closed-form
//! kernel `(y - x) / |y - x|^2`; a fixed constant prefactor is dropped. Rows
//! are the data nodes on the target curve, columns the source field dofs,
//! assembled with 3-point Gauss quadrature per source element. The kernel is
//! smooth as long as the curves keep a positive distance, which construction
//! verifies by sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fem::{block_mass, normal_penalty, scalar_mass, SystemMatrix, GAUSS3};
use crate::geometry::{frames_on_grid, Curve, CurveRef, Frame};
use crate::grid::Grid;

pub const MIN_CURVE_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Magnetization,
    Embedding,
    NormalConstraint,
}

#[derive(Clone)]
pub struct DiscreteOperator {
    kind: OperatorKind,
    source_carrier: CurveRef,
    source_grid: Grid,
    target_carrier: CurveRef,
    target_grid: Grid,
    target_components: usize,
    matrix: Option<DMatrix<f64>>,
    frames: Option<Vec<Frame>>,
    source_mass: SystemMatrix,
    target_mass: SystemMatrix,
}

impl DiscreteOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn source_carrier(&self) -> &CurveRef {
        &self.source_carrier
    }

    pub fn source_grid(&self) -> &Grid {
        &self.source_grid
    }

    pub fn target_carrier(&self) -> &CurveRef {
        &self.target_carrier
    }

    pub fn target_grid(&self) -> &Grid {
        &self.target_grid
    }

    pub fn source_dof(&self) -> usize {
        2 * self.source_grid.node_count()
    }

    pub fn target_dof(&self) -> usize {
        self.target_components * self.target_grid.node_count()
    }

    pub fn source_mass(&self) -> &SystemMatrix {
        &self.source_mass
    }

    pub fn target_mass(&self) -> &SystemMatrix {
        &self.target_mass
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        assert_eq!(u.len(), self.source_dof());
        match (&self.matrix, self.kind) {
            (Some(m), _) => m * u,
            (None, OperatorKind::Embedding) => u.clone(),
            (None, OperatorKind::NormalConstraint) => {
                let frames = self.frames.as_ref().expect("frames");
                let mut y = DVector::zeros(u.len());
                for (i, f) in frames.iter().enumerate() {
                    let dot = f.normal.x * u[2 * i] + f.normal.y * u[2 * i + 1];
                    y[2 * i] = f.normal.x * dot;
                    y[2 * i + 1] = f.normal.y * dot;
                }
                y
            }
            _ => unreachable!("matrix-backed kind without matrix"),
        }
    }

    /// Plain matrix transpose (no mass weighting).
    pub fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.target_dof());
        match (&self.matrix, self.kind) {
            (Some(m), _) => m.transpose() * y,
            // both fallback kinds are symmetric nodewise maps
            (None, _) => self.apply(y),
        }
    }

    /// Discrete adjoint `F* y = M1^{-1} F^T M2 y`.
    pub fn apply_adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.target_dof() {
            return Err(Error::DimensionMismatch(format!(
                "adjoint input has {} dofs, expected {}",
                y.len(),
                self.target_dof()
            )));
        }
        if matches!(self.kind, OperatorKind::Embedding) {
            return Ok(y.clone());
        }
        let rhs = self.apply_transpose(&self.target_mass.matvec(y));
        self.source_mass.cholesky_solve(&rhs)
    }

    /// `<F u, y>_{L2(target)}`.
    pub fn pairing(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.target_mass.matvec(y).dot(&self.apply(u))
    }

    /// `<u, v>_{L2(source)}` on field dofs.
    pub fn source_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.source_mass.matvec(v).dot(u)
    }

    pub fn source_l2_norm(&self, u: &DVector<f64>) -> f64 {
        self.source_inner(u, u).max(0.0).sqrt()
    }

    pub fn target_l2_norm(&self, y: &DVector<f64>) -> f64 {
        self.target_mass.quadratic_form(y).max(0.0).sqrt()
    }

    /// `||F u - y||^2_{L2(target)}`.
    pub fn residual_norm_sq(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let r = self.apply(u) - y;
        self.target_mass.quadratic_form(&r).max(0.0)
    }

    /// Gram matrix `F^T M2 F` on source dofs, banded where possible.
    pub fn gram(&self) -> SystemMatrix {
        match (&self.matrix, self.kind) {
            (Some(m), _) => {
                let m2f = self.target_mass.to_dense() * m;
                SystemMatrix::Dense(m.transpose() * m2f)
            }
            (None, OperatorKind::Embedding) => self.source_mass.clone(),
            (None, OperatorKind::NormalConstraint) => {
                normal_penalty(self.source_carrier.as_ref(), &self.source_grid)
                    .expect("frames exist for a constructed operator")
            }
            _ => unreachable!(),
        }
    }

    /// Right-hand side `F^T M2 y` for the normal equations.
    pub fn normal_rhs(&self, y: &DVector<f64>) -> DVector<f64> {
        self.apply_transpose(&self.target_mass.matvec(y))
    }

    /// Dense matrix export: row-major, one row per line.
    pub fn write_matrix_text(&self, w: &mut impl std::io::Write) -> Result<()> {
        let m = self.matrix.as_ref().ok_or_else(|| {
            Error::InvalidArgument("operator has no assembled dense matrix".into())
        })?;
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols())
                .map(|j| format!("{:.16e}", m[(i, j)]))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.matrix.as_ref()
    }
}

/// Identity on nodal values; its discrete adjoint is the identity as well.
pub fn build_embedding_operator(carrier: CurveRef, grid: Grid) -> Result<DiscreteOperator> {
    let mass = block_mass(carrier.as_ref(), &grid);
    Ok(DiscreteOperator {
        kind: OperatorKind::Embedding,
        source_carrier: carrier.clone(),
        source_grid: grid.clone(),
        target_carrier: carrier,
        target_grid: grid,
        target_components: 2,
        matrix: None,
        frames: None,
        source_mass: mass.clone(),
        target_mass: mass,
    })
}

/// Nodewise projection onto the normal bundle, `u -> n (n^T u)`.
pub fn build_normal_constraint_operator(carrier: CurveRef, grid: Grid) -> Result<DiscreteOperator> {
    let frames = frames_on_grid(carrier.as_ref(), &grid)?;
    let mass = block_mass(carrier.as_ref(), &grid);
    Ok(DiscreteOperator {
        kind: OperatorKind::NormalConstraint,
        source_carrier: carrier.clone(),
        source_grid: grid.clone(),
        target_carrier: carrier,
        target_grid: grid,
        target_components: 2,
        matrix: None,
        frames: Some(frames),
        source_mass: mass.clone(),
        target_mass: mass,
    })
}

/// Sampled minimum distance between two curves.
pub fn min_curve_distance(a: &dyn Curve, b: &dyn Curve, samples: usize) -> f64 {
    let (a0, a1) = a.domain();
    let (b0, b1) = b.domain();
    let pa: Vec<_> = (0..=samples)
        .map(|i| a.point(a0 + (a1 - a0) * i as f64 / samples as f64))
        .collect();
    let pb: Vec<_> = (0..=samples)
        .map(|i| b.point(b0 + (b1 - b0) * i as f64 / samples as f64))
        .collect();
    let mut best = f64::INFINITY;
    for x in &pa {
        for y in &pb {
            best = best.min((x - y).norm());
        }
    }
    best
}

/// Assemble the magnetization operator: data value at each target node
/// `y_j` is `int_src u(x) . (y_j - x)/|y_j - x|^2 ds(x)`.
pub fn build_magnetization_operator(
    source_carrier: CurveRef,
    source_grid: Grid,
    target_carrier: CurveRef,
    target_grid: Grid,
) -> Result<DiscreteOperator> {
    let dist = min_curve_distance(source_carrier.as_ref(), target_carrier.as_ref(), 512);
    if dist < MIN_CURVE_DISTANCE {
        return Err(Error::CurvesTooClose {
            dist,
            min: MIN_CURVE_DISTANCE,
        });
    }
    let n_src = source_grid.node_count();
    let n_data = target_grid.node_count();
    let mut mat = DMatrix::<f64>::zeros(n_data, 2 * n_src);
    let h = source_grid.step();
    let targets: Vec<_> = target_grid
        .nodes()
        .map(|t| target_carrier.point(t))
        .collect();
    for e in 0..source_grid.n_elems() {
        let (i0, i1) = source_grid.element_nodes(e);
        let idx = [i0, i1];
        for &(x, w) in GAUSS3.iter() {
            let t = source_grid.element_param(e, x);
            let xp = source_carrier.point(t);
            let speed = source_carrier.velocity(t).norm();
            let phi = [1.0 - x, x];
            for (j, y) in targets.iter().enumerate() {
                let d = y - xp;
                let ker = d / d.norm_squared();
                for il in 0..2 {
                    let wgt = w * h * speed * phi[il];
                    mat[(j, 2 * idx[il])] += wgt * ker.x;
                    mat[(j, 2 * idx[il] + 1)] += wgt * ker.y;
                }
            }
        }
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("magnetization matrix".into()));
    }
    let source_mass = block_mass(source_carrier.as_ref(), &source_grid);
    let target_mass = scalar_mass(target_carrier.as_ref(), &target_grid);
    Ok(DiscreteOperator {
        kind: OperatorKind::Magnetization,
        source_carrier,
        source_grid,
        target_carrier,
        target_grid,
        target_components: 1,
        matrix: Some(mat),
        frames: None,
        source_mass,
        target_mass,
    })
}

/// Upper bound `sqrt(|target| |source|) * sup 1/|y - x|` on the
/// magnetization operator norm, from sampled curve lengths and the sampled
/// minimum distance.
pub fn magnetization_norm_bound(source: &dyn Curve, target: &dyn Curve) -> f64 {
    let len = |c: &dyn Curve| {
        let (a, b) = c.domain();
        let n = 2048;
        let h = (b - a) / n as f64;
        (0..n)
            .map(|e| {
                GAUSS3
                    .iter()
                    .map(|&(x, w)| w * h * c.velocity(a + (e as f64 + x) * h).norm())
                    .sum::<f64>()
            })
            .sum::<f64>()
    };
    let c_hat = 1.0 / min_curve_distance(source, target, 512);
    (len(source) * len(target)).sqrt() * c_hat
}

/// Power-iteration estimate of the operator norm in the quadrature inner
/// products: the square root of the largest eigenvalue of `M1^{-1} F^T M2 F`.
pub fn operator_norm_estimate(
    op: &DiscreteOperator,
    iterations: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let n = op.source_dof();
    let mut v = DVector::<f64>::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let norm0 = op.source_l2_norm(&v);
    if norm0 <= 0.0 {
        return Err(Error::SolverFailure("degenerate start vector".into()));
    }
    v /= norm0;
    for _ in 0..iterations {
        // w = M1^{-1} F^T M2 F v, normalized in the source L2 norm
        let fv = op.apply(&v);
        let rhs = op.apply_transpose(&op.target_mass().matvec(&fv));
        let w = op.source_mass().cholesky_solve(&rhs)?;
        let norm = op.source_l2_norm(&w);
        if norm <= f64::MIN_POSITIVE.sqrt() {
            return Ok(0.0);
        }
        v = w / norm;
    }
    let fv = op.apply(&v);
    let num = op.target_mass().quadratic_form(&fv);
    let den = op.source_inner(&v, &v);
    Ok((num / den).max(0.0).sqrt())
}
