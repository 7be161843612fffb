//! Discrete vector fields on curves and the norms of the ambient-space
//! function setting.
//!
//! A [`DiscreteVectorField`] stores one `R^2` value per node of a uniform
//! parameter grid and is interpreted piecewise linearly in the parameter.
//! Inner products integrate against the carrier curve's arclength measure
//! with 3-point Gauss quadrature per element.
//!
//! Two first-order seminorms coexist and are deliberately different:
//!
//! * the *split* seminorm differentiates the frame components `<u, tau>` and
//!   `<u, n>` along arclength: constant-amplitude frame fields are in its
//!   kernel;
//! * the *ambient* seminorm differentiates the ambient components: only
//!   ambient-constant fields are in its kernel.
//!
//! Nodal scalar components are differentiated with second-order central
//! differences (one-sided at open ends, wrap-around on closed grids).

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::fem::integrate_nodal;
use crate::geometry::{frames_on_grid, CurveRef};
use crate::grid::Grid;

#[derive(Clone)]
pub struct DiscreteVectorField {
    carrier: CurveRef,
    grid: Grid,
    values: Vec<Vector2<f64>>,
}

/// All norms of a field in one structure; `h1_split_full` squares to
/// `l2^2 + h1_split_semi^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub l2: f64,
    pub h1_ambient_semi: f64,
    pub h1_split_semi: f64,
    pub h1_split_full: f64,
    pub tangential_l2: f64,
}

impl DiscreteVectorField {
    pub fn new(carrier: CurveRef, grid: Grid, values: Vec<Vector2<f64>>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        let (a, b) = carrier.domain();
        let (ga, gb) = grid.domain();
        let tol = 1e-9 * (b - a).abs().max(1.0);
        if ga < a - tol || gb > b + tol {
            return Err(Error::DomainMismatch(format!(
                "grid [{ga}, {gb}] outside carrier domain [{a}, {b}]"
            )));
        }
        Ok(DiscreteVectorField {
            carrier,
            grid,
            values,
        })
    }

    pub fn from_fn(
        carrier: CurveRef,
        grid: Grid,
        f: impl Fn(f64, Vector2<f64>) -> Vector2<f64>,
    ) -> Result<Self> {
        let values = grid.nodes().map(|t| f(t, carrier.point(t))).collect();
        DiscreteVectorField::new(carrier, grid, values)
    }

    pub fn constant(carrier: CurveRef, grid: Grid, v: Vector2<f64>) -> Result<Self> {
        let n = grid.node_count();
        DiscreteVectorField::new(carrier, grid, vec![v; n])
    }

    pub fn zeros(carrier: CurveRef, grid: Grid) -> Result<Self> {
        Self::constant(carrier, grid, Vector2::zeros())
    }

    pub fn carrier(&self) -> &CurveRef {
        &self.carrier
    }

    pub fn carrier_label(&self) -> String {
        self.carrier.label()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Vector2<f64>] {
        &self.values
    }

    /// Interleaved dof vector `[u_x(t_0), u_y(t_0), u_x(t_1), ...]`.
    pub fn to_dof(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(
            2 * self.values.len(),
            self.values.iter().flat_map(|v| [v.x, v.y]),
        )
    }

    pub fn from_dof(carrier: CurveRef, grid: Grid, dof: &nalgebra::DVector<f64>) -> Result<Self> {
        if dof.len() != 2 * grid.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} dofs for {} nodes",
                dof.len(),
                grid.node_count()
            )));
        }
        let values = (0..grid.node_count())
            .map(|i| Vector2::new(dof[2 * i], dof[2 * i + 1]))
            .collect();
        DiscreteVectorField::new(carrier, grid, values)
    }

    /// Re-carries the same nodal values on another curve.
    pub fn with_carrier(&self, carrier: CurveRef) -> Result<Self> {
        DiscreteVectorField::new(carrier, self.grid.clone(), self.values.clone())
    }

    fn check_compatible(&self, other: &DiscreteVectorField) -> Result<()> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        if self.carrier_label() != other.carrier_label() {
            return Err(Error::GridMismatch(format!(
                "fields carried by {:?} and {:?}",
                self.carrier_label(),
                other.carrier_label()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &DiscreteVectorField) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        DiscreteVectorField::new(self.carrier.clone(), self.grid.clone(), values)
    }

    pub fn sub(&self, other: &DiscreteVectorField) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        DiscreteVectorField::new(self.carrier.clone(), self.grid.clone(), values)
    }

    pub fn scale(&self, s: f64) -> Self {
        let values = self.values.iter().map(|v| v * s).collect();
        DiscreteVectorField {
            carrier: self.carrier.clone(),
            grid: self.grid.clone(),
            values,
        }
    }

    /// `int_M u . v ds` with both fields piecewise linear.
    pub fn l2_inner(&self, other: &DiscreteVectorField) -> Result<f64> {
        self.check_compatible(other)?;
        let h = self.grid.step();
        let mut total = 0.0;
        for e in 0..self.grid.n_elems() {
            let (i0, i1) = self.grid.element_nodes(e);
            for &(x, w) in crate::fem::GAUSS3.iter() {
                let t = self.grid.element_param(e, x);
                let speed = self.carrier.velocity(t).norm();
                let u = self.values[i0] * (1.0 - x) + self.values[i1] * x;
                let v = other.values[i0] * (1.0 - x) + other.values[i1] * x;
                total += w * h * speed * u.dot(&v);
            }
        }
        Ok(total)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self)
            .expect("self inner product")
            .max(0.0)
            .sqrt()
    }

    /// Nodewise tangential/normal split; the parts recompose exactly.
    pub fn decompose(&self) -> Result<(Self, Self)> {
        let frames = frames_on_grid(self.carrier.as_ref(), &self.grid)?;
        let mut tang = Vec::with_capacity(self.values.len());
        let mut norm = Vec::with_capacity(self.values.len());
        for (u, f) in self.values.iter().zip(&frames) {
            let np = f.normal * f.normal.dot(u);
            norm.push(np);
            tang.push(u - np);
        }
        Ok((
            DiscreteVectorField::new(self.carrier.clone(), self.grid.clone(), tang)?,
            DiscreteVectorField::new(self.carrier.clone(), self.grid.clone(), norm)?,
        ))
    }

    /// Nodal frame components `(<u, tau>_i, <u, n>_i)`.
    pub fn frame_components(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let frames = frames_on_grid(self.carrier.as_ref(), &self.grid)?;
        let a = self
            .values
            .iter()
            .zip(&frames)
            .map(|(u, f)| f.tangent.dot(u))
            .collect();
        let b = self
            .values
            .iter()
            .zip(&frames)
            .map(|(u, f)| f.normal.dot(u))
            .collect();
        Ok((a, b))
    }

    /// Split seminorm: `sqrt( int (ds<u,n>)^2 + (ds<u,tau>)^2 ds )` with the
    /// components differentiated by nodal central differences.
    pub fn h1_split_seminorm(&self) -> Result<f64> {
        if self.grid.node_count() < 3 {
            return Err(Error::GridTooSmall {
                needed: 3,
                got: self.grid.node_count(),
            });
        }
        let frames = frames_on_grid(self.carrier.as_ref(), &self.grid)?;
        let (a, b) = self.frame_components()?;
        let da = self.grid.d_param(&a)?;
        let db = self.grid.d_param(&b)?;
        let integrand: Vec<f64> = frames
            .iter()
            .zip(da.iter().zip(&db))
            .map(|(f, (da, db))| {
                let s = f.speed();
                (da / s).powi(2) + (db / s).powi(2)
            })
            .collect();
        Ok(
            integrate_nodal(self.carrier.as_ref(), &self.grid, &integrand)
                .max(0.0)
                .sqrt(),
        )
    }

    /// Ambient seminorm: `sqrt( int |grad_M u|_F^2 ds )`.
    pub fn h1_ambient_seminorm(&self) -> Result<f64> {
        if self.grid.node_count() < 3 {
            return Err(Error::GridTooSmall {
                needed: 3,
                got: self.grid.node_count(),
            });
        }
        let grads = crate::geometry::surface_gradient_vector(
            self.carrier.as_ref(),
            &self.grid,
            &self.values,
        )?;
        let integrand: Vec<f64> = grads.iter().map(|g| g.norm_squared()).collect();
        Ok(
            integrate_nodal(self.carrier.as_ref(), &self.grid, &integrand)
                .max(0.0)
                .sqrt(),
        )
    }

    pub fn norm_report(&self) -> Result<NormReport> {
        let l2 = self.l2_norm();
        let split = self.h1_split_seminorm()?;
        let ambient = self.h1_ambient_seminorm()?;
        let (tang, _) = self.decompose()?;
        Ok(NormReport {
            l2,
            h1_ambient_semi: ambient,
            h1_split_semi: split,
            h1_split_full: (l2 * l2 + split * split).sqrt(),
            tangential_l2: tang.l2_norm(),
        })
    }

    /// Full ambient Sobolev norm `sqrt(l2^2 + ambient_semi^2)`.
    pub fn h1_ambient_norm(&self) -> Result<f64> {
        let l2 = self.l2_norm();
        let semi = self.h1_ambient_seminorm()?;
        Ok((l2 * l2 + semi * semi).sqrt())
    }

    /// Serialize: header `label node_count`, then `t u1 u2` per line with 17
    /// significant digits.
    pub fn write_text(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "{} {}", self.carrier_label(), self.values.len())?;
        for (t, v) in self.grid.nodes().zip(&self.values) {
            writeln!(w, "{:.16e} {:.16e} {:.16e}", t, v.x, v.y)?;
        }
        Ok(())
    }

    /// Read a field back onto the given carrier; the header label must match.
    pub fn read_text(r: &mut impl std::io::BufRead, carrier: CurveRef) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Parse(format!("bad field header: {header:?}")));
        }
        if parts[0] != carrier.label() {
            return Err(Error::GridMismatch(format!(
                "field carried by {:?}, expected {:?}",
                parts[0],
                carrier.label()
            )));
        }
        let n: usize = parts[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let mut ts = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let mut line = String::new();
            r.read_line(&mut line)?;
            let nums: Vec<&str> = line.split_whitespace().collect();
            if nums.len() != 3 {
                return Err(Error::Parse(format!("bad field line: {line:?}")));
            }
            let t: f64 = nums[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            ts.push(t);
            values.push(Vector2::new(
                nums[1].parse().map_err(|e| Error::Parse(format!("{e}")))?,
                nums[2].parse().map_err(|e| Error::Parse(format!("{e}")))?,
            ));
        }
        if n < 2 {
            return Err(Error::Parse("field needs at least two nodes".into()));
        }
        let grid = if carrier.is_closed() {
            let (a, b) = carrier.domain();
            Grid::closed(a, b, n)?
        } else {
            Grid::open(ts[0], ts[n - 1], n - 1)?
        };
        for (i, t) in grid.nodes().enumerate() {
            if (t - ts[i]).abs() > 1e-9 * grid.step().abs().max(1.0) {
                return Err(Error::Parse(format!(
                    "node {i} at {} does not match uniform grid ({t})",
                    ts[i]
                )));
            }
        }
        DiscreteVectorField::new(carrier, grid, values)
    }
}

impl std::fmt::Debug for DiscreteVectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteVectorField")
            .field("carrier", &self.carrier_label())
            .field("nodes", &self.values.len())
            .finish()
    }
}

/// Field builders for the named frame-combination solutions used in tests and
/// experiments: `u = f_tau(x) tau + f_n(x) n` evaluated through the carrier's
/// frames.
pub fn frame_combination(
    carrier: CurveRef,
    grid: Grid,
    f_tau: impl Fn(Vector2<f64>) -> f64,
    f_n: impl Fn(Vector2<f64>) -> f64,
) -> Result<DiscreteVectorField> {
    let frames = frames_on_grid(carrier.as_ref(), &grid)?;
    let values = frames
        .iter()
        .map(|fr| fr.tangent * f_tau(fr.point) + fr.normal * f_n(fr.point))
        .collect();
    DiscreteVectorField::new(carrier, grid, values)
}
