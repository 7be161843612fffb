//! Piecewise-linear finite elements on curve grids.
//!
//! Mass and stiffness forms are integrated element by element with 3-point
//! Gauss-Legendre quadrature against the curve's arclength weight `|m'(t)|`:
//!
//! * mass: `M_ij = int phi_i phi_j |m'| dt`
//! * arclength stiffness: `K_ij = int phi_i' phi_j' / |m'| dt`
//!   (equal to the arclength-derivative form `int (ds phi_i)(ds phi_j) ds`)
//!
//! Open grids yield symmetric banded matrices; closed grids couple the first
//! and last node and are kept dense. [`SystemMatrix`] abstracts over both and
//! provides Cholesky and conjugate-gradient solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{frames_on_grid, Curve, Frame};
use crate::grid::Grid;

/// 3-point Gauss-Legendre rule on [0, 1]: exact through degree 5.
pub const GAUSS3: [(f64, f64); 3] = [
    (0.11270166537925831, 0.2777777777777778),
    (0.5, 0.4444444444444444),
    (0.8872983346207417, 0.2777777777777778),
];

/// Symmetric banded matrix; stores the main diagonal and `half_bandwidth`
/// upper diagonals.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    hbw: usize,
    /// `diag[d][i] = A[i][i + d]`, length `n - d` conceptually, padded to `n`.
    diags: Vec<Vec<f64>>,
}

impl SymBand {
    pub fn zeros(n: usize, hbw: usize) -> Self {
        SymBand {
            n,
            hbw,
            diags: (0..=hbw).map(|_| vec![0.0; n]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        assert!(
            d <= self.hbw,
            "entry ({i},{j}) outside bandwidth {}",
            self.hbw
        );
        self.diags[d][lo] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.hbw {
            0.0
        } else {
            self.diags[d][lo]
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut s = self.diags[0][i] * x[i];
            for d in 1..=self.hbw {
                if i + d < self.n {
                    s += self.diags[d][i] * x[i + d];
                }
                if i >= d {
                    s += self.diags[d][i - d] * x[i - d];
                }
            }
            y[i] = s;
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for d in 0..=self.hbw {
                if i + d < self.n {
                    m[(i, i + d)] = self.diags[d][i];
                    m[(i + d, i)] = self.diags[d][i];
                }
            }
        }
        m
    }

    /// In-band Cholesky factorization `A = L L^T`. Fails on non-positive
    /// pivots.
    pub fn cholesky(&self) -> Result<SymBandChol> {
        let mut l = self.diags.clone();
        let n = self.n;
        let hbw = self.hbw;
        for j in 0..n {
            // pivot
            let mut s = l[0][j];
            for d in 1..=hbw.min(j) {
                s -= l[d][j - d] * l[d][j - d];
            }
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::SolverFailure(format!(
                    "banded Cholesky pivot {s:.3e} at index {j}"
                )));
            }
            let pj = s.sqrt();
            l[0][j] = pj;
            // column below the pivot, within band
            for i in j + 1..(j + hbw + 1).min(n) {
                let d = i - j;
                let mut s = l[d][j];
                // sum over shared history of rows i and j
                let kmin = i.saturating_sub(hbw).max(0);
                for k in kmin..j {
                    s -= l[i - k][k] * l[j - k][k];
                }
                l[d][j] = s / pj;
            }
        }
        Ok(SymBandChol { n, hbw, diags: l })
    }
}

/// Banded Cholesky factor; `diags[d][j] = L[j + d][j]`.
#[derive(Debug, Clone)]
pub struct SymBandChol {
    n: usize,
    hbw: usize,
    diags: Vec<Vec<f64>>,
}

impl SymBandChol {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut y = b.clone();
        // forward: L y = b
        for j in 0..n {
            y[j] /= self.diags[0][j];
            let yj = y[j];
            for d in 1..=self.hbw {
                if j + d < n {
                    y[j + d] -= self.diags[d][j] * yj;
                }
            }
        }
        // backward: L^T x = y
        for j in (0..n).rev() {
            let mut s = y[j];
            for d in 1..=self.hbw {
                if j + d < n {
                    s -= self.diags[d][j] * y[j + d];
                }
            }
            y[j] = s / self.diags[0][j];
        }
        y
    }
}

/// A symmetric system matrix in banded or dense storage.
#[derive(Debug, Clone)]
pub enum SystemMatrix {
    Band(SymBand),
    Dense(DMatrix<f64>),
}

impl SystemMatrix {
    pub fn n(&self) -> usize {
        match self {
            SystemMatrix::Band(b) => b.n(),
            SystemMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        match self {
            SystemMatrix::Band(b) => b.add(i, j, v),
            SystemMatrix::Dense(m) => m[(i, j)] += v,
        }
    }

    /// Add a symmetric contribution: `A[i][j] += v` and, for `i != j`,
    /// `A[j][i] += v` (banded storage holds both logical entries in one
    /// slot).
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        match self {
            SystemMatrix::Band(b) => b.add(i, j, v),
            SystemMatrix::Dense(m) => {
                m[(i, j)] += v;
                if i != j {
                    m[(j, i)] += v;
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            SystemMatrix::Band(b) => b.get(i, j),
            SystemMatrix::Dense(m) => m[(i, j)],
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SystemMatrix::Band(b) => b.matvec(x),
            SystemMatrix::Dense(m) => m * x,
        }
    }

    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.matvec(x))
    }

    /// Sum of `|A_ij x_i x_j|`: the cancellation scale of the quadratic
    /// form, used to bound its floating-point error.
    pub fn quadratic_magnitude(&self, x: &DVector<f64>) -> f64 {
        match self {
            SystemMatrix::Band(b) => {
                let mut total = 0.0;
                for i in 0..b.n {
                    total += (b.diags[0][i] * x[i] * x[i]).abs();
                    for d in 1..=b.hbw {
                        if i + d < b.n {
                            total += 2.0 * (b.diags[d][i] * x[i] * x[i + d]).abs();
                        }
                    }
                }
                total
            }
            SystemMatrix::Dense(m) => {
                let mut total = 0.0;
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        total += (m[(i, j)] * x[i] * x[j]).abs();
                    }
                }
                total
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SystemMatrix::Band(b) => b.to_dense(),
            SystemMatrix::Dense(m) => m.clone(),
        }
    }

    /// Add `scale * other` into `self`; both must share storage shape.
    pub fn add_scaled(&mut self, other: &SystemMatrix, scale: f64) {
        match (self, other) {
            (SystemMatrix::Band(a), SystemMatrix::Band(b)) => {
                assert_eq!(a.n, b.n);
                let hbw = a.hbw.max(b.hbw);
                assert!(hbw <= a.hbw, "target bandwidth too small");
                for d in 0..=b.hbw {
                    for i in 0..b.n {
                        a.diags[d][i] += scale * b.diags[d][i];
                    }
                }
            }
            (SystemMatrix::Dense(a), b) => {
                *a += b.to_dense() * scale;
            }
            _ => panic!("cannot add dense into banded storage"),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            SystemMatrix::Band(b) => b.diags.iter().flatten().all(|v| v.is_finite()),
            SystemMatrix::Dense(m) => m.iter().all(|v| v.is_finite()),
        }
    }

    /// Largest symmetry defect `|A_ij - A_ji|` (always 0 for banded storage).
    pub fn symmetry_defect(&self) -> f64 {
        match self {
            SystemMatrix::Band(_) => 0.0,
            SystemMatrix::Dense(m) => {
                let mut worst = 0.0_f64;
                for i in 0..m.nrows() {
                    for j in i + 1..m.ncols() {
                        worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
                    }
                }
                worst
            }
        }
    }

    /// Cholesky solve. The dense path symmetrizes roundoff first.
    pub fn cholesky_solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            SystemMatrix::Band(m) => Ok(m.cholesky()?.solve(b)),
            SystemMatrix::Dense(m) => {
                let sym = (m + m.transpose()) * 0.5;
                let chol = sym
                    .cholesky()
                    .ok_or_else(|| Error::SolverFailure("dense Cholesky failed".into()))?;
                Ok(chol.solve(b))
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients; relative tolerance on the
/// residual. Returns the solution and the iteration count.
pub fn conjugate_gradient(
    a: &SystemMatrix,
    b: &DVector<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize)> {
    let n = a.n();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    if diag.iter().any(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(Error::SolverFailure(
            "non-positive diagonal in CG preconditioner".into(),
        ));
    }
    let precond = |r: &DVector<f64>| DVector::from_fn(n, |i, _| r[i] / diag[i]);

    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok((DVector::zeros(n), 0));
    }
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 0..max_iter {
        if r.norm() <= rel_tol * b_norm {
            return Ok((x, it));
        }
        let ap = a.matvec(&p);
        let denom = p.dot(&ap);
        if denom <= 0.0 {
            return Err(Error::SolverFailure(format!(
                "CG encountered non-positive curvature {denom:.3e}"
            )));
        }
        let alpha = rz / denom;
        x += &p * alpha;
        r -= ap * alpha;
        z = precond(&r);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    if r.norm() <= rel_tol * b_norm * 10.0 {
        return Ok((x, max_iter));
    }
    Err(Error::SolverFailure(format!(
        "CG did not converge in {max_iter} iterations (residual {:.3e})",
        r.norm() / b_norm
    )))
}

fn scalar_builder(grid: &Grid, hbw: usize) -> SystemMatrix {
    let n = grid.node_count();
    if grid.is_closed() {
        SystemMatrix::Dense(DMatrix::zeros(n, n))
    } else {
        SystemMatrix::Band(SymBand::zeros(n, hbw))
    }
}

fn block_builder(grid: &Grid, hbw_scalar: usize) -> SystemMatrix {
    let n = 2 * grid.node_count();
    if grid.is_closed() {
        SystemMatrix::Dense(DMatrix::zeros(n, n))
    } else {
        SystemMatrix::Band(SymBand::zeros(n, 2 * hbw_scalar + 1))
    }
}

/// Walk the unordered local node pairs `(i0,i0), (i0,i1), (i1,i1)` of every
/// element with their mass and stiffness quadrature weights.
fn assemble_scalar(curve: &dyn Curve, grid: &Grid, mut emit: impl FnMut(usize, usize, f64, f64)) {
    let h = grid.step();
    for e in 0..grid.n_elems() {
        let (i0, i1) = grid.element_nodes(e);
        let idx = [i0, i1];
        for &(x, w) in GAUSS3.iter() {
            let t = grid.element_param(e, x);
            let speed = curve.velocity(t).norm();
            let wq = w * h;
            let phi = [1.0 - x, x];
            let dphi = [-1.0 / h, 1.0 / h];
            for il in 0..2 {
                for jl in il..2 {
                    emit(
                        idx[il],
                        idx[jl],
                        wq * speed * phi[il] * phi[jl],
                        wq / speed * dphi[il] * dphi[jl],
                    );
                }
            }
        }
    }
}

/// Scalar mass matrix `int phi_i phi_j |m'| dt`.
pub fn scalar_mass(curve: &dyn Curve, grid: &Grid) -> SystemMatrix {
    let mut m = scalar_builder(grid, 1);
    assemble_scalar(curve, grid, |i, j, mv, _| m.add_sym(i, j, mv));
    m
}

/// Scalar arclength stiffness `int (ds phi_i)(ds phi_j) ds`.
pub fn scalar_stiffness(curve: &dyn Curve, grid: &Grid) -> SystemMatrix {
    let mut k = scalar_builder(grid, 1);
    assemble_scalar(curve, grid, |i, j, _, kv| k.add_sym(i, j, kv));
    k
}

/// Emit the full 2x2 ambient block of a symmetric two-point form: the
/// weights satisfy `w(i,j,a,b) = w(j,i,b,a)`, so unordered node pairs expand
/// to unordered dof pairs.
fn emit_block(m: &mut SystemMatrix, i: usize, j: usize, weight: impl Fn(usize, usize) -> f64) {
    if i == j {
        for a in 0..2 {
            for b in a..2 {
                m.add_sym(2 * i + a, 2 * i + b, weight(a, b));
            }
        }
    } else {
        for a in 0..2 {
            for b in 0..2 {
                m.add_sym(2 * i + a, 2 * j + b, weight(a, b));
            }
        }
    }
}

/// Vector-field dofs are interleaved: `[u_x(t_0), u_y(t_0), u_x(t_1), ...]`.
pub fn block_mass(curve: &dyn Curve, grid: &Grid) -> SystemMatrix {
    let mut m = block_builder(grid, 1);
    assemble_scalar(curve, grid, |i, j, mv, _| {
        emit_block(&mut m, i, j, |a, b| if a == b { mv } else { 0.0 });
    });
    m
}

/// Stiffness of the ambient seminorm: arclength derivative applied to each
/// ambient component.
pub fn ambient_stiffness(curve: &dyn Curve, grid: &Grid) -> SystemMatrix {
    let mut k = block_builder(grid, 1);
    assemble_scalar(curve, grid, |i, j, _, kv| {
        emit_block(&mut k, i, j, |a, b| if a == b { kv } else { 0.0 });
    });
    k
}

/// Stiffness of the split seminorm: arclength derivatives of the frame
/// components `<u, tau>` and `<u, n>`, expressed on ambient dofs through the
/// nodal frames.
pub fn split_stiffness(curve: &dyn Curve, grid: &Grid) -> Result<SystemMatrix> {
    let frames = frames_on_grid(curve, grid)?;
    let mut k = block_builder(grid, 1);
    assemble_scalar(curve, grid, |i, j, _, kv| {
        let (fi, fj) = (&frames[i], &frames[j]);
        emit_block(&mut k, i, j, |a, b| {
            kv * (fi.tangent[a] * fj.tangent[b] + fi.normal[a] * fj.normal[b])
        });
    });
    Ok(k)
}

/// Quadratic form of the normal-penalty term `||P_n u||^2_{L2}` on ambient
/// dofs, with `P_n u` interpolated linearly between nodes.
pub fn normal_penalty(curve: &dyn Curve, grid: &Grid) -> Result<SystemMatrix> {
    let frames = frames_on_grid(curve, grid)?;
    let mut c = block_builder(grid, 1);
    assemble_scalar(curve, grid, |i, j, mv, _| {
        let (ni, nj) = (&frames[i].normal, &frames[j].normal);
        let ndot = ni.dot(nj);
        emit_block(&mut c, i, j, |a, b| mv * ndot * ni[a] * nj[b]);
    });
    Ok(c)
}

/// Integrate a nodal scalar (interpreted piecewise linearly) against the
/// arclength measure.
pub fn integrate_nodal(curve: &dyn Curve, grid: &Grid, nodal: &[f64]) -> f64 {
    let h = grid.step();
    let mut total = 0.0;
    for e in 0..grid.n_elems() {
        let (i0, i1) = grid.element_nodes(e);
        for &(x, w) in GAUSS3.iter() {
            let t = grid.element_param(e, x);
            let speed = curve.velocity(t).norm();
            total += w * h * speed * (nodal[i0] * (1.0 - x) + nodal[i1] * x);
        }
    }
    total
}

/// Frames at all nodes; convenience re-export for solver assembly.
pub fn nodal_frames(curve: &dyn Curve, grid: &Grid) -> Result<Vec<Frame>> {
    frames_on_grid(curve, grid)
}
