//! Assembly and solution of the regularized normal equations.
//!
//! The discrete functional is
//!
//! ```text
//! T(u) = ||F u - y||^2_{L2(target)}  [ + ||P_n u||^2_{L2(source)} ]  + alpha R(u)
//! ```
//!
//! with `R` one of the quadratic seminorm forms. Its minimizer solves
//! `(F^T M2 F + C + alpha K) u = F^T M2 y`, a symmetric positive
//! (semi)definite system that is banded for nodewise operators on open grids
//! and dense otherwise. Strong second-derivative forms are assembled weakly
//! as first-derivative stiffness matrices, with natural boundary conditions
//! on open curves and periodic coupling on closed ones.
//!
//! Every solve is self-checked: the reported objective must agree with an
//! independent element-loop evaluation of `T` to 1e-10 relative, and twenty
//! random eps-perturbations of the solution must not decrease `T`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::fem::{
    ambient_stiffness, block_mass, conjugate_gradient, split_stiffness, SystemMatrix, GAUSS3,
};
use crate::field::DiscreteVectorField;
use crate::geometry::{frames_on_grid, Curve};
use crate::grid::Grid;
use crate::operator::{DiscreteOperator, OperatorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    SplitSeminorm,
    AmbientSeminorm,
    FullNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Direct Cholesky, falling back to conjugate gradients.
    #[default]
    Auto,
    Direct,
    ConjugateGradient,
}

pub struct TikhonovProblem {
    pub forward: DiscreteOperator,
    pub data: DVector<f64>,
    pub alpha: f64,
    pub regularizer: Regularizer,
    pub tangential_constraint: bool,
}

impl TikhonovProblem {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.data.len() != self.forward.target_dof() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} dofs, operator target has {}",
                self.data.len(),
                self.forward.target_dof()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data vector".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethodUsed {
    Cholesky,
    ConjugateGradient,
    SpectralCutoff,
}

impl std::fmt::Display for SolverMethodUsed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverMethodUsed::Cholesky => write!(f, "cholesky"),
            SolverMethodUsed::ConjugateGradient => write!(f, "cg"),
            SolverMethodUsed::SpectralCutoff => write!(f, "spectral-cutoff"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverInfo {
    pub method: SolverMethodUsed,
    pub iterations: usize,
    pub condition_estimate: Option<f64>,
    pub effective_rank: Option<usize>,
}

pub struct SolveResult {
    pub solution: DiscreteVectorField,
    pub residual_norm: f64,
    pub constraint_norm: f64,
    pub regularizer_value: f64,
    pub objective_value: f64,
    pub solver: SolverInfo,
}

impl SolveResult {
    /// `key = value` report block.
    pub fn write_report(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "residual_norm = {:.16e}", self.residual_norm)?;
        writeln!(w, "constraint_norm = {:.16e}", self.constraint_norm)?;
        writeln!(w, "regularizer_value = {:.16e}", self.regularizer_value)?;
        writeln!(w, "objective_value = {:.16e}", self.objective_value)?;
        writeln!(w, "solver_method = {}", self.solver.method)?;
        writeln!(w, "solver_iterations = {}", self.solver.iterations)?;
        if let Some(c) = self.solver.condition_estimate {
            writeln!(w, "condition_estimate = {c:.6e}")?;
        }
        if let Some(r) = self.solver.effective_rank {
            writeln!(w, "effective_rank = {r}")?;
        }
        Ok(())
    }
}

pub struct AssembledSystem {
    pub matrix: SystemMatrix,
    pub rhs: DVector<f64>,
    /// Constant term `||y||^2_{L2(target)}` of the quadratic objective.
    pub data_term: f64,
    pub reg_matrix: SystemMatrix,
    pub constraint_matrix: Option<SystemMatrix>,
}

fn regularizer_matrix(reg: Regularizer, carrier: &dyn Curve, grid: &Grid) -> Result<SystemMatrix> {
    Ok(match reg {
        Regularizer::SplitSeminorm => split_stiffness(carrier, grid)?,
        Regularizer::AmbientSeminorm => ambient_stiffness(carrier, grid),
        Regularizer::FullNorm => {
            let mut k = split_stiffness(carrier, grid)?;
            k.add_scaled(&block_mass(carrier, grid), 1.0);
            k
        }
    })
}

pub fn assemble_normal_equations(problem: &TikhonovProblem) -> Result<AssembledSystem> {
    problem.validate()?;
    let carrier = problem.forward.source_carrier().clone();
    let grid = problem.forward.source_grid().clone();
    let reg = regularizer_matrix(problem.regularizer, carrier.as_ref(), &grid)?;
    let mut matrix = problem.forward.gram();
    let constraint = if problem.tangential_constraint {
        let c = crate::fem::normal_penalty(carrier.as_ref(), &grid)?;
        matrix.add_scaled(&c, 1.0);
        Some(c)
    } else {
        None
    };
    matrix.add_scaled(&reg, problem.alpha);
    if !matrix.is_finite() {
        return Err(Error::NonFinite("normal equations".into()));
    }
    let rhs = problem.forward.normal_rhs(&problem.data);
    let data_term = problem.forward.target_mass().quadratic_form(&problem.data);
    Ok(AssembledSystem {
        matrix,
        rhs,
        data_term,
        reg_matrix: reg,
        constraint_matrix: constraint,
    })
}

/// Independent evaluation of the discrete objective by element loops, used
/// to cross-check the assembled quadratic form.
pub fn functional_value(problem: &TikhonovProblem, u: &DVector<f64>) -> Result<f64> {
    let op = &problem.forward;
    let residual = op.apply(u) - &problem.data;
    let res_sq = data_l2_norm_sq(
        op.target_carrier().as_ref(),
        op.target_grid(),
        op.target_dof() / op.target_grid().node_count(),
        &residual,
    );
    let carrier = op.source_carrier();
    let grid = op.source_grid();
    let cons_sq = if problem.tangential_constraint {
        let frames = frames_on_grid(carrier.as_ref(), grid)?;
        let mut pn = DVector::zeros(u.len());
        for (i, f) in frames.iter().enumerate() {
            let dot = f.normal.x * u[2 * i] + f.normal.y * u[2 * i + 1];
            pn[2 * i] = f.normal.x * dot;
            pn[2 * i + 1] = f.normal.y * dot;
        }
        data_l2_norm_sq(carrier.as_ref(), grid, 2, &pn)
    } else {
        0.0
    };
    let reg = regularizer_form_value(problem.regularizer, carrier.as_ref(), grid, u)?;
    Ok(res_sq + cons_sq + problem.alpha * reg)
}

/// `||v||^2_{L2}` of nodal data (scalar or interleaved 2-vector) by direct
/// quadrature.
pub fn data_l2_norm_sq(
    carrier: &dyn Curve,
    grid: &Grid,
    components: usize,
    v: &DVector<f64>,
) -> f64 {
    let h = grid.step();
    let mut total = 0.0;
    for e in 0..grid.n_elems() {
        let (i0, i1) = grid.element_nodes(e);
        for &(x, w) in GAUSS3.iter() {
            let t = grid.element_param(e, x);
            let speed = carrier.velocity(t).norm();
            let mut sq = 0.0;
            for c in 0..components {
                let val = v[components * i0 + c] * (1.0 - x) + v[components * i1 + c] * x;
                sq += val * val;
            }
            total += w * h * speed * sq;
        }
    }
    total
}

/// Value of the regularizer quadratic form by a direct element loop
/// (piecewise-linear components have constant derivatives per element).
pub fn regularizer_form_value(
    reg: Regularizer,
    carrier: &dyn Curve,
    grid: &Grid,
    u: &DVector<f64>,
) -> Result<f64> {
    let frames = frames_on_grid(carrier, grid)?;
    let h = grid.step();
    let n = grid.node_count();
    if u.len() != 2 * n {
        return Err(Error::DimensionMismatch(format!(
            "{} dofs for {} nodes",
            u.len(),
            n
        )));
    }
    let comp = |i: usize| nalgebra::Vector2::new(u[2 * i], u[2 * i + 1]);
    let mut total = 0.0;
    for e in 0..grid.n_elems() {
        let (i0, i1) = grid.element_nodes(e);
        // int 1/|m'| dt over the element (the arclength stiffness weight)
        let wk: f64 = GAUSS3
            .iter()
            .map(|&(x, w)| w * h / carrier.velocity(grid.element_param(e, x)).norm())
            .sum();
        let du = match reg {
            Regularizer::SplitSeminorm | Regularizer::FullNorm => {
                let a0 = frames[i0].tangent.dot(&comp(i0));
                let a1 = frames[i1].tangent.dot(&comp(i1));
                let b0 = frames[i0].normal.dot(&comp(i0));
                let b1 = frames[i1].normal.dot(&comp(i1));
                ((a1 - a0) / h).powi(2) + ((b1 - b0) / h).powi(2)
            }
            Regularizer::AmbientSeminorm => {
                let d = (comp(i1) - comp(i0)) / h;
                d.norm_squared()
            }
        };
        total += wk * du;
    }
    if matches!(reg, Regularizer::FullNorm) {
        total += data_l2_norm_sq(carrier, grid, 2, u);
    }
    Ok(total)
}

const OPTIMALITY_DIRECTIONS: usize = 20;
const OPTIMALITY_EPS: f64 = 1e-6;

fn optimality_check(
    problem: &TikhonovProblem,
    u: &DVector<f64>,
    objective: f64,
    float_slack: f64,
) -> Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed);
    let scale = (u.norm() / (u.len() as f64).sqrt()).max(1.0);
    let tol = 1e-10 * (1.0 + objective.abs()) + float_slack;
    for k in 0..OPTIMALITY_DIRECTIONS {
        let d = DVector::from_fn(u.len(), |_, _| rng.random::<f64>() * 2.0 - 1.0) * scale;
        let perturbed = functional_value(problem, &(u + &d * OPTIMALITY_EPS))?;
        if perturbed < objective - tol {
            return Err(Error::SolverFailure(format!(
                "objective decreased by {:.3e} along perturbation {k}",
                objective - perturbed
            )));
        }
    }
    Ok(())
}

pub fn solve(problem: &TikhonovProblem) -> Result<SolveResult> {
    solve_with(problem, SolveMethod::Auto)
}

pub fn solve_with(problem: &TikhonovProblem, method: SolveMethod) -> Result<SolveResult> {
    let system = assemble_normal_equations(problem)?;
    let n = system.matrix.n();
    let (u, info) = match method {
        SolveMethod::Direct => (
            system.matrix.cholesky_solve(&system.rhs)?,
            SolverInfo {
                method: SolverMethodUsed::Cholesky,
                iterations: 1,
                condition_estimate: None,
                effective_rank: None,
            },
        ),
        SolveMethod::ConjugateGradient => {
            let (u, it) = conjugate_gradient(&system.matrix, &system.rhs, 1e-10, 10 * n)?;
            (
                u,
                SolverInfo {
                    method: SolverMethodUsed::ConjugateGradient,
                    iterations: it,
                    condition_estimate: None,
                    effective_rank: None,
                },
            )
        }
        SolveMethod::Auto => match system.matrix.cholesky_solve(&system.rhs) {
            Ok(u) => (
                u,
                SolverInfo {
                    method: SolverMethodUsed::Cholesky,
                    iterations: 1,
                    condition_estimate: None,
                    effective_rank: None,
                },
            ),
            Err(_) => {
                let (u, it) = conjugate_gradient(&system.matrix, &system.rhs, 1e-10, 10 * n)?;
                (
                    u,
                    SolverInfo {
                        method: SolverMethodUsed::ConjugateGradient,
                        iterations: it,
                        condition_estimate: None,
                        effective_rank: None,
                    },
                )
            }
        },
    };
    finish_solve(problem, system, u, info)
}

fn finish_solve(
    problem: &TikhonovProblem,
    system: AssembledSystem,
    u: DVector<f64>,
    info: SolverInfo,
) -> Result<SolveResult> {
    let op = &problem.forward;
    let res_sq = op.residual_norm_sq(&u, &problem.data);
    let cons_sq = system
        .constraint_matrix
        .as_ref()
        .map(|c| c.quadratic_form(&u).max(0.0))
        .unwrap_or(0.0);
    let reg_value = system.reg_matrix.quadratic_form(&u).max(0.0);
    let objective = res_sq + cons_sq + problem.alpha * reg_value;

    // self-checks: independent functional evaluation and first-order
    // optimality. Both comparisons carry an absolute slack for the
    // cancellation scale of the quadratic forms, which matters only at
    // extreme alpha.
    let cancellation = system.data_term.abs()
        + system
            .constraint_matrix
            .as_ref()
            .map(|c| c.quadratic_magnitude(&u))
            .unwrap_or(0.0)
        + problem.alpha * system.reg_matrix.quadratic_magnitude(&u);
    let float_slack = 64.0 * f64::EPSILON * cancellation;
    let independent = functional_value(problem, &u)?;
    if (independent - objective).abs() > 1e-10 * (1.0 + objective.abs()) + float_slack {
        return Err(Error::SolverFailure(format!(
            "objective {objective:.12e} disagrees with functional {independent:.12e}"
        )));
    }
    optimality_check(problem, &u, objective, float_slack)?;

    let solution =
        DiscreteVectorField::from_dof(op.source_carrier().clone(), op.source_grid().clone(), &u)?;
    Ok(SolveResult {
        solution,
        residual_norm: res_sq.max(0.0).sqrt(),
        constraint_norm: cons_sq.sqrt(),
        regularizer_value: reg_value,
        objective_value: objective,
        solver: info,
    })
}

/// Least squares without regularization, via a spectral cutoff at
/// `1e-12 * sigma_max` of the mass-weighted system. Demonstrates the
/// instability of the unregularized problem; reports the condition number
/// and effective rank seen by the factorization.
pub fn solve_unregularized(forward: &DiscreteOperator, data: &DVector<f64>) -> Result<SolveResult> {
    if data.len() != forward.target_dof() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} dofs, operator target has {}",
            data.len(),
            forward.target_dof()
        )));
    }
    let (u, info) = match forward.kind() {
        OperatorKind::Embedding => (
            data.clone(),
            SolverInfo {
                method: SolverMethodUsed::Cholesky,
                iterations: 1,
                condition_estimate: Some(1.0),
                effective_rank: Some(data.len()),
            },
        ),
        _ => {
            let f = forward
                .matrix()
                .ok_or_else(|| Error::InvalidArgument("operator has no matrix".into()))?;
            let m2 = forward.target_mass().to_dense();
            let m2 = (&m2 + m2.transpose()) * 0.5;
            let chol = m2
                .cholesky()
                .ok_or_else(|| Error::SolverFailure("target mass not SPD".into()))?;
            let l = chol.l();
            let g = l.transpose() * f;
            let rhs = l.transpose() * data;
            let svd = g.svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd
                .singular_values
                .iter()
                .cloned()
                .filter(|s| *s > 0.0)
                .fold(f64::INFINITY, f64::min);
            let cutoff = 1e-12 * smax;
            let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
            let u = svd
                .solve(&rhs, cutoff)
                .map_err(|e| Error::SolverFailure(e.to_string()))?;
            (
                u,
                SolverInfo {
                    method: SolverMethodUsed::SpectralCutoff,
                    iterations: 1,
                    condition_estimate: Some(smax / smin),
                    effective_rank: Some(rank),
                },
            )
        }
    };
    let res_sq = forward.residual_norm_sq(&u, data);
    let solution = DiscreteVectorField::from_dof(
        forward.source_carrier().clone(),
        forward.source_grid().clone(),
        &u,
    )?;
    Ok(SolveResult {
        solution,
        residual_norm: res_sq.max(0.0).sqrt(),
        constraint_norm: 0.0,
        regularizer_value: 0.0,
        objective_value: res_sq,
        solver: info,
    })
}

/// Squared Bregman distance of the quadratic regularizer: the chosen
/// (semi)norm squared of the difference field.
pub fn bregman_error(
    u: &DiscreteVectorField,
    u_dagger: &DiscreteVectorField,
    regularizer: Regularizer,
) -> Result<f64> {
    let diff = u.sub(u_dagger)?;
    Ok(match regularizer {
        Regularizer::SplitSeminorm => diff.h1_split_seminorm()?.powi(2),
        Regularizer::AmbientSeminorm => diff.h1_ambient_seminorm()?.powi(2),
        Regularizer::FullNorm => {
            let l2 = diff.l2_norm();
            l2 * l2 + diff.h1_split_seminorm()?.powi(2)
        }
    })
}

/// Discrete L2 norm of `tau d2s(f_tau) + n d2s(f_n)` for a field given by its
/// frame components; finiteness under refinement certifies the source
/// condition of the denoising problem.
pub fn check_source_condition(
    carrier: &dyn Curve,
    grid: &Grid,
    tangent_amp: &[f64],
    normal_amp: &[f64],
) -> Result<f64> {
    if grid.node_count() < 5 {
        return Err(Error::GridTooSmall {
            needed: 5,
            got: grid.node_count(),
        });
    }
    let speeds: Vec<f64> = grid.nodes().map(|t| carrier.velocity(t).norm()).collect();
    let d2s = |vals: &[f64]| -> Result<Vec<f64>> {
        let d1: Vec<f64> = grid
            .d_param(vals)?
            .iter()
            .zip(&speeds)
            .map(|(d, s)| d / s)
            .collect();
        Ok(grid
            .d_param(&d1)?
            .iter()
            .zip(&speeds)
            .map(|(d, s)| d / s)
            .collect())
    };
    let da = d2s(tangent_amp)?;
    let db = d2s(normal_amp)?;
    let integrand: Vec<f64> = da.iter().zip(&db).map(|(a, b)| a * a + b * b).collect();
    Ok(crate::fem::integrate_nodal(carrier, grid, &integrand)
        .max(0.0)
        .sqrt())
}
