//! Configuration-driven experiment runners: noisy-data synthesis, the
//! magnetization reconstruction study, the seminorm comparison, the
//! denoising convergence-rate table, and schedule diagnostics.
//!
//! Noise is ChaCha12-generated and rescaled so the noise-to-signal ratio is
//! met exactly, which makes every achieved noise level `delta`
//! deterministic. Per-cell streams are derived from `(seed, level, column)`
//! via the generator's stream id, so results do not depend on evaluation
//! order. Identical configs and seeds produce byte-identical output files.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{frame_combination, DiscreteVectorField};
use crate::geometry::{AnalyticCurve, Curve, CurveRef, PolylineCurve};
use crate::grid::Grid;
use crate::operator::{build_embedding_operator, build_magnetization_operator};
use crate::spline::{
    fit_spline, gamma, operator_perturbation_rho, EndCondition, SplineCurve, DEFAULT_GAMMA_SAMPLES,
};
use crate::tikhonov::{
    bregman_error, solve, solve_unregularized, Regularizer, SolveResult, TikhonovProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DenoiseRates,
    Magnetize,
    SeminormCompare,
    DirectInverse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub circle_radius: f64,
    /// Ellipse semi-axes of the measurement curve (long, short).
    pub ellipse_radii: (f64, f64),
    /// Parameter range of the source arc on the upper unit circle.
    pub s1_range: (f64, f64),
    /// Polygon segment counts of the measurement curve, one per level.
    pub s2_segments: Vec<usize>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            circle_radius: 1.0,
            ellipse_radii: (3.0, 2.0),
            s1_range: (-0.9, 0.9),
            s2_segments: vec![64, 128, 256, 512],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Spline knot step per level.
    pub h_s: Vec<f64>,
    /// Field grid step per level.
    pub h_u: Vec<f64>,
    /// Noise-to-signal ratio per level.
    pub nsr: Vec<f64>,
    /// Regularization parameter per level.
    pub alpha: Vec<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        // halving family: all four parameters shrink by 2 per level
        let pi = std::f64::consts::PI;
        ScheduleConfig {
            h_s: (0..5).map(|k| 0.5 * pi / 2f64.powi(k)).collect(),
            h_u: (0..5).map(|k| 0.02 * pi / 2f64.powi(k)).collect(),
            nsr: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            alpha: vec![0.04, 0.02, 0.01, 0.005, 0.0025],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub schedule: ScheduleConfig,
    /// Noise columns of the denoising cross table.
    pub nsr_columns: Vec<f64>,
    /// Regularization sweep of the seminorm comparison.
    pub alpha_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::DenoiseRates,
            seed: 42,
            geometry: GeometryConfig::default(),
            schedule: ScheduleConfig::default(),
            nsr_columns: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            alpha_grid: (0..15).map(|k| 1e-6 * 10f64.powf(k as f64 * 0.5)).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        let pi = std::f64::consts::PI;
        let mut c = ExperimentConfig {
            kind,
            ..Default::default()
        };
        match kind {
            ExperimentKind::DenoiseRates => {}
            ExperimentKind::Magnetize => {
                c.schedule = ScheduleConfig {
                    h_s: (0..4).map(|k| pi / 16.0 / 2f64.powi(k)).collect(),
                    h_u: (0..4).map(|k| pi / 16.0 / 2f64.powi(k)).collect(),
                    nsr: vec![0.5, 0.25, 0.125, 0.0625],
                    alpha: vec![4e-3, 2e-3, 1e-3, 5e-4],
                };
            }
            ExperimentKind::SeminormCompare | ExperimentKind::DirectInverse => {
                c.schedule = ScheduleConfig {
                    h_s: vec![pi / 64.0],
                    h_u: vec![pi / 64.0],
                    nsr: vec![0.5],
                    alpha: vec![1e-3],
                };
                c.geometry.s2_segments = vec![256];
            }
        }
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn levels(&self) -> usize {
        self.schedule.h_s.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        let n = s.h_s.len();
        if n == 0 {
            return Err(Error::Config("schedule is empty".into()));
        }
        if s.h_u.len() != n || s.nsr.len() != n || s.alpha.len() != n {
            return Err(Error::Config(format!(
                "schedule lists must have equal length (h_s {}, h_u {}, nsr {}, alpha {})",
                s.h_s.len(),
                s.h_u.len(),
                s.nsr.len(),
                s.alpha.len()
            )));
        }
        if s.h_s.iter().chain(&s.h_u).any(|h| !(h > &0.0)) {
            return Err(Error::Config("all steps must be positive".into()));
        }
        if s.nsr.iter().any(|v| *v < 0.0) {
            return Err(Error::Config("nsr must be non-negative".into()));
        }
        let alpha_needed = !matches!(self.kind, ExperimentKind::DirectInverse);
        if alpha_needed && s.alpha.iter().any(|a| !(a > &0.0)) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if matches!(
            self.kind,
            ExperimentKind::Magnetize
                | ExperimentKind::SeminormCompare
                | ExperimentKind::DirectInverse
        ) && self.geometry.s2_segments.len() < n
        {
            return Err(Error::Config(format!(
                "need {} polygon segment counts, got {}",
                n,
                self.geometry.s2_segments.len()
            )));
        }
        Ok(())
    }
}

/// Independent noise stream for a `(level, column)` cell of an experiment.
pub fn cell_rng(seed: u64, level: usize, column: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64 + 1) << 32) | (column as u64 + 1));
    rng
}

/// Add i.i.d. Gaussian noise per dof, rescaled so that
/// `||noise||_{L2} / ||clean||_{L2} = nsr` exactly. Returns the noisy field
/// and the achieved `delta = ||noise||_{L2}`.
pub fn synthesize_noisy_field(
    clean: &DiscreteVectorField,
    nsr: f64,
    rng: &mut impl Rng,
) -> Result<(DiscreteVectorField, f64)> {
    if nsr < 0.0 || !nsr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "nsr must be >= 0, got {nsr}"
        )));
    }
    if nsr == 0.0 {
        return Ok((clean.clone(), 0.0));
    }
    let clean_norm = clean.l2_norm();
    if clean_norm == 0.0 {
        return Err(Error::ZeroSignalNoise);
    }
    let raw: Vec<Vector2<f64>> = (0..clean.values().len())
        .map(|_| {
            Vector2::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    let noise = DiscreteVectorField::new(clean.carrier().clone(), clean.grid().clone(), raw)?;
    let noise_norm = noise.l2_norm();
    if noise_norm == 0.0 {
        return Err(Error::SolverFailure("degenerate noise draw".into()));
    }
    let delta = nsr * clean_norm;
    let noisy = clean.add(&noise.scale(delta / noise_norm))?;
    Ok((noisy, delta))
}

/// Seeded convenience wrapper around [`synthesize_noisy_field`].
pub fn synthesize_noisy_data(
    clean: &DiscreteVectorField,
    nsr: f64,
    seed: u64,
) -> Result<(DiscreteVectorField, f64)> {
    synthesize_noisy_field(clean, nsr, &mut ChaCha12Rng::seed_from_u64(seed))
}

/// Same contract for plain data vectors, normalized by the given L2 norm.
pub fn synthesize_noisy_dvector(
    clean: &DVector<f64>,
    nsr: f64,
    rng: &mut impl Rng,
    l2_norm: impl Fn(&DVector<f64>) -> f64,
) -> Result<(DVector<f64>, f64)> {
    if nsr < 0.0 || !nsr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "nsr must be >= 0, got {nsr}"
        )));
    }
    if nsr == 0.0 {
        return Ok((clean.clone(), 0.0));
    }
    let clean_norm = l2_norm(clean);
    if clean_norm == 0.0 {
        return Err(Error::ZeroSignalNoise);
    }
    let mut noise = DVector::from_fn(clean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise_norm = l2_norm(&noise);
    let delta = nsr * clean_norm;
    noise *= delta / noise_norm;
    Ok((clean + noise, delta))
}

// --- denoising rates -------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RateRow {
    pub level: usize,
    pub h_s: f64,
    pub h_u: f64,
    pub gamma: f64,
    pub nsr: f64,
    pub delta: f64,
    pub alpha: f64,
    pub bregman_error: f64,
    pub diagonal: bool,
}

pub struct ConvergenceReport {
    pub rows: Vec<RateRow>,
    /// Fitted log-log slope of the diagonal Bregman error against delta.
    pub diagonal_slope: f64,
    pub diagonal_errors: Vec<f64>,
    /// Pulled-back diagonal solutions and the reference solution per level.
    pub solutions: Vec<(usize, DiscreteVectorField, DiscreteVectorField)>,
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    num / den
}

fn sine_carrier() -> CurveRef {
    Arc::new(AnalyticCurve::sine_graph())
}

fn spline_of(curve: &dyn Curve, h: f64) -> Result<Arc<SplineCurve>> {
    Ok(Arc::new(fit_spline(curve, h, EndCondition::default())?))
}

fn field_grid(curve: &dyn Curve, h_u: f64) -> Result<Grid> {
    let (a, b) = curve.domain();
    let n = ((b - a) / h_u).round().max(2.0) as usize;
    Grid::open(a, b, n)
}

/// The synthetic denoising solution `8 x_2 tau + 4 cos(x_1) n`.
pub fn denoising_reference(carrier: CurveRef, grid: Grid) -> Result<DiscreteVectorField> {
    frame_combination(carrier, grid, |x| 8.0 * x.y, |x| 4.0 * x.x.cos())
}

pub fn run_denoising_rates(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let exact = sine_carrier();
    let mut rows = Vec::new();
    let mut diagonal = Vec::new();
    let mut diagonal_errors = Vec::new();
    let mut solutions = Vec::new();
    for k in 0..config.levels() {
        let s = &config.schedule;
        let spline = spline_of(exact.as_ref(), s.h_s[k])?;
        let spline_ref: CurveRef = spline.clone();
        let grid = field_grid(exact.as_ref(), s.h_u[k])?;
        let gamma_k = gamma(exact.as_ref(), spline.as_ref(), DEFAULT_GAMMA_SAMPLES)?;
        let u_dagger = denoising_reference(exact.clone(), grid.clone())?;
        let clean = u_dagger.with_carrier(spline_ref.clone())?;
        for (j, &nsr) in config.nsr_columns.iter().enumerate() {
            let mut rng = cell_rng(config.seed, k, j);
            let (noisy, delta) = synthesize_noisy_field(&clean, nsr, &mut rng)?;
            let op = build_embedding_operator(spline_ref.clone(), grid.clone())?;
            let problem = TikhonovProblem {
                forward: op,
                data: noisy.to_dof(),
                alpha: s.alpha[k],
                regularizer: Regularizer::SplitSeminorm,
                tangential_constraint: false,
            };
            let result = solve(&problem)?;
            let pulled = result.solution.with_carrier(exact.clone())?;
            let err = bregman_error(&pulled, &u_dagger, Regularizer::SplitSeminorm)?;
            let is_diag = j == k;
            rows.push(RateRow {
                level: k + 1,
                h_s: s.h_s[k],
                h_u: s.h_u[k],
                gamma: gamma_k,
                nsr,
                delta,
                alpha: s.alpha[k],
                bregman_error: err,
                diagonal: is_diag,
            });
            if is_diag {
                diagonal.push((delta, err));
                diagonal_errors.push(err);
                solutions.push((k + 1, pulled.clone(), u_dagger.clone()));
            }
        }
    }
    Ok(ConvergenceReport {
        rows,
        diagonal_slope: log_log_slope(&diagonal),
        diagonal_errors,
        solutions,
    })
}

impl ConvergenceReport {
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("fields"))?;
        let mut csv = std::fs::File::create(dir.join("table.csv"))?;
        writeln!(
            csv,
            "level,h_s,h_u,gamma,nsr,delta,alpha,bregman_error,diagonal"
        )?;
        for r in &self.rows {
            writeln!(
                csv,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.level,
                r.h_s,
                r.h_u,
                r.gamma,
                r.nsr,
                r.delta,
                r.alpha,
                r.bregman_error,
                r.diagonal as u8
            )?;
        }
        for (level, sol, udag) in &self.solutions {
            let mut f = std::fs::File::create(
                dir.join("fields")
                    .join(format!("solution_level_{level}.txt")),
            )?;
            sol.write_text(&mut f)?;
            let mut f = std::fs::File::create(
                dir.join("fields")
                    .join(format!("reference_level_{level}.txt")),
            )?;
            udag.write_text(&mut f)?;
        }
        let mut rep = std::fs::File::create(dir.join("report.txt"))?;
        writeln!(rep, "experiment = denoise-rates")?;
        writeln!(rep, "diagonal_slope = {:.6}", self.diagonal_slope)?;
        for (i, err) in self.diagonal_errors.iter().enumerate() {
            writeln!(rep, "diagonal_error_{} = {:.16e}", i + 1, err)?;
        }
        Ok(())
    }
}

// --- magnetization ---------------------------------------------------------

pub struct MagnetizationLevel {
    pub level: usize,
    pub h_s: f64,
    pub h_u: f64,
    pub s2_segments: usize,
    pub nsr: f64,
    pub delta: f64,
    pub alpha: f64,
    pub rel_l2_error: f64,
    pub h1_error: f64,
    pub normal_fraction: f64,
    pub residual_norm: f64,
}

pub struct MagnetizationReport {
    pub rows: Vec<MagnetizationLevel>,
    pub solutions: Vec<(usize, DiscreteVectorField, DiscreteVectorField)>,
}

/// The tangential magnetization `[40 x1^3 x2, -40 x1^4]`.
pub fn magnetization_reference(carrier: CurveRef, grid: Grid) -> Result<DiscreteVectorField> {
    DiscreteVectorField::from_fn(carrier, grid, |_, x| {
        Vector2::new(40.0 * x.x.powi(3) * x.y, -40.0 * x.x.powi(4))
    })
}

struct MagnetizationLevelSetup {
    exact: CurveRef,
    grid: Grid,
    u_dagger: DiscreteVectorField,
    data: DVector<f64>,
    delta: f64,
    forward: crate::operator::DiscreteOperator,
}

fn magnetization_level_setup(
    config: &ExperimentConfig,
    level: usize,
    column: usize,
    nsr: f64,
) -> Result<MagnetizationLevelSetup> {
    let s = &config.schedule;
    let (a, b) = config.geometry.s1_range;
    let exact: CurveRef = Arc::new(AnalyticCurve::upper_circle_graph());
    {
        let (ea, eb) = exact.domain();
        if (ea - a).abs() > 1e-12 || (eb - b).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "source range [{a}, {b}] is fixed to [{ea}, {eb}] in this build"
            )));
        }
    }
    let spline = spline_of(exact.as_ref(), s.h_s[level])?;
    let spline_ref: CurveRef = spline;
    let grid = field_grid(exact.as_ref(), s.h_u[level])?;
    let (rx, ry) = config.geometry.ellipse_radii;
    let ellipse: CurveRef = Arc::new(AnalyticCurve::ellipse(rx, ry));
    let nseg = config.geometry.s2_segments[level];
    let polygon: CurveRef = Arc::new(PolylineCurve::from_curve(ellipse.as_ref(), nseg)?);
    let tgrid_exact = Grid::closed(0.0, std::f64::consts::TAU, nseg)?;
    let tgrid_poly = Grid::closed(0.0, nseg as f64, nseg)?;

    // clean data from the exact geometry, then perturbed
    let f_exact =
        build_magnetization_operator(exact.clone(), grid.clone(), ellipse.clone(), tgrid_exact)?;
    let u_dagger = magnetization_reference(exact.clone(), grid.clone())?;
    let clean = f_exact.apply(&u_dagger.to_dof());
    let mut rng = cell_rng(config.seed, level, column);
    let (data, delta) =
        synthesize_noisy_dvector(&clean, nsr, &mut rng, |v| f_exact.target_l2_norm(v))?;

    // forward operator on the perturbed geometry
    let forward = build_magnetization_operator(spline_ref, grid.clone(), polygon, tgrid_poly)?;
    Ok(MagnetizationLevelSetup {
        exact,
        grid,
        u_dagger,
        data,
        delta,
        forward,
    })
}

fn magnetization_errors(
    setup: &MagnetizationLevelSetup,
    result: &SolveResult,
) -> Result<(f64, f64, f64)> {
    let pulled = result.solution.with_carrier(setup.exact.clone())?;
    let diff = pulled.sub(&setup.u_dagger)?;
    let rel_l2 = diff.l2_norm() / setup.u_dagger.l2_norm();
    let h1 = {
        let l2 = diff.l2_norm();
        (l2 * l2 + diff.h1_split_seminorm()?.powi(2)).sqrt()
    };
    let normal_fraction = result.constraint_norm / result.solution.l2_norm().max(1e-300);
    Ok((rel_l2, h1, normal_fraction))
}

pub fn run_magnetization(config: &ExperimentConfig) -> Result<MagnetizationReport> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    for k in 0..config.levels() {
        let s = &config.schedule;
        let setup = magnetization_level_setup(config, k, 0, s.nsr[k])?;
        let problem = TikhonovProblem {
            forward: setup.forward.clone(),
            data: setup.data.clone(),
            alpha: s.alpha[k],
            regularizer: Regularizer::SplitSeminorm,
            tangential_constraint: true,
        };
        let result = solve(&problem)?;
        let (rel_l2, h1, normal_fraction) = magnetization_errors(&setup, &result)?;
        rows.push(MagnetizationLevel {
            level: k + 1,
            h_s: s.h_s[k],
            h_u: s.h_u[k],
            s2_segments: config.geometry.s2_segments[k],
            nsr: s.nsr[k],
            delta: setup.delta,
            alpha: s.alpha[k],
            rel_l2_error: rel_l2,
            h1_error: h1,
            normal_fraction,
            residual_norm: result.residual_norm,
        });
        let pulled = result.solution.with_carrier(setup.exact.clone())?;
        solutions.push((k + 1, pulled, setup.u_dagger));
    }
    Ok(MagnetizationReport { rows, solutions })
}

impl MagnetizationReport {
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("fields"))?;
        let mut csv = std::fs::File::create(dir.join("table.csv"))?;
        writeln!(
            csv,
            "level,h_s,h_u,s2_segments,nsr,delta,alpha,rel_l2_error,h1_error,normal_fraction,residual_norm"
        )?;
        for r in &self.rows {
            writeln!(
                csv,
                "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.level,
                r.h_s,
                r.h_u,
                r.s2_segments,
                r.nsr,
                r.delta,
                r.alpha,
                r.rel_l2_error,
                r.h1_error,
                r.normal_fraction,
                r.residual_norm
            )?;
        }
        for (level, sol, udag) in &self.solutions {
            let mut f = std::fs::File::create(
                dir.join("fields")
                    .join(format!("solution_level_{level}.txt")),
            )?;
            sol.write_text(&mut f)?;
            let mut f = std::fs::File::create(
                dir.join("fields")
                    .join(format!("reference_level_{level}.txt")),
            )?;
            udag.write_text(&mut f)?;
        }
        let mut rep = std::fs::File::create(dir.join("report.txt"))?;
        writeln!(rep, "experiment = magnetize")?;
        for r in &self.rows {
            writeln!(rep, "rel_l2_error_{} = {:.16e}", r.level, r.rel_l2_error)?;
        }
        Ok(())
    }
}

// --- seminorm comparison ---------------------------------------------------

pub struct SeminormCompareRow {
    pub alpha: f64,
    pub err_split: f64,
    pub err_ambient: f64,
}

pub struct SeminormCompareReport {
    pub rows: Vec<SeminormCompareRow>,
    pub best_split: (f64, f64),
    pub best_ambient: (f64, f64),
    pub reg_split_at_reference: f64,
    pub reg_ambient_at_reference: f64,
    pub best_split_solution: DiscreteVectorField,
    pub best_ambient_solution: DiscreteVectorField,
    pub reference: DiscreteVectorField,
}

/// The constant-amplitude reference `[10 x2 + 5 x1, 5 x2 - 10 x1]`, i.e.
/// `10 tau + 5 n` on the upper circle arc.
pub fn seminorm_reference(carrier: CurveRef, grid: Grid) -> Result<DiscreteVectorField> {
    DiscreteVectorField::from_fn(carrier, grid, |_, x| {
        Vector2::new(10.0 * x.y + 5.0 * x.x, 5.0 * x.y - 10.0 * x.x)
    })
}

pub fn run_seminorm_compare(config: &ExperimentConfig) -> Result<SeminormCompareReport> {
    config.validate()?;
    if config.alpha_grid.is_empty() {
        return Err(Error::Config("alpha_grid is empty".into()));
    }
    let s = &config.schedule;
    // geometry and operators from the magnetization setup, but with the
    // constant-amplitude reference and its own data
    let setup = magnetization_level_setup(config, 0, 0, 0.0)?;
    let u_dagger = seminorm_reference(setup.exact.clone(), setup.grid.clone())?;
    let ellipse: CurveRef = Arc::new(AnalyticCurve::ellipse(
        config.geometry.ellipse_radii.0,
        config.geometry.ellipse_radii.1,
    ));
    let nseg = config.geometry.s2_segments[0];
    let f_exact = build_magnetization_operator(
        setup.exact.clone(),
        setup.grid.clone(),
        ellipse,
        Grid::closed(0.0, std::f64::consts::TAU, nseg)?,
    )?;
    let clean = f_exact.apply(&u_dagger.to_dof());
    let mut rng = cell_rng(config.seed, 0, 0);
    let (data, _) =
        synthesize_noisy_dvector(&clean, s.nsr[0], &mut rng, |v| f_exact.target_l2_norm(v))?;

    let mut rows = Vec::new();
    let mut best: [(f64, f64, Option<DiscreteVectorField>); 2] = [
        (f64::NAN, f64::INFINITY, None),
        (f64::NAN, f64::INFINITY, None),
    ];
    for &alpha in &config.alpha_grid {
        let mut errs = [0.0; 2];
        for (slot, reg) in [Regularizer::SplitSeminorm, Regularizer::AmbientSeminorm]
            .iter()
            .enumerate()
        {
            let problem = TikhonovProblem {
                forward: setup.forward.clone(),
                data: data.clone(),
                alpha,
                regularizer: *reg,
                tangential_constraint: false,
            };
            let result = solve(&problem)?;
            let pulled = result.solution.with_carrier(setup.exact.clone())?;
            let err = pulled.sub(&u_dagger)?.l2_norm() / u_dagger.l2_norm();
            errs[slot] = err;
            if err < best[slot].1 {
                best[slot] = (alpha, err, Some(pulled));
            }
        }
        rows.push(SeminormCompareRow {
            alpha,
            err_split: errs[0],
            err_ambient: errs[1],
        });
    }
    let dof = u_dagger.to_dof();
    let reg_split = crate::tikhonov::regularizer_form_value(
        Regularizer::SplitSeminorm,
        setup.exact.as_ref(),
        &setup.grid,
        &dof,
    )?;
    let reg_ambient = crate::tikhonov::regularizer_form_value(
        Regularizer::AmbientSeminorm,
        setup.exact.as_ref(),
        &setup.grid,
        &dof,
    )?;
    let [bs, ba] = best;
    Ok(SeminormCompareReport {
        rows,
        best_split: (bs.0, bs.1),
        best_ambient: (ba.0, ba.1),
        reg_split_at_reference: reg_split,
        reg_ambient_at_reference: reg_ambient,
        best_split_solution: bs.2.expect("at least one alpha"),
        best_ambient_solution: ba.2.expect("at least one alpha"),
        reference: u_dagger,
    })
}

impl SeminormCompareReport {
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("fields"))?;
        let mut csv = std::fs::File::create(dir.join("table.csv"))?;
        writeln!(csv, "alpha,err_split,err_ambient")?;
        for r in &self.rows {
            writeln!(
                csv,
                "{:.16e},{:.16e},{:.16e}",
                r.alpha, r.err_split, r.err_ambient
            )?;
        }
        for (name, field) in [
            ("best_split.txt", &self.best_split_solution),
            ("best_ambient.txt", &self.best_ambient_solution),
            ("reference.txt", &self.reference),
        ] {
            let mut f = std::fs::File::create(dir.join("fields").join(name))?;
            field.write_text(&mut f)?;
        }
        let mut rep = std::fs::File::create(dir.join("report.txt"))?;
        writeln!(rep, "experiment = seminorm-compare")?;
        writeln!(rep, "best_split_alpha = {:.6e}", self.best_split.0)?;
        writeln!(rep, "best_split_error = {:.16e}", self.best_split.1)?;
        writeln!(rep, "best_ambient_alpha = {:.6e}", self.best_ambient.0)?;
        writeln!(rep, "best_ambient_error = {:.16e}", self.best_ambient.1)?;
        writeln!(
            rep,
            "reg_split_at_reference = {:.16e}",
            self.reg_split_at_reference
        )?;
        writeln!(
            rep,
            "reg_ambient_at_reference = {:.16e}",
            self.reg_ambient_at_reference
        )?;
        Ok(())
    }
}

// --- direct inverse --------------------------------------------------------

pub struct DirectInverseReport {
    pub regularized_error: f64,
    pub unregularized_error: f64,
    pub error_ratio: f64,
    pub condition_estimate: f64,
    pub effective_rank: usize,
    pub unregularized_solution: DiscreteVectorField,
    pub regularized_solution: DiscreteVectorField,
    pub reference: DiscreteVectorField,
}

pub fn run_direct_inverse(config: &ExperimentConfig) -> Result<DirectInverseReport> {
    config.validate()?;
    let s = &config.schedule;
    let setup = magnetization_level_setup(config, 0, 0, s.nsr[0])?;
    let unreg = solve_unregularized(&setup.forward, &setup.data)?;
    let problem = TikhonovProblem {
        forward: setup.forward.clone(),
        data: setup.data.clone(),
        alpha: s.alpha[0],
        regularizer: Regularizer::SplitSeminorm,
        tangential_constraint: true,
    };
    let reg = solve(&problem)?;
    let pull = |r: &SolveResult| r.solution.with_carrier(setup.exact.clone());
    let reg_pulled = pull(&reg)?;
    let unreg_pulled = pull(&unreg)?;
    let reg_err = reg_pulled.sub(&setup.u_dagger)?.l2_norm() / setup.u_dagger.l2_norm();
    let unreg_err = unreg_pulled.sub(&setup.u_dagger)?.l2_norm() / setup.u_dagger.l2_norm();
    Ok(DirectInverseReport {
        regularized_error: reg_err,
        unregularized_error: unreg_err,
        error_ratio: unreg_err / reg_err,
        condition_estimate: unreg.solver.condition_estimate.unwrap_or(f64::INFINITY),
        effective_rank: unreg.solver.effective_rank.unwrap_or(0),
        unregularized_solution: unreg_pulled,
        regularized_solution: reg_pulled,
        reference: setup.u_dagger,
    })
}

impl DirectInverseReport {
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("fields"))?;
        for (name, field) in [
            ("unregularized.txt", &self.unregularized_solution),
            ("regularized.txt", &self.regularized_solution),
            ("reference.txt", &self.reference),
        ] {
            let mut f = std::fs::File::create(dir.join("fields").join(name))?;
            field.write_text(&mut f)?;
        }
        let mut rep = std::fs::File::create(dir.join("report.txt"))?;
        writeln!(rep, "experiment = direct-inverse")?;
        writeln!(rep, "regularized_error = {:.16e}", self.regularized_error)?;
        writeln!(
            rep,
            "unregularized_error = {:.16e}",
            self.unregularized_error
        )?;
        writeln!(rep, "error_ratio = {:.6e}", self.error_ratio)?;
        writeln!(rep, "condition_estimate = {:.6e}", self.condition_estimate)?;
        writeln!(rep, "effective_rank = {}", self.effective_rank)?;
        let mut csv = std::fs::File::create(dir.join("table.csv"))?;
        writeln!(csv, "regularized_error,unregularized_error,error_ratio")?;
        writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e}",
            self.regularized_error, self.unregularized_error, self.error_ratio
        )?;
        Ok(())
    }
}

// --- schedule validation ----------------------------------------------------

#[derive(Debug, Clone)]
pub struct ScheduleDiagRow {
    pub level: usize,
    pub alpha: f64,
    pub delta_proxy: f64,
    pub gamma: f64,
    pub rho: f64,
    pub rho_sq_over_alpha: f64,
    pub gamma_sq_over_alpha: f64,
    pub delta_sq_over_alpha: f64,
    pub dominating_term: String,
}

#[derive(Debug, Clone)]
pub struct ScheduleDiagnostics {
    pub rows: Vec<ScheduleDiagRow>,
    pub warnings: Vec<String>,
}

impl ScheduleDiagnostics {
    pub fn write_report(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "levels = {}", self.rows.len())?;
        for r in &self.rows {
            writeln!(
                w,
                "level {} : alpha = {:.3e}, gamma = {:.3e}, rho = {:.3e}, rho^2/alpha = {:.3e}, gamma^2/alpha = {:.3e}, delta^2/alpha = {:.3e}, dominating = {}",
                r.level,
                r.alpha,
                r.gamma,
                r.rho,
                r.rho_sq_over_alpha,
                r.gamma_sq_over_alpha,
                r.delta_sq_over_alpha,
                r.dominating_term
            )?;
        }
        if self.warnings.is_empty() {
            writeln!(w, "schedule_ok = true")?;
        } else {
            writeln!(w, "schedule_ok = false")?;
            for warn in &self.warnings {
                writeln!(w, "warning = {warn}")?;
            }
        }
        Ok(())
    }
}

/// Check the parameter schedule against the convergence conditions: all of
/// `rho^2/alpha`, `gamma^2/alpha`, `delta^2/alpha` and `alpha` itself must
/// decrease along levels. The noise proxy is the configured NSR (the signal
/// norm is level-independent). `rho` is measured for the magnetization
/// operator on coarsened grids and is identically zero for denoising, where
/// re-carrying data commutes with the embedding.
pub fn validate_schedule(config: &ExperimentConfig) -> Result<ScheduleDiagnostics> {
    config.validate()?;
    let s = &config.schedule;
    let n = config.levels();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "schedule diagnostics need at least 2 levels".into(),
        ));
    }
    let magnetization = matches!(
        config.kind,
        ExperimentKind::Magnetize | ExperimentKind::SeminormCompare | ExperimentKind::DirectInverse
    );
    let base: CurveRef = if magnetization {
        Arc::new(AnalyticCurve::upper_circle_graph())
    } else {
        sine_carrier()
    };

    let mut rows = Vec::new();
    for k in 0..n {
        let spline = spline_of(base.as_ref(), s.h_s[k])?;
        let gamma_k = gamma(base.as_ref(), spline.as_ref(), DEFAULT_GAMMA_SAMPLES)?;
        let rho = if magnetization {
            // coarse but faithful estimate on reduced grids
            let grid = field_grid(base.as_ref(), (s.h_u[k]).max(1.8 / 24.0))?;
            let nseg = config.geometry.s2_segments[k].min(64);
            let (rx, ry) = config.geometry.ellipse_radii;
            let ellipse: CurveRef = Arc::new(AnalyticCurve::ellipse(rx, ry));
            let polygon: CurveRef = Arc::new(PolylineCurve::from_curve(ellipse.as_ref(), nseg)?);
            let f_exact = build_magnetization_operator(
                base.clone(),
                grid.clone(),
                ellipse,
                Grid::closed(0.0, std::f64::consts::TAU, nseg)?,
            )?;
            let spline_ref: CurveRef = spline.clone();
            let f_h = build_magnetization_operator(
                spline_ref,
                grid.clone(),
                polygon,
                Grid::closed(0.0, nseg as f64, nseg)?,
            )?;
            let mut rng = cell_rng(config.seed, k, 1_000_000);
            operator_perturbation_rho(&f_exact, &f_h, 20, &mut rng)?
        } else {
            0.0
        };
        let delta = s.nsr[k];
        let alpha = s.alpha[k];
        let terms = [
            ("rho^2/alpha", rho * rho / alpha),
            ("gamma^2/alpha", gamma_k * gamma_k / alpha),
            ("delta^2/alpha", delta * delta / alpha),
            ("gamma", gamma_k),
        ];
        let dominating = terms
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|t| t.0)
            .unwrap_or("-");
        rows.push(ScheduleDiagRow {
            level: k + 1,
            alpha,
            delta_proxy: delta,
            gamma: gamma_k,
            rho,
            rho_sq_over_alpha: rho * rho / alpha,
            gamma_sq_over_alpha: gamma_k * gamma_k / alpha,
            delta_sq_over_alpha: delta * delta / alpha,
            dominating_term: dominating.to_string(),
        });
    }

    let mut warnings = Vec::new();
    let decreasing = |vals: Vec<f64>, name: &str, warnings: &mut Vec<String>| {
        for w in vals.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-12) {
                warnings.push(format!(
                    "{name} increases from {:.3e} to {:.3e} along the schedule",
                    w[0], w[1]
                ));
                return;
            }
        }
    };
    // alpha must strictly decrease; the ratio terms only must not increase
    for w in s.alpha.windows(2) {
        if w[1] >= w[0] * (1.0 - 1e-12) {
            warnings.push(format!(
                "alpha does not decrease ({:.3e} to {:.3e})",
                w[0], w[1]
            ));
            break;
        }
    }
    decreasing(
        rows.iter().map(|r| r.rho_sq_over_alpha).collect(),
        "rho^2/alpha",
        &mut warnings,
    );
    decreasing(
        rows.iter().map(|r| r.gamma_sq_over_alpha).collect(),
        "gamma^2/alpha",
        &mut warnings,
    );
    decreasing(
        rows.iter().map(|r| r.delta_sq_over_alpha).collect(),
        "delta^2/alpha",
        &mut warnings,
    );
    decreasing(
        rows.iter().map(|r| r.gamma).collect(),
        "gamma",
        &mut warnings,
    );
    Ok(ScheduleDiagnostics { rows, warnings })
}
