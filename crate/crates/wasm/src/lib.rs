//! Interactive browser demo. Three operations are exported through
//! wasm-bindgen, each returning a JSON string the static page renders onto
//! canvases:
//!
//! * [`spline_demo`]: fit a uniform cubic spline to the sine graph and
//!   report the perturbation measure `gamma`;
//! * [`denoise_demo`]: one denoising cell: noisy field, reconstruction,
//!   Bregman error;
//! * [`seminorm_demo`]: the magnetization problem solved with the split and
//!   the ambient seminorm at one regularization strength.
//!
//! The inner functions are plain Rust and unit-tested natively; the wasm
//! exports only serialize their results.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::Vector2;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use curvetik::experiment::{
    cell_rng, denoising_reference, synthesize_noisy_dvector, synthesize_noisy_field,
};
use curvetik::geometry::{AnalyticCurve, Curve, CurveRef, PolylineCurve};
use curvetik::operator::{build_embedding_operator, build_magnetization_operator};
use curvetik::spline::{fit_spline, gamma, EndCondition};
use curvetik::tikhonov::{bregman_error, solve, Regularizer, TikhonovProblem};
use curvetik::{DiscreteVectorField, Grid};

type Point = (f64, f64);

fn points(v: impl IntoIterator<Item = Vector2<f64>>) -> Vec<Point> {
    v.into_iter().map(|p| (p.x, p.y)).collect()
}

fn field_arrows(field: &DiscreteVectorField, stride: usize) -> Vec<(f64, f64, f64, f64)> {
    field
        .grid()
        .nodes()
        .zip(field.values())
        .step_by(stride.max(1))
        .map(|(t, v)| {
            let p = field.carrier().point(t);
            (p.x, p.y, v.x, v.y)
        })
        .collect()
}

#[derive(Serialize)]
pub struct SplineDemo {
    pub exact: Vec<Point>,
    pub spline: Vec<Point>,
    pub knots: Vec<Point>,
    pub control: Vec<Point>,
    pub gamma: f64,
    pub knot_step: f64,
}

pub fn spline_demo_inner(intervals: u32) -> curvetik::Result<SplineDemo> {
    let intervals = intervals.clamp(4, 512);
    let curve = AnalyticCurve::sine_graph();
    let h = TAU / intervals as f64;
    let s = fit_spline(&curve, h, EndCondition::default())?;
    let g = gamma(&curve, &s, 4096)?;
    let sample =
        |c: &dyn curvetik::Curve| points((0..=400).map(|i| c.point(TAU * i as f64 / 400.0)));
    Ok(SplineDemo {
        exact: sample(&curve),
        spline: sample(&s),
        knots: points(s.knots().map(|t| s.point(t)).collect::<Vec<_>>()),
        control: points(s.control_points().to_vec()),
        gamma: g,
        knot_step: s.knot_step(),
    })
}

#[derive(Serialize)]
pub struct DenoiseDemo {
    pub curve: Vec<Point>,
    pub reference: Vec<(f64, f64, f64, f64)>,
    pub noisy: Vec<(f64, f64, f64, f64)>,
    pub reconstruction: Vec<(f64, f64, f64, f64)>,
    pub bregman_error: f64,
    pub delta: f64,
    pub gamma: f64,
}

pub fn denoise_demo_inner(
    level: u32,
    nsr: f64,
    alpha: f64,
    seed: u32,
) -> curvetik::Result<DenoiseDemo> {
    let level = level.min(4) as i32;
    let nsr = nsr.clamp(0.0, 4.0);
    let alpha = alpha.clamp(1e-6, 10.0);
    let exact: CurveRef = Arc::new(AnalyticCurve::sine_graph());
    let spline: CurveRef = Arc::new(fit_spline(
        exact.as_ref(),
        0.5 * PI / 2f64.powi(level),
        EndCondition::default(),
    )?);
    let n = (100 * 2usize.pow(level as u32)).min(800);
    let grid = Grid::open(0.0, TAU, n)?;
    let u_dagger = denoising_reference(exact.clone(), grid.clone())?;
    let clean = u_dagger.with_carrier(spline.clone())?;
    let mut rng = cell_rng(seed as u64, level as usize, 0);
    let (noisy, delta) = synthesize_noisy_field(&clean, nsr, &mut rng)?;
    let problem = TikhonovProblem {
        forward: build_embedding_operator(spline.clone(), grid.clone())?,
        data: noisy.to_dof(),
        alpha,
        regularizer: Regularizer::SplitSeminorm,
        tangential_constraint: false,
    };
    let result = solve(&problem)?;
    let pulled = result.solution.with_carrier(exact.clone())?;
    let err = bregman_error(&pulled, &u_dagger, Regularizer::SplitSeminorm)?;
    let stride = (n / 60).max(1);
    Ok(DenoiseDemo {
        curve: points((0..=400).map(|i| exact.point(TAU * i as f64 / 400.0))),
        reference: field_arrows(&u_dagger, stride),
        noisy: field_arrows(&noisy.with_carrier(exact.clone())?, stride),
        reconstruction: field_arrows(&pulled, stride),
        bregman_error: err,
        delta,
        gamma: gamma(exact.as_ref(), spline.as_ref(), 4096)?,
    })
}

#[derive(Serialize)]
pub struct SeminormDemo {
    pub source_curve: Vec<Point>,
    pub target_curve: Vec<Point>,
    pub reference: Vec<(f64, f64, f64, f64)>,
    pub split: Vec<(f64, f64, f64, f64)>,
    pub ambient: Vec<(f64, f64, f64, f64)>,
    pub err_split: f64,
    pub err_ambient: f64,
}

pub fn seminorm_demo_inner(log10_alpha: f64, seed: u32) -> curvetik::Result<SeminormDemo> {
    let alpha = 10f64.powf(log10_alpha.clamp(-7.0, 1.0));
    let exact: CurveRef = Arc::new(AnalyticCurve::upper_circle_graph());
    let spline: CurveRef = Arc::new(fit_spline(
        exact.as_ref(),
        PI / 48.0,
        EndCondition::default(),
    )?);
    let grid = Grid::open(-0.9, 0.9, 28)?;
    let ellipse: CurveRef = Arc::new(AnalyticCurve::ellipse(3.0, 2.0));
    let nseg = 96;
    let polygon: CurveRef = Arc::new(PolylineCurve::from_curve(ellipse.as_ref(), nseg)?);

    let f_exact = build_magnetization_operator(
        exact.clone(),
        grid.clone(),
        ellipse.clone(),
        Grid::closed(0.0, TAU, nseg)?,
    )?;
    let u_dagger = DiscreteVectorField::from_fn(exact.clone(), grid.clone(), |_, x| {
        Vector2::new(10.0 * x.y + 5.0 * x.x, 5.0 * x.y - 10.0 * x.x)
    })?;
    let clean = f_exact.apply(&u_dagger.to_dof());
    let mut rng = cell_rng(seed as u64, 0, 0);
    let (data, _) = synthesize_noisy_dvector(&clean, 0.5, &mut rng, |v| f_exact.target_l2_norm(v))?;
    let forward = build_magnetization_operator(
        spline,
        grid.clone(),
        polygon,
        Grid::closed(0.0, nseg as f64, nseg)?,
    )?;

    let mut solutions = Vec::new();
    let mut errors = Vec::new();
    for reg in [Regularizer::SplitSeminorm, Regularizer::AmbientSeminorm] {
        let problem = TikhonovProblem {
            forward: forward.clone(),
            data: data.clone(),
            alpha,
            regularizer: reg,
            tangential_constraint: false,
        };
        let result = solve(&problem)?;
        let pulled = result.solution.with_carrier(exact.clone())?;
        errors.push(pulled.sub(&u_dagger)?.l2_norm() / u_dagger.l2_norm());
        solutions.push(pulled);
    }
    Ok(SeminormDemo {
        source_curve: points((0..=200).map(|i| exact.point(-0.9 + 1.8 * i as f64 / 200.0))),
        target_curve: points((0..=200).map(|i| ellipse.point(TAU * i as f64 / 200.0))),
        reference: field_arrows(&u_dagger, 1),
        split: field_arrows(&solutions[0], 1),
        ambient: field_arrows(&solutions[1], 1),
        err_split: errors[0],
        err_ambient: errors[1],
    })
}

fn to_json<T: Serialize>(value: curvetik::Result<T>) -> Result<String, JsValue> {
    match value {
        Ok(v) => serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())),
        Err(e) => Err(JsValue::from_str(&e.to_string())),
    }
}

/// Fit a uniform cubic spline to the sine graph with the given number of
/// knot intervals.
#[wasm_bindgen]
pub fn spline_demo(intervals: u32) -> Result<String, JsValue> {
    to_json(spline_demo_inner(intervals))
}

/// Solve one denoising cell at the given refinement level.
#[wasm_bindgen]
pub fn denoise_demo(level: u32, nsr: f64, alpha: f64, seed: u32) -> Result<String, JsValue> {
    to_json(denoise_demo_inner(level, nsr, alpha, seed))
}

/// Reconstruct the constant-amplitude magnetization with both seminorms.
#[wasm_bindgen]
pub fn seminorm_demo(log10_alpha: f64, seed: u32) -> Result<String, JsValue> {
    to_json(seminorm_demo_inner(log10_alpha, seed))
}
