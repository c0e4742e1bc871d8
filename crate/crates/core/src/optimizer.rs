//! Regularized slice-set objective and its first-order solver.
//!
//! The objective for a candidate `H` is
//!
//! ```text
//! f(H) = (1/m) Σ_slices Σ_{p ∈ D₁} (I₂(H·p) − I₁(p))²  +  λ ‖H − H₀‖²
//! ```
//!
//! where only samples landing inside `I₂` count towards the sum and `m`.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{Image, Rect};
use crate::sliceset::SliceSet;
use crate::transform::{AffineTransform, Point};

/// Rows per parallel work unit inside a slice.
const BAND_ROWS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ObjectiveConfig {
    /// Weight decay on `‖H − H₀‖²`.
    pub lambda: f64,
    /// Maximum number of accepted descent steps.
    pub max_generations: usize,
    /// Stop once no coefficient moves by more than this in one step.
    pub tolerance: f64,
    /// Length, in preconditioned pixel units, of the very first trial step.
    pub initial_step: f64,
    /// Step multiplier applied after each accepted step.
    pub growth: f64,
    pub max_halvings: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: 0.001,
            max_generations: 200,
            tolerance: 1e-8,
            initial_step: 1.0,
            growth: 2.0,
            max_halvings: 30,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.max_generations == 0 {
            return Err(Error::InvalidInput("max generation must be >= 1".into()));
        }
        if !(self.initial_step > 0.0) || !(self.growth >= 1.0) {
            return Err(Error::InvalidInput("step schedule must be positive and non-shrinking".into()));
        }
        Ok(())
    }
}

/// Objective split into its two terms plus the support size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub data_term: f64,
    pub regularizer: f64,
    /// Number of in-bounds samples `m`.
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub generation: usize,
    pub objective: f64,
    pub data_term: f64,
    pub regularizer: f64,
    pub transform: AffineTransform,
}

/// One entry per accepted step; entry 0 is the initialization.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObjectiveTrace {
    pub entries: Vec<TraceEntry>,
}

impl ObjectiveTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.objective).collect()
    }

    /// Transform after `generation` accepted steps, or the last one reached.
    pub fn at_generation(&self, generation: usize) -> Option<AffineTransform> {
        let idx = generation.min(self.entries.len().checked_sub(1)?);
        Some(self.entries[idx].transform)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("trace csv: {e}"));
        w.write_record([
            "generation", "objective", "data_term", "regularizer", "a1", "b1", "c1", "a2", "b2", "c2",
        ])
        .map_err(io)?;
        for e in &self.entries {
            let mut row = vec![
                e.generation.to_string(),
                e.objective.to_string(),
                e.data_term.to_string(),
                e.regularizer.to_string(),
            ];
            row.extend(e.transform.to_array().iter().map(f64::to_string));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("trace csv: {e}")))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationResult {
    pub transform: AffineTransform,
    pub initial: AffineTransform,
    pub trace: ObjectiveTrace,
    /// Support size `m` at the final transform.
    pub support: usize,
    pub generations: usize,
    pub converged: bool,
    /// Set when no decrease was found even at the smallest trial step.
    pub line_search_failed: bool,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    sum_sq: f64,
    count: usize,
    grad: [f64; 6],
}

impl Partial {
    fn merge(mut self, o: &Partial) -> Partial {
        self.sum_sq += o.sum_sq;
        self.count += o.count;
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a += b;
        }
        self
    }
}

fn band_partial(h: &AffineTransform, rect: Rect, y0: usize, y1: usize, i1: &Image, i2: &Image, grad: bool) -> Partial {
    let mut acc = Partial::default();
    for y in y0..y1 {
        for x in rect.x0..rect.x1() {
            let p = Point::new(x as f64, y as f64);
            let q = h.apply(p);
            let base = i1.get(x, y);
            if grad {
                if let Some((v, gx, gy)) = i2.sample_bilinear_grad(q) {
                    let r = v - base;
                    acc.sum_sq += r * r;
                    acc.count += 1;
                    let (rx, ry) = (r * gx, r * gy);
                    acc.grad[0] += rx * p.x;
                    acc.grad[1] += rx * p.y;
                    acc.grad[2] += rx;
                    acc.grad[3] += ry * p.x;
                    acc.grad[4] += ry * p.y;
                    acc.grad[5] += ry;
                }
            } else if let Some(v) = i2.sample_bilinear(q) {
                let r = v - base;
                acc.sum_sq += r * r;
                acc.count += 1;
            }
        }
    }
    acc
}

/// Per-band partials reduced in slice then band order, so results do not
/// depend on thread scheduling.
fn accumulate(h: &AffineTransform, set: &SliceSet, i1: &Image, i2: &Image, grad: bool) -> Result<Partial> {
    if set.is_empty() {
        return Err(Error::InvalidInput("slice set is empty".into()));
    }
    if set.fixed_dims() != (i1.width(), i1.height()) || set.moving_dims() != (i2.width(), i2.height()) {
        return Err(Error::InvalidInput("slice set dimensions do not match the images".into()));
    }
    let bands: Vec<(Rect, usize, usize)> = set
        .pairs()
        .iter()
        .flat_map(|pair| {
            let r = pair.fixed;
            (r.y0..r.y1())
                .step_by(BAND_ROWS)
                .map(move |y| (r, y, (y + BAND_ROWS).min(r.y1())))
        })
        .collect();
    let parts: Vec<Partial> = bands
        .par_iter()
        .map(|&(r, y0, y1)| band_partial(h, r, y0, y1, i1, i2, grad))
        .collect();
    Ok(parts.iter().fold(Partial::default(), |a, b| a.merge(b)))
}

/// Mean squared residual over in-bounds samples; returns `(value, m)`.
pub fn data_term(h: &AffineTransform, set: &SliceSet, i1: &Image, i2: &Image) -> Result<(f64, usize)> {
    let acc = accumulate(h, set, i1, i2, false)?;
    if acc.count == 0 {
        return Err(Error::EmptySupport);
    }
    Ok((acc.sum_sq / acc.count as f64, acc.count))
}

/// `Σ (h_k − h0_k)²` over the six free coefficients.
pub fn regularizer(h: &AffineTransform, h0: &AffineTransform) -> f64 {
    h.to_array()
        .iter()
        .zip(h0.to_array())
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}

pub fn evaluate(
    h: &AffineTransform,
    h0: &AffineTransform,
    set: &SliceSet,
    i1: &Image,
    i2: &Image,
    cfg: &ObjectiveConfig,
) -> Result<Evaluation> {
    let (data, support) = data_term(h, set, i1, i2)?;
    let reg = regularizer(h, h0);
    Ok(Evaluation {
        objective: data + cfg.lambda * reg,
        data_term: data,
        regularizer: reg,
        support,
    })
}

pub fn objective(
    h: &AffineTransform,
    h0: &AffineTransform,
    set: &SliceSet,
    i1: &Image,
    i2: &Image,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    evaluate(h, h0, set, i1, i2, cfg).map(|e| e.objective)
}

fn evaluate_with_gradient(
    h: &AffineTransform,
    h0: &AffineTransform,
    set: &SliceSet,
    i1: &Image,
    i2: &Image,
    lambda: f64,
) -> Result<(Evaluation, [f64; 6])> {
    let acc = accumulate(h, set, i1, i2, true)?;
    if acc.count == 0 {
        return Err(Error::EmptySupport);
    }
    let m = acc.count as f64;
    let (hv, h0v) = (h.to_array(), h0.to_array());
    let mut g = [0.0; 6];
    for k in 0..6 {
        g[k] = 2.0 * acc.grad[k] / m + 2.0 * lambda * (hv[k] - h0v[k]);
    }
    let data = acc.sum_sq / m;
    let reg = regularizer(h, h0);
    Ok((
        Evaluation {
            objective: data + lambda * reg,
            data_term: data,
            regularizer: reg,
            support: acc.count,
        },
        g,
    ))
}

/// Analytic gradient of the objective in `(a1, b1, c1, a2, b2, c2)` order.
///
/// Samples whose position leaves `I₂` contribute nothing, which makes the
/// objective piecewise smooth; at bilinear cell borders the derivative of
/// the cell containing the sample is used.
pub fn gradient(
    h: &AffineTransform,
    h0: &AffineTransform,
    set: &SliceSet,
    i1: &Image,
    i2: &Image,
    cfg: &ObjectiveConfig,
) -> Result<[f64; 6]> {
    evaluate_with_gradient(h, h0, set, i1, i2, cfg.lambda).map(|(_, g)| g)
}

/// Mean squared residual over the whole fixed image with no slicing.
pub fn direct_objective(h: &AffineTransform, i1: &Image, i2: &Image) -> Result<f64> {
    let mut sum = 0.0;
    let mut m = 0usize;
    for y in 0..i1.height() {
        for x in 0..i1.width() {
            let q = h.apply(Point::new(x as f64, y as f64));
            if let Some(v) = i2.sample_bilinear(q) {
                sum += (v - i1.get(x, y)).powi(2);
                m += 1;
            }
        }
    }
    if m == 0 {
        return Err(Error::EmptySupport);
    }
    Ok(sum / m as f64)
}

/// Coordinates in which all six coefficients are measured in pixels.
///
/// With `q = (p − c) / s`, `H·p = (s·A)·q + (A·c + t)`; descent runs on the
/// entries of `s·A` and `A·c + t`.
#[derive(Debug, Clone, Copy)]
struct Preconditioner {
    cx: f64,
    cy: f64,
    s: f64,
}

impl Preconditioner {
    fn for_image(img: &Image) -> Self {
        Preconditioner {
            cx: (img.width() as f64 - 1.0) / 2.0,
            cy: (img.height() as f64 - 1.0) / 2.0,
            s: img.width().max(img.height()) as f64,
        }
    }

    fn to_theta(&self, h: &AffineTransform) -> [f64; 6] {
        let s = self.s;
        [
            h.a1 * s,
            h.b1 * s,
            h.a1 * self.cx + h.b1 * self.cy + h.c1,
            h.a2 * s,
            h.b2 * s,
            h.a2 * self.cx + h.b2 * self.cy + h.c2,
        ]
    }

    fn from_theta(&self, t: &[f64; 6]) -> AffineTransform {
        let (a1, b1) = (t[0] / self.s, t[1] / self.s);
        let (a2, b2) = (t[3] / self.s, t[4] / self.s);
        AffineTransform::new(
            a1,
            b1,
            t[2] - a1 * self.cx - b1 * self.cy,
            a2,
            b2,
            t[5] - a2 * self.cx - b2 * self.cy,
        )
    }

    /// Pulls a gradient in `h` back to `θ` coordinates.
    fn gradient_to_theta(&self, g: &[f64; 6]) -> [f64; 6] {
        let s = self.s;
        [
            (g[0] - g[2] * self.cx) / s,
            (g[1] - g[2] * self.cy) / s,
            g[2],
            (g[3] - g[5] * self.cx) / s,
            (g[4] - g[5] * self.cy) / s,
            g[5],
        ]
    }
}

/// Minimizes the objective by backtracking gradient descent from `h0`.
///
/// Each generation tries a step along the preconditioned negative gradient,
/// halving until the objective strictly decreases. The step grows by
/// `cfg.growth` after every accepted generation.
pub fn solve(
    h0: &AffineTransform,
    set: &SliceSet,
    i1: &Image,
    i2: &Image,
    cfg: &ObjectiveConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pre = Preconditioner::for_image(i1);
    let (mut eval, mut grad_h) = evaluate_with_gradient(h0, h0, set, i1, i2, cfg.lambda)?;
    let mut h = *h0;
    let mut trace = ObjectiveTrace {
        entries: vec![TraceEntry {
            generation: 0,
            objective: eval.objective,
            data_term: eval.data_term,
            regularizer: eval.regularizer,
            transform: h,
        }],
    };
    let mut step = None::<f64>;
    let mut converged = false;
    let mut line_search_failed = false;

    for generation in 1..=cfg.max_generations {
        let g = pre.gradient_to_theta(&grad_h);
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax == 0.0 || !gmax.is_finite() {
            converged = gmax == 0.0;
            break;
        }
        let theta = pre.to_theta(&h);
        let mut alpha = step.unwrap_or(cfg.initial_step / gmax);
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial_theta: [f64; 6] = std::array::from_fn(|k| theta[k] - alpha * g[k]);
            let trial = pre.from_theta(&trial_theta);
            match evaluate_with_gradient(&trial, h0, set, i1, i2, cfg.lambda) {
                Ok((e, gr)) if e.objective < eval.objective => {
                    accepted = Some((trial, e, gr));
                    break;
                }
                Ok(_) | Err(Error::EmptySupport) => alpha *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((next, e, gr)) = accepted else {
            line_search_failed = true;
            break;
        };
        let change = next.max_abs_diff(&h);
        h = next;
        eval = e;
        grad_h = gr;
        trace.entries.push(TraceEntry {
            generation,
            objective: e.objective,
            data_term: e.data_term,
            regularizer: e.regularizer,
            transform: h,
        });
        step = Some(alpha * cfg.growth);
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(RegistrationResult {
        transform: h,
        initial: *h0,
        generations: trace.len() - 1,
        trace,
        support: eval.support,
        converged,
        line_search_failed,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
