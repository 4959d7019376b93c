//! Sound output-bound propagation over box regions and everything built
//! on it: region verification, verified robust accuracy, and the
//! differentiable worst-case logits used by robust training.
//!
//! Two bound methods are provided. `Naive` pushes concrete intervals
//! through each layer with sign-split affine arithmetic. `Symbolic`
//! keeps one linear lower and upper expression per neuron (linear
//! relaxation at crossing ReLUs) and intersects its concretization with
//! the naive chain, so its bounds are never wider than naive's.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featurespace::{FeatureVector, Vocabulary};
use crate::mlp::{self, Gradients, MlpError, MlpModel};
use crate::properties::{regions_for, IntervalRegion, PropertySpec};

pub type Result<T> = std::result::Result<T, MlpError>;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum BoundMethod {
    Naive,
    Symbolic,
}

/// Per-class verified output interval.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputBounds {
    pub lower: Array1<f64>,
    pub upper: Array1<f64>,
    pub method: BoundMethod,
}

impl OutputBounds {
    /// True iff the concrete logits lie inside the bounds with slack.
    pub fn contains_logits(&self, logits: &Array1<f64>, slack: f64) -> bool {
        logits
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(z, (lo, hi))| *z >= lo - slack && *z <= hi + slack)
    }
}

/// Verification verdict for one region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Verified,
    /// Not verified; carries the margin (true-class lower bound minus
    /// other-class upper bound, negative or zero here) for diagnostics.
    Unknown { worst_margin: f64 },
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified)
    }
}

/// Box region as f64 corner vectors.
pub fn region_box(region: &IntervalRegion) -> (Array1<f64>, Array1<f64>) {
    let d = region.dim();
    let lo = Array1::from_iter((0..d).map(|i| if region.lower.get(i) { 1.0 } else { 0.0 }));
    let hi = Array1::from_iter((0..d).map(|i| if region.upper.get(i) { 1.0 } else { 0.0 }));
    (lo, hi)
}

fn split_signs(w: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    (w.mapv(|v| v.max(0.0)), w.mapv(|v| v.min(0.0)))
}

/// Interval arithmetic layer by layer: affine via sign split, ReLU by
/// clamping. Sound by construction.
pub fn propagate_naive(model: &MlpModel, region: &IntervalRegion) -> Result<OutputBounds> {
    model.check_input(region.dim())?;
    let (mut lo, mut hi) = region_box(region);
    let n_layers = model.layers.len();
    for (i, layer) in model.layers.iter().enumerate() {
        let (wpos, wneg) = split_signs(&layer.weights);
        let new_lo = wpos.dot(&lo) + wneg.dot(&hi) + &layer.bias;
        let new_hi = wpos.dot(&hi) + wneg.dot(&lo) + &layer.bias;
        lo = new_lo;
        hi = new_hi;
        if i + 1 < n_layers {
            lo.mapv_inplace(|v| v.max(0.0));
            hi.mapv_inplace(|v| v.max(0.0));
        }
    }
    Ok(OutputBounds {
        lower: lo,
        upper: hi,
        method: BoundMethod::Naive,
    })
}

/// Per-neuron symbolic linear bounds over the region's inputs: rows are
/// coefficient vectors with the constant folded into the last column,
/// plus the tightest known concrete bounds.
#[derive(Clone, Debug)]
pub struct SymbolicState {
    /// n x (d+1) lower expressions.
    pub lower: Array2<f64>,
    /// n x (d+1) upper expressions.
    pub upper: Array2<f64>,
    pub concrete_lo: Array1<f64>,
    pub concrete_hi: Array1<f64>,
}

fn concretize_min(expr: &Array2<f64>, xlo: &Array1<f64>, xhi: &Array1<f64>) -> Array1<f64> {
    let d = xlo.len();
    let coef = expr.slice(ndarray::s![.., ..d]);
    let (cpos, cneg) = (coef.mapv(|v| v.max(0.0)), coef.mapv(|v| v.min(0.0)));
    cpos.dot(xlo) + cneg.dot(xhi) + &expr.column(d)
}

fn concretize_max(expr: &Array2<f64>, xlo: &Array1<f64>, xhi: &Array1<f64>) -> Array1<f64> {
    let d = xlo.len();
    let coef = expr.slice(ndarray::s![.., ..d]);
    let (cpos, cneg) = (coef.mapv(|v| v.max(0.0)), coef.mapv(|v| v.min(0.0)));
    cpos.dot(xhi) + cneg.dot(xlo) + &expr.column(d)
}

/// Symbolic propagation through every layer; returns the per-layer
/// post-activation states (diagnostics and tests use the intermediate
/// expressions, verification uses the last state's concrete bounds).
pub fn symbolic_states(model: &MlpModel, region: &IntervalRegion) -> Result<Vec<SymbolicState>> {
    model.check_input(region.dim())?;
    let (xlo, xhi) = region_box(region);
    let d = region.dim();
    let mut expr = Array2::zeros((d, d + 1));
    for i in 0..d {
        expr[(i, i)] = 1.0;
    }
    let mut state = SymbolicState {
        lower: expr.clone(),
        upper: expr,
        concrete_lo: xlo.clone(),
        concrete_hi: xhi.clone(),
    };
    let n_layers = model.layers.len();
    let mut out = Vec::with_capacity(n_layers);
    for (li, layer) in model.layers.iter().enumerate() {
        let (wpos, wneg) = split_signs(&layer.weights);
        let mut lower = wpos.dot(&state.lower) + wneg.dot(&state.upper);
        let mut upper = wpos.dot(&state.upper) + wneg.dot(&state.lower);
        {
            let dcol = lower.ncols() - 1;
            let mut lc = lower.column_mut(dcol);
            lc += &layer.bias;
            let mut uc = upper.column_mut(dcol);
            uc += &layer.bias;
        }
        // tightest concrete bounds: symbolic concretization intersected
        // with the naive chain from the previous (already tight) bounds
        let sym_lo = concretize_min(&lower, &xlo, &xhi);
        let sym_hi = concretize_max(&upper, &xlo, &xhi);
        let naive_lo = wpos.dot(&state.concrete_lo) + wneg.dot(&state.concrete_hi) + &layer.bias;
        let naive_hi = wpos.dot(&state.concrete_hi) + wneg.dot(&state.concrete_lo) + &layer.bias;
        let mut concrete_lo =
            Array1::from_iter(sym_lo.iter().zip(naive_lo.iter()).map(|(a, b)| a.max(*b)));
        let mut concrete_hi =
            Array1::from_iter(sym_hi.iter().zip(naive_hi.iter()).map(|(a, b)| a.min(*b)));
        // guard against floating-point inversion of two sound bounds
        for (lo, hi) in concrete_lo.iter_mut().zip(concrete_hi.iter_mut()) {
            if lo > hi {
                let mid = 0.5 * (*lo + *hi);
                *lo = mid;
                *hi = mid;
            }
        }
        if li + 1 < n_layers {
            for i in 0..concrete_lo.len() {
                let (l, u) = (concrete_lo[i], concrete_hi[i]);
                if l >= 0.0 {
                    // active: expressions pass through
                } else if u <= 0.0 {
                    lower.row_mut(i).fill(0.0);
                    upper.row_mut(i).fill(0.0);
                    concrete_lo[i] = 0.0;
                    concrete_hi[i] = 0.0;
                } else {
                    // crossing: upper' = u/(u-l) * (upper - l),
                    //           lower' = u/(u-l) * lower
                    let lambda = u / (u - l);
                    let dcol = lower.ncols() - 1;
                    upper.row_mut(i).mapv_inplace(|v| lambda * v);
                    upper[(i, dcol)] -= lambda * l;
                    lower.row_mut(i).mapv_inplace(|v| lambda * v);
                    concrete_lo[i] = 0.0;
                    concrete_hi[i] = u;
                }
            }
        }
        state = SymbolicState {
            lower,
            upper,
            concrete_lo,
            concrete_hi,
        };
        out.push(state.clone());
    }
    Ok(out)
}

/// Symbolic linear relaxation bounds; elementwise at least as tight as
/// `propagate_naive`.
pub fn propagate_symbolic(model: &MlpModel, region: &IntervalRegion) -> Result<OutputBounds> {
    let states = symbolic_states(model, region)?;
    let last = states.last().expect("at least one layer");
    Ok(OutputBounds {
        lower: last.concrete_lo.clone(),
        upper: last.concrete_hi.clone(),
        method: BoundMethod::Symbolic,
    })
}

pub fn propagate(model: &MlpModel, region: &IntervalRegion, method: BoundMethod) -> Result<OutputBounds> {
    match method {
        BoundMethod::Naive => propagate_naive(model, region),
        BoundMethod::Symbolic => propagate_symbolic(model, region),
    }
}

/// Verified iff the true class's lower bound strictly exceeds the other
/// class's upper bound; ties are conservatively Unknown.
pub fn verify_region(
    model: &MlpModel,
    region: &IntervalRegion,
    true_class: usize,
    method: BoundMethod,
) -> Result<Verdict> {
    let bounds = propagate(model, region, method)?;
    let other = 1 - true_class;
    let margin = bounds.lower[true_class] - bounds.upper[other];
    Ok(if margin > 0.0 {
        Verdict::Verified
    } else {
        Verdict::Unknown {
            worst_margin: margin,
        }
    })
}

/// Fraction of malicious samples whose every property region verifies.
/// A sample with zero regions still requires a malicious prediction on
/// the sample itself.
pub fn vra(
    model: &MlpModel,
    samples: &[FeatureVector],
    vocab: &Vocabulary,
    spec: &PropertySpec,
    method: BoundMethod,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let flags: Vec<bool> = samples
        .par_iter()
        .map(|x| sample_verified(model, x, vocab, spec, method).unwrap_or(false))
        .collect();
    Ok(flags.iter().filter(|v| **v).count() as f64 / samples.len() as f64)
}

pub fn sample_verified(
    model: &MlpModel,
    x: &FeatureVector,
    vocab: &Vocabulary,
    spec: &PropertySpec,
    method: BoundMethod,
) -> Result<bool> {
    if model.predict_features(x)? != mlp::CLASS_MALICIOUS {
        return Ok(false);
    }
    let regions = regions_for(x, vocab, spec).map_err(|_| MlpError::DimensionMismatch {
        expected: model.input_dim(),
        got: x.len(),
    })?;
    for region in &regions {
        if !verify_region(model, region, mlp::CLASS_MALICIOUS, method)?.is_verified() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One row of the verification report CSV.
#[derive(Clone, Debug, Serialize)]
pub struct VerificationRow {
    pub sample_id: String,
    pub property: String,
    pub regions_total: usize,
    pub regions_verified: usize,
    pub verdict: String,
    pub worst_margin: f64,
}

/// Verifies one sample and produces its report row.
pub fn verify_sample_report(
    model: &MlpModel,
    sample_id: &str,
    x: &FeatureVector,
    vocab: &Vocabulary,
    spec: &PropertySpec,
    method: BoundMethod,
) -> Result<VerificationRow> {
    let regions = regions_for(x, vocab, spec).map_err(|_| MlpError::DimensionMismatch {
        expected: model.input_dim(),
        got: x.len(),
    })?;
    let mut verified = 0usize;
    let mut worst = f64::INFINITY;
    for region in &regions {
        match verify_region(model, region, mlp::CLASS_MALICIOUS, method)? {
            Verdict::Verified => verified += 1,
            Verdict::Unknown { worst_margin } => worst = worst.min(worst_margin),
        }
    }
    let point_ok = model.predict_features(x)? == mlp::CLASS_MALICIOUS;
    let all = point_ok && verified == regions.len();
    Ok(VerificationRow {
        sample_id: sample_id.to_string(),
        property: spec
            .preset_name(vocab.n_subtrees())
            .map(str::to_string)
            .unwrap_or_else(|| spec.label()),
        regions_total: regions.len(),
        regions_verified: verified,
        verdict: if all { "Verified" } else { "Unknown" }.to_string(),
        worst_margin: if worst.is_finite() { worst } else { 0.0 },
    })
}

pub fn report_to_csv(rows: &[VerificationRow]) -> String {
    let mut out = String::from(
        "sample_id,property,regions_total,regions_verified,verdict,worst_margin\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.sample_id, r.property, r.regions_total, r.regions_verified, r.verdict, r.worst_margin
        ));
    }
    out
}

// ---------------------------------------------------------------------
// Differentiable worst-case logits
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
enum ReluPhase {
    Active,
    Dead,
    Crossing { lambda: f64, shift: f64 },
}

/// Recorded forward pass of the worst-case computation. The relaxation
/// plan (phases, relaxation coefficients, sign masks, box-corner
/// selections) is frozen at forward time; gradients and the frozen-plan
/// re-evaluation both use it, which is exactly the per-step objective
/// robust training optimizes.
pub struct RobustPass {
    method: BoundMethod,
    true_class: usize,
    logits: Array1<f64>,
    xlo: Array1<f64>,
    xhi: Array1<f64>,
    pos_masks: Vec<Array2<f64>>,
    // naive tape
    naive_inputs: Vec<(Array1<f64>, Array1<f64>)>,
    naive_relu_masks: Vec<(Array1<f64>, Array1<f64>)>,
    // symbolic tape
    sym_inputs: Vec<(Array2<f64>, Array2<f64>)>,
    relu_plans: Vec<Vec<ReluPhase>>,
    /// Frozen box corners for the final min (true class) and max (other
    /// class) concretizations.
    sel_lo: Array1<f64>,
    sel_hi: Array1<f64>,
}

/// Worst-case pseudo-logits over a region: the true class at its lower
/// bound, the other class at its upper bound. `RobustPass::backward`
/// yields parameter gradients with the relaxation plan held constant.
pub fn robust_forward(
    model: &MlpModel,
    region: &IntervalRegion,
    true_class: usize,
    method: BoundMethod,
) -> Result<RobustPass> {
    model.check_input(region.dim())?;
    let (xlo, xhi) = region_box(region);
    let pos_masks: Vec<Array2<f64>> = model
        .layers
        .iter()
        .map(|l| l.weights.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }))
        .collect();
    match method {
        BoundMethod::Naive => {
            let mut lo = xlo.clone();
            let mut hi = xhi.clone();
            let mut naive_inputs = Vec::new();
            let mut naive_relu_masks = Vec::new();
            let n_layers = model.layers.len();
            for (i, layer) in model.layers.iter().enumerate() {
                naive_inputs.push((lo.clone(), hi.clone()));
                let (wpos, wneg) = split_signs(&layer.weights);
                let new_lo = wpos.dot(&lo) + wneg.dot(&hi) + &layer.bias;
                let new_hi = wpos.dot(&hi) + wneg.dot(&lo) + &layer.bias;
                lo = new_lo;
                hi = new_hi;
                if i + 1 < n_layers {
                    naive_relu_masks.push((
                        lo.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                        hi.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                    ));
                    lo.mapv_inplace(|v| v.max(0.0));
                    hi.mapv_inplace(|v| v.max(0.0));
                }
            }
            let other = 1 - true_class;
            let mut logits = Array1::zeros(2);
            logits[true_class] = lo[true_class];
            logits[other] = hi[other];
            Ok(RobustPass {
                method,
                true_class,
                logits,
                xlo,
                xhi,
                pos_masks,
                naive_inputs,
                naive_relu_masks,
                sym_inputs: Vec::new(),
                relu_plans: Vec::new(),
                sel_lo: Array1::zeros(0),
                sel_hi: Array1::zeros(0),
            })
        }
        BoundMethod::Symbolic => {
            let d = region.dim();
            let mut expr = Array2::zeros((d, d + 1));
            for i in 0..d {
                expr[(i, i)] = 1.0;
            }
            let mut lower = expr.clone();
            let mut upper = expr;
            let mut sym_inputs = Vec::new();
            let mut relu_plans = Vec::new();
            let n_layers = model.layers.len();
            for (li, layer) in model.layers.iter().enumerate() {
                sym_inputs.push((lower.clone(), upper.clone()));
                let (wpos, wneg) = split_signs(&layer.weights);
                let mut new_lower = wpos.dot(&lower) + wneg.dot(&upper);
                let mut new_upper = wpos.dot(&upper) + wneg.dot(&lower);
                let dcol = new_lower.ncols() - 1;
                {
                    let mut lc = new_lower.column_mut(dcol);
                    lc += &layer.bias;
                    let mut uc = new_upper.column_mut(dcol);
                    uc += &layer.bias;
                }
                lower = new_lower;
                upper = new_upper;
                if li + 1 < n_layers {
                    let c_lo = concretize_min(&lower, &xlo, &xhi);
                    let c_hi = concretize_max(&upper, &xlo, &xhi);
                    let mut plan = Vec::with_capacity(c_lo.len());
                    for i in 0..c_lo.len() {
                        let (l, u) = (c_lo[i], c_hi[i]);
                        if l >= 0.0 {
                            plan.push(ReluPhase::Active);
                        } else if u <= 0.0 {
                            plan.push(ReluPhase::Dead);
                            lower.row_mut(i).fill(0.0);
                            upper.row_mut(i).fill(0.0);
                        } else {
                            let lambda = u / (u - l);
                            let shift = -lambda * l;
                            plan.push(ReluPhase::Crossing { lambda, shift });
                            upper.row_mut(i).mapv_inplace(|v| lambda * v);
                            upper[(i, dcol)] += shift;
                            lower.row_mut(i).mapv_inplace(|v| lambda * v);
                        }
                    }
                    relu_plans.push(plan);
                }
            }
            let other = 1 - true_class;
            // Frozen corner selections for the final concretization.
            let lo_row = lower.row(true_class);
            let up_row = upper.row(other);
            let sel_lo = Array1::from_iter(
                (0..d).map(|j| if lo_row[j] > 0.0 { xlo[j] } else { xhi[j] }),
            );
            let sel_hi = Array1::from_iter(
                (0..d).map(|j| if up_row[j] > 0.0 { xhi[j] } else { xlo[j] }),
            );
            let z_true = lo_row
                .slice(ndarray::s![..d])
                .dot(&sel_lo)
                + lo_row[d];
            let z_other = up_row
                .slice(ndarray::s![..d])
                .dot(&sel_hi)
                + up_row[d];
            let mut logits = Array1::zeros(2);
            logits[true_class] = z_true;
            logits[other] = z_other;
            Ok(RobustPass {
                method,
                true_class,
                logits,
                xlo,
                xhi,
                pos_masks,
                naive_inputs: Vec::new(),
                naive_relu_masks: Vec::new(),
                sym_inputs,
                relu_plans,
                sel_lo,
                sel_hi,
            })
        }
    }
}

impl RobustPass {
    pub fn logits(&self) -> &Array1<f64> {
        &self.logits
    }

    pub fn method(&self) -> BoundMethod {
        self.method
    }

    /// Parameter gradients of the worst-case logits contracted with
    /// `dlogits`, with the relaxation plan frozen.
    pub fn backward(&self, model: &MlpModel, dlogits: &Array1<f64>) -> Gradients {
        match self.method {
            BoundMethod::Naive => self.backward_naive(model, dlogits),
            BoundMethod::Symbolic => self.backward_symbolic(model, dlogits),
        }
    }

    fn backward_naive(&self, model: &MlpModel, dlogits: &Array1<f64>) -> Gradients {
        let n_layers = model.layers.len();
        let other = 1 - self.true_class;
        let out_dim = model.output_dim();
        let mut glo = Array1::zeros(out_dim);
        let mut ghi = Array1::zeros(out_dim);
        glo[self.true_class] = dlogits[self.true_class];
        ghi[other] = dlogits[other];
        let mut grads = Gradients::zeros_like(model);
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                let (mask_lo, mask_hi) = &self.naive_relu_masks[l];
                glo *= mask_lo;
                ghi *= mask_hi;
            }
            let (lo_in, hi_in) = &self.naive_inputs[l];
            let pos = &self.pos_masks[l];
            let glo_col = glo.view().insert_axis(Axis(1));
            let ghi_col = ghi.view().insert_axis(Axis(1));
            let lo_row = lo_in.view().insert_axis(Axis(0));
            let hi_row = hi_in.view().insert_axis(Axis(0));
            let a = glo_col.dot(&lo_row) + ghi_col.dot(&hi_row);
            let b = glo_col.dot(&hi_row) + ghi_col.dot(&lo_row);
            grads.weights[l] = pos * &a + (1.0 - pos) * &b;
            grads.biases[l] = &glo + &ghi;
            let w = &model.layers[l].weights;
            let wpos = pos * w;
            let wneg = (1.0 - pos) * w;
            let new_glo = wpos.t().dot(&glo) + wneg.t().dot(&ghi);
            let new_ghi = wpos.t().dot(&ghi) + wneg.t().dot(&glo);
            glo = new_glo;
            ghi = new_ghi;
        }
        grads
    }

    fn backward_symbolic(&self, model: &MlpModel, dlogits: &Array1<f64>) -> Gradients {
        let n_layers = model.layers.len();
        let other = 1 - self.true_class;
        let d = self.xlo.len();
        let out_dim = model.output_dim();
        // Adjoints of the final expression matrices.
        let mut g_lower = Array2::zeros((out_dim, d + 1));
        let mut g_upper = Array2::zeros((out_dim, d + 1));
        for j in 0..d {
            g_lower[(self.true_class, j)] = dlogits[self.true_class] * self.sel_lo[j];
            g_upper[(other, j)] = dlogits[other] * self.sel_hi[j];
        }
        g_lower[(self.true_class, d)] = dlogits[self.true_class];
        g_upper[(other, d)] = dlogits[other];
        let mut grads = Gradients::zeros_like(model);
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                for (i, phase) in self.relu_plans[l].iter().enumerate() {
                    match phase {
                        ReluPhase::Active => {}
                        ReluPhase::Dead => {
                            g_lower.row_mut(i).fill(0.0);
                            g_upper.row_mut(i).fill(0.0);
                        }
                        ReluPhase::Crossing { lambda, .. } => {
                            g_lower.row_mut(i).mapv_inplace(|v| lambda * v);
                            g_upper.row_mut(i).mapv_inplace(|v| lambda * v);
                        }
                    }
                }
            }
            let (lo_in, up_in) = &self.sym_inputs[l];
            let pos = &self.pos_masks[l];
            let a = g_lower.dot(&lo_in.t()) + g_upper.dot(&up_in.t());
            let b = g_lower.dot(&up_in.t()) + g_upper.dot(&lo_in.t());
            grads.weights[l] = pos * &a + (1.0 - pos) * &b;
            grads.biases[l] = &g_lower.column(d) + &g_upper.column(d);
            let w = &model.layers[l].weights;
            let wpos = pos * w;
            let wneg = (1.0 - pos) * w;
            let new_g_lower = wpos.t().dot(&g_lower) + wneg.t().dot(&g_upper);
            let new_g_upper = wpos.t().dot(&g_upper) + wneg.t().dot(&g_lower);
            g_lower = new_g_lower;
            g_upper = new_g_upper;
        }
        grads
    }

    /// Re-evaluates the worst-case logits for (possibly perturbed)
    /// parameters under this pass's frozen plan. This is the function the
    /// gradients of `backward` differentiate; finite differences of it
    /// validate them.
    pub fn eval_with_model(&self, model: &MlpModel) -> Array1<f64> {
        let n_layers = model.layers.len();
        let other = 1 - self.true_class;
        match self.method {
            BoundMethod::Naive => {
                let mut lo = self.xlo.clone();
                let mut hi = self.xhi.clone();
                for (l, layer) in model.layers.iter().enumerate() {
                    let pos = &self.pos_masks[l];
                    let wpos = pos * &layer.weights;
                    let wneg = (1.0 - pos) * &layer.weights;
                    let new_lo = wpos.dot(&lo) + wneg.dot(&hi) + &layer.bias;
                    let new_hi = wpos.dot(&hi) + wneg.dot(&lo) + &layer.bias;
                    lo = new_lo;
                    hi = new_hi;
                    if l + 1 < n_layers {
                        let (mask_lo, mask_hi) = &self.naive_relu_masks[l];
                        lo *= mask_lo;
                        hi *= mask_hi;
                    }
                }
                let mut logits = Array1::zeros(2);
                logits[self.true_class] = lo[self.true_class];
                logits[other] = hi[other];
                logits
            }
            BoundMethod::Symbolic => {
                let d = self.xlo.len();
                let mut expr = Array2::zeros((d, d + 1));
                for i in 0..d {
                    expr[(i, i)] = 1.0;
                }
                let mut lower = expr.clone();
                let mut upper = expr;
                for (l, layer) in model.layers.iter().enumerate() {
                    let pos = &self.pos_masks[l];
                    let wpos = pos * &layer.weights;
                    let wneg = (1.0 - pos) * &layer.weights;
                    let mut new_lower = wpos.dot(&lower) + wneg.dot(&upper);
                    let mut new_upper = wpos.dot(&upper) + wneg.dot(&lower);
                    let dcol = new_lower.ncols() - 1;
                    {
                        let mut lc = new_lower.column_mut(dcol);
                        lc += &layer.bias;
                        let mut uc = new_upper.column_mut(dcol);
                        uc += &layer.bias;
                    }
                    lower = new_lower;
                    upper = new_upper;
                    if l + 1 < n_layers {
                        let dcol = lower.ncols() - 1;
                        for (i, phase) in self.relu_plans[l].iter().enumerate() {
                            match phase {
                                ReluPhase::Active => {}
                                ReluPhase::Dead => {
                                    lower.row_mut(i).fill(0.0);
                                    upper.row_mut(i).fill(0.0);
                                }
                                ReluPhase::Crossing { lambda, shift } => {
                                    upper.row_mut(i).mapv_inplace(|v| lambda * v);
                                    upper[(i, dcol)] += shift;
                                    lower.row_mut(i).mapv_inplace(|v| lambda * v);
                                }
                            }
                        }
                    }
                }
                let lo_row = lower.row(self.true_class);
                let up_row = upper.row(other);
                let z_true = lo_row.slice(ndarray::s![..d]).dot(&self.sel_lo) + lo_row[d];
                let z_other = up_row.slice(ndarray::s![..d]).dot(&self.sel_hi) + up_row[d];
                let mut logits = Array1::zeros(2);
                logits[self.true_class] = z_true;
                logits[other] = z_other;
                logits
            }
        }
    }
}

/// Convenience wrapper: the worst-case pseudo-logit vector only.
pub fn worst_case_logits(
    model: &MlpModel,
    region: &IntervalRegion,
    true_class: usize,
    method: BoundMethod,
) -> Result<Array1<f64>> {
    Ok(robust_forward(model, region, true_class, method)?
        .logits()
        .clone())
}
