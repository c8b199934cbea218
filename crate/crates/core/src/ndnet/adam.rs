use super::params::Parameters;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam moment accumulators, one buffer per parameter segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    step: u64,
    first_moment: Vec<Vec<S>>,
    second_moment: Vec<Vec<S>>,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
}

impl<S: Scalar> AdamState<S> {
    pub fn new<P: Parameters<S> + ?Sized>(params: &P) -> Self {
        let zeros: Vec<Vec<S>> = params
            .segments()
            .iter()
            .map(|s| vec![S::zero(); s.len()])
            .collect();
        Self {
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            beta1: S::lit(ADAM_BETA1),
            beta2: S::lit(ADAM_BETA2),
            epsilon: S::lit(ADAM_EPSILON),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Gradients are checked for finiteness before anything is mutated; the
/// error names the offending segment and element.
pub fn adam_step<S: Scalar, P: Parameters<S> + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<S>,
    lr: S,
) -> Result<()> {
    if !(lr > S::zero()) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    let g_segs = grads.segments();
    if g_segs.len() != state.first_moment.len() {
        return shape_err(format!(
            "{} gradient segments, optimizer state has {}",
            g_segs.len(),
            state.first_moment.len()
        ));
    }
    for (i, (g, m)) in g_segs.iter().zip(&state.first_moment).enumerate() {
        if g.len() != m.len() {
            return shape_err(format!(
                "gradient segment {i} has {} entries, optimizer state has {}",
                g.len(),
                m.len()
            ));
        }
    }
    for (i, g) in g_segs.iter().enumerate() {
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            let name = grads.segment_names().swap_remove(i);
            return Err(Error::Numeric(format!(
                "non-finite gradient in {name}[{j}]: {}",
                g[j]
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = S::one() - b1.powi(t);
    let bc2 = S::one() - b2.powi(t);

    let mut p_segs = params.segments_mut();
    if p_segs.len() != g_segs.len() {
        return shape_err("parameter and gradient sets differ in segment count");
    }
    for (((p, g), m), v) in p_segs
        .iter_mut()
        .zip(&g_segs)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        if p.len() != g.len() {
            return shape_err("parameter and gradient segment lengths differ");
        }
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (S::one() - b1) * gj;
            v[j] = b2 * v[j] + (S::one() - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
