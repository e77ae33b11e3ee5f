use crate::error::{Error, Result};
use crate::linalg::ParamSet;
use crate::model::ModelParams;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P = ModelParams> {
    pub m: P,
    pub v: P,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<P: ParamSet + Clone> AdamState<P> {
    /// Fresh state from an all-zero tensor set of the right shape.
    pub fn from_zeros(zeros: P) -> Self {
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

impl AdamState<ModelParams> {
    pub fn new(params: &ModelParams) -> Self {
        Self::from_zeros(params.zeros_like())
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort the step
/// before anything is modified.
pub fn adam_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut AdamState<P>, lr: f64) -> Result<()> {
    let count = params.tensor_count();
    if grads.tensor_count() != count || state.m.tensor_count() != count || state.v.tensor_count() != count {
        return Err(Error::Shape("gradient/state tensors do not mirror parameters".into()));
    }
    for k in 0..count {
        let (name, g) = grads.tensor(k);
        let n = params.tensor(k).1.len();
        if g.len() != n || state.m.tensor(k).1.len() != n || state.v.tensor(k).1.len() != n {
            return Err(Error::Shape(format!("tensor {name} has mismatched lengths")));
        }
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in {name}[{pos}]")));
        }
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for k in 0..count {
        let g = grads.tensor(k).1;
        for (mi, gi) in state.m.tensor_mut(k).iter_mut().zip(g) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
        for (vi, gi) in state.v.tensor_mut(k).iter_mut().zip(g) {
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        }
        let m = state.m.tensor(k).1;
        let v = state.v.tensor(k).1;
        for ((p, mi), vi) in params.tensor_mut(k).iter_mut().zip(m).zip(v) {
            *p -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelDims};

    fn dims() -> ModelDims {
        ModelDims {
            n_users: 2,
            n_items: 3,
            d: 3,
            d_img: 2,
            d_txt: 2,
            h: 4,
        }
    }

    fn constant_grads(p: &ModelParams, c: f64) -> ModelParams {
        let mut g = p.zeros_like();
        for k in 0..g.tensor_count() {
            g.tensor_mut(k).fill(c);
        }
        g
    }

    #[test]
    fn first_step_moves_by_lr() {
        for c in [1e-3, 0.7, -50.0] {
            let p0 = init_params(dims(), 1).unwrap();
            let mut p = p0.clone();
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &constant_grads(&p0, c), &mut s, 0.01).unwrap();
            let expect = 0.01 * c.abs() / (c.abs() + ADAM_EPS);
            for k in 0..p.tensor_count() {
                for (a, b) in p.tensor(k).1.iter().zip(p0.tensor(k).1) {
                    assert!(((a - b).abs() - expect).abs() < 1e-12);
                    assert_eq!((b - a).signum(), c.signum());
                }
            }
            assert_eq!(s.t, 1);
        }
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let p0 = init_params(dims(), 2).unwrap();
        let mut p = p0.clone();
        let mut s = AdamState::new(&p);
        let zero = p0.zeros_like();
        for _ in 0..50 {
            adam_step(&mut p, &zero, &mut s, 0.1).unwrap();
        }
        assert_eq!(p, p0);
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let p0 = init_params(dims(), 4).unwrap();
        let mut p = p0.clone();
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &constant_grads(&p0, 3.0), &mut s, 0.0).unwrap();
        }
        assert_eq!(p, p0);
        assert_eq!(s.t, 5);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let p0 = init_params(dims(), 3).unwrap();
        let mut p = p0.clone();
        let mut s = AdamState::new(&p);
        let mut g = p0.zeros_like();
        g.gate_b[1] = f64::NAN;
        assert!(matches!(adam_step(&mut p, &g, &mut s, 0.1), Err(Error::Numeric(_))));
        assert_eq!(p, p0);
        assert_eq!(s.t, 0);
    }

    /// Textbook scalar Adam, written independently of the tensor version.
    fn scalar_adam(theta0: f64, lr: f64, steps: usize) -> f64 {
        let (mut th, mut m, mut v) = (theta0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * th;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            th -= lr * mh / (vh.sqrt() + 1e-8);
        }
        th
    }

    #[test]
    fn minimizes_quadratic() {
        let mut theta = vec![1.0];
        let mut s = AdamState::from_zeros(vec![0.0]);
        for _ in 0..100 {
            let g = vec![2.0 * theta[0]];
            adam_step(&mut theta, &g, &mut s, 0.1).unwrap();
        }
        assert!(theta[0].abs() < 0.05, "{}", theta[0]);
        assert!((theta[0] - scalar_adam(1.0, 0.1, 100)).abs() < 1e-12);
    }
}
