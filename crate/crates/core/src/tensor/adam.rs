use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let ok =
            self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TensorError::Argument {
                op: "adam",
                detail: format!("invalid hyperparameters {self:?}"),
            })
        }
    }
}

/// First/second moment estimates for a fixed list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, hyper: &AdamHyper) -> Result<()> {
    hyper.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::Shape {
            op: "adam",
            detail: format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(TensorError::Shape {
                op: "adam",
                detail: format!("param {:?}, grad {:?}, moment {:?}", p.shape(), g.shape(), m.shape()),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let pd = p.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = hyper.beta1 * md[i] + (1.0 - hyper.beta1) * gi;
            vd[i] = hyper.beta2 * vd[i] + (1.0 - hyper.beta2) * gi * gi;
            let m_hat = md[i] / c1;
            let v_hat = vd[i] / c2;
            pd[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = Tensor::from_fn(&[3, 2], |i| i as f64 - 2.0);
        let before = p.clone();
        let mut state = AdamState::new([&p]);
        for _ in 0..5 {
            adam_step(
                &mut [&mut p],
                &[Tensor::zeros(&[3, 2])],
                &mut state,
                &AdamHyper::default(),
            )
            .unwrap();
        }
        assert_eq!(p, before);
        assert!(state.m[0].data().iter().chain(state.v[0].data()).all(|&v| v == 0.0));
        assert_eq!(state.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let hyper = AdamHyper::default();
        let mut p = Tensor::zeros(&[4]);
        let g = Tensor::new(vec![4], vec![3.0, -0.5, 1e3, -2e-2]).unwrap();
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], std::slice::from_ref(&g), &mut state, &hyper).unwrap();
        for (pi, gi) in p.data().iter().zip(g.data()) {
            assert!((pi.abs() - hyper.lr).abs() < 1e-6 * hyper.lr);
            assert_eq!(pi.signum(), -gi.signum());
        }
    }

    #[test]
    fn descends_a_quadratic() {
        let hyper = AdamHyper {
            lr: 0.01,
            ..AdamHyper::default()
        };
        let c = Tensor::new(vec![3], vec![0.5, -0.3, 0.2]).unwrap();
        let mut p = Tensor::zeros(&[3]);
        let mut state = AdamState::new([&p]);
        let dist = |p: &Tensor| p.max_abs_diff(&c);
        let start = dist(&p);
        for _ in 0..100 {
            let g = Tensor::from_fn(&[3], |i| 2.0 * (p.data()[i] - c.data()[i]));
            adam_step(&mut [&mut p], &[g], &mut state, &hyper).unwrap();
        }
        assert!(dist(&p) < start);
    }

    #[test]
    fn rejects_shape_mismatch_and_bad_hyper() {
        let mut p = Tensor::zeros(&[2]);
        let mut state = AdamState::new([&p]);
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut state, &AdamHyper::default()).is_err());
        let bad = AdamHyper {
            beta1: 1.0,
            ..AdamHyper::default()
        };
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut state, &bad).is_err());
        assert_eq!(state.step, 0);
    }
}
