// SPDX-License-Identifier: Apache-2.0

//! Adam with bias correction.

use crate::error::Result;
use crate::model::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Adam {
    learning_rate: f64,
    step: i32,
    m: ParamStore<f32>,
    v: ParamStore<f32>,
}

impl Adam {
    pub fn new(params: &ParamStore<f32>, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update. Arrays absent from `grads` are left untouched (their
    /// moments still decay, as if the gradient were zero).
    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &ParamStore<f32>) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let lr = self.learning_rate;
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).ok();
            let m = self.m.get_mut(name)?.data_mut();
            let v = self.v.get_mut(name)?.data_mut();
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g.data()[i] as f64);
                let mi = BETA1 * m[i] as f64 + (1.0 - BETA1) * gi;
                let vi = BETA2 * v[i] as f64 + (1.0 - BETA2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
                let w = &mut p.data_mut()[i];
                *w = (*w as f64 - update) as f32;
            }
        }
        Ok(())
    }
}
