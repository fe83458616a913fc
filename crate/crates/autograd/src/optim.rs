//! Adam with bias correction.

use crate::nn::Params;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: Params,
    pub second_moment: Params,
}

impl Adam {
    pub fn new(params: &Params, lr: f64, betas: (f64, f64)) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// Applies one update. Parameters absent from `grads` are left untouched.
    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let Some(g) = grads.get(&name) else { continue };
            if !self.first_moment.contains(&name) {
                self.first_moment.set(name.clone(), g.mapv(|_| 0.0));
                self.second_moment.set(name.clone(), g.mapv(|_| 0.0));
            }
            let m = self.first_moment.get_mut(&name).unwrap();
            m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            let m = m.clone();
            let v = self.second_moment.get_mut(&name).unwrap();
            v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let p = params.get_mut(&name).unwrap();
            ndarray::Zip::from(p).and(&m).and(&*v).for_each(|p, &m, &v| {
                *p -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
            });
        }
    }
}
