use kgtext_neuro::{Grads, ParamStore, Real};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("non-finite gradient at update {step}")]
pub struct NonFiniteGradient {
    pub step: u64,
}

/// Adam with bias correction. Defaults: beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(params: &ParamStore<F>, lr: F) -> Self {
        let zeros: Vec<Vec<F>> = params.data.iter().map(|t| vec![F::zero(); t.len()]).collect();
        Adam { lr, beta1: F::of(0.9), beta2: F::of(0.999), eps: F::of(1e-8), step: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies one update. A non-finite gradient leaves parameters and
    /// moments untouched.
    pub fn update(&mut self, params: &mut ParamStore<F>, grads: &Grads<F>) -> Result<(), NonFiniteGradient> {
        if !grads.is_finite() {
            return Err(NonFiniteGradient { step: self.step + 1 });
        }
        self.step += 1;
        let t = self.step as i32;
        let one = F::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        for (p, g) in grads.data.iter().enumerate() {
            let (m, v, w) = (&mut self.m[p], &mut self.v[p], &mut params.data[p]);
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (one - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (one - self.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                w[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
