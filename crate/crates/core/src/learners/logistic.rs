//! L2-penalised weighted logistic regression fitted by full-batch gradient
//! descent with a backtracking (Armijo) line search.

use crate::design::Matrix;

/// Minimisable smooth function of a parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, params: &[f64]) -> f64;
    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> f64;
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted mean log-loss plus `l2/2 * |beta|^2` (intercept unpenalised).
/// Parameter layout: `[intercept, beta_0, .., beta_{p-1}]`.
pub struct LogisticObjective<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    rows: &'a [usize],
    weights: Vec<f64>,
    total_weight: f64,
    l2: f64,
    center: Vec<f64>,
}

impl<'a> LogisticObjective<'a> {
    /// `weights[k]` belongs to `rows[k]`; rows may repeat.
    pub fn new(x: &'a Matrix, y: &'a [u8], rows: &'a [usize], weights: Vec<f64>, l2: f64) -> Self {
        assert_eq!(rows.len(), weights.len());
        let total_weight = weights.iter().sum();
        LogisticObjective {
            x,
            y,
            rows,
            weights,
            total_weight,
            l2,
            center: vec![0.0; x.cols()],
        }
    }

    /// Optimise over features shifted by their weighted means. The penalty
    /// does not touch the intercept, so the optimum is the same model; only
    /// the conditioning improves. Map results back with `uncentered`.
    pub fn centered(mut self) -> Self {
        let mut c = vec![0.0; self.x.cols()];
        for (&r, &w) in self.rows.iter().zip(&self.weights) {
            for (m, &v) in c.iter_mut().zip(self.x.row(r)) {
                *m += w * v;
            }
        }
        c.iter_mut().for_each(|m| *m /= self.total_weight);
        self.center = c;
        self
    }

    /// Converts parameters of this objective to `[intercept, beta..]` on the
    /// raw feature scale.
    pub fn uncentered(&self, params: &[f64]) -> Vec<f64> {
        let mut out = params.to_vec();
        out[0] -= params[1..].iter().zip(&self.center).map(|(b, c)| b * c).sum::<f64>();
        out
    }

    #[inline]
    fn margin(&self, params: &[f64], row: usize) -> f64 {
        params[0]
            + self
                .x
                .row(row)
                .iter()
                .zip(&self.center)
                .zip(&params[1..])
                .map(|((a, c), b)| (a - c) * b)
                .sum::<f64>()
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        0.5 * self.l2 * params[1..].iter().map(|b| b * b).sum::<f64>()
    }
}

impl Objective for LogisticObjective<'_> {
    fn dim(&self) -> usize {
        self.x.cols() + 1
    }

    fn value(&self, params: &[f64]) -> f64 {
        let mut loss = 0.0;
        for (&r, &w) in self.rows.iter().zip(&self.weights) {
            let z = self.margin(params, r);
            loss += w * (softplus(z) - f64::from(self.y[r]) * z);
        }
        loss / self.total_weight + self.penalty(params)
    }

    fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (&r, &w) in self.rows.iter().zip(&self.weights) {
            let z = self.margin(params, r);
            let y = f64::from(self.y[r]);
            // One exponential serves both the loss and the probability.
            let e = (-z.abs()).exp();
            let (sp, p) = if z >= 0.0 {
                (z + e.ln_1p(), 1.0 / (1.0 + e))
            } else {
                (e.ln_1p(), e / (1.0 + e))
            };
            loss += w * (sp - y * z);
            let resid = w * (p - y);
            grad[0] += resid;
            for ((g, &xv), c) in grad[1..].iter_mut().zip(self.x.row(r)).zip(&self.center) {
                *g += resid * (xv - c);
            }
        }
        for g in grad.iter_mut() {
            *g /= self.total_weight;
        }
        for (g, b) in grad[1..].iter_mut().zip(&params[1..]) {
            *g += self.l2 * b;
        }
        loss / self.total_weight + self.penalty(params)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DescentSettings {
    pub max_iter: usize,
    /// Converged when the gradient max-norm drops below this.
    pub tol: f64,
}

impl Default for DescentSettings {
    fn default() -> Self {
        DescentSettings {
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DescentOutcome {
    pub params: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_max_norm: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, g| m.max(g.abs()))
}

/// Gradient descent. Each trial step starts from the Barzilai-Borwein
/// length and halves until a non-monotone Armijo condition holds: the
/// reference value is the largest of the last few accepted values, which
/// lets BB steps through without cutting them back.
pub fn minimize(obj: &impl Objective, start: Vec<f64>, settings: DescentSettings) -> DescentOutcome {
    const ARMIJO: f64 = 1e-4;
    const MEMORY: usize = 10;
    let n = obj.dim();
    let mut params = start;
    let mut grad = vec![0.0; n];
    let mut value = obj.value_and_gradient(&params, &mut grad);
    let mut step = 1.0;
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut history = std::collections::VecDeque::from([value]);

    for iter in 0..settings.max_iter {
        let gnorm = max_norm(&grad);
        if gnorm < settings.tol {
            return DescentOutcome {
                params,
                value,
                iterations: iter,
                converged: true,
                grad_max_norm: gnorm,
            };
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..n {
                trial[k] = params[k] - step * grad[k];
            }
            let v = obj.value_and_gradient(&trial, &mut trial_grad);
            if v.is_finite() && v <= reference - ARMIJO * step * g2 {
                // Barzilai-Borwein length for the next trial.
                let (mut ss, mut sy) = (0.0, 0.0);
                for k in 0..n {
                    let s = trial[k] - params[k];
                    ss += s * s;
                    sy += s * (trial_grad[k] - grad[k]);
                }
                std::mem::swap(&mut params, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                value = v;
                if history.len() == MEMORY {
                    history.pop_front();
                }
                history.push_back(v);
                step = if sy > 0.0 {
                    (ss / sy).clamp(1e-10, 1e10)
                } else {
                    step * 2.0
                };
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            let gnorm = max_norm(&grad);
            return DescentOutcome {
                params,
                value,
                iterations: iter,
                converged: gnorm < settings.tol,
                grad_max_norm: gnorm,
            };
        }
    }
    let gnorm = max_norm(&grad);
    DescentOutcome {
        params,
        value,
        iterations: settings.max_iter,
        converged: gnorm < settings.tol,
        grad_max_norm: gnorm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (Matrix, Vec<u8>, Vec<usize>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
        let y = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
        let w = (0..n).map(|_| 0.5 + rng.random::<f64>() * 3.0).collect();
        (Matrix::from_rows(&rows), y, (0..n).collect(), w)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y, rows, w) = random_problem(3, 60, 4);
        let obj = LogisticObjective::new(&x, &y, &rows, w, 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..20 {
            let p: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut g = vec![0.0; obj.dim()];
            obj.value_and_gradient(&p, &mut g);
            let mut fd = vec![0.0; obj.dim()];
            for k in 0..obj.dim() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[k] += h;
                b[k] -= h;
                fd[k] = (obj.value(&a) - obj.value(&b)) / (2.0 * h);
            }
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
            assert!(num / den < 1e-4, "relative error {}", num / den);
        }
    }

    #[test]
    fn descent_reduces_objective_and_converges() {
        let (x, y, rows, w) = random_problem(5, 200, 3);
        let obj = LogisticObjective::new(&x, &y, &rows, w, 1e-2);
        let start = vec![0.0; obj.dim()];
        let v0 = obj.value(&start);
        let out = minimize(&obj, start, DescentSettings::default());
        assert!(out.value < v0);
        assert!(out.converged, "grad {}", out.grad_max_norm);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(softplus(800.0).is_finite());
    }
}
