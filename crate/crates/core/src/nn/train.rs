use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Samples};
use crate::error::{Error, Result};

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

/// Multiply the learning rate by `factor` every `every` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every: usize,
    pub factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub optimizer: Optimizer,
    #[serde(default)]
    pub schedule: Option<StepDecay>,
}

impl OptimizerConfig {
    pub fn new(optimizer: Optimizer) -> Self {
        OptimizerConfig {
            optimizer,
            schedule: None,
        }
    }

    pub fn with_decay(mut self, every: usize, factor: f64) -> Self {
        self.schedule = Some(StepDecay { every, factor });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let lr = self.optimizer.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            problems.push(format!("learning rate must be positive, got {lr}"));
        }
        if let Optimizer::Adam { beta1, beta2, eps, .. } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                problems.push(format!("adam betas must lie in [0, 1), got {beta1}, {beta2}"));
            }
            if !(eps > 0.0) {
                problems.push(format!("adam eps must be positive, got {eps}"));
            }
        }
        if let Some(s) = self.schedule {
            if s.every == 0 {
                problems.push("decay interval must be at least one epoch".into());
            }
            if !(s.factor > 0.0 && s.factor <= 1.0) {
                problems.push(format!("decay factor must lie in (0, 1], got {}", s.factor));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Learning rate used for the update that follows epoch `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let base = self.optimizer.lr();
        match self.schedule {
            Some(s) => base * s.factor.powi((epoch / s.every) as i32),
            None => base,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called once per epoch, before that epoch's update, with the model and its
/// predictions on the training inputs.
pub trait Observer {
    fn observe(&mut self, epoch: usize, model: &Mlp, predictions: &[f64]) -> Control;
}

impl Observer for () {
    fn observe(&mut self, _: usize, _: &Mlp, _: &[f64]) -> Control {
        Control::Continue
    }
}

impl<F: FnMut(usize, &Mlp, &[f64]) -> Control> Observer for F {
    fn observe(&mut self, epoch: usize, model: &Mlp, predictions: &[f64]) -> Control {
        self(epoch, model, predictions)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Loss before each update; `loss[0]` is the initial loss.
    pub loss: Vec<f64>,
    pub updates: usize,
    pub diverged: bool,
    pub stopped_early: bool,
    pub seed: Option<u64>,
}

impl TrainingTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss.last().copied()
    }
}

/// Full-batch training: one update per epoch, `epochs` updates in total.
pub fn train(
    model: &mut Mlp,
    data: &Samples,
    opt: &OptimizerConfig,
    epochs: usize,
    observer: &mut dyn Observer,
) -> Result<TrainingTrace> {
    opt.validate()?;
    let np = model.num_params();
    let mut grad = vec![0.0; np];
    let mut preds = vec![0.0; data.len()];
    let mut m1 = vec![0.0; np];
    let mut m2 = vec![0.0; np];
    let mut trace = TrainingTrace {
        loss: Vec::with_capacity(epochs + 1),
        updates: 0,
        diverged: false,
        stopped_early: false,
        seed: None,
    };
    for epoch in 0..=epochs {
        let loss = model.loss_and_gradient(data, &mut grad, &mut preds)?;
        if !loss.is_finite() {
            trace.diverged = true;
            break;
        }
        trace.loss.push(loss);
        if observer.observe(epoch, model, &preds) == Control::Stop {
            trace.stopped_early = epoch < epochs;
            break;
        }
        if epoch == epochs {
            break;
        }
        let lr = opt.lr_at(epoch);
        let params = model.params_mut();
        match opt.optimizer {
            Optimizer::Sgd { .. } => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps, .. } => {
                let t = (epoch + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..np {
                    let g = grad[i];
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
                    let mhat = m1[i] / c1;
                    let vhat = m2[i] / c2;
                    params[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
        trace.updates += 1;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::Activation;
    use crate::nn::mlp::InitScheme;

    fn toy() -> (Mlp, Samples) {
        let m = Mlp::initialized(&[1, 8, 1], Activation::Tanh, InitScheme::FanInUniform, 2).unwrap();
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 10.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin()).collect();
        (m, Samples::new(1, xs, ys).unwrap())
    }

    #[test]
    fn zero_epochs_records_initial_loss_only() {
        let (mut m, d) = toy();
        let before = m.clone();
        let t = train(&mut m, &d, &OptimizerConfig::new(Optimizer::adam(1e-3)), 0, &mut ()).unwrap();
        assert_eq!(t.loss.len(), 1);
        assert_eq!(t.updates, 0);
        assert_eq!(m, before);
    }

    #[test]
    fn sgd_on_a_convex_slice_decreases() {
        // Only the output bias moves when every hidden weight is zero.
        let mut m = Mlp::shallow(1, 1, Activation::Relu).unwrap();
        let d = Samples::new(1, vec![0.0, 1.0], vec![3.0, 3.0]).unwrap();
        let t = train(&mut m, &d, &OptimizerConfig::new(Optimizer::Sgd { lr: 0.1 }), 50, &mut ()).unwrap();
        assert!(t.loss.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn adam_first_step_moves_each_parameter_by_lr() {
        let (mut m, d) = toy();
        let before = m.params().to_vec();
        let g = m.backward(&d).unwrap();
        train(&mut m, &d, &OptimizerConfig::new(Optimizer::adam(1e-3)), 1, &mut ()).unwrap();
        for i in 0..before.len() {
            if g[i].abs() > 1e-6 {
                let step = before[i] - m.params()[i];
                assert!((step - 1e-3 * g[i].signum()).abs() < 1e-8, "param {i}");
            }
        }
    }

    #[test]
    fn step_decay_schedule() {
        let c = OptimizerConfig::new(Optimizer::Sgd { lr: 1.0 }).with_decay(1000, 0.5);
        assert_eq!(c.lr_at(0), 1.0);
        assert_eq!(c.lr_at(999), 1.0);
        assert_eq!(c.lr_at(1000), 0.5);
        assert_eq!(c.lr_at(2500), 0.25);
        let bad = OptimizerConfig::new(Optimizer::Sgd { lr: -1.0 }).with_decay(0, 2.0);
        match bad.validate().unwrap_err() {
            Error::Config(p) => assert_eq!(p.len(), 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn divergence_is_flagged_and_trace_kept() {
        let (mut m, d) = toy();
        let t = train(&mut m, &d, &OptimizerConfig::new(Optimizer::Sgd { lr: 1e6 }), 200, &mut ()).unwrap();
        assert!(t.diverged);
        assert!(t.loss.iter().all(|l| l.is_finite()));
        assert!(t.loss.len() < 201);
    }

    #[test]
    fn observer_can_stop_training() {
        let (mut m, d) = toy();
        let mut seen = Vec::new();
        let mut obs = |e: usize, _: &Mlp, p: &[f64]| {
            assert_eq!(p.len(), 20);
            seen.push(e);
            if e == 4 {
                Control::Stop
            } else {
                Control::Continue
            }
        };
        let t = train(&mut m, &d, &OptimizerConfig::new(Optimizer::adam(1e-2)), 100, &mut obs).unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert!(t.stopped_early);
        assert_eq!(t.updates, 4);
    }

    #[test]
    fn training_is_deterministic() {
        let (mut a, d) = toy();
        let mut b = a.clone();
        let opt = OptimizerConfig::new(Optimizer::adam(1e-2));
        let ta = train(&mut a, &d, &opt, 30, &mut ()).unwrap();
        let tb = train(&mut b, &d, &opt, 30, &mut ()).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);
    }
}
