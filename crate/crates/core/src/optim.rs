//! Adam-type updates `W ← W − α M / √V` with a first-moment EMA `M` and a
//! kind-specific second-moment statistic `V`.
//!
//! | kind       | β₁   | V                                   |
//! |------------|------|-------------------------------------|
//! | sgd        | 0    | 1                                   |
//! | heavy-ball | > 0  | 1                                   |
//! | amsgrad    | > 0  | max(V₋₁, β₂ V̂₋₁ + (1 − β₂) G²)      |
//! | adagrad    | > 0  | (1/t) Σ G²                          |
//! | adam       | > 0  | β₂ V₋₁ + (1 − β₂) G²                |
//!
//! For the adaptive kinds the update divides by `√(V + ε)`; sgd and
//! heavy-ball use `V ≡ 1` and skip `ε` entirely.

use std::fmt;
use std::str::FromStr;

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::model::{Gradient, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    HeavyBall,
    Adam,
    AmsGrad,
    AdaGrad,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Adam,
        OptimizerKind::HeavyBall,
        OptimizerKind::AmsGrad,
        OptimizerKind::AdaGrad,
        OptimizerKind::Sgd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::HeavyBall => "heavy-ball",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AmsGrad => "amsgrad",
            OptimizerKind::AdaGrad => "adagrad",
        }
    }

    /// Whether the kind has a second-moment statistic that uses β₂.
    pub fn uses_beta2(self) -> bool {
        matches!(self, OptimizerKind::Adam | OptimizerKind::AmsGrad)
    }

    pub fn is_adaptive(self) -> bool {
        !matches!(self, OptimizerKind::Sgd | OptimizerKind::HeavyBall)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "heavy-ball" | "heavyball" => Ok(OptimizerKind::HeavyBall),
            "adam" => Ok(OptimizerKind::Adam),
            "amsgrad" => Ok(OptimizerKind::AmsGrad),
            "adagrad" => Ok(OptimizerKind::AdaGrad),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added to `V` under the square root; realizes the lower bound ν_min².
    pub eps: f64,
    /// L2 coefficient added to the gradient by the model before `step`.
    pub weight_decay: f64,
    pub adam_bias_correction: bool,
}

impl OptimizerConfig {
    pub const DEFAULT_EPS: f64 = 1e-8;

    /// Defaults for `kind`: β₁ = 0.9 (0 for sgd), β₂ = 0.999, ε = 1e−8.
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: if kind == OptimizerKind::Sgd { 0.0 } else { 0.9 },
            beta2: 0.999,
            eps: Self::DEFAULT_EPS,
            weight_decay: 0.0,
            adam_bias_correction: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::Config(format!("beta1 must lie in [0, 1), got {}", self.beta1)));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!("beta2 must lie in [0, 1), got {}", self.beta2)));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config(format!("eps must be non-negative, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.kind == OptimizerKind::Sgd && self.beta1 != 0.0 {
            return Err(Error::Config("sgd requires beta1 = 0; use heavy-ball for momentum".into()));
        }
        Ok(())
    }
}

/// Accumulators paired with a [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    /// First moment `M_t`.
    pub m: Vec<Dense>,
    /// Second-moment statistic `V_t`; all ones for sgd and heavy-ball.
    pub v: Vec<Dense>,
    /// AMSGrad's EMA `V̂_t` before the running max.
    pub v_hat: Option<Vec<Dense>>,
    /// AdaGrad's running `Σ G_i²`.
    pub sq_sum: Option<Vec<Dense>>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &ModelParams) -> Self {
        let zeros = || params.weights().iter().map(|w| Dense::zeros(w.rows(), w.cols())).collect::<Vec<_>>();
        let v = if kind.is_adaptive() {
            zeros()
        } else {
            params.weights().iter().map(|w| Dense::from_fn(w.rows(), w.cols(), |_, _| 1.0)).collect()
        };
        Self {
            m: zeros(),
            v,
            v_hat: (kind == OptimizerKind::AmsGrad).then(zeros),
            sq_sum: (kind == OptimizerKind::AdaGrad).then(zeros),
            t: 0,
        }
    }
}

/// One optimizer update in place. Rejects non-finite gradients before
/// touching any state.
pub fn step(
    state: &mut OptimizerState,
    params: &mut ModelParams,
    grad: &Gradient,
    config: &OptimizerConfig,
) -> Result<()> {
    if grad.layers.len() != params.num_layers() || state.m.len() != params.num_layers() {
        return Err(Error::Dimension("gradient, state and parameters disagree on layer count".into()));
    }
    for (k, (g, w)) in grad.layers.iter().zip(params.weights()).enumerate() {
        if g.shape() != w.shape() || state.m[k].shape() != w.shape() {
            return Err(Error::Dimension(format!("layer {k} shapes disagree")));
        }
        if let Some(index) = g.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: k, index });
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let (b1, b2, eps, lr) = (config.beta1, config.beta2, config.eps, config.lr);
    let bias1 = 1.0 - b1.powf(t);
    let bias2 = 1.0 - b2.powf(t);

    for (k, g) in grad.layers.iter().enumerate() {
        let g = g.as_slice();
        let m = state.m[k].as_mut_slice();
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
        let v = state.v[k].as_mut_slice();
        match config.kind {
            OptimizerKind::Sgd | OptimizerKind::HeavyBall => {}
            OptimizerKind::Adam => {
                for (vi, &gi) in v.iter_mut().zip(g) {
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                }
            }
            OptimizerKind::AmsGrad => {
                let vh = state.v_hat.as_mut().expect("amsgrad state")[k].as_mut_slice();
                for ((vi, vhi), &gi) in v.iter_mut().zip(vh.iter_mut()).zip(g) {
                    *vhi = b2 * *vhi + (1.0 - b2) * gi * gi;
                    *vi = vi.max(*vhi);
                }
            }
            OptimizerKind::AdaGrad => {
                let s = state.sq_sum.as_mut().expect("adagrad state")[k].as_mut_slice();
                for ((vi, si), &gi) in v.iter_mut().zip(s.iter_mut()).zip(g) {
                    *si += gi * gi;
                    *vi = *si / t;
                }
            }
        }

        let w = params.weights_mut()[k].as_mut_slice();
        let m = state.m[k].as_slice();
        let v = state.v[k].as_slice();
        match config.kind {
            OptimizerKind::Sgd | OptimizerKind::HeavyBall => {
                for (wi, &mi) in w.iter_mut().zip(m) {
                    *wi -= lr * mi;
                }
            }
            OptimizerKind::Adam if config.adam_bias_correction => {
                for ((wi, &mi), &vi) in w.iter_mut().zip(m).zip(v) {
                    *wi -= lr * (mi / bias1) / (vi / bias2 + eps).sqrt();
                }
            }
            _ => {
                for ((wi, &mi), &vi) in w.iter_mut().zip(m).zip(v) {
                    *wi -= lr * mi / (vi + eps).sqrt();
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f64) -> ModelParams {
        ModelParams::new(vec![Dense::from_vec(1, 1, vec![w]).unwrap()]).unwrap()
    }

    fn grad(g: f64) -> Gradient {
        Gradient { layers: vec![Dense::from_vec(1, 1, vec![g]).unwrap()] }
    }

    fn run(cfg: &OptimizerConfig, w0: f64, gs: &[f64]) -> (ModelParams, OptimizerState) {
        let mut p = scalar(w0);
        let mut s = OptimizerState::new(cfg.kind, &p);
        for &g in gs {
            step(&mut s, &mut p, &grad(g), cfg).unwrap();
        }
        (p, s)
    }

    #[test]
    fn sgd_single_step() {
        let (p, _) = run(&OptimizerConfig::new(OptimizerKind::Sgd, 0.1), 1.0, &[2.0]);
        assert_eq!(p.get_flat(0), 1.0 - 0.1 * 2.0);
    }

    #[test]
    fn heavy_ball_recurrence() {
        let cfg = OptimizerConfig::new(OptimizerKind::HeavyBall, 1.0);
        let (p, s) = run(&cfg, 0.0, &[1.0]);
        assert!((s.m[0].get(0, 0) - 0.1).abs() < 1e-15);
        assert!((p.get_flat(0) + 0.1).abs() < 1e-15);
        let (p, s) = run(&cfg, 0.0, &[1.0, 1.0]);
        assert!((s.m[0].get(0, 0) - 0.19).abs() < 1e-15);
        assert!((p.get_flat(0) + 0.29).abs() < 1e-15);
    }

    #[test]
    fn amsgrad_never_decreases() {
        let cfg = OptimizerConfig::new(OptimizerKind::AmsGrad, 0.01);
        let (_, s1) = run(&cfg, 0.0, &[2.0]);
        let (_, s2) = run(&cfg, 0.0, &[2.0, 0.0]);
        assert_eq!(s2.v[0].get(0, 0), s1.v[0].get(0, 0));
        assert!(s2.v_hat.as_ref().unwrap()[0].get(0, 0) < s1.v[0].get(0, 0));
    }

    #[test]
    fn adagrad_running_mean() {
        let cfg = OptimizerConfig::new(OptimizerKind::AdaGrad, 0.01);
        let (_, s) = run(&cfg, 0.0, &[2.0, 1.0]);
        assert_eq!(s.v[0].get(0, 0), 2.5);
    }

    #[test]
    fn adam_first_step_without_correction() {
        let mut cfg = OptimizerConfig::new(OptimizerKind::Adam, 1.0);
        cfg.eps = 0.0;
        for g in [0.5, 3.0] {
            let (p, _) = run(&cfg, 0.0, &[g]);
            let expect = -0.1 / 0.001f64.sqrt();
            assert!((p.get_flat(0) - expect).abs() < 1e-12, "{}", p.get_flat(0));
            assert!((expect + 3.16228).abs() < 1e-5);
        }
        cfg.adam_bias_correction = true;
        let (p, _) = run(&cfg, 0.0, &[0.5]);
        assert!((p.get_flat(0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let cfg = OptimizerConfig::new(OptimizerKind::Adam, 0.1);
        let mut p = scalar(1.0);
        let mut s = OptimizerState::new(cfg.kind, &p);
        let err = step(&mut s, &mut p, &grad(f64::NAN), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { layer: 0, index: 0 }));
        assert_eq!(s.t, 0);
        assert_eq!(p.get_flat(0), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::new(OptimizerKind::Sgd, 0.1);
        assert!(cfg.validate().is_ok());
        cfg.beta1 = 0.9;
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::new(OptimizerKind::Adam, 0.0);
        assert!(cfg.validate().is_err());
        cfg.lr = 0.1;
        cfg.beta2 = 1.0;
        assert!(cfg.validate().is_err());
        assert_eq!("heavy-ball".parse::<OptimizerKind>().unwrap(), OptimizerKind::HeavyBall);
        assert!("nesterov".parse::<OptimizerKind>().is_err());
    }
}
