//! Mini-batch SGD with momentum, per-role learning rates, and the stepped
//! decay schedule.
//!
//! The schedule is piecewise constant over *iterations* (not epochs): it
//! starts at `base_lr` and drops at fixed thresholds, and training stops
//! outright at `stop_iteration`. Parameterised layers carry one of two
//! learning-rate roles: the classifier head trains at the scheduled rate,
//! hidden layers at the scheduled rate times `hidden_lr_multiplier`. The
//! default multiplier of 1e-2 is the fine-tuning recipe — a freshly
//! initialised head learns quickly while pretrained features shift slowly;
//! pretraining from scratch overrides it to 1.0 so the whole network trains
//! at full rate.

use crate::error::{Error, Result};
use crate::net::{LrRole, ParamSet};
use crate::tensor::Real;
use serde::{Deserialize, Serialize};

/// Hyper-parameters of one training run.
///
/// Defaults are the full-scale recipe: batches of 256, momentum 0.9, rate
/// 1e-2 dropping tenfold at iterations 1400 and 2800, stop at 4200. Toy runs
/// keep the ratios and scale the iteration axis down with
/// [`TrainConfig::scaled`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub momentum: f64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub hidden_lr_multiplier: f64,
    /// (first iteration, rate) pairs; the rate of the last pair whose
    /// iteration is <= the current one applies.
    pub schedule: Vec<(usize, f64)>,
    pub stop_iteration: usize,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            momentum: 0.9,
            batch_size: 256,
            base_lr: 1e-2,
            hidden_lr_multiplier: 1e-2,
            schedule: vec![(0, 1e-2), (1400, 1e-3), (2800, 1e-4)],
            stop_iteration: 4200,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !self.momentum.is_finite() || !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return bad(format!("weight_decay {} must be finite and >= 0", self.weight_decay));
        }
        // Zero is allowed: it freezes the hidden layers and trains only the
        // head (a linear probe of the pretrained features).
        if !(self.hidden_lr_multiplier >= 0.0) || !self.hidden_lr_multiplier.is_finite() {
            return bad(format!(
                "hidden_lr_multiplier {} must be finite and >= 0",
                self.hidden_lr_multiplier
            ));
        }
        if self.schedule.is_empty() {
            return bad("schedule must have at least one (iteration, rate) step".into());
        }
        if self.schedule[0].0 != 0 {
            return bad("schedule must start at iteration 0".into());
        }
        if self.schedule[0].1 != self.base_lr {
            return bad(format!(
                "base_lr {} disagrees with the first schedule rate {}",
                self.base_lr, self.schedule[0].1
            ));
        }
        for pair in self.schedule.windows(2) {
            let ((i0, lr0), (i1, lr1)) = (pair[0], pair[1]);
            if i1 <= i0 {
                return bad(format!("schedule iterations not strictly increasing at {i1}"));
            }
            if lr1 > lr0 {
                return bad(format!("schedule rates must be non-increasing, {lr0} -> {lr1}"));
            }
        }
        if self.schedule.iter().any(|&(_, lr)| !(lr > 0.0) || !lr.is_finite()) {
            return bad("schedule rates must be positive and finite".into());
        }
        if self.stop_iteration <= self.schedule.last().unwrap().0 {
            return bad(format!(
                "stop_iteration {} must exceed the last schedule step {}",
                self.stop_iteration,
                self.schedule.last().unwrap().0
            ));
        }
        Ok(())
    }

    /// Scheduled rate at `iteration` for a layer with `role`. Past
    /// `stop_iteration` there is no rate: training is over.
    pub fn lr_at(&self, iteration: usize, role: LrRole) -> Result<f64> {
        if iteration >= self.stop_iteration {
            return Err(Error::TrainingComplete {
                iteration,
                stop: self.stop_iteration,
            });
        }
        let base = self
            .schedule
            .iter()
            .take_while(|&&(start, _)| start <= iteration)
            .last()
            .expect("validated schedule starts at 0")
            .1;
        Ok(match role {
            LrRole::Head => base,
            LrRole::Hidden => base * self.hidden_lr_multiplier,
        })
    }

    /// Same rates, iteration axis scaled by `factor` (thresholds and stop
    /// rounded to the nearest iteration). `scaled(0.1)` turns the full-scale
    /// 1400/2800/4200 recipe into the toy 140/280/420 one.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |it: usize| (it as f64 * factor).round() as usize;
        TrainConfig {
            schedule: self
                .schedule
                .iter()
                .map(|&(it, lr)| (scale(it), lr))
                .collect(),
            stop_iteration: scale(self.stop_iteration).max(1),
            ..self.clone()
        }
    }
}

/// Momentum buffers plus the iteration counter. One state advances one
/// model; the velocity layout mirrors the parameter layout exactly.
#[derive(Debug, Clone)]
pub struct OptimizerState<T: Real = f32> {
    pub velocity: ParamSet<T>,
    pub iteration: usize,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        OptimizerState {
            velocity: params.zeros_like(),
            iteration: 0,
        }
    }
}

/// One SGD-with-momentum update, in place:
///
/// ```text
/// v <- momentum * v - lr * (g + weight_decay * theta)
/// theta <- theta + v
/// ```
///
/// with `lr` resolved per layer from the schedule and the layer's role.
/// `roles` must align with the parameter entries. The iteration counter
/// advances once per call. Non-finite gradients abort with a divergence
/// error before touching the parameters.
pub fn sgd_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut OptimizerState<T>,
    config: &TrainConfig,
    roles: &[LrRole],
) -> Result<()> {
    if roles.len() != params.entries().len() {
        return Err(Error::shape(
            "sgd_step roles",
            format!("{} entries", params.entries().len()),
            format!("{}", roles.len()),
        ));
    }
    if !grads.all_finite() {
        return Err(Error::Diverged {
            iteration: state.iteration,
            what: "non-finite gradient".into(),
        });
    }
    // Resolve both rates up front; this also enforces iteration < stop.
    let lr_of = |role| config.lr_at(state.iteration, role);
    let rates = [lr_of(LrRole::Hidden)?, lr_of(LrRole::Head)?];

    let mu = T::from_f64(config.momentum);
    let wd = T::from_f64(config.weight_decay);
    let mut p_it = 0usize;
    let n_entries = params.entries().len();
    let mut p_tensors = params.tensors_mut();
    let g_tensors = grads.tensors();
    let mut v_tensors = state.velocity.tensors_mut();
    if g_tensors.len() != p_tensors.len() || v_tensors.len() != p_tensors.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} tensors", p_tensors.len()),
            format!("{} grads / {} velocity", g_tensors.len(), v_tensors.len()),
        ));
    }
    // Tensors per entry vary (inception holds three pairs), so walk entries
    // to attribute each tensor its role-resolved rate.
    for (entry_idx, role) in roles.iter().enumerate().take(n_entries) {
        let n_pairs = grads.entries()[entry_idx].1.len();
        let lr = T::from_f64(match role {
            LrRole::Hidden => rates[0],
            LrRole::Head => rates[1],
        });
        for _ in 0..n_pairs * 2 {
            let p = &mut p_tensors[p_it];
            let g = &g_tensors[p_it];
            let v = &mut v_tensors[p_it];
            if p.dims() != g.dims() {
                return Err(Error::shape(
                    "sgd_step gradient",
                    format!("{:?}", p.dims()),
                    format!("{:?}", g.dims()),
                ));
            }
            for ((pv, &gv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(v.data_mut().iter_mut())
            {
                *vv = mu * *vv - lr * (gv + wd * *pv);
                *pv += *vv;
            }
            p_it += 1;
        }
    }
    state.iteration += 1;
    Ok(())
}
