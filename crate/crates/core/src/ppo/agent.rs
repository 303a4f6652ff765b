use std::rc::Rc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::buffer::Sample;
use super::config::PpoConfig;
use super::loss::{ppo_policy_loss, value_loss_gaussian_nll, value_loss_point};
use crate::error::{Error, Result};
use crate::neural::{
    categorical_entropy, categorical_log_prob, full_mask, gaussian_entropy, gaussian_log_prob, gaussian_sample,
    ActorNet, ActorOut, CriticNet, EncoderConfig, HeadKind, MaskedCategorical, ObsBatch, ParamSet, Tape, Tensor, Var,
};
use crate::sim::Observation;

/// An action as stored for the update. Gaussian actions are kept pre-clamp
/// (and pre-squash where a squash applies).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionRecord {
    Continuous(Vec<f64>),
    /// Continuous action plus the stop choice (1 = stop).
    ContinuousStop { action: Vec<f64>, stop: usize },
    Discrete(usize),
}

impl ActionRecord {
    pub fn continuous(&self) -> Option<&[f64]> {
        match self {
            ActionRecord::Continuous(a) | ActionRecord::ContinuousStop { action: a, .. } => Some(a),
            ActionRecord::Discrete(_) => None,
        }
    }

    pub fn discrete(&self) -> Option<usize> {
        match self {
            ActionRecord::Discrete(i) => Some(*i),
            _ => None,
        }
    }

    pub fn stop(&self) -> bool {
        matches!(self, ActionRecord::ContinuousStop { stop: 1, .. })
    }

    /// The first two continuous components clamped to the env's action box.
    pub fn env_action(&self) -> Result<[f64; 2]> {
        match self.continuous() {
            Some(a) if a.len() >= 2 => Ok([a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)]),
            _ => Err(Error::InvalidArgument("action has no 2-D continuous part".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: ActionRecord,
    pub log_prob: f64,
    /// Critic mean; `NaN` when values were not requested.
    pub value: f64,
    /// Probability of the stop choice for heads that have one.
    pub stop_prob: Option<f64>,
}

/// Per-update summaries, averaged over minibatches.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub minibatch_updates: usize,
}

/// Actor and critic with separate encoders, one shared optimizer.
#[derive(Clone, Debug)]
pub struct Agent {
    pub params: ParamSet,
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub adam: AdamState,
    pub config: PpoConfig,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        encoder: EncoderConfig,
        width: usize,
        head: HeadKind,
        config: PpoConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let actor = ActorNet::new(&mut params, "actor", encoder.clone(), width, head, rng);
        let critic = CriticNet::new(&mut params, "critic", encoder, width, config.value_mode, rng);
        let adam = AdamState::new(&params);
        Ok(Agent {
            params,
            actor,
            critic,
            adam,
            config,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Samples (or takes the mode of) one action per observation, in order.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[&Observation],
        masks: Option<&[Vec<bool>]>,
        rng: &mut R,
        deterministic: bool,
        with_values: bool,
    ) -> Result<Vec<Decision>> {
        let batch = batch_of(obs.iter().copied())?;
        let values = if with_values {
            self.critic.predict(&self.params, &batch)?
        } else {
            vec![f64::NAN; obs.len()]
        };
        let mut tape = Tape::new();
        let out = self.actor.forward(&mut tape, &self.params, &batch)?;
        let row = |tape: &Tape, v: Var, i: usize| -> Vec<f64> { tape.value(v).row(i).to_vec() };
        let mut decisions = Vec::with_capacity(obs.len());
        for (i, &value) in values.iter().enumerate() {
            let d = match out {
                ActorOut::Gaussian { mean, log_std } => {
                    let (m, ls) = (row(&tape, mean, i), row(&tape, log_std, 0));
                    let (action, log_prob) = gaussian_choice(&m, &ls, rng, deterministic)?;
                    Decision {
                        action: ActionRecord::Continuous(action),
                        log_prob,
                        value,
                        stop_prob: None,
                    }
                }
                ActorOut::GaussianStop {
                    mean,
                    log_std,
                    stop_logits,
                } => {
                    let (m, ls) = (row(&tape, mean, i), row(&tape, log_std, 0));
                    let (action, lp_a) = gaussian_choice(&m, &ls, rng, deterministic)?;
                    let cat = MaskedCategorical::unmasked(&row(&tape, stop_logits, i))?;
                    let stop = if deterministic { cat.mode() } else { cat.sample(rng) };
                    Decision {
                        action: ActionRecord::ContinuousStop { action, stop },
                        log_prob: lp_a + cat.log_prob(stop),
                        value,
                        stop_prob: Some(cat.probs()[1]),
                    }
                }
                ActorOut::Logits(l) => {
                    let logits = row(&tape, l, i);
                    let cat = match masks {
                        Some(m) => MaskedCategorical::new(&logits, &m[i])?,
                        None => MaskedCategorical::unmasked(&logits)?,
                    };
                    let k = if deterministic { cat.mode() } else { cat.sample(rng) };
                    Decision {
                        action: ActionRecord::Discrete(k),
                        log_prob: cat.log_prob(k),
                        value,
                        stop_prob: None,
                    }
                }
            };
            decisions.push(d);
        }
        Ok(decisions)
    }

    /// Critic means.
    pub fn values(&self, obs: &[&Observation]) -> Result<Vec<f64>> {
        let batch = batch_of(obs.iter().copied())?;
        self.critic.predict(&self.params, &batch)
    }

    /// Runs `epochs` passes of shuffled minibatch PPO updates over `samples`.
    /// Advantages are normalised over the whole batch first.
    pub fn update<R: Rng + ?Sized>(&mut self, samples: &[Sample], rng: &mut R) -> Result<UpdateStats> {
        if samples.is_empty() {
            return Ok(UpdateStats::default());
        }
        let adv = normalized_advantages(samples);
        let cfg = self.config.clone();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut stats = UpdateStats::default();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                let (grads, p, v, h) = {
                    let mut tape = Tape::new();
                    let (loss, p, v, h) = self.minibatch_loss(&mut tape, samples, &adv, chunk)?;
                    (tape.backward(loss, &self.params), p, v, h)
                };
                let norm = adam_step(&mut self.params, &grads, &mut self.adam, cfg.lr, Some(cfg.max_grad_norm))?;
                stats.policy_loss += p;
                stats.value_loss += v;
                stats.entropy += h;
                stats.grad_norm += norm;
                stats.minibatch_updates += 1;
            }
        }
        let n = stats.minibatch_updates as f64;
        stats.policy_loss /= n;
        stats.value_loss /= n;
        stats.entropy /= n;
        stats.grad_norm /= n;
        Ok(stats)
    }

    /// Combined loss on the samples at `idx`; also returns the policy loss,
    /// value loss and entropy as numbers.
    pub fn minibatch_loss(
        &self,
        tape: &mut Tape,
        samples: &[Sample],
        adv: &[f64],
        idx: &[usize],
    ) -> Result<(Var, f64, f64, f64)> {
        let cfg = &self.config;
        let batch = batch_of(idx.iter().map(|&i| &samples[i].obs))?;
        let (logp, entropy) = self.log_prob_and_entropy(tape, &batch, samples, idx)?;
        let col = |tape: &mut Tape, f: &dyn Fn(usize) -> f64| {
            tape.constant(Tensor::from_shape_fn((idx.len(), 1), |(r, _)| f(idx[r])))
        };
        let old = col(tape, &|i| samples[i].log_prob);
        let a = col(tape, &|i| adv[i]);
        let targets = col(tape, &|i| samples[i].target);
        let pl = ppo_policy_loss(tape, logp, old, a, cfg.clip_eps, entropy, cfg.entropy_coef)?;
        let c = self.critic.forward(tape, &self.params, &batch)?;
        let vl = match c.std {
            None => value_loss_point(tape, c.mean, targets)?,
            Some(std) => value_loss_gaussian_nll(tape, c.mean, std, targets)?,
        };
        let scaled = tape.scale(vl, cfg.value_coef);
        let loss = tape.add(pl, scaled);
        Ok((loss, tape.scalar(pl), tape.scalar(vl), tape.scalar(entropy)))
    }

    /// Log-probabilities `[n, 1]` of the stored actions and mean entropy `[1, 1]`.
    pub fn log_prob_and_entropy(
        &self,
        tape: &mut Tape,
        batch: &ObsBatch,
        samples: &[Sample],
        idx: &[usize],
    ) -> Result<(Var, Var)> {
        let out = self.actor.forward(tape, &self.params, batch)?;
        let n = idx.len();
        let cont = |tape: &mut Tape, dim: usize| -> Result<Var> {
            let mut m = Tensor::zeros((n, dim));
            for (r, &i) in idx.iter().enumerate() {
                let a = samples[i]
                    .action
                    .continuous()
                    .filter(|a| a.len() == dim)
                    .ok_or_else(|| Error::InvalidArgument("stored action does not fit the policy head".into()))?;
                m.row_mut(r).assign(&ndarray::ArrayView1::from(a));
            }
            Ok(tape.constant(m))
        };
        match out {
            ActorOut::Gaussian { mean, log_std } => {
                let dim = tape.value(mean).ncols();
                let acts = cont(tape, dim)?;
                let lp = gaussian_log_prob(tape, mean, log_std, acts);
                let h = gaussian_entropy(tape, log_std);
                Ok((lp, h))
            }
            ActorOut::GaussianStop {
                mean,
                log_std,
                stop_logits,
            } => {
                let dim = tape.value(mean).ncols();
                let acts = cont(tape, dim)?;
                let lp_a = gaussian_log_prob(tape, mean, log_std, acts);
                let stops: Vec<usize> = idx
                    .iter()
                    .map(|&i| match &samples[i].action {
                        ActionRecord::ContinuousStop { stop, .. } => Ok(*stop),
                        _ => Err(Error::InvalidArgument("stored action has no stop choice".into())),
                    })
                    .collect::<Result<_>>()?;
                let mask = full_mask(n, 2);
                let lp_s = categorical_log_prob(tape, stop_logits, mask.clone(), Rc::from(stops));
                let lp = tape.add(lp_a, lp_s);
                let h_a = gaussian_entropy(tape, log_std);
                let h_s = categorical_entropy(tape, stop_logits, mask);
                let h_s = tape.mean(h_s);
                let h = tape.add(h_a, h_s);
                Ok((lp, h))
            }
            ActorOut::Logits(logits) => {
                let k = tape.value(logits).ncols();
                let mut mask = Array2::from_elem((n, k), true);
                let mut acts = Vec::with_capacity(n);
                for (r, &i) in idx.iter().enumerate() {
                    let s = &samples[i];
                    if let Some(m) = &s.mask {
                        if m.len() != k {
                            return Err(Error::Shape(format!("mask length {} != {k}", m.len())));
                        }
                        mask.row_mut(r).assign(&ndarray::ArrayView1::from(m.as_slice()));
                    }
                    let a = s
                        .action
                        .discrete()
                        .filter(|&a| a < k)
                        .ok_or_else(|| Error::InvalidArgument("stored action does not fit the policy head".into()))?;
                    acts.push(a);
                }
                let mask = Rc::new(mask);
                let lp = categorical_log_prob(tape, logits, mask.clone(), Rc::from(acts));
                let h = categorical_entropy(tape, logits, mask);
                let h = tape.mean(h);
                Ok((lp, h))
            }
        }
    }
}

fn gaussian_choice<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R, deterministic: bool) -> Result<(Vec<f64>, f64)> {
    if deterministic {
        let lp = crate::neural::dist::gaussian_log_prob_value(mean, log_std, mean);
        Ok((mean.to_vec(), lp))
    } else {
        let s = gaussian_sample(mean, log_std, rng)?;
        Ok((s.action, s.log_prob))
    }
}

pub fn batch_of<'a, I: IntoIterator<Item = &'a Observation>>(obs: I) -> Result<ObsBatch> {
    ObsBatch::new(obs.into_iter().map(|o| (o.global.as_slice(), o.zones.as_slice())))
}

/// Advantages shifted and scaled to mean 0, standard deviation 1.
pub fn normalized_advantages(samples: &[Sample]) -> Vec<f64> {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    samples.iter().map(|s| (s.advantage - mean) / std).collect()
}
