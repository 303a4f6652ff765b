use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, NetState, CHECKPOINT_VERSION};
use super::config::{Algorithm, RunConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{matched_width, run_segment, TwoLevelTrainer};
use crate::neural::{EncoderConfig, HeadKind};
use crate::ppo::{Agent, EnvPool, IterationMetrics, PpoTrainer};
use crate::sim::{generate_map, observe, step, ArenaConfig, TaskKind, TaskState, GLOBAL_DIM};

#[derive(Clone, Debug)]
pub enum Learner {
    Flat(PpoTrainer),
    TwoLevel(Box<TwoLevelTrainer>),
}

/// One played episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance_seed: u64,
    /// Robot position before the first step and after every step.
    pub positions: Vec<[f64; 2]>,
    pub rewards: Vec<f64>,
    /// Step count (1-based) at which each newly reached zone was reached, in
    /// order.
    pub visit_steps: Vec<u32>,
    pub success: bool,
}

impl Trajectory {
    pub fn length(&self) -> u32 {
        self.rewards.len() as u32
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        super::variance::discounted_return(&self.rewards, gamma, self.rewards.len())
    }
}

/// Parameter count of the flat agent a config describes.
pub fn flat_parameter_count(cfg: &RunConfig) -> Result<usize> {
    let enc = EncoderConfig::new(GLOBAL_DIM, cfg.task.zone_dim(), cfg.width);
    let mut init = crate::ppo::stream_rng(0, 0);
    Ok(Agent::new(enc, cfg.width, HeadKind::Gaussian { dim: 2 }, cfg.ppo.clone(), &mut init)?.parameter_count())
}

/// Two-level width for a config: explicit, or matched to the flat count.
pub fn resolve_hrl_width(cfg: &RunConfig) -> Result<usize> {
    match cfg.hrl_width {
        Some(w) => Ok(w),
        None => matched_width(cfg.task, &cfg.hrl, flat_parameter_count(cfg)?),
    }
}

impl Learner {
    pub fn new(cfg: &RunConfig) -> Result<Learner> {
        cfg.validate()?;
        let mut learner = match cfg.algorithm {
            Algorithm::Ppo | Algorithm::PpoVd => {
                Learner::Flat(PpoTrainer::new(cfg.task, cfg.arena.clone(), cfg.ppo.clone(), cfg.width, cfg.seed)?)
            }
            Algorithm::TwoLevel(_) => Learner::TwoLevel(Box::new(TwoLevelTrainer::new(
                cfg.task,
                cfg.arena.clone(),
                cfg.hrl.clone(),
                resolve_hrl_width(cfg)?,
                cfg.seed,
            )?)),
        };
        match &mut learner {
            Learner::Flat(t) => t.record_wall_time = cfg.record_wall_time,
            Learner::TwoLevel(t) => t.record_wall_time = cfg.record_wall_time,
        }
        Ok(learner)
    }

    pub fn frames(&self) -> u64 {
        match self {
            Learner::Flat(t) => t.frames,
            Learner::TwoLevel(t) => t.frames,
        }
    }

    pub fn train_iteration(&mut self) -> Result<IterationMetrics> {
        match self {
            Learner::Flat(t) => t.train_iteration(),
            Learner::TwoLevel(t) => t.train_iteration(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Learner::Flat(t) => t.agent.parameter_count(),
            Learner::TwoLevel(t) => t.parameter_count(),
        }
    }

    /// Every network's parameters, flattened in a fixed order.
    pub fn parameter_vector(&self) -> Vec<f64> {
        match self {
            Learner::Flat(t) => t.agent.params.flatten(),
            Learner::TwoLevel(t) => {
                let mut v = t.low.params.flatten();
                for p in [t.high.as_ref().map(|a| &a.params), t.classifier.as_ref().map(|c| &c.params), t.prior.as_ref().map(|c| &c.params)]
                    .into_iter()
                    .flatten()
                {
                    v.extend(p.flatten());
                }
                v
            }
        }
    }

    fn pool(&self) -> &EnvPool {
        match self {
            Learner::Flat(t) => &t.pool,
            Learner::TwoLevel(t) => &t.pool,
        }
    }

    pub fn task(&self) -> TaskKind {
        self.pool().kind
    }

    pub fn arena(&self) -> &ArenaConfig {
        &self.pool().config
    }

    /// Plays one episode on instance `seed` without touching any parameter.
    pub fn play_episode<R: Rng + ?Sized>(&self, seed: u64, rng: &mut R, deterministic: bool) -> Result<Trajectory> {
        let pool = self.pool();
        let state = generate_map(seed, pool.kind, &pool.config)?;
        self.play_from(state, rng, deterministic)
    }

    pub fn play_from<R: Rng + ?Sized>(&self, mut state: TaskState, rng: &mut R, deterministic: bool) -> Result<Trajectory> {
        let mut traj = Trajectory {
            instance_seed: state.seed,
            positions: vec![state.robot.position],
            rewards: Vec::new(),
            visit_steps: Vec::new(),
            success: false,
        };
        let is_tsp = state.kind.is_tsp();
        match self {
            Learner::Flat(t) => {
                while !state.done {
                    let obs = observe(&state);
                    let d = t.agent.act(&[&obs], None, rng, deterministic, false)?.remove(0);
                    let out = step(&mut state, d.action.env_action()?)?;
                    traj.positions.push(state.robot.position);
                    traj.rewards.push(out.reward);
                    if is_tsp {
                        traj.visit_steps.extend(out.triggered.iter().map(|_| state.t_elapsed));
                    }
                }
            }
            Learner::TwoLevel(t) => {
                let mut tour = None;
                while !state.done {
                    let (action, log_prior) = t.choose_high_action(&state, &mut tour, rng, deterministic)?;
                    let diayn = t.classifier.as_ref().map(|q| (q, log_prior));
                    let start = state.t_elapsed;
                    let run = run_segment(&mut state, &action, &t.low, &t.config, tour.as_ref(), diayn, rng, deterministic)?;
                    for (k, s) in run.steps.iter().enumerate() {
                        traj.positions.push(s.position);
                        traj.rewards.push(s.env_reward);
                        if is_tsp {
                            traj.visit_steps.extend(s.triggered.iter().map(|_| start + k as u32 + 1));
                        }
                    }
                }
            }
        }
        traj.success = state.success;
        Ok(traj)
    }

    pub fn checkpoint(&self, cfg: &RunConfig, iterations: u64) -> Checkpoint {
        let (nets, rng, aux_rng, pool, slots) = match self {
            Learner::Flat(t) => (
                vec![NetState::capture("agent", &t.agent.params, &t.agent.adam)],
                t.rng.clone(),
                None,
                t.pool.clone(),
                None,
            ),
            Learner::TwoLevel(t) => {
                let mut nets = vec![NetState::capture("low", &t.low.params, &t.low.adam)];
                if let Some(h) = &t.high {
                    nets.push(NetState::capture("high", &h.params, &h.adam));
                }
                if let Some(q) = &t.classifier {
                    nets.push(NetState::capture("classifier", &q.params, &q.adam));
                }
                if let Some(p) = &t.prior {
                    nets.push(NetState::capture("prior", &p.params, &p.adam));
                }
                (nets, t.rng.clone(), Some(t.aux_rng.clone()), t.pool.clone(), Some(t.slots.clone()))
            }
        };
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            run_config: cfg.clone(),
            frames_trained: self.frames(),
            iterations,
            nets,
            rng,
            aux_rng,
            pool,
            slots,
        }
    }

    /// Rebuilds the learner from its config, then overwrites all mutable
    /// state with the checkpoint's.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Learner> {
        let mut learner = Learner::new(&ck.run_config)?;
        let missing = |what: &str| Error::Corrupt(format!("checkpoint lacks {what}"));
        match &mut learner {
            Learner::Flat(t) => {
                ck.net("agent")?.restore(&mut t.agent.params, &mut t.agent.adam)?;
                t.rng = ck.rng.clone();
                t.pool = ck.pool.clone();
                t.frames = ck.frames_trained;
            }
            Learner::TwoLevel(t) => {
                ck.net("low")?.restore(&mut t.low.params, &mut t.low.adam)?;
                if let Some(h) = t.high.as_mut() {
                    ck.net("high")?.restore(&mut h.params, &mut h.adam)?;
                }
                if let Some(q) = t.classifier.as_mut() {
                    ck.net("classifier")?.restore(&mut q.params, &mut q.adam)?;
                }
                if let Some(p) = t.prior.as_mut() {
                    ck.net("prior")?.restore(&mut p.params, &mut p.adam)?;
                }
                t.rng = ck.rng.clone();
                t.aux_rng = ck.aux_rng.clone().ok_or_else(|| missing("the auxiliary rng"))?;
                t.pool = ck.pool.clone();
                t.slots = ck.slots.clone().ok_or_else(|| missing("segment state"))?;
                t.frames = ck.frames_trained;
            }
        }
        Ok(learner)
    }
}

/// A learner plus the run bookkeeping around it.
#[derive(Clone, Debug)]
pub struct Session {
    pub config: RunConfig,
    pub learner: Learner,
    pub iterations: u64,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Session> {
        Ok(Session {
            learner: Learner::new(&config)?,
            config,
            iterations: 0,
        })
    }

    pub fn resume(ck: &Checkpoint) -> Result<Session> {
        Ok(Session {
            learner: Learner::from_checkpoint(ck)?,
            config: ck.run_config.clone(),
            iterations: ck.iterations,
        })
    }

    pub fn done(&self) -> bool {
        self.learner.frames() >= self.config.frames
    }

    pub fn step(&mut self) -> Result<IterationMetrics> {
        let m = self.learner.train_iteration()?;
        self.iterations += 1;
        Ok(m)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.learner.checkpoint(&self.config, self.iterations)
    }
}
