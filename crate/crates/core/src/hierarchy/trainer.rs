//! Two-level training: a high level choosing skills, goals or zones every
//! segment and a low level acting every step, both optimised with PPO on the
//! same rollout.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Method, TwoLevelConfig};
use super::diayn::{diayn_classifier_update, SkillClassifier};
use super::rewards::{diayn_bonus, goal_shaping};
use super::tsp::{ordering_feature, plan_tour, Tour};
use crate::error::{Error, Result};
use crate::neural::{EncoderConfig, HeadKind};
use crate::ppo::{
    env_seed, stream_rng, streams, ActionRecord, Agent, EnvPool, EpisodeSummary, IterationMetrics, LevelStats,
    RolloutBuffer, Step,
};
use crate::sim::{observe, step, ArenaConfig, Observation, StepOutcome, TaskKind, TaskState, GLOBAL_DIM};

/// What the high level hands to the low level for one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum HighAction {
    Skill(usize),
    /// Goal point in arena coordinates.
    XyGoal([f64; 2]),
    Zone(usize),
}

impl HighAction {
    pub fn skill(&self) -> Option<usize> {
        match self {
            HighAction::Skill(z) => Some(*z),
            _ => None,
        }
    }
}

/// Extra global features appended to the low-level input.
pub fn conditioning_dim(method: Method, skill_count: usize) -> usize {
    if method.uses_skills() {
        skill_count
    } else {
        2
    }
}

fn low_encoder(task: TaskKind, config: &TwoLevelConfig, width: usize) -> EncoderConfig {
    let extra_zone = usize::from(config.method == Method::TspSolver);
    EncoderConfig::new(
        GLOBAL_DIM + conditioning_dim(config.method, config.skill_count),
        task.zone_dim() + extra_zone,
        width,
    )
}

/// Zones the high level may pick: unvisited ones on the TSP tasks, all of
/// them on ColourMatch.
pub fn zone_mask(state: &TaskState) -> Vec<bool> {
    if state.kind.is_tsp() {
        state.zones.iter().map(|z| !z.visited()).collect()
    } else {
        vec![true; state.zones.len()]
    }
}

/// Rejects actions of the wrong kind for `method` or outside their range.
pub fn check_high_action(method: Method, config: &TwoLevelConfig, state: &TaskState, action: &HighAction) -> Result<()> {
    let hw = state.config.arena_half_width;
    let ok = match (method, action) {
        (m, HighAction::Skill(z)) if m.uses_skills() => *z < config.skill_count,
        (Method::XyGoals, HighAction::XyGoal(g)) => g.iter().all(|c| c.is_finite() && c.abs() <= hw),
        (Method::ZoneGoals | Method::TspSolver, HighAction::Zone(i)) => zone_mask(state).get(*i).copied().unwrap_or(false),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{action:?} is not valid for {}", method.name())))
    }
}

/// Goal point of a high action in the given state, if it has one.
pub fn goal_point(state: &TaskState, action: &HighAction) -> Option<[f64; 2]> {
    match action {
        HighAction::Skill(_) => None,
        HighAction::XyGoal(g) => Some(*g),
        HighAction::Zone(i) => Some(state.zones[*i].position),
    }
}

/// Env observation with the high action appended to the global vector and,
/// for the planner, each zone's tour-position marker appended to its vector.
pub fn low_observation(
    config: &TwoLevelConfig,
    state: &TaskState,
    action: &HighAction,
    tour: Option<&Tour>,
) -> Result<Observation> {
    let mut obs = observe(state);
    let hw = state.config.arena_half_width;
    match action {
        HighAction::Skill(z) => {
            let mut onehot = vec![0.0; config.skill_count];
            onehot[*z] = 1.0;
            obs.global.extend(onehot);
        }
        _ => {
            let g = goal_point(state, action).expect("goal actions have a point");
            obs.global.extend([g[0] / hw, g[1] / hw]);
        }
    }
    if config.method == Method::TspSolver {
        let tour = tour.ok_or_else(|| Error::InvalidArgument("planner needs a tour".into()))?;
        let mut rank = vec![0; state.zones.len()];
        for (pos, &zone) in tour.order.iter().enumerate() {
            rank[zone] = pos + 1;
        }
        for (z, &r) in obs.zones.iter_mut().zip(&rank) {
            z.push(ordering_feature(r)?);
        }
    }
    Ok(obs)
}

/// Plans the episode's tour from the robot's position.
pub fn episode_tour(state: &TaskState) -> Result<Tour> {
    let points: Vec<[f64; 2]> = state.zones.iter().map(|z| z.position).collect();
    plan_tour(state.robot.position, &points)
}

/// First zone of the tour not yet visited.
pub fn tour_target(state: &TaskState, tour: &Tour) -> Option<usize> {
    tour.order.iter().copied().find(|&i| !state.zones[i].visited())
}

/// Whether the segment ends after a step that brought it to `length` steps.
pub fn segment_ends(config: &TwoLevelConfig, action: &HighAction, length: u32, out: &StepOutcome, stop: bool) -> bool {
    if out.done {
        return true;
    }
    let reached = |a: &HighAction| matches!(a, HighAction::Zone(g) if out.triggered.contains(g));
    match config.method {
        Method::Skills | Method::Diayn | Method::XyGoals => length >= config.skill_length,
        Method::Options => stop || length >= config.max_option_length,
        Method::ZoneGoals => reached(action) || length >= config.zone_goal_cap,
        Method::TspSolver => reached(action),
    }
}

/// Low-level reward for one step. `log_q` and `log_p` are only read by DIAYN.
pub fn low_reward(
    config: &TwoLevelConfig,
    env_reward: f64,
    prev_pos: [f64; 2],
    new_pos: [f64; 2],
    goal: Option<[f64; 2]>,
    log_q: f64,
    log_p: f64,
) -> f64 {
    match config.method {
        Method::Skills | Method::Options => env_reward,
        Method::Diayn => diayn_bonus(env_reward, log_q, log_p, config.diayn_alpha),
        _ => config.goal_reward_scale * goal_shaping(prev_pos, new_pos, goal.expect("goal methods have a goal")),
    }
}

/// Whether a segment boundary also ends the low level's episode. Goal
/// methods treat reaching or abandoning a goal as terminal.
fn low_terminal(method: Method, boundary: bool, done: bool) -> bool {
    done || (boundary && method.uses_goals())
}

fn uniform_log_prior(k: usize) -> f64 {
    -(k as f64).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentStep {
    /// Robot position after the step.
    pub position: [f64; 2],
    pub triggered: Vec<usize>,
    pub env_reward: f64,
    pub low_reward: f64,
    pub done: bool,
    pub stop: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRun {
    pub steps: Vec<SegmentStep>,
    /// Undiscounted env reward over the segment.
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// Steps one env with the low policy under a fixed high action until the
/// segment boundary. DIAYN needs the classifier and the selection-time log
/// prior.
pub fn run_segment<R: Rng + ?Sized>(
    state: &mut TaskState,
    action: &HighAction,
    low: &Agent,
    config: &TwoLevelConfig,
    tour: Option<&Tour>,
    diayn: Option<(&SkillClassifier, f64)>,
    rng: &mut R,
    deterministic: bool,
) -> Result<SegmentRun> {
    if state.done {
        return Err(Error::EpisodeDone);
    }
    check_high_action(config.method, config, state, action)?;
    if config.method == Method::Diayn && diayn.is_none() {
        return Err(Error::InvalidArgument("diayn segments need a classifier".into()));
    }
    let mut run = SegmentRun {
        steps: Vec::new(),
        reward: 0.0,
        done: false,
        success: false,
    };
    let mut length = 0;
    loop {
        let obs = low_observation(config, state, action, tour)?;
        let d = low.act(&[&obs], None, rng, deterministic, false)?.remove(0);
        let goal = goal_point(state, action);
        let prev = state.robot.position;
        let out = step(state, d.action.env_action()?)?;
        length += 1;
        let (log_q, log_p) = match (diayn, action.skill()) {
            (Some((q, log_p)), Some(z)) => (q.log_probs(&[&out.observation], &[z])?[0], log_p),
            _ => (0.0, 0.0),
        };
        let r = low_reward(config, out.reward, prev, state.robot.position, goal, log_q, log_p);
        let stop = d.action.stop();
        run.reward += out.reward;
        run.steps.push(SegmentStep {
            position: state.robot.position,
            triggered: out.triggered.clone(),
            env_reward: out.reward,
            low_reward: r,
            done: out.done,
            stop,
        });
        if segment_ends(config, action, length, &out, stop) {
            run.done = out.done;
            run.success = out.success;
            return Ok(run);
        }
    }
}

/// A segment in progress for one env.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub action: HighAction,
    /// High-level action as sampled; `None` for the planner.
    pub record: Option<ActionRecord>,
    pub obs: Observation,
    pub mask: Option<Vec<bool>>,
    pub log_prob: f64,
    pub value: f64,
    pub log_prior: f64,
    pub reward: f64,
    pub length: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvSlot {
    pub segment: Option<Segment>,
    pub tour: Option<Tour>,
}

/// Concurrent PPO on both levels over one env pool.
#[derive(Clone, Debug)]
pub struct TwoLevelTrainer {
    pub config: TwoLevelConfig,
    pub low: Agent,
    /// Absent for the planner.
    pub high: Option<Agent>,
    pub classifier: Option<SkillClassifier>,
    /// Learned skill prior; absent when the uniform prior is used.
    pub prior: Option<SkillClassifier>,
    pub pool: EnvPool,
    pub slots: Vec<EnvSlot>,
    pub rng: ChaCha8Rng,
    pub aux_rng: ChaCha8Rng,
    pub frames: u64,
    /// `(skill, summed env reward)` of segments completed last iteration.
    pub last_segments: Vec<(usize, f64)>,
    pub record_wall_time: bool,
}

impl TwoLevelTrainer {
    pub fn new(task: TaskKind, arena: ArenaConfig, config: TwoLevelConfig, width: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let method = config.method;
        let mut init = stream_rng(seed, streams::INIT);
        let pool = EnvPool::new(task, arena, config.low.num_envs, env_seed(seed))?;
        let low_head = if method == Method::Options {
            HeadKind::GaussianStop { dim: 2 }
        } else {
            HeadKind::Gaussian { dim: 2 }
        };
        let low = Agent::new(low_encoder(task, &config, width), width, low_head, config.low.clone(), &mut init)?;
        let high_enc = EncoderConfig::new(GLOBAL_DIM, task.zone_dim(), width);
        let high_head = match method {
            m if m.uses_skills() => Some(HeadKind::Categorical { n: config.skill_count }),
            Method::XyGoals => Some(HeadKind::Gaussian { dim: 2 }),
            Method::ZoneGoals => Some(HeadKind::ZoneScores),
            _ => None,
        };
        let high = high_head
            .map(|h| Agent::new(high_enc.clone(), width, h, config.high.clone(), &mut init))
            .transpose()?;
        let (classifier, prior) = if method == Method::Diayn {
            let mut q_rng = stream_rng(seed, streams::AUX_INIT);
            let q = SkillClassifier::new(high_enc.clone(), width, config.skill_count, &mut q_rng);
            let p = (!config.diayn_uniform_prior).then(|| {
                let mut p_rng = stream_rng(seed, streams::AUX_PRIOR_INIT);
                SkillClassifier::new(high_enc, width, config.skill_count, &mut p_rng)
            });
            (Some(q), p)
        } else {
            (None, None)
        };
        Ok(TwoLevelTrainer {
            slots: vec![EnvSlot::default(); pool.len()],
            config,
            low,
            high,
            classifier,
            prior,
            pool,
            rng: stream_rng(seed, streams::POLICY),
            aux_rng: stream_rng(seed, streams::AUX_UPDATE),
            frames: 0,
            last_segments: Vec::new(),
            record_wall_time: true,
        })
    }

    /// Policy and value parameters of both levels.
    pub fn parameter_count(&self) -> usize {
        self.low.parameter_count() + self.high.as_ref().map_or(0, Agent::parameter_count)
    }

    fn high_action_from(&self, record: &ActionRecord) -> HighAction {
        let hw = self.pool.config.arena_half_width;
        match record {
            ActionRecord::Discrete(z) if self.config.method == Method::ZoneGoals => HighAction::Zone(*z),
            ActionRecord::Discrete(z) => HighAction::Skill(*z),
            ActionRecord::Continuous(u) => HighAction::XyGoal([u[0].tanh() * hw, u[1].tanh() * hw]),
            ActionRecord::ContinuousStop { .. } => unreachable!("high heads have no stop"),
        }
    }

    fn log_prior(&self, obs: &[&Observation], skills: &[usize]) -> Result<Vec<f64>> {
        match (&self.prior, self.config.method) {
            (Some(p), Method::Diayn) => p.log_probs(obs, skills),
            _ => Ok(vec![uniform_log_prior(self.config.skill_count); obs.len()]),
        }
    }

    /// High action for a single env outside training, with its DIAYN log
    /// prior. Plans `tour` on first use for the planner.
    pub fn choose_high_action<R: Rng + ?Sized>(
        &self,
        state: &TaskState,
        tour: &mut Option<Tour>,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(HighAction, f64)> {
        let Some(high) = &self.high else {
            if tour.is_none() {
                *tour = Some(episode_tour(state)?);
            }
            let target = tour_target(state, tour.as_ref().expect("planned"))
                .ok_or_else(|| Error::InvalidArgument("every zone already visited".into()))?;
            return Ok((HighAction::Zone(target), 0.0));
        };
        let obs = observe(state);
        let mask = (self.config.method == Method::ZoneGoals).then(|| vec![zone_mask(state)]);
        let d = high.act(&[&obs], mask.as_deref(), rng, deterministic, false)?.remove(0);
        let log_prior = match d.action.discrete() {
            Some(z) if self.config.method == Method::Diayn => self.log_prior(&[&obs], &[z])?[0],
            _ => 0.0,
        };
        Ok((self.high_action_from(&d.action), log_prior))
    }

    /// Starts segments for every env that has none.
    fn select(&mut self, prior_pairs: &mut Vec<(Observation, usize)>) -> Result<()> {
        let need: Vec<usize> = (0..self.slots.len()).filter(|&i| self.slots[i].segment.is_none()).collect();
        if need.is_empty() {
            return Ok(());
        }
        if self.config.method == Method::TspSolver {
            for i in need {
                let state = &self.pool.envs[i];
                let slot = &mut self.slots[i];
                if slot.tour.is_none() {
                    slot.tour = Some(episode_tour(state)?);
                }
                let target = tour_target(state, slot.tour.as_ref().expect("planned"))
                    .ok_or_else(|| Error::InvalidArgument("every zone already visited".into()))?;
                slot.segment = Some(Segment {
                    action: HighAction::Zone(target),
                    record: None,
                    obs: observe(state),
                    mask: None,
                    log_prob: 0.0,
                    value: 0.0,
                    log_prior: 0.0,
                    reward: 0.0,
                    length: 0,
                });
            }
            return Ok(());
        }
        let high = self.high.as_ref().expect("method has a high level");
        let obs: Vec<Observation> = need.iter().map(|&i| self.pool.observation(i)).collect();
        let refs: Vec<&Observation> = obs.iter().collect();
        let masks: Option<Vec<Vec<bool>>> = (self.config.method == Method::ZoneGoals)
            .then(|| need.iter().map(|&i| zone_mask(&self.pool.envs[i])).collect());
        let decisions = high.act(&refs, masks.as_deref(), &mut self.rng, false, true)?;
        let skills: Vec<usize> = decisions.iter().filter_map(|d| d.action.discrete()).collect();
        let log_priors = if self.config.method == Method::Diayn {
            self.log_prior(&refs, &skills)?
        } else {
            vec![0.0; need.len()]
        };
        for (k, ((i, o), d)) in need.into_iter().zip(obs).zip(decisions).enumerate() {
            let action = self.high_action_from(&d.action);
            if self.config.method == Method::Diayn {
                prior_pairs.push((o.clone(), skills[k]));
            }
            self.slots[i].segment = Some(Segment {
                action,
                record: Some(d.action),
                obs: o,
                mask: masks.as_ref().map(|m| m[k].clone()),
                log_prob: d.log_prob,
                value: d.value,
                log_prior: log_priors[k],
                reward: 0.0,
                length: 0,
            });
        }
        Ok(())
    }

    fn low_observations(&self) -> Result<Vec<Observation>> {
        (0..self.slots.len())
            .map(|i| {
                let slot = &self.slots[i];
                let seg = slot.segment.as_ref().expect("selected");
                low_observation(&self.config, &self.pool.envs[i], &seg.action, slot.tour.as_ref())
            })
            .collect()
    }

    /// Collects one rollout, then updates the low level, the high level and
    /// the DIAYN networks in that order.
    pub fn train_iteration(&mut self) -> Result<IterationMetrics> {
        let start = Instant::now();
        let n = self.pool.len();
        let method = self.config.method;
        let mut low_buf = RolloutBuffer::new(n);
        let mut high_buf = RolloutBuffer::new(n);
        let mut episodes: Vec<EpisodeSummary> = Vec::new();
        let mut class_pairs: (Vec<Observation>, Vec<usize>) = (Vec::new(), Vec::new());
        let mut prior_pairs = Vec::new();
        self.last_segments.clear();
        for _ in 0..self.config.low.steps_per_env {
            self.select(&mut prior_pairs)?;
            let low_obs = self.low_observations()?;
            let refs: Vec<&Observation> = low_obs.iter().collect();
            let decisions = self.low.act(&refs, None, &mut self.rng, false, true)?;
            let mut outs = Vec::with_capacity(n);
            for (i, d) in decisions.iter().enumerate() {
                let seg = self.slots[i].segment.as_ref().expect("selected");
                let goal = goal_point(&self.pool.envs[i], &seg.action);
                let prev = self.pool.envs[i].robot.position;
                let (out, finished) = self.pool.step(i, d.action.env_action()?)?;
                episodes.extend(finished);
                outs.push((out, prev, goal));
            }
            let log_q = match &self.classifier {
                Some(q) => {
                    let next: Vec<&Observation> = outs.iter().map(|(o, _, _)| &o.observation).collect();
                    let skills: Vec<usize> = self
                        .slots
                        .iter()
                        .map(|s| s.segment.as_ref().and_then(|g| g.action.skill()).expect("skill segment"))
                        .collect();
                    q.log_probs(&next, &skills)?
                }
                None => vec![0.0; n],
            };
            let hw = self.pool.config.arena_half_width;
            for (i, ((d, (out, prev, goal)), obs)) in decisions.into_iter().zip(outs).zip(low_obs).enumerate() {
                let slot = &mut self.slots[i];
                let seg = slot.segment.as_mut().expect("selected");
                seg.reward += out.reward;
                seg.length += 1;
                let stop = d.action.stop();
                let boundary = segment_ends(&self.config, &seg.action, seg.length, &out, stop);
                // The env may already hold the next episode; read the position back
                // from the outcome.
                let new_pos = [out.observation.global[0] * hw, out.observation.global[1] * hw];
                let r = low_reward(&self.config, out.reward, prev, new_pos, goal, log_q[i], seg.log_prior);
                if let Some(z) = seg.action.skill().filter(|_| method == Method::Diayn) {
                    class_pairs.0.push(out.observation.clone());
                    class_pairs.1.push(z);
                }
                low_buf.push(
                    i,
                    Step {
                        obs,
                        mask: None,
                        action: d.action,
                        log_prob: d.log_prob,
                        value: d.value,
                        reward: r,
                        done: low_terminal(method, boundary, out.done),
                        success: out.success,
                    },
                );
                if boundary {
                    let seg = slot.segment.take().expect("selected");
                    if let Some(z) = seg.action.skill() {
                        self.last_segments.push((z, seg.reward));
                    }
                    if let Some(record) = seg.record {
                        high_buf.push(
                            i,
                            Step {
                                obs: seg.obs,
                                mask: seg.mask,
                                action: record,
                                log_prob: seg.log_prob,
                                value: seg.value,
                                reward: seg.reward,
                                done: out.done,
                                success: out.success,
                            },
                        );
                    }
                }
                if out.done {
                    slot.tour = None;
                }
            }
            self.frames += n as u64;
        }
        // Start the next segments now so both levels can bootstrap from them.
        self.select(&mut prior_pairs)?;
        let low_obs = self.low_observations()?;
        let low_boot = self.low.values(&low_obs.iter().collect::<Vec<_>>())?;
        let low_cfg = self.low.config.clone();
        let low_samples = low_buf.into_samples(&low_boot, low_cfg.gamma, low_cfg.gae_lambda)?;
        let low_update = self.low.update(&low_samples, &mut self.rng)?;
        let mut high_stats = LevelStats::default();
        if let Some(high) = self.high.as_mut() {
            let boot: Vec<f64> = self.slots.iter().map(|s| s.segment.as_ref().expect("selected").value).collect();
            let cfg = high.config.clone();
            let samples = high_buf.into_samples(&boot, cfg.gamma, cfg.gae_lambda)?;
            let update = high.update(&samples, &mut self.rng)?;
            high_stats = LevelStats::from_update(&update, &samples);
        }
        if let Some(q) = self.classifier.as_mut() {
            diayn_classifier_update(q, &class_pairs.0, &class_pairs.1, &mut self.aux_rng)?;
        }
        if let Some(p) = self.prior.as_mut() {
            let (obs, labels): (Vec<Observation>, Vec<usize>) = prior_pairs.into_iter().unzip();
            if !obs.is_empty() {
                diayn_classifier_update(p, &obs, &labels, &mut self.aux_rng)?;
            }
        }
        let (mean_return, success_rate) = IterationMetrics::episode_stats(&episodes);
        Ok(IterationMetrics {
            frames: self.frames,
            episodes: episodes.len(),
            mean_return,
            success_rate,
            levels: vec![
                ("low".to_string(), LevelStats::from_update(&low_update, &low_samples)),
                ("high".to_string(), high_stats),
            ],
            wall_time: if self.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        })
    }
}

/// Policy-plus-value parameter count of a two-level setup at `width`.
pub fn two_level_parameter_count(task: TaskKind, config: &TwoLevelConfig, width: usize) -> Result<usize> {
    let arena = ArenaConfig::default();
    let cfg = TwoLevelConfig {
        low: crate::ppo::PpoConfig {
            num_envs: 1,
            ..config.low.clone()
        },
        high: crate::ppo::PpoConfig {
            num_envs: 1,
            ..config.high.clone()
        },
        ..config.clone()
    };
    Ok(TwoLevelTrainer::new(task, arena, cfg, width, 0)?.parameter_count())
}

/// Width at which the two-level parameter count is closest to `target`.
pub fn matched_width(task: TaskKind, config: &TwoLevelConfig, target: usize) -> Result<usize> {
    let (mut lo, mut hi) = (1usize, 1024usize);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if two_level_parameter_count(task, config, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let off = |w| two_level_parameter_count(task, config, w).map(|c| c.abs_diff(target));
    Ok(if off(lo)? <= off(hi)? { lo } else { hi })
}
