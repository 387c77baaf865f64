//! The five comparison policies, all driven through the identical
//! environment and evaluation protocol as the full controller:
//!
//! - `vision-only` / `radar-only`: fixed schedules with a trained spatial
//!   expert, so energy differences isolate scheduling.
//! - `ppo`: a monolithic shared-trunk network trained with the clipped
//!   surrogate, spatial gain backpropagated through the same trunk.
//! - `homo-moe`: two structurally identical MLP experts behind a learned
//!   softmax gate, trained with the summed loss (no isolation).
//! - `hmoe-no-aoi`: the full controller with the age column masked from
//!   every observation (the dynamics still evolve true AoI).

use crate::agent::{
    compute_advantages, featurize, greedy_schedule, sample_schedule, schedule_log_prob, sigmoid,
    spatial_loss_and_grad, spatial_update, EpisodeReport, HmoeAgent, HyperParams, SpatialExpert,
};
use crate::env::{Env, JointAction, SlotRecord, wrap_phase};
use crate::error::{Error, Result};
use crate::neural::{adam_step, AdamState, Checkpoint, DenseLayer, Mlp};
use crate::{Cplx, Real};
use rand_chacha::ChaCha12Rng;
use std::path::Path;

/// The five non-H-MoE comparison policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    VisionOnly,
    RadarOnly,
    MonolithicPPO,
    HomogeneousMoE,
    HMoENoAoI,
}

/// Stable CLI names, including the full controller.
pub const POLICY_NAMES: [&str; 6] = [
    "vision-only",
    "radar-only",
    "ppo",
    "homo-moe",
    "hmoe-no-aoi",
    "hmoe",
];

/// A policy that can be trained per episode and evaluated, with checkpoint
/// persistence. All policies are deterministic given (seed, rng stream).
pub trait TrainablePolicy {
    fn name(&self) -> &'static str;
    /// Whether training episodes change the policy at all.
    fn trainable(&self) -> bool {
        true
    }
    fn train_episode(&mut self, env: &mut Env, seed: u64, rng: &mut ChaCha12Rng)
        -> Result<EpisodeReport>;
    fn eval_episode(&mut self, env: &mut Env, seed: u64, rng: &mut ChaCha12Rng)
        -> Result<EpisodeReport>;
    fn save_checkpoint(&self, path: &Path) -> Result<()>;
    fn load_checkpoint(&mut self, path: &Path) -> Result<()>;
}

/// Build a policy by registry name.
pub fn make_policy(
    name: &str,
    user_count: usize,
    element_count: usize,
    hp: HyperParams,
    rng: &mut ChaCha12Rng,
) -> Result<Box<dyn TrainablePolicy>> {
    match name {
        "vision-only" => Ok(Box::new(FixedSchedulePolicy::new(
            true, user_count, element_count, hp, rng,
        )?)),
        "radar-only" => Ok(Box::new(FixedSchedulePolicy::new(
            false, user_count, element_count, hp, rng,
        )?)),
        "ppo" => Ok(Box::new(PpoPolicy::new(user_count, element_count, hp, rng)?)),
        "homo-moe" => Ok(Box::new(HomoMoePolicy::new(
            user_count,
            element_count,
            hp,
            rng,
        )?)),
        "hmoe-no-aoi" => {
            let mut agent = HmoeAgent::new(user_count, element_count, hp, rng)?;
            agent.mask_age = true;
            Ok(Box::new(HmoePolicy {
                agent,
                name: "hmoe-no-aoi",
            }))
        }
        "hmoe" => Ok(Box::new(HmoePolicy {
            agent: HmoeAgent::new(user_count, element_count, hp, rng)?,
            name: "hmoe",
        })),
        other => Err(Error::Config(format!(
            "unknown policy '{other}'; expected one of {POLICY_NAMES:?}"
        ))),
    }
}

/// The full controller (and its age-masked ablation) behind the common
/// policy interface.
pub struct HmoePolicy {
    pub agent: HmoeAgent,
    name: &'static str,
}

impl TrainablePolicy for HmoePolicy {
    fn name(&self) -> &'static str {
        self.name
    }

    fn train_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        self.agent.train_episode(env, seed, rng)
    }

    fn eval_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        let (_, records) = self.agent.rollout(env, seed, rng)?;
        Ok(EpisodeReport::from_records(records))
    }

    fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.agent.save_checkpoint(path)
    }

    fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        self.agent.load_checkpoint(path)
    }
}

/// Vision-Only (schedule all ones) or Radar-Only (all zeros): the temporal
/// expert is never consulted; the spatial expert trains with the same
/// episodic gain loss as the full controller.
pub struct FixedSchedulePolicy {
    pub always_on: bool,
    pub spatial: SpatialExpert,
    pub opt_spatial: AdamState<Real>,
    pub hp: HyperParams,
}

impl FixedSchedulePolicy {
    pub fn new(
        always_on: bool,
        user_count: usize,
        element_count: usize,
        hp: HyperParams,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        hp.validate()?;
        let spatial = SpatialExpert::new(3 * user_count, hp.mlp_hidden, user_count, element_count, rng);
        let opt_spatial = AdamState::new(spatial.mlp.param_count(), hp.lr_spatial);
        Ok(Self {
            always_on,
            spatial,
            opt_spatial,
            hp,
        })
    }

    fn rollout(
        &self,
        env: &mut Env,
        seed: u64,
    ) -> Result<(Vec<Vec<Real>>, Vec<Vec<Vec<Cplx>>>, Vec<SlotRecord>)> {
        let aoi_cap = env.config().reliability.aoi_cap;
        let k = env.config().user_count;
        let horizon = env.config().horizon;
        let mut features_log = Vec::with_capacity(horizon);
        let mut channels = Vec::with_capacity(horizon);
        let mut records = Vec::with_capacity(horizon);
        let mut state = env.reset(seed);
        for slot in 0..horizon {
            let features = featurize(&state, aoi_cap, false);
            let phases = self.spatial.phases(&features)?;
            let schedule = vec![self.always_on; k];
            let action = JointAction::new(schedule.clone(), phases)?;
            let outcome = env.step(&action)?;
            records.push(SlotRecord {
                slot,
                ages: state.ages(),
                schedule,
                avg_bmp: outcome.avg_bmp,
                e_comp: outcome.energy.computational,
                e_sweep: outcome.energy.sweep,
                reward: outcome.reward,
                mae: outcome.sensing_error,
            });
            features_log.push(features);
            channels.push(outcome.true_channel.true_channel.clone());
            state = outcome.next_state;
        }
        Ok((features_log, channels, records))
    }
}

impl TrainablePolicy for FixedSchedulePolicy {
    fn name(&self) -> &'static str {
        if self.always_on {
            "vision-only"
        } else {
            "radar-only"
        }
    }

    fn train_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        _rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        let (features, channels, records) = self.rollout(env, seed)?;
        let k = self.spatial.user_count as Real;
        let m = self.spatial.element_count as Real;
        let lambda = self.hp.lambda_phys / (k * records.len() as Real * m);
        spatial_update(
            &mut self.spatial,
            &features,
            &channels,
            lambda,
            &mut self.opt_spatial,
        )?;
        Ok(EpisodeReport::from_records(records))
    }

    fn eval_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        _rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        let (_, _, records) = self.rollout(env, seed)?;
        Ok(EpisodeReport::from_records(records))
    }

    fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut ckpt = Checkpoint::new(self.name());
        let s = self.spatial.mlp.params_flat();
        ckpt.insert_flat("spatial", vec![s.len()], &s);
        ckpt.insert_optimizer("spatial", &self.opt_spatial);
        ckpt.save(path)
    }

    fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint::load(path)?;
        self.spatial.mlp.set_params_flat(&ckpt.tensor::<Real>("spatial")?);
        self.opt_spatial = ckpt.optimizer("spatial")?;
        Ok(())
    }
}

/// Clipped-surrogate loss contribution of one slot and its gradient on the
/// Bernoulli logits. With ratio r = exp(lp - lp_old):
/// L = -min(r A, clamp(r, 1-c, 1+c) A); the gradient flows through r only
/// when the unclipped branch attains the min.
pub fn ppo_surrogate_grad_logits(
    probs: &[Real],
    schedule: &[bool],
    old_log_prob: Real,
    advantage: Real,
    clip: Real,
) -> (Real, Vec<Real>) {
    let lp = schedule_log_prob(probs, schedule);
    let ratio = (lp - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    let loss = -unclipped.min(clipped);
    let grad_active = unclipped <= clipped;
    let d_logits = probs
        .iter()
        .zip(schedule)
        .map(|(&p, &a)| {
            if grad_active {
                let a = if a { 1.0 } else { 0.0 };
                -advantage * ratio * (a - p)
            } else {
                0.0
            }
        })
        .collect();
    (loss, d_logits)
}

/// Shared-trunk monolithic network: tanh MLP trunk, three linear heads
/// (schedule logits, phases, value). The deliberate point of this baseline
/// is that spatial and temporal gradients collide in the trunk.
pub struct PpoNet {
    pub trunk: Mlp<Real>,
    pub head_sched: DenseLayer<Real>,
    pub head_phase: DenseLayer<Real>,
    pub head_value: DenseLayer<Real>,
    pub user_count: usize,
    pub element_count: usize,
    pub clamp_eps: Real,
}

/// Activations cached for one forward pass through the shared net.
pub struct PpoNetTrace {
    trunk_trace: crate::neural::MlpTrace<Real>,
    /// tanh of the trunk's linear output (the shared representation).
    rep: Vec<Real>,
    pub raw_sigmoid: Vec<Real>,
    pub probs: Vec<Real>,
    pub raw_phases: Vec<Real>,
    pub value: Real,
}

impl PpoNet {
    pub fn new(
        user_count: usize,
        element_count: usize,
        hidden: usize,
        clamp_eps: Real,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let f = 3 * user_count;
        Self {
            trunk: Mlp::init(&[f, hidden, hidden], rng),
            head_sched: DenseLayer::init(hidden, user_count, rng),
            head_phase: DenseLayer::init(hidden, user_count * element_count, rng),
            head_value: DenseLayer::init(hidden, 1, rng),
            user_count,
            element_count,
            clamp_eps,
        }
    }

    pub fn forward(&self, features: &[Real]) -> Result<PpoNetTrace> {
        let trunk_trace = self.trunk.forward_trace(features)?;
        let rep: Vec<Real> = trunk_trace.output.iter().map(|v| v.tanh()).collect();
        let logits = self.head_sched.forward(&rep)?;
        let raw_sigmoid: Vec<Real> = logits.iter().map(|&z| sigmoid(z)).collect();
        let probs = raw_sigmoid
            .iter()
            .map(|&s| s.clamp(self.clamp_eps, 1.0 - self.clamp_eps))
            .collect();
        let raw_phases = self.head_phase.forward(&rep)?;
        let value = self.head_value.forward(&rep)?[0];
        Ok(PpoNetTrace {
            trunk_trace,
            rep,
            raw_sigmoid,
            probs,
            raw_phases,
            value,
        })
    }

    pub fn phases_matrix(&self, raw: &[Real]) -> Vec<Vec<Real>> {
        raw.chunks(self.element_count)
            .map(|c| c.iter().map(|&p| wrap_phase(p)).collect())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count()
            + self.head_sched.param_count()
            + self.head_phase.param_count()
            + self.head_value.param_count()
    }

    pub fn params_flat(&self) -> Vec<Real> {
        let mut out = self.trunk.params_flat();
        self.head_sched.push_params(&mut out);
        self.head_phase.push_params(&mut out);
        self.head_value.push_params(&mut out);
        out
    }

    pub fn set_params_flat(&mut self, src: &[Real]) {
        let mut offset = self.trunk.param_count();
        self.trunk.set_params_flat(&src[..offset]);
        self.head_sched.load_params(src, &mut offset);
        self.head_phase.load_params(src, &mut offset);
        self.head_value.load_params(src, &mut offset);
        debug_assert_eq!(offset, src.len());
    }

    /// Backpropagate head-output gradients through the shared trunk and
    /// accumulate into a flat gradient vector (layout of `params_flat`).
    pub fn accumulate_grads(
        &self,
        trace: &PpoNetTrace,
        d_logits: &[Real],
        d_raw_phases: &[Real],
        d_value: Real,
        flat: &mut [Real],
    ) -> Result<()> {
        let (d_rep_s, g_sched) = self.head_sched.backward(&trace.rep, d_logits)?;
        let (d_rep_p, g_phase) = self.head_phase.backward(&trace.rep, d_raw_phases)?;
        let (d_rep_v, g_value) = self.head_value.backward(&trace.rep, &[d_value])?;
        // Sum the three head contributions, chain through the trunk tanh.
        let d_trunk_out: Vec<Real> = (0..trace.rep.len())
            .map(|i| {
                let t = trace.rep[i];
                (d_rep_s[i] + d_rep_p[i] + d_rep_v[i]) * (1.0 - t * t)
            })
            .collect();
        let (_, trunk_grads) = self.trunk.backward(&trace.trunk_trace, &d_trunk_out)?;
        let mut local = Mlp::grads_flat(&trunk_grads);
        g_sched.push_flat(&mut local);
        g_phase.push_flat(&mut local);
        g_value.push_flat(&mut local);
        for (acc, g) in flat.iter_mut().zip(&local) {
            *acc += g;
        }
        Ok(())
    }
}

/// PPO clip range.
pub const PPO_CLIP: Real = 0.2;
/// Surrogate epochs per collected episode.
pub const PPO_EPOCHS: usize = 4;
/// Value-loss weight in the summed objective.
pub const VALUE_LOSS_WEIGHT: Real = 0.5;

pub struct PpoPolicy {
    pub net: PpoNet,
    pub opt: AdamState<Real>,
    pub hp: HyperParams,
    episodes_trained: usize,
}

struct PpoRollout {
    features: Vec<Vec<Real>>,
    schedules: Vec<Vec<bool>>,
    old_log_probs: Vec<Real>,
    rewards: Vec<Real>,
    channels: Vec<Vec<Vec<Cplx>>>,
    records: Vec<SlotRecord>,
}

impl PpoPolicy {
    pub fn new(
        user_count: usize,
        element_count: usize,
        hp: HyperParams,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        hp.validate()?;
        let net = PpoNet::new(user_count, element_count, hp.mlp_hidden, hp.clamp_eps, rng);
        let opt = AdamState::new(net.param_count(), hp.lr_temporal);
        Ok(Self {
            net,
            opt,
            hp,
            episodes_trained: 0,
        })
    }

    fn entropy_coef_now(&self) -> Real {
        let frac = 1.0 - self.episodes_trained as Real / self.hp.entropy_anneal_episodes as Real;
        self.hp.entropy_coef * frac.max(0.0)
    }

    fn rollout(
        &self,
        env: &mut Env,
        seed: u64,
        rng: &mut ChaCha12Rng,
        deterministic: bool,
    ) -> Result<PpoRollout> {
        let aoi_cap = env.config().reliability.aoi_cap;
        let horizon = env.config().horizon;
        let mut roll = PpoRollout {
            features: Vec::with_capacity(horizon),
            schedules: Vec::with_capacity(horizon),
            old_log_probs: Vec::with_capacity(horizon),
            rewards: Vec::with_capacity(horizon),
            channels: Vec::with_capacity(horizon),
            records: Vec::with_capacity(horizon),
        };
        let mut state = env.reset(seed);
        for slot in 0..horizon {
            let features = featurize(&state, aoi_cap, false);
            let trace = self.net.forward(&features)?;
            let (schedule, log_prob) = if deterministic {
                let greedy = greedy_schedule(&trace.probs);
                let lp = schedule_log_prob(&trace.probs, &greedy);
                (greedy, lp)
            } else {
                sample_schedule(&trace.probs, rng)
            };
            let phases = self.net.phases_matrix(&trace.raw_phases);
            let action = JointAction::new(schedule.clone(), phases)?;
            let outcome = env.step(&action)?;
            roll.records.push(SlotRecord {
                slot,
                ages: state.ages(),
                schedule: schedule.clone(),
                avg_bmp: outcome.avg_bmp,
                e_comp: outcome.energy.computational,
                e_sweep: outcome.energy.sweep,
                reward: outcome.reward,
                mae: outcome.sensing_error,
            });
            roll.features.push(features);
            roll.schedules.push(schedule);
            roll.old_log_probs.push(log_prob);
            roll.rewards.push(outcome.reward);
            roll.channels.push(outcome.true_channel.true_channel.clone());
            state = outcome.next_state;
        }
        Ok(roll)
    }
}

impl TrainablePolicy for PpoPolicy {
    fn name(&self) -> &'static str {
        "ppo"
    }

    fn train_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        let roll = self.rollout(env, seed, rng, false)?;
        let n = roll.features.len();
        let scaled: Vec<Real> = roll.rewards.iter().map(|r| r * self.hp.reward_scale).collect();
        let values: Vec<Real> = roll
            .features
            .iter()
            .map(|f| Ok(self.net.forward(f)?.value))
            .collect::<Result<_>>()?;
        let (returns, advantages) = compute_advantages(&scaled, &values, self.hp.gamma);
        let k = self.net.user_count as Real;
        let m = self.net.element_count as Real;
        let lambda = self.hp.lambda_phys / (k * n as Real * m);
        let coef = self.entropy_coef_now();
        let eps = self.net.clamp_eps;

        for _epoch in 0..PPO_EPOCHS {
            let mut flat = vec![0.0; self.net.param_count()];
            for slot in 0..n {
                let trace = self.net.forward(&roll.features[slot])?;
                let (_, mut d_logits) = ppo_surrogate_grad_logits(
                    &trace.probs,
                    &roll.schedules[slot],
                    roll.old_log_probs[slot],
                    advantages[slot],
                    PPO_CLIP,
                );
                for kx in 0..d_logits.len() {
                    // Clamp saturation zeroes the sigmoid pathway.
                    let active = trace.raw_sigmoid[kx] > eps && trace.raw_sigmoid[kx] < 1.0 - eps;
                    if !active {
                        d_logits[kx] = 0.0;
                        continue;
                    }
                    if coef > 0.0 {
                        let p = trace.probs[kx];
                        d_logits[kx] -= coef * ((1.0 - p) / p).ln() * p * (1.0 - p);
                    }
                }
                // Spatial gain loss through the shared trunk.
                let phases = self.net.phases_matrix(&trace.raw_phases);
                let (_, grad) = spatial_loss_and_grad(&phases, &roll.channels[slot], lambda)?;
                let d_raw_phases: Vec<Real> = grad.into_iter().flatten().collect();
                // Value regression toward the discounted return.
                let d_value = VALUE_LOSS_WEIGHT * 2.0 * (trace.value - returns[slot]) / n as Real;
                self.net
                    .accumulate_grads(&trace, &d_logits, &d_raw_phases, d_value, &mut flat)?;
            }
            let mut params = self.net.params_flat();
            adam_step(&mut params, &flat, &mut self.opt)?;
            self.net.set_params_flat(&params);
        }
        self.episodes_trained += 1;
        Ok(EpisodeReport::from_records(roll.records))
    }

    fn eval_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        let roll = self.rollout(env, seed, rng, false)?;
        Ok(EpisodeReport::from_records(roll.records))
    }

    fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut ckpt = Checkpoint::new("ppo");
        let p = self.net.params_flat();
        ckpt.insert_flat("net", vec![p.len()], &p);
        ckpt.insert_optimizer("net", &self.opt);
        ckpt.save(path)
    }

    fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint::load(path)?;
        self.net.set_params_flat(&ckpt.tensor::<Real>("net")?);
        self.opt = ckpt.optimizer("net")?;
        Ok(())
    }
}

/// Two structurally identical tanh MLP experts mixed by a softmax gate over
/// the shared state; the mixed representation feeds the same three heads as
/// the PPO net. Trained with the summed loss, no isolation.
pub struct HomoMoeNet {
    pub experts: [Mlp<Real>; 2],
    pub gate: DenseLayer<Real>,
    pub head_sched: DenseLayer<Real>,
    pub head_phase: DenseLayer<Real>,
    pub head_value: DenseLayer<Real>,
    pub user_count: usize,
    pub element_count: usize,
    pub clamp_eps: Real,
}

pub struct HomoMoeTrace {
    expert_traces: [crate::neural::MlpTrace<Real>; 2],
    expert_reps: [Vec<Real>; 2],
    gate_logits: Vec<Real>,
    pub gate_weights: Vec<Real>,
    /// Gate-mixed representation.
    rep: Vec<Real>,
    pub raw_sigmoid: Vec<Real>,
    pub probs: Vec<Real>,
    pub raw_phases: Vec<Real>,
    pub value: Real,
}

fn softmax2(logits: &[Real]) -> Vec<Real> {
    let mx = logits.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let exps: Vec<Real> = logits.iter().map(|&z| (z - mx).exp()).collect();
    let sum: Real = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

impl HomoMoeNet {
    pub fn new(
        user_count: usize,
        element_count: usize,
        hidden: usize,
        clamp_eps: Real,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let f = 3 * user_count;
        Self {
            experts: [
                Mlp::init(&[f, hidden, hidden], rng),
                Mlp::init(&[f, hidden, hidden], rng),
            ],
            gate: DenseLayer::init(f, 2, rng),
            head_sched: DenseLayer::init(hidden, user_count, rng),
            head_phase: DenseLayer::init(hidden, user_count * element_count, rng),
            head_value: DenseLayer::init(hidden, 1, rng),
            user_count,
            element_count,
            clamp_eps,
        }
    }

    pub fn forward(&self, features: &[Real]) -> Result<HomoMoeTrace> {
        let t0 = self.experts[0].forward_trace(features)?;
        let t1 = self.experts[1].forward_trace(features)?;
        let r0: Vec<Real> = t0.output.iter().map(|v| v.tanh()).collect();
        let r1: Vec<Real> = t1.output.iter().map(|v| v.tanh()).collect();
        let gate_logits = self.gate.forward(features)?;
        let gw = softmax2(&gate_logits);
        let rep: Vec<Real> = (0..r0.len()).map(|i| gw[0] * r0[i] + gw[1] * r1[i]).collect();
        let logits = self.head_sched.forward(&rep)?;
        let raw_sigmoid: Vec<Real> = logits.iter().map(|&z| sigmoid(z)).collect();
        let probs = raw_sigmoid
            .iter()
            .map(|&s| s.clamp(self.clamp_eps, 1.0 - self.clamp_eps))
            .collect();
        let raw_phases = self.head_phase.forward(&rep)?;
        let value = self.head_value.forward(&rep)?[0];
        Ok(HomoMoeTrace {
            expert_traces: [t0, t1],
            expert_reps: [r0, r1],
            gate_logits,
            gate_weights: gw,
            rep,
            raw_sigmoid,
            probs,
            raw_phases,
            value,
        })
    }

    pub fn phases_matrix(&self, raw: &[Real]) -> Vec<Vec<Real>> {
        raw.chunks(self.element_count)
            .map(|c| c.iter().map(|&p| wrap_phase(p)).collect())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.experts.iter().map(|e| e.param_count()).sum::<usize>()
            + self.gate.param_count()
            + self.head_sched.param_count()
            + self.head_phase.param_count()
            + self.head_value.param_count()
    }

    pub fn params_flat(&self) -> Vec<Real> {
        let mut out = self.experts[0].params_flat();
        out.extend(self.experts[1].params_flat());
        self.gate.push_params(&mut out);
        self.head_sched.push_params(&mut out);
        self.head_phase.push_params(&mut out);
        self.head_value.push_params(&mut out);
        out
    }

    pub fn set_params_flat(&mut self, src: &[Real]) {
        let e = self.experts[0].param_count();
        self.experts[0].set_params_flat(&src[..e]);
        self.experts[1].set_params_flat(&src[e..2 * e]);
        let mut offset = 2 * e;
        self.gate.load_params(src, &mut offset);
        self.head_sched.load_params(src, &mut offset);
        self.head_phase.load_params(src, &mut offset);
        self.head_value.load_params(src, &mut offset);
        debug_assert_eq!(offset, src.len());
    }

    /// Backpropagate through heads, gate mixing, and both experts; the
    /// summed-loss structure means every parameter can receive gradient.
    pub fn accumulate_grads(
        &self,
        features: &[Real],
        trace: &HomoMoeTrace,
        d_logits: &[Real],
        d_raw_phases: &[Real],
        d_value: Real,
        flat: &mut [Real],
    ) -> Result<()> {
        let (d_rep_s, g_sched) = self.head_sched.backward(&trace.rep, d_logits)?;
        let (d_rep_p, g_phase) = self.head_phase.backward(&trace.rep, d_raw_phases)?;
        let (d_rep_v, g_value) = self.head_value.backward(&trace.rep, &[d_value])?;
        let d_rep: Vec<Real> = (0..trace.rep.len())
            .map(|i| d_rep_s[i] + d_rep_p[i] + d_rep_v[i])
            .collect();

        // Experts: d_expert_i = gate_i * d_rep, chained through their tanh.
        let mut expert_grads = Vec::with_capacity(2);
        for i in 0..2 {
            let d_out: Vec<Real> = d_rep
                .iter()
                .zip(&trace.expert_reps[i])
                .map(|(&d, &t)| d * trace.gate_weights[i] * (1.0 - t * t))
                .collect();
            let (_, g) = self.experts[i].backward(&trace.expert_traces[i], &d_out)?;
            expert_grads.push(Mlp::grads_flat(&g));
        }

        // Gate: dL/dg_i = <d_rep, expert_rep_i>, softmax jacobian to logits.
        let dg: Vec<Real> = (0..2)
            .map(|i| {
                d_rep
                    .iter()
                    .zip(&trace.expert_reps[i])
                    .map(|(&d, &r)| d * r)
                    .sum()
            })
            .collect();
        let gw = &trace.gate_weights;
        let d_gate_logits: Vec<Real> = (0..2)
            .map(|i| {
                (0..2)
                    .map(|j| {
                        let kron = if i == j { 1.0 } else { 0.0 };
                        dg[j] * gw[j] * (kron - gw[i])
                    })
                    .sum()
            })
            .collect();
        let _ = &trace.gate_logits;
        let (_, g_gate) = self.gate.backward(features, &d_gate_logits)?;

        let mut local = expert_grads.remove(0);
        local.extend(expert_grads.remove(0));
        g_gate.push_flat(&mut local);
        g_sched.push_flat(&mut local);
        g_phase.push_flat(&mut local);
        g_value.push_flat(&mut local);
        for (acc, g) in flat.iter_mut().zip(&local) {
            *acc += g;
        }
        Ok(())
    }
}

pub struct HomoMoePolicy {
    pub net: HomoMoeNet,
    pub opt: AdamState<Real>,
    pub hp: HyperParams,
    episodes_trained: usize,
}

impl HomoMoePolicy {
    pub fn new(
        user_count: usize,
        element_count: usize,
        hp: HyperParams,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        hp.validate()?;
        let net = HomoMoeNet::new(user_count, element_count, hp.mlp_hidden, hp.clamp_eps, rng);
        let opt = AdamState::new(net.param_count(), hp.lr_temporal);
        Ok(Self {
            net,
            opt,
            hp,
            episodes_trained: 0,
        })
    }

    fn entropy_coef_now(&self) -> Real {
        let frac = 1.0 - self.episodes_trained as Real / self.hp.entropy_anneal_episodes as Real;
        self.hp.entropy_coef * frac.max(0.0)
    }
}

impl TrainablePolicy for HomoMoePolicy {
    fn name(&self) -> &'static str {
        "homo-moe"
    }

    fn train_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        let aoi_cap = env.config().reliability.aoi_cap;
        let horizon = env.config().horizon;
        let mut features_log = Vec::with_capacity(horizon);
        let mut schedules = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        let mut channels = Vec::with_capacity(horizon);
        let mut records = Vec::with_capacity(horizon);
        let mut state = env.reset(seed);
        for slot in 0..horizon {
            let features = featurize(&state, aoi_cap, false);
            let trace = self.net.forward(&features)?;
            let (schedule, _) = sample_schedule(&trace.probs, rng);
            let phases = self.net.phases_matrix(&trace.raw_phases);
            let action = JointAction::new(schedule.clone(), phases)?;
            let outcome = env.step(&action)?;
            records.push(SlotRecord {
                slot,
                ages: state.ages(),
                schedule: schedule.clone(),
                avg_bmp: outcome.avg_bmp,
                e_comp: outcome.energy.computational,
                e_sweep: outcome.energy.sweep,
                reward: outcome.reward,
                mae: outcome.sensing_error,
            });
            features_log.push(features);
            schedules.push(schedule);
            rewards.push(outcome.reward);
            channels.push(outcome.true_channel.true_channel.clone());
            state = outcome.next_state;
        }

        let n = features_log.len();
        let scaled: Vec<Real> = rewards.iter().map(|r| r * self.hp.reward_scale).collect();
        let values: Vec<Real> = features_log
            .iter()
            .map(|f| Ok(self.net.forward(f)?.value))
            .collect::<Result<_>>()?;
        let (returns, advantages) = compute_advantages(&scaled, &values, self.hp.gamma);
        let k = self.net.user_count as Real;
        let m = self.net.element_count as Real;
        let lambda = self.hp.lambda_phys / (k * n as Real * m);
        let coef = self.entropy_coef_now();
        let eps = self.net.clamp_eps;

        // Summed loss, one gradient accumulation, one step: REINFORCE term,
        // spatial gain term, value regression — all through the shared gate
        // and experts.
        let mut flat = vec![0.0; self.net.param_count()];
        for slot in 0..n {
            let trace = self.net.forward(&features_log[slot])?;
            let mut d_logits = vec![0.0; self.net.user_count];
            for kx in 0..d_logits.len() {
                let active = trace.raw_sigmoid[kx] > eps && trace.raw_sigmoid[kx] < 1.0 - eps;
                if !active {
                    continue;
                }
                let a = if schedules[slot][kx] { 1.0 } else { 0.0 };
                let p = trace.probs[kx];
                d_logits[kx] = -(a - p) * advantages[slot];
                if coef > 0.0 {
                    d_logits[kx] -= coef * ((1.0 - p) / p).ln() * p * (1.0 - p);
                }
            }
            let phases = self.net.phases_matrix(&trace.raw_phases);
            let (_, grad) = spatial_loss_and_grad(&phases, &channels[slot], lambda)?;
            let d_raw_phases: Vec<Real> = grad.into_iter().flatten().collect();
            let d_value = VALUE_LOSS_WEIGHT * 2.0 * (trace.value - returns[slot]) / n as Real;
            self.net.accumulate_grads(
                &features_log[slot],
                &trace,
                &d_logits,
                &d_raw_phases,
                d_value,
                &mut flat,
            )?;
        }
        let mut params = self.net.params_flat();
        adam_step(&mut params, &flat, &mut self.opt)?;
        self.net.set_params_flat(&params);
        self.episodes_trained += 1;
        Ok(EpisodeReport::from_records(records))
    }

    fn eval_episode(
        &mut self,
        env: &mut Env,
        seed: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<EpisodeReport> {
        let aoi_cap = env.config().reliability.aoi_cap;
        let horizon = env.config().horizon;
        let mut records = Vec::with_capacity(horizon);
        let mut state = env.reset(seed);
        for slot in 0..horizon {
            let features = featurize(&state, aoi_cap, false);
            let trace = self.net.forward(&features)?;
            let (schedule, _) = sample_schedule(&trace.probs, rng);
            let phases = self.net.phases_matrix(&trace.raw_phases);
            let action = JointAction::new(schedule.clone(), phases)?;
            let outcome = env.step(&action)?;
            records.push(SlotRecord {
                slot,
                ages: state.ages(),
                schedule,
                avg_bmp: outcome.avg_bmp,
                e_comp: outcome.energy.computational,
                e_sweep: outcome.energy.sweep,
                reward: outcome.reward,
                mae: outcome.sensing_error,
            });
            state = outcome.next_state;
        }
        Ok(EpisodeReport::from_records(records))
    }

    fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut ckpt = Checkpoint::new("homo-moe");
        let p = self.net.params_flat();
        ckpt.insert_flat("net", vec![p.len()], &p);
        ckpt.insert_optimizer("net", &self.opt);
        ckpt.save(path)
    }

    fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint::load(path)?;
        self.net.set_params_flat(&ckpt.tensor::<Real>("net")?);
        self.opt = ckpt.optimizer("net")?;
        Ok(())
    }
}

// Suppress dead-code warning for the cached gate logits (kept for debugging
// and future inspection APIs).
impl HomoMoeTrace {
    pub fn gate_logits(&self) -> &[Real] {
        &self.gate_logits
    }
}
