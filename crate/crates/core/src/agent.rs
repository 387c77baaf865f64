//! The decoupled mixture-of-experts controller: a recurrent temporal expert
//! for sensor scheduling, a feedforward spatial expert for beam phases, a
//! critic for advantage estimation, and the training loop that updates the
//! two experts with strictly disjoint losses and parameter sets.
//!
//! Isolation is structural: the temporal loss can only touch the LSTM and
//! policy head, the spatial loss only the phase MLP. The tests additionally
//! verify this bitwise.

use crate::env::{wrap_phase, Env, JointAction, SlotRecord, SystemState};
use crate::error::{Error, Result};
use crate::neural::{
    adam_step, AdamState, Checkpoint, DenseLayer, LstmCell, Mlp,
};
use crate::{Cplx, Real};
use rand::Rng;
use std::path::Path;

/// Training hyperparameters. Everything unstated upstream has a default
/// chosen for stability at desk scale.
#[derive(Debug, Clone)]
pub struct HyperParams {
    /// Physics weight on the spatial gain loss, before the per-episode
    /// K*N*M normalization.
    pub lambda_phys: Real,
    /// Discount factor.
    pub gamma: Real,
    pub lr_temporal: Real,
    pub lr_spatial: Real,
    pub lr_critic: Real,
    /// State-buffer window the LSTM unrolls over (and BPTT depth).
    pub window: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub critic_hidden: usize,
    /// Sigmoid output clamp: probabilities live in (eps, 1-eps).
    pub clamp_eps: Real,
    /// Initial Bernoulli entropy bonus, annealed linearly to zero.
    pub entropy_coef: Real,
    /// Episodes over which the entropy bonus anneals to zero.
    pub entropy_anneal_episodes: usize,
    /// Rewards are multiplied by this before critic regression so value
    /// targets stay O(1); advantages are normalized so the policy gradient
    /// is unaffected.
    pub reward_scale: Real,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda_phys: 1e4,
            gamma: 0.85,
            lr_temporal: 3e-2,
            lr_spatial: 3e-4,
            lr_critic: 3e-3,
            window: 10,
            lstm_hidden: 32,
            mlp_hidden: 64,
            critic_hidden: 64,
            clamp_eps: 1e-3,
            entropy_coef: 1e-3,
            entropy_anneal_episodes: 400,
            reward_scale: 0.01,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must be in (0, 1]".into()));
        }
        if self.lambda_phys <= 0.0 {
            return Err(Error::Config("lambda_phys must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Config("clamp_eps must be in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Distance normalization constant for state featurization, meters.
pub const DISTANCE_SCALE_M: Real = 100.0;

/// Flatten one observation into the 3K feature vector both experts consume:
/// angle / (pi/2), distance / 100 m, age / A_max. `mask_age` zeroes the age
/// column (observational ablation; the environment still evolves true AoI).
pub fn featurize(state: &SystemState, aoi_cap: Real, mask_age: bool) -> Vec<Real> {
    let mut out = Vec::with_capacity(3 * state.rows.len());
    for row in &state.rows {
        out.push(row[0] / std::f64::consts::FRAC_PI_2);
        out.push(row[1] / DISTANCE_SCALE_M);
        out.push(if mask_age { 0.0 } else { row[2] / aoi_cap });
    }
    out
}

pub(crate) fn sigmoid(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

/// Recurrent scheduling policy: LSTM over the recent-state window, a dense
/// head to K logits, sigmoid, clamped to (eps, 1-eps).
#[derive(Debug, Clone)]
pub struct TemporalExpert {
    pub lstm: LstmCell<Real>,
    pub head: DenseLayer<Real>,
    pub clamp_eps: Real,
}

impl TemporalExpert {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        hidden: usize,
        user_count: usize,
        clamp_eps: Real,
        rng: &mut R,
    ) -> Self {
        Self {
            lstm: LstmCell::init(feature_dim, hidden, rng),
            head: DenseLayer::init(hidden, user_count, rng),
            clamp_eps,
        }
    }

    pub fn zeros(feature_dim: usize, hidden: usize, user_count: usize, clamp_eps: Real) -> Self {
        Self {
            lstm: LstmCell::zeros(feature_dim, hidden),
            head: DenseLayer::zeros(hidden, user_count),
            clamp_eps,
        }
    }

    pub fn param_count(&self) -> usize {
        self.lstm.param_count() + self.head.param_count()
    }

    pub fn params_flat(&self) -> Vec<Real> {
        let mut out = self.lstm.params_flat();
        self.head.push_params(&mut out);
        out
    }

    pub fn set_params_flat(&mut self, src: &[Real]) {
        let split = self.lstm.param_count();
        self.lstm.set_params_flat(&src[..split]);
        let mut offset = split;
        self.head.load_params(src, &mut offset);
        debug_assert_eq!(offset, src.len());
    }

    /// Activation probabilities for the newest slot of a state window.
    pub fn probs(&self, window: &[Vec<Real>]) -> Result<Vec<Real>> {
        if window.is_empty() {
            return Err(Error::Domain("empty state window".into()));
        }
        let hidden = self.lstm.final_hidden(window)?;
        let logits = self.head.forward(&hidden)?;
        Ok(logits
            .iter()
            .map(|&z| sigmoid(z).clamp(self.clamp_eps, 1.0 - self.clamp_eps))
            .collect())
    }
}

/// Mode of the factored Bernoulli policy: activate exactly the users whose
/// probability is at least one half. Used for deterministic evaluation.
pub fn greedy_schedule(probs: &[Real]) -> Vec<bool> {
    probs.iter().map(|&p| p >= 0.5).collect()
}

/// Independent Bernoulli draw per user plus the joint log-probability
/// log P(a|p) = sum_k a_k ln p_k + (1-a_k) ln(1-p_k).
pub fn sample_schedule<R: Rng + ?Sized>(probs: &[Real], rng: &mut R) -> (Vec<bool>, Real) {
    let schedule: Vec<bool> = probs.iter().map(|&p| rng.gen_bool(p)).collect();
    (schedule.clone(), schedule_log_prob(probs, &schedule))
}

pub fn schedule_log_prob(probs: &[Real], schedule: &[bool]) -> Real {
    probs
        .iter()
        .zip(schedule)
        .map(|(&p, &a)| if a { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

/// Feedforward phase generator: 3K features -> hidden -> hidden -> K*M raw
/// phases, wrapped to [-pi, pi) at the output boundary.
#[derive(Debug, Clone)]
pub struct SpatialExpert {
    pub mlp: Mlp<Real>,
    pub user_count: usize,
    pub element_count: usize,
}

impl SpatialExpert {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        hidden: usize,
        user_count: usize,
        element_count: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            mlp: Mlp::init(&[feature_dim, hidden, hidden, user_count * element_count], rng),
            user_count,
            element_count,
        }
    }

    /// K x M wrapped phase matrix for one state.
    pub fn phases(&self, features: &[Real]) -> Result<Vec<Vec<Real>>> {
        let raw = self.mlp.forward(features)?;
        Ok(self.reshape(&raw))
    }

    fn reshape(&self, raw: &[Real]) -> Vec<Vec<Real>> {
        raw.chunks(self.element_count)
            .map(|c| c.iter().map(|&p| wrap_phase(p)).collect())
            .collect()
    }
}

/// State-value MLP trained by squared-error regression to discounted
/// returns (in reward-scaled units).
#[derive(Debug, Clone)]
pub struct Critic {
    pub mlp: Mlp<Real>,
    pub gamma: Real,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, hidden: usize, gamma: Real, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::init(&[feature_dim, hidden, hidden, 1], rng),
            gamma,
        }
    }

    pub fn value(&self, features: &[Real]) -> Result<Real> {
        let out = self.mlp.forward(features)?;
        let v = out[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("critic value".into()));
        }
        Ok(v)
    }
}

/// Per-slot rollout record accumulated during an episode.
#[derive(Debug, Clone)]
pub struct TrajectoryBuffer {
    /// Featurized state per slot (what the experts actually saw).
    pub features: Vec<Vec<Real>>,
    pub schedules: Vec<Vec<bool>>,
    pub log_probs: Vec<Real>,
    pub rewards: Vec<Real>,
    /// True channel rows per slot, K x M.
    pub channels: Vec<Vec<Vec<Cplx>>>,
    pub phases: Vec<Vec<Vec<Real>>>,
}

impl TrajectoryBuffer {
    pub fn new() -> Self {
        Self {
            features: Vec::new(),
            schedules: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            channels: Vec::new(),
            phases: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

impl Default for TrajectoryBuffer {
    fn default() -> Self {
        Self::new()
    }
}

/// Spatial gain loss and its analytic phase gradient for one slot:
/// loss = -lambda * sum_k |h_k^H v_k|^2 over the constant-modulus beams
/// v = exp(j Phi)/sqrt(M), with
/// d|g|^2/dPhi_{k,m} = -2 Im(conj(g) * conj(h_{k,m}) * v_{k,m}).
pub fn spatial_loss_and_grad(
    phases: &[Vec<Real>],
    true_channel: &[Vec<Cplx>],
    lambda: Real,
) -> Result<(Real, Vec<Vec<Real>>)> {
    if phases.len() != true_channel.len() {
        return Err(Error::Shape("phase/channel user count mismatch".into()));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(phases.len());
    for (row, h) in phases.iter().zip(true_channel) {
        if row.len() != h.len() {
            return Err(Error::Shape("phase/channel element count mismatch".into()));
        }
        let m = row.len() as Real;
        let inv_sqrt_m = 1.0 / m.sqrt();
        let v: Vec<Cplx> = row.iter().map(|&p| Cplx::from_polar(inv_sqrt_m, p)).collect();
        let g: Cplx = h.iter().zip(&v).map(|(hm, vm)| hm.conj() * vm).sum();
        loss -= lambda * g.norm_sqr();
        let grow: Vec<Real> = h
            .iter()
            .zip(&v)
            .map(|(hm, vm)| {
                // dLoss/dPhi = -lambda * d|g|^2/dPhi = 2 lambda Im(g* h* v).
                2.0 * lambda * (g.conj() * hm.conj() * vm).im
            })
            .collect();
        grad.push(grow);
    }
    Ok((loss, grad))
}

/// Discounted returns G_n = sum_{t >= n} gamma^{t-n} r_t.
pub fn discounted_returns(rewards: &[Real], gamma: Real) -> Vec<Real> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (slot, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        returns[slot] = acc;
    }
    returns
}

/// Raw advantages G_n - V(s_n), then normalized to zero mean / unit
/// variance across the episode (skipped for degenerate spread).
pub fn compute_advantages(
    buffer_rewards: &[Real],
    values: &[Real],
    gamma: Real,
) -> (Vec<Real>, Vec<Real>) {
    let returns = discounted_returns(buffer_rewards, gamma);
    let mut adv: Vec<Real> = returns.iter().zip(values).map(|(g, v)| g - v).collect();
    let n = adv.len() as Real;
    if adv.len() > 1 {
        let mean = adv.iter().sum::<Real>() / n;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<Real>() / n;
        let std = var.sqrt();
        if std > 1e-8 {
            for a in &mut adv {
                *a = (*a - mean) / std;
            }
        } else {
            for a in &mut adv {
                *a -= mean;
            }
        }
    }
    (returns, adv)
}

/// The window of features feeding the temporal expert at slot `n`.
fn window_at(features: &[Vec<Real>], n: usize, window: usize) -> &[Vec<Real>] {
    let start = (n + 1).saturating_sub(window);
    &features[start..=n]
}

/// REINFORCE-with-baseline loss over an episode, plus the annealed Bernoulli
/// entropy bonus: L = -sum_n [log P(a_n|p_n) A_n + c H(p_n)].
pub fn temporal_loss(
    expert: &TemporalExpert,
    features: &[Vec<Real>],
    schedules: &[Vec<bool>],
    advantages: &[Real],
    entropy_coef: Real,
    window: usize,
) -> Result<Real> {
    let mut loss = 0.0;
    for n in 0..features.len() {
        let p = expert.probs(window_at(features, n, window))?;
        loss -= schedule_log_prob(&p, &schedules[n]) * advantages[n];
        if entropy_coef > 0.0 {
            let h: Real = p
                .iter()
                .map(|&pk| -(pk * pk.ln() + (1.0 - pk) * (1.0 - pk).ln()))
                .sum();
            loss -= entropy_coef * h;
        }
    }
    Ok(loss)
}

/// Analytic gradient of [`temporal_loss`] in the expert's flat parameter
/// layout (LSTM, then head). BPTT runs over each slot's window.
pub fn temporal_grads(
    expert: &TemporalExpert,
    features: &[Vec<Real>],
    schedules: &[Vec<bool>],
    advantages: &[Real],
    entropy_coef: Real,
    window: usize,
) -> Result<(Real, Vec<Real>)> {
    let eps = expert.clamp_eps;
    let mut loss = 0.0;
    let mut lstm_grads = crate::neural::LstmGrads::zeros(expert.lstm.input_dim, expert.lstm.hidden_dim);
    let mut head_grads = crate::neural::DenseGrads::zeros_like(&expert.head);

    for n in 0..features.len() {
        let win = window_at(features, n, window);
        let trace = expert.lstm.forward_seq(win)?;
        let hidden = trace.hiddens.last().unwrap().clone();
        let logits = expert.head.forward(&hidden)?;
        let raw: Vec<Real> = logits.iter().map(|&z| sigmoid(z)).collect();
        let p: Vec<Real> = raw.iter().map(|&s| s.clamp(eps, 1.0 - eps)).collect();

        loss -= schedule_log_prob(&p, &schedules[n]) * advantages[n];

        // dL/dlogit_k: REINFORCE term -(a_k - p_k) A_n where the clamp is
        // inactive (zero subgradient where it saturates), plus the entropy
        // bonus term.
        let mut d_logits = vec![0.0; p.len()];
        for k in 0..p.len() {
            let active = raw[k] > eps && raw[k] < 1.0 - eps;
            if !active {
                continue;
            }
            let a = if schedules[n][k] { 1.0 } else { 0.0 };
            d_logits[k] = -(a - p[k]) * advantages[n];
            if entropy_coef > 0.0 {
                // dH/dlogit = ln((1-p)/p) * p(1-p); the loss carries -c H.
                d_logits[k] -= entropy_coef * ((1.0 - p[k]) / p[k]).ln() * p[k] * (1.0 - p[k]);
            }
        }
        if entropy_coef > 0.0 {
            let h: Real = p
                .iter()
                .map(|&pk| -(pk * pk.ln() + (1.0 - pk) * (1.0 - pk).ln()))
                .sum();
            loss -= entropy_coef * h;
        }

        let (d_hidden, hg) = expert.head.backward(&hidden, &d_logits)?;
        head_grads.accumulate(&hg);
        let mut d_hiddens = vec![vec![0.0; expert.lstm.hidden_dim]; win.len()];
        *d_hiddens.last_mut().unwrap() = d_hidden;
        let lg = expert.lstm.backward(&trace, &d_hiddens)?;
        lstm_grads.accumulate(&lg);
    }

    let mut flat = lstm_grads.flat();
    head_grads.push_flat(&mut flat);
    Ok((loss, flat))
}

/// One REINFORCE update of the temporal expert. Returns the loss. Only
/// temporal parameters are read or written.
pub fn temporal_loss_and_update(
    expert: &mut TemporalExpert,
    features: &[Vec<Real>],
    schedules: &[Vec<bool>],
    advantages: &[Real],
    entropy_coef: Real,
    window: usize,
    opt: &mut AdamState<Real>,
) -> Result<Real> {
    let (loss, grads) = temporal_grads(expert, features, schedules, advantages, entropy_coef, window)?;
    let mut params = expert.params_flat();
    adam_step(&mut params, &grads, opt)?;
    expert.set_params_flat(&params);
    Ok(loss)
}

/// Episodic spatial-expert update: accumulates the analytic phase gradient
/// backpropagated through the MLP over every slot, then one optimizer step.
/// `lambda` is already normalized by K*N*M by the caller. Returns the loss.
pub fn spatial_update(
    expert: &mut SpatialExpert,
    features: &[Vec<Real>],
    channels: &[Vec<Vec<Cplx>>],
    lambda: Real,
    opt: &mut AdamState<Real>,
) -> Result<Real> {
    let mut total_loss = 0.0;
    let mut flat_grads = vec![0.0; expert.mlp.param_count()];
    for (f, h) in features.iter().zip(channels) {
        let trace = expert.mlp.forward_trace(f)?;
        let phases = expert.reshape(&trace.output);
        let (loss, grad) = spatial_loss_and_grad(&phases, h, lambda)?;
        total_loss += loss;
        // Wrapping is a 2*pi-periodic shift: unit derivative everywhere it
        // matters, so the raw-output gradient equals the phase gradient.
        let upstream: Vec<Real> = grad.into_iter().flatten().collect();
        let (_, layer_grads) = expert.mlp.backward(&trace, &upstream)?;
        let flat = Mlp::grads_flat(&layer_grads);
        for (acc, g) in flat_grads.iter_mut().zip(&flat) {
            *acc += g;
        }
    }
    let mut params = expert.mlp.params_flat();
    adam_step(&mut params, &flat_grads, opt)?;
    expert.mlp.set_params_flat(&params);
    Ok(total_loss)
}

/// Critic regression toward the discounted returns (mean squared error).
pub fn critic_update(
    critic: &mut Critic,
    features: &[Vec<Real>],
    returns: &[Real],
    opt: &mut AdamState<Real>,
) -> Result<Real> {
    let n = features.len() as Real;
    let mut total_loss = 0.0;
    let mut flat_grads = vec![0.0; critic.mlp.param_count()];
    for (f, &g_target) in features.iter().zip(returns) {
        let trace = critic.mlp.forward_trace(f)?;
        let v = trace.output[0];
        let err = v - g_target;
        total_loss += err * err / n;
        let (_, layer_grads) = critic.mlp.backward(&trace, &[2.0 * err / n])?;
        let flat = Mlp::grads_flat(&layer_grads);
        for (acc, g) in flat_grads.iter_mut().zip(&flat) {
            *acc += g;
        }
    }
    let mut params = critic.mlp.params_flat();
    adam_step(&mut params, &flat_grads, opt)?;
    critic.mlp.set_params_flat(&params);
    Ok(total_loss)
}

/// Summary statistics of one rollout (training or evaluation).
#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub mean_reward: Real,
    pub mean_energy: Real,
    pub mean_e_comp: Real,
    pub mean_e_sweep: Real,
    pub mean_bmp: Real,
    pub mean_mae: Real,
    pub activation_rate: Real,
    pub records: Vec<SlotRecord>,
}

impl EpisodeReport {
    pub fn from_records(records: Vec<SlotRecord>) -> Self {
        let n = records.len().max(1) as Real;
        let k = records.first().map(|r| r.schedule.len()).unwrap_or(1) as Real;
        let sum = |f: &dyn Fn(&SlotRecord) -> Real| records.iter().map(|r| f(r)).sum::<Real>();
        Self {
            mean_reward: sum(&|r| r.reward) / n,
            mean_energy: sum(&|r| r.e_comp + r.e_sweep) / n,
            mean_e_comp: sum(&|r| r.e_comp) / n,
            mean_e_sweep: sum(&|r| r.e_sweep) / n,
            mean_bmp: sum(&|r| r.avg_bmp) / n,
            mean_mae: sum(&|r| r.mae) / n,
            activation_rate: sum(&|r| r.schedule.iter().filter(|&&s| s).count() as Real) / (n * k),
            records,
        }
    }
}

/// The full controller plus optimizer state.
#[derive(Debug, Clone)]
pub struct HmoeAgent {
    pub temporal: TemporalExpert,
    pub spatial: SpatialExpert,
    pub critic: Critic,
    pub hp: HyperParams,
    pub opt_temporal: AdamState<Real>,
    pub opt_spatial: AdamState<Real>,
    pub opt_critic: AdamState<Real>,
    /// Training episodes completed (drives entropy annealing).
    pub episodes_trained: usize,
    /// Zero the age feature before either expert sees it (ablation).
    pub mask_age: bool,
}

impl HmoeAgent {
    pub fn new<R: Rng + ?Sized>(
        user_count: usize,
        element_count: usize,
        hp: HyperParams,
        rng: &mut R,
    ) -> Result<Self> {
        hp.validate()?;
        let feature_dim = 3 * user_count;
        let temporal = TemporalExpert::new(feature_dim, hp.lstm_hidden, user_count, hp.clamp_eps, rng);
        let spatial = SpatialExpert::new(feature_dim, hp.mlp_hidden, user_count, element_count, rng);
        let critic = Critic::new(feature_dim, hp.critic_hidden, hp.gamma, rng);
        let opt_temporal = AdamState::new(temporal.param_count(), hp.lr_temporal);
        let opt_spatial = AdamState::new(spatial.mlp.param_count(), hp.lr_spatial);
        let opt_critic = AdamState::new(critic.mlp.param_count(), hp.lr_critic);
        Ok(Self {
            temporal,
            spatial,
            critic,
            hp,
            opt_temporal,
            opt_spatial,
            opt_critic,
            episodes_trained: 0,
            mask_age: false,
        })
    }

    /// Current entropy bonus: linear anneal to zero.
    pub fn entropy_coef_now(&self) -> Real {
        let frac = 1.0 - self.episodes_trained as Real / self.hp.entropy_anneal_episodes as Real;
        self.hp.entropy_coef * frac.max(0.0)
    }

    /// Roll one episode, sampling schedules from the temporal policy and
    /// phases from the spatial expert. Returns the rollout buffer and the
    /// per-slot records.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        env: &mut Env,
        seed: u64,
        rng: &mut R,
    ) -> Result<(TrajectoryBuffer, Vec<SlotRecord>)> {
        self.rollout_with(env, seed, rng, false)
    }

    /// Rollout with an explicit action-selection mode: sampled (training) or
    /// greedy/mode (evaluation, `deterministic = true`).
    pub fn rollout_with<R: Rng + ?Sized>(
        &self,
        env: &mut Env,
        seed: u64,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(TrajectoryBuffer, Vec<SlotRecord>)> {
        let aoi_cap = env.config().reliability.aoi_cap;
        let horizon = env.config().horizon;
        let mut buffer = TrajectoryBuffer::new();
        let mut records = Vec::with_capacity(horizon);
        let mut state = env.reset(seed);
        for slot in 0..horizon {
            let features = featurize(&state, aoi_cap, self.mask_age);
            buffer.features.push(features.clone());
            let n = buffer.features.len() - 1;
            let win = window_at(&buffer.features, n, self.hp.window);
            let probs = self.temporal.probs(win)?;
            let (schedule, log_prob) = if deterministic {
                let greedy = greedy_schedule(&probs);
                let lp = schedule_log_prob(&probs, &greedy);
                (greedy, lp)
            } else {
                sample_schedule(&probs, rng)
            };
            let phases = self.spatial.phases(&features)?;
            let action = JointAction::new(schedule.clone(), phases.clone())?;
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
            buffer.schedules.push(schedule);
            buffer.log_probs.push(log_prob);
            buffer.rewards.push(outcome.reward);
            buffer.channels.push(outcome.true_channel.true_channel.clone());
            buffer.phases.push(phases);
            state = outcome.next_state;
        }
        Ok((buffer, records))
    }

    /// One pass of the training loop: rollout, advantage computation, then
    /// the three isolated updates (temporal, spatial, critic).
    pub fn train_episode<R: Rng + ?Sized>(
        &mut self,
        env: &mut Env,
        seed: u64,
        rng: &mut R,
    ) -> Result<EpisodeReport> {
        let (buffer, records) = self.rollout(env, seed, rng)?;
        self.update_from_buffer(&buffer)?;
        Ok(EpisodeReport::from_records(records))
    }

    /// The episode-end learning step, separated from rollout so baselines
    /// and tests can drive it with custom trajectories.
    pub fn update_from_buffer(&mut self, buffer: &TrajectoryBuffer) -> Result<()> {
        let n = buffer.len();
        if n == 0 {
            return Err(Error::Domain("empty trajectory buffer".into()));
        }
        let scaled: Vec<Real> = buffer.rewards.iter().map(|r| r * self.hp.reward_scale).collect();
        let values: Vec<Real> = buffer
            .features
            .iter()
            .map(|f| self.critic.value(f))
            .collect::<Result<_>>()?;
        let (returns, advantages) = compute_advantages(&scaled, &values, self.hp.gamma);

        let coef = self.entropy_coef_now();
        temporal_loss_and_update(
            &mut self.temporal,
            &buffer.features,
            &buffer.schedules,
            &advantages,
            coef,
            self.hp.window,
            &mut self.opt_temporal,
        )?;
        let k = self.spatial.user_count as Real;
        let m = self.spatial.element_count as Real;
        let lambda = self.hp.lambda_phys / (k * n as Real * m);
        spatial_update(
            &mut self.spatial,
            &buffer.features,
            &buffer.channels,
            lambda,
            &mut self.opt_spatial,
        )?;
        critic_update(&mut self.critic, &buffer.features, &returns, &mut self.opt_critic)?;
        self.episodes_trained += 1;
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut ckpt = Checkpoint::new("hmoe-agent");
        let t = self.temporal.params_flat();
        ckpt.insert_flat("temporal", vec![t.len()], &t);
        let s = self.spatial.mlp.params_flat();
        ckpt.insert_flat("spatial", vec![s.len()], &s);
        let c = self.critic.mlp.params_flat();
        ckpt.insert_flat("critic", vec![c.len()], &c);
        ckpt.insert_optimizer("temporal", &self.opt_temporal);
        ckpt.insert_optimizer("spatial", &self.opt_spatial);
        ckpt.insert_optimizer("critic", &self.opt_critic);
        ckpt.save(path)
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint::load(path)?;
        self.temporal.set_params_flat(&ckpt.tensor::<Real>("temporal")?);
        self.spatial.mlp.set_params_flat(&ckpt.tensor::<Real>("spatial")?);
        self.critic.mlp.set_params_flat(&ckpt.tensor::<Real>("critic")?);
        self.opt_temporal = ckpt.optimizer("temporal")?;
        self.opt_spatial = ckpt.optimizer("spatial")?;
        self.opt_critic = ckpt.optimizer("critic")?;
        Ok(())
    }
}
