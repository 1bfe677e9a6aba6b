//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use lanekeep::agents::{policy_gradient, ActionSquash, DqnAgent, DqnConfig, Transition};
use lanekeep::nn::{Activation, GradientSet, Mlp, SgdConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;

pub fn loss(net: &Mlp, x: &[f64], c: &[f64]) -> f64 {
    net.predict(x)
        .unwrap()
        .iter()
        .zip(c)
        .map(|(y, c)| y * c)
        .sum()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn numeric_grads(net: &Mlp, x: &[f64], c: &[f64]) -> GradientSet {
    let mut g = GradientSet::zeros_like(net);
    let mut probe = net.clone();
    for k in 0..net.layers().len() {
        for i in 0..net.layers()[k].weights.len() {
            let w = net.layers()[k].weights[i];
            probe.layers_mut()[k].weights[i] = w + EPS;
            let up = loss(&probe, x, c);
            probe.layers_mut()[k].weights[i] = w - EPS;
            let down = loss(&probe, x, c);
            probe.layers_mut()[k].weights[i] = w;
            g.weights[k][i] = (up - down) / (2.0 * EPS);
        }
        for i in 0..net.layers()[k].bias.len() {
            let b = net.layers()[k].bias[i];
            probe.layers_mut()[k].bias[i] = b + EPS;
            let up = loss(&probe, x, c);
            probe.layers_mut()[k].bias[i] = b - EPS;
            let down = loss(&probe, x, c);
            probe.layers_mut()[k].bias[i] = b;
            g.biases[k][i] = (up - down) / (2.0 * EPS);
        }
    }
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] += EPS;
        let up = loss(net, &xp, c);
        xp[i] -= 2.0 * EPS;
        let down = loss(net, &xp, c);
        g.input[i] = (up - down) / (2.0 * EPS);
    }
    g
}

/// ReLU is not differentiable at 0; keep pre-activations clear of the kink.
pub fn clear_of_kinks(net: &Mlp, x: &[f64]) -> bool {
    let (_, cache) = net.forward(x).unwrap();
    net.layers()
        .iter()
        .zip(cache.pre_activations())
        .all(|(l, z)| l.activation != Activation::Relu || z.iter().all(|v| v.abs() > 1e-3))
}

pub const GAMMA: f64 = 0.9;

/// Deterministic finite MDP; `terminal[s]` ends the episode on entry.
pub struct Mdp {
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
}

impl Mdp {
    pub fn random(rng: &mut ChaCha8Rng, max_states: usize, max_actions: usize) -> Self {
        let n = rng.gen_range(2..=max_states);
        let m = rng.gen_range(2..=max_actions);
        let next = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(0..n)).collect())
            .collect();
        let reward = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let terminal = (0..n).map(|s| s > 0 && rng.gen_bool(0.15)).collect();
        Self {
            next,
            reward,
            terminal,
        }
    }

    pub fn states(&self) -> usize {
        self.next.len()
    }

    pub fn actions(&self) -> usize {
        self.next[0].len()
    }

    pub fn done(&self, s: usize, a: usize) -> bool {
        self.terminal[self.next[s][a]]
    }

    /// Bellman optimality by repeated full sweeps.
    pub fn value_iteration(&self) -> Vec<Vec<f64>> {
        let (n, m) = (self.states(), self.actions());
        let mut q = vec![vec![0.0; m]; n];
        loop {
            let v: Vec<f64> = q
                .iter()
                .map(|row| row.iter().cloned().fold(f64::MIN, f64::max))
                .collect();
            let mut delta: f64 = 0.0;
            for s in 0..n {
                for a in 0..m {
                    let boot = if self.done(s, a) {
                        0.0
                    } else {
                        GAMMA * v[self.next[s][a]]
                    };
                    let new = self.reward[s][a] + boot;
                    delta = delta.max((new - q[s][a]).abs());
                    q[s][a] = new;
                }
            }
            if delta < 1e-12 {
                return q;
            }
        }
    }
}

pub fn greedy(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy actions agree wherever the optimal action is not a near tie.
pub fn same_policy(learned: &[Vec<f64>], optimal: &[Vec<f64>], tie: f64) -> bool {
    learned.iter().zip(optimal).all(|(l, o)| {
        let a = greedy(l);
        let best = o[greedy(o)];
        o[a] >= best - tie
    })
}

pub fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

pub fn fit_dqn(mdp: &Mdp, seed: u64, updates: usize) -> Vec<Vec<f64>> {
    let (n, m) = (mdp.states(), mdp.actions());
    let config = DqnConfig {
        hidden: vec![32],
        hidden_activation: Activation::Tanh,
        gamma: GAMMA,
        sgd: SgdConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            gradient_clip_norm: Some(10.0),
        },
        target_sync_interval: 50,
        ..DqnConfig::default()
    };
    let mut agent = DqnAgent::new(n, m, config, seed).unwrap();
    let batch: Vec<Transition<usize>> = (0..n)
        .flat_map(|s| (0..m).map(move |a| (s, a)))
        .map(|(s, a)| Transition {
            s: one_hot(s, n),
            a,
            r: mdp.reward[s][a],
            s_next: one_hot(mdp.next[s][a], n),
            done: mdp.done(s, a),
        })
        .collect();
    let refs: Vec<&Transition<usize>> = batch.iter().collect();
    for _ in 0..updates {
        agent.train_on(&refs).unwrap();
    }
    (0..n)
        .map(|s| agent.q_values(&one_hot(s, n)).unwrap())
        .collect()
}

pub fn random_net(rng: &mut ChaCha8Rng, input: usize, output: usize, out_act: Activation) -> Mlp {
    let depth = rng.gen_range(1..=2);
    let mut sizes = vec![input];
    let mut acts = Vec::new();
    for _ in 0..depth {
        sizes.push(rng.gen_range(2..=12));
        acts.push([Activation::Tanh, Activation::Sigmoid, Activation::Linear][rng.gen_range(0..3)]);
    }
    sizes.push(output);
    acts.push(out_act);
    Mlp::init(&sizes, &acts, rng.gen()).unwrap()
}

pub fn perturbed_objective(
    actor: &Mlp,
    critic: &Mlp,
    squash: ActionSquash,
    s: &[f64],
    layer: usize,
    idx: usize,
    is_bias: bool,
    h: f64,
) -> f64 {
    let mut a = actor.clone();
    let l = &mut a.layers_mut()[layer];
    if is_bias {
        l.bias[idx] += h;
    } else {
        l.weights[idx] += h;
    }
    policy_gradient(&a, critic, squash, s).unwrap().0
}

/// Largest relative error over every weight, bias and input gradient.
pub fn max_backprop_error(net: &Mlp, x: &[f64], c: &[f64]) -> f64 {
    let (_, cache) = net.forward(x).unwrap();
    let analytic = net.backward(&cache, c).unwrap();
    let numeric = numeric_grads(net, x, c);
    let flat = |g: &GradientSet| -> Vec<f64> {
        g.weights
            .iter()
            .chain(&g.biases)
            .flatten()
            .chain(&g.input)
            .copied()
            .collect()
    };
    flat(&analytic)
        .iter()
        .zip(flat(&numeric))
        .map(|(&a, n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Largest relative error of the actor's policy gradient against central
/// differences of `u -> Q(s, squash(actor_u(s)))`. The 1e-4 floor keeps
/// roundoff on near-zero gradients from counting as error.
pub fn max_actor_gradient_error(actor: &Mlp, critic: &Mlp, squash: ActionSquash, s: &[f64]) -> f64 {
    let (_, grads) = policy_gradient(actor, critic, squash, s).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (li, layer) in actor.layers().iter().enumerate() {
        for (is_bias, count) in [(false, layer.weights.len()), (true, layer.bias.len())] {
            for i in 0..count {
                let up = perturbed_objective(actor, critic, squash, s, li, i, is_bias, h);
                let down = perturbed_objective(actor, critic, squash, s, li, i, is_bias, -h);
                let numeric = (up - down) / (2.0 * h);
                let analytic = if is_bias {
                    grads.biases[li][i]
                } else {
                    grads.weights[li][i]
                };
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
                worst = worst.max(err);
            }
        }
    }
    worst
}

/// Random actor/critic pair with the car's 3 action outputs.
pub fn random_actor_critic(rng: &mut ChaCha8Rng) -> (Mlp, Mlp, Vec<f64>) {
    let obs_dim = rng.gen_range(1..=4);
    let actor = random_net(rng, obs_dim, 3, Activation::Linear);
    let critic = random_net(rng, obs_dim + 3, 1, Activation::Linear);
    let s = (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (actor, critic, s)
}

/// Tabular Q-learning with one unit tile per state, swept over every
/// `(s, a)` until the TD errors vanish. Returns the learned table.
pub fn fit_tabular(mdp: &Mdp) -> Vec<Vec<f64>> {
    use lanekeep::agents::{QTable, TileCoder};
    let (n, m) = (mdp.states(), mdp.actions());
    let coder = TileCoder::new(1, vec![n], vec![(0.0, n as f64)]).unwrap();
    let tiles: Vec<Vec<usize>> = (0..n)
        .map(|s| coder.encode(&[s as f64 + 0.5]).unwrap())
        .collect();
    let mut table = QTable::new(m, 0.5, GAMMA).unwrap();
    for _ in 0..2000 {
        let mut worst: f64 = 0.0;
        for s in 0..n {
            for a in 0..m {
                let s2 = mdp.next[s][a];
                let d = table.update(&tiles[s], a, mdp.reward[s][a], &tiles[s2], mdp.done(s, a));
                worst = worst.max(d.abs());
            }
        }
        if worst < 1e-10 {
            break;
        }
    }
    tiles.iter().map(|t| table.values(t)).collect()
}

/// Greedy policies agree on the states that can be occupied before an
/// episode ends (terminal rows are never backed up from).
pub fn dqn_policy_matches(mdp: &Mdp, learned: &[Vec<f64>], optimal: &[Vec<f64>]) -> bool {
    let live: Vec<usize> = (0..mdp.states()).filter(|&s| !mdp.terminal[s]).collect();
    let l: Vec<Vec<f64>> = live.iter().map(|&s| learned[s].clone()).collect();
    let o: Vec<Vec<f64>> = live.iter().map(|&s| optimal[s].clone()).collect();
    same_policy(&l, &o, 1e-6)
}
