//! Dynamic-trajectory Hamiltonian sampling.
//!
//! One transition refreshes the momentum and then grows a leapfrog
//! trajectory by repeated doubling, each doubling integrating in a random
//! direction. Growth stops when the generalized U-turn criterion fires on
//! the whole trajectory or across any merged pair of subtrees, when a
//! state's energy error explodes (a divergence), or at the depth cap. The
//! next state is drawn multinomially from the trajectory, weighted by the
//! states' Boltzmann weights and biased toward the newest subtree.
//!
//! During warmup the step size follows dual averaging toward a target
//! acceptance statistic while a diagonal mass matrix is estimated over an
//! expanding window schedule; both freeze when warmup ends.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Energy error beyond which a trajectory state counts as divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

/// A differentiable unnormalized log-density that can be sampled.
pub trait Target: Sync {
    /// Dimension of the state space.
    fn dim(&self) -> usize;

    /// Log-density and its gradient at `position`.
    fn value_and_gradient(&self, position: &[f64]) -> (f64, Vec<f64>);
}

/// Position, momentum, and cached log-density and gradient.
#[derive(Debug, Clone)]
struct Phase {
    q: Vec<f64>,
    p: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

impl Phase {
    fn at<T: Target + ?Sized>(target: &T, q: Vec<f64>) -> Phase {
        let (value, grad) = target.value_and_gradient(&q);
        let p = vec![0.0; q.len()];
        Phase { q, p, value, grad }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn vec_sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// What one transition reports back to the adaptation loop.
#[derive(Debug, Clone, Copy)]
struct TransitionInfo {
    divergent: bool,
    accept_stat: f64,
    #[allow(dead_code)]
    depth: usize,
}

/// The sampler state that persists across transitions: step size and
/// diagonal mass matrix (stored as the inverse metric, i.e. the estimated
/// posterior variances).
struct Engine<'a, T: Target> {
    target: &'a T,
    inv_metric: Vec<f64>,
    epsilon: f64,
    max_depth: usize,
}

impl<'a, T: Target> Engine<'a, T> {
    fn new(target: &'a T, max_depth: usize) -> Self {
        Engine {
            inv_metric: vec![1.0; target.dim()],
            epsilon: 1.0,
            target,
            max_depth,
        }
    }

    /// Total energy; non-finite states map to +∞ so they read as divergent.
    fn hamiltonian(&self, z: &Phase) -> f64 {
        let kinetic: f64 = z
            .p
            .iter()
            .zip(&self.inv_metric)
            .map(|(p, v)| 0.5 * v * p * p)
            .sum();
        let h = -z.value + kinetic;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// The velocity M⁻¹p — the "sharpened" momentum the U-turn criterion
    /// projects onto.
    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, v)| p * v).collect()
    }

    /// Draw momentum from N(0, M).
    fn sample_momentum(&self, z: &mut Phase, rng: &mut ChaCha8Rng) {
        for (p, v) in z.p.iter_mut().zip(&self.inv_metric) {
            let noise: f64 = rng.sample(StandardNormal);
            *p = noise / v.sqrt();
        }
    }

    /// One leapfrog step of size `sign · ε`, updating the cached
    /// log-density and gradient.
    fn leapfrog(&self, z: &mut Phase, sign: f64) {
        let step = sign * self.epsilon;
        let half = 0.5 * step;
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += half * g;
        }
        for ((q, p), v) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += step * v * p;
        }
        let (value, grad) = self.target.value_and_gradient(&z.q);
        z.value = value;
        z.grad = grad;
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += half * g;
        }
    }

    /// The U-turn test for a (sub)trajectory with summed momentum `rho`:
    /// keep growing only while the velocity at both ends points along rho.
    fn criterion(&self, p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
        dot(rho, p_sharp_plus) > 0.0 && dot(rho, p_sharp_minus) > 0.0
    }

    /// Recursively integrate a balanced subtree of `depth` doublings,
    /// tracking its multinomial weight, summed momentum, edge states, and
    /// a candidate proposal. Returns whether the subtree is free of
    /// divergences and internal U-turns. `p_*_beg` refer to the subtree
    /// end nearest the existing trajectory, `p_*_end` to the far end.
    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &self,
        depth: usize,
        z: &mut Phase,
        proposal: &mut Phase,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut Vec<f64>,
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        n_leapfrog: &mut usize,
        log_sum_weight: &mut f64,
        sum_metro_prob: &mut f64,
        divergent: &mut bool,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign);
            *n_leapfrog += 1;

            let h = self.hamiltonian(z);
            if h - h0 > MAX_ENERGY_ERROR {
                *divergent = true;
            }

            *log_sum_weight = crate::stats::logaddexp(*log_sum_weight, h0 - h);
            *sum_metro_prob += (h0 - h).exp().min(1.0);

            *proposal = z.clone();
            *p_sharp_beg = self.p_sharp(&z.p);
            *p_sharp_end = p_sharp_beg.clone();
            add_assign(rho, &z.p);
            *p_beg = z.p.clone();
            *p_end = z.p.clone();

            return !*divergent;
        }

        // Subtree nearest the existing trajectory.
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        let mut p_sharp_init_end = vec![0.0; z.p.len()];
        let mut p_init_end = vec![0.0; z.p.len()];
        let mut rho_init = vec![0.0; rho.len()];
        let valid_init = self.build_tree(
            depth - 1,
            z,
            proposal,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            n_leapfrog,
            &mut log_sum_weight_init,
            sum_metro_prob,
            divergent,
            rng,
        );
        if !valid_init {
            return false;
        }

        // Far subtree.
        let mut proposal_final = z.clone();
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        let mut p_sharp_final_beg = vec![0.0; z.p.len()];
        let mut p_final_beg = vec![0.0; z.p.len()];
        let mut rho_final = vec![0.0; rho.len()];
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut proposal_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            n_leapfrog,
            &mut log_sum_weight_final,
            sum_metro_prob,
            divergent,
            rng,
        );
        if !valid_final {
            return false;
        }

        // Multinomial choice between the two halves, unbiased within a
        // subtree.
        let log_sum_weight_subtree =
            crate::stats::logaddexp(log_sum_weight_init, log_sum_weight_final);
        *log_sum_weight = crate::stats::logaddexp(*log_sum_weight, log_sum_weight_subtree);
        if log_sum_weight_final > log_sum_weight_subtree
            || rng.gen::<f64>() < (log_sum_weight_final - log_sum_weight_subtree).exp()
        {
            *proposal = proposal_final;
        }

        let rho_subtree = vec_sum(&rho_init, &rho_final);
        add_assign(rho, &rho_subtree);

        // U-turn across the merged subtree, then across each half extended
        // by the adjacent edge momentum of the other half.
        let mut persist = self.criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_extended = vec_sum(&rho_init, &p_final_beg);
        persist &= self.criterion(p_sharp_beg, &p_sharp_final_beg, &rho_extended);
        let rho_extended = vec_sum(&rho_final, &p_init_end);
        persist &= self.criterion(&p_sharp_init_end, p_sharp_end, &rho_extended);
        persist
    }

    /// One full transition from `current`, returning the selected state.
    fn transition(&self, current: &Phase, rng: &mut ChaCha8Rng) -> (Phase, TransitionInfo) {
        let dim = current.q.len();
        let mut z = current.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = self.hamiltonian(&z);

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut proposal = z.clone();

        // Momentum and velocity at the four subtree edges: the backward
        // and forward end of the backward and forward subtree.
        let p_sharp = self.p_sharp(&z.p);
        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = p_sharp.clone();
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = p_sharp.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = p_sharp.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = p_sharp;

        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let mut n_leapfrog = 0usize;
        let mut sum_metro_prob = 0.0;
        let mut divergent = false;
        let mut depth = 0usize;

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;

            let valid_subtree = if rng.gen::<f64>() > 0.5 {
                // Grow forward: the whole old trajectory becomes the
                // backward subtree.
                let mut state = z_fwd.clone();
                rho_bck = rho.clone();
                p_bck_fwd = p_fwd_fwd.clone();
                p_sharp_bck_fwd = p_sharp_fwd_fwd.clone();
                let valid = self.build_tree(
                    depth,
                    &mut state,
                    &mut proposal,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut n_leapfrog,
                    &mut log_sum_weight_subtree,
                    &mut sum_metro_prob,
                    &mut divergent,
                    rng,
                );
                z_fwd = state;
                valid
            } else {
                // Grow backward: the old trajectory becomes the forward
                // subtree.
                let mut state = z_bck.clone();
                rho_fwd = rho.clone();
                p_fwd_bck = p_bck_bck.clone();
                p_sharp_fwd_bck = p_sharp_bck_bck.clone();
                let valid = self.build_tree(
                    depth,
                    &mut state,
                    &mut proposal,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut n_leapfrog,
                    &mut log_sum_weight_subtree,
                    &mut sum_metro_prob,
                    &mut divergent,
                    rng,
                );
                z_bck = state;
                valid
            };

            if !valid_subtree {
                break;
            }
            depth += 1;

            // Biased progressive sampling: always favor the new subtree.
            if log_sum_weight_subtree > log_sum_weight
                || rng.gen::<f64>() < (log_sum_weight_subtree - log_sum_weight).exp()
            {
                z_sample = proposal.clone();
            }
            log_sum_weight = crate::stats::logaddexp(log_sum_weight, log_sum_weight_subtree);

            rho = vec_sum(&rho_bck, &rho_fwd);

            // U-turn across the doubled trajectory and across both
            // subtree junctions.
            let mut persist = self.criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let rho_extended = vec_sum(&rho_bck, &p_fwd_bck);
            persist &= self.criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_extended);
            let rho_extended = vec_sum(&rho_fwd, &p_bck_fwd);
            persist &= self.criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_extended);
            if !persist {
                break;
            }
        }

        let accept_stat = if n_leapfrog > 0 {
            sum_metro_prob / n_leapfrog as f64
        } else {
            0.0
        };
        (
            z_sample,
            TransitionInfo {
                divergent,
                accept_stat,
                depth,
            },
        )
    }

    /// Grow or shrink the step size by factors of two until one leapfrog
    /// step from `start` (with fresh momentum each attempt) crosses an
    /// acceptance of 0.8.
    fn find_reasonable_epsilon(
        &self,
        start: &Phase,
        initial: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let threshold = 0.8f64.ln();
        let trial = |epsilon: f64, rng: &mut ChaCha8Rng| -> f64 {
            let mut z = start.clone();
            self.sample_momentum(&mut z, rng);
            let h0 = self.hamiltonian(&z);
            let probe = Engine {
                target: self.target,
                inv_metric: self.inv_metric.clone(),
                epsilon,
                max_depth: self.max_depth,
            };
            probe.leapfrog(&mut z, 1.0);
            let h = probe.hamiltonian(&z);
            if h.is_finite() {
                h0 - h
            } else {
                f64::NEG_INFINITY
            }
        };

        let mut epsilon = initial;
        let grow = trial(epsilon, rng) > threshold;
        loop {
            let delta_h = trial(epsilon, rng);
            if grow && delta_h <= threshold {
                break;
            }
            if !grow && delta_h >= threshold {
                break;
            }
            epsilon *= if grow { 2.0 } else { 0.5 };
            if epsilon > 1e7 {
                return Err(Error::numerical(
                    "step-size search grew without bound; the posterior looks flat",
                ));
            }
            if epsilon < 1e-16 {
                return Err(Error::numerical(
                    "no stable step size found; the posterior looks pathological",
                ));
            }
        }
        Ok(epsilon)
    }
}

/// Dual-averaging step-size adaptation toward a target acceptance.
struct DualAveraging {
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    epsilon: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(initial_epsilon: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial_epsilon).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            epsilon: initial_epsilon,
        }
    }

    fn learn(&mut self, accept_stat: f64, target: f64) -> f64 {
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (target - accept_stat.min(1.0));
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        self.epsilon = x.exp();
        self.epsilon
    }

    /// The smoothed step size to freeze for sampling.
    fn completed(&self) -> f64 {
        if self.counter > 0.0 {
            self.x_bar.exp()
        } else {
            self.epsilon
        }
    }
}

/// Diagonal posterior-variance estimation over an expanding schedule of
/// warmup windows. Early iterations (the init buffer) are skipped while
/// the step size settles; late iterations (the term buffer) are reserved
/// for re-tuning the step size against the final metric.
struct WindowedVariance {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    counter: usize,
    window_size: usize,
    next_window: usize,
    enabled: bool,
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WindowedVariance {
    fn new(num_warmup: usize, dim: usize) -> Self {
        let mut init_buffer = 75usize;
        let mut term_buffer = 50usize;
        let mut base_window = 25usize;
        let enabled = num_warmup >= 20;
        if enabled && init_buffer + term_buffer + base_window > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.10 * num_warmup as f64) as usize;
            base_window = num_warmup - init_buffer - term_buffer;
        }
        WindowedVariance {
            num_warmup,
            init_buffer,
            term_buffer,
            counter: 0,
            window_size: base_window,
            next_window: init_buffer + base_window - 1,
            enabled,
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup - 1
    }

    fn at_window_end(&self) -> bool {
        self.counter == self.next_window && self.counter != self.num_warmup - 1
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = (self.counter + self.window_size).min(last);
    }

    fn add_sample(&mut self, q: &[f64]) {
        self.count += 1.0;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(q) {
            let delta = x - *mean;
            *mean += delta / self.count;
            *m2 += delta * (x - *mean);
        }
    }

    /// Feed one warmup draw; when a window closes, write the regularized
    /// variance estimate into `inv_metric` and report `true`.
    fn learn(&mut self, q: &[f64], inv_metric: &mut [f64]) -> bool {
        if !self.enabled {
            return false;
        }
        if self.in_window() {
            self.add_sample(q);
        }
        let update = self.at_window_end();
        if update {
            self.compute_next_window();
            let n = self.count;
            for (metric, m2) in inv_metric.iter_mut().zip(&self.m2) {
                let var = m2 / (n - 1.0);
                // Shrink toward a small constant so a short window cannot
                // produce a degenerate metric.
                *metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
            }
            self.count = 0.0;
            self.mean.iter_mut().for_each(|x| *x = 0.0);
            self.m2.iter_mut().for_each(|x| *x = 0.0);
        }
        self.counter += 1;
        update
    }
}

/// Per-chain run lengths and tuning targets.
#[derive(Debug, Clone, Copy)]
pub struct RunSettings {
    /// Total transitions, warmup included.
    pub n_iterations: usize,
    /// Leading transitions used for adaptation and discarded.
    pub n_warmup: usize,
    /// Target acceptance statistic for step-size adaptation.
    pub target_accept: f64,
    /// Cap on trajectory doublings per transition.
    pub max_tree_depth: usize,
}

/// Everything one chain produces.
#[derive(Debug, Clone)]
pub struct ChainRun {
    /// Post-warmup positions in unconstrained space.
    pub positions: Vec<Vec<f64>>,
    /// Divergence flag per kept transition.
    pub divergent: Vec<bool>,
    /// Acceptance statistic per kept transition.
    pub accept_stat: Vec<f64>,
    /// Divergences observed during warmup (not grounds for exclusion).
    pub warmup_divergences: usize,
    /// Step size frozen at the end of warmup.
    pub step_size: f64,
    /// Adapted diagonal inverse metric (posterior variance estimates).
    pub inv_metric: Vec<f64>,
}

/// Run one chain from `init`, adapting during warmup and recording every
/// post-warmup state.
pub fn run_chain<T: Target>(
    target: &T,
    init: Vec<f64>,
    settings: &RunSettings,
    rng: &mut ChaCha8Rng,
) -> Result<ChainRun> {
    assert!(settings.n_warmup < settings.n_iterations);
    assert!(settings.max_tree_depth >= 1);
    let mut engine = Engine::new(target, settings.max_tree_depth);
    let mut current = Phase::at(target, init);
    if !current.value.is_finite() {
        return Err(Error::numerical(
            "chain initialized at a point of non-finite log-density",
        ));
    }

    engine.epsilon = engine.find_reasonable_epsilon(&current, 1.0, rng)?;
    let mut averaging = DualAveraging::new(engine.epsilon);
    let mut windows = WindowedVariance::new(settings.n_warmup, target.dim());

    let kept = settings.n_iterations - settings.n_warmup;
    let mut run = ChainRun {
        positions: Vec::with_capacity(kept),
        divergent: Vec::with_capacity(kept),
        accept_stat: Vec::with_capacity(kept),
        warmup_divergences: 0,
        step_size: engine.epsilon,
        inv_metric: engine.inv_metric.clone(),
    };

    for iteration in 0..settings.n_iterations {
        if iteration == settings.n_warmup {
            engine.epsilon = averaging.completed();
        }
        let (next, info) = engine.transition(&current, rng);
        current = next;

        if iteration < settings.n_warmup {
            if info.divergent {
                run.warmup_divergences += 1;
            }
            engine.epsilon = averaging.learn(info.accept_stat, settings.target_accept);
            if windows.learn(&current.q, &mut engine.inv_metric) {
                // Fresh metric: re-seed the step size and restart its
                // adaptation around it.
                engine.epsilon = engine.find_reasonable_epsilon(&current, engine.epsilon, rng)?;
                averaging = DualAveraging::new(engine.epsilon);
            }
        } else {
            run.positions.push(current.q.clone());
            run.divergent.push(info.divergent);
            run.accept_stat.push(info.accept_stat);
        }
    }

    run.step_size = engine.epsilon;
    run.inv_metric = engine.inv_metric;
    Ok(run)
}
