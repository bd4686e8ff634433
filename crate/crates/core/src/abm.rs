//! Event-driven agent-based simulation: households activate at exponential
//! waiting times, interact with an acquaintance, and accumulate capital in
//! continuous time between events.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::economy::{solve_market, EconomyStocks, MarketOutcome};
use crate::error::{Error, Result};
use crate::math::{exp, ln};
use crate::network::{random_strategies, AdaptiveNetwork, RewireOutcome, Strategy};
use crate::ode::{Dopri5, OdeOptions};
use crate::params::Params;
use crate::trajectory::{sample_grid, Sample, Trajectory};

/// Probability that a household with consumption `f_j` imitates one with
/// consumption `f_i`.
pub fn imitation_probability(f_i: f64, f_j: f64, a: f64) -> f64 {
    let total = f_i + f_j;
    if total <= 0.0 {
        return 0.5;
    }
    1.0 / (1.0 + exp(-a * (f_i - f_j) / total))
}

/// Interaction structure of the social process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Topology {
    /// Random graph that is rewired by the households.
    #[default]
    Adaptive,
    /// Fixed complete graph; rewiring events are null.
    WellMixed,
}

/// Initial condition of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct InitSpec {
    /// Probability that a household starts as a clean investor.
    pub clean_probability: f64,
    /// Clean capital per household.
    pub k_c: f64,
    /// Dirty capital per household.
    pub k_d: f64,
    /// Knowledge stock.
    pub c: f64,
    /// Initial resource stock as a fraction of `G0`.
    pub g_fraction: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            clean_probability: 0.5,
            k_c: 1.0,
            k_d: 1.0,
            c: 1.0,
            g_fraction: 1.0,
        }
    }
}

impl InitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.clean_probability) {
            return Err(Error::InvalidParams("clean_probability must lie in [0, 1]"));
        }
        if !(self.k_c >= 0.0 && self.k_d >= 0.0 && self.c >= 0.0) {
            return Err(Error::InvalidParams("initial stocks must be nonnegative"));
        }
        if !(self.g_fraction > 0.0 && self.g_fraction <= 1.0) {
            return Err(Error::InvalidParams("g_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Strategy and capital of one household.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HouseholdState {
    pub strategy: Strategy,
    pub k_c: f64,
    pub k_d: f64,
}

/// Social event drawn for one activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// `i` meets discordant `j` and copies it when `adopt` is set.
    Imitate { i: usize, j: usize, adopt: bool },
    /// `i` drops discordant `j` for a like-minded household.
    Rewire { i: usize, j: usize },
    /// Exploration: `i` picks a strategy by a fair coin.
    NoiseFlip { i: usize, to: Strategy },
    /// Exploration: `i` moves one of its links to a random household.
    NoiseRewire { i: usize },
    /// Nothing happens (isolated household or concordant neighbour).
    Null,
}

/// Number of events of each kind that changed the state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub activations: u64,
    pub imitations: u64,
    pub rewires: u64,
    pub noise_flips: u64,
    pub noise_rewires: u64,
}

/// Full microscopic state of one simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    /// `[k_c(0), k_d(0), k_c(1), ..., C, G]`
    y: Vec<f64>,
    pub net: AdaptiveNetwork,
    pub rng: ChaCha8Rng,
    params: Params,
    topology: Topology,
    labor: f64,
    ode: Dopri5,
    opts: OdeOptions,
    pub counts: EventCounts,
}

impl SimState {
    /// Draws strategies and (for the adaptive topology) a random graph, and
    /// sets every household to the same capital endowment.
    pub fn new(p: &Params, init: &InitSpec, topology: Topology, seed: u64) -> Result<Self> {
        p.validate_closed_form()?;
        init.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strategies = if init.clean_probability == 0.5 {
            random_strategies(p.n, &mut rng)
        } else {
            (0..p.n)
                .map(|_| {
                    if rng.random_bool(init.clean_probability) {
                        Strategy::Clean
                    } else {
                        Strategy::Dirty
                    }
                })
                .collect()
        };
        let net = match topology {
            Topology::Adaptive => {
                AdaptiveNetwork::erdos_renyi(strategies, p.mean_degree, &mut rng)?
            }
            Topology::WellMixed => AdaptiveNetwork::complete(strategies),
        };
        let mut y = vec![0.0; 2 * p.n + 2];
        for i in 0..p.n {
            y[2 * i] = init.k_c;
            y[2 * i + 1] = init.k_d;
        }
        y[2 * p.n] = init.c;
        y[2 * p.n + 1] = init.g_fraction * p.g0;
        Self::from_parts(p, net, y, topology, rng)
    }

    /// Assembles a state from an explicit network and stock vector laid out
    /// as `[k_c(0), k_d(0), ..., C, G]`.
    pub fn from_parts(
        p: &Params,
        net: AdaptiveNetwork,
        y: Vec<f64>,
        topology: Topology,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        p.validate_closed_form()?;
        if net.n() != p.n || y.len() != 2 * p.n + 2 {
            return Err(Error::Contract("state size does not match n"));
        }
        let dim = y.len();
        Ok(SimState {
            t: 0.0,
            y,
            net,
            rng,
            params: *p,
            topology,
            labor: p.labor_per_household(),
            ode: Dopri5::new(dim),
            opts: OdeOptions {
                rtol: 1e-6,
                atol: 1e-9,
                h_max: 0.1,
                ..OdeOptions::default()
            },
            counts: EventCounts::default(),
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn household(&self, i: usize) -> HouseholdState {
        HouseholdState {
            strategy: self.net.strategy(i),
            k_c: self.y[2 * i],
            k_d: self.y[2 * i + 1],
        }
    }

    /// Overwrites one household's capital.
    pub fn set_capital(&mut self, i: usize, k_c: f64, k_d: f64) {
        self.y[2 * i] = k_c;
        self.y[2 * i + 1] = k_d;
    }

    pub fn knowledge(&self) -> f64 {
        self.y[2 * self.params.n]
    }

    pub fn resource(&self) -> f64 {
        self.y[2 * self.params.n + 1]
    }

    pub fn set_knowledge(&mut self, c: f64) {
        let n = self.params.n;
        self.y[2 * n] = c;
    }

    /// Aggregate stocks entering the market.
    pub fn stocks(&self) -> EconomyStocks {
        stocks_of(&self.y, self.params.n)
    }

    pub fn market(&self) -> Result<MarketOutcome> {
        solve_market(&self.stocks(), &self.params)
    }

    /// Consumption `(1 - s) I` of household `i` at the given prices.
    pub fn consumption(&self, i: usize, m: &MarketOutcome) -> f64 {
        (1.0 - self.params.s)
            * (m.w * self.labor + m.r_c * self.y[2 * i] + m.r_d * self.y[2 * i + 1])
    }

    /// Integrates capital, knowledge and resource over `[t, t + dt]` with
    /// strategies held fixed.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        let n = self.params.n;
        let p = self.params;
        let labor = self.labor;
        let strategies = self.net.strategies();
        let t0 = self.t;
        self.ode.integrate(
            |_, y, dy| rhs(y, dy, strategies, &p, labor, n),
            t0,
            t0 + dt,
            &mut self.y,
            &self.opts,
        )?;
        self.t += dt;
        Ok(())
    }

    /// Draws the social event of one activation without changing the state.
    /// Rewiring targets are drawn by [`SimState::apply_event`].
    pub fn sample_event(&mut self, market: &MarketOutcome) -> EventKind {
        let p = self.params;
        let n = p.n;
        let i = self.rng.random_range(0..n);
        if self.rng.random::<f64>() < p.epsilon {
            if self.rng.random::<f64>() < p.phi {
                return EventKind::NoiseRewire { i };
            }
            let to = if self.rng.random_bool(0.5) {
                Strategy::Clean
            } else {
                Strategy::Dirty
            };
            return EventKind::NoiseFlip { i, to };
        }
        let Some(j) = self.net.random_neighbor(i, &mut self.rng) else {
            return EventKind::Null;
        };
        if self.net.strategy(i) == self.net.strategy(j) {
            return EventKind::Null;
        }
        if self.rng.random::<f64>() < p.phi {
            return EventKind::Rewire { i, j };
        }
        let f_i = self.consumption(i, market);
        let f_j = self.consumption(j, market);
        let adopt = self.rng.random::<f64>() < imitation_probability(f_j, f_i, p.a);
        EventKind::Imitate { i, j, adopt }
    }

    /// Executes a sampled event. Capital holdings are never touched.
    pub fn apply_event(&mut self, ev: EventKind) -> Result<()> {
        self.counts.activations += 1;
        match ev {
            EventKind::Imitate { i, j, adopt } => {
                if adopt {
                    let sj = self.net.strategy(j);
                    self.net.set_strategy(i, sj);
                    self.counts.imitations += 1;
                }
            }
            EventKind::Rewire { i, j } => {
                if self.topology == Topology::Adaptive {
                    let out = self.net.rewire_to_same(i, j, &mut self.rng)?;
                    if out != RewireOutcome::NoCandidate {
                        self.counts.rewires += 1;
                    }
                }
            }
            EventKind::NoiseFlip { i, to } => {
                if self.net.strategy(i) != to {
                    self.net.flip_strategy(i);
                    self.counts.noise_flips += 1;
                }
            }
            EventKind::NoiseRewire { i } => {
                if self.topology == Topology::Adaptive
                    && self.net.rewire_random(i, &mut self.rng) != RewireOutcome::NoCandidate
                {
                    self.counts.noise_rewires += 1;
                }
            }
            EventKind::Null => {}
        }
        Ok(())
    }

    /// Waiting time until the next activation.
    pub fn draw_waiting_time(&mut self) -> f64 {
        let rate = self.params.n as f64 / self.params.tau;
        // 1 - u lies in (0, 1]
        let u: f64 = self.rng.random();
        -ln(1.0 - u) / rate
    }

    /// One activation: exponential waiting time, continuous dynamics over
    /// it, then a social event at the new time.
    pub fn step(&mut self) -> Result<EventKind> {
        let dt = self.draw_waiting_time();
        self.advance(dt)?;
        self.social_event()
    }

    fn social_event(&mut self) -> Result<EventKind> {
        let market = self.market()?;
        let ev = self.sample_event(&market);
        self.apply_event(ev)?;
        Ok(ev)
    }

    /// Aggregate observables at the current time.
    pub fn sample(&self) -> Result<Sample> {
        let m = self.market()?;
        let n = self.params.n;
        let (mut kcc, mut kcd, mut kdc, mut kdd) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (kc, kd) = (self.y[2 * i], self.y[2 * i + 1]);
            match self.net.strategy(i) {
                Strategy::Clean => {
                    kcc += kc;
                    kdc += kd;
                }
                Strategy::Dirty => {
                    kcd += kc;
                    kdd += kd;
                }
            }
        }
        let links = self.net.counts();
        Ok(Sample {
            t: self.t,
            n_c: self.net.n_with(Strategy::Clean) as f64 / n as f64,
            k_c: kcc + kcd,
            k_d: kdc + kdd,
            kcc,
            kcd,
            kdc,
            kdd,
            c: self.knowledge(),
            g: self.resource(),
            w: m.w,
            r_c: m.r_c,
            r_d: m.r_d,
            y_c: m.y_c,
            y_d: m.y_d,
            cc: links.cc as f64,
            dd: links.dd as f64,
            cd: links.cd as f64,
        })
    }

    /// Runs until `t_end`, recording a sample every `sample_dt` starting at
    /// the current time.
    pub fn run_until(&mut self, t_end: f64, sample_dt: f64) -> Result<Trajectory> {
        if !(sample_dt > 0.0) || !(t_end >= self.t) {
            return Err(Error::Contract("need sample_dt > 0 and t_end >= t"));
        }
        let t_start = self.t;
        let grid = sample_grid(t_end - t_start, sample_dt);
        let mut traj = Trajectory::new();
        let mut next = 0;
        let mut t_event = self.t + self.draw_waiting_time();
        while next < grid.len() {
            let t_sample = t_start + grid[next];
            if t_sample <= t_event {
                self.advance(t_sample - self.t)?;
                self.t = t_sample;
                traj.samples.push(self.sample()?);
                next += 1;
            } else {
                self.advance(t_event - self.t)?;
                self.t = t_event;
                self.social_event()?;
                t_event = self.t + self.draw_waiting_time();
            }
        }
        Ok(traj)
    }
}

fn stocks_of(y: &[f64], n: usize) -> EconomyStocks {
    let (mut k_c, mut k_d) = (0.0, 0.0);
    for i in 0..n {
        k_c += y[2 * i];
        k_d += y[2 * i + 1];
    }
    EconomyStocks {
        k_c,
        k_d,
        c: y[2 * n],
        g: y[2 * n + 1],
    }
}

fn rhs(
    y: &[f64],
    dy: &mut [f64],
    strategies: &[Strategy],
    p: &Params,
    labor: f64,
    n: usize,
) -> Result<()> {
    let mut stocks = stocks_of(y, n);
    // the integrator may probe slightly negative values near zero
    stocks.k_c = stocks.k_c.max(0.0);
    stocks.k_d = stocks.k_d.max(0.0);
    stocks.c = stocks.c.max(0.0);
    let m = solve_market(&stocks, p)?;
    let wl = m.w * labor;
    for i in 0..n {
        let kc = y[2 * i];
        let kd = y[2 * i + 1];
        let invest = p.s * (m.r_c * kc + m.r_d * kd + wl);
        match strategies[i] {
            Strategy::Clean => {
                dy[2 * i] = invest - p.kappa * kc;
                dy[2 * i + 1] = -p.kappa * kd;
            }
            Strategy::Dirty => {
                dy[2 * i] = -p.kappa * kc;
                dy[2 * i + 1] = invest - p.kappa * kd;
            }
        }
    }
    dy[2 * n] = m.y_c - p.chi * y[2 * n];
    dy[2 * n + 1] = -m.r;
    Ok(())
}

/// Seeded run on an adaptive random graph, sampled every `sample_dt` on
/// `[0, t_end]`.
pub fn run(
    p: &Params,
    init: &InitSpec,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(t_end > 0.0 && sample_dt > 0.0) {
        return Err(Error::Contract("need t_end > 0 and sample_dt > 0"));
    }
    SimState::new(p, init, Topology::Adaptive, seed)?.run_until(t_end, sample_dt)
}

/// As [`run`], on a fixed complete graph.
pub fn run_well_mixed(
    p: &Params,
    init: &InitSpec,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(t_end > 0.0 && sample_dt > 0.0) {
        return Err(Error::Contract("need t_end > 0 and sample_dt > 0"));
    }
    SimState::new(p, init, Topology::WellMixed, seed)?.run_until(t_end, sample_dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imitation_probability_examples() {
        assert_eq!(imitation_probability(2.0, 2.0, 8.0), 0.5);
        let expect = 1.0 / (1.0 + libm::exp(-4.0));
        assert!((imitation_probability(3.0, 1.0, 8.0) - expect).abs() < 1e-15);
        assert!((imitation_probability(3.0, 1.0, 8.0) - 0.98201).abs() < 1e-5);
        assert_eq!(imitation_probability(0.0, 0.0, 8.0), 0.5);
    }

    #[test]
    fn imitation_is_antisymmetric() {
        for (a, b) in [(0.1, 7.0), (3.0, 3.5), (100.0, 0.0)] {
            let s = imitation_probability(a, b, 8.0) + imitation_probability(b, a, 8.0);
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    fn small() -> Params {
        Params {
            n: 40,
            ..Params::default()
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let p = small();
        let a = run(&p, &InitSpec::default(), 5.0, 1.0, 3).unwrap();
        let b = run(&p, &InitSpec::default(), 5.0, 1.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        let c = run(&p, &InitSpec::default(), 5.0, 1.0, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_imitation_channel_conserves_cohorts() {
        let p = Params {
            phi: 1.0,
            epsilon: 0.0,
            ..small()
        };
        let traj = run(&p, &InitSpec::default(), 20.0, 1.0, 11).unwrap();
        let n0 = traj.samples[0].n_c;
        assert!(traj.samples.iter().all(|s| s.n_c == n0));
    }

    #[test]
    fn switching_keeps_capital_bit_identical() {
        let p = Params {
            phi: 0.0,
            epsilon: 0.0,
            ..small()
        };
        let mut sim = SimState::new(&p, &InitSpec::default(), Topology::Adaptive, 5).unwrap();
        sim.advance(1.0).unwrap();
        let mut seen = 0;
        for _ in 0..2000 {
            let market = sim.market().unwrap();
            let ev = sim.sample_event(&market);
            if let EventKind::Imitate { i, adopt: true, .. } = ev {
                let before = sim.household(i);
                sim.apply_event(ev).unwrap();
                let after = sim.household(i);
                assert_ne!(before.strategy, after.strategy);
                assert_eq!(before.k_c.to_bits(), after.k_c.to_bits());
                assert_eq!(before.k_d.to_bits(), after.k_d.to_bits());
                seen += 1;
            } else {
                sim.apply_event(ev).unwrap();
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn well_mixed_counts_are_combinatorial() {
        let p = small();
        let mut sim = SimState::new(&p, &InitSpec::default(), Topology::WellMixed, 9).unwrap();
        for _ in 0..500 {
            sim.step().unwrap();
            let nc = sim.net.n_with(Strategy::Clean);
            assert_eq!(sim.net.counts().cd, nc * (p.n - nc));
        }
    }
}
