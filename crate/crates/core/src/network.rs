//! Undirected simple graph with household strategies and cached link-type
//! counts.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Investment strategy of a household.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Strategy {
    Clean,
    Dirty,
}

impl Strategy {
    #[inline]
    pub fn other(self) -> Strategy {
        match self {
            Strategy::Clean => Strategy::Dirty,
            Strategy::Dirty => Strategy::Clean,
        }
    }

    #[inline]
    fn idx(self) -> usize {
        self as usize
    }
}

/// Link counts by endpoint strategies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounts {
    pub cc: usize,
    pub dd: usize,
    pub cd: usize,
}

impl LinkCounts {
    pub fn total(&self) -> usize {
        self.cc + self.dd + self.cd
    }

    fn add(&mut self, a: Strategy, b: Strategy, sign: isize) {
        let slot = match (a, b) {
            (Strategy::Clean, Strategy::Clean) => &mut self.cc,
            (Strategy::Dirty, Strategy::Dirty) => &mut self.dd,
            _ => &mut self.cd,
        };
        *slot = slot.wrapping_add_signed(sign);
    }
}

/// Result of a rewiring attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewireOutcome {
    /// Edge `(i, old)` was replaced by `(i, new)`.
    Done { old: usize, new: usize },
    /// No admissible target; the graph is unchanged.
    NoCandidate,
}

/// Acquaintance network of households.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveNetwork {
    adj: Vec<Vec<u32>>,
    strategy: Vec<Strategy>,
    // members[s] lists nodes with strategy s; pos[i] is i's index there
    members: [Vec<u32>; 2],
    pos: Vec<u32>,
    counts: LinkCounts,
}

impl AdaptiveNetwork {
    /// Builds a network from strategies and an edge list. Rejects self-loops,
    /// duplicate edges and out-of-range nodes.
    pub fn from_edges(strategies: Vec<Strategy>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = strategies.len();
        let mut net = Self::empty(strategies);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Contract("edge endpoint out of range"));
            }
            if a == b {
                return Err(Error::Contract("self-loop"));
            }
            if net.has_edge(a, b) {
                return Err(Error::Contract("duplicate edge"));
            }
            net.add_edge(a, b);
        }
        Ok(net)
    }

    /// Network without links.
    pub fn empty(strategies: Vec<Strategy>) -> Self {
        let n = strategies.len();
        let mut members = [Vec::new(), Vec::new()];
        let mut pos = vec![0u32; n];
        for (i, s) in strategies.iter().enumerate() {
            pos[i] = members[s.idx()].len() as u32;
            members[s.idx()].push(i as u32);
        }
        AdaptiveNetwork {
            adj: vec![Vec::new(); n],
            strategy: strategies,
            members,
            pos,
            counts: LinkCounts::default(),
        }
    }

    /// `G(n, p)` random graph with `p = mean_degree / (n - 1)` over the given
    /// strategies.
    pub fn erdos_renyi<R: Rng + ?Sized>(
        strategies: Vec<Strategy>,
        mean_degree: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = strategies.len();
        if n < 2 {
            return Err(Error::Contract("need at least two nodes"));
        }
        if !(mean_degree > 0.0 && mean_degree <= (n - 1) as f64) {
            return Err(Error::Contract("mean degree must lie in (0, n - 1]"));
        }
        let p = mean_degree / (n - 1) as f64;
        let mut net = Self::empty(strategies);
        for a in 0..n {
            for b in (a + 1)..n {
                if p >= 1.0 || rng.random::<f64>() < p {
                    net.add_edge(a, b);
                }
            }
        }
        Ok(net)
    }

    /// Random graph with fair-coin strategies, fully determined by `seed`.
    pub fn erdos_renyi_init(n: usize, mean_degree: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strategies = random_strategies(n, &mut rng);
        Self::erdos_renyi(strategies, mean_degree, &mut rng)
    }

    /// Complete graph over the given strategies.
    pub fn complete(strategies: Vec<Strategy>) -> Self {
        let n = strategies.len();
        let mut net = Self::empty(strategies);
        for a in 0..n {
            for b in (a + 1)..n {
                net.add_edge(a, b);
            }
        }
        net
    }

    pub fn n(&self) -> usize {
        self.strategy.len()
    }

    pub fn n_links(&self) -> usize {
        self.counts.total()
    }

    pub fn counts(&self) -> LinkCounts {
        self.counts
    }

    pub fn n_with(&self, s: Strategy) -> usize {
        self.members[s.idx()].len()
    }

    /// Nodes currently following `s`, in no particular order.
    pub fn members(&self, s: Strategy) -> &[u32] {
        &self.members[s.idx()]
    }

    pub fn strategy(&self, i: usize) -> Strategy {
        self.strategy[i]
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategy
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        // scan the shorter list
        let (s, t) = if self.adj[a].len() <= self.adj[b].len() {
            (a, b)
        } else {
            (b, a)
        };
        self.adj[s].iter().any(|&v| v as usize == t)
    }

    /// All edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, nb)| {
            nb.iter()
                .map(|&b| b as usize)
                .filter(move |&b| a < b)
                .map(move |b| (a, b))
        })
    }

    /// Uniformly chosen neighbour of `i`, if any.
    pub fn random_neighbor<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Option<usize> {
        let nb = &self.adj[i];
        if nb.is_empty() {
            None
        } else {
            Some(nb[rng.random_range(0..nb.len())] as usize)
        }
    }

    /// Switches the strategy of `i`, updating counts in `O(degree(i))`.
    pub fn flip_strategy(&mut self, i: usize) {
        let old = self.strategy[i];
        let new = old.other();
        for k in 0..self.adj[i].len() {
            let j = self.adj[i][k] as usize;
            let sj = self.strategy[j];
            self.counts.add(old, sj, -1);
            self.counts.add(new, sj, 1);
        }
        self.strategy[i] = new;
        // move i between member lists
        let list = &mut self.members[old.idx()];
        let p = self.pos[i] as usize;
        list.swap_remove(p);
        if p < list.len() {
            let moved = list[p] as usize;
            self.pos[moved] = p as u32;
        }
        self.pos[i] = self.members[new.idx()].len() as u32;
        self.members[new.idx()].push(i as u32);
    }

    /// Sets the strategy of `i`; no-op if unchanged.
    pub fn set_strategy(&mut self, i: usize, s: Strategy) {
        if self.strategy[i] != s {
            self.flip_strategy(i);
        }
    }

    /// Replaces the discordant link `(i, j)` by a link from `i` to a uniformly
    /// chosen household with `i`'s strategy that is not `i` and not yet
    /// adjacent to `i`.
    pub fn rewire_to_same<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        j: usize,
        rng: &mut R,
    ) -> Result<RewireOutcome> {
        if i >= self.n() || j >= self.n() || !self.has_edge(i, j) {
            return Err(Error::Contract("rewire_to_same needs an existing edge"));
        }
        let si = self.strategy[i];
        if si == self.strategy[j] {
            return Err(Error::Contract("rewire_to_same needs a discordant edge"));
        }
        let same_nb = self.adj[i]
            .iter()
            .filter(|&&v| self.strategy[v as usize] == si)
            .count();
        let candidates = self.members[si.idx()].len() - 1 - same_nb;
        if candidates == 0 {
            return Ok(RewireOutcome::NoCandidate);
        }
        let pool = &self.members[si.idx()];
        let k = loop {
            let k = pool[rng.random_range(0..pool.len())] as usize;
            if k != i && !self.has_edge(i, k) {
                break k;
            }
        };
        self.remove_edge(i, j);
        self.add_edge(i, k);
        Ok(RewireOutcome::Done { old: j, new: k })
    }

    /// Detaches a uniformly chosen link of `i` and attaches `i` to a uniform
    /// household of any strategy that is neither `i` nor a current neighbour.
    pub fn rewire_random<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> RewireOutcome {
        let deg = self.adj[i].len();
        if deg == 0 || deg + 1 >= self.n() {
            return RewireOutcome::NoCandidate;
        }
        let j = self.adj[i][rng.random_range(0..deg)] as usize;
        let n = self.n();
        let k = loop {
            let k = rng.random_range(0..n);
            if k != i && !self.has_edge(i, k) {
                break k;
            }
        };
        self.remove_edge(i, j);
        self.add_edge(i, k);
        RewireOutcome::Done { old: j, new: k }
    }

    /// Link counts recomputed from scratch.
    pub fn recount(&self) -> LinkCounts {
        let mut c = LinkCounts::default();
        for (a, b) in self.edges() {
            c.add(self.strategy[a], self.strategy[b], 1);
        }
        c
    }

    /// Checks symmetry, simplicity, member bookkeeping and cached counts.
    pub fn audit(&self) -> Result<()> {
        let n = self.n();
        for (a, nb) in self.adj.iter().enumerate() {
            for (k, &b) in nb.iter().enumerate() {
                let b = b as usize;
                if b >= n || b == a {
                    return Err(Error::Contract("self-loop or dangling edge"));
                }
                if nb[..k].iter().any(|&v| v as usize == b) {
                    return Err(Error::Contract("duplicate edge"));
                }
                if !self.adj[b].iter().any(|&v| v as usize == a) {
                    return Err(Error::Contract("asymmetric adjacency"));
                }
            }
        }
        for s in [Strategy::Clean, Strategy::Dirty] {
            for (p, &i) in self.members[s.idx()].iter().enumerate() {
                let i = i as usize;
                if self.strategy[i] != s || self.pos[i] as usize != p {
                    return Err(Error::Contract("member index out of sync"));
                }
            }
        }
        if self.members[0].len() + self.members[1].len() != n {
            return Err(Error::Contract("member lists incomplete"));
        }
        if self.recount() != self.counts {
            return Err(Error::Contract("cached link counts out of sync"));
        }
        Ok(())
    }

    fn add_edge(&mut self, a: usize, b: usize) {
        self.adj[a].push(b as u32);
        self.adj[b].push(a as u32);
        self.counts.add(self.strategy[a], self.strategy[b], 1);
    }

    fn remove_edge(&mut self, a: usize, b: usize) {
        for (u, v) in [(a, b), (b, a)] {
            let list = &mut self.adj[u];
            if let Some(p) = list.iter().position(|&x| x as usize == v) {
                list.swap_remove(p);
            }
        }
        self.counts.add(self.strategy[a], self.strategy[b], -1);
    }
}

/// Independent fair-coin strategies.
pub fn random_strategies<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Strategy> {
    (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                Strategy::Clean
            } else {
                Strategy::Dirty
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Strategy::{Clean as C, Dirty as D};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn er_link_count_is_binomial() {
        let net = AdaptiveNetwork::erdos_renyi_init(200, 10.0, 7).unwrap();
        let pairs = 200.0 * 199.0 / 2.0;
        let p = 10.0 / 199.0;
        let mean = pairs * p;
        let sd = libm::sqrt(pairs * p * (1.0 - p));
        let m = net.n_links() as f64;
        assert!((m - mean).abs() < 4.0 * sd, "M = {m}");
        net.audit().unwrap();
    }

    #[test]
    fn two_nodes_mean_degree_one_is_connected() {
        let net = AdaptiveNetwork::erdos_renyi_init(2, 1.0, 1).unwrap();
        assert_eq!(net.n_links(), 1);
        assert!(net.has_edge(0, 1));
    }

    #[test]
    fn triangle_rewire_replaces_discordant_link() {
        // c0 - d1 - c2, plus c0 with no link to c2
        let mut net = AdaptiveNetwork::from_edges(vec![C, D, C], &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            net.counts(),
            LinkCounts {
                cc: 0,
                dd: 0,
                cd: 2
            }
        );
        let out = net.rewire_to_same(0, 1, &mut rng(0)).unwrap();
        assert_eq!(out, RewireOutcome::Done { old: 1, new: 2 });
        assert_eq!(
            net.counts(),
            LinkCounts {
                cc: 1,
                dd: 0,
                cd: 1
            }
        );
        net.audit().unwrap();
    }

    #[test]
    fn lone_clean_node_has_no_candidate() {
        let mut net = AdaptiveNetwork::from_edges(vec![C, D, D], &[(0, 1)]).unwrap();
        let before = net.clone();
        let out = net.rewire_to_same(0, 1, &mut rng(0)).unwrap();
        assert_eq!(out, RewireOutcome::NoCandidate);
        assert_eq!(net, before);
    }

    #[test]
    fn rewire_preconditions() {
        let mut net = AdaptiveNetwork::from_edges(vec![C, C, D], &[(0, 1)]).unwrap();
        assert!(net.rewire_to_same(0, 1, &mut rng(0)).is_err());
        assert!(net.rewire_to_same(0, 2, &mut rng(0)).is_err());
    }

    #[test]
    fn isolated_flip_keeps_counts() {
        let mut net = AdaptiveNetwork::from_edges(vec![C, D, C], &[(1, 2)]).unwrap();
        let before = net.counts();
        net.flip_strategy(0);
        assert_eq!(net.counts(), before);
        assert_eq!(net.strategy(0), D);
        net.audit().unwrap();
    }

    #[test]
    fn flip_with_three_dirty_neighbours() {
        let mut net =
            AdaptiveNetwork::from_edges(vec![C, D, D, D], &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let before = net.counts();
        net.flip_strategy(0);
        let after = net.counts();
        assert_eq!(after.cd + 3, before.cd);
        assert_eq!(after.dd, before.dd + 3);
        net.audit().unwrap();
    }

    #[test]
    fn complete_graph_counts() {
        let s: Vec<_> = (0..9).map(|i| if i < 4 { C } else { D }).collect();
        let net = AdaptiveNetwork::complete(s);
        assert_eq!(
            net.counts(),
            LinkCounts {
                cc: 6,
                dd: 10,
                cd: 20
            }
        );
    }

    #[test]
    fn rejects_bad_edge_lists() {
        assert!(AdaptiveNetwork::from_edges(vec![C, D], &[(0, 0)]).is_err());
        assert!(AdaptiveNetwork::from_edges(vec![C, D], &[(0, 1), (1, 0)]).is_err());
        assert!(AdaptiveNetwork::from_edges(vec![C, D], &[(0, 2)]).is_err());
    }
}
