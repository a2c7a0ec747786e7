//! Differential evolution (rand/1/bin) over the unit cube.
//!
//! The population is evaluated lazily: each step proposes a trial vector for
//! the current target, the caller measures it and reports back through
//! [`DEState::report`]. Unevaluated members rank below every measured cost.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeSettings {
    pub mutation: f64,
    pub crossover: f64,
    /// Defaults to `max(10, 3d)`.
    pub pop_size: Option<usize>,
}

impl Default for DeSettings {
    fn default() -> Self {
        Self {
            mutation: 0.7,
            crossover: 0.5,
            pop_size: None,
        }
    }
}

impl DeSettings {
    pub fn population_for(&self, dim: usize) -> usize {
        self.pop_size.unwrap_or((3 * dim).max(10)).max(4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MemberCost {
    Unevaluated,
    Failed,
    Valid(f64),
}

impl MemberCost {
    /// Ranking key; a failed run counts as twice the worst valid cost seen.
    fn key(self, worst_valid: f64) -> f64 {
        match self {
            MemberCost::Unevaluated => f64::INFINITY,
            MemberCost::Failed => 2.0 * worst_valid.max(0.0),
            MemberCost::Valid(c) => c,
        }
    }
}

/// Latin-hypercube sample of `n` points in `[0,1]^d`.
pub fn latin_hypercube<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..dim {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            p[k] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub target: usize,
    pub candidate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEState {
    pub population: Vec<Vec<f64>>,
    pub costs: Vec<MemberCost>,
    pub settings: DeSettings,
    cursor: usize,
    reinitialisations: usize,
    seed: u64,
}

impl DEState {
    pub fn new(dim: usize, settings: DeSettings, seed: u64) -> Self {
        let n = settings.population_for(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            population: latin_hypercube(n, dim, &mut rng),
            costs: vec![MemberCost::Unevaluated; n],
            settings,
            cursor: 0,
            reinitialisations: 0,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.population.first().map_or(0, |p| p.len())
    }

    pub fn pop_size(&self) -> usize {
        self.population.len()
    }

    pub fn reinitialisations(&self) -> usize {
        self.reinitialisations
    }

    fn all_failed(&self) -> bool {
        self.costs.iter().all(|c| *c == MemberCost::Failed)
    }

    /// Trial vector for the current target. Identical `(state, seed)` gives
    /// an identical proposal.
    pub fn propose(&mut self, seed: u64) -> Proposal {
        if self.all_failed() {
            self.reinitialisations += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (self.reinitialisations as u64).rotate_left(32));
            self.population = latin_hypercube(self.pop_size(), self.dim(), &mut rng);
            self.costs = vec![MemberCost::Unevaluated; self.pop_size()];
            self.cursor = 0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.pop_size();
        let d = self.dim();
        let target = self.cursor;
        let mut others: Vec<usize> = (0..n).filter(|&i| i != target).collect();
        others.shuffle(&mut rng);
        let (r1, r2, r3) = (others[0], others[1], others[2]);
        let f = self.settings.mutation;
        let cr = self.settings.crossover;
        let forced = if cr > 0.0 && d > 0 {
            Some(rng.random_range(0..d))
        } else {
            None
        };
        let x = &self.population;
        let candidate = (0..d)
            .map(|k| {
                let u: f64 = rng.random();
                if u < cr || forced == Some(k) {
                    (x[r1][k] + f * (x[r2][k] - x[r3][k])).clamp(0.0, 1.0)
                } else {
                    x[target][k]
                }
            })
            .collect();
        Proposal { target, candidate }
    }

    /// Greedy selection after the trial vector has been measured; advances
    /// the target cursor. Returns whether the candidate replaced the target.
    pub fn report(&mut self, proposal: &Proposal, cost: Option<f64>, worst_valid: f64) -> bool {
        let t = proposal.target;
        let cand = cost.map_or(MemberCost::Failed, MemberCost::Valid);
        let current = self.costs[t];
        let replace = match (cand, current) {
            (MemberCost::Valid(_), MemberCost::Failed) => true,
            _ => cand.key(worst_valid) < current.key(worst_valid),
        };
        if replace {
            self.population[t] = proposal.candidate.clone();
            self.costs[t] = cand;
        }
        self.cursor = (self.cursor + 1) % self.pop_size();
        replace
    }
}
