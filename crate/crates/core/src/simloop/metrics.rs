use super::episode::StepRecord;
use crate::objectives::FairnessIndex;

/// Per-episode aggregates. Step-level quantities are per-step means;
/// quantities undefined on every step of the episode are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub length: usize,
    pub depleted: bool,
    pub market_failure: bool,
    /// Sum of harvester revenues per step.
    pub harvester_welfare: f64,
    /// Sum of buyer utilities per step.
    pub buyer_welfare: f64,
    /// `sum_r (s_r - S_eq)` after regrowth, per step.
    pub stock_deviation: f64,
    /// Fraction of (step, resource) pairs ending below `S_eq`.
    pub below_equilibrium: f64,
    pub wasted_fraction: f64,
    pub leftover_budget: f64,
    pub harvester_fairness_jain: f64,
    pub harvester_fairness_gini: f64,
    pub harvester_fairness_atkinson: f64,
    pub buyer_fairness_jain: f64,
    pub buyer_fairness_gini: f64,
    pub buyer_fairness_atkinson: f64,
    /// `sum_r |p_r - p_ref,r|` per step.
    pub price_gap: f64,
    pub mean_price: f64,
    pub policymaker_reward: f64,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn push_opt(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.push(v);
        }
    }

    fn get(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }
}

const FAIRNESS: [FairnessIndex; 3] = [FairnessIndex::Jain, FairnessIndex::Gini, FairnessIndex::Atkinson];

impl EpisodeMetrics {
    /// Column names in [`EpisodeMetrics::values`] order.
    pub const NAMES: [&'static str; 19] = [
        "episode",
        "length",
        "depleted",
        "market_failure",
        "harvester_welfare",
        "buyer_welfare",
        "stock_deviation",
        "below_equilibrium",
        "wasted_fraction",
        "leftover_budget",
        "harvester_fairness_jain",
        "harvester_fairness_gini",
        "harvester_fairness_atkinson",
        "buyer_fairness_jain",
        "buyer_fairness_gini",
        "buyer_fairness_atkinson",
        "price_gap",
        "mean_price",
        "policymaker_reward",
    ];

    pub fn from_steps(episode: usize, steps: &[StepRecord], equilibrium_stock: f64, depleted: bool, market_failure: bool) -> Self {
        let mut hw = Mean::default();
        let mut bw = Mean::default();
        let mut dev = Mean::default();
        let mut below = Mean::default();
        let mut waste = Mean::default();
        let mut leftover = Mean::default();
        let mut hf: [Mean; 3] = Default::default();
        let mut bf: [Mean; 3] = Default::default();
        let mut gap = Mean::default();
        let mut price = Mean::default();
        let mut reward = Mean::default();
        for s in steps {
            hw.push(s.revenues.iter().sum());
            bw.push(s.utilities.iter().sum());
            dev.push(s.stocks_after.iter().map(|x| x - equilibrium_stock).sum());
            for x in &s.stocks_after {
                below.push(if *x < equilibrium_stock { 1.0 } else { 0.0 });
            }
            waste.push_opt(s.waste);
            leftover.push_opt(s.leftover);
            for (k, index) in FAIRNESS.iter().enumerate() {
                hf[k].push_opt(index.score(&s.revenues).ok());
                if !s.market_skipped {
                    bf[k].push_opt(index.score(&s.utilities).ok());
                }
            }
            if let Some(r) = &s.reference_prices {
                gap.push(s.prices.iter().zip(r).map(|(p, q)| (p - q).abs()).sum());
            }
            for p in &s.prices {
                price.push(*p);
            }
            reward.push_opt(s.reward.map(|r| r.total));
        }
        Self {
            episode,
            length: steps.len(),
            depleted,
            market_failure,
            harvester_welfare: hw.get(),
            buyer_welfare: bw.get(),
            stock_deviation: dev.get(),
            below_equilibrium: below.get(),
            wasted_fraction: waste.get(),
            leftover_budget: leftover.get(),
            harvester_fairness_jain: hf[0].get(),
            harvester_fairness_gini: hf[1].get(),
            harvester_fairness_atkinson: hf[2].get(),
            buyer_fairness_jain: bf[0].get(),
            buyer_fairness_gini: bf[1].get(),
            buyer_fairness_atkinson: bf[2].get(),
            price_gap: gap.get(),
            mean_price: price.get(),
            policymaker_reward: reward.get(),
        }
    }

    pub fn values(&self) -> [f64; 19] {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        [
            self.episode as f64,
            self.length as f64,
            flag(self.depleted),
            flag(self.market_failure),
            self.harvester_welfare,
            self.buyer_welfare,
            self.stock_deviation,
            self.below_equilibrium,
            self.wasted_fraction,
            self.leftover_budget,
            self.harvester_fairness_jain,
            self.harvester_fairness_gini,
            self.harvester_fairness_atkinson,
            self.buyer_fairness_jain,
            self.buyer_fairness_gini,
            self.buyer_fairness_atkinson,
            self.price_gap,
            self.mean_price,
            self.policymaker_reward,
        ]
    }

    /// Inverse of [`EpisodeMetrics::values`].
    pub fn from_values(v: &[f64; 19]) -> Self {
        Self {
            episode: v[0] as usize,
            length: v[1] as usize,
            depleted: v[2] != 0.0,
            market_failure: v[3] != 0.0,
            harvester_welfare: v[4],
            buyer_welfare: v[5],
            stock_deviation: v[6],
            below_equilibrium: v[7],
            wasted_fraction: v[8],
            leftover_budget: v[9],
            harvester_fairness_jain: v[10],
            harvester_fairness_gini: v[11],
            harvester_fairness_atkinson: v[12],
            buyer_fairness_jain: v[13],
            buyer_fairness_gini: v[14],
            buyer_fairness_atkinson: v[15],
            price_gap: v[16],
            mean_price: v[17],
            policymaker_reward: v[18],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}
