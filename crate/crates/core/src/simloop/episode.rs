use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{InterventionReference, PricingMode, ScenarioConfig};
use super::metrics::EpisodeMetrics;
use super::{build_skills, derive_seed, sample_buyers, SeedPurpose, SimError};
use crate::fishery::{self, HarvesterParams, ResourceParams, ResourceState};
use crate::market::{allocate_at_prices, solve_equilibrium, MarketInstance, MarketOutcome};
use crate::objectives::{
    leftover_budget_fraction, obfuscate, policymaker_reward, wasted_fraction, RewardBreakdown, RewardInputs,
};
use crate::rl::{
    build_harvester_observation, build_policymaker_observation, policymaker_observation_len, ActionSample, PpoAgent,
    Transition, UpdateDiagnostics,
};

/// Decides a harvester's efforts.
#[derive(Debug, Clone)]
pub enum HarvesterController {
    Learner(Box<PpoAgent>),
    /// Same effort vector every step.
    Constant(Vec<f64>),
}

/// Decides the posted prices.
#[derive(Debug, Clone)]
pub enum PriceSetter {
    Equilibrium,
    Learner(Box<PpoAgent>),
    Constant(Vec<f64>),
}

/// Everything observable about one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub stocks_before: Vec<f64>,
    pub stocks_after: Vec<f64>,
    /// `N x R` efforts after clipping to `[0, max_effort]`.
    pub efforts: Array2<f64>,
    pub harvest: Vec<f64>,
    pub budgets: Vec<f64>,
    pub valuations: Array2<f64>,
    pub prices: Vec<f64>,
    pub reference_prices: Option<Vec<f64>>,
    pub allocation: Array2<f64>,
    pub revenues: Vec<f64>,
    pub utilities: Vec<f64>,
    /// True when nothing was harvested and the market did not run.
    pub market_skipped: bool,
    pub waste: Option<f64>,
    pub leftover: Option<f64>,
    pub reward: Option<RewardBreakdown>,
}

#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    pub metrics: EpisodeMetrics,
    pub depleted: bool,
    /// Market solver error that cut the episode short.
    pub failure: Option<String>,
    pub updates: Vec<(String, UpdateDiagnostics)>,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One independent training run: its agents persist across episodes.
#[derive(Debug, Clone)]
pub struct Trial {
    pub config: ScenarioConfig,
    pub trial: u64,
    pub harvesters: Vec<HarvesterController>,
    pub price_setter: PriceSetter,
    resources: Vec<ResourceParams>,
    harvester_params: Vec<HarvesterParams>,
    equilibrium_stocks: Vec<f64>,
    episode: usize,
}

struct StepOutput {
    record: StepRecord,
    harvester_samples: Vec<Option<(Vec<f64>, ActionSample)>>,
    policymaker_sample: Option<(Vec<f64>, ActionSample)>,
    next_state: ResourceState,
}

impl Trial {
    /// Builds learners (or the equilibrium/fixed price setter) per the
    /// config, seeded from `(config.seed, trial)`.
    pub fn new(config: ScenarioConfig, trial: u64) -> Result<Self, SimError> {
        config.validate()?;
        let (n, r, b) = (config.harvesters, config.resources, config.buyers);
        let seed = |agent: usize| derive_seed(config.seed, trial, agent as u64, SeedPurpose::Agent);
        let mut harvesters = Vec::with_capacity(n);
        for i in 0..n {
            let agent = PpoAgent::new(
                format!("harvester_{i}"),
                2 * r + 1,
                vec![(0.0, config.max_effort); r],
                config.ppo.clone(),
                seed(i),
            )?;
            harvesters.push(HarvesterController::Learner(Box::new(agent)));
        }
        let price_setter = match config.pricing_mode {
            PricingMode::MarketEquilibrium => PriceSetter::Equilibrium,
            PricingMode::Fixed => PriceSetter::Constant(config.fixed_prices.clone()),
            PricingMode::Policymaker => {
                let agent = PpoAgent::new(
                    "policymaker",
                    policymaker_observation_len(n, r, b),
                    vec![(0.0, config.max_price); r],
                    config.ppo.clone(),
                    seed(n),
                )?;
                PriceSetter::Learner(Box::new(agent))
            }
        };
        Self::with_controllers(config, trial, harvesters, price_setter)
    }

    pub fn with_controllers(
        config: ScenarioConfig,
        trial: u64,
        harvesters: Vec<HarvesterController>,
        price_setter: PriceSetter,
    ) -> Result<Self, SimError> {
        config.validate()?;
        if harvesters.len() != config.harvesters {
            return Err(SimError::Config(format!("{} controllers for {} harvesters", harvesters.len(), config.harvesters)));
        }
        let r = config.resources;
        let bad_len = harvesters.iter().any(|h| matches!(h, HarvesterController::Constant(e) if e.len() != r))
            || matches!(&price_setter, PriceSetter::Constant(p) if p.len() != r);
        if bad_len {
            return Err(SimError::Config(format!("constant efforts and prices need {r} entries")));
        }
        let s_eq = config.equilibrium_stock();
        let resources = vec![ResourceParams::at_equilibrium(s_eq, config.growth_rate)?; config.resources];
        let skills = build_skills(config.harvesters, config.resources, config.base_skill, config.specialty_skill);
        let harvester_params = skills
            .outer_iter()
            .map(|row| HarvesterParams::new(row.to_vec(), config.harvest_cost))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            equilibrium_stocks: vec![s_eq; config.resources],
            config,
            trial,
            harvesters,
            price_setter,
            resources,
            harvester_params,
            episode: 0,
        })
    }

    pub fn episodes_run(&self) -> usize {
        self.episode
    }

    pub fn equilibrium_stocks(&self) -> &[f64] {
        &self.equilibrium_stocks
    }

    /// Every learning agent, harvesters first.
    pub fn learners(&self) -> Vec<&PpoAgent> {
        let mut out: Vec<&PpoAgent> = self
            .harvesters
            .iter()
            .filter_map(|h| match h {
                HarvesterController::Learner(a) => Some(a.as_ref()),
                HarvesterController::Constant(_) => None,
            })
            .collect();
        if let PriceSetter::Learner(a) = &self.price_setter {
            out.push(a);
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn run_step(
        &mut self,
        t: usize,
        state: &ResourceState,
        prev_prices: &[f64],
        prev_efforts: &Array2<f64>,
        prev_revenues: &[f64],
        buyer_rng: &mut ChaCha8Rng,
        noise_rng: &mut ChaCha8Rng,
        greedy: bool,
    ) -> Result<StepOutput, SimError> {
        let cfg = &self.config;
        let (n, r) = (cfg.harvesters, cfg.resources);

        // (1) harvesters act on last step's observations
        let mut efforts = Array2::zeros((n, r));
        let mut harvester_samples = Vec::with_capacity(n);
        for (i, controller) in self.harvesters.iter_mut().enumerate() {
            match controller {
                HarvesterController::Learner(agent) => {
                    let obs = build_harvester_observation(prev_prices, &prev_efforts.row(i).to_vec(), prev_revenues[i]);
                    if greedy {
                        for (j, e) in agent.act_greedy(&obs)?.into_iter().enumerate() {
                            efforts[[i, j]] = e;
                        }
                        harvester_samples.push(None);
                        continue;
                    }
                    let sample = agent.act(&obs)?;
                    for (j, e) in sample.env_action.iter().enumerate() {
                        efforts[[i, j]] = *e;
                    }
                    harvester_samples.push(Some((obs, sample)));
                }
                HarvesterController::Constant(e) => {
                    for j in 0..r {
                        efforts[[i, j]] = e[j].clamp(0.0, cfg.max_effort);
                    }
                    harvester_samples.push(None);
                }
            }
        }

        // (2) harvest and regrowth
        let (next_state, outcome) = fishery::step(state, &efforts, &self.harvester_params, &self.resources)?;
        let supplies = outcome.total_harvest.to_vec();
        let market_skipped = supplies.iter().all(|&h| h <= 0.0);

        // (3) a fresh set of buyers
        let (budgets, valuations) = sample_buyers(cfg.buyers, r, buyer_rng);
        let instance = MarketInstance::new(budgets.clone(), valuations.clone(), supplies.clone())?;

        // (4) pricing and allocation
        let mut policymaker_sample = None;
        let (outcome_market, reference) = match &mut self.price_setter {
            PriceSetter::Equilibrium => {
                let m = if market_skipped {
                    MarketOutcome::empty(&instance)
                } else {
                    solve_equilibrium(&instance, cfg.market_tolerance, cfg.market_max_iterations)?
                };
                let reference = m.prices.clone();
                (m, Some(reference))
            }
            PriceSetter::Constant(p) => {
                let p = p.clone();
                let m = if market_skipped { empty_at(&instance, p) } else { allocate_at_prices(&instance, &p)? };
                (m, None)
            }
            PriceSetter::Learner(agent) => {
                let observed = obfuscate(&valuations, &cfg.obfuscation, noise_rng)?;
                let obs = build_policymaker_observation(&outcome.effective_efforts, &state.stocks, &budgets, &observed);
                let prices = if greedy {
                    agent.act_greedy(&obs)?
                } else {
                    let sample = agent.act(&obs)?;
                    let prices = sample.env_action.clone();
                    policymaker_sample = Some((obs, sample));
                    prices
                };
                let need_reference = cfg.weights.intervention > 0.0 || cfg.track_reference_prices;
                let reference = match (need_reference, cfg.intervention_reference) {
                    (false, _) => None,
                    (true, InterventionReference::PreviousStep) => Some(prev_prices.to_vec()),
                    (true, InterventionReference::Equilibrium) if market_skipped => Some(vec![0.0; r]),
                    (true, InterventionReference::Equilibrium) => {
                        let eq = solve_equilibrium(&instance, cfg.market_tolerance, cfg.market_max_iterations)?;
                        Some(eq.prices)
                    }
                };
                let m = if market_skipped { empty_at(&instance, prices.clone()) } else { allocate_at_prices(&instance, &prices)? };
                (m, reference)
            }
        };
        let prices = outcome_market.prices.clone();

        // (5) harvesters are paid on what they caught
        let revenues = fishery::revenue(&prices, &outcome, &self.harvester_params)?;
        let utilities = outcome_market.buyer_utilities.clone();
        let (waste, leftover) = if market_skipped {
            (None, None)
        } else {
            (
                Some(wasted_fraction(&outcome_market.allocation, &supplies)?),
                Some(leftover_budget_fraction(&outcome_market.allocation, &prices, &budgets)?),
            )
        };

        // (6) policymaker reward, measured on the post-regrowth stocks
        let reward = policymaker_reward(
            &RewardInputs {
                harvester_revenues: &revenues,
                buyer_utilities: &utilities,
                stocks: &next_state.stocks,
                equilibrium_stocks: &self.equilibrium_stocks,
                prices: &prices,
                reference_prices: reference.as_deref(),
                all_zero_is_equal: true,
            },
            &cfg.weights,
            cfg.fairness,
        )?;

        Ok(StepOutput {
            record: StepRecord {
                t,
                stocks_before: state.stocks.clone(),
                stocks_after: next_state.stocks.clone(),
                efforts,
                harvest: supplies,
                budgets,
                valuations,
                prices,
                reference_prices: reference,
                allocation: outcome_market.allocation,
                revenues,
                utilities,
                market_skipped,
                waste,
                leftover,
                reward: Some(reward),
            },
            harvester_samples,
            policymaker_sample,
            next_state,
        })
    }

    /// Runs one episode from the equilibrium stock and, if learning is on,
    /// lets every learner train once it has a full batch.
    pub fn run_episode(&mut self) -> Result<EpisodeLog, SimError> {
        self.episode_inner(false)
    }

    /// Plays one episode with every learner taking its mean action. Nothing
    /// is recorded or trained and the episode counter does not advance, so
    /// evaluation leaves the training run unchanged.
    pub fn evaluate_episode(&mut self) -> Result<EpisodeLog, SimError> {
        self.episode_inner(true)
    }

    fn episode_inner(&mut self, greedy: bool) -> Result<EpisodeLog, SimError> {
        let cfg = self.config.clone();
        let (n, r) = (cfg.harvesters, cfg.resources);
        let ep = self.episode as u64;
        let mut buyer_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, self.trial, ep, SeedPurpose::Buyers));
        let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, self.trial, ep, SeedPurpose::Obfuscation));

        let mut state = ResourceState::initial(&self.resources);
        let mut prev_prices = vec![0.0; r];
        let mut prev_efforts = Array2::zeros((n, r));
        let mut prev_revenues = vec![0.0; n];
        let mut steps = Vec::with_capacity(cfg.max_steps);
        let mut depleted = false;
        let mut failure = None;
        let mut last_pm_obs: Option<Vec<f64>> = None;

        for t in 0..cfg.max_steps {
            let out = match self.run_step(t, &state, &prev_prices, &prev_efforts, &prev_revenues, &mut buyer_rng, &mut noise_rng, greedy) {
                Ok(out) => out,
                Err(SimError::Market(e)) => {
                    failure = Some(format!("step {t}: {e}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            depleted = fishery::is_depleted(&out.next_state, cfg.depletion_threshold);
            let done = depleted || t + 1 == cfg.max_steps;

            for (i, sample) in out.harvester_samples.into_iter().enumerate() {
                if let (Some((obs, s)), HarvesterController::Learner(agent)) = (sample, &mut self.harvesters[i]) {
                    agent.record(Transition::new(obs, &s, out.record.revenues[i], done));
                }
            }
            if let (Some((obs, s)), PriceSetter::Learner(agent)) = (out.policymaker_sample, &mut self.price_setter) {
                let reward = out.record.reward.map(|b| b.total).unwrap_or(0.0);
                agent.record(Transition::new(obs.clone(), &s, reward, done));
                last_pm_obs = Some(obs);
            }

            prev_prices.clone_from(&out.record.prices);
            prev_efforts.assign(&out.record.efforts);
            prev_revenues.clone_from(&out.record.revenues);
            state = out.next_state;
            steps.push(out.record);
            if done {
                break;
            }
        }

        let metrics = EpisodeMetrics::from_steps(self.episode, &steps, self.equilibrium_stocks[0], depleted, failure.is_some());
        if greedy {
            return Ok(EpisodeLog { steps, metrics, depleted, failure, updates: Vec::new() });
        }

        // close trajectories: bootstrap unless the stock collapsed
        let mut updates = Vec::new();
        for (i, controller) in self.harvesters.iter_mut().enumerate() {
            if let HarvesterController::Learner(agent) = controller {
                let next_obs = build_harvester_observation(&prev_prices, &prev_efforts.row(i).to_vec(), prev_revenues[i]);
                agent.finish_episode(if depleted { None } else { Some(&next_obs) })?;
            }
        }
        if let PriceSetter::Learner(agent) = &mut self.price_setter {
            agent.finish_episode(if depleted { None } else { last_pm_obs.as_deref() })?;
        }
        if cfg.learning {
            for controller in &mut self.harvesters {
                if let HarvesterController::Learner(agent) = controller {
                    if let Some(d) = agent.maybe_train()? {
                        updates.push((agent.id.clone(), d));
                    }
                }
            }
            if let PriceSetter::Learner(agent) = &mut self.price_setter {
                if let Some(d) = agent.maybe_train()? {
                    updates.push((agent.id.clone(), d));
                }
            }
        }

        self.episode += 1;
        Ok(EpisodeLog { steps, metrics, depleted, failure, updates })
    }
}

fn empty_at(instance: &MarketInstance, prices: Vec<f64>) -> MarketOutcome {
    MarketOutcome { prices, ..MarketOutcome::empty(instance) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fishery::spawner_recruit;

    fn small(mode: PricingMode) -> ScenarioConfig {
        ScenarioConfig {
            harvesters: 2,
            resources: 2,
            buyers: 3,
            scarcity: 0.45,
            pricing_mode: mode,
            fixed_prices: vec![1.0, 2.0],
            episodes: 2,
            trials: 1,
            ..ScenarioConfig::default()
        }
    }

    fn constant(config: ScenarioConfig, effort: f64, setter: PriceSetter) -> Trial {
        let hs = (0..config.harvesters).map(|_| HarvesterController::Constant(vec![effort; config.resources])).collect();
        Trial::with_controllers(config, 0, hs, setter).unwrap()
    }

    #[test]
    fn zero_effort_keeps_stock_and_skips_market() {
        let mut trial = constant(small(PricingMode::MarketEquilibrium), 0.0, PriceSetter::Equilibrium);
        let log = trial.run_episode().unwrap();
        assert_eq!(log.len(), 500);
        assert!(!log.depleted);
        let s_eq = trial.equilibrium_stocks()[0];
        for s in &log.steps {
            assert!(s.market_skipped);
            assert!(s.utilities.iter().all(|&u| u == 0.0));
            assert!(s.stocks_after.iter().all(|&x| (x - s_eq).abs() < 1e-12));
        }
    }

    #[test]
    fn max_effort_depletes_scarce_stock_early() {
        let config = ScenarioConfig { harvesters: 4, ..small(PricingMode::MarketEquilibrium) };
        let mut trial = constant(config, 1.0, PriceSetter::Equilibrium);
        let log = trial.run_episode().unwrap();
        assert!(log.depleted);
        assert!(log.len() < 50, "length {}", log.len());
        assert!(log.metrics.depleted && log.metrics.length < 500);
    }

    #[test]
    fn equilibrium_mode_sells_everything() {
        let mut trial = constant(small(PricingMode::MarketEquilibrium), 0.2, PriceSetter::Equilibrium);
        let log = trial.run_episode().unwrap();
        for s in &log.steps {
            assert!(s.waste.unwrap() < 1e-6);
            assert!(s.leftover.unwrap() < 1e-6);
            // total revenue equals total budget when everything clears
            let paid: f64 = s.revenues.iter().sum();
            assert!((paid - s.budgets.iter().sum::<f64>()).abs() < 1e-6);
        }
    }

    #[test]
    fn single_harvester_single_buyer_step_by_hand() {
        let config = ScenarioConfig {
            harvesters: 1,
            resources: 1,
            buyers: 1,
            scarcity: 1.0,
            max_steps: 1,
            ..ScenarioConfig::default()
        };
        let mut trial = constant(config.clone(), 0.6, PriceSetter::Equilibrium);
        let log = trial.run_episode().unwrap();
        let s = &log.steps[0];

        let s_eq = config.equilibrium_stock();
        let q = (s_eq / (2.0 * s_eq)).min(1.0);
        let h = (q * 0.6 * 1.0_f64).min(s_eq);
        let next = spawner_recruit(s_eq - h, &ResourceParams::at_equilibrium(s_eq, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0, 0, 0, SeedPurpose::Buyers));
        let (b, _) = sample_buyers(1, 1, &mut rng);
        // one buyer buys the whole catch with the whole budget
        assert!((s.harvest[0] - h).abs() < 1e-15);
        assert!((s.prices[0] - b[0] / h).abs() < 1e-9);
        assert!((s.revenues[0] - b[0]).abs() < 1e-9);
        assert!((s.utilities[0] - s.valuations[[0, 0]] * h).abs() < 1e-9);
        assert!((s.stocks_after[0] - next).abs() < 1e-15);
    }

    #[test]
    fn fixed_prices_pay_on_harvest() {
        let mut trial = constant(small(PricingMode::Fixed), 0.3, PriceSetter::Constant(vec![1.0, 2.0]));
        let log = trial.run_episode().unwrap();
        let s = &log.steps[3];
        assert_eq!(s.prices, vec![1.0, 2.0]);
        assert!(s.reference_prices.is_none());
        for r in 0..2 {
            let sold: f64 = s.allocation.column(r).sum();
            assert!(sold <= s.harvest[r] + 1e-9);
        }
    }

    #[test]
    fn stocks_do_not_depend_on_pricing_mode() {
        let a = constant(small(PricingMode::MarketEquilibrium), 0.4, PriceSetter::Equilibrium).run_episode().unwrap();
        let b = constant(small(PricingMode::Fixed), 0.4, PriceSetter::Constant(vec![3.0, 0.1])).run_episode().unwrap();
        let sa: Vec<_> = a.steps.iter().map(|s| s.stocks_after.clone()).collect();
        let sb: Vec<_> = b.steps.iter().map(|s| s.stocks_after.clone()).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn policymaker_step_conserves_supply() {
        let config = ScenarioConfig { ppo: crate::rl::PpoConfig { train_batch_size: 200, ..Default::default() }, ..small(PricingMode::Policymaker) };
        let mut trial = Trial::new(config, 0).unwrap();
        let log = trial.run_episode().unwrap();
        for s in log.steps.iter().filter(|s| !s.market_skipped) {
            let waste = s.waste.unwrap();
            let total: f64 = s.harvest.iter().sum();
            let sold: f64 = s.allocation.sum();
            assert!((sold + waste * total - total).abs() < 1e-9);
            assert!(s.reference_prices.is_some());
            assert!(s.prices.iter().all(|p| (0.0..=10.0).contains(p)));
        }
    }

    #[test]
    fn learning_runs_are_deterministic() {
        let config = ScenarioConfig { ppo: crate::rl::PpoConfig { train_batch_size: 300, minibatch_size: 64, sgd_iterations: 2, ..Default::default() }, max_steps: 150, ..small(PricingMode::Policymaker) };
        let run = || {
            let mut t = Trial::new(config.clone(), 1).unwrap();
            (0..3).map(|_| t.run_episode().unwrap().metrics.values().map(f64::to_bits)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
