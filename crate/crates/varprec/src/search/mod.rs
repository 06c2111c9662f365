//! Two-phase precision search: a per-tensor binary search that shrinks the
//! format space, then a constrained NSGA-II over the reduced combinatorial
//! space.
//!
//! Feasibility means matching the full-precision baseline success rate in
//! every environment on the frozen problem set. The combinatorial objective
//! is the total bitwidth of the five tensors; the constraint enters through
//! NSGA-II's constraint domination.

pub mod nsga2;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fpcodec::{enumerate_formats, formats_at_or_above, splits_at_bitwidth, FpFormat};
use crate::pipeline::{PrecisionConfig, TensorSlot};
use crate::streams;
use nsga2::{Genome, Point};

/// Per-environment success rates of one configuration, keyed by environment
/// name (ordered, for stable serialization).
pub type Rates = BTreeMap<String, f64>;

/// Required success rate per environment: the frozen full-precision rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTargets {
    pub targets: Rates,
}

impl BaselineTargets {
    pub fn feasible(&self, rates: &Rates) -> bool {
        self.violation(rates) <= 0.0
    }

    /// Total shortfall against the targets; 0 when feasible.
    pub fn violation(&self, rates: &Rates) -> f64 {
        self.targets
            .iter()
            .map(|(env, &target)| {
                let rate = rates.get(env).copied().unwrap_or(0.0);
                (target - rate).max(0.0)
            })
            .sum()
    }
}

/// Anything that can score a precision configuration. Implementations must
/// be deterministic in the configuration.
pub trait ConfigEvaluator {
    fn evaluate(&self, config: &PrecisionConfig) -> Rates;
}

impl<F: Fn(&PrecisionConfig) -> Rates> ConfigEvaluator for F {
    fn evaluate(&self, config: &PrecisionConfig) -> Rates {
        self(config)
    }
}

/// Memoizing wrapper: identical configurations are evaluated once; cache
/// hits consume no budget.
pub struct MemoizedEvaluator<'a> {
    inner: &'a dyn ConfigEvaluator,
    cache: HashMap<[FpFormat; 5], Rates>,
    pub unique_evaluations: u64,
}

impl<'a> MemoizedEvaluator<'a> {
    pub fn new(inner: &'a dyn ConfigEvaluator) -> Self {
        MemoizedEvaluator {
            inner,
            cache: HashMap::new(),
            unique_evaluations: 0,
        }
    }

    pub fn evaluate(&mut self, config: &PrecisionConfig) -> (Rates, bool) {
        let key = config.formats();
        if let Some(hit) = self.cache.get(&key) {
            return (hit.clone(), false);
        }
        let rates = self.inner.evaluate(config);
        self.cache.insert(key, rates.clone());
        self.unique_evaluations += 1;
        (rates, true)
    }
}

#[derive(Debug, Clone, Error)]
pub enum SearchError {
    #[error("slot {slot} stays below the baseline even at 32 bits")]
    InfeasibleSlot { slot: TensorSlot },
    #[error("no feasible configuration within the evaluation budget")]
    NoFeasibleTrial {
        least_violating: Box<Trial>,
        /// The full log is preserved so the flagged artifact can be written.
        trials: Vec<Trial>,
        evaluations: u64,
    },
    #[error("budget {budget} cannot cover one population of {population}")]
    BudgetTooSmall { budget: u64, population: usize },
}

/// One probe of the per-tensor phase: a bitwidth and what happened there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub bits: u32,
    /// Splits tried at this width, in probe order.
    pub tried: Vec<FpFormat>,
    pub passed: bool,
    pub witness: Option<FpFormat>,
}

/// Phase-1 result for one tensor slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotSearchResult {
    pub slot: TensorSlot,
    pub min_bits: u32,
    pub witness: FpFormat,
    pub probes: Vec<ProbeRecord>,
    /// Post-hoc check that `min_bits - 1` fails and `min_bits` passes.
    pub monotonic_ok: bool,
}

/// Binary search over bitwidths for the narrowest single-slot substitution
/// that stays feasible, given a feasibility predicate over configurations.
/// A bitwidth passes if any exponent/mantissa split at that width is
/// feasible with the other slots at full precision.
pub fn per_tensor_binary_search_with(
    slot: TensorSlot,
    feasible: &mut dyn FnMut(&PrecisionConfig) -> bool,
) -> Result<SlotSearchResult, SearchError> {
    let mut probes = Vec::new();
    let mut probe = |bits: u32, feasible: &mut dyn FnMut(&PrecisionConfig) -> bool| {
        let mut tried = Vec::new();
        let mut witness = None;
        for split in splits_at_bitwidth(bits) {
            tried.push(split);
            let mut config = PrecisionConfig::full_precision();
            config.set(slot, split);
            if feasible(&config) {
                witness = Some(split);
                break;
            }
        }
        probes.push(ProbeRecord {
            bits,
            tried,
            passed: witness.is_some(),
            witness,
        });
        witness
    };

    let mut witnesses: HashMap<u32, Option<FpFormat>> = HashMap::new();
    let mut check = |bits: u32, feasible: &mut dyn FnMut(&PrecisionConfig) -> bool| {
        if let Some(cached) = witnesses.get(&bits) {
            return *cached;
        }
        let w = probe(bits, feasible);
        witnesses.insert(bits, w);
        w
    };

    let (mut lo, mut hi) = (4u32, 32u32);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if check(mid, feasible).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let Some(witness) = check(lo, feasible) else {
        return Err(SearchError::InfeasibleSlot { slot });
    };
    // The search is only sound if pass is monotone in the bitwidth; verify
    // the boundary instead of assuming it.
    let monotonic_ok = lo == 4 || check(lo - 1, feasible).is_none();
    Ok(SlotSearchResult {
        slot,
        min_bits: lo,
        witness,
        probes,
        monotonic_ok,
    })
}

/// Rate-based wrapper over [`per_tensor_binary_search_with`]: a
/// configuration is feasible when its memoized rates meet every target.
pub fn per_tensor_binary_search(
    slot: TensorSlot,
    evaluator: &mut MemoizedEvaluator,
    targets: &BaselineTargets,
) -> Result<SlotSearchResult, SearchError> {
    let mut feasible = |config: &PrecisionConfig| {
        let (rates, _) = evaluator.evaluate(config);
        targets.feasible(&rates)
    };
    per_tensor_binary_search_with(slot, &mut feasible)
}

/// Per-slot candidate format lists after phase-1 reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Candidate lists in `TensorSlot::ALL` order, each a filtered view of
    /// the 21-format space.
    pub slots: [Vec<FpFormat>; 5],
}

impl SearchSpace {
    /// The unreduced space: all 21 formats for every slot.
    pub fn full() -> Self {
        let all: Vec<FpFormat> = enumerate_formats().formats().to_vec();
        SearchSpace {
            slots: std::array::from_fn(|_| all.clone()),
        }
    }

    pub fn size(&self) -> u64 {
        self.slots.iter().map(|s| s.len() as u64).product()
    }

    /// Shrink factor relative to the unreduced 21^5 space.
    pub fn reduction_factor(&self) -> f64 {
        SearchSpace::full().size() as f64 / self.size() as f64
    }

    pub fn config_for(&self, genome: &Genome) -> PrecisionConfig {
        let f = |i: usize| self.slots[i][genome[i]];
        PrecisionConfig {
            out_spheres: f(0),
            grad_out_spheres: f(1),
            out_vec: f(2),
            closest_pt: f(3),
            closest_pt_swept: f(4),
        }
    }

    pub fn contains(&self, config: &PrecisionConfig) -> bool {
        self.slots
            .iter()
            .zip(config.formats())
            .all(|(candidates, fmt)| candidates.contains(&fmt))
    }
}

/// Eliminates every format narrower than the phase-1 minimum of its slot
/// (minima in `TensorSlot::ALL` order).
pub fn reduce_space(minima: [u32; 5]) -> SearchSpace {
    let all = enumerate_formats();
    SearchSpace {
        slots: std::array::from_fn(|i| formats_at_or_above(&all, minima[i]).formats().to_vec()),
    }
}

/// One evaluated configuration in the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: u64,
    pub config: PrecisionConfig,
    pub rates: Rates,
    pub total_bits: u32,
    pub feasible: bool,
    pub violation: f64,
    /// Master seed of the search that produced this trial.
    pub seed: u64,
}

/// NSGA-II knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Params {
    pub population: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
}

impl Default for Nsga2Params {
    fn default() -> Self {
        Nsga2Params {
            population: 20,
            crossover_prob: 0.9,
            mutation_prob: 0.2,
        }
    }
}

/// Phase-2 outcome: the winning trial plus the full log of unique
/// evaluations in id order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Trial,
    pub trials: Vec<Trial>,
    pub evaluations: u64,
}

/// Constrained NSGA-II over the reduced space: minimize total bits subject
/// to per-environment baseline rates, stopping after `budget` unique
/// evaluations (or exhausting the space). Returns the feasible trial with
/// the fewest total bits; ties resolve to the lexicographically smaller
/// per-slot bit vector, then the earlier trial.
pub fn nsga2_search(
    space: &SearchSpace,
    evaluator: &dyn ConfigEvaluator,
    targets: &BaselineTargets,
    budget: u64,
    params: &Nsga2Params,
    master_seed: u64,
) -> Result<SearchOutcome, SearchError> {
    if budget < params.population as u64 {
        return Err(SearchError::BudgetTooSmall {
            budget,
            population: params.population,
        });
    }
    let mut memo = MemoizedEvaluator::new(evaluator);
    let mut rng = streams::rng_for(streams::derive(master_seed, streams::SEARCH));
    let slot_sizes: [usize; 5] = std::array::from_fn(|i| space.slots[i].len());
    let effective_budget = budget.min(space.size());
    let mut trials: Vec<Trial> = Vec::new();

    let score =
        |genome: &Genome, memo: &mut MemoizedEvaluator, trials: &mut Vec<Trial>| -> (u32, f64) {
            let config = space.config_for(genome);
            let (rates, fresh) = memo.evaluate(&config);
            let violation = targets.violation(&rates);
            let total_bits = config.total_bits();
            if fresh {
                trials.push(Trial {
                    id: trials.len() as u64,
                    config,
                    total_bits,
                    feasible: violation <= 0.0,
                    violation,
                    rates,
                    seed: master_seed,
                });
            }
            (total_bits, violation)
        };

    use rand::Rng;
    let random_genome = |rng: &mut rand_chacha::ChaCha8Rng| -> Genome {
        std::array::from_fn(|i| rng.random_range(0..slot_sizes[i]))
    };

    let mut population: Vec<Genome> = (0..params.population)
        .map(|_| random_genome(&mut rng))
        .collect();
    let mut points: Vec<Point> = population
        .iter()
        .map(|g| {
            let (bits, v) = score(g, &mut memo, &mut trials);
            Point {
                objectives: vec![bits as f64],
                violation: v,
            }
        })
        .collect();

    let mut stalled_generations = 0;
    while memo.unique_evaluations < effective_budget {
        let (rank, crowd) = nsga2::rank_and_crowd(&points);
        let mut offspring: Vec<Genome> = Vec::with_capacity(params.population);
        while offspring.len() < params.population {
            let p1 = nsga2::tournament_select(&mut rng, &population, &rank, &crowd);
            let p2 = nsga2::tournament_select(&mut rng, &population, &rank, &crowd);
            let (mut c1, mut c2) =
                nsga2::uniform_crossover(&mut rng, &p1, &p2, params.crossover_prob);
            nsga2::random_reset_mutation(&mut rng, &mut c1, &slot_sizes, params.mutation_prob);
            nsga2::random_reset_mutation(&mut rng, &mut c2, &slot_sizes, params.mutation_prob);
            offspring.push(c1);
            if offspring.len() < params.population {
                offspring.push(c2);
            }
        }

        let before = memo.unique_evaluations;
        let mut combined = population.clone();
        let mut combined_points = points.clone();
        for child in offspring {
            if memo.unique_evaluations >= effective_budget {
                break;
            }
            let (bits, v) = score(&child, &mut memo, &mut trials);
            combined.push(child);
            combined_points.push(Point {
                objectives: vec![bits as f64],
                violation: v,
            });
        }

        // Environmental selection: fill from the best fronts, crowding
        // truncation on the split front.
        let fronts = nsga2::nondominated_sort(&combined_points);
        let mut next_pop = Vec::with_capacity(params.population);
        let mut next_points = Vec::with_capacity(params.population);
        'fill: for front in &fronts {
            let need = params.population - next_pop.len();
            if front.len() <= need {
                for &i in front {
                    next_pop.push(combined[i]);
                    next_points.push(combined_points[i].clone());
                }
            } else {
                let d = nsga2::crowding_distance(&combined_points, front);
                let mut order: Vec<usize> = (0..front.len()).collect();
                order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
                for &w in order.iter().take(need) {
                    next_pop.push(combined[front[w]]);
                    next_points.push(combined_points[front[w]].clone());
                }
            }
            if next_pop.len() == params.population {
                break 'fill;
            }
        }
        population = next_pop;
        points = next_points;

        if memo.unique_evaluations == before {
            stalled_generations += 1;
            // Every offspring was a cache hit: either the space is
            // exhausted, or the operators cannot reach anything new (e.g.
            // mutation probability 0 on a converged population).
            if memo.unique_evaluations >= space.size() || stalled_generations > 100 {
                break;
            }
        } else {
            stalled_generations = 0;
        }
    }

    let best = trials
        .iter()
        .filter(|t| t.feasible)
        .min_by(|a, b| {
            a.total_bits
                .cmp(&b.total_bits)
                .then_with(|| slot_bits(a).cmp(&slot_bits(b)))
                .then_with(|| a.id.cmp(&b.id))
        })
        .cloned();
    let evaluations = memo.unique_evaluations;
    match best {
        Some(best) => Ok(SearchOutcome {
            best,
            trials,
            evaluations,
        }),
        None => {
            let least = trials
                .iter()
                .min_by(|a, b| {
                    a.violation
                        .total_cmp(&b.violation)
                        .then_with(|| a.total_bits.cmp(&b.total_bits))
                        .then_with(|| a.id.cmp(&b.id))
                })
                .cloned()
                .expect("budget >= population ensures at least one trial");
            Err(SearchError::NoFeasibleTrial {
                least_violating: Box::new(least),
                trials,
                evaluations,
            })
        }
    }
}

fn slot_bits(t: &Trial) -> [u32; 5] {
    let f = t.config.formats();
    std::array::from_fn(|i| f[i].total_bits())
}
