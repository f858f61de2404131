//! Counterexample search inside the input box of a robustness property.
//!
//! Both attacks only ever return witnesses that pass [`check_witness`]; not
//! finding one says nothing about robustness.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bnn::{runner_up_margin, Network};
use crate::vnnlib::{check_witness, RobustnessProperty, VnnlibError, Witness};

// Samples per worker between deadline checks. Samples come from one
// sequential stream, so the batch size never changes which point wins.
const PER_WORKER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FalsifyError {
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("input X_{0} has no integer value inside its bounds")]
    EmptyGrid(usize),
    #[error(transparent)]
    Property(#[from] VnnlibError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub max_samples: usize,
    pub seed: u64,
    pub greedy_passes: usize,
    /// Restrict candidates to integer pixel values.
    pub integer_grid: bool,
    /// Wall-clock cap, checked between batches and moves.
    pub time_limit: Option<Duration>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            max_samples: 10_000,
            seed: 0,
            greedy_passes: 5,
            integer_grid: true,
            time_limit: None,
        }
    }
}

impl AttackConfig {
    fn validate(&self) -> Result<(), FalsifyError> {
        if self.max_samples == 0 {
            return Err(FalsifyError::Config("max_samples must be at least 1".into()));
        }
        Ok(())
    }

    fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_limit.map(|d| start + d)
    }
}

fn expired(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}

/// Candidate ranges: the property box, snapped to integers in grid mode.
fn search_box(prop: &RobustnessProperty, grid: bool) -> Result<Vec<(f64, f64)>, FalsifyError> {
    if !grid {
        return Ok(prop.input_bounds.clone());
    }
    prop.integer_bounds().ok_or_else(|| {
        let i = prop
            .input_bounds
            .iter()
            .position(|&(lo, hi)| lo.ceil() > hi.floor())
            .unwrap_or(0);
        FalsifyError::EmptyGrid(i)
    })
}

fn witness_for(net: &Network, input: Vec<f64>) -> Witness {
    let outputs = net.forward_flat(&input).expect("shape checked");
    Witness::new(input).with_outputs(outputs)
}

fn margin(net: &Network, prop: &RobustnessProperty, input: &[f64]) -> f64 {
    let logits = net.forward_flat(input).expect("shape checked");
    runner_up_margin(&logits, prop.target_label)
}

/// Uniform sampling from the box. Samples are drawn sequentially from a
/// seeded stream and evaluated in parallel batches; the lowest-index hit wins,
/// so the outcome depends only on the seed.
pub fn random_attack(
    net: &Network,
    prop: &RobustnessProperty,
    cfg: &AttackConfig,
) -> Result<Option<Witness>, FalsifyError> {
    cfg.validate()?;
    prop.check_network(net)?;
    let start = Instant::now();
    let deadline = cfg.deadline(start);
    let bounds = search_box(prop, cfg.integer_grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch_size = PER_WORKER * rayon::current_num_threads();
    let mut drawn = 0;
    while drawn < cfg.max_samples {
        if expired(deadline) {
            log::debug!("random attack stopped by time limit after {drawn} samples");
            break;
        }
        let n = batch_size.min(cfg.max_samples - drawn);
        let batch: Vec<Vec<f64>> = (0..n)
            .map(|_| sample(&mut rng, &bounds, cfg.integer_grid))
            .collect();
        drawn += n;
        let hit = batch
            .par_iter()
            .position_first(|x| margin(net, prop, x) >= 0.0);
        if let Some(i) = hit {
            let w = witness_for(net, batch[i].clone());
            debug_assert!(check_witness(net, prop, &w)?);
            return Ok(Some(w));
        }
    }
    Ok(None)
}

fn sample(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)], grid: bool) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| {
            if lo == hi {
                lo
            } else if grid {
                rng.random_range(lo as i64..=hi as i64) as f64
            } else {
                rng.random_range(lo..=hi)
            }
        })
        .collect()
}

/// Coordinate search from the box centre. Each pass visits every input in
/// order and moves it to whichever bound extreme strictly raises the
/// runner-up margin the most; the search ends at a witness, after
/// `greedy_passes` passes, or after a pass with no accepted move.
pub fn greedy_attack(
    net: &Network,
    prop: &RobustnessProperty,
    cfg: &AttackConfig,
) -> Result<Option<Witness>, FalsifyError> {
    Ok(greedy_trace(net, prop, cfg)?.witness)
}

/// Outcome of [`greedy_attack`] together with the accepted objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub witness: Option<Witness>,
    /// Objective at the start followed by the value after each accepted move.
    pub objective: Vec<f64>,
    pub moves: usize,
}

pub fn greedy_trace(
    net: &Network,
    prop: &RobustnessProperty,
    cfg: &AttackConfig,
) -> Result<GreedyTrace, FalsifyError> {
    cfg.validate()?;
    prop.check_network(net)?;
    let deadline = cfg.deadline(Instant::now());
    let bounds = search_box(prop, cfg.integer_grid)?;
    let mut x: Vec<f64> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let mid = lo + (hi - lo) / 2.0;
            if cfg.integer_grid {
                mid.floor().clamp(lo, hi)
            } else {
                mid
            }
        })
        .collect();
    let mut best = margin(net, prop, &x);
    let mut trace = GreedyTrace {
        witness: None,
        objective: vec![best],
        moves: 0,
    };
    let done = |x: &[f64], best: f64, trace: &mut GreedyTrace| {
        if best >= 0.0 {
            trace.witness = Some(witness_for(net, x.to_vec()));
            true
        } else {
            false
        }
    };
    if done(&x, best, &mut trace) {
        return Ok(trace);
    }
    for _ in 0..cfg.greedy_passes {
        let mut moved = false;
        for i in 0..x.len() {
            if expired(deadline) {
                return Ok(trace);
            }
            let (lo, hi) = bounds[i];
            let old = x[i];
            let mut choice = None;
            for cand in [lo, hi] {
                if cand == old {
                    continue;
                }
                x[i] = cand;
                let m = margin(net, prop, &x);
                if m > choice.map_or(best, |(_, b)| b) {
                    choice = Some((cand, m));
                }
            }
            match choice {
                Some((v, m)) => {
                    assert!(m >= best, "greedy objective decreased");
                    x[i] = v;
                    best = m;
                    trace.objective.push(m);
                    trace.moves += 1;
                    moved = true;
                    if done(&x, best, &mut trace) {
                        return Ok(trace);
                    }
                }
                None => x[i] = old,
            }
        }
        if !moved {
            break;
        }
    }
    Ok(trace)
}

/// Greedy search followed by random sampling. Under a time limit the greedy
/// phase gets at most half of it.
pub fn falsify(
    net: &Network,
    prop: &RobustnessProperty,
    cfg: &AttackConfig,
) -> Result<Option<Witness>, FalsifyError> {
    let start = Instant::now();
    let greedy_cfg = AttackConfig {
        time_limit: cfg.time_limit.map(|d| d / 2),
        ..cfg.clone()
    };
    if let Some(w) = greedy_attack(net, prop, &greedy_cfg)? {
        return Ok(Some(w));
    }
    let remaining = cfg
        .time_limit
        .map(|d| d.saturating_sub(start.elapsed()));
    if remaining == Some(Duration::ZERO) {
        return Ok(None);
    }
    random_attack(
        net,
        prop,
        &AttackConfig {
            time_limit: remaining,
            ..cfg.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{Layer, QDense};
    use crate::tensor::Tensor;

    /// Two classes over four pixels: `Y_0 = x0+x1+x2+x3`,
    /// `Y_1 = x0+x1+x2-x3`. At `x3 = 0` the classes tie, so class 0 wins
    /// exactly when `x3 > 0`.
    fn toy() -> Network {
        let d = QDense::new(4, 2, vec![1, 1, 1, 1, 1, 1, 1, -1], false).unwrap();
        Network::new(vec![4], vec![Layer::QDense(d)], 2).unwrap()
    }

    fn prop(center: [f64; 4], eps: f64) -> RobustnessProperty {
        let img = Tensor::vector(center.to_vec());
        RobustnessProperty::around(&img, eps, 0, 2, false).unwrap()
    }

    /// Every grid point of the box, X_0 most significant.
    fn brute_force_hits(net: &Network, p: &RobustnessProperty) -> Vec<Vec<f64>> {
        let b = p.integer_bounds().unwrap();
        let mut hits = Vec::new();
        let mut x: Vec<f64> = b.iter().map(|r| r.0).collect();
        loop {
            if margin(net, p, &x) >= 0.0 {
                hits.push(x.clone());
            }
            let mut i = x.len();
            loop {
                if i == 0 {
                    return hits;
                }
                i -= 1;
                if x[i] < b[i].1 {
                    x[i] += 1.0;
                    break;
                }
                x[i] = b[i].0;
            }
        }
    }

    #[test]
    fn zero_radius_correct_image_has_no_witness() {
        let p = prop([5.0, 5.0, 5.0, 2.0], 0.0);
        assert!(random_attack(&toy(), &p, &AttackConfig::default())
            .unwrap()
            .is_none());
        assert!(greedy_attack(&toy(), &p, &AttackConfig::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn constructed_toy_is_found() {
        let net = toy();
        let p = prop([5.0, 5.0, 5.0, 1.0], 1.0);
        let hits = brute_force_hits(&net, &p);
        // Only x3 = 0 ties the classes: 3^3 choices of the other pixels.
        assert_eq!(hits.len(), 27);
        assert!(hits.iter().all(|h| h[3] == 0.0));
        let cfg = AttackConfig {
            max_samples: 2000,
            seed: 7,
            ..AttackConfig::default()
        };
        let w = random_attack(&net, &p, &cfg).unwrap().expect("witness");
        assert!(check_witness(&net, &p, &w).unwrap());
        let g = greedy_attack(&net, &p, &cfg).unwrap().expect("witness");
        assert!(check_witness(&net, &p, &g).unwrap());
    }

    #[test]
    fn same_seed_same_witness() {
        let net = toy();
        let p = prop([5.0, 5.0, 5.0, 1.0], 1.0);
        let cfg = AttackConfig {
            seed: 99,
            ..AttackConfig::default()
        };
        let a = random_attack(&net, &p, &cfg).unwrap();
        let b = random_attack(&net, &p, &cfg).unwrap();
        assert!(a.is_some());
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_vertex_witness_within_p_moves() {
        // Y_1 - Y_0 = 2(x0 - x1 + x2 - x3) on a 4-pixel box; the violating
        // region is reached only at vertices here.
        let d = QDense::new(4, 2, vec![-1, 1, -1, 1, 1, -1, 1, -1], false).unwrap();
        let net = Network::new(vec![4], vec![Layer::QDense(d)], 2).unwrap();
        let p = prop([3.0, 5.0, 3.0, 5.0], 1.0);
        let hits = brute_force_hits(&net, &p);
        assert_eq!(hits, vec![vec![4.0, 4.0, 4.0, 4.0]]);
        let t = greedy_trace(&net, &p, &AttackConfig::default()).unwrap();
        let w = t.witness.expect("vertex witness");
        assert!(t.moves <= 4);
        assert!(check_witness(&net, &p, &w).unwrap());
        assert!(t.objective.windows(2).all(|s| s[1] >= s[0]));
    }

    #[test]
    fn continuous_mode_stays_in_box() {
        let net = toy();
        let p = prop([5.0, 5.0, 5.0, 0.5], 0.75);
        let cfg = AttackConfig {
            integer_grid: false,
            ..AttackConfig::default()
        };
        let w = falsify(&net, &p, &cfg).unwrap().expect("witness");
        assert!(p.contains(&w.input_values));
        assert!(check_witness(&net, &p, &w).unwrap());
    }

    #[test]
    fn rejects_zero_samples() {
        let cfg = AttackConfig {
            max_samples: 0,
            ..AttackConfig::default()
        };
        let p = prop([1.0; 4], 1.0);
        assert!(matches!(
            random_attack(&toy(), &p, &cfg),
            Err(FalsifyError::Config(_))
        ));
    }
}
