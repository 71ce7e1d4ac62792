//! Seeded instance generator.
//!
//! Each composition is a block of synthetic players. When composition `d`
//! is chosen at a node, the player values at its children follow a
//! lognormal step whose normal part has correlation `correlation` between
//! the players of `d` and zero elsewhere. Composition values and salaries
//! are sums over players; a transfer from `i` to `j` buys the players of `j`
//! at a premium and sells those of `i` at a discount.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DiscountMode, FtcpInstance};
use crate::error::{Error, Result};
use crate::tree::{build_uniform_tree, NodeId, ProbRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub num_compositions: usize,
    pub samples: usize,
    pub stages: usize,
    pub players_per_composition: usize,
    /// Composition values at the root; drawn from the seed when absent.
    #[serde(default)]
    pub value_means: Option<Vec<f64>>,
    /// Per-step log volatility of each composition's players.
    #[serde(default)]
    pub volatilities: Option<Vec<f64>>,
    pub correlation: f64,
    pub seed: u64,
    /// Transfer budget; a quarter of the mean root value when absent.
    #[serde(default)]
    pub budget: Option<f64>,
    pub rho: f64,
    #[serde(default)]
    pub discount_mode: DiscountMode,
    pub salary_ratio: f64,
    pub buy_premium: f64,
    pub sell_discount: f64,
    pub initial: usize,
    /// Store every player value in the audit block.
    #[serde(default)]
    pub record_players: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            num_compositions: 3,
            samples: 2,
            stages: 3,
            players_per_composition: 4,
            value_means: None,
            volatilities: None,
            correlation: 0.8,
            seed: 0,
            budget: None,
            rho: 0.05,
            discount_mode: DiscountMode::PaperLiteral,
            salary_ratio: 0.1,
            buy_premium: 1.1,
            sell_discount: 0.9,
            initial: 0,
            record_players: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorAudit {
    pub seed: u64,
    pub params: GeneratorParams,
    /// Composition whose value growth sets the extra budget.
    pub extra_budget_reference: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player_values: Option<Vec<Vec<f64>>>,
}

impl GeneratorParams {
    fn check(&self) -> Result<()> {
        let k = self.num_compositions;
        if k == 0 || self.samples == 0 || self.players_per_composition == 0 {
            return Err(Error::invalid("need at least one composition, sample and player"));
        }
        if self.stages < 2 {
            return Err(Error::invalid("need at least two stages"));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::invalid(format!("correlation {} outside [0, 1)", self.correlation)));
        }
        if self.initial >= k {
            return Err(Error::invalid(format!("initial composition {} does not exist", self.initial)));
        }
        for (name, v) in [("value_means", &self.value_means), ("volatilities", &self.volatilities)] {
            if let Some(v) = v {
                if v.len() != k {
                    return Err(Error::invalid(format!("{name} has {} entries for {k} compositions", v.len())));
                }
            }
        }
        if self.value_means.as_ref().is_some_and(|m| m.iter().any(|&x| !(x > 0.0 && x.is_finite()))) {
            return Err(Error::invalid("value means must be positive"));
        }
        if self.volatilities.as_ref().is_some_and(|m| m.iter().any(|&x| !(x >= 0.0 && x.is_finite()))) {
            return Err(Error::invalid("volatilities must be nonnegative"));
        }
        if self.budget.is_some_and(|b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::invalid("budget must be nonnegative"));
        }
        if !(self.rho >= 0.0 && self.salary_ratio >= 0.0 && self.buy_premium >= 0.0 && self.sell_discount >= 0.0) {
            return Err(Error::invalid("rates and ratios must be nonnegative"));
        }
        Ok(())
    }
}

/// Lower Cholesky factor of the player correlation when `focal` is chosen.
fn correlation_factor(k: usize, p: usize, focal: usize, rho: f64) -> Result<DMatrix<f64>> {
    let m = k * p;
    let corr = DMatrix::from_fn(m, m, |a, b| {
        if a == b {
            1.0
        } else if a / p == focal && b / p == focal {
            rho
        } else {
            0.0
        }
    });
    corr.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::invalid(format!("player correlation for composition {focal} is not positive definite")))
}

pub fn generate_instance(params: &GeneratorParams) -> Result<FtcpInstance> {
    params.check()?;
    let k = params.num_compositions;
    let p = params.players_per_composition;
    let factors = (0..k).map(|d| correlation_factor(k, p, d, params.correlation)).collect::<Result<Vec<_>>>()?;
    let tree = build_uniform_tree(params.stages, k, params.samples, &ProbRule::Uniform)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let means = match &params.value_means {
        Some(m) => m.clone(),
        None => (0..k).map(|_| 100.0 * (1.0 + 0.2 * rng.random_range(-1.0..1.0))).collect(),
    };
    let vols = params.volatilities.clone().unwrap_or_else(|| vec![0.15; k]);
    let nn = tree.num_nodes();
    let players = k * p;
    let mut pv = vec![vec![0.0; players]; nn];
    for (q, v) in pv[0].iter_mut().enumerate() {
        *v = means[q / p] / p as f64;
    }
    for c in 1..nn {
        let c_id = NodeId(c);
        let parent = tree.parent(c_id).expect("non-root").idx();
        let focal = tree.origin_distribution(c_id).expect("non-root").idx();
        let eps = DVector::from_iterator(players, (0..players).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let z = &factors[focal] * eps;
        for q in 0..players {
            let s = vols[q / p];
            pv[c][q] = pv[parent][q] * (s * z[q] - 0.5 * s * s).exp();
        }
    }

    let value: Vec<Vec<f64>> = pv.iter().map(|row| (0..k).map(|i| row[i * p..(i + 1) * p].iter().sum()).collect()).collect();
    let salary: Vec<Vec<f64>> = value.iter().map(|row| row.iter().map(|v| params.salary_ratio * v).collect()).collect();
    // buying j can never pay more than its salary back
    let transition = (0..nn)
        .map(|n| {
            (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| {
                            if i == j {
                                return 0.0;
                            }
                            let raw = params.buy_premium * value[n][j] - params.sell_discount * value[n][i];
                            raw.max(-salary[n][j])
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let budget = params.budget.unwrap_or_else(|| 0.25 * means.iter().sum::<f64>() / k as f64);
    let reference = params.initial;
    let extra_budget = (0..nn)
        .map(|n| match tree.parent(NodeId(n)) {
            None => 0.0,
            Some(a) => {
                let (now, before) = (value[n][reference], value[a.idx()][reference]);
                budget * ((now - before) / before).max(0.0)
            }
        })
        .collect();

    let inst = FtcpInstance {
        compositions: (1..=k).map(|i| format!("C{i}")).collect(),
        tree,
        value,
        salary,
        transition,
        budget,
        extra_budget,
        rho: params.rho,
        discount_mode: params.discount_mode,
        initial: params.initial,
        audit: Some(GeneratorAudit {
            seed: params.seed,
            params: params.clone(),
            extra_budget_reference: reference,
            player_values: params.record_players.then_some(pv),
        }),
    };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_volatility_is_deterministic_in_value() {
        let params = GeneratorParams {
            correlation: 0.0,
            volatilities: Some(vec![0.0; 3]),
            value_means: Some(vec![90.0, 100.0, 110.0]),
            ..GeneratorParams::default()
        };
        let inst = generate_instance(&params).unwrap();
        for row in &inst.value {
            for (v, m) in row.iter().zip([90.0, 100.0, 110.0]) {
                assert!((v - m).abs() < 1e-9);
            }
        }
        assert!(inst.extra_budget.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn same_seed_same_bytes() {
        let params = GeneratorParams { seed: 42, ..GeneratorParams::default() };
        let a = generate_instance(&params).unwrap().to_json().unwrap();
        let b = generate_instance(&params).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate_instance(&GeneratorParams { seed: 43, ..params }).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn file_round_trip() {
        let params = GeneratorParams { seed: 7, record_players: true, ..GeneratorParams::default() };
        let inst = generate_instance(&params).unwrap();
        let back = FtcpInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back.tree, inst.tree);
        assert_eq!(back.value, inst.value);
        assert_eq!(back.transition, inst.transition);
        assert_eq!(back.extra_budget, inst.extra_budget);
        assert_eq!(back.audit, inst.audit);
        assert_eq!(back, inst);
    }

    #[test]
    fn focal_players_are_correlated() {
        // empirical correlation of two players of the focal composition
        let k = 2;
        let l = correlation_factor(k, 2, 1, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut s01, mut s23, mut s00) = (0.0, 0.0, 0.0);
        let draws = 20_000;
        for _ in 0..draws {
            let e = DVector::from_iterator(4, (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let z = &l * e;
            s01 += z[0] * z[1];
            s23 += z[2] * z[3];
            s00 += z[2] * z[2];
        }
        let n = draws as f64;
        assert!((s23 / n - 0.8).abs() < 0.03, "{}", s23 / n);
        assert!((s01 / n).abs() < 0.03);
        assert!((s00 / n - 1.0).abs() < 0.04);
    }

    #[test]
    fn bad_correlation_is_rejected() {
        let params = GeneratorParams { correlation: 1.0, ..GeneratorParams::default() };
        assert!(generate_instance(&params).is_err());
    }
}
