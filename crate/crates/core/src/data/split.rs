//! Stratified member/non-member split protocol.
//!
//! Per class, ids are shuffled and halved: the first half trains the target,
//! the second is held out. A fraction of the training half is reserved for
//! validation; the rest are the members. Attack-validation and attack-test
//! each draw `n` members from the members and `n` non-members from the
//! held-out half, class-stratified, without overlap between the two.

use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    /// Share of each class's training half reserved for validation.
    pub validation_fraction: f64,
    /// Members (and, separately, non-members) in the attack-validation split.
    pub attack_validation: usize,
    /// Members (and, separately, non-members) in the attack-test split.
    pub attack_test: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            validation_fraction: 0.05,
            attack_validation: 200,
            attack_test: 500,
        }
    }
}

/// Which attack split a set of scores came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    AttackValidation,
    AttackTest,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttackSplit {
    pub members: Vec<usize>,
    pub nonmembers: Vec<usize>,
}

impl AttackSplit {
    /// `(id, is_member)` pairs, members first.
    pub fn labeled(&self) -> Vec<(usize, bool)> {
        self.members
            .iter()
            .map(|&id| (id, true))
            .chain(self.nonmembers.iter().map(|&id| (id, false)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.len() + self.nonmembers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    /// Training ids of the target (training half minus validation).
    pub members: Vec<usize>,
    /// Held-out half.
    pub nonmembers: Vec<usize>,
    pub validation: Vec<usize>,
    pub attack_validation: AttackSplit,
    pub attack_test: AttackSplit,
    pub seed: u64,
}

impl SplitPlan {
    pub fn attack(&self, role: SplitRole) -> &AttackSplit {
        match role {
            SplitRole::AttackValidation => &self.attack_validation,
            SplitRole::AttackTest => &self.attack_test,
        }
    }
}

/// Allocates `total` across strata proportionally to `sizes` (largest remainder,
/// ties to the lower stratum).
fn allocate(total: usize, sizes: &[usize]) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let mut quota: Vec<usize> = sizes.iter().map(|&s| total * s / sum).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((total * sizes[i]) % sum));
    let mut left = total - quota.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        quota[i] += 1;
        left -= 1;
    }
    quota
}

pub fn stratified_split<S: Real>(ds: &Dataset<S>, cfg: &SplitConfig, seed: u64) -> Result<SplitPlan> {
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::invalid(format!(
            "validation fraction must be in [0, 1), got {}",
            cfg.validation_fraction
        )));
    }
    let mut rng = seed::rng(seed::derive(seed, "split"));
    let mut member_pools = Vec::new();
    let mut heldout_pools = Vec::new();
    let mut plan = SplitPlan {
        members: Vec::new(),
        nonmembers: Vec::new(),
        validation: Vec::new(),
        attack_validation: AttackSplit::default(),
        attack_test: AttackSplit::default(),
        seed,
    };
    for (class, mut ids) in ds.ids_by_class().into_iter().enumerate() {
        ids.shuffle(&mut rng);
        let train = ids.len() / 2;
        let val = if cfg.validation_fraction > 0.0 {
            ((train as f64 * cfg.validation_fraction).round() as usize).max(1)
        } else {
            0
        };
        if ids.len() < 2 || train <= val {
            return Err(Error::invalid(format!(
                "class {class} has {} examples, too few for every split stratum",
                ids.len()
            )));
        }
        let (train_ids, held) = ids.split_at(train);
        let (val_ids, member_ids) = train_ids.split_at(val);
        plan.validation.extend_from_slice(val_ids);
        plan.members.extend_from_slice(member_ids);
        plan.nonmembers.extend_from_slice(held);
        member_pools.push(member_ids.to_vec());
        heldout_pools.push(held.to_vec());
    }

    for (pools, side) in [(&member_pools, true), (&heldout_pools, false)] {
        let sizes: Vec<usize> = pools.iter().map(Vec::len).collect();
        let val_quota = allocate(cfg.attack_validation, &sizes);
        let test_quota = allocate(cfg.attack_test, &sizes);
        for (class, pool) in pools.iter().enumerate() {
            let (v, t) = (val_quota[class], test_quota[class]);
            if v + t > pool.len() {
                return Err(Error::invalid(format!(
                    "class {class}: {} {} available, attack splits need {}",
                    pool.len(),
                    if side { "members" } else { "non-members" },
                    v + t
                )));
            }
            let (av, at) = if side {
                (&mut plan.attack_validation.members, &mut plan.attack_test.members)
            } else {
                (&mut plan.attack_validation.nonmembers, &mut plan.attack_test.nonmembers)
            };
            av.extend_from_slice(&pool[..v]);
            at.extend_from_slice(&pool[v..v + t]);
        }
    }
    Ok(plan)
}
