//! Denoisers: anything that maps a partially masked sequence to per-position
//! marginals over the clean values.
//!
//! Implementations here:
//! - [`ExactDenoiser`] — the enumeration posterior of an [`LOSpec`], i.e. the
//!   best possible predictor for that distribution;
//! - [`CorruptedDenoiser`] — wraps a base denoiser and blends selected rows
//!   toward a target, emulating a model whose error is concentrated on
//!   particular subproblems;
//! - [`SudokuDenoiser`] — candidate-set marginals from single-pass constraint
//!   propagation (see [`sudoku`]);
//! - [`ExternalDenoiser`] — a subprocess speaking line-delimited JSON (see
//!   [`external`]);
//! - [`RandomTableDenoiser`] and [`UniformDenoiser`] — deterministic synthetic
//!   denoisers for loss experiments and protocol tests.
//!
//! Denoisers are time-free: they condition only on the masked sequence, which
//! already carries the noise level through its mask count.

pub mod external;
pub mod sudoku;

pub use external::{ExternalCommand, ExternalDenoiser};
pub use sudoku::SudokuDenoiser;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distrib::LOSpec;
use crate::error::Result;
use crate::rng::RngHandle;
use crate::seq::{MarginalTable, TokenSeq};

pub trait Denoiser: Send + Sync {
    /// Marginals for every masked position of `x`. Rows at unmasked positions
    /// are not meaningful and consumers must not read them.
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable>;

    /// Short name for logs and run manifests.
    fn descriptor(&self) -> String;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        (**self).predict(x)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        (**self).predict(x)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        (**self).predict(x)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

/// The enumeration posterior of an L&O distribution, wrapped as a denoiser.
/// Construction decides once whether the spec qualifies for the bit-parallel
/// engine, so repeated predictions stay cheap.
pub struct ExactDenoiser {
    spec: LOSpec,
    budget: f64,
    fast: Option<crate::distrib::NaeBitPosterior>,
}

impl ExactDenoiser {
    pub fn new(spec: LOSpec) -> Self {
        Self::with_budget(spec, crate::distrib::DEFAULT_ENUM_BUDGET)
    }

    pub fn with_budget(spec: LOSpec, budget: f64) -> Self {
        let fast = crate::distrib::NaeBitPosterior::try_new(&spec);
        Self { spec, budget, fast }
    }

    pub fn spec(&self) -> &LOSpec {
        &self.spec
    }
}

impl Denoiser for ExactDenoiser {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        if x.len() != self.spec.len() {
            return self.spec.exact_posterior(x, self.budget); // uniform error path
        }
        match &self.fast {
            Some(engine) => Ok(engine.posterior(x)),
            None => self.spec.exact_posterior_generic(x, self.budget),
        }
    }

    fn descriptor(&self) -> String {
        format!(
            "exact(n_latent={}, n_obs={})",
            self.spec.n_latent(),
            self.spec.n_obs()
        )
    }
}

/// Which masked rows a [`CorruptionPolicy`] rewrites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TargetSelector {
    /// Every masked position.
    AllMasked,
    /// Masked positions within a fixed set.
    Positions(BTreeSet<usize>),
    /// Masked positions within `positions`, active only while at least
    /// `min_masked_fraction` of `positions` are still masked. Models a
    /// predictor that is unreliable on a token group exactly in the regime
    /// where that group is mostly unresolved.
    GroupWhenMasked {
        positions: BTreeSet<usize>,
        min_masked_fraction: f64,
    },
}

impl TargetSelector {
    fn group_active(&self, x: &TokenSeq) -> bool {
        match self {
            TargetSelector::GroupWhenMasked { positions, min_masked_fraction } => {
                if positions.is_empty() {
                    return false;
                }
                let masked = positions.iter().filter(|&&p| x.is_masked(p)).count();
                masked as f64 >= min_masked_fraction * positions.len() as f64
            }
            _ => true,
        }
    }

    fn matches(&self, pos: usize, group_active: bool) -> bool {
        match self {
            TargetSelector::AllMasked => true,
            TargetSelector::Positions(set) => set.contains(&pos),
            TargetSelector::GroupWhenMasked { positions, .. } => {
                group_active && positions.contains(&pos)
            }
        }
    }
}

/// What a corrupted row is blended toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendTarget {
    Uniform,
    /// Swap the masses of the two most probable values, making the runner-up
    /// look most likely.
    AdversarialSwap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorruptionPolicy {
    pub selector: TargetSelector,
    /// Blend weight in [0, 1]; 0 is the identity.
    pub lambda: f64,
    pub blend: BlendTarget,
}

/// Blends selected rows of the base denoiser's output toward the policy's
/// target. Rows outside the selector pass through untouched.
pub struct CorruptedDenoiser<D> {
    base: D,
    policy: CorruptionPolicy,
}

/// Wraps `base` with a corruption policy.
pub fn corrupt<D: Denoiser>(base: D, policy: CorruptionPolicy) -> CorruptedDenoiser<D> {
    assert!((0.0..=1.0).contains(&policy.lambda), "lambda must be in [0, 1]");
    CorruptedDenoiser { base, policy }
}

impl<D: Denoiser> CorruptedDenoiser<D> {
    pub fn base(&self) -> &D {
        &self.base
    }

    pub fn policy(&self) -> &CorruptionPolicy {
        &self.policy
    }
}

impl<D: Denoiser> Denoiser for CorruptedDenoiser<D> {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        let mut table = self.base.predict(x)?;
        if self.policy.lambda == 0.0 {
            return Ok(table);
        }
        let lambda = self.policy.lambda;
        let m = table.vocab() as usize;
        let group_active = self.policy.selector.group_active(x);
        for pos in table.active_positions() {
            if !self.policy.selector.matches(pos, group_active) {
                continue;
            }
            let row = table.row(pos).to_vec();
            let target = match self.policy.blend {
                BlendTarget::Uniform => vec![1.0 / m as f64; m],
                BlendTarget::AdversarialSwap => {
                    let mut t = row.clone();
                    let (mut top, mut second) = (0usize, if m > 1 { 1 } else { 0 });
                    if m > 1 && t[second] > t[top] {
                        std::mem::swap(&mut top, &mut second);
                    }
                    for j in 2..m {
                        if t[j] > t[top] {
                            second = top;
                            top = j;
                        } else if t[j] > t[second] {
                            second = j;
                        }
                    }
                    t.swap(top, second);
                    t
                }
            };
            let blended: Vec<f64> = row
                .iter()
                .zip(&target)
                .map(|(&p, &q)| (1.0 - lambda) * p + lambda * q)
                .collect();
            table.set_row(pos, &blended);
        }
        Ok(table)
    }

    fn descriptor(&self) -> String {
        format!(
            "corrupt(lambda={}, blend={:?}, base={})",
            self.policy.lambda,
            self.policy.blend,
            self.base.descriptor()
        )
    }
}

/// Bayes predictor of an explicitly enumerated distribution: conditions by
/// summation over atoms. The reference denoiser for loss experiments on
/// arbitrary small distributions.
pub struct EnumDenoiser {
    dist: crate::distrib::EnumerableDist,
}

impl EnumDenoiser {
    pub fn new(dist: crate::distrib::EnumerableDist) -> Self {
        Self { dist }
    }

    pub fn dist(&self) -> &crate::distrib::EnumerableDist {
        &self.dist
    }
}

impl Denoiser for EnumDenoiser {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        Ok(self.dist.conditional_marginals(x))
    }

    fn descriptor(&self) -> String {
        format!("enum-bayes(support={})", self.dist.atoms().len())
    }
}

/// Uniform rows everywhere. The weakest legal denoiser.
pub struct UniformDenoiser {
    pub vocab: u32,
}

impl Denoiser for UniformDenoiser {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        let m = self.vocab as usize;
        let mut table = MarginalTable::zeros(x.len(), self.vocab);
        let row = vec![1.0 / m as f64; m];
        for pos in x.masked_positions() {
            table.set_row(pos, &row);
        }
        Ok(table)
    }

    fn descriptor(&self) -> String {
        format!("uniform(m={})", self.vocab)
    }
}

/// Deterministic pseudorandom tabular denoiser: the row for position `i`
/// given masked input `x` is a fixed function of `(seed, x, i)`. Stands in
/// for an arbitrary trained model in loss-identity experiments.
pub struct RandomTableDenoiser {
    pub vocab: u32,
    pub seed: u64,
}

impl RandomTableDenoiser {
    pub fn new(vocab: u32, seed: u64) -> Self {
        Self { vocab, seed }
    }

    fn row_for(&self, x: &TokenSeq, pos: usize) -> Vec<f64> {
        // FNV-style fold of the input into a stream id keeps rows stable
        // under any call order.
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.seed;
        for &t in x.tokens() {
            h = (h ^ t as u64).wrapping_mul(0x1000_0000_01b3);
        }
        h = (h ^ pos as u64).wrapping_mul(0x1000_0000_01b3);
        let mut rng = RngHandle::new(self.seed, h).rng();
        let mut row: Vec<f64> = (0..self.vocab)
            .map(|_| rand::Rng::gen::<f64>(&mut rng) + 0.05)
            .collect();
        let total: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
        row
    }
}

impl Denoiser for RandomTableDenoiser {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        let mut table = MarginalTable::zeros(x.len(), self.vocab);
        for pos in x.masked_positions() {
            table.set_row(pos, &self.row_for(x, pos));
        }
        Ok(table)
    }

    fn descriptor(&self) -> String {
        format!("random-table(seed={})", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distrib::{NaeSatSpec, ObsFn, DEFAULT_ENUM_BUDGET};
    use rand::Rng;

    /// Fixed-row helper for blend arithmetic tests.
    struct FixedRow {
        row: Vec<f64>,
    }

    impl Denoiser for FixedRow {
        fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
            let mut t = MarginalTable::zeros(x.len(), self.row.len() as u32);
            for pos in x.masked_positions() {
                t.set_row(pos, &self.row);
            }
            Ok(t)
        }
        fn descriptor(&self) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn exact_denoiser_uniform_when_unconstrained() {
        let spec = LOSpec::identity(2, 3, LOSpec::uniform_prior(3), vec![]).unwrap();
        let d = ExactDenoiser::new(spec);
        let t = d.predict(&TokenSeq::all_mask(2, 3)).unwrap();
        for pos in 0..2 {
            for v in 0..3 {
                assert!((t.row(pos)[v] - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_denoiser_matches_posterior() {
        let lo = LOSpec::identity(
            3,
            3,
            LOSpec::uniform_prior(3),
            vec![ObsFn::Nae { triple: [0, 1, 2] }],
        )
        .unwrap();
        let d = ExactDenoiser::new(lo.clone());
        let mut x = TokenSeq::all_mask(4, 3);
        x.set(3, 2);
        let from_denoiser = d.predict(&x).unwrap();
        let direct = lo.exact_posterior(&x, DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(from_denoiser, direct);
    }

    #[test]
    fn corrupt_lambda_zero_is_identity() {
        let spec = NaeSatSpec::random(5, 8, 2, &RngHandle::new(70, 0)).unwrap();
        let base = ExactDenoiser::new(spec.to_lospec().unwrap());
        let wrapped = corrupt(
            ExactDenoiser::new(base.spec().clone()),
            CorruptionPolicy {
                selector: TargetSelector::AllMasked,
                lambda: 0.0,
                blend: BlendTarget::Uniform,
            },
        );
        for rep in 0..20u64 {
            let mut r = RngHandle::new(71, rep).rng();
            let tokens: Vec<u32> = (0..13)
                .map(|_| if r.gen::<f64>() < 0.5 { 0 } else { r.gen_range(1..=2) })
                .collect();
            let x = TokenSeq::new(tokens, 2).unwrap();
            assert_eq!(base.predict(&x).unwrap(), wrapped.predict(&x).unwrap());
        }
    }

    #[test]
    fn corrupt_full_uniform_blend() {
        let d = corrupt(
            FixedRow { row: vec![0.7, 0.2, 0.1] },
            CorruptionPolicy {
                selector: TargetSelector::AllMasked,
                lambda: 1.0,
                blend: BlendTarget::Uniform,
            },
        );
        let t = d.predict(&TokenSeq::all_mask(2, 3)).unwrap();
        for v in 0..3 {
            assert!((t.row(0)[v] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupt_half_blend_arithmetic() {
        // (1,0,0) blended half-way to uniform over 3 values: (2/3, 1/6, 1/6).
        let d = corrupt(
            FixedRow { row: vec![1.0, 0.0, 0.0] },
            CorruptionPolicy {
                selector: TargetSelector::AllMasked,
                lambda: 0.5,
                blend: BlendTarget::Uniform,
            },
        );
        let t = d.predict(&TokenSeq::all_mask(1, 3)).unwrap();
        let row = t.row(0);
        assert!((row[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((row[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!((row[2] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn corrupt_adversarial_swap_flips_top_two() {
        let d = corrupt(
            FixedRow { row: vec![0.5, 0.3, 0.2] },
            CorruptionPolicy {
                selector: TargetSelector::AllMasked,
                lambda: 1.0,
                blend: BlendTarget::AdversarialSwap,
            },
        );
        let t = d.predict(&TokenSeq::all_mask(1, 3)).unwrap();
        assert_eq!(t.row(0), &[0.3, 0.5, 0.2]);
    }

    #[test]
    fn corrupt_targets_only_selected_positions() {
        let d = corrupt(
            FixedRow { row: vec![0.9, 0.1] },
            CorruptionPolicy {
                selector: TargetSelector::Positions([0].into_iter().collect()),
                lambda: 1.0,
                blend: BlendTarget::Uniform,
            },
        );
        let t = d.predict(&TokenSeq::all_mask(2, 2)).unwrap();
        assert_eq!(t.row(0), &[0.5, 0.5]);
        assert_eq!(t.row(1), &[0.9, 0.1]);
    }

    #[test]
    fn corrupt_group_gate_follows_mask_fraction() {
        let policy = CorruptionPolicy {
            selector: TargetSelector::GroupWhenMasked {
                positions: [0, 1, 2, 3].into_iter().collect(),
                min_masked_fraction: 0.5,
            },
            lambda: 1.0,
            blend: BlendTarget::Uniform,
        };
        let d = corrupt(FixedRow { row: vec![0.9, 0.1] }, policy);
        // 3 of 4 group positions masked: active.
        let x = TokenSeq::new(vec![0, 0, 0, 1, 0], 2).unwrap();
        let t = d.predict(&x).unwrap();
        assert_eq!(t.row(0), &[0.5, 0.5]);
        // 1 of 4 masked: inactive, rows pass through.
        let x = TokenSeq::new(vec![0, 1, 2, 1, 0], 2).unwrap();
        let t = d.predict(&x).unwrap();
        assert_eq!(t.row(0), &[0.9, 0.1]);
        assert_eq!(t.row(4), &[0.9, 0.1]);
    }

    #[test]
    fn masked_rows_always_normalized() {
        // Randomized sweep across the denoiser zoo.
        let spec = NaeSatSpec::random(6, 10, 2, &RngHandle::new(77, 0)).unwrap();
        let exact = ExactDenoiser::new(spec.to_lospec().unwrap());
        let corrupted = corrupt(
            ExactDenoiser::new(exact.spec().clone()),
            CorruptionPolicy {
                selector: TargetSelector::AllMasked,
                lambda: 0.3,
                blend: BlendTarget::Uniform,
            },
        );
        let table_d = RandomTableDenoiser::new(2, 5);
        let uniform = UniformDenoiser { vocab: 2 };
        let denoisers: Vec<&dyn Denoiser> = vec![&exact, &corrupted, &table_d, &uniform];
        let mut r = RngHandle::new(78, 0).rng();
        for _ in 0..10_000 {
            let tokens: Vec<u32> = (0..16)
                .map(|_| if r.gen::<f64>() < 0.5 { 0 } else { r.gen_range(1..=2) })
                .collect();
            let x = TokenSeq::new(tokens, 2).unwrap();
            let d = denoisers[r.gen_range(0..denoisers.len())];
            d.predict(&x).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn random_table_rows_deterministic() {
        let d = RandomTableDenoiser::new(3, 123);
        let x = TokenSeq::new(vec![0, 2, 0, 1], 3).unwrap();
        let a = d.predict(&x).unwrap();
        let b = d.predict(&x).unwrap();
        assert_eq!(a, b);
        // And sensitive to the input.
        let y = TokenSeq::new(vec![0, 1, 0, 1], 3).unwrap();
        assert_ne!(a.row(0), d.predict(&y).unwrap().row(0));
    }
}
