//! Latents-and-observations (L&O) distributions.
//!
//! A sequence of length `L = N + P` is generated by drawing `N` latent tokens
//! i.i.d. from a prior over `{1..m}` and filling `P` observation tokens from
//! per-observation functions of the latents; a permutation decides which
//! positions hold latents and which hold observations. Three observation
//! families are provided:
//!
//! - not-all-equal predicates over triples of latents (deterministic),
//! - noisy sparse parities over k-subsets (binary vocabularies),
//! - random slab indicators `|<z, 2x - 1>| <= beta sqrt(N)` (binary).
//!
//! Predicate outputs `b` in `{0,1}` are stored as tokens `b + 1` so that `0`
//! stays reserved for the mask symbol. Binary latents map to bits via
//! `token 1 -> bit 1`, `token 2 -> bit 0`, project-wide.
//!
//! [`exact_posterior`] computes, by enumeration over masked-latent
//! completions, the exact conditional distribution of every masked position
//! given the unmasked ones. Evidence that admits no consistent completion is
//! resolved by minimal-violation conditioning: the posterior is restricted to
//! completions violating the fewest deterministic observations, which is the
//! vanishing-noise limit of observation channels with failure probability
//! `eps -> 0`.

mod nae_fast;

pub use nae_fast::NaeBitPosterior;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::seq::{MarginalTable, TokenSeq};

/// Default enumeration budget in weighted evaluations.
pub const DEFAULT_ENUM_BUDGET: f64 = 1e8;

/// One observation function: a map from latent assignments to a distribution
/// over output tokens in `{1..m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObsFn {
    /// `NAE(x_{i1}, x_{i2}, x_{i3}) = 1 - 1[x_{i1} = x_{i2} = x_{i3}]`,
    /// output bit stored as token `b + 1`.
    Nae { triple: [usize; 3] },
    /// Parity of the latent bits on `support`: token 1 if the bit-sum is odd,
    /// token 2 if even, flipped with probability `eta`.
    Parity { support: Vec<usize>, eta: f64 },
    /// Token 2 if `|<direction, 2x - 1>| <= beta * sqrt(N)`, else token 1.
    Slab { direction: Vec<f64>, beta: f64 },
    /// Constant padding token, independent of the latents.
    Const { token: u32 },
}

/// Not-all-equal: 0 iff all three tokens are equal. Rejects mask tokens.
pub fn nae_eval(x1: u32, x2: u32, x3: u32) -> Result<u8> {
    for (pos, x) in [x1, x2, x3].iter().enumerate() {
        if *x == 0 {
            return Err(Error::UnexpectedMask { pos });
        }
    }
    Ok(if x1 == x2 && x2 == x3 { 0 } else { 1 })
}

/// Bit encoding of binary latents: token 1 -> 1, token 2 -> 0.
#[inline]
pub fn token_to_bit(token: u32) -> u8 {
    debug_assert!(token == 1 || token == 2);
    (token == 1) as u8
}

impl ObsFn {
    /// Probability of emitting `token` given the latent assignment.
    pub fn prob(&self, latents: &[u32], token: u32) -> f64 {
        match self {
            ObsFn::Nae { triple } => {
                let b = nae_eval(latents[triple[0]], latents[triple[1]], latents[triple[2]])
                    .expect("latents must be unmasked");
                if token == b as u32 + 1 {
                    1.0
                } else {
                    0.0
                }
            }
            ObsFn::Parity { support, eta } => {
                let parity: u8 =
                    support.iter().fold(0, |acc, &i| acc ^ token_to_bit(latents[i]));
                let clean = if parity == 1 { 1 } else { 2 };
                if token == clean {
                    1.0 - eta
                } else if token == 1 || token == 2 {
                    *eta
                } else {
                    0.0
                }
            }
            ObsFn::Slab { direction, beta } => {
                let inside = slab_inside(direction, *beta, latents);
                if token == if inside { 2 } else { 1 } {
                    1.0
                } else {
                    0.0
                }
            }
            ObsFn::Const { token: c } => {
                if token == *c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Emission distribution over tokens `{1..m}` given the latents.
    pub fn dist(&self, latents: &[u32], vocab: u32) -> Vec<f64> {
        (1..=vocab).map(|v| self.prob(latents, v)).collect()
    }

    pub fn sample(&self, latents: &[u32], vocab: u32, rng: &mut impl Rng) -> u32 {
        let dist = self.dist(latents, vocab);
        let mut u = rng.gen::<f64>();
        for (j, &p) in dist.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return j as u32 + 1;
            }
        }
        vocab
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            ObsFn::Parity { eta, .. } => *eta == 0.0,
            _ => true,
        }
    }

    fn validate(&self, n_latent: usize) -> Result<()> {
        match self {
            ObsFn::Nae { triple } => {
                if triple[0] == triple[1] || triple[1] == triple[2] || triple[0] == triple[2] {
                    return Err(Error::InvalidSpec("NAE triple indices must be distinct".into()));
                }
                if triple.iter().any(|&i| i >= n_latent) {
                    return Err(Error::InvalidSpec("NAE triple index out of range".into()));
                }
            }
            ObsFn::Parity { support, eta } => {
                if !(0.0..0.5).contains(eta) && *eta != 0.0 {
                    return Err(Error::InvalidSpec(format!("parity noise {eta} outside [0, 1/2)")));
                }
                let mut s = support.clone();
                s.sort_unstable();
                s.dedup();
                if s.len() != support.len() {
                    return Err(Error::InvalidSpec("parity support has duplicates".into()));
                }
                if support.iter().any(|&i| i >= n_latent) {
                    return Err(Error::InvalidSpec("parity support index out of range".into()));
                }
            }
            ObsFn::Slab { direction, .. } => {
                if direction.len() != n_latent {
                    return Err(Error::InvalidSpec("slab direction has wrong dimension".into()));
                }
            }
            ObsFn::Const { token } => {
                if *token == 0 {
                    return Err(Error::InvalidSpec("pad token must be a data value".into()));
                }
            }
        }
        Ok(())
    }
}

fn slab_inside(direction: &[f64], beta: f64, latents: &[u32]) -> bool {
    let n = direction.len();
    let dot: f64 = direction
        .iter()
        .enumerate()
        .map(|(i, &z)| z * (2.0 * token_to_bit(latents[i]) as f64 - 1.0))
        .sum();
    dot.abs() <= beta * (n as f64).sqrt()
}

/// A latents-and-observations distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LOSpec {
    /// `perm[i]` is the sequence position of latent `i` for `i < N`, and of
    /// observation `i - N` for `i >= N`.
    perm: Vec<usize>,
    n_latent: usize,
    vocab: u32,
    /// Prior over data values `{1..m}`.
    prior: Vec<f64>,
    observations: Vec<ObsFn>,
}

/// Role of a sequence position in an [`LOSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Latent(usize),
    Observation(usize),
}

impl LOSpec {
    pub fn new(
        perm: Vec<usize>,
        n_latent: usize,
        vocab: u32,
        prior: Vec<f64>,
        observations: Vec<ObsFn>,
    ) -> Result<Self> {
        let l = n_latent + observations.len();
        if perm.len() != l {
            return Err(Error::InvalidSpec(format!(
                "perm length {} != N + P = {l}",
                perm.len()
            )));
        }
        let mut seen = vec![false; l];
        for &p in &perm {
            if p >= l || seen[p] {
                return Err(Error::InvalidSpec("perm is not a bijection".into()));
            }
            seen[p] = true;
        }
        if prior.len() != vocab as usize {
            return Err(Error::InvalidSpec("prior length must equal vocab size".into()));
        }
        let psum: f64 = prior.iter().sum();
        if prior.iter().any(|&p| p < 0.0) || (psum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec("prior must be a distribution".into()));
        }
        for obs in &observations {
            obs.validate(n_latent)?;
        }
        Ok(Self { perm, n_latent, vocab, prior, observations })
    }

    /// Identity-permutation spec: latents first, observations after.
    pub fn identity(
        n_latent: usize,
        vocab: u32,
        prior: Vec<f64>,
        observations: Vec<ObsFn>,
    ) -> Result<Self> {
        let l = n_latent + observations.len();
        Self::new((0..l).collect(), n_latent, vocab, prior, observations)
    }

    pub fn uniform_prior(vocab: u32) -> Vec<f64> {
        vec![1.0 / vocab as f64; vocab as usize]
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn n_latent(&self) -> usize {
        self.n_latent
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn observations(&self) -> &[ObsFn] {
        &self.observations
    }

    pub fn latent_position(&self, latent: usize) -> usize {
        self.perm[latent]
    }

    pub fn obs_position(&self, obs: usize) -> usize {
        self.perm[self.n_latent + obs]
    }

    pub fn role_of(&self, pos: usize) -> Role {
        let idx = self.perm.iter().position(|&p| p == pos).expect("pos in range");
        if idx < self.n_latent {
            Role::Latent(idx)
        } else {
            Role::Observation(idx - self.n_latent)
        }
    }

    pub fn latent_positions(&self) -> Vec<usize> {
        self.perm[..self.n_latent].to_vec()
    }

    pub fn obs_positions(&self) -> Vec<usize> {
        self.perm[self.n_latent..].to_vec()
    }

    /// Applies a relabeling `rho` of sequence positions, producing the spec of
    /// the pushforward distribution.
    pub fn relabel_positions(&self, rho: &[usize]) -> Result<Self> {
        if rho.len() != self.len() {
            return Err(Error::InvalidSpec("relabeling length mismatch".into()));
        }
        let perm = self.perm.iter().map(|&p| rho[p]).collect();
        Self::new(perm, self.n_latent, self.vocab, self.prior.clone(), self.observations.clone())
    }

    /// Draws one full sequence: latents i.i.d. from the prior, observations
    /// from their observation functions. Never emits mask tokens.
    pub fn sample(&self, rng: &RngHandle) -> TokenSeq {
        let mut r = rng.rng();
        self.sample_with(&mut r)
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> TokenSeq {
        let mut latents = vec![0u32; self.n_latent];
        for slot in latents.iter_mut() {
            let mut u = rng.gen::<f64>();
            let mut chosen = self.vocab;
            for (j, &p) in self.prior.iter().enumerate() {
                u -= p;
                if u <= 0.0 {
                    chosen = j as u32 + 1;
                    break;
                }
            }
            *slot = chosen;
        }
        let mut tokens = vec![0u32; self.len()];
        for (i, &latent) in latents.iter().enumerate() {
            tokens[self.perm[i]] = latent;
        }
        for (j, obs) in self.observations.iter().enumerate() {
            tokens[self.perm[self.n_latent + j]] = obs.sample(&latents, self.vocab, rng);
        }
        TokenSeq::new(tokens, self.vocab).expect("sampled tokens in range")
    }

    /// Exact conditional marginals of every masked position of `observed`
    /// given its unmasked positions, by enumeration over masked-latent
    /// completions. Observation positions never enter the enumeration; they
    /// are conditionally independent given the latents.
    ///
    /// One-shot convenience; for repeated queries against the same spec wrap
    /// it in [`crate::denoise::ExactDenoiser`], which caches the bit-parallel
    /// engine.
    pub fn exact_posterior(&self, observed: &TokenSeq, budget: f64) -> Result<MarginalTable> {
        if observed.len() != self.len() {
            return Err(Error::InvalidSpec(format!(
                "sequence length {} != spec length {}",
                observed.len(),
                self.len()
            )));
        }
        if let Some(fast) = NaeBitPosterior::try_new(self) {
            return Ok(fast.posterior(observed));
        }
        self.exact_posterior_generic(observed, budget)
    }

    pub(crate) fn exact_posterior_generic(
        &self,
        observed: &TokenSeq,
        budget: f64,
    ) -> Result<MarginalTable> {
        let m = self.vocab as usize;
        let mut latents = vec![0u32; self.n_latent];
        let mut masked_latents = Vec::new();
        for i in 0..self.n_latent {
            let tok = observed.get(self.perm[i]);
            if tok == 0 {
                masked_latents.push(i);
            } else {
                latents[i] = tok;
            }
        }
        let mut seen_obs: Vec<(usize, u32)> = Vec::new(); // (obs index, value)
        let mut masked_obs: Vec<usize> = Vec::new();
        for j in 0..self.observations.len() {
            let tok = observed.get(self.perm[self.n_latent + j]);
            if tok == 0 {
                masked_obs.push(j);
            } else {
                seen_obs.push((j, tok));
            }
        }

        let completions = (m as f64).powi(masked_latents.len() as i32);
        let required = completions * (seen_obs.len().max(1) + masked_obs.len()) as f64;
        if required > budget {
            return Err(Error::BudgetExceeded { required, budget });
        }

        let mut acc = PosteriorAcc::new(masked_latents.len(), masked_obs.len(), m);
        let total = completions as u64;
        let mut digits = vec![0usize; masked_latents.len()];
        for _ in 0..total {
            for (slot, &i) in digits.iter().zip(&masked_latents) {
                latents[i] = *slot as u32 + 1;
            }
            // Weight in log space. Prior-zero values are hard exclusions;
            // observation factors that fail count as violations so that
            // contradictory evidence degrades to minimal-violation
            // conditioning instead of a 0/0 posterior.
            let mut logw = 0.0;
            let mut excluded = false;
            for &slot in digits.iter() {
                let p = self.prior[slot];
                if p == 0.0 {
                    excluded = true;
                    break;
                }
                logw += p.ln();
            }
            if !excluded {
                let mut violations = 0u32;
                for &(j, val) in &seen_obs {
                    let p = self.observations[j].prob(&latents, val);
                    if p == 0.0 {
                        violations += 1;
                    } else {
                        logw += p.ln();
                    }
                }
                acc.push(violations, logw, &digits, |j, v| {
                    self.observations[masked_obs[j]].prob(&latents, v as u32 + 1)
                });
            }

            // Odometer over masked-latent digits.
            for d in digits.iter_mut() {
                *d += 1;
                if *d < m {
                    break;
                }
                *d = 0;
            }
        }

        let mut table = MarginalTable::zeros(self.len(), self.vocab);
        for (k, &i) in masked_latents.iter().enumerate() {
            table.set_row(self.perm[i], &acc.latent_row(k));
        }
        for (k, &j) in masked_obs.iter().enumerate() {
            table.set_row(self.perm[self.n_latent + j], &acc.obs_row(k));
        }
        Ok(table)
    }

    /// Expands the full support of the distribution. Only valid when every
    /// observation is deterministic; errors when the support would exceed
    /// `budget` atoms.
    pub fn enumerate(&self, budget: f64) -> Result<EnumerableDist> {
        if self.observations.iter().any(|o| !o.is_deterministic()) {
            return Err(Error::InvalidSpec(
                "support enumeration requires deterministic observations".into(),
            ));
        }
        let m = self.vocab as usize;
        let total = (m as f64).powi(self.n_latent as i32);
        if total > budget {
            return Err(Error::BudgetExceeded { required: total, budget });
        }
        let mut atoms = Vec::new();
        let mut latents = vec![1u32; self.n_latent];
        let total = total as u64;
        let mut digits = vec![0usize; self.n_latent];
        for _ in 0..total {
            for (slot, l) in digits.iter().zip(latents.iter_mut()) {
                *l = *slot as u32 + 1;
            }
            let w: f64 = digits.iter().map(|&d| self.prior[d]).product();
            if w > 0.0 {
                let mut tokens = vec![0u32; self.len()];
                for (i, &l) in latents.iter().enumerate() {
                    tokens[self.perm[i]] = l;
                }
                for (j, obs) in self.observations.iter().enumerate() {
                    let dist = obs.dist(&latents, self.vocab);
                    let v = dist.iter().position(|&p| p > 0.0).unwrap() as u32 + 1;
                    tokens[self.perm[self.n_latent + j]] = v;
                }
                atoms.push((TokenSeq::new(tokens, self.vocab)?, w));
            }
            for d in digits.iter_mut() {
                *d += 1;
                if *d < m {
                    break;
                }
                *d = 0;
            }
        }
        EnumerableDist::new(self.vocab, atoms)
    }
}

/// Streaming accumulator for min-violation posteriors with log-space weights.
struct PosteriorAcc {
    m: usize,
    best_violations: u32,
    log_max: f64,
    total: f64,
    latent_mass: Vec<f64>, // masked latent k, value slot v
    obs_mass: Vec<f64>,    // masked obs k, value slot v
}

impl PosteriorAcc {
    fn new(n_latent: usize, n_obs: usize, m: usize) -> Self {
        Self {
            m,
            best_violations: u32::MAX,
            log_max: f64::NEG_INFINITY,
            total: 0.0,
            latent_mass: vec![0.0; n_latent * m],
            obs_mass: vec![0.0; n_obs * m],
        }
    }

    fn reset(&mut self) {
        self.log_max = f64::NEG_INFINITY;
        self.total = 0.0;
        self.latent_mass.fill(0.0);
        self.obs_mass.fill(0.0);
    }

    fn push(
        &mut self,
        violations: u32,
        logw: f64,
        digits: &[usize],
        obs_prob: impl Fn(usize, usize) -> f64,
    ) {
        if violations > self.best_violations {
            return;
        }
        if violations < self.best_violations {
            self.best_violations = violations;
            self.reset();
        }
        if logw > self.log_max {
            // Rescale previous mass to the new reference point.
            let scale = (self.log_max - logw).exp();
            if self.total > 0.0 {
                self.total *= scale;
                for x in self.latent_mass.iter_mut() {
                    *x *= scale;
                }
                for x in self.obs_mass.iter_mut() {
                    *x *= scale;
                }
            }
            self.log_max = logw;
        }
        let w = (logw - self.log_max).exp();
        self.total += w;
        for (k, &d) in digits.iter().enumerate() {
            self.latent_mass[k * self.m + d] += w;
        }
        let n_obs = self.obs_mass.len() / self.m.max(1);
        for k in 0..n_obs {
            for v in 0..self.m {
                self.obs_mass[k * self.m + v] += w * obs_prob(k, v);
            }
        }
    }

    fn latent_row(&self, k: usize) -> Vec<f64> {
        normalize_or_uniform(&self.latent_mass[k * self.m..(k + 1) * self.m])
    }

    fn obs_row(&self, k: usize) -> Vec<f64> {
        normalize_or_uniform(&self.obs_mass[k * self.m..(k + 1) * self.m])
    }
}

fn normalize_or_uniform(row: &[f64]) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter().map(|&x| x / total).collect()
    } else {
        vec![1.0 / row.len() as f64; row.len()]
    }
}

/// Explicitly enumerated distribution over sequences. Serves as the reference
/// oracle for loss computations and sampler distribution tests.
#[derive(Debug, Clone)]
pub struct EnumerableDist {
    vocab: u32,
    atoms: Vec<(TokenSeq, f64)>,
}

impl EnumerableDist {
    pub fn new(vocab: u32, atoms: Vec<(TokenSeq, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidSpec("empty support".into()));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("atom masses sum to {total}")));
        }
        let len = atoms[0].0.len();
        if atoms.iter().any(|(x, _)| x.len() != len || x.has_mask()) {
            return Err(Error::InvalidSpec("atoms must be unmasked, equal-length".into()));
        }
        Ok(Self { vocab, atoms })
    }

    /// Uniform distribution over the given support points.
    pub fn uniform(vocab: u32, support: Vec<TokenSeq>) -> Result<Self> {
        let w = 1.0 / support.len() as f64;
        Self::new(vocab, support.into_iter().map(|x| (x, w)).collect())
    }

    /// Random distribution over `{1..m}^L` with masses drawn from the given
    /// generator (a smoothed simplex point).
    pub fn random(len: usize, vocab: u32, rng: &mut impl Rng) -> Self {
        let m = vocab as usize;
        let count = m.pow(len as u32);
        let mut atoms = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut digits = vec![0usize; len];
        for _ in 0..count {
            let tokens: Vec<u32> = digits.iter().map(|&d| d as u32 + 1).collect();
            atoms.push(TokenSeq::new(tokens, vocab).unwrap());
            weights.push(rng.gen::<f64>() + 0.05);
            for d in digits.iter_mut() {
                *d += 1;
                if *d < m {
                    break;
                }
                *d = 0;
            }
        }
        let total: f64 = weights.iter().sum();
        let atoms = atoms
            .into_iter()
            .zip(weights)
            .map(|(x, w)| (x, w / total))
            .collect();
        Self { vocab, atoms }
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.atoms[0].0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn atoms(&self) -> &[(TokenSeq, f64)] {
        &self.atoms
    }

    pub fn prob_of(&self, x: &TokenSeq) -> f64 {
        self.atoms
            .iter()
            .find(|(a, _)| a == x)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> &TokenSeq {
        let mut u = rng.gen::<f64>();
        for (x, w) in &self.atoms {
            u -= w;
            if u <= 0.0 {
                return x;
            }
        }
        &self.atoms[self.atoms.len() - 1].0
    }

    /// Conditional marginals of masked positions given unmasked ones, by
    /// direct summation over atoms. Independent of [`LOSpec::exact_posterior`]
    /// — used to cross-check it.
    pub fn conditional_marginals(&self, observed: &TokenSeq) -> MarginalTable {
        let m = self.vocab as usize;
        let len = observed.len();
        let masked: Vec<usize> = observed.masked_positions();
        let mut mass = vec![0.0; masked.len() * m];
        let mut total = 0.0;
        for (atom, w) in &self.atoms {
            let consistent = (0..len)
                .all(|i| observed.is_masked(i) || observed.get(i) == atom.get(i));
            if !consistent {
                continue;
            }
            total += w;
            for (k, &pos) in masked.iter().enumerate() {
                mass[k * m + (atom.get(pos) - 1) as usize] += w;
            }
        }
        let mut table = MarginalTable::zeros(len, self.vocab);
        for (k, &pos) in masked.iter().enumerate() {
            let row: Vec<f64> = if total > 0.0 {
                mass[k * m..(k + 1) * m].iter().map(|&x| x / total).collect()
            } else {
                vec![1.0 / m as f64; m]
            };
            table.set_row(pos, &row);
        }
        table
    }
}

/// NAE-predicate spec over triples of latents (identity position layout).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaeSatSpec {
    pub n_latent: usize,
    pub triples: Vec<[usize; 3]>,
    pub vocab: u32,
}

impl NaeSatSpec {
    /// Random prefixed triples drawn without immediate repetition.
    pub fn random(n_latent: usize, n_obs: usize, vocab: u32, rng: &RngHandle) -> Result<Self> {
        if n_latent < 3 {
            return Err(Error::InvalidSpec("NAE needs at least 3 latents".into()));
        }
        let mut r = rng.rng();
        let triples = (0..n_obs)
            .map(|_| {
                let mut t = [0usize; 3];
                t[0] = r.gen_range(0..n_latent);
                loop {
                    t[1] = r.gen_range(0..n_latent);
                    if t[1] != t[0] {
                        break;
                    }
                }
                loop {
                    t[2] = r.gen_range(0..n_latent);
                    if t[2] != t[0] && t[2] != t[1] {
                        break;
                    }
                }
                t
            })
            .collect();
        Ok(Self { n_latent, triples, vocab })
    }

    pub fn to_lospec(&self) -> Result<LOSpec> {
        let obs = self.triples.iter().map(|&triple| ObsFn::Nae { triple }).collect();
        LOSpec::identity(self.n_latent, self.vocab, LOSpec::uniform_prior(self.vocab), obs)
    }
}

/// Noisy sparse parity spec (binary vocabulary).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParitySpec {
    pub n_latent: usize,
    pub sparsity: usize,
    pub eta: f64,
    pub supports: Vec<Vec<usize>>,
}

impl ParitySpec {
    pub fn random(
        n_latent: usize,
        n_obs: usize,
        sparsity: usize,
        eta: f64,
        rng: &RngHandle,
    ) -> Result<Self> {
        if sparsity == 0 || sparsity > n_latent {
            return Err(Error::InvalidSpec("sparsity must be in 1..=N".into()));
        }
        let mut r = rng.rng();
        let supports = (0..n_obs)
            .map(|_| {
                let mut pool: Vec<usize> = (0..n_latent).collect();
                let mut s = Vec::with_capacity(sparsity);
                for _ in 0..sparsity {
                    let idx = r.gen_range(0..pool.len());
                    s.push(pool.swap_remove(idx));
                }
                s.sort_unstable();
                s
            })
            .collect();
        Ok(Self { n_latent, sparsity, eta, supports })
    }

    pub fn to_lospec(&self) -> Result<LOSpec> {
        let obs = self
            .supports
            .iter()
            .map(|s| ObsFn::Parity { support: s.clone(), eta: self.eta })
            .collect();
        LOSpec::identity(self.n_latent, 2, LOSpec::uniform_prior(2), obs)
    }
}

/// Random slab spec (binary vocabulary): `P = floor(gamma N^2)` directions
/// with standard normal entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlabSpec {
    pub n_latent: usize,
    pub beta: f64,
    pub directions: Vec<Vec<f64>>,
}

impl SlabSpec {
    pub fn random(n_latent: usize, gamma: f64, beta: f64, rng: &RngHandle) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::InvalidSpec("gamma must be positive".into()));
        }
        let n_obs = (gamma * (n_latent * n_latent) as f64).floor() as usize;
        let mut r = rng.rng();
        let directions = (0..n_obs)
            .map(|_| (0..n_latent).map(|_| standard_normal(&mut r)).collect())
            .collect();
        Ok(Self { n_latent, beta, directions })
    }

    pub fn to_lospec(&self) -> Result<LOSpec> {
        let obs = self
            .directions
            .iter()
            .map(|z| ObsFn::Slab { direction: z.clone(), beta: self.beta })
            .collect();
        LOSpec::identity(self.n_latent, 2, LOSpec::uniform_prior(2), obs)
    }
}

/// Box-Muller; good enough here, avoids pulling a distributions crate.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gumbel(0, 1) draw.
pub fn standard_gumbel(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

/// Declarative config for generator specs (the JSON spec-file interface).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistribConfig {
    Nae {
        n_latent: usize,
        n_obs: usize,
        #[serde(default = "default_vocab")]
        vocab: u32,
        seed: u64,
        #[serde(default)]
        pad_len: usize,
        #[serde(default = "default_pad_token")]
        pad_token: u32,
    },
    Parity {
        n_latent: usize,
        n_obs: usize,
        sparsity: usize,
        eta: f64,
        seed: u64,
    },
    Slab {
        n_latent: usize,
        gamma: f64,
        beta: f64,
        seed: u64,
    },
}

fn default_vocab() -> u32 {
    2
}

fn default_pad_token() -> u32 {
    2
}

impl DistribConfig {
    /// Builds the spec, deriving structural randomness (triples, supports,
    /// directions) from the config seed.
    pub fn build(&self) -> Result<LOSpec> {
        match self {
            DistribConfig::Nae { n_latent, n_obs, vocab, seed, pad_len, pad_token } => {
                let h = RngHandle::new(*seed, 0);
                let nae = NaeSatSpec::random(*n_latent, *n_obs, *vocab, &h)?;
                let mut obs: Vec<ObsFn> =
                    nae.triples.iter().map(|&triple| ObsFn::Nae { triple }).collect();
                for _ in 0..*pad_len {
                    obs.push(ObsFn::Const { token: *pad_token });
                }
                LOSpec::identity(*n_latent, *vocab, LOSpec::uniform_prior(*vocab), obs)
            }
            DistribConfig::Parity { n_latent, n_obs, sparsity, eta, seed } => {
                ParitySpec::random(*n_latent, *n_obs, *sparsity, *eta, &RngHandle::new(*seed, 0))?
                    .to_lospec()
            }
            DistribConfig::Slab { n_latent, gamma, beta, seed } => {
                SlabSpec::random(*n_latent, *gamma, *beta, &RngHandle::new(*seed, 0))?.to_lospec()
            }
        }
    }
}

#[cfg(test)]
mod tests;
