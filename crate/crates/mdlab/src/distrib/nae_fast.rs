//! Bit-parallel exact posterior for binary NAE specs.
//!
//! For a spec with vocabulary `{1,2}`, uniform prior, and deterministic NAE
//! (or constant-pad) observations, the 2^N latent completions are indexed by
//! bitmasks and every observation becomes a precomputed satisfaction bitset.
//! Conditioning is then a word-wise AND sweep and marginals are popcounts,
//! which keeps repeated posterior queries cheap inside samplers.

use super::{LOSpec, ObsFn};
use crate::seq::{MarginalTable, TokenSeq};

/// Latent completions are bitmasks `z`; bit `i` of `z` is the bit of latent
/// `i` under the fixed encoding token 1 -> bit 1, token 2 -> bit 0.
pub struct NaeBitPosterior {
    n_latent: usize,
    words: usize,
    /// For each observation: `Some(bitset)` marking completions where the NAE
    /// predicate holds, or `None` for constant pads.
    sat: Vec<Option<Vec<u64>>>,
    /// Constant-pad tokens, by observation index.
    pad: Vec<Option<u32>>,
    latent_pos: Vec<usize>,
    obs_pos: Vec<usize>,
    len: usize,
}

const MAX_FAST_LATENTS: usize = 16;

impl NaeBitPosterior {
    /// Builds the bit-parallel representation when the spec qualifies:
    /// binary vocabulary, uniform prior, NAE/constant observations only,
    /// and at most 16 latents.
    pub fn try_new(spec: &LOSpec) -> Option<Self> {
        if spec.vocab() != 2 || spec.n_latent() == 0 || spec.n_latent() > MAX_FAST_LATENTS {
            return None;
        }
        if spec.prior().iter().any(|&p| (p - 0.5).abs() > 1e-12) {
            return None;
        }
        let n = spec.n_latent();
        let total: usize = 1usize << n;
        let words = total.div_ceil(64);
        let mut sat = Vec::with_capacity(spec.n_obs());
        let mut pad = Vec::with_capacity(spec.n_obs());
        for obs in spec.observations() {
            match obs {
                ObsFn::Nae { triple } => {
                    let mut bits = vec![0u64; words];
                    for z in 0..total {
                        let b1 = (z >> triple[0]) & 1;
                        let b2 = (z >> triple[1]) & 1;
                        let b3 = (z >> triple[2]) & 1;
                        if !(b1 == b2 && b2 == b3) {
                            bits[z / 64] |= 1u64 << (z % 64);
                        }
                    }
                    sat.push(Some(bits));
                    pad.push(None);
                }
                ObsFn::Const { token } => {
                    sat.push(None);
                    pad.push(Some(*token));
                }
                _ => return None,
            }
        }
        Some(Self {
            n_latent: n,
            words,
            sat,
            pad,
            latent_pos: spec.latent_positions(),
            obs_pos: spec.obs_positions(),
            len: spec.len(),
        })
    }

    fn valid_word(&self, w: usize) -> u64 {
        let total = 1usize << self.n_latent;
        let full_words = total / 64;
        if w < full_words {
            !0u64
        } else {
            // Partial top word only occurs for n_latent < 6.
            (1u64 << (total % 64)) - 1
        }
    }

    /// Word `w` of the bitset `{z : bit i of z == 1}`.
    fn latent_word(i: usize, w: usize) -> u64 {
        const PATTERNS: [u64; 6] = [
            0xAAAA_AAAA_AAAA_AAAA,
            0xCCCC_CCCC_CCCC_CCCC,
            0xF0F0_F0F0_F0F0_F0F0,
            0xFF00_FF00_FF00_FF00,
            0xFFFF_0000_FFFF_0000,
            0xFFFF_FFFF_0000_0000,
        ];
        if i < 6 {
            PATTERNS[i]
        } else if (w >> (i - 6)) & 1 == 1 {
            !0u64
        } else {
            0u64
        }
    }

    /// Exact posterior marginals of the masked positions of `observed`.
    pub fn posterior(&self, observed: &TokenSeq) -> MarginalTable {
        debug_assert_eq!(observed.len(), self.len);
        let mut survivors: Vec<u64> = (0..self.words).map(|w| self.valid_word(w)).collect();

        for (i, &pos) in self.latent_pos.iter().enumerate() {
            match observed.get(pos) {
                0 => {}
                v => {
                    let want_one = v == 1;
                    for (w, word) in survivors.iter_mut().enumerate() {
                        let ones = Self::latent_word(i, w);
                        *word &= if want_one { ones } else { !ones };
                    }
                }
            }
        }
        for (j, &pos) in self.obs_pos.iter().enumerate() {
            let tok = observed.get(pos);
            if tok == 0 {
                continue;
            }
            if let Some(bits) = &self.sat[j] {
                // Token 2 encodes "predicate satisfied". A pad mismatch does
                // not depend on the latents, so pads never filter.
                let want_sat = tok == 2;
                for (w, word) in survivors.iter_mut().enumerate() {
                    *word &= if want_sat { bits[w] } else { !bits[w] & self.valid_word(w) };
                }
            }
        }

        let total: u64 = survivors.iter().map(|w| w.count_ones() as u64).sum();
        if total == 0 {
            return self.min_violation_posterior(observed);
        }

        let mut table = MarginalTable::zeros(self.len, 2);
        for (i, &pos) in self.latent_pos.iter().enumerate() {
            if observed.get(pos) != 0 {
                continue;
            }
            let ones: u64 = survivors
                .iter()
                .enumerate()
                .map(|(w, word)| (word & Self::latent_word(i, w)).count_ones() as u64)
                .sum();
            let p1 = ones as f64 / total as f64;
            table.set_row(pos, &[p1, 1.0 - p1]);
        }
        for (j, &pos) in self.obs_pos.iter().enumerate() {
            if observed.get(pos) != 0 {
                continue;
            }
            match (&self.sat[j], self.pad[j]) {
                (Some(bits), _) => {
                    let sat: u64 = survivors
                        .iter()
                        .zip(bits)
                        .map(|(word, b)| (word & b).count_ones() as u64)
                        .sum();
                    let p_sat = sat as f64 / total as f64;
                    table.set_row(pos, &[1.0 - p_sat, p_sat]);
                }
                (None, Some(tok)) => {
                    let mut row = [0.0, 0.0];
                    row[(tok - 1) as usize] = 1.0;
                    table.set_row(pos, &row);
                }
                (None, None) => unreachable!(),
            }
        }
        table
    }

    /// Slow path for contradictory evidence: restricts to completions that
    /// violate the fewest observation values.
    fn min_violation_posterior(&self, observed: &TokenSeq) -> MarginalTable {
        let total = 1usize << self.n_latent;
        let mut lat_mask = 0usize;
        let mut lat_vals = 0usize;
        for (i, &pos) in self.latent_pos.iter().enumerate() {
            match observed.get(pos) {
                0 => {}
                v => {
                    lat_mask |= 1 << i;
                    if v == 1 {
                        lat_vals |= 1 << i;
                    }
                }
            }
        }
        let evidence: Vec<(usize, bool)> = self
            .obs_pos
            .iter()
            .enumerate()
            .filter_map(|(j, &pos)| match observed.get(pos) {
                0 => None,
                tok => self.sat[j].as_ref().map(|_| (j, tok == 2)),
            })
            .collect();

        let mut best = u32::MAX;
        let mut kept: Vec<usize> = Vec::new();
        for z in 0..total {
            if z & lat_mask != lat_vals {
                continue;
            }
            let mut violations = 0u32;
            for &(j, want_sat) in &evidence {
                let bits = self.sat[j].as_ref().unwrap();
                let sat = (bits[z / 64] >> (z % 64)) & 1 == 1;
                if sat != want_sat {
                    violations += 1;
                }
            }
            if violations < best {
                best = violations;
                kept.clear();
            }
            if violations == best {
                kept.push(z);
            }
        }
        debug_assert!(!kept.is_empty(), "some completion matches the pinned latents");

        let denom = kept.len() as f64;
        let mut table = MarginalTable::zeros(self.len, 2);
        for (i, &pos) in self.latent_pos.iter().enumerate() {
            if observed.get(pos) != 0 {
                continue;
            }
            let ones = kept.iter().filter(|&&z| (z >> i) & 1 == 1).count() as f64;
            table.set_row(pos, &[ones / denom, 1.0 - ones / denom]);
        }
        for (j, &pos) in self.obs_pos.iter().enumerate() {
            if observed.get(pos) != 0 {
                continue;
            }
            match (&self.sat[j], self.pad[j]) {
                (Some(bits), _) => {
                    let sat = kept
                        .iter()
                        .filter(|&&z| (bits[z / 64] >> (z % 64)) & 1 == 1)
                        .count() as f64;
                    table.set_row(pos, &[1.0 - sat / denom, sat / denom]);
                }
                (None, Some(tok)) => {
                    let mut row = [0.0, 0.0];
                    row[(tok - 1) as usize] = 1.0;
                    table.set_row(pos, &row);
                }
                (None, None) => unreachable!(),
            }
        }
        table
    }
}
