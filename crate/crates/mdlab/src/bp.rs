//! Planted constraint satisfaction and belief propagation.
//!
//! A planted instance hides a uniform assignment `sigma` over `{1..m}^N` and
//! reveals ordered k-tuples ("clauses") on which a predicate `g` holds under
//! `sigma`, each tuple included independently with a small probability chosen
//! to hit a target average degree. Belief propagation passes messages between
//! variables and clauses; its behavior as the degree grows locates three
//! regimes: below the condensation degree both informed and uninformed
//! initializations forget the planted assignment, above the Kesten-Stigum
//! degree both recover it, and in between only the informed initialization
//! stays locked — the computationally hard window.
//!
//! Degree convention: `avg_degree` (D) is scaled so that `D / k` equals the
//! expected number of variables sharing a clause with a given variable; each
//! variable then sits in `D / (k (k - 1))` clauses. One step along the local
//! tree from a variable reaches `f (k - 1)` neighbors through its `f`
//! clauses, and the paramagnetic point destabilizes when
//! `f (k - 1) lambda^2 = 1` for the predicate channel's second eigenvalue
//! `lambda`; under this scaling the planted 5-coloring thresholds land at
//! `D_cond ~= 26.5`, `D_KS = 32` and the ternary not-all-equal thresholds at
//! `D/k ~= 50`, `D/k = 64`, the published values for these ensembles.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::seq::{MarginalTable, TokenSeq};
use crate::stats::RunningStats;

/// A k-ary predicate over tokens `{1..m}`, stored as a truth table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    vocab: u32,
    arity: usize,
    table: Vec<bool>,
    name: String,
}

impl Predicate {
    pub fn from_fn(
        vocab: u32,
        arity: usize,
        name: impl Into<String>,
        f: impl Fn(&[u32]) -> bool,
    ) -> Self {
        let m = vocab as usize;
        let size = m.pow(arity as u32);
        let mut vals = vec![1u32; arity];
        let mut table = Vec::with_capacity(size);
        for _ in 0..size {
            table.push(f(&vals));
            for v in vals.iter_mut() {
                *v += 1;
                if *v <= vocab {
                    break;
                }
                *v = 1;
            }
        }
        Self { vocab, arity, table, name: name.into() }
    }

    /// Not-all-equal: false only on constant tuples.
    pub fn nae(vocab: u32, arity: usize) -> Self {
        Self::from_fn(vocab, arity, format!("nae{arity}"), |vals| {
            vals.iter().any(|&v| v != vals[0])
        })
    }

    /// Binary inequality (proper-coloring constraint).
    pub fn inequality(vocab: u32) -> Self {
        Self::from_fn(vocab, 2, "neq", |vals| vals[0] != vals[1])
    }

    pub fn always_true(vocab: u32, arity: usize) -> Self {
        Self::from_fn(vocab, arity, "true", |_| true)
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, vals: &[u32]) -> bool {
        debug_assert_eq!(vals.len(), self.arity);
        let m = self.vocab as usize;
        let mut idx = 0usize;
        for &v in vals.iter().rev() {
            idx = idx * m + (v - 1) as usize;
        }
        self.table[idx]
    }

    /// Fraction of assignments satisfying the predicate.
    pub fn satisfaction_probability(&self) -> f64 {
        self.table.iter().filter(|&&b| b).count() as f64 / self.table.len() as f64
    }
}

/// One clause: the predicate restricted to `vars` must evaluate to `output`.
/// Planted generation only emits `output = true`; masking reductions also
/// carry falsified observations as `output = false`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub vars: Vec<usize>,
    pub output: bool,
}

/// A planted (or reduced) constraint satisfaction instance.
#[derive(Debug, Clone)]
pub struct CSPInstance {
    pub n_vars: usize,
    pub predicate: Predicate,
    /// Hidden assignment; present for planted instances, absent for
    /// instances reduced from observed data.
    pub sigma: Option<Vec<u32>>,
    pub clauses: Vec<Clause>,
}

impl CSPInstance {
    /// Checks the planting condition: every clause's predicate output equals
    /// its evaluation under `sigma`.
    pub fn validate_planting(&self) -> Result<()> {
        let sigma = self
            .sigma
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("no planted assignment".into()))?;
        let mut buf = vec![0u32; self.predicate.arity()];
        for (i, clause) in self.clauses.iter().enumerate() {
            for (b, &v) in buf.iter_mut().zip(&clause.vars) {
                *b = sigma[v];
            }
            if self.predicate.eval(&buf) != clause.output {
                return Err(Error::InvalidSpec(format!("clause {i} violates the planting")));
            }
        }
        Ok(())
    }

    /// Average degree of this instance in the crate's convention
    /// (the inverse of [`expected_clauses`]).
    pub fn avg_degree(&self) -> f64 {
        let k = self.predicate.arity() as f64;
        k * k * (k - 1.0).max(1.0) * self.clauses.len() as f64 / self.n_vars as f64
    }

    /// Clause-list text: one clause per line, variable indices then the
    /// predicate output bit.
    pub fn to_clause_text(&self) -> String {
        let mut out = String::new();
        for c in &self.clauses {
            for v in &c.vars {
                out.push_str(&v.to_string());
                out.push(' ');
            }
            out.push(if c.output { '1' } else { '0' });
            out.push('\n');
        }
        out
    }

    pub fn from_clause_text(n_vars: usize, predicate: Predicate, text: &str) -> Result<Self> {
        let k = predicate.arity();
        let mut clauses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != k + 1 {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 1,
                    k + 1,
                    fields.len()
                )));
            }
            let vars: Vec<usize> = fields[..k]
                .iter()
                .map(|f| {
                    f.parse::<usize>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            if vars.iter().any(|&v| v >= n_vars) {
                return Err(Error::Parse(format!("line {}: variable out of range", lineno + 1)));
            }
            let output = match fields[k] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse(format!("line {}: bad output '{other}'", lineno + 1)))
                }
            };
            clauses.push(Clause { vars, output });
        }
        Ok(Self { n_vars, predicate, sigma: None, clauses })
    }
}

/// Expected clause count at the given average degree: `D N / (k^2 (k-1))`.
pub fn expected_clauses(n_vars: usize, arity: usize, avg_degree: f64) -> f64 {
    let k = arity as f64;
    avg_degree * n_vars as f64 / (k * k * (k - 1.0).max(1.0))
}

/// Samples a planted instance at the given average degree (see the module
/// docs for the degree convention). The hidden assignment is uniform; each
/// ordered tuple of distinct variables is kept independently, with the
/// inclusion probability calibrated against the predicate's satisfaction
/// rate, whenever the planted assignment satisfies it.
pub fn plant_csp(
    n_vars: usize,
    predicate: &Predicate,
    avg_degree: f64,
    rng: &RngHandle,
) -> Result<CSPInstance> {
    let mut r = rng.rng();
    let m = predicate.vocab();
    let sigma: Vec<u32> = (0..n_vars).map(|_| r.gen_range(1..=m)).collect();
    plant_csp_with_sigma(n_vars, predicate, avg_degree, sigma, &mut r)
}

/// Planting with a caller-chosen hidden assignment.
pub fn plant_csp_with_sigma(
    n_vars: usize,
    predicate: &Predicate,
    avg_degree: f64,
    sigma: Vec<u32>,
    rng: &mut impl Rng,
) -> Result<CSPInstance> {
    if avg_degree <= 0.0 {
        return Err(Error::InvalidSpec("average degree must be positive".into()));
    }
    let k = predicate.arity();
    if n_vars < k {
        return Err(Error::InvalidSpec("need at least k variables".into()));
    }
    let gamma = predicate.satisfaction_probability();
    if gamma == 0.0 {
        return Err(Error::InvalidSpec("predicate is never satisfied".into()));
    }
    // Number of ordered k-tuples of distinct indices.
    let mut n_tuples = 1.0f64;
    for i in 0..k {
        n_tuples *= (n_vars - i) as f64;
    }
    let target = expected_clauses(n_vars, k, avg_degree);
    let p_inc = (target / (gamma * n_tuples)).min(1.0);

    let mut clauses = Vec::new();
    let mut buf = vec![0u32; k];
    if n_tuples <= 2e6 {
        // Exact per-tuple Bernoulli sweep.
        let mut tuple = Vec::with_capacity(k);
        iterate_distinct_tuples(n_vars, k, &mut tuple, &mut |vars| {
            for (b, &v) in buf.iter_mut().zip(vars) {
                *b = sigma[v];
            }
            if predicate.eval(&buf) && rng.gen::<f64>() < p_inc {
                clauses.push(Clause { vars: vars.to_vec(), output: true });
            }
        });
    } else {
        // Poisson-thinned sampling: draw candidate tuples at the
        // unconditional rate, keep the satisfied ones, dedup.
        let lambda = p_inc * n_tuples;
        let count = poisson_draw(lambda, rng);
        let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(count);
        for _ in 0..count {
            let vars = sample_distinct_tuple(n_vars, k, rng);
            for (b, &v) in buf.iter_mut().zip(&vars) {
                *b = sigma[v];
            }
            if predicate.eval(&buf) && seen.insert(vars.clone()) {
                clauses.push(Clause { vars, output: true });
            }
        }
    }
    Ok(CSPInstance { n_vars, predicate: predicate.clone(), sigma: Some(sigma), clauses })
}

fn iterate_distinct_tuples(
    n: usize,
    k: usize,
    tuple: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if tuple.len() == k {
        f(tuple);
        return;
    }
    for v in 0..n {
        if tuple.contains(&v) {
            continue;
        }
        tuple.push(v);
        iterate_distinct_tuples(n, k, tuple, f);
        tuple.pop();
    }
}

fn sample_distinct_tuple(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut vars = Vec::with_capacity(k);
    while vars.len() < k {
        let v = rng.gen_range(0..n);
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    vars
}

/// Poisson draw by unit-exponential arrivals; O(lambda).
fn poisson_draw(lambda: f64, rng: &mut impl Rng) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let mut acc = 0.0f64;
    let mut count = 0usize;
    loop {
        acc -= rng.gen::<f64>().max(f64::MIN_POSITIVE).ln();
        if acc >= lambda {
            return count;
        }
        count += 1;
    }
}

/// Random acyclic planted instance: a clause is added only when its variables
/// lie in pairwise-distinct connected components, so the factor graph stays a
/// forest. Used for exactness checks against enumeration.
pub fn plant_tree_csp(
    n_vars: usize,
    predicate: &Predicate,
    n_clauses: usize,
    rng: &RngHandle,
) -> Result<CSPInstance> {
    let k = predicate.arity();
    if n_clauses * (k - 1) >= n_vars {
        return Err(Error::InvalidSpec("too many clauses for a forest".into()));
    }
    let mut r = rng.rng();
    let m = predicate.vocab();
    let sigma: Vec<u32> = (0..n_vars).map(|_| r.gen_range(1..=m)).collect();
    let mut parent: Vec<usize> = (0..n_vars).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut clauses = Vec::new();
    let mut buf = vec![0u32; k];
    let mut attempts = 0usize;
    while clauses.len() < n_clauses && attempts < 10_000 * n_clauses.max(1) {
        attempts += 1;
        let vars = sample_distinct_tuple(n_vars, k, &mut r);
        let roots: Vec<usize> = vars.iter().map(|&v| find(&mut parent, v)).collect();
        if roots.iter().collect::<HashSet<_>>().len() != k {
            continue;
        }
        for (b, &v) in buf.iter_mut().zip(&vars) {
            *b = sigma[v];
        }
        if !predicate.eval(&buf) {
            continue;
        }
        for &root in &roots[1..] {
            parent[root] = roots[0];
        }
        clauses.push(Clause { vars, output: true });
    }
    if clauses.len() < n_clauses {
        return Err(Error::InvalidSpec("could not place the requested clauses".into()));
    }
    Ok(CSPInstance { n_vars, predicate: predicate.clone(), sigma: Some(sigma), clauses })
}

/// Paramagnetic-fixed-point check: the count of satisfying completions
/// `sum_{others} g(others cup_slot c)` must not depend on the pinned slot or
/// its value.
pub fn check_paramagnetic(predicate: &Predicate) -> bool {
    let k = predicate.arity();
    let m = predicate.vocab();
    let mut reference: Option<usize> = None;
    let mut vals = vec![1u32; k];
    for slot in 0..k {
        for c in 1..=m {
            let mut count = 0usize;
            let others = (m as usize).pow((k - 1) as u32);
            let mut digits = vec![0u32; k - 1];
            for _ in 0..others {
                let mut d = 0;
                for (j, val) in vals.iter_mut().enumerate() {
                    if j == slot {
                        *val = c;
                    } else {
                        *val = digits[d] + 1;
                        d += 1;
                    }
                }
                if predicate.eval(&vals) {
                    count += 1;
                }
                for digit in digits.iter_mut() {
                    *digit += 1;
                    if (*digit as u32) < m {
                        break;
                    }
                    *digit = 0;
                }
            }
            match reference {
                None => reference = Some(count),
                Some(ref_count) if ref_count != count => return false,
                _ => {}
            }
        }
    }
    true
}

/// Directed message tables on the factor graph. Messages are indexed by
/// (clause, slot) pairs: `var_to_clause` row `c * k + a` is the message from
/// variable `clauses[c].vars[a]` into clause `c`, `clause_to_var` the
/// reverse. Every row is a distribution over `{1..m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BPState {
    pub var_to_clause: Vec<f64>,
    pub clause_to_var: Vec<f64>,
    pub vocab: u32,
    pub iteration: usize,
}

/// How `bp_run` seeds the variable-to-clause messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpInit {
    /// Exactly uniform rows.
    Paramagnetic,
    /// Uniform rows nudged by `delta`-scaled noise.
    ParamagneticPerturbed { delta: f64 },
    /// Rows drawn from a flat Dirichlet.
    Random,
    /// `(1 - delta) * point mass at sigma + delta * uniform`; requires a
    /// planted assignment.
    Planted { delta: f64 },
}

/// Precomputed adjacency for repeated sweeps over one instance.
pub struct BPRunner<'a> {
    inst: &'a CSPInstance,
    /// Incident edge lists per variable; edge = clause_idx * k + slot.
    incident: Vec<Vec<usize>>,
    n_edges: usize,
}

impl<'a> BPRunner<'a> {
    pub fn new(inst: &'a CSPInstance) -> Self {
        let k = inst.predicate.arity();
        let mut incident = vec![Vec::new(); inst.n_vars];
        for (c, clause) in inst.clauses.iter().enumerate() {
            for (a, &v) in clause.vars.iter().enumerate() {
                incident[v].push(c * k + a);
            }
        }
        let n_edges = inst.clauses.len() * k;
        Self { inst, incident, n_edges }
    }

    pub fn init_state(&self, init: BpInit, rng: &mut impl Rng) -> Result<BPState> {
        let m = self.inst.predicate.vocab() as usize;
        let k = self.inst.predicate.arity();
        let uniform = 1.0 / m as f64;
        let mut v2c = vec![uniform; self.n_edges * m];
        match init {
            BpInit::Paramagnetic => {}
            BpInit::ParamagneticPerturbed { delta } => {
                for row in v2c.chunks_mut(m) {
                    let mut total = 0.0;
                    for x in row.iter_mut() {
                        *x = (uniform + delta * (rng.gen::<f64>() - 0.5)).max(1e-12);
                        total += *x;
                    }
                    for x in row.iter_mut() {
                        *x /= total;
                    }
                }
            }
            BpInit::Random => {
                for row in v2c.chunks_mut(m) {
                    let mut total = 0.0;
                    for x in row.iter_mut() {
                        *x = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln();
                        total += *x;
                    }
                    for x in row.iter_mut() {
                        *x /= total;
                    }
                }
            }
            BpInit::Planted { delta } => {
                let sigma = self
                    .inst
                    .sigma
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("planted init needs sigma".into()))?;
                for (c, clause) in self.inst.clauses.iter().enumerate() {
                    for (a, &v) in clause.vars.iter().enumerate() {
                        let row = &mut v2c[(c * k + a) * m..(c * k + a + 1) * m];
                        for (col, x) in row.iter_mut().enumerate() {
                            let point = if col as u32 + 1 == sigma[v] { 1.0 } else { 0.0 };
                            *x = (1.0 - delta) * point + delta * uniform;
                        }
                    }
                }
            }
        }
        Ok(BPState {
            var_to_clause: v2c,
            clause_to_var: vec![uniform; self.n_edges * m],
            vocab: self.inst.predicate.vocab(),
            iteration: 0,
        })
    }

    /// One damped sweep: clause-to-variable updates from the current variable
    /// messages, then variable-to-clause updates from the fresh clause
    /// messages. Returns the new state and the largest entrywise change.
    pub fn step(&self, state: &BPState, damping: f64) -> Result<(BPState, f64)> {
        let m = self.inst.predicate.vocab() as usize;
        let k = self.inst.predicate.arity();
        let mut delta_max = 0.0f64;

        // Clause phase.
        let mut c2v = vec![0.0f64; self.n_edges * m];
        let mut vals = vec![0u32; k];
        let mut digits = vec![0usize; k.saturating_sub(1)];
        let mut acc = vec![0.0f64; m];
        for (c, clause) in self.inst.clauses.iter().enumerate() {
            for a in 0..k {
                let row_out = c * k + a;
                acc.fill(0.0);
                let others = m.pow((k - 1) as u32);
                digits.fill(0);
                for _ in 0..others {
                    // Product of incoming messages at the other slots.
                    let mut w = 1.0f64;
                    let mut d = 0;
                    for b in 0..k {
                        if b == a {
                            continue;
                        }
                        w *= state.var_to_clause[(c * k + b) * m + digits[d]];
                        d += 1;
                    }
                    if w > 0.0 {
                        let mut d2 = 0;
                        for b in 0..k {
                            if b != a {
                                vals[b] = digits[d2] as u32 + 1;
                                d2 += 1;
                            }
                        }
                        for (col, slot_acc) in acc.iter_mut().enumerate() {
                            vals[a] = col as u32 + 1;
                            if self.inst.predicate.eval(&vals) == clause.output {
                                *slot_acc += w;
                            }
                        }
                    }
                    for digit in digits.iter_mut() {
                        *digit += 1;
                        if *digit < m {
                            break;
                        }
                        *digit = 0;
                    }
                }
                let total: f64 = acc.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Degenerate(format!(
                        "clause {c} slot {a}: outgoing message has zero mass"
                    )));
                }
                for (col, &x) in acc.iter().enumerate() {
                    let fresh = x / total;
                    let old = state.clause_to_var[row_out * m + col];
                    let damped = (1.0 - damping) * fresh + damping * old;
                    delta_max = delta_max.max((damped - old).abs());
                    c2v[row_out * m + col] = damped;
                }
            }
        }

        // Variable phase, products in log space with explicit zero tracking.
        let mut v2c = vec![0.0f64; self.n_edges * m];
        let mut log_sum = vec![0.0f64; m];
        let mut zero_count = vec![0u32; m];
        let mut row = vec![0.0f64; m];
        for edges in self.incident.iter() {
            if edges.is_empty() {
                continue;
            }
            log_sum.fill(0.0);
            zero_count.fill(0);
            for &e in edges {
                for col in 0..m {
                    let x = c2v[e * m + col];
                    if x > 0.0 {
                        log_sum[col] += x.ln();
                    } else {
                        zero_count[col] += 1;
                    }
                }
            }
            for &e in edges {
                let mut max_log = f64::NEG_INFINITY;
                for col in 0..m {
                    let x = c2v[e * m + col];
                    let zeros_excl = zero_count[col] - u32::from(x <= 0.0);
                    if zeros_excl > 0 {
                        row[col] = f64::NEG_INFINITY;
                    } else {
                        let log_excl = if x > 0.0 { log_sum[col] - x.ln() } else { log_sum[col] };
                        row[col] = log_excl;
                        max_log = max_log.max(log_excl);
                    }
                }
                if max_log == f64::NEG_INFINITY {
                    return Err(Error::Degenerate(format!(
                        "variable message on edge {e}: all colors excluded"
                    )));
                }
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = if *x == f64::NEG_INFINITY { 0.0 } else { (*x - max_log).exp() };
                    total += *x;
                }
                for (col, x) in row.iter().enumerate() {
                    let fresh = x / total;
                    let old = state.var_to_clause[e * m + col];
                    let damped = (1.0 - damping) * fresh + damping * old;
                    delta_max = delta_max.max((damped - old).abs());
                    v2c[e * m + col] = damped;
                }
            }
        }

        Ok((
            BPState {
                var_to_clause: v2c,
                clause_to_var: c2v,
                vocab: state.vocab,
                iteration: state.iteration + 1,
            },
            delta_max,
        ))
    }

    /// Per-variable marginals: normalized products of incoming
    /// clause-to-variable messages; uniform for isolated variables.
    pub fn marginals(&self, state: &BPState) -> Result<MarginalTable> {
        let m = self.inst.predicate.vocab() as usize;
        let mut table = MarginalTable::zeros(self.inst.n_vars, self.inst.predicate.vocab());
        let mut row = vec![0.0f64; m];
        for (v, edges) in self.incident.iter().enumerate() {
            if edges.is_empty() {
                row.fill(1.0 / m as f64);
                table.set_row(v, &row);
                continue;
            }
            let mut log_sum = vec![0.0f64; m];
            let mut zero = vec![false; m];
            for &e in edges {
                for col in 0..m {
                    let x = state.clause_to_var[e * m + col];
                    if x > 0.0 {
                        log_sum[col] += x.ln();
                    } else {
                        zero[col] = true;
                    }
                }
            }
            let max_log = log_sum
                .iter()
                .zip(&zero)
                .filter(|(_, &z)| !z)
                .map(|(&l, _)| l)
                .fold(f64::NEG_INFINITY, f64::max);
            if max_log == f64::NEG_INFINITY {
                return Err(Error::Degenerate(format!("variable {v}: zero marginal mass")));
            }
            let mut total = 0.0;
            for col in 0..m {
                row[col] = if zero[col] { 0.0 } else { (log_sum[col] - max_log).exp() };
                total += row[col];
            }
            for x in row.iter_mut() {
                *x /= total;
            }
            table.set_row(v, &row);
        }
        Ok(table)
    }
}

/// One synchronous damped sweep (clause phase then variable phase) as a free
/// function. For repeated sweeps prefer [`BPRunner`].
pub fn bp_step(inst: &CSPInstance, state: &BPState, damping: f64) -> Result<BPState> {
    Ok(BPRunner::new(inst).step(state, damping)?.0)
}

/// Per-variable marginals for `state`.
pub fn bp_marginals(inst: &CSPInstance, state: &BPState) -> Result<MarginalTable> {
    BPRunner::new(inst).marginals(state)
}

/// Iterates damped sweeps until the largest message change drops below `tol`
/// (converged) or `max_iters` is exhausted (not converged; state still
/// returned).
pub fn bp_run(
    inst: &CSPInstance,
    init: BpInit,
    max_iters: usize,
    tol: f64,
    damping: f64,
    rng: &RngHandle,
) -> Result<(BPState, bool)> {
    let runner = BPRunner::new(inst);
    let mut r = rng.rng();
    let mut state = runner.init_state(init, &mut r)?;
    for _ in 0..max_iters {
        let (next, delta) = runner.step(&state, damping)?;
        state = next;
        if delta < tol {
            return Ok((state, true));
        }
    }
    Ok((state, false))
}

/// Default sweep budget, tolerance, damping, and planted-init perturbation.
/// Damping 0.5 is load-bearing: synchronous sweeps on coloring-style
/// predicates 2-cycle at light damping (the message change plateaus at 0.5
/// forever), while 0.5 reaches the informative fixed point from a random
/// start in about a hundred sweeps.
pub const BP_MAX_ITERS: usize = 2000;
pub const BP_TOL: f64 = 1e-7;
pub const BP_DAMPING: f64 = 0.5;
pub const PLANTED_INIT_DELTA: f64 = 0.05;

/// Argmax rounding of marginals to an assignment (ties to the lowest color).
pub fn round_marginals(table: &MarginalTable) -> Vec<u32> {
    (0..table.len())
        .map(|v| {
            let row = table.row(v);
            let mut best = 0usize;
            for (col, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = col;
                }
            }
            best as u32 + 1
        })
        .collect()
}

/// Overlap between an estimate and the ground truth: the agreement fraction
/// maximized over global relabelings of the color alphabet (brute force over
/// `m!`, so `m <= 8`).
pub fn overlap(sigma: &[u32], sigma_hat: &[u32], vocab: u32) -> f64 {
    assert_eq!(sigma.len(), sigma_hat.len());
    let m = vocab as usize;
    assert!(m <= 8, "brute-force relabeling needs m <= 8");
    let n = sigma.len();
    let mut confusion = vec![0u64; m * m];
    for (&a, &b) in sigma_hat.iter().zip(sigma) {
        confusion[(a - 1) as usize * m + (b - 1) as usize] += 1;
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = 0u64;
    loop {
        let agree: u64 = (0..m).map(|a| confusion[a * m + perm[a]]).sum();
        best = best.max(agree);
        if !next_perm(&mut perm) {
            break;
        }
    }
    best as f64 / n as f64
}

fn next_perm(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// One cell of a threshold scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub avg_degree: f64,
    pub init: String,
    pub overlap_mean: f64,
    pub overlap_stderr: f64,
    pub converged_fraction: f64,
    pub mean_iters: f64,
}

/// Scan settings; defaults follow the module constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    pub planted_delta: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            max_iters: BP_MAX_ITERS,
            tol: BP_TOL,
            damping: BP_DAMPING,
            planted_delta: PLANTED_INIT_DELTA,
        }
    }
}

/// For each degree in `grid`, plants `reps` instances and runs BP from both
/// the random and the planted initialization, reporting argmax-rounded
/// overlaps against the hidden assignment. Cells run in parallel; every
/// `(degree, rep)` pair owns an RNG substream, so results are independent of
/// thread scheduling.
pub fn threshold_scan(
    predicate: &Predicate,
    grid: &[f64],
    n_vars: usize,
    reps: usize,
    settings: &ScanSettings,
    rng: &RngHandle,
) -> Result<Vec<ScanRow>> {
    if !check_paramagnetic(predicate) {
        return Err(Error::InvalidSpec("threshold scan requires a paramagnetic predicate".into()));
    }
    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|d| (0..reps).map(move |rep| (d, rep)))
        .collect();
    let results: Vec<(usize, [(f64, bool, usize); 2])> =
        crate::par::try_map_indexed(cells.len(), |cell_idx| {
            let (d_idx, rep) = cells[cell_idx];
            let cell_rng = rng.substream((d_idx * reps + rep) as u64);
            let inst = plant_csp(n_vars, predicate, grid[d_idx], &cell_rng)?;
            let sigma = inst.sigma.clone().expect("planted");
            let mut out = [(0.0, false, 0usize); 2];
            for (slot, init) in
                [BpInit::Random, BpInit::Planted { delta: settings.planted_delta }]
                    .into_iter()
                    .enumerate()
            {
                let (state, converged) = bp_run(
                    &inst,
                    init,
                    settings.max_iters,
                    settings.tol,
                    settings.damping,
                    &cell_rng.substream(1000 + slot as u64),
                )?;
                let marg = bp_marginals(&inst, &state)?;
                let rounded = round_marginals(&marg);
                out[slot] =
                    (overlap(&sigma, &rounded, predicate.vocab()), converged, state.iteration);
            }
            Ok((d_idx, out))
        })?;

    let mut rows = Vec::new();
    for (d_idx, degree) in grid.iter().enumerate() {
        for (slot, name) in ["random", "planted"].iter().enumerate() {
            let mut stats = RunningStats::default();
            let mut conv = 0usize;
            let mut iters = 0usize;
            let mut count = 0usize;
            for (idx, out) in &results {
                if *idx == d_idx {
                    let (ov, converged, it) = out[slot];
                    stats.push(ov);
                    conv += converged as usize;
                    iters += it;
                    count += 1;
                }
            }
            rows.push(ScanRow {
                avg_degree: *degree,
                init: name.to_string(),
                overlap_mean: stats.mean(),
                overlap_stderr: stats.stderr(),
                converged_fraction: conv as f64 / count as f64,
                mean_iters: iters as f64 / count as f64,
            });
        }
    }
    Ok(rows)
}

/// Reduces a masked NAE-observation sequence to a CSP over the latents.
/// Requires every latent masked; every unmasked observation contributes a
/// clause — satisfied outputs as `output = true`, falsified outputs as
/// `output = false` (an all-equal constraint) — so all unmasked evidence is
/// honored.
pub fn mask_to_csp(spec: &crate::distrib::NaeSatSpec, observed: &TokenSeq) -> Result<CSPInstance> {
    let n = spec.n_latent;
    if observed.len() != n + spec.triples.len() {
        return Err(Error::InvalidSpec("sequence length does not match the spec".into()));
    }
    for pos in 0..n {
        if !observed.is_masked(pos) {
            return Err(Error::InvalidSpec(format!(
                "latent position {pos} is unmasked; the reduction conditions on fully masked latents"
            )));
        }
    }
    let mut clauses = Vec::new();
    for (j, triple) in spec.triples.iter().enumerate() {
        match observed.get(n + j) {
            0 => {}
            tok => clauses.push(Clause { vars: triple.to_vec(), output: tok == 2 }),
        }
    }
    Ok(CSPInstance { n_vars: n, predicate: Predicate::nae(spec.vocab, 3), sigma: None, clauses })
}

/// Exact posterior marginals of a CSP by enumeration over `m^N` assignments
/// (uniform prior, hard clause constraints). The reference oracle for BP
/// tree-exactness.
pub fn enumerate_csp_marginals(inst: &CSPInstance, budget: f64) -> Result<Vec<Vec<f64>>> {
    let m = inst.predicate.vocab() as usize;
    let total = (m as f64).powi(inst.n_vars as i32);
    let required = total * inst.clauses.len().max(1) as f64;
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let mut counts = vec![vec![0.0f64; m]; inst.n_vars];
    let mut consistent_total = 0.0f64;
    let mut assignment = vec![1u32; inst.n_vars];
    let mut buf = vec![0u32; inst.predicate.arity()];
    for _ in 0..total as u64 {
        let ok = inst.clauses.iter().all(|clause| {
            for (b, &v) in buf.iter_mut().zip(&clause.vars) {
                *b = assignment[v];
            }
            inst.predicate.eval(&buf) == clause.output
        });
        if ok {
            consistent_total += 1.0;
            for (v, &val) in assignment.iter().enumerate() {
                counts[v][(val - 1) as usize] += 1.0;
            }
        }
        for slot in assignment.iter_mut() {
            *slot += 1;
            if *slot <= m as u32 {
                break;
            }
            *slot = 1;
        }
    }
    if consistent_total == 0.0 {
        return Err(Error::Degenerate("no consistent assignment".into()));
    }
    for row in counts.iter_mut() {
        for x in row.iter_mut() {
            *x /= consistent_total;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nae_satisfaction_and_paramagnetic() {
        // Ternary NAE, k=3: each pinned (slot, color) leaves 9 completions of
        // which exactly the all-equal one fails.
        let pred = Predicate::nae(3, 3);
        assert!(check_paramagnetic(&pred));
        assert!((pred.satisfaction_probability() - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn coloring_and_constructed_predicates() {
        assert!(check_paramagnetic(&Predicate::inequality(2)));
        assert!(check_paramagnetic(&Predicate::inequality(5)));
        // Depends on the pinned value: not paramagnetic.
        let biased = Predicate::from_fn(2, 2, "first-is-one", |vals| vals[0] == 1);
        assert!(!check_paramagnetic(&biased));
    }

    #[test]
    fn planting_condition_holds() {
        let pred = Predicate::inequality(5);
        let inst = plant_csp(200, &pred, 12.0, &RngHandle::new(1, 0)).unwrap();
        inst.validate_planting().unwrap();
        let sigma = inst.sigma.as_ref().unwrap();
        for clause in &inst.clauses {
            assert_ne!(sigma[clause.vars[0]], sigma[clause.vars[1]]);
        }
    }

    #[test]
    fn clause_count_concentrates() {
        // Always-true predicate, k=2: expected clause count D*N/4.
        let pred = Predicate::always_true(3, 2);
        let n = 400usize;
        let d = 8.0;
        let expect = expected_clauses(n, 2, d);
        let sigma_bound = expect.sqrt() * 3.0;
        let mut within = 0;
        for rep in 0..5u64 {
            let inst = plant_csp(n, &pred, d, &RngHandle::new(2, rep)).unwrap();
            if (inst.clauses.len() as f64 - expect).abs() < sigma_bound {
                within += 1;
            }
        }
        assert!(within >= 4, "clause counts drifted from expectation");
    }

    #[test]
    fn constant_sigma_nae_has_no_clauses() {
        let pred = Predicate::nae(3, 3);
        let mut r = RngHandle::new(3, 0).rng();
        let inst = plant_csp_with_sigma(30, &pred, 30.0, vec![2; 30], &mut r).unwrap();
        assert!(inst.clauses.is_empty());
    }

    #[test]
    fn never_satisfied_predicate_rejected() {
        let pred = Predicate::from_fn(2, 2, "false", |_| false);
        assert!(matches!(
            plant_csp(10, &pred, 2.0, &RngHandle::new(0, 0)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn paramagnetic_init_is_fixed_point() {
        let pred = Predicate::nae(3, 3);
        let inst = plant_csp(60, &pred, 60.0, &RngHandle::new(4, 0)).unwrap();
        let runner = BPRunner::new(&inst);
        let mut r = RngHandle::new(4, 1).rng();
        let state = runner.init_state(BpInit::Paramagnetic, &mut r).unwrap();
        let (next, delta) = runner.step(&state, 0.0).unwrap();
        assert!(delta < 1e-12, "paramagnetic point must be fixed, moved by {delta}");
        let marg = runner.marginals(&next).unwrap();
        for v in 0..inst.n_vars {
            for col in 0..3 {
                assert!((marg.row(v)[col] - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        let (_, converged) =
            bp_run(&inst, BpInit::Paramagnetic, 5, 1e-9, 0.0, &RngHandle::new(4, 2)).unwrap();
        assert!(converged);
    }

    #[test]
    fn single_clause_pinned_neighbor() {
        // Inequality clause (0, 1) over m=3 with variable 0 pinned to color
        // 1: the clause message into variable 1 is uniform over {2, 3}.
        let pred = Predicate::inequality(3);
        let inst = CSPInstance {
            n_vars: 2,
            predicate: pred,
            sigma: None,
            clauses: vec![Clause { vars: vec![0, 1], output: true }],
        };
        let runner = BPRunner::new(&inst);
        let mut r = RngHandle::new(5, 0).rng();
        let mut state = runner.init_state(BpInit::Paramagnetic, &mut r).unwrap();
        state.var_to_clause[0..3].copy_from_slice(&[1.0, 0.0, 0.0]);
        let (next, _) = runner.step(&state, 0.0).unwrap();
        let row = &next.clause_to_var[3..6]; // edge (clause 0, slot 1)
        assert!(row[0].abs() < 1e-12);
        assert!((row[1] - 0.5).abs() < 1e-12);
        assert!((row[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn equality_constraint_via_false_output() {
        // NAE with output=false is an all-equal constraint.
        let pred = Predicate::nae(2, 3);
        let inst = CSPInstance {
            n_vars: 3,
            predicate: pred,
            sigma: None,
            clauses: vec![Clause { vars: vec![0, 1, 2], output: false }],
        };
        let runner = BPRunner::new(&inst);
        let mut r = RngHandle::new(6, 0).rng();
        let mut state = runner.init_state(BpInit::Paramagnetic, &mut r).unwrap();
        state.var_to_clause[0..2].copy_from_slice(&[1.0, 0.0]); // var 0 pinned to 1
        let (next, _) = runner.step(&state, 0.0).unwrap();
        let row = &next.clause_to_var[2..4]; // message into var 1
        assert!((row[0] - 1.0).abs() < 1e-12, "all-equal must copy the pin");
    }

    #[test]
    fn isolated_variable_stays_uniform() {
        let pred = Predicate::inequality(4);
        let inst = CSPInstance {
            n_vars: 3,
            predicate: pred,
            sigma: None,
            clauses: vec![Clause { vars: vec![0, 1], output: true }],
        };
        let (state, converged) =
            bp_run(&inst, BpInit::Random, 50, 1e-10, 0.0, &RngHandle::new(7, 0)).unwrap();
        assert!(converged);
        let marg = bp_marginals(&inst, &state).unwrap();
        for col in 0..4 {
            assert!((marg.row(2)[col] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn conflicting_equality_pins_degenerate() {
        // One all-equal clause whose first two slots carry point masses on
        // different colors: no value of the third slot can satisfy it, so the
        // outgoing clause message normalizes to zero mass.
        let pred = Predicate::nae(2, 3);
        let inst = CSPInstance {
            n_vars: 3,
            predicate: pred,
            sigma: None,
            clauses: vec![Clause { vars: vec![0, 1, 2], output: false }],
        };
        let runner = BPRunner::new(&inst);
        let mut r = RngHandle::new(8, 0).rng();
        let mut state = runner.init_state(BpInit::Paramagnetic, &mut r).unwrap();
        state.var_to_clause[0..2].copy_from_slice(&[1.0, 0.0]); // slot 0: color 1
        state.var_to_clause[2..4].copy_from_slice(&[0.0, 1.0]); // slot 1: color 2
        match runner.step(&state, 0.0) {
            Err(Error::Degenerate(msg)) => assert!(msg.contains("clause")),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn messages_stay_normalized_over_sweeps() {
        let pred = Predicate::nae(3, 3);
        let inst = plant_csp(80, &pred, 120.0, &RngHandle::new(9, 0)).unwrap();
        let runner = BPRunner::new(&inst);
        let mut r = RngHandle::new(9, 1).rng();
        let mut state = runner.init_state(BpInit::Random, &mut r).unwrap();
        for _ in 0..50 {
            state = runner.step(&state, 0.2).unwrap().0;
        }
        for row in state.var_to_clause.chunks(3).chain(state.clause_to_var.chunks(3)) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_hand_values() {
        assert_eq!(overlap(&[1, 2, 1], &[1, 2, 1], 2), 1.0);
        // Global color swap still scores 1.
        assert_eq!(overlap(&[1, 2, 1], &[2, 1, 2], 2), 1.0);
        // Both relabelings of (1,2,1,2) agree with (1,1,2,2) on half.
        assert_eq!(overlap(&[1, 1, 2, 2], &[1, 2, 1, 2], 2), 0.5);
    }

    #[test]
    fn tree_instances_match_enumeration() {
        for rep in 0..6u64 {
            let pred =
                if rep % 2 == 0 { Predicate::nae(3, 3) } else { Predicate::inequality(3) };
            let inst = plant_tree_csp(9, &pred, 3, &RngHandle::new(10, rep)).unwrap();
            inst.validate_planting().unwrap();
            let (state, converged) =
                bp_run(&inst, BpInit::Random, 500, 1e-12, 0.0, &RngHandle::new(11, rep)).unwrap();
            assert!(converged, "BP on a forest must converge");
            let marg = bp_marginals(&inst, &state).unwrap();
            let exact = enumerate_csp_marginals(&inst, 1e8).unwrap();
            for v in 0..inst.n_vars {
                for col in 0..3 {
                    assert!(
                        (marg.row(v)[col] - exact[v][col]).abs() < 1e-8,
                        "rep={rep} v={v} col={col}: bp={} exact={}",
                        marg.row(v)[col],
                        exact[v][col]
                    );
                }
            }
        }
    }

    #[test]
    fn mask_to_csp_reduction() {
        let spec =
            crate::distrib::NaeSatSpec { n_latent: 3, triples: vec![[0, 1, 2], [0, 2, 1]], vocab: 3 };
        // All latents masked, first observation unmasked as "satisfied".
        let x = TokenSeq::new(vec![0, 0, 0, 2, 0], 3).unwrap();
        let inst = mask_to_csp(&spec, &x).unwrap();
        assert_eq!(inst.clauses.len(), 1);
        assert!(inst.clauses[0].output);
        // BP on the single-clause instance agrees with the enumeration
        // posterior (uniform by symmetry).
        let (state, _) =
            bp_run(&inst, BpInit::Random, 200, 1e-10, 0.0, &RngHandle::new(12, 0)).unwrap();
        let marg = bp_marginals(&inst, &state).unwrap();
        for v in 0..3 {
            for col in 0..3 {
                assert!((marg.row(v)[col] - 1.0 / 3.0).abs() < 1e-8);
            }
        }
        // Falsified observation becomes an all-equal constraint.
        let x = TokenSeq::new(vec![0, 0, 0, 1, 1], 3).unwrap();
        let inst = mask_to_csp(&spec, &x).unwrap();
        assert_eq!(inst.clauses.len(), 2);
        assert!(!inst.clauses[0].output);
        // No unmasked observations: no clauses.
        let x = TokenSeq::all_mask(5, 3);
        assert!(mask_to_csp(&spec, &x).unwrap().clauses.is_empty());
        // Partially masked latents are rejected.
        let x = TokenSeq::new(vec![1, 0, 0, 2, 0], 3).unwrap();
        assert!(mask_to_csp(&spec, &x).is_err());
    }

    #[test]
    fn clause_text_roundtrip() {
        let pred = Predicate::nae(3, 3);
        let inst = plant_csp(20, &pred, 12.0, &RngHandle::new(13, 0)).unwrap();
        let text = inst.to_clause_text();
        let back = CSPInstance::from_clause_text(20, Predicate::nae(3, 3), &text).unwrap();
        assert_eq!(inst.clauses, back.clauses);
    }

    #[test]
    fn far_subcritical_coloring_is_uninformative() {
        // Planted 5-coloring at D=4: far below condensation, both inits land
        // near the 1/5 baseline.
        let pred = Predicate::inequality(5);
        let rows = threshold_scan(
            &pred,
            &[4.0],
            400,
            3,
            &ScanSettings { max_iters: 300, ..Default::default() },
            &RngHandle::new(14, 0),
        )
        .unwrap();
        for row in rows {
            assert!(
                (row.overlap_mean - 0.2).abs() < 0.1,
                "init={} overlap={}",
                row.init,
                row.overlap_mean
            );
        }
    }

    #[test]
    fn scan_is_deterministic() {
        let pred = Predicate::inequality(3);
        let settings = ScanSettings { max_iters: 100, ..Default::default() };
        let a =
            threshold_scan(&pred, &[6.0, 10.0], 120, 2, &settings, &RngHandle::new(15, 0)).unwrap();
        let b =
            threshold_scan(&pred, &[6.0, 10.0], 120, 2, &settings, &RngHandle::new(15, 0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.overlap_mean, y.overlap_mean);
            assert_eq!(x.mean_iters, y.mean_iters);
        }
    }
}
