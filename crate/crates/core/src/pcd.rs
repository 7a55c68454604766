//! Persistent-pool stochastic solver: Gibbs sweeps over the pool via the
//! factored conditionals, pool-estimated expectations, Adam updates on λ, and
//! the windowed adaptive stopping rule.
//!
//! The pool persists across parameter updates and is never reinitialized.
//! Neither |X| nor the partition function is ever touched, which is the whole
//! point: the solver runs on tuple spaces far beyond any enumeration budget.

use std::time::Instant;

use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::model::{build_attr_lookup, AttrLookup, ConstraintSet, LambdaVector, LookupEntry};
use crate::rng::{next_unit_f64, permutation, substream, tag};
use crate::scalar::{s, s_usize, softmax_in_place, Scalar};

/// The persistent Gibbs state: an N×K matrix of category indices plus the
/// count of sweeps applied so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    data: Vec<usize>,
    rows: usize,
    cols: usize,
    generation: u64,
}

impl Pool {
    /// Uniform initialization, one substream per row.
    pub fn new_uniform<S: Scalar>(cs: &ConstraintSet<S>, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("pool size must be at least 1"));
        }
        let k = cs.schema().attr_count();
        let dims = cs.schema().domain_sizes();
        let mut data = vec![0usize; n * k];
        for i in 0..n {
            let mut rng = substream(&[seed, tag::POOL_INIT, i as u64]);
            for (kk, &d) in dims.iter().enumerate() {
                data[i * k + kk] = draw_uniform(&mut rng, d);
            }
        }
        Ok(Pool {
            data,
            rows: n,
            cols: k,
            generation: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn view(&self) -> crate::metrics::PopulationView<'_> {
        crate::metrics::PopulationView::new(&self.data, self.rows, self.cols)
    }
}

#[inline]
fn draw_uniform(rng: &mut Xoshiro256PlusPlus, d: usize) -> usize {
    let v = (next_unit_f64(rng) * d as f64) as usize;
    v.min(d - 1)
}

#[inline]
fn draw_categorical<S: Scalar>(probs: &[S], u: S) -> usize {
    let mut acc = S::zero();
    for (v, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return v;
        }
    }
    probs.len() - 1
}

/// Precompiled lookup for the sweep inner loop: entries are grouped by their
/// context attributes and bucketed by context value, so a row visits only the
/// entries its context actually activates (plus one bucket lookup per group).
/// Within a bucket, entries keep ascending constraint order. Patterns wider
/// than arity 3 fall back to a spill list with full context matching.
struct SweepPlan {
    per_attr: Vec<AttrPlan>,
}

/// `(own value, λ index)` pair; the unit of energy accumulation.
type Contribution = (u32, u32);

struct AttrPlan {
    /// Entries with empty context: always fire.
    unary: Vec<Contribution>,
    ctx1: Vec<Ctx1Group>,
    ctx2: Vec<Ctx2Group>,
    wide: Vec<LookupEntry>,
}

/// Entries whose context is one attribute, bucketed by that attribute's value.
struct Ctx1Group {
    attr: u32,
    offsets: Vec<u32>,
    pairs: Vec<Contribution>,
}

/// Entries whose context is two attributes, bucketed by the joint cell.
struct Ctx2Group {
    attr_a: u32,
    attr_b: u32,
    d_b: u32,
    offsets: Vec<u32>,
    pairs: Vec<Contribution>,
}

impl SweepPlan {
    fn build(lookup: &AttrLookup, domain_sizes: &[usize]) -> Self {
        let per_attr = (0..lookup.attr_count())
            .map(|k| {
                let mut unary = Vec::new();
                let mut by_ctx1: std::collections::BTreeMap<u32, Vec<(u32, Contribution)>> =
                    std::collections::BTreeMap::new();
                let mut by_ctx2: std::collections::BTreeMap<(u32, u32), Vec<(u32, Contribution)>> =
                    std::collections::BTreeMap::new();
                let mut wide = Vec::new();
                for e in lookup.entries(k) {
                    let contribution = (e.own_value as u32, e.constraint as u32);
                    match e.context_attrs.len() {
                        0 => unary.push(contribution),
                        1 => by_ctx1
                            .entry(e.context_attrs[0] as u32)
                            .or_default()
                            .push((e.context_values[0] as u32, contribution)),
                        2 => {
                            let a = e.context_attrs[0] as u32;
                            let b = e.context_attrs[1] as u32;
                            let cell = e.context_values[0] as u32
                                * domain_sizes[b as usize] as u32
                                + e.context_values[1] as u32;
                            by_ctx2.entry((a, b)).or_default().push((cell, contribution));
                        }
                        _ => wide.push(e.clone()),
                    }
                }
                let ctx1 = by_ctx1
                    .into_iter()
                    .map(|(attr, entries)| {
                        let (offsets, pairs) =
                            bucketize(entries, domain_sizes[attr as usize]);
                        Ctx1Group {
                            attr,
                            offsets,
                            pairs,
                        }
                    })
                    .collect();
                let ctx2 = by_ctx2
                    .into_iter()
                    .map(|((attr_a, attr_b), entries)| {
                        let cells =
                            domain_sizes[attr_a as usize] * domain_sizes[attr_b as usize];
                        let (offsets, pairs) = bucketize(entries, cells);
                        Ctx2Group {
                            attr_a,
                            attr_b,
                            d_b: domain_sizes[attr_b as usize] as u32,
                            offsets,
                            pairs,
                        }
                    })
                    .collect();
                AttrPlan {
                    unary,
                    ctx1,
                    ctx2,
                    wide,
                }
            })
            .collect();
        SweepPlan { per_attr }
    }
}

/// Stable-bucket layout: `pairs[offsets[cell]..offsets[cell+1]]` holds the
/// contributions firing for that context cell, in insertion (ascending j)
/// order.
fn bucketize(entries: Vec<(u32, Contribution)>, cells: usize) -> (Vec<u32>, Vec<Contribution>) {
    let mut counts = vec![0u32; cells + 1];
    for &(cell, _) in &entries {
        counts[cell as usize + 1] += 1;
    }
    for i in 0..cells {
        counts[i + 1] += counts[i];
    }
    let offsets = counts.clone();
    let mut cursor = offsets.clone();
    let mut pairs = vec![(0u32, 0u32); entries.len()];
    for (cell, contribution) in entries {
        let at = cursor[cell as usize];
        pairs[at as usize] = contribution;
        cursor[cell as usize] += 1;
    }
    (offsets, pairs)
}

#[inline]
fn plan_energies<S: Scalar>(energies: &mut [S], row: &[usize], plan: &AttrPlan, lambda: &[S]) {
    for &(own, lam_idx) in &plan.unary {
        energies[own as usize] += lambda[lam_idx as usize];
    }
    for g in &plan.ctx1 {
        let v = row[g.attr as usize];
        let lo = g.offsets[v] as usize;
        let hi = g.offsets[v + 1] as usize;
        for &(own, lam_idx) in &g.pairs[lo..hi] {
            energies[own as usize] += lambda[lam_idx as usize];
        }
    }
    for g in &plan.ctx2 {
        let cell = row[g.attr_a as usize] * g.d_b as usize + row[g.attr_b as usize];
        let lo = g.offsets[cell] as usize;
        let hi = g.offsets[cell + 1] as usize;
        for &(own, lam_idx) in &g.pairs[lo..hi] {
            energies[own as usize] += lambda[lam_idx as usize];
        }
    }
    for e in &plan.wide {
        if e.context_matches(row) {
            energies[e.own_value] += lambda[e.constraint];
        }
    }
    softmax_in_place(energies);
}

/// Accumulate conditional energies for attribute `attr` of one row into
/// `energies` (length d_k, pre-zeroed), then softmax-normalize in place.
#[inline]
fn conditional_into<S: Scalar>(
    energies: &mut [S],
    row: &[usize],
    entries: &[LookupEntry],
    lambda: &LambdaVector<S>,
) {
    for e in entries {
        if e.context_matches(row) {
            energies[e.own_value] += lambda.as_slice()[e.constraint];
        }
    }
    softmax_in_place(energies);
}

/// The conditional distribution of attribute `attr` given the rest of the
/// tuple: softmax over summed λ of context-consistent constraints. Agrees
/// with the brute-force enumeration conditional to machine precision.
pub fn gibbs_conditional<S: Scalar>(
    context: &[usize],
    attr: usize,
    cs: &ConstraintSet<S>,
    lookup: &AttrLookup,
    lambda: &LambdaVector<S>,
) -> Result<Vec<S>> {
    cs.schema().check_tuple(context)?;
    if attr >= cs.schema().attr_count() {
        return Err(Error::invalid("attribute index out of range"));
    }
    if lambda.len() != cs.len() {
        return Err(Error::invalid("lambda length mismatch"));
    }
    let mut energies = vec![S::zero(); cs.schema().domain_size(attr)];
    conditional_into(&mut energies, context, lookup.entries(attr), lambda);
    Ok(energies)
}

/// One full Gibbs sweep: every attribute, in a freshly drawn permutation, has
/// all N rows resampled from the exact conditional. Per-row randomness comes
/// from substreams keyed by (seed, row, generation), so results do not depend
/// on processing order.
pub fn gibbs_sweep<S: Scalar>(
    pool: &mut Pool,
    cs: &ConstraintSet<S>,
    lookup: &AttrLookup,
    lambda: &LambdaVector<S>,
    seed: u64,
) {
    let plan = SweepPlan::build(lookup, cs.schema().domain_sizes());
    let mut row_rngs = Vec::new();
    sweep_with_plan(pool, cs, &plan, lambda, seed, &mut row_rngs);
}

fn sweep_with_plan<S: Scalar>(
    pool: &mut Pool,
    cs: &ConstraintSet<S>,
    plan: &SweepPlan,
    lambda: &LambdaVector<S>,
    seed: u64,
    row_rngs: &mut Vec<Xoshiro256PlusPlus>,
) {
    let n = pool.rows;
    let k = pool.cols;
    let g = pool.generation;
    let mut perm_rng = substream(&[seed, tag::SWEEP_PERM, g]);
    let perm = permutation(&mut perm_rng, k);
    row_rngs.clear();
    row_rngs.extend((0..n).map(|i| substream(&[seed, tag::SWEEP_ROW, i as u64, g])));
    let d_max = cs.schema().domain_sizes().iter().copied().max().unwrap();
    let mut energies = vec![S::zero(); d_max];
    let lam = lambda.as_slice();

    for &attr in &perm {
        let d = cs.schema().domain_size(attr);
        let attr_plan = &plan.per_attr[attr];
        for i in 0..n {
            let base = i * k;
            let buf = &mut energies[..d];
            buf.fill(S::zero());
            plan_energies(buf, &pool.data[base..base + k], attr_plan, lam);
            let u = s::<S>(next_unit_f64(&mut row_rngs[i]));
            pool.data[base + attr] = draw_categorical(buf, u);
        }
    }
    pool.generation += 1;
}

/// Flattened pattern list for exact-count matching over pool rows.
struct CountPlan {
    narrow: Vec<NarrowPattern>,
    wide: Vec<(usize, Vec<usize>, Vec<usize>)>,
}

#[derive(Clone, Copy)]
struct NarrowPattern {
    constraint: u32,
    arity: u32,
    attrs: [u32; 3],
    vals: [u32; 3],
}

impl CountPlan {
    fn build<S: Scalar>(cs: &ConstraintSet<S>) -> Self {
        let mut narrow = Vec::new();
        let mut wide = Vec::new();
        for (j, c) in cs.constraints().iter().enumerate() {
            if c.arity() <= 3 {
                let mut attrs = [0u32; 3];
                let mut vals = [0u32; 3];
                for (slot, (&a, &v)) in c.pattern_attrs().iter().zip(c.pattern_values()).enumerate()
                {
                    attrs[slot] = a as u32;
                    vals[slot] = v as u32;
                }
                narrow.push(NarrowPattern {
                    constraint: j as u32,
                    arity: c.arity() as u32,
                    attrs,
                    vals,
                });
            } else {
                wide.push((j, c.pattern_attrs().to_vec(), c.pattern_values().to_vec()));
            }
        }
        CountPlan { narrow, wide }
    }

    fn count_into(&self, pool: &Pool, counts: &mut [usize]) {
        counts.fill(0);
        for i in 0..pool.rows {
            let row = pool.row(i);
            for p in &self.narrow {
                let matched = match p.arity {
                    1 => row[p.attrs[0] as usize] == p.vals[0] as usize,
                    2 => {
                        row[p.attrs[0] as usize] == p.vals[0] as usize
                            && row[p.attrs[1] as usize] == p.vals[1] as usize
                    }
                    _ => {
                        row[p.attrs[0] as usize] == p.vals[0] as usize
                            && row[p.attrs[1] as usize] == p.vals[1] as usize
                            && row[p.attrs[2] as usize] == p.vals[2] as usize
                    }
                };
                if matched {
                    counts[p.constraint as usize] += 1;
                }
            }
            for (j, attrs, vals) in &self.wide {
                if attrs.iter().zip(vals).all(|(&a, &v)| row[a] == v) {
                    counts[*j] += 1;
                }
            }
        }
    }
}

/// Pool-estimated expectations: α̂_j = (matching rows) / N, exact counts.
pub fn estimate_expectations<S: Scalar>(pool: &Pool, cs: &ConstraintSet<S>) -> Vec<S> {
    let plan = CountPlan::build(cs);
    let mut counts = vec![0usize; cs.len()];
    plan.count_into(pool, &mut counts);
    let n = s_usize::<S>(pool.rows);
    counts.into_iter().map(|c| s_usize::<S>(c) / n).collect()
}

/// Windowed adaptive stopping rule on the MRE history: stop when the relative
/// improvement of the window minimum falls below the threshold. Returns false
/// until 2W iterations are available.
pub fn should_stop<S: Scalar>(mre_history: &[S], window: usize, threshold: S) -> bool {
    let len = mre_history.len();
    if window == 0 || len < 2 * window {
        return false;
    }
    let older = &mre_history[len - 2 * window..len - window];
    let recent = &mre_history[len - window..];
    let min_older = older.iter().copied().fold(S::infinity(), S::min);
    let min_recent = recent.iter().copied().fold(S::infinity(), S::min);
    if min_older <= S::zero() {
        return true;
    }
    (min_older - min_recent) / min_older < threshold
}

/// Solver hyperparameters. Defaults follow the recommended settings: Adam
/// (0.9, 0.999, 1e-8), window 50, threshold 0.02, uniform pool with λ = 0.
#[derive(Debug, Clone)]
pub struct PcdConfig<S> {
    pub pool_size: usize,
    pub sweeps_per_step: usize,
    pub learning_rate: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
    pub max_iters: usize,
    pub window: usize,
    pub threshold: S,
    pub seed: u64,
    /// Targets at or below this floor are excluded from MRE.
    pub mre_floor: S,
    /// Record a λ snapshot every this many iterations (0 = never).
    pub snapshot_every: usize,
}

impl<S: Scalar> Default for PcdConfig<S> {
    fn default() -> Self {
        PcdConfig {
            pool_size: 25_000,
            sweeps_per_step: 5,
            learning_rate: s(0.01),
            beta1: s(0.9),
            beta2: s(0.999),
            epsilon: s(1e-8),
            max_iters: 1_000,
            window: 50,
            threshold: s(0.02),
            seed: 0,
            mre_floor: s(crate::metrics::MRE_FLOOR),
            snapshot_every: 0,
        }
    }
}

impl<S: Scalar> PcdConfig<S> {
    fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::invalid("pool_size must be at least 1"));
        }
        if self.sweeps_per_step == 0 {
            return Err(Error::invalid("sweeps_per_step must be at least 1"));
        }
        if self.learning_rate <= S::zero() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        if self.threshold <= S::zero() || self.threshold >= S::one() {
            return Err(Error::invalid("threshold must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    StoppingRule,
    MaxIterations,
}

/// Per-run record: MRE series, wall clock, optional λ snapshots, stop reason.
#[derive(Debug, Clone)]
pub struct PcdTrace<S> {
    pub mre: Vec<S>,
    pub wall_seconds: Vec<f64>,
    pub lambda_snapshots: Vec<(usize, LambdaVector<S>)>,
    pub stop_reason: StopReason,
}

/// Result of a completed fit.
#[derive(Debug, Clone)]
pub struct PcdFit<S> {
    pub lambda: LambdaVector<S>,
    pub pool: Pool,
    pub trace: PcdTrace<S>,
    pub iterations: usize,
    pub wall_seconds: f64,
}

/// Stepwise solver state. [`fit_pcd`] drives it to completion; tests and
/// experiments can interleave steps with λ edits.
pub struct PcdSolver<'a, S> {
    cs: &'a ConstraintSet<S>,
    targets: Vec<S>,
    plan: SweepPlan,
    count_plan: CountPlan,
    config: PcdConfig<S>,
    pool: Pool,
    lambda: LambdaVector<S>,
    adam_m: Vec<S>,
    adam_v: Vec<S>,
    beta1_pow: S,
    beta2_pow: S,
    iteration: usize,
    mre_history: Vec<S>,
    wall: Vec<f64>,
    snapshots: Vec<(usize, LambdaVector<S>)>,
    started: Instant,
    row_rngs: Vec<Xoshiro256PlusPlus>,
    counts: Vec<usize>,
}

impl<'a, S: Scalar> PcdSolver<'a, S> {
    pub fn new(cs: &'a ConstraintSet<S>, targets: &[S], config: PcdConfig<S>) -> Result<Self> {
        config.validate()?;
        if targets.len() != cs.len() {
            return Err(Error::invalid("targets length mismatch"));
        }
        let pool = Pool::new_uniform(cs, config.pool_size, config.seed)?;
        let m = cs.len();
        let lookup = build_attr_lookup(cs);
        Ok(PcdSolver {
            cs,
            targets: targets.to_vec(),
            plan: SweepPlan::build(&lookup, cs.schema().domain_sizes()),
            count_plan: CountPlan::build(cs),
            pool,
            lambda: LambdaVector::zeros(m),
            adam_m: vec![S::zero(); m],
            adam_v: vec![S::zero(); m],
            beta1_pow: S::one(),
            beta2_pow: S::one(),
            iteration: 0,
            mre_history: Vec::new(),
            wall: Vec::new(),
            snapshots: Vec::new(),
            started: Instant::now(),
            row_rngs: Vec::new(),
            counts: vec![0; m],
            config,
        })
    }

    pub fn lambda(&self) -> &LambdaVector<S> {
        &self.lambda
    }

    /// Mutable λ access, for gauge-shift experiments between steps.
    pub fn lambda_mut(&mut self) -> &mut LambdaVector<S> {
        &mut self.lambda
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn mre_history(&self) -> &[S] {
        &self.mre_history
    }

    /// One outer iteration: s sweeps, expectation estimate, Adam update.
    /// Returns the iteration's MRE.
    pub fn step(&mut self) -> Result<S> {
        for _ in 0..self.config.sweeps_per_step {
            sweep_with_plan(
                &mut self.pool,
                self.cs,
                &self.plan,
                &self.lambda,
                self.config.seed,
                &mut self.row_rngs,
            );
        }
        self.count_plan.count_into(&self.pool, &mut self.counts);
        let n = s_usize::<S>(self.pool.rows);
        let estimated: Vec<S> = self.counts.iter().map(|&c| s_usize::<S>(c) / n).collect();
        self.iteration += 1;

        // Adam on the stochastic dual gradient g = α̂ − α
        self.beta1_pow *= self.config.beta1;
        self.beta2_pow *= self.config.beta2;
        let one = S::one();
        for j in 0..self.lambda.len() {
            let g = estimated[j] - self.targets[j];
            self.adam_m[j] = self.config.beta1 * self.adam_m[j] + (one - self.config.beta1) * g;
            self.adam_v[j] = self.config.beta2 * self.adam_v[j] + (one - self.config.beta2) * g * g;
            let m_hat = self.adam_m[j] / (one - self.beta1_pow);
            let v_hat = self.adam_v[j] / (one - self.beta2_pow);
            self.lambda.0[j] -=
                self.config.learning_rate * m_hat / (v_hat.sqrt() + self.config.epsilon);
        }

        let mre = relative_error_mean(&estimated, &self.targets, self.config.mre_floor);
        self.mre_history.push(mre);
        self.wall.push(self.started.elapsed().as_secs_f64());
        if self.config.snapshot_every > 0 && self.iteration % self.config.snapshot_every == 0 {
            self.snapshots.push((self.iteration, self.lambda.clone()));
        }

        if !self.lambda.is_finite() {
            return Err(Error::PcdDivergence {
                iteration: self.iteration,
                trace: self
                    .mre_history
                    .iter()
                    .map(|x| x.to_f64().unwrap_or(f64::NAN))
                    .collect(),
            });
        }
        Ok(mre)
    }

    /// Whether the windowed stopping rule fires on the current history.
    pub fn stopping_rule_fires(&self) -> bool {
        should_stop(&self.mre_history, self.config.window, self.config.threshold)
    }

    /// Run until the stopping rule fires or max_iters is reached.
    pub fn run(&mut self) -> Result<StopReason> {
        while self.iteration < self.config.max_iters {
            self.step()?;
            if self.stopping_rule_fires() {
                return Ok(StopReason::StoppingRule);
            }
        }
        Ok(StopReason::MaxIterations)
    }

    pub fn into_fit(self, stop_reason: StopReason) -> PcdFit<S> {
        PcdFit {
            lambda: self.lambda,
            pool: self.pool,
            trace: PcdTrace {
                mre: self.mre_history,
                wall_seconds: self.wall,
                lambda_snapshots: self.snapshots,
                stop_reason,
            },
            iterations: self.iteration,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        }
    }
}

fn relative_error_mean<S: Scalar>(estimated: &[S], targets: &[S], floor: S) -> S {
    let mut sum = S::zero();
    let mut count = 0usize;
    for (&e, &a) in estimated.iter().zip(targets) {
        if a > floor {
            sum += (e - a).abs() / a;
            count += 1;
        }
    }
    if count == 0 {
        S::zero()
    } else {
        sum / s_usize(count)
    }
}

/// Fit from λ = 0 and a fresh uniform pool.
pub fn fit_pcd<S: Scalar>(
    cs: &ConstraintSet<S>,
    targets: &[S],
    config: PcdConfig<S>,
) -> Result<PcdFit<S>> {
    let mut solver = PcdSolver::new(cs, targets, config)?;
    let reason = solver.run()?;
    Ok(solver.into_fit(reason))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_conditional;
    use crate::model::{AtomicConstraint, AttributeSchema};

    fn ln2_instance() -> ConstraintSet<f64> {
        let schema = AttributeSchema::unnamed(&[2, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0, 1], &[0, 0], 0.4f64).unwrap();
        ConstraintSet::new(schema, vec![atom]).unwrap()
    }

    #[test]
    fn conditional_uniform_at_zero() {
        let cs = ln2_instance();
        let lookup = build_attr_lookup(&cs);
        let p = gibbs_conditional(&[0, 0], 0, &cs, &lookup, &LambdaVector::zeros(1)).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn conditional_matches_two_term_softmax() {
        let cs = ln2_instance();
        let lookup = build_attr_lookup(&cs);
        let lam = LambdaVector(vec![std::f64::consts::LN_2]);
        let p = gibbs_conditional(&[0, 0], 0, &cs, &lookup, &lam).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-14);
        // context mismatch: no active constraint
        let q = gibbs_conditional(&[0, 1], 0, &cs, &lookup, &lam).unwrap();
        assert_eq!(q, vec![0.5, 0.5]);
    }

    #[test]
    fn conditional_sigmoid_on_unary_atom() {
        let schema = AttributeSchema::unnamed(&[2, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0], &[1], 0.9f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        let lookup = build_attr_lookup(&cs);
        let lam = LambdaVector(vec![5.0]);
        let p = gibbs_conditional(&[0, 0], 0, &cs, &lookup, &lam).unwrap();
        let expected1 = 5.0f64.exp() / (1.0 + 5.0f64.exp());
        assert!((p[1] - expected1).abs() < 1e-12);
        assert!((p[0] - (1.0 - expected1)).abs() < 1e-12);
    }

    #[test]
    fn conditional_agrees_with_enumeration_oracle() {
        let schema = AttributeSchema::unnamed(&[3, 2, 4]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[1], 0.4f64).unwrap(),
            AtomicConstraint::new(&schema, &[0, 2], &[1, 3], 0.1).unwrap(),
            AtomicConstraint::new(&schema, &[1, 2], &[0, 0], 0.2).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1, 2], &[2, 1, 1], 0.05).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let lookup = build_attr_lookup(&cs);
        let lam = LambdaVector(vec![0.8, -1.7, 2.3, 0.4]);
        crate::model::for_each_tuple(cs.schema(), |t| {
            for k in 0..3 {
                let fast = gibbs_conditional(t, k, &cs, &lookup, &lam).unwrap();
                let slow = exact_conditional(&cs, &lam, t, k).unwrap();
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        });
    }

    #[test]
    fn sweep_changes_one_column_per_inner_step() {
        // structural check: after one sweep every entry is in range and the
        // generation advanced by exactly one
        let cs = ln2_instance();
        let lookup = build_attr_lookup(&cs);
        let mut pool = Pool::new_uniform(&cs, 64, 9).unwrap();
        let before_gen = pool.generation();
        gibbs_sweep(&mut pool, &cs, &lookup, &LambdaVector::zeros(1), 9);
        assert_eq!(pool.generation(), before_gen + 1);
        for i in 0..pool.rows() {
            for (k, &d) in cs.schema().domain_sizes().iter().enumerate() {
                assert!(pool.row(i)[k] < d);
            }
        }
    }

    #[test]
    fn sweep_preserves_uniform_stationary_distribution() {
        // λ = 0: post-sweep attribute marginals pass a chi-square check at
        // N = 10,000 (99.9% quantile for df=1 is 10.83, df=2 is 13.82)
        let schema = AttributeSchema::unnamed(&[3, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0], &[0], 0.3f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        let lookup = build_attr_lookup(&cs);
        let mut pool = Pool::new_uniform(&cs, 10_000, 123).unwrap();
        gibbs_sweep(&mut pool, &cs, &lookup, &LambdaVector::zeros(1), 123);
        for (k, &d) in cs.schema().domain_sizes().iter().enumerate() {
            let mut counts = vec![0usize; d];
            for i in 0..pool.rows() {
                counts[pool.row(i)[k]] += 1;
            }
            let expected = pool.rows() as f64 / d as f64;
            let chi2: f64 = counts
                .iter()
                .map(|&c| {
                    let diff = c as f64 - expected;
                    diff * diff / expected
                })
                .sum();
            let limit = if d == 2 { 10.83 } else { 13.82 };
            assert!(chi2 < limit, "attr {k}: chi2 = {chi2}");
        }
    }

    #[test]
    fn long_run_frequencies_match_exact_distribution() {
        // fixed λ, 200 sweeps: empirical frequency of tuple (0,0) within 4σ
        // of the exact probability from 4-tuple enumeration
        let cs = ln2_instance();
        let lookup = build_attr_lookup(&cs);
        let lam = LambdaVector(vec![std::f64::consts::LN_2]);
        // exact p(0,0) = 2/5: weights (2,1,1,1)
        let exact_p = 0.4;
        let n = 4_000;
        let mut pool = Pool::new_uniform(&cs, n, 77).unwrap();
        for _ in 0..200 {
            gibbs_sweep(&mut pool, &cs, &lookup, &lam, 77);
        }
        let count = (0..n).filter(|&i| pool.row(i) == [0, 0]).count();
        let freq = count as f64 / n as f64;
        let sigma = (exact_p * (1.0 - exact_p) / n as f64).sqrt();
        assert!(
            (freq - exact_p).abs() < 4.0 * sigma,
            "freq {freq} vs exact {exact_p} (sigma {sigma})"
        );
    }

    #[test]
    fn estimate_expectations_counts_exactly() {
        let cs = ln2_instance();
        let mut pool = Pool::new_uniform(&cs, 10, 5).unwrap();
        // force all rows to (0,0)
        for v in pool.data.iter_mut() {
            *v = 0;
        }
        assert_eq!(estimate_expectations(&pool, &cs), vec![1.0]);
        for v in pool.data.iter_mut() {
            *v = 1;
        }
        assert_eq!(estimate_expectations(&pool, &cs), vec![0.0]);
    }

    #[test]
    fn estimate_matches_naive_loop() {
        let schema = AttributeSchema::unnamed(&[3, 2, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[2], 0.1f64).unwrap(),
            AtomicConstraint::new(&schema, &[1, 2], &[1, 0], 0.2).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let pool = Pool::new_uniform(&cs, 500, 31).unwrap();
        let fast = estimate_expectations(&pool, &cs);
        for (j, c) in cs.constraints().iter().enumerate() {
            let count = (0..pool.rows()).filter(|&i| c.matches(pool.row(i))).count();
            assert_eq!(fast[j], count as f64 / 500.0);
        }
    }

    #[test]
    fn stopping_rule_examples() {
        // strictly halving: improvement far above threshold
        let halving: Vec<f64> = (0..100).map(|t| 0.5f64.powi(t)).collect();
        assert!(!should_stop(&halving, 50, 0.02));
        // constant history of length 2W: improvement zero
        let constant = vec![0.3f64; 100];
        assert!(should_stop(&constant, 50, 0.02));
        // window minima 0.100 then 0.099: improvement 0.01 < 0.02
        let mut hist = vec![0.5f64; 50];
        hist[10] = 0.100;
        let mut recent = vec![0.5f64; 50];
        recent[20] = 0.099;
        hist.extend(recent);
        assert!(should_stop(&hist, 50, 0.02));
    }

    #[test]
    fn stopping_rule_needs_two_windows() {
        let hist = vec![0.1f64; 99];
        assert!(!should_stop(&hist, 50, 0.02));
    }

    #[test]
    fn fit_on_uniform_targets_stays_near_zero() {
        // targets equal to uniform frequencies: the gradient is pure noise at
        // the optimum; MRE stays within a small multiple of the 1/(2√N) floor
        let schema = AttributeSchema::unnamed(&[3, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[0], 1.0 / 3.0).unwrap(),
            AtomicConstraint::new(&schema, &[0], &[1], 1.0 / 3.0).unwrap(),
            AtomicConstraint::new(&schema, &[1], &[0], 0.5).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1], &[1, 1], 1.0 / 6.0).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let targets = cs.targets();
        let config = PcdConfig {
            pool_size: 10_000,
            sweeps_per_step: 1,
            learning_rate: 0.01,
            max_iters: 50,
            ..Default::default()
        };
        let fit = fit_pcd(&cs, &targets, config).unwrap();
        let floor = 1.0 / (2.0 * (10_000f64).sqrt());
        let final_mre = *fit.trace.mre.last().unwrap();
        assert!(final_mre <= 4.0 * floor, "final MRE {final_mre} vs floor {floor}");
        assert!(fit.lambda.inf_norm() < 0.5);
    }

    #[test]
    fn fit_is_deterministic_under_seed() {
        let cs = ln2_instance();
        let targets = vec![0.4f64];
        let config = PcdConfig {
            pool_size: 200,
            sweeps_per_step: 2,
            learning_rate: 0.05,
            max_iters: 30,
            seed: 42,
            ..Default::default()
        };
        let a = fit_pcd(&cs, &targets, config.clone()).unwrap();
        let b = fit_pcd(&cs, &targets, config).unwrap();
        assert_eq!(a.lambda.as_slice(), b.lambda.as_slice());
        assert_eq!(a.pool, b.pool);
        assert_eq!(a.trace.mre, b.trace.mre);
    }

    #[test]
    fn divergent_learning_rate_is_reported() {
        let cs = ln2_instance();
        let config = PcdConfig {
            pool_size: 50,
            learning_rate: f64::INFINITY,
            max_iters: 50,
            ..Default::default()
        };
        // an unbounded step drives λ non-finite on the first update
        let res = fit_pcd(&cs, &[0.9f64], config);
        match res {
            Err(Error::PcdDivergence { iteration, trace }) => {
                assert_eq!(iteration, 1);
                assert_eq!(trace.len(), iteration);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn pool_rejects_zero_size() {
        let cs = ln2_instance();
        assert!(Pool::new_uniform(&cs, 0, 1).is_err());
    }
}
