//! Enumeration-based reference solver: exact expectations, log-partition,
//! convex dual objective and gradient, quasi-Newton minimization, exact KL.
//! This is the oracle against which the stochastic solver is validated; it
//! refuses tuple spaces above a configured budget.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsOptions, LbfgsStatus};
use crate::metrics;
use crate::model::{
    for_each_tuple, tuple_energy, ConstraintSet, LambdaVector,
};
use crate::scalar::{log_sum_exp, s, s_usize, Scalar};

/// Default enumeration budget on |X|.
pub const DEFAULT_ENUM_BUDGET: f64 = 1e8;

/// Check |X| against a budget, returning |X| as usize when feasible.
pub fn enumeration_size<S: Scalar>(cs: &ConstraintSet<S>, budget: f64) -> Result<usize> {
    let log_size = cs.schema().log_space_size();
    if log_size > budget.ln() {
        return Err(Error::EnumerationInfeasible {
            space_size: log_size.exp(),
            budget,
        });
    }
    Ok(cs
        .schema()
        .space_size()
        .expect("within budget implies u128 range") as usize)
}

/// A fully enumerated model: per-tuple log-weights and log Z.
#[derive(Debug, Clone)]
pub struct EnumeratedModel<S> {
    cs: ConstraintSet<S>,
    lambda: LambdaVector<S>,
    log_weights: Vec<S>,
    log_z: S,
}

impl<S: Scalar> EnumeratedModel<S> {
    pub fn new(cs: &ConstraintSet<S>, lambda: &LambdaVector<S>, budget: f64) -> Result<Self> {
        let size = enumeration_size(cs, budget)?;
        if lambda.len() != cs.len() {
            return Err(Error::invalid("lambda length mismatch"));
        }
        let mut log_weights = Vec::with_capacity(size);
        for_each_tuple(cs.schema(), |t| {
            log_weights.push(tuple_energy(t, cs, lambda).expect("validated inputs"));
        });
        let log_z = log_sum_exp(&log_weights);
        Ok(EnumeratedModel {
            cs: cs.clone(),
            lambda: lambda.clone(),
            log_weights,
            log_z,
        })
    }

    pub fn constraint_set(&self) -> &ConstraintSet<S> {
        &self.cs
    }

    pub fn lambda(&self) -> &LambdaVector<S> {
        &self.lambda
    }

    pub fn log_z(&self) -> S {
        self.log_z
    }

    /// Tuple probabilities in mixed-radix order.
    pub fn probabilities(&self) -> Vec<S> {
        self.log_weights
            .iter()
            .map(|&u| (u - self.log_z).exp())
            .collect()
    }

    /// Shannon entropy −Σ p ln p in nats.
    pub fn entropy(&self) -> S {
        let mut h = S::zero();
        for &u in &self.log_weights {
            let lp = u - self.log_z;
            h -= lp.exp() * lp;
        }
        h
    }
}

/// Exact model expectations α̂_j(λ) = Σ_x p_λ(x) f_j(x), streaming two-pass
/// log-sum-exp so memory stays O(m).
pub fn exact_expectations<S: Scalar>(
    cs: &ConstraintSet<S>,
    lambda: &LambdaVector<S>,
    budget: f64,
) -> Result<Vec<S>> {
    Ok(expectations_and_log_z(cs, lambda, budget)?.0)
}

/// Expectations together with log Z, sharing the enumeration passes.
pub fn expectations_and_log_z<S: Scalar>(
    cs: &ConstraintSet<S>,
    lambda: &LambdaVector<S>,
    budget: f64,
) -> Result<(Vec<S>, S)> {
    enumeration_size(cs, budget)?;
    if lambda.len() != cs.len() {
        return Err(Error::invalid("lambda length mismatch"));
    }
    // pass 1: max energy
    let mut max_u = S::neg_infinity();
    for_each_tuple(cs.schema(), |t| {
        let u = energy_unchecked(t, cs, lambda);
        if u > max_u {
            max_u = u;
        }
    });
    // pass 2: shifted sums, per-constraint accumulators
    let mut sum_exp = S::zero();
    let mut feature_sums = vec![S::zero(); cs.len()];
    for_each_tuple(cs.schema(), |t| {
        let w = (energy_unchecked(t, cs, lambda) - max_u).exp();
        sum_exp += w;
        for (j, c) in cs.constraints().iter().enumerate() {
            if c.matches(t) {
                feature_sums[j] += w;
            }
        }
    });
    let log_z = max_u + sum_exp.ln();
    let expectations = feature_sums.into_iter().map(|f| f / sum_exp).collect();
    Ok((expectations, log_z))
}

#[inline]
fn energy_unchecked<S: Scalar>(tuple: &[usize], cs: &ConstraintSet<S>, lambda: &LambdaVector<S>) -> S {
    let mut u = S::zero();
    for (c, &l) in cs.constraints().iter().zip(lambda.iter()) {
        if c.matches(tuple) {
            u += l;
        }
    }
    u
}

/// Dual objective Φ(λ) = log Z(λ) − λ·α with its gradient α̂(λ) − α.
#[derive(Debug, Clone)]
pub struct DualState<S> {
    pub lambda: LambdaVector<S>,
    pub objective: S,
    pub gradient: Vec<S>,
}

pub fn dual_objective_and_gradient<S: Scalar>(
    cs: &ConstraintSet<S>,
    lambda: &LambdaVector<S>,
    targets: &[S],
    budget: f64,
) -> Result<DualState<S>> {
    if targets.len() != cs.len() {
        return Err(Error::invalid("targets length mismatch"));
    }
    let (expectations, log_z) = expectations_and_log_z(cs, lambda, budget)?;
    let dot: S = lambda.iter().zip(targets).map(|(&l, &a)| l * a).sum();
    let gradient = expectations
        .iter()
        .zip(targets)
        .map(|(&e, &a)| e - a)
        .collect();
    Ok(DualState {
        lambda: lambda.clone(),
        objective: log_z - dot,
        gradient,
    })
}

/// One row of a convergence trace.
#[derive(Debug, Clone)]
pub struct ExactTraceRow<S> {
    pub iteration: usize,
    pub objective: S,
    pub grad_inf_norm: S,
    pub mre: S,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExactReport<S> {
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_inf_norm: S,
    pub final_mre: S,
    pub objective: S,
    pub trace: Vec<ExactTraceRow<S>>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExactOptions<S> {
    pub tol: S,
    pub max_iters: usize,
    pub budget: f64,
    pub memory: usize,
    pub divergence_norm: S,
}

impl<S: Scalar> Default for ExactOptions<S> {
    fn default() -> Self {
        ExactOptions {
            tol: s(1e-6),
            max_iters: 500,
            budget: DEFAULT_ENUM_BUDGET,
            memory: 10,
            divergence_norm: s(1e3),
        }
    }
}

/// Minimize the dual by limited-memory quasi-Newton from λ = 0.
///
/// Convergence is declared on gradient max-abs norm ≤ tol (the gradient is
/// exactly the moment gap α̂ − α). Divergence (iterate norm past the bound)
/// is an error carrying the last iterate's trace.
pub fn solve_exact<S: Scalar>(
    cs: &ConstraintSet<S>,
    targets: &[S],
    opts: &ExactOptions<S>,
) -> Result<(LambdaVector<S>, ExactReport<S>)> {
    if targets.len() != cs.len() {
        return Err(Error::invalid("targets length mismatch"));
    }
    enumeration_size(cs, opts.budget)?;
    let start = Instant::now();
    let mut trace: Vec<ExactTraceRow<S>> = Vec::new();
    let mre_floor = s::<S>(metrics::MRE_FLOOR);

    let lbfgs_opts = LbfgsOptions {
        memory: opts.memory,
        grad_tol: opts.tol,
        max_iters: opts.max_iters,
        divergence_norm: opts.divergence_norm,
    };
    let outcome = lbfgs::minimize(
        vec![S::zero(); cs.len()],
        &lbfgs_opts,
        |x, g| {
            let state = dual_objective_and_gradient(cs, &LambdaVector(x.to_vec()), targets, opts.budget)
                .expect("budget checked above");
            g.copy_from_slice(&state.gradient);
            state.objective
        },
        |info| {
            // the dual gradient is exactly the moment gap α̂ − α
            trace.push(ExactTraceRow {
                iteration: info.iteration,
                objective: info.objective,
                grad_inf_norm: info.grad_inf_norm,
                mre: mre_from_gap(info.gradient, targets, mre_floor),
                elapsed_seconds: start.elapsed().as_secs_f64(),
            });
        },
    );

    let final_mre = mre_from_gap(&outcome.gradient, targets, mre_floor);

    match outcome.status {
        LbfgsStatus::Diverged => Err(Error::ExactDivergence {
            iteration: outcome.iterations,
            reason: format!(
                "iterate norm {} exceeded bound {}",
                LambdaVector(outcome.x.clone()).norm(),
                opts.divergence_norm
            ),
        }),
        status => {
            let converged = status == LbfgsStatus::Converged;
            let report = ExactReport {
                iterations: outcome.iterations,
                converged,
                final_grad_inf_norm: crate::model::LambdaVector(outcome.gradient.clone()).inf_norm(),
                final_mre,
                objective: outcome.objective,
                trace,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            Ok((LambdaVector(outcome.x), report))
        }
    }
}

fn mre_from_gap<S: Scalar>(gap: &[S], targets: &[S], floor: S) -> S {
    let mut sum = S::zero();
    let mut count = 0usize;
    for (&g, &a) in gap.iter().zip(targets) {
        if a > floor {
            sum += g.abs() / a;
            count += 1;
        }
    }
    if count == 0 {
        S::zero()
    } else {
        sum / s_usize(count)
    }
}

/// Exact KL(p ‖ q) between two enumerated models on the same schema.
pub fn exact_kl<S: Scalar>(p: &EnumeratedModel<S>, q: &EnumeratedModel<S>) -> Result<S> {
    if p.cs.schema() != q.cs.schema() {
        return Err(Error::invalid("models must share one schema"));
    }
    let mut kl = S::zero();
    for (&up, &uq) in p.log_weights.iter().zip(&q.log_weights) {
        let lp = up - p.log_z;
        let lq = uq - q.log_z;
        kl += lp.exp() * (lp - lq);
    }
    Ok(kl)
}

/// Brute-force conditional p_λ(A_k = v | x_{−k}): evaluate the tuple energy at
/// each candidate value and softmax-normalize. Enumerates d_k tuples only.
pub fn exact_conditional<S: Scalar>(
    cs: &ConstraintSet<S>,
    lambda: &LambdaVector<S>,
    tuple: &[usize],
    attr: usize,
) -> Result<Vec<S>> {
    cs.schema().check_tuple(tuple)?;
    if attr >= cs.schema().attr_count() {
        return Err(Error::invalid("attribute index out of range"));
    }
    let d = cs.schema().domain_size(attr);
    let mut candidate = tuple.to_vec();
    let mut energies = Vec::with_capacity(d);
    for v in 0..d {
        candidate[attr] = v;
        energies.push(tuple_energy(&candidate, cs, lambda)?);
    }
    crate::scalar::softmax_in_place(&mut energies);
    Ok(energies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AtomicConstraint, AttributeSchema};

    fn unary_logit_instance(lam: f64) -> (ConstraintSet<f64>, LambdaVector<f64>) {
        let schema = AttributeSchema::unnamed(&[2, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0], &[0], 0.7f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        (cs, LambdaVector(vec![lam]))
    }

    #[test]
    fn uniform_expectation_on_unary_atom() {
        let schema = AttributeSchema::unnamed(&[4, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0], &[1], 0.25f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        let e = exact_expectations(&cs, &LambdaVector::zeros(1), DEFAULT_ENUM_BUDGET).unwrap();
        assert!((e[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn logit_expectation_is_sigmoid() {
        // λ = log(7/3) on one of two cells -> e^λ/(e^λ + 1) = 0.7
        let (cs, lam) = unary_logit_instance((7.0f64 / 3.0).ln());
        let e = exact_expectations(&cs, &lam, DEFAULT_ENUM_BUDGET).unwrap();
        assert!((e[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn binary_atom_uniform_expectation() {
        let schema = AttributeSchema::unnamed(&[3, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0, 1], &[0, 0], 0.2f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        let e = exact_expectations(&cs, &LambdaVector::zeros(1), DEFAULT_ENUM_BUDGET).unwrap();
        assert!((e[0] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn budget_is_enforced() {
        let schema = AttributeSchema::unnamed(&[10; 10]).unwrap(); // |X| = 1e10
        let atom = AtomicConstraint::new(&schema, &[0], &[0], 0.1f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        let err = exact_expectations(&cs, &LambdaVector::zeros(1), 1e8).unwrap_err();
        assert!(matches!(err, Error::EnumerationInfeasible { .. }));
    }

    #[test]
    fn dual_at_zero_is_log_space_size() {
        let (cs, _) = unary_logit_instance(0.0);
        let targets = vec![0.7f64];
        let state =
            dual_objective_and_gradient(&cs, &LambdaVector::zeros(1), &targets, DEFAULT_ENUM_BUDGET)
                .unwrap();
        assert!((state.objective - (4.0f64).ln()).abs() < 1e-13);
        assert!((state.gradient[0] - (0.5 - 0.7)).abs() < 1e-13);
    }

    #[test]
    fn gradient_vanishes_at_closed_form_optimum() {
        let lam_star = (7.0f64 / 3.0).ln();
        let (cs, lam) = unary_logit_instance(lam_star);
        // gauge-free formulation: single atom, but gradient still vanishes at
        // the logit point because the target matches the sigmoid exactly
        let state = dual_objective_and_gradient(&cs, &lam, &[0.7], DEFAULT_ENUM_BUDGET).unwrap();
        assert!(state.gradient[0].abs() < 1e-10);
    }

    #[test]
    fn finite_difference_gradient_check() {
        let schema = AttributeSchema::unnamed(&[3, 2, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[0], 0.4f64).unwrap(),
            AtomicConstraint::new(&schema, &[1, 2], &[0, 1], 0.3).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1], &[2, 1], 0.2).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let targets = vec![0.4f64, 0.3, 0.2];
        let lam = LambdaVector(vec![0.37, -0.81, 1.23]);
        let state = dual_objective_and_gradient(&cs, &lam, &targets, DEFAULT_ENUM_BUDGET).unwrap();
        let eps = 1e-5;
        for j in 0..3 {
            let mut plus = lam.0.clone();
            plus[j] += eps;
            let mut minus = lam.0.clone();
            minus[j] -= eps;
            let fp = dual_objective_and_gradient(&cs, &LambdaVector(plus), &targets, DEFAULT_ENUM_BUDGET)
                .unwrap()
                .objective;
            let fm = dual_objective_and_gradient(&cs, &LambdaVector(minus), &targets, DEFAULT_ENUM_BUDGET)
                .unwrap()
                .objective;
            let fd = (fp - fm) / (2.0 * eps);
            assert!(
                (fd - state.gradient[j]).abs() < 1e-6,
                "component {j}: fd {fd} vs grad {}",
                state.gradient[j]
            );
        }
    }

    #[test]
    fn solve_uniform_targets_gives_zero_lambda() {
        let schema = AttributeSchema::unnamed(&[3, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[0], 1.0f64 / 3.0).unwrap(),
            AtomicConstraint::new(&schema, &[1], &[1], 0.5).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1], &[1, 0], 1.0 / 6.0).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let targets = cs.targets();
        let (lam, report) = solve_exact(&cs, &targets, &ExactOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.final_mre < 1e-8);
        // uniform targets: MaxEnt of no information; λ = 0 up to gauge, and
        // with this atom set the distribution matches uniform exactly
        let e = exact_expectations(&cs, &lam, DEFAULT_ENUM_BUDGET).unwrap();
        for (est, t) in e.iter().zip(&targets) {
            assert!((est - t).abs() < 1e-8f64);
        }
    }

    #[test]
    fn kl_identical_models_is_zero() {
        let (cs, lam) = unary_logit_instance(0.93);
        let m1 = EnumeratedModel::new(&cs, &lam, DEFAULT_ENUM_BUDGET).unwrap();
        let m2 = EnumeratedModel::new(&cs, &lam, DEFAULT_ENUM_BUDGET).unwrap();
        assert!(exact_kl(&m1, &m2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_uniform_vs_biased_matches_hand_enumeration() {
        let lam_val = (7.0f64 / 3.0).ln();
        let (cs, lam) = unary_logit_instance(lam_val);
        let uniform = EnumeratedModel::new(&cs, &LambdaVector::zeros(1), DEFAULT_ENUM_BUDGET).unwrap();
        let biased = EnumeratedModel::new(&cs, &lam, DEFAULT_ENUM_BUDGET).unwrap();
        // by hand over 4 tuples: p uniform 0.25 each; q: cells with a0=0 get
        // 0.35 each, others 0.15 each
        let expected: f64 = 2.0 * 0.25 * (0.25f64 / 0.35).ln() + 2.0 * 0.25 * (0.25f64 / 0.15).ln();
        let kl = exact_kl(&uniform, &biased).unwrap();
        assert!((kl - expected).abs() < 1e-12);
        assert!(kl >= 0.0);
    }

    #[test]
    fn gauge_shift_leaves_probabilities_unchanged() {
        let schema = AttributeSchema::unnamed(&[3, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[0], 0.5f64).unwrap(),
            AtomicConstraint::new(&schema, &[0], &[1], 0.3).unwrap(),
            AtomicConstraint::new(&schema, &[0], &[2], 0.2).unwrap(),
            AtomicConstraint::new(&schema, &[1], &[0], 0.6).unwrap(),
            AtomicConstraint::new(&schema, &[1], &[1], 0.4).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let lam = LambdaVector(vec![0.4f64, -0.2, 0.9, 1.4, -0.5]);
        let mut shifted = lam.clone();
        shifted.shift_unary_block(&cs, 0, 2.5);
        let m1 = EnumeratedModel::new(&cs, &lam, DEFAULT_ENUM_BUDGET).unwrap();
        let m2 = EnumeratedModel::new(&cs, &shifted, DEFAULT_ENUM_BUDGET).unwrap();
        for (p1, p2) in m1.probabilities().iter().zip(m2.probabilities()) {
            assert!((p1 - p2).abs() < 1e-12);
        }
        assert!(exact_kl(&m1, &m2).unwrap().abs() < 1e-10);
    }

    #[test]
    fn conditional_uniform_at_zero_lambda() {
        let (cs, _) = unary_logit_instance(0.0);
        let p = exact_conditional(&cs, &LambdaVector::zeros(1), &[0, 0], 1).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn conditional_with_binary_atom_context() {
        // constraint (a0, a1) = (0, 0) with λ = ln 2: conditioning attr 0 given
        // x1 = 0 gives [2/3, 1/3]; given x1 = 1 gives uniform
        let schema = AttributeSchema::unnamed(&[2, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0, 1], &[0, 0], 0.4f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        let lam = LambdaVector(vec![std::f64::consts::LN_2]);
        let p = exact_conditional(&cs, &lam, &[0, 0], 0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-14);
        let q = exact_conditional(&cs, &lam, &[0, 1], 0).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let schema = AttributeSchema::unnamed(&[3, 3, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0, 1], &[1, 2], 0.1f64).unwrap(),
            AtomicConstraint::new(&schema, &[2], &[0], 0.5).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let lam = LambdaVector(vec![3.7, -2.2]);
        let model = EnumeratedModel::new(&cs, &lam, DEFAULT_ENUM_BUDGET).unwrap();
        let total: f64 = model.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
