//! Generalized raking / IPF baseline: multiplicative reweighting of a fixed
//! sample, cycling through constraints until the targets match or the weights
//! blow up. Raking cannot create attribute combinations absent from the
//! sample; constraints without weighted support are flagged, not fixed.

use crate::error::{Error, Result};
use crate::metrics::{self, PopulationView};
use crate::model::{AttributeSchema, ConstraintSet};
use crate::rng::{next_unit_f64, substream, tag};
use crate::scalar::{s, s_usize, Scalar};

/// A fixed N×K sample with nonnegative weights normalized to sum 1.
#[derive(Debug, Clone)]
pub struct WeightedSample<S> {
    data: Vec<usize>,
    rows: usize,
    cols: usize,
    weights: Vec<S>,
}

impl<S: Scalar> WeightedSample<S> {
    pub fn new(data: Vec<usize>, rows: usize, cols: usize, weights: Vec<S>) -> Result<Self> {
        if rows == 0 || data.len() != rows * cols {
            return Err(Error::invalid("sample dimensions mismatch"));
        }
        if weights.len() != rows {
            return Err(Error::invalid("weights length mismatch"));
        }
        if weights.iter().any(|&w| w < S::zero() || !w.is_finite()) {
            return Err(Error::invalid("weights must be nonnegative and finite"));
        }
        let total: S = weights.iter().copied().sum();
        if (total - S::one()).abs() > s(1e-9) {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(WeightedSample {
            data,
            rows,
            cols,
            weights,
        })
    }

    /// Rows with uniform weights 1/N.
    pub fn uniform(data: Vec<usize>, rows: usize, cols: usize) -> Result<Self> {
        let w = vec![S::one() / s_usize(rows.max(1)); rows];
        WeightedSample::new(data, rows, cols, w)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn view(&self) -> PopulationView<'_> {
        PopulationView::new(&self.data, self.rows, self.cols)
    }
}

/// Cycle control for [`rake`].
#[derive(Debug, Clone)]
pub struct RakeConfig<S> {
    pub max_cycles: usize,
    /// Convergence on max_j |α̂_j − α_j| / α_j over positive targets.
    pub tolerance: S,
    /// Divergence guard: stop once max_i w_i · N exceeds this cap.
    pub weight_ratio_cap: S,
    /// Targets at or below this floor are treated as zero.
    pub target_floor: S,
}

impl<S: Scalar> Default for RakeConfig<S> {
    fn default() -> Self {
        RakeConfig {
            max_cycles: 100,
            tolerance: s(1e-6),
            weight_ratio_cap: s(1e9),
            target_floor: s(metrics::MRE_FLOOR),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RakeReport<S> {
    pub cycles: usize,
    pub converged: bool,
    pub diverged: bool,
    /// Mean relative error on the training targets after the last cycle.
    pub final_mre: S,
    pub final_max_rel_err: S,
    /// Constraints with positive target but zero weighted support.
    pub infeasible_constraints: Vec<usize>,
    pub n_eff: S,
    pub wall_seconds: f64,
}

/// Draw N rows i.i.d. uniform over the attribute domains, uniform weights.
pub fn draw_initial_sample<S: Scalar>(
    schema: &AttributeSchema,
    n: usize,
    seed: u64,
) -> Result<WeightedSample<S>> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let k = schema.attr_count();
    let mut data = vec![0usize; n * k];
    for i in 0..n {
        let mut rng = substream(&[seed, tag::SAMPLE_ROW, i as u64]);
        for (kk, &d) in schema.domain_sizes().iter().enumerate() {
            let v = (next_unit_f64(&mut rng) * d as f64) as usize;
            data[i * k + kk] = v.min(d - 1);
        }
    }
    WeightedSample::uniform(data, n, k)
}

/// Rake the sample toward the targets.
///
/// Constraints are processed in ascending (arity, index) order. Each step is
/// the two-cell update on the {match, non-match} partition — matching rows
/// are rescaled by α_j/α̂_j and the complement by (1−α_j)/(1−α̂_j) — which
/// makes the constraint exact immediately and keeps Σw = 1; weights are
/// renormalized after every step to absorb rounding drift. Zero targets zero
/// out matching rows. Failure to converge is a reported outcome, not an
/// error.
pub fn rake<S: Scalar>(
    sample: &WeightedSample<S>,
    cs: &ConstraintSet<S>,
    targets: &[S],
    config: &RakeConfig<S>,
) -> Result<(WeightedSample<S>, RakeReport<S>)> {
    if targets.len() != cs.len() {
        return Err(Error::invalid("targets length mismatch"));
    }
    if sample.cols() != cs.schema().attr_count() {
        return Err(Error::invalid("sample does not match schema"));
    }
    let started = std::time::Instant::now();
    let n = sample.rows();

    // the sample is fixed: precompute matching row indices once
    let matches: Vec<Vec<u32>> = cs
        .constraints()
        .iter()
        .map(|c| {
            (0..n)
                .filter(|&i| c.matches(sample.row(i)))
                .map(|i| i as u32)
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..cs.len()).collect();
    order.sort_by_key(|&j| (cs.constraints()[j].arity(), j));

    let mut weights = sample.weights().to_vec();
    let mut infeasible: Vec<usize> = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut cycles = 0usize;
    let mut final_mre = S::zero();
    let mut final_max = S::zero();

    for cycle in 1..=config.max_cycles {
        cycles = cycle;
        for &j in &order {
            let target = targets[j];
            let current: S = matches[j].iter().map(|&i| weights[i as usize]).sum();
            if current <= S::zero() {
                if target > config.target_floor && !infeasible.contains(&j) {
                    infeasible.push(j);
                }
                continue;
            }
            if target <= config.target_floor {
                // limit of the multiplicative rule: matching rows vanish
                for &i in &matches[j] {
                    weights[i as usize] = S::zero();
                }
            } else {
                let rest = S::one() - current;
                if rest <= S::zero() {
                    // every unit of mass matches; only a target of 1 is attainable
                    if (target - S::one()).abs() > config.tolerance && !infeasible.contains(&j) {
                        infeasible.push(j);
                    }
                    continue;
                }
                let factor_match = target / current;
                let factor_rest = (S::one() - target) / rest;
                for w in weights.iter_mut() {
                    *w *= factor_rest;
                }
                let adjust = factor_match / factor_rest;
                for &i in &matches[j] {
                    weights[i as usize] *= adjust;
                }
            }
            let total: S = weights.iter().copied().sum();
            if total > S::zero() {
                for w in weights.iter_mut() {
                    *w /= total;
                }
            }
        }

        // cycle diagnostics
        let mut max_rel = S::zero();
        let mut sum_rel = S::zero();
        let mut counted = 0usize;
        for (j, &target) in targets.iter().enumerate() {
            if target <= config.target_floor {
                continue;
            }
            let current: S = matches[j].iter().map(|&i| weights[i as usize]).sum();
            let rel = (current - target).abs() / target;
            sum_rel += rel;
            counted += 1;
            if rel > max_rel {
                max_rel = rel;
            }
        }
        final_max = max_rel;
        final_mre = if counted == 0 {
            S::zero()
        } else {
            sum_rel / s_usize(counted)
        };

        let max_weight = weights.iter().copied().fold(S::zero(), S::max);
        if max_weight * s_usize::<S>(n) > config.weight_ratio_cap {
            diverged = true;
            break;
        }
        if max_rel <= config.tolerance {
            converged = true;
            break;
        }
    }

    let n_eff = {
        let sum_sq: S = weights.iter().map(|&w| w * w).sum();
        if sum_sq > S::zero() {
            S::one() / sum_sq
        } else {
            S::zero()
        }
    };
    infeasible.sort_unstable();
    let report = RakeReport {
        cycles,
        converged,
        diverged,
        final_mre,
        final_max_rel_err: final_max,
        infeasible_constraints: infeasible,
        n_eff,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let raked = WeightedSample::new(sample.data.clone(), n, sample.cols(), weights)?;
    Ok((raked, report))
}
