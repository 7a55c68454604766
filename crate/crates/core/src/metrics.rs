//! Accuracy and diversity measurements: mean relative error, exact-KL
//! wrapper, effective sample size, Shannon entropy over profiles, Gini and
//! Lorenz curve, unique-profile counts.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::exact::{EnumeratedModel, exact_kl};
use crate::model::{ConstraintSet, LambdaVector};
use crate::scalar::{s, s_usize, Scalar};

/// Default floor below which target frequencies are excluded from MRE.
pub const MRE_FLOOR: f64 = 1e-9;

/// MRE value plus the number of atoms excluded by the floor.
#[derive(Debug, Clone, Copy)]
pub struct MreValue<S> {
    pub value: S,
    pub excluded: usize,
}

/// Mean over j with α_j > floor of |α̂_j − α_j| / α_j.
pub fn mre<S: Scalar>(estimated: &[S], targets: &[S], floor: S) -> Result<MreValue<S>> {
    if estimated.len() != targets.len() {
        return Err(Error::invalid("mre: length mismatch"));
    }
    let mut sum = S::zero();
    let mut count = 0usize;
    let mut excluded = 0usize;
    for (&e, &a) in estimated.iter().zip(targets) {
        if a > floor {
            sum += (e - a).abs() / a;
            count += 1;
        } else {
            excluded += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(
            "mre: every atom excluded by the floor".into(),
        ));
    }
    Ok(MreValue {
        value: sum / s_usize(count),
        excluded,
    })
}

/// Borrowed N×K row-major matrix of category indices.
#[derive(Debug, Clone, Copy)]
pub struct PopulationView<'a> {
    pub data: &'a [usize],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> PopulationView<'a> {
    pub fn new(data: &'a [usize], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        PopulationView { data, rows, cols }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [usize] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Frequencies of each atom in a population: weighted sums when weights are
/// given, exact counts over N otherwise.
pub fn population_frequencies<S: Scalar>(
    view: PopulationView<'_>,
    weights: Option<&[S]>,
    cs: &ConstraintSet<S>,
) -> Result<Vec<S>> {
    if view.rows == 0 {
        return Err(Error::invalid("empty population"));
    }
    if let Some(w) = weights {
        if w.len() != view.rows {
            return Err(Error::invalid("weights length mismatch"));
        }
        let mut freqs = vec![S::zero(); cs.len()];
        for i in 0..view.rows {
            let row = view.row(i);
            let wi = w[i];
            if wi == S::zero() {
                continue;
            }
            for (j, c) in cs.constraints().iter().enumerate() {
                if c.matches(row) {
                    freqs[j] += wi;
                }
            }
        }
        Ok(freqs)
    } else {
        let mut counts = vec![0usize; cs.len()];
        for i in 0..view.rows {
            let row = view.row(i);
            for (j, c) in cs.constraints().iter().enumerate() {
                if c.matches(row) {
                    counts[j] += 1;
                }
            }
        }
        let n = s_usize::<S>(view.rows);
        Ok(counts.into_iter().map(|c| s_usize::<S>(c) / n).collect())
    }
}

/// Diversity diagnostics of a synthesized population.
#[derive(Debug, Clone)]
pub struct DiversityReport<S> {
    pub n: usize,
    /// Effective sample size (Σ w²)⁻¹; equals N exactly for unweighted pools.
    pub n_eff: S,
    pub n_eff_ratio: S,
    /// Shannon entropy of the profile distribution, in nats.
    pub entropy: S,
    /// Distinct tuples carrying positive weight.
    pub unique_profiles: usize,
    /// Distinct tuples with aggregated weight above 1/N².
    pub eps_support_profiles: usize,
    pub gini: S,
    /// Lorenz curve of the weight distribution: (population share, weight
    /// share) at every rank, endpoints included.
    pub lorenz: Vec<(S, S)>,
}

/// Compute the diversity report. `weights`, when given, must be normalized;
/// `None` means a uniform pool, for which N_eff = N and Gini = 0 hold by
/// construction (no summation error).
pub fn diversity<S: Scalar>(
    view: PopulationView<'_>,
    weights: Option<&[S]>,
) -> Result<DiversityReport<S>> {
    let n = view.rows;
    if n == 0 {
        return Err(Error::invalid("empty population"));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::invalid("weights length mismatch"));
        }
        if w.iter().any(|&x| x < S::zero()) {
            return Err(Error::invalid("negative weight"));
        }
        let total: S = w.iter().copied().sum();
        if (total - S::one()).abs() > s(1e-9) {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
    }

    // profile aggregation by exact tuple comparison; the accumulation order
    // for the entropy sum is fixed by sorting profiles, so identical inputs
    // give bit-identical results across processes
    let mut profile_mass: HashMap<&[usize], S> = HashMap::new();
    for i in 0..n {
        let wi = match weights {
            Some(w) => w[i],
            None => S::one() / s_usize(n),
        };
        *profile_mass.entry(view.row(i)).or_insert_with(S::zero) += wi;
    }
    let mut profiles: Vec<(&[usize], S)> = profile_mass.into_iter().collect();
    profiles.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let eps = S::one() / (s_usize::<S>(n) * s_usize::<S>(n));
    let mut entropy = S::zero();
    let mut unique = 0usize;
    let mut eps_support = 0usize;
    for &(_, mass) in &profiles {
        if mass > S::zero() {
            unique += 1;
            entropy -= mass * mass.ln();
        }
        if mass > eps {
            eps_support += 1;
        }
    }

    let (n_eff, gini, lorenz) = match weights {
        None => {
            let n_s = s_usize::<S>(n);
            let lorenz = (0..=n)
                .map(|i| {
                    let share = s_usize::<S>(i) / n_s;
                    (share, share)
                })
                .collect();
            (n_s, S::zero(), lorenz)
        }
        Some(w) => {
            let sum_sq: S = w.iter().map(|&x| x * x).sum();
            if sum_sq == S::zero() {
                return Err(Error::UndefinedMetric("all weights zero".into()));
            }
            let n_eff = S::one() / sum_sq;
            let mut sorted = w.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("weights are finite"));
            let n_s = s_usize::<S>(n);
            let mut rank_sum = S::zero();
            let mut cum = S::zero();
            let mut lorenz = Vec::with_capacity(n + 1);
            lorenz.push((S::zero(), S::zero()));
            for (i, &wi) in sorted.iter().enumerate() {
                rank_sum += s_usize::<S>(i + 1) * wi;
                cum += wi;
                lorenz.push((s_usize::<S>(i + 1) / n_s, cum));
            }
            let total = cum;
            let gini = (s::<S>(2.0) * rank_sum - (n_s + S::one()) * total) / (n_s * total);
            (n_eff, gini, lorenz)
        }
    };

    Ok(DiversityReport {
        n,
        n_eff,
        n_eff_ratio: n_eff / s_usize(n),
        entropy,
        unique_profiles: unique,
        eps_support_profiles: eps_support,
        gini,
        lorenz,
    })
}

/// KL(p_truth ‖ p_fitted) where the fitted model shares the truth's
/// constraint set. Unavailable (enumeration error) above the budget.
pub fn kl_to_truth<S: Scalar>(
    truth: &EnumeratedModel<S>,
    fitted: &LambdaVector<S>,
    budget: f64,
) -> Result<S> {
    let q = EnumeratedModel::new(truth.constraint_set(), fitted, budget)?;
    exact_kl(truth, &q)
}

/// Per-table MRE of a population against a held-out constraint set whose
/// groups carry table labels.
pub fn heldout_mre<S: Scalar>(
    view: PopulationView<'_>,
    weights: Option<&[S]>,
    heldout: &ConstraintSet<S>,
) -> Result<BTreeMap<String, MreValue<S>>> {
    let freqs = population_frequencies(view, weights, heldout)?;
    let targets = heldout.targets();
    let floor = s::<S>(MRE_FLOOR);
    let mut out = BTreeMap::new();
    for g in heldout.groups() {
        let range = g.start..g.start + g.len;
        let value = mre(&freqs[range.clone()], &targets[range], floor)?;
        out.insert(g.label.clone(), value);
    }
    if out.is_empty() {
        // ungrouped held-out set: single aggregate entry
        out.insert("all".to_string(), mre(&freqs, &targets, floor)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mre_zero_when_exact() {
        let r = mre(&[0.5f64, 0.5], &[0.5, 0.5], 1e-9).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.excluded, 0);
    }

    #[test]
    fn mre_hand_arithmetic() {
        let r = mre(&[0.45f64, 0.55], &[0.5, 0.5], 1e-9).unwrap();
        assert!((r.value - 0.10).abs() < 1e-15);
        let r2 = mre(&[0.2006f64], &[0.2], 1e-9).unwrap();
        assert!((r2.value - 0.003).abs() < 1e-12);
    }

    #[test]
    fn mre_excludes_floor_atoms_and_errors_when_all_excluded() {
        let r = mre(&[0.3f64, 0.9], &[0.5, 0.0], 1e-9).unwrap();
        assert_eq!(r.excluded, 1);
        assert!((r.value - 0.4).abs() < 1e-15);
        assert!(mre(&[0.3f64], &[0.0], 1e-9).is_err());
    }

    #[test]
    fn mre_matches_naive_loop() {
        let est = [0.21f64, 0.04, 0.33, 0.11];
        let tgt = [0.2f64, 0.05, 0.3, 0.1];
        let naive: f64 = est
            .iter()
            .zip(&tgt)
            .map(|(&e, &a)| (e - a).abs() / a)
            .sum::<f64>()
            / 4.0;
        let r = mre(&est, &tgt, 1e-9).unwrap();
        assert!((r.value - naive).abs() < 1e-15);
    }

    #[test]
    fn diversity_uniform_distinct_rows() {
        // 4 distinct rows, uniform pool
        let data = vec![0, 0, 0, 1, 1, 0, 1, 1];
        let view = PopulationView::new(&data, 4, 2);
        let rep = diversity::<f64>(view, None).unwrap();
        assert_eq!(rep.n_eff, 4.0);
        assert_eq!(rep.gini, 0.0);
        assert_eq!(rep.unique_profiles, 4);
        assert!((rep.entropy - (4.0f64).ln()).abs() < 1e-12);
        assert_eq!(rep.lorenz.first(), Some(&(0.0, 0.0)));
        assert_eq!(rep.lorenz.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn diversity_point_mass() {
        let data = vec![0, 0, 0, 1, 1, 0, 1, 1];
        let view = PopulationView::new(&data, 4, 2);
        let w = [1.0f64, 0.0, 0.0, 0.0];
        let rep = diversity(view, Some(&w)).unwrap();
        assert!((rep.n_eff - 1.0).abs() < 1e-12);
        assert_eq!(rep.entropy, 0.0);
        assert!((rep.gini - 3.0 / 4.0).abs() < 1e-12);
        assert_eq!(rep.unique_profiles, 1);
    }

    #[test]
    fn diversity_half_support() {
        let data = vec![0, 0, 0, 1, 1, 0, 1, 1];
        let view = PopulationView::new(&data, 4, 2);
        let w = [0.5f64, 0.5, 0.0, 0.0];
        let rep = diversity(view, Some(&w)).unwrap();
        assert!((rep.n_eff - 2.0).abs() < 1e-12);
        assert_eq!(rep.unique_profiles, 2);
        assert_eq!(rep.eps_support_profiles, 2);
    }

    #[test]
    fn gini_agrees_with_lorenz_area() {
        let data: Vec<usize> = (0..12).collect();
        let view = PopulationView::new(&data, 6, 2);
        let mut w = vec![0.05f64, 0.1, 0.15, 0.2, 0.2, 0.3];
        let total: f64 = w.iter().sum();
        for x in &mut w {
            *x /= total;
        }
        let rep = diversity(view, Some(&w)).unwrap();
        // trapezoid area under the Lorenz curve over all points
        let mut area = 0.0;
        for pair in rep.lorenz.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            area += (y0 + y1) / 2.0 * (x1 - x0);
        }
        assert!((rep.gini - (1.0 - 2.0 * area)).abs() < 1e-9);
    }

    #[test]
    fn entropy_representation_independent() {
        // pool with duplicate rows vs the same pool as a uniform weighted sample
        let data = vec![0, 0, 0, 0, 1, 1, 1, 1, 0, 0];
        let view = PopulationView::new(&data, 5, 2);
        let pool_rep = diversity::<f64>(view, None).unwrap();
        let w = vec![0.2f64; 5];
        let weighted_rep = diversity(view, Some(&w)).unwrap();
        assert!((pool_rep.entropy - weighted_rep.entropy).abs() < 1e-9);
        assert_eq!(pool_rep.unique_profiles, weighted_rep.unique_profiles);
    }

    #[test]
    fn n_eff_invariant_under_permutation() {
        let data: Vec<usize> = (0..8).collect();
        let view = PopulationView::new(&data, 4, 2);
        let w1 = [0.4f64, 0.3, 0.2, 0.1];
        let w2 = [0.1f64, 0.2, 0.3, 0.4];
        let r1 = diversity(view, Some(&w1)).unwrap();
        let r2 = diversity(view, Some(&w2)).unwrap();
        assert!((r1.n_eff - r2.n_eff).abs() < 1e-12);
        assert!((r1.gini - r2.gini).abs() < 1e-12);
    }

    #[test]
    fn heldout_mre_on_degenerate_population_is_finite() {
        use crate::model::{AtomicConstraint, AttributeSchema, ConstraintSet};
        let schema = AttributeSchema::unnamed(&[2, 2, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0, 1, 2], &[0, 0, 0], 0.2f64).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1, 2], &[1, 1, 1], 0.3).unwrap(),
        ];
        let mut constraints = Vec::new();
        let mut groups = Vec::new();
        crate::model::push_group(&mut constraints, &mut groups, atoms, "T", false);
        let heldout = ConstraintSet::with_groups(schema, constraints, groups).unwrap();
        // every row identical: one atom overshoots, the other has zero mass
        let data = vec![0usize; 30];
        let view = PopulationView::new(&data, 10, 3);
        let per_table = heldout_mre(view, None::<&[f64]>, &heldout).unwrap();
        let value = per_table["T"].value;
        assert!(value.is_finite());
        assert!(value > 1.0);
    }

    #[test]
    fn diversity_rejects_bad_weights() {
        let data = vec![0, 0, 0, 1];
        let view = PopulationView::new(&data, 2, 2);
        assert!(diversity(view, Some(&[0.4f64, 0.4])).is_err());
        assert!(diversity(view, Some(&[-0.1f64, 1.1])).is_err());
        let empty = PopulationView::new(&[], 0, 2);
        assert!(diversity::<f64>(empty, None).is_err());
    }
}
