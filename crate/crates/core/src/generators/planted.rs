//! Planted exponential families: draw λ* explicitly, compute targets as
//! exact model expectations, and hand back both. Binary-only atom lists keep
//! the problem identifiable (no unary atoms, so no gauge freedom), which
//! makes ‖λ̂ − λ*‖ a meaningful convergence metric.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::exact::exact_expectations;
use crate::model::{
    push_group, AtomicConstraint, AttributeSchema, ConstraintSet, LambdaVector,
};
use crate::rng::{next_unit_f64, substream, tag};
use crate::scalar::{s, Scalar};

#[derive(Debug, Clone)]
pub struct PlantedFamilySpec {
    pub schema: AttributeSchema,
    /// Number of binary atoms.
    pub atom_count: usize,
    /// λ* entries drawn i.i.d. uniform on this interval.
    pub lambda_range: (f64, f64),
    pub seed: u64,
    /// Enumeration budget for the exact target computation.
    pub budget: f64,
}

impl PlantedFamilySpec {
    pub fn new(
        domain_sizes: &[usize],
        atom_count: usize,
        lambda_range: (f64, f64),
        seed: u64,
        budget: f64,
    ) -> Result<Self> {
        let schema = AttributeSchema::unnamed(domain_sizes)?;
        if schema.attr_count() < 2 {
            return Err(Error::invalid("binary atoms need at least two attributes"));
        }
        if lambda_range.0 >= lambda_range.1 {
            return Err(Error::invalid("empty lambda range"));
        }
        if atom_count == 0 {
            return Err(Error::invalid("need at least one atom"));
        }
        Ok(PlantedFamilySpec {
            schema,
            atom_count,
            lambda_range,
            seed,
            budget,
        })
    }
}

/// Sample the binary-only constraint list, draw λ*, set targets to the exact
/// expectations under λ*. Within each attribute pair no value-row or
/// value-column is ever completed, which rules out the first-order linear
/// dependencies among cell indicators that would break identifiability.
pub fn planted_family_generate<S: Scalar>(
    spec: &PlantedFamilySpec,
) -> Result<(ConstraintSet<S>, LambdaVector<S>)> {
    let k = spec.schema.attr_count();
    let mut atom_rng = substream(&[spec.seed, tag::PLANTED_ATOMS]);

    let mut chosen: HashSet<(usize, usize, usize, usize)> = HashSet::new();
    // per (pair, own-axis value) usage counts to avoid completing rows/columns
    let mut row_use: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut col_use: HashMap<(usize, usize, usize), usize> = HashMap::new();

    let mut attempts = 0usize;
    while chosen.len() < spec.atom_count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::invalid(
                "could not place the requested number of identifiable binary atoms",
            ));
        }
        let a = (next_unit_f64(&mut atom_rng) * k as f64) as usize % k;
        let b = (next_unit_f64(&mut atom_rng) * k as f64) as usize % k;
        if a == b {
            continue;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let da = spec.schema.domain_size(a);
        let db = spec.schema.domain_size(b);
        let va = ((next_unit_f64(&mut atom_rng) * da as f64) as usize).min(da - 1);
        let vb = ((next_unit_f64(&mut atom_rng) * db as f64) as usize).min(db - 1);
        if chosen.contains(&(a, b, va, vb)) {
            continue;
        }
        let row = row_use.get(&(a, b, va)).copied().unwrap_or(0);
        let col = col_use.get(&(a, b, vb)).copied().unwrap_or(0);
        if row + 1 >= db || col + 1 >= da {
            continue;
        }
        chosen.insert((a, b, va, vb));
        *row_use.entry((a, b, va)).or_insert(0) += 1;
        *col_use.entry((a, b, vb)).or_insert(0) += 1;
    }

    let mut cells: Vec<(usize, usize, usize, usize)> = chosen.into_iter().collect();
    cells.sort_unstable();

    let mut lambda_rng = substream(&[spec.seed, tag::PLANTED_LAMBDA]);
    let (lo, hi) = spec.lambda_range;
    let lambda_star: Vec<S> = (0..spec.atom_count)
        .map(|_| s(lo + (hi - lo) * next_unit_f64(&mut lambda_rng)))
        .collect();

    let atoms: Vec<AtomicConstraint<S>> = cells
        .iter()
        .map(|&(a, b, va, vb)| {
            AtomicConstraint::new(&spec.schema, &[a, b], &[va, vb], S::zero())
                .expect("validated cells")
        })
        .collect();
    let mut constraints = Vec::new();
    let mut groups = Vec::new();
    push_group(&mut constraints, &mut groups, atoms, "planted-binary", false);
    let skeleton = ConstraintSet::with_groups(spec.schema.clone(), constraints, groups)?;

    let lambda = LambdaVector(lambda_star);
    let targets = exact_expectations(&skeleton, &lambda, spec.budget)?;
    let cs = skeleton.with_targets(&targets)?;
    Ok((cs, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{solve_exact, EnumeratedModel, ExactOptions, DEFAULT_ENUM_BUDGET};

    #[test]
    fn zero_lambda_gives_product_of_uniform_targets() {
        let spec = PlantedFamilySpec::new(&[3, 3, 3], 6, (-1e-12, 1e-12), 4, DEFAULT_ENUM_BUDGET)
            .unwrap();
        let (cs, _) = planted_family_generate::<f64>(&spec).unwrap();
        for c in cs.constraints() {
            assert!((c.target() - 1.0 / 9.0).abs() < 1e-9);
        }
    }

    #[test]
    fn atoms_are_binary_only_and_distinct() {
        let spec =
            PlantedFamilySpec::new(&[3; 6], 20, (-1.1, 1.1), 99, DEFAULT_ENUM_BUDGET).unwrap();
        let (cs, lambda) = planted_family_generate::<f64>(&spec).unwrap();
        assert_eq!(cs.len(), 20);
        assert_eq!(lambda.len(), 20);
        assert!(cs.constraints().iter().all(|c| c.arity() == 2));
        assert!(lambda.iter().all(|&l| (-1.1..=1.1).contains(&l)));
    }

    #[test]
    fn targets_equal_exact_expectations_bit_for_bit() {
        let spec =
            PlantedFamilySpec::new(&[3, 3, 2, 4], 10, (-1.1, 1.1), 5, DEFAULT_ENUM_BUDGET).unwrap();
        let (cs, lambda) = planted_family_generate::<f64>(&spec).unwrap();
        let again = exact_expectations(&cs, &lambda, DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(cs.targets(), again);
    }

    #[test]
    fn entropy_of_k10_family_in_reported_band() {
        // 10 attributes of size 3, 30 binary atoms, draws in [-1.1, 1.1]:
        // model entropy lands between 9.5 and 11.0 nats (max is ln 3^10 ≈ 10.99)
        let spec =
            PlantedFamilySpec::new(&[3; 10], 30, (-1.1, 1.1), 20_260_115, DEFAULT_ENUM_BUDGET)
                .unwrap();
        let (cs, lambda) = planted_family_generate::<f64>(&spec).unwrap();
        let model = EnumeratedModel::new(&cs, &lambda, DEFAULT_ENUM_BUDGET).unwrap();
        let h = model.entropy();
        assert!((9.5..11.0).contains(&h), "entropy {h}");
    }

    #[test]
    fn exact_solver_recovers_planted_lambda() {
        let spec =
            PlantedFamilySpec::new(&[3, 3, 3, 2], 12, (-1.1, 1.1), 17, DEFAULT_ENUM_BUDGET)
                .unwrap();
        let (cs, lambda_star) = planted_family_generate::<f64>(&spec).unwrap();
        let opts = ExactOptions {
            tol: 1e-9,
            ..Default::default()
        };
        let (lambda_hat, report) = solve_exact(&cs, &cs.targets(), &opts).unwrap();
        assert!(report.converged);
        assert!(
            lambda_hat.relative_distance(&lambda_star) < 1e-3,
            "distance {}",
            lambda_hat.relative_distance(&lambda_star)
        );
    }
}
