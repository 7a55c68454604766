//! Planted-pattern benchmark generator.
//!
//! Ground truth is built per individual: each planted pattern activates
//! independently with its frequency; overlaps are resolved by ascending
//! pattern index (a later active pattern writes only attributes not already
//! fixed this draw); uncovered attributes are drawn from base marginals.
//! Constraint targets are the empirical frequencies of all unary atoms plus
//! full tables over each pattern's attribute set.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::generators::SampleMatrix;
use crate::model::{
    push_group, AtomicConstraint, AttributeSchema, ConstraintSet,
};
use crate::rng::{next_unit_f64, substream, tag};
use crate::scalar::{s_usize, Scalar};

/// One planted pattern: attributes, values, activation frequency.
#[derive(Debug, Clone)]
pub struct WuPattern {
    pub attrs: Vec<usize>,
    pub values: Vec<usize>,
    pub frequency: f64,
}

#[derive(Debug, Clone)]
pub struct WuInstanceSpec {
    pub schema: AttributeSchema,
    pub base_marginals: Vec<Vec<f64>>,
    pub patterns: Vec<WuPattern>,
    pub n_data: usize,
    pub seed: u64,
}

impl WuInstanceSpec {
    pub fn new(
        schema: AttributeSchema,
        base_marginals: Vec<Vec<f64>>,
        patterns: Vec<WuPattern>,
        n_data: usize,
        seed: u64,
    ) -> Result<Self> {
        if base_marginals.len() != schema.attr_count() {
            return Err(Error::invalid("one base marginal per attribute required"));
        }
        for (k, m) in base_marginals.iter().enumerate() {
            if m.len() != schema.domain_size(k) {
                return Err(Error::invalid(format!("marginal length mismatch at attribute {k}")));
            }
            if m.iter().any(|&p| p < 0.0) || (m.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("marginal of attribute {k} is not a distribution")));
            }
        }
        for p in &patterns {
            if p.attrs.len() < 2 || p.attrs.len() > 3 {
                return Err(Error::invalid("patterns must be binary or ternary"));
            }
            if !(0.05..=0.35).contains(&p.frequency) {
                return Err(Error::invalid(format!(
                    "pattern frequency {} outside (0.05, 0.35)",
                    p.frequency
                )));
            }
            if p.attrs.len() != p.values.len() {
                return Err(Error::invalid("pattern attrs/values length mismatch"));
            }
            let mut sorted = p.attrs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != p.attrs.len() {
                return Err(Error::invalid("pattern attributes must be distinct"));
            }
            for (&a, &v) in p.attrs.iter().zip(&p.values) {
                if a >= schema.attr_count() || v >= schema.domain_size(a) {
                    return Err(Error::invalid("pattern out of schema range"));
                }
            }
        }
        if n_data == 0 {
            return Err(Error::invalid("n_data must be at least 1"));
        }
        Ok(WuInstanceSpec {
            schema,
            base_marginals,
            patterns,
            n_data,
            seed,
        })
    }

    /// Random instance: base marginals bounded away from zero, patterns on
    /// distinct attribute sets with frequencies uniform in (0.05, 0.35).
    pub fn random(
        domain_sizes: &[usize],
        pattern_count: usize,
        pattern_arity: usize,
        n_data: usize,
        seed: u64,
    ) -> Result<Self> {
        let schema = AttributeSchema::unnamed(domain_sizes)?;
        let k = schema.attr_count();
        if pattern_arity > k {
            return Err(Error::invalid("pattern arity exceeds attribute count"));
        }
        let mut marg_rng = substream(&[seed, tag::WU_MARGINALS]);
        let base_marginals: Vec<Vec<f64>> = domain_sizes
            .iter()
            .map(|&d| {
                let raw: Vec<f64> = (0..d)
                    .map(|_| 0.2 + 0.8 * next_unit_f64(&mut marg_rng))
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            })
            .collect();

        let mut pat_rng = substream(&[seed, tag::WU_PATTERNS]);
        let mut used_sets: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut patterns = Vec::with_capacity(pattern_count);
        let mut guard = 0usize;
        while patterns.len() < pattern_count {
            guard += 1;
            if guard > 10_000 {
                return Err(Error::invalid("could not place distinct pattern attribute sets"));
            }
            let mut attrs: BTreeSet<usize> = BTreeSet::new();
            while attrs.len() < pattern_arity {
                attrs.insert((next_unit_f64(&mut pat_rng) * k as f64) as usize % k);
            }
            let attrs: Vec<usize> = attrs.into_iter().collect();
            if !used_sets.insert(attrs.clone()) {
                continue;
            }
            let values: Vec<usize> = attrs
                .iter()
                .map(|&a| {
                    let d = schema.domain_size(a);
                    ((next_unit_f64(&mut pat_rng) * d as f64) as usize).min(d - 1)
                })
                .collect();
            let frequency = 0.05 + 0.30 * next_unit_f64(&mut pat_rng);
            patterns.push(WuPattern {
                attrs,
                values,
                frequency,
            });
        }
        WuInstanceSpec::new(schema, base_marginals, patterns, n_data, seed)
    }

    /// The K=6 validation instance: domains [3,3,3,2,2,2], three binary
    /// patterns at frequencies 0.251, 0.235, 0.349, targets from 100,000
    /// draws. Expands to 15 unary + 18 binary = 33 atoms.
    pub fn a0(seed: u64) -> WuInstanceSpec {
        let schema = AttributeSchema::unnamed(&[3, 3, 3, 2, 2, 2]).unwrap();
        let mut marg_rng = substream(&[seed, tag::WU_MARGINALS]);
        let base_marginals: Vec<Vec<f64>> = schema
            .domain_sizes()
            .iter()
            .map(|&d| {
                let raw: Vec<f64> = (0..d)
                    .map(|_| 0.2 + 0.8 * next_unit_f64(&mut marg_rng))
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            })
            .collect();
        let patterns = vec![
            WuPattern {
                attrs: vec![0, 3],
                values: vec![0, 0],
                frequency: 0.251,
            },
            WuPattern {
                attrs: vec![1, 4],
                values: vec![0, 0],
                frequency: 0.235,
            },
            WuPattern {
                attrs: vec![2, 5],
                values: vec![0, 0],
                frequency: 0.349,
            },
        ];
        WuInstanceSpec::new(schema, base_marginals, patterns, 100_000, seed).unwrap()
    }

    /// The K=8 instance: domains [4,4,2,2,4,4,3,2], four binary patterns,
    /// 200,000 draws. Expands to 25 unary + 36 binary = 61 atoms.
    pub fn a1a(seed: u64) -> WuInstanceSpec {
        let schema = AttributeSchema::unnamed(&[4, 4, 2, 2, 4, 4, 3, 2]).unwrap();
        let mut marg_rng = substream(&[seed, tag::WU_MARGINALS]);
        let base_marginals: Vec<Vec<f64>> = schema
            .domain_sizes()
            .iter()
            .map(|&d| {
                let raw: Vec<f64> = (0..d)
                    .map(|_| 0.2 + 0.8 * next_unit_f64(&mut marg_rng))
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            })
            .collect();
        // pattern pair tables: 4*3 + 4*2 + 2*4 + 2*4 = 36 binary atoms
        let patterns = vec![
            WuPattern {
                attrs: vec![0, 6],
                values: vec![0, 0],
                frequency: 0.095,
            },
            WuPattern {
                attrs: vec![1, 7],
                values: vec![1, 0],
                frequency: 0.283,
            },
            WuPattern {
                attrs: vec![2, 4],
                values: vec![0, 2],
                frequency: 0.180,
            },
            WuPattern {
                attrs: vec![3, 5],
                values: vec![1, 1],
                frequency: 0.226,
            },
        ];
        WuInstanceSpec::new(schema, base_marginals, patterns, 200_000, seed).unwrap()
    }
}

/// Sample the ground truth and expand empirical targets.
pub fn wu_generate<S: Scalar>(spec: &WuInstanceSpec) -> (ConstraintSet<S>, SampleMatrix) {
    let k = spec.schema.attr_count();
    let n = spec.n_data;
    let mut data = vec![0usize; n * k];
    let mut fixed = vec![false; k];
    for i in 0..n {
        let mut rng = substream(&[spec.seed, tag::WU_ROW, i as u64]);
        fixed.fill(false);
        let row = &mut data[i * k..(i + 1) * k];
        // independent Bernoulli activation per pattern, ascending index
        for p in &spec.patterns {
            let active = next_unit_f64(&mut rng) < p.frequency;
            if active {
                for (&a, &v) in p.attrs.iter().zip(&p.values) {
                    if !fixed[a] {
                        row[a] = v;
                        fixed[a] = true;
                    }
                }
            }
        }
        for (kk, is_fixed) in fixed.iter().enumerate() {
            if !is_fixed {
                row[kk] = draw_from_marginal(&spec.base_marginals[kk], next_unit_f64(&mut rng));
            }
        }
    }
    let sample = SampleMatrix::new(data, n, k);

    // unary atoms for every attribute
    let mut constraints = Vec::new();
    let mut groups = Vec::new();
    let n_s = s_usize::<S>(n);
    for attr in 0..k {
        let d = spec.schema.domain_size(attr);
        let mut counts = vec![0usize; d];
        for i in 0..n {
            counts[sample.row(i)[attr]] += 1;
        }
        let atoms: Vec<AtomicConstraint<S>> = counts
            .iter()
            .enumerate()
            .map(|(v, &c)| {
                AtomicConstraint::new(&spec.schema, &[attr], &[v], s_usize::<S>(c) / n_s)
                    .expect("valid unary atom")
            })
            .collect();
        push_group(
            &mut constraints,
            &mut groups,
            atoms,
            &format!("unary:{}", spec.schema.name(attr)),
            true,
        );
    }

    // full joint table over each pattern's attribute set (deduplicated)
    let mut seen_sets: BTreeSet<Vec<usize>> = BTreeSet::new();
    for p in &spec.patterns {
        let mut attrs = p.attrs.clone();
        attrs.sort_unstable();
        if !seen_sets.insert(attrs.clone()) {
            continue;
        }
        let dims: Vec<usize> = attrs.iter().map(|&a| spec.schema.domain_size(a)).collect();
        let cells: usize = dims.iter().product();
        let mut counts = vec![0usize; cells];
        for i in 0..n {
            let row = sample.row(i);
            let mut cell = 0usize;
            for (&a, &d) in attrs.iter().zip(&dims) {
                cell = cell * d + row[a];
            }
            counts[cell] += 1;
        }
        let mut atoms = Vec::with_capacity(cells);
        let mut index = vec![0usize; attrs.len()];
        for cell in 0..cells {
            atoms.push(
                AtomicConstraint::new(&spec.schema, &attrs, &index, s_usize::<S>(counts[cell]) / n_s)
                    .expect("valid pattern atom"),
            );
            for axis in (0..attrs.len()).rev() {
                index[axis] += 1;
                if index[axis] < dims[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        let label = format!(
            "planted:{}",
            attrs
                .iter()
                .map(|&a| spec.schema.name(a).to_string())
                .collect::<Vec<_>>()
                .join("-")
        );
        push_group(&mut constraints, &mut groups, atoms, &label, true);
    }

    let cs = ConstraintSet::with_groups(spec.schema.clone(), constraints, groups)
        .expect("generated constraints are unique and normalized");
    (cs, sample)
}

#[inline]
fn draw_from_marginal(marginal: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (v, &p) in marginal.iter().enumerate() {
        acc += p;
        if u < acc {
            return v;
        }
    }
    marginal.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a0_expands_to_33_atoms() {
        let spec = WuInstanceSpec::a0(7);
        let (cs, _) = wu_generate::<f64>(&spec);
        assert_eq!(cs.len(), 33);
        let hist = cs.arity_histogram();
        assert_eq!(hist, vec![(1, 15), (2, 18)]);
    }

    #[test]
    fn a1a_expands_to_61_atoms() {
        let spec = WuInstanceSpec::a1a(3);
        let (cs, _) = wu_generate::<f64>(&spec);
        assert_eq!(cs.len(), 61);
        assert_eq!(cs.arity_histogram(), vec![(1, 25), (2, 36)]);
    }

    #[test]
    fn no_patterns_reproduces_base_marginals() {
        let spec = WuInstanceSpec::random(&[3, 2, 4], 0, 2, 50_000, 20_240_601).unwrap();
        let (cs, _) = wu_generate::<f64>(&spec);
        let bound = 4.0 / (spec.n_data as f64).sqrt();
        for g in cs.groups() {
            if g.arity != 1 {
                continue;
            }
            for (offset, c) in cs.constraints()[g.start..g.start + g.len].iter().enumerate() {
                let attr = c.pattern_attrs()[0];
                let expected = spec.base_marginals[attr][offset];
                assert!(
                    (c.target() - expected).abs() < bound,
                    "attr {attr} value {offset}: {} vs {expected}",
                    c.target()
                );
            }
        }
    }

    #[test]
    fn single_pattern_joint_frequency_exceeds_activation_rate() {
        // analytic lower bound ν + (1−ν)·q0·q1, checked against simulation
        let schema = AttributeSchema::unnamed(&[2, 2, 2]).unwrap();
        let marginals = vec![vec![0.5, 0.5]; 3];
        let pattern = WuPattern {
            attrs: vec![0, 1],
            values: vec![0, 0],
            frequency: 0.30,
        };
        let spec = WuInstanceSpec::new(schema, marginals, vec![pattern], 100_000, 5).unwrap();
        let (cs, sample) = wu_generate::<f64>(&spec);
        let count = (0..sample.rows)
            .filter(|&i| sample.row(i)[0] == 0 && sample.row(i)[1] == 0)
            .count();
        let freq = count as f64 / sample.rows as f64;
        let expected = 0.30 + 0.70 * 0.25;
        let sigma = (expected * (1.0 - expected) / sample.rows as f64).sqrt();
        assert!((freq - expected).abs() < 4.0 * sigma, "freq {freq} vs {expected}");
        // the matching atom's target equals the empirical frequency
        let atom = cs
            .constraints()
            .iter()
            .find(|c| c.pattern_attrs() == [0, 1] && c.pattern_values() == [0, 0])
            .unwrap();
        assert_eq!(atom.target(), freq);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = WuInstanceSpec::a0(11);
        let (cs1, s1) = wu_generate::<f64>(&spec);
        let (cs2, s2) = wu_generate::<f64>(&spec);
        assert_eq!(s1, s2);
        assert_eq!(cs1.targets(), cs2.targets());
    }

    #[test]
    fn frequency_range_is_enforced() {
        let schema = AttributeSchema::unnamed(&[2, 2]).unwrap();
        let marginals = vec![vec![0.5, 0.5]; 2];
        let bad = WuPattern {
            attrs: vec![0, 1],
            values: vec![0, 0],
            frequency: 0.5,
        };
        assert!(WuInstanceSpec::new(schema, marginals, vec![bad], 100, 1).is_err());
    }
}
