//! Categorical product space, atomic indicator constraints, feature
//! evaluation, tuple energies, and the per-attribute constraint lookup shared
//! by every solver.
//!
//! All types are immutable after construction and safe to share across
//! threads. Category values are dense integer indices `0..d_k`; the
//! label/index mapping lives only in [`AttributeSchema`].

use std::collections::HashSet;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::scalar::{s, Scalar};

/// The K categorical attributes: names, domain sizes, category labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    names: Vec<String>,
    domain_sizes: Vec<usize>,
    labels: Vec<Vec<String>>,
}

impl AttributeSchema {
    /// Build a schema from `(name, category labels)` pairs. Domain sizes are
    /// the label counts; every attribute needs at least two categories.
    pub fn new(attrs: Vec<(String, Vec<String>)>) -> Result<Self> {
        if attrs.is_empty() {
            return Err(Error::invalid("schema needs at least one attribute"));
        }
        let mut names = Vec::with_capacity(attrs.len());
        let mut domain_sizes = Vec::with_capacity(attrs.len());
        let mut labels = Vec::with_capacity(attrs.len());
        let mut seen = HashSet::new();
        for (name, cats) in attrs {
            if cats.len() < 2 {
                return Err(Error::invalid(format!(
                    "attribute '{name}' has {} categories, need at least 2",
                    cats.len()
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::invalid(format!("duplicate attribute name '{name}'")));
            }
            let mut cat_seen = HashSet::new();
            for c in &cats {
                if !cat_seen.insert(c.clone()) {
                    return Err(Error::invalid(format!(
                        "attribute '{name}' has duplicate category '{c}'"
                    )));
                }
            }
            names.push(name);
            domain_sizes.push(cats.len());
            labels.push(cats);
        }
        Ok(AttributeSchema {
            names,
            domain_sizes,
            labels,
        })
    }

    /// Convenience constructor with anonymous labels `a<k>_<v>`.
    pub fn unnamed(domain_sizes: &[usize]) -> Result<Self> {
        let attrs = domain_sizes
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                (
                    format!("a{k}"),
                    (0..d).map(|v| format!("a{k}_{v}")).collect(),
                )
            })
            .collect();
        AttributeSchema::new(attrs)
    }

    pub fn attr_count(&self) -> usize {
        self.names.len()
    }

    pub fn domain_sizes(&self) -> &[usize] {
        &self.domain_sizes
    }

    pub fn domain_size(&self, attr: usize) -> usize {
        self.domain_sizes[attr]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, attr: usize) -> &str {
        &self.names[attr]
    }

    pub fn label(&self, attr: usize, value: usize) -> &str {
        &self.labels[attr][value]
    }

    pub fn labels(&self, attr: usize) -> &[String] {
        &self.labels[attr]
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value_index(&self, attr: usize, label: &str) -> Option<usize> {
        self.labels[attr].iter().position(|l| l == label)
    }

    /// Natural log of |X| = Σ_k ln d_k, computable without materializing |X|.
    pub fn log_space_size(&self) -> f64 {
        self.domain_sizes.iter().map(|&d| (d as f64).ln()).sum()
    }

    /// |X| if it fits in u128.
    pub fn space_size(&self) -> Option<u128> {
        let mut acc: u128 = 1;
        for &d in &self.domain_sizes {
            acc = acc.checked_mul(d as u128)?;
        }
        Some(acc)
    }

    /// Validate a tuple of category indices against this schema.
    pub fn check_tuple(&self, tuple: &[usize]) -> Result<()> {
        if tuple.len() != self.attr_count() {
            return Err(Error::invalid(format!(
                "tuple length {} does not match K={}",
                tuple.len(),
                self.attr_count()
            )));
        }
        for (k, (&v, &d)) in tuple.iter().zip(&self.domain_sizes).enumerate() {
            if v >= d {
                return Err(Error::invalid(format!(
                    "category index {v} out of range for attribute {k} (d={d})"
                )));
            }
        }
        Ok(())
    }
}

/// One pattern indicator: "attributes S take values v", with target frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicConstraint<S> {
    pattern_attrs: Vec<usize>,
    pattern_values: Vec<usize>,
    target: S,
}

impl<S: Scalar> AtomicConstraint<S> {
    /// Construct an atom; `(attr, value)` pairs are sorted by attribute so the
    /// stored indices are strictly increasing.
    pub fn new(
        schema: &AttributeSchema,
        attrs: &[usize],
        values: &[usize],
        target: S,
    ) -> Result<Self> {
        if attrs.is_empty() || attrs.len() > schema.attr_count() {
            return Err(Error::invalid(format!(
                "pattern arity {} out of range 1..={}",
                attrs.len(),
                schema.attr_count()
            )));
        }
        if attrs.len() != values.len() {
            return Err(Error::invalid("pattern attrs/values length mismatch"));
        }
        let mut pairs: Vec<(usize, usize)> =
            attrs.iter().copied().zip(values.iter().copied()).collect();
        pairs.sort_by_key(|&(a, _)| a);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!(
                    "duplicate attribute {} in pattern",
                    w[0].0
                )));
            }
        }
        for &(a, v) in &pairs {
            if a >= schema.attr_count() {
                return Err(Error::invalid(format!("pattern attribute {a} out of range")));
            }
            if v >= schema.domain_size(a) {
                return Err(Error::invalid(format!(
                    "pattern value {v} out of range for attribute {a}"
                )));
            }
        }
        if target < S::zero() || target > S::one() {
            return Err(Error::invalid(format!("target {target} outside [0, 1]")));
        }
        Ok(AtomicConstraint {
            pattern_attrs: pairs.iter().map(|&(a, _)| a).collect(),
            pattern_values: pairs.iter().map(|&(_, v)| v).collect(),
            target,
        })
    }

    pub fn pattern_attrs(&self) -> &[usize] {
        &self.pattern_attrs
    }

    pub fn pattern_values(&self) -> &[usize] {
        &self.pattern_values
    }

    pub fn arity(&self) -> usize {
        self.pattern_attrs.len()
    }

    pub fn target(&self) -> S {
        self.target
    }

    /// Indicator evaluation on a full tuple.
    #[inline]
    pub fn matches(&self, tuple: &[usize]) -> bool {
        self.pattern_attrs
            .iter()
            .zip(&self.pattern_values)
            .all(|(&a, &v)| tuple[a] == v)
    }
}

/// Provenance of a block of atoms expanded from one source table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintGroup {
    pub label: String,
    pub arity: usize,
    /// Index range [start, start+len) into the constraint list.
    pub start: usize,
    pub len: usize,
    /// Whether the group covers every cell of a marginal table, in which case
    /// its targets must sum to 1.
    pub full_table: bool,
}

/// Attribute schema plus the list of m atomic constraints; the single source
/// of truth shared by every solver.
#[derive(Debug, Clone)]
pub struct ConstraintSet<S> {
    schema: AttributeSchema,
    constraints: Vec<AtomicConstraint<S>>,
    groups: Vec<ConstraintGroup>,
}

/// Tolerance for "full marginal table sums to one" validation.
const GROUP_SUM_TOL: f64 = 1e-9;

impl<S: Scalar> ConstraintSet<S> {
    /// Build from ungrouped atoms.
    pub fn new(schema: AttributeSchema, constraints: Vec<AtomicConstraint<S>>) -> Result<Self> {
        Self::with_groups(schema, constraints, Vec::new())
    }

    /// Build with group metadata. Rejects duplicate `(S_j, v_j)` patterns and
    /// full-table groups whose targets do not sum to 1.
    pub fn with_groups(
        schema: AttributeSchema,
        constraints: Vec<AtomicConstraint<S>>,
        groups: Vec<ConstraintGroup>,
    ) -> Result<Self> {
        let mut seen: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
        for c in &constraints {
            if !seen.insert((c.pattern_attrs.clone(), c.pattern_values.clone())) {
                return Err(Error::invalid(format!(
                    "duplicate constraint pattern on attributes {:?} values {:?}",
                    c.pattern_attrs, c.pattern_values
                )));
            }
        }
        for g in &groups {
            if g.start + g.len > constraints.len() {
                return Err(Error::invalid(format!(
                    "group '{}' range out of bounds",
                    g.label
                )));
            }
            if g.full_table {
                let sum: f64 = constraints[g.start..g.start + g.len]
                    .iter()
                    .map(|c| c.target.to_f64().unwrap_or(f64::NAN))
                    .sum();
                if (sum - 1.0).abs() > GROUP_SUM_TOL {
                    return Err(Error::invalid(format!(
                        "full-table group '{}' targets sum to {sum}, expected 1",
                        g.label
                    )));
                }
            }
        }
        Ok(ConstraintSet {
            schema,
            constraints,
            groups,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn constraints(&self) -> &[AtomicConstraint<S>] {
        &self.constraints
    }

    pub fn groups(&self) -> &[ConstraintGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Targets as a vector aligned with the constraint list.
    pub fn targets(&self) -> Vec<S> {
        self.constraints.iter().map(|c| c.target).collect()
    }

    /// Indices of atoms with target below `floor` (flagged; excluded from MRE).
    pub fn zero_target_atoms(&self, floor: S) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.target <= floor)
            .map(|(j, _)| j)
            .collect()
    }

    /// A copy with identical patterns but new targets.
    pub fn with_targets(&self, targets: &[S]) -> Result<Self> {
        if targets.len() != self.len() {
            return Err(Error::invalid("target vector length mismatch"));
        }
        let mut out = self.clone();
        for (c, &t) in out.constraints.iter_mut().zip(targets) {
            if t < S::zero() || t > S::one() {
                return Err(Error::invalid(format!("target {t} outside [0, 1]")));
            }
            c.target = t;
        }
        Ok(out)
    }

    /// Atom counts keyed by arity, ascending.
    pub fn arity_histogram(&self) -> Vec<(usize, usize)> {
        let mut by_arity = std::collections::BTreeMap::new();
        for c in &self.constraints {
            *by_arity.entry(c.arity()).or_insert(0usize) += 1;
        }
        by_arity.into_iter().collect()
    }
}

/// Natural parameters λ, index-aligned with a [`ConstraintSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaVector<S>(pub Vec<S>);

impl<S: Scalar> LambdaVector<S> {
    pub fn zeros(m: usize) -> Self {
        LambdaVector(vec![S::zero(); m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.0.iter()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> S {
        self.0.iter().map(|&x| x * x).sum::<S>().sqrt()
    }

    /// Max-abs norm.
    pub fn inf_norm(&self) -> S {
        self.0
            .iter()
            .fold(S::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc })
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Relative Euclidean distance ‖self − other‖ / ‖other‖.
    pub fn relative_distance(&self, other: &Self) -> S {
        let diff: S = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        diff.sqrt() / other.norm()
    }

    /// Add `c` to every unary atom of attribute `attr` (a gauge shift when the
    /// unary block is complete).
    pub fn shift_unary_block(&mut self, cs: &ConstraintSet<S>, attr: usize, c: S) {
        for (j, con) in cs.constraints().iter().enumerate() {
            if con.arity() == 1 && con.pattern_attrs()[0] == attr {
                self.0[j] += c;
            }
        }
    }
}

impl<S> Deref for LambdaVector<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.0
    }
}

impl<S> From<Vec<S>> for LambdaVector<S> {
    fn from(v: Vec<S>) -> Self {
        LambdaVector(v)
    }
}

/// One entry of the per-attribute lookup: constraint j requires attribute k to
/// take `own_value` and the remaining pattern attributes to match the context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupEntry {
    pub constraint: usize,
    pub own_value: usize,
    pub context_attrs: Vec<usize>,
    pub context_values: Vec<usize>,
}

impl LookupEntry {
    /// Does the tuple's context (all attributes except the owner) match?
    #[inline]
    pub fn context_matches(&self, tuple: &[usize]) -> bool {
        self.context_attrs
            .iter()
            .zip(&self.context_values)
            .all(|(&a, &v)| tuple[a] == v)
    }
}

/// Per-attribute index of the constraints touching that attribute.
#[derive(Debug, Clone)]
pub struct AttrLookup {
    per_attr: Vec<Vec<LookupEntry>>,
}

impl AttrLookup {
    pub fn entries(&self, attr: usize) -> &[LookupEntry] {
        &self.per_attr[attr]
    }

    pub fn attr_count(&self) -> usize {
        self.per_attr.len()
    }

    /// Total entries across all attributes; equals Σ_j |S_j|.
    pub fn total_entries(&self) -> usize {
        self.per_attr.iter().map(|v| v.len()).sum()
    }
}

/// Evaluate all m indicators on one tuple.
pub fn evaluate_features<S: Scalar>(tuple: &[usize], cs: &ConstraintSet<S>) -> Result<Vec<bool>> {
    cs.schema().check_tuple(tuple)?;
    Ok(cs.constraints().iter().map(|c| c.matches(tuple)).collect())
}

/// Log-unnormalized energy u_x = Σ_j λ_j f_j(x).
pub fn tuple_energy<S: Scalar>(
    tuple: &[usize],
    cs: &ConstraintSet<S>,
    lambda: &LambdaVector<S>,
) -> Result<S> {
    cs.schema().check_tuple(tuple)?;
    if lambda.len() != cs.len() {
        return Err(Error::invalid(format!(
            "lambda length {} does not match m={}",
            lambda.len(),
            cs.len()
        )));
    }
    let mut u = S::zero();
    for (c, &l) in cs.constraints().iter().zip(lambda.iter()) {
        if c.matches(tuple) {
            u += l;
        }
    }
    Ok(u)
}

/// Build the per-attribute lookup; entries for each attribute are ordered by
/// ascending constraint index.
pub fn build_attr_lookup<S: Scalar>(cs: &ConstraintSet<S>) -> AttrLookup {
    let k = cs.schema().attr_count();
    let mut per_attr: Vec<Vec<LookupEntry>> = vec![Vec::new(); k];
    for (j, c) in cs.constraints().iter().enumerate() {
        for (pos, &attr) in c.pattern_attrs().iter().enumerate() {
            let own_value = c.pattern_values()[pos];
            let mut context_attrs = Vec::with_capacity(c.arity() - 1);
            let mut context_values = Vec::with_capacity(c.arity() - 1);
            for (q, &other) in c.pattern_attrs().iter().enumerate() {
                if q != pos {
                    context_attrs.push(other);
                    context_values.push(c.pattern_values()[q]);
                }
            }
            per_attr[attr].push(LookupEntry {
                constraint: j,
                own_value,
                context_attrs,
                context_values,
            });
        }
    }
    AttrLookup { per_attr }
}

/// How a dense table's cells map to joint targets.
pub enum TableKind<'a, S> {
    /// Cells already hold joint probabilities.
    Joint,
    /// Cells hold P(last attr | leading attrs); `prior` is a dense joint
    /// distribution over the leading attributes, so cell targets become joint
    /// probabilities prior × conditional.
    Conditional { prior: &'a [S] },
}

/// Expand one dense probability table into a block of atoms, one per cell,
/// with joint-probability targets. `attrs` orders the table axes (row-major);
/// for conditional tables the last axis is the conditioned attribute.
pub fn expand_marginal_table<S: Scalar>(
    schema: &AttributeSchema,
    attrs: &[usize],
    table: &[S],
    kind: TableKind<'_, S>,
    label: &str,
) -> Result<Vec<AtomicConstraint<S>>> {
    if attrs.is_empty() {
        return Err(Error::invalid("table needs at least one attribute"));
    }
    let dims: Vec<usize> = attrs
        .iter()
        .map(|&a| {
            if a < schema.attr_count() {
                Ok(schema.domain_size(a))
            } else {
                Err(Error::invalid(format!("table attribute {a} out of range")))
            }
        })
        .collect::<Result<_>>()?;
    let cells: usize = dims.iter().product();
    if table.len() != cells {
        return Err(Error::invalid(format!(
            "table '{label}' has {} cells, schema expects {cells}",
            table.len()
        )));
    }
    for &p in table {
        if p < S::zero() || !p.is_finite() {
            return Err(Error::invalid(format!(
                "table '{label}' has negative or non-finite cell {p}"
            )));
        }
    }

    let cond_rows: usize;
    let cond_cols: usize;
    match kind {
        TableKind::Joint => {
            cond_rows = 0;
            cond_cols = 0;
        }
        TableKind::Conditional { prior } => {
            cond_cols = *dims.last().unwrap();
            cond_rows = cells / cond_cols;
            if prior.len() != cond_rows {
                return Err(Error::invalid(format!(
                    "table '{label}': prior length {} does not match {cond_rows} conditioning cells",
                    prior.len()
                )));
            }
            for row in 0..cond_rows {
                let sum: f64 = table[row * cond_cols..(row + 1) * cond_cols]
                    .iter()
                    .map(|p| p.to_f64().unwrap())
                    .sum();
                if (sum - 1.0).abs() > GROUP_SUM_TOL {
                    return Err(Error::invalid(format!(
                        "table '{label}' row {row} sums to {sum}, expected 1"
                    )));
                }
            }
        }
    }

    let mut atoms = Vec::with_capacity(cells);
    let mut index = vec![0usize; attrs.len()];
    for cell in 0..cells {
        let target = match kind {
            TableKind::Joint => table[cell],
            TableKind::Conditional { prior } => {
                let row = cell / cond_cols;
                let _ = cond_rows;
                prior[row] * table[cell]
            }
        };
        atoms.push(AtomicConstraint::new(
            schema,
            attrs,
            &index,
            clamp_unit(target),
        )?);
        // advance the mixed-radix cell index, last axis fastest
        for axis in (0..attrs.len()).rev() {
            index[axis] += 1;
            if index[axis] < dims[axis] {
                break;
            }
            index[axis] = 0;
        }
    }
    Ok(atoms)
}

/// Guard against targets drifting a few ulps outside [0, 1] under products.
fn clamp_unit<S: Scalar>(x: S) -> S {
    if x > S::one() {
        S::one()
    } else if x < S::zero() {
        S::zero()
    } else {
        x
    }
}

/// Append a block of atoms as a named group, returning the group record.
pub fn push_group<S: Scalar>(
    constraints: &mut Vec<AtomicConstraint<S>>,
    groups: &mut Vec<ConstraintGroup>,
    atoms: Vec<AtomicConstraint<S>>,
    label: &str,
    full_table: bool,
) {
    let start = constraints.len();
    let len = atoms.len();
    let arity = atoms.first().map(|a| a.arity()).unwrap_or(0);
    constraints.extend(atoms);
    groups.push(ConstraintGroup {
        label: label.to_string(),
        arity,
        start,
        len,
        full_table,
    });
}

/// Iterate all tuples of the schema in mixed-radix order (last attribute
/// fastest), calling `f` with the current tuple.
pub fn for_each_tuple(schema: &AttributeSchema, mut f: impl FnMut(&[usize])) {
    let dims = schema.domain_sizes();
    let k = dims.len();
    let mut tuple = vec![0usize; k];
    loop {
        f(&tuple);
        let mut axis = k;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            tuple[axis] += 1;
            if tuple[axis] < dims[axis] {
                break;
            }
            tuple[axis] = 0;
        }
    }
}

#[allow(dead_code)]
pub(crate) fn uniform_frequency<S: Scalar>(schema: &AttributeSchema, atom: &AtomicConstraint<S>) -> S {
    let mut p = S::one();
    for &a in atom.pattern_attrs() {
        p /= s::<S>(schema.domain_size(a) as f64);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> AttributeSchema {
        AttributeSchema::unnamed(&[2, 2]).unwrap()
    }

    #[test]
    fn schema_rejects_degenerate_domains() {
        assert!(AttributeSchema::unnamed(&[2, 1]).is_err());
        assert!(AttributeSchema::unnamed(&[]).is_err());
    }

    #[test]
    fn log_space_size_is_sum_of_logs() {
        let schema = AttributeSchema::unnamed(&[3, 3, 3, 2, 2, 2]).unwrap();
        assert!((schema.log_space_size() - (216f64).ln()).abs() < 1e-12);
        assert_eq!(schema.space_size(), Some(216));
    }

    #[test]
    fn feature_evaluation_on_unary_atom() {
        let schema = two_by_two();
        let atom = AtomicConstraint::new(&schema, &[0], &[0], 0.5f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        assert_eq!(evaluate_features(&[0, 1], &cs).unwrap(), vec![true]);
        assert_eq!(evaluate_features(&[1, 0], &cs).unwrap(), vec![false]);
    }

    #[test]
    fn feature_evaluation_on_binary_atom_k3() {
        // brute force over all 8 tuples: exactly 2 match (1, *, 1)
        let schema = AttributeSchema::unnamed(&[2, 2, 2]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[0, 2], &[1, 1], 0.25f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        assert_eq!(evaluate_features(&[1, 0, 1], &cs).unwrap(), vec![true]);
        let mut matches = 0;
        for_each_tuple(cs.schema(), |t| {
            if cs.constraints()[0].matches(t) {
                matches += 1;
            }
        });
        assert_eq!(matches, 2);
    }

    #[test]
    fn feature_evaluation_rejects_out_of_range() {
        let schema = two_by_two();
        let atom = AtomicConstraint::new(&schema, &[0], &[0], 0.5f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        assert!(evaluate_features(&[2, 0], &cs).is_err());
        assert!(evaluate_features(&[0], &cs).is_err());
    }

    #[test]
    fn tuple_energy_examples() {
        let schema = two_by_two();
        let atom = AtomicConstraint::new(&schema, &[0, 1], &[0, 0], 0.5f64).unwrap();
        let cs = ConstraintSet::new(schema, vec![atom]).unwrap();
        let zero = LambdaVector::zeros(1);
        assert_eq!(tuple_energy(&[1, 1], &cs, &zero).unwrap(), 0.0);
        let lam = LambdaVector(vec![std::f64::consts::LN_2]);
        let u = tuple_energy(&[0, 0], &cs, &lam).unwrap();
        assert!((u - 0.6931471805599453).abs() < 1e-15);
        assert_eq!(tuple_energy(&[0, 1], &cs, &lam).unwrap(), 0.0);
        let wrong = LambdaVector(vec![1.0, 2.0]);
        assert!(tuple_energy(&[0, 0], &cs, &wrong).is_err());
    }

    #[test]
    fn energy_equals_feature_dot_lambda() {
        let schema = AttributeSchema::unnamed(&[3, 2, 4]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[2], 0.3f64).unwrap(),
            AtomicConstraint::new(&schema, &[1, 2], &[0, 3], 0.1).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1, 2], &[2, 0, 3], 0.05).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let lam = LambdaVector(vec![0.7, -1.3, 2.1]);
        for_each_tuple(cs.schema(), |t| {
            let feats = evaluate_features(t, &cs).unwrap();
            let dot: f64 = feats
                .iter()
                .zip(lam.iter())
                .map(|(&f, &l)| if f { l } else { 0.0 })
                .sum();
            assert_eq!(tuple_energy(t, &cs, &lam).unwrap(), dot);
        });
    }

    #[test]
    fn lookup_unary_and_binary_shape() {
        let schema = AttributeSchema::unnamed(&[2, 2, 2]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[0], 0.5f64).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1], &[1, 0], 0.2).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let lookup = build_attr_lookup(&cs);
        assert_eq!(lookup.entries(0).len(), 2);
        assert_eq!(lookup.entries(1).len(), 1);
        assert_eq!(lookup.entries(2).len(), 0);
        assert!(lookup.entries(0)[0].context_attrs.is_empty());
        assert_eq!(lookup.entries(1)[0].context_attrs, vec![0]);
        assert_eq!(lookup.entries(1)[0].context_values, vec![1]);
        assert_eq!(lookup.total_entries(), 3);
    }

    #[test]
    fn lookup_round_trips_constraints() {
        let schema = AttributeSchema::unnamed(&[3, 2, 2, 3]).unwrap();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[1], &[0], 0.4f64).unwrap(),
            AtomicConstraint::new(&schema, &[0, 3], &[2, 1], 0.2).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1, 2], &[1, 1, 0], 0.1).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let lookup = build_attr_lookup(&cs);
        // reconstruct each constraint's (attrs, values) from any one entry
        for (j, c) in cs.constraints().iter().enumerate() {
            for k in 0..cs.schema().attr_count() {
                for e in lookup.entries(k).iter().filter(|e| e.constraint == j) {
                    let mut pairs: Vec<(usize, usize)> = e
                        .context_attrs
                        .iter()
                        .copied()
                        .zip(e.context_values.iter().copied())
                        .collect();
                    pairs.push((k, e.own_value));
                    pairs.sort_by_key(|&(a, _)| a);
                    let attrs: Vec<usize> = pairs.iter().map(|&(a, _)| a).collect();
                    let values: Vec<usize> = pairs.iter().map(|&(_, v)| v).collect();
                    assert_eq!(attrs, c.pattern_attrs());
                    assert_eq!(values, c.pattern_values());
                }
            }
        }
        let total: usize = cs.constraints().iter().map(|c| c.arity()).sum();
        assert_eq!(lookup.total_entries(), total);
    }

    #[test]
    fn duplicate_patterns_rejected() {
        let schema = two_by_two();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[0], 0.5f64).unwrap(),
            AtomicConstraint::new(&schema, &[0], &[0], 0.3).unwrap(),
        ];
        assert!(ConstraintSet::new(schema, atoms).is_err());
    }

    #[test]
    fn expand_unary_marginal() {
        let schema = two_by_two();
        let atoms = expand_marginal_table(
            &schema,
            &[0],
            &[0.51f64, 0.49],
            TableKind::Joint,
            "sex",
        )
        .unwrap();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].target(), 0.51);
        assert_eq!(atoms[1].target(), 0.49);
    }

    #[test]
    fn expand_uniform_marginal_d4() {
        let schema = AttributeSchema::unnamed(&[4, 2]).unwrap();
        let atoms = expand_marginal_table(
            &schema,
            &[0],
            &[0.25f64, 0.25, 0.25, 0.25],
            TableKind::Joint,
            "u",
        )
        .unwrap();
        assert_eq!(atoms.len(), 4);
        assert!(atoms.iter().all(|a| a.target() == 0.25));
    }

    #[test]
    fn expand_conditional_with_prior() {
        // age prior 0.24 on first row, CPT cell 0.88 -> joint 0.2112
        let schema = AttributeSchema::new(vec![
            (
                "age".into(),
                vec!["0-24".into(), "25-49".into(), "50-66".into(), "67+".into()],
            ),
            ("marital".into(), vec!["never".into(), "married".into()]),
        ])
        .unwrap();
        let prior = [0.24f64, 0.34, 0.24, 0.18];
        let table = [
            0.88, 0.12, //
            0.27, 0.73, //
            0.12, 0.88, //
            0.08, 0.92,
        ];
        let atoms = expand_marginal_table(
            &schema,
            &[0, 1],
            &table,
            TableKind::Conditional { prior: &prior },
            "b1",
        )
        .unwrap();
        assert_eq!(atoms.len(), 8);
        assert!((atoms[0].target() - 0.2112).abs() < 1e-15);
        // group mass equals prior mass
        let sum: f64 = atoms.iter().map(|a| a.target()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expand_rejects_bad_rows() {
        let schema = two_by_two();
        let prior = [0.5f64, 0.5];
        let bad = [0.7f64, 0.2, 0.5, 0.5];
        assert!(expand_marginal_table(
            &schema,
            &[0, 1],
            &bad,
            TableKind::Conditional { prior: &prior },
            "bad"
        )
        .is_err());
        let negative = [-0.1f64, 1.1];
        assert!(
            expand_marginal_table(&schema, &[0], &negative, TableKind::Joint, "neg").is_err()
        );
    }

    #[test]
    fn atom_pairs_are_sorted_by_attribute() {
        let schema = AttributeSchema::unnamed(&[2, 3, 4]).unwrap();
        let atom = AtomicConstraint::new(&schema, &[2, 0], &[3, 1], 0.1f64).unwrap();
        assert_eq!(atom.pattern_attrs(), &[0, 2]);
        assert_eq!(atom.pattern_values(), &[1, 3]);
    }

    #[test]
    fn gauge_shift_touches_only_unary_block() {
        let schema = two_by_two();
        let atoms = vec![
            AtomicConstraint::new(&schema, &[0], &[0], 0.5f64).unwrap(),
            AtomicConstraint::new(&schema, &[0], &[1], 0.5).unwrap(),
            AtomicConstraint::new(&schema, &[0, 1], &[0, 0], 0.25).unwrap(),
        ];
        let cs = ConstraintSet::new(schema, atoms).unwrap();
        let mut lam = LambdaVector(vec![0.1f64, 0.2, 0.3]);
        lam.shift_unary_block(&cs, 0, 1.0);
        assert_eq!(lam.as_slice(), &[1.1, 1.2, 0.3]);
    }
}
