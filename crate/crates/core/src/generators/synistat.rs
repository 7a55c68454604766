//! The 15-variable demographic benchmark: a shallow Bayesian network over
//! ISTAT-style attributes with six anchor marginals, thirteen binary and
//! three ternary conditional tables. All constraint targets are computed
//! analytically by factor marginalization over the network — never by Monte
//! Carlo — so solver error measured against them is approximation error, not
//! sampling noise.
//!
//! Each ternary table supersedes its binary counterparts as the sampling CPT;
//! the superseded binary tables still contribute constraint targets, computed
//! by marginalizing the sampled network. The CPT decimals ship in
//! `data/synistat_cpts.txt` and are parsed at load.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::generators::SampleMatrix;
use crate::model::{
    push_group, AtomicConstraint, AttributeSchema, ConstraintSet, ConstraintGroup,
};
use crate::rng::{next_unit_f64, substream, tag};
use crate::scalar::{s, Scalar};

const CPT_DATA: &str = include_str!("../../data/synistat_cpts.txt");

/// One conditional probability table: child given zero or more parents.
#[derive(Debug, Clone)]
pub struct CptTable {
    pub label: String,
    pub child: usize,
    pub parents: Vec<usize>,
    /// Rows indexed by parent cell (row-major over parent domains), each row
    /// a distribution over the child's domain.
    pub rows: Vec<Vec<f64>>,
}

impl CptTable {
    fn parent_cells(&self, schema: &AttributeSchema) -> usize {
        self.parents.iter().map(|&p| schema.domain_size(p)).product()
    }

    /// Attributes covered by this table, ascending: parents then child sorted.
    pub fn attrs(&self) -> Vec<usize> {
        let mut attrs = self.parents.clone();
        attrs.push(self.child);
        attrs.sort_unstable();
        attrs
    }
}

/// Ordered CPT collection defining the ground-truth network.
#[derive(Debug, Clone)]
pub struct BayesNetSpec {
    schema: AttributeSchema,
    /// (attribute, marginal) for each root, schema order.
    anchors: Vec<(usize, Vec<f64>)>,
    tables: Vec<CptTable>,
    /// For each non-anchor attribute, the index of its sampling table.
    sampling_table: BTreeMap<usize, usize>,
}

impl BayesNetSpec {
    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn anchors(&self) -> &[(usize, Vec<f64>)] {
        &self.anchors
    }

    pub fn tables(&self) -> &[CptTable] {
        &self.tables
    }

    pub fn table(&self, label: &str) -> Option<&CptTable> {
        self.tables.iter().find(|t| t.label == label)
    }

    pub fn is_anchor(&self, attr: usize) -> bool {
        self.anchors.iter().any(|&(a, _)| a == attr)
    }

    /// The table each non-anchor variable is sampled from (highest arity).
    pub fn sampling_table_of(&self, attr: usize) -> Option<&CptTable> {
        self.sampling_table.get(&attr).map(|&i| &self.tables[i])
    }

    fn anchor_marginal(&self, attr: usize) -> Option<&[f64]> {
        self.anchors
            .iter()
            .find(|&&(a, _)| a == attr)
            .map(|(_, m)| m.as_slice())
    }
}

/// Parse and validate the shipped benchmark definition.
pub fn synistat_spec() -> BayesNetSpec {
    parse_bayes_net(CPT_DATA).expect("embedded benchmark data is valid")
}

/// Parse a network description in the documented table text format.
pub fn parse_bayes_net(text: &str) -> Result<BayesNetSpec> {
    let mut attrs: Vec<(String, Vec<String>)> = Vec::new();
    let mut anchors_raw: Vec<(String, Vec<f64>)> = Vec::new();
    let mut tables_raw: Vec<(String, String, Vec<String>, Vec<Vec<f64>>, usize)> = Vec::new();
    let mut saw_header = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != "synistat v1" {
                return Err(Error::parse(lineno, "expected header 'synistat v1'"));
            }
            saw_header = true;
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "var" => {
                if tokens.len() < 4 {
                    return Err(Error::parse(lineno, "var needs a name, size and labels"));
                }
                let d: usize = tokens[2]
                    .parse()
                    .map_err(|_| Error::parse(lineno, "bad domain size"))?;
                let labels: Vec<String> = tokens[3..].iter().map(|t| t.to_string()).collect();
                if labels.len() != d {
                    return Err(Error::parse(lineno, "label count does not match size"));
                }
                attrs.push((tokens[1].to_string(), labels));
            }
            "anchor" => {
                if tokens.len() < 3 {
                    return Err(Error::parse(lineno, "anchor needs a name and values"));
                }
                let values: Vec<f64> = tokens[2..]
                    .iter()
                    .map(|t| t.parse().map_err(|_| Error::parse(lineno, "bad probability")))
                    .collect::<Result<_>>()?;
                anchors_raw.push((tokens[1].to_string(), values));
            }
            "table" => {
                // table <id> <child> | <parent...>
                let bar = tokens
                    .iter()
                    .position(|&t| t == "|")
                    .ok_or_else(|| Error::parse(lineno, "table header needs '|'"))?;
                if bar != 3 || tokens.len() < 5 {
                    return Err(Error::parse(lineno, "malformed table header"));
                }
                let parents: Vec<String> = tokens[4..].iter().map(|t| t.to_string()).collect();
                tables_raw.push((
                    tokens[1].to_string(),
                    tokens[2].to_string(),
                    parents,
                    Vec::new(),
                    lineno,
                ));
            }
            _ => {
                // a probability row belonging to the most recent table
                let current = tables_raw
                    .last_mut()
                    .ok_or_else(|| Error::parse(lineno, "row outside any table"))?;
                let row: Vec<f64> = tokens
                    .iter()
                    .map(|t| t.parse().map_err(|_| Error::parse(lineno, "bad probability")))
                    .collect::<Result<_>>()?;
                current.3.push(row);
            }
        }
    }

    let schema = AttributeSchema::new(attrs)?;
    let mut anchors = Vec::new();
    for (name, values) in anchors_raw {
        let attr = schema
            .attr_index(&name)
            .ok_or_else(|| Error::invalid(format!("unknown anchor '{name}'")))?;
        if values.len() != schema.domain_size(attr) {
            return Err(Error::invalid(format!("anchor '{name}' length mismatch")));
        }
        check_distribution(&values, &format!("anchor {name}"))?;
        anchors.push((attr, values));
    }

    let mut tables = Vec::new();
    for (label, child_name, parent_names, rows, lineno) in tables_raw {
        let child = schema
            .attr_index(&child_name)
            .ok_or_else(|| Error::parse(lineno, format!("unknown child '{child_name}'")))?;
        let parents: Vec<usize> = parent_names
            .iter()
            .map(|p| {
                schema
                    .attr_index(p)
                    .ok_or_else(|| Error::parse(lineno, format!("unknown parent '{p}'")))
            })
            .collect::<Result<_>>()?;
        let table = CptTable {
            label: label.clone(),
            child,
            parents,
            rows,
        };
        let expected_rows = table.parent_cells(&schema);
        if table.rows.len() != expected_rows {
            return Err(Error::parse(
                lineno,
                format!("table {label}: {} rows, expected {expected_rows}", table.rows.len()),
            ));
        }
        for (r, row) in table.rows.iter().enumerate() {
            if row.len() != schema.domain_size(child) {
                return Err(Error::parse(lineno, format!("table {label} row {r} length mismatch")));
            }
            check_distribution(row, &format!("table {label} row {r}"))?;
        }
        tables.push(table);
    }

    // every non-anchor is sampled from its unique highest-arity table
    let mut sampling_table = BTreeMap::new();
    for attr in 0..schema.attr_count() {
        if anchors.iter().any(|&(a, _)| a == attr) {
            continue;
        }
        let mut best: Option<usize> = None;
        let mut tied = false;
        for (i, t) in tables.iter().enumerate() {
            if t.child != attr {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) => {
                    use std::cmp::Ordering;
                    match t.parents.len().cmp(&tables[b].parents.len()) {
                        Ordering::Greater => {
                            best = Some(i);
                            tied = false;
                        }
                        Ordering::Equal => tied = true,
                        Ordering::Less => {}
                    }
                }
            }
        }
        let best = best.ok_or_else(|| {
            Error::invalid(format!("no table determines '{}'", schema.name(attr)))
        })?;
        if tied {
            return Err(Error::invalid(format!(
                "ambiguous sampling table for '{}'",
                schema.name(attr)
            )));
        }
        // parents must precede the child in schema order (topological)
        for &p in &tables[best].parents {
            if p >= attr {
                return Err(Error::invalid(format!(
                    "table {} violates topological order",
                    tables[best].label
                )));
            }
        }
        sampling_table.insert(attr, best);
    }

    Ok(BayesNetSpec {
        schema,
        anchors,
        tables,
        sampling_table,
    })
}

fn check_distribution(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid(format!("{what}: negative or non-finite entry")));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("{what}: sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Ancestral sampling in schema (topological) order, one substream per row.
pub fn synistat_sample(spec: &BayesNetSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let k = spec.schema.attr_count();
    let mut data = vec![0usize; n * k];
    for i in 0..n {
        let mut rng = substream(&[seed, tag::BN_ROW, i as u64]);
        let row_start = i * k;
        for attr in 0..k {
            let u = next_unit_f64(&mut rng);
            let value = if let Some(marginal) = spec.anchor_marginal(attr) {
                draw(marginal, u)
            } else {
                let table = spec.sampling_table_of(attr).expect("validated at load");
                let mut cell = 0usize;
                for &p in &table.parents {
                    cell = cell * spec.schema.domain_size(p) + data[row_start + p];
                }
                draw(&table.rows[cell], u)
            };
            data[row_start + attr] = value;
        }
    }
    Ok(SampleMatrix::new(data, n, k))
}

#[inline]
fn draw(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (v, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return v;
        }
    }
    dist.len() - 1
}

/// Exact joint marginal of the network over `attrs`, as a dense row-major
/// table. Enumerates only the ancestor closure of the requested attributes,
/// never the full tuple space.
pub fn bn_marginal(spec: &BayesNetSpec, attrs: &[usize]) -> Vec<f64> {
    // ancestor closure
    let mut needed = vec![false; spec.schema.attr_count()];
    let mut stack: Vec<usize> = attrs.to_vec();
    while let Some(a) = stack.pop() {
        if needed[a] {
            continue;
        }
        needed[a] = true;
        if let Some(table) = spec.sampling_table_of(a) {
            stack.extend(table.parents.iter().copied());
        }
    }
    let closure: Vec<usize> = (0..spec.schema.attr_count()).filter(|&a| needed[a]).collect();
    let dims: Vec<usize> = closure.iter().map(|&a| spec.schema.domain_size(a)).collect();
    let cells: usize = dims.iter().product();
    let position: BTreeMap<usize, usize> = closure
        .iter()
        .enumerate()
        .map(|(pos, &a)| (a, pos))
        .collect();

    let out_dims: Vec<usize> = attrs.iter().map(|&a| spec.schema.domain_size(a)).collect();
    let out_cells: usize = out_dims.iter().product();
    let mut out = vec![0.0f64; out_cells];

    let mut index = vec![0usize; closure.len()];
    for _ in 0..cells {
        // joint probability of this closure assignment
        let mut p = 1.0;
        for (pos, &a) in closure.iter().enumerate() {
            let v = index[pos];
            if let Some(marginal) = spec.anchor_marginal(a) {
                p *= marginal[v];
            } else {
                let table = spec.sampling_table_of(a).expect("closure is ancestral");
                let mut cell = 0usize;
                for &par in &table.parents {
                    cell = cell * spec.schema.domain_size(par) + index[position[&par]];
                }
                p *= table.rows[cell][v];
            }
        }
        let mut out_cell = 0usize;
        for (&a, &d) in attrs.iter().zip(&out_dims) {
            out_cell = out_cell * d + index[position[&a]];
        }
        out[out_cell] += p;
        // advance
        for axis in (0..closure.len()).rev() {
            index[axis] += 1;
            if index[axis] < dims[axis] {
                break;
            }
            index[axis] = 0;
        }
    }
    out
}

/// The full analytic constraint set: one unary group per attribute plus one
/// group per declared table, every cell expanded, targets from network
/// marginalization.
pub fn synistat_targets<S: Scalar>(spec: &BayesNetSpec) -> ConstraintSet<S> {
    let mut constraints: Vec<AtomicConstraint<S>> = Vec::new();
    let mut groups: Vec<ConstraintGroup> = Vec::new();

    for attr in 0..spec.schema.attr_count() {
        let marginal = bn_marginal(spec, &[attr]);
        let atoms: Vec<AtomicConstraint<S>> = marginal
            .iter()
            .enumerate()
            .map(|(v, &p)| {
                AtomicConstraint::new(&spec.schema, &[attr], &[v], s(p)).expect("valid unary atom")
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

    for table in &spec.tables {
        let attrs = table.attrs();
        let joint = bn_marginal(spec, &attrs);
        let dims: Vec<usize> = attrs.iter().map(|&a| spec.schema.domain_size(a)).collect();
        let mut atoms = Vec::with_capacity(joint.len());
        let mut index = vec![0usize; attrs.len()];
        for cell in 0..joint.len() {
            atoms.push(
                AtomicConstraint::new(&spec.schema, &attrs, &index, s(joint[cell]))
                    .expect("valid table atom"),
            );
            for axis in (0..attrs.len()).rev() {
                index[axis] += 1;
                if index[axis] < dims[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        push_group(&mut constraints, &mut groups, atoms, &table.label, true);
    }

    ConstraintSet::with_groups(spec.schema.clone(), constraints, groups)
        .expect("analytic targets are unique and normalized")
}

/// Split the full constraint set into training (all unary and binary groups)
/// and held-out (the ternary table groups), labels preserved.
pub fn synistat_split<S: Scalar>(
    cs: &ConstraintSet<S>,
) -> Result<(ConstraintSet<S>, ConstraintSet<S>)> {
    if cs.groups().is_empty() {
        return Err(Error::invalid("split requires group metadata"));
    }
    let mut train_constraints = Vec::new();
    let mut train_groups: Vec<ConstraintGroup> = Vec::new();
    let mut held_constraints = Vec::new();
    let mut held_groups: Vec<ConstraintGroup> = Vec::new();
    for g in cs.groups() {
        let atoms: Vec<AtomicConstraint<S>> =
            cs.constraints()[g.start..g.start + g.len].to_vec();
        if g.arity == 3 {
            push_group(&mut held_constraints, &mut held_groups, atoms, &g.label, g.full_table);
        } else {
            push_group(&mut train_constraints, &mut train_groups, atoms, &g.label, g.full_table);
        }
    }
    if held_constraints.is_empty() {
        return Err(Error::invalid("no ternary groups to hold out"));
    }
    let train = ConstraintSet::with_groups(cs.schema().clone(), train_constraints, train_groups)?;
    let held = ConstraintSet::with_groups(cs.schema().clone(), held_constraints, held_groups)?;
    Ok((train, held))
}

/// Per-source implied unary marginals of one attribute: every table with the
/// attribute as child yields one implied marginal (parents integrated out
/// under the network distribution), reported alongside their renormalized
/// arithmetic mean. Diagnostic only; constraint targets use the network
/// marginal itself.
pub fn implied_marginal_sources(
    spec: &BayesNetSpec,
    attr: usize,
) -> (Vec<(String, Vec<f64>)>, Vec<f64>) {
    let d = spec.schema.domain_size(attr);
    let mut sources: Vec<(String, Vec<f64>)> = Vec::new();
    for table in spec.tables.iter().filter(|t| t.child == attr) {
        let parent_joint = bn_marginal(spec, &table.parents);
        let mut implied = vec![0.0; d];
        for (cell, &pp) in parent_joint.iter().enumerate() {
            for v in 0..d {
                implied[v] += pp * table.rows[cell][v];
            }
        }
        sources.push((table.label.clone(), implied));
    }
    let averaged = if sources.is_empty() {
        bn_marginal(spec, &[attr])
    } else {
        let mut mean = vec![0.0; d];
        for (_, implied) in &sources {
            for v in 0..d {
                mean[v] += implied[v];
            }
        }
        let total: f64 = mean.iter().sum();
        mean.into_iter().map(|x| x / total).collect()
    };
    (sources, averaged)
}

/// Largest |printed CPT − network-implied conditional| per constraint-only
/// binary table. Nonzero wherever a ternary table supersedes a printed
/// binary table.
pub fn binary_table_deltas(spec: &BayesNetSpec) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for table in &spec.tables {
        if spec
            .sampling_table_of(table.child)
            .map(|t| t.label == table.label)
            .unwrap_or(false)
        {
            continue; // sampling tables match the network by construction
        }
        let mut attrs = table.parents.clone();
        attrs.push(table.child);
        let joint = bn_marginal(spec, &attrs);
        let parent_joint = bn_marginal(spec, &table.parents);
        let d = spec.schema.domain_size(table.child);
        let mut max_delta = 0.0f64;
        for (cell, &pp) in parent_joint.iter().enumerate() {
            if pp <= 0.0 {
                continue;
            }
            for v in 0..d {
                let implied = joint[cell * d + v] / pp;
                let delta = (implied - table.rows[cell][v]).abs();
                if delta > max_delta {
                    max_delta = delta;
                }
            }
        }
        out.push((table.label.clone(), max_delta));
    }
    out
}
