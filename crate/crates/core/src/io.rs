//! Text formats: constraint sets, weighted samples and pools, λ exports, and
//! trace CSVs. All numeric fields are written with 17 significant digits so
//! files round-trip bit-exactly for f64 payloads. Attribute names and
//! category labels must be single whitespace-free tokens without '='.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::PopulationView;
use crate::model::{
    AtomicConstraint, AttributeSchema, ConstraintGroup, ConstraintSet, LambdaVector,
};
use crate::raking::WeightedSample;
use crate::scalar::{s, Scalar};

const CONSTRAINTS_HEADER: &str = "popsynth-constraints v1";
const SAMPLE_HEADER: &str = "popsynth-sample v1";
const LAMBDA_HEADER: &str = "popsynth-lambda v1";

fn check_token(token: &str) -> Result<()> {
    if token.is_empty() || token.contains(char::is_whitespace) || token.contains('=') {
        return Err(Error::invalid(format!(
            "'{token}' is not a valid file token (no whitespace or '=')"
        )));
    }
    Ok(())
}

fn write_schema(out: &mut String, schema: &AttributeSchema) -> Result<()> {
    for attr in 0..schema.attr_count() {
        check_token(schema.name(attr))?;
        for label in schema.labels(attr) {
            check_token(label)?;
        }
        writeln!(
            out,
            "attr {} {} {}",
            schema.name(attr),
            schema.domain_size(attr),
            schema.labels(attr).join(" ")
        )
        .expect("string write");
    }
    Ok(())
}

struct SchemaParser {
    attrs: Vec<(String, Vec<String>)>,
}

impl SchemaParser {
    fn new() -> Self {
        SchemaParser { attrs: Vec::new() }
    }

    fn feed(&mut self, lineno: usize, tokens: &[&str]) -> Result<()> {
        if tokens.len() < 4 {
            return Err(Error::parse(lineno, "attr needs a name, size and labels"));
        }
        let d: usize = tokens[2]
            .parse()
            .map_err(|_| Error::parse(lineno, "bad domain size"))?;
        let labels: Vec<String> = tokens[3..].iter().map(|t| t.to_string()).collect();
        if labels.len() != d {
            return Err(Error::parse(lineno, "label count does not match size"));
        }
        self.attrs.push((tokens[1].to_string(), labels));
        Ok(())
    }

    fn finish(self) -> Result<AttributeSchema> {
        AttributeSchema::new(self.attrs)
    }
}

/// Serialize a constraint set: schema header, group lines, one record per
/// atom with (attribute, label) pairs and the target at full precision.
pub fn write_constraint_set<S: Scalar>(cs: &ConstraintSet<S>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{CONSTRAINTS_HEADER}").unwrap();
    write_schema(&mut out, cs.schema())?;
    let schema = cs.schema();
    let emit_atom = |out: &mut String, c: &AtomicConstraint<S>| {
        let mut line = String::from("c");
        for (&a, &v) in c.pattern_attrs().iter().zip(c.pattern_values()) {
            write!(line, " {}={}", schema.name(a), schema.label(a, v)).unwrap();
        }
        write!(line, " t={:.17e}", c.target()).unwrap();
        writeln!(out, "{line}").unwrap();
    };
    if cs.groups().is_empty() {
        for c in cs.constraints() {
            emit_atom(&mut out, c);
        }
    } else {
        for g in cs.groups() {
            check_token(&g.label)?;
            writeln!(
                out,
                "group {} arity={} full={} len={}",
                g.label, g.arity, g.full_table as u8, g.len
            )
            .unwrap();
            for c in &cs.constraints()[g.start..g.start + g.len] {
                emit_atom(&mut out, c);
            }
        }
    }
    Ok(out)
}

/// Parse the constraint-set format back into a [`ConstraintSet`].
pub fn parse_constraint_set<S: Scalar>(text: &str) -> Result<ConstraintSet<S>> {
    let mut lines = numbered_lines(text);
    expect_header(&mut lines, CONSTRAINTS_HEADER)?;

    let mut schema_parser = SchemaParser::new();
    let mut schema: Option<AttributeSchema> = None;
    let mut constraints: Vec<AtomicConstraint<S>> = Vec::new();
    let mut groups: Vec<ConstraintGroup> = Vec::new();
    let mut open_group: Option<(String, usize, bool, usize)> = None; // label, arity, full, expected len

    for (lineno, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "attr" => {
                if schema.is_some() {
                    return Err(Error::parse(lineno, "attr after constraints started"));
                }
                schema_parser.feed(lineno, &tokens)?;
            }
            "group" => {
                let sch = ensure_schema(&mut schema, &mut schema_parser)?;
                let _ = sch;
                close_group(&mut groups, &mut open_group, constraints.len(), lineno)?;
                if tokens.len() != 5 {
                    return Err(Error::parse(lineno, "malformed group line"));
                }
                let arity = parse_kv(tokens[2], "arity", lineno)?;
                let full: usize = parse_kv(tokens[3], "full", lineno)?;
                let len = parse_kv(tokens[4], "len", lineno)?;
                open_group = Some((tokens[1].to_string(), arity, full == 1, len));
                groups.push(ConstraintGroup {
                    label: tokens[1].to_string(),
                    arity,
                    start: constraints.len(),
                    len: 0, // patched at close
                    full_table: full == 1,
                });
            }
            "c" => {
                let sch = ensure_schema(&mut schema, &mut schema_parser)?;
                let mut attrs = Vec::new();
                let mut values = Vec::new();
                let mut target: Option<S> = None;
                for token in &tokens[1..] {
                    let (key, value) = token
                        .split_once('=')
                        .ok_or_else(|| Error::parse(lineno, format!("expected key=value, got '{token}'")))?;
                    if key == "t" {
                        let parsed: f64 = value
                            .parse()
                            .map_err(|_| Error::parse(lineno, "bad target"))?;
                        target = Some(s(parsed));
                    } else {
                        let attr = sch
                            .attr_index(key)
                            .ok_or_else(|| Error::parse(lineno, format!("unknown attribute '{key}'")))?;
                        let v = sch
                            .value_index(attr, value)
                            .ok_or_else(|| Error::parse(lineno, format!("unknown label '{value}'")))?;
                        attrs.push(attr);
                        values.push(v);
                    }
                }
                let target =
                    target.ok_or_else(|| Error::parse(lineno, "constraint record lacks t="))?;
                constraints.push(
                    AtomicConstraint::new(sch, &attrs, &values, target)
                        .map_err(|e| Error::parse(lineno, e.to_string()))?,
                );
            }
            other => return Err(Error::parse(lineno, format!("unknown record '{other}'"))),
        }
    }
    close_group(&mut groups, &mut open_group, constraints.len(), 0)?;
    let schema = ensure_schema(&mut schema, &mut schema_parser)?.clone();
    ConstraintSet::with_groups(schema, constraints, groups)
}

fn ensure_schema<'a>(
    schema: &'a mut Option<AttributeSchema>,
    parser: &mut SchemaParser,
) -> Result<&'a AttributeSchema> {
    if schema.is_none() {
        let built = std::mem::replace(parser, SchemaParser::new()).finish()?;
        *schema = Some(built);
    }
    Ok(schema.as_ref().unwrap())
}

fn close_group(
    groups: &mut [ConstraintGroup],
    open: &mut Option<(String, usize, bool, usize)>,
    constraint_count: usize,
    lineno: usize,
) -> Result<()> {
    if let Some((label, _, _, expected_len)) = open.take() {
        let g = groups.last_mut().expect("open group implies a group record");
        g.len = constraint_count - g.start;
        if g.len != expected_len {
            return Err(Error::parse(
                lineno,
                format!("group '{label}' declared len={expected_len} but has {}", g.len),
            ));
        }
    }
    Ok(())
}

fn parse_kv<T: std::str::FromStr>(token: &str, key: &str, lineno: usize) -> Result<T> {
    let (k, v) = token
        .split_once('=')
        .ok_or_else(|| Error::parse(lineno, format!("expected {key}=...")))?;
    if k != key {
        return Err(Error::parse(lineno, format!("expected key '{key}', got '{k}'")));
    }
    v.parse()
        .map_err(|_| Error::parse(lineno, format!("bad value for '{key}'")))
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn expect_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    header: &str,
) -> Result<()> {
    match lines.next() {
        Some((_, line)) if line == header => Ok(()),
        Some((lineno, line)) => Err(Error::parse(
            lineno,
            format!("expected header '{header}', got '{line}'"),
        )),
        None => Err(Error::parse(0, "empty file")),
    }
}

/// Serialize rows with category labels; weights included when given.
pub fn write_population<S: Scalar>(
    schema: &AttributeSchema,
    view: PopulationView<'_>,
    weights: Option<&[S]>,
) -> Result<String> {
    if view.cols != schema.attr_count() {
        return Err(Error::invalid("population does not match schema"));
    }
    let mut out = String::new();
    writeln!(out, "{SAMPLE_HEADER}").unwrap();
    write_schema(&mut out, schema)?;
    writeln!(
        out,
        "rows {} {}",
        view.rows,
        if weights.is_some() { "weighted" } else { "plain" }
    )
    .unwrap();
    for i in 0..view.rows {
        let mut line = String::from("r");
        for (k, &v) in view.row(i).iter().enumerate() {
            write!(line, " {}", schema.label(k, v)).unwrap();
        }
        if let Some(w) = weights {
            write!(line, " w={:.17e}", w[i]).unwrap();
        }
        writeln!(out, "{line}").unwrap();
    }
    Ok(out)
}

/// Serialize a weighted sample.
pub fn write_weighted_sample<S: Scalar>(
    schema: &AttributeSchema,
    sample: &WeightedSample<S>,
) -> Result<String> {
    write_population(schema, sample.view(), Some(sample.weights()))
}

/// Parsed population: rows plus weights when present.
pub struct ParsedPopulation<S> {
    pub schema: AttributeSchema,
    pub data: Vec<usize>,
    pub rows: usize,
    pub weights: Option<Vec<S>>,
}

impl<S: Scalar> ParsedPopulation<S> {
    pub fn into_weighted_sample(self) -> Result<WeightedSample<S>> {
        let cols = self.schema.attr_count();
        let weights = self
            .weights
            .ok_or_else(|| Error::invalid("population file has no weight column"))?;
        WeightedSample::new(self.data, self.rows, cols, weights)
    }
}

pub fn parse_population<S: Scalar>(text: &str) -> Result<ParsedPopulation<S>> {
    let mut lines = numbered_lines(text);
    expect_header(&mut lines, SAMPLE_HEADER)?;
    let mut schema_parser = SchemaParser::new();
    let mut schema: Option<AttributeSchema> = None;
    let mut expected_rows: Option<(usize, bool)> = None;
    let mut data: Vec<usize> = Vec::new();
    let mut weights: Vec<S> = Vec::new();

    for (lineno, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "attr" => schema_parser.feed(lineno, &tokens)?,
            "rows" => {
                if schema.is_none() {
                    let built = std::mem::replace(&mut schema_parser, SchemaParser::new()).finish()?;
                    schema = Some(built);
                }
                if tokens.len() != 3 {
                    return Err(Error::parse(lineno, "malformed rows line"));
                }
                let n: usize = tokens[1]
                    .parse()
                    .map_err(|_| Error::parse(lineno, "bad row count"))?;
                let weighted = match tokens[2] {
                    "weighted" => true,
                    "plain" => false,
                    other => return Err(Error::parse(lineno, format!("bad mode '{other}'"))),
                };
                expected_rows = Some((n, weighted));
            }
            "r" => {
                let sch = schema
                    .as_ref()
                    .ok_or_else(|| Error::parse(lineno, "row before rows header"))?;
                let (_, weighted) = expected_rows
                    .ok_or_else(|| Error::parse(lineno, "row before rows header"))?;
                let k = sch.attr_count();
                let want = 1 + k + usize::from(weighted);
                if tokens.len() != want {
                    return Err(Error::parse(lineno, format!("expected {want} tokens")));
                }
                for (attr, token) in tokens[1..1 + k].iter().enumerate() {
                    let v = sch.value_index(attr, token).ok_or_else(|| {
                        Error::parse(lineno, format!("unknown label '{token}' for attribute {attr}"))
                    })?;
                    data.push(v);
                }
                if weighted {
                    let w: f64 = tokens[1 + k]
                        .strip_prefix("w=")
                        .ok_or_else(|| Error::parse(lineno, "expected w="))?
                        .parse()
                        .map_err(|_| Error::parse(lineno, "bad weight"))?;
                    weights.push(s(w));
                }
            }
            other => return Err(Error::parse(lineno, format!("unknown record '{other}'"))),
        }
    }
    let schema = schema.ok_or_else(|| Error::parse(0, "file lacks rows header"))?;
    let (n, weighted) = expected_rows.ok_or_else(|| Error::parse(0, "file lacks rows header"))?;
    let rows = data.len() / schema.attr_count();
    if rows != n {
        return Err(Error::invalid(format!("declared {n} rows, found {rows}")));
    }
    Ok(ParsedPopulation {
        schema,
        data,
        rows,
        weights: if weighted { Some(weights) } else { None },
    })
}

/// Serialize λ with one record per constraint: descriptor plus value.
pub fn write_lambda<S: Scalar>(cs: &ConstraintSet<S>, lambda: &LambdaVector<S>) -> Result<String> {
    if lambda.len() != cs.len() {
        return Err(Error::invalid("lambda length mismatch"));
    }
    let schema = cs.schema();
    let mut out = String::new();
    writeln!(out, "{LAMBDA_HEADER}").unwrap();
    for (c, &l) in cs.constraints().iter().zip(lambda.iter()) {
        let mut line = String::from("l");
        for (&a, &v) in c.pattern_attrs().iter().zip(c.pattern_values()) {
            write!(line, " {}={}", schema.name(a), schema.label(a, v)).unwrap();
        }
        write!(line, " v={:.17e}", l).unwrap();
        writeln!(out, "{line}").unwrap();
    }
    Ok(out)
}

/// Parse a λ export against the constraint set it was written for.
pub fn parse_lambda<S: Scalar>(cs: &ConstraintSet<S>, text: &str) -> Result<LambdaVector<S>> {
    let mut lines = numbered_lines(text);
    expect_header(&mut lines, LAMBDA_HEADER)?;
    let schema = cs.schema();
    let mut by_pattern = std::collections::HashMap::new();
    for (j, c) in cs.constraints().iter().enumerate() {
        by_pattern.insert((c.pattern_attrs().to_vec(), c.pattern_values().to_vec()), j);
    }
    let mut out = vec![None::<S>; cs.len()];
    for (lineno, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens[0] != "l" {
            return Err(Error::parse(lineno, "expected l record"));
        }
        let mut attrs = Vec::new();
        let mut values = Vec::new();
        let mut value: Option<S> = None;
        for token in &tokens[1..] {
            let (key, val) = token
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected key=value"))?;
            if key == "v" {
                let parsed: f64 = val.parse().map_err(|_| Error::parse(lineno, "bad value"))?;
                value = Some(s(parsed));
            } else {
                let attr = schema
                    .attr_index(key)
                    .ok_or_else(|| Error::parse(lineno, format!("unknown attribute '{key}'")))?;
                let v = schema
                    .value_index(attr, val)
                    .ok_or_else(|| Error::parse(lineno, format!("unknown label '{val}'")))?;
                attrs.push(attr);
                values.push(v);
            }
        }
        let value = value.ok_or_else(|| Error::parse(lineno, "record lacks v="))?;
        let j = *by_pattern
            .get(&(attrs.clone(), values.clone()))
            .ok_or_else(|| Error::parse(lineno, "descriptor matches no constraint"))?;
        if out[j].is_some() {
            return Err(Error::parse(lineno, "duplicate descriptor"));
        }
        out[j] = Some(value);
    }
    let values: Option<Vec<S>> = out.into_iter().collect();
    values
        .map(LambdaVector)
        .ok_or_else(|| Error::invalid("lambda file does not cover every constraint"))
}
