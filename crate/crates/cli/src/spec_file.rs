//! Instance spec files for the generators. Line-oriented key/value format
//! with `#` comments; diagnostics carry line numbers and field names.
//!
//! ```text
//! kind wu
//! domains 3 3 3 2 2 2
//! n-data 100000
//! seed 1
//! pattern 0,3 0,0 0.251          # attrs values frequency
//! base-marginal 0 0.5 0.3 0.2    # optional, defaults to seeded random
//! ```
//!
//! ```text
//! kind planted
//! domains 3 3 3 3 3 3
//! atoms 20
//! lambda-range -1.1 1.1
//! seed 14
//! ```

use anyhow::{anyhow, bail, Context, Result};
use popsynth::generators::planted::PlantedFamilySpec;
use popsynth::generators::wu::{WuInstanceSpec, WuPattern};
use popsynth::rng::{next_unit_f64, substream, tag};
use popsynth::AttributeSchema;

pub enum InstanceSpec {
    Wu(WuInstanceSpec),
    Planted(PlantedFamilySpec),
}

struct RawSpec {
    kind: String,
    domains: Vec<usize>,
    n_data: Option<usize>,
    seed: u64,
    atoms: Option<usize>,
    lambda_range: (f64, f64),
    patterns: Vec<WuPattern>,
    marginals: Vec<(usize, Vec<f64>)>,
}

pub fn parse_instance_spec(text: &str, max_enum: f64) -> Result<InstanceSpec> {
    let mut raw = RawSpec {
        kind: String::new(),
        domains: Vec::new(),
        n_data: None,
        seed: 0,
        atoms: None,
        lambda_range: (-1.1, 1.1),
        patterns: Vec::new(),
        marginals: Vec::new(),
    };

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        let fail = |field: &str, why: &str| anyhow!("line {lineno}, field '{field}': {why}");
        match key {
            "kind" => {
                raw.kind = rest
                    .first()
                    .ok_or_else(|| fail("kind", "missing value"))?
                    .to_string();
            }
            "domains" => {
                raw.domains = rest
                    .iter()
                    .map(|t| t.parse().map_err(|_| fail("domains", "not an integer")))
                    .collect::<Result<_>>()?;
            }
            "n-data" => {
                raw.n_data = Some(
                    rest.first()
                        .ok_or_else(|| fail("n-data", "missing value"))?
                        .parse()
                        .map_err(|_| fail("n-data", "not an integer"))?,
                );
            }
            "seed" => {
                raw.seed = rest
                    .first()
                    .ok_or_else(|| fail("seed", "missing value"))?
                    .parse()
                    .map_err(|_| fail("seed", "not an integer"))?;
            }
            "atoms" => {
                raw.atoms = Some(
                    rest.first()
                        .ok_or_else(|| fail("atoms", "missing value"))?
                        .parse()
                        .map_err(|_| fail("atoms", "not an integer"))?,
                );
            }
            "lambda-range" => {
                if rest.len() != 2 {
                    return Err(fail("lambda-range", "expected two numbers"));
                }
                raw.lambda_range = (
                    rest[0].parse().map_err(|_| fail("lambda-range", "bad low"))?,
                    rest[1].parse().map_err(|_| fail("lambda-range", "bad high"))?,
                );
            }
            "pattern" => {
                if rest.len() != 3 {
                    return Err(fail("pattern", "expected attrs values frequency"));
                }
                let attrs: Vec<usize> = rest[0]
                    .split(',')
                    .map(|t| t.parse().map_err(|_| fail("pattern", "bad attribute index")))
                    .collect::<Result<_>>()?;
                let values: Vec<usize> = rest[1]
                    .split(',')
                    .map(|t| t.parse().map_err(|_| fail("pattern", "bad value index")))
                    .collect::<Result<_>>()?;
                let frequency: f64 = rest[2]
                    .parse()
                    .map_err(|_| fail("pattern", "bad frequency"))?;
                raw.patterns.push(WuPattern {
                    attrs,
                    values,
                    frequency,
                });
            }
            "base-marginal" => {
                if rest.len() < 2 {
                    return Err(fail("base-marginal", "expected attribute and values"));
                }
                let attr: usize = rest[0]
                    .parse()
                    .map_err(|_| fail("base-marginal", "bad attribute index"))?;
                let values: Vec<f64> = rest[1..]
                    .iter()
                    .map(|t| t.parse().map_err(|_| fail("base-marginal", "bad probability")))
                    .collect::<Result<_>>()?;
                raw.marginals.push((attr, values));
            }
            other => bail!("line {lineno}: unknown key '{other}'"),
        }
    }

    if raw.domains.is_empty() {
        bail!("spec lacks 'domains'");
    }
    match raw.kind.as_str() {
        "wu" => build_wu(raw).map(InstanceSpec::Wu),
        "planted" => build_planted(raw, max_enum).map(InstanceSpec::Planted),
        "" => bail!("spec lacks 'kind'"),
        other => bail!("unknown kind '{other}' (expected wu or planted)"),
    }
}

fn build_wu(raw: RawSpec) -> Result<WuInstanceSpec> {
    let schema = AttributeSchema::unnamed(&raw.domains).map_err(|e| anyhow!("{e}"))?;
    // seeded bounded-random defaults, overridden per attribute when given
    let mut rng = substream(&[raw.seed, tag::WU_MARGINALS]);
    let mut marginals: Vec<Vec<f64>> = raw
        .domains
        .iter()
        .map(|&d| {
            let rawm: Vec<f64> = (0..d).map(|_| 0.2 + 0.8 * next_unit_f64(&mut rng)).collect();
            let total: f64 = rawm.iter().sum();
            rawm.into_iter().map(|x| x / total).collect()
        })
        .collect();
    for (attr, values) in raw.marginals {
        if attr >= marginals.len() {
            bail!("base-marginal attribute {attr} out of range");
        }
        marginals[attr] = values;
    }
    let n_data = raw.n_data.context("wu spec needs 'n-data'")?;
    WuInstanceSpec::new(schema, marginals, raw.patterns, n_data, raw.seed)
        .map_err(|e| anyhow!("{e}"))
}

fn build_planted(raw: RawSpec, max_enum: f64) -> Result<PlantedFamilySpec> {
    let atoms = raw.atoms.context("planted spec needs 'atoms'")?;
    PlantedFamilySpec::new(&raw.domains, atoms, raw.lambda_range, raw.seed, max_enum)
        .map_err(|e| anyhow!("{e}"))
}
