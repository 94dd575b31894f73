//! Generator tables: sparse polynomials stored in a line-oriented text file.
//!
//! ```text
//! variant=CAL_I2 vars=gp11,gp12,... npolys=5
//! poly degree=5 nterms=3
//! 2 0 0 0 0 0 0 0 0 0 3 -1/2
//! ...
//! checksum=<sha256 of the preceding non-empty trimmed lines joined by \n>
//! ```

use std::fmt::{self, Write as _};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dehomogenized variables of the `g₃₃ = 1` chart.
pub const PRIMED_VARS: [&str; 11] = [
    "gp11", "gp12", "gp13", "gp21", "gp22", "gp23", "gp31", "gp32", "mp1", "mp2", "mp3",
];

/// Entries of `G` (row-major) followed by `m`.
pub const GM_VARS: [&str; 12] = [
    "g11", "g12", "g13", "g21", "g22", "g23", "g31", "g32", "g33", "m1", "m2", "m3",
];

/// The six shipped tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    CalI1,
    CalI2,
    FocI1,
    FocI2,
    CalBack,
    FocBack,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::CalI1,
        Variant::CalI2,
        Variant::FocI1,
        Variant::FocI2,
        Variant::CalBack,
        Variant::FocBack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::CalI1 => "CAL_I1",
            Variant::CalI2 => "CAL_I2",
            Variant::FocI1 => "FOC_I1",
            Variant::FocI2 => "FOC_I2",
            Variant::CalBack => "CAL_BACK",
            Variant::FocBack => "FOC_BACK",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    /// Variable order of the table.
    pub fn vars(self) -> Vec<&'static str> {
        match self {
            Variant::CalI1 | Variant::FocI1 => GM_VARS.to_vec(),
            Variant::CalI2 | Variant::FocI2 => PRIMED_VARS.to_vec(),
            Variant::CalBack => PRIMED_VARS.iter().copied().chain(["g33"]).collect(),
            Variant::FocBack => PRIMED_VARS.iter().copied().chain(["g33", "w"]).collect(),
        }
    }

    /// Total degree of every generator, in table order.
    pub fn expected_degrees(self) -> &'static [usize] {
        match self {
            Variant::CalI1 => &[4, 4, 4, 4, 4, 4, 5, 5, 5],
            Variant::CalI2 => &[5, 5, 5, 5, 5],
            Variant::FocI1 => &[4, 4, 5],
            Variant::FocI2 => &[5],
            Variant::CalBack => &[6, 6, 6, 6, 6, 6],
            Variant::FocBack => &[6, 6, 6, 6, 6, 6],
        }
    }

    pub(crate) fn embedded(self) -> &'static str {
        match self {
            Variant::CalI1 => include_str!("../../tables/CAL_I1.txt"),
            Variant::CalI2 => include_str!("../../tables/CAL_I2.txt"),
            Variant::FocI1 => include_str!("../../tables/FOC_I1.txt"),
            Variant::FocI2 => include_str!("../../tables/FOC_I2.txt"),
            Variant::CalBack => include_str!("../../tables/CAL_BACK.txt"),
            Variant::FocBack => include_str!("../../tables/FOC_BACK.txt"),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One monomial `coeff·∏ xᵢ^eᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: f64,
    /// Coefficient as written in the table (decimal or `a/b`).
    pub literal: String,
}

/// Sparse multivariate polynomial over a fixed variable order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoly {
    terms: Vec<Term>,
    degree: usize,
}

impl SparsePoly {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &terms {
            if !seen.insert(t.exponents.clone()) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("duplicate exponent vector {:?}", t.exponents),
                });
            }
        }
        let degree = terms
            .iter()
            .map(|t| t.exponents.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0);
        Ok(Self { terms, degree })
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs.
    pub fn from_terms(terms: &[(Vec<u32>, f64)]) -> Result<Self> {
        Self::new(
            terms
                .iter()
                .map(|(e, c)| Term {
                    exponents: e.clone(),
                    coeff: *c,
                    literal: format!("{c:e}"),
                })
                .collect(),
        )
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_vars(&self) -> usize {
        self.terms.first().map_or(0, |t| t.exponents.len())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coeff * monomial(&t.exponents, x)).sum()
    }

    /// `|p(x)| / Σ|cᵢ·xᵅⁱ|`, 0 when every term vanishes.
    pub fn normalized_residual(&self, x: &[f64]) -> f64 {
        let (mut value, mut magnitude) = (0.0, 0.0);
        for t in &self.terms {
            let v = t.coeff * monomial(&t.exponents, x);
            value += v;
            magnitude += v.abs();
        }
        if magnitude == 0.0 {
            0.0
        } else {
            value.abs() / magnitude
        }
    }
}

fn monomial(exponents: &[u32], x: &[f64]) -> f64 {
    exponents
        .iter()
        .zip(x)
        .filter(|(&e, _)| e > 0)
        .map(|(&e, &v)| v.powi(e as i32))
        .product()
}

/// Where to read a table from.
#[derive(Debug, Clone, Copy)]
pub enum TableSource<'a> {
    Embedded,
    Path(&'a Path),
    Text(&'a str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTable {
    pub variant: Variant,
    pub vars: Vec<String>,
    pub polys: Vec<SparsePoly>,
}

impl GeneratorTable {
    /// Largest normalized residual over all generators.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.polys
            .iter()
            .map(|p| p.normalized_residual(x))
            .fold(0.0, f64::max)
    }

    /// Serializes the table, checksum line included.
    pub fn to_text(&self) -> String {
        let mut body = format!(
            "variant={} vars={} npolys={}\n",
            self.variant.name(),
            self.vars.join(","),
            self.polys.len()
        );
        for p in &self.polys {
            let _ = writeln!(body, "poly degree={} nterms={}", p.degree, p.terms.len());
            for t in &p.terms {
                let exps: Vec<String> = t.exponents.iter().map(u32::to_string).collect();
                let _ = writeln!(body, "{} {}", exps.join(" "), t.literal);
            }
        }
        let sum = checksum(&body);
        body.push_str(&format!("checksum={sum}\n"));
        body
    }
}

/// SHA-256 over the non-empty trimmed lines (checksum line excluded) joined by `\n`.
pub fn checksum(text: &str) -> String {
    let canonical: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("checksum="))
        .collect();
    hex::encode(Sha256::digest(canonical.join("\n").as_bytes()))
}

fn parse_coeff(s: &str, line: usize) -> Result<f64> {
    let bad = || Error::Parse {
        line,
        message: format!("invalid coefficient {s:?}"),
    };
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.parse().map_err(|_| bad())?;
            let b: f64 = b.parse().map_err(|_| bad())?;
            if b == 0.0 {
                return Err(bad());
            }
            a / b
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

fn field<'a>(token: &'a str, key: &str, line: usize) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("expected {key}=..., found {token:?}"),
        })
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("expected an integer, found {s:?}"),
    })
}

/// Parses table text without checking it against the variant's metadata.
pub fn parse_table(text: &str) -> Result<GeneratorTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty table".into(),
    })?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 3 {
        return Err(Error::Parse {
            line: hl,
            message: "header must be `variant=.. vars=.. npolys=..`".into(),
        });
    }
    let name = field(tokens[0], "variant", hl)?;
    let variant = Variant::from_name(name).ok_or_else(|| Error::MissingTable(name.into()))?;
    let vars: Vec<String> = field(tokens[1], "vars", hl)?
        .split(',')
        .map(str::to_string)
        .collect();
    let npolys = parse_usize(field(tokens[2], "npolys", hl)?, hl)?;

    let mut polys = Vec::new();
    let mut stored_checksum = None;
    while let Some((ln, line)) = lines.next() {
        if let Some(sum) = line.strip_prefix("checksum=") {
            stored_checksum = Some(sum.to_string());
            break;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 || tokens[0] != "poly" {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected `poly degree=.. nterms=..`, found {line:?}"),
            });
        }
        let degree = parse_usize(field(tokens[1], "degree", ln)?, ln)?;
        let nterms = parse_usize(field(tokens[2], "nterms", ln)?, ln)?;
        let mut terms = Vec::with_capacity(nterms);
        for _ in 0..nterms {
            let (tl, tline) = lines.next().ok_or(Error::Parse {
                line: ln,
                message: "table ends inside a polynomial".into(),
            })?;
            let parts: Vec<&str> = tline.split_whitespace().collect();
            if parts.len() != vars.len() + 1 {
                return Err(Error::Parse {
                    line: tl,
                    message: format!("expected {} exponents and a coefficient", vars.len()),
                });
            }
            let exponents = parts[..vars.len()]
                .iter()
                .map(|e| {
                    e.parse::<u32>().map_err(|_| Error::Parse {
                        line: tl,
                        message: format!("invalid exponent {e:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let literal = parts[vars.len()];
            terms.push(Term {
                exponents,
                coeff: parse_coeff(literal, tl)?,
                literal: literal.to_string(),
            });
        }
        let poly = SparsePoly::new(terms).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { line: ln, message },
            other => other,
        })?;
        if poly.degree != degree {
            return Err(Error::DegreeMismatch {
                variant: variant.name().into(),
                index: polys.len(),
                expected: degree,
                found: poly.degree,
            });
        }
        polys.push(poly);
    }
    if polys.len() != npolys {
        return Err(Error::CountMismatch {
            variant: variant.name().into(),
            expected: npolys,
            found: polys.len(),
        });
    }
    match stored_checksum {
        Some(sum) if sum == checksum(text) => {}
        _ => {
            return Err(Error::ChecksumMismatch {
                variant: variant.name().into(),
            })
        }
    }
    Ok(GeneratorTable {
        variant,
        vars,
        polys,
    })
}

/// Loads a table and checks it against the variant's variables, generator
/// count and degrees.
pub fn load_table(variant: Variant, source: TableSource<'_>) -> Result<GeneratorTable> {
    let owned;
    let text = match source {
        TableSource::Embedded => variant.embedded(),
        TableSource::Text(t) => t,
        TableSource::Path(p) => {
            owned = std::fs::read_to_string(p)
                .map_err(|e| Error::MissingTable(format!("{}: {e}", p.display())))?;
            &owned
        }
    };
    let table = parse_table(text)?;
    if table.variant != variant {
        return Err(Error::MissingTable(format!(
            "{variant} (file holds {})",
            table.variant
        )));
    }
    let expected = variant.expected_degrees();
    if table.polys.len() != expected.len() {
        return Err(Error::CountMismatch {
            variant: variant.name().into(),
            expected: expected.len(),
            found: table.polys.len(),
        });
    }
    if table.vars != variant.vars() {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected variable list for {variant}"),
        });
    }
    for (index, (p, &d)) in table.polys.iter().zip(expected).enumerate() {
        if p.degree != d || p.n_vars() != table.vars.len() {
            return Err(Error::DegreeMismatch {
                variant: variant.name().into(),
                index,
                expected: d,
                found: p.degree,
            });
        }
    }
    Ok(table)
}

/// The shipped tables, parsed once.
pub fn shipped(variant: Variant) -> &'static GeneratorTable {
    use std::sync::OnceLock;
    static TABLES: [OnceLock<GeneratorTable>; 6] = [const { OnceLock::new() }; 6];
    let i = Variant::ALL.iter().position(|&v| v == variant).expect("known variant");
    TABLES[i].get_or_init(|| {
        load_table(variant, TableSource::Embedded).expect("shipped tables are valid")
    })
}
