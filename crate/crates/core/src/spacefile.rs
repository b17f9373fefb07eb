//! Text format for weighted systems and the built-in example catalog.
//!
//! ```text
//! # comment
//! [header]
//! name = heisenberg-1
//! depth = 2
//! anchor = 0, 0, 0
//!
//! [coordinates]
//! x, y, t
//!
//! [fields]
//! X1 = (1, 0, -1/2*y)
//! X2 = (0, 1, 1/2*x)
//! X3 = (0, 0, 1)
//!
//! [weights]
//! 1, 1, 2
//! ```
//!
//! `depth` and `anchor` are optional; the anchor defaults to the origin and
//! the depth to the minimal one there.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::polyalg::{CoordinateChart, PolyError, Polynomial, Rational, VectorField};
use crate::structure::{StructureError, WeightedSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceFileError {
    #[error("{line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: undeclared coordinate `{name}`")]
    UndeclaredCoordinate { line: usize, col: usize, name: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("{line}:{col}: {what}: expected {expected}, found {found}")]
    CountMismatch {
        line: usize,
        col: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unknown catalog entry `{name}`; available: {available}")]
    UnknownCatalog { name: String, available: String },
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Parsed contents of a space file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSpecDocument {
    pub name: String,
    pub depth: Option<u32>,
    pub anchor: Option<Vec<Rational>>,
    pub coordinates: Vec<String>,
    /// Labels and components.
    pub fields: Vec<(String, Vec<Polynomial>)>,
    pub weights: Vec<u32>,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> SpaceFileError {
    SpaceFileError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(char),
}

/// Tokens of one line with their 1-based columns.
fn lex(text: &str, line: usize, col0: usize) -> Result<Vec<(Tok, usize)>, SpaceFileError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                if matches!(out.last(), Some((Tok::Sym('^'), _))) {
                    return Err(syntax(line, col, "exponent must be a nonnegative integer"));
                }
                return Err(syntax(line, col0 + i, "decimal literals are not supported; write a fraction"));
            }
            let s: String = chars[start..i].iter().collect();
            out.push((Tok::Int(s.parse().expect("digits")), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^(),=".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(syntax(line, col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
    vars: &'a HashMap<String, usize>,
    nvars: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.1)
    }

    fn err(&self, message: impl Into<String>) -> SpaceFileError {
        syntax(self.line, self.col(), message)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), SpaceFileError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn integer(&mut self, what: &str) -> Result<BigInt, SpaceFileError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Polynomial, SpaceFileError> {
        let mut neg = false;
        if self.eat('-') {
            neg = true;
        } else {
            self.eat('+');
        }
        let mut acc = self.term()?;
        if neg {
            acc = acc.scale(&-Rational::one());
        }
        loop {
            if self.eat('+') {
                acc = &acc + &self.term()?;
            } else if self.eat('-') {
                acc = &acc - &self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, SpaceFileError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat('*') {
                acc = &acc * &self.factor()?;
            } else if self.eat('/') {
                let col = self.col();
                let d = self.integer("an integer divisor")?;
                if d.is_zero() {
                    return Err(syntax(self.line, col, "division by zero"));
                }
                acc = acc.scale(&Rational::new(BigInt::one(), d));
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Polynomial, SpaceFileError> {
        let base = self.primary()?;
        if self.eat('^') {
            let col = self.col();
            let e = match self.peek() {
                Some(Tok::Int(n)) => n.clone(),
                Some(Tok::Sym('-')) => return Err(syntax(self.line, col, "exponents must be nonnegative integers")),
                _ => return Err(syntax(self.line, col, "exponent must be an integer")),
            };
            self.pos += 1;
            let e: u32 = e
                .try_into()
                .map_err(|_| syntax(self.line, col, "exponent too large"))?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Polynomial, SpaceFileError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.nvars, Rational::from_integer(n)))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match self.vars.get(&name) {
                    Some(&i) => Ok(Polynomial::var(self.nvars, i)),
                    None => Err(SpaceFileError::UndeclaredCoordinate {
                        line: self.line,
                        col,
                        name,
                    }),
                }
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => Err(self.err("expected a number, coordinate or `(`")),
        }
    }

    fn done(&self) -> Result<(), SpaceFileError> {
        if self.pos < self.toks.len() {
            Err(self.err("unexpected trailing input"))
        } else {
            Ok(())
        }
    }
}

/// Comma-separated items of one line.
fn split_list(text: &str, line: usize, col0: usize) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ','))) {
        if c == ',' {
            let raw = &text[start..i];
            let lead = raw.len() - raw.trim_start().len();
            out.push((raw.trim().to_string(), col0 + text[..start + lead].chars().count()));
            start = i + 1;
        }
    }
    let _ = line;
    out
}

fn parse_rational(s: &str, line: usize, col: usize) -> Result<Rational, SpaceFileError> {
    let toks = lex(s, line, col)?;
    let vars = HashMap::new();
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        line,
        end_col: col + s.chars().count(),
        vars: &vars,
        nvars: 0,
    };
    let e = p.expr()?;
    p.done()?;
    Ok(e.constant_term())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Header,
    Coordinates,
    Fields,
    Weights,
}

/// Parses a space file into its document form.
pub fn parse_document(text: &str) -> Result<SpaceSpecDocument, SpaceFileError> {
    let mut section = Section::None;
    let mut seen = [false; 4];
    let mut name: Option<String> = None;
    let mut depth = None;
    let mut anchor = None;
    let mut coordinates: Vec<String> = Vec::new();
    let mut raw_fields: Vec<(usize, usize, String, String)> = Vec::new();
    let mut weights: Vec<u32> = Vec::new();
    // Where a missing weight or anchor coordinate would go.
    let mut weights_end = (0, 0);
    let mut anchor_at = (0, 0);
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("");
        let body = content.trim_end();
        let lead = body.len() - body.trim_start().len();
        let body = body.trim_start();
        let col0 = full[..lead].chars().count() + 1;
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let Some(label) = rest.strip_suffix(']') else {
                return Err(syntax(line, col0 + body.chars().count(), "expected `]`"));
            };
            section = match label.trim() {
                "header" => Section::Header,
                "coordinates" => Section::Coordinates,
                "fields" => Section::Fields,
                "weights" => Section::Weights,
                other => return Err(syntax(line, col0 + 1, format!("unknown section `{other}`"))),
            };
            let k = section as usize - 1;
            if seen[k] {
                return Err(syntax(line, col0, format!("duplicate section [{}]", label.trim())));
            }
            seen[k] = true;
            if section == Section::Weights {
                weights_end = (line, col0 + body.chars().count());
            }
            continue;
        }
        match section {
            Section::None => return Err(syntax(line, col0, "content before the first section")),
            Section::Header => {
                let Some(eq) = body.find('=') else {
                    return Err(syntax(line, col0, "expected `key = value`"));
                };
                let key = body[..eq].trim();
                let value = body[eq + 1..].trim();
                let vcol = col0 + body[..eq + 1].chars().count() + (body[eq + 1..].len() - body[eq + 1..].trim_start().len());
                match key {
                    "name" => name = Some(value.to_string()),
                    "depth" => {
                        depth = Some(value.parse::<u32>().map_err(|_| syntax(line, vcol, "depth must be a positive integer"))?);
                    }
                    "anchor" => {
                        let items = split_list(value, line, vcol);
                        let mut pt = Vec::with_capacity(items.len());
                        for (s, c) in items {
                            pt.push(parse_rational(&s, line, c)?);
                        }
                        anchor = Some(pt);
                        anchor_at = (line, vcol);
                    }
                    other => return Err(syntax(line, col0, format!("unknown header key `{other}`"))),
                }
            }
            Section::Coordinates => {
                for (s, c) in split_list(body, line, col0) {
                    let ok = s.chars().next().is_some_and(|ch| ch.is_alphabetic() || ch == '_')
                        && s.chars().all(|ch| ch.is_alphanumeric() || ch == '_');
                    if !ok {
                        return Err(syntax(line, c, format!("invalid coordinate name `{s}`")));
                    }
                    if coordinates.contains(&s) {
                        return Err(syntax(line, c, format!("duplicate coordinate `{s}`")));
                    }
                    coordinates.push(s);
                }
            }
            Section::Fields => {
                let Some(eq) = body.find('=') else {
                    return Err(syntax(line, col0, "expected `label = (components)`"));
                };
                let label = body[..eq].trim().to_string();
                if label.is_empty() {
                    return Err(syntax(line, col0, "missing field label"));
                }
                let rhs = &body[eq + 1..];
                let rcol = col0 + body[..eq + 1].chars().count();
                raw_fields.push((line, rcol, label, rhs.to_string()));
            }
            Section::Weights => {
                weights_end = (line, col0 + body.chars().count());
                for (s, c) in split_list(body, line, col0) {
                    let w = s
                        .parse::<u32>()
                        .ok()
                        .filter(|&w| w > 0)
                        .ok_or_else(|| syntax(line, c, format!("weight must be a positive integer, found `{s}`")))?;
                    weights.push(w);
                }
            }
        }
    }
    for (k, label) in ["header", "coordinates", "fields", "weights"].into_iter().enumerate() {
        if !seen[k] {
            return Err(SpaceFileError::MissingSection(label));
        }
    }
    let name = name.ok_or(SpaceFileError::MissingSection("header: name"))?;
    let vars: HashMap<String, usize> = coordinates.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
    let n = coordinates.len();
    let mut fields = Vec::with_capacity(raw_fields.len());
    for (line, col, label, rhs) in raw_fields {
        let toks = lex(&rhs, line, col)?;
        let mut p = Parser {
            toks: &toks,
            pos: 0,
            line,
            end_col: col + rhs.chars().count(),
            vars: &vars,
            nvars: n,
        };
        p.expect('(')?;
        let mut comps = vec![p.expr()?];
        while p.eat(',') {
            comps.push(p.expr()?);
        }
        p.expect(')')?;
        p.done()?;
        if comps.len() != n {
            return Err(syntax(line, col, format!("field {label} has {} components, expected {n}", comps.len())));
        }
        fields.push((label, comps));
    }
    if weights.len() != fields.len() {
        return Err(SpaceFileError::CountMismatch {
            line: weights_end.0,
            col: weights_end.1,
            what: "weights",
            expected: fields.len(),
            found: weights.len(),
        });
    }
    if let Some(a) = &anchor {
        if a.len() != n {
            return Err(SpaceFileError::CountMismatch {
                line: anchor_at.0,
                col: anchor_at.1,
                what: "anchor coordinates",
                expected: n,
                found: a.len(),
            });
        }
    }
    Ok(SpaceSpecDocument {
        name,
        depth,
        anchor,
        coordinates,
        fields,
        weights,
    })
}

impl SpaceSpecDocument {
    pub fn to_system(&self) -> Result<WeightedSystem, SpaceFileError> {
        let chart = CoordinateChart::new(self.coordinates.clone())?;
        let gens = self
            .fields
            .iter()
            .map(|(_, c)| VectorField::new(chart.clone(), c.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let anchor = self
            .anchor
            .clone()
            .unwrap_or_else(|| vec![Rational::zero(); self.coordinates.len()]);
        Ok(WeightedSystem::new(
            self.name.clone(),
            chart,
            gens,
            self.weights.clone(),
            anchor,
            self.depth,
        )?)
    }

    pub fn from_system(sys: &WeightedSystem) -> Self {
        SpaceSpecDocument {
            name: sys.name.clone(),
            depth: Some(sys.depth()),
            anchor: Some(sys.anchor().to_vec()),
            coordinates: sys.chart().names().to_vec(),
            fields: sys
                .generators()
                .iter()
                .enumerate()
                .map(|(i, g)| (format!("X{}", i + 1), g.components().to_vec()))
                .collect(),
            weights: sys.weights().to_vec(),
        }
    }

    /// Canonical text form.
    pub fn print(&self) -> String {
        let mut s = String::from("[header]\n");
        s.push_str(&format!("name = {}\n", self.name));
        if let Some(d) = self.depth {
            s.push_str(&format!("depth = {d}\n"));
        }
        if let Some(a) = &self.anchor {
            let items: Vec<String> = a.iter().map(|q| q.to_string()).collect();
            s.push_str(&format!("anchor = {}\n", items.join(", ")));
        }
        s.push_str("\n[coordinates]\n");
        s.push_str(&self.coordinates.join(", "));
        s.push_str("\n\n[fields]\n");
        for (label, comps) in &self.fields {
            let parts: Vec<String> = comps.iter().map(|p| p.render(&self.coordinates)).collect();
            s.push_str(&format!("{label} = ({})\n", parts.join(", ")));
        }
        s.push_str("\n[weights]\n");
        let ws: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        s.push_str(&ws.join(", "));
        s.push('\n');
        s
    }
}

/// Parses and validates a space file.
pub fn parse_space(text: &str) -> Result<WeightedSystem, SpaceFileError> {
    parse_document(text)?.to_system()
}

pub fn print_system(sys: &WeightedSystem) -> String {
    SpaceSpecDocument::from_system(sys).print()
}

pub const CATALOG: [&str; 5] = [
    "heisenberg-<n>",
    "heisenberg-weighted",
    "weighted-euclidean",
    "example3-unit",
    "example3-graded",
];

const HEISENBERG_WEIGHTED: &str = "\
[header]
name = heisenberg-weighted

[coordinates]
x, y, t

[fields]
X = (1, 0, -1/2*y)
Y = (0, 1, 1/2*x)
T = (0, 0, 1)

[weights]
1, 2, 3
";

const WEIGHTED_EUCLIDEAN: &str = "\
[header]
name = weighted-euclidean

[coordinates]
x1, x2, x3

[fields]
X1 = (1, 0, 0)
X2 = (0, 1, 0)
X3 = (0, 0, 1)

[weights]
1, 2, 3
";

fn example3(name: &str, weights: &str) -> String {
    format!(
        "[header]\nname = {name}\n\n[coordinates]\nx, y, t\n\n[fields]\nX1 = (0, 1, 0)\nX2 = (1, 0, y)\nX3 = (1, 0, 0)\n\n[weights]\n{weights}\n"
    )
}

fn heisenberg(n: usize) -> String {
    let mut coords: Vec<String> = Vec::new();
    for j in 1..=n {
        coords.push(format!("x{j}"));
    }
    for j in 1..=n {
        coords.push(format!("y{j}"));
    }
    coords.push("t".into());
    let dim = 2 * n + 1;
    let unit = |k: usize, last: String| -> String {
        let mut c: Vec<String> = (0..dim).map(|i| if i == k { "1".into() } else { "0".into() }).collect();
        c[dim - 1] = last;
        format!("({})", c.join(", "))
    };
    let mut s = format!("[header]\nname = heisenberg-{n}\n\n[coordinates]\n{}\n\n[fields]\n", coords.join(", "));
    for j in 1..=n {
        s.push_str(&format!("X{j} = {}\n", unit(j - 1, format!("-1/2*y{j}"))));
    }
    for j in 1..=n {
        s.push_str(&format!("Y{j} = {}\n", unit(n + j - 1, format!("1/2*x{j}"))));
    }
    s.push_str(&format!("T = {}\n\n[weights]\n", unit(dim - 1, "1".into())));
    let mut w = vec!["1"; 2 * n];
    w.push("2");
    s.push_str(&w.join(", "));
    s.push('\n');
    s
}

/// Source text of a catalog entry.
pub fn catalog(name: &str) -> Result<String, SpaceFileError> {
    let unknown = || SpaceFileError::UnknownCatalog {
        name: name.to_string(),
        available: CATALOG.join(", "),
    };
    match name {
        "heisenberg-weighted" => Ok(HEISENBERG_WEIGHTED.to_string()),
        "weighted-euclidean" => Ok(WEIGHTED_EUCLIDEAN.to_string()),
        "example3-unit" => Ok(example3("example3-unit", "1, 1, 1")),
        "example3-graded" => Ok(example3("example3-graded", "1, 2, 3")),
        _ => {
            let n: usize = name
                .strip_prefix("heisenberg-")
                .and_then(|s| s.parse().ok())
                .filter(|&n| (1..=8).contains(&n))
                .ok_or_else(unknown)?;
            Ok(heisenberg(n))
        }
    }
}

pub fn catalog_system(name: &str) -> Result<WeightedSystem, SpaceFileError> {
    parse_space(&catalog(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::rat;

    #[test]
    fn catalog_entries_parse() {
        let h = catalog_system("heisenberg-1").unwrap();
        assert_eq!((h.dim(), h.generators().len(), h.depth()), (3, 3, 2));
        assert_eq!(h.weights(), &[1, 1, 2]);
        assert_eq!(catalog_system("heisenberg-2").unwrap().dim(), 5);
        assert_eq!(catalog_system("example3-unit").unwrap().depth(), 2);
        assert_eq!(catalog_system("example3-graded").unwrap().depth(), 3);
        assert_eq!(catalog_system("weighted-euclidean").unwrap().depth(), 3);
        assert_eq!(catalog_system("heisenberg-weighted").unwrap().depth(), 3);
        let e = catalog("heisenberg").unwrap_err();
        assert!(e.to_string().contains("example3-unit"));
    }

    #[test]
    fn print_parse_is_a_fixed_point() {
        for name in ["heisenberg-2", "heisenberg-weighted", "weighted-euclidean", "example3-unit", "example3-graded"] {
            let doc = parse_document(&catalog(name).unwrap()).unwrap();
            let printed = doc.print();
            let again = parse_document(&printed).unwrap();
            assert_eq!(again, doc);
            assert_eq!(again.print(), printed);
        }
    }

    #[test]
    fn expressions() {
        let text = "[header]\nname = e\nanchor = 1/2, -3\n[coordinates]\nx, y\n[fields]\nA = (-(x + 1)^2 + y/3, 2*x*y - 1/4)\n[weights]\n1\n";
        let d = parse_document(text).unwrap();
        assert_eq!(d.anchor, Some(vec![rat(1, 2), rat(-3, 1)]));
        let names = d.coordinates.clone();
        assert_eq!(d.fields[0].1[0].render(&names), "-x^2 - 2*x + 1/3*y - 1");
        assert_eq!(d.fields[0].1[1].render(&names), "2*x*y - 1/4");
    }

    #[test]
    fn diagnostics_carry_positions() {
        let base = |field: &str, weights: &str| {
            format!("[header]\nname = m\n[coordinates]\nx, y\n[fields]\n{field}\n[weights]\n{weights}\n")
        };
        let e = parse_document(&base("A = (1, z)", "1")).unwrap_err();
        assert_eq!(
            e,
            SpaceFileError::UndeclaredCoordinate {
                line: 6,
                col: 9,
                name: "z".into()
            }
        );
        let e = parse_document(&base("A = (x^(1/2), 0)", "1")).unwrap_err();
        assert!(matches!(e, SpaceFileError::Syntax { line: 6, col: 8, .. }), "{e}");
        let e = parse_document(&base("A = (x^-1, 0)", "1")).unwrap_err();
        assert!(matches!(e, SpaceFileError::Syntax { line: 6, .. }), "{e}");
        let e = parse_document(&base("A = (1, 0)\nB = (0, 1)", "1")).unwrap_err();
        assert!(matches!(e, SpaceFileError::CountMismatch { .. }));
        let e = parse_document(&base("A = (1 +, 0)", "1")).unwrap_err();
        assert!(matches!(e, SpaceFileError::Syntax { line: 6, col: 9, .. }), "{e}");
    }

    #[test]
    fn span_deficiency_is_structural() {
        let text = "[header]\nname = d\n[coordinates]\nx, y\n[fields]\nA = (1, 0)\n[weights]\n1\n";
        assert!(matches!(parse_space(text), Err(SpaceFileError::Structure(_))));
    }
}
