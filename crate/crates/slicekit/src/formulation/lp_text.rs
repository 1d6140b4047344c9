//! LP-format text export and import.
//!
//! The dialect is a deterministic ASCII subset of the common LP file format:
//! sections `Minimize`, `Subject To`, `Bounds`, `Binaries`, `End`; one
//! constraint per line named `<family>_<n>`; coefficients printed with 17
//! significant digits so values survive a round trip bit-exactly. The
//! `Bounds` section lists every variable in model order, which lets
//! [`parse_lp`] rebuild the exact variable layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Family, LinConstraint, Model, Sense, VarKind, VarRef, VariantTag};

/// Names longer than this are replaced by `v<index>` aliases on export.
const MAX_NAME_LEN: usize = 255;

/// An exported model document.
#[derive(Debug, Clone, PartialEq)]
pub struct LpDocument {
    pub text: String,
    /// Alias -> original name, for names that exceeded format limits.
    pub renamed: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum LpParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown variable {0:?} (not declared in Bounds)")]
    UnknownVariable(String),
}

fn syntax(line: usize, message: impl Into<String>) -> LpParseError {
    LpParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Export a model to LP text. Output is byte-identical across runs for the
/// same model.
pub fn export_lp(model: &Model) -> LpDocument {
    let mut renamed = BTreeMap::new();
    let names: Vec<String> = model
        .variables
        .iter()
        .map(|v| {
            if v.name.len() > MAX_NAME_LEN || v.name.chars().any(|c| c.is_whitespace()) {
                let alias = format!("v{}", v.index);
                renamed.insert(alias.clone(), v.name.clone());
                alias
            } else {
                v.name.clone()
            }
        })
        .collect();

    let mut text = String::new();
    text.push_str("Minimize\n obj:");
    if model.objective.is_empty() {
        // A constant-zero objective still needs one term to stay parseable.
        write!(text, " 0 {}", names[0]).unwrap();
    }
    for &(j, c) in &model.objective {
        write!(text, " {} {}", fmt_num(c), names[j]).unwrap();
    }
    text.push('\n');

    text.push_str("Subject To\n");
    let mut family_counters: BTreeMap<&'static str, usize> = BTreeMap::new();
    for con in &model.constraints {
        let n = family_counters.entry(con.family.tag()).or_insert(0);
        write!(text, " {}_{}:", con.family.tag(), n).unwrap();
        *n += 1;
        if con.terms.is_empty() {
            write!(text, " 0 {}", names[0]).unwrap();
        }
        for &(j, c) in &con.terms {
            write!(text, " {} {}", fmt_num(c), names[j]).unwrap();
        }
        writeln!(text, " {} {}", con.sense.as_str(), fmt_num(con.rhs)).unwrap();
    }

    text.push_str("Bounds\n");
    for v in &model.variables {
        let name = &names[v.index];
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => {
                writeln!(text, " {} <= {} <= {}", fmt_num(v.lower), name, fmt_num(v.upper))
                    .unwrap()
            }
            (true, false) => writeln!(text, " {} >= {}", name, fmt_num(v.lower)).unwrap(),
            (false, true) => writeln!(text, " {} <= {}", name, fmt_num(v.upper)).unwrap(),
            (false, false) => writeln!(text, " {} free", name).unwrap(),
        }
    }

    text.push_str("Binaries\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary {
            writeln!(text, " {}", names[v.index]).unwrap();
        }
    }
    text.push_str("End\n");

    LpDocument { text, renamed }
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Done,
}

/// Parse LP text back into a model. Variables take the order of the `Bounds`
/// section; constraint families are recovered from row names. The result has
/// `sigma = 0` and the `Imported` variant tag.
pub fn parse_lp(text: &str) -> Result<Model, LpParseError> {
    let mut section = Section::Preamble;
    let mut variables: Vec<VarRef> = Vec::new();
    let mut index_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut objective_raw: Vec<(String, f64)> = Vec::new();
    let mut constraints_raw: Vec<(usize, String, Vec<(String, f64)>, Sense, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        match line {
            "Minimize" => {
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Constraints;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Binaries" => {
                section = Section::Binaries;
                continue;
            }
            "End" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble => {
                return Err(syntax(lineno, "expected 'Minimize'"));
            }
            Section::Objective => {
                let rest = line
                    .strip_prefix("obj:")
                    .ok_or_else(|| syntax(lineno, "objective must start with 'obj:'"))?;
                objective_raw = parse_terms(rest, lineno)?;
            }
            Section::Constraints => {
                let colon = line
                    .find(':')
                    .ok_or_else(|| syntax(lineno, "constraint line missing ':'"))?;
                let name = &line[..colon];
                let rest = &line[colon + 1..];
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                let sense_pos = tokens
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "="))
                    .ok_or_else(|| syntax(lineno, "constraint line missing sense"))?;
                if sense_pos + 2 != tokens.len() {
                    return Err(syntax(lineno, "expected a single value after the sense"));
                }
                let sense = match tokens[sense_pos] {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    _ => Sense::Eq,
                };
                let rhs: f64 = tokens[sense_pos + 1]
                    .parse()
                    .map_err(|_| syntax(lineno, "right-hand side is not a number"))?;
                let terms = parse_term_tokens(&tokens[..sense_pos], lineno)?;
                let family_tag = name.rsplit_once('_').map(|(f, _)| f).unwrap_or(name);
                let family = Family::from_tag(family_tag)
                    .ok_or_else(|| syntax(lineno, format!("unknown family {family_tag:?}")))?;
                constraints_raw.push((lineno, name.to_string(), terms, sense, rhs));
                // Family validated above; store the tag index for lookup below.
                let _ = family;
            }
            Section::Bounds => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                let (name, lower, upper) = match tokens.as_slice() {
                    [lo, "<=", name, "<=", hi] => (
                        *name,
                        parse_num(lo, lineno)?,
                        parse_num(hi, lineno)?,
                    ),
                    [name, ">=", lo] => (*name, parse_num(lo, lineno)?, f64::INFINITY),
                    [name, "<=", hi] => (*name, f64::NEG_INFINITY, parse_num(hi, lineno)?),
                    [name, "free"] => (*name, f64::NEG_INFINITY, f64::INFINITY),
                    _ => return Err(syntax(lineno, "unrecognized bounds line")),
                };
                if index_of.contains_key(name) {
                    return Err(syntax(lineno, format!("duplicate bounds for {name:?}")));
                }
                let index = variables.len();
                index_of.insert(name.to_string(), index);
                variables.push(VarRef {
                    index,
                    name: name.to_string(),
                    lower,
                    upper,
                    kind: VarKind::Continuous,
                });
            }
            Section::Binaries => {
                let name = line;
                let idx = *index_of
                    .get(name)
                    .ok_or_else(|| LpParseError::UnknownVariable(name.to_string()))?;
                variables[idx].kind = VarKind::Binary;
            }
            Section::Done => {
                return Err(syntax(lineno, "content after 'End'"));
            }
        }
    }

    let lookup = |name: &str| -> Result<usize, LpParseError> {
        index_of
            .get(name)
            .copied()
            .ok_or_else(|| LpParseError::UnknownVariable(name.to_string()))
    };

    let mut objective = Vec::new();
    for (name, c) in objective_raw {
        if c != 0.0 {
            objective.push((lookup(&name)?, c));
        }
    }
    objective.sort_by_key(|&(j, _)| j);

    let mut constraints = Vec::new();
    for (_lineno, name, terms_raw, sense, rhs) in constraints_raw {
        let family_tag = name.rsplit_once('_').map(|(f, _)| f).unwrap_or(&name);
        let family = Family::from_tag(family_tag).expect("validated during scan");
        let mut terms = Vec::new();
        for (name, c) in terms_raw {
            if c != 0.0 {
                terms.push((lookup(&name)?, c));
            }
        }
        terms.sort_by_key(|&(j, _)| j);
        constraints.push(LinConstraint {
            terms,
            sense,
            rhs,
            family,
        });
    }

    Ok(Model {
        variables,
        constraints,
        objective,
        sigma: 0.0,
        variant: VariantTag::Imported,
    })
}

fn parse_num(token: &str, lineno: usize) -> Result<f64, LpParseError> {
    token
        .parse()
        .map_err(|_| syntax(lineno, format!("{token:?} is not a number")))
}

fn parse_terms(text: &str, lineno: usize) -> Result<Vec<(String, f64)>, LpParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    parse_term_tokens(&tokens, lineno)
}

fn parse_term_tokens(tokens: &[&str], lineno: usize) -> Result<Vec<(String, f64)>, LpParseError> {
    if tokens.len() % 2 != 0 {
        return Err(syntax(
            lineno,
            "terms must be coefficient/variable pairs",
        ));
    }
    let mut terms = Vec::with_capacity(tokens.len() / 2);
    for pair in tokens.chunks(2) {
        let c = parse_num(pair[0], lineno)?;
        terms.push((pair[1].to_string(), c));
    }
    Ok(terms)
}
