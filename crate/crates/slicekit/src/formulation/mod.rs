//! Mixed-binary linear models of the placement-and-routing problem.
//!
//! [`build_milp`] produces the path-flow formulation whose LP relaxation is
//! strong; [`build_minlp_linearized`] produces the baseline in which the
//! per-path rate variables are coupled to link indicators through McCormick
//! envelopes. Both share the placement, capacity, reliability, and delay
//! families emitted by [`build_common`].
//!
//! # Constraint families
//!
//! Every constraint carries a [`Family`] tag. For an instance with node set
//! `I`, cloud subset `V`, link set `L`, services `k` with chain lengths
//! `l_k` (write `F_k = l_k + 1` for the number of flow stages) and `P` paths
//! per flow, the per-family constraint counts are:
//!
//! | family           | count                                   | emitted by |
//! |------------------|------------------------------------------|-----------|
//! | `eq1-placement`  | `sum_k l_k`                              | common    |
//! | `eq2-funcuse`    | `|V| * sum_k l_k`                        | common    |
//! | `eq3-activation` | `|V| * |K|`                              | common    |
//! | `eq4-nodecap`    | `|V|`                                    | common    |
//! | `eq5-pathorder`  | `|I| * P * sum_k F_k`                    | common    |
//! | `eq6-pathsum`    | `sum_k F_k`                              | linearized baseline |
//! | `eq7-mccormick`  | `3 * |L| * P * sum_k F_k`                | linearized baseline |
//! | `eq8-linkcap`    | `|L|`                                    | common    |
//! | `eq9-zagg`       | `|L| * P * sum_k F_k`                    | common    |
//! | `eq10-reliability` | `#{k : gamma_k > 0}`                   | common    |
//! | `eq11-pathdelay` | `P * sum_k F_k`                          | common    |
//! | `eq12-e2edelay`  | `|K|`                                    | common    |
//! | `sfc0-outdeg`    | `|I| * P * sum_k F_k`                    | milp      |
//! | `sfc1-rz`        | `|L| * P * sum_k F_k`                    | milp      |
//! | `sfc2-srcdst`    | `sum_k (|V| * F_k + 2)`                  | milp      |
//! | `sfc3-transit`   | `P * sum_k ((|I| - |V|) * F_k - 2)`      | milp      |
//! | `sfc4-hostin`    | `|V| * P * sum_k l_k`                    | milp      |
//! | `sfc5-hostout`   | `|V| * P * sum_k l_k`                    | milp      |
//! | `vi1`            | `|L| * sum_k F_k`                        | milp      |
//! | `vi2`            | `sum_k F_k`                              | milp      |
//!
//! The counts assume every node has at least one incident link and all rates
//! are positive; rows whose coefficients all vanish are dropped. The
//! no-reliability variant removes `eq9`, `eq10`, `vi1`, and all `zagg`
//! variables; the single-path variant sets `P = 1`.

mod build;
mod lp_text;

pub use build::{build_common, build_milp, build_minlp_linearized, VariantFlags};
pub use lp_text::{export_lp, parse_lp, LpDocument, LpParseError};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::InstanceError;

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("sigma must be > 0 (got {0}); set allow_zero_sigma to override")]
    InvalidSigma(f64),
    #[error("effective path count must be >= 1")]
    InvalidPaths,
}

/// Integrality of a model variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

/// A model variable: canonical name, bounds, integrality.
#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub index: usize,
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// Closed set of constraint family tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Each function stage is hosted by exactly one cloud node.
    Placement,
    /// Stage hosting implies the node serves the service.
    FuncUse,
    /// Serving a service implies the node is activated.
    Activation,
    /// Total hosted rate within node capacity.
    NodeCapacity,
    /// Per-path unit flow conservation on link indicators.
    PathOrder,
    /// Path fractions of each flow sum to one (linearized baseline).
    PathSum,
    /// McCormick envelope coupling link fractions to indicators (baseline).
    McCormick,
    /// Total routed rate within link capacity.
    LinkCapacity,
    /// Per-path link use implies per-service link use.
    LinkUse,
    /// Log-linear end-to-end reliability lower bound.
    Reliability,
    /// Flow delay dominates every path's delay.
    PathDelay,
    /// Processing plus communication delay within budget.
    E2eDelay,
    /// At most one outgoing link per node on each path.
    OutDegree,
    /// Positive link fraction forces the link indicator.
    RateLinkCoupling,
    /// Aggregated rate conservation at flow sources and destinations.
    SrcDstConservation,
    /// Per-path rate conservation at non-cloud transit nodes.
    TransitConservation,
    /// Per-path net inflow at a cloud bounded by hosting of the next stage.
    HostInflow,
    /// Per-path net outflow at a cloud bounded by hosting of this stage.
    HostOutflow,
    /// Valid inequality: summed path fractions within the service link use.
    PathFractionCap,
    /// Valid inequality: flow delay dominates rate-weighted path delays.
    FlowDelayLb,
}

impl Family {
    pub const ALL: [Family; 20] = [
        Family::Placement,
        Family::FuncUse,
        Family::Activation,
        Family::NodeCapacity,
        Family::PathOrder,
        Family::PathSum,
        Family::McCormick,
        Family::LinkCapacity,
        Family::LinkUse,
        Family::Reliability,
        Family::PathDelay,
        Family::E2eDelay,
        Family::OutDegree,
        Family::RateLinkCoupling,
        Family::SrcDstConservation,
        Family::TransitConservation,
        Family::HostInflow,
        Family::HostOutflow,
        Family::PathFractionCap,
        Family::FlowDelayLb,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Family::Placement => "eq1-placement",
            Family::FuncUse => "eq2-funcuse",
            Family::Activation => "eq3-activation",
            Family::NodeCapacity => "eq4-nodecap",
            Family::PathOrder => "eq5-pathorder",
            Family::PathSum => "eq6-pathsum",
            Family::McCormick => "eq7-mccormick",
            Family::LinkCapacity => "eq8-linkcap",
            Family::LinkUse => "eq9-zagg",
            Family::Reliability => "eq10-reliability",
            Family::PathDelay => "eq11-pathdelay",
            Family::E2eDelay => "eq12-e2edelay",
            Family::OutDegree => "sfc0-outdeg",
            Family::RateLinkCoupling => "sfc1-rz",
            Family::SrcDstConservation => "sfc2-srcdst",
            Family::TransitConservation => "sfc3-transit",
            Family::HostInflow => "sfc4-hostin",
            Family::HostOutflow => "sfc5-hostout",
            Family::PathFractionCap => "vi1",
            Family::FlowDelayLb => "vi2",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Family> {
        Family::ALL.iter().copied().find(|f| f.tag() == tag)
    }
}

/// A sparse linear constraint. Terms are sorted by variable index and carry
/// no zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinConstraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub family: Family,
}

impl LinConstraint {
    /// Left-hand side value under an assignment.
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * values[j]).sum()
    }

    /// Signed violation (positive when the constraint is broken).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs - self.rhs,
            Sense::Ge => self.rhs - lhs,
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Which builder produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantTag {
    /// Path-flow MILP.
    Milp,
    /// McCormick-linearized baseline.
    MinlpLinearized,
    /// Shared families only (partial model).
    Common,
    /// Reconstructed from an LP text document.
    Imported,
}

impl std::fmt::Display for VariantTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VariantTag::Milp => "milp",
            VariantTag::MinlpLinearized => "minlp",
            VariantTag::Common => "common",
            VariantTag::Imported => "imported",
        };
        f.write_str(s)
    }
}

/// A generic mixed-binary linear minimization model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub variables: Vec<VarRef>,
    pub constraints: Vec<LinConstraint>,
    /// Sparse minimization objective, sorted by variable index.
    pub objective: Vec<(usize, f64)>,
    /// Weight of the link-consumption term in the objective.
    pub sigma: f64,
    pub variant: VariantTag,
}

impl Model {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binary(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * values[j]).sum()
    }

    /// All binary variables relaxed to continuous `[lower, upper]`. Idempotent.
    pub fn lp_relaxation(&self) -> Model {
        let mut relaxed = self.clone();
        for v in &mut relaxed.variables {
            v.kind = VarKind::Continuous;
        }
        relaxed
    }

    /// Number of constraints per family tag.
    pub fn family_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.constraints {
            *counts.entry(c.family.tag()).or_insert(0) += 1;
        }
        counts
    }

    /// Map from variable name to index.
    pub fn name_index_map(&self) -> BTreeMap<&str, usize> {
        self.variables
            .iter()
            .map(|v| (v.name.as_str(), v.index))
            .collect()
    }

    /// Group variable indices by symbol, via the name registry.
    pub fn registry(&self) -> BTreeMap<Symbol, Vec<usize>> {
        let mut map: BTreeMap<Symbol, Vec<usize>> = BTreeMap::new();
        for v in &self.variables {
            if let Ok(parsed) = parse_var_name(&v.name) {
                map.entry(parsed.symbol).or_default().push(v.index);
            }
        }
        map
    }
}

/// The model's variable symbols. Each maps one-to-one onto a decision
/// quantity of the formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    /// `x[v,s,k]`: stage `s` of service `k` is hosted at cloud node `v`.
    HostStage,
    /// `xk[v,k]`: cloud node `v` hosts at least one stage of service `k`.
    HostService,
    /// `y[v]`: cloud node `v` is activated.
    NodeActive,
    /// `z[i,j,k,s,p]`: link `(i,j)` lies on path `p` of flow `(k,s)`.
    PathLink,
    /// `zagg[i,j,k]`: link `(i,j)` carries traffic of service `k`.
    ServiceLink,
    /// `r[i,j,k,s,p]`: fraction of flow `(k,s)` rate on link `(i,j)`, path `p`.
    LinkFraction,
    /// `rpath[k,s,p]`: fraction of flow `(k,s)` rate routed on path `p`.
    PathFraction,
    /// `theta[k,s]`: communication delay of flow `(k,s)`.
    FlowDelay,
}

/// The kinds of indices a symbol's name carries, in name order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Node,
    Service,
    Stage,
    Path,
}

/// A parsed index value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexValue {
    Node(String),
    Service(String),
    Stage(usize),
    Path(usize),
}

impl Symbol {
    pub const ALL: [Symbol; 8] = [
        Symbol::HostStage,
        Symbol::HostService,
        Symbol::NodeActive,
        Symbol::PathLink,
        Symbol::ServiceLink,
        Symbol::LinkFraction,
        Symbol::PathFraction,
        Symbol::FlowDelay,
    ];

    /// Short tag used in variable names.
    pub fn tag(&self) -> &'static str {
        match self {
            Symbol::HostStage => "x",
            Symbol::HostService => "xk",
            Symbol::NodeActive => "y",
            Symbol::PathLink => "z",
            Symbol::ServiceLink => "zagg",
            Symbol::LinkFraction => "r",
            Symbol::PathFraction => "rpath",
            Symbol::FlowDelay => "theta",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Symbol> {
        Symbol::ALL.iter().copied().find(|s| s.tag() == tag)
    }

    /// Index signature of the symbol's name, e.g. `z[i,j,k,s,p]`.
    pub fn signature(&self) -> &'static [IndexKind] {
        use IndexKind::*;
        match self {
            Symbol::HostStage => &[Node, Stage, Service],
            Symbol::HostService => &[Node, Service],
            Symbol::NodeActive => &[Node],
            Symbol::PathLink => &[Node, Node, Service, Stage, Path],
            Symbol::ServiceLink => &[Node, Node, Service],
            Symbol::LinkFraction => &[Node, Node, Service, Stage, Path],
            Symbol::PathFraction => &[Service, Stage, Path],
            Symbol::FlowDelay => &[Service, Stage],
        }
    }
}

/// A variable name decomposed into its symbol and typed indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedVar {
    pub symbol: Symbol,
    pub indices: Vec<IndexValue>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse variable name {name:?}: {reason}")]
pub struct NameParseError {
    pub name: String,
    pub reason: String,
}

/// Parse a canonical variable name like `z[n0,v1,k0,2,1]` back into its
/// symbol and indices.
pub fn parse_var_name(name: &str) -> Result<ParsedVar, NameParseError> {
    let err = |reason: &str| NameParseError {
        name: name.to_string(),
        reason: reason.to_string(),
    };
    let open = name.find('[').ok_or_else(|| err("missing '['"))?;
    if !name.ends_with(']') {
        return Err(err("missing ']'"));
    }
    let symbol = Symbol::from_tag(&name[..open]).ok_or_else(|| err("unknown symbol"))?;
    let inner = &name[open + 1..name.len() - 1];
    let parts: Vec<&str> = inner.split(',').collect();
    let sig = symbol.signature();
    if parts.len() != sig.len() {
        return Err(err(&format!(
            "expected {} indices, found {}",
            sig.len(),
            parts.len()
        )));
    }
    let mut indices = Vec::with_capacity(parts.len());
    for (part, kind) in parts.iter().zip(sig) {
        let value = match kind {
            IndexKind::Node => IndexValue::Node(part.to_string()),
            IndexKind::Service => IndexValue::Service(part.to_string()),
            IndexKind::Stage => IndexValue::Stage(
                part.parse()
                    .map_err(|_| err(&format!("stage index {part:?} is not an integer")))?,
            ),
            IndexKind::Path => IndexValue::Path(
                part.parse()
                    .map_err(|_| err(&format!("path index {part:?} is not an integer")))?,
            ),
        };
        indices.push(value);
    }
    Ok(ParsedVar { symbol, indices })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trips_every_symbol() {
        let names = [
            ("x[v0,1,k0]", Symbol::HostStage),
            ("xk[v0,k0]", Symbol::HostService),
            ("y[v0]", Symbol::NodeActive),
            ("z[n0,v1,k0,0,1]", Symbol::PathLink),
            ("zagg[n0,v1,k0]", Symbol::ServiceLink),
            ("r[n0,v1,k0,0,1]", Symbol::LinkFraction),
            ("rpath[k0,2,1]", Symbol::PathFraction),
            ("theta[k0,0]", Symbol::FlowDelay),
        ];
        for (name, symbol) in names {
            let parsed = parse_var_name(name).unwrap();
            assert_eq!(parsed.symbol, symbol, "{name}");
            assert_eq!(parsed.indices.len(), symbol.signature().len());
        }
    }

    #[test]
    fn parse_rejects_malformed_names() {
        assert!(parse_var_name("x[v0,1]").is_err());
        assert!(parse_var_name("q[v0]").is_err());
        assert!(parse_var_name("theta[k0,x]").is_err());
        assert!(parse_var_name("y").is_err());
    }

    #[test]
    fn family_tags_are_unique_and_round_trip() {
        for f in Family::ALL {
            assert_eq!(Family::from_tag(f.tag()), Some(f));
        }
        let tags: std::collections::HashSet<_> = Family::ALL.iter().map(|f| f.tag()).collect();
        assert_eq!(tags.len(), Family::ALL.len());
    }
}
