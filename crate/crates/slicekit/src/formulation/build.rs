//! Model builders.
//!
//! Builders are pure functions of `(instance, sigma, flags)`. Variables are
//! declared in a canonical order (symbols sorted by tag, then indices by
//! service, stage, path, link, cloud position) so two builds of the same
//! inputs produce identical models.

use std::collections::HashMap;

use crate::instance::Instance;

use super::{
    Family, FormulationError, LinConstraint, Model, Sense, VarKind, VarRef, VariantTag,
};

/// Options shared by all builders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VariantFlags {
    /// Restrict routing to a single path per flow (`P = 1`).
    pub single_path: bool,
    /// Drop the reliability families and the per-service link variables.
    pub no_reliability: bool,
    /// Ablation switch: skip both valid-inequality families in the MILP build.
    pub disable_valid_inequalities: bool,
    /// Override the instance's path count before `single_path` applies.
    pub paths_override: Option<usize>,
    /// Permit `sigma == 0` (drops the link-consumption term).
    pub allow_zero_sigma: bool,
}

/// Path-flow MILP: shared families plus per-path out-degree, rate/link
/// coupling, aggregated source/destination conservation, per-path transit and
/// host conservation, and the two valid-inequality families.
pub fn build_milp(
    instance: &Instance,
    sigma: f64,
    flags: VariantFlags,
) -> Result<Model, FormulationError> {
    let mut b = Builder::new(instance, sigma, flags, false)?;
    b.emit_common();
    b.emit_milp();
    Ok(b.finish(VariantTag::Milp))
}

/// McCormick-linearized baseline: shared families plus path-fraction
/// variables, their unit-sum rows, and the three-row envelope coupling each
/// link fraction to its link indicator and path fraction.
pub fn build_minlp_linearized(
    instance: &Instance,
    sigma: f64,
    flags: VariantFlags,
) -> Result<Model, FormulationError> {
    let mut b = Builder::new(instance, sigma, flags, true)?;
    b.emit_common();
    b.emit_minlp();
    Ok(b.finish(VariantTag::MinlpLinearized))
}

/// Only the families shared by both formulations (a partial model).
pub fn build_common(
    instance: &Instance,
    sigma: f64,
    flags: VariantFlags,
) -> Result<Model, FormulationError> {
    let mut b = Builder::new(instance, sigma, flags, false)?;
    b.emit_common();
    Ok(b.finish(VariantTag::Common))
}

struct Builder<'a> {
    inst: &'a Instance,
    sigma: f64,
    flags: VariantFlags,
    /// Effective path count.
    p: usize,
    /// Node indices of cloud nodes, in node order.
    cloud: Vec<usize>,
    /// Link endpoints as node indices.
    link_ends: Vec<(usize, usize)>,
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
    /// Source/destination node indices per service.
    endpoints: Vec<(usize, usize)>,

    vars: Vec<VarRef>,
    constraints: Vec<LinConstraint>,

    // Index tables; all Vec-of-Vec lookups are by position, not id.
    // x_idx[k][s-1][v_pos], xk_idx[k][v_pos], y_idx[v_pos],
    // z_idx[k][s][p-1][l], r_idx likewise, zagg_idx[k][l],
    // rpath_idx[k][s][p-1], theta_idx[k][s].
    x_idx: Vec<Vec<Vec<usize>>>,
    xk_idx: Vec<Vec<usize>>,
    y_idx: Vec<usize>,
    z_idx: Vec<Vec<Vec<Vec<usize>>>>,
    r_idx: Vec<Vec<Vec<Vec<usize>>>>,
    zagg_idx: Vec<Vec<usize>>,
    rpath_idx: Vec<Vec<Vec<usize>>>,
    theta_idx: Vec<Vec<usize>>,
}

impl<'a> Builder<'a> {
    fn new(
        inst: &'a Instance,
        sigma: f64,
        flags: VariantFlags,
        with_rpath: bool,
    ) -> Result<Self, FormulationError> {
        inst.validate()?;
        if !(sigma > 0.0) && !(flags.allow_zero_sigma && sigma == 0.0) {
            return Err(FormulationError::InvalidSigma(sigma));
        }
        let mut p = flags.paths_override.unwrap_or(inst.path_count);
        if flags.single_path {
            p = 1;
        }
        if p < 1 {
            return Err(FormulationError::InvalidPaths);
        }

        let n = inst.nodes.len();
        let cloud: Vec<usize> = (0..n).filter(|&i| inst.nodes[i].is_cloud()).collect();
        let node_of: HashMap<&str, usize> = inst
            .nodes
            .iter()
            .enumerate()
            .map(|(i, nd)| (nd.id.as_str(), i))
            .collect();
        let link_ends: Vec<(usize, usize)> = inst
            .links
            .iter()
            .map(|l| (node_of[l.tail.as_str()], node_of[l.head.as_str()]))
            .collect();
        let mut out_links = vec![Vec::new(); n];
        let mut in_links = vec![Vec::new(); n];
        for (l, &(tail, head)) in link_ends.iter().enumerate() {
            out_links[tail].push(l);
            in_links[head].push(l);
        }
        let endpoints = inst
            .services
            .iter()
            .map(|svc| {
                (
                    node_of[svc.source.as_str()],
                    node_of[svc.destination.as_str()],
                )
            })
            .collect();

        let mut b = Builder {
            inst,
            sigma,
            flags,
            p,
            cloud,
            link_ends,
            out_links,
            in_links,
            endpoints,
            vars: Vec::new(),
            constraints: Vec::new(),
            x_idx: Vec::new(),
            xk_idx: Vec::new(),
            y_idx: Vec::new(),
            z_idx: Vec::new(),
            r_idx: Vec::new(),
            zagg_idx: Vec::new(),
            rpath_idx: Vec::new(),
            theta_idx: Vec::new(),
        };
        b.declare_vars(with_rpath);
        Ok(b)
    }

    fn node_id(&self, i: usize) -> &str {
        &self.inst.nodes[i].id
    }

    fn link_name(&self, l: usize) -> (String, String) {
        let (t, h) = self.link_ends[l];
        (self.node_id(t).to_string(), self.node_id(h).to_string())
    }

    fn with_zagg(&self) -> bool {
        !self.flags.no_reliability
    }

    fn add_var(&mut self, name: String, lower: f64, upper: f64, kind: VarKind) -> usize {
        let index = self.vars.len();
        self.vars.push(VarRef {
            index,
            name,
            lower,
            upper,
            kind,
        });
        index
    }

    /// Declare all variables in canonical order: symbols sorted by tag
    /// (r < rpath < theta < x < xk < y < z < zagg), indices by
    /// (service, stage, path, link, cloud position).
    fn declare_vars(&mut self, with_rpath: bool) {
        let services = self.inst.services.len();
        let links = self.inst.links.len();
        let p = self.p;

        // r[i,j,k,s,p]
        self.r_idx = (0..services)
            .map(|k| {
                let svc = &self.inst.services[k];
                (0..=svc.num_stages())
                    .map(|s| {
                        (1..=p)
                            .map(|path| {
                                (0..links)
                                    .map(|l| {
                                        let (i, j) = self.link_name(l);
                                        self.add_var(
                                            format!("r[{i},{j},{},{s},{path}]", svc.id),
                                            0.0,
                                            1.0,
                                            VarKind::Continuous,
                                        )
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        // rpath[k,s,p] (linearized baseline only)
        if with_rpath {
            self.rpath_idx = (0..services)
                .map(|k| {
                    let svc = &self.inst.services[k];
                    (0..=svc.num_stages())
                        .map(|s| {
                            (1..=p)
                                .map(|path| {
                                    self.add_var(
                                        format!("rpath[{},{s},{path}]", svc.id),
                                        0.0,
                                        1.0,
                                        VarKind::Continuous,
                                    )
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
        }

        // theta[k,s]
        self.theta_idx = (0..services)
            .map(|k| {
                let svc = &self.inst.services[k];
                (0..=svc.num_stages())
                    .map(|s| {
                        self.add_var(
                            format!("theta[{},{s}]", svc.id),
                            0.0,
                            f64::INFINITY,
                            VarKind::Continuous,
                        )
                    })
                    .collect()
            })
            .collect();

        // x[v,s,k]
        self.x_idx = (0..services)
            .map(|k| {
                let svc = &self.inst.services[k];
                (1..=svc.num_stages())
                    .map(|s| {
                        (0..self.cloud.len())
                            .map(|vp| {
                                let v = self.node_id(self.cloud[vp]).to_string();
                                self.add_var(
                                    format!("x[{v},{s},{}]", svc.id),
                                    0.0,
                                    1.0,
                                    VarKind::Binary,
                                )
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        // xk[v,k]
        self.xk_idx = (0..services)
            .map(|k| {
                let svc = &self.inst.services[k];
                (0..self.cloud.len())
                    .map(|vp| {
                        let v = self.node_id(self.cloud[vp]).to_string();
                        self.add_var(format!("xk[{v},{}]", svc.id), 0.0, 1.0, VarKind::Binary)
                    })
                    .collect()
            })
            .collect();

        // y[v]
        self.y_idx = (0..self.cloud.len())
            .map(|vp| {
                let v = self.node_id(self.cloud[vp]).to_string();
                self.add_var(format!("y[{v}]"), 0.0, 1.0, VarKind::Binary)
            })
            .collect();

        // z[i,j,k,s,p]
        self.z_idx = (0..services)
            .map(|k| {
                let svc = &self.inst.services[k];
                (0..=svc.num_stages())
                    .map(|s| {
                        (1..=p)
                            .map(|path| {
                                (0..links)
                                    .map(|l| {
                                        let (i, j) = self.link_name(l);
                                        self.add_var(
                                            format!("z[{i},{j},{},{s},{path}]", svc.id),
                                            0.0,
                                            1.0,
                                            VarKind::Binary,
                                        )
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        // zagg[i,j,k]
        if self.with_zagg() {
            self.zagg_idx = (0..services)
                .map(|k| {
                    let svc = &self.inst.services[k];
                    (0..links)
                        .map(|l| {
                            let (i, j) = self.link_name(l);
                            self.add_var(
                                format!("zagg[{i},{j},{}]", svc.id),
                                0.0,
                                1.0,
                                VarKind::Binary,
                            )
                        })
                        .collect()
                })
                .collect();
        }
    }

    fn add_row(&mut self, family: Family, mut terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        terms.sort_by_key(|&(j, _)| j);
        terms.dedup_by(|cur, prev| {
            if prev.0 == cur.0 {
                prev.1 += cur.1;
                true
            } else {
                false
            }
        });
        terms.retain(|&(_, c)| c != 0.0);
        if terms.is_empty() {
            let holds = match sense {
                Sense::Le => 0.0 <= rhs,
                Sense::Ge => 0.0 >= rhs,
                Sense::Eq => rhs == 0.0,
            };
            if holds {
                return; // trivially satisfied, nothing to store
            }
            // An empty unsatisfiable row marks structural infeasibility (for
            // example a flow source with no incident links); keep it so the
            // solver reports infeasible instead of silently dropping it.
        }
        self.constraints.push(LinConstraint {
            terms,
            sense,
            rhs,
            family,
        });
    }

    /// Flow balance terms at node `i`: incoming minus outgoing variables,
    /// where `idx[l]` is the variable attached to link `l`.
    fn net_inflow_terms(&self, idx: &[usize], i: usize) -> Vec<(usize, f64)> {
        let mut terms = Vec::new();
        for &l in &self.in_links[i] {
            terms.push((idx[l], 1.0));
        }
        for &l in &self.out_links[i] {
            terms.push((idx[l], -1.0));
        }
        terms
    }

    /// Right-hand side of the unit-flow balance at node `i` for flow `(k,s)`:
    /// a constant plus hosting-variable terms moved onto the left-hand side.
    fn balance_rhs(&self, k: usize, s: usize, i: usize) -> (f64, Vec<(usize, f64)>) {
        let svc = &self.inst.services[k];
        let stages = svc.num_stages();
        let (src, dst) = self.endpoints[k];
        let vp = self.cloud.iter().position(|&c| c == i);
        if s == 0 && i == src {
            (-1.0, vec![])
        } else if s == 0 && vp.is_some() {
            // inflow - outflow = x[i,1,k]  =>  move x to the left with -1
            (0.0, vec![(self.x_idx[k][0][vp.unwrap()], -1.0)])
        } else if (1..stages).contains(&s) && vp.is_some() {
            let vp = vp.unwrap();
            (
                0.0,
                vec![
                    (self.x_idx[k][s][vp], -1.0),     // x[i,s+1,k]
                    (self.x_idx[k][s - 1][vp], 1.0),  // x[i,s,k]
                ],
            )
        } else if s == stages && vp.is_some() {
            (0.0, vec![(self.x_idx[k][s - 1][vp.unwrap()], 1.0)])
        } else if s == stages && i == dst {
            (1.0, vec![])
        } else {
            (0.0, vec![])
        }
    }

    /// Families shared by both formulations.
    fn emit_common(&mut self) {
        let services = self.inst.services.len();
        let links = self.inst.links.len();
        let n = self.inst.nodes.len();

        // Each stage hosted exactly once.
        for k in 0..services {
            for s in 1..=self.inst.services[k].num_stages() {
                let terms = (0..self.cloud.len())
                    .map(|vp| (self.x_idx[k][s - 1][vp], 1.0))
                    .collect();
                self.add_row(Family::Placement, terms, Sense::Eq, 1.0);
            }
        }

        // Hosting a stage marks the node as serving the service.
        for k in 0..services {
            for s in 1..=self.inst.services[k].num_stages() {
                for vp in 0..self.cloud.len() {
                    self.add_row(
                        Family::FuncUse,
                        vec![(self.x_idx[k][s - 1][vp], 1.0), (self.xk_idx[k][vp], -1.0)],
                        Sense::Le,
                        0.0,
                    );
                }
            }
        }

        // Serving a service requires the node activated.
        for k in 0..services {
            for vp in 0..self.cloud.len() {
                self.add_row(
                    Family::Activation,
                    vec![(self.xk_idx[k][vp], 1.0), (self.y_idx[vp], -1.0)],
                    Sense::Le,
                    0.0,
                );
            }
        }

        // Node capacity.
        for vp in 0..self.cloud.len() {
            let mu = self.inst.nodes[self.cloud[vp]]
                .cloud
                .expect("cloud node")
                .capacity;
            let mut terms = Vec::new();
            for k in 0..services {
                let svc = &self.inst.services[k];
                for s in 1..=svc.num_stages() {
                    terms.push((self.x_idx[k][s - 1][vp], svc.rates[s]));
                }
            }
            terms.push((self.y_idx[vp], -mu));
            self.add_row(Family::NodeCapacity, terms, Sense::Le, 0.0);
        }

        // Per-path unit flow conservation on link indicators.
        for k in 0..services {
            for s in 0..=self.inst.services[k].num_stages() {
                for path in 1..=self.p {
                    for i in 0..n {
                        let mut terms = self.net_inflow_terms(&self.z_idx[k][s][path - 1], i);
                        let (rhs, xterms) = self.balance_rhs(k, s, i);
                        terms.extend(xterms);
                        self.add_row(Family::PathOrder, terms, Sense::Eq, rhs);
                    }
                }
            }
        }

        // Link capacity.
        for l in 0..links {
            let mut terms = Vec::new();
            for k in 0..services {
                let svc = &self.inst.services[k];
                for s in 0..=svc.num_stages() {
                    for path in 1..=self.p {
                        terms.push((self.r_idx[k][s][path - 1][l], svc.rates[s]));
                    }
                }
            }
            self.add_row(
                Family::LinkCapacity,
                terms,
                Sense::Le,
                self.inst.links[l].capacity,
            );
        }

        if self.with_zagg() {
            // Per-path link use implies per-service link use.
            for k in 0..services {
                for s in 0..=self.inst.services[k].num_stages() {
                    for path in 1..=self.p {
                        for l in 0..links {
                            self.add_row(
                                Family::LinkUse,
                                vec![
                                    (self.z_idx[k][s][path - 1][l], 1.0),
                                    (self.zagg_idx[k][l], -1.0),
                                ],
                                Sense::Le,
                                0.0,
                            );
                        }
                    }
                }
            }

            // Log-linear end-to-end reliability. A zero budget is vacuous.
            for k in 0..services {
                let gamma = self.inst.services[k].reliability_budget;
                if gamma == 0.0 {
                    continue;
                }
                let mut terms = Vec::new();
                for vp in 0..self.cloud.len() {
                    let rel = self.inst.nodes[self.cloud[vp]]
                        .cloud
                        .expect("cloud node")
                        .reliability;
                    terms.push((self.xk_idx[k][vp], rel.ln()));
                }
                for l in 0..links {
                    terms.push((self.zagg_idx[k][l], self.inst.links[l].reliability.ln()));
                }
                self.add_row(Family::Reliability, terms, Sense::Ge, gamma.ln());
            }
        }

        // Flow delay dominates each path's delay.
        for k in 0..services {
            for s in 0..=self.inst.services[k].num_stages() {
                for path in 1..=self.p {
                    let mut terms = vec![(self.theta_idx[k][s], 1.0)];
                    for l in 0..links {
                        terms.push((self.z_idx[k][s][path - 1][l], -self.inst.links[l].delay));
                    }
                    self.add_row(Family::PathDelay, terms, Sense::Ge, 0.0);
                }
            }
        }

        // End-to-end delay budget.
        for k in 0..services {
            let svc = &self.inst.services[k];
            let mut terms = Vec::new();
            for vp in 0..self.cloud.len() {
                let v = self.node_id(self.cloud[vp]).to_string();
                for s in 1..=svc.num_stages() {
                    let d = svc.nfv_delay[&(v.clone(), s)];
                    terms.push((self.x_idx[k][s - 1][vp], d));
                }
            }
            for s in 0..=svc.num_stages() {
                terms.push((self.theta_idx[k][s], 1.0));
            }
            self.add_row(Family::E2eDelay, terms, Sense::Le, svc.delay_budget);
        }
    }

    /// Families specific to the path-flow MILP.
    fn emit_milp(&mut self) {
        let services = self.inst.services.len();
        let links = self.inst.links.len();
        let n = self.inst.nodes.len();

        // At most one outgoing link per node and path.
        for k in 0..services {
            for s in 0..=self.inst.services[k].num_stages() {
                for path in 1..=self.p {
                    for i in 0..n {
                        let terms: Vec<_> = self.out_links[i]
                            .iter()
                            .map(|&l| (self.z_idx[k][s][path - 1][l], 1.0))
                            .collect();
                        if terms.is_empty() {
                            continue;
                        }
                        self.add_row(Family::OutDegree, terms, Sense::Le, 1.0);
                    }
                }
            }
        }

        // A positive link fraction forces the link indicator.
        for k in 0..services {
            for s in 0..=self.inst.services[k].num_stages() {
                for path in 1..=self.p {
                    for l in 0..links {
                        self.add_row(
                            Family::RateLinkCoupling,
                            vec![
                                (self.r_idx[k][s][path - 1][l], 1.0),
                                (self.z_idx[k][s][path - 1][l], -1.0),
                            ],
                            Sense::Le,
                            0.0,
                        );
                    }
                }
            }
        }

        // Aggregated rate conservation at flow sources and destinations.
        for k in 0..services {
            let svc = &self.inst.services[k];
            let stages = svc.num_stages();
            let (src, dst) = self.endpoints[k];
            let mut pairs: Vec<(usize, usize)> = Vec::new(); // (s, node index)
            pairs.push((0, src));
            for &v in &self.cloud {
                pairs.push((0, v));
            }
            for s in 1..stages {
                for &v in &self.cloud {
                    pairs.push((s, v));
                }
            }
            pairs.push((stages, dst));
            for &v in &self.cloud {
                pairs.push((stages, v));
            }
            for (s, i) in pairs {
                let mut terms = Vec::new();
                for path in 1..=self.p {
                    terms.extend(self.net_inflow_terms(&self.r_idx[k][s][path - 1], i));
                }
                let (rhs, xterms) = self.balance_rhs(k, s, i);
                terms.extend(xterms);
                self.add_row(Family::SrcDstConservation, terms, Sense::Eq, rhs);
            }
        }

        // Per-path rate conservation at non-cloud transit nodes. The flow's
        // own endpoints are covered by the aggregated rows above.
        for k in 0..services {
            let stages = self.inst.services[k].num_stages();
            let (src, dst) = self.endpoints[k];
            for s in 0..=stages {
                for path in 1..=self.p {
                    for i in 0..n {
                        if self.inst.nodes[i].is_cloud() {
                            continue;
                        }
                        if (s == 0 && i == src) || (s == stages && i == dst) {
                            continue;
                        }
                        let terms = self.net_inflow_terms(&self.r_idx[k][s][path - 1], i);
                        self.add_row(Family::TransitConservation, terms, Sense::Eq, 0.0);
                    }
                }
            }
        }

        // Per-path net inflow at a cloud bounded by hosting of the next stage.
        for k in 0..services {
            let stages = self.inst.services[k].num_stages();
            for s in 0..stages {
                for path in 1..=self.p {
                    for vp in 0..self.cloud.len() {
                        let i = self.cloud[vp];
                        let mut terms = self.net_inflow_terms(&self.r_idx[k][s][path - 1], i);
                        terms.push((self.x_idx[k][s][vp], -1.0)); // x[i,s+1,k]
                        self.add_row(Family::HostInflow, terms, Sense::Le, 0.0);
                    }
                }
            }
        }

        // Per-path net outflow at a cloud bounded by hosting of this stage.
        for k in 0..services {
            let stages = self.inst.services[k].num_stages();
            for s in 1..=stages {
                for path in 1..=self.p {
                    for vp in 0..self.cloud.len() {
                        let i = self.cloud[vp];
                        let mut terms = self.net_inflow_terms(&self.r_idx[k][s][path - 1], i);
                        terms.push((self.x_idx[k][s - 1][vp], 1.0)); // x[i,s,k]
                        self.add_row(Family::HostOutflow, terms, Sense::Ge, 0.0);
                    }
                }
            }
        }

        if !self.flags.disable_valid_inequalities {
            // Summed path fractions within the per-service link use.
            if self.with_zagg() {
                for k in 0..services {
                    for s in 0..=self.inst.services[k].num_stages() {
                        for l in 0..links {
                            let mut terms: Vec<_> = (1..=self.p)
                                .map(|path| (self.r_idx[k][s][path - 1][l], 1.0))
                                .collect();
                            terms.push((self.zagg_idx[k][l], -1.0));
                            self.add_row(Family::PathFractionCap, terms, Sense::Le, 0.0);
                        }
                    }
                }
            }

            // Flow delay dominates the rate-weighted path delays.
            for k in 0..services {
                for s in 0..=self.inst.services[k].num_stages() {
                    let mut terms = vec![(self.theta_idx[k][s], 1.0)];
                    for path in 1..=self.p {
                        for l in 0..links {
                            terms.push((
                                self.r_idx[k][s][path - 1][l],
                                -self.inst.links[l].delay,
                            ));
                        }
                    }
                    self.add_row(Family::FlowDelayLb, terms, Sense::Ge, 0.0);
                }
            }
        }
    }

    /// Families specific to the McCormick-linearized baseline.
    fn emit_minlp(&mut self) {
        let services = self.inst.services.len();
        let links = self.inst.links.len();

        // Path fractions of each flow sum to one.
        for k in 0..services {
            for s in 0..=self.inst.services[k].num_stages() {
                let terms = (1..=self.p)
                    .map(|path| (self.rpath_idx[k][s][path - 1], 1.0))
                    .collect();
                self.add_row(Family::PathSum, terms, Sense::Eq, 1.0);
            }
        }

        // McCormick envelope of r = rpath * z.
        for k in 0..services {
            for s in 0..=self.inst.services[k].num_stages() {
                for path in 1..=self.p {
                    for l in 0..links {
                        let r = self.r_idx[k][s][path - 1][l];
                        let z = self.z_idx[k][s][path - 1][l];
                        let rp = self.rpath_idx[k][s][path - 1];
                        self.add_row(
                            Family::McCormick,
                            vec![(r, 1.0), (z, -1.0), (rp, -1.0)],
                            Sense::Ge,
                            -1.0,
                        );
                        self.add_row(
                            Family::McCormick,
                            vec![(r, 1.0), (z, -1.0)],
                            Sense::Le,
                            0.0,
                        );
                        self.add_row(
                            Family::McCormick,
                            vec![(r, 1.0), (rp, -1.0)],
                            Sense::Le,
                            0.0,
                        );
                    }
                }
            }
        }
    }

    #[allow(clippy::wrong_self_convention)]
    fn finish(self, variant: VariantTag) -> Model {
        let mut objective: Vec<(usize, f64)> = Vec::new();
        for &y in &self.y_idx {
            objective.push((y, 1.0));
        }
        if self.sigma != 0.0 {
            for k in 0..self.inst.services.len() {
                for s in 0..=self.inst.services[k].num_stages() {
                    for path in 1..=self.p {
                        for l in 0..self.inst.links.len() {
                            objective.push((self.r_idx[k][s][path - 1][l], self.sigma));
                        }
                    }
                }
            }
        }
        objective.sort_by_key(|&(j, _)| j);
        Model {
            variables: self.vars,
            constraints: self.constraints,
            objective,
            sigma: self.sigma,
            variant,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{parse_var_name, Symbol, VarKind};
    use crate::instance::test_fixtures::{tiny3, tiny3_with};
    use crate::instance::{generate_instance, GenConfig, TopologyConfig};
    use std::collections::BTreeMap;

    const SIGMA: f64 = 0.005;

    fn gen10() -> Instance {
        let cfg = GenConfig {
            topology: TopologyConfig {
                nodes: 10,
                layers: 3,
                links: 26,
                cloud_nodes: 3,
            },
            services: 2,
            ..GenConfig::default()
        };
        generate_instance(&cfg, 11).unwrap()
    }

    /// Expected per-family counts from the index-set formulas in the module
    /// docs.
    fn expected_counts(inst: &Instance, p: usize, variant: VariantTag) -> BTreeMap<&'static str, usize> {
        let nv = inst.cloud_ids().len();
        let ni = inst.nodes.len();
        let nl = inst.links.len();
        let nk = inst.services.len();
        let sum_l: usize = inst.services.iter().map(|s| s.num_stages()).sum();
        let sum_f: usize = inst.services.iter().map(|s| s.num_stages() + 1).sum();
        let gamma_pos = inst
            .services
            .iter()
            .filter(|s| s.reliability_budget > 0.0)
            .count();

        let mut m = BTreeMap::new();
        m.insert("eq1-placement", sum_l);
        m.insert("eq2-funcuse", nv * sum_l);
        m.insert("eq3-activation", nv * nk);
        m.insert("eq4-nodecap", nv);
        m.insert("eq5-pathorder", ni * p * sum_f);
        m.insert("eq8-linkcap", nl);
        m.insert("eq9-zagg", nl * p * sum_f);
        m.insert("eq10-reliability", gamma_pos);
        m.insert("eq11-pathdelay", p * sum_f);
        m.insert("eq12-e2edelay", nk);
        match variant {
            VariantTag::Milp => {
                m.insert("sfc0-outdeg", ni * p * sum_f);
                m.insert("sfc1-rz", nl * p * sum_f);
                m.insert("sfc2-srcdst", nv * sum_f + 2 * nk);
                m.insert("sfc3-transit", p * ((ni - nv) * sum_f - 2 * nk));
                m.insert("sfc4-hostin", nv * p * sum_l);
                m.insert("sfc5-hostout", nv * p * sum_l);
                m.insert("vi1", nl * sum_f);
                m.insert("vi2", sum_f);
            }
            VariantTag::MinlpLinearized => {
                m.insert("eq6-pathsum", sum_f);
                m.insert("eq7-mccormick", 3 * nl * p * sum_f);
            }
            _ => {}
        }
        m
    }

    #[test]
    fn tiny3_placement_family_shape() {
        let model = build_common(&tiny3(), SIGMA, VariantFlags::default()).unwrap();
        let placement: Vec<_> = model
            .constraints
            .iter()
            .filter(|c| c.family == Family::Placement)
            .collect();
        assert_eq!(placement.len(), 1);
        assert_eq!(placement[0].terms.len(), 1);
        assert_eq!(placement[0].rhs, 1.0);
        assert_eq!(placement[0].sense, Sense::Eq);
    }

    #[test]
    fn unit_reliability_budget_keeps_row_with_zero_rhs() {
        let inst = tiny3_with(1.0, 10.0);
        let model = build_common(&inst, SIGMA, VariantFlags::default()).unwrap();
        let rel: Vec<_> = model
            .constraints
            .iter()
            .filter(|c| c.family == Family::Reliability)
            .collect();
        assert_eq!(rel.len(), 1);
        assert_eq!(rel[0].rhs, 0.0);
        assert_eq!(rel[0].sense, Sense::Ge);
        assert!(rel[0].terms.iter().all(|&(_, c)| c < 0.0));
    }

    #[test]
    fn zero_reliability_budget_skips_row() {
        let inst = tiny3_with(0.0, 10.0);
        let model = build_common(&inst, SIGMA, VariantFlags::default()).unwrap();
        assert!(model
            .constraints
            .iter()
            .all(|c| c.family != Family::Reliability));
    }

    #[test]
    fn family_counts_match_closed_forms() {
        let inst = gen10();
        let p = inst.path_count;
        let milp = build_milp(&inst, SIGMA, VariantFlags::default()).unwrap();
        assert_eq!(
            milp.family_counts(),
            expected_counts(&inst, p, VariantTag::Milp)
        );
        let minlp = build_minlp_linearized(&inst, SIGMA, VariantFlags::default()).unwrap();
        assert_eq!(
            minlp.family_counts(),
            expected_counts(&inst, p, VariantTag::MinlpLinearized)
        );
    }

    #[test]
    fn milp_has_no_path_fraction_variables() {
        let model = build_milp(&gen10(), SIGMA, VariantFlags::default()).unwrap();
        for v in &model.variables {
            let parsed = parse_var_name(&v.name).unwrap();
            assert_ne!(parsed.symbol, Symbol::PathFraction, "{}", v.name);
        }
    }

    #[test]
    fn minlp_adds_exactly_the_path_fraction_block() {
        let inst = gen10();
        let milp = build_milp(&inst, SIGMA, VariantFlags::default()).unwrap();
        let minlp = build_minlp_linearized(&inst, SIGMA, VariantFlags::default()).unwrap();
        let sum_f: usize = inst.services.iter().map(|s| s.num_stages() + 1).sum();
        assert_eq!(
            minlp.num_vars(),
            milp.num_vars() + sum_f * inst.path_count
        );
    }

    #[test]
    fn registry_covers_every_symbol_and_parses_back() {
        let inst = gen10();
        for model in [
            build_milp(&inst, SIGMA, VariantFlags::default()).unwrap(),
            build_minlp_linearized(&inst, SIGMA, VariantFlags::default()).unwrap(),
        ] {
            let registry = model.registry();
            let total: usize = registry.values().map(|v| v.len()).sum();
            assert_eq!(total, model.num_vars(), "every name parses");
            let expect_rpath = model.variant == VariantTag::MinlpLinearized;
            for sym in Symbol::ALL {
                let present = registry.contains_key(&sym);
                match sym {
                    Symbol::PathFraction => assert_eq!(present, expect_rpath),
                    _ => assert!(present, "{sym:?} missing"),
                }
            }
        }
    }

    #[test]
    fn no_reliability_drops_link_use_families_and_vars() {
        let inst = gen10();
        let flags = VariantFlags {
            no_reliability: true,
            ..VariantFlags::default()
        };
        let model = build_milp(&inst, SIGMA, flags).unwrap();
        let counts = model.family_counts();
        assert!(!counts.contains_key("eq9-zagg"));
        assert!(!counts.contains_key("eq10-reliability"));
        assert!(!counts.contains_key("vi1"));
        for v in &model.variables {
            assert_ne!(
                parse_var_name(&v.name).unwrap().symbol,
                Symbol::ServiceLink
            );
        }
    }

    #[test]
    fn single_path_forces_one_path() {
        let inst = gen10();
        let flags = VariantFlags {
            single_path: true,
            ..VariantFlags::default()
        };
        let model = build_milp(&inst, SIGMA, flags).unwrap();
        assert_eq!(
            model.family_counts(),
            expected_counts(&inst, 1, VariantTag::Milp)
        );
    }

    #[test]
    fn row_width_within_structural_bound() {
        // Every row outside the node/link-capacity and reliability families
        // has at most |L| * P + 1 nonzeros.
        let inst = gen10();
        let bound = inst.links.len() * inst.path_count + 1;
        let model = build_milp(&inst, SIGMA, VariantFlags::default()).unwrap();
        for c in &model.constraints {
            if matches!(
                c.family,
                Family::NodeCapacity | Family::LinkCapacity | Family::Reliability
            ) {
                continue;
            }
            assert!(
                c.terms.len() <= bound,
                "{} row has {} nonzeros > {bound}",
                c.family.tag(),
                c.terms.len()
            );
        }
    }

    #[test]
    fn rows_store_no_zero_coefficients_and_sorted_terms() {
        let inst = gen10();
        for model in [
            build_milp(&inst, SIGMA, VariantFlags::default()).unwrap(),
            build_minlp_linearized(&inst, SIGMA, VariantFlags::default()).unwrap(),
        ] {
            for c in &model.constraints {
                assert!(c.terms.iter().all(|&(_, coef)| coef != 0.0));
                assert!(c.terms.windows(2).all(|w| w[0].0 < w[1].0));
            }
        }
    }

    #[test]
    fn lp_relaxation_is_idempotent_and_continuous() {
        let model = build_milp(&tiny3(), SIGMA, VariantFlags::default()).unwrap();
        let relaxed = model.lp_relaxation();
        assert!(relaxed
            .variables
            .iter()
            .all(|v| v.kind == VarKind::Continuous));
        assert_eq!(relaxed.lp_relaxation(), relaxed);
        assert_eq!(relaxed.constraints, model.constraints);
    }

    #[test]
    fn builders_are_deterministic() {
        let inst = gen10();
        let a = build_milp(&inst, SIGMA, VariantFlags::default()).unwrap();
        let b = build_milp(&inst, SIGMA, VariantFlags::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sigma_validation() {
        let inst = tiny3();
        assert!(build_milp(&inst, -1.0, VariantFlags::default()).is_err());
        assert!(build_milp(&inst, 0.0, VariantFlags::default()).is_err());
        let flags = VariantFlags {
            allow_zero_sigma: true,
            ..VariantFlags::default()
        };
        let model = build_milp(&inst, 0.0, flags).unwrap();
        // Objective reduces to the activation term.
        assert_eq!(model.objective.len(), 1);
    }

    #[test]
    fn variable_order_is_lexicographic_by_symbol_tag() {
        let inst = gen10();
        let model = build_minlp_linearized(&inst, SIGMA, VariantFlags::default()).unwrap();
        let tags: Vec<&'static str> = model
            .variables
            .iter()
            .map(|v| parse_var_name(&v.name).unwrap().symbol.tag())
            .collect();
        let mut sorted = tags.clone();
        sorted.sort();
        assert_eq!(tags, sorted);
    }
}
