//! Ground-truth finite-horizon CMDP, tabular policies and exact evaluation.
//!
//! Every table is stored densely in row-major order with the step index
//! outermost: `(h, s, a)` for costs, policies and occupancies and
//! `(h, s, a, s')` for transition kernels. Steps are zero-based in code
//! (`h = 0..H`), the first step of an episode is `h = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CmdpError, Result};

/// Row-sum tolerance for transition kernels and policies.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Shape {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(CmdpError::Config(format!(
                "states, actions and horizon must be positive (got S={states}, A={actions}, H={horizon})"
            )));
        }
        Ok(Self {
            states,
            actions,
            horizon,
        })
    }

    #[inline]
    pub fn sa_len(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    #[inline]
    pub fn sas_len(&self) -> usize {
        self.sa_len() * self.states
    }

    #[inline]
    pub fn hs(&self, h: usize, s: usize) -> usize {
        h * self.states + s
    }

    #[inline]
    pub fn sa(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    #[inline]
    pub fn sas(&self, h: usize, s: usize, a: usize, next: usize) -> usize {
        self.sa(h, s, a) * self.states + next
    }

    fn check_same(&self, other: &Shape, what: &str) -> Result<()> {
        if self != other {
            return Err(CmdpError::Dimension(format!(
                "{what}: expected (S={}, A={}, H={}), found (S={}, A={}, H={})",
                self.states, self.actions, self.horizon, other.states, other.actions, other.horizon
            )));
        }
        Ok(())
    }
}

/// A dense `(h, s, a)` table of reals: costs, rewards, Q-values, occupancies.
#[derive(Clone, Debug, PartialEq)]
pub struct SaTable {
    shape: Shape,
    values: Vec<f64>,
}

impl SaTable {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.sa_len()],
        }
    }

    pub fn from_vec(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.sa_len() {
            return Err(CmdpError::Dimension(format!(
                "(h,s,a) table needs {} entries, got {}",
                shape.sa_len(),
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(shape.sa_len());
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    values.push(f(h, s, a));
                }
            }
        }
        Self { shape, values }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[self.shape.sa(h, s, a)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, s: usize, a: usize, value: f64) {
        let idx = self.shape.sa(h, s, a);
        self.values[idx] = value;
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.shape.sa(h, s, 0);
        &self.values[start..start + self.shape.actions]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dot(&self, other: &SaTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * y)
            .sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self + scale * other`, elementwise.
    pub fn add_scaled(&self, scale: f64, other: &SaTable) -> SaTable {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x + scale * y)
            .collect();
        SaTable {
            shape: self.shape,
            values,
        }
    }

    fn nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.shape.horizon)
            .map(|h| (0..self.shape.states).map(|s| self.row(h, s).to_vec()).collect())
            .collect()
    }
}

/// Transition kernel `p_h(s' | s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    shape: Shape,
    probs: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel, checking that every row is a probability vector.
    pub fn from_vec(shape: Shape, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != shape.sas_len() {
            return Err(CmdpError::Dimension(format!(
                "(h,s,a,s') kernel needs {} entries, got {}",
                shape.sas_len(),
                probs.len()
            )));
        }
        let kernel = Self { shape, probs };
        kernel.validate()?;
        Ok(kernel)
    }

    /// Internal constructor for rows produced by code that already
    /// guarantees stochasticity (box minimisers, retrieval maps).
    pub(crate) fn from_vec_unchecked(shape: Shape, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), shape.sas_len());
        Self { shape, probs }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut probs = Vec::with_capacity(shape.sas_len());
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    for next in 0..shape.states {
                        probs.push(f(h, s, a, next));
                    }
                }
            }
        }
        Self::from_vec(shape, probs)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.shape;
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    let row = self.row(h, s, a);
                    if let Some(bad) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                        return Err(CmdpError::InvalidModel(format!(
                            "transition p[h={h}][s={s}][a={a}] has invalid entry {bad}"
                        )));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > STOCHASTIC_TOL {
                        return Err(CmdpError::InvalidModel(format!(
                            "transition row p[h={h}][s={s}][a={a}] sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.probs[self.shape.sas(h, s, a, next)]
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.shape.sas(h, s, a, 0);
        &self.probs[start..start + self.shape.states]
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest number of reachable successors over all `(h, s, a)`.
    pub fn max_successors(&self) -> usize {
        let shape = self.shape;
        let mut best = 0;
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    best = best.max(self.row(h, s, a).iter().filter(|p| **p > 0.0).count());
                }
            }
        }
        best
    }
}

/// Non-stationary stochastic policy `pi_h(a | s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TabularPolicy {
    shape: Shape,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn uniform(shape: Shape) -> Self {
        Self {
            shape,
            probs: vec![1.0 / shape.actions as f64; shape.sa_len()],
        }
    }

    /// Deterministic policy from one action per `(h, s)`, indexed `h * S + s`.
    pub fn deterministic(shape: Shape, actions: &[usize]) -> Result<Self> {
        if actions.len() != shape.horizon * shape.states {
            return Err(CmdpError::Dimension(format!(
                "deterministic policy needs {} actions, got {}",
                shape.horizon * shape.states,
                actions.len()
            )));
        }
        let mut probs = vec![0.0; shape.sa_len()];
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                let a = actions[shape.hs(h, s)];
                if a >= shape.actions {
                    return Err(CmdpError::Dimension(format!(
                        "action {a} out of range at (h={h}, s={s})"
                    )));
                }
                probs[shape.sa(h, s, a)] = 1.0;
            }
        }
        Ok(Self { shape, probs })
    }

    pub fn from_vec(shape: Shape, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != shape.sa_len() {
            return Err(CmdpError::Dimension(format!(
                "policy needs {} entries, got {}",
                shape.sa_len(),
                probs.len()
            )));
        }
        let policy = Self { shape, probs };
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                let row = policy.row(h, s);
                if row.iter().any(|p| !(*p >= 0.0)) {
                    return Err(CmdpError::InvalidModel(format!(
                        "policy row (h={h}, s={s}) has a negative entry"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(CmdpError::InvalidModel(format!(
                        "policy row (h={h}, s={s}) sums to {total}"
                    )));
                }
            }
        }
        Ok(policy)
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[self.shape.sa(h, s, a)]
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.shape.sa(h, s, 0);
        &self.probs[start..start + self.shape.actions]
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|p| *p == 0.0 || *p == 1.0)
    }
}

/// State-action occupancy `q_h(s, a)` of a policy under some kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyQ {
    table: SaTable,
}

impl OccupancyQ {
    /// Wraps raw occupancy values without checking flow conservation.
    pub fn from_table(table: SaTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &SaTable {
        &self.table
    }

    pub fn into_table(self) -> SaTable {
        self.table
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.table.get(h, s, a)
    }

    pub fn state_mass(&self, h: usize, s: usize) -> f64 {
        self.table.row(h, s).iter().sum()
    }

    pub fn layer_mass(&self, h: usize) -> f64 {
        (0..self.table.shape().states).map(|s| self.state_mass(h, s)).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostNoise {
    Deterministic,
    #[default]
    Bernoulli,
}

/// Full ground-truth CMDP.
///
/// Serialises to a JSON document with nested arrays; see the README for the
/// schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CmdpDocument", into = "CmdpDocument")]
pub struct Cmdp {
    shape: Shape,
    kernel: Kernel,
    objective: SaTable,
    constraints: Vec<SaTable>,
    thresholds: Vec<f64>,
    initial_state: usize,
    cost_noise: CostNoise,
}

impl Cmdp {
    pub fn new(
        kernel: Kernel,
        objective: SaTable,
        constraints: Vec<SaTable>,
        thresholds: Vec<f64>,
        initial_state: usize,
        cost_noise: CostNoise,
    ) -> Result<Self> {
        let shape = kernel.shape();
        shape.check_same(&objective.shape(), "objective cost")?;
        for (i, d) in constraints.iter().enumerate() {
            shape.check_same(&d.shape(), &format!("constraint cost {i}"))?;
        }
        if constraints.len() != thresholds.len() {
            return Err(CmdpError::Dimension(format!(
                "{} constraint cost tables but {} thresholds",
                constraints.len(),
                thresholds.len()
            )));
        }
        if initial_state >= shape.states {
            return Err(CmdpError::InvalidModel(format!(
                "initial state {initial_state} out of range (S={})",
                shape.states
            )));
        }
        kernel.validate()?;
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        if !objective.values().iter().all(in_unit) {
            return Err(CmdpError::InvalidModel("objective costs must lie in [0,1]".into()));
        }
        for (i, d) in constraints.iter().enumerate() {
            if !d.values().iter().all(in_unit) {
                return Err(CmdpError::InvalidModel(format!(
                    "constraint {i} costs must lie in [0,1]"
                )));
            }
        }
        let h = shape.horizon as f64;
        for (i, alpha) in thresholds.iter().enumerate() {
            if !(0.0..=h).contains(alpha) {
                return Err(CmdpError::InvalidModel(format!(
                    "threshold alpha[{i}]={alpha} outside [0, H={h}]"
                )));
            }
        }
        Ok(Self {
            shape,
            kernel,
            objective,
            constraints,
            thresholds,
            initial_state,
            cost_noise,
        })
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    #[inline]
    pub fn objective(&self) -> &SaTable {
        &self.objective
    }

    #[inline]
    pub fn constraints(&self) -> &[SaTable] {
        &self.constraints
    }

    #[inline]
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    #[inline]
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    #[inline]
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    pub fn cost_noise(&self) -> CostNoise {
        self.cost_noise
    }

    pub fn with_cost_noise(mut self, noise: CostNoise) -> Self {
        self.cost_noise = noise;
        self
    }

    pub fn with_thresholds(mut self, thresholds: Vec<f64>) -> Result<Self> {
        let rebuilt = Cmdp::new(
            self.kernel,
            self.objective,
            self.constraints,
            thresholds,
            self.initial_state,
            self.cost_noise,
        )?;
        self = rebuilt;
        Ok(self)
    }

    pub fn objective_value(&self, policy: &TabularPolicy) -> Result<f64> {
        evaluate_value(&self.kernel, &self.objective, policy, self.initial_state)
    }

    pub fn constraint_values(&self, policy: &TabularPolicy) -> Result<Vec<f64>> {
        self.constraints
            .iter()
            .map(|d| evaluate_value(&self.kernel, d, policy, self.initial_state))
            .collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// On-disk layout of a [`Cmdp`]. Arrays are nested `[h][s][a][s']` for the
/// kernel, `[h][s][a]` for the objective and `[i][h][s][a]` for constraints.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CmdpDocument {
    states: usize,
    actions: usize,
    horizon: usize,
    initial_state: usize,
    #[serde(default)]
    cost_noise: CostNoise,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    objective_cost: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    constraint_costs: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    thresholds: Vec<f64>,
}

fn flatten_sa(shape: Shape, nested: &[Vec<Vec<f64>>], field: &str) -> Result<Vec<f64>> {
    if nested.len() != shape.horizon {
        return Err(CmdpError::Dimension(format!(
            "{field}: expected {} steps, found {}",
            shape.horizon,
            nested.len()
        )));
    }
    let mut out = Vec::with_capacity(shape.sa_len());
    for (h, layer) in nested.iter().enumerate() {
        if layer.len() != shape.states {
            return Err(CmdpError::Dimension(format!(
                "{field}[{h}]: expected {} states, found {}",
                shape.states,
                layer.len()
            )));
        }
        for (s, row) in layer.iter().enumerate() {
            if row.len() != shape.actions {
                return Err(CmdpError::Dimension(format!(
                    "{field}[{h}][{s}]: expected {} actions, found {}",
                    shape.actions,
                    row.len()
                )));
            }
            out.extend_from_slice(row);
        }
    }
    Ok(out)
}

impl TryFrom<CmdpDocument> for Cmdp {
    type Error = CmdpError;

    fn try_from(doc: CmdpDocument) -> Result<Self> {
        let shape = Shape::new(doc.states, doc.actions, doc.horizon)?;
        if doc.transitions.len() != shape.horizon {
            return Err(CmdpError::Dimension(format!(
                "transitions: expected {} steps, found {}",
                shape.horizon,
                doc.transitions.len()
            )));
        }
        let mut probs = Vec::with_capacity(shape.sas_len());
        for (h, layer) in doc.transitions.iter().enumerate() {
            if layer.len() != shape.states {
                return Err(CmdpError::Dimension(format!(
                    "transitions[{h}]: expected {} states, found {}",
                    shape.states,
                    layer.len()
                )));
            }
            for (s, by_action) in layer.iter().enumerate() {
                if by_action.len() != shape.actions {
                    return Err(CmdpError::Dimension(format!(
                        "transitions[{h}][{s}]: expected {} actions, found {}",
                        shape.actions,
                        by_action.len()
                    )));
                }
                for (a, row) in by_action.iter().enumerate() {
                    if row.len() != shape.states {
                        return Err(CmdpError::Dimension(format!(
                            "transitions[{h}][{s}][{a}]: expected {} successors, found {}",
                            shape.states,
                            row.len()
                        )));
                    }
                    probs.extend_from_slice(row);
                }
            }
        }
        let kernel = Kernel::from_vec(shape, probs)?;
        let objective = SaTable::from_vec(shape, flatten_sa(shape, &doc.objective_cost, "objective_cost")?)?;
        let constraints = doc
            .constraint_costs
            .iter()
            .enumerate()
            .map(|(i, nested)| {
                SaTable::from_vec(shape, flatten_sa(shape, nested, &format!("constraint_costs[{i}]"))?)
            })
            .collect::<Result<Vec<_>>>()?;
        Cmdp::new(
            kernel,
            objective,
            constraints,
            doc.thresholds,
            doc.initial_state,
            doc.cost_noise,
        )
    }
}

impl From<Cmdp> for CmdpDocument {
    fn from(m: Cmdp) -> Self {
        let shape = m.shape;
        let transitions = (0..shape.horizon)
            .map(|h| {
                (0..shape.states)
                    .map(|s| (0..shape.actions).map(|a| m.kernel.row(h, s, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        CmdpDocument {
            states: shape.states,
            actions: shape.actions,
            horizon: shape.horizon,
            initial_state: m.initial_state,
            cost_noise: m.cost_noise,
            transitions,
            objective_cost: m.objective.nested(),
            constraint_costs: m.constraints.iter().map(SaTable::nested).collect(),
            thresholds: m.thresholds,
        }
    }
}

fn check_policy(kernel: &Kernel, policy: &TabularPolicy) -> Result<()> {
    kernel.shape().check_same(&policy.shape(), "policy")
}

/// `V_h(s)` for `h = 0..=H` (the last layer is zero), laid out `h * S + s`.
pub fn state_values(
    kernel: &Kernel,
    cost: &SaTable,
    policy: &TabularPolicy,
) -> Result<Vec<f64>> {
    check_policy(kernel, policy)?;
    kernel.shape().check_same(&cost.shape(), "cost table")?;
    let shape = kernel.shape();
    let (ns, na) = (shape.states, shape.actions);
    let mut v = vec![0.0; (shape.horizon + 1) * ns];
    for h in (0..shape.horizon).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * ns);
        let next = &tail[..ns];
        let current = &mut head[h * ns..];
        for s in 0..ns {
            let mut acc = 0.0;
            for a in 0..na {
                let pi = policy.prob(h, s, a);
                if pi == 0.0 {
                    continue;
                }
                let cont: f64 = kernel.row(h, s, a).iter().zip(next).map(|(p, v)| p * v).sum();
                acc += pi * (cost.get(h, s, a) + cont);
            }
            current[s] = acc;
        }
    }
    Ok(v)
}

/// Exact value `V^pi(l, p)` from `initial_state` by backward induction.
pub fn evaluate_value(
    kernel: &Kernel,
    cost: &SaTable,
    policy: &TabularPolicy,
    initial_state: usize,
) -> Result<f64> {
    if initial_state >= kernel.shape().states {
        return Err(CmdpError::Dimension(format!("initial state {initial_state} out of range")));
    }
    Ok(state_values(kernel, cost, policy)?[initial_state])
}

/// State-action occupancy of `policy` under `kernel`, forward recursion from
/// the initial state.
pub fn compute_occupancy(
    policy: &TabularPolicy,
    kernel: &Kernel,
    initial_state: usize,
) -> Result<OccupancyQ> {
    check_policy(kernel, policy)?;
    let shape = kernel.shape();
    if initial_state >= shape.states {
        return Err(CmdpError::Dimension(format!("initial state {initial_state} out of range")));
    }
    let (ns, na) = (shape.states, shape.actions);
    let mut q = SaTable::zeros(shape);
    let mut state_mass = vec![0.0; ns];
    state_mass[initial_state] = 1.0;
    for h in 0..shape.horizon {
        for s in 0..ns {
            for a in 0..na {
                q.set(h, s, a, state_mass[s] * policy.prob(h, s, a));
            }
        }
        if h + 1 < shape.horizon {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                for a in 0..na {
                    let mass = q.get(h, s, a);
                    if mass == 0.0 {
                        continue;
                    }
                    for (n, p) in kernel.row(h, s, a).iter().enumerate() {
                        next[n] += mass * p;
                    }
                }
            }
            state_mass = next;
        }
    }
    Ok(OccupancyQ { table: q })
}

/// Normalises per-`(h, s)` mass into a policy. Rows without mass copy
/// `fallback` when given, otherwise become uniform.
pub fn policy_from_mass(mass: &SaTable, fallback: Option<&TabularPolicy>) -> TabularPolicy {
    let shape = mass.shape();
    let mut probs = vec![0.0; shape.sa_len()];
    for h in 0..shape.horizon {
        for s in 0..shape.states {
            let row = mass.row(h, s);
            let total: f64 = row.iter().sum();
            let start = shape.sa(h, s, 0);
            let out = &mut probs[start..start + shape.actions];
            if total > 0.0 {
                for (o, m) in out.iter_mut().zip(row) {
                    *o = m.max(0.0) / total;
                }
            } else if let Some(fb) = fallback {
                out.copy_from_slice(fb.row(h, s));
            } else {
                out.fill(1.0 / shape.actions as f64);
            }
        }
    }
    TabularPolicy { shape, probs }
}

/// `pi_h(a|s) = q_h(s,a) / sum_a' q_h(s,a')`; states never visited get the
/// uniform distribution.
pub fn policy_from_occupancy(q: &OccupancyQ) -> TabularPolicy {
    policy_from_mass(q.table(), None)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    pub constraint_costs: Vec<f64>,
    pub next_state: usize,
}

/// One realised episode of exactly `H` steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

/// Inverse-CDF draw from a probability row. Falls back to the last index with
/// positive mass when rounding leaves `u` above the cumulative total.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Plays `policy` for one episode on the true model.
///
/// Random draws per step, in order: action, objective cost, each constraint
/// cost (Bernoulli mode only), successor state.
pub fn sample_episode<R: Rng + ?Sized>(
    cmdp: &Cmdp,
    policy: &TabularPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    check_policy(cmdp.kernel(), policy)?;
    let shape = cmdp.shape();
    let mut steps = Vec::with_capacity(shape.horizon);
    let mut state = cmdp.initial_state();
    let draw_cost = |mean: f64, rng: &mut R| -> f64 {
        match cmdp.cost_noise() {
            CostNoise::Deterministic => mean,
            CostNoise::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    };
    for h in 0..shape.horizon {
        let action = sample_index(policy.row(h, state), rng.random::<f64>());
        let cost = draw_cost(cmdp.objective().get(h, state, action), rng);
        let constraint_costs = cmdp
            .constraints()
            .iter()
            .map(|d| draw_cost(d.get(h, state, action), rng))
            .collect();
        let next_state = sample_index(cmdp.kernel().row(h, state, action), rng.random::<f64>());
        steps.push(Step {
            state,
            action,
            cost,
            constraint_costs,
            next_state,
        });
        state = next_state;
    }
    Ok(Trajectory { steps })
}
