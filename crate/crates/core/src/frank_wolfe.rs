//! Frank-Wolfe minimisation of the augmented-Lagrangian primal objective over
//! the state-action-state occupancy polytope `Z`.
//!
//! With `q = sum_s' z(., ., s')` the objective is
//!
//! ```text
//! f(z) = c~ . q + 1/(2 eta) || [lambda + eta (D~ q - alpha)]_+ ||^2
//! ```
//!
//! and its gradient does not depend on `s'`. The linear minimisation oracle is
//! one extended-DP solve with the gradient slice as reward; the vertex is
//! rebuilt from the returned policy and transitions as
//! `g_h(s,a,s') = p'_h(s'|s,a) q_h(s,a)`.
//!
//! Two step rules are available. [`StepRule::OpenLoop`] is the classical
//! `gamma_t = 2 / (2 + t)` schedule. [`StepRule::FullyCorrective`] keeps the
//! LMO vertices as atoms and re-optimises the convex weights exactly after
//! every LMO call; it reaches accuracies far below what `O(1/t)` allows, which
//! the learner's step-size schedule requires. Both stop on the duality gap
//! `grad . (z - g) <= epsilon` or at the smoothness cap
//! `T = ceil(2 eta I S^2 A H / epsilon)`.

use crate::confidence::TransitionBox;
use crate::error::{CmdpError, Result};
use crate::extended_dp::{solve_extended_mdp, ExtendedMdpSolution};
use crate::model::{compute_occupancy, policy_from_mass, Kernel, SaTable, Shape, TabularPolicy};

/// Point of `Z`, stored `(h, s, a, s')`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyZ {
    shape: Shape,
    z: Vec<f64>,
}

impl OccupancyZ {
    /// `z = p'(s'|s,a) q^pi(s,a; p')`.
    pub fn from_policy_kernel(policy: &TabularPolicy, kernel: &Kernel, initial_state: usize) -> Result<Self> {
        let q = compute_occupancy(policy, kernel, initial_state)?;
        let shape = kernel.shape();
        let mut z = vec![0.0; shape.sas_len()];
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    let mass = q.get(h, s, a);
                    if mass == 0.0 {
                        continue;
                    }
                    let start = shape.sas(h, s, a, 0);
                    for (out, p) in z[start..start + shape.states].iter_mut().zip(kernel.row(h, s, a)) {
                        *out = p * mass;
                    }
                }
            }
        }
        Ok(Self { shape, z })
    }

    pub fn from_vec(shape: Shape, z: Vec<f64>) -> Result<Self> {
        if z.len() != shape.sas_len() {
            return Err(CmdpError::Dimension(format!(
                "occupancy z needs {} entries, got {}",
                shape.sas_len(),
                z.len()
            )));
        }
        Ok(Self { shape, z })
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.z
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.z[self.shape.sas(h, s, a, next)]
    }

    /// `q_h(s,a) = sum_s' z_h(s,a,s')`.
    pub fn state_action_mass(&self) -> SaTable {
        let ns = self.shape.states;
        let values = self.z.chunks_exact(ns).map(|row| row.iter().sum()).collect();
        SaTable::from_vec(self.shape, values).expect("shape-consistent")
    }

    /// Convex combination `sum_j w_j atoms_j`.
    pub fn mixture<'a>(shape: Shape, parts: impl IntoIterator<Item = (f64, &'a OccupancyZ)>) -> Self {
        let mut z = vec![0.0; shape.sas_len()];
        for (w, atom) in parts {
            if w == 0.0 {
                continue;
            }
            for (out, x) in z.iter_mut().zip(&atom.z) {
                *out += w * x;
            }
        }
        Self { shape, z }
    }

    /// `z <- (1 - gamma) z + gamma g`.
    pub fn step_towards(&mut self, gamma: f64, target: &OccupancyZ) {
        for (x, g) in self.z.iter_mut().zip(&target.z) {
            *x = (1.0 - gamma) * *x + gamma * g;
        }
    }

    /// Checks nonnegativity, flow conservation from `initial_state` and box
    /// consistency, each within `tol`. Returns a description of the first
    /// violation.
    pub fn check_membership(
        &self,
        boxes: &TransitionBox,
        initial_state: usize,
        tol: f64,
    ) -> std::result::Result<(), String> {
        let shape = self.shape;
        let (ns, na) = (shape.states, shape.actions);
        if let Some((i, x)) = self.z.iter().enumerate().find(|(_, x)| **x < -tol) {
            return Err(format!("negative entry z[{i}] = {x}"));
        }
        for h in 0..shape.horizon {
            for s in 0..ns {
                let out_flow: f64 = (0..na).map(|a| self.z[shape.sas(h, s, a, 0)..][..ns].iter().sum::<f64>()).sum();
                let in_flow = if h == 0 {
                    if s == initial_state {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (0..ns)
                        .map(|prev| (0..na).map(|a| self.get(h - 1, prev, a, s)).sum::<f64>())
                        .sum()
                };
                if (out_flow - in_flow).abs() > tol {
                    return Err(format!("flow mismatch at (h={h}, s={s}): out {out_flow}, in {in_flow}"));
                }
                for a in 0..na {
                    let row = &self.z[shape.sas(h, s, a, 0)..][..ns];
                    let mass: f64 = row.iter().sum();
                    let (lo, up) = (boxes.lower(h, s, a), boxes.upper(h, s, a));
                    for next in 0..ns {
                        if row[next] > up[next] * mass + tol || row[next] < lo[next] * mass - tol {
                            return Err(format!(
                                "box violation at (h={h}, s={s}, a={a}, s'={next}): z={} mass={mass} box=[{}, {}]",
                                row[next], lo[next], up[next]
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Retrieves `p~ = z / sum_s'' z` and `pi = q / sum_a q`. Rows without mass
    /// take the in-box adjustment of the empirical row for transitions and
    /// `fallback` (or uniform) for the policy.
    pub fn retrieve(&self, boxes: &TransitionBox, fallback: Option<&TabularPolicy>) -> (TabularPolicy, Kernel) {
        let shape = self.shape;
        let ns = shape.states;
        let q = self.state_action_mass();
        let policy = policy_from_mass(&q, fallback);
        let mut probs = Vec::with_capacity(shape.sas_len());
        for h in 0..shape.horizon {
            for s in 0..ns {
                for a in 0..shape.actions {
                    let row = &self.z[shape.sas(h, s, a, 0)..][..ns];
                    let mass: f64 = row.iter().sum();
                    if mass > 0.0 {
                        probs.extend(row.iter().map(|x| x.max(0.0) / mass));
                    } else {
                        probs.extend(boxes.feasible_row(h, s, a, boxes.center(h, s, a)));
                    }
                }
            }
        }
        (policy, Kernel::from_vec_unchecked(shape, probs))
    }
}

/// Augmented-Lagrangian primal objective for one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct AugLagObjective {
    pub c_tilde: SaTable,
    pub d_tilde: Vec<SaTable>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: f64,
}

impl AugLagObjective {
    pub fn new(c_tilde: SaTable, d_tilde: Vec<SaTable>, alpha: Vec<f64>, lambda: Vec<f64>, eta: f64) -> Result<Self> {
        if d_tilde.len() != alpha.len() || alpha.len() != lambda.len() {
            return Err(CmdpError::Dimension(format!(
                "{} constraint tables, {} thresholds, {} multipliers",
                d_tilde.len(),
                alpha.len(),
                lambda.len()
            )));
        }
        if d_tilde.iter().any(|d| d.shape() != c_tilde.shape()) {
            return Err(CmdpError::Dimension("constraint and objective tables differ in shape".into()));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(CmdpError::Config(format!("eta must be positive and finite, got {eta}")));
        }
        if lambda.iter().any(|l| !(*l >= 0.0)) {
            return Err(CmdpError::Config("dual multipliers must be nonnegative".into()));
        }
        Ok(Self {
            c_tilde,
            d_tilde,
            alpha,
            lambda,
            eta,
        })
    }

    pub fn shape(&self) -> Shape {
        self.c_tilde.shape()
    }

    pub fn num_constraints(&self) -> usize {
        self.alpha.len()
    }

    /// `D~ q`.
    pub fn constraint_values(&self, q: &SaTable) -> Vec<f64> {
        self.d_tilde.iter().map(|d| d.dot(q)).collect()
    }

    /// `[lambda + eta (v - alpha)]_+` for constraint values `v`.
    pub fn multipliers_at(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.alpha)
            .zip(&self.lambda)
            .map(|((v, a), l)| (l + self.eta * (v - a)).max(0.0))
            .collect()
    }

    /// Objective from the linear cost and the constraint values.
    pub fn value_from_parts(&self, linear: f64, values: &[f64]) -> f64 {
        let penalty: f64 = self.multipliers_at(values).iter().map(|m| m * m).sum();
        linear + penalty / (2.0 * self.eta)
    }

    pub fn value_at_q(&self, q: &SaTable) -> f64 {
        self.value_from_parts(self.c_tilde.dot(q), &self.constraint_values(q))
    }

    /// `c~ + D~^T [lambda + eta (D~ q - alpha)]_+`.
    pub fn gradient_slice_at_q(&self, q: &SaTable) -> SaTable {
        let mu = self.multipliers_at(&self.constraint_values(q));
        let mut grad = self.c_tilde.clone();
        for (d, m) in self.d_tilde.iter().zip(&mu) {
            if *m == 0.0 {
                continue;
            }
            for (g, x) in grad.values_mut().iter_mut().zip(d.values()) {
                *g += m * x;
            }
        }
        grad
    }
}

pub fn objective_value(f: &AugLagObjective, z: &OccupancyZ) -> f64 {
    f.value_at_q(&z.state_action_mass())
}

/// Full gradient over `(h, s, a, s')`; every `s'` entry repeats the slice.
pub fn gradient(f: &AugLagObjective, z: &OccupancyZ) -> Vec<f64> {
    let slice = f.gradient_slice_at_q(&z.state_action_mass());
    let ns = f.shape().states;
    slice
        .values()
        .iter()
        .flat_map(|g| std::iter::repeat_n(*g, ns))
        .collect()
}

/// LMO output: a vertex of `Z` with the plan that generated it.
#[derive(Clone, Debug)]
pub struct LmoVertex {
    pub z: OccupancyZ,
    pub q: SaTable,
    pub plan: ExtendedMdpSolution,
}

/// Minimises `g . grad` over `Z` through one extended-DP solve.
pub fn lmo(gradient_slice: &SaTable, boxes: &TransitionBox, initial_state: usize) -> Result<LmoVertex> {
    let plan = solve_extended_mdp(gradient_slice, boxes, initial_state)?;
    let z = OccupancyZ::from_policy_kernel(&plan.policy, &plan.transitions, initial_state)?;
    let q = z.state_action_mass();
    Ok(LmoVertex { z, q, plan })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `gamma_t = 2 / (2 + t)`.
    #[default]
    OpenLoop,
    /// Exact re-optimisation of the convex weights over all retained atoms.
    FullyCorrective,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InnerOptions {
    pub step_rule: StepRule,
    /// Extra budget on top of the smoothness cap.
    pub max_iterations: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Gap,
    IterationCap,
    Budget,
    /// No further decrease is representable in floating point.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct InnerSolution {
    pub policy: TabularPolicy,
    pub transitions: Kernel,
    pub z: OccupancyZ,
    /// Duality gap certificate: `f(z) - min_Z f <= fw_gap`.
    pub fw_gap: f64,
    pub iterations: u64,
    pub iteration_cap: u64,
    pub objective: f64,
    /// `D~ q` at the returned point.
    pub constraint_values: Vec<f64>,
    pub stop: StopReason,
}

/// `ceil(2 eta I S^2 A H / epsilon)`, at least one step.
pub fn iteration_cap(f: &AugLagObjective, epsilon: f64) -> u64 {
    let shape = f.shape();
    let t = 2.0
        * f.eta
        * f.num_constraints() as f64
        * (shape.states * shape.states * shape.actions * shape.horizon) as f64
        / epsilon;
    if !t.is_finite() || t >= u64::MAX as f64 {
        u64::MAX
    } else {
        (t.ceil() as u64).max(1)
    }
}

/// Iterate bookkeeping shared by both step rules.
struct Atom {
    z: OccupancyZ,
    linear: f64,
    values: Vec<f64>,
}

impl Atom {
    fn new(f: &AugLagObjective, z: OccupancyZ) -> Self {
        let q = z.state_action_mass();
        Self {
            linear: f.c_tilde.dot(&q),
            values: f.constraint_values(&q),
            z,
        }
    }
}

/// Approximately minimises `f` over `Z` (defined by `boxes`), returning the
/// retrieved policy and transitions.
pub fn solve_inner(
    f: &AugLagObjective,
    boxes: &TransitionBox,
    initial_state: usize,
    epsilon: f64,
    warm_start: Option<&OccupancyZ>,
    options: &InnerOptions,
) -> Result<InnerSolution> {
    solve_inner_observed(f, boxes, initial_state, epsilon, warm_start, options, &mut |_| {})
}

/// [`solve_inner`] that also hands every iterate, starting with the initial
/// point, to `observer`.
pub fn solve_inner_observed(
    f: &AugLagObjective,
    boxes: &TransitionBox,
    initial_state: usize,
    epsilon: f64,
    warm_start: Option<&OccupancyZ>,
    options: &InnerOptions,
    observer: &mut dyn FnMut(&OccupancyZ),
) -> Result<InnerSolution> {
    if !(epsilon > 0.0) {
        return Err(CmdpError::Config(format!("inner accuracy must be positive, got {epsilon}")));
    }
    let shape = f.shape();
    if boxes.shape() != shape {
        return Err(CmdpError::Dimension("objective and transition boxes differ in shape".into()));
    }
    let z0 = match warm_start {
        Some(z) if z.shape() == shape => z.clone(),
        Some(_) => return Err(CmdpError::Dimension("warm start has the wrong shape".into())),
        None => OccupancyZ::from_policy_kernel(&TabularPolicy::uniform(shape), &boxes.midpoint_kernel(), initial_state)?,
    };
    let cap = iteration_cap(f, epsilon);
    let budget = options.max_iterations.unwrap_or(u64::MAX);
    match options.step_rule {
        StepRule::OpenLoop => open_loop(f, boxes, initial_state, epsilon, z0, cap, budget, observer),
        StepRule::FullyCorrective => fully_corrective(f, boxes, initial_state, epsilon, z0, cap, budget, observer),
    }
}

fn gap_of(grad: &SaTable, current: &SaTable, vertex: &SaTable) -> f64 {
    grad.values()
        .iter()
        .zip(current.values().iter().zip(vertex.values()))
        .map(|(g, (x, v))| g * (x - v))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    f: &AugLagObjective,
    boxes: &TransitionBox,
    z: OccupancyZ,
    fallback: Option<&TabularPolicy>,
    fw_gap: f64,
    iterations: u64,
    iteration_cap: u64,
    stop: StopReason,
) -> InnerSolution {
    let q = z.state_action_mass();
    let objective = f.value_at_q(&q);
    let constraint_values = f.constraint_values(&q);
    let (policy, transitions) = z.retrieve(boxes, fallback);
    InnerSolution {
        policy,
        transitions,
        z,
        fw_gap,
        iterations,
        iteration_cap,
        objective,
        constraint_values,
        stop,
    }
}

/// On a gap stop, return the LMO vertex instead of the iterate when it is at
/// least as good; the certificate covers both.
fn better_of(f: &AugLagObjective, z: OccupancyZ, q: &SaTable, vertex: LmoVertex) -> (OccupancyZ, TabularPolicy) {
    if f.value_at_q(&vertex.q) <= f.value_at_q(q) {
        (vertex.z, vertex.plan.policy)
    } else {
        (z, vertex.plan.policy)
    }
}

#[allow(clippy::too_many_arguments)]
fn open_loop(
    f: &AugLagObjective,
    boxes: &TransitionBox,
    initial_state: usize,
    epsilon: f64,
    mut z: OccupancyZ,
    cap: u64,
    budget: u64,
    observer: &mut dyn FnMut(&OccupancyZ),
) -> Result<InnerSolution> {
    let mut t: u64 = 0;
    loop {
        observer(&z);
        let q = z.state_action_mass();
        let grad = f.gradient_slice_at_q(&q);
        let vertex = lmo(&grad, boxes, initial_state)?;
        let gap = gap_of(&grad, &q, &vertex.q);
        if gap <= epsilon {
            let (z, fallback) = better_of(f, z, &q, vertex);
            return Ok(finish(f, boxes, z, Some(&fallback), gap, t, cap, StopReason::Gap));
        }
        if t >= cap || t >= budget {
            let stop = if t >= cap { StopReason::IterationCap } else { StopReason::Budget };
            return Ok(finish(f, boxes, z, Some(&vertex.plan.policy), gap, t, cap, stop));
        }
        let gamma = 2.0 / (2.0 + t as f64);
        z.step_towards(gamma, &vertex.z);
        t += 1;
        if cfg!(debug_assertions) && t.is_multiple_of(100) {
            debug_assert!(
                z.check_membership(boxes, initial_state, 1e-8).is_ok(),
                "Frank-Wolfe iterate left Z at t={t}"
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fully_corrective(
    f: &AugLagObjective,
    boxes: &TransitionBox,
    initial_state: usize,
    epsilon: f64,
    z0: OccupancyZ,
    cap: u64,
    budget: u64,
    observer: &mut dyn FnMut(&OccupancyZ),
) -> Result<InnerSolution> {
    let shape = f.shape();
    let mut atoms = vec![Atom::new(f, z0.clone())];
    let mut weights = vec![1.0];
    let mut z = z0;
    let mut current = f.value_from_parts(atoms[0].linear, &atoms[0].values);
    let mut stalls = 0;
    let mut t: u64 = 0;
    loop {
        observer(&z);
        let q = z.state_action_mass();
        let grad = f.gradient_slice_at_q(&q);
        let vertex = lmo(&grad, boxes, initial_state)?;
        let gap = gap_of(&grad, &q, &vertex.q);
        if gap <= epsilon {
            let (z, fallback) = better_of(f, z, &q, vertex);
            return Ok(finish(f, boxes, z, Some(&fallback), gap, t, cap, StopReason::Gap));
        }
        if t >= cap || t >= budget || stalls >= 2 {
            let stop = if t >= cap {
                StopReason::IterationCap
            } else if t >= budget {
                StopReason::Budget
            } else {
                StopReason::Stalled
            };
            return Ok(finish(f, boxes, z, Some(&vertex.plan.policy), gap, t, cap, stop));
        }

        let incoming = match atoms.iter().position(|a| a.z == vertex.z) {
            Some(j) => j,
            None => {
                atoms.push(Atom::new(f, vertex.z));
                weights.push(0.0);
                atoms.len() - 1
            }
        };
        let (new_weights, value) = corrective_weights(f, &atoms, &weights, incoming);
        if value < current - 1e-15 * current.abs().max(1.0) {
            stalls = 0;
        } else {
            stalls += 1;
        }
        if value <= current {
            weights = new_weights;
            current = value;
        }
        let mut kept_atoms = Vec::with_capacity(atoms.len());
        let mut kept_weights = Vec::with_capacity(atoms.len());
        for (atom, w) in atoms.into_iter().zip(weights) {
            if w > 0.0 {
                kept_atoms.push(atom);
                kept_weights.push(w);
            }
        }
        let total: f64 = kept_weights.iter().sum();
        kept_weights.iter_mut().for_each(|w| *w /= total);
        atoms = kept_atoms;
        weights = kept_weights;
        z = OccupancyZ::mixture(shape, weights.iter().copied().zip(atoms.iter().map(|a| &a.z)));
        t += 1;
        if cfg!(debug_assertions) && t.is_multiple_of(100) {
            debug_assert!(
                z.check_membership(boxes, initial_state, 1e-8).is_ok(),
                "Frank-Wolfe iterate left Z at t={t}"
            );
        }
    }
}

fn mixture_value(f: &AugLagObjective, atoms: &[Atom], weights: &[f64]) -> f64 {
    let linear: f64 = atoms.iter().zip(weights).map(|(a, w)| w * a.linear).sum();
    let mut values = vec![0.0; f.num_constraints()];
    for (atom, w) in atoms.iter().zip(weights) {
        for (v, x) in values.iter_mut().zip(&atom.values) {
            *v += w * x;
        }
    }
    f.value_from_parts(linear, &values)
}

/// Best convex weights found among: the current weights, an exact line search
/// towards the incoming atom, and every KKT point of the piecewise-quadratic
/// weight problem with at most `|P| + 1` atoms in the support (`P` = active
/// penalty terms). Ties prefer the most recently added atoms.
fn corrective_weights(f: &AugLagObjective, atoms: &[Atom], weights: &[f64], incoming: usize) -> (Vec<f64>, f64) {
    let m = atoms.len();
    let mut best_w = weights.to_vec();
    let mut best_v = mixture_value(f, atoms, weights);
    let consider = |w: Vec<f64>, best_w: &mut Vec<f64>, best_v: &mut f64| {
        let v = mixture_value(f, atoms, &w);
        if v < *best_v || (v == *best_v && prefers_newer(&w, best_w)) {
            *best_v = v;
            *best_w = w;
        }
    };

    let gamma = line_search(f, atoms, weights, incoming);
    let mut w: Vec<f64> = weights.iter().map(|x| (1.0 - gamma) * x).collect();
    w[incoming] += gamma;
    consider(w, &mut best_w, &mut best_v);

    let ni = f.num_constraints();
    for mask in 0..(1usize << ni) {
        let active: Vec<usize> = (0..ni).filter(|i| mask & (1 << i) != 0).collect();
        let max_support = (active.len() + 1).min(m);
        for size in 1..=max_support {
            for_each_subset(m, size, &mut |support| {
                if let Some(w) = kkt_candidate(f, atoms, support, &active) {
                    consider(w, &mut best_w, &mut best_v);
                }
            });
        }
    }
    (best_w, best_v)
}

fn prefers_newer(candidate: &[f64], incumbent: &[f64]) -> bool {
    let last = |w: &[f64]| w.iter().rposition(|x| *x > 0.0);
    last(candidate) > last(incumbent)
}

fn for_each_subset(m: usize, size: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, m: usize, size: usize, buf: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if buf.len() == size {
            visit(buf);
            return;
        }
        for j in start..m {
            if m - j < size - buf.len() {
                break;
            }
            buf.push(j);
            rec(j + 1, m, size, buf, visit);
            buf.pop();
        }
    }
    rec(0, m, size, &mut Vec::with_capacity(size), visit);
}

/// Solves the stationarity system for weights supported on `support` with the
/// penalty terms in `active` switched on:
///
/// ```text
/// linear_j + sum_{i in P} values_ij mu_i - tau = 0          (j in J)
/// sum_{j in J} values_ij w_j - mu_i / eta = alpha_i - lambda_i / eta   (i in P)
/// sum_j w_j = 1
/// ```
fn kkt_candidate(f: &AugLagObjective, atoms: &[Atom], support: &[usize], active: &[usize]) -> Option<Vec<f64>> {
    let nj = support.len();
    let np = active.len();
    let n = nj + np + 1;
    let mut mat = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (r, &j) in support.iter().enumerate() {
        for (c, &i) in active.iter().enumerate() {
            mat[r * n + nj + c] = atoms[j].values[i];
        }
        mat[r * n + nj + np] = -1.0;
        rhs[r] = -atoms[j].linear;
    }
    for (c, &i) in active.iter().enumerate() {
        let r = nj + c;
        for (k, &j) in support.iter().enumerate() {
            mat[r * n + k] = atoms[j].values[i];
        }
        mat[r * n + nj + c] = -1.0 / f.eta;
        rhs[r] = f.alpha[i] - f.lambda[i] / f.eta;
    }
    for k in 0..nj {
        mat[(n - 1) * n + k] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let x = solve_dense(&mut mat, &mut rhs, n)?;
    let sub = &x[..nj];
    if sub.iter().any(|w| !w.is_finite() || *w < -1e-9) {
        return None;
    }
    let mut w = vec![0.0; atoms.len()];
    for (k, &j) in support.iter().enumerate() {
        w[j] = sub[k].max(0.0);
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= total);
    Some(w)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mat: &mut [f64], rhs: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let scale = mat.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| mat[a * n + col].abs().total_cmp(&mat[b * n + col].abs()))?;
        if mat[pivot * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                mat.swap(pivot * n + k, col * n + k);
            }
            rhs.swap(pivot, col);
        }
        let p = mat[col * n + col];
        for r in col + 1..n {
            let factor = mat[r * n + col] / p;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                mat[r * n + k] -= factor * mat[col * n + k];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for k in r + 1..n {
            acc -= mat[r * n + k] * x[k];
        }
        x[r] = acc / mat[r * n + r];
    }
    Some(x)
}

/// Exact minimiser over `gamma in [0, 1]` of `f((1 - gamma) z + gamma g)`.
/// The restriction is convex and piecewise quadratic with breakpoints where a
/// penalty term switches on.
fn line_search(f: &AugLagObjective, atoms: &[Atom], weights: &[f64], incoming: usize) -> f64 {
    let ni = f.num_constraints();
    let from_linear: f64 = atoms.iter().zip(weights).map(|(a, w)| w * a.linear).sum();
    let mut from_values = vec![0.0; ni];
    for (atom, w) in atoms.iter().zip(weights) {
        for (v, x) in from_values.iter_mut().zip(&atom.values) {
            *v += w * x;
        }
    }
    let to = &atoms[incoming];
    let d_linear = to.linear - from_linear;
    // s_i(gamma) = s0_i + gamma * slope_i
    let s0: Vec<f64> = (0..ni)
        .map(|i| f.lambda[i] + f.eta * (from_values[i] - f.alpha[i]))
        .collect();
    let slope: Vec<f64> = (0..ni).map(|i| f.eta * (to.values[i] - from_values[i])).collect();
    let eval = |g: f64| {
        let pen: f64 = (0..ni).map(|i| (s0[i] + g * slope[i]).max(0.0).powi(2)).sum();
        from_linear + g * d_linear + pen / (2.0 * f.eta)
    };
    let mut points = vec![0.0, 1.0];
    for i in 0..ni {
        if slope[i] != 0.0 {
            let g = -s0[i] / slope[i];
            if g > 0.0 && g < 1.0 {
                points.push(g);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    let mut candidates = points.clone();
    for pair in points.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let mid = 0.5 * (lo + hi);
        // derivative: d_linear + sum_{active} s_i(g) slope_i / eta
        let mut num = d_linear;
        let mut den = 0.0;
        for i in 0..ni {
            if s0[i] + mid * slope[i] > 0.0 {
                num += s0[i] * slope[i] / f.eta;
                den += slope[i] * slope[i] / f.eta;
            }
        }
        if den > 0.0 {
            candidates.push((-num / den).clamp(lo, hi));
        }
    }
    let mut best = 0.0;
    let mut best_v = eval(0.0);
    for g in candidates {
        let v = eval(g);
        if v < best_v || (v == best_v && g > best) {
            best = g;
            best_v = v;
        }
    }
    best
}
