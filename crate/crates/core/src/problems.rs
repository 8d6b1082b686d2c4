//! Outer optimizers: rate region, sum rate, EE region and global EE.
//!
//! Every problem runs a minorize-maximize loop: the interference terms are
//! linearized at the current point and the resulting concave surrogate is
//! maximized by the solvers. The fractional EE problems wrap a Dinkelbach
//! loop around each surrogate solve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    build_effective, rates, CovarianceSet, EffectiveNetwork, NetworkScenario, RateReport,
    SignalingMode,
};
use crate::realdec::RealMat;
use crate::solver::{maximize_concave, maximize_minimum, ConcaveComponents, FeasibleSetSpec, SolveOptions};
use crate::surrogate::{build_surrogate, SurrogateEngine, SurrogateState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    RateRegion,
    SumRate,
    EeRegion,
    GlobalEe,
}

impl ProblemKind {
    pub fn is_energy(self) -> bool {
        matches!(self, ProblemKind::EeRegion | ProblemKind::GlobalEe)
    }

    /// Name of the reported objective.
    pub fn metric_name(self) -> &'static str {
        match self {
            ProblemKind::RateRegion => "fairness_rate",
            ProblemKind::SumRate => "sum_rate",
            ProblemKind::EeRegion => "fairness_ee",
            ProblemKind::GlobalEe => "global_ee",
        }
    }
}

/// Which design is run: improper signaling, proper signaling, or proper
/// signaling designed as if the hardware had no I/Q imbalance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DesignMode {
    #[serde(rename = "pgs")]
    Pgs,
    #[serde(rename = "igs")]
    Igs,
    #[serde(rename = "i-pgs")]
    IdealPgs,
}

impl DesignMode {
    pub const ALL: [DesignMode; 3] = [DesignMode::Pgs, DesignMode::Igs, DesignMode::IdealPgs];

    pub fn label(self) -> &'static str {
        match self {
            DesignMode::Pgs => "pgs",
            DesignMode::Igs => "igs",
            DesignMode::IdealPgs => "i-pgs",
        }
    }

    pub fn signaling(self) -> SignalingMode {
        match self {
            DesignMode::Igs => SignalingMode::Igs,
            DesignMode::Pgs | DesignMode::IdealPgs => SignalingMode::Pgs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Rate/EE profile weights; normalized to sum to one.
    pub alphas: Vec<f64>,
    /// Per-user minimum rates in bits per channel use.
    pub r_th: Vec<f64>,
    pub mode: DesignMode,
}

impl ProblemSpec {
    /// Fairness point (`α_k = 1/K`) without QoS constraints.
    pub fn fairness(kind: ProblemKind, users: usize, mode: DesignMode) -> Self {
        ProblemSpec {
            kind,
            alphas: vec![1.0 / users as f64; users],
            r_th: vec![0.0; users],
            mode,
        }
    }

    pub fn with_mode(&self, mode: DesignMode) -> Self {
        ProblemSpec {
            mode,
            ..self.clone()
        }
    }

    pub fn has_qos(&self) -> bool {
        self.r_th.iter().any(|&r| r > 0.0)
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        if self.alphas.len() != users {
            return Err(Error::dims("profile weights", users, self.alphas.len()));
        }
        if self.r_th.len() != users {
            return Err(Error::dims("QoS thresholds", users, self.r_th.len()));
        }
        if self.alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config("profile weights must be finite and non-negative".into()));
        }
        if (self.alphas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("profile weights must sum to one".into()));
        }
        if self.r_th.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config("QoS thresholds must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Exact objective of this problem for a rate report.
    pub fn objective(&self, r: &RateReport) -> f64 {
        match self.kind {
            ProblemKind::RateRegion => r.min_weighted_rate(&self.alphas),
            ProblemKind::SumRate => r.sum_rate,
            ProblemKind::EeRegion => r.min_weighted_ee(&self.alphas),
            ProblemKind::GlobalEe => r.global_ee,
        }
    }
}

/// Outer-loop settings.
///
/// Max-min surrogates are solved inexactly: MM iteration `l` runs one softmin
/// stage at `τ_l = max(τ_end, τ_start · factor^l)` for at most `stage_iters`
/// steps, and the MM stopping test only applies once `τ_l` has reached its
/// floor.
#[derive(Debug, Clone, PartialEq)]
pub struct MmOptions {
    pub max_mm_iters: usize,
    pub mm_tol: f64,
    pub max_inner_iters: usize,
    pub inner_tol: f64,
    pub stage_iters: usize,
    pub solver: SolveOptions,
}

impl Default for MmOptions {
    fn default() -> Self {
        MmOptions {
            max_mm_iters: 40,
            mm_tol: 1e-5,
            max_inner_iters: 30,
            inner_tol: 1e-6,
            stage_iters: 40,
            solver: SolveOptions::default(),
        }
    }
}

impl MmOptions {
    fn tau(&self, iteration: usize) -> f64 {
        let s = &self.solver;
        (s.tau_start * s.tau_factor.powi(iteration as i32)).max(s.tau_end)
    }

    /// Single-stage solver settings for MM iteration `iteration`.
    fn stage(&self, iteration: usize) -> SolveOptions {
        let tau = self.tau(iteration);
        SolveOptions {
            max_iters: self.stage_iters,
            tau_start: tau,
            tau_end: tau,
            ..self.solver.clone()
        }
    }

    /// Dinkelbach residual target; no tighter than the smoothing level.
    fn inner_tolerance(&self, iteration: usize) -> f64 {
        self.inner_tol.max(self.tau(iteration))
    }

    fn annealed(&self, iteration: usize) -> bool {
        self.tau(iteration) <= self.solver.tau_end
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.max_mm_iters == 0 || self.max_inner_iters == 0 || self.stage_iters == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        if !(self.mm_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTrace {
    /// Exact objective at the start and after every MM iteration.
    pub objective: Vec<f64>,
    /// Dinkelbach parameters across all inner iterations, in order.
    pub mu: Vec<f64>,
    pub mm_iterations: usize,
    pub mm_converged: bool,
    pub inner_converged: bool,
    pub report: RateReport,
}

impl OptimizeTrace {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("trace holds the start value")
    }
}

/// `R̃_k` for all users.
struct SurrogateRates<'a> {
    engine: SurrogateEngine<'a>,
}

impl ConcaveComponents for SurrogateRates<'_> {
    fn count(&self) -> usize {
        self.engine.network().users
    }

    fn values(&self, p: &[RealMat]) -> Result<Vec<f64>> {
        Ok(self.engine.evaluate(p)?.values)
    }

    fn values_and_gradient(
        &self,
        p: &[RealMat],
        weights: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<RealMat>)> {
        let point = self.engine.evaluate(p)?;
        let w = weights(&point.values);
        let g = self.engine.weighted_gradient(&point, &w);
        Ok((point.values, g))
    }
}

fn consumed(e: &EffectiveNetwork, p: &[RealMat]) -> Vec<f64> {
    p.iter().enumerate().map(|(k, m)| e.consumed_power(k, m)).collect()
}

fn subtract_power_gradient(e: &EffectiveNetwork, g: &mut [RealMat], scale: &[f64]) {
    for (k, gk) in g.iter_mut().enumerate() {
        let s = scale[k] * e.eta[k];
        for d in 0..gk.nrows() {
            gk[(d, d)] -= s;
        }
    }
}

/// `R̃_k − μ α_k (η_k Tr P_k + P_c,k)`; divided by `α_k` inside the max-min.
struct WeightedSubtracted<'a> {
    rates: SurrogateRates<'a>,
    mu: f64,
    alphas: &'a [f64],
}

impl ConcaveComponents for WeightedSubtracted<'_> {
    fn count(&self) -> usize {
        self.alphas.len()
    }

    fn values(&self, p: &[RealMat]) -> Result<Vec<f64>> {
        let r = self.rates.values(p)?;
        Ok(self.combine(&r, p))
    }

    fn values_and_gradient(
        &self,
        p: &[RealMat],
        weights: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<RealMat>)> {
        let point = self.rates.engine.evaluate(p)?;
        let vals = self.combine(&point.values, p);
        let w = weights(&vals);
        let mut g = self.rates.engine.weighted_gradient(&point, &w);
        let scale: Vec<f64> = w.iter().zip(self.alphas).map(|(w, a)| w * self.mu * a).collect();
        subtract_power_gradient(self.rates.engine.network(), &mut g, &scale);
        Ok((vals, g))
    }
}

impl WeightedSubtracted<'_> {
    fn combine(&self, r: &[f64], p: &[RealMat]) -> Vec<f64> {
        let u = consumed(self.rates.engine.network(), p);
        r.iter()
            .zip(&u)
            .zip(self.alphas)
            .map(|((r, u), a)| r - self.mu * a * u)
            .collect()
    }
}

/// Single component `Σ R̃_k − μ Σ_k (η_k Tr P_k + P_c,k)`.
struct SumSubtracted<'a> {
    rates: SurrogateRates<'a>,
    mu: f64,
}

impl ConcaveComponents for SumSubtracted<'_> {
    fn count(&self) -> usize {
        1
    }

    fn values(&self, p: &[RealMat]) -> Result<Vec<f64>> {
        let r = self.rates.values(p)?;
        Ok(vec![self.combine(&r, p)])
    }

    fn values_and_gradient(
        &self,
        p: &[RealMat],
        weights: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<RealMat>)> {
        let point = self.rates.engine.evaluate(p)?;
        let vals = vec![self.combine(&point.values, p)];
        let w = weights(&vals)[0];
        let users = point.values.len();
        let mut g = self.rates.engine.weighted_gradient(&point, &vec![w; users]);
        subtract_power_gradient(self.rates.engine.network(), &mut g, &vec![w * self.mu; users]);
        Ok((vals, g))
    }
}

impl SumSubtracted<'_> {
    fn combine(&self, r: &[f64], p: &[RealMat]) -> f64 {
        let u: f64 = consumed(self.rates.engine.network(), p).iter().sum();
        r.iter().sum::<f64>() - self.mu * u
    }
}

/// `R̃_k − r_th,k ≥ 0` for users with a positive threshold.
struct QosConstraints<'a> {
    rates: SurrogateRates<'a>,
    users: Vec<usize>,
    thresholds: Vec<f64>,
}

impl<'a> QosConstraints<'a> {
    fn new(e: &'a EffectiveNetwork, state: &'a SurrogateState, r_th: &[f64]) -> Option<Self> {
        let users: Vec<usize> = (0..r_th.len()).filter(|&k| r_th[k] > 0.0).collect();
        if users.is_empty() {
            return None;
        }
        Some(QosConstraints {
            rates: SurrogateRates {
                engine: SurrogateEngine::new(e, state),
            },
            thresholds: users.iter().map(|&k| r_th[k]).collect(),
            users,
        })
    }
}

impl ConcaveComponents for QosConstraints<'_> {
    fn count(&self) -> usize {
        self.users.len()
    }

    fn values(&self, p: &[RealMat]) -> Result<Vec<f64>> {
        let r = self.rates.values(p)?;
        Ok(self.users.iter().zip(&self.thresholds).map(|(&k, t)| r[k] - t).collect())
    }

    fn values_and_gradient(
        &self,
        p: &[RealMat],
        weights: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<RealMat>)> {
        let point = self.rates.engine.evaluate(p)?;
        let vals: Vec<f64> = self
            .users
            .iter()
            .zip(&self.thresholds)
            .map(|(&k, t)| point.values[k] - t)
            .collect();
        let w = weights(&vals);
        let mut full = vec![0.0; point.values.len()];
        for (&k, wk) in self.users.iter().zip(&w) {
            full[k] = *wk;
        }
        Ok((vals, self.rates.engine.weighted_gradient(&point, &full)))
    }
}

fn feasible_set(e: &EffectiveNetwork, mode: SignalingMode) -> FeasibleSetSpec {
    FeasibleSetSpec {
        mode,
        budgets: e.power_budget.clone(),
        n_tx: e.n_tx,
    }
}

/// Standard start: uniform power, full budget for rate problems and 30 % of
/// it for EE problems.
pub fn default_start(e: &EffectiveNetwork, kind: ProblemKind, mode: SignalingMode) -> CovarianceSet {
    let fraction = if kind.is_energy() { 0.3 } else { 1.0 };
    CovarianceSet::uniform(mode, e.n_tx, &e.power_budget, fraction)
}

struct InnerResult {
    point: CovarianceSet,
    converged: bool,
}

/// Generic MM loop; `inner` maximizes the surrogate built at the given point.
fn mm_loop(
    e: &EffectiveNetwork,
    spec: &ProblemSpec,
    start: CovarianceSet,
    opts: &MmOptions,
    mu: &mut Vec<f64>,
    inner: &mut dyn FnMut(&SurrogateState, &CovarianceSet, usize, &mut Vec<f64>) -> Result<InnerResult>,
) -> Result<(CovarianceSet, OptimizeTrace)> {
    let mut point = start;
    let mut report = rates(e, &point)?;
    let mut objective = vec![spec.objective(&report)];
    let mut mm_converged = false;
    let mut inner_converged = true;
    let mut iterations = 0;
    while iterations < opts.max_mm_iters {
        let state = build_surrogate(e, &point)?;
        let out = inner(&state, &point, iterations, mu)?;
        iterations += 1;
        inner_converged &= out.converged;
        let next_report = rates(e, &out.point)?;
        let prev = *objective.last().expect("start value");
        let next = spec.objective(&next_report);
        let annealed = opts.annealed(iterations - 1);
        if next < prev {
            // No exact improvement at this smoothing level: keep the current point.
            objective.push(prev);
            if annealed {
                mm_converged = true;
                break;
            }
            continue;
        }
        point = out.point;
        report = next_report;
        objective.push(next);
        if annealed && (next - prev).abs() <= opts.mm_tol * (1.0 + next.abs()) {
            mm_converged = true;
            break;
        }
    }
    Ok((
        point,
        OptimizeTrace {
            objective,
            mu: std::mem::take(mu),
            mm_iterations: iterations,
            mm_converged,
            inner_converged,
            report,
        },
    ))
}

fn check_kind(spec: &ProblemSpec, kind: ProblemKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Config(format!("expected a {kind:?} problem, got {:?}", spec.kind)));
    }
    Ok(())
}

fn prepare(e: &EffectiveNetwork, spec: &ProblemSpec, start: &CovarianceSet, opts: &MmOptions) -> Result<()> {
    spec.validate(e.users)?;
    opts.validate()?;
    crate::network::check_covariances(e, &start.mats)?;
    if spec.kind.is_energy() && e.p_static.iter().any(|&p| p <= 0.0) {
        return Err(Error::Config("energy-efficiency problems need a positive static power".into()));
    }
    Ok(())
}

/// Rate-profile point `max min_k R_k / α_k`.
pub fn solve_rate_region(
    e: &EffectiveNetwork,
    spec: &ProblemSpec,
    start: &CovarianceSet,
    opts: &MmOptions,
) -> Result<(CovarianceSet, OptimizeTrace)> {
    check_kind(spec, ProblemKind::RateRegion)?;
    prepare(e, spec, start, opts)?;
    let set = feasible_set(e, start.mode);
    let mut inner = |state: &SurrogateState, at: &CovarianceSet, it: usize, _: &mut Vec<f64>| {
        let obj = SurrogateRates {
            engine: SurrogateEngine::new(e, state),
        };
        let res = maximize_minimum(&obj, &spec.alphas, None, &set, at, &opts.stage(it))?;
        Ok(InnerResult {
            point: res.point,
            converged: res.converged,
        })
    };
    mm_loop(e, spec, start.clone(), opts, &mut vec![], &mut inner)
}

/// Fails unless the thresholds are met by the rate-profile solution with
/// weights proportional to them; returns that solution as a feasible start.
fn qos_start(
    e: &EffectiveNetwork,
    spec: &ProblemSpec,
    start: &CovarianceSet,
    opts: &MmOptions,
) -> Result<CovarianceSet> {
    let total: f64 = spec.r_th.iter().sum();
    let probe = ProblemSpec {
        kind: ProblemKind::RateRegion,
        alphas: spec.r_th.iter().map(|r| r / total).collect(),
        r_th: vec![0.0; spec.r_th.len()],
        mode: spec.mode,
    };
    let (point, trace) = solve_rate_region(e, &probe, start, opts)?;
    let short: Vec<String> = trace
        .report
        .rates
        .iter()
        .zip(&spec.r_th)
        .enumerate()
        .filter(|(_, (r, t))| *r < *t)
        .map(|(k, (r, t))| format!("user {k}: {r:.4} < {t:.4}"))
        .collect();
    if !short.is_empty() {
        return Err(Error::QosInfeasible(short.join(", ")));
    }
    Ok(point)
}

/// `max Σ_k R_k` subject to `R_k ≥ r_th,k`.
pub fn solve_sum_rate(
    e: &EffectiveNetwork,
    spec: &ProblemSpec,
    start: &CovarianceSet,
    opts: &MmOptions,
) -> Result<(CovarianceSet, OptimizeTrace)> {
    check_kind(spec, ProblemKind::SumRate)?;
    prepare(e, spec, start, opts)?;
    let set = feasible_set(e, start.mode);
    let start = if spec.has_qos() {
        qos_start(e, spec, start, opts)?
    } else {
        start.clone()
    };
    let mut inner = |state: &SurrogateState, at: &CovarianceSet, it: usize, _: &mut Vec<f64>| {
        let engine = SurrogateEngine::new(e, state);
        let res = match QosConstraints::new(e, state, &spec.r_th) {
            None => maximize_concave(&SurrogateRates { engine }, &set, at, &opts.solver)?,
            Some(qos) => {
                let obj = SumSubtracted {
                    rates: SurrogateRates { engine },
                    mu: 0.0,
                };
                maximize_minimum(&obj, &[1.0], Some(&qos), &set, at, &opts.stage(it))?
            }
        };
        Ok(InnerResult {
            point: res.point,
            converged: res.converged,
        })
    };
    mm_loop(e, spec, start, opts, &mut vec![], &mut inner)
}

/// `max min_k E_k / α_k` with `E_k = R_k / (η_k Tr P_k + P_c,k)`.
///
/// Each MM step runs a generalized Dinkelbach loop on the surrogate ratios
/// `Ẽ_k = R̃_k / u_k`: with `μ = min_k Ẽ_k / α_k` it maximizes
/// `min_k (R̃_k / α_k − μ u_k)` and updates `μ` at the solution.
pub fn solve_ee_region(
    e: &EffectiveNetwork,
    spec: &ProblemSpec,
    start: &CovarianceSet,
    opts: &MmOptions,
) -> Result<(CovarianceSet, OptimizeTrace)> {
    check_kind(spec, ProblemKind::EeRegion)?;
    prepare(e, spec, start, opts)?;
    let set = feasible_set(e, start.mode);
    let start = if spec.has_qos() {
        qos_start(e, spec, start, opts)?
    } else {
        start.clone()
    };
    let ratio = |r: &[f64], p: &[RealMat]| -> f64 {
        let u = consumed(e, p);
        let ee: Vec<f64> = r.iter().zip(&u).map(|(r, u)| r / u).collect();
        crate::network::weighted_min(&ee, &spec.alphas)
    };
    let mut inner = |state: &SurrogateState, at: &CovarianceSet, it: usize, mus: &mut Vec<f64>| {
        let engine = SurrogateEngine::new(e, state);
        let qos = QosConstraints::new(e, state, &spec.r_th);
        let mut p = at.clone();
        let mut mu = ratio(&engine.evaluate(&p.mats)?.values, &p.mats);
        mus.push(mu);
        let mut converged = false;
        for _ in 0..opts.max_inner_iters {
            let obj = WeightedSubtracted {
                rates: SurrogateRates {
                    engine: SurrogateEngine::new(e, state),
                },
                mu,
                alphas: &spec.alphas,
            };
            let res = maximize_minimum(
                &obj,
                &spec.alphas,
                qos.as_ref().map(|q| q as &dyn ConcaveComponents),
                &set,
                &p,
                &opts.stage(it),
            )?;
            let next = ratio(&engine.evaluate(&res.point.mats)?.values, &res.point.mats);
            if next < mu {
                converged = true;
                break;
            }
            p = res.point;
            mu = next;
            mus.push(mu);
            if res.objective <= opts.inner_tolerance(it) {
                converged = true;
                break;
            }
        }
        Ok(InnerResult { point: p, converged })
    };
    mm_loop(e, spec, start, opts, &mut vec![], &mut inner)
}

/// `max Σ_k R_k / Σ_k (η_k Tr P_k + P_c,k)` by Dinkelbach iterations on the
/// surrogate ratio.
pub fn solve_global_ee(
    e: &EffectiveNetwork,
    spec: &ProblemSpec,
    start: &CovarianceSet,
    opts: &MmOptions,
) -> Result<(CovarianceSet, OptimizeTrace)> {
    check_kind(spec, ProblemKind::GlobalEe)?;
    prepare(e, spec, start, opts)?;
    let set = feasible_set(e, start.mode);
    let start = if spec.has_qos() {
        qos_start(e, spec, start, opts)?
    } else {
        start.clone()
    };
    let ratio = |r: &[f64], p: &[RealMat]| -> f64 {
        r.iter().sum::<f64>() / consumed(e, p).iter().sum::<f64>()
    };
    let mut inner = |state: &SurrogateState, at: &CovarianceSet, it: usize, mus: &mut Vec<f64>| {
        let engine = SurrogateEngine::new(e, state);
        let qos = QosConstraints::new(e, state, &spec.r_th);
        let mut p = at.clone();
        let mut mu = ratio(&engine.evaluate(&p.mats)?.values, &p.mats);
        mus.push(mu);
        let mut converged = false;
        for _ in 0..opts.max_inner_iters {
            let obj = SumSubtracted {
                rates: SurrogateRates {
                    engine: SurrogateEngine::new(e, state),
                },
                mu,
            };
            let res = match &qos {
                None => maximize_concave(&obj, &set, &p, &opts.solver)?,
                Some(q) => maximize_minimum(&obj, &[1.0], Some(q), &set, &p, &opts.stage(it))?,
            };
            let next = ratio(&engine.evaluate(&res.point.mats)?.values, &res.point.mats);
            if next < mu {
                converged = true;
                break;
            }
            p = res.point;
            mu = next;
            mus.push(mu);
            if res.objective <= opts.inner_tolerance(it) {
                converged = true;
                break;
            }
        }
        Ok(InnerResult { point: p, converged })
    };
    mm_loop(e, spec, start, opts, &mut vec![], &mut inner)
}

/// Dispatches on `spec.kind` in the signaling set of `start.mode`.
pub fn solve(
    e: &EffectiveNetwork,
    spec: &ProblemSpec,
    start: &CovarianceSet,
    opts: &MmOptions,
) -> Result<(CovarianceSet, OptimizeTrace)> {
    match spec.kind {
        ProblemKind::RateRegion => solve_rate_region(e, spec, start, opts),
        ProblemKind::SumRate => solve_sum_rate(e, spec, start, opts),
        ProblemKind::EeRegion => solve_ee_region(e, spec, start, opts),
        ProblemKind::GlobalEe => solve_global_ee(e, spec, start, opts),
    }
}

/// The true network and the one an imbalance-unaware designer would assume.
#[derive(Debug, Clone)]
pub struct DesignNetworks {
    pub actual: EffectiveNetwork,
    pub ideal: EffectiveNetwork,
}

impl DesignNetworks {
    pub fn from_scenario(s: &NetworkScenario) -> Result<Self> {
        Ok(DesignNetworks {
            actual: build_effective(s)?,
            ideal: build_effective(&s.without_imbalance())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ModeOutcome {
    pub mode: DesignMode,
    pub point: CovarianceSet,
    pub trace: OptimizeTrace,
    /// Exact objective on the true network.
    pub objective: f64,
    pub report: RateReport,
}

fn outcome(
    nets: &DesignNetworks,
    spec: &ProblemSpec,
    mode: DesignMode,
    point: CovarianceSet,
    trace: OptimizeTrace,
) -> Result<ModeOutcome> {
    let report = rates(&nets.actual, &point)?;
    Ok(ModeOutcome {
        mode,
        objective: spec.objective(&report),
        point,
        trace,
        report,
    })
}

/// Runs one design mode. IGS solves PGS first and warm-starts from it.
pub fn run_mode(nets: &DesignNetworks, spec: &ProblemSpec, opts: &MmOptions) -> Result<ModeOutcome> {
    match spec.mode {
        DesignMode::Pgs | DesignMode::IdealPgs => {
            let net = if spec.mode == DesignMode::Pgs {
                &nets.actual
            } else {
                &nets.ideal
            };
            let start = default_start(net, spec.kind, SignalingMode::Pgs);
            let (point, trace) = solve(net, spec, &start, opts)?;
            outcome(nets, spec, spec.mode, point, trace)
        }
        DesignMode::Igs => {
            let pgs = run_mode(nets, &spec.with_mode(DesignMode::Pgs), opts)?;
            run_igs_from(nets, spec, &pgs, opts)
        }
    }
}

fn run_igs_from(
    nets: &DesignNetworks,
    spec: &ProblemSpec,
    pgs: &ModeOutcome,
    opts: &MmOptions,
) -> Result<ModeOutcome> {
    let spec = spec.with_mode(DesignMode::Igs);
    let start = pgs.point.with_mode(SignalingMode::Igs);
    let (point, trace) = solve(&nets.actual, &spec, &start, opts)?;
    outcome(nets, &spec, DesignMode::Igs, point, trace)
}

/// PGS, then IGS warm-started from it, then I-PGS, sharing the PGS solve.
pub fn run_all_modes(
    nets: &DesignNetworks,
    spec: &ProblemSpec,
    opts: &MmOptions,
) -> Result<Vec<ModeOutcome>> {
    let pgs = run_mode(nets, &spec.with_mode(DesignMode::Pgs), opts)?;
    let igs = run_igs_from(nets, spec, &pgs, opts)?;
    let ipgs = run_mode(nets, &spec.with_mode(DesignMode::IdealPgs), opts)?;
    Ok(vec![pgs, igs, ipgs])
}
