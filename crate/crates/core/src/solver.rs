//! Projected first-order solvers for the convex surrogate subproblems.
//!
//! Both solvers work on `K` real-composite covariances constrained to the IGS
//! set (`P ⪰ 0`, `Tr P ≤ budget`) or the PGS set (additionally
//! `P = [[A, -B], [B, A]]`). Steps are spectral (Barzilai-Borwein) trial steps
//! along the projection arc, accepted by an Armijo sufficient-increase test, so
//! the objective sequence never decreases.
//!
//! Stationarity is measured by the Frank-Wolfe gap
//! `max_{Y feasible} ⟨∇f, Y - P⟩`, which for a concave objective bounds the
//! distance to the optimal value.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{CovarianceSet, SignalingMode};
use crate::realdec::{
    complexify, frob_inner, project_capped_simplex, project_psd_trace, realify,
    symmetrize_in_place, RealMat,
};

/// Feasible set of the covariance variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSetSpec {
    pub mode: SignalingMode,
    pub budgets: Vec<f64>,
    pub n_tx: usize,
}

/// Tuning knobs for both solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Iteration cap per solve (per smoothing stage for max-min).
    pub max_iters: usize,
    /// Relative Frank-Wolfe gap tolerance.
    pub grad_tol: f64,
    /// Initial step; `None` estimates it from the curvature at the start point.
    pub step_init: Option<f64>,
    pub armijo_shrink: f64,
    pub armijo_c: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub tau_factor: f64,
    pub penalty_init: f64,
    /// Penalty weight ceiling; hitting it with violations left means infeasible.
    pub penalty_cap: f64,
    pub qos_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 200,
            grad_tol: 1e-7,
            step_init: None,
            armijo_shrink: 0.5,
            armijo_c: 1e-4,
            tau_start: 1.0,
            tau_end: 1e-4,
            tau_factor: 0.5,
            penalty_init: 10.0,
            penalty_cap: 1e7,
            qos_tol: 1e-7,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.grad_tol > 0.0
            && self.step_init.is_none_or(|s| s > 0.0)
            && self.armijo_shrink > 0.0
            && self.armijo_shrink < 1.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.tau_start >= self.tau_end
            && self.tau_end > 0.0
            && self.tau_factor > 0.0
            && self.tau_factor < 1.0
            && self.penalty_init > 0.0
            && self.penalty_cap >= self.penalty_init
            && self.qos_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver options: {self:?}")))
        }
    }

    /// Smoothing temperatures from `tau_start` down to `tau_end`.
    pub fn tau_schedule(&self) -> Vec<f64> {
        let mut out = vec![];
        let mut tau = self.tau_start;
        while tau > self.tau_end * (1.0 + 1e-12) {
            out.push(tau);
            tau *= self.tau_factor;
        }
        out.push(self.tau_end);
        out
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub point: CovarianceSet,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step (exact objective for
    /// [`maximize_concave`], best exact min so far for [`maximize_minimum`]).
    pub history: Vec<f64>,
}

/// A family of concave functions `f_1..f_n` of the `K` covariances.
pub trait ConcaveComponents {
    fn count(&self) -> usize;

    fn values(&self, p: &[RealMat]) -> Result<Vec<f64>>;

    /// Values, then the gradient of `Σ_j w_j f_j` with `w = weights(values)`.
    fn values_and_gradient(
        &self,
        p: &[RealMat],
        weights: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<RealMat>)>;
}

/// `½ (P + J P Jᵀ)` with `J = [[0, -I], [I, 0]]`: Frobenius projection onto
/// the proper-structure subspace.
pub fn proper_structure(m: &RealMat) -> RealMat {
    let n = m.nrows() / 2;
    let mut out = RealMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let a = 0.5 * (m[(i, j)] + m[(i + n, j + n)]);
            let b = 0.5 * (m[(i + n, j)] - m[(i, j + n)]);
            out[(i, j)] = a;
            out[(i + n, j + n)] = a;
            out[(i + n, j)] = b;
            out[(i, j + n)] = -b;
        }
    }
    out
}

/// `‖P - ½(P + J P Jᵀ)‖_F`.
pub fn structure_residual(m: &RealMat) -> f64 {
    (m - proper_structure(m)).norm()
}

fn project_proper(m: &RealMat, cap: f64) -> RealMat {
    let structured = proper_structure(m);
    let mut q = complexify(&structured).expect("even dimension");
    // Hermitize against rounding.
    let qa = q.adjoint();
    q = (&q + qa) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(q);
    // Eigenvalues of the real composite are those of A + jB, each twice.
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let projected = project_capped_simplex(&vals, 0.5 * cap.max(0.0));
    let mut scaled = eig.eigenvectors.clone();
    for (j, &v) in projected.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let q_proj = scaled * eig.eigenvectors.adjoint();
    let mut out = proper_structure(&realify(&q_proj));
    symmetrize_in_place(&mut out);
    out
}

fn project_one(m: &RealMat, cap: f64, mode: SignalingMode) -> RealMat {
    match mode {
        SignalingMode::Igs => project_psd_trace(m, cap),
        SignalingMode::Pgs => project_proper(m, cap),
    }
}

fn project_all(mats: &[RealMat], spec: &FeasibleSetSpec) -> Vec<RealMat> {
    mats.iter()
        .zip(&spec.budgets)
        .map(|(m, &b)| project_one(m, b, spec.mode))
        .collect()
}

/// Projects every covariance onto the feasible set of `spec`.
pub fn project_feasible(p: &CovarianceSet, spec: &FeasibleSetSpec) -> CovarianceSet {
    CovarianceSet {
        mode: spec.mode,
        mats: project_all(&p.mats, spec),
    }
}

/// Largest eigenvalue of `g`, restricted to proper structure in PGS mode.
fn support_value(g: &RealMat, mode: SignalingMode) -> f64 {
    let g = match mode {
        SignalingMode::Igs => g.clone(),
        SignalingMode::Pgs => proper_structure(g),
    };
    SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Frank-Wolfe gap of the gradient `g` at `x`.
fn fw_gap(x: &[RealMat], g: &[RealMat], spec: &FeasibleSetSpec) -> f64 {
    x.iter()
        .zip(g)
        .zip(&spec.budgets)
        .map(|((xk, gk), &b)| b * support_value(gk, spec.mode).max(0.0) - frob_inner(gk, xk))
        .sum::<f64>()
        .max(0.0)
}

fn inner(a: &[RealMat], b: &[RealMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| frob_inner(x, y)).sum()
}

fn diff(a: &[RealMat], b: &[RealMat]) -> Vec<RealMat> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// One smooth evaluation: scalar value, gradient, and whatever the caller
/// wants to keep (component values for best-iterate tracking).
struct SmoothEval<X> {
    value: f64,
    grad: Vec<RealMat>,
    extra: X,
}

struct AscentOutcome {
    point: Vec<RealMat>,
    value: f64,
    gap: f64,
    iterations: usize,
    converged: bool,
    step: f64,
}

/// Projected ascent with spectral steps and Armijo backtracking.
///
/// `observe` sees every accepted iterate, including the start.
fn projected_ascent<X>(
    eval: &dyn Fn(&[RealMat]) -> Result<SmoothEval<X>>,
    spec: &FeasibleSetSpec,
    start: Vec<RealMat>,
    step_init: Option<f64>,
    opts: &SolveOptions,
    observe: &mut dyn FnMut(&[RealMat], &SmoothEval<X>),
) -> Result<AscentOutcome> {
    let mut x = start;
    let mut cur = eval(&x)?;
    if !cur.value.is_finite() {
        return Err(Error::NonFinite("objective at start point"));
    }
    observe(&x, &cur);
    let mut step = match step_init.or(opts.step_init) {
        Some(s) => s,
        None => estimate_step(eval, &x, &cur.grad),
    };
    let step_max = 1e8;
    let step_min = 1e-14;
    let mut iterations = 0;
    let mut gap = fw_gap(&x, &cur.grad, spec);
    let mut converged = gap <= opts.grad_tol * (1.0 + cur.value.abs());
    while !converged && iterations < opts.max_iters {
        let mut trial_step = step;
        let accepted = loop {
            let trial: Vec<RealMat> = x
                .iter()
                .zip(&cur.grad)
                .map(|(xk, gk)| xk + gk * trial_step)
                .collect();
            let y = project_all(&trial, spec);
            let d = diff(&y, &x);
            let ascent = inner(&cur.grad, &d);
            if ascent <= 0.0 {
                // Projection arc gives no first-order increase at this scale.
                break None;
            }
            match eval(&y) {
                Ok(next) if next.value.is_finite() => {
                    if next.value >= cur.value + opts.armijo_c * ascent {
                        break Some((y, d, next));
                    }
                }
                Ok(_) => return Err(Error::NonFinite("objective")),
                // Leaving the domain counts as a failed trial.
                Err(Error::IllConditioned { .. }) | Err(Error::NotPositiveDefinite) => {}
                Err(e) => return Err(e),
            }
            trial_step *= opts.armijo_shrink;
            if trial_step < step_min {
                break None;
            }
        };
        let Some((y, d, next)) = accepted else {
            // No admissible step: stationary to working precision.
            converged = true;
            break;
        };
        iterations += 1;
        debug_assert!(next.value >= cur.value);
        let dg = diff(&next.grad, &cur.grad);
        let curvature = -inner(&d, &dg);
        step = if curvature > 0.0 {
            (inner(&d, &d) / curvature).clamp(step_min, step_max)
        } else {
            (trial_step * 4.0).min(step_max)
        };
        x = y;
        cur = next;
        observe(&x, &cur);
        gap = fw_gap(&x, &cur.grad, spec);
        converged = gap <= opts.grad_tol * (1.0 + cur.value.abs());
    }
    Ok(AscentOutcome {
        point: x,
        value: cur.value,
        gap,
        iterations,
        converged,
        step,
    })
}

/// Inverse curvature along the gradient from a few power iterations on the
/// Hessian action (gradient differences).
fn estimate_step<X>(
    eval: &dyn Fn(&[RealMat]) -> Result<SmoothEval<X>>,
    x: &[RealMat],
    g: &[RealMat],
) -> f64 {
    let scale = inner(x, x).sqrt().max(1e-3);
    let mut v: Vec<RealMat> = g.to_vec();
    let mut lipschitz = 0.0;
    for _ in 0..3 {
        let norm = inner(&v, &v).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let eps = 1e-4 * scale / norm;
        let probe: Vec<RealMat> = x.iter().zip(&v).map(|(a, b)| a + b * eps).collect();
        let Ok(at) = eval(&probe) else { break };
        let hv: Vec<RealMat> = diff(&at.grad, g).into_iter().map(|m| m / eps).collect();
        let hn = inner(&hv, &hv).sqrt();
        lipschitz = hn / norm;
        v = hv;
    }
    if lipschitz > 0.0 && lipschitz.is_finite() {
        (1.0 / lipschitz).clamp(1e-10, 1e8)
    } else {
        1.0
    }
}

fn check_start(spec: &FeasibleSetSpec, start: &CovarianceSet) -> Result<Vec<RealMat>> {
    if start.mats.len() != spec.budgets.len() {
        return Err(Error::dims("solver start", spec.budgets.len(), start.mats.len()));
    }
    let d = 2 * spec.n_tx;
    if let Some(m) = start.mats.iter().find(|m| m.shape() != (d, d)) {
        return Err(Error::dims("solver start", format!("{d}x{d}"), format!("{:?}", m.shape())));
    }
    Ok(project_all(&start.mats, spec))
}

/// Maximizes `Σ_j f_j` over the feasible set.
pub fn maximize_concave(
    obj: &dyn ConcaveComponents,
    spec: &FeasibleSetSpec,
    start: &CovarianceSet,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let x0 = check_start(spec, start)?;
    let n = obj.count();
    let eval = |p: &[RealMat]| -> Result<SmoothEval<()>> {
        let (vals, grad) = obj.values_and_gradient(p, &|_| vec![1.0; n])?;
        Ok(SmoothEval {
            value: vals.iter().sum(),
            grad,
            extra: (),
        })
    };
    let mut history = vec![];
    let out = projected_ascent(&eval, spec, x0, None, opts, &mut |_, e| history.push(e.value))?;
    Ok(SolveResult {
        point: CovarianceSet {
            mode: spec.mode,
            mats: out.point,
        },
        objective: out.value,
        kkt_residual: out.gap,
        iterations: out.iterations,
        converged: out.converged,
        history,
    })
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmin weights `π_k / α_k` and value `-τ log Σ exp(-g_k/τ)` for
/// `g_k = f_k / α_k`; users with zero weight are skipped.
fn softmin(values: &[f64], alphas: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let scaled: Vec<Option<f64>> = values
        .iter()
        .zip(alphas)
        .map(|(&v, &a)| (a > 0.0).then(|| v / a))
        .collect();
    let m = scaled.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = scaled
        .iter()
        .map(|g| g.map_or(0.0, |g| (-(g - m) / tau).exp()))
        .collect();
    let total: f64 = exps.iter().sum();
    let value = m - tau * total.ln();
    let weights = exps
        .iter()
        .zip(alphas)
        .map(|(&e, &a)| if a > 0.0 { e / total / a } else { 0.0 })
        .collect();
    (value, weights)
}

struct Exact {
    min: f64,
    violation: f64,
}

fn exact_min(values: &[f64], alphas: &[f64]) -> f64 {
    crate::network::weighted_min(values, alphas)
}

fn violation(qos: &[f64]) -> f64 {
    qos.iter().map(|&q| (-q).max(0.0)).fold(0.0, f64::max)
}

/// Maximizes `min_k f_k / α_k` subject to optional concave constraints
/// `g_j ≥ 0`.
///
/// The min is smoothed by a softmin whose temperature is annealed stage by
/// stage; constraints enter through a smoothed exact penalty whose weight is
/// doubled until they hold. The returned point is the best iterate by the
/// exact (unsmoothed) min among those meeting the constraints.
pub fn maximize_minimum(
    objs: &dyn ConcaveComponents,
    alphas: &[f64],
    qos: Option<&dyn ConcaveComponents>,
    spec: &FeasibleSetSpec,
    start: &CovarianceSet,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if alphas.len() != objs.count() {
        return Err(Error::dims("max-min weights", objs.count(), alphas.len()));
    }
    if !alphas.iter().any(|&a| a > 0.0) || alphas.iter().any(|&a| a < 0.0) {
        return Err(Error::Config("max-min weights must be non-negative with one positive".into()));
    }
    let mut x = check_start(spec, start)?;
    let mut best: Option<(Vec<RealMat>, Exact)> = None;
    let mut history = vec![];
    let mut iterations = 0;
    let mut last_gap;
    let mut converged;
    let mut penalty = opts.penalty_init;
    let mut step = opts.step_init;
    let schedule = opts.tau_schedule();
    let tol = opts.qos_tol;

    let better = |cand: &Exact, cur: &Option<(Vec<RealMat>, Exact)>| -> bool {
        match cur {
            None => true,
            Some((_, b)) => {
                let cand_ok = cand.violation <= tol;
                let best_ok = b.violation <= tol;
                match (cand_ok, best_ok) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => cand.min > b.min,
                    (false, false) => cand.violation < b.violation,
                }
            }
        }
    };

    let mut stage_index = 0;
    loop {
        let tau = schedule[stage_index.min(schedule.len() - 1)];
        let rho = penalty;
        let eval = |p: &[RealMat]| -> Result<SmoothEval<Exact>> {
            let mut smooth_weights = vec![];
            let (vals, mut grad) = objs.values_and_gradient(p, &|v| {
                let (_, w) = softmin(v, alphas, tau);
                w
            })?;
            let (smooth, w) = softmin(&vals, alphas, tau);
            smooth_weights.extend(w);
            let mut value = smooth;
            let mut viol = 0.0;
            if let Some(q) = qos {
                let (qv, qgrad) = q.values_and_gradient(p, &|qv| {
                    qv.iter().map(|&g| rho * logistic(-g / tau)).collect()
                })?;
                value -= rho * qv.iter().map(|&g| tau * softplus(-g / tau)).sum::<f64>();
                for (gk, qk) in grad.iter_mut().zip(&qgrad) {
                    *gk += qk;
                }
                viol = violation(&qv);
            }
            Ok(SmoothEval {
                value,
                grad,
                extra: Exact {
                    min: exact_min(&vals, alphas),
                    violation: viol,
                },
            })
        };
        let mut observe = |p: &[RealMat], e: &SmoothEval<Exact>| {
            let cand = Exact {
                min: e.extra.min,
                violation: e.extra.violation,
            };
            if better(&cand, &best) {
                best = Some((p.to_vec(), cand));
            }
            history.push(best.as_ref().map_or(f64::NAN, |b| b.1.min));
        };
        let out = projected_ascent(&eval, spec, x, step, opts, &mut observe)?;
        iterations += out.iterations;
        last_gap = out.gap;
        converged = out.converged;
        step = Some(out.step);
        x = out.point;

        if stage_index + 1 < schedule.len() {
            stage_index += 1;
            continue;
        }
        let feasible = best.as_ref().is_some_and(|b| b.1.violation <= tol);
        if qos.is_none() || feasible {
            break;
        }
        if penalty * 2.0 > opts.penalty_cap {
            let v = best.as_ref().map_or(f64::NAN, |b| b.1.violation);
            return Err(Error::QosInfeasible(format!(
                "constraint violation {v:.3e} remains at penalty weight {penalty:.3e}"
            )));
        }
        penalty *= 2.0;
    }

    let (point, exact) = best.expect("start point is always observed");
    Ok(SolveResult {
        point: CovarianceSet {
            mode: spec.mode,
            mats: point,
        },
        objective: exact.min,
        kkt_residual: last_gap,
        iterations,
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `f_j(P) = ½ log₂det(N_j + H_j P_j H_jᵀ) + ⟨L_j, P_j⟩`, one user each.
    struct Separable {
        noise: Vec<RealMat>,
        h: Vec<RealMat>,
        linear: Vec<RealMat>,
    }

    impl ConcaveComponents for Separable {
        fn count(&self) -> usize {
            self.h.len()
        }
        fn values(&self, p: &[RealMat]) -> Result<Vec<f64>> {
            Ok(self.values_and_gradient(p, &|v| vec![0.0; v.len()])?.0)
        }
        fn values_and_gradient(
            &self,
            p: &[RealMat],
            weights: &dyn Fn(&[f64]) -> Vec<f64>,
        ) -> Result<(Vec<f64>, Vec<RealMat>)> {
            let mut vals = vec![];
            let mut invs = vec![];
            for j in 0..self.h.len() {
                let m = &self.noise[j] + &self.h[j] * &p[j] * self.h[j].transpose();
                let f = crate::realdec::SpdFactor::new(&m)?;
                vals.push(0.5 * f.log2det() + frob_inner(&self.linear[j], &p[j]));
                invs.push(f.inverse());
            }
            let w = weights(&vals);
            let grads = (0..self.h.len())
                .map(|j| {
                    let g = self.h[j].transpose() * &invs[j] * &self.h[j] * (0.5 / std::f64::consts::LN_2)
                        + &self.linear[j];
                    g * w[j]
                })
                .collect();
            Ok((vals, grads))
        }
    }

    /// Water-filling over the eigenmodes of `Hᵀ N⁻¹ H`: `½ Σ log₂(1 + λ_i p_i)`.
    fn water_filling(noise: &RealMat, h: &RealMat, budget: f64) -> f64 {
        let g = h.transpose() * noise.clone().try_inverse().unwrap() * h;
        let lams: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().filter(|&l| l > 1e-14).collect();
        // Bisection on the water level.
        let mut lo = 0.0;
        let mut hi = budget + lams.iter().map(|l| 1.0 / l).fold(0.0, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let used: f64 = lams.iter().map(|l| (mid - 1.0 / l).max(0.0)).sum();
            if used > budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let offset = 0.5 * crate::realdec::log2det_spd(noise).unwrap();
        offset + lams.iter().map(|l| 0.5 * (1.0 + l * (lo - 1.0 / l).max(0.0)).log2()).sum::<f64>()
    }

    fn random_problem(rng: &mut ChaCha8Rng, users: usize, n: usize) -> Separable {
        Separable {
            noise: (0..users)
                .map(|_| {
                    let g = RealMat::from_fn(2 * n, 2 * n, |_, _| rng.random_range(-0.5..0.5));
                    &g * g.transpose() + RealMat::identity(2 * n, 2 * n) * 0.5
                })
                .collect(),
            h: (0..users).map(|_| RealMat::from_fn(2 * n, 2 * n, |_, _| rng.random_range(-1.0..1.0))).collect(),
            linear: vec![RealMat::zeros(2 * n, 2 * n); users],
        }
    }

    fn spec(mode: SignalingMode, budgets: Vec<f64>, n: usize) -> FeasibleSetSpec {
        FeasibleSetSpec { mode, budgets, n_tx: n }
    }

    fn tight() -> SolveOptions {
        SolveOptions { max_iters: 5000, grad_tol: 1e-10, ..Default::default() }
    }

    #[test]
    fn igs_feasible_input_is_unchanged() {
        let p = CovarianceSet { mode: SignalingMode::Igs, mats: vec![RealMat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])] };
        let out = project_feasible(&p, &spec(SignalingMode::Igs, vec![2.0], 1));
        assert!((&out.mats[0] - &p.mats[0]).amax() < 1e-12);
    }

    #[test]
    fn pgs_projection_kills_single_antenna_skew() {
        let p = CovarianceSet { mode: SignalingMode::Igs, mats: vec![RealMat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])] };
        let out = project_feasible(&p, &spec(SignalingMode::Pgs, vec![10.0], 1));
        assert!((&out.mats[0] - RealMat::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn pgs_projection_is_structured_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let m = RealMat::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0));
            let sym = (&m + m.transpose()) * 0.5;
            let cap = rng.random_range(0.1..3.0);
            let s = spec(SignalingMode::Pgs, vec![cap], 2);
            let p = project_feasible(&CovarianceSet { mode: SignalingMode::Pgs, mats: vec![sym.clone()] }, &s);
            let out = &p.mats[0];
            assert!(structure_residual(out) <= 1e-10);
            let rt = realify(&complexify(out).unwrap());
            assert!((&rt - out).amax() <= 1e-10);
            assert!(out.trace() <= cap + 1e-10);
            assert!(crate::realdec::min_eigenvalue(out) >= -1e-10);
            let again = project_feasible(&p, &s);
            assert!((&again.mats[0] - out).amax() <= 1e-9);
            // Nearest structured feasible point is also at most as far as the IGS projection target set allows.
            let igs = project_psd_trace(&sym, cap);
            assert!((out - &sym).norm() >= (&igs - &sym).norm() - 1e-10);
        }
    }

    #[test]
    fn single_user_matches_water_filling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..5 {
            let prob = random_problem(&mut rng, 1, 2);
            let budget = [0.5, 3.0, 30.0, 300.0, 1000.0][trial];
            let s = spec(SignalingMode::Igs, vec![budget], 2);
            let start = CovarianceSet::uniform(SignalingMode::Igs, 2, &[budget], 1.0);
            let res = maximize_concave(&prob, &s, &start, &tight()).unwrap();
            let oracle = water_filling(&prob.noise[0], &prob.h[0], budget);
            assert!(((res.objective - oracle) / oracle).abs() <= 1e-6, "budget {budget}: {} vs {oracle}", res.objective);
            assert!(res.history.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn stationary_start_is_returned() {
        let prob = Separable {
            noise: vec![RealMat::identity(2, 2)],
            h: vec![RealMat::zeros(2, 2)],
            linear: vec![RealMat::zeros(2, 2)],
        };
        let start = CovarianceSet::uniform(SignalingMode::Igs, 1, &[1.0], 0.5);
        let res = maximize_concave(&prob, &spec(SignalingMode::Igs, vec![1.0], 1), &start, &tight()).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
        assert!((&res.point.mats[0] - &start.mats[0]).amax() < 1e-15);
    }

    #[test]
    fn negative_trace_objective_goes_to_zero() {
        let prob = Separable {
            noise: vec![RealMat::identity(4, 4); 2],
            h: vec![RealMat::zeros(4, 4); 2],
            linear: vec![-RealMat::identity(4, 4); 2],
        };
        let start = CovarianceSet::uniform(SignalingMode::Igs, 2, &[5.0, 5.0], 1.0);
        let res = maximize_concave(&prob, &spec(SignalingMode::Igs, vec![5.0, 5.0], 2), &start, &tight()).unwrap();
        assert!(res.point.mats.iter().all(|m| m.amax() < 1e-9));
    }

    #[test]
    fn identical_components_match_concave_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = random_problem(&mut rng, 1, 1);
        // Same function twice, both depending on user 0 only via a shared block.
        struct Twice<'a>(&'a Separable);
        impl ConcaveComponents for Twice<'_> {
            fn count(&self) -> usize {
                2
            }
            fn values(&self, p: &[RealMat]) -> Result<Vec<f64>> {
                let v = self.0.values(p)?;
                Ok(vec![v[0], v[0]])
            }
            fn values_and_gradient(&self, p: &[RealMat], weights: &dyn Fn(&[f64]) -> Vec<f64>) -> Result<(Vec<f64>, Vec<RealMat>)> {
                let (v, g) = self.0.values_and_gradient(p, &|_| vec![1.0])?;
                let vals = vec![v[0], v[0]];
                let w = weights(&vals);
                Ok((vals, vec![&g[0] * (w[0] + w[1])]))
            }
        }
        let s = spec(SignalingMode::Igs, vec![4.0], 1);
        let start = CovarianceSet::uniform(SignalingMode::Igs, 1, &[4.0], 0.3);
        let mm = maximize_minimum(&Twice(&one), &[0.5, 0.5], None, &s, &start, &tight()).unwrap();
        let cc = maximize_concave(&one, &s, &start, &tight()).unwrap();
        assert!((mm.objective * 0.5 - cc.objective).abs() <= 1e-6);
    }

    #[test]
    fn symmetric_users_are_balanced_and_separable_maxmin_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = random_problem(&mut rng, 1, 1);
        let sym = Separable {
            noise: vec![base.noise[0].clone(), base.noise[0].clone()],
            h: vec![base.h[0].clone(), base.h[0].clone()],
            linear: vec![RealMat::zeros(2, 2); 2],
        };
        let s = spec(SignalingMode::Igs, vec![3.0, 3.0], 1);
        let start = CovarianceSet::uniform(SignalingMode::Igs, 1, &[3.0, 3.0], 1.0);
        let res = maximize_minimum(&sym, &[0.5, 0.5], None, &s, &start, &tight()).unwrap();
        let v = sym.values(&res.point.mats).unwrap();
        assert!((v[0] - v[1]).abs() <= 1e-5);

        let two = random_problem(&mut rng, 2, 1);
        let s = spec(SignalingMode::Igs, vec![2.0, 5.0], 1);
        let start = CovarianceSet::uniform(SignalingMode::Igs, 1, &[2.0, 5.0], 1.0);
        let res = maximize_minimum(&two, &[0.5, 0.5], None, &s, &start, &tight()).unwrap();
        let oracle = water_filling(&two.noise[0], &two.h[0], 2.0).min(water_filling(&two.noise[1], &two.h[1], 5.0));
        let achieved = 0.5 * res.objective;
        assert!(((achieved - oracle) / oracle).abs() <= 1e-6, "{achieved} vs {oracle}");
    }

    #[test]
    fn qos_penalty_enforces_constraints_or_reports_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prob = random_problem(&mut rng, 2, 1);
        let caps = [1.0, 1.0];
        let s = spec(SignalingMode::Igs, caps.to_vec(), 1);
        let start = CovarianceSet::uniform(SignalingMode::Igs, 1, &caps, 1.0);
        let wf1 = water_filling(&prob.noise[1], &prob.h[1], 1.0);
        // Maximize user 0 only, but require user 1 to reach half its capacity.
        struct Shifted<'a>(&'a Separable, f64);
        impl ConcaveComponents for Shifted<'_> {
            fn count(&self) -> usize {
                1
            }
            fn values(&self, p: &[RealMat]) -> Result<Vec<f64>> {
                Ok(vec![self.0.values(p)?[1] - self.1])
            }
            fn values_and_gradient(&self, p: &[RealMat], weights: &dyn Fn(&[f64]) -> Vec<f64>) -> Result<(Vec<f64>, Vec<RealMat>)> {
                let (v, g) = self.0.values_and_gradient(p, &|_| vec![0.0, 1.0])?;
                let vals = vec![v[1] - self.1];
                let w = weights(&vals)[0];
                Ok((vals, g.into_iter().map(|m| m * w).collect()))
            }
        }
        let qos = Shifted(&prob, 0.5 * wf1);
        let res = maximize_minimum(&prob, &[1.0, 0.0], Some(&qos), &s, &start, &tight()).unwrap();
        assert!(qos.values(&res.point.mats).unwrap()[0] >= -1e-7);

        let impossible = Shifted(&prob, 2.0 * wf1);
        let err = maximize_minimum(&prob, &[1.0, 0.0], Some(&impossible), &s, &start, &SolveOptions { penalty_cap: 1e3, ..tight() });
        assert!(matches!(err, Err(Error::QosInfeasible(_))));
    }

    #[test]
    fn pgs_solution_is_structured_and_igs_restart_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let prob = random_problem(&mut rng, 2, 2);
        let budgets = vec![2.0, 2.0];
        let start = CovarianceSet::uniform(SignalingMode::Pgs, 2, &budgets, 1.0);
        let pgs = maximize_concave(&prob, &spec(SignalingMode::Pgs, budgets.clone(), 2), &start, &tight()).unwrap();
        assert!(pgs.point.mats.iter().all(|m| structure_residual(m) <= 1e-8));
        let igs = maximize_concave(&prob, &spec(SignalingMode::Igs, budgets.clone(), 2), &pgs.point.with_mode(SignalingMode::Igs), &tight()).unwrap();
        assert!(igs.objective >= pgs.objective - 1e-9);
        for r in [&pgs, &igs] {
            let again = project_feasible(&r.point, &spec(r.point.mode, budgets.clone(), 2));
            let d: f64 = again.mats.iter().zip(&r.point.mats).map(|(a, b)| (a - b).norm()).sum();
            assert!(d <= 1e-9);
        }
    }

    #[test]
    fn tau_schedule_halves_down_to_floor() {
        let s = SolveOptions::default().tau_schedule();
        assert_eq!(s[0], 1.0);
        assert_eq!(*s.last().unwrap(), 1e-4);
        assert_eq!(s.len(), 15);
    }
}
