//! Fast self-check of the core invariants, run by `igs-mimo verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::{build_effective, draw_scenario, rates, CovarianceSet, EffectiveNetwork, ScenarioConfig, SignalingMode};
use crate::problems::{run_all_modes, DesignMode, DesignNetworks, MmOptions, ProblemKind, ProblemSpec};
use crate::realdec::{frob_inner, RealMat};
use crate::solver::{project_feasible, proper_structure, structure_residual, FeasibleSetSpec};
use crate::surrogate::{build_surrogate, logdet_majorizer, SurrogateEngine};

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Perturbs the analytic surrogate gradient; the gradient check must then fail.
    pub gradient_fault: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> RealMat {
    let g = RealMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + RealMat::identity(n, n) * 0.1
}

/// Random feasible covariances, each using a random share of its budget.
pub fn random_feasible(rng: &mut ChaCha8Rng, e: &EffectiveNetwork, mode: SignalingMode) -> CovarianceSet {
    let d = e.tx_dim();
    let mats = e
        .power_budget
        .iter()
        .map(|&b| {
            let g = RealMat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let mut m = &g * g.transpose();
            if mode == SignalingMode::Pgs {
                m = proper_structure(&m);
            }
            let share = rng.random_range(0.0..1.0);
            let scale = share * b / m.trace().max(1e-300);
            m * scale
        })
        .collect();
    CovarianceSet { mode, mats }
}

fn random_network(rng: &mut ChaCha8Rng) -> Result<EffectiveNetwork> {
    let cfg = ScenarioConfig {
        users: rng.random_range(2..4),
        n_tx: rng.random_range(1..3),
        n_rx: rng.random_range(1..3),
        snr_db: rng.random_range(0.0..20.0),
        ..Default::default()
    };
    build_effective(&draw_scenario(&cfg, rng.random())?)
}

fn check_majorizer(rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let mut worst_gap: f64 = 0.0;
    let mut worst_touch: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..6);
        let q_ref = random_spd(rng, n);
        let q = random_spd(rng, n);
        let bound = logdet_majorizer(&q_ref)?;
        let exact = crate::realdec::log2det_spd(&q)?;
        worst_gap = worst_gap.max(exact - bound.value_at(&q));
        worst_touch = worst_touch.max((bound.value_at(&q_ref) - crate::realdec::log2det_spd(&q_ref)?).abs());
    }
    Ok((worst_gap, worst_touch))
}

fn check_surrogate_bounds(rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let mut touch: f64 = 0.0;
    let mut excess: f64 = f64::NEG_INFINITY;
    for _ in 0..10 {
        let e = random_network(rng)?;
        let at = random_feasible(rng, &e, SignalingMode::Igs);
        let state = build_surrogate(&e, &at)?;
        let engine = SurrogateEngine::new(&e, &state);
        let exact = rates(&e, &at)?.rates;
        let sur = engine.evaluate(&at.mats)?.values;
        touch = exact.iter().zip(&sur).map(|(a, b)| (a - b).abs()).fold(touch, f64::max);
        for _ in 0..20 {
            let p = random_feasible(rng, &e, SignalingMode::Igs);
            let exact = rates(&e, &p)?.rates;
            let sur = engine.evaluate(&p.mats)?.values;
            excess = sur.iter().zip(&exact).map(|(s, r)| s - r).fold(excess, f64::max);
        }
    }
    Ok((touch, excess))
}

fn check_gradient(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let e = random_network(rng)?;
        let at = random_feasible(rng, &e, SignalingMode::Igs);
        let state = build_surrogate(&e, &at)?;
        let engine = SurrogateEngine::new(&e, &state);
        let p = random_feasible(rng, &e, SignalingMode::Igs);
        let weights: Vec<f64> = (0..e.users).map(|_| rng.random_range(0.1..1.0)).collect();
        let point = engine.evaluate(&p.mats)?;
        let mut grad = engine.weighted_gradient(&point, &weights);
        if fault {
            for g in &mut grad {
                *g *= 1.01;
            }
        }
        let f = |q: &[RealMat]| -> Result<f64> {
            Ok(engine.evaluate(q)?.values.iter().zip(&weights).map(|(v, w)| v * w).sum())
        };
        for _ in 0..3 {
            let dirs: Vec<RealMat> = p
                .mats
                .iter()
                .map(|m| {
                    let g = RealMat::from_fn(m.nrows(), m.ncols(), |_, _| rng.random_range(-1.0..1.0));
                    (&g + g.transpose()) * 0.5
                })
                .collect();
            let h = 1e-5;
            let plus: Vec<RealMat> = p.mats.iter().zip(&dirs).map(|(m, d)| m + d * h).collect();
            let minus: Vec<RealMat> = p.mats.iter().zip(&dirs).map(|(m, d)| m - d * h).collect();
            let fd = (f(&plus)? - f(&minus)?) / (2.0 * h);
            let analytic: f64 = grad.iter().zip(&dirs).map(|(g, d)| frob_inner(g, d)).sum();
            worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-3));
        }
    }
    Ok(worst)
}

fn check_projection(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let mut moved: f64 = 0.0;
    let mut structure: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..4);
        let users = rng.random_range(1..4);
        let budgets: Vec<f64> = (0..users).map(|_| rng.random_range(0.1..10.0)).collect();
        let mats: Vec<RealMat> = (0..users)
            .map(|_| {
                let g = RealMat::from_fn(2 * n, 2 * n, |_, _| rng.random_range(-3.0..3.0));
                (&g + g.transpose()) * 0.5
            })
            .collect();
        for mode in [SignalingMode::Igs, SignalingMode::Pgs] {
            let spec = FeasibleSetSpec { mode, budgets: budgets.clone(), n_tx: n };
            let once = project_feasible(&CovarianceSet { mode, mats: mats.clone() }, &spec);
            let twice = project_feasible(&once, &spec);
            moved = once.mats.iter().zip(&twice.mats).map(|(a, b)| (a - b).norm()).fold(moved, f64::max);
            if mode == SignalingMode::Pgs {
                structure = once.mats.iter().map(structure_residual).fold(structure, f64::max);
            }
        }
    }
    (moved, structure)
}

fn check_mm(seed: u64) -> Result<f64> {
    let cfg = ScenarioConfig { users: 2, n_tx: 2, n_rx: 2, ..Default::default() };
    let nets = DesignNetworks::from_scenario(&draw_scenario(&cfg, seed)?)?;
    let opts = MmOptions { max_mm_iters: 15, ..Default::default() };
    let mut worst: f64 = 0.0;
    for kind in [ProblemKind::RateRegion, ProblemKind::GlobalEe] {
        for out in run_all_modes(&nets, &ProblemSpec::fairness(kind, 2, DesignMode::Igs), &opts)? {
            for w in out.trace.objective.windows(2) {
                worst = worst.max((w[0] - w[1]) / w[0].abs().max(1.0));
            }
            for w in out.trace.mu.windows(2) {
                worst = worst.max(w[0] - w[1]);
            }
        }
    }
    Ok(worst)
}

fn verdict(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
    }
}

/// Runs every check; each gets its own seeded stream.
pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    let rng = |salt: u64| ChaCha8Rng::seed_from_u64(opts.seed ^ salt);
    vec![
        verdict(
            "log-det majorizer",
            check_majorizer(&mut rng(1)).map(|(gap, touch)| {
                (gap <= 1e-10 && touch <= 1e-10, format!("max violation {gap:.2e}, touch error {touch:.2e}"))
            }),
        ),
        verdict(
            "surrogate touching and minorization",
            check_surrogate_bounds(&mut rng(2)).map(|(touch, excess)| {
                (touch <= 1e-10 && excess <= 1e-9, format!("touch error {touch:.2e}, max excess {excess:.2e}"))
            }),
        ),
        verdict(
            "surrogate gradient vs finite differences",
            check_gradient(&mut rng(3), opts.gradient_fault)
                .map(|worst| (worst <= 1e-4, format!("max relative error {worst:.2e}"))),
        ),
        verdict("projection idempotence", {
            let (moved, structure) = check_projection(&mut rng(4));
            Ok((moved <= 1e-9 && structure <= 1e-10, format!("re-projection moved {moved:.2e}, structure residual {structure:.2e}")))
        }),
        verdict(
            "MM monotonicity",
            check_mm(opts.seed).map(|worst| (worst <= 1e-8, format!("largest decrease {worst:.2e}"))),
        ),
    ]
}
