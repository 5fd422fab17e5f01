//! Nonlinear characterization of the bounded-rationality price map: orbit
//! sampling with transient discard, bifurcation sweeps over the learning
//! rates, strange-attractor capture, and maximal Lyapunov exponents.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{
    br_jacobian_for_branches, strict_br_step, BrOptions, DynamicsError, LearningRates,
};
use crate::market::{CapacitySpec, DemandModel};
use crate::scalar::Real;
use crate::type1::{duopoly_ne, CaseLabel, Type1Error};

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("bounded-rationality sweeps cover cases 1-3; this market classifies as case 4")]
    NotApplicable,
    #[error("orbit diverged after {steps} steps")]
    Diverged { steps: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Type1(#[from] Type1Error),
}

/// Which learning rate a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Gamma1,
    Gamma2,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Gamma1 => "gamma1",
            SweepParameter::Gamma2 => "gamma2",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSpec<T> {
    pub parameter: SweepParameter,
    pub lo: T,
    pub hi: T,
    pub steps: usize,
    /// Iterations discarded before sampling.
    pub transient: usize,
    /// Post-transient iterations recorded per parameter value.
    pub samples: usize,
    pub p0: [T; 2],
}

impl<T: Real> SweepSpec<T> {
    pub fn new(parameter: SweepParameter, lo: T, hi: T, steps: usize, p0: [T; 2]) -> Self {
        assert!(lo < hi, "sweep range must be increasing");
        assert!(steps >= 2, "sweep needs at least two points");
        Self {
            parameter,
            lo,
            hi,
            steps,
            transient: 1000,
            samples: 200,
            p0,
        }
    }

    fn value_at(&self, k: usize) -> T {
        let frac = T::of(k as f64) / T::of((self.steps - 1) as f64);
        self.lo + (self.hi - self.lo) * frac
    }

    fn rates_at(&self, fixed: &LearningRates<T>, k: usize) -> LearningRates<T> {
        let v = self.value_at(k);
        let gamma = match self.parameter {
            SweepParameter::Gamma1 => [v, fixed.gamma(1)],
            SweepParameter::Gamma2 => [fixed.gamma(0), v],
        };
        LearningRates::new(gamma).expect("sweep values stay positive")
    }
}

/// Post-transient behavior at one parameter value.
#[derive(Debug, Clone)]
pub struct SweepPoint<T> {
    pub value: T,
    /// Sampled post-transient price pairs.
    pub samples: Vec<[T; 2]>,
    /// Maximal Lyapunov exponent, when requested and the orbit stayed
    /// finite.
    pub lyapunov: Option<T>,
    /// Detected cycle length; `None` means aperiodic (or diverged).
    pub period: Option<usize>,
    pub diverged: bool,
}

impl<T: Real> SweepPoint<T> {
    /// Width of the sampled first-player price set.
    pub fn p1_spread(&self) -> T {
        let mut lo = T::infinity();
        let mut hi = -T::infinity();
        for s in &self.samples {
            lo = lo.min(s[0]);
            hi = hi.max(s[0]);
        }
        hi - lo
    }
}

#[derive(Debug, Clone)]
pub struct DynamicsReport<T> {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint<T>>,
}

fn point_seed(master_seed: u64, index: usize) -> u64 {
    master_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn require_sweepable<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
) -> Result<(), ChaosError> {
    if duopoly_ne(model, caps)?.case_label == CaseLabel::Case4 {
        return Err(ChaosError::NotApplicable);
    }
    Ok(())
}

/// Group sorted sample values into clusters separated by more than the
/// spread tolerance; a clean k-cycle shows up as k tight clusters.
pub fn detect_period<T: Real>(
    values: &mut Vec<T>,
    spread_tol: T,
    max_period: usize,
) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut clusters = 1usize;
    let mut cluster_start = values[0];
    let mut prev = values[0];
    for &v in values.iter().skip(1) {
        if v - prev > spread_tol {
            clusters += 1;
            cluster_start = v;
        } else if v - cluster_start > spread_tol {
            // closely spaced values drifting wider than one cluster
            return None;
        }
        prev = v;
    }
    (clusters <= max_period).then_some(clusters)
}

struct OrbitCursor<'m, T> {
    model: &'m DemandModel<T>,
    caps: &'m CapacitySpec<T>,
    rates: LearningRates<T>,
    opts: BrOptions<T>,
    rng: ChaCha8Rng,
    p: [T; 2],
}

impl<T: Real> OrbitCursor<'_, T> {
    fn advance(&mut self) -> Result<[crate::dynamics::Branch; 2], DynamicsError> {
        let (next, rules) = strict_br_step(
            self.model,
            self.caps,
            &self.rates,
            self.p,
            &self.opts,
            &mut self.rng,
        )?;
        self.p = next;
        Ok(rules)
    }
}

fn run_point<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: LearningRates<T>,
    p0: [T; 2],
    transient: usize,
    samples: usize,
    lyapunov_steps: usize,
    seed: u64,
) -> SweepPoint<T> {
    let mut cursor = OrbitCursor {
        model,
        caps,
        rates,
        opts: BrOptions::default(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        p: p0,
    };
    let value = T::zero(); // filled by the caller
    let mut point = SweepPoint {
        value,
        samples: Vec::with_capacity(samples),
        lyapunov: None,
        period: None,
        diverged: false,
    };
    for _ in 0..transient {
        if cursor.advance().is_err() {
            point.diverged = true;
            return point;
        }
    }
    for _ in 0..samples {
        if cursor.advance().is_err() {
            point.diverged = true;
            return point;
        }
        point.samples.push(cursor.p);
    }
    let mut p1: Vec<T> = point.samples.iter().map(|s| s[0]).collect();
    point.period = detect_period(&mut p1, T::of(1e-6), 64);

    if lyapunov_steps > 0 {
        // tangent-vector norm growth with per-step renormalization; the
        // Jacobian is always the branch the orbit actually took
        let mut v = [T::one(), T::zero()];
        let mut acc = T::zero();
        for _ in 0..lyapunov_steps {
            let at = cursor.p;
            let rules = match cursor.advance() {
                Ok(r) => r,
                Err(_) => {
                    point.diverged = true;
                    return point;
                }
            };
            let jac = br_jacobian_for_branches(model, &cursor.rates, at, rules);
            let w = [
                jac[(0, 0)] * v[0] + jac[(0, 1)] * v[1],
                jac[(1, 0)] * v[0] + jac[(1, 1)] * v[1],
            ];
            let norm = w[0].hypot(w[1]);
            if norm <= T::zero() || !norm.is_finite() {
                point.diverged = true;
                return point;
            }
            acc = acc + norm.ln();
            v = [w[0] / norm, w[1] / norm];
        }
        point.lyapunov = Some(acc / T::of(lyapunov_steps as f64));
    }
    point
}

/// Bifurcation point cloud over a learning-rate sweep.
pub fn bifurcation_sweep<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    spec: &SweepSpec<T>,
    fixed_rates: &LearningRates<T>,
    master_seed: u64,
) -> Result<DynamicsReport<T>, ChaosError> {
    sweep_with_lyapunov(model, caps, spec, fixed_rates, master_seed, 0)
}

/// Bifurcation sweep that also estimates the maximal Lyapunov exponent at
/// each parameter value (`lyapunov_steps = 0` skips the estimate).
pub fn sweep_with_lyapunov<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    spec: &SweepSpec<T>,
    fixed_rates: &LearningRates<T>,
    master_seed: u64,
    lyapunov_steps: usize,
) -> Result<DynamicsReport<T>, ChaosError> {
    require_sweepable(model, caps)?;
    let mut points = Vec::with_capacity(spec.steps);
    for k in 0..spec.steps {
        let rates = spec.rates_at(fixed_rates, k);
        let mut point = run_point(
            model,
            caps,
            rates,
            spec.p0,
            spec.transient,
            spec.samples,
            lyapunov_steps,
            point_seed(master_seed, k),
        );
        point.value = spec.value_at(k);
        points.push(point);
    }
    Ok(DynamicsReport {
        parameter: spec.parameter,
        points,
    })
}

/// Maximal Lyapunov exponent of a single orbit.
pub fn lyapunov_max<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: &LearningRates<T>,
    p0: [T; 2],
    n_iter: usize,
    transient: usize,
    seed: u64,
) -> Result<T, ChaosError> {
    require_sweepable(model, caps)?;
    let point = run_point(model, caps, *rates, p0, transient, 0, n_iter, seed);
    if point.diverged {
        return Err(ChaosError::Diverged { steps: n_iter });
    }
    Ok(point.lyapunov.expect("lyapunov requested"))
}

/// Post-transient point cloud of the orbit.
pub fn attractor_capture<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: &LearningRates<T>,
    p0: [T; 2],
    n_points: usize,
    transient: usize,
    seed: u64,
) -> Result<Vec<[T; 2]>, ChaosError> {
    require_sweepable(model, caps)?;
    let point = run_point(model, caps, *rates, p0, transient, n_points, 0, seed);
    if point.diverged {
        return Err(ChaosError::Diverged {
            steps: point.samples.len(),
        });
    }
    Ok(point.samples)
}

/// First sweep value whose sampled first-player prices spread wider than
/// `threshold` — the period-doubling onset under spread analysis.
pub fn first_spread_exceeding<T: Real>(report: &DynamicsReport<T>, threshold: T) -> Option<T> {
    report
        .points
        .iter()
        .find(|pt| !pt.diverged && pt.p1_spread() > threshold)
        .map(|pt| pt.value)
}

/// First sweep value whose Lyapunov estimate reaches `floor` — with a
/// floor of zero this is the chaos onset, with a small negative floor it
/// locates the first zero touch at a flip point.
pub fn first_lyapunov_reaching<T: Real>(report: &DynamicsReport<T>, floor: T) -> Option<T> {
    report
        .points
        .iter()
        .find(|pt| pt.lyapunov.map(|l| l >= floor).unwrap_or(false))
        .map(|pt| pt.value)
}

/// `param,value_index,p1_sample` rows, one per retained sample.
pub fn bifurcation_csv<T: Real>(report: &DynamicsReport<T>) -> String {
    let mut out = String::from("param,value_index,p1_sample\n");
    for pt in &report.points {
        for (idx, s) in pt.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", pt.value, idx, s[0]);
        }
    }
    out
}

/// `param,lambda_max,diverged` rows, one per sweep point.
pub fn lyapunov_csv<T: Real>(report: &DynamicsReport<T>) -> String {
    let mut out = String::from("param,lambda_max,diverged\n");
    for pt in &report.points {
        match (pt.diverged, pt.lyapunov) {
            (false, Some(l)) => {
                let _ = writeln!(out, "{},{},false", pt.value, l);
            }
            (true, _) => {
                let _ = writeln!(out, "{},,true", pt.value);
            }
            (false, None) => {
                let _ = writeln!(out, "{},,false", pt.value);
            }
        }
    }
    out
}

/// `p1,p2` rows of an attractor cloud.
pub fn attractor_csv<T: Real>(points: &[[T; 2]]) -> String {
    let mut out = String::from("p1,p2\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p[0], p[1]);
    }
    out
}
