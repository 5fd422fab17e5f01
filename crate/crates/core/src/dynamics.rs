//! Distributed price-adjustment dynamics for the duopoly type-I game:
//! the StrictBEST best-response iteration, the StrictBR bounded-rationality
//! iteration, and the analytic stability machinery around their fixed
//! points.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{eigenvalues_2x2, SquareMatrix};
use crate::market::{CapacitySpec, DemandModel};
use crate::scalar::Real;
use crate::type1::{duopoly_ne, oligopoly_ne_search, CaseLabel, Type1Error, BOUNDARY_TOL};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("orbit left the finite range: |p[{player}]| = {value}")]
    NonFinite { player: usize, value: f64 },
    #[error("both update branches coincide at the point; the Jacobian is undefined there")]
    BoundaryPoint,
    #[error("learning rate {index} must be positive, got {value}")]
    InvalidRate { index: usize, value: f64 },
    #[error(transparent)]
    Type1(#[from] Type1Error),
}

/// Per-player gradient step sizes of the bounded-rationality rule.
#[derive(Debug, Clone, Copy)]
pub struct LearningRates<T> {
    gamma: [T; 2],
}

impl<T: Real> LearningRates<T> {
    pub fn new(gamma: [T; 2]) -> Result<Self, DynamicsError> {
        for (index, &g) in gamma.iter().enumerate() {
            if !(g > T::zero()) {
                return Err(DynamicsError::InvalidRate {
                    index,
                    value: g.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self, i: usize) -> T {
        self.gamma[i]
    }
}

/// Which update rule produced a player's next price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Unconstrained best response `(a + c p_j) / (2 b)`.
    BestResponse,
    /// Capacity-binding rule `(a - q^a + c p_j) / b`.
    CapacityBinding,
    /// Bounded-rationality gradient step.
    Gradient,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::BestResponse => "best_response",
            Branch::CapacityBinding => "capacity_binding",
            Branch::Gradient => "gradient",
        }
    }
}

/// An iterated price trajectory with per-slot rule tags.
#[derive(Debug, Clone)]
pub struct OrbitRecord<T> {
    /// Prices by slot; index 0 is the initial point.
    pub trajectory: Vec<[T; 2]>,
    /// `rules[t]` are the branches that produced `trajectory[t + 1]`.
    pub rules: Vec<[Branch; 2]>,
    pub converged: bool,
    /// Set when the overflow guard tripped.
    pub diverged: bool,
    pub limit: Option<[T; 2]>,
    /// Max distance from the limit to the static equilibrium, when both
    /// exist.
    pub ne_gap: Option<T>,
}

impl<T: Real> OrbitRecord<T> {
    pub fn last(&self) -> [T; 2] {
        *self.trajectory.last().expect("orbit holds at least p0")
    }

    /// CSV dump: `t,p1,p2,branch1,branch2`, one row per slot. The initial
    /// slot has no branch tags.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p1,p2,branch1,branch2\n");
        for (t, p) in self.trajectory.iter().enumerate() {
            if t == 0 {
                let _ = writeln!(out, "0,{},{},,", p[0], p[1]);
            } else {
                let rules = self.rules[t - 1];
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    t,
                    p[0],
                    p[1],
                    rules[0].as_str(),
                    rules[1].as_str()
                );
            }
        }
        out
    }
}

fn require_duopoly<T: Real>(model: &DemandModel<T>) -> Result<(), Type1Error> {
    if model.n() != 2 {
        return Err(Type1Error::NotDuopoly(model.n()));
    }
    Ok(())
}

/// One synchronous StrictBEST update: each player takes the larger of its
/// unconstrained best response and its capacity-binding price, using the
/// opponent's current price. Ties go to the best-response branch.
pub fn strict_best_step<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    p: [T; 2],
) -> ([T; 2], [Branch; 2]) {
    let mut next = [T::zero(); 2];
    let mut rules = [Branch::BestResponse; 2];
    for i in 0..2 {
        let j = 1 - i;
        let intercept = model.a(i) + model.c2() * p[j];
        let br = intercept / (T::two() * model.b(i));
        if caps.is_limited(i) {
            let binding = (intercept - caps.q(i)) / model.b(i);
            if binding > br {
                next[i] = binding;
                rules[i] = Branch::CapacityBinding;
                continue;
            }
        }
        next[i] = br;
    }
    (next, rules)
}

/// Iterate StrictBEST until successive prices move less than `tol` or
/// `max_iter` slots elapse. The limit is compared against the static
/// equilibrium from the insufficiency search.
pub fn strict_best_run<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    p0: [T; 2],
    tol: T,
    max_iter: usize,
) -> Result<OrbitRecord<T>, DynamicsError> {
    require_duopoly(model)?;
    let mut trajectory = vec![p0];
    let mut rules = Vec::new();
    let mut p = p0;
    let mut converged = false;
    for _ in 0..max_iter {
        let (next, rule) = strict_best_step(model, caps, p);
        trajectory.push(next);
        rules.push(rule);
        let delta = (next[0] - p[0]).abs().max((next[1] - p[1]).abs());
        p = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    let (limit, ne_gap) = if converged {
        let (ne, _) = oligopoly_ne_search(model, caps)?;
        let gap = (p[0] - ne.prices[0]).abs().max((p[1] - ne.prices[1]).abs());
        (Some(p), Some(gap))
    } else {
        (None, None)
    };
    Ok(OrbitRecord {
        trajectory,
        rules,
        converged,
        diverged: false,
        limit,
        ne_gap,
    })
}

/// Knobs of the StrictBR iteration.
#[derive(Debug, Clone, Copy)]
pub struct BrOptions<T> {
    /// A nonpositive next price is replaced by a uniform draw from
    /// `(0, epsilon_escape)`; zero disables the escape.
    pub epsilon_escape: T,
    /// Orbit magnitudes beyond this terminate with `NonFinite`.
    pub overflow_guard: T,
}

impl<T: Real> Default for BrOptions<T> {
    fn default() -> Self {
        Self {
            epsilon_escape: T::of(0.01),
            overflow_guard: T::of(1e12),
        }
    }
}

/// One synchronous StrictBR update: the larger of the capacity-binding
/// price and a gradient step on own revenue. Prices falling to zero (or
/// below, once the gradient overshoots) restart at a small random draw so
/// the orbit leaves the zero fixed points.
pub fn strict_br_step<T: Real, R: Rng + ?Sized>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: &LearningRates<T>,
    p: [T; 2],
    opts: &BrOptions<T>,
    rng: &mut R,
) -> Result<([T; 2], [Branch; 2]), DynamicsError> {
    let mut next = [T::zero(); 2];
    let mut rules = [Branch::Gradient; 2];
    for i in 0..2 {
        let j = 1 - i;
        let gradient =
            p[i] + rates.gamma(i) * p[i] * (model.a(i) - T::two() * model.b(i) * p[i] + model.c2() * p[j]);
        let mut value = gradient;
        if caps.is_limited(i) {
            let binding = (model.a(i) - caps.q(i) + model.c2() * p[j]) / model.b(i);
            if binding > gradient {
                value = binding;
                rules[i] = Branch::CapacityBinding;
            }
        }
        if value < T::of(1e-12) && opts.epsilon_escape > T::zero() {
            value = rng.gen_range(T::zero()..opts.epsilon_escape);
        }
        if !value.is_finite() || value.abs() > opts.overflow_guard {
            return Err(DynamicsError::NonFinite {
                player: i,
                value: value.to_f64().unwrap_or(f64::NAN),
            });
        }
        next[i] = value;
    }
    Ok((next, rules))
}

/// Iterate StrictBR from `p0`. Doubly capacity-insufficient markets adopt
/// the plain best-response rule, which is the behavior the bounded
/// rationality model reduces to there.
pub fn strict_br_run<T: Real, R: Rng + ?Sized>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: &LearningRates<T>,
    p0: [T; 2],
    tol: T,
    max_iter: usize,
    opts: &BrOptions<T>,
    rng: &mut R,
) -> Result<OrbitRecord<T>, DynamicsError> {
    require_duopoly(model)?;
    if duopoly_ne(model, caps)?.case_label == CaseLabel::Case4 {
        return strict_best_run(model, caps, p0, tol, max_iter);
    }
    let mut trajectory = vec![p0];
    let mut rules = Vec::new();
    let mut p = p0;
    let mut converged = false;
    let mut diverged = false;
    for _ in 0..max_iter {
        match strict_br_step(model, caps, rates, p, opts, rng) {
            Ok((next, rule)) => {
                trajectory.push(next);
                rules.push(rule);
                let delta = (next[0] - p[0]).abs().max((next[1] - p[1]).abs());
                p = next;
                if delta < tol {
                    converged = true;
                    break;
                }
            }
            Err(DynamicsError::NonFinite { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(OrbitRecord {
        limit: converged.then_some(p),
        trajectory,
        rules,
        converged,
        diverged,
        ne_gap: None,
    })
}

/// Fixed points of the StrictBR self-map for the market's capacity case,
/// the interior equilibrium last.
///
/// The boundary candidates fix the gradient rule; they survive only where
/// the capacity rule does not override them, which is the regime the
/// bounded-rationality case analysis assumes. Tight budgets can therefore
/// shorten the list.
pub fn br_fixed_points<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
) -> Result<Vec<[T; 2]>, DynamicsError> {
    require_duopoly(model)?;
    let ne = duopoly_ne(model, caps)?;
    let interior = [ne.prices[0], ne.prices[1]];
    let candidates = match ne.case_label {
        CaseLabel::Case1 => vec![
            [T::zero(), T::zero()],
            [model.a(0) / (T::two() * model.b(0)), T::zero()],
            [T::zero(), model.a(1) / (T::two() * model.b(1))],
            interior,
        ],
        CaseLabel::Case2 => vec![
            [(model.a(0) - caps.q(0)) / model.b(0), T::zero()],
            interior,
        ],
        CaseLabel::Case3 => vec![
            [T::zero(), (model.a(1) - caps.q(1)) / model.b(1)],
            interior,
        ],
        _ => vec![interior],
    };
    let tol = T::of(BOUNDARY_TOL);
    let is_fixed = |p: &[T; 2]| {
        (0..2).all(|i| {
            let j = 1 - i;
            if ne.binding[i] {
                // on the capacity rule: the gradient must not override it,
                // i.e. the revenue slope at the point cannot be positive
                let bracket = model.a(i) - T::two() * model.b(i) * p[i] + model.c2() * p[j];
                bracket <= tol
            } else if caps.is_limited(i) {
                // on the gradient rule: the capacity rule must stay below
                let binding = (model.a(i) - caps.q(i) + model.c2() * p[j]) / model.b(i);
                binding <= p[i] + tol
            } else {
                true
            }
        })
    };
    Ok(candidates.into_iter().filter(|p| is_fixed(p)).collect())
}

/// Branch actually selected by the StrictBR map at a point, per player.
fn active_branches<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: &LearningRates<T>,
    p: [T; 2],
) -> Result<[Branch; 2], DynamicsError> {
    let mut rules = [Branch::Gradient; 2];
    for i in 0..2 {
        let j = 1 - i;
        let gradient =
            p[i] + rates.gamma(i) * p[i] * (model.a(i) - T::two() * model.b(i) * p[i] + model.c2() * p[j]);
        if caps.is_limited(i) {
            let binding = (model.a(i) - caps.q(i) + model.c2() * p[j]) / model.b(i);
            if (binding - gradient).abs() <= T::of(1e-9) {
                return Err(DynamicsError::BoundaryPoint);
            }
            if binding > gradient {
                rules[i] = Branch::CapacityBinding;
            }
        }
    }
    Ok(rules)
}

/// Jacobian of the StrictBR map given the branch each player is on.
pub(crate) fn br_jacobian_for_branches<T: Real>(
    model: &DemandModel<T>,
    rates: &LearningRates<T>,
    p: [T; 2],
    rules: [Branch; 2],
) -> SquareMatrix<T> {
    let mut jac = SquareMatrix::zeros(2);
    for i in 0..2 {
        let j = 1 - i;
        match rules[i] {
            Branch::CapacityBinding => {
                jac[(i, i)] = T::zero();
                jac[(i, j)] = model.c2() / model.b(i);
            }
            Branch::BestResponse => {
                jac[(i, i)] = T::zero();
                jac[(i, j)] = model.c2() / (T::two() * model.b(i));
            }
            Branch::Gradient => {
                jac[(i, i)] = T::one()
                    + rates.gamma(i)
                        * (model.a(i) - T::of(4.0) * model.b(i) * p[i] + model.c2() * p[j]);
                jac[(i, j)] = rates.gamma(i) * p[i] * model.c2();
            }
        }
    }
    jac
}

/// Jacobian of the active StrictBR branch at a point. Errors when both
/// branches produce the same value there, where the map is not smooth.
pub fn br_jacobian<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: &LearningRates<T>,
    at: [T; 2],
) -> Result<SquareMatrix<T>, DynamicsError> {
    require_duopoly(model)?;
    let rules = active_branches(model, caps, rates, at)?;
    Ok(br_jacobian_for_branches(model, rates, at, rules))
}

/// Fixed points with their Jacobians, eigenvalues and the unit-circle
/// stability verdict.
#[derive(Debug, Clone)]
pub struct StabilityReport<T> {
    pub fixed_points: Vec<[T; 2]>,
    pub jacobians: Vec<SquareMatrix<T>>,
    /// Eigenvalues as (re, im) pairs per fixed point.
    pub eigenvalues: Vec<[(T, T); 2]>,
    pub stable: Vec<bool>,
}

pub fn stability_analysis<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    rates: &LearningRates<T>,
) -> Result<StabilityReport<T>, DynamicsError> {
    let fixed_points = br_fixed_points(model, caps)?;
    let mut jacobians = Vec::new();
    let mut eigenvalues = Vec::new();
    let mut stable = Vec::new();
    for &p in &fixed_points {
        let jac = br_jacobian(model, caps, rates, p)?;
        let eig = eigenvalues_2x2(&jac);
        let radius = eig
            .iter()
            .map(|(re, im)| re.hypot(*im))
            .fold(T::zero(), T::max);
        stable.push(radius < T::one() - T::of(1e-12));
        jacobians.push(jac);
        eigenvalues.push(eig);
    }
    Ok(StabilityReport {
        fixed_points,
        jacobians,
        eigenvalues,
        stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig_model() -> DemandModel<f64> {
        DemandModel::duopoly([30.0, 30.0], [2.0, 4.0], 1.5).unwrap()
    }

    fn rates(g1: f64, g2: f64) -> LearningRates<f64> {
        LearningRates::new([g1, g2]).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn best_step_interior_and_binding_values() {
        let model = fig_model();
        let ample = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let (next, rules) = strict_best_step(&model, &ample, [5.0, 5.0]);
        assert!((next[0] - 9.375).abs() < 1e-12);
        assert!((next[1] - 4.6875).abs() < 1e-12);
        assert_eq!(rules, [Branch::BestResponse; 2]);

        let tight = CapacitySpec::new(vec![10.0, 100.0]).unwrap();
        let (next, rules) = strict_best_step(&model, &tight, [5.0, 5.0]);
        assert!((next[0] - 13.75).abs() < 1e-12);
        assert_eq!(rules[0], Branch::CapacityBinding);
        assert_eq!(rules[1], Branch::BestResponse);
    }

    #[test]
    fn best_step_fixes_equilibrium() {
        let model = fig_model();
        let caps = CapacitySpec::new(vec![10.0, 100.0]).unwrap();
        let ne = duopoly_ne(&model, &caps).unwrap();
        let p = [ne.prices[0], ne.prices[1]];
        let (next, _) = strict_best_step(&model, &caps, p);
        assert!((next[0] - p[0]).abs() < 1e-12);
        assert!((next[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn best_run_converges_to_static_equilibrium() {
        let model = fig_model();
        for caps in [
            CapacitySpec::new(vec![100.0, 100.0]).unwrap(),
            CapacitySpec::new(vec![10.0, 100.0]).unwrap(),
        ] {
            let orbit = strict_best_run(&model, &caps, [5.0, 5.0], 1e-6, 200).unwrap();
            assert!(orbit.converged);
            assert!(orbit.ne_gap.unwrap() < 1e-5);
        }
        // starting at the equilibrium converges immediately
        let ne = duopoly_ne(&model, &CapacitySpec::new(vec![100.0, 100.0]).unwrap()).unwrap();
        let orbit = strict_best_run(
            &model,
            &CapacitySpec::new(vec![100.0, 100.0]).unwrap(),
            [ne.prices[0], ne.prices[1]],
            1e-6,
            200,
        )
        .unwrap();
        assert!(orbit.converged && orbit.trajectory.len() <= 2);
    }

    #[test]
    fn br_step_gradient_and_binding_values() {
        let model = fig_model();
        let ample = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let r = rates(0.01, 0.01);
        let opts = BrOptions::default();
        let (next, rules) =
            strict_br_step(&model, &ample, &r, [5.0, 5.0], &opts, &mut rng()).unwrap();
        assert!((next[0] - 5.875).abs() < 1e-12);
        assert!((next[1] - 4.875).abs() < 1e-12);
        assert_eq!(rules, [Branch::Gradient; 2]);

        let tight = CapacitySpec::new(vec![10.0, 100.0]).unwrap();
        let (next, rules) =
            strict_br_step(&model, &tight, &r, [5.0, 5.0], &opts, &mut rng()).unwrap();
        assert!((next[0] - 13.75).abs() < 1e-12);
        assert_eq!(rules[0], Branch::CapacityBinding);
    }

    #[test]
    fn br_fixed_points_per_case() {
        let model = fig_model();
        let ample = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let pts = br_fixed_points(&model, &ample).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0], [0.0, 0.0]);
        assert!((pts[1][0] - 7.5).abs() < 1e-12 && pts[1][1] == 0.0);
        assert!((pts[3][0] - 9.58).abs() < 0.01);
        assert!((pts[3][1] - 5.55).abs() < 0.01);

        let tight = CapacitySpec::new(vec![10.0, 100.0]).unwrap();
        let pts = br_fixed_points(&model, &tight).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[0][0] - 10.0).abs() < 1e-12 && pts[0][1] == 0.0);
        assert!((pts[1][0] - 14.909).abs() < 1e-3);
        assert!((pts[1][1] - 6.545).abs() < 1e-3);
    }

    #[test]
    fn br_step_fixes_every_fixed_point_with_escape_disabled() {
        let model = fig_model();
        let r = rates(0.013, 0.017);
        let opts = BrOptions {
            epsilon_escape: 0.0,
            ..BrOptions::default()
        };
        for caps in [
            CapacitySpec::new(vec![100.0, 100.0]).unwrap(),
            CapacitySpec::new(vec![10.0, 100.0]).unwrap(),
            CapacitySpec::new(vec![100.0, 12.0]).unwrap(),
        ] {
            for p in br_fixed_points(&model, &caps).unwrap() {
                let (next, _) = strict_br_step(&model, &caps, &r, p, &opts, &mut rng()).unwrap();
                assert!(
                    (next[0] - p[0]).abs() < 1e-9 && (next[1] - p[1]).abs() < 1e-9,
                    "caps {:?} point {:?} mapped to {:?}",
                    caps,
                    p,
                    next
                );
            }
        }
    }

    #[test]
    fn jacobian_values_at_named_fixed_points() {
        let model = fig_model();
        let ample = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let r = rates(0.01, 0.01);

        // origin: diag(1 + g1 a1, 1 + g2 a2)
        let j = br_jacobian(&model, &ample, &r, [0.0, 0.0]).unwrap();
        assert!((j[(0, 0)] - 1.3).abs() < 1e-12);
        assert!((j[(1, 1)] - 1.3).abs() < 1e-12);
        assert_eq!(j[(0, 1)], 0.0);
        assert_eq!(j[(1, 0)], 0.0);

        // interior equilibrium: J11 = 1 - 2 g1 b1 p1*
        let ne = duopoly_ne(&model, &ample).unwrap();
        let p4 = [ne.prices[0], ne.prices[1]];
        let j = br_jacobian(&model, &ample, &r, p4).unwrap();
        assert!((j[(0, 0)] - (1.0 - 2.0 * 0.01 * 2.0 * p4[0])).abs() < 1e-12);
        assert!((j[(0, 0)] - 0.6168).abs() < 1e-3);
        assert!((j[(0, 1)] - 0.01 * 1.5 * p4[0]).abs() < 1e-12);
        assert!((j[(1, 0)] - 0.01 * 1.5 * p4[1]).abs() < 1e-12);

        // capacity-binding row is [0, c/b1]
        let tight = CapacitySpec::new(vec![10.0, 100.0]).unwrap();
        let ne = duopoly_ne(&model, &tight).unwrap();
        let j = br_jacobian(&model, &tight, &r, [ne.prices[0], ne.prices[1]]).unwrap();
        assert_eq!(j[(0, 0)], 0.0);
        assert!((j[(0, 1)] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let model = fig_model();
        let caps = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let r = rates(0.02, 0.015);
        let opts = BrOptions {
            epsilon_escape: 0.0,
            ..BrOptions::default()
        };
        let h = 1e-6;
        for p in [[4.0, 6.0], [8.0, 3.0], [11.0, 5.0]] {
            let j = br_jacobian(&model, &caps, &r, p).unwrap();
            for col in 0..2 {
                let mut hi = p;
                let mut lo = p;
                hi[col] += h;
                lo[col] -= h;
                let (fhi, _) =
                    strict_br_step(&model, &caps, &r, hi, &opts, &mut rng()).unwrap();
                let (flo, _) =
                    strict_br_step(&model, &caps, &r, lo, &opts, &mut rng()).unwrap();
                for row in 0..2 {
                    let fd = (fhi[row] - flo[row]) / (2.0 * h);
                    assert!(
                        (j[(row, col)] - fd).abs() < 1e-5,
                        "row {row} col {col}: {} vs {}",
                        j[(row, col)],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn jacobian_rejects_branch_boundary() {
        let model = fig_model();
        let r = rates(0.01, 0.01);
        // pick a capacity making both branches equal for player 1 at p:
        // binding == gradient at p = (5, 5) when q1a = a1 + c p2 - b1 * grad
        let grad = 5.0 + 0.01 * 5.0 * (30.0 - 20.0 + 7.5);
        let q1a = 30.0 + 7.5 - 2.0 * grad;
        let caps = CapacitySpec::new(vec![q1a, 100.0]).unwrap();
        assert!(matches!(
            br_jacobian(&model, &caps, &r, [5.0, 5.0]),
            Err(DynamicsError::BoundaryPoint)
        ));
    }

    #[test]
    fn stability_verdicts_match_paper_structure() {
        let model = fig_model();
        let ample = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let report = stability_analysis(&model, &ample, &rates(0.01, 0.01)).unwrap();
        // origin and the two axis points are unstable, the interior point
        // is stable at small learning rates
        assert_eq!(report.stable, vec![false, false, false, true]);

        let tight = CapacitySpec::new(vec![10.0, 100.0]).unwrap();
        let report = stability_analysis(&model, &tight, &rates(0.01, 0.01)).unwrap();
        assert_eq!(report.stable, vec![false, true]);
    }

    #[test]
    fn br_run_converges_near_stable_interior_point() {
        let model = fig_model();
        let ample = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let r = rates(0.01, 0.01);
        let ne = duopoly_ne(&model, &ample).unwrap();
        let p0 = [ne.prices[0] * 1.01, ne.prices[1] * 0.99];
        let orbit = strict_br_run(
            &model,
            &ample,
            &r,
            p0,
            1e-10,
            20_000,
            &BrOptions::default(),
            &mut rng(),
        )
        .unwrap();
        assert!(orbit.converged);
        let lim = orbit.limit.unwrap();
        assert!((lim[0] - ne.prices[0]).abs() < 1e-6);
        assert!((lim[1] - ne.prices[1]).abs() < 1e-6);
    }

    #[test]
    fn case4_market_routes_to_best_response() {
        let model = fig_model();
        let caps = CapacitySpec::new(vec![10.0, 15.0]).unwrap();
        let orbit = strict_br_run(
            &model,
            &caps,
            &rates(0.05, 0.05),
            [5.0, 5.0],
            1e-8,
            500,
            &BrOptions::default(),
            &mut rng(),
        )
        .unwrap();
        assert!(orbit.converged);
        let ne = duopoly_ne(&model, &caps).unwrap();
        let lim = orbit.limit.unwrap();
        assert!((lim[0] - ne.prices[0]).abs() < 1e-6);
        assert!((lim[1] - ne.prices[1]).abs() < 1e-6);
        assert!(orbit
            .rules
            .iter()
            .all(|r| r[0] != Branch::Gradient && r[1] != Branch::Gradient));
    }

    #[test]
    fn orbit_csv_shape() {
        let model = fig_model();
        let caps = CapacitySpec::new(vec![100.0, 100.0]).unwrap();
        let orbit = strict_best_run(&model, &caps, [5.0, 5.0], 1e-6, 200).unwrap();
        let csv = orbit.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,p1,p2,branch1,branch2");
        assert_eq!(lines.next().unwrap(), "0,5,5,,");
        assert!(lines.next().unwrap().ends_with("best_response,best_response"));
    }
}
