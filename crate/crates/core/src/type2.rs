//! The QoS-penalty (type-II) game: static equilibria through the
//! aggregate-demand transformation, the duopoly elimination solver, and the
//! QoSBEST best-response iteration.

use std::fmt::Write as _;

use thiserror::Error;

use crate::dynamics::{Branch, OrbitRecord};
use crate::market::{
    demand, inverse_demand, CapacitySpec, DemandModel, DemandVector, MarketError,
    MarketParameters, PriceVector,
};
use crate::scalar::Real;
use crate::type1::{CaseLabel, EquilibriumResult};

#[derive(Debug, Error)]
pub enum Type2Error {
    #[error("penalty undefined: demand {demand} of player {player} reaches its capacity {capacity}")]
    PenaltyDomain {
        player: usize,
        demand: f64,
        capacity: f64,
    },
    #[error("type-II constraints need a finite capacity for player {0}")]
    InfiniteCapacity(usize),
    #[error("theta must be positive, got {0}")]
    InvalidTheta(f64),
    #[error("substitutability must be positive for the coupled solver")]
    ZeroSubstitutability,
    #[error("no interior stationary point: bracket-end value {gap} is not positive")]
    NoInteriorSolution { gap: f64 },
    #[error("bisection stalled before meeting the residual target (best residual {0})")]
    Tolerance(f64),
    #[error("market infeasible: aggregate fixed-point map at zero has value {gap} <= 0")]
    InfeasibleMarket { gap: f64 },
    #[error("equilibrium violates the feasibility condition: {condition} (player {player})")]
    ConditionViolation {
        condition: &'static str,
        player: usize,
    },
    #[error("best-response quadratic of player {player} has complex roots (discriminant {discriminant})")]
    ComplexRoots { player: usize, discriminant: f64 },
    #[error("expected a duopoly, got {0} players")]
    NotDuopoly(usize),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Configuration of the QoS-penalty payoff: the delay weight, the budgets,
/// and optionally the per-player load terms `B_i / r_i^(p)` that fix the
/// constant part of the log penalty.
#[derive(Debug, Clone)]
pub struct Type2Config<T> {
    theta: T,
    caps: CapacitySpec<T>,
    load_terms: Option<Vec<T>>,
}

impl<T: Real> Type2Config<T> {
    pub fn new(
        theta: T,
        caps: CapacitySpec<T>,
        load_terms: Option<Vec<T>>,
    ) -> Result<Self, Type2Error> {
        if !(theta > T::zero()) {
            return Err(Type2Error::InvalidTheta(theta.to_f64().unwrap_or(f64::NAN)));
        }
        for i in 0..caps.n() {
            if !caps.is_limited(i) {
                return Err(Type2Error::InfiniteCapacity(i));
            }
        }
        Ok(Self {
            theta,
            caps,
            load_terms,
        })
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn caps(&self) -> &CapacitySpec<T> {
        &self.caps
    }

    /// The constant penalty offset `theta ln(B_i / r_i)` when load terms are
    /// known. It never enters optimization, only reporting.
    pub fn penalty_constant(&self, i: usize) -> Option<T> {
        self.load_terms
            .as_ref()
            .map(|loads| self.theta * loads[i].ln())
    }

    /// Necessary feasibility condition `alpha_i q_i^a >= theta` per player.
    pub fn theta_within_capacity(&self, params: &MarketParameters<T>) -> bool {
        (0..self.caps.n()).all(|i| params.alpha(i) * self.caps.q(i) >= self.theta)
    }
}

/// Type-II utility of one player at the given prices.
#[derive(Debug, Clone, Copy)]
pub struct UtilityValue<T> {
    pub value: T,
    /// True when the constant `theta ln(B_i / r_i)` part is not included
    /// because no load terms were configured.
    pub constant_omitted: bool,
}

/// Revenue minus the log queueing-delay penalty. The implied demand must
/// stay below the budget or the penalty is undefined.
pub fn type2_utility<T: Real>(
    model: &DemandModel<T>,
    cfg: &Type2Config<T>,
    i: usize,
    prices: &PriceVector<T>,
) -> Result<UtilityValue<T>, Type2Error> {
    let q = demand(model, prices)?;
    let qi = q[i];
    let headroom = cfg.caps().q(i) - qi;
    if headroom <= T::zero() {
        return Err(Type2Error::PenaltyDomain {
            player: i,
            demand: qi.to_f64().unwrap_or(f64::NAN),
            capacity: cfg.caps().q(i).to_f64().unwrap_or(f64::NAN),
        });
    }
    let price_part = prices[i] * qi + cfg.theta() * headroom.ln();
    Ok(match cfg.penalty_constant(i) {
        Some(constant) => UtilityValue {
            value: price_part - constant,
            constant_omitted: false,
        },
        None => UtilityValue {
            value: price_part,
            constant_omitted: true,
        },
    })
}

/// Stationarity residual of player `i` in price space:
/// `a_i - 2 b_i p_i + sum c_ij p_j + theta b_i / (q_i^a - f_i(p))`.
pub fn first_order_residual<T: Real>(
    model: &DemandModel<T>,
    cfg: &Type2Config<T>,
    i: usize,
    prices: &[T],
) -> T {
    let intercept = model.own_intercept_at(i, prices);
    let fi = intercept - model.b(i) * prices[i];
    intercept - T::two() * model.b(i) * prices[i]
        + cfg.theta() * model.b(i) / (cfg.caps().q(i) - fi)
}

/// Scale-aware bound used when confirming stationarity. Near the capacity
/// the barrier slope `theta b / gap^2` amplifies the representation error
/// of the demand itself, so the acceptable residual carries that term on
/// top of the base tolerance.
fn residual_bound<T: Real>(model: &DemandModel<T>, cfg: &Type2Config<T>, qi: T, i: usize) -> T {
    let gap = cfg.caps().q(i) - qi;
    let barrier = cfg.theta() * model.b(i) / gap;
    let slope = barrier / gap;
    T::of(1e-8) * T::one().max(barrier.abs())
        + slope.abs() * T::of(4.0) * T::epsilon() * T::one().max(qi.abs())
}

/// Smaller root of `coeff q^2 - (coeff qa + d) q - (theta_b - d qa) = 0`,
/// evaluated in the cancellation-free arrangement. This is the stationary
/// demand below the budget for both the aggregate form (d based on Z) and
/// the best-response form (d based on the opponents' total).
fn smaller_barrier_root<T: Real>(coeff: T, d: T, qa: T, theta_b: T) -> T {
    let s = coeff * qa + d;
    let disc = (coeff * qa - d) * (coeff * qa - d) + T::of(4.0) * coeff * theta_b;
    let root = disc.sqrt();
    if s >= T::zero() {
        let e = theta_b - d * qa;
        let larger = (s + root) / (T::two() * coeff);
        -e / (coeff * larger)
    } else {
        (s - root) / (T::two() * coeff)
    }
}

/// Demand-space coefficient `1 + beta_i b_i - mu b_i`, positive whenever
/// `beta_i > mu`.
fn own_coeff<T: Real>(model: &DemandModel<T>, params: &MarketParameters<T>, i: usize) -> T {
    T::one() + params.beta(i) * model.b(i) - params.mu() * model.b(i)
}

/// Smaller root of the per-player quadratic at aggregate demand `z`; always
/// below the player's budget. As the penalty weight vanishes it approaches
/// the type-I best-response demand.
pub fn h_of_z<T: Real>(
    model: &DemandModel<T>,
    params: &MarketParameters<T>,
    cfg: &Type2Config<T>,
    i: usize,
    z: T,
) -> T {
    let coeff = own_coeff(model, params, i);
    let d = params.alpha(i) * model.b(i) - params.mu() * model.b(i) * z;
    smaller_barrier_root(coeff, d, cfg.caps().q(i), cfg.theta() * model.b(i))
}

/// Stationary demand of player `i` against the opponents' total demand.
fn demand_best_response<T: Real>(
    model: &DemandModel<T>,
    params: &MarketParameters<T>,
    cfg: &Type2Config<T>,
    i: usize,
    others_total: T,
) -> T {
    let coeff = T::one() + params.beta(i) * model.b(i);
    let d = params.alpha(i) * model.b(i) - params.mu() * model.b(i) * others_total;
    smaller_barrier_root(coeff, d, cfg.caps().q(i), cfg.theta() * model.b(i))
}

/// Feasibility verdicts for the four uniqueness conditions of the
/// aggregate-demand equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibilityFlags {
    /// `beta_i > mu` for every player.
    pub beta_above_mu: bool,
    /// All of `alpha, beta, mu, a, b, c` positive.
    pub positive_coefficients: bool,
    /// `alpha_i q_i^a >= theta` for every player.
    pub theta_within_capacity: bool,
    /// Post-solve: `mu b_i Z* q_i^a - alpha_i b_i q_i^a + theta b_i <= 0`.
    pub nonnegative_demand: bool,
}

impl FeasibilityFlags {
    pub fn all(self) -> bool {
        self.beta_above_mu
            && self.positive_coefficients
            && self.theta_within_capacity
            && self.nonnegative_demand
    }
}

/// Solution record of the aggregate fixed point `Z = sum h_i(Z)`.
#[derive(Debug, Clone)]
pub struct AggregateDemandSolve<T> {
    pub z_star: T,
    /// `|Z* - sum h_i(Z*)|` at the returned solution.
    pub residual: T,
    pub per_player_q: DemandVector<T>,
    pub feasibility: FeasibilityFlags,
}

impl<T: Real> AggregateDemandSolve<T> {
    /// One-line JSON report with per-player prices, demands and payoffs.
    pub fn to_json(&self, ne: &EquilibriumResult<T>) -> String {
        let mut out = String::from("{\"z\":");
        let _ = write!(out, "{}", self.z_star);
        let _ = write!(out, ",\"residual\":{}", self.residual);
        out.push_str(",\"players\":[");
        for i in 0..ne.prices.len() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(
                out,
                "{{\"p\":{},\"q\":{},\"payoff\":{}}}",
                ne.prices[i], ne.demands[i], ne.payoffs[i]
            );
        }
        let f = self.feasibility;
        let _ = write!(
            out,
            "],\"feasible\":{{\"beta_above_mu\":{},\"positive_coefficients\":{},\
             \"theta_within_capacity\":{},\"nonnegative_demand\":{}}}}}",
            f.beta_above_mu,
            f.positive_coefficients,
            f.theta_within_capacity,
            f.nonnegative_demand
        );
        out
    }
}

fn positivity_flags<T: Real>(model: &DemandModel<T>, params: &MarketParameters<T>) -> (bool, bool) {
    let n = model.n();
    let beta_above_mu = (0..n).all(|i| params.beta(i) > params.mu());
    let mut positive = params.mu() > T::zero();
    for i in 0..n {
        positive = positive
            && params.alpha(i) > T::zero()
            && params.beta(i) > T::zero()
            && model.a(i) > T::zero()
            && model.b(i) > T::zero();
        for j in 0..n {
            if i != j {
                positive = positive && model.c(i, j) > T::zero();
            }
        }
    }
    (beta_above_mu, positive)
}

fn equilibrium_from_demands<T: Real>(
    model: &DemandModel<T>,
    params: &MarketParameters<T>,
    cfg: &Type2Config<T>,
    q: Vec<T>,
) -> Result<EquilibriumResult<T>, Type2Error> {
    let demands = DemandVector(q);
    let prices = inverse_demand(params, &demands)?;
    let payoffs = (0..model.n())
        .map(|i| type2_utility(model, cfg, i, &prices).map(|u| u.value))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EquilibriumResult {
        prices,
        demands,
        payoffs,
        binding: vec![false; model.n()],
        case_label: CaseLabel::OligopolyGeneral,
        resolved_by_search: false,
    })
}

/// Static type-II equilibrium for any player count, via bisection on the
/// strictly decreasing map `g(Z) = sum h_i(Z) - Z`.
pub fn type2_oligopoly_ne<T: Real>(
    model: &DemandModel<T>,
    params: &MarketParameters<T>,
    cfg: &Type2Config<T>,
    tol: T,
) -> Result<(EquilibriumResult<T>, AggregateDemandSolve<T>), Type2Error> {
    let n = model.n();
    let g = |z: T| -> T {
        let mut s = -z;
        for i in 0..n {
            s = s + h_of_z(model, params, cfg, i, z);
        }
        s
    };

    let g0 = g(T::zero());
    if g0 <= T::zero() {
        return Err(Type2Error::InfeasibleMarket {
            gap: g0.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut lo = T::zero();
    let mut hi = cfg.caps().finite_total();
    let mut best = (lo, g0);
    for _ in 0..200 {
        let mid = (lo + hi) * T::half();
        let val = g(mid);
        if val.abs() < best.1.abs() {
            best = (mid, val);
        }
        if val.abs() < tol {
            break;
        }
        if val > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (z_star, residual_signed) = best;
    let residual = residual_signed.abs();
    if residual > T::of(1e-10).max(tol) {
        return Err(Type2Error::Tolerance(residual.to_f64().unwrap_or(f64::NAN)));
    }

    let q: Vec<T> = (0..n).map(|i| h_of_z(model, params, cfg, i, z_star)).collect();
    let (beta_above_mu, positive_coefficients) = positivity_flags(model, params);
    let mut nonnegative_demand = true;
    for i in 0..n {
        let e = params.mu() * model.b(i) * z_star * cfg.caps().q(i)
            - params.alpha(i) * model.b(i) * cfg.caps().q(i)
            + cfg.theta() * model.b(i);
        nonnegative_demand = nonnegative_demand && e <= T::zero();
    }
    let flags = FeasibilityFlags {
        beta_above_mu,
        positive_coefficients,
        theta_within_capacity: cfg.theta_within_capacity(params),
        nonnegative_demand,
    };
    for (i, &qi) in q.iter().enumerate() {
        if !(qi > T::zero()) {
            return Err(Type2Error::ConditionViolation {
                condition: "demand positive at the fixed point (mu b Z qa - alpha b qa + theta b <= 0)",
                player: i,
            });
        }
        if !(qi < cfg.caps().q(i)) {
            return Err(Type2Error::ConditionViolation {
                condition: "demand below capacity at the fixed point",
                player: i,
            });
        }
    }

    let ne = equilibrium_from_demands(model, params, cfg, q.clone())?;
    for i in 0..n {
        let res = first_order_residual(model, cfg, i, ne.prices.as_slice()).abs();
        if res > residual_bound(model, cfg, q[i], i) {
            return Err(Type2Error::Tolerance(res.to_f64().unwrap_or(f64::NAN)));
        }
    }
    let solve = AggregateDemandSolve {
        z_star,
        residual,
        per_player_q: DemandVector(q),
        feasibility: flags,
    };
    Ok((ne, solve))
}

/// Static duopoly equilibrium by eliminating the second demand and
/// bisecting the resulting scalar equation on the first player's budget
/// interval. Kept independent of the aggregate-demand route so the two can
/// cross-check each other.
pub fn type2_duopoly_ne<T: Real>(
    model: &DemandModel<T>,
    params: &MarketParameters<T>,
    cfg: &Type2Config<T>,
) -> Result<EquilibriumResult<T>, Type2Error> {
    if model.n() != 2 {
        return Err(Type2Error::NotDuopoly(model.n()));
    }
    if !(params.mu() > T::zero()) {
        return Err(Type2Error::ZeroSubstitutability);
    }
    let (b1, b2) = (model.b(0), model.b(1));
    let (alpha1, alpha2) = (params.alpha(0), params.alpha(1));
    let (beta1, beta2) = (params.beta(0), params.beta(1));
    let mu = params.mu();
    let (q1a, q2a) = (cfg.caps().q(0), cfg.caps().q(1));
    let theta = cfg.theta();

    // player 1's stationarity solved for q2
    let q2_of = |q1: T| -> T {
        (b1 * alpha1 - (T::one() + beta1 * b1) * q1 - theta * b1 / (q1a - q1)) / (mu * b1)
    };
    // player 2's stationarity, strictly decreasing in q1: +inf where the
    // implied q2 meets its budget, -inf as q1 approaches its own budget
    let residual2 = |q1: T| -> T {
        let q2 = q2_of(q1);
        (T::one() + beta2 * b2) * q2 - b2 * alpha2 + mu * b2 * q1 + theta * b2 / (q2a - q2)
    };

    let eps = T::of(1e-13) * q1a.max(T::one());
    // carve off the part of (0, q1a) where the implied q2 still exceeds its
    // budget and the second penalty term is meaningless
    let mut lo = eps;
    if q2_of(lo) >= q2a {
        let mut bad = lo;
        let mut good = q1a - eps;
        for _ in 0..200 {
            let mid = (bad + good) * T::half();
            if q2_of(mid) >= q2a {
                bad = mid;
            } else {
                good = mid;
            }
        }
        lo = good;
    }
    let hi = q1a - eps;
    let glo = residual2(lo);
    if !(glo > T::zero()) {
        return Err(Type2Error::NoInteriorSolution {
            gap: glo.to_f64().unwrap_or(f64::NAN),
        });
    }

    let mut a = lo;
    let mut b = hi;
    let mut best = (lo, glo);
    for _ in 0..200 {
        let mid = (a + b) * T::half();
        let val = residual2(mid);
        if val.abs() < best.1.abs() {
            best = (mid, val);
        }
        if val > T::zero() {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut q1 = best.0;
    let mut q2 = q2_of(q1);
    // The composed q2_of is steep near a binding budget, which limits how
    // far bisection alone can push the stationarity residuals. Polish with
    // alternating exact single-player re-solves; the pass contracts since
    // mu^2 b1 b2 < (1 + beta1 b1)(1 + beta2 b2).
    for _ in 0..64 {
        let q1_next = demand_best_response(model, params, cfg, 0, q2);
        let q2_next = demand_best_response(model, params, cfg, 1, q1_next);
        let step = (q1_next - q1).abs().max((q2_next - q2).abs());
        q1 = q1_next;
        q2 = q2_next;
        if step < T::epsilon() * T::of(8.0) * q1.abs().max(q2.abs()).max(T::one()) {
            break;
        }
    }
    let ne = equilibrium_from_demands(model, params, cfg, vec![q1, q2])?;
    for i in 0..2 {
        let res = first_order_residual(model, cfg, i, ne.prices.as_slice()).abs();
        if res > residual_bound(model, cfg, ne.demands[i], i) {
            return Err(Type2Error::Tolerance(res.to_f64().unwrap_or(f64::NAN)));
        }
    }
    Ok(ne)
}

/// Per-player diagnostics of one QoSBEST update.
#[derive(Debug, Clone, Copy)]
pub struct RootChoice<T> {
    /// Larger and smaller price roots of the best-response quadratic.
    pub roots: [T; 2],
    /// Demands each root would imply.
    pub implied_demand: [T; 2],
    /// Index into `roots` of the selected price.
    pub selected: usize,
    /// True when exactly one root passed the demand filter.
    pub unique_feasible: bool,
}

/// One synchronous QoSBEST update: each player solves its best-response
/// quadratic against the opponent's current price and keeps the root whose
/// implied demand is feasible, falling back to the better utility (then the
/// lower price) when the filter is not decisive.
pub fn qosbest_step<T: Real>(
    model: &DemandModel<T>,
    cfg: &Type2Config<T>,
    p: [T; 2],
) -> Result<([T; 2], [RootChoice<T>; 2]), Type2Error> {
    if model.n() != 2 {
        return Err(Type2Error::NotDuopoly(model.n()));
    }
    let mut next = [T::zero(); 2];
    let mut choices = [RootChoice {
        roots: [T::zero(); 2],
        implied_demand: [T::zero(); 2],
        selected: 0,
        unique_feasible: false,
    }; 2];
    for i in 0..2 {
        let j = 1 - i;
        let bi = model.b(i);
        let qa = cfg.caps().q(i);
        let u = model.a(i) + model.c2() * p[j];
        let disc = (u - T::two() * qa) * (u - T::two() * qa)
            + T::of(8.0) * bi * cfg.theta();
        if disc < T::zero() {
            return Err(Type2Error::ComplexRoots {
                player: i,
                discriminant: disc.to_f64().unwrap_or(f64::NAN),
            });
        }
        let root = disc.sqrt();
        let base = T::of(3.0) * u - T::two() * qa;
        let p_hi = (base + root) / (T::of(4.0) * bi);
        let p_lo = (base - root) / (T::of(4.0) * bi);
        let roots = [p_hi, p_lo];
        let implied = [u - bi * p_hi, u - bi * p_lo];
        let feasible = [
            implied[0] > T::zero() && implied[0] < qa,
            implied[1] > T::zero() && implied[1] < qa,
        ];
        let selected = match (feasible[0], feasible[1]) {
            (true, false) => 0,
            (false, true) => 1,
            _ => {
                // both or neither pass: prefer the better utility, then the
                // lower price
                let mut trial = p;
                trial[i] = p_hi;
                let u_hi = type2_utility(model, cfg, i, &PriceVector(trial.to_vec()))
                    .map(|v| v.value)
                    .unwrap_or_else(|_| -T::infinity());
                trial[i] = p_lo;
                let u_lo = type2_utility(model, cfg, i, &PriceVector(trial.to_vec()))
                    .map(|v| v.value)
                    .unwrap_or_else(|_| -T::infinity());
                if (u_hi - u_lo).abs() <= T::of(1e-12) {
                    usize::from(p_lo < p_hi)
                } else {
                    usize::from(u_lo > u_hi)
                }
            }
        };
        next[i] = roots[selected];
        choices[i] = RootChoice {
            roots,
            implied_demand: implied,
            selected,
            unique_feasible: feasible[0] != feasible[1],
        };
    }
    Ok((next, choices))
}

/// Contraction sample along a QoSBEST orbit: distances to the equilibrium
/// two slots apart, recorded while the earlier distance is meaningful.
#[derive(Debug, Clone, Copy)]
pub struct ContractionPair<T> {
    pub player: usize,
    pub slot: usize,
    pub before: T,
    pub after: T,
}

#[derive(Debug, Clone)]
pub struct QosRunDiagnostics<T> {
    /// Static equilibrium used for validation.
    pub equilibrium: [T; 2],
    pub contraction: Vec<ContractionPair<T>>,
    pub step_choices: Vec<[RootChoice<T>; 2]>,
}

/// Iterate QoSBEST until successive prices move less than `tol` or
/// `max_iter` slots pass.
pub fn qosbest_run<T: Real>(
    model: &DemandModel<T>,
    params: &MarketParameters<T>,
    cfg: &Type2Config<T>,
    p0: [T; 2],
    tol: T,
    max_iter: usize,
) -> Result<(OrbitRecord<T>, QosRunDiagnostics<T>), Type2Error> {
    let ne = type2_duopoly_ne(model, params, cfg)?;
    let target = [ne.prices[0], ne.prices[1]];
    let mut trajectory = vec![p0];
    let mut rules = Vec::new();
    let mut step_choices = Vec::new();
    let mut p = p0;
    let mut converged = false;
    for _ in 0..max_iter {
        let (next, choices) = qosbest_step(model, cfg, p)?;
        trajectory.push(next);
        rules.push([Branch::BestResponse; 2]);
        step_choices.push(choices);
        let delta = (next[0] - p[0]).abs().max((next[1] - p[1]).abs());
        p = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    let mut contraction = Vec::new();
    for t in 0..trajectory.len().saturating_sub(2) {
        for player in 0..2 {
            let before = (trajectory[t][player] - target[player]).abs();
            let after = (trajectory[t + 2][player] - target[player]).abs();
            if before > T::of(1e-9) {
                contraction.push(ContractionPair {
                    player,
                    slot: t,
                    before,
                    after,
                });
            }
        }
    }
    let gap = (p[0] - target[0]).abs().max((p[1] - target[1]).abs());
    let record = OrbitRecord {
        limit: converged.then_some(p),
        ne_gap: converged.then_some(gap),
        trajectory,
        rules,
        converged,
        diverged: false,
    };
    Ok((
        record,
        QosRunDiagnostics {
            equilibrium: target,
            contraction,
            step_choices,
        },
    ))
}
