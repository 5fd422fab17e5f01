//! Static Nash equilibria of the strict-capacity (type-I) Bertrand game:
//! closed forms for the four duopoly cases and the iterative
//! capacity-insufficiency search for general player counts.

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{LinalgError, SquareMatrix};
use crate::market::{demand, CapacitySpec, DemandModel, DemandVector, MarketError, PriceVector};
use crate::scalar::Real;

/// Demand-equals-capacity ties within this tolerance classify as
/// capacity-sufficient, keeping the unconstrained case as the limit.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum Type1Error {
    #[error("degenerate market: {0} must be positive")]
    DegenerateMarket(&'static str),
    #[error("no duopoly case is self-consistent ({valid} valid candidates)")]
    InconsistentCase { valid: usize },
    #[error("intermediate solve produced negative price {value} for player {player}")]
    SignViolation { player: usize, value: f64 },
    #[error("best-response system is singular: {0}")]
    SingularSystem(LinalgError),
    #[error("insufficiency search still changing after {0} iterations")]
    NoConvergence(usize),
    #[error("expected a duopoly, got {0} players")]
    NotDuopoly(usize),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Which duopoly case (or general-oligopoly route) produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseLabel {
    /// Both players capacity-sufficient.
    Case1,
    /// Player 1 capacity-insufficient, player 2 sufficient.
    Case2,
    /// Player 2 capacity-insufficient, player 1 sufficient.
    Case3,
    /// Both players capacity-insufficient.
    Case4,
    /// More than two players, or classification delegated to the search.
    OligopolyGeneral,
}

impl CaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::Case1 => "case1",
            CaseLabel::Case2 => "case2",
            CaseLabel::Case3 => "case3",
            CaseLabel::Case4 => "case4",
            CaseLabel::OligopolyGeneral => "oligopoly",
        }
    }
}

/// A solved equilibrium: prices, capacity-clipped demands, revenues and
/// which players price at their capacity.
#[derive(Debug, Clone)]
pub struct EquilibriumResult<T> {
    pub prices: PriceVector<T>,
    pub demands: DemandVector<T>,
    pub payoffs: Vec<T>,
    pub binding: Vec<bool>,
    pub case_label: CaseLabel,
    /// Set when duopoly classification was ambiguous at a boundary and the
    /// oligopoly search resolved it.
    pub resolved_by_search: bool,
}

impl<T: Real> EquilibriumResult<T> {
    fn from_prices(
        model: &DemandModel<T>,
        caps: &CapacitySpec<T>,
        prices: Vec<T>,
        binding: Vec<bool>,
        case_label: CaseLabel,
    ) -> Result<Self, Type1Error> {
        let p = PriceVector(prices);
        let raw = demand(model, &p)?;
        let demands: Vec<T> = (0..model.n())
            .map(|i| {
                if binding[i] {
                    // binding players sell exactly their budget
                    caps.q(i)
                } else {
                    raw[i].min(caps.q(i))
                }
            })
            .collect();
        let payoffs = demands
            .iter()
            .zip(p.iter())
            .map(|(&q, &pi)| pi * q)
            .collect();
        Ok(Self {
            prices: p,
            demands: DemandVector(demands),
            payoffs,
            binding,
            case_label,
            resolved_by_search: false,
        })
    }
}

/// Type-I payoff of one player at the given prices: own price times the
/// capacity-clipped demand.
pub fn type1_payoff<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    prices: &[T],
    i: usize,
) -> T {
    let f = model.own_intercept_at(i, prices) - model.b(i) * prices[i];
    prices[i] * f.min(caps.q(i))
}

// Duopoly closed forms. Each returns (prices, demands) of the candidate
// point; validity against the capacities is the caller's concern.

fn case1_point<T: Real>(model: &DemandModel<T>) -> Result<([T; 2], [T; 2]), Type1Error> {
    let (a1, a2) = (model.a(0), model.a(1));
    let (b1, b2) = (model.b(0), model.b(1));
    let c = model.c2();
    let den = T::of(4.0) * b1 * b2 - c * c;
    if den <= T::zero() {
        return Err(Type1Error::DegenerateMarket("4 b1 b2 - c^2"));
    }
    let p1 = (T::two() * a1 * b2 + a2 * c) / den;
    let p2 = (T::two() * a2 * b1 + a1 * c) / den;
    Ok(([p1, p2], [b1 * p1, b2 * p2]))
}

fn case2_point<T: Real>(model: &DemandModel<T>, q1a: T) -> Result<([T; 2], [T; 2]), Type1Error> {
    let (a1, a2) = (model.a(0), model.a(1));
    let (b1, b2) = (model.b(0), model.b(1));
    let c = model.c2();
    let den = T::two() * b1 * b2 - c * c;
    if den <= T::zero() {
        return Err(Type1Error::DegenerateMarket("2 b1 b2 - c^2"));
    }
    let p1 = (T::two() * a1 * b2 + a2 * c - T::two() * b2 * q1a) / den;
    let p2 = (a2 * b1 + a1 * c - c * q1a) / den;
    Ok(([p1, p2], [q1a, b2 * p2]))
}

fn case4_point<T: Real>(
    model: &DemandModel<T>,
    q1a: T,
    q2a: T,
) -> Result<([T; 2], [T; 2]), Type1Error> {
    let (a1, a2) = (model.a(0), model.a(1));
    let (b1, b2) = (model.b(0), model.b(1));
    let c = model.c2();
    let den = b1 * b2 - c * c;
    if den <= T::zero() {
        return Err(Type1Error::DegenerateMarket("b1 b2 - c^2"));
    }
    let p1 = (a1 * b2 + a2 * c - b2 * q1a - c * q2a) / den;
    let p2 = (a2 * b1 + a1 * c - b1 * q2a - c * q1a) / den;
    Ok(([p1, p2], [q1a, q2a]))
}

/// Mirror a duopoly model by swapping the two players.
pub(crate) fn swap_players<T: Real>(model: &DemandModel<T>) -> DemandModel<T> {
    DemandModel::duopoly(
        [model.a(1), model.a(0)],
        [model.b(1), model.b(0)],
        model.c2(),
    )
    .expect("swapped duopoly stays valid")
}

/// Unconstrained duopoly equilibrium (both capacities treated as ample).
pub fn duopoly_unconstrained_ne<T: Real>(
    model: &DemandModel<T>,
) -> Result<EquilibriumResult<T>, Type1Error> {
    require_duopoly(model)?;
    let (p, q) = case1_point(model)?;
    Ok(EquilibriumResult {
        payoffs: vec![p[0] * q[0], p[1] * q[1]],
        prices: PriceVector(p.to_vec()),
        demands: DemandVector(q.to_vec()),
        binding: vec![false, false],
        case_label: CaseLabel::Case1,
        resolved_by_search: false,
    })
}

fn require_duopoly<T: Real>(model: &DemandModel<T>) -> Result<(), Type1Error> {
    if model.n() != 2 {
        return Err(Type1Error::NotDuopoly(model.n()));
    }
    Ok(())
}

/// Whether player `i`'s unconstrained best-response demand at the given
/// prices strictly exceeds its budget (the insufficiency test of the
/// search, ties counting as sufficient).
fn insufficient_at<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    prices: &[T],
    i: usize,
) -> bool {
    if !caps.is_limited(i) {
        return false;
    }
    model.own_intercept_at(i, prices) > T::two() * caps.q(i) + T::of(BOUNDARY_TOL)
}

/// Duopoly type-I equilibrium via the four closed forms. Each candidate's
/// own validity conditions are checked; exactly one must hold. Boundary
/// ambiguity falls back to the oligopoly search.
pub fn duopoly_ne<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
) -> Result<EquilibriumResult<T>, Type1Error> {
    require_duopoly(model)?;
    let tol = T::of(BOUNDARY_TOL);
    let mut candidates: Vec<(CaseLabel, [T; 2], [T; 2], [bool; 2])> = Vec::new();

    let (p, q) = case1_point(model)?;
    if q[0] <= caps.q(0) + tol && q[1] <= caps.q(1) + tol {
        candidates.push((CaseLabel::Case1, p, q, [false, false]));
    }
    if caps.is_limited(0) {
        let (p, q) = case2_point(model, caps.q(0))?;
        if insufficient_at(model, caps, &p, 0) && q[1] <= caps.q(1) + tol {
            candidates.push((CaseLabel::Case2, p, q, [true, false]));
        }
    }
    if caps.is_limited(1) {
        let swapped = swap_players(model);
        let (ps, qs) = case2_point(&swapped, caps.q(1))?;
        let (p, q) = ([ps[1], ps[0]], [qs[1], qs[0]]);
        if insufficient_at(model, caps, &p, 1) && q[0] <= caps.q(0) + tol {
            candidates.push((CaseLabel::Case3, p, q, [false, true]));
        }
    }
    if caps.is_limited(0) && caps.is_limited(1) {
        let (p, q) = case4_point(model, caps.q(0), caps.q(1))?;
        if insufficient_at(model, caps, &p, 0) && insufficient_at(model, caps, &p, 1) {
            candidates.push((CaseLabel::Case4, p, q, [true, true]));
        }
    }

    match candidates.len() {
        1 => {
            let (label, p, q, binding) = candidates.pop().unwrap();
            if p[0] < T::zero() || p[1] < T::zero() {
                let player = usize::from(p[0] >= T::zero());
                return Err(Type1Error::SignViolation {
                    player,
                    value: p[player].to_f64().unwrap_or(f64::NAN),
                });
            }
            Ok(EquilibriumResult {
                payoffs: vec![p[0] * q[0], p[1] * q[1]],
                prices: PriceVector(p.to_vec()),
                demands: DemandVector(q.to_vec()),
                binding: binding.to_vec(),
                case_label: label,
                resolved_by_search: false,
            })
        }
        // A boundary tie: let the search settle it; it labels by binding set.
        _ => {
            let (mut result, _) = oligopoly_ne_search(model, caps)?;
            result.resolved_by_search = true;
            Ok(result)
        }
    }
}

/// One step of the insufficiency search.
#[derive(Debug, Clone)]
pub struct SearchState<T> {
    /// Zero-based search step; the initial unconstrained solve is step 0.
    pub iteration: usize,
    /// Sorted capacity-insufficient set used for this step's solve.
    pub insufficient: Vec<usize>,
    /// Mixed best-response coefficient matrix for that set.
    pub q_matrix: SquareMatrix<T>,
    /// Right-hand side paired with the matrix.
    pub rhs: Vec<T>,
    /// Prices solved at this step.
    pub prices: PriceVector<T>,
}

fn build_system<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    insufficient: &[bool],
) -> (SquareMatrix<T>, Vec<T>) {
    let n = model.n();
    let q = SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            if insufficient[i] {
                model.b(i)
            } else {
                T::two() * model.b(i)
            }
        } else {
            -model.c(i, j)
        }
    });
    let rhs = (0..n)
        .map(|i| {
            if insufficient[i] {
                model.a(i) - caps.q(i)
            } else {
                model.a(i)
            }
        })
        .collect();
    (q, rhs)
}

/// Iterative equilibrium search for the general type-I oligopoly.
///
/// Starts from the unconstrained best-response system, marks every player
/// whose implied demand exceeds its budget, rebuilds the mixed system and
/// re-solves until the insufficient set stabilizes. The set only grows, so
/// the loop runs at most `n` times past the initial solve.
pub fn oligopoly_ne_search<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
) -> Result<(EquilibriumResult<T>, Vec<SearchState<T>>), Type1Error> {
    let n = model.n();
    let mut insufficient = vec![false; n];
    let mut trace = Vec::new();

    for iteration in 0..=n {
        let (q_matrix, rhs) = build_system(model, caps, &insufficient);
        let prices = q_matrix
            .solve_spd(&rhs)
            .map_err(Type1Error::SingularSystem)?;
        for (i, &p) in prices.iter().enumerate() {
            if p < T::zero() {
                return Err(Type1Error::SignViolation {
                    player: i,
                    value: p.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        trace.push(SearchState {
            iteration,
            insufficient: (0..n).filter(|&i| insufficient[i]).collect(),
            q_matrix,
            rhs,
            prices: PriceVector(prices.clone()),
        });

        let mut changed = false;
        for i in 0..n {
            if !insufficient[i] && insufficient_at(model, caps, &prices, i) {
                insufficient[i] = true;
                changed = true;
            }
        }
        if !changed {
            let label = if n == 2 {
                match (insufficient[0], insufficient[1]) {
                    (false, false) => CaseLabel::Case1,
                    (true, false) => CaseLabel::Case2,
                    (false, true) => CaseLabel::Case3,
                    (true, true) => CaseLabel::Case4,
                }
            } else {
                CaseLabel::OligopolyGeneral
            };
            let result = EquilibriumResult::from_prices(model, caps, prices, insufficient, label)?;
            return Ok((result, trace));
        }
    }
    Err(Type1Error::NoConvergence(n))
}

/// Deviation grid for equilibrium verification: `points` prices spanning
/// `[0, span_factor * p_i]` per player.
#[derive(Debug, Clone, Copy)]
pub struct DeviationGrid {
    pub points: usize,
    pub span_factor: f64,
}

impl Default for DeviationGrid {
    fn default() -> Self {
        Self {
            points: 400,
            span_factor: 2.0,
        }
    }
}

/// A profitable unilateral deviation found by `ne_verify`.
#[derive(Debug, Clone)]
pub struct Counterexample<T> {
    pub player: usize,
    pub deviation_price: T,
    pub deviation_payoff: T,
    pub equilibrium_payoff: T,
}

#[derive(Debug, Clone)]
pub struct VerifyReport<T> {
    pub passed: bool,
    pub counterexample: Option<Counterexample<T>>,
}

/// Check that no player can gain more than `BOUNDARY_TOL` by a unilateral
/// price move on the deviation grid.
pub fn ne_verify<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    candidate: &EquilibriumResult<T>,
    grid: DeviationGrid,
) -> VerifyReport<T> {
    let n = model.n();
    let tol = T::of(BOUNDARY_TOL);
    let mut prices: Vec<T> = candidate.prices.as_slice().to_vec();
    for i in 0..n {
        let base = prices[i];
        let equilibrium_payoff = type1_payoff(model, caps, &prices, i);
        let hi = T::of(grid.span_factor) * base;
        let steps = T::of((grid.points - 1) as f64);
        for k in 0..grid.points {
            let p_dev = hi * T::of(k as f64) / steps;
            prices[i] = p_dev;
            let payoff = type1_payoff(model, caps, &prices, i);
            if payoff > equilibrium_payoff + tol {
                return VerifyReport {
                    passed: false,
                    counterexample: Some(Counterexample {
                        player: i,
                        deviation_price: p_dev,
                        deviation_payoff: payoff,
                        equilibrium_payoff,
                    }),
                };
            }
        }
        prices[i] = base;
    }
    VerifyReport {
        passed: true,
        counterexample: None,
    }
}

/// Serialize a search trace as one JSON record per line:
/// `{"k":0,"m":[..],"p":[..]}`.
pub fn trace_to_jsonl<T: Real>(trace: &[SearchState<T>]) -> String {
    let mut out = String::new();
    for state in trace {
        let mut line = String::from("{\"k\":");
        let _ = write!(line, "{}", state.iteration);
        line.push_str(",\"m\":[");
        for (idx, m) in state.insufficient.iter().enumerate() {
            if idx > 0 {
                line.push(',');
            }
            let _ = write!(line, "{}", m);
        }
        line.push_str("],\"p\":[");
        for (idx, p) in state.prices.iter().enumerate() {
            if idx > 0 {
                line.push(',');
            }
            let _ = write!(line, "{}", p);
        }
        line.push_str("]}\n");
        out.push_str(&line);
    }
    out
}
