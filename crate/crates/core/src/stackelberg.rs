//! Leader-follower (Stackelberg) duopoly pricing via backward induction,
//! for every combination of capacity case and leader assignment.

use crate::market::{CapacitySpec, DemandModel, DemandVector, PriceVector};
use crate::scalar::Real;
use crate::type1::{duopoly_ne, CaseLabel, EquilibriumResult, Type1Error, BOUNDARY_TOL};

#[derive(Debug, Clone)]
pub struct StackelbergResult<T> {
    /// Index of the first mover.
    pub leader: usize,
    pub prices: PriceVector<T>,
    pub demands: DemandVector<T>,
    pub payoffs: Vec<T>,
    pub case_label: CaseLabel,
    /// True when the leader-follower point coincides with the simultaneous
    /// equilibrium (insufficient leader, or both players insufficient).
    pub coincides_with_static: bool,
}

/// Closed form of the unconstrained leader-follower point, written for
/// leader `l` and follower `f` of a duopoly in leader-first coordinates.
/// Returns `(p_l, p_f, q_l, q_f)`.
fn unconstrained_point<T: Real>(
    a_l: T,
    b_l: T,
    a_f: T,
    b_f: T,
    c: T,
) -> Result<(T, T, T, T), Type1Error> {
    let den = T::two() * b_l * b_f - c * c;
    if den <= T::zero() {
        return Err(Type1Error::DegenerateMarket("2 b_l b_f - c^2"));
    }
    let p_l = (T::two() * a_l * b_f + c * a_f) / (T::two() * den);
    let p_f = (a_f + c * p_l) / (T::two() * b_f);
    let q_l = a_l - b_l * p_l + c * p_f;
    let q_f = b_f * p_f;
    Ok((p_l, p_f, q_l, q_f))
}

/// Closed form with the follower pinned at its capacity `q_f_cap`
/// (the follower prices so its demand equals the budget; the leader
/// maximizes along that line). Returns `(p_l, p_f, q_l)`.
fn follower_binding_point<T: Real>(
    a_l: T,
    b_l: T,
    a_f: T,
    b_f: T,
    c: T,
    q_f_cap: T,
) -> Result<(T, T, T), Type1Error> {
    let den = b_l * b_f - c * c;
    if den <= T::zero() {
        return Err(Type1Error::DegenerateMarket("b_l b_f - c^2"));
    }
    let p_l = (a_l * b_f + c * (a_f - q_f_cap)) / (T::two() * den);
    let p_f = (a_f - q_f_cap + c * p_l) / b_f;
    let q_l = a_l - b_l * p_l + c * p_f;
    Ok((p_l, p_f, q_l))
}

/// Insufficiency test in leader-follower form: best-response demand at the
/// opponent price exceeds the budget (ties count as sufficient).
fn br_demand_exceeds<T: Real>(a_i: T, c: T, p_other: T, cap: T) -> bool {
    if !cap.is_finite() {
        return false;
    }
    (a_i + c * p_other) * T::half() > cap + T::of(BOUNDARY_TOL)
}

/// Leader-follower equilibrium for the given leader (0 or 1).
///
/// Case routing follows the capacity taxonomy of the simultaneous game,
/// with the thresholds evaluated from the leader-follower closed forms:
/// an insufficient leader reproduces the static point, an insufficient
/// follower moves the pair to the distinct binding-line optimum, and a
/// doubly insufficient market pins both demands at capacity for either
/// leader.
pub fn stackelberg_ne<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
    leader: usize,
) -> Result<StackelbergResult<T>, Type1Error> {
    if model.n() != 2 {
        return Err(Type1Error::NotDuopoly(model.n()));
    }
    assert!(leader < 2, "leader index out of range");
    let follower = 1 - leader;
    let tol = T::of(BOUNDARY_TOL);
    let c = model.c2();
    let (a_l, b_l) = (model.a(leader), model.b(leader));
    let (a_f, b_f) = (model.a(follower), model.b(follower));
    let (cap_l, cap_f) = (caps.q(leader), caps.q(follower));

    let mut candidates: Vec<(CaseLabel, [T; 2], [T; 2], bool)> = Vec::new();
    let per_player = |p_l: T, p_f: T, q_l: T, q_f: T| {
        let mut p = [T::zero(); 2];
        let mut q = [T::zero(); 2];
        p[leader] = p_l;
        p[follower] = p_f;
        q[leader] = q_l;
        q[follower] = q_f;
        (p, q)
    };
    let short_label = |short: usize| {
        if short == 0 {
            CaseLabel::Case2
        } else {
            CaseLabel::Case3
        }
    };

    // Case 1: both budgets cover the unconstrained leader-follower demands.
    let (p_l, p_f, q_l, q_f) = unconstrained_point(a_l, b_l, a_f, b_f, c)?;
    if q_l <= cap_l + tol && q_f <= cap_f + tol {
        let (p, q) = per_player(p_l, p_f, q_l, q_f);
        candidates.push((CaseLabel::Case1, p, q, false));
    }

    // Case 2/3 with the short player leading: the static point carries over.
    if caps.is_limited(leader) && q_l > cap_l + tol {
        let static_ne = duopoly_ne(model, caps)?;
        if static_ne.case_label == short_label(leader)
            && static_ne.demands[follower] <= cap_f + tol
        {
            let p = [static_ne.prices[0], static_ne.prices[1]];
            let q = [static_ne.demands[0], static_ne.demands[1]];
            candidates.push((short_label(leader), p, q, true));
        }
    }

    // Case 2/3 with the short player following: the leader optimizes along
    // the follower's capacity-binding response line.
    if caps.is_limited(follower) && q_f > cap_f + tol {
        let (p_l, p_f, q_l) = follower_binding_point(a_l, b_l, a_f, b_f, c, cap_f)?;
        if q_l <= cap_l + tol && br_demand_exceeds(a_f, c, p_l, cap_f) {
            let (p, q) = per_player(p_l, p_f, q_l, cap_f);
            candidates.push((short_label(follower), p, q, false));
        }
    }

    // Case 4: both insufficient; the static point is leader-invariant.
    if caps.is_limited(0) && caps.is_limited(1) {
        let static_ne = duopoly_ne(model, caps)?;
        if static_ne.case_label == CaseLabel::Case4 {
            let p = [static_ne.prices[0], static_ne.prices[1]];
            let q = [static_ne.demands[0], static_ne.demands[1]];
            candidates.push((CaseLabel::Case4, p, q, true));
        }
    }

    if candidates.len() != 1 {
        return Err(Type1Error::InconsistentCase {
            valid: candidates.len(),
        });
    }
    let (case_label, p, q, coincides_with_static) = candidates.pop().unwrap();
    Ok(StackelbergResult {
        leader,
        payoffs: vec![p[0] * q[0], p[1] * q[1]],
        prices: PriceVector(p.to_vec()),
        demands: DemandVector(q.to_vec()),
        case_label,
        coincides_with_static,
    })
}

/// Side-by-side comparison of the simultaneous game with both leader
/// assignments.
#[derive(Debug, Clone)]
pub struct GapReport<T> {
    pub static_ne: EquilibriumResult<T>,
    /// Result with player 0 leading.
    pub leader_first: StackelbergResult<T>,
    /// Result with player 1 leading.
    pub leader_second: StackelbergResult<T>,
    /// `price_gap[assignment][player]`: leader-follower price minus static.
    pub price_gap: [[T; 2]; 2],
    /// `payoff_gap[assignment][player]`: leader-follower payoff minus static.
    pub payoff_gap: [[T; 2]; 2],
}

pub fn leadership_gap<T: Real>(
    model: &DemandModel<T>,
    caps: &CapacitySpec<T>,
) -> Result<GapReport<T>, Type1Error> {
    let static_ne = duopoly_ne(model, caps)?;
    let leader_first = stackelberg_ne(model, caps, 0)?;
    let leader_second = stackelberg_ne(model, caps, 1)?;
    let mut price_gap = [[T::zero(); 2]; 2];
    let mut payoff_gap = [[T::zero(); 2]; 2];
    for (row, s) in [&leader_first, &leader_second].into_iter().enumerate() {
        for i in 0..2 {
            price_gap[row][i] = s.prices[i] - static_ne.prices[i];
            payoff_gap[row][i] = s.payoffs[i] - static_ne.payoffs[i];
        }
    }
    Ok(GapReport {
        static_ne,
        leader_first,
        leader_second,
        price_gap,
        payoff_gap,
    })
}
