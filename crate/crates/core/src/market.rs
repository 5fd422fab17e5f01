//! Market primitives: secondary-user utility parameters, the derived linear
//! demand system, per-player capacities, and payoff evaluation.

use thiserror::Error;

use crate::linalg::{LinalgError, SquareMatrix, PIVOT_TOL};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("player count must be at least 2, got {0}")]
    TooFewPlayers(usize),
    #[error("parameter {name}[{index}] = {value} violates {constraint}")]
    InvalidParameter {
        name: &'static str,
        index: usize,
        value: f64,
        constraint: &'static str,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("substitutability matrix is not positive definite")]
    NotPositiveDefinite,
    #[error(
        "derived coefficient {name}[{index}] = {value} has the wrong sign; \
         inputs violate the market validity conditions"
    )]
    SignViolation {
        name: &'static str,
        index: usize,
        value: f64,
    },
    #[error("cross-price coefficients are not a single substitutability level")]
    NonUniformSubstitutability,
    #[error("capacity {index}: W r - B = {value} must be positive")]
    InvalidCapacity { index: usize, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Vector of per-player spectrum prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector<T>(pub Vec<T>);

/// Vector of per-player spectrum demands (MHz). May contain negative entries;
/// callers decide whether and how to clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandVector<T>(pub Vec<T>);

macro_rules! vector_impl {
    ($name:ident) => {
        impl<T: Real> $name<T> {
            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[T] {
                &self.0
            }

            pub fn iter(&self) -> std::slice::Iter<'_, T> {
                self.0.iter()
            }

            pub fn all_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }

            /// Indices of strictly negative entries.
            pub fn negative_indices(&self) -> Vec<usize> {
                self.0
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| **x < T::zero())
                    .map(|(i, _)| i)
                    .collect()
            }

            /// Componentwise max distance to another vector.
            pub fn max_distance(&self, other: &Self) -> T {
                self.0
                    .iter()
                    .zip(other.0.iter())
                    .map(|(a, b)| (*a - *b).abs())
                    .fold(T::zero(), T::max)
            }
        }

        impl<T> std::ops::Index<usize> for $name<T> {
            type Output = T;
            fn index(&self, i: usize) -> &T {
                &self.0[i]
            }
        }

        impl<T> From<Vec<T>> for $name<T> {
            fn from(v: Vec<T>) -> Self {
                Self(v)
            }
        }
    };
}

vector_impl!(PriceVector);
vector_impl!(DemandVector);

/// Raw utility-side market parameters: intercepts, own effects and the
/// substitutability level of the quadratic secondary-user utility.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParameters<T> {
    n: usize,
    alpha: Vec<T>,
    beta: Vec<T>,
    mu: T,
}

impl<T: Real> MarketParameters<T> {
    /// Validated constructor. With `strict` set, enforces `beta_i > mu > 0`
    /// for every player, the precondition of the positive-definiteness and
    /// sign lemmas. Without it, only basic positivity is required.
    pub fn new(alpha: Vec<T>, beta: Vec<T>, mu: T, strict: bool) -> Result<Self, MarketError> {
        let n = alpha.len();
        if n < 2 {
            return Err(MarketError::TooFewPlayers(n));
        }
        if beta.len() != n {
            return Err(MarketError::DimensionMismatch {
                expected: n,
                got: beta.len(),
            });
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !(a > T::zero()) {
                return Err(MarketError::InvalidParameter {
                    name: "alpha",
                    index: i,
                    value: a.to_f64().unwrap_or(f64::NAN),
                    constraint: "alpha > 0",
                });
            }
        }
        if mu < T::zero() {
            return Err(MarketError::InvalidParameter {
                name: "mu",
                index: 0,
                value: mu.to_f64().unwrap_or(f64::NAN),
                constraint: "mu >= 0",
            });
        }
        for (i, &b) in beta.iter().enumerate() {
            let ok = if strict { b > mu && mu > T::zero() } else { b > T::zero() };
            if !ok {
                return Err(MarketError::InvalidParameter {
                    name: "beta",
                    index: i,
                    value: b.to_f64().unwrap_or(f64::NAN),
                    constraint: if strict { "beta > mu > 0" } else { "beta > 0" },
                });
            }
        }
        Ok(Self { n, alpha, beta, mu })
    }

    /// Recover utility parameters from a demand model by inverting its slope
    /// matrix. Fails if the inverse does not have a uniform off-diagonal.
    pub fn try_from_demand(model: &DemandModel<T>) -> Result<Self, MarketError> {
        let n = model.n();
        let slope = SquareMatrix::from_fn(n, |i, j| {
            if i == j {
                model.b(i)
            } else {
                -model.c(i, j)
            }
        });
        let t = slope.inverse_spd()?;
        let mu = t[(0, 1)];
        let tol = T::of(1e-9) * (T::one() + mu.abs());
        for i in 0..n {
            for j in 0..n {
                if i != j && (t[(i, j)] - mu).abs() > tol {
                    return Err(MarketError::NonUniformSubstitutability);
                }
            }
        }
        let beta: Vec<T> = (0..n).map(|i| t[(i, i)]).collect();
        let alpha: Vec<T> = (0..n)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..n {
                    s = s + t[(i, j)] * model.a(j);
                }
                s
            })
            .collect();
        Self::new(alpha, beta, mu, false)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self, i: usize) -> T {
        self.alpha[i]
    }

    pub fn beta(&self, i: usize) -> T {
        self.beta[i]
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn alphas(&self) -> &[T] {
        &self.alpha
    }
}

/// Substitutability matrix: own effects on the diagonal, the substitutability
/// level everywhere else. The secondary-user utility is concave exactly when
/// this matrix is positive definite.
pub fn build_substitutability_matrix<T: Real>(params: &MarketParameters<T>) -> SquareMatrix<T> {
    SquareMatrix::from_fn(params.n(), |i, j| {
        if i == j {
            params.beta(i)
        } else {
            params.mu()
        }
    })
}

/// True iff `m` is symmetric within `tol` and every pivot of its symmetric
/// factorization exceeds `tol`.
pub fn check_positive_definite<T: Real>(m: &SquareMatrix<T>, tol: T) -> Result<bool, MarketError> {
    Ok(m.is_positive_definite(tol)?)
}

/// Linear demand system mapping prices to demands:
/// `q_i = a_i - b_i p_i + sum_{j != i} c_ij p_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel<T> {
    n: usize,
    a: Vec<T>,
    b: Vec<T>,
    /// Flattened symmetric cross-slope matrix with zero diagonal.
    c: Vec<T>,
}

impl<T: Real> DemandModel<T> {
    /// Build a model from explicit coefficients. `cross` is the symmetric
    /// cross-slope matrix with an ignored diagonal.
    pub fn new(a: Vec<T>, b: Vec<T>, cross: SquareMatrix<T>) -> Result<Self, MarketError> {
        let n = a.len();
        if n < 2 {
            return Err(MarketError::TooFewPlayers(n));
        }
        if b.len() != n || cross.n() != n {
            return Err(MarketError::DimensionMismatch {
                expected: n,
                got: b.len().min(cross.n()),
            });
        }
        for (i, &bi) in b.iter().enumerate() {
            if !(bi > T::zero()) {
                return Err(MarketError::SignViolation {
                    name: "b",
                    index: i,
                    value: bi.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let mut c = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    if cross[(i, j)] < T::zero() {
                        return Err(MarketError::SignViolation {
                            name: "c",
                            index: i * n + j,
                            value: cross[(i, j)].to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    // construct exactly symmetric
                    c[i * n + j] = if i < j { cross[(i, j)] } else { cross[(j, i)] };
                }
            }
        }
        Ok(Self { n, a, b, c })
    }

    /// Duopoly shorthand with a single cross slope.
    pub fn duopoly(a: [T; 2], b: [T; 2], c: T) -> Result<Self, MarketError> {
        let cross = SquareMatrix::from_fn(2, |i, j| if i == j { T::zero() } else { c });
        Self::new(a.to_vec(), b.to_vec(), cross)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self, i: usize) -> T {
        self.a[i]
    }

    pub fn b(&self, i: usize) -> T {
        self.b[i]
    }

    pub fn c(&self, i: usize, j: usize) -> T {
        debug_assert_ne!(i, j);
        self.c[i * self.n + j]
    }

    /// Single cross slope of a duopoly model.
    pub fn c2(&self) -> T {
        debug_assert_eq!(self.n, 2);
        self.c(0, 1)
    }

    /// Indices of players whose demand intercept is nonpositive. The demand
    /// derivation only warns about these; solvers may still run.
    pub fn nonpositive_intercepts(&self) -> Vec<usize> {
        self.a
            .iter()
            .enumerate()
            .filter(|(_, a)| **a <= T::zero())
            .map(|(i, _)| i)
            .collect()
    }

    /// `a_i + sum_{j != i} c_ij p_j`, the demand a player would face at a
    /// zero own price. Appears all over the best-response formulas.
    pub fn own_intercept_at(&self, i: usize, prices: &[T]) -> T {
        let mut s = self.a[i];
        for j in 0..self.n {
            if j != i {
                s = s + self.c(i, j) * prices[j];
            }
        }
        s
    }
}

/// Derive the linear demand system from utility parameters by inverting the
/// substitutability matrix.
pub fn derive_demand_model<T: Real>(
    params: &MarketParameters<T>,
) -> Result<DemandModel<T>, MarketError> {
    let t = build_substitutability_matrix(params);
    if !t.is_positive_definite(T::of(PIVOT_TOL))? {
        return Err(MarketError::NotPositiveDefinite);
    }
    let inv = t.inverse_spd()?;
    let n = params.n();
    let b: Vec<T> = (0..n).map(|i| inv[(i, i)]).collect();
    let cross = SquareMatrix::from_fn(n, |i, j| if i == j { T::zero() } else { -inv[(i, j)] });
    let a: Vec<T> = (0..n)
        .map(|i| {
            let mut s = params.alpha(i) * b[i];
            for j in 0..n {
                if j != i {
                    s = s - cross[(i, j)] * params.alpha(j);
                }
            }
            s
        })
        .collect();
    DemandModel::new(a, b, cross)
}

/// Spectrum demands at the given prices. Entries may be negative; reporting
/// is the caller's concern.
pub fn demand<T: Real>(
    model: &DemandModel<T>,
    prices: &PriceVector<T>,
) -> Result<DemandVector<T>, MarketError> {
    if prices.len() != model.n() {
        return Err(MarketError::DimensionMismatch {
            expected: model.n(),
            got: prices.len(),
        });
    }
    let q = (0..model.n())
        .map(|i| model.own_intercept_at(i, prices.as_slice()) - model.b(i) * prices[i])
        .collect();
    Ok(DemandVector(q))
}

/// Prices clearing the given demands: `p_i = alpha_i - beta_i q_i - mu sum_{j != i} q_j`.
pub fn inverse_demand<T: Real>(
    params: &MarketParameters<T>,
    demands: &DemandVector<T>,
) -> Result<PriceVector<T>, MarketError> {
    if demands.len() != params.n() {
        return Err(MarketError::DimensionMismatch {
            expected: params.n(),
            got: demands.len(),
        });
    }
    let total: T = demands.iter().fold(T::zero(), |acc, &q| acc + q);
    let p = (0..params.n())
        .map(|i| {
            let qi = demands[i];
            params.alpha(i) - params.beta(i) * qi - params.mu() * (total - qi)
        })
        .collect();
    Ok(PriceVector(p))
}

/// Quadratic utility of the representative secondary user at demand `q` and
/// prices `p`.
pub fn secondary_utility<T: Real>(
    params: &MarketParameters<T>,
    demands: &DemandVector<T>,
    prices: &PriceVector<T>,
) -> Result<T, MarketError> {
    let n = params.n();
    if demands.len() != n || prices.len() != n {
        return Err(MarketError::DimensionMismatch {
            expected: n,
            got: demands.len().min(prices.len()),
        });
    }
    let mut linear = T::zero();
    let mut quad = T::zero();
    for i in 0..n {
        linear = linear + (params.alpha(i) - prices[i]) * demands[i];
        quad = quad + params.beta(i) * demands[i] * demands[i];
        for j in (i + 1)..n {
            quad = quad + T::two() * params.mu() * demands[i] * demands[j];
        }
    }
    Ok(linear - T::half() * quad)
}

/// Per-player spectrum budgets. Infinite entries mean "no limit"; the
/// sentinel is the IEEE infinity so case classification stays exact.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySpec<T> {
    q_avail: Vec<T>,
}

impl<T: Real> CapacitySpec<T> {
    pub fn new(q_avail: Vec<T>) -> Result<Self, MarketError> {
        for (i, &q) in q_avail.iter().enumerate() {
            if !(q > T::zero()) || q.is_nan() {
                return Err(MarketError::InvalidCapacity {
                    index: i,
                    value: q.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { q_avail })
    }

    /// All players unconstrained.
    pub fn unlimited(n: usize) -> Self {
        Self {
            q_avail: vec![T::infinity(); n],
        }
    }

    /// Derive budgets from total spectrum, primary traffic load and primary
    /// spectral efficiency: `q_a = W - B / r`.
    pub fn from_loads(w: &[T], load: &[T], rate: &[T]) -> Result<Self, MarketError> {
        let q: Vec<T> = w
            .iter()
            .zip(load)
            .zip(rate)
            .map(|((&w, &b), &r)| w - b / r)
            .collect();
        Self::new(q)
    }

    pub fn n(&self) -> usize {
        self.q_avail.len()
    }

    pub fn q(&self, i: usize) -> T {
        self.q_avail[i]
    }

    pub fn is_limited(&self, i: usize) -> bool {
        self.q_avail[i].is_finite()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.q_avail
    }

    /// Sum of finite budgets; infinite entries are skipped.
    pub fn finite_total(&self) -> T {
        self.q_avail
            .iter()
            .filter(|q| q.is_finite())
            .fold(T::zero(), |acc, &q| acc + q)
    }
}
