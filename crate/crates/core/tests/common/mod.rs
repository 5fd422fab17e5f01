//! Shared generators for the randomized suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spectrum_market::{
    derive_demand_model, oligopoly_ne_search, CapacitySpec, DemandModel, MarketParameters,
};

/// Random utility parameters with `beta_i > mu > 0` and near-uniform
/// intercepts, so the derived demand intercepts stay positive.
pub fn random_params(rng: &mut ChaCha8Rng, n: usize) -> MarketParameters<f64> {
    loop {
        let mu = rng.gen_range(0.05..1.0);
        let beta: Vec<f64> = (0..n)
            .map(|_| mu * (1.0 + rng.gen_range(0.2..2.5)))
            .collect();
        let base = rng.gen_range(10.0..40.0);
        let alpha: Vec<f64> = (0..n)
            .map(|_| base * rng.gen_range(0.9..1.1))
            .collect();
        let params = MarketParameters::new(alpha, beta, mu, true).unwrap();
        if let Ok(model) = derive_demand_model(&params) {
            if model.nonpositive_intercepts().is_empty() {
                return params;
            }
        }
    }
}

pub fn random_market(rng: &mut ChaCha8Rng, n: usize) -> (MarketParameters<f64>, DemandModel<f64>) {
    let params = random_params(rng, n);
    let model = derive_demand_model(&params).unwrap();
    (params, model)
}

/// Capacities mixing ample, clearly binding and marginally loose budgets,
/// scaled by each player's unconstrained equilibrium demand.
pub fn random_caps(rng: &mut ChaCha8Rng, model: &DemandModel<f64>) -> CapacitySpec<f64> {
    let unlimited = CapacitySpec::unlimited(model.n());
    let (ne, _) = oligopoly_ne_search(model, &unlimited).expect("unconstrained solve");
    let caps: Vec<f64> = (0..model.n())
        .map(|i| {
            let q_star = ne.demands[i];
            match rng.gen_range(0..10) {
                0..=3 => f64::INFINITY,
                4..=7 => q_star * rng.gen_range(0.3..0.95),
                _ => q_star * rng.gen_range(1.0..1.15),
            }
        })
        .collect();
    CapacitySpec::new(caps).unwrap()
}

/// Relabel players of a duopoly-or-larger market by `perm` (new index ->
/// old index).
pub fn permute_market(
    model: &DemandModel<f64>,
    caps: &CapacitySpec<f64>,
    perm: &[usize],
) -> (DemandModel<f64>, CapacitySpec<f64>) {
    let n = model.n();
    let a: Vec<f64> = perm.iter().map(|&old| model.a(old)).collect();
    let b: Vec<f64> = perm.iter().map(|&old| model.b(old)).collect();
    let cross = spectrum_market::SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            0.0
        } else {
            model.c(perm[i], perm[j])
        }
    });
    let q: Vec<f64> = perm.iter().map(|&old| caps.q(old)).collect();
    (
        DemandModel::new(a, b, cross).unwrap(),
        CapacitySpec::new(q).unwrap(),
    )
}
