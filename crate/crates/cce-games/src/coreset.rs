//! Core sets of state-action pairs, the design matrix they induce, and the
//! ridge-regression evaluator built on top.
//!
//! A core set `D` holds pairs `(s, a)` (duplicates allowed) and maintains
//! the design matrix `Λ = λI + Σ φφ^T` together with its inverse. The
//! quadratic form `max_a φ(s,a)^T Λ^{-1} φ(s,a)` measures how uncertain the
//! regression still is about state `s`; a state is *confident* once that
//! form is at most the threshold `τ` (boundary values count as confident).
//! [`explore`] greedily appends the most uncertain action until the input
//! state is confident for every agent, which is the only way core sets grow.
//!
//! `Λ^{-1}` is maintained by Sherman-Morrison rank-one updates with a full
//! Cholesky recompute every 64 additions to bound numerical drift.

use crate::features::FeatureMap;
use crate::linalg::{dot, SymMatrix};
use crate::{Error, Result};

/// Full recompute cadence for the maintained inverse.
const RECOMPUTE_INTERVAL: usize = 64;

/// Core set with maintained design matrix and inverse for one `(h, i)`.
#[derive(Debug, Clone)]
pub struct CoreSet {
    tau: f64,
    lambda: f64,
    pairs: Vec<(usize, usize)>,
    design: SymMatrix,
    inverse: SymMatrix,
    adds_since_recompute: usize,
}

impl CoreSet {
    pub fn new(dim: usize, tau: f64, lambda: f64) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::NonPositive("tau"));
        }
        if lambda <= 0.0 {
            return Err(Error::NonPositive("lambda"));
        }
        Ok(CoreSet {
            tau,
            lambda,
            pairs: Vec::new(),
            design: SymMatrix::scaled_identity(dim, lambda),
            inverse: SymMatrix::scaled_identity(dim, 1.0 / lambda),
            adds_since_recompute: 0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn design(&self) -> &SymMatrix {
        &self.design
    }

    pub fn inverse(&self) -> &SymMatrix {
        &self.inverse
    }

    /// `φ(s,a)^T Λ^{-1} φ(s,a)`.
    pub fn action_uncertainty(&self, fmap: &FeatureMap, s: usize, a: usize) -> f64 {
        self.inverse.quad_form(fmap.phi(s, a))
    }

    /// `max_a φ(s,a)^T Λ^{-1} φ(s,a)`, the state's coverage score.
    pub fn uncertainty(&self, fmap: &FeatureMap, s: usize) -> f64 {
        (0..fmap.num_actions())
            .map(|a| self.action_uncertainty(fmap, s, a))
            .fold(0.0, f64::max)
    }

    /// Whether `s` is well covered: `uncertainty(s) <= τ`.
    pub fn is_confident(&self, fmap: &FeatureMap, s: usize) -> bool {
        self.uncertainty(fmap, s) <= self.tau
    }

    /// Append `(s, a)` and apply the rank-one design update.
    pub fn add_pair(&mut self, fmap: &FeatureMap, s: usize, a: usize) {
        let phi = fmap.phi(s, a);
        self.pairs.push((s, a));
        self.design.add_outer(phi);
        self.inverse.sherman_morrison_update(phi);
        self.adds_since_recompute += 1;
        if self.adds_since_recompute >= RECOMPUTE_INTERVAL {
            self.recompute_inverse();
        }
    }

    /// Replace the maintained inverse with a fresh Cholesky inversion.
    pub fn recompute_inverse(&mut self) {
        self.inverse = self
            .design
            .cholesky_inverse()
            .expect("design matrix is positive definite by construction");
        self.adds_since_recompute = 0;
        debug_assert!(self.design.product_identity_residual(&self.inverse) <= 1e-8);
    }

    /// Ridge coefficients `θ = Λ^{-1} Σ_j φ_j q_j` for per-pair targets.
    pub fn ridge_coefficients(&self, fmap: &FeatureMap, targets: &[f64]) -> Result<Vec<f64>> {
        if targets.len() != self.pairs.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} core pairs",
                targets.len(),
                self.pairs.len()
            )));
        }
        let d = fmap.dim();
        let mut weighted = vec![0.0; d];
        for (&(s, a), &q) in self.pairs.iter().zip(targets) {
            for (w, &f) in weighted.iter_mut().zip(fmap.phi(s, a)) {
                *w += f * q;
            }
        }
        let mut theta = vec![0.0; d];
        self.inverse.matvec(&weighted, &mut theta);
        Ok(theta)
    }

    /// Ridge prediction `φ(s,a)^T Λ^{-1} Σ_j φ_j q_j` at one query point.
    pub fn ridge_evaluate(
        &self,
        fmap: &FeatureMap,
        targets: &[f64],
        s: usize,
        a: usize,
    ) -> Result<f64> {
        let theta = self.ridge_coefficients(fmap, targets)?;
        Ok(dot(fmap.phi(s, a), &theta))
    }
}

/// Make `s` confident for every agent: for each agent in order, repeatedly
/// add the argmax-uncertainty action (lowest index on ties) while the
/// state's coverage score exceeds `τ`. Returns the number of pairs added.
pub fn explore(cores: &mut [CoreSet], fmaps: &[FeatureMap], s: usize) -> usize {
    let mut added = 0;
    for (core, fmap) in cores.iter_mut().zip(fmaps) {
        loop {
            let mut best_a = 0;
            let mut best = f64::NEG_INFINITY;
            for a in 0..fmap.num_actions() {
                let u = core.action_uncertainty(fmap, s, a);
                if u > best {
                    best = u;
                    best_a = a;
                }
            }
            if best <= core.tau {
                break;
            }
            core.add_pair(fmap, s, best_a);
            added += 1;
        }
    }
    added
}

/// Whether `s` lies in the joint confident set `C = ∩_i C_i`.
pub fn confident_for_all(cores: &[CoreSet], fmaps: &[FeatureMap], s: usize) -> bool {
    cores
        .iter()
        .zip(fmaps)
        .all(|(core, fmap)| core.is_confident(fmap, s))
}

/// Worst-case core-set size for threshold `τ`, regularizer `λ` and feature
/// dimension `d`:
/// `(e/(e-1)) · ((1+τ)/τ) · d · (ln(1 + 1/τ) + ln(1 + 1/λ))`.
pub fn c_max(dim: usize, tau: f64, lambda: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::NonPositive("dim"));
    }
    if tau <= 0.0 {
        return Err(Error::NonPositive("tau"));
    }
    if lambda <= 0.0 {
        return Err(Error::NonPositive("lambda"));
    }
    let e = std::f64::consts::E;
    Ok(e / (e - 1.0)
        * ((1.0 + tau) / tau)
        * dim as f64
        * ((1.0 + 1.0 / tau).ln() + (1.0 + 1.0 / lambda).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_unit_map(
        rng: &mut impl Rng,
        num_states: usize,
        num_actions: usize,
        dim: usize,
    ) -> FeatureMap {
        let mut table = Vec::with_capacity(num_states * num_actions * dim);
        for _ in 0..num_states * num_actions {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dot(&v, &v).sqrt().max(1e-9);
            table.extend(v.iter().map(|x| x / norm));
        }
        FeatureMap::from_table(num_states, num_actions, dim, table, None).unwrap()
    }

    #[test]
    fn empty_core_one_hot_uncertainty_is_inverse_lambda() {
        let f = FeatureMap::one_hot(3, 2);
        let core = CoreSet::new(f.dim(), 0.5, 1.0).unwrap();
        for s in 0..3 {
            assert!((core.uncertainty(&f, s) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adding_one_hot_pair_halves_its_quadratic_form() {
        let f = FeatureMap::one_hot(2, 2);
        let mut core = CoreSet::new(f.dim(), 0.5, 1.0).unwrap();
        core.add_pair(&f, 0, 1);
        assert!((core.action_uncertainty(&f, 0, 1) - 0.5).abs() < 1e-12);
        assert!((core.action_uncertainty(&f, 0, 0) - 1.0).abs() < 1e-12);
        assert!((core.inverse().get(1, 1) - 0.5).abs() < 1e-12);
        assert!((core.inverse().get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_feature_vector_is_inert() {
        let f = FeatureMap::from_table(1, 2, 2, vec![0.0, 0.0, 1.0, 0.0], None).unwrap();
        let mut core = CoreSet::new(2, 0.5, 1.0).unwrap();
        let before = core.inverse().clone();
        core.add_pair(&f, 0, 0);
        assert_eq!(core.inverse().max_abs_diff(&before), 0.0);
        assert_eq!(core.len(), 1);
        // All-zero features give zero uncertainty.
        let zeros = FeatureMap::from_table(1, 1, 2, vec![0.0, 0.0], None).unwrap();
        assert_eq!(CoreSet::new(2, 0.5, 1.0).unwrap().uncertainty(&zeros, 0), 0.0);
    }

    #[test]
    fn maintained_inverse_tracks_fresh_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = random_unit_map(&mut rng, 10, 1, 6);
        let mut core = CoreSet::new(6, 0.5, 1.0).unwrap();
        for _ in 0..10 {
            core.add_pair(&f, rng.gen_range(0..10), 0);
        }
        let fresh = core.design().cholesky_inverse().unwrap();
        assert!(core.inverse().max_abs_diff(&fresh) < 1e-8);
    }

    #[test]
    fn explore_covers_each_one_hot_action_once() {
        let f = FeatureMap::one_hot(2, 3);
        let mut cores = vec![CoreSet::new(f.dim(), 0.5, 1.0).unwrap()];
        let added = explore(&mut cores, std::slice::from_ref(&f), 0);
        assert_eq!(added, 3);
        assert_eq!(cores[0].pairs(), &[(0, 0), (0, 1), (0, 2)]);
        for a in 0..3 {
            assert!((cores[0].action_uncertainty(&f, 0, a) - 0.5).abs() < 1e-12);
        }
        // Re-exploring a confident state is a no-op.
        assert_eq!(explore(&mut cores, std::slice::from_ref(&f), 0), 0);
        assert!(confident_for_all(&cores, std::slice::from_ref(&f), 0));
        assert!(!confident_for_all(&cores, std::slice::from_ref(&f), 1));
    }

    #[test]
    fn c_max_matches_frozen_values_and_decreases_in_tau() {
        assert!((c_max(4, 1.0, 1.0).unwrap() - 17.5447).abs() < 1e-3);
        assert!((c_max(1, 1.0, 1.0).unwrap() - 4.3862).abs() < 1e-3);
        let mut last = f64::INFINITY;
        for tau in [0.25, 0.5, 1.0, 2.0, 8.0] {
            let v = c_max(8, tau, 1.0).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(c_max(0, 1.0, 1.0).is_err());
        assert!(c_max(4, 0.0, 1.0).is_err());
        assert!(c_max(4, 1.0, -1.0).is_err());
    }

    #[test]
    fn explore_respects_core_set_bound_on_adversarial_streams() {
        // Random unit vectors, clustered vectors, and one-hot features all
        // stay within floor(c_max).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (tau, lambda, d) = (0.5, 1.0, 8);
        let bound = c_max(d, tau, lambda).unwrap().floor() as usize;

        let f = random_unit_map(&mut rng, 50, 4, d);
        let mut cores = vec![CoreSet::new(d, tau, lambda).unwrap()];
        for s in 0..50 {
            explore(&mut cores, std::slice::from_ref(&f), s);
        }
        assert!(cores[0].len() <= bound, "{} > {bound}", cores[0].len());

        // Clustered: tight noise around a handful of directions.
        let centers = random_unit_map(&mut rng, 4, 1, d);
        let mut table = Vec::new();
        for s in 0..40 {
            for _a in 0..2 {
                let c = centers.phi(s % 4, 0);
                let v: Vec<f64> = c
                    .iter()
                    .map(|x| x + rng.gen_range(-0.05..0.05))
                    .collect();
                let norm = dot(&v, &v).sqrt() * (1.0 + 1e-9);
                table.extend(v.iter().map(|x| x / norm));
            }
        }
        let f = FeatureMap::from_table(40, 2, d, table, None).unwrap();
        let mut cores = vec![CoreSet::new(d, tau, lambda).unwrap()];
        for s in 0..40 {
            explore(&mut cores, std::slice::from_ref(&f), s);
        }
        assert!(cores[0].len() <= bound);

        let f = FeatureMap::one_hot(4, 2);
        let mut cores = vec![CoreSet::new(f.dim(), tau, lambda).unwrap()];
        for s in 0..4 {
            explore(&mut cores, std::slice::from_ref(&f), s);
        }
        assert!(cores[0].len() <= c_max(f.dim(), tau, lambda).unwrap().floor() as usize);
    }

    #[test]
    fn ridge_matches_scalar_arithmetic() {
        let f = FeatureMap::one_hot(2, 2);
        let mut core = CoreSet::new(f.dim(), 1.0, 1.0).unwrap();
        core.add_pair(&f, 0, 0);
        assert!((core.ridge_evaluate(&f, &[0.7], 0, 0).unwrap() - 0.35).abs() < 1e-12);
        // Absent pair predicts zero under one-hot features.
        assert_eq!(core.ridge_evaluate(&f, &[0.7], 1, 1).unwrap(), 0.0);
        // All-zero targets predict zero everywhere.
        assert_eq!(core.ridge_evaluate(&f, &[0.0], 0, 0).unwrap(), 0.0);
        // Length mismatch is an error.
        assert!(core.ridge_evaluate(&f, &[0.7, 0.1], 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn ridge_is_linear_in_targets(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_unit_map(&mut rng, 6, 2, 4);
            let mut core = CoreSet::new(4, 0.5, 0.7).unwrap();
            for _ in 0..8 {
                core.add_pair(&f, rng.gen_range(0..6), rng.gen_range(0..2));
            }
            let q1: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q2: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let alpha = 1.7;
            let combo: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| alpha * a + b).collect();
            let (s, a) = (rng.gen_range(0..6), rng.gen_range(0..2));
            let lhs = core.ridge_evaluate(&f, &combo, s, a).unwrap();
            let rhs = alpha * core.ridge_evaluate(&f, &q1, s, a).unwrap()
                + core.ridge_evaluate(&f, &q2, s, a).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn one_hot_ridge_reduces_to_counted_average(
            n in 1usize..12,
            q in -5.0f64..5.0,
            lambda in 1e-3f64..10.0,
        ) {
            let f = FeatureMap::one_hot(2, 2);
            let mut core = CoreSet::new(f.dim(), 1.0, lambda).unwrap();
            for _ in 0..n {
                core.add_pair(&f, 1, 0);
            }
            let targets = vec![q; n];
            let got = core.ridge_evaluate(&f, &targets, 1, 0).unwrap();
            let expected = n as f64 * q / (lambda + n as f64);
            prop_assert!((got - expected).abs() < 1e-9);
        }

        #[test]
        fn sherman_morrison_stays_within_1e8_of_fresh(
            seed in 0u64..32,
            lambda in 1e-6f64..2.0,
            adds in 65usize..260,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_unit_map(&mut rng, 30, 1, 8);
            let mut core = CoreSet::new(8, 0.5, lambda).unwrap();
            for _ in 0..adds {
                core.add_pair(&f, rng.gen_range(0..30), 0);
            }
            let fresh = core.design().cholesky_inverse().unwrap();
            prop_assert!(core.inverse().max_abs_diff(&fresh) <= 1e-8);
        }
    }
}
