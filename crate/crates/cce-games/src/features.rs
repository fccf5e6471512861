//! Per-agent feature maps `φ_i : S × A_i -> R^d` with `‖φ_i(s,a)‖_2 <= 1`.
//!
//! One-hot maps of dimension `S·A_i` make the linear model exactly tabular
//! and carry a declared misspecification of zero. Arbitrary tables may
//! declare a misspecification bound `ν` or leave it unknown; the crate never
//! estimates `ν`, it only threads the declared value into step sizes.

use crate::{Error, Result};

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    OneHot,
    Table,
}

#[derive(Debug, Clone)]
pub struct FeatureMap {
    dim: usize,
    num_states: usize,
    num_actions: usize,
    /// `[(s * A + a) * d ..][..d]`.
    table: Vec<f64>,
    nu: Option<f64>,
    kind: FeatureKind,
}

impl FeatureMap {
    /// Indicator features `e_{(s,a)}` of dimension `S·A`; exactly tabular.
    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        let dim = num_states * num_actions;
        let mut table = vec![0.0; dim * dim];
        for idx in 0..dim {
            table[idx * dim + idx] = 1.0;
        }
        FeatureMap {
            dim,
            num_states,
            num_actions,
            table,
            nu: Some(0.0),
            kind: FeatureKind::OneHot,
        }
    }

    /// Dense feature table; rejects vectors with norm above 1.
    pub fn from_table(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        table: Vec<f64>,
        nu: Option<f64>,
    ) -> Result<Self> {
        if table.len() != num_states * num_actions * dim {
            return Err(Error::Shape(format!(
                "feature table has {} entries, expected S*A*d = {}",
                table.len(),
                num_states * num_actions * dim
            )));
        }
        if let Some(nu) = nu {
            if nu < 0.0 {
                return Err(Error::NonPositive("nu"));
            }
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let base = (s * num_actions + a) * dim;
                let norm_sq: f64 = table[base..base + dim].iter().map(|x| x * x).sum();
                if norm_sq > 1.0 + NORM_TOL {
                    return Err(Error::Shape(format!(
                        "feature vector at (s={s}, a={a}) has norm {} > 1",
                        norm_sq.sqrt()
                    )));
                }
            }
        }
        Ok(FeatureMap {
            dim,
            num_states,
            num_actions,
            table,
            nu,
            kind: FeatureKind::Table,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Declared misspecification bound; `None` when unknown.
    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn is_one_hot(&self) -> bool {
        self.kind == FeatureKind::OneHot
    }

    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.dim;
        &self.table[base..base + self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_is_orthonormal() {
        let f = FeatureMap::one_hot(2, 3);
        assert_eq!(f.dim(), 6);
        assert_eq!(f.nu(), Some(0.0));
        for s in 0..2 {
            for a in 0..3 {
                let v = f.phi(s, a);
                let norm: f64 = v.iter().map(|x| x * x).sum();
                assert_eq!(norm, 1.0);
                assert_eq!(v[s * 3 + a], 1.0);
            }
        }
    }

    #[test]
    fn oversized_norm_is_rejected() {
        let bad = FeatureMap::from_table(1, 1, 2, vec![1.0, 0.5], None);
        assert!(bad.is_err());
        let ok = FeatureMap::from_table(1, 1, 2, vec![0.6, 0.8], Some(0.1));
        assert!(ok.is_ok());
    }
}
