use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::check_layout;
use crate::nn::layers::{init_dense, Dense};
use crate::nn::{Graph, NnError, ParamStore, Scalar, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnrConfig {
    pub n: usize,
    /// Width of `f1` and `f2`.
    pub hidden: usize,
}

impl AnnrConfig {
    pub fn new(n: usize) -> Self {
        Self { n, hidden: n }
    }
}

/// Predicts the embedding of the solution of `A:B::C:x`:
/// `f3([relu(f1([A, B])), relu(f2([A, C]))])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Annr<T> {
    pub config: AnnrConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Annr<T> {
    pub fn new<R: Rng + ?Sized>(config: AnnrConfig, rng: &mut R) -> Result<Self, NnError> {
        let mut params = ParamStore::new();
        let (n, h) = (config.n, config.hidden);
        init_dense(&mut params, "annr.f1", 2 * n, h, rng)?;
        init_dense(&mut params, "annr.f2", 2 * n, h, rng)?;
        init_dense(&mut params, "annr.f3", 2 * h, n, rng)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: AnnrConfig, params: ParamStore<T>) -> Result<Self, NnError> {
        let template = Self::new(config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        check_layout(&template.params, &params)?;
        Ok(Self { config, params })
    }

    /// `Q x n` predictions from three `Q x n` nodes.
    pub fn predict_batch(&self, g: &mut Graph<T>, a: Var, b: Var, c: Var) -> Result<Var, NnError> {
        let n = self.config.n;
        let q = g.dims(a).0;
        for v in [a, b, c] {
            if g.dims(v) != (q, n) {
                return Err(NnError::shape("annr", format!("{:?}, expected {q}x{n}", g.dims(v))));
            }
        }
        let ab = g.concat_cols(&[a, b])?;
        let ac = g.concat_cols(&[a, c])?;
        let u = Dense::new("annr.f1").forward(g, &self.params, ab)?;
        let u = g.relu(u);
        let v = Dense::new("annr.f2").forward(g, &self.params, ac)?;
        let v = g.relu(v);
        let uv = g.concat_cols(&[u, v])?;
        Dense::new("annr.f3").forward(g, &self.params, uv)
    }

    pub fn predict_rows(
        &self,
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        c: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>, NnError> {
        let q = a.len();
        if q == 0 {
            return Ok(Vec::new());
        }
        let n = self.config.n;
        let mut g = Graph::new();
        let mut input = |rows: &[Vec<f64>]| -> Result<Var, NnError> {
            if rows.len() != q || rows.iter().any(|r| r.len() != n) {
                return Err(NnError::shape("annr", "ragged embedding rows".into()));
            }
            g.input(q, n, rows.iter().flatten().map(|&x| T::from_f64(x)).collect())
        };
        let (va, vb, vc) = (input(a)?, input(b)?, input(c)?);
        let x = self.predict_batch(&mut g, va, vb, vc)?;
        Ok(super::rows_f64(g.value(x), n))
    }
}
