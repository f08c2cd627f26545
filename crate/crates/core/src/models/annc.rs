use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::check_layout;
use crate::nn::layers::{init_dense, Dense};
use crate::nn::{Graph, NnError, ParamStore, Scalar, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnncConfig {
    /// Embedding dimension of the four inputs.
    pub n: usize,
    /// First-stage (`1 x 2`) filters.
    pub f1: usize,
    /// Second-stage (`2 x 2`) filters.
    pub f2: usize,
}

impl AnncConfig {
    pub fn new(n: usize) -> Self {
        Self { n, f1: 128, f2: 64 }
    }
}

/// Analogy classifier over the `n x 4` stack of four embeddings.
///
/// Stage one reads each pair `(A_i, B_i)` and `(C_i, D_i)` separately; stage
/// two slides `2 x 2` filters along the embedding dimension, so its output has
/// `n - 1` positions. A dense layer and a sigmoid give the score.
#[derive(Debug, Clone, PartialEq)]
pub struct Annc<T> {
    pub config: AnncConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Annc<T> {
    pub fn new<R: Rng + ?Sized>(config: AnncConfig, rng: &mut R) -> Result<Self, NnError> {
        if config.n < 2 {
            return Err(NnError::shape("annc", format!("embedding dimension {} < 2", config.n)));
        }
        let mut params = ParamStore::new();
        init_dense(&mut params, "annc.stage1", 2, config.f1, rng)?;
        init_dense(&mut params, "annc.stage2", 4 * config.f1, config.f2, rng)?;
        init_dense(&mut params, "annc.out", (config.n - 1) * config.f2, 1, rng)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: AnncConfig, params: ParamStore<T>) -> Result<Self, NnError> {
        let template = Self::new(config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        check_layout(&template.params, &params)?;
        Ok(Self { config, params })
    }

    /// Scores `Q` quadruples given four `Q x n` embedding nodes; returns a
    /// `Q x 1` node of probabilities.
    pub fn score_batch(
        &self,
        g: &mut Graph<T>,
        a: Var,
        b: Var,
        c: Var,
        d: Var,
    ) -> Result<Var, NnError> {
        let n = self.config.n;
        let q = g.dims(a).0;
        for v in [a, b, c, d] {
            if g.dims(v) != (q, n) {
                return Err(NnError::shape("annc", format!("{:?}, expected {q}x{n}", g.dims(v))));
            }
        }
        let f1 = self.config.f1;
        // Row (q, i) holds (A_i, B_i, C_i, D_i).
        let cols: Vec<Var> = [a, b, c, d]
            .iter()
            .map(|&v| g.reshape(v, q * n, 1))
            .collect::<Result<_, _>>()?;
        let stacked = g.concat_cols(&cols)?;
        // Rows (q, i, pair) with pair 0 = (A_i, B_i), 1 = (C_i, D_i).
        let pairs = g.reshape(stacked, 2 * q * n, 2)?;
        let s1 = Dense::new("annc.stage1").forward(g, &self.params, pairs)?;
        let s1 = g.relu(s1);
        // Row (q, i) holds both pairs' stage-one features.
        let s1 = g.reshape(s1, q * n, 2 * f1)?;
        let segs: Vec<(usize, usize)> = (0..q).map(|k| (k * n, n)).collect();
        let win = g.windows(s1, &segs, 2, 1)?;
        let s2 = Dense::new("annc.stage2").forward(g, &self.params, win)?;
        let s2 = g.relu(s2);
        let flat = g.reshape(s2, q, (n - 1) * self.config.f2)?;
        let logit = Dense::new("annc.out").forward(g, &self.params, flat)?;
        Ok(g.sigmoid(logit))
    }

    /// Scores of quadruples given as `f64` embedding rows.
    pub fn score_rows(
        &self,
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        c: &[Vec<f64>],
        d: &[Vec<f64>],
    ) -> Result<Vec<f64>, NnError> {
        let q = a.len();
        if q == 0 {
            return Ok(Vec::new());
        }
        let n = self.config.n;
        let mut g = Graph::new();
        let mut input = |rows: &[Vec<f64>]| -> Result<Var, NnError> {
            if rows.len() != q || rows.iter().any(|r| r.len() != n) {
                return Err(NnError::shape("annc", "ragged embedding rows".into()));
            }
            g.input(q, n, rows.iter().flatten().map(|&x| T::from_f64(x)).collect())
        };
        let (va, vb, vc, vd) = (input(a)?, input(b)?, input(c)?, input(d)?);
        let s = self.score_batch(&mut g, va, vb, vc, vd)?;
        Ok(g.value(s).iter().map(|x| x.as_f64()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn rows(rng: &mut ChaCha8Rng, q: usize, n: usize) -> Vec<Vec<f64>> {
        (0..q).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn scores_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Annc::<f64>::new(AnncConfig { n: 5, f1: 4, f2: 3 }, &mut rng).unwrap();
        let (a, b, c, d) = (rows(&mut rng, 6, 5), rows(&mut rng, 6, 5), rows(&mut rng, 6, 5), rows(&mut rng, 6, 5));
        let s = m.score_rows(&a, &b, &c, &d).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn zero_weights_give_one_half() {
        let mut m = Annc::<f64>::new(AnncConfig { n: 3, f1: 2, f2: 2 }, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for p in m.params.params_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let r = vec![vec![0.3, 0.1, -0.2]];
        assert_eq!(m.score_rows(&r, &r, &r, &r).unwrap(), vec![0.5]);
    }

    #[test]
    fn stage_two_has_n_minus_one_positions() {
        let m = Annc::<f64>::new(AnncConfig { n: 7, f1: 3, f2: 5 }, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(m.params.get("annc.out.w").unwrap().tensor.shape(), &[6 * 5, 1]);
    }

    #[test]
    fn batching_does_not_change_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Annc::<f64>::new(AnncConfig { n: 4, f1: 3, f2: 2 }, &mut rng).unwrap();
        let (a, b, c, d) = (rows(&mut rng, 5, 4), rows(&mut rng, 5, 4), rows(&mut rng, 5, 4), rows(&mut rng, 5, 4));
        let all = m.score_rows(&a, &b, &c, &d).unwrap();
        for i in 0..5 {
            let one = m
                .score_rows(&a[i..=i], &b[i..=i], &c[i..=i], &d[i..=i])
                .unwrap();
            assert!((one[0] - all[i]).abs() < 1e-14);
        }
    }

    /// Direct per-filter evaluation of the two convolution stages.
    #[test]
    fn matches_explicit_filter_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, f1, f2) = (4, 3, 2);
        let m = Annc::<f64>::new(AnncConfig { n, f1, f2 }, &mut rng).unwrap();
        let e = rows(&mut rng, 4, n);
        let p = |name: &str| m.params.get(name).unwrap().tensor.data().to_vec();
        let (w1, b1, w2, b2, wo, bo) = (
            p("annc.stage1.w"),
            p("annc.stage1.b"),
            p("annc.stage2.w"),
            p("annc.stage2.b"),
            p("annc.out.w"),
            p("annc.out.b"),
        );
        // stage1[pair][i][f]
        let mut s1 = vec![vec![vec![0.0; f1]; n]; 2];
        for (pair, (x, y)) in [(0usize, 1usize), (2, 3)].iter().enumerate() {
            for i in 0..n {
                for f in 0..f1 {
                    let v = e[*x][i] * w1[f] + e[*y][i] * w1[f1 + f] + b1[f];
                    s1[pair][i][f] = v.max(0.0);
                }
            }
        }
        let mut logit = bo[0];
        for i in 0..n - 1 {
            for f in 0..f2 {
                let mut v = b2[f];
                let mut k = 0;
                for di in 0..2 {
                    for pair in 0..2 {
                        for g in 0..f1 {
                            v += s1[pair][i + di][g] * w2[k * f2 + f];
                            k += 1;
                        }
                    }
                }
                logit += v.max(0.0) * wo[i * f2 + f];
            }
        }
        let expect = 1.0 / (1.0 + (-logit).exp());
        let got = m
            .score_rows(&e[0..1], &e[1..2], &e[2..3], &e[3..4])
            .unwrap()[0];
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn gradients() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Annc::<f64>::new(AnncConfig { n: 4, f1: 3, f2: 2 }, &mut rng).unwrap();
            let e = rows(&mut rng, 4, 4);
            let r = grad_check(&m.params, |g, s| {
                let mm = Annc { config: m.config.clone(), params: s.clone() };
                let v: Vec<Var> = e.iter().map(|r| g.input(1, 4, r.clone())).collect::<Result<_, _>>()?;
                let p = mm.score_batch(g, v[0], v[1], v[2], v[3])?;
                g.bce(p, &[1.0])
            })
            .unwrap();
            assert!(r.passes(1e-4), "{r:?}");
        }
    }
}
