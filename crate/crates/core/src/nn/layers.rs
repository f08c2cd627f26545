//! Layer building blocks on top of [`Graph`]: dense layers, character
//! convolution with max-over-time pooling, and LSTM cells.

use rand::Rng;

use super::{Graph, NnError, ParamStore, Scalar, Tensor, Var};

/// Adds `name.w` (`fan_in x fan_out`, uniform in `±1/sqrt(fan_in)`) and a zero
/// bias `name.b` to the store.
pub fn init_dense<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<Dense, NnError> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.add(format!("{name}.w"), Tensor::uniform(&[fan_in, fan_out], bound, rng))?;
    store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]))?;
    Ok(Dense::new(name))
}

/// Names of a fully connected layer's parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dense {
    pub w: String,
    pub b: String,
}

impl Dense {
    pub fn new(name: &str) -> Self {
        Self {
            w: format!("{name}.w"),
            b: format!("{name}.b"),
        }
    }

    /// `x W + b`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var, NnError> {
        let w = g.param(store.get(&self.w)?);
        let b = g.param(store.get(&self.b)?);
        g.affine(x, w, b)
    }
}

/// Full-width convolution over one word's character embeddings (`len x m`)
/// with a `w*m x n_f` filter bank, stride one. Output is `len-w+1 x n_f`.
pub fn conv_over_chars<T: Scalar>(
    g: &mut Graph<T>,
    chars: Var,
    width: usize,
    filters: Var,
) -> Result<Var, NnError> {
    let len = g.dims(chars).0;
    let win = g.windows(chars, &[(0, len)], width, 1)?;
    g.matmul(win, filters)
}

/// Per-column maximum over all rows.
pub fn max_over_time<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var, NnError> {
    let len = g.dims(x).0;
    g.segment_max(x, &[(0, len)])
}

/// LSTM parameter names. Gates are packed `[input, forget, candidate,
/// output]` along the columns of `w_ih` (`in x 4h`), `w_hh` (`h x 4h`) and `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lstm {
    pub w_ih: String,
    pub w_hh: String,
    pub b: String,
    pub input: usize,
    pub hidden: usize,
}

/// An LSTM's parameters placed on a graph.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(name: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_ih: format!("{name}.w_ih"),
            w_hh: format!("{name}.w_hh"),
            b: format!("{name}.b"),
            input,
            hidden,
        }
    }

    /// Uniform weights in `±1/sqrt(hidden)`, zero biases except the forget
    /// gate, which starts at one.
    pub fn init<T: Scalar, R: Rng + ?Sized>(
        name: &str,
        input: usize,
        hidden: usize,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let l = Self::new(name, input, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        store.add(l.w_ih.clone(), Tensor::uniform(&[input, 4 * hidden], bound, rng))?;
        store.add(l.w_hh.clone(), Tensor::uniform(&[hidden, 4 * hidden], bound, rng))?;
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        store.add(l.b.clone(), b)?;
        Ok(l)
    }

    pub fn vars<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>) -> Result<LstmVars, NnError> {
        Ok(LstmVars {
            w_ih: g.param(store.get(&self.w_ih)?),
            w_hh: g.param(store.get(&self.w_hh)?),
            b: g.param(store.get(&self.b)?),
            hidden: self.hidden,
        })
    }
}

/// One LSTM step from an already projected input `xw = x W_ih` (`B x 4h`).
pub fn lstm_step<T: Scalar>(
    g: &mut Graph<T>,
    p: &LstmVars,
    xw: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var), NnError> {
    let hd = p.hidden;
    let hw = g.matmul(h, p.w_hh)?;
    let z = g.add(xw, hw)?;
    let z = g.add_row(z, p.b)?;
    let zi = g.slice_cols(z, 0, hd)?;
    let zf = g.slice_cols(z, hd, hd)?;
    let zg = g.slice_cols(z, 2 * hd, hd)?;
    let zo = g.slice_cols(z, 3 * hd, hd)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let fc = g.mul(f, c)?;
    let ig = g.mul(i, cand)?;
    let c2 = g.add(fc, ig)?;
    let tc = g.tanh(c2);
    let h2 = g.mul(o, tc)?;
    Ok((h2, c2))
}

/// Standard LSTM cell on raw input `x` (`B x in`).
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<T>,
    p: &LstmVars,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var), NnError> {
    let xw = g.matmul(x, p.w_ih)?;
    lstm_step(g, p, xw, h, c)
}

/// Runs an LSTM over projected inputs. Where `masks[t][r]` is false, row `r`
/// keeps its previous state at step `t` (padding).
pub fn lstm_unroll<T: Scalar>(
    g: &mut Graph<T>,
    p: &LstmVars,
    projected: &[Var],
    masks: Option<&[Vec<bool>]>,
    h0: Var,
    c0: Var,
) -> Result<(Var, Var), NnError> {
    if projected.is_empty() {
        return Err(NnError::Empty("lstm"));
    }
    let (mut h, mut c) = (h0, c0);
    for (t, &xw) in projected.iter().enumerate() {
        let (h2, c2) = lstm_step(g, p, xw, h, c)?;
        match masks {
            Some(m) if m[t].iter().any(|k| !k) => {
                h = g.select_rows(h2, h, &m[t])?;
                c = g.select_rows(c2, c, &m[t])?;
            }
            _ => {
                h = h2;
                c = c2;
            }
        }
    }
    Ok((h, c))
}

/// Zero `rows x cols` constant.
pub fn zeros<T: Scalar>(g: &mut Graph<T>, rows: usize, cols: usize) -> Var {
    g.input(rows, cols, vec![T::zero(); rows * cols])
        .expect("length matches")
}

/// Bidirectional encoding of one sequence of `1 x in` inputs. Returns the
/// final `(h_f, c_f, h_b, c_b)`.
pub fn bilstm_encode<T: Scalar>(
    g: &mut Graph<T>,
    fwd: &LstmVars,
    bwd: &LstmVars,
    xs: &[Var],
) -> Result<(Var, Var, Var, Var), NnError> {
    if xs.is_empty() {
        return Err(NnError::Empty("bilstm"));
    }
    let rows = g.dims(xs[0]).0;
    let mut pf = Vec::with_capacity(xs.len());
    let mut pb = Vec::with_capacity(xs.len());
    for &x in xs {
        pf.push(g.matmul(x, fwd.w_ih)?);
    }
    for &x in xs.iter().rev() {
        pb.push(g.matmul(x, bwd.w_ih)?);
    }
    let (hz, cz) = (zeros(g, rows, fwd.hidden), zeros(g, rows, fwd.hidden));
    let (hf, cf) = lstm_unroll(g, fwd, &pf, None, hz, cz)?;
    let (hz, cz) = (zeros(g, rows, bwd.hidden), zeros(g, rows, bwd.hidden));
    let (hb, cb) = lstm_unroll(g, bwd, &pb, None, hz, cz)?;
    Ok((hf, cf, hb, cb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_shapes_and_values() {
        let m = 3;
        let mut g = Graph::<f64>::new();
        let e = g.input(2, m, vec![1.0; 2 * m]).unwrap();
        let f = g.input(2 * m, 1, vec![1.0; 2 * m]).unwrap();
        let y = conv_over_chars(&mut g, e, 2, f).unwrap();
        assert_eq!(g.value(y), &[2.0 * m as f64]);

        let e = g.input(5, m, vec![0.5; 5 * m]).unwrap();
        let f = g.input(3 * m, 4, vec![0.0; 12 * m]).unwrap();
        let y = conv_over_chars(&mut g, e, 3, f).unwrap();
        assert_eq!(g.dims(y), (3, 4));
    }

    #[test]
    fn conv_matches_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (len, m, w, nf) = (6, 3, 4, 2);
        let e: Vec<f64> = (0..len * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..w * m * nf).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = Graph::<f64>::new();
        let ev = g.input(len, m, e.clone()).unwrap();
        let fv = g.input(w * m, nf, f.clone()).unwrap();
        let y = conv_over_chars(&mut g, ev, w, fv).unwrap();
        for t in 0..=len - w {
            for j in 0..nf {
                let mut s = 0.0;
                for dt in 0..w {
                    for k in 0..m {
                        s += e[(t + dt) * m + k] * f[(dt * m + k) * nf + j];
                    }
                }
                assert!((g.value(y)[t * nf + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_over_time_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.input(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let y = max_over_time(&mut g, x).unwrap();
        assert_eq!(g.value(y), &[3.0, 5.0]);
        let r = g.input(1, 3, vec![4.0, -1.0, 0.0]).unwrap();
        let y = max_over_time(&mut g, r).unwrap();
        assert_eq!(g.value(y), &[4.0, -1.0, 0.0]);
    }

    #[test]
    fn zero_lstm_is_zero() {
        let mut store = ParamStore::<f64>::new();
        let l = Lstm::new("l", 3, 4);
        store.add(l.w_ih.clone(), Tensor::zeros(&[3, 16])).unwrap();
        store.add(l.w_hh.clone(), Tensor::zeros(&[4, 16])).unwrap();
        store.add(l.b.clone(), Tensor::zeros(&[16])).unwrap();
        let mut g = Graph::new();
        let vars = l.vars(&mut g, &store).unwrap();
        let x = g.input(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let h = zeros(&mut g, 1, 4);
        let c = zeros(&mut g, 1, 4);
        let (h2, c2) = lstm_cell(&mut g, &vars, x, h, c).unwrap();
        assert!(g.value(h2).iter().all(|&v| v == 0.0));
        assert!(g.value(c2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_step_unroll_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::<f64>::new();
        let l = Lstm::init("l", 2, 3, &mut store, &mut rng).unwrap();
        store.add("x", Tensor::uniform(&[3, 2], 1.0, &mut rng)).unwrap();
        let r = grad_check(&store, |g, s| {
            let vars = l.vars(g, s)?;
            let x = g.param(s.get("x")?);
            let xs: Vec<Var> = (0..3).map(|t| g.gather_rows(x, &[t])).collect::<Result<_, _>>()?;
            let h = zeros(g, 1, 3);
            let c = zeros(g, 1, 3);
            let proj: Vec<Var> = xs.iter().map(|&x| g.matmul(x, vars.w_ih)).collect::<Result<_, _>>()?;
            let (h, c) = lstm_unroll(g, &vars, &proj, None, h, c)?;
            let hc = g.concat_cols(&[h, c])?;
            let sq = g.square(hc)?;
            Ok(g.mean(sq))
        })
        .unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }

    #[test]
    fn bilstm_length_one_reads_same_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::<f64>::new();
        let f = Lstm::init("f", 2, 3, &mut store, &mut rng).unwrap();
        let mut g = Graph::new();
        let fv = f.vars(&mut g, &store).unwrap();
        let x = g.input(1, 2, vec![0.3, -0.7]).unwrap();
        // Same weights in both directions: identical final states.
        let (hf, cf, hb, cb) = bilstm_encode(&mut g, &fv, &fv, &[x]).unwrap();
        assert_eq!(g.value(hf), g.value(hb));
        assert_eq!(g.value(cf), g.value(cb));
    }

    #[test]
    fn masked_rows_keep_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        let l = Lstm::init("l", 2, 2, &mut store, &mut rng).unwrap();
        let mut g = Graph::new();
        let v = l.vars(&mut g, &store).unwrap();
        let x = g.input(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let xw = g.matmul(x, v.w_ih).unwrap();
        let h = zeros(&mut g, 2, 2);
        let c = zeros(&mut g, 2, 2);
        let masks = vec![vec![true, true], vec![true, false]];
        let (h2, _) = lstm_unroll(&mut g, &v, &[xw, xw], Some(&masks), h, c).unwrap();
        let (h1, _) = lstm_unroll(&mut g, &v, &[xw], None, h, c).unwrap();
        assert_eq!(&g.value(h2)[2..], &g.value(h1)[2..]);
        assert_ne!(&g.value(h2)[..2], &g.value(h1)[..2]);
    }
}
