use super::{Graph, NnError, ParamStore, Var};

/// Step for central differences.
pub const STEP: f64 = 1e-5;

/// Maximum relative error between analytic and numeric gradients, per
/// parameter, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
    /// [`Graph::kink_margin`] at the unperturbed point. Below a small multiple
    /// of [`STEP`], central differences straddle a kink and disagree with the
    /// one-sided analytic gradient.
    pub kink_margin: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error() < tolerance
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the gradients of `loss` with central finite differences for every
/// trainable value in `store`. `loss` must build a `1 x 1` node from the store
/// on a fresh graph and be deterministic.
pub fn grad_check<F>(store: &ParamStore<f64>, loss: F) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var, NnError>,
{
    let mut g = Graph::new();
    let out = loss(&mut g, store)?;
    let grads = g.backward(out)?;
    let kink_margin = g.kink_margin();

    let eval = |s: &ParamStore<f64>| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let out = loss(&mut g, s)?;
        Ok(g.scalar(out))
    };

    let mut work = store.clone();
    let mut per_param = Vec::new();
    for (pi, p) in store.params().iter().enumerate() {
        if !p.trainable {
            continue;
        }
        let analytic = grads.get(&p.name);
        let mut worst = 0.0f64;
        for i in 0..p.tensor.len() {
            let orig = p.tensor.data()[i];
            work.params_mut()[pi].tensor.data_mut()[i] = orig + STEP;
            let plus = eval(&work)?;
            work.params_mut()[pi].tensor.data_mut()[i] = orig - STEP;
            let minus = eval(&work)?;
            work.params_mut()[pi].tensor.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic.map_or(0.0, |g| g[i]);
            worst = worst.max(relative_error(a, numeric));
        }
        per_param.push((p.name.clone(), worst));
    }
    Ok(GradCheckReport { per_param, kink_margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        s.add("x", Tensor::uniform(&[3, 4], 1.0, &mut rng)).unwrap();
        s.add("w", Tensor::uniform(&[4, 2], 1.0, &mut rng)).unwrap();
        s.add("b", Tensor::uniform(&[2], 1.0, &mut rng)).unwrap();
        let r = grad_check(&s, |g, s| {
            let x = g.param(s.get("x")?);
            let w = g.param(s.get("w")?);
            let b = g.param(s.get("b")?);
            let y = g.affine(x, w, b)?;
            let t = g.tanh(y);
            Ok(g.mean(t))
        })
        .unwrap();
        assert!(r.passes(1e-6), "{r:?}");
        assert_eq!(r.per_param.len(), 3);
        assert_eq!(r.kink_margin, f64::INFINITY);
    }

    #[test]
    fn detects_wrong_gradient() {
        // relu has a kink at 0; a value sitting on it yields a one-sided
        // analytic gradient that the central difference does not match.
        let mut s = ParamStore::new();
        s.add("x", Tensor::from_f64(&[1], &[0.0]).unwrap()).unwrap();
        let r = grad_check(&s, |g, s| {
            let x = g.param(s.get("x")?);
            let y = g.relu(x);
            Ok(g.mean(y))
        })
        .unwrap();
        assert!(!r.passes(1e-4));
        assert_eq!(r.kink_margin, 0.0);
    }
}
