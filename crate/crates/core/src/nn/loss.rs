use rand::seq::SliceRandom;
use rand::Rng;

use super::{Graph, NnError, Scalar, Var};

/// Mean squared componentwise difference, over all elements.
pub fn loss_mse<T: Scalar>(g: &mut Graph<T>, target: Var, pred: Var) -> Result<Var, NnError> {
    let d = g.sub(target, pred)?;
    let sq = g.square(d)?;
    Ok(g.mean(sq))
}

/// Mean per-row cross-entropy of a row-stochastic matrix against target
/// column indices.
pub fn loss_ce<T: Scalar>(g: &mut Graph<T>, probs: Var, targets: &[usize]) -> Result<Var, NnError> {
    let rows = g.dims(probs).0;
    if rows != targets.len() || rows == 0 {
        return Err(NnError::shape(
            "loss_ce",
            format!("{rows} predictions, {} targets", targets.len()),
        ));
    }
    let w = vec![T::one() / T::from_f64(rows as f64); rows];
    g.weighted_nll(probs, targets, &w)
}

/// Mean over the batch of `(1 + mse(d_i, x_i)) / (1 + mse(d_perm(i), x_i))`.
///
/// Collapsing every embedding toward one point sends both terms to one, so the
/// loss cannot be driven to zero by shrinking the space.
pub fn loss_annr<T: Scalar>(
    g: &mut Graph<T>,
    e_d: Var,
    e_x: Var,
    perm: &[usize],
) -> Result<Var, NnError> {
    let (rows, cols) = g.dims(e_d);
    if g.dims(e_x) != (rows, cols) || perm.len() != rows {
        return Err(NnError::shape(
            "loss_annr",
            format!("{rows}x{cols} vs {:?}, perm {}", g.dims(e_x), perm.len()),
        ));
    }
    if rows < 2 {
        return Err(NnError::BatchTooSmall(rows));
    }
    let own = row_mse(g, e_d, e_x)?;
    let shuffled = g.gather_rows(e_d, perm)?;
    let other = row_mse(g, shuffled, e_x)?;
    let num = g.add_scalar(own, T::one());
    let den = g.add_scalar(other, T::one());
    let ratio = g.div(num, den)?;
    Ok(g.mean(ratio))
}

fn row_mse<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var, NnError> {
    let d = g.sub(a, b)?;
    let sq = g.square(d)?;
    Ok(g.row_mean(sq))
}

/// Uniform permutation of `0..n`, redrawn up to ten times while it has a
/// fixed point.
pub fn shuffle_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..=10 {
        perm.shuffle(rng);
        if n < 2 || perm.iter().enumerate().all(|(i, &p)| i != p) {
            break;
        }
    }
    perm
}

/// `(1 - lambda) * a + lambda * b` for two scalar losses.
pub fn convex_combination<T: Scalar>(
    g: &mut Graph<T>,
    a: Var,
    b: Var,
    lambda: f64,
) -> Result<Var, NnError> {
    let wa = g.scale(a, T::from_f64(1.0 - lambda));
    let wb = g.scale(b, T::from_f64(lambda));
    g.add(wa, wb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn mse_examples() {
        let mut g = Graph::<f64>::new();
        let a = g.input(1, 2, vec![1.0, 2.0]).unwrap();
        let b = g.input(1, 2, vec![1.0, 0.0]).unwrap();
        let l = loss_mse(&mut g, a, b).unwrap();
        assert!(close(g.scalar(l), 2.0));
        let l0 = loss_mse(&mut g, a, a).unwrap();
        assert_eq!(g.scalar(l0), 0.0);
        let c = g.input(1, 3, vec![0.0; 3]).unwrap();
        assert!(loss_mse(&mut g, a, c).is_err());
    }

    #[test]
    fn mse_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let expect = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 80.0;
        let mut g = Graph::<f64>::new();
        let a = g.input(1, 80, x).unwrap();
        let b = g.input(1, 80, y).unwrap();
        let l = loss_mse(&mut g, a, b).unwrap();
        assert!(close(g.scalar(l), expect));
    }

    #[test]
    fn bce_examples() {
        let mut g = Graph::<f64>::new();
        let p = g.input(1, 1, vec![0.5]).unwrap();
        let l1 = g.bce(p, &[1.0]).unwrap();
        let l0 = g.bce(p, &[0.0]).unwrap();
        assert!(close(g.scalar(l1), 2f64.ln()));
        assert!(close(g.scalar(l0), 2f64.ln()));
        let one = g.input(1, 1, vec![1.0]).unwrap();
        let l = g.bce(one, &[1.0]).unwrap();
        assert!(g.scalar(l) < 1e-6);
    }

    #[test]
    fn ce_examples() {
        let mut g = Graph::<f64>::new();
        let p = g.input(1, 4, vec![0.25; 4]).unwrap();
        let l = loss_ce(&mut g, p, &[2]).unwrap();
        assert!(close(g.scalar(l), 4f64.ln()));
        let perfect = g.input(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let l = loss_ce(&mut g, perfect, &[1]).unwrap();
        assert!(g.scalar(l).abs() < 1e-12);
        let two = g.input(2, 2, vec![0.7, 0.3, 0.2, 0.8]).unwrap();
        let l = loss_ce(&mut g, two, &[0, 0]).unwrap();
        assert!(close(g.scalar(l), -(0.7f64.ln() + 0.2f64.ln()) / 2.0));
        assert!(loss_ce(&mut g, two, &[0]).is_err());
    }

    #[test]
    fn annr_examples() {
        // e_x = e_D with partner at mse 1 -> 0.5.
        let mut g = Graph::<f64>::new();
        let d = g.input(2, 1, vec![0.0, 1.0]).unwrap();
        let l = loss_annr(&mut g, d, d, &[1, 0]).unwrap();
        assert!(close(g.scalar(l), 0.5));
        // Equidistant -> 1.
        let x = g.input(2, 1, vec![0.5, 0.5]).unwrap();
        let l = loss_annr(&mut g, d, x, &[1, 0]).unwrap();
        assert!(close(g.scalar(l), 1.0));
        let one = g.input(1, 1, vec![0.0]).unwrap();
        assert!(matches!(
            loss_annr(&mut g, one, one, &[0]),
            Err(NnError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn annr_matches_formula() {
        let d = [[0.3, -1.2], [0.7, 0.1], [-0.4, 2.0]];
        let x = [[0.0, -1.0], [1.0, 0.5], [0.2, 1.1]];
        let perm = [1usize, 2, 0];
        let mse = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) / 2.0;
        let expect = (0..3)
            .map(|i| (1.0 + mse(&d[i], &x[i])) / (1.0 + mse(&d[perm[i]], &x[i])))
            .sum::<f64>()
            / 3.0;
        let mut g = Graph::<f64>::new();
        let dv = g.input(3, 2, d.concat()).unwrap();
        let xv = g.input(3, 2, x.concat()).unwrap();
        let l = loss_annr(&mut g, dv, xv, &perm).unwrap();
        assert!(close(g.scalar(l), expect));
    }

    #[test]
    fn annr_collapse_goes_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut last = f64::NAN;
        for alpha in [1.0, 0.1, 0.01, 0.0001] {
            let mut g = Graph::<f64>::new();
            let dv = g.input(4, 3, d.iter().map(|v| v * alpha).collect()).unwrap();
            let xv = g.input(4, 3, x.iter().map(|v| v * alpha).collect()).unwrap();
            let l = loss_annr(&mut g, dv, xv, &[1, 2, 3, 0]).unwrap();
            last = g.scalar(l);
        }
        assert!((last - 1.0).abs() < 1e-6);
    }

    #[test]
    fn permutations_avoid_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 2..20 {
            let p = shuffle_permutation(n, &mut rng);
            let mut sorted = p.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
        let fixed = (0..200)
            .filter(|_| {
                let p = shuffle_permutation(8, &mut rng);
                p.iter().enumerate().any(|(i, &v)| i == v)
            })
            .count();
        assert!(fixed < 5);
    }

    #[test]
    fn convex_combination_weights() {
        let mut g = Graph::<f64>::new();
        let a = g.input(1, 1, vec![2.0]).unwrap();
        let b = g.input(1, 1, vec![4.0]).unwrap();
        let l = convex_combination(&mut g, a, b, 0.01).unwrap();
        assert!(close(g.scalar(l), 0.99 * 2.0 + 0.01 * 4.0));
    }
}
