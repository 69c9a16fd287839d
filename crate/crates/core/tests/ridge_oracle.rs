use fixrocket::ridge::{fit_ridge, SolverForm};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inverts a square matrix by Gauss-Jordan elimination with partial pivoting.
fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                for j in 0..n {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Weighted ridge with an unpenalized intercept, solved through the
/// explicit inverse of the centered normal equations.
fn oracle(x: &[Vec<f64>], y: &[f64], w: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let p = x[0].len();
    let sw: f64 = w.iter().sum();
    let xm: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| w[i] * x[i][j]).sum::<f64>() / sw)
        .collect();
    let ym = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / sw;
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            b[j] += w[i] * (x[i][j] - xm[j]) * (y[i] - ym);
            for k in 0..p {
                a[j][k] += w[i] * (x[i][j] - xm[j]) * (x[i][k] - xm[k]);
            }
        }
    }
    for (j, row) in a.iter_mut().enumerate() {
        row[j] += alpha;
    }
    let inv = invert(a);
    let coef: Vec<f64> = (0..p)
        .map(|j| (0..p).map(|k| inv[j][k] * b[k]).sum())
        .collect();
    let intercept = ym - (0..p).map(|j| xm[j] * coef[j]).sum::<f64>();
    (coef, intercept)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn problem(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64) {
    let n = rng.random_range(4..=30);
    let p = rng.random_range(1..=10);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let mut y: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let alpha = 10f64.powf(rng.random_range(-2.0..2.0));
    (x, y, w, alpha)
}

#[test]
fn matches_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (x, y, w, alpha) = problem(&mut rng);
        let m = DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j]);
        let (want, b0) = oracle(&x, &y, &w, alpha);
        for form in [SolverForm::Primal, SolverForm::Dual, SolverForm::Auto] {
            let got = fit_ridge(&m, &y, alpha, Some(&w), form).unwrap();
            for (g, e) in got.weights.iter().zip(&want) {
                assert!(rel(*g, *e) < 1e-6, "{form:?}: {g} vs {e}");
            }
            assert!(rel(got.intercept, b0) < 1e-6);
        }
    }
}

#[test]
fn unweighted_is_unit_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, y, _, alpha) = problem(&mut rng);
    let m = DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j]);
    let ones = vec![1.0; y.len()];
    let a = fit_ridge(&m, &y, alpha, None, SolverForm::Primal).unwrap();
    let (want, _) = oracle(&x, &y, &ones, alpha);
    for (g, e) in a.weights.iter().zip(&want) {
        assert!(rel(*g, *e) < 1e-6);
    }
}

#[test]
fn wide_problem_uses_either_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, p) = (8, 40);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
        .collect();
    let m = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let primal = fit_ridge(&m, &y, 0.3, None, SolverForm::Primal).unwrap();
    let dual = fit_ridge(&m, &y, 0.3, None, SolverForm::Dual).unwrap();
    for (a, b) in primal.weights.iter().zip(&dual.weights) {
        assert!(rel(*a, *b) < 1e-6);
    }
    assert!(rel(primal.intercept, dual.intercept) < 1e-6);
}
