use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(r, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let a = random_matrix(rng, n, n);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

fn naive_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut acc = ZERO;
            for k in 0..a.ncols() {
                acc += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

fn projector(basis: &ComplexMatrix) -> ComplexMatrix {
    basis * basis.adjoint()
}

#[test]
fn products_match_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_matrix(&mut rng, 7, 5);
    let b = random_matrix(&mut rng, 5, 9);
    let d = random_matrix(&mut rng, 9, 5);
    let tol = 1e-12;
    assert!((matmul(&a, &b) - naive_product(&a, &b)).norm() < tol);
    assert!((matmul_adj(&a, &d) - naive_product(&a, &d.adjoint())).norm() < tol);
    assert!((adj_matmul(&d, &b.transpose()) - naive_product(&d.adjoint(), &b.transpose())).norm() < tol);
    let g = gram(&a);
    assert!((g.clone() - naive_product(&a, &a.adjoint())).norm() < tol);
    assert_eq!(hermitian_deviation(&g), 0.0);
}

#[test]
fn kron_identity_and_diagonal() {
    let i2 = ComplexMatrix::identity(2, 2);
    assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4, 4));
    let d = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(2.0, 0.0), c(3.0, 0.0)]));
    let expected = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(
        [2.0, 2.0, 3.0, 3.0].iter().map(|&x| c(x, 0.0)).collect(),
    ));
    assert_eq!(kron(&d, &i2), expected);
}

#[test]
fn kron_matches_elementwise_definition() {
    let a = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
    let b = ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let k = kron(&a, &b);
    assert_eq!(k.shape(), (4, 4));
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    assert_eq!(k[(i * 2 + p, j * 2 + q)], a[(i, j)] * b[(p, q)]);
                }
            }
        }
    }
    assert_eq!(k[(0, 1)], c(1.0, 0.0));
    assert_eq!(k[(3, 2)], c(4.0, 0.0));
}

#[test]
fn eig_identity_and_diagonal() {
    let e = hermitian_eig(&ComplexMatrix::identity(3, 3)).unwrap();
    assert_eq!(e.values.len(), 3);
    for v in &e.values {
        assert!((v - 1.0).abs() < 1e-14);
    }
    let d = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.0, 0.0), c(3.0, 0.0)]));
    let e = hermitian_eig(&d).unwrap();
    assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    // Eigenvector for 3 is e₂ up to phase.
    assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
    assert!(e.vectors[(0, 0)].norm() < 1e-14);
}

#[test]
fn eig_reconstructs_random_hermitian() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1usize, 2, 8, 33] {
        let a = random_hermitian(&mut rng, n);
        let e = hermitian_eig(&a).unwrap();
        let scale = max_abs(&a);
        assert!(max_abs(&(e.reconstruct() - &a)) <= 1e-9 * scale);
        let ortho = adj_matmul(&e.vectors, &e.vectors) - ComplexMatrix::identity(n, n);
        assert!(max_abs(&ortho) <= 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn eig_rejects_non_hermitian() {
    let a = ComplexMatrix::from_row_slice(2, 2, &[ONE, c(1.0, 0.0), c(0.0, 0.0), ONE]);
    assert!(matches!(hermitian_eig(&a), Err(Error::NotHermitian { .. })));
}

#[test]
fn eig_repeated_eigenvalues_span_correct_subspace() {
    // diag(2, 2, 1): the top-2 projector is unique even though the basis is not.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = {
        let m = random_matrix(&mut rng, 3, 3);
        m.qr().q()
    };
    let d = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(2.0, 0.0), c(2.0, 0.0), ONE]));
    let a = &q * d * q.adjoint();
    let e = hermitian_eig(&a).unwrap();
    let p_est = projector(&e.leading(2));
    let p_true = projector(&q.columns(0, 2).into_owned());
    assert!(max_abs(&(p_est - p_true)) < 1e-10);
}

#[test]
fn toeplitz_cases() {
    assert_eq!(toeplitz_hermitian(&[ONE]), ComplexMatrix::identity(1, 1));
    assert_eq!(toeplitz_hermitian(&[ONE, ZERO, ZERO]), ComplexMatrix::identity(3, 3));
    let r = [1.0, 0.5, 0.25];
    let t = toeplitz_symmetric(&r);
    for l in 0..3 {
        for m in 0..3 {
            let k = if l > m { l - m } else { m - l };
            assert_eq!(t[(l, m)], r[k]);
        }
    }
    let rc = [ONE, c(0.5, 0.5), c(0.0, -0.25)];
    let h = toeplitz_hermitian(&rc);
    for l in 0..3usize {
        for m in 0..3usize {
            let want = if l >= m { rc[l - m] } else { rc[m - l].conj() };
            assert_eq!(h[(l, m)], want);
        }
    }
    assert_eq!(hermitian_deviation(&h), 0.0);
}

#[test]
fn unfold_shapes_and_index_map() {
    let dims = [2, 3, 4];
    let t = ComplexTensor3::from_fn(dims, |a, b, cc| c((a + 10 * b + 100 * cc) as f64, 0.0));
    assert_eq!(t.unfold(Axis::First).shape(), (2, 12));
    assert_eq!(t.unfold(Axis::Second).shape(), (3, 8));
    assert_eq!(t.unfold(Axis::Third).shape(), (4, 6));
    for axis in Axis::ALL {
        assert_eq!(ComplexTensor3::fold(&t.unfold(axis), axis, dims).unwrap(), t);
    }
    // Single-entry perturbation lands at the documented matrix index.
    let (a, b, cc) = (1, 2, 3);
    let mut z = ComplexTensor3::zeros(dims);
    z.set(a, b, cc, ONE);
    let u1 = z.unfold(Axis::First);
    let u2 = z.unfold(Axis::Second);
    let u3 = z.unfold(Axis::Third);
    assert_eq!(u1[(a, b + 3 * cc)], ONE);
    assert_eq!(u2[(b, a + 2 * cc)], ONE);
    assert_eq!(u3[(cc, a + 2 * b)], ONE);
    assert_eq!(u1.iter().filter(|x| **x != ZERO).count(), 1);
    assert_eq!(u2.iter().filter(|x| **x != ZERO).count(), 1);
    assert_eq!(u3.iter().filter(|x| **x != ZERO).count(), 1);
}

#[test]
fn fold_rejects_wrong_shape() {
    let m = ComplexMatrix::zeros(3, 5);
    assert!(matches!(ComplexTensor3::fold(&m, Axis::First, [3, 2, 2]), Err(Error::Dimension(_))));
    assert!(ComplexTensor3::from_vec([2, 2, 2], vec![ZERO; 7]).is_err());
}

#[test]
fn mode_product_matches_slicewise_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dims = [3, 4, 5];
    let t = ComplexTensor3::from_fn(dims, |_, _, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let w = random_matrix(&mut rng, 2, 4);
    let out = t.mode_product(Axis::Second, &w).unwrap();
    assert_eq!(out.dims(), [3, 2, 5]);
    for a in 0..3 {
        for k in 0..2 {
            for cc in 0..5 {
                let want: Complex64 = (0..4).map(|b| w[(k, b)] * t.get(a, b, cc)).sum();
                assert!((out.get(a, k, cc) - want).norm() < 1e-13);
            }
        }
    }
}

#[test]
fn inv_sqrt_simple_cases() {
    let four = ComplexMatrix::from_element(1, 1, c(4.0, 0.0));
    assert!((inv_sqrt_psd(&four, 0.0).unwrap()[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
    let eye = ComplexMatrix::identity(5, 5);
    assert!(max_abs(&(inv_sqrt_psd(&eye, 0.0).unwrap() - &eye)) < 1e-14);
}

#[test]
fn inv_sqrt_whitens_with_ridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = random_matrix(&mut rng, 6, 3);
    let a = gram(&b); // rank 3, PSD
    let ridge = 0.05;
    let w = inv_sqrt_psd(&a, ridge).unwrap();
    let shifted = &a + ComplexMatrix::identity(6, 6) * c(ridge, 0.0);
    let residual = &w * shifted * &w - ComplexMatrix::identity(6, 6);
    assert!(max_abs(&residual) < 1e-9);
    assert_eq!(hermitian_deviation(&w), 0.0);
}

#[test]
fn inv_sqrt_rejects_indefinite() {
    let a = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![ONE, c(-0.5, 0.0)]));
    assert!(matches!(inv_sqrt_psd(&a, 0.0), Err(Error::NotPsd { .. })));
}

#[test]
fn psd_factor_reproduces_low_rank_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = random_matrix(&mut rng, 10, 2);
    let a = gram(&b);
    let l = psd_factor(&a, 1e-12).unwrap();
    assert_eq!(l.ncols(), 2);
    assert!(max_abs(&(gram(&l) - &a)) < 1e-10 * max_abs(&a));
}

#[test]
fn hermitian_solve_matches_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let b = random_matrix(&mut rng, 6, 6);
    let a = gram(&b) + ComplexMatrix::identity(6, 6);
    let rhs = random_matrix(&mut rng, 6, 2);
    let x = hermitian_solve(&a, &rhs).unwrap();
    assert!(max_abs(&(&a * x - rhs)) < 1e-10);
}

fn int_matrix(vals: Vec<i8>, r: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_iterator(r, cols, vals.into_iter().map(|v| c(v as f64, 0.0)))
}

proptest! {
    #[test]
    fn kron_is_associative(a in proptest::collection::vec(-3i8..4, 4),
                           b in proptest::collection::vec(-3i8..4, 6),
                           d in proptest::collection::vec(-3i8..4, 2)) {
        let a = int_matrix(a, 2, 2);
        let b = int_matrix(b, 3, 2);
        let d = int_matrix(d, 1, 2);
        prop_assert_eq!(kron(&kron(&a, &b), &d), kron(&a, &kron(&b, &d)));
    }

    #[test]
    fn psd_eigenvalues_are_nonnegative(seed in any::<u64>(), n in 1usize..12, rank in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gram(&random_matrix(&mut rng, n, rank));
        let e = hermitian_eig(&a).unwrap();
        let scale = e.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        prop_assert!(e.values.iter().all(|&v| v >= -1e-10 * scale));
    }

    #[test]
    fn inv_sqrt_commutes_with_shifted_matrix(seed in any::<u64>(), n in 1usize..10, ridge in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gram(&random_matrix(&mut rng, n, n));
        let w = inv_sqrt_psd(&a, ridge).unwrap();
        let s = &a + ComplexMatrix::identity(n, n) * c(ridge, 0.0);
        let ws = &w * &s;
        let sw = &s * &w;
        prop_assert!(max_abs(&(&ws - &sw)) <= 1e-9 * max_abs(&ws));
    }

    #[test]
    fn fold_unfold_round_trip(d1 in 1usize..5, d2 in 1usize..5, d3 in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = ComplexTensor3::from_fn([d1, d2, d3], |_, _, _| c(rng.random(), rng.random()));
        for axis in Axis::ALL {
            prop_assert_eq!(ComplexTensor3::fold(&t.unfold(axis), axis, [d1, d2, d3]).unwrap(), t.clone());
        }
    }
}
