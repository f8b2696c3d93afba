use super::*;
use crate::covariance::{complex_normal, spatial_covariance, ClusterSet};
use crate::linalg::{cis, max_abs, ONE};
use crate::scenario::{pilot_matrices, received_pilot, sample_ue_channel_series};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const T: f64 = 51e-6;

fn ue(m_bs: usize, doppler: f64, angles: Vec<f64>) -> UeCovariance {
    let tx = spatial_covariance(&ClusterSet::from_angles(angles, 0.05), m_bs);
    let rx = spatial_covariance(&ClusterSet::from_angles(vec![0.2, -0.6], 0.3), 2);
    UeCovariance::new(tx, rx, doppler, T)
}

fn eigen_precoder(ue: &UeCovariance, amp: f64) -> ComplexMatrix {
    let eig = linalg::hermitian_eig(&ue.transmit_correlation()).unwrap();
    eig.leading(ue.ue_antennas()) * Complex64::new(amp, 0.0)
}

/// Textbook route: explicit E, M, F̆ and an explicit inverse.
fn reference_estimator(
    ue: &UeCovariance,
    slots: &[i64],
    precoders: &[ComplexMatrix],
    alpha: f64,
    tau: f64,
    noise: f64,
    target: i64,
) -> (ComplexMatrix, ComplexMatrix) {
    let n = slots.len();
    let row = ComplexMatrix::from_fn(1, n, |_, j| Complex64::new(ue.zeta(target - slots[j]), 0.0));
    let tmat = ComplexMatrix::from_fn(n, n, |a, b| Complex64::new(ue.zeta(slots[a] - slots[b]), 0.0));
    let e = linalg::kron(&row, &ue.channel);
    let m = linalg::kron(&tmat, &ue.channel);
    let blocks: Vec<ComplexMatrix> = precoders.iter().map(|f| pilot_operator(f, ue.ue_antennas())).collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut fb = ComplexMatrix::zeros(rows, n * ue.channel.nrows());
    let d = ue.channel.nrows();
    let mut r = 0;
    for (j, b) in blocks.iter().enumerate() {
        for (p, q) in (0..b.nrows()).flat_map(|p| (0..d).map(move |q| (p, q))) {
            fb[(r + p, j * d + q)] = b[(p, q)];
        }
        r += b.nrows();
    }
    let abar = &fb * &m * fb.adjoint() * Complex64::new(alpha * alpha * tau, 0.0)
        + ComplexMatrix::identity(rows, rows) * Complex64::new(noise, 0.0);
    let inv = abar.try_inverse().unwrap();
    let a = &e * fb.adjoint() * &inv * Complex64::new(alpha * tau.sqrt(), 0.0);
    let xi = &e * fb.adjoint() * &inv * &fb * e.adjoint() * Complex64::new(alpha * alpha * tau, 0.0);
    (a, xi)
}

/// Simulated pilots for one UE: history newest first plus the true channel
/// at `target`.
fn simulate(
    ue: &UeCovariance,
    slots: &[i64],
    target: i64,
    precoder: &ComplexMatrix,
    alpha: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> (PilotHistory, ComplexVector) {
    let s = precoder.ncols();
    let pilots = pilot_matrices(1, s, s + 1).unwrap();
    let mut all: Vec<i64> = slots.to_vec();
    all.push(target);
    all.sort();
    all.dedup();
    let series = sample_ue_channel_series(ue, &all, rng).unwrap();
    let mut hist = PilotHistory::new();
    for &slot in slots {
        let h = series.matrix(series.index_of(slot).unwrap());
        let y = received_pilot(alpha, &h, precoder, &vec![1.0; s], &pilots, noise, rng).unwrap();
        let despread = despread(&y, &pilots[0], (s + 1) as f64).unwrap();
        hist.push(PilotObservation { slot, precoder: precoder.clone(), despread }).unwrap();
    }
    (hist, series.vector(series.index_of(target).unwrap()))
}

#[test]
fn despread_recovers_scaled_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = ComplexMatrix::from_fn(2, 4, |_, _| complex_normal(&mut rng, 1.0));
    let f = ComplexMatrix::from_fn(4, 2, |_, _| complex_normal(&mut rng, 1.0));
    let pilots = pilot_matrices(2, 2, 4).unwrap();
    let y = received_pilot(0.3, &h, &f, &[1.0, 0.5], &pilots[..1], 0.0, &mut rng).unwrap();
    let got = despread(&y, &pilots[0], 4.0).unwrap();
    let fp = &f * ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![ONE, Complex64::new(0.5, 0.0)]));
    let want = &h * fp * Complex64::new(0.3 * 2.0, 0.0);
    assert!(max_abs(&(got - want)) < 1e-12);
    // The other UE's pilot cancels.
    let y = received_pilot(0.3, &h, &f, &[1.0, 0.5], &pilots[1..], 0.0, &mut rng).unwrap();
    assert!(max_abs(&despread(&y, &pilots[0], 4.0).unwrap()) < 1e-10);
    assert!(despread(&y, &pilots[0], 0.0).is_err());
    assert!(despread(&y, &ComplexMatrix::zeros(2, 3), 4.0).is_err());
}

#[test]
fn despread_keeps_noise_white() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pilots = pilot_matrices(1, 4, 8).unwrap();
    let var = 2.5;
    let mut acc = 0.0;
    let mut count = 0;
    while count < 100_000 {
        let y = ComplexMatrix::from_fn(5, 8, |_, _| complex_normal(&mut rng, (0.5 * var as f64).sqrt()));
        let d = despread(&y, &pilots[0], 8.0).unwrap();
        acc += d.iter().map(|z| z.norm_sqr()).sum::<f64>();
        count += d.len();
    }
    let got = acc / count as f64;
    assert!((got / var - 1.0).abs() < 0.03, "{got}");
}

#[test]
fn stacked_operator_structure() {
    let f = ComplexMatrix::from_fn(3, 2, |r, c| Complex64::new((r + 2 * c) as f64, 1.0));
    let mut h = PilotHistory::new();
    for slot in [0, -5] {
        h.push(PilotObservation { slot, precoder: f.clone(), despread: ComplexMatrix::zeros(2, 2) }).unwrap();
    }
    let op = build_stacked_operator(&h, 2).unwrap();
    assert_eq!(op.shape(), (8, 12));
    let single = pilot_operator(&f, 2);
    assert_eq!(op.view((0, 0), (4, 6)).into_owned(), single);
    assert_eq!(op.view((4, 6), (4, 6)).into_owned(), single);
    assert!(max_abs(&op.view((0, 6), (4, 6)).into_owned()) == 0.0);
    assert!(max_abs(&op.view((4, 0), (4, 6)).into_owned()) == 0.0);
    // vec(H F) = F̆ vec(H).
    let hm = ComplexMatrix::from_fn(2, 3, |r, c| Complex64::new(r as f64 - c as f64, (r * c) as f64));
    let lhs = ComplexVector::from_column_slice((&hm * &f).as_slice());
    let rhs = &single * ComplexVector::from_column_slice(hm.as_slice());
    assert!((lhs - rhs).norm() < 1e-12);
    // Identity precoder with one UE antenna selects entries.
    assert_eq!(pilot_operator(&ComplexMatrix::identity(3, 3), 1), ComplexMatrix::identity(3, 3));
    assert!(build_stacked_operator(&PilotHistory::new(), 2).is_err());
}

#[test]
fn history_ordering_and_spacing() {
    let mut h = PilotHistory::new();
    let obs = |slot| PilotObservation { slot, precoder: ComplexMatrix::zeros(3, 2), despread: ComplexMatrix::zeros(2, 2) };
    for s in [-12, 0, -6] {
        h.push(obs(s)).unwrap();
    }
    assert_eq!(h.slots(), vec![0, -6, -12]);
    assert!(h.check_spacing(6).is_ok());
    assert!(h.check_spacing(5).is_err());
    assert!(h.push(obs(0)).is_err());
    h.truncate(2);
    assert_eq!(h.slots(), vec![0, -6]);
}

#[test]
fn matches_textbook_construction() {
    let u = ue(6, 300.0, vec![0.3, 0.9, -0.4]);
    let f = eigen_precoder(&u, 0.7);
    let g = ComplexMatrix::from_fn(6, 2, |r, c| cis((r * 7 + c * 3) as f64 * 0.37));
    let slots = [0, -9, -18];
    let precs = vec![f.clone(), g, f];
    let est = MmseEstimator::new(&u, &slots, &precs, 0.8, 3.0, 0.05, 4).unwrap();
    let (a, xi) = reference_estimator(&u, &slots, &precs, 0.8, 3.0, 0.05, 4);
    let scale = max_abs(&a);
    assert!(max_abs(&(&est.gain - a)) < 1e-10 * scale);
    assert!(max_abs(&(&est.estimate_cov - xi)) < 1e-12);
    let sum = &est.estimate_cov + &est.error_cov;
    assert!(max_abs(&(sum - &u.channel)) < 1e-9 * max_abs(&u.channel));
}

#[test]
fn uninformative_pilots_give_zero_estimate() {
    let u = ue(4, 500.0, vec![0.1, 0.5]);
    // Lag at the first zero of J0 makes the target uncorrelated with the pilot.
    let lag = (2.404_825_557_695_773 / (2.0 * std::f64::consts::PI * T * 500.0)).round() as i64;
    let mut u = u;
    u.doppler_hz = 2.404_825_557_695_773 / (2.0 * std::f64::consts::PI * T * lag as f64);
    let f = eigen_precoder(&u, 1.0);
    let est = MmseEstimator::new(&u, &[0], &[f], 1.0, 3.0, 0.1, lag).unwrap();
    assert!(max_abs(&est.gain) < 1e-12);
    assert!((est.nmse() - 1.0).abs() < 1e-12);
}

#[test]
fn heavy_noise_gives_unit_nmse() {
    let u = ue(4, 100.0, vec![0.1, 0.5]);
    let f = eigen_precoder(&u, 1.0);
    let mut last = 0.0;
    for noise in [1e0, 1e3, 1e6, 1e9] {
        let n = MmseEstimator::new(&u, &[0, -5], &[f.clone(), f.clone()], 1.0, 3.0, noise, 2).unwrap().nmse();
        assert!(n >= last);
        last = n;
    }
    assert!((1.0 - last).abs() < 1e-8);
}

#[test]
fn zero_doppler_curve_is_flat() {
    let u = ue(8, 0.0, vec![0.3, -0.2, 1.0]);
    let f = eigen_precoder(&u, 1.0);
    let curve = nmse_curve(&u, &f, 1.0, 3.0, 0.2, 12, 2).unwrap();
    assert!(curve.iter().all(|x| (x - curve[0]).abs() < 1e-12));
}

#[test]
fn higher_doppler_ages_faster() {
    let f_for = |fd| {
        let u = ue(8, fd, vec![0.3, -0.2, 1.0]);
        let f = eigen_precoder(&u, 1.0);
        nmse_curve(&u, &f, 1.0, 3.0, 0.2, 20, 2).unwrap()
    };
    let (a, b, c) = (f_for(50.0), f_for(100.0), f_for(500.0));
    for i in 1..=20 {
        assert!(a[i] < b[i] && b[i] < c[i], "slot {i}");
    }
}

#[test]
fn rescaled_pilots_leave_estimate_unchanged() {
    let u = ue(4, 200.0, vec![0.4, -0.7]);
    let f = eigen_precoder(&u, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let series = sample_ue_channel_series(&u, &[-6, 0], &mut rng).unwrap();
    let base = pilot_matrices(1, 2, 3).unwrap();
    let noise: Vec<ComplexMatrix> = (0..2).map(|_| ComplexMatrix::from_fn(2, 3, |_, _| complex_normal(&mut rng, 0.1))).collect();
    let run = |c: f64| {
        let pilot = &base[0] * Complex64::new(c, 0.0);
        let (alpha, tau) = (0.9 / c, 3.0 * c * c);
        let mut hist = PilotHistory::new();
        for (j, slot) in [-6i64, 0].iter().enumerate() {
            let y = received_pilot(alpha, &series.matrix(j), &f, &[1.0, 1.0], std::slice::from_ref(&pilot), 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
                + &noise[j];
            hist.push(PilotObservation { slot: *slot, precoder: f.clone(), despread: despread(&y, &pilot, tau).unwrap() }).unwrap();
        }
        mmse_estimate(&hist, &u, alpha, tau, 0.02, 3).unwrap().h
    };
    let h1 = run(1.0);
    for c in [0.25, 3.0, 40.0] {
        assert!((run(c) - &h1).norm() <= 1e-10 * h1.norm());
    }
}

#[test]
fn monte_carlo_error_matches_analytic() {
    let u = ue(4, 150.0, vec![0.3, -0.5]);
    let f = eigen_precoder(&u, 1.0);
    let slots = [0, -7, -14];
    let est = MmseEstimator::new(&u, &slots, &vec![f.clone(); 3], 0.6, 3.0, 0.1, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let draws = 10_000;
    let mut mse = 0.0;
    for _ in 0..draws {
        let (hist, h) = simulate(&u, &slots, 5, &f, 0.6, 0.1, &mut rng);
        mse += (est.apply(&hist).unwrap().h - h).norm_squared();
    }
    mse /= draws as f64;
    assert!((mse / est.nmse() - 1.0).abs() < 0.03, "{mse} vs {}", est.nmse());
}

#[test]
fn error_is_orthogonal_to_observations() {
    let u = ue(3, 250.0, vec![0.3, -0.5]);
    let f = eigen_precoder(&u, 1.0);
    let slots = [0, -4];
    let est = MmseEstimator::new(&u, &slots, &vec![f.clone(); 2], 1.0, 3.0, 0.3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let draws = 10_000;
    let (d, n) = (est.gain.nrows(), est.gain.ncols());
    let mut sum = ComplexMatrix::zeros(d, n);
    let mut sq = DMatrixF::zeros(d, n);
    for _ in 0..draws {
        let (hist, h) = simulate(&u, &slots, 2, &f, 1.0, 0.3, &mut rng);
        let y = hist.stacked_observation();
        let e = est.apply(&hist).unwrap().h - h;
        let outer = &e * y.adjoint();
        sq += outer.map(|z| z.norm_sqr());
        sum += outer;
    }
    let nd = draws as f64;
    let mean = sum / Complex64::new(nd, 0.0);
    let se_sq: f64 = (0..d * n).map(|k| (sq[k] / nd - mean[k].norm_sqr()) / nd).sum();
    assert!(linalg::frobenius_sq(&mean).sqrt() <= 3.0 * se_sq.sqrt(), "{}", linalg::frobenius_sq(&mean).sqrt());
}

type DMatrixF = nalgebra::DMatrix<f64>;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn more_pilots_never_hurt(
        fd in 0.0f64..800.0,
        spacing in 1i64..40,
        target in 0i64..40,
        noise in 0.01f64..10.0,
        a0 in -1.2f64..1.2,
        a1 in -1.2f64..1.2,
    ) {
        let u = ue(5, fd, vec![a0, a1]);
        let f = eigen_precoder(&u, 1.0);
        let mut last = f64::INFINITY;
        for p in 0..4 {
            let slots: Vec<i64> = (0..=p).map(|j| -j * spacing).collect();
            let est = MmseEstimator::new(&u, &slots, &vec![f.clone(); slots.len()], 1.0, 3.0, noise, target).unwrap();
            let n = est.nmse();
            prop_assert!(n <= last + 1e-12);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&n));
            let sum = &est.estimate_cov + &est.error_cov;
            prop_assert!(max_abs(&(sum - &u.channel)) <= 1e-9 * max_abs(&u.channel));
            last = n;
        }
    }
}
