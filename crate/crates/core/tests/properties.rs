use nalgebra::DMatrix;
use proptest::prelude::*;
use ssio::baselines::{brute_force_select, project_capped_simplex};
use ssio::linalg::{a_cost, fisher_matrix, hard_cost, sensitivity, Criterion};
use ssio::harden;

fn matrix(n: usize, p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-2.0f64..2.0, n * p)
        .prop_map(move |v| DMatrix::from_row_slice(n, p, &v))
}

fn design() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>)> {
    (2usize..5, 0usize..5).prop_flat_map(|(p, extra)| {
        let n = p + 1 + extra;
        (matrix(n, p), proptest::collection::vec(0.05f64..1.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn fisher_is_symmetric_psd((x, q) in design()) {
        let r = fisher_matrix(&x, &q).unwrap();
        let m = r.matrix();
        prop_assert!((m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0));
        let eig = m.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() >= -1e-10 * m.amax().max(1.0));
    }

    #[test]
    fn a_cost_is_inverse_homogeneous((x, q) in design(), c in 0.1f64..10.0) {
        let r = fisher_matrix(&x, &q).unwrap();
        if let Ok(a) = a_cost(&r) {
            let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
            let b = a_cost(&fisher_matrix(&x, &scaled).unwrap()).unwrap();
            prop_assert!((b * c - a).abs() <= 1e-7 * a.abs().max(1.0));
        }
    }

    #[test]
    fn hard_cost_is_relaxed_cost_at_binary_weights((x, _) in design(), mask in any::<u16>()) {
        let s: Vec<bool> = (0..x.nrows()).map(|i| mask >> i & 1 == 1).collect();
        let q: Vec<f64> = s.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        match (hard_cost(&x, &s, Criterion::A), a_cost(&fisher_matrix(&x, &q).unwrap())) {
            (Ok(h), Ok(a)) => prop_assert!((h - a).abs() <= 1e-10 * a.max(1.0)),
            (Err(_), Err(_)) => {}
            (h, a) => prop_assert!(false, "disagree: {:?} vs {:?}", h, a),
        }
    }

    #[test]
    fn sensitivity_is_the_weight_derivative((x, q) in design(), row in 0usize..4) {
        let j = row % x.nrows();
        let r = fisher_matrix(&x, &q).unwrap();
        prop_assume!(a_cost(&r).map(|a| a < 1e4).unwrap_or(false));
        let xj: Vec<f64> = x.row(j).iter().cloned().collect();
        let v = sensitivity(&r, &xj, 2).unwrap();
        let h = 1e-6;
        let mut up = q.clone();
        let mut dn = q.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = -(a_cost(&fisher_matrix(&x, &up).unwrap()).unwrap()
            - a_cost(&fisher_matrix(&x, &dn).unwrap()).unwrap())
            / (2.0 * h);
        prop_assert!((fd - v).abs() <= 1e-5 * v.abs().max(1.0), "{} vs {}", fd, v);
    }

    #[test]
    fn brute_force_is_permutation_equivariant(x in matrix(7, 2), shift in 1usize..7) {
        let r = 3;
        let perm: Vec<usize> = (0..7).map(|i| (i + shift) % 7).collect();
        let y = DMatrix::from_fn(7, 2, |i, k| x[(perm[i], k)]);
        let a = brute_force_select(&x, r, Criterion::A);
        let b = brute_force_select(&y, r, Criterion::A);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.cost - b.cost).abs() <= 1e-9 * a.cost.max(1.0));
                // costs of the mapped selection agree
                let mapped: Vec<bool> = (0..7).map(|i| b.s[(i + 7 - shift) % 7]).collect();
                let c = hard_cost(&x, &mapped, Criterion::A).unwrap();
                prop_assert!((c - b.cost).abs() <= 1e-9 * c.max(1.0));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "only one ordering was solvable"),
        }
    }

    #[test]
    fn hardening_is_idempotent((x, q) in design()) {
        let r = x.ncols();
        if let Ok(d) = harden(&q, &x, r, Criterion::A) {
            prop_assert_eq!(d.selected(), r);
            let hard: Vec<f64> = d.s.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let again = harden(&hard, &x, r, Criterion::A).unwrap();
            prop_assert_eq!(again.s, d.s);
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(
        y in proptest::collection::vec(-3.0f64..3.0, 2..10),
        frac in 0.1f64..0.9,
    ) {
        let r = (frac * y.len() as f64).max(1.0).floor();
        let z = project_capped_simplex(&y, r);
        prop_assert!((z.iter().sum::<f64>() - r).abs() < 1e-9);
        prop_assert!(z.iter().all(|v| (0.0..=1.0).contains(v)));
        let w = project_capped_simplex(&z, r);
        for (a, b) in z.iter().zip(&w) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // order preserving
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] < y[j] {
                    prop_assert!(z[i] <= z[j] + 1e-12);
                }
            }
        }
    }
}
