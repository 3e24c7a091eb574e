use modelmap::divergence::{kl_matrix, kl_pair};
use modelmap::matrix::quantile;
use modelmap::scaling::{fit_exponent, fractal_dimension, holder_from_exponents};
use modelmap::stats::median;
use modelmap::{LogLikelihoodMatrix, ModelMeta, RowMatrix, TextSetMeta};
use proptest::prelude::*;

fn build(k: usize, n: usize, vals: &[f64], bytes: &[u64]) -> LogLikelihoodMatrix {
    let texts = TextSetMeta::new((0..n).map(|i| format!("t{i}")).collect(), bytes[..n].to_vec()).unwrap();
    LogLikelihoodMatrix::new(vals[..k * n].to_vec(), ModelMeta::synthetic(k), texts).unwrap()
}

fn matrix_strategy() -> impl Strategy<Value = LogLikelihoodMatrix> {
    (2usize..7, 3usize..40).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(-500.0f64..-0.1, k * n),
            prop::collection::vec(1u64..400, n),
        )
            .prop_map(move |(v, b)| build(k, n, &v, &b))
    })
}

proptest! {
    #[test]
    fn kl_is_symmetric_nonnegative_with_zero_diagonal(m in matrix_strategy()) {
        let c = m.double_center().unwrap().rescale_bits_per_byte().unwrap();
        let r = kl_matrix(&c, None).unwrap();
        for i in 0..r.len() {
            prop_assert_eq!(r.value(i, i), 0.0);
            for j in 0..r.len() {
                prop_assert!(r.value(i, j) >= 0.0);
                prop_assert_eq!(r.value(i, j), r.value(j, i));
                prop_assert!(r.get(i, j).std_error >= 0.0);
            }
        }
    }

    #[test]
    fn centering_removes_row_and_column_effects(m in matrix_strategy(), shift in -50.0f64..50.0) {
        let (k, n) = (m.n_models(), m.n_texts());
        let shifted: Vec<f64> = (0..k * n)
            .map(|idx| m.values()[idx] + shift * (idx / n) as f64 - 0.5 * shift * (idx % n) as f64)
            .collect();
        let m2 = LogLikelihoodMatrix::new(shifted, m.models().to_vec(), m.texts().clone()).unwrap();
        let (a, b) = (m.double_center().unwrap(), m2.double_center().unwrap());
        for (x, y) in a.coords().iter().zip(b.coords()) {
            prop_assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
        for i in 0..k {
            prop_assert!(a.row(i).iter().sum::<f64>().abs() < 1e-8);
        }
        for x in 0..n {
            prop_assert!((0..k).map(|i| a.row(i)[x]).sum::<f64>().abs() < 1e-8);
        }
    }

    #[test]
    fn kl_matrix_is_permutation_equivariant(m in matrix_strategy()) {
        let k = m.n_models();
        let perm: Vec<usize> = (0..k).rev().collect();
        let c = m.double_center().unwrap();
        let cp = m.select_indices(&perm).unwrap().double_center().unwrap();
        for i in 0..k {
            for j in 0..k {
                let (a, b) = (kl_pair(&c, perm[i], perm[j]).unwrap().value, kl_pair(&cp, i, j).unwrap().value);
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn clipping_never_lowers_values(m in matrix_strategy(), q in 0.0f64..0.3) {
        let clipped = m.clip_bottom_quantile(q).unwrap();
        let floor = quantile(m.values(), q);
        for (a, b) in m.values().iter().zip(clipped.values()) {
            prop_assert!(b >= a);
            prop_assert_eq!(*b, a.max(floor));
        }
    }

    #[test]
    fn exponent_ignores_prefactor(c in 0.05f64..2.0, a in 1e-6f64..1e6, noise in prop::collection::vec(-0.05f64..0.05, 30)) {
        let pairs: Vec<(f64, f64)> = (1..=30).map(|l| (l as f64, (l as f64).powf(c) * noise[l - 1].exp())).collect();
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(l, d)| (l, a * d)).collect();
        let (f1, f2) = (fit_exponent(&pairs).unwrap(), fit_exponent(&scaled).unwrap());
        prop_assert!((f1.c - f2.c).abs() < 1e-9);
        prop_assert!((f2.log_intercept - f1.log_intercept - a.ln()).abs() < 1e-8);
    }

    #[test]
    fn holder_matches_dimension_ratio(c_w in 0.05f64..2.0, c_q in 0.05f64..2.0) {
        let alpha = holder_from_exponents(c_w, c_q).unwrap();
        let ratio = fractal_dimension(c_w).unwrap().dimension / fractal_dimension(c_q).unwrap().dimension;
        prop_assert!((alpha - ratio).abs() < 1e-12 * alpha.max(1.0));
    }

    #[test]
    fn median_is_order_free(mut v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        let m1 = median(&v);
        v.reverse();
        prop_assert_eq!(m1, median(&v));
    }
}
