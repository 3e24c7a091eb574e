use modelmap::divergence::subset_correlation;
use modelmap::embed::{pca, procrustes_align, tsne_from_coords, tsne_from_sq_distances, TsneInit, TsneParams};
use modelmap::fixture::{generate_fixture, FixtureSpec};
use modelmap::{LogLikelihoodMatrix, ModelMeta, TextSetMeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn points(rows: &[Vec<f64>]) -> LogLikelihoodMatrix {
    let d = rows[0].len();
    let texts = TextSetMeta::new((0..d).map(|i| format!("x{i}")).collect(), vec![1; d]).unwrap();
    LogLikelihoodMatrix::from_rows(rows, ModelMeta::synthetic(rows.len()), texts).unwrap()
}

fn clusters(rng: &mut ChaCha8Rng, n_clusters: usize, per: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for c in 0..n_clusters {
        for _ in 0..per {
            rows.push(
                (0..d)
                    .map(|j| if j == c { 10.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
        }
    }
    rows
}

fn nearest_neighbor_purity(coords: &[f64], dim: usize, per: usize) -> f64 {
    let k = coords.len() / dim;
    let mut same = 0;
    for i in 0..k {
        let nn = (0..k)
            .filter(|&j| j != i)
            .min_by(|&a, &b| {
                let da: f64 = (0..dim).map(|t| (coords[i * dim + t] - coords[a * dim + t]).powi(2)).sum();
                let db: f64 = (0..dim).map(|t| (coords[i * dim + t] - coords[b * dim + t]).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        if nn / per == i / per {
            same += 1;
        }
    }
    same as f64 / k as f64
}

#[test]
fn tsne_separates_planted_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let m = points(&clusters(&mut rng, 4, 15, 8));
    for init in [TsneInit::Pca, TsneInit::Random] {
        let mut p = TsneParams::new(2, 10.0, 5);
        p.init = init;
        let emb = tsne_from_coords(&m, &p).unwrap();
        assert_eq!(nearest_neighbor_purity(&emb.coords, 2, 15), 1.0);
        assert!(emb.final_objective.unwrap() < emb.initial_objective.unwrap());
    }
}

#[test]
fn tsne_is_deterministic_and_handles_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut rows = clusters(&mut rng, 2, 10, 4);
    rows[3] = rows[2].clone();
    rows[4] = rows[2].clone();
    let m = points(&rows);
    let p = TsneParams::new(3, 4.0, 77);
    let (a, b) = (tsne_from_coords(&m, &p).unwrap(), tsne_from_coords(&m, &p).unwrap());
    assert_eq!(a.coords, b.coords);
    assert!(a.coords.iter().all(|v| v.is_finite()));
}

#[test]
fn tsne_rejects_bad_perplexity() {
    let d2 = vec![0.0; 36];
    assert!(tsne_from_sq_distances(&d2, 6, &TsneParams::new(2, 30.0, 1)).is_err());
    assert!(tsne_from_sq_distances(&d2, 6, &TsneParams::new(2, 1.0, 1)).is_err());
}

#[test]
fn pca_recovers_dominant_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let t: f64 = rng.sample(StandardNormal);
            (0..6).map(|j| if j == 2 { 5.0 * t } else { 0.1 * rng.sample::<f64, _>(StandardNormal) }).collect()
        })
        .collect();
    let r = pca(&points(&rows), 2).unwrap();
    assert!(r.explained_variance_ratio[0] > 0.98);
    assert!(r.component(0)[2].abs() > 0.99);
    let recon = r.reconstruct(7);
    assert!((recon[2] - rows[7][2]).abs() < 0.5);
}

#[test]
fn procrustes_undoes_rotation() {
    let reference = vec![0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 1.0];
    let (s, c) = (0.6f64, 0.8f64);
    let rotated: Vec<f64> = reference
        .chunks(2)
        .flat_map(|p| [c * p[0] - s * p[1] + 4.0, s * p[0] + c * p[1] - 1.0])
        .collect();
    let aligned = procrustes_align(&rotated, &reference, 2).unwrap();
    for (a, b) in aligned.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn kl_agrees_across_text_halves() {
    let fx = generate_fixture(&FixtureSpec {
        n_texts: 2000,
        ..FixtureSpec::default()
    })
    .unwrap();
    let n = fx.loglik.n_texts();
    let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|x| x % 2 == 0);
    let k = fx.loglik.n_models();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let r = subset_correlation(&fx.loglik, &a, &b, &pairs).unwrap();
    assert!(r > 0.95, "split-half correlation {r}");
}
