mod common;

use std::collections::{BTreeMap, BTreeSet};

use layerscope::inventory::Contrast;
use layerscope::linalg::{fit_lda, fit_logreg, fit_pca, FitConfig};
use layerscope::metrics::{
    run_abx, run_cluster, run_probe, AnalysisContext, BootstrapConfig, ClusterConfig,
};
use layerscope::rng::stream_rng;
use layerscope::sampling::{build_abx_triplets, sample_occurrences, split_by_speaker, SpeakerSplit};
use layerscope::store::{
    build_segment_table, read_frame_matrix, write_frame_matrix, CorpusManifest, FrameMatrix,
    SegmentTable, Tier,
};
use layerscope::linalg::{DistanceMetric, ProjectionKind};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{gaussian, speaker, table, Token};

fn random_tokens(seed: u64, n_spk: usize, per_spk: usize, labels: &[&str], d: usize) -> Vec<Token> {
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::new();
    for s in 0..n_spk {
        for k in 0..per_spk {
            let l = labels[rng.random_range(0..labels.len())];
            let mut v = gaussian(&mut rng, d, 1.0);
            v[labels.iter().position(|x| *x == l).unwrap() % d] += 2.0;
            out.push((format!("{}_u{}", speaker(s), k % 3), speaker(s), l.to_string(), v));
        }
    }
    out
}

fn ctx() -> AnalysisContext {
    AnalysisContext {
        bootstrap: BootstrapConfig {
            n_resamples: 200,
            alpha: 0.05,
            seed: 9,
        },
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emb1_round_trip_is_bit_exact(
        layer in 0u32..64,
        rows in 1usize..12,
        cols in 1usize..9,
        seed in any::<u64>(),
    ) {
        let mut rng = stream_rng(seed, 0);
        let data: Vec<f32> = (0..rows * cols).map(|_| f32::from_bits(rng.random::<u32>() & 0xbf7f_ffff)).collect();
        let m = FrameMatrix::new(layer, rows, cols, data).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_frame_matrix(&m, tmp.path()).unwrap();
        let back = read_frame_matrix(tmp.path()).unwrap();
        let bits = |m: &FrameMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&m), bits(&back));
        prop_assert_eq!((back.layer(), back.num_frames(), back.dim()), (layer, rows, cols));
    }

    #[test]
    fn quota_and_split_invariants(
        seed in any::<u64>(),
        n_spk in 2usize..7,
        per_spk in 1usize..40,
        quota in 1usize..6,
    ) {
        let t = table(Tier::Phone, 0, &random_tokens(seed, n_spk, per_spk, &["a", "b", "c"], 3));
        let s = sample_occurrences(&t, quota, seed).unwrap();
        let mut groups: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for r in &s.rows {
            *groups.entry((&r.speaker_id, &r.label)).or_default() += 1;
        }
        prop_assert!(groups.values().all(|&n| n <= quota));
        let ids: BTreeSet<_> = s.rows.iter().map(|r| &r.segment).collect();
        prop_assert_eq!(ids.len(), s.rows.len());
        prop_assert_eq!(&s, &sample_occurrences(&t, quota, seed).unwrap());

        let n_test = 1 + (seed as usize) % (n_spk - 1);
        let split = split_by_speaker(&s, n_test, seed).unwrap();
        prop_assert!(split.train_speakers.is_disjoint(&split.test_speakers));
        let all: BTreeSet<String> = s.rows.iter().map(|r| r.speaker_id.clone()).collect();
        let union: BTreeSet<String> = split.train_speakers.union(&split.test_speakers).cloned().collect();
        prop_assert_eq!(union, all);
        prop_assert_eq!(split.test_speakers.len(), n_test);
    }

    #[test]
    fn pca_basis_orthonormal_and_ordered(seed in any::<u64>(), n in 3usize..40, d in 1usize..8) {
        let mut rng = stream_rng(seed, 0);
        let x = DMatrix::from_fn(n, d, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64);
        let k = rng.random_range(1..=n.min(d));
        let p = fit_pca(&x, k).unwrap();
        let gram = p.basis.transpose() * &p.basis;
        let off = (gram - DMatrix::<f64>::identity(k, k)).abs().max();
        prop_assert!(off <= 1e-8, "‖QᵀQ − I‖∞ = {}", off);
        prop_assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(p.eigenvalues.iter().sum::<f64>() <= p.eigenvalue_total * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn abx_invariant_under_positive_rescaling(seed in any::<u64>()) {
        let tokens = random_tokens(seed, 4, 30, &["a", "b", "c"], 4);
        let t = table(Tier::Phone, 0, &tokens);
        let contrasts = vec![Contrast::new("a", "b").unwrap(), Contrast::new("b", "c").unwrap()];
        let triplets = build_abx_triplets(&t, &contrasts, 40, seed).unwrap();
        prop_assume!(!triplets.triplets.is_empty());
        let mut rng = stream_rng(seed, 1);
        let scaled: Vec<Token> = tokens
            .iter()
            .map(|(u, s, l, v)| {
                let f = rng.random_range(0.01..100.0);
                (u.clone(), s.clone(), l.clone(), v.iter().map(|x| f * x).collect())
            })
            .collect();
        let a = &run_abx(&[t], &triplets, &ctx()).unwrap()[0];
        let b = &run_abx(&[table(Tier::Phone, 0, &scaled)], &triplets, &ctx()).unwrap()[0];
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!((a.ci_low, a.ci_high), (b.ci_low, b.ci_high));

        // overall mean equals the triplet-weighted mean of contrast means
        let per = a.per_contrast.as_ref().unwrap();
        let n: usize = per.iter().map(|c| c.n_triplets).sum();
        let weighted: f64 = per.iter().map(|c| c.value * c.n_triplets as f64).sum::<f64>() / n as f64;
        prop_assert!((weighted - a.value).abs() < 1e-12);
        prop_assert_eq!(n, a.n_items);
    }
}

#[test]
fn lda_first_component_maximizes_rayleigh_quotient() {
    let mut rng = stream_rng(5, 0);
    let (c, d, per) = (4, 5, 60);
    let means: Vec<Vec<f64>> = (0..c).map(|_| gaussian(&mut rng, d, 3.0)).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, m) in means.iter().enumerate() {
        for _ in 0..per {
            let noise = gaussian(&mut rng, d, 1.0);
            // anisotropic noise so that LDA differs from the between-class PCA
            rows.push((0..d).map(|j| m[j] + noise[j] * (1.0 + j as f64)).collect::<Vec<f64>>());
            labels.push(format!("c{k}"));
        }
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let p = fit_lda(&x, &labels, c - 1, 0.0).unwrap();

    let grand: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let mut sw = DMatrix::<f64>::zeros(d, d);
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for k in 0..c {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == format!("c{k}")).collect();
        let mu: Vec<f64> = (0..d).map(|j| idx.iter().map(|&i| x[(i, j)]).sum::<f64>() / idx.len() as f64).collect();
        for &i in &idx {
            let v = nalgebra::DVector::from_fn(d, |j, _| x[(i, j)] - mu[j]);
            sw += &v * v.transpose();
        }
        let v = nalgebra::DVector::from_fn(d, |j, _| mu[j] - grand[j]);
        sb += (&v * v.transpose()) * idx.len() as f64;
    }
    let rq = |w: &nalgebra::DVector<f64>| (w.transpose() * &sb * w)[0] / (w.transpose() * &sw * w)[0];
    let best = rq(&p.basis.column(0).into_owned());
    for _ in 0..1000 {
        let w = nalgebra::DVector::from_vec(gaussian(&mut rng, d, 1.0)).normalize();
        assert!(rq(&w) <= best * (1.0 + 1e-9), "{} > {best}", rq(&w));
    }
}

#[test]
fn predictions_survive_affine_feature_rescaling() {
    let tokens = random_tokens(13, 1, 300, &["a", "b", "c", "d"], 4);
    let x = DMatrix::from_fn(tokens.len(), 4, |i, j| tokens[i].3[j]);
    let y: Vec<&str> = tokens.iter().map(|t| t.2.as_str()).collect();
    let scale = [3.0, 0.2, 50.0, 1.0];
    let shift = [-4.0, 100.0, 0.5, 0.0];
    let x2 = DMatrix::from_fn(x.nrows(), 4, |i, j| x[(i, j)] * scale[j] + shift[j]);
    let cfg = FitConfig::default();
    let m1 = fit_logreg(&x, &y, &cfg).unwrap();
    let m2 = fit_logreg(&x2, &y, &cfg).unwrap();
    assert_eq!(m1.predict(&x).unwrap(), m2.predict(&x2).unwrap());
}

fn shuffled(tokens: &[Token], seed: u64) -> SegmentTable {
    // keep within-utterance ranks stable: ids are assigned in input order,
    // so shuffle whole utterances and reverse nothing inside them
    let mut by_utt: BTreeMap<&str, Vec<&Token>> = BTreeMap::new();
    for t in tokens {
        by_utt.entry(&t.0).or_default().push(t);
    }
    let mut groups: Vec<Vec<&Token>> = by_utt.into_values().collect();
    groups.shuffle(&mut stream_rng(seed, 0));
    let flat: Vec<Token> = groups.into_iter().flatten().cloned().collect();
    table(Tier::Phone, 0, &flat)
}

#[test]
fn analyses_independent_of_row_order() {
    let tokens = random_tokens(17, 5, 60, &["a", "b", "c", "d"], 4);
    let a = table(Tier::Phone, 0, &tokens);
    let b = shuffled(&tokens, 3);
    assert_ne!(a.rows()[0].id, b.rows()[0].id);
    let split = SpeakerSplit {
        train_speakers: (0..3).map(speaker).collect(),
        test_speakers: (3..5).map(speaker).collect(),
    };
    let cfg = FitConfig::default();
    let pa = run_probe(&[a.clone()], &split, &cfg, &ctx()).unwrap();
    let pb = run_probe(&[b.clone()], &split, &cfg, &ctx()).unwrap();
    assert_eq!((pa[0].value, pa[0].ci_low, pa[0].ci_high), (pb[0].value, pb[0].ci_low, pb[0].ci_high));
    for reducer in [ProjectionKind::Pca, ProjectionKind::Lda] {
        let cc = ClusterConfig { reducer, k: 3, metric: DistanceMetric::Euclidean, lda_shrinkage: 1e-4 };
        let ca = run_cluster(&[a.clone()], &split, &cc, &ctx()).unwrap();
        let cb = run_cluster(&[b.clone()], &split, &cc, &ctx()).unwrap();
        assert!((ca[0].value - cb[0].value).abs() < 1e-12);
        assert_eq!(ca[0].n_items, cb[0].n_items);
    }
    let contrasts = vec![Contrast::new("a", "b").unwrap(), Contrast::new("c", "d").unwrap()];
    let ta = build_abx_triplets(&a, &contrasts, 30, 1).unwrap();
    let tb = build_abx_triplets(&b, &contrasts, 30, 1).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(sample_occurrences(&a, 4, 2).unwrap(), sample_occurrences(&b, 4, 2).unwrap());
}

#[test]
fn held_out_speakers_never_trained_on() {
    let tokens = random_tokens(19, 4, 40, &["a", "b", "c"], 3);
    let t = table(Tier::Phone, 0, &tokens);
    let split = SpeakerSplit {
        train_speakers: [speaker(0), speaker(2)].into(),
        test_speakers: [speaker(1), speaker(3)].into(),
    };
    let r = &run_probe(&[t.clone()], &split, &FitConfig::default(), &ctx()).unwrap()[0];
    let train: BTreeSet<_> = r.metadata.train_speakers.iter().collect();
    let test: BTreeSet<_> = r.metadata.test_speakers.iter().collect();
    assert!(train.is_disjoint(&test));
    let n_test = (0..t.len()).filter(|&i| split.is_test(&t.meta(i).speaker_id)).count();
    assert_eq!(r.n_items, n_test);
}

#[test]
fn segment_table_independent_of_thread_count() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/desk");
    let m = CorpusManifest::load(&dir.join("manifest.json")).unwrap();
    let build = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| build_segment_table(&m, Tier::Phone, 2).unwrap().table)
    };
    let one = build(1);
    assert_eq!(one, build(4));
    assert_eq!(one, build(16));
}
