use dsrkit::curation::ScoredSample;
use dsrkit::metrics::{
    answer_score_bins, camap_group_similarity, correctness_at, correctness_curve, id_consistency, threshold_grid,
    uniform_edges, AttentionGroups, EmbeddingSequence, TokenGroup,
};
use dsrkit::trajectory::DsrType;
use proptest::prelude::*;

prop_compose! {
    fn samples()(raw in prop::collection::vec(prop::option::weighted(0.7, 0.0..=1.0f64), 1..80)) -> Vec<ScoredSample> {
        raw.into_iter()
            .enumerate()
            .map(|(i, s)| match s {
                Some(v) => ScoredSample::valid(format!("s{i}"), "p", DsrType::A, v).unwrap(),
                None => ScoredSample::invalid(format!("s{i}"), "p", DsrType::A),
            })
            .collect()
    }
}

fn embeddings() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6).prop_flat_map(|d| {
        prop::collection::vec(
            prop::collection::vec(-5.0..5.0f64, d).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3)),
            2..12,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn curve_monotone_and_anchored(s in samples(), step in 0.01..0.5f64) {
        let grid = threshold_grid(0.0, 1.0, step).unwrap();
        prop_assert_eq!(grid[0], 0.0);
        prop_assert_eq!(*grid.last().unwrap(), 1.0);
        let c = correctness_curve(&s, &grid).unwrap();
        prop_assert!(c.fractions.windows(2).all(|w| w[1] <= w[0]));
        let valid = s.iter().filter(|x| x.is_valid()).count() as f64 / s.len() as f64;
        prop_assert_eq!(c.fractions[0], valid);
        prop_assert_eq!(correctness_at(&s, 0.0).unwrap(), valid);
    }

    #[test]
    fn id_consistency_ignores_rescaling(frames in embeddings(), scales in prop::collection::vec(0.01..100.0f64, 12)) {
        let base = id_consistency(&EmbeddingSequence::new(frames.clone()).unwrap()).unwrap();
        let scaled: Vec<Vec<f64>> = frames
            .iter()
            .zip(&scales)
            .map(|(f, k)| f.iter().map(|x| x * k).collect())
            .collect();
        let other = id_consistency(&EmbeddingSequence::new(scaled).unwrap()).unwrap();
        prop_assert!((base - other).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn bins_conserve_counts(pairs in prop::collection::vec((-1.0..=1.0f64, any::<bool>()), 0..200), bins in 1usize..20) {
        let out = answer_score_bins(&pairs, &uniform_edges(-1.0, 1.0, bins).unwrap()).unwrap();
        prop_assert_eq!(out.len(), bins);
        prop_assert_eq!(out.iter().map(|b| b.count).sum::<usize>(), pairs.len());
        for b in &out {
            if let Some(f) = b.yes_fraction {
                prop_assert!((0.0..=1.0).contains(&f));
            } else {
                prop_assert!(b.is_empty());
            }
        }
    }

    #[test]
    fn camap_symmetric_with_unit_diagonal(
        rows in prop::collection::vec(prop::collection::vec(0.01..1.0f64, 6), 2..10),
        labels in prop::collection::vec(prop::sample::select(TokenGroup::ALL.to_vec()), 10),
        dup in 0usize..10,
    ) {
        let labels: Vec<TokenGroup> = labels[..rows.len()].to_vec();
        let ag = AttentionGroups::new(rows.clone(), labels.clone()).unwrap();
        let sim = camap_group_similarity(&ag).unwrap();
        let n = sim.groups.len();
        for i in 0..n {
            prop_assert!((sim.matrix[i][i] - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(sim.matrix[i][j], sim.matrix[j][i]);
            }
        }
        // an exact duplicate of a token keeps its group mean
        let k = dup % rows.len();
        let mut rows2 = rows.clone();
        let mut labels2 = labels.clone();
        let mut group_rows: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] == labels[k]).collect();
        if group_rows.len() == 1 {
            rows2.push(rows[k].clone());
            labels2.push(labels[k]);
            group_rows.push(rows.len());
            let sim2 = camap_group_similarity(&AttentionGroups::new(rows2, labels2).unwrap()).unwrap();
            for (a, b) in sim.matrix.iter().flatten().zip(sim2.matrix.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn empty_corpus_is_an_error() {
    assert!(correctness_at(&[], 0.5).is_err());
}
