use proptest::prelude::*;

use scl_core::asymptotics::{asymptotic_variance, score_cov_exact};
use scl_core::data::{
    is_stopword, parse_conll_str, write_conll, Category, FeatureSpec, Token, TokenSequence, ACTIVE_PER_POSITION,
};
use scl_core::mrf::{ChainModel, Family, GraphModel, Sequence};
use scl_core::scl::{scl_value, ComponentSet, IndicatorMatrix, SelectionPolicy};

const CATEGORIES: [Category; 7] = [
    Category::WordUnigram,
    Category::PosUnigram,
    Category::WordBigramForward,
    Category::WordBigramBackward,
    Category::PosBigramForward,
    Category::PosBigramBackward,
    Category::Stopword,
];

fn theta(r: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, r)
}

fn words() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["the", "The", "dog", "sat", "on", "mat", ".", "Bonds", "fell", "it", "quickly", "of"])
        .prop_map(String::from)
}

fn sentences() -> impl Strategy<Value = Vec<TokenSequence>> {
    let token = (words(), prop::sample::select(vec!["DT", "NN", "VBD", "IN", "."]), 0..5usize).prop_map(
        |(word, pos, c)| Token {
            word,
            pos: pos.to_string(),
            chunk: ["O", "B-NP", "I-NP", "B-VP", "B-PP"][c].to_string(),
        },
    );
    prop::collection::vec(
        prop::collection::vec(token, 1..7).prop_map(|tokens| TokenSequence { tokens }),
        1..5,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_joint_table_is_normalized(t in theta(10)) {
        let g = GraphModel::boltzmann_machine(5).unwrap();
        let total: f64 = g.joint_table(&t).unwrap().iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boltzmann_chain_is_normalized(t in theta(4 + 2 + 4)) {
        // 2 labels, 2 words, length 3: transitions (incl. start) then emissions
        let c = ChainModel::boltzmann_chain(2, 2).unwrap();
        prop_assume!(t.len() == c.num_params());
        let mut total = 0.0;
        for code in 0..64usize {
            let labels: Vec<usize> = (0..3).map(|i| (code >> i) & 1).collect();
            let obs: Vec<Vec<u32>> = (0..3).map(|i| vec![((code >> (3 + i)) & 1) as u32]).collect();
            total += c.log_likelihood(&t, &Sequence { labels, obs }).unwrap().exp();
        }
        prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
    }

    #[test]
    fn indicator_second_moments_match(
        lambda in prop::collection::vec(0.05..0.95f64, 4),
        family in 0..3usize,
    ) {
        let policy = match family {
            0 => SelectionPolicy::independence(lambda),
            1 => {
                let s: f64 = lambda.iter().sum();
                SelectionPolicy::multinomial(lambda.iter().map(|l| l / s).collect())
            }
            _ => {
                let (a, b) = (lambda[0] + lambda[1], lambda[2] + lambda[3]);
                SelectionPolicy::product_of_multinomials(
                    vec![lambda[0] / a, lambda[1] / a, lambda[2] / b, lambda[3] / b],
                    vec![vec![0, 1], vec![2, 3]],
                )
            }
        }
        .unwrap();
        let n = 20_000;
        let z = policy.draw_indicators(n, 3).unwrap();
        let exact = policy.second_moments();
        for i in 0..4 {
            for j in 0..4 {
                let emp = (0..n).filter(|&r| z.get(r, i) && z.get(r, j)).count() as f64 / n as f64;
                prop_assert!((emp - exact[(i, j)]).abs() < 0.025, "({}, {}) {} vs {}", i, j, emp, exact[(i, j)]);
            }
        }
    }

    #[test]
    fn objective_scales_with_beta(t in theta(6), c in 0.1..10.0f64) {
        let g = GraphModel::boltzmann_machine(4).unwrap();
        let data = g.sample_exact(&t, 30, 1).unwrap();
        let comps = ComponentSet::pseudo(4, 1).unwrap();
        let z = IndicatorMatrix::ones(data.len(), comps.len());
        let v = scl_value(&g, &t, &data, &comps, &z).unwrap();
        let vc = scl_value(&g, &t, &data, &comps.scaled(c), &z).unwrap();
        prop_assert!((vc - c * v).abs() < 1e-9 * (1.0 + v.abs() * c));
    }

    #[test]
    fn asymptotic_variance_ignores_beta_scale(t in theta(6), c in 0.1..10.0f64) {
        let g = GraphModel::boltzmann_machine(4).unwrap();
        let comps = ComponentSet::pseudo(4, 1).unwrap().concat(&ComponentSet::pseudo(4, 2).unwrap());
        let cov = score_cov_exact(&g, &t, &comps).unwrap();
        let k = comps.len();
        let policy = SelectionPolicy::independence((0..k).map(|j| 0.3 + 0.6 * j as f64 / k as f64).collect()).unwrap();
        let beta: Vec<f64> = (0..k).map(|j| 1.0 + j as f64 / k as f64).collect();
        let scaled: Vec<f64> = beta.iter().map(|b| b * c).collect();
        let a = asymptotic_variance(&cov, &policy, &beta).unwrap();
        let b = asymptotic_variance(&cov, &policy, &scaled).unwrap();
        let rel = (&a.variance - &b.variance).norm() / a.variance.norm();
        prop_assert!(rel < 1e-8, "relative change {}", rel);
    }

    #[test]
    fn conll_round_trip(seqs in sentences()) {
        let text = write_conll(&seqs);
        prop_assert_eq!(parse_conll_str(&text).unwrap(), seqs);
    }

    #[test]
    fn features_are_deterministic_and_in_range(train in sentences(), test in sentences()) {
        let spec = FeatureSpec::from_training(&train);
        let again = FeatureSpec::from_training(&train);
        for seq in train.iter().chain(&test) {
            let f = spec.featurize(seq);
            prop_assert_eq!(&f, &again.featurize(seq));
            prop_assert_eq!(f.len(), seq.len());
            for (pos, tok) in f.iter().zip(&seq.tokens) {
                prop_assert_eq!(pos.len(), ACTIVE_PER_POSITION);
                for (&id, &cat) in pos.iter().zip(&CATEGORIES) {
                    let lo = spec.category_offset(cat);
                    prop_assert!((lo..lo + spec.category_size(cat)).contains(&(id as usize)));
                }
                let stop = spec.category_offset(Category::Stopword) as u32;
                prop_assert_eq!(pos[6], if is_stopword(&tok.word) { stop } else { stop + 1 });
            }
        }
        let ds = spec.extract(&test);
        prop_assert!(ds.sequences.iter().all(|s| s.obs.iter().all(|o| o.len() == ACTIVE_PER_POSITION)));
    }
}

#[test]
fn stopword_list_partitions_vocabulary() {
    for w in ["the", "The", "THE", "of", "it"] {
        assert!(is_stopword(w), "{w}");
    }
    for w in ["dog", "Bonds", "quickly", ".", ""] {
        assert!(!is_stopword(w), "{w}");
    }
}
