use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use subspace_probe::linalg::DenseMatrix;
use subspace_probe::prompts::{generate_prompts, load_pair_pool, RoleToken, TaskPool, TokenRole};
use subspace_probe::toy::{
    answer_matches, attention_forward_constant, build_associative_ffn, residual_audit, Activation, AttentionMode,
    BuiltToy, ContextTag, FFNSpec, RoleScores, SelfTerm, ToyBuilder, ToyModel, ToyModelConfig,
};

fn pool() -> TaskPool {
    load_pair_pool(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/country-capital.json")).unwrap()
}

fn default_toy() -> (BuiltToy, ToyModel) {
    let toy = ToyBuilder::default().build(&pool()).unwrap();
    let model = ToyModel::new(toy.config.clone()).unwrap();
    (toy, model)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

fn accuracy(toy: &BuiltToy, model: &ToyModel, n_examples: usize) -> usize {
    (0..100u64)
        .filter(|&seed| {
            let p = &generate_prompts(&toy.pool, 1, n_examples, seed).unwrap()[0];
            let trace = model.run(p).unwrap();
            answer_matches(model.predict(&trace).unwrap(), &p.expected_answer)
        })
        .count()
}

/// "Paris: France, London: UK, Washington DC:" where every city recalls a
/// geographic value and only some recall an art value.
#[test]
fn geographic_context_outweighs_art() {
    let d = 16;
    let words = ["Paris", "France", "London", "UK", "Washington", "DC", ":", "geo", "art"];
    let vocab: Vec<(String, Vec<f64>)> = words.iter().enumerate().map(|(i, w)| (w.to_string(), unit(d, i))).collect();
    let emb = |w: &str| vocab.iter().find(|(x, _)| x == w).unwrap().1.clone();
    let (geo, art) = (emb("geo"), emb("art"));
    let recall = |g: f64, a: f64| -> Vec<f64> { geo.iter().zip(&art).map(|(x, y)| g * x + a * y).collect() };
    let features = vec![emb("Paris"), emb("London"), emb("Washington"), emb("DC")];
    let values = vec![recall(1.0, 0.8), recall(1.0, 0.3), recall(1.0, 0.0), recall(0.5, 0.0)];
    let ffn = build_associative_ffn(&features, &values, Activation::ReLU).unwrap();
    let tag = |ctx: &str, word: &str, c: f64| ContextTag { context_id: ctx.into(), value_word: word.into(), coefficient: c };
    let mut context_tags = BTreeMap::new();
    context_tags.insert("Paris".to_string(), vec![tag("geo", "geo", 1.0), tag("art", "art", 0.8)]);
    context_tags.insert("London".to_string(), vec![tag("geo", "geo", 1.0), tag("art", "art", 0.3)]);
    context_tags.insert("Washington".to_string(), vec![tag("geo", "geo", 1.0)]);
    context_tags.insert("DC".to_string(), vec![tag("geo", "geo", 0.5)]);
    let config = ToyModelConfig {
        d,
        n_layers: 2,
        vocab,
        ffn_per_layer: vec![ffn, FFNSpec::empty(d, Activation::ReLU)],
        attention_mode: AttentionMode::Constant {
            scores: vec![RoleScores { alpha: 0.5, beta: 0.0, gamma: 0.0 }; 2],
            value: DenseMatrix::identity(d),
        },
        context_tags,
    };
    let model = ToyModel::new(config).unwrap();
    use TokenRole::*;
    let text = [
        ("Paris", Query),
        (":", Separator),
        ("France", Answer),
        ("London", Query),
        (":", Separator),
        ("UK", Answer),
        ("Washington", TestQuery),
        ("DC", TestQuery),
        (":", FinalSeparator),
    ];
    let tokens =
        text.iter().enumerate().map(|(i, (w, r))| RoleToken { text: w.to_string(), role: *r, prompt_position: i }).collect();
    let trace = model.run_tokens(tokens).unwrap();
    residual_audit(&trace).unwrap();
    let h = trace.h.last().unwrap().row(trace.final_separator().unwrap());
    assert!(dot(h, &geo) > dot(h, &art));
    assert!(dot(h, &art) > 0.0);
}

#[test]
fn five_examples_answer_at_least_ninety_percent() {
    let (toy, model) = default_toy();
    assert!(accuracy(&toy, &model, 5) >= 90);
}

#[test]
fn accuracy_grows_with_examples() {
    let (toy, model) = default_toy();
    for tags in toy.config.context_tags.values() {
        assert!(tags.len() >= 2);
    }
    let acc: Vec<usize> = [1, 2, 3, 5].iter().map(|&n| accuracy(&toy, &model, n)).collect();
    assert!(acc.windows(2).all(|w| w[0] <= w[1]), "{acc:?}");
}

#[test]
fn ffn_share_grows_with_depth() {
    let (toy, model) = default_toy();
    for p in generate_prompts(&toy.pool, 20, 5, 8).unwrap() {
        let share = residual_audit(&model.run(&p).unwrap()).unwrap().ffn_share;
        assert_eq!(share.len(), 8);
        assert!(share.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{share:?}");
    }
}

#[test]
fn zero_ffn_model_has_zero_share() {
    let (toy, _) = default_toy();
    let mut config = toy.config.clone();
    config.ffn_per_layer = vec![FFNSpec::empty(config.d, Activation::ReLU); config.n_layers];
    let model = ToyModel::new(config).unwrap();
    let p = &generate_prompts(&toy.pool, 1, 3, 0).unwrap()[0];
    let share = residual_audit(&model.run(p).unwrap()).unwrap().ffn_share;
    assert!(share.iter().all(|&s| s == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn example_order_does_not_change_first_layer_attention(seed in 0u64..1000, n in 2usize..6, rot in 1usize..5) {
        let (toy, model) = default_toy();
        let p = generate_prompts(&toy.pool, 1, n, seed).unwrap().remove(0);
        let mut q = p.clone();
        q.examples.rotate_left(rot % n);
        q.examples.swap(0, n - 1);
        let (tp, tq) = (model.run(&p).unwrap(), model.run(&q).unwrap());
        let (fp, fq) = (tp.final_separator().unwrap(), tq.final_separator().unwrap());
        for (x, y) in tp.a[0].row(fp).iter().zip(tq.a[0].row(fq)) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn grouped_attention_ignores_block_order(
        blocks in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 12), 2..5),
        tail in prop::collection::vec(-1.0f64..1.0, 8),
        perm_seed in any::<u64>(),
        alpha in -3.0f64..3.0, beta in -3.0f64..3.0, gamma in -3.0f64..3.0,
    ) {
        use TokenRole::*;
        // each block is one (query, separator, answer) triple of 4-dim vectors
        let d = 4;
        let layout = |order: &[usize]| {
            let mut rows: Vec<Vec<f64>> = Vec::new();
            let mut roles = Vec::new();
            for &b in order {
                for (j, role) in [Query, Separator, Answer].into_iter().enumerate() {
                    rows.push(blocks[b][j * d..(j + 1) * d].to_vec());
                    roles.push(role);
                }
            }
            rows.push(tail[..d].to_vec());
            roles.push(TestQuery);
            rows.push(tail[d..].to_vec());
            roles.push(FinalSeparator);
            (DenseMatrix::from_rows(&rows).unwrap(), roles)
        };
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        let (h1, r1) = layout(&order);
        order.rotate_left((perm_seed % blocks.len() as u64) as usize);
        order.reverse();
        let (h2, r2) = layout(&order);
        let scores = RoleScores { alpha, beta, gamma };
        let v = DenseMatrix::identity(d);
        let a1 = attention_forward_constant(&h1, &r1, scores, &v, SelfTerm::Include).unwrap();
        let a2 = attention_forward_constant(&h2, &r2, scores, &v, SelfTerm::Include).unwrap();
        for (x, y) in a1.iter().zip(&a2) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }
}
