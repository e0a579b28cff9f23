use qa4ie_core::config::ModelConfig;
use qa4ie_core::gradcheck::finite_difference_check;
use qa4ie_core::graph::Graph;
use qa4ie_core::model::{build_memory, pointer_decode_train, Binding, Parameters};
use qa4ie_core::tensor::{Tensor, TensorError};
use qa4ie_core::vocab::Vocabulary;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn main() {
    let cfg = ModelConfig {
        d: 8, char_embed_dim: 4, char_filters: 8, char_width: 3,
        dropout_rate: 0.0, max_doc_len: 12, max_query_len: 3, max_answer_len: 4, seed: 5,
    };
    let doc: Vec<String> = "the quick brown fox jumps over a lazy dog near old mill"
        .split(' ').map(|s| s.to_string()).collect();
    let query: Vec<String> = "fox color".split(' ').map(|s| s.to_string()).collect();
    let vocab = Vocabulary::build(doc.iter().chain(query.iter()).map(|s| s.as_str()));
    let params = Parameters::init(&cfg, &vocab, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let targets = vec![2usize, 7, 3];

    let run = |store: &BTreeMap<String, Tensor>| -> Result<(f64, BTreeMap<String, Vec<f64>>), TensorError> {
        let p = Parameters::from_store(store.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let b = Binding::new(&mut g, &p);
        let o = build_memory(&mut g, &b, &vocab, &cfg, &doc, &query, false, &mut rng).unwrap();
        let (loss, forced) = pointer_decode_train(&mut g, &b, o, &targets).unwrap();
        g.backward(loss).unwrap();
        let mut grads = BTreeMap::new();
        b.collect_grads(&g, &mut grads);
        Ok((forced.loss, grads))
    };

    let (loss, analytic) = run(params.store()).unwrap();
    println!("loss = {loss:.6}");
    // every param gets a grad entry?
    for name in params.store().keys() {
        if !analytic.contains_key(name) {
            println!("NO GRADIENT for {name}");
        }
    }
    let analytic_full: BTreeMap<String, Vec<f64>> = params.store().iter()
        .map(|(n, t)| (n.clone(), analytic.get(n).cloned().unwrap_or_else(|| vec![0.0; t.numel()])))
        .collect();
    let mut store = params.store().clone();
    let mut f = |s: &BTreeMap<String, Tensor>| run(s).map(|(l, _)| l);
    let t0 = std::time::Instant::now();
    let report = finite_difference_check(&mut f, &mut store, &analytic_full, 1e-5, 25).unwrap();
    println!("coords {} max_rel_err {:.3e} in {:?}", report.coords_checked, report.max_rel_err, t0.elapsed());
    if let Some((name, idx, a, n)) = &report.worst {
        println!("worst: {name}[{idx}] analytic {a:.6e} numeric {n:.6e}");
    }
}
