use qa4ie_core::config::{ModelConfig, TrainConfig};
use qa4ie_core::corpus::{build_dataset, generate_synthetic_corpus, GeneratorSpec};
use qa4ie_core::model::train;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let dropout: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let batch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20);
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(40);
    let seq_fraction: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let spec = GeneratorSpec { seq_fraction, ..GeneratorSpec::default() };
    let corpus = generate_synthetic_corpus(&spec).unwrap();
    let (articles, _, _) = build_dataset(corpus.articles, 6, 7);
    println!("articles {} queries {}", articles.len(),
        articles.iter().map(|a| a.queries.len()).sum::<usize>());

    let cfg = ModelConfig { d: 16, dropout_rate: dropout, max_doc_len: 80, max_query_len: 8,
        max_answer_len: 8, seed: 42, ..ModelConfig::default() };
    let tc = TrainConfig { max_epochs: epochs, batch_size: batch, lr, patience: 1000,
        stop_at_dev_em: Some(95.0), ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let out = train(&articles, &articles, &cfg, &tc, &mut |l| {
        println!("epoch {:3} loss {:8.4} em {:6.2} f1 {:6.2}  [{:?}]",
            l.epoch, l.loss, l.dev_em, l.dev_f1, t0.elapsed());
    }).unwrap();
    println!("best epoch {} em {:.2} total {:?}", out.best_epoch, out.best_dev_em, t0.elapsed());
}
