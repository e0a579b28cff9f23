use qa4ie_core::config::{ModelConfig, TrainConfig};
use qa4ie_core::corpus::{generate_synthetic_corpus, pipeline, GeneratorSpec};
use qa4ie_core::model::train;

fn main() {
    let spec = GeneratorSpec {
        vocab_size: 40, article_count: 4, len_min: 10, len_max: 14,
        relation_count: 4, triples_min: 2, triples_max: 3, object_len_max: 2,
        seq_fraction: 0.0, seed: 17,
    };
    let corpus = generate_synthetic_corpus(&spec).unwrap();
    let articles: Vec<_> = corpus.articles.into_iter().map(|a| {
        let (mut c, _) = pipeline::clip_triples(&a);
        let (q, _) = pipeline::assign_answers(&c);
        c.queries = q;
        c
    }).collect();
    let cfg = ModelConfig { d: 6, char_embed_dim: 4, char_filters: 6, char_width: 3,
        dropout_rate: 0.0, max_doc_len: 20, max_query_len: 4, max_answer_len: 4, seed: 3 };
    let tc = TrainConfig { max_epochs: 12, batch_size: 4, patience: 100, ..TrainConfig::default() };
    let out = train(&articles, &articles, &cfg, &tc, &mut |l| {
        println!("epoch {} loss {:.4} em {:.1} f1 {:.1}", l.epoch, l.loss, l.dev_em, l.dev_f1);
    }).unwrap();
    println!("best epoch {} em {:.2}", out.best_epoch, out.best_dev_em);
}
