//! Neighboring-query expansion: candidate queries for the IE setting.
//!
//! Two queries are neighbors when they co-occur in the gold query list of
//! any single article. Each article's pool is its gold queries plus every
//! neighbor of a gold query, deduplicated; expanded queries carry no answer.

use crate::corpus::Article;
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq)]
pub struct PoolQuery {
    pub query_tokens: Vec<String>,
    /// Gold answer variants; `None` marks an expanded (negative) query.
    pub gold_answer: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticlePool {
    pub article_id: String,
    pub title: String,
    pub queries: Vec<PoolQuery>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPool {
    pub articles: Vec<ArticlePool>,
    pub gold_total: usize,
    pub expanded_total: usize,
}

pub fn expand_neighbor_queries(articles: &[Article]) -> QueryPool {
    let mut neighbors: HashMap<Vec<String>, BTreeSet<Vec<String>>> = HashMap::new();
    for article in articles {
        let golds: Vec<&Vec<String>> = article.queries.iter().map(|q| &q.query_tokens).collect();
        for (i, qa) in golds.iter().enumerate() {
            for qb in golds.iter().skip(i + 1) {
                if qa != qb {
                    neighbors
                        .entry((*qa).clone())
                        .or_default()
                        .insert((*qb).clone());
                    neighbors
                        .entry((*qb).clone())
                        .or_default()
                        .insert((*qa).clone());
                }
            }
        }
    }

    let mut pools = Vec::with_capacity(articles.len());
    let mut gold_total = 0;
    let mut expanded_total = 0;
    for article in articles {
        let mut queries = Vec::new();
        let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
        for q in &article.queries {
            if seen.insert(q.query_tokens.clone()) {
                queries.push(PoolQuery {
                    query_tokens: q.query_tokens.clone(),
                    gold_answer: Some(q.answer_tokens.clone()),
                });
                gold_total += 1;
            }
        }
        let mut candidates: BTreeSet<Vec<String>> = BTreeSet::new();
        for q in &article.queries {
            if let Some(ns) = neighbors.get(&q.query_tokens) {
                candidates.extend(ns.iter().cloned());
            }
        }
        for candidate in candidates {
            if seen.insert(candidate.clone()) {
                queries.push(PoolQuery {
                    query_tokens: candidate,
                    gold_answer: None,
                });
                expanded_total += 1;
            }
        }
        pools.push(ArticlePool {
            article_id: article.id.clone(),
            title: article.title.clone(),
            queries,
        });
    }
    QueryPool {
        articles: pools,
        gold_total,
        expanded_total,
    }
}
