//! Deterministic synthetic corpora with known structure.

use crate::rng::{seeded, unit_f64, SkdRng};

fn sample_index(rng: &mut SkdRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = unit_f64(rng) * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// First-order word chain whose next-word distribution depends only on the
/// class of the current word. The class sequence is itself a Markov chain,
/// so the entropy rate has a closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMarkovSource {
    /// Class of each word.
    pub word_class: Vec<usize>,
    /// Next-word distribution per class, one row per class.
    pub rows: Vec<Vec<f64>>,
}

impl ClassMarkovSource {
    /// Three classes over ten words.
    pub fn standard() -> Self {
        ClassMarkovSource {
            word_class: vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2],
            rows: vec![
                vec![0.02, 0.02, 0.02, 0.40, 0.25, 0.15, 0.05, 0.05, 0.02, 0.02],
                vec![0.05, 0.05, 0.05, 0.02, 0.02, 0.01, 0.50, 0.20, 0.05, 0.05],
                vec![0.45, 0.25, 0.15, 0.03, 0.03, 0.03, 0.02, 0.02, 0.01, 0.01],
            ],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.word_class.len()
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    /// Class-to-class transition matrix.
    pub fn class_transitions(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; self.classes()];
                for (w, &p) in row.iter().enumerate() {
                    out[self.word_class[w]] += p;
                }
                out
            })
            .collect()
    }

    /// Stationary distribution of the class chain, by power iteration.
    pub fn class_stationary(&self) -> Vec<f64> {
        let t = self.class_transitions();
        let k = self.classes();
        let mut mu = vec![1.0 / k as f64; k];
        for _ in 0..10_000 {
            let mut next = vec![0.0; k];
            for (i, &m) in mu.iter().enumerate() {
                for (j, &p) in t[i].iter().enumerate() {
                    next[j] += m * p;
                }
            }
            let delta: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
            mu = next;
            if delta < 1e-16 {
                break;
            }
        }
        mu
    }

    /// `Σ_c μ_c H(row_c)` in nats.
    pub fn entropy_rate(&self) -> f64 {
        self.class_stationary()
            .iter()
            .zip(&self.rows)
            .map(|(mu, row)| mu * row.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum::<f64>())
            .sum()
    }

    /// Word indices; the first word is drawn uniformly.
    pub fn sample(&self, len: usize, seed: u64) -> Vec<usize> {
        let mut rng = seeded(seed);
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut word = (unit_f64(&mut rng) * self.vocab_size() as f64) as usize;
        out.push(word);
        while out.len() < len {
            word = sample_index(&mut rng, &self.rows[self.word_class[word]]);
            out.push(word);
        }
        out
    }

    pub fn word(i: usize) -> String {
        format!("w{i}")
    }
}

/// Sentences over clusters of interchangeable words. A sparse Markov chain
/// picks the next cluster; the word inside it follows a Zipf law. Words in
/// one cluster are distributionally identical, which is the kind of
/// similarity the output embeddings can pick up.
#[derive(Debug, Clone)]
pub struct ClusteredLanguage {
    pub clusters: usize,
    pub words_per_cluster: usize,
    /// Candidate successor clusters and their weights, per cluster.
    successors: Vec<Vec<(usize, f64)>>,
    /// Probability of ending the sentence after each cluster.
    stop: Vec<f64>,
    word_weights: Vec<f64>,
}

impl ClusteredLanguage {
    pub fn new(clusters: usize, words_per_cluster: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let successors = (0..clusters)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let next = (unit_f64(&mut rng) * clusters as f64) as usize;
                        (next, 0.2 + unit_f64(&mut rng))
                    })
                    .collect()
            })
            .collect();
        let stop = (0..clusters).map(|_| 0.02 + 0.12 * unit_f64(&mut rng)).collect();
        let word_weights = (1..=words_per_cluster).map(|r| 1.0 / r as f64).collect();
        ClusteredLanguage {
            clusters,
            words_per_cluster,
            successors,
            stop,
            word_weights,
        }
    }

    pub fn word(cluster: usize, member: usize) -> String {
        format!("c{cluster}w{member}")
    }

    /// Whitespace-tokenized lines totalling at least `tokens` words plus one
    /// end-of-sentence per line.
    pub fn generate(&self, tokens: usize, seed: u64) -> String {
        let mut rng = seeded(seed);
        let mut text = String::new();
        let mut count = 0;
        while count < tokens {
            let mut cluster = (unit_f64(&mut rng) * self.clusters as f64) as usize;
            let mut line = Vec::new();
            loop {
                let member = sample_index(&mut rng, &self.word_weights);
                line.push(Self::word(cluster, member));
                if line.len() >= 40 || unit_f64(&mut rng) < self.stop[cluster] {
                    break;
                }
                let weights: Vec<f64> = self.successors[cluster].iter().map(|s| s.1).collect();
                cluster = self.successors[cluster][sample_index(&mut rng, &weights)].0;
            }
            count += line.len() + 1;
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        text
    }
}
