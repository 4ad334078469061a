//! LDA by collapsed Gibbs sampling, relevance-ranked topic terms, C_v
//! coherence and coherence-driven selection of the topic count.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CSLD";
const VERSION: u32 = 1;

/// Topic counts tried by default: 5, 10, ..., 50.
pub const DEFAULT_KS: [usize; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];

/// Fixed-φ sweeps used to infer θ for unseen documents.
pub const HELD_OUT_SWEEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// α = 5/k, β = 0.01, 1000 sweeps.
    pub fn new(k: usize, seed: u64) -> Self {
        LdaConfig {
            k,
            alpha: 5.0 / k as f64,
            beta: 0.01,
            iterations: 1000,
            seed,
        }
    }

    /// Same settings for a different topic count, with α recomputed as 5/k.
    pub fn with_k(&self, k: usize) -> Self {
        LdaConfig {
            k,
            alpha: 5.0 / k as f64,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k < 2 {
            problems.push("k must be at least 2".to_string());
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.beta.is_nan() || self.beta <= 0.0 {
            problems.push("alpha and beta must be positive".into());
        }
        if self.iterations == 0 {
            problems.push("iterations must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopicModel {
    pub cfg: LdaConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    docs: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    /// Word-major: `n_wt[w * k + t]`.
    n_wt: Vec<u32>,
    n_dt: Vec<u32>,
    n_t: Vec<u32>,
}

struct Sampler {
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl TopicModel {
    fn build<S: AsRef<[String]>>(docs: &[S], cfg: &LdaConfig) -> Result<(Self, Sampler)> {
        cfg.validate()?;
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(d) = docs.iter().position(|d| d.as_ref().is_empty()) {
            return Err(Error::Config(format!("document {d} is empty")));
        }
        let vocab: Vec<String> = docs
            .iter()
            .flat_map(|d| d.as_ref().iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if cfg.k >= vocab.len() {
            log::warn!(
                "k = {} is not smaller than the vocabulary ({} terms)",
                cfg.k,
                vocab.len()
            );
        }
        let index: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let ids: Vec<Vec<u32>> = docs
            .iter()
            .map(|d| d.as_ref().iter().map(|w| index[w]).collect())
            .collect();

        let k = cfg.k;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = TopicModel {
            cfg: cfg.clone(),
            n_wt: vec![0; vocab.len() * k],
            n_dt: vec![0; ids.len() * k],
            n_t: vec![0; k],
            z: Vec::with_capacity(ids.len()),
            vocab,
            index,
            docs: ids,
        };
        for d in 0..model.docs.len() {
            let zs: Vec<u32> = (0..model.docs[d].len())
                .map(|_| rng.random_range(0..k as u32))
                .collect();
            model.z.push(zs);
        }
        model.recount();
        let sampler = Sampler {
            rng,
            weights: vec![0.0; k],
            inv_denom: vec![0.0; k],
        };
        Ok((model, sampler))
    }

    fn recount(&mut self) {
        let k = self.cfg.k;
        self.n_wt.fill(0);
        self.n_dt.fill(0);
        self.n_t.fill(0);
        for (d, (words, zs)) in self.docs.iter().zip(&self.z).enumerate() {
            for (&w, &t) in words.iter().zip(zs) {
                self.n_wt[w as usize * k + t as usize] += 1;
                self.n_dt[d * k + t as usize] += 1;
                self.n_t[t as usize] += 1;
            }
        }
    }

    fn sweep(&mut self, s: &mut Sampler) {
        let k = self.cfg.k;
        let (alpha, beta) = (self.cfg.alpha, self.cfg.beta);
        let vbeta = self.vocab.len() as f64 * beta;
        for t in 0..k {
            s.inv_denom[t] = 1.0 / (self.n_t[t] as f64 + vbeta);
        }
        for d in 0..self.docs.len() {
            let dt = &mut self.n_dt[d * k..(d + 1) * k];
            for (i, &w) in self.docs[d].iter().enumerate() {
                let old = self.z[d][i] as usize;
                let wt = &mut self.n_wt[w as usize * k..(w as usize + 1) * k];
                wt[old] -= 1;
                dt[old] -= 1;
                self.n_t[old] -= 1;
                s.inv_denom[old] = 1.0 / (self.n_t[old] as f64 + vbeta);

                let mut total = 0.0;
                for t in 0..k {
                    total += (dt[t] as f64 + alpha) * (wt[t] as f64 + beta) * s.inv_denom[t];
                    s.weights[t] = total;
                }
                let u = s.rng.random::<f64>() * total;
                let new = s.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                wt[new] += 1;
                dt[new] += 1;
                self.n_t[new] += 1;
                s.inv_denom[new] = 1.0 / (self.n_t[new] as f64 + vbeta);
                self.z[d][i] = new as u32;
            }
        }
    }

    /// Verifies that the count tables agree with each other and with the
    /// document lengths.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let k = self.cfg.k;
        let v = self.vocab.len();
        for t in 0..k {
            let col: u64 = (0..v).map(|w| self.n_wt[w * k + t] as u64).sum();
            if col != self.n_t[t] as u64 {
                return Err(format!(
                    "topic {t}: word counts sum to {col}, n_topic is {}",
                    self.n_t[t]
                ));
            }
        }
        for (d, words) in self.docs.iter().enumerate() {
            let row: u64 = self.n_dt[d * k..(d + 1) * k]
                .iter()
                .map(|&c| c as u64)
                .sum();
            if row != words.len() as u64 {
                return Err(format!(
                    "document {d}: topic counts sum to {row}, length is {}",
                    words.len()
                ));
            }
        }
        let total: u64 = self.n_t.iter().map(|&c| c as u64).sum();
        let tokens: u64 = self.docs.iter().map(|d| d.len() as u64).sum();
        if total != tokens {
            return Err(format!(
                "topic totals sum to {total}, corpus has {tokens} tokens"
            ));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn word_id(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    pub fn n_topic(&self) -> &[u32] {
        &self.n_t
    }

    pub fn n_topic_word(&self, t: usize, w: usize) -> u32 {
        self.n_wt[w * self.cfg.k + t]
    }

    pub fn n_doc_topic(&self, d: usize) -> &[u32] {
        &self.n_dt[d * self.cfg.k..(d + 1) * self.cfg.k]
    }

    pub fn assignments(&self, d: usize) -> &[u32] {
        &self.z[d]
    }

    /// Smoothed topic-word distribution of topic `t`.
    pub fn phi(&self, t: usize) -> Vec<f64> {
        let k = self.cfg.k;
        let v = self.vocab.len();
        let denom = self.n_t[t] as f64 + v as f64 * self.cfg.beta;
        (0..v)
            .map(|w| (self.n_wt[w * k + t] as f64 + self.cfg.beta) / denom)
            .collect()
    }

    /// Smoothed topic mixture of training document `d`.
    pub fn theta(&self, d: usize) -> Vec<f64> {
        let k = self.cfg.k;
        let denom = self.docs[d].len() as f64 + k as f64 * self.cfg.alpha;
        self.n_doc_topic(d)
            .iter()
            .map(|&c| (c as f64 + self.cfg.alpha) / denom)
            .collect()
    }

    /// θ for an unseen document by Gibbs sampling with φ held fixed.
    /// Out-of-vocabulary tokens are ignored; an entirely unknown document
    /// gets the uniform mixture and `all_oov = true`.
    pub fn infer(&self, tokens: &[String], sweeps: usize, seed: u64) -> DocTopics {
        let k = self.cfg.k;
        let words: Vec<usize> = tokens.iter().filter_map(|t| self.word_id(t)).collect();
        if words.is_empty() {
            return DocTopics {
                theta: vec![1.0 / k as f64; k],
                all_oov: true,
            };
        }
        let phis: Vec<Vec<f64>> = (0..k).map(|t| self.phi(t)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z: Vec<usize> = words.iter().map(|_| rng.random_range(0..k)).collect();
        let mut counts = vec![0u32; k];
        z.iter().for_each(|&t| counts[t] += 1);
        let mut cum = vec![0.0; k];
        for _ in 0..sweeps {
            for (i, &w) in words.iter().enumerate() {
                counts[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (counts[t] as f64 + self.cfg.alpha) * phis[t][w];
                    cum[t] = total;
                }
                let u = rng.random::<f64>() * total;
                z[i] = cum.iter().position(|&c| u < c).unwrap_or(k - 1);
                counts[z[i]] += 1;
            }
        }
        let denom = words.len() as f64 + k as f64 * self.cfg.alpha;
        DocTopics {
            theta: counts
                .iter()
                .map(|&c| (c as f64 + self.cfg.alpha) / denom)
                .collect(),
            all_oov: false,
        }
    }

    /// Corpus-wide relative frequency of each vocabulary word.
    pub fn word_probabilities(&self) -> Vec<f64> {
        let k = self.cfg.k;
        let total: f64 = self.n_t.iter().map(|&c| c as f64).sum();
        (0..self.vocab.len())
            .map(|w| {
                self.n_wt[w * k..(w + 1) * k]
                    .iter()
                    .map(|&c| c as f64)
                    .sum::<f64>()
                    / total
            })
            .collect()
    }

    /// Top `n` terms of topic `t` by relevance
    /// `λ·log φ + (1−λ)·log(φ / p(w))`, ties in lexicographic order.
    pub fn top_terms(&self, t: usize, n: usize, lambda: f64) -> Vec<(String, f64)> {
        let phi = self.phi(t);
        let scores: Vec<f64> = if lambda == 1.0 {
            phi.iter().map(|p| p.ln()).collect()
        } else {
            let pw = self.word_probabilities();
            phi.iter()
                .zip(&pw)
                .map(|(&p, &q)| lambda * p.ln() + (1.0 - lambda) * (p / q).ln())
                .collect()
        };
        let mut order: Vec<usize> = (0..phi.len()).collect();
        // Vocabulary ids are in lexicographic order, so the id is the tie-break.
        if lambda == 1.0 {
            order.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
        } else {
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        }
        order
            .into_iter()
            .take(n)
            .map(|w| (self.vocab[w].clone(), scores[w]))
            .collect()
    }

    /// Top-`n` terms of every topic at λ = 1.
    pub fn topic_terms(&self, n: usize) -> Vec<Vec<String>> {
        (0..self.cfg.k)
            .map(|t| {
                self.top_terms(t, n, 1.0)
                    .into_iter()
                    .map(|(w, _)| w)
                    .collect()
            })
            .collect()
    }

    /// Training documents as token sequences.
    pub fn documents(&self) -> Vec<Vec<String>> {
        self.docs
            .iter()
            .map(|d| d.iter().map(|&w| self.vocab[w as usize].clone()).collect())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, inner: W) -> std::io::Result<()> {
        let mut w = BinWriter::new(inner, MAGIC, VERSION)?;
        w.u64(self.cfg.k as u64)?;
        w.f64(self.cfg.alpha)?;
        w.f64(self.cfg.beta)?;
        w.u64(self.cfg.iterations as u64)?;
        w.u64(self.cfg.seed)?;
        w.u64(self.vocab.len() as u64)?;
        for t in &self.vocab {
            w.str(t)?;
        }
        w.u64(self.docs.len() as u64)?;
        for (d, z) in self.docs.iter().zip(&self.z) {
            w.u32s(d)?;
            w.u32s(z)?;
        }
        w.into_inner().flush()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn read_from<R: Read>(inner: R) -> Result<Self> {
        let bad = |d: &str| Error::format("topic model", d.to_string());
        let (mut r, version) = BinReader::open(inner, MAGIC, "topic model")?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let cfg = LdaConfig {
            k: r.u64()? as usize,
            alpha: r.f64()?,
            beta: r.f64()?,
            iterations: r.u64()? as usize,
            seed: r.u64()?,
        };
        cfg.validate()?;
        let nv = r.u64()? as usize;
        let vocab: Vec<String> = (0..nv).map(|_| r.str()).collect::<Result<_>>()?;
        let nd = r.u64()? as usize;
        let mut docs = Vec::with_capacity(nd.min(1 << 20));
        let mut z = Vec::with_capacity(nd.min(1 << 20));
        for _ in 0..nd {
            let d = r.u32s()?;
            let zs = r.u32s()?;
            if d.len() != zs.len()
                || d.iter().any(|&w| w as usize >= nv)
                || zs.iter().any(|&t| t as usize >= cfg.k)
            {
                return Err(bad("document data out of range"));
            }
            docs.push(d);
            z.push(zs);
        }
        let k = cfg.k;
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let mut model = TopicModel {
            n_wt: vec![0; nv * k],
            n_dt: vec![0; nd * k],
            n_t: vec![0; k],
            cfg,
            vocab,
            index,
            docs,
            z,
        };
        model.recount();
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocTopics {
    pub theta: Vec<f64>,
    pub all_oov: bool,
}

pub fn train_lda<S: AsRef<[String]>>(docs: &[S], cfg: &LdaConfig) -> Result<TopicModel> {
    train_lda_observed(docs, cfg, |_, _| {})
}

/// Like [`train_lda`], calling `observe(sweep, model)` after every sweep.
/// Debug builds also check count-table consistency after each sweep.
pub fn train_lda_observed<S, F>(docs: &[S], cfg: &LdaConfig, mut observe: F) -> Result<TopicModel>
where
    S: AsRef<[String]>,
    F: FnMut(usize, &TopicModel),
{
    let (mut model, mut sampler) = TopicModel::build(docs, cfg)?;
    for it in 0..cfg.iterations {
        model.sweep(&mut sampler);
        debug_assert_eq!(model.check_consistency(), Ok(()));
        observe(it, &model);
    }
    Ok(model)
}

/// Index of the largest entry, lowest index on ties.
pub fn dominant_topic(theta: &[f64]) -> usize {
    top_topics(theta, 1)[0]
}

/// The `n` most probable topics, ties by lowest index.
pub fn top_topics(theta: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

pub fn top3_topics(theta: &[f64]) -> Vec<usize> {
    top_topics(theta, 3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceConfig {
    pub top_n: usize,
    pub window: usize,
    pub epsilon: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig {
            top_n: 10,
            window: 110,
            epsilon: 1e-12,
        }
    }
}

impl CoherenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_n < 2 || self.window == 0 || self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::Config(
                "coherence needs top_n >= 2, window >= 1, epsilon >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub per_topic: Vec<f64>,
    pub mean: f64,
    /// `(topic, term)` pairs whose term occurs in no window.
    pub absent: Vec<(usize, String)>,
}

/// Boolean sliding-window document frequencies of a fixed term set.
struct WindowCounts {
    windows: f64,
    single: Vec<f64>,
    pair: Vec<f64>,
    n: usize,
}

impl WindowCounts {
    /// Every document yields `max(1, len - window + 1)` windows; a document
    /// shorter than the window is a single window.
    fn collect<S: AsRef<[String]>>(terms: &[&str], docs: &[S], window: usize) -> Self {
        let n = terms.len();
        let id: HashMap<&str, usize> = terms.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let mut single = vec![0u64; n];
        let mut pair = vec![0u64; n * n];
        let mut windows = 0u64;
        let mut present = vec![0u32; n];
        let mut active: Vec<usize> = Vec::new();
        for doc in docs {
            let ids: Vec<Option<usize>> = doc
                .as_ref()
                .iter()
                .map(|t| id.get(t.as_str()).copied())
                .collect();
            let width = window.min(ids.len());
            let starts = if ids.len() <= window {
                1
            } else {
                ids.len() - window + 1
            };
            present.fill(0);
            for x in ids[..width].iter().flatten() {
                present[*x] += 1;
            }
            for s in 0..starts {
                if s > 0 {
                    if let Some(x) = ids[s - 1] {
                        present[x] -= 1;
                    }
                    if let Some(x) = ids[s + width - 1] {
                        present[x] += 1;
                    }
                }
                windows += 1;
                active.clear();
                active.extend((0..n).filter(|&i| present[i] > 0));
                for (a, &i) in active.iter().enumerate() {
                    single[i] += 1;
                    for &j in &active[a + 1..] {
                        pair[i * n + j] += 1;
                        pair[j * n + i] += 1;
                    }
                }
            }
        }
        WindowCounts {
            windows: windows as f64,
            single: single.into_iter().map(|c| c as f64).collect(),
            pair: pair.into_iter().map(|c| c as f64).collect(),
            n,
        }
    }

    fn joint(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.single[i]
        } else {
            self.pair[i * self.n + j]
        }
    }

    fn npmi(&self, i: usize, j: usize, eps: f64) -> f64 {
        let p12 = self.joint(i, j) / self.windows;
        let p1 = self.single[i] / self.windows;
        let p2 = self.single[j] / self.windows;
        ((p12 + eps) / (p1 * p2)).ln() / -(p12 + eps).ln()
    }
}

/// Normalised PMI table over `terms` from boolean sliding windows.
pub fn npmi_table<S: AsRef<[String]>>(
    terms: &[&str],
    docs: &[S],
    window: usize,
    eps: f64,
) -> Vec<Vec<f64>> {
    let wc = WindowCounts::collect(terms, docs, window);
    (0..terms.len())
        .map(|i| (0..terms.len()).map(|j| wc.npmi(i, j, eps)).collect())
        .collect()
}

/// C_v coherence of each topic's term list over `docs`.
///
/// Each term's context vector holds its NPMI with every term of the topic;
/// the topic score is the mean cosine between each term's vector and the sum
/// of all term vectors. Terms absent from every window are skipped.
pub fn coherence_cv<S, T>(topics: &[T], docs: &[S], cc: &CoherenceConfig) -> Result<Coherence>
where
    S: AsRef<[String]> + Sync,
    T: AsRef<[String]>,
{
    cc.validate()?;
    let all: BTreeSet<&str> = topics
        .iter()
        .flat_map(|t| t.as_ref().iter().map(String::as_str))
        .collect();
    let terms: Vec<&str> = all.into_iter().collect();
    let slot: HashMap<&str, usize> = terms.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let wc = WindowCounts::collect(&terms, docs, cc.window);

    let mut per_topic = Vec::with_capacity(topics.len());
    let mut absent = Vec::new();
    for (ti, topic) in topics.iter().enumerate() {
        let ids: Vec<usize> = topic.as_ref().iter().map(|t| slot[t.as_str()]).collect();
        let present: Vec<bool> = ids.iter().map(|&i| wc.single[i] > 0.0).collect();
        for (w, ok) in topic.as_ref().iter().zip(&present) {
            if !ok {
                log::warn!("topic {ti}: term {w:?} occurs in no window");
                absent.push((ti, w.clone()));
            }
        }
        if !present.iter().any(|&p| p) {
            return Err(Error::CoherenceUndefined { topic: ti });
        }
        let vectors: Vec<Vec<f64>> = ids
            .iter()
            .zip(&present)
            .map(|(&i, &ok)| {
                ids.iter()
                    .zip(&present)
                    .map(|(&j, &ok_j)| {
                        if ok && ok_j {
                            wc.npmi(i, j, cc.epsilon)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let sum: Vec<f64> = (0..ids.len())
            .map(|c| vectors.iter().map(|v| v[c]).sum())
            .collect();
        let sum_norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut sims = Vec::new();
        for (v, &ok) in vectors.iter().zip(&present) {
            if !ok {
                continue;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dotp: f64 = v.iter().zip(&sum).map(|(a, b)| a * b).sum();
            sims.push(if norm == 0.0 || sum_norm == 0.0 {
                0.0
            } else {
                dotp / (norm * sum_norm)
            });
        }
        per_topic.push(sims.iter().sum::<f64>() / sims.len() as f64);
    }
    let mean = per_topic.iter().sum::<f64>() / per_topic.len().max(1) as f64;
    Ok(Coherence {
        per_topic,
        mean,
        absent,
    })
}

pub fn model_coherence<S: AsRef<[String]> + Sync>(
    model: &TopicModel,
    docs: &[S],
    cc: &CoherenceConfig,
) -> Result<Coherence> {
    coherence_cv(&model.topic_terms(cc.top_n), docs, cc)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best_k: usize,
    pub best: TopicModel,
    /// `(k, mean C_v)` in the order the topic counts were given.
    pub table: Vec<(usize, f64)>,
}

/// Trains one model per `k` (α = 5/k each) and keeps the most coherent;
/// ties go to the smaller `k`. Models train in parallel; each chain is
/// seeded from the template, so results do not depend on thread count.
pub fn sweep_k<S>(
    docs: &[S],
    ks: &[usize],
    template: &LdaConfig,
    cc: &CoherenceConfig,
) -> Result<SweepResult>
where
    S: AsRef<[String]> + Sync,
{
    if ks.is_empty() {
        return Err(Error::Config(
            "topic-count sweep needs at least one k".into(),
        ));
    }
    let results: Vec<(usize, TopicModel, f64)> = ks
        .par_iter()
        .map(|&k| {
            let model = train_lda(docs, &template.with_k(k))?;
            let cv = model_coherence(&model, docs, cc)?.mean;
            log::info!("k = {k}: C_v = {cv:.4}");
            Ok((k, model, cv))
        })
        .collect::<Result<_>>()?;
    let table = results.iter().map(|(k, _, cv)| (*k, *cv)).collect();
    let (best_k, best, _) = results
        .into_iter()
        .reduce(|a, b| match b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)) {
            std::cmp::Ordering::Greater => b,
            _ => a,
        })
        .expect("ks is non-empty");
    Ok(SweepResult {
        best_k,
        best,
        table,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroomingTopic {
    pub topic: usize,
    pub score: f64,
    /// Score difference to the runner-up topic.
    pub margin: f64,
}

/// Topic with the largest total φ mass on the placeholder terms.
pub fn identify_grooming_topic<P: AsRef<str>>(
    model: &TopicModel,
    placeholders: &[P],
) -> Result<GroomingTopic> {
    let ids: Vec<usize> = placeholders
        .iter()
        .filter_map(|p| model.word_id(p.as_ref()))
        .collect();
    if ids.is_empty() {
        return Err(Error::NoPlaceholders);
    }
    let scores: Vec<f64> = (0..model.k())
        .map(|t| {
            let phi = model.phi(t);
            ids.iter().map(|&w| phi[w]).sum()
        })
        .collect();
    let order = top_topics(&scores, 2);
    let topic = order[0];
    let runner_up = order.get(1).map_or(0.0, |&t| scores[t]);
    Ok(GroomingTopic {
        topic,
        score: scores[topic],
        margin: scores[topic] - runner_up,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic: usize,
    pub terms: Vec<(String, f64)>,
    pub doc_count: usize,
}

/// Relevance-ranked terms of every topic with the number of training
/// documents in which it is dominant.
pub fn topic_report(model: &TopicModel, n: usize, lambda: f64) -> Vec<TopicSummary> {
    let mut counts = vec![0usize; model.k()];
    for d in 0..model.num_docs() {
        counts[dominant_topic(&model.theta(d))] += 1;
    }
    (0..model.k())
        .map(|t| TopicSummary {
            topic: t,
            terms: model.top_terms(t, n, lambda),
            doc_count: counts[t],
        })
        .collect()
}
