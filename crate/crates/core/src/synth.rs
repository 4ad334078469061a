//! Synthetic live-stream corpora with planted structure: topic families
//! (one of them grooming-like), misspelled variants of seed terms, gibberish
//! spam, emoji-only messages and interaction features that shift with the
//! planted topic.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Broadcast, ChatMessage, Gift};
use crate::error::{Error, Result};

/// A planted topic: weighted words plus a few emojis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub name: String,
    pub words: Vec<String>,
    pub emojis: Vec<String>,
}

fn family(name: &str, words: &str, emojis: &str) -> Family {
    Family {
        name: name.into(),
        words: words.split_whitespace().map(str::to_string).collect(),
        emojis: emojis.split_whitespace().map(str::to_string).collect(),
    }
}

/// Sexual terms of the grooming family; each gets misspelled variants.
pub const SEXUAL_SEEDS: [&str; 10] = [
    "boobs", "pussy", "naked", "sexy", "nude", "tits", "booty", "nipples", "horny", "dick",
];

/// Clothing terms of the grooming family; each gets misspelled variants.
pub const CLOTHING_SEEDS: [&str; 10] = [
    "shirt", "bra", "dress", "pants", "panties", "skirt", "bikini", "shorts", "socks", "hoodie",
];

/// Two words that habitually accompany each seed term in request phrases.
const COMPANIONS: [(&str, [&str; 2]); 20] = [
    ("boobs", ["big", "bouncy"]),
    ("pussy", ["wet", "tight"]),
    ("naked", ["fully", "totally"]),
    ("sexy", ["hot", "cute"]),
    ("nude", ["pics", "selfie"]),
    ("tits", ["perky", "round"]),
    ("booty", ["shake", "twerk"]),
    ("nipples", ["pierced", "hard"]),
    ("horny", ["feeling", "getting"]),
    ("dick", ["huge", "long"]),
    ("shirt", ["white", "buttons"]),
    ("bra", ["lace", "straps"]),
    ("dress", ["pretty", "red"]),
    ("pants", ["jeans", "belt"]),
    ("panties", ["pink", "lacy"]),
    ("skirt", ["short", "mini"]),
    ("bikini", ["pool", "swim"]),
    ("shorts", ["gym", "denim"]),
    ("socks", ["knee", "fluffy"]),
    ("hoodie", ["zip", "cozy"]),
];

const SEXUAL_VERBS: [&str; 5] = ["show", "show me", "flash", "touch", "see"];
const CLOTHING_VERBS: [&str; 7] = [
    "take off",
    "put on",
    "wear",
    "lift up",
    "pull down",
    "open",
    "remove",
];

/// Built-in families; the first is the grooming family.
pub fn default_families() -> Vec<Family> {
    let grooming_words = format!(
        "show open {} {} take wear strip touch flash lift remove cam body camera",
        SEXUAL_SEEDS.join(" "),
        CLOTHING_SEEDS.join(" ")
    );
    vec![
        family("grooming", &grooming_words, "👗 👙 👇 👅 🍑"),
        family(
            "music",
            "song music sing guitar band concert playlist lyrics beat rap singer album piano drums melody \
             dance tune remix radio vocals chorus rhythm track voice dj",
            "🎵 🎶 🎤 🎸",
        ),
        family(
            "gaming",
            "game level boss fortnite minecraft controller console score team win pvp quest skin loot \
             squad rank noob server lag glitch mod clan xbox gamer respawn",
            "🎮 🕹 🏆 💥",
        ),
        family(
            "food",
            "pizza burger cook dinner lunch breakfast recipe chicken pasta taco sushi coffee tea cake \
             chocolate snack hungry delicious kitchen spicy salad soup bread cheese fries",
            "🍕 🍔 🍰 ☕",
        ),
        family(
            "travel",
            "beach trip flight hotel city travel vacation ocean mountain road car train airport island \
             sunset camping hiking map tour passport summer weather rain snow lake",
            "✈ 🌴 🌊 🏖",
        ),
    ]
}

/// Filler tokens drawn from the stopword list.
const FILLERS: [&str; 16] = [
    "your", "me", "the", "you", "it", "and", "so", "to", "my", "is", "a", "that", "this", "can",
    "do", "now",
];

const COUNTRIES: [(&str, f64); 8] = [
    ("US", 0.45),
    ("GB", 0.15),
    ("CA", 0.1),
    ("AU", 0.1),
    ("NZ", 0.05),
    ("DE", 0.05),
    ("BR", 0.05),
    ("MX", 0.05),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub broadcasts: usize,
    /// Number of built-in families used (grooming first).
    pub topics: usize,
    pub grooming_proportion: f64,
    /// Probability that a message is drawn from the broadcast's own topic.
    pub topic_purity: f64,
    pub messages_min: usize,
    pub messages_max: usize,
    pub tokens_min: usize,
    pub tokens_max: usize,
    /// Chance that a grooming message is a request phrase around one seed
    /// term ("take off your white shirt") rather than a bag of words.
    pub phrase_rate: f64,
    /// Chance that an occurrence of a seed term is replaced by a variant.
    pub misspelling_rate: f64,
    pub variants_per_seed: usize,
    pub max_edit_distance: usize,
    pub gibberish_rate: f64,
    pub emoji_only_rate: f64,
    pub filler_rate: f64,
    pub emoji_token_rate: f64,
    /// Added to the follower/viewer ratio of grooming broadcasts.
    pub follower_shift: f64,
    /// Added to the liker/viewer ratio of grooming broadcasts.
    pub liker_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            broadcasts: 2000,
            topics: 4,
            grooming_proportion: 0.19,
            topic_purity: 0.8,
            messages_min: 12,
            messages_max: 40,
            tokens_min: 3,
            tokens_max: 12,
            phrase_rate: 0.6,
            misspelling_rate: 0.3,
            variants_per_seed: 2,
            max_edit_distance: 2,
            gibberish_rate: 0.03,
            emoji_only_rate: 0.05,
            filler_rate: 0.2,
            emoji_token_rate: 0.05,
            follower_shift: 0.08,
            liker_shift: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let rates = [
            ("grooming_proportion", self.grooming_proportion),
            ("topic_purity", self.topic_purity),
            ("phrase_rate", self.phrase_rate),
            ("misspelling_rate", self.misspelling_rate),
            ("gibberish_rate", self.gibberish_rate),
            ("emoji_only_rate", self.emoji_only_rate),
            ("filler_rate", self.filler_rate),
            ("emoji_token_rate", self.emoji_token_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                problems.push(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.gibberish_rate + self.emoji_only_rate > 1.0 {
            problems.push("gibberish_rate + emoji_only_rate must not exceed 1".into());
        }
        if self.topics < 2 || self.topics > default_families().len() {
            problems.push(format!(
                "topics must lie in 2..={}",
                default_families().len()
            ));
        }
        if self.broadcasts == 0 {
            problems.push("broadcasts must be positive".into());
        }
        if self.messages_min == 0 || self.messages_min > self.messages_max {
            problems.push("message range is empty".into());
        }
        if self.tokens_min == 0 || self.tokens_min > self.tokens_max {
            problems.push("token range is empty".into());
        }
        if self.max_edit_distance == 0 {
            problems.push("max_edit_distance must be at least 1".into());
        }
        if self.follower_shift < 0.0 || self.liker_shift < 0.0 {
            problems.push("effect sizes must be non-negative".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBroadcast {
    pub id: String,
    pub topic: usize,
    pub grooming: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub families: Vec<Family>,
    pub grooming_topic: usize,
    pub broadcasts: Vec<PlantedBroadcast>,
    /// Seed term to its planted variants.
    pub misspellings: BTreeMap<String, Vec<String>>,
    /// 1-based line numbers in the message file.
    pub gibberish_lines: Vec<usize>,
    pub emoji_only_lines: Vec<usize>,
}

impl GroundTruth {
    pub fn grooming_count(&self) -> usize {
        self.broadcasts.iter().filter(|b| b.grooming).count()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub broadcasts: Vec<Broadcast>,
    pub messages: Vec<ChatMessage>,
    pub truth: GroundTruth,
}

/// Levenshtein distance over characters.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != cb))
                .min(prev[j + 1] + 1)
                .min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Candidate misspellings in the style chat users use to dodge filters.
fn variant_candidates(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut push = |v: Vec<char>| out.push(v.into_iter().collect::<String>());
    for (i, &c) in chars.iter().enumerate() {
        // stretched letter
        let mut v = chars.clone();
        v.insert(i, c);
        push(v);
        let swap = match c {
            's' => Some('z'),
            'u' => Some('ü'),
            'o' => Some('0'),
            'i' => Some('1'),
            'e' => Some('3'),
            'a' => Some('4'),
            _ => None,
        };
        if let Some(s) = swap {
            let mut v = chars.clone();
            v[i] = s;
            push(v);
        }
        if chars.len() > 3 && i > 0 && "aeiou".contains(c) {
            let mut v = chars.clone();
            v.remove(i);
            push(v);
        }
    }
    out.sort();
    out.dedup();
    out.retain(|v| v != word);
    out
}

fn plant_variants(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    taken: &mut Vec<String>,
) -> BTreeMap<String, Vec<String>> {
    let mut map = BTreeMap::new();
    for seed in SEXUAL_SEEDS.iter().chain(&CLOTHING_SEEDS) {
        let mut cands: Vec<String> = variant_candidates(seed)
            .into_iter()
            .filter(|v| edit_distance(v, seed) <= cfg.max_edit_distance && !taken.contains(v))
            .collect();
        cands.shuffle(rng);
        cands.truncate(cfg.variants_per_seed);
        cands.sort();
        taken.extend(cands.iter().cloned());
        map.insert(seed.to_string(), cands);
    }
    map
}

/// Zipf-like weights so a few words dominate each family.
fn zipf_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 / (i as f64 + 1.0).powf(0.8)).collect()
}

fn weighted_pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T], weights: &[f64]) -> &'a T {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (item, w) in items.iter().zip(weights) {
        if u < *w {
            return item;
        }
        u -= w;
    }
    items.last().expect("non-empty")
}

fn gibberish_text(rng: &mut ChaCha8Rng) -> String {
    const CONSONANT_HEAVY: &[u8] = b"bcdfghjklmnpqrstvwxzqxzjkv";
    let words = rng.random_range(1..=4);
    (0..words)
        .map(|_| {
            let len = rng.random_range(4..=9);
            (0..len)
                .map(|_| {
                    if rng.random_bool(0.15) {
                        *b"aeiouy".choose(rng).unwrap() as char
                    } else {
                        *CONSONANT_HEAVY.choose(rng).unwrap() as char
                    }
                })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

struct MessageSampler<'a> {
    cfg: &'a SynthConfig,
    families: &'a [Family],
    weights: Vec<Vec<f64>>,
    misspellings: &'a BTreeMap<String, Vec<String>>,
}

impl MessageSampler<'_> {
    fn spell(&self, rng: &mut ChaCha8Rng, w: &str) -> String {
        match self.misspellings.get(w) {
            Some(vs) if !vs.is_empty() && rng.random_bool(self.cfg.misspelling_rate) => {
                vs.choose(rng).unwrap().clone()
            }
            _ => w.to_string(),
        }
    }

    /// Verb phrase, optional determiner and companion, then the seed.
    fn phrase(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        let (seed, companions) = COMPANIONS.choose(rng).unwrap();
        let verbs: &[&str] = if SEXUAL_SEEDS.contains(seed) {
            &SEXUAL_VERBS
        } else {
            &CLOTHING_VERBS
        };
        let mut toks: Vec<String> = verbs
            .choose(rng)
            .unwrap()
            .split(' ')
            .map(str::to_string)
            .collect();
        if rng.random_bool(0.6) {
            toks.push(["your", "the", "ur"].choose(rng).unwrap().to_string());
        }
        if rng.random_bool(0.7) {
            toks.push(companions.choose(rng).unwrap().to_string());
        }
        toks.push(self.spell(rng, seed));
        toks
    }

    fn text(&self, rng: &mut ChaCha8Rng, topic: usize) -> String {
        let fam = &self.families[topic];
        let len = rng.random_range(self.cfg.tokens_min..=self.cfg.tokens_max);
        let mut toks: Vec<String> = Vec::with_capacity(len);
        if topic == 0 && rng.random_bool(self.cfg.phrase_rate) {
            toks = self.phrase(rng);
        }
        while toks.len() < len {
            if rng.random_bool(self.cfg.filler_rate) {
                toks.push(FILLERS.choose(rng).unwrap().to_string());
            } else if !fam.emojis.is_empty() && rng.random_bool(self.cfg.emoji_token_rate) {
                toks.push(fam.emojis.choose(rng).unwrap().clone());
            } else {
                let w = weighted_pick(rng, &fam.words, &self.weights[topic]);
                toks.push(self.spell(rng, w));
            }
        }
        toks.join(" ")
    }

    fn emoji_only(&self, rng: &mut ChaCha8Rng, topic: usize) -> String {
        let fam = &self.families[topic];
        let n = rng.random_range(1..=4);
        (0..n)
            .map(|_| fam.emojis.choose(rng).unwrap().as_str())
            .collect()
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Builds a corpus; identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let families: Vec<Family> = default_families().into_iter().take(cfg.topics).collect();
    let mut taken: Vec<String> = families
        .iter()
        .flat_map(|f| f.words.iter().cloned())
        .collect();
    taken.extend(
        COMPANIONS
            .iter()
            .flat_map(|(_, c)| c.iter().map(|w| w.to_string())),
    );
    let misspellings = plant_variants(&mut rng, cfg, &mut taken);
    let sampler = MessageSampler {
        cfg,
        families: &families,
        weights: families
            .iter()
            .map(|f| zipf_weights(f.words.len()))
            .collect(),
        misspellings: &misspellings,
    };

    let n = cfg.broadcasts;
    let n_grooming = (cfg.grooming_proportion * n as f64).round() as usize;
    let mut grooming = vec![false; n];
    grooming.iter_mut().take(n_grooming).for_each(|g| *g = true);
    grooming.shuffle(&mut rng);

    let country_codes: Vec<&str> = COUNTRIES.iter().map(|c| c.0).collect();
    let country_weights: Vec<f64> = COUNTRIES.iter().map(|c| c.1).collect();
    let viewers_dist = LogNormal::new(4.5, 1.0).expect("valid parameters");
    let follow_noise = Normal::new(0.0, 0.012).expect("valid parameters");
    let liker_noise = Normal::new(0.0, 0.05).expect("valid parameters");
    let like_burst = Gamma::new(2.0, 1.5).expect("valid parameters");
    let user_pool = (n * 4).max(10);

    let mut broadcasts = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(n);
    let mut messages = Vec::new();
    let mut gibberish_lines = Vec::new();
    let mut emoji_only_lines = Vec::new();
    let mut clock: i64 = 1_600_000_000;

    for (i, &is_grooming) in grooming.iter().enumerate() {
        let id = format!("b{:05}", i + 1);
        let topic = if is_grooming {
            0
        } else {
            rng.random_range(1..families.len())
        };
        let shift = if is_grooming { 1.0 } else { 0.0 };

        let viewers = f64::max(viewers_dist.sample(&mut rng), 1.0).round() as u64;
        let follow_ratio =
            clamp01(0.03 + cfg.follower_shift * shift + follow_noise.sample(&mut rng));
        let liker_ratio = clamp01(0.15 + cfg.liker_shift * shift + liker_noise.sample(&mut rng));
        let new_followers = (viewers as f64 * follow_ratio).round() as u64;
        let likers = ((viewers as f64 * liker_ratio).round() as u64).min(viewers);
        let likes = likers + (likers as f64 * like_burst.sample(&mut rng)).round() as u64;

        let chatters: Vec<String> = (0..rng.random_range(3..=12))
            .map(|_| format!("u{:06}", rng.random_range(0..user_pool)))
            .collect();
        let gifts = (0..rng.random_range(0..=4))
            .map(|_| Gift {
                viewer_id: chatters.choose(&mut rng).unwrap().clone(),
                value: rng.random_range(1..=100),
            })
            .collect();

        broadcasts.push(Broadcast {
            id: id.clone(),
            owner_id: format!("o{:05}", rng.random_range(0..(n * 3 / 4).max(1)) + 1),
            country: weighted_pick(&mut rng, &country_codes, &country_weights).to_string(),
            duration_s: rng.random_range(60..=7200),
            total_viewers: viewers,
            likes,
            likers,
            new_followers,
            gifts,
            shares: rng.random_range(0..=10),
            blocks: rng.random_range(0..=3),
        });
        planted.push(PlantedBroadcast {
            id: id.clone(),
            topic,
            grooming: is_grooming,
        });

        let n_msgs = rng.random_range(cfg.messages_min..=cfg.messages_max);
        for _ in 0..n_msgs {
            clock += rng.random_range(1..=30);
            let msg_topic = if rng.random_bool(cfg.topic_purity) {
                topic
            } else {
                rng.random_range(0..families.len())
            };
            let r = rng.random::<f64>();
            let line = messages.len() + 1;
            let text = if r < cfg.gibberish_rate {
                gibberish_lines.push(line);
                gibberish_text(&mut rng)
            } else if r < cfg.gibberish_rate + cfg.emoji_only_rate {
                emoji_only_lines.push(line);
                sampler.emoji_only(&mut rng, msg_topic)
            } else {
                sampler.text(&mut rng, msg_topic)
            };
            messages.push(ChatMessage {
                broadcast_id: id.clone(),
                user_id: chatters.choose(&mut rng).unwrap().clone(),
                timestamp: clock,
                text,
            });
        }
    }

    Ok(SynthCorpus {
        broadcasts,
        messages,
        truth: GroundTruth {
            config: cfg.clone(),
            families,
            grooming_topic: 0,
            broadcasts: planted,
            misspellings,
            gibberish_lines,
            emoji_only_lines,
        },
    })
}

impl SynthCorpus {
    /// Writes `broadcasts.jsonl`, `messages.jsonl` and `ground_truth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let jsonl =
            |items: &mut dyn Iterator<Item = serde_json::Result<String>>| -> Result<String> {
                let mut out = String::new();
                for line in items {
                    out.push_str(
                        &line.map_err(|e| Error::format("synthetic corpus", e.to_string()))?,
                    );
                    out.push('\n');
                }
                Ok(out)
            };
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write(
            "broadcasts.jsonl",
            jsonl(&mut self.broadcasts.iter().map(serde_json::to_string))?,
        )?;
        write(
            "messages.jsonl",
            jsonl(&mut self.messages.iter().map(serde_json::to_string))?,
        )?;
        let truth = serde_json::to_string_pretty(&self.truth)
            .map_err(|e| Error::format("ground truth", e.to_string()))?;
        write("ground_truth.json", truth + "\n")
    }
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("ground truth", e.to_string()))
}

/// Documents drawn from the LDA generative process with planted φ.
#[derive(Debug, Clone)]
pub struct PlantedLda {
    pub docs: Vec<Vec<String>>,
    /// Rows over the vocabulary `w0..w{V-1}`.
    pub phi: Vec<Vec<f64>>,
    pub vocab: Vec<String>,
}

/// `k` topics over `vocab_size` words. Each topic owns a disjoint block of
/// the vocabulary (`vocab_size / k` words) and puts `purity` of its mass
/// there, the rest spread uniformly. Documents draw θ from a symmetric
/// Dirichlet(`alpha`).
pub fn planted_lda(
    k: usize,
    vocab_size: usize,
    docs: usize,
    doc_len: usize,
    alpha: f64,
    purity: f64,
    seed: u64,
) -> PlantedLda {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = vocab_size / k;
    let vocab: Vec<String> = (0..vocab_size).map(|w| format!("w{w}")).collect();
    let phi: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let own: Vec<f64> = (0..block).map(|_| rng.random_range(0.5..1.5)).collect();
            let own_total: f64 = own.iter().sum();
            (0..vocab_size)
                .map(|w| {
                    let base = (1.0 - purity) / vocab_size as f64;
                    if w / block == t && w < block * k {
                        base + purity * own[w % block] / own_total
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect();
    let gamma = Gamma::new(alpha, 1.0).expect("alpha is positive");
    let out = (0..docs)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng).max(1e-300)).collect();
            (0..doc_len)
                .map(|_| {
                    let t = *weighted_pick(&mut rng, &(0..k).collect::<Vec<_>>(), &raw);
                    vocab[*weighted_pick(&mut rng, &(0..vocab_size).collect::<Vec<_>>(), &phi[t])]
                        .clone()
                })
                .collect()
        })
        .collect();
    PlantedLda {
        docs: out,
        phi,
        vocab,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::JsonlRecord;

    fn small() -> SynthConfig {
        SynthConfig {
            broadcasts: 200,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn grooming_count_is_exact() {
        let c = generate(&SynthConfig::default()).unwrap();
        assert_eq!(c.truth.grooming_count(), 380);
        assert_eq!(c.broadcasts.len(), 2000);
    }

    #[test]
    fn output_passes_validation() {
        let c = generate(&small()).unwrap();
        for b in &c.broadcasts {
            let line = serde_json::to_string(b).unwrap();
            assert_eq!(&Broadcast::parse_line(&line).unwrap(), b);
        }
        for m in &c.messages {
            let line = serde_json::to_string(m).unwrap();
            assert_eq!(&ChatMessage::parse_line(&line).unwrap(), m);
        }
    }

    #[test]
    fn no_gibberish_when_rate_is_zero() {
        let c = generate(&SynthConfig {
            gibberish_rate: 0.0,
            ..small()
        })
        .unwrap();
        assert!(c.truth.gibberish_lines.is_empty());
    }

    #[test]
    fn same_seed_same_files() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        generate(&small()).unwrap().write(&a).unwrap();
        generate(&small()).unwrap().write(&b).unwrap();
        for f in ["broadcasts.jsonl", "messages.jsonl", "ground_truth.json"] {
            assert_eq!(
                std::fs::read(a.join(f)).unwrap(),
                std::fs::read(b.join(f)).unwrap()
            );
        }
        let truth = load_ground_truth(&a.join("ground_truth.json")).unwrap();
        assert_eq!(truth.broadcasts.len(), 200);
    }

    #[test]
    fn planted_rates_within_three_sigma() {
        let cfg = SynthConfig::default();
        let c = generate(&cfg).unwrap();
        let n = c.messages.len() as f64;
        for (count, p) in [
            (c.truth.gibberish_lines.len() as f64, cfg.gibberish_rate),
            (c.truth.emoji_only_lines.len() as f64, cfg.emoji_only_rate),
        ] {
            let sigma = (n * p * (1.0 - p)).sqrt();
            assert!((count - n * p).abs() <= 3.0 * sigma, "{count} vs {}", n * p);
        }
    }

    #[test]
    fn variants_respect_edit_bound() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.truth.misspellings.len(), 20);
        for (seed, vs) in &c.truth.misspellings {
            assert_eq!(vs.len(), 2);
            for v in vs {
                let d = edit_distance(seed, v);
                assert!((1..=2).contains(&d), "{seed} -> {v}");
            }
        }
    }

    #[test]
    fn edit_distance_reference_values() {
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("pussy", "püssy"), 1);
        assert_eq!(edit_distance("boobs", "boobz"), 1);
    }

    #[test]
    fn follower_ratio_shifts_with_grooming() {
        let c = generate(&small()).unwrap();
        let mean = |g: bool| {
            let v: Vec<f64> = c
                .broadcasts
                .iter()
                .zip(&c.truth.broadcasts)
                .filter(|(_, p)| p.grooming == g)
                .map(|(b, _)| b.new_followers as f64 / b.total_viewers as f64)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) > mean(false) + 0.04);
    }

    #[test]
    fn planted_lda_rows_are_distributions() {
        let p = planted_lda(3, 60, 20, 50, 0.1, 0.9, 1);
        assert_eq!(p.docs.len(), 20);
        assert!(p.docs.iter().all(|d| d.len() == 50));
        for row in &p.phi {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_config_lists_problems() {
        let err = generate(&SynthConfig {
            topics: 1,
            gibberish_rate: 2.0,
            ..small()
        })
        .unwrap_err()
        .to_string();
        assert!(err.contains("topics") && err.contains("gibberish_rate"));
    }
}
