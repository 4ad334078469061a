//! Stage orchestration over a run directory.
//!
//! Each stage reads artifacts written by earlier stages from
//! `<run>/artifacts/`, writes its own artifacts and reports, and appends one
//! line to `<run>/manifest.tsv`. Wall-clock times go to `timings.tsv` so the
//! manifest itself stays reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::colloc::{self, Particles};
use crate::corpus::{self, Broadcast, ChatMessage, FEATURE_NAMES};
use crate::embed::{self, csv_field, EmbeddingConfig, EmbeddingModel, Expansion, TermStats};
use crate::error::{Error, Result};
use crate::mining::{self, ForestConfig, ImportanceReport};
use crate::synth::{self, SynthConfig};
use crate::textprep::{
    self, emoji_only_fraction, tokenize, ChatLogDocument, DocumentConfig, GibberishModel,
    Lemmatizer, Stopwords, SubstitutionPlan, CLOTHING_TERM, OPEN_TERM, SEX_TERM, SHOW_TERM,
};
use crate::topics::{self, CoherenceConfig, GroomingTopic, LdaConfig, TopicModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Ingest,
    Prep,
    Embed,
    Expand,
    Colloc,
    LdaSweep,
    Assign,
    Mdi,
    Patterns,
    Report,
    All,
}

impl Stage {
    pub const SEQUENCE: [Stage; 10] = [
        Stage::Ingest,
        Stage::Prep,
        Stage::Embed,
        Stage::Expand,
        Stage::Colloc,
        Stage::LdaSweep,
        Stage::Assign,
        Stage::Mdi,
        Stage::Patterns,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Prep => "prep",
            Stage::Embed => "embed",
            Stage::Expand => "expand",
            Stage::Colloc => "colloc",
            Stage::LdaSweep => "lda-sweep",
            Stage::Assign => "assign",
            Stage::Mdi => "mdi",
            Stage::Patterns => "patterns",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::SEQUENCE
            .iter()
            .chain(&[Stage::Synth, Stage::All])
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand {s:?}")))
    }
}

/// Raw `section.key = value` settings plus the directory relative paths
/// resolve against.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: BTreeMap<(String, String), String>,
    base_dir: PathBuf,
}

fn split_key(key: &str) -> (String, String) {
    match key.split_once('.') {
        Some((s, k)) => (s.trim().to_string(), k.trim().to_string()),
        None => ("run".to_string(), key.trim().to_string()),
    }
}

impl ConfigFile {
    /// `[section]` headers and `key = value` lines; `#` starts a comment.
    /// Keys before the first header belong to `run`.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = ConfigFile {
            entries: BTreeMap::new(),
            base_dir: base_dir.into(),
        };
        let mut section = "run".to_string();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    let key = (section.clone(), k.trim().to_string());
                    if cfg.entries.insert(key, v.trim().to_string()).is_some() {
                        problems.push(format!(
                            "line {}: {}.{} set twice",
                            i + 1,
                            section,
                            k.trim()
                        ));
                    }
                }
                _ => problems.push(format!("line {}: expected `key = value`", i + 1)),
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {assignment:?} is not section.key=value"))
        })?;
        let key = split_key(k);
        if key.1.is_empty() {
            return Err(Error::Config(format!(
                "override {assignment:?} has an empty key"
            )));
        }
        self.entries.insert(key, v.trim().to_string());
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    /// Sorted `section.key = value` lines, leaving out the output directory.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for ((s, k), v) in &self.entries {
            if s == "run" && k == "output" {
                continue;
            }
            let _ = writeln!(out, "{s}.{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Typed reader that remembers which keys were consumed and collects every
/// problem instead of stopping at the first.
struct Fields<'a> {
    file: &'a ConfigFile,
    used: BTreeSet<(String, String)>,
    problems: Vec<String>,
}

impl<'a> Fields<'a> {
    fn raw(&mut self, section: &str, key: &str) -> Option<&'a str> {
        self.used.insert((section.to_string(), key.to_string()));
        self.file.get(section, key)
    }

    fn opt<T: FromStr>(&mut self, section: &str, key: &str) -> Option<T> {
        let v = self.raw(section, key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.problems
                    .push(format!("{section}.{key}: cannot parse {v:?}"));
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> T {
        self.opt(section, key).unwrap_or(default)
    }

    fn list(&mut self, section: &str, key: &str, default: &[&str]) -> Vec<String> {
        match self.raw(section, key) {
            Some(v) => v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
            None => default.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn parsed_list<T: FromStr + Clone>(
        &mut self,
        section: &str,
        key: &str,
        default: &[T],
    ) -> Vec<T> {
        if self.file.get(section, key).is_none() {
            self.used.insert((section.to_string(), key.to_string()));
            return default.to_vec();
        }
        let items = self.list(section, key, &[]);
        let mut out = Vec::new();
        for it in items {
            match it.parse() {
                Ok(x) => out.push(x),
                Err(_) => self
                    .problems
                    .push(format!("{section}.{key}: cannot parse {it:?}")),
            }
        }
        out
    }

    fn path(&mut self, section: &str, key: &str) -> Option<PathBuf> {
        self.raw(section, key).map(|v| self.file.base_dir.join(v))
    }

    fn check(&mut self, r: Result<()>) {
        if let Err(e) = r {
            self.problems.push(match e {
                Error::Config(m) => m,
                other => other.to_string(),
            });
        }
    }
}

pub const DEFAULT_EMOJI_ANCHORS: [&str; 8] = ["👗", "👙", "👚", "👕", "👖", "👠", "🩱", "🩲"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub output: PathBuf,
    pub seed: u64,
    /// 0 uses every available core.
    pub threads: usize,
    pub broadcasts: PathBuf,
    pub messages: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub gibberish_model: Option<PathBuf>,
    pub sexual_seeds: Option<PathBuf>,
    pub clothing_seeds: Option<PathBuf>,
    pub countries: BTreeSet<String>,
    pub min_messages: usize,
    pub gibberish_filter: bool,
    pub embed: EmbeddingConfig,
    pub neighbors: usize,
    pub max_distance: f64,
    pub show_seeds: Vec<String>,
    pub open_seeds: Vec<String>,
    pub colloc_window: usize,
    pub colloc_top: usize,
    pub emoji_anchors: Vec<String>,
    pub emoji_top: usize,
    pub ks: Vec<usize>,
    pub lda: LdaConfig,
    pub top_terms: usize,
    pub coherence: CoherenceConfig,
    pub forest: ForestConfig,
    pub min_support: u64,
    pub pattern_topics: usize,
    pub synth_generate: bool,
    pub synth_dir: PathBuf,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Reads every known key, reporting unknown keys and invalid values all
    /// at once.
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let mut f = Fields {
            file,
            used: BTreeSet::new(),
            problems: Vec::new(),
        };
        let output = f
            .path("run", "output")
            .unwrap_or_else(|| file.base_dir.join("run"));
        let seed = f.get("run", "seed", 1u64);
        let threads = f.get("run", "threads", 0usize);

        let synth_generate = f.get("synth", "generate", false);
        let synth_dir = f
            .path("synth", "dir")
            .unwrap_or_else(|| output.join("corpus"));
        let sd = SynthConfig::default();
        let synth = SynthConfig {
            broadcasts: f.get("synth", "broadcasts", sd.broadcasts),
            topics: f.get("synth", "topics", sd.topics),
            grooming_proportion: f.get("synth", "grooming_proportion", sd.grooming_proportion),
            topic_purity: f.get("synth", "topic_purity", sd.topic_purity),
            messages_min: f.get("synth", "messages_min", sd.messages_min),
            messages_max: f.get("synth", "messages_max", sd.messages_max),
            tokens_min: f.get("synth", "tokens_min", sd.tokens_min),
            tokens_max: f.get("synth", "tokens_max", sd.tokens_max),
            phrase_rate: f.get("synth", "phrase_rate", sd.phrase_rate),
            misspelling_rate: f.get("synth", "misspelling_rate", sd.misspelling_rate),
            variants_per_seed: f.get("synth", "variants_per_seed", sd.variants_per_seed),
            max_edit_distance: f.get("synth", "max_edit_distance", sd.max_edit_distance),
            gibberish_rate: f.get("synth", "gibberish_rate", sd.gibberish_rate),
            emoji_only_rate: f.get("synth", "emoji_only_rate", sd.emoji_only_rate),
            filler_rate: f.get("synth", "filler_rate", sd.filler_rate),
            emoji_token_rate: f.get("synth", "emoji_token_rate", sd.emoji_token_rate),
            follower_shift: f.get("synth", "follower_shift", sd.follower_shift),
            liker_shift: f.get("synth", "liker_shift", sd.liker_shift),
            seed: f.get("synth", "seed", seed),
        };

        let broadcasts = f
            .path("paths", "broadcasts")
            .unwrap_or_else(|| synth_dir.join("broadcasts.jsonl"));
        let messages = f
            .path("paths", "messages")
            .unwrap_or_else(|| synth_dir.join("messages.jsonl"));
        let stopwords = f.path("paths", "stopwords");
        let gibberish_model = f.path("paths", "gibberish_model");
        let sexual_seeds = f.path("paths", "sexual_seeds");
        let clothing_seeds = f.path("paths", "clothing_seeds");

        let countries = f
            .list("prep", "countries", &textprep::DEFAULT_COUNTRIES)
            .into_iter()
            .map(|c| c.to_uppercase())
            .collect();
        let min_messages = f.get("prep", "min_messages", textprep::DEFAULT_MIN_MESSAGES);
        let gibberish_filter = f.get("prep", "gibberish", true);

        let ed = EmbeddingConfig::default();
        let subsample: f64 = f.get("embed", "subsample", 0.0);
        let embed = EmbeddingConfig {
            dimension: f.get("embed", "dimension", ed.dimension),
            window: f.get("embed", "window", ed.window),
            negatives: f.get("embed", "negatives", ed.negatives),
            epochs: f.get("embed", "epochs", ed.epochs),
            min_count: f.get("embed", "min_count", ed.min_count),
            minn: f.get("embed", "minn", ed.minn),
            maxn: f.get("embed", "maxn", ed.maxn),
            buckets: f.get("embed", "buckets", ed.buckets),
            learning_rate: f.get("embed", "learning_rate", ed.learning_rate),
            subsample: (subsample > 0.0).then_some(subsample),
            seed: f.get("embed", "seed", seed),
        };
        let neighbors = f.get("expand", "neighbors", 100usize);
        let max_distance = f.get("expand", "max_distance", 2.0f64);
        let show_seeds = f.list("expand", "show", &["show"]);
        let open_seeds = f.list("expand", "open", &["open"]);

        let colloc_window = f.get("colloc", "window", colloc::DEFAULT_WINDOW);
        let colloc_top = f.get("colloc", "top_n", 50usize);
        let emoji_anchors = f.list("colloc", "emoji_anchors", &DEFAULT_EMOJI_ANCHORS);
        let emoji_top = f.get("colloc", "emoji_top", 20usize);

        let ks = f.parsed_list("lda", "ks", &topics::DEFAULT_KS);
        let ld = LdaConfig::new(ks.first().copied().unwrap_or(2), seed);
        let lda = LdaConfig {
            beta: f.get("lda", "beta", ld.beta),
            iterations: f.get("lda", "iterations", ld.iterations),
            seed: f.get("lda", "seed", seed),
            ..ld
        };
        let top_terms = f.get("lda", "top_terms", 10usize);
        let cd = CoherenceConfig::default();
        let coherence = CoherenceConfig {
            top_n: f.get("coherence", "top_n", cd.top_n),
            window: f.get("coherence", "window", cd.window),
            epsilon: f.get("coherence", "epsilon", cd.epsilon),
        };

        let fd = ForestConfig::default();
        let forest = ForestConfig {
            trees: f.get("forest", "trees", fd.trees),
            max_features: f.opt("forest", "max_features"),
            bootstrap: f.get("forest", "bootstrap", fd.bootstrap),
            max_depth: f.opt("forest", "max_depth"),
            min_samples_leaf: f.get("forest", "min_samples_leaf", fd.min_samples_leaf),
            seed: f.get("forest", "seed", seed),
        };
        let min_support = f.get("patterns", "min_support", mining::DEFAULT_MIN_SUPPORT);
        let pattern_topics = f.get("patterns", "topics_per_document", 3usize);

        let unknown: Vec<String> = file
            .entries
            .keys()
            .filter(|k| !f.used.contains(*k))
            .map(|(s, k)| format!("unknown key {s}.{k}"))
            .collect();
        f.problems.extend(unknown);

        f.check(embed.validate());
        f.check(coherence.validate());
        f.check(synth.validate());
        if ks.is_empty() {
            f.problems
                .push("lda.ks must list at least one topic count".into());
        }
        for &k in &ks {
            f.check(lda.with_k(k).validate());
        }
        if forest.trees == 0 || forest.min_samples_leaf == 0 || forest.max_features == Some(0) {
            f.problems.push(
                "forest.trees, forest.min_samples_leaf and forest.max_features must be positive"
                    .into(),
            );
        }
        if min_support == 0 || pattern_topics == 0 {
            f.problems.push(
                "patterns.min_support and patterns.topics_per_document must be positive".into(),
            );
        }
        if colloc_window == 0 {
            f.problems.push("colloc.window must be at least 1".into());
        }
        if emoji_anchors.is_empty() {
            f.problems
                .push("colloc.emoji_anchors must not be empty".into());
        }
        if max_distance.is_nan() || max_distance < 0.0 {
            f.problems
                .push("expand.max_distance must be non-negative".into());
        }

        if !f.problems.is_empty() {
            return Err(Error::Config(f.problems.join("; ")));
        }
        Ok(RunConfig {
            output,
            seed,
            threads,
            broadcasts,
            messages,
            stopwords,
            gibberish_model,
            sexual_seeds,
            clothing_seeds,
            countries,
            min_messages,
            gibberish_filter,
            embed,
            neighbors,
            max_distance,
            show_seeds,
            open_seeds,
            colloc_window,
            colloc_top,
            emoji_anchors,
            emoji_top,
            ks,
            lda,
            top_terms,
            coherence,
            forest,
            min_support,
            pattern_topics,
            synth_generate,
            synth_dir,
            synth,
        })
    }

    /// Checks that every file the stage will read exists. Corpus files that
    /// the same invocation generates are exempt.
    pub fn check_inputs(&self, stage: Stage) -> Result<()> {
        let generates = stage == Stage::Synth || (stage == Stage::All && self.synth_generate);
        let mut files: Vec<(&str, &Path)> = Vec::new();
        if !generates && matches!(stage, Stage::Ingest | Stage::All) {
            files.push(("paths.broadcasts", &self.broadcasts));
            files.push(("paths.messages", &self.messages));
        }
        for (name, p) in [
            ("paths.stopwords", &self.stopwords),
            ("paths.gibberish_model", &self.gibberish_model),
            ("paths.sexual_seeds", &self.sexual_seeds),
            ("paths.clothing_seeds", &self.clothing_seeds),
        ] {
            if let Some(p) = p {
                files.push((name, p));
            }
        }
        let mut problems: Vec<String> = files
            .into_iter()
            .filter(|(_, p)| !p.is_file())
            .map(|(name, p)| format!("{name}: {} does not exist", p.display()))
            .collect();
        if matches!(stage, Stage::Expand | Stage::All) {
            for (name, p) in [
                ("paths.sexual_seeds", &self.sexual_seeds),
                ("paths.clothing_seeds", &self.clothing_seeds),
            ] {
                if p.is_none() {
                    problems.push(format!("{name} is required"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn stopword_list(&self) -> Result<Stopwords> {
        match &self.stopwords {
            Some(p) => Stopwords::load(p),
            None => Ok(Stopwords::bundled()),
        }
    }

    fn gibberish(&self) -> Result<Option<GibberishModel>> {
        if !self.gibberish_filter {
            return Ok(None);
        }
        match &self.gibberish_model {
            Some(p) => GibberishModel::load(p).map(Some),
            None => Ok(Some(textprep::bundled_gibberish_model()?.0)),
        }
    }
}

/// One non-gibberish message after tokenisation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedMessage {
    pub broadcast_id: String,
    pub user_id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GroomingArtifact {
    topic: GroomingTopic,
    documents: usize,
    dominant: usize,
    share: f64,
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::MissingArtifact { .. } => 2,
        _ => 3,
    }
}

const ARTIFACTS: &str = "artifacts";

pub struct Run<'a> {
    cfg: &'a RunConfig,
    hash: String,
    canonical: String,
    dir: PathBuf,
}

impl<'a> Run<'a> {
    pub fn new(file: &ConfigFile, cfg: &'a RunConfig) -> Result<Self> {
        let dir = cfg.output.clone();
        let art = dir.join(ARTIFACTS);
        std::fs::create_dir_all(&art).map_err(|e| Error::io(&art, e))?;
        Ok(Run {
            cfg,
            hash: file.hash(),
            canonical: file.canonical(),
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.dir.join(ARTIFACTS).join(name)
    }

    fn require(&self, name: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.artifact(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                artifact: name.to_string(),
                producer: producer.name().to_string(),
            })
        }
    }

    /// Runs a subcommand inside a thread pool sized by the `threads` key.
    pub fn execute(&self, stage: Stage) -> Result<()> {
        self.cfg.check_inputs(stage)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| match stage {
            Stage::All => {
                if self.cfg.synth_generate {
                    self.run_stage(Stage::Synth)?;
                }
                Stage::SEQUENCE.iter().try_for_each(|&s| self.run_stage(s))
            }
            s => self.run_stage(s),
        })
    }

    fn run_stage(&self, stage: Stage) -> Result<()> {
        log::info!("stage {}", stage.name());
        let start = Instant::now();
        let mut out = Outputs::new(self);
        let seed = match stage {
            Stage::Synth => self.cfg.synth.seed,
            Stage::Embed | Stage::Expand => self.cfg.embed.seed,
            Stage::LdaSweep | Stage::Assign | Stage::Report | Stage::Patterns => self.cfg.lda.seed,
            Stage::Mdi => self.cfg.forest.seed,
            _ => self.cfg.seed,
        };
        match stage {
            Stage::Synth => self.synth(&mut out)?,
            Stage::Ingest => self.ingest(&mut out)?,
            Stage::Prep => self.prep(&mut out)?,
            Stage::Embed => self.embed(&mut out)?,
            Stage::Expand => self.expand(&mut out)?,
            Stage::Colloc => self.colloc(&mut out)?,
            Stage::LdaSweep => self.lda_sweep(&mut out)?,
            Stage::Assign => self.assign(&mut out)?,
            Stage::Mdi => self.mdi(&mut out)?,
            Stage::Patterns => self.patterns(&mut out)?,
            Stage::Report => self.report(&mut out)?,
            Stage::All => unreachable!("expanded by execute"),
        }
        self.write_root("config.txt", self.canonical.as_bytes())?;
        self.append_manifest(stage, seed, &out.written)?;
        self.append_line(
            "timings.tsv",
            "stage\tseconds\n",
            &format!("{}\t{:.3}\n", stage.name(), start.elapsed().as_secs_f64()),
        )?;
        Ok(())
    }

    fn write_root(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    fn append_line(&self, name: &str, header: &str, line: &str) -> Result<()> {
        use std::io::Write;
        let p = self.dir.join(name);
        let fresh = !p.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&p)
            .map_err(|e| Error::io(&p, e))?;
        if fresh {
            f.write_all(header.as_bytes())
                .map_err(|e| Error::io(&p, e))?;
        }
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&p, e))
    }

    fn append_manifest(&self, stage: Stage, seed: u64, written: &[(String, String)]) -> Result<()> {
        let outputs: Vec<String> = written
            .iter()
            .map(|(n, h)| format!("{n}:{}", &h[..16]))
            .collect();
        let header = format!(
            "# chatscope {} manifest\nstage\tconfig_sha256\tseed\toutputs\n",
            env!("CARGO_PKG_VERSION")
        );
        self.append_line(
            "manifest.tsv",
            &header,
            &format!(
                "{}\t{}\t{}\t{}\n",
                stage.name(),
                self.hash,
                seed,
                outputs.join(",")
            ),
        )
    }

    // ---- stages ----

    fn synth(&self, out: &mut Outputs) -> Result<()> {
        let corpus = synth::generate(&self.cfg.synth)?;
        corpus.write(&self.cfg.synth_dir)?;
        for name in ["broadcasts.jsonl", "messages.jsonl", "ground_truth.json"] {
            let p = self.cfg.synth_dir.join(name);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            out.record(&format!("synth:{name}"), &bytes);
        }
        Ok(())
    }

    fn ingest(&self, out: &mut Outputs) -> Result<()> {
        let b = corpus::load_broadcasts(&self.cfg.broadcasts)?;
        let m = corpus::load_messages(&self.cfg.messages)?;
        if b.records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut rejected = String::from("file\tline\treason\n");
        for (file, rej) in [("broadcasts", &b.rejected), ("messages", &m.rejected)] {
            for r in rej {
                let _ = writeln!(
                    rejected,
                    "{file}\t{}\t{}",
                    r.line,
                    r.reason.replace(['\t', '\n'], " ")
                );
            }
        }
        out.artifact("broadcasts.jsonl", jsonl(&b.records)?.as_bytes())?;
        out.artifact("messages.jsonl", jsonl(&m.records)?.as_bytes())?;
        out.artifact("rejected.tsv", rejected.as_bytes())?;

        let grouped = corpus::messages_by_broadcast(&m.records);
        let none = Vec::new();
        let features: Vec<corpus::InteractionFeatures> = b
            .records
            .iter()
            .map(|br| {
                corpus::interaction_features(
                    br,
                    grouped.get(br.id.as_str()).unwrap_or(&none).iter().copied(),
                )
            })
            .collect();
        let column = |f: fn(&corpus::InteractionFeatures) -> f64| {
            features.iter().map(f).collect::<Vec<f64>>()
        };
        let mut cdfs: Vec<(&str, Vec<f64>)> = vec![
            ("viewers", column(|f| f.total_viewers as f64)),
            ("duration", column(|f| f.duration_s as f64)),
            ("likes", column(|f| f.likes as f64)),
            ("gifts", column(|f| f.gift_count as f64)),
            ("chat_messages", column(|f| f.total_chat_messages as f64)),
        ];
        let per_user: Vec<f64> = corpus::messages_per_user(&m.records)
            .into_iter()
            .map(|(_, c)| c as f64)
            .collect();
        if !per_user.is_empty() {
            cdfs.push(("messages_per_user", per_user));
        }
        for (name, values) in cdfs {
            out.report(&format!("cdfs_{name}.csv"), &cdf_csv(&values)?)?;
        }

        let mut countries = String::from("country,broadcasters\n");
        for (c, n) in corpus::country_histogram(&b.records, usize::MAX) {
            let _ = writeln!(countries, "{},{n}", csv_field(&c));
        }
        out.report("countries.csv", &countries)?;

        let a = corpus::activity_summary(&b.records);
        let activity = format!(
            "metric,value\nbroadcasts,{}\nmessages,{}\nrejected_broadcasts,{}\nrejected_messages,{}\n\
             shared_fraction,{:.6}\nunshared_fraction,{:.6}\nblocked_fraction,{:.6}\nunblocked_fraction,{:.6}\n",
            a.broadcasts,
            m.records.len(),
            b.skipped(),
            m.skipped(),
            a.shared_fraction,
            a.unshared_fraction,
            a.blocked_fraction,
            a.unblocked_fraction
        );
        out.report("activity.csv", &activity)
    }

    fn load_ingested(&self) -> Result<(Vec<Broadcast>, Vec<ChatMessage>)> {
        let bp = self.require("broadcasts.jsonl", Stage::Ingest)?;
        let mp = self.require("messages.jsonl", Stage::Ingest)?;
        let b = corpus::load_broadcasts(&bp)?;
        let m = corpus::load_messages(&mp)?;
        if b.skipped() + m.skipped() > 0 {
            return Err(Error::format(
                "ingested corpus",
                "artifact contains invalid rows; rerun ingest",
            ));
        }
        Ok((b.records, m.records))
    }

    fn prep(&self, out: &mut Outputs) -> Result<()> {
        let (_, messages) = self.load_ingested()?;
        let model = self.cfg.gibberish()?;
        let flags: Vec<bool> = {
            use rayon::prelude::*;
            messages
                .par_iter()
                .map(|m| model.as_ref().is_some_and(|g| g.is_gibberish(&m.text)))
                .collect()
        };
        let mut lines = String::new();
        let mut kept = 0usize;
        for (m, &gib) in messages.iter().zip(&flags) {
            if gib {
                continue;
            }
            let tokens: Vec<String> = tokenize(&m.text).into_iter().map(|t| t.surface).collect();
            if tokens.is_empty() {
                continue;
            }
            kept += 1;
            let rec = TokenizedMessage {
                broadcast_id: m.broadcast_id.clone(),
                user_id: m.user_id.clone(),
                tokens,
            };
            lines.push_str(&to_json(&rec)?);
            lines.push('\n');
        }
        let gibberish = flags.iter().filter(|&&g| g).count();
        out.artifact("tokens.jsonl", lines.as_bytes())?;
        if let Some(g) = &model {
            out.artifact("gibberish.tsv", g.to_tsv().as_bytes())?;
        }
        let stats = format!(
            "metric,value\nmessages,{}\ngibberish,{gibberish}\ntokenized,{kept}\nemoji_only_fraction,{:.6}\n",
            messages.len(),
            emoji_only_fraction(messages.iter().map(|m| m.text.as_str()))
        );
        out.report("prep.csv", &stats)
    }

    fn load_tokens(&self) -> Result<Vec<TokenizedMessage>> {
        let p = self.require("tokens.jsonl", Stage::Prep)?;
        read_jsonl(&p, "tokenized messages")
    }

    fn embed(&self, out: &mut Outputs) -> Result<()> {
        let msgs = self.load_tokens()?;
        let sentences: Vec<&[String]> = msgs.iter().map(|m| m.tokens.as_slice()).collect();
        let model = embed::train_embeddings(&sentences, &self.cfg.embed)?;
        let mut bytes = Vec::new();
        model
            .write_to(&mut bytes)
            .map_err(|e| Error::io(self.artifact("embeddings.bin"), e))?;
        out.artifact("embeddings.bin", &bytes)
    }

    fn expand(&self, out: &mut Outputs) -> Result<()> {
        let model = EmbeddingModel::load(&self.require("embeddings.bin", Stage::Embed)?)?;
        let msgs = self.load_tokens()?;
        let stats = TermStats::from_messages(msgs.iter().map(|m| {
            (
                m.broadcast_id.as_str(),
                m.user_id.as_str(),
                m.tokens.iter().map(String::as_str),
            )
        }));
        let seed_file = |p: &Option<PathBuf>| -> Result<Vec<String>> {
            textprep::load_term_list(p.as_deref().expect("checked by check_inputs"))
        };
        let groups: Vec<(&str, Vec<String>)> = vec![
            (SEX_TERM, seed_file(&self.cfg.sexual_seeds)?),
            (CLOTHING_TERM, seed_file(&self.cfg.clothing_seeds)?),
            (
                SHOW_TERM,
                self.cfg
                    .show_seeds
                    .iter()
                    .map(|s| s.to_lowercase())
                    .collect(),
            ),
            (
                OPEN_TERM,
                self.cfg
                    .open_seeds
                    .iter()
                    .map(|s| s.to_lowercase())
                    .collect(),
            ),
        ];
        let all_seeds: BTreeMap<&str, &str> = groups
            .iter()
            .rev()
            .flat_map(|(name, seeds)| seeds.iter().map(move |s| (s.as_str(), *name)))
            .collect();

        let mut report = Expansion::default();
        let mut entries: Vec<(&str, Vec<String>)> = Vec::new();
        for (name, seeds) in &groups {
            if seeds.is_empty() {
                entries.push((name, Vec::new()));
                continue;
            }
            let exp = embed::expand_lexicon(&model, seeds, self.cfg.neighbors, &stats)?;
            // A seed of another placeholder is never absorbed by this one.
            let terms = exp
                .rows
                .iter()
                .filter(|r| r.distance <= self.cfg.max_distance)
                .filter(|r| {
                    all_seeds
                        .get(r.term.as_str())
                        .is_none_or(|owner| owner == name)
                })
                .map(|r| r.term.clone())
                .collect();
            if *name == SEX_TERM || *name == CLOTHING_TERM {
                report.rows.extend(exp.rows);
                report.skipped.extend(exp.skipped);
            }
            entries.push((name, terms));
        }
        let plan = SubstitutionPlan::new(entries)?;
        out.report("expansion.csv", &report.to_csv())?;
        out.artifact("plan.tsv", plan.to_tsv().as_bytes())?;

        let (broadcasts, messages) = self.load_ingested()?;
        let dc = DocumentConfig {
            countries: self.cfg.countries.clone(),
            min_messages: self.cfg.min_messages,
            stopwords: self.cfg.stopword_list()?,
            plan,
            gibberish: self.cfg.gibberish()?,
            lemmatizer: Lemmatizer::bundled(),
        };
        let (docs, doc_stats) = textprep::build_documents(&broadcasts, &messages, &dc);
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        out.artifact("documents.jsonl", jsonl(&docs)?.as_bytes())?;
        out.artifact(
            "documents.json",
            (to_json_pretty(&doc_stats)? + "\n").as_bytes(),
        )
    }

    fn load_plan(&self) -> Result<SubstitutionPlan> {
        let p = self.require("plan.tsv", Stage::Expand)?;
        SubstitutionPlan::from_tsv(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
    }

    fn load_documents(&self) -> Result<Vec<ChatLogDocument>> {
        read_jsonl(
            &self.require("documents.jsonl", Stage::Expand)?,
            "documents",
        )
    }

    fn colloc(&self, out: &mut Outputs) -> Result<()> {
        let plan = self.load_plan()?;
        let msgs = self.load_tokens()?;
        let stop = self.cfg.stopword_list()?;
        let token_lists: Vec<&[String]> = msgs.iter().map(|m| m.tokens.as_slice()).collect();
        let set_of = |name: &str| -> BTreeSet<String> {
            plan.entries()
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, s)| s.clone())
                .unwrap_or_default()
        };
        for (name, file) in [
            (SEX_TERM, "colloc_sexual.csv"),
            (CLOTHING_TERM, "colloc_clothing.csv"),
        ] {
            let table = colloc::collocates(
                &token_lists,
                &set_of(name),
                self.cfg.colloc_window,
                self.cfg.colloc_top,
                &stop,
            )?;
            out.report(file, &table.to_csv())?;
        }
        let clothing = set_of(CLOTHING_TERM);
        let clothing_msgs: Vec<&[String]> = token_lists
            .iter()
            .copied()
            .filter(|t| t.iter().any(|w| clothing.contains(w)))
            .collect();
        let verbs = colloc::extract_verbs(
            &clothing_msgs,
            &Lemmatizer::bundled(),
            &Particles::bundled(),
        );
        out.report("verbs.csv", &verbs.to_csv())?;

        let texts: Vec<String> = msgs.iter().map(|m| m.tokens.join(" ")).collect();
        let anchors: BTreeSet<String> = self.cfg.emoji_anchors.iter().cloned().collect();
        let rows = colloc::emoji_cooccurrence(
            texts.iter().map(String::as_str),
            &anchors,
            self.cfg.emoji_top,
        )?;
        out.report("emoji_cooc.csv", &colloc::emoji_csv(&rows))
    }

    fn lda_sweep(&self, out: &mut Outputs) -> Result<()> {
        let docs = self.load_documents()?;
        let tokens: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
        let result = topics::sweep_k(&tokens, &self.cfg.ks, &self.cfg.lda, &self.cfg.coherence)?;
        log::info!("selected k = {}", result.best_k);
        let mut csv = String::from("k,cv,selected\n");
        for (k, cv) in &result.table {
            let _ = writeln!(csv, "{k},{cv:.6},{}", u8::from(*k == result.best_k));
        }
        out.report("coherence.csv", &csv)?;
        let mut bytes = Vec::new();
        result
            .best
            .write_to(&mut bytes)
            .map_err(|e| Error::io(self.artifact("topics.model"), e))?;
        out.artifact("topics.model", &bytes)
    }

    fn load_model(&self) -> Result<TopicModel> {
        TopicModel::load(&self.require("topics.model", Stage::LdaSweep)?)
    }

    /// Broadcast ids of the model's documents, in training order.
    fn document_ids(&self, model: &TopicModel) -> Result<Vec<String>> {
        let ids: Vec<String> = self
            .load_documents()?
            .into_iter()
            .map(|d| d.broadcast_id)
            .collect();
        if ids.len() != model.num_docs() {
            return Err(Error::format(
                "topics.model",
                "document count differs from documents.jsonl; rerun lda-sweep",
            ));
        }
        Ok(ids)
    }

    fn load_grooming(&self) -> Result<GroomingArtifact> {
        let p = self.require("grooming.json", Stage::Assign)?;
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("grooming.json", e.to_string()))
    }

    fn assign(&self, out: &mut Outputs) -> Result<()> {
        let model = self.load_model()?;
        let plan = self.load_plan()?;
        let placeholders: Vec<&str> = plan.placeholder_names().collect();
        let topic = topics::identify_grooming_topic(&model, &placeholders)?;
        let dominant = (0..model.num_docs())
            .filter(|&d| topics::dominant_topic(&model.theta(d)) == topic.topic)
            .count();
        let g = GroomingArtifact {
            topic,
            documents: model.num_docs(),
            dominant,
            share: dominant as f64 / model.num_docs().max(1) as f64,
        };
        log::info!(
            "grooming topic {} dominates {:.3} of documents",
            g.topic.topic,
            g.share
        );
        out.artifact("grooming.json", (to_json_pretty(&g)? + "\n").as_bytes())?;
        out.report(
            "assignments.csv",
            &assignments_csv(&model, &self.document_ids(&model)?),
        )?;
        out.report("topics.csv", &topics_csv(&model, self.cfg.top_terms))
    }

    fn mdi(&self, out: &mut Outputs) -> Result<()> {
        let model = self.load_model()?;
        let g = self.load_grooming()?;
        let (broadcasts, messages) = self.load_ingested()?;
        let by_id: BTreeMap<&str, &Broadcast> =
            broadcasts.iter().map(|b| (b.id.as_str(), b)).collect();
        let grouped = corpus::messages_by_broadcast(&messages);
        let none = Vec::new();
        let mut ids = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (d, id) in self.document_ids(&model)?.iter().enumerate() {
            let b = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::format("topics.model", format!("unknown broadcast {id}")))?;
            let f = corpus::interaction_features(
                b,
                grouped.get(id.as_str()).unwrap_or(&none).iter().copied(),
            );
            ids.push(id.clone());
            x.push(f.feature_vector());
            y.push(topics::dominant_topic(&model.theta(d)) == g.topic.topic);
        }
        let forest = mining::train_forest(&x, &y, &self.cfg.forest)?;
        let report = mining::mdi(&forest, &FEATURE_NAMES);
        out.report(
            "features.csv",
            &mining::feature_matrix_csv(&FEATURE_NAMES, &ids, &x, &y),
        )?;
        out.report("mdi.csv", &report.to_csv())?;
        out.artifact("mdi.json", (to_json_pretty(&report)? + "\n").as_bytes())?;

        let mut csv = String::from("feature,label,value,fraction\n");
        for name in ["followers_to_viewers", "likers_to_viewers"] {
            let col = FEATURE_NAMES
                .iter()
                .position(|n| *n == name)
                .expect("known feature");
            for (label, tag) in [(true, "grooming"), (false, "other")] {
                let values: Vec<f64> = x
                    .iter()
                    .zip(&y)
                    .filter(|(_, l)| **l == label)
                    .map(|(r, _)| r[col])
                    .collect();
                if values.is_empty() {
                    continue;
                }
                for (v, p) in corpus::empirical_cdf(&values)?.points {
                    let _ = writeln!(csv, "{name},{tag},{v:.6},{p:.6}");
                }
            }
        }
        out.report("cdfs_by_label.csv", &csv)
    }

    fn patterns(&self, out: &mut Outputs) -> Result<()> {
        let model = self.load_model()?;
        let tx: Vec<Vec<u32>> = (0..model.num_docs())
            .map(|d| {
                topics::top_topics(&model.theta(d), self.cfg.pattern_topics)
                    .into_iter()
                    .map(|t| t as u32)
                    .collect()
            })
            .collect();
        let set = mining::fpgrowth(&tx, self.cfg.min_support)?;
        out.report("patterns.csv", &set.to_csv())
    }

    /// Rebuilds the topic reports and a summary from stored artifacts.
    fn report(&self, out: &mut Outputs) -> Result<()> {
        let model = self.load_model()?;
        let g = self.load_grooming()?;
        out.report(
            "assignments.csv",
            &assignments_csv(&model, &self.document_ids(&model)?),
        )?;
        out.report("topics.csv", &topics_csv(&model, self.cfg.top_terms))?;
        let mut summary = String::from("metric,value\n");
        let _ = writeln!(summary, "documents,{}", g.documents);
        let _ = writeln!(summary, "topics,{}", model.k());
        let _ = writeln!(summary, "grooming_topic,{}", g.topic.topic);
        let _ = writeln!(summary, "grooming_margin,{:.6}", g.topic.margin);
        let _ = writeln!(summary, "grooming_documents,{}", g.dominant);
        let _ = writeln!(summary, "grooming_share,{:.6}", g.share);
        if let Ok(p) = self.require("mdi.json", Stage::Mdi) {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let mdi: ImportanceReport = serde_json::from_str(&text)
                .map_err(|e| Error::format("mdi.json", e.to_string()))?;
            if let Some(&top) = mdi.ranking.first() {
                let _ = writeln!(summary, "top_feature,{}", mdi.features[top]);
                let _ = writeln!(summary, "top_feature_mdi,{:.6}", mdi.importances[top]);
            }
        }
        out.report("summary.csv", &summary)
    }
}

/// Files written by one stage with their digests, in write order.
struct Outputs<'r, 'a> {
    run: &'r Run<'a>,
    written: Vec<(String, String)>,
}

impl<'r, 'a> Outputs<'r, 'a> {
    fn new(run: &'r Run<'a>) -> Self {
        Outputs {
            run,
            written: Vec::new(),
        }
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.written.push((name.to_string(), sha256_hex(bytes)));
    }

    fn artifact(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.run.artifact(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.record(&format!("{ARTIFACTS}/{name}"), bytes);
        Ok(())
    }

    fn report(&mut self, name: &str, text: &str) -> Result<()> {
        self.run.write_root(name, text.as_bytes())?;
        self.record(name, text.as_bytes());
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::format("json", e.to_string()))
}

fn to_json_pretty<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::format("json", e.to_string()))
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&to_json(it)?);
        out.push('\n');
    }
    Ok(out)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(what, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

fn cdf_csv(values: &[f64]) -> Result<String> {
    let mut out = String::from("value,fraction\n");
    for (v, p) in corpus::empirical_cdf(values)?.points {
        let _ = writeln!(out, "{v},{p:.6}");
    }
    Ok(out)
}

/// `broadcast_id,t1,p1,t2,p2,t3,p3`; fewer columns are filled when k < 3.
pub fn assignments_csv(model: &TopicModel, ids: &[String]) -> String {
    let mut out = String::from("broadcast_id,t1,p1,t2,p2,t3,p3\n");
    for (d, id) in ids.iter().enumerate() {
        let theta = model.theta(d);
        out.push_str(&csv_field(id));
        let top = topics::top3_topics(&theta);
        for i in 0..3 {
            match top.get(i) {
                Some(&t) => {
                    let _ = write!(out, ",{t},{:.6}", theta[t]);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// `topic,rank,term,relevance,doc_count` with λ = 1.
pub fn topics_csv(model: &TopicModel, n: usize) -> String {
    let mut out = String::from("topic,rank,term,relevance,doc_count\n");
    for s in topics::topic_report(model, n, 1.0) {
        for (rank, (term, rel)) in s.terms.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{rel:.6},{}",
                s.topic,
                rank + 1,
                csv_field(term),
                s.doc_count
            );
        }
    }
    out
}

/// Loads the config, applies overrides and runs one subcommand.
pub fn run(stage: Stage, config: &Path, overrides: &[String]) -> Result<PathBuf> {
    let mut file = ConfigFile::load(config)?;
    let mut problems = Vec::new();
    for o in overrides {
        if let Err(e) = file.set(o) {
            problems.push(e.to_string());
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let cfg = RunConfig::from_file(&file)?;
    let run = Run::new(&file, &cfg)?;
    run.execute(stage)?;
    Ok(run.dir().to_path_buf())
}
