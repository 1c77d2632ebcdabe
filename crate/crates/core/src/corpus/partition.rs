//! Source libraries, partition recipes and the dataset manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labeler::{detect_speech_start_sample, StartDetectorConfig};
use super::mix::{crest_factor, duration_to_samples, mix, speech_onset, white_noise, Mixed, SPEECH_SECTION_SAMPLES};
use super::wav::load_wav;
use super::CorpusError;
use crate::afe::{AudioClip, SAMPLE_RATE};

pub const TEST_PHRASES: [&str; 5] = ["cat", "five", "no", "seven", "wow"];
pub const TEST_NOISES: [&str; 5] = ["Rain_City", "Traffic", "Metro", "Birds_Park", "White"];
/// Test noise rendered from a seeded Gaussian instead of a file.
pub const WHITE: &str = "White";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Partition::Train => 1,
            Partition::Val => 2,
            Partition::Test => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Noise,
    Speech,
}

/// One manifest row: everything needed to re-render an example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecipe {
    pub id: String,
    pub partition: Partition,
    pub kind: ExampleKind,
    pub noise: String,
    pub noise_offset: usize,
    pub duration_samples: usize,
    pub noise_level_db: f64,
    pub phrase: Option<String>,
    pub speech_file: Option<String>,
    pub speech_start_sample: Option<usize>,
    pub speech_level_db: Option<f64>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl ExampleRecipe {
    pub fn is_speech(&self) -> bool {
        self.kind == ExampleKind::Speech
    }

    pub fn duration_secs(&self) -> f64 {
        self.duration_samples as f64 / SAMPLE_RATE as f64
    }

    /// First speech sample of the rendered clip.
    pub fn start_sample(&self) -> Option<usize> {
        self.is_speech().then(|| self.duration_samples - SPEECH_SECTION_SAMPLES)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeechSource {
    pub phrase: String,
    /// Path relative to the speech directory, `/`-separated.
    pub file: String,
    pub clip: AudioClip,
    pub start_sample: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSource {
    pub name: String,
    pub clip: AudioClip,
    pub crest_db: f64,
}

/// Decoded noise recordings and labelled speech commands.
#[derive(Clone, Debug, Default)]
pub struct SourceLibrary {
    pub noises: BTreeMap<String, NoiseSource>,
    pub speech: BTreeMap<String, Vec<SpeechSource>>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::MissingDir(dir.to_path_buf()));
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    out.sort();
    Ok(out)
}

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

impl SourceLibrary {
    /// Loads `noise_dir/*.wav` (named by file stem) and
    /// `speech_dir/<phrase>/*.wav`. Speech files without a detectable
    /// start or with less than 300 ms after it are skipped with a warning.
    pub fn load(noise_dir: &Path, speech_dir: &Path, detector: &StartDetectorConfig) -> Result<Self, CorpusError> {
        let mut lib = SourceLibrary::default();
        for path in sorted_entries(noise_dir)?.into_iter().filter(|p| is_wav(p)) {
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            let clip = load_wav(&path)?;
            let crest_db = crest_factor(&clip).unwrap_or(f64::NEG_INFINITY);
            lib.noises.insert(name.clone(), NoiseSource { name, clip, crest_db });
        }
        for dir in sorted_entries(speech_dir)?.into_iter().filter(|p| p.is_dir()) {
            let phrase = dir.file_name().unwrap().to_string_lossy().into_owned();
            let mut items = Vec::new();
            for path in sorted_entries(&dir)?.into_iter().filter(|p| is_wav(p)) {
                let clip = load_wav(&path)?;
                let file = format!("{phrase}/{}", path.file_name().unwrap().to_string_lossy());
                match detect_speech_start_sample(&clip, detector) {
                    Ok(start) if start + SPEECH_SECTION_SAMPLES <= clip.len() => {
                        items.push(SpeechSource { phrase: phrase.clone(), file, clip, start_sample: start })
                    }
                    Ok(_) => log::warn!("{file}: less than 300 ms after the speech start, skipped"),
                    Err(e) => log::warn!("{file}: {e}, skipped"),
                }
            }
            if !items.is_empty() {
                lib.speech.insert(phrase, items);
            }
        }
        Ok(lib)
    }

    pub fn speech_file(&self, file: &str) -> Option<&SpeechSource> {
        let phrase = file.split('/').next()?;
        self.speech.get(phrase)?.iter().find(|s| s.file == file)
    }
}

/// Recipe for the three partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionSpec {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Share of speech examples in every partition.
    pub speech_fraction: f64,
    pub train_duration_s: [f64; 2],
    pub test_duration_s: [f64; 2],
    pub noise_level_db: [f64; 2],
    pub snr_db: [f64; 2],
    pub speech_level_bounds_db: [f64; 2],
    pub test_noise_levels_db: Vec<f64>,
    pub test_speech_levels_db: Vec<f64>,
    pub test_snrs_db: Vec<f64>,
    pub test_phrases: Vec<String>,
    pub test_noises: Vec<String>,
    /// Restricts the test set to some of the test noises.
    pub test_noise_subset: Option<Vec<String>>,
    pub min_noise_secs: f64,
    /// Training noises need a crest factor strictly above this.
    pub min_crest_db: f64,
    /// Every n-th utterance of each training phrase goes to validation.
    pub val_speech_every: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            train_count: 400,
            val_count: 150,
            test_count: 600,
            speech_fraction: 0.5,
            train_duration_s: [1.0, 5.0],
            test_duration_s: [3.0, 10.0],
            noise_level_db: [-50.0, -30.0],
            snr_db: [9.0, 25.0],
            speech_level_bounds_db: [-46.0, -14.0],
            test_noise_levels_db: vec![-50.0, -40.0, -30.0],
            test_speech_levels_db: vec![-40.0, -30.0, -20.0],
            test_snrs_db: vec![10.0, 20.0],
            test_phrases: TEST_PHRASES.iter().map(|s| s.to_string()).collect(),
            test_noises: TEST_NOISES.iter().map(|s| s.to_string()).collect(),
            test_noise_subset: None,
            min_noise_secs: 30.0,
            min_crest_db: 25.0,
            val_speech_every: 5,
        }
    }
}

impl PartitionSpec {
    /// Valid (noise, speech) level pairs of the test grid.
    pub fn test_level_pairs(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &snr in &self.test_snrs_db {
            for &n in &self.test_noise_levels_db {
                for &s in &self.test_speech_levels_db {
                    if (s - n - snr).abs() < 1e-9 {
                        out.push((n, s));
                    }
                }
            }
        }
        out
    }

    pub fn active_test_noises(&self) -> Vec<String> {
        match &self.test_noise_subset {
            Some(sub) => self.test_noises.iter().filter(|n| sub.contains(n)).cloned().collect(),
            None => self.test_noises.clone(),
        }
    }

    /// Noise names admitted for training and validation.
    pub fn training_noises(&self, lib: &SourceLibrary) -> Vec<String> {
        lib.noises
            .values()
            .filter(|n| !self.test_noises.contains(&n.name))
            .filter(|n| n.clip.duration_secs() > self.min_noise_secs && n.crest_db > self.min_crest_db)
            .map(|n| n.name.clone())
            .collect()
    }

    pub fn training_phrases(&self, lib: &SourceLibrary) -> Vec<String> {
        lib.speech.keys().filter(|p| !self.test_phrases.contains(p)).cloned().collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partitions {
    pub train: Vec<ExampleRecipe>,
    pub val: Vec<ExampleRecipe>,
    pub test: Vec<ExampleRecipe>,
}

impl Partitions {
    pub fn get(&self, p: Partition) -> &[ExampleRecipe] {
        match p {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }
}

/// Per-example seed: the root seed XOR the partition tag and index.
pub fn example_seed(root: u64, partition: Partition, index: usize) -> u64 {
    root ^ (partition.tag() << 48) ^ index as u64
}

fn is_speech_slot(i: usize, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn noise_offset(rng: &mut ChaCha8Rng, lib: &SourceLibrary, noise: &str, n: usize) -> Result<usize, CorpusError> {
    if noise == WHITE {
        return Ok(0);
    }
    let len = lib.noises[noise].clip.len();
    if len < n {
        return Err(CorpusError::NoiseTooShort { have: len, need: n });
    }
    Ok(rng.gen_range(0..=len - n))
}

/// Builds train, validation and test recipes. Deterministic given `seed`.
pub fn build_partitions(spec: &PartitionSpec, lib: &SourceLibrary, seed: u64) -> Result<Partitions, CorpusError> {
    let train_noises = spec.training_noises(lib);
    let train_phrases = spec.training_phrases(lib);
    let test_noises = spec.active_test_noises();
    let mut shortfalls = Vec::new();
    if train_noises.is_empty() {
        shortfalls.push(format!(
            "no training noise longer than {} s with crest factor above {} dB",
            spec.min_noise_secs, spec.min_crest_db
        ));
    }
    if train_phrases.is_empty() {
        shortfalls.push("no training phrases outside the test phrase list".to_string());
    }
    for n in &test_noises {
        if n != WHITE && !lib.noises.contains_key(n) {
            shortfalls.push(format!("test noise {n} missing"));
        }
    }
    for p in &spec.test_phrases {
        if !lib.speech.contains_key(p) {
            shortfalls.push(format!("test phrase {p} missing"));
        }
    }
    if test_noises.is_empty() {
        shortfalls.push("test noise subset selects nothing".to_string());
    }
    let every = spec.val_speech_every.max(2);
    let mut train_speech = Vec::new();
    let mut val_speech = Vec::new();
    for p in &train_phrases {
        for (i, s) in lib.speech[p].iter().enumerate() {
            if i % every == every - 1 {
                val_speech.push(s);
            } else {
                train_speech.push(s);
            }
        }
    }
    if !train_phrases.is_empty() && (train_speech.is_empty() || val_speech.is_empty()) {
        shortfalls.push("too few training utterances to hold some out for validation".to_string());
    }
    if !shortfalls.is_empty() {
        return Err(CorpusError::Shortfall(shortfalls));
    }

    let train_like = |partition: Partition, count: usize, speech_pool: &[&SpeechSource]| {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let seed = example_seed(seed, partition, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = duration_to_samples(uniform(&mut rng, spec.train_duration_s));
            let noise = train_noises.choose(&mut rng).unwrap().clone();
            let noise_offset = noise_offset(&mut rng, lib, &noise, n)?;
            let noise_level_db = uniform(&mut rng, spec.noise_level_db);
            let mut r = ExampleRecipe {
                id: format!("{}-{i:05}", partition.name()),
                partition,
                kind: ExampleKind::Noise,
                noise,
                noise_offset,
                duration_samples: n,
                noise_level_db,
                phrase: None,
                speech_file: None,
                speech_start_sample: None,
                speech_level_db: None,
                snr_db: None,
                seed,
            };
            if is_speech_slot(i, spec.speech_fraction) {
                let [lo, hi] = spec.speech_level_bounds_db;
                let mut tries = 0;
                let snr = loop {
                    let snr = uniform(&mut rng, spec.snr_db);
                    if (lo..=hi).contains(&(noise_level_db + snr)) {
                        break snr;
                    }
                    tries += 1;
                    if tries > 10_000 {
                        return Err(CorpusError::Config("no SNR keeps the speech level inside its bounds".into()));
                    }
                };
                let src = speech_pool.choose(&mut rng).unwrap();
                r.kind = ExampleKind::Speech;
                r.phrase = Some(src.phrase.clone());
                r.speech_file = Some(src.file.clone());
                r.speech_start_sample = Some(src.start_sample);
                r.speech_level_db = Some(noise_level_db + snr);
                r.snr_db = Some(snr);
            }
            out.push(r);
        }
        Ok::<_, CorpusError>(out)
    };
    let train = train_like(Partition::Train, spec.train_count, &train_speech)?;
    let val = train_like(Partition::Val, spec.val_count, &val_speech)?;

    let pairs = spec.test_level_pairs();
    if pairs.is_empty() {
        return Err(CorpusError::Config("test level grid has no valid (noise, speech) pair".into()));
    }
    let mut speech_grid = Vec::new();
    for noise in &test_noises {
        for phrase in &spec.test_phrases {
            for &(n, s) in &pairs {
                speech_grid.push((noise.clone(), Some(phrase.clone()), n, Some(s)));
            }
        }
    }
    let mut noise_grid = Vec::new();
    for noise in &test_noises {
        for &n in &spec.test_noise_levels_db {
            noise_grid.push((noise.clone(), None, n, None));
        }
    }
    let (mut si, mut ni) = (0usize, 0usize);
    let mut test = Vec::with_capacity(spec.test_count);
    for i in 0..spec.test_count {
        let seed = example_seed(seed, Partition::Test, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let speech = is_speech_slot(i, spec.speech_fraction);
        let (noise, phrase, noise_level_db, speech_level) = if speech {
            si += 1;
            speech_grid[(si - 1) % speech_grid.len()].clone()
        } else {
            ni += 1;
            noise_grid[(ni - 1) % noise_grid.len()].clone()
        };
        let n = duration_to_samples(uniform(&mut rng, spec.test_duration_s));
        let noise_offset = noise_offset(&mut rng, lib, &noise, n)?;
        let mut r = ExampleRecipe {
            id: format!("test-{i:05}"),
            partition: Partition::Test,
            kind: ExampleKind::Noise,
            noise,
            noise_offset,
            duration_samples: n,
            noise_level_db,
            phrase: None,
            speech_file: None,
            speech_start_sample: None,
            speech_level_db: None,
            snr_db: None,
            seed,
        };
        if let (Some(phrase), Some(level)) = (phrase, speech_level) {
            let src = lib.speech[&phrase].choose(&mut rng).unwrap();
            r.kind = ExampleKind::Speech;
            r.speech_file = Some(src.file.clone());
            r.speech_start_sample = Some(src.start_sample);
            r.phrase = Some(phrase);
            r.speech_level_db = Some(level);
            r.snr_db = Some(level - noise_level_db);
        }
        test.push(r);
    }
    Ok(Partitions { train, val, test })
}

/// Renders a recipe. Rendering is a pure function of the recipe and the
/// source files.
pub fn render(recipe: &ExampleRecipe, lib: &SourceLibrary) -> Result<Mixed, CorpusError> {
    let n = recipe.duration_samples;
    let white;
    let section: &[f64] = if recipe.noise == WHITE {
        white = white_noise(n, recipe.seed);
        &white
    } else {
        let src = lib.noises.get(&recipe.noise).ok_or_else(|| CorpusError::MissingSource(recipe.noise.clone()))?;
        src.clip
            .samples
            .get(recipe.noise_offset..recipe.noise_offset + n)
            .ok_or(CorpusError::NoiseTooShort { have: src.clip.len(), need: recipe.noise_offset + n })?
    };
    let onset = match recipe.kind {
        ExampleKind::Noise => None,
        ExampleKind::Speech => {
            let file = recipe
                .speech_file
                .as_deref()
                .ok_or_else(|| CorpusError::Manifest(format!("{}: no speech file", recipe.id)))?;
            let src = lib.speech_file(file).ok_or_else(|| CorpusError::MissingSource(file.to_string()))?;
            let start = recipe.speech_start_sample.unwrap_or(src.start_sample);
            let level = recipe
                .speech_level_db
                .ok_or_else(|| CorpusError::Manifest(format!("{}: no speech level", recipe.id)))?;
            Some((speech_onset(&src.clip, start)?, level))
        }
    };
    mix(section, recipe.noise_level_db, onset)
}

pub fn write_manifest(path: &Path, recipes: &[ExampleRecipe]) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in recipes {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ExampleRecipe>, CorpusError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<ExampleRecipe>, _>>()?;
    Ok(rows)
}
