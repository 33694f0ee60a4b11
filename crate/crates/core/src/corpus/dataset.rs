//! Corpus assembly: rosters, utterance pools, per-split example
//! generation, WAV files, and JSON manifests. Everything derives from one
//! corpus seed, and each example derives its own stream from (seed, split,
//! index), so regeneration — serial or parallel — is byte-identical.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::mixture::{make_mixture, sample_snr_db, MixtureExample, VadClass};
use crate::corpus::render::{render_utterance, Span, UtteranceRecord, HOP};
use crate::corpus::script::sample_script;
use crate::corpus::speaker::{sample_speaker, SpeakerProfile};
use crate::corpus::wav::{read_wav_f64, write_wav_f64, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Acoustic condition: speech only, or speech plus background noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clean,
    Both,
}

impl Condition {
    pub fn noise_flag(self) -> bool {
        matches!(self, Condition::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Clean => "clean",
            Condition::Both => "both",
        }
    }
}

/// The four dataset splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    TestClosed,
    TestOpen,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::TestClosed, Split::TestOpen];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::TestClosed => "test_closed",
            Split::TestOpen => "test_open",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::TestClosed => 2,
            Split::TestOpen => 3,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test_closed" => Ok(Split::TestClosed),
            "test_open" => Ok(Split::TestOpen),
            other => Err(Error::config(format!(
                "unknown split '{other}' (expected train, dev, test_closed, test_open)"
            ))),
        }
    }
}

fn default_train_speakers() -> usize {
    32
}
fn default_open_speakers() -> usize {
    8
}
fn default_utts_per_speaker() -> usize {
    12
}
fn default_n_train() -> usize {
    500
}
fn default_n_dev() -> usize {
    100
}
fn default_n_test() -> usize {
    100
}
fn default_condition() -> Condition {
    Condition::Clean
}

/// Generation parameters for one corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub corpus_seed: u64,
    #[serde(default = "default_train_speakers")]
    pub n_train_speakers: usize,
    #[serde(default = "default_open_speakers")]
    pub n_open_speakers: usize,
    /// Utterances rendered per speaker; the last four are reserved two for
    /// dev and two for test so train/test utterance sets never overlap.
    #[serde(default = "default_utts_per_speaker")]
    pub n_utts_per_speaker: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_dev")]
    pub n_dev: usize,
    /// Examples in each of test_closed and test_open.
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_condition")]
    pub condition: Condition,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_speakers < 2 || self.n_open_speakers < 2 {
            return Err(Error::config(
                "need at least 2 train and 2 open speakers to form mixtures",
            ));
        }
        if self.n_utts_per_speaker < 6 {
            return Err(Error::config(
                "need at least 6 utterances per speaker (2 test + 2 dev + 2 train)",
            ));
        }
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return Err(Error::config("example counts must be positive"));
        }
        Ok(())
    }

    fn train_slice(&self) -> std::ops::Range<usize> {
        0..self.n_utts_per_speaker - 4
    }

    fn dev_slice(&self) -> std::ops::Range<usize> {
        self.n_utts_per_speaker - 4..self.n_utts_per_speaker - 2
    }

    fn test_slice(&self) -> std::ops::Range<usize> {
        self.n_utts_per_speaker - 2..self.n_utts_per_speaker
    }

    fn utt_slice(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => self.train_slice(),
            Split::Dev => self.dev_slice(),
            Split::TestClosed | Split::TestOpen => self.test_slice(),
        }
    }

    fn example_count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Dev => self.n_dev,
            Split::TestClosed | Split::TestOpen => self.n_test,
        }
    }
}

/// Roster line stored in manifests: identity plus the two scalar voice
/// coordinates downstream tools plot and validate against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RosterEntry {
    pub speaker_id: usize,
    pub f0: f64,
    pub spectral_tilt: f64,
}

/// One example as recorded in a manifest; paths are relative to the
/// corpus root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestExample {
    pub id: String,
    pub mixture_wav: String,
    /// Noise-free two-speaker rendition of the same mixture; present only
    /// when the corpus was generated with background noise, so noisy
    /// corpora can also be consumed in the clean condition.
    #[serde(default)]
    pub mixture_clean_wav: Option<String>,
    pub clean_wav: String,
    /// Fixed enrollment utterance (the one-to-one test assignment; for
    /// train it is the default used when per-epoch resampling is off).
    pub enrollment_wav: String,
    /// Every admissible enrollment for this example: other utterances of
    /// the target speaker from the same split slice.
    pub enrollment_pool: Vec<String>,
    pub target_speaker: usize,
    pub interferer_speaker: usize,
    pub snr_db: f64,
    pub noise: bool,
    pub transcript: Vec<usize>,
    pub target_alignment: Vec<Span>,
    /// Per-frame class indices (0 = ns, 1 = tss, 2 = ntss).
    pub vad_labels: Vec<u8>,
}

/// Per-split listing written as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub condition: Condition,
    pub corpus_seed: u64,
    pub sample_rate: u32,
    pub hop: usize,
    /// Speakers whose utterances appear as targets in this split.
    pub roster: Vec<RosterEntry>,
    /// Speakers seen anywhere in training (the closed-set universe the
    /// speaker-code front-end indexes into).
    pub train_roster: Vec<usize>,
    pub examples: Vec<ManifestExample>,
}

impl DatasetManifest {
    pub fn vad_classes(&self, example: &ManifestExample) -> Result<Vec<VadClass>> {
        example
            .vad_labels
            .iter()
            .map(|&v| VadClass::from_index(v as usize))
            .collect()
    }
}

fn utt_rel_path(speaker_id: usize, utt_index: usize) -> String {
    format!("utts/spk{speaker_id:03}/utt{utt_index:02}.wav")
}

struct Pools {
    profiles: Vec<SpeakerProfile>,
    /// utterances[speaker_id][utt_index]
    utterances: Vec<Vec<UtteranceRecord>>,
}

fn render_pools(config: &CorpusConfig) -> Result<Pools> {
    let n_speakers = config.n_train_speakers + config.n_open_speakers;
    let mut profiles = Vec::with_capacity(n_speakers);
    let mut utterances = Vec::with_capacity(n_speakers);
    for spk in 0..n_speakers {
        let profile = sample_speaker(config.corpus_seed, spk);
        let mut utts = Vec::with_capacity(config.n_utts_per_speaker);
        for utt in 0..config.n_utts_per_speaker {
            let script = sample_script(config.corpus_seed, spk, utt);
            utts.push(render_utterance(&profile, &script, utt)?);
        }
        profiles.push(profile);
        utterances.push(utts);
    }
    Ok(Pools {
        profiles,
        utterances,
    })
}

/// Build the full corpus under `root`: utterance library, per-split
/// example WAVs, and one manifest per split. Returns the manifest paths
/// in [`Split::ALL`] order.
pub fn build_dataset(config: &CorpusConfig, root: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let pools = render_pools(config)?;

    fs::create_dir_all(root).map_err(|e| Error::io_path(root, e))?;
    let config_path = root.join("config.json");
    write_json(&config_path, config)?;

    // Utterance library: every speaker, every utterance, peak-0.5 audio.
    for (spk, utts) in pools.utterances.iter().enumerate() {
        let dir = root.join(format!("utts/spk{spk:03}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io_path(&dir, e))?;
        for utt in utts {
            let path = root.join(utt_rel_path(spk, utt.utt_index));
            write_wav_f64(&path, &utt.waveform, SAMPLE_RATE)?;
        }
    }

    let train_roster: Vec<usize> = (0..config.n_train_speakers).collect();
    let open_roster: Vec<usize> = (config.n_train_speakers
        ..config.n_train_speakers + config.n_open_speakers)
        .collect();
    if train_roster.iter().any(|id| open_roster.contains(id)) {
        return Err(Error::contract(
            "open speaker roster overlaps the train roster",
        ));
    }

    let mut manifest_paths = Vec::new();
    for split in Split::ALL {
        let roster_ids: &[usize] = match split {
            Split::TestOpen => &open_roster,
            _ => &train_roster,
        };
        let dir = root.join(split.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io_path(&dir, e))?;
        let mut examples = Vec::new();
        for ex in 0..config.example_count(split) {
            let (example, manifest_entry) =
                build_example(config, &pools, split, roster_ids, ex)?;
            let mix_path = root.join(&manifest_entry.mixture_wav);
            let clean_path = root.join(&manifest_entry.clean_wav);
            write_wav_f64(&mix_path, &example.mixture, SAMPLE_RATE)?;
            write_wav_f64(&clean_path, &example.target_clean, SAMPLE_RATE)?;
            if let Some(rel) = &manifest_entry.mixture_clean_wav {
                // Components were quantized before integer summation, so
                // the noise-free rendition is their exact sample-wise sum.
                let speech_only: Vec<f64> = example
                    .target_clean
                    .iter()
                    .zip(&example.scaled_interferer)
                    .map(|(a, b)| a + b)
                    .collect();
                write_wav_f64(&root.join(rel), &speech_only, SAMPLE_RATE)?;
            }
            examples.push(manifest_entry);
        }
        let manifest = DatasetManifest {
            split,
            condition: config.condition,
            corpus_seed: config.corpus_seed,
            sample_rate: SAMPLE_RATE,
            hop: HOP,
            roster: roster_ids
                .iter()
                .map(|&id| RosterEntry {
                    speaker_id: id,
                    f0: pools.profiles[id].f0,
                    spectral_tilt: pools.profiles[id].spectral_tilt,
                })
                .collect(),
            train_roster: train_roster.clone(),
            examples,
        };
        let path = dir.join("manifest.json");
        write_json(&path, &manifest)?;
        manifest_paths.push(path);
    }
    Ok(manifest_paths)
}

/// Deterministically assemble one example. The interferer utterance (and,
/// if a speaker's whole slice fails, the interferer speaker) advances
/// until the mixture contains at least one target-speech and one
/// interferer-only frame, so the frame classifier always sees all three
/// classes.
fn build_example(
    config: &CorpusConfig,
    pools: &Pools,
    split: Split,
    roster: &[usize],
    ex: usize,
) -> Result<(MixtureExample, ManifestExample)> {
    let slice = config.utt_slice(split);
    let slice_utts: Vec<usize> = slice.collect();
    let example_seed = rng::derive_seed(
        config.corpus_seed,
        &[tag::MIXTURE, split.stream_tag(), ex as u64],
    );
    let mut r = rng::stream(
        config.corpus_seed,
        &[tag::MIXTURE, split.stream_tag(), ex as u64],
    );

    let target_spk = roster[r.random_range(0..roster.len())];
    let mut interferer_pos = r.random_range(0..roster.len() - 1);
    // Skip the target's own roster position.
    let target_pos = roster.iter().position(|&s| s == target_spk).unwrap();
    if interferer_pos >= target_pos {
        interferer_pos += 1;
    }
    let target_utt = slice_utts[r.random_range(0..slice_utts.len())];
    let interferer_utt_pick = r.random_range(0..slice_utts.len());
    let enroll_choices: Vec<usize> = slice_utts
        .iter()
        .copied()
        .filter(|&u| u != target_utt)
        .collect();
    let enrollment_utt = enroll_choices[r.random_range(0..enroll_choices.len())];
    let snr_db = sample_snr_db(&mut r);
    let noise = config.condition.noise_flag();

    let target = &pools.utterances[target_spk][target_utt];
    let enrollment = &pools.utterances[target_spk][enrollment_utt];

    // Accept the first candidate whose label track covers all classes.
    let mut chosen: Option<(MixtureExample, usize, usize)> = None;
    'search: for spk_step in 0..roster.len() - 1 {
        let pos = (interferer_pos + spk_step) % roster.len();
        let spk = roster[pos];
        if spk == target_spk {
            continue;
        }
        for utt_step in 0..slice_utts.len() {
            let utt = slice_utts[(interferer_utt_pick + utt_step) % slice_utts.len()];
            let interferer = &pools.utterances[spk][utt];
            let m = make_mixture(target, interferer, enrollment, snr_db, noise, example_seed)?;
            let has_tss = m.vad_labels.iter().any(|&l| l == VadClass::Tss);
            let has_ntss = m.vad_labels.iter().any(|&l| l == VadClass::Ntss);
            if has_tss && has_ntss {
                chosen = Some((m, spk, utt));
                break 'search;
            }
        }
    }
    let (example, interferer_spk, _interferer_utt) = chosen.ok_or_else(|| {
        Error::contract(format!(
            "split {}, example {ex}: no interferer candidate yields all three frame classes",
            split.dir_name()
        ))
    })?;

    let id = format!("{}{:04}", split_prefix(split), ex);
    let enrollment_pool: Vec<String> = enroll_choices
        .iter()
        .map(|&u| utt_rel_path(target_spk, u))
        .collect();
    let manifest = ManifestExample {
        id: id.clone(),
        mixture_wav: format!("{}/{}.mix.wav", split.dir_name(), id),
        mixture_clean_wav: example
            .noise_flag
            .then(|| format!("{}/{}.cleanmix.wav", split.dir_name(), id)),
        clean_wav: format!("{}/{}.clean.wav", split.dir_name(), id),
        enrollment_wav: utt_rel_path(target_spk, enrollment_utt),
        enrollment_pool,
        target_speaker: target_spk,
        interferer_speaker: interferer_spk,
        snr_db,
        noise,
        transcript: example.transcript.clone(),
        target_alignment: target.alignment.clone(),
        vad_labels: example.vad_labels.iter().map(|&l| l.index() as u8).collect(),
    };
    Ok((example, manifest))
}

fn split_prefix(split: Split) -> &'static str {
    match split {
        Split::Train => "tr",
        Split::Dev => "dv",
        Split::TestClosed => "tc",
        Split::TestOpen => "to",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io_path(path, e))
}

/// Read a split manifest back.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    Ok(manifest)
}

/// Audio and supervision for one example, loaded from the files a
/// manifest references.
#[derive(Debug, Clone)]
pub struct LoadedExample {
    pub id: String,
    pub mixture: Vec<f64>,
    /// Noise-free two-speaker rendition, present for noisy corpora.
    pub mixture_clean: Option<Vec<f64>>,
    pub target_clean: Vec<f64>,
    pub enrollment: Vec<f64>,
    pub enrollment_pool: Vec<String>,
    pub target_speaker: usize,
    pub interferer_speaker: usize,
    pub transcript: Vec<usize>,
    pub vad_labels: Vec<VadClass>,
    pub snr_db: f64,
    pub noise: bool,
}

impl LoadedExample {
    /// The mixture rendition a model should consume under the given
    /// acoustic condition. A noise-free corpus serves only the clean
    /// condition; a noisy corpus serves both.
    pub fn input_mixture(&self, condition: Condition) -> Result<&[f64]> {
        match condition {
            Condition::Clean => Ok(self.mixture_clean.as_deref().unwrap_or(&self.mixture)),
            Condition::Both => {
                if self.noise {
                    Ok(&self.mixture)
                } else {
                    Err(Error::contract(format!(
                        "example {} was generated without noise; regenerate the corpus with \
                         condition=both to evaluate the noisy condition",
                        self.id
                    )))
                }
            }
        }
    }
}

/// Load one example's audio. `root` is the corpus root the manifest's
/// relative paths resolve against; `enrollment_override` substitutes a
/// pool entry (per-epoch enrollment resampling).
pub fn load_example(
    root: &Path,
    manifest: &DatasetManifest,
    example: &ManifestExample,
    enrollment_override: Option<&str>,
) -> Result<LoadedExample> {
    let read = |rel: &str| -> Result<Vec<f64>> {
        let path = root.join(rel);
        let (samples, rate) = read_wav_f64(&path)?;
        if rate != manifest.sample_rate {
            return Err(Error::data_format(
                &path,
                format!("sample rate {rate} != corpus rate {}", manifest.sample_rate),
            ));
        }
        Ok(samples)
    };
    let enrollment_rel = match enrollment_override {
        Some(rel) => {
            if !example.enrollment_pool.iter().any(|p| p == rel) {
                return Err(Error::contract(format!(
                    "enrollment override '{rel}' is not in example {}'s pool",
                    example.id
                )));
            }
            rel
        }
        None => example.enrollment_wav.as_str(),
    };
    Ok(LoadedExample {
        id: example.id.clone(),
        mixture: read(&example.mixture_wav)?,
        mixture_clean: example
            .mixture_clean_wav
            .as_deref()
            .map(&read)
            .transpose()?,
        target_clean: read(&example.clean_wav)?,
        enrollment: read(enrollment_rel)?,
        enrollment_pool: example.enrollment_pool.clone(),
        target_speaker: example.target_speaker,
        interferer_speaker: example.interferer_speaker,
        transcript: example.transcript.clone(),
        vad_labels: manifest.vad_classes(example)?,
        snr_db: example.snr_db,
        noise: example.noise,
    })
}

/// Utterance keys (speaker, utterance) referenced by a manifest, both as
/// in-mixture target material and as enrollment.
pub fn referenced_utterances(manifest: &DatasetManifest) -> BTreeSet<(usize, String)> {
    let mut set = BTreeSet::new();
    for ex in &manifest.examples {
        set.insert((ex.target_speaker, ex.enrollment_wav.clone()));
        for p in &ex.enrollment_pool {
            set.insert((ex.target_speaker, p.clone()));
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(seed: u64) -> CorpusConfig {
        CorpusConfig {
            corpus_seed: seed,
            n_train_speakers: 4,
            n_open_speakers: 2,
            n_utts_per_speaker: 6,
            n_train: 6,
            n_dev: 2,
            n_test: 2,
            condition: Condition::Clean,
        }
    }

    #[test]
    fn split_contracts_hold() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(101);
        let manifests = build_dataset(&config, dir.path()).unwrap();
        let train = load_manifest(&manifests[0]).unwrap();
        let test_closed = load_manifest(&manifests[2]).unwrap();
        let test_open = load_manifest(&manifests[3]).unwrap();

        let train_ids: BTreeSet<usize> =
            train.roster.iter().map(|r| r.speaker_id).collect();
        let open_ids: BTreeSet<usize> =
            test_open.roster.iter().map(|r| r.speaker_id).collect();
        assert!(train_ids.is_disjoint(&open_ids), "open roster leaks into train");

        let closed_ids: BTreeSet<usize> =
            test_closed.examples.iter().map(|e| e.target_speaker).collect();
        assert!(closed_ids.is_subset(&train_ids));

        // No utterance file referenced by test_closed appears in train.
        let train_utts: BTreeSet<String> = train
            .examples
            .iter()
            .flat_map(|e| {
                e.enrollment_pool
                    .iter()
                    .cloned()
                    .chain([e.enrollment_wav.clone()])
            })
            .collect();
        let closed_utts: BTreeSet<String> = test_closed
            .examples
            .iter()
            .flat_map(|e| {
                e.enrollment_pool
                    .iter()
                    .cloned()
                    .chain([e.enrollment_wav.clone()])
            })
            .collect();
        assert!(train_utts.is_disjoint(&closed_utts), "utterance leakage");
    }

    #[test]
    fn every_example_has_all_three_frame_classes() {
        let dir = tempfile::tempdir().unwrap();
        let manifests = build_dataset(&tiny_config(103), dir.path()).unwrap();
        for path in &manifests {
            let m = load_manifest(path).unwrap();
            for ex in &m.examples {
                let has = |c: u8| ex.vad_labels.iter().any(|&l| l == c);
                assert!(has(1), "{}: no target-speech frames", ex.id);
                assert!(has(2), "{}: no interferer-only frames", ex.id);
            }
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        build_dataset(&tiny_config(107), dir_a.path()).unwrap();
        build_dataset(&tiny_config(107), dir_b.path()).unwrap();
        let mut files_a = walk(dir_a.path());
        let mut files_b = walk(dir_b.path());
        files_a.sort();
        files_b.sort();
        let rels = |base: &Path, v: &[PathBuf]| -> Vec<PathBuf> {
            v.iter()
                .map(|p| p.strip_prefix(base).unwrap().to_path_buf())
                .collect()
        };
        assert_eq!(rels(dir_a.path(), &files_a), rels(dir_b.path(), &files_b));
        assert!(!files_a.is_empty());
        for (a, b) in files_a.iter().zip(&files_b) {
            assert_eq!(
                fs::read(a).unwrap(),
                fs::read(b).unwrap(),
                "{} differs between runs",
                a.display()
            );
        }
    }

    #[test]
    fn loaded_examples_are_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(109);
        config.condition = Condition::Both;
        let manifests = build_dataset(&config, dir.path()).unwrap();
        let manifest = load_manifest(&manifests[0]).unwrap();
        let ex = &manifest.examples[0];
        let loaded = load_example(dir.path(), &manifest, ex, None).unwrap();
        assert_eq!(loaded.mixture.len(), loaded.target_clean.len());
        assert_eq!(loaded.mixture.len() % HOP, 0);
        assert_eq!(loaded.vad_labels.len(), loaded.mixture.len() / HOP);
        assert!(loaded.noise);
        assert!(!loaded.transcript.is_empty());
        // Enrollment override must come from the pool.
        let from_pool = loaded.enrollment_pool[0].clone();
        assert!(load_example(dir.path(), &manifest, ex, Some(&from_pool)).is_ok());
        assert!(load_example(dir.path(), &manifest, ex, Some("utts/spk999/utt00.wav")).is_err());
    }

    #[test]
    fn noisy_corpora_also_carry_an_exact_noise_free_rendition() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(111);
        config.condition = Condition::Both;
        let manifests = build_dataset(&config, dir.path()).unwrap();
        let manifest = load_manifest(&manifests[0]).unwrap();
        let ex = &manifest.examples[0];
        assert!(ex.mixture_clean_wav.is_some());
        let loaded = load_example(dir.path(), &manifest, ex, None).unwrap();
        let speech_only = loaded.mixture_clean.as_ref().unwrap();
        assert_eq!(speech_only.len(), loaded.mixture.len());
        // The noisy and noise-free renditions differ, and the clean
        // condition selects the noise-free one.
        assert!(speech_only.iter().zip(&loaded.mixture).any(|(a, b)| a != b));
        assert_eq!(
            loaded.input_mixture(Condition::Clean).unwrap(),
            speech_only.as_slice()
        );
        assert_eq!(
            loaded.input_mixture(Condition::Both).unwrap(),
            loaded.mixture.as_slice()
        );
    }

    #[test]
    fn clean_corpora_refuse_the_noisy_condition() {
        let dir = tempfile::tempdir().unwrap();
        let manifests = build_dataset(&tiny_config(113), dir.path()).unwrap();
        let manifest = load_manifest(&manifests[0]).unwrap();
        let ex = &manifest.examples[0];
        assert!(ex.mixture_clean_wav.is_none());
        let loaded = load_example(dir.path(), &manifest, ex, None).unwrap();
        assert_eq!(
            loaded.input_mixture(Condition::Clean).unwrap(),
            loaded.mixture.as_slice()
        );
        assert!(loaded.input_mixture(Condition::Both).is_err());
    }

    #[test]
    fn config_validation_rejects_degenerate_setups() {
        let mut c = tiny_config(1);
        c.n_utts_per_speaker = 5;
        assert!(c.validate().is_err());
        let mut c = tiny_config(1);
        c.n_train_speakers = 1;
        assert!(c.validate().is_err());
        let mut c = tiny_config(1);
        c.n_dev = 0;
        assert!(c.validate().is_err());
    }

    fn walk(root: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    out.push(path);
                }
            }
        }
        out
    }
}
