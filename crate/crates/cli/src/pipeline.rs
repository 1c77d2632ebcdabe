//! In-memory pipeline stages shared by the commands: rendering and
//! feature extraction, model initialisation, training per quantization
//! level and scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wus_core::afe::{extract_features, FEATURE_DIM, FRAME_SAMPLES};
use wus_core::corpus::{render, ExampleRecipe, SourceLibrary};
use wus_core::evalkit::ScoredExample;
use wus_core::models::{model_input_dim, FrameSeq, ModelParams, Network};
use wus_core::training::{freeze_level2, quantization_schedule, History, LabeledSequence};

use crate::config::{FeatureConfig, RunConfig};
use crate::error::CliError;

/// A featurised example: training view and evaluation view (no scores yet).
#[derive(Clone, Debug)]
pub struct Prepared {
    pub seq: LabeledSequence,
    pub example: ScoredExample,
}

/// Derives a stream seed from the root seed and a label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    label.bytes().fold(root ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Order-preserving map over `items` on up to `jobs` threads.
pub fn par_map<T: Sync, U: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> Result<U, CliError> + Sync,
) -> Result<Vec<U>, CliError> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<U>, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect())).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn prepare_one(recipe: &ExampleRecipe, lib: &SourceLibrary, feat: &FeatureConfig) -> Result<Prepared, CliError> {
    let mixed = render(recipe, lib)?;
    let frames = extract_features(&mixed.clip, &feat.afe).map_err(|e| CliError::Data(format!("{}: {e}", recipe.id)))?;
    let frames = FrameSeq::from_frames(&frames);
    let start = mixed.start_sample().map(|s| s / FRAME_SAMPLES);
    let seq = LabeledSequence::new(frames, start, feat.guard_frames)?;
    let duration = recipe.duration_secs();
    let example = match (start, &recipe.phrase) {
        (Some(s), Some(phrase)) => ScoredExample::speech(&recipe.id, &recipe.noise, phrase, Vec::new(), duration, s),
        (Some(_), None) => return Err(CliError::Data(format!("{}: speech example without a phrase", recipe.id))),
        (None, _) => ScoredExample::noise(&recipe.id, &recipe.noise, Vec::new(), duration),
    };
    Ok(Prepared { seq, example })
}

pub fn prepare(
    recipes: &[ExampleRecipe],
    lib: &SourceLibrary,
    feat: &FeatureConfig,
    jobs: usize,
) -> Result<Vec<Prepared>, CliError> {
    par_map(recipes, jobs, |r| prepare_one(r, lib, feat))
}

pub fn sequences(prepared: &[Prepared]) -> Vec<LabeledSequence> {
    prepared.iter().map(|p| p.seq.clone()).collect()
}

/// Level-0 initialisation drawn from the root seed.
pub fn init_params(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    let seed = derive_seed(cfg.seed()?, "init");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = cfg.model.kind;
    let mut p = ModelParams::random(kind, model_input_dim(kind, FEATURE_DIM), cfg.model.hidden_dim, &mut rng);
    p.quant.bits = cfg.quant.bits;
    p.quant.input_bits = cfg.quant.input_bits;
    Ok(p)
}

/// Produces the level-`level` model from its predecessor (`None` starts
/// level 0 from the seeded initialisation).
pub fn train_level(
    cfg: &RunConfig,
    level: u8,
    previous: Option<&ModelParams>,
    train: &[LabeledSequence],
    val: &[LabeledSequence],
) -> Result<(ModelParams, Option<History>), CliError> {
    let root = cfg.seed()?;
    let init;
    let from = match (level, previous) {
        (0, None) => {
            init = init_params(cfg)?;
            &init
        }
        (0, Some(p)) => p,
        (_, Some(p)) => p,
        (_, None) => return Err(CliError::Data(format!("level {level} needs the level-{} model", level - 1))),
    };
    if level == 2 {
        let mut p = freeze_level2(from)?;
        p.quant.input_bits = cfg.quant.input_bits;
        return Ok((p, None));
    }
    let tc = cfg.train_config(level, derive_seed(root, &format!("train-L{level}")));
    let (mut p, h) = quantization_schedule(level, from, train, val, &tc)?;
    p.quant.input_bits = cfg.quant.input_bits;
    Ok((p, h))
}

/// Per-frame logits for each example. Frames a dense model cannot score
/// yet (missing context) get `-inf`, which never triggers.
pub fn score(params: &ModelParams, prepared: &[Prepared], jobs: usize) -> Result<Vec<ScoredExample>, CliError> {
    let expected = model_input_dim(params.kind, FEATURE_DIM);
    if params.input_dim != expected {
        return Err(CliError::Data(format!(
            "model expects {}-dimensional inputs, features give {expected}",
            params.input_dim
        )));
    }
    let net = Network::new(params)?;
    par_map(prepared, jobs, |p| {
        let track = net.run_sequence(&p.seq.frames)?;
        let mut scores = vec![f64::NEG_INFINITY; track.first_frame];
        scores.extend_from_slice(&track.logits);
        Ok(ScoredExample { scores, ..p.example.clone() })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order_and_errors() {
        let v: Vec<usize> = (0..37).collect();
        for jobs in [1, 2, 5, 64] {
            assert_eq!(par_map(&v, jobs, |x| Ok(x * 2)).unwrap(), v.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
        let r = par_map(&v, 3, |&x| if x == 20 { Err(CliError::Data("x".into())) } else { Ok(x) });
        assert!(r.is_err());
    }

    #[test]
    fn seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "init"), derive_seed(1, "train-L0"));
        assert_ne!(derive_seed(1, "init"), derive_seed(2, "init"));
        assert_eq!(derive_seed(1, "init"), derive_seed(1, "init"));
    }
}
