use serde::{Deserialize, Serialize};

use super::{EvalError, ScoredExample, FRAME_RATE, REFRACTORY_FRAMES};

/// Trigger frames of a score sequence. A trigger fires at the first frame
/// whose score reaches `threshold`; frames closer than the refractory
/// window to it are ignored, then detection re-arms.
pub fn detect(scores: &[f64], threshold: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut armed_at = 0;
    for (t, &s) in scores.iter().enumerate() {
        if t >= armed_at && s >= threshold {
            out.push(t);
            armed_at = t + REFRACTORY_FRAMES;
        }
    }
    out
}

/// Triggers of one example in seconds from the clip start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: String,
    pub trigger_times: Vec<f64>,
}

/// Detections for a set of examples. On speech examples the detector is
/// armed at the labelled start, so earlier activity neither detects the
/// command nor blocks it.
pub fn detect_all(examples: &[ScoredExample], threshold: f64) -> Vec<Detection> {
    examples
        .iter()
        .map(|ex| {
            let from = ex.start_frame.unwrap_or(0);
            let frames = detect(&ex.scores[from.min(ex.scores.len())..], threshold);
            Detection {
                id: ex.id.clone(),
                trigger_times: frames.iter().map(|f| (f + from) as f64 / FRAME_RATE).collect(),
            }
        })
        .collect()
}

fn paired<'a>(
    examples: &'a [ScoredExample],
    detections: &'a [Detection],
) -> Result<impl Iterator<Item = (&'a ScoredExample, &'a Detection)>, EvalError> {
    if examples.len() != detections.len() || examples.iter().zip(detections).any(|(e, d)| e.id != d.id) {
        return Err(EvalError::Mismatch);
    }
    Ok(examples.iter().zip(detections))
}

fn hit_time(ex: &ScoredExample, det: &Detection) -> Option<f64> {
    let start = ex.start_time()?;
    det.trigger_times.iter().copied().find(|&t| t >= start && t <= ex.duration_s)
}

/// Share of speech examples with no trigger in `[start, clip end]`.
pub fn compute_ntr(examples: &[ScoredExample], detections: &[Detection]) -> Result<f64, EvalError> {
    let (mut total, mut misses) = (0usize, 0usize);
    for (ex, det) in paired(examples, detections)? {
        if ex.is_speech() {
            total += 1;
            if hit_time(ex, det).is_none() {
                misses += 1;
            }
        }
    }
    if total == 0 {
        return Err(EvalError::NoSpeech);
    }
    Ok(misses as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtrStats {
    pub triggers: usize,
    pub hours: f64,
    pub per_hour: f64,
}

/// False triggers per hour over the noise-only examples.
pub fn compute_ftr(examples: &[ScoredExample], detections: &[Detection]) -> Result<FtrStats, EvalError> {
    let (mut triggers, mut secs) = (0usize, 0.0);
    for (ex, det) in paired(examples, detections)? {
        if !ex.is_speech() {
            triggers += det.trigger_times.len();
            secs += ex.duration_s;
        }
    }
    if secs <= 0.0 {
        return Err(EvalError::NoNoise);
    }
    let hours = secs / 3600.0;
    Ok(FtrStats { triggers, hours, per_hour: triggers as f64 / hours })
}

/// Share of time awake when every false trigger keeps the system on for
/// the refractory window.
pub fn duty_cycle(ftr_per_hour: f64) -> f64 {
    ftr_per_hour * (REFRACTORY_FRAMES as f64 / FRAME_RATE) / 3600.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub phrase: String,
    pub count: usize,
    pub median_s: f64,
    pub q1_s: f64,
    pub q3_s: f64,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Latency from the labelled start to the first in-window trigger, per
/// phrase. Missed examples are left out.
pub fn compute_latency(examples: &[ScoredExample], detections: &[Detection]) -> Result<Vec<LatencyStats>, EvalError> {
    let mut by_phrase: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for (ex, det) in paired(examples, detections)? {
        if let (Some(t), Some(start)) = (hit_time(ex, det), ex.start_time()) {
            let phrase = ex.phrase.clone().unwrap_or_default();
            by_phrase.entry(phrase).or_default().push(t - start);
        }
    }
    Ok(by_phrase
        .into_iter()
        .map(|(phrase, mut v)| {
            v.sort_by(f64::total_cmp);
            LatencyStats {
                phrase,
                count: v.len(),
                median_s: quantile(&v, 0.5),
                q1_s: quantile(&v, 0.25),
                q3_s: quantile(&v, 0.75),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::ScoredExample;
    use proptest::prelude::*;

    fn crossings(len: usize, at: &[usize]) -> Vec<f64> {
        let mut s = vec![-1.0; len];
        for &a in at {
            s[a] = 1.0;
        }
        s
    }

    #[test]
    fn refractory_examples() {
        assert!(detect(&vec![-2.0; 100], 0.0).is_empty());
        assert_eq!(detect(&crossings(100, &[10, 30]), 0.0), vec![10]);
        assert_eq!(detect(&crossings(100, &[10, 70]), 0.0), vec![10, 70]);
        // exactly 500 ms later is allowed again
        assert_eq!(detect(&crossings(100, &[10, 60]), 0.0), vec![10, 60]);
        // a sustained score re-triggers every 500 ms
        assert_eq!(detect(&vec![1.0; 120], 0.0), vec![0, 50, 100]);
    }

    fn speech(id: &str, scores: Vec<f64>, start: usize, phrase: &str) -> ScoredExample {
        let n = scores.len();
        ScoredExample::speech(id, "White", phrase, scores, n as f64 / FRAME_RATE, start)
    }

    #[test]
    fn ntr_window_rule() {
        let hit = speech("a", crossings(200, &[150]), 100, "cat");
        let early = speech("b", crossings(200, &[50]), 100, "cat");
        let exs = vec![hit, early];
        let d = detect_all(&exs, 0.0);
        assert_eq!(compute_ntr(&exs, &d).unwrap(), 0.5);
        // activity just before the start does not mask a hit right after it
        let masked = speech("c", crossings(200, &[95, 105]), 100, "cat");
        let d = detect_all(std::slice::from_ref(&masked), 0.0);
        assert_eq!(compute_ntr(std::slice::from_ref(&masked), &d).unwrap(), 0.0);
    }

    #[test]
    fn ntr_ratio_and_empty() {
        let mut exs = Vec::new();
        for i in 0..100 {
            let at = if i < 3 { vec![] } else { vec![120] };
            exs.push(speech(&format!("s{i}"), crossings(200, &at), 100, "no"));
        }
        let d = detect_all(&exs, 0.0);
        assert!((compute_ntr(&exs, &d).unwrap() - 0.03).abs() < 1e-12);
        assert!(matches!(compute_ntr(&[], &[]), Err(EvalError::NoSpeech)));
    }

    #[test]
    fn ftr_examples() {
        // 3 triggers over half an hour
        let n = 180_000;
        let ex = ScoredExample::noise("n", "Metro", crossings(n, &[10, 1000, 5000]), n as f64 / FRAME_RATE);
        let exs = vec![ex];
        let d = detect_all(&exs, 0.0);
        let f = compute_ftr(&exs, &d).unwrap();
        assert_eq!(f.triggers, 3);
        assert!((f.per_hour - 6.0).abs() < 1e-9);
        let d = detect_all(&exs, 2.0);
        assert_eq!(compute_ftr(&exs, &d).unwrap().per_hour, 0.0);
        assert!((duty_cycle(72.0) - 0.01).abs() < 1e-15);
        assert!(matches!(compute_ftr(&[], &[]), Err(EvalError::NoNoise)));
    }

    #[test]
    fn latency_examples() {
        let exs = vec![
            speech("a", crossings(300, &[105]), 100, "wow"),
            speech("b", crossings(300, &[108]), 100, "wow"),
            speech("c", crossings(300, &[120]), 100, "wow"),
            speech("d", crossings(300, &[]), 100, "wow"),
        ];
        let d = detect_all(&exs, 0.0);
        let l = compute_latency(&exs, &d).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].count, 3);
        assert!((l[0].median_s - 0.08).abs() < 1e-12);
        assert!(l[0].q1_s >= 0.0);
    }

    proptest! {
        #[test]
        fn triggers_respect_refractory(scores in proptest::collection::vec(-3.0f64..3.0, 0..600), thr in -3.0f64..3.0) {
            let t = detect(&scores, thr);
            for w in t.windows(2) {
                prop_assert!(w[1] >= w[0] + REFRACTORY_FRAMES);
            }
            for &f in &t {
                prop_assert!(scores[f] >= thr);
            }
            let secs: Vec<f64> = t.iter().map(|&f| f as f64 / FRAME_RATE).collect();
            for w in secs.windows(2) {
                prop_assert!(w[1] - w[0] >= 0.5 - 1e-12);
            }
        }

        #[test]
        fn lower_threshold_never_loses_triggers(scores in proptest::collection::vec(-3.0f64..3.0, 0..600), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(detect(&scores, lo).len() >= detect(&scores, hi).len());
        }
    }
}
