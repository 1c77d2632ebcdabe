use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::detect::{compute_ftr, compute_latency, compute_ntr, detect_all, duty_cycle, LatencyStats};
use super::sweep::{error_curve, operating_point, CurvePoint, GridConfig, OperatingPoint};
use super::{EvalError, ScoredExample};

/// Label of the pooled row in breakdown tables.
pub const OVERALL: &str = "Overall";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub noise: String,
    pub ftr_per_hour: Option<f64>,
    pub ntr: Option<f64>,
    pub triggers: usize,
    pub noise_hours: f64,
    pub speech_examples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub speech_examples: usize,
    pub noise_examples: usize,
    pub operating: OperatingPoint,
    pub duty_cycle: f64,
    /// Per-noise rows at the operating threshold, sorted by name, followed
    /// by the pooled row.
    pub breakdown: Vec<NoiseRow>,
    pub latency: Vec<LatencyStats>,
    pub error_curve: Vec<CurvePoint>,
}

fn row(noise: &str, examples: &[&ScoredExample], threshold: f64) -> Result<NoiseRow, EvalError> {
    let owned: Vec<ScoredExample> = examples.iter().map(|e| (*e).clone()).collect();
    let d = detect_all(&owned, threshold);
    let speech = owned.iter().filter(|e| e.is_speech()).count();
    let ntr = if speech > 0 { Some(compute_ntr(&owned, &d)?) } else { None };
    let (ftr, triggers, hours) = match compute_ftr(&owned, &d) {
        Ok(f) => (Some(f.per_hour), f.triggers, f.hours),
        Err(EvalError::NoNoise) => (None, 0, 0.0),
        Err(e) => return Err(e),
    };
    Ok(NoiseRow {
        noise: noise.to_string(),
        ftr_per_hour: ftr,
        ntr,
        triggers,
        noise_hours: hours,
        speech_examples: speech,
    })
}

/// Full evaluation: error curve over the grid, operating point at
/// `target_ntr` (pooled over all conditions), per-noise breakdown and
/// latency at that point.
pub fn evaluate(
    system: &str,
    examples: &[ScoredExample],
    grid: &GridConfig,
    target_ntr: f64,
) -> Result<EvalReport, EvalError> {
    let thresholds = grid.thresholds()?;
    let curve = error_curve(examples, &thresholds)?;
    let op = operating_point(&curve, target_ntr).ok_or_else(|| EvalError::Grid("empty grid".into()))?;
    let noises: BTreeSet<&str> = examples.iter().map(|e| e.noise.as_str()).collect();
    let mut breakdown = Vec::new();
    for n in &noises {
        let subset: Vec<&ScoredExample> = examples.iter().filter(|e| e.noise == *n).collect();
        breakdown.push(row(n, &subset, op.threshold)?);
    }
    breakdown.push(row(OVERALL, &examples.iter().collect::<Vec<_>>(), op.threshold)?);
    let d = detect_all(examples, op.threshold);
    Ok(EvalReport {
        system: system.to_string(),
        speech_examples: examples.iter().filter(|e| e.is_speech()).count(),
        noise_examples: examples.iter().filter(|e| !e.is_speech()).count(),
        duty_cycle: duty_cycle(op.ftr),
        operating: op,
        breakdown,
        latency: compute_latency(examples, &d)?,
        error_curve: curve,
    })
}

impl EvalReport {
    pub fn row(&self, noise: &str) -> Option<&NoiseRow> {
        self.breakdown.iter().find(|r| r.noise == noise)
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `threshold,probability,ntr,ftr` per grid point.
pub fn write_curve_csv<W: Write>(out: W, curve: &[CurvePoint]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "probability", "ntr", "ftr"])?;
    for p in curve {
        w.write_record([p.threshold.to_string(), p.probability.to_string(), p.ntr.to_string(), p.ftr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// FT/h at each system's operating point: one row per noise plus the
/// pooled row, one column per system. Cells without noise audio are empty.
pub fn write_breakdown_csv<W: Write>(out: W, reports: &[&EvalReport]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["noise".to_string()];
    header.extend(reports.iter().map(|r| r.system.clone()));
    w.write_record(&header)?;
    let mut noises: BTreeSet<&str> = BTreeSet::new();
    for r in reports {
        noises.extend(r.breakdown.iter().map(|b| b.noise.as_str()).filter(|n| *n != OVERALL));
    }
    for n in noises.into_iter().chain([OVERALL]) {
        let mut rec = vec![n.to_string()];
        for r in reports {
            rec.push(r.row(n).and_then(|b| b.ftr_per_hour).map(|v| format!("{v:.1}")).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_latency_csv<W: Write>(out: W, latency: &[LatencyStats]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for l in latency {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}
