//! Calibration metrics over record sets: ECE, IPR (reliability-diagram
//! monotonicity), CE (confidence evenness), Brier score, and accuracy.

use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceRecord, Method};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no records to bin")]
    EmptyRecords,
    #[error("bin count must be >= 2, got {0}")]
    BadBinCount(usize),
    #[error("no usable records")]
    NoUsableRecords,
}

/// One confidence bin of a reliability diagram. Empty bins report zero mean
/// confidence and accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_conf: f64,
    pub accuracy: f64,
}

/// Equal-width binning of a record set by confidence of the chosen answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDiagram {
    pub bins: Vec<DiagramBin>,
    pub n: usize,
    pub m_bins: usize,
}

/// Calibration summary for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: Method,
    pub ece: f64,
    pub ipr: f64,
    pub ce: f64,
    pub brier: f64,
    pub accuracy: f64,
    /// Records included in the metrics.
    pub usable_count: usize,
    /// Records excluded as unusable.
    pub flagged_count: usize,
}

/// Bin index for a confidence value: bin m covers [(m-1)/M, m/M), the last
/// bin closing at 1.0 inclusive.
fn bin_index(confidence: f64, m_bins: usize) -> usize {
    ((confidence * m_bins as f64) as usize).min(m_bins - 1)
}

/// Build the reliability diagram. Records must be usable; pass the output
/// of a usability filter.
pub fn bin(records: &[&ConfidenceRecord], m_bins: usize) -> Result<ReliabilityDiagram, MetricsError> {
    if m_bins < 2 {
        return Err(MetricsError::BadBinCount(m_bins));
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let mut counts = vec![0usize; m_bins];
    let mut conf_sums = vec![0.0f64; m_bins];
    let mut correct = vec![0usize; m_bins];
    for record in records {
        let idx = bin_index(record.confidence_of_chosen, m_bins);
        counts[idx] += 1;
        conf_sums[idx] += record.confidence_of_chosen;
        if record.correct {
            correct[idx] += 1;
        }
    }
    let width = 1.0 / m_bins as f64;
    let bins = (0..m_bins)
        .map(|m| DiagramBin {
            lo: m as f64 * width,
            hi: (m + 1) as f64 * width,
            count: counts[m],
            mean_conf: if counts[m] > 0 {
                conf_sums[m] / counts[m] as f64
            } else {
                0.0
            },
            accuracy: if counts[m] > 0 {
                correct[m] as f64 / counts[m] as f64
            } else {
                0.0
            },
        })
        .collect();
    Ok(ReliabilityDiagram {
        bins,
        n: records.len(),
        m_bins,
    })
}

/// Expected calibration error: bin-weighted mean absolute gap between
/// accuracy and mean confidence. Empty bins contribute nothing.
pub fn ece(diagram: &ReliabilityDiagram) -> f64 {
    let n = diagram.n as f64;
    diagram
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.count as f64 / n) * (b.accuracy - b.mean_conf).abs())
        .sum()
}

/// Inverse pair ratio: over nonempty bins in ascending index order, the
/// fraction of pairs whose accuracies are strictly out of order. Fewer than
/// two nonempty bins yields 0.
pub fn ipr(diagram: &ReliabilityDiagram) -> f64 {
    let accuracies: Vec<f64> = diagram
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.accuracy)
        .collect();
    let k = accuracies.len();
    if k < 2 {
        return 0.0;
    }
    let mut inversions = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            if accuracies[i] > accuracies[j] {
                inversions += 1;
            }
        }
    }
    inversions as f64 / (k * (k - 1) / 2) as f64
}

/// Confidence evenness: normalized entropy of the bin densities over all
/// `m_bins` bins, with empty bins contributing zero.
pub fn ce(diagram: &ReliabilityDiagram) -> f64 {
    let n = diagram.n as f64;
    let mut entropy = 0.0;
    for b in &diagram.bins {
        if b.count > 0 {
            let p = b.count as f64 / n;
            entropy -= p * p.ln();
        }
    }
    let value = entropy / (diagram.m_bins as f64).ln();
    value.clamp(0.0, 1.0)
}

/// Mean squared gap between confidence and the 0/1 correctness outcome.
pub fn brier(records: &[&ConfidenceRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let outcome = if r.correct { 1.0 } else { 0.0 };
            (r.confidence_of_chosen - outcome).powi(2)
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// Fraction of correct records.
pub fn accuracy(records: &[&ConfidenceRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoUsableRecords);
    }
    let correct = records.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / records.len() as f64)
}

/// All metrics for one method's records. Unusable records are excluded and
/// counted in `flagged_count`.
pub fn compute_report(
    method: Method,
    records: &[ConfidenceRecord],
    m_bins: usize,
) -> Result<(MetricReport, ReliabilityDiagram), MetricsError> {
    let usable: Vec<&ConfidenceRecord> = records.iter().filter(|r| r.usable()).collect();
    if usable.is_empty() {
        return Err(MetricsError::NoUsableRecords);
    }
    let diagram = bin(&usable, m_bins)?;
    let report = MetricReport {
        method,
        ece: ece(&diagram),
        ipr: ipr(&diagram),
        ce: ce(&diagram),
        brier: brier(&usable)?,
        accuracy: accuracy(&usable)?,
        usable_count: usable.len(),
        flagged_count: records.len() - usable.len(),
    };
    Ok((report, diagram))
}
