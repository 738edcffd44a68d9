//! Measurement procedures: polarization, resonance scans, coherence times and
//! sensing spectra.

pub mod coherence;
pub mod fit;
pub mod polarization;
pub mod scan;
pub mod sensing;

use serde::Serialize;

pub use coherence::{measure_t2, CoherenceSetup, T2Estimate};
pub use polarization::{polarization, polarize, polarize_for, PolarizationRun, PolarizationSetup};
pub use scan::{locate_resonance, scan_ratio, scan_resonance, Dip, ResonanceScan, ShiftGrid};
pub use sensing::{sense_spectrum, SensingMode, SensingRecord, SensingSetup};

/// Ordered key/value record of every parameter behind a result.
pub type Metadata = Vec<(String, String)>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub x: f64,
    pub y: f64,
    pub y_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub x_label: String,
    pub y_label: String,
    /// Sorted by x.
    pub points: Vec<ScanPoint>,
    pub metadata: Metadata,
}

impl ScanResult {
    pub fn new(
        x_label: &str,
        y_label: &str,
        mut points: Vec<ScanPoint>,
        metadata: Metadata,
    ) -> Self {
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        ScanResult {
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            points,
            metadata,
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }
}
