//! Pulse sequences: free induction decay, Hahn echo, and CPMG trains of
//! ideal instantaneous pi rotations on the qubit subspace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("total evolution time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("CPMG needs at least one refocusing pulse")]
    NoPulses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseAxis {
    X,
    Y,
}

/// A pulse sequence acting on the two qubit levels. Hahn echo is the n = 1
/// CPMG train; FID applies no refocusing pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseSequence {
    Fid,
    HahnEcho { axis: PulseAxis },
    Cpmg { n_pulses: u32, axis: PulseAxis },
}

/// One element of the expanded timing list: a free-evolution segment in ms or
/// an instantaneous pi pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Free(f64),
    Pulse,
}

impl PulseSequence {
    pub fn hahn() -> Self {
        PulseSequence::HahnEcho { axis: PulseAxis::Y }
    }

    pub fn cpmg(n_pulses: u32) -> Self {
        PulseSequence::Cpmg {
            n_pulses,
            axis: PulseAxis::Y,
        }
    }

    /// Number of (tau, pi, tau) refocusing blocks; zero for FID.
    pub fn n_blocks(&self) -> u32 {
        match self {
            PulseSequence::Fid => 0,
            PulseSequence::HahnEcho { .. } => 1,
            PulseSequence::Cpmg { n_pulses, .. } => *n_pulses,
        }
    }

    pub fn axis(&self) -> PulseAxis {
        match self {
            PulseSequence::Fid => PulseAxis::Y,
            PulseSequence::HahnEcho { axis } | PulseSequence::Cpmg { axis, .. } => *axis,
        }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        if let PulseSequence::Cpmg { n_pulses: 0, .. } = self {
            return Err(PulseError::NoPulses);
        }
        Ok(())
    }

    /// Expands a total evolution time `t` into free segments and pulses:
    /// FID is a single segment, CPMG-n repeats (tau, pi, tau) n times with
    /// tau = t/(2n).
    pub fn timings(&self, t: f64) -> Result<Vec<Segment>, PulseError> {
        if t < 0.0 {
            return Err(PulseError::NegativeTime(t));
        }
        self.validate()?;
        let n = self.n_blocks();
        if n == 0 {
            return Ok(vec![Segment::Free(t)]);
        }
        let tau = t / (2.0 * n as f64);
        let mut out = Vec::with_capacity(3 * n as usize);
        for _ in 0..n {
            out.push(Segment::Free(tau));
            out.push(Segment::Pulse);
            out.push(Segment::Free(tau));
        }
        Ok(out)
    }

    pub fn label(&self) -> String {
        match self {
            PulseSequence::Fid => "fid".into(),
            PulseSequence::HahnEcho { .. } => "hahn".into(),
            PulseSequence::Cpmg { n_pulses, .. } => format!("cpmg{n_pulses}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hahn_is_half_pulse_half() {
        let segs = PulseSequence::hahn().timings(2.0).unwrap();
        assert_eq!(
            segs,
            vec![Segment::Free(1.0), Segment::Pulse, Segment::Free(1.0)]
        );
    }

    #[test]
    fn cpmg_one_matches_hahn() {
        let hahn = PulseSequence::hahn().timings(0.7).unwrap();
        let cpmg = PulseSequence::cpmg(1).timings(0.7).unwrap();
        assert_eq!(hahn, cpmg);
    }

    #[test]
    fn cpmg_four_at_t_eight_gives_eight_unit_segments() {
        let segs = PulseSequence::cpmg(4).timings(8.0).unwrap();
        let frees: Vec<f64> = segs
            .iter()
            .filter_map(|s| match s {
                Segment::Free(d) => Some(*d),
                Segment::Pulse => None,
            })
            .collect();
        assert_eq!(frees, vec![1.0; 8]);
        let pulses = segs.iter().filter(|s| matches!(s, Segment::Pulse)).count();
        assert_eq!(pulses, 4);
        let total: f64 = frees.iter().sum();
        assert_eq!(total, 8.0);
    }

    #[test]
    fn fid_is_single_segment() {
        assert_eq!(
            PulseSequence::Fid.timings(0.3).unwrap(),
            vec![Segment::Free(0.3)]
        );
    }

    #[test]
    fn negative_time_and_zero_pulses_rejected() {
        assert!(PulseSequence::Fid.timings(-1.0).is_err());
        assert!(PulseSequence::cpmg(0).timings(1.0).is_err());
    }
}
