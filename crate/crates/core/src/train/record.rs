use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const LOSS_CSV_HEADER: &str = "iteration,d_loss,g_perceptual,g_feature_match,g_final";

/// Loss values of one training iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub d_loss: f64,
    pub g_perceptual: f64,
    pub g_feature_match: f64,
    pub g_final: f64,
}

impl LossRecord {
    pub fn is_finite(&self) -> bool {
        [self.d_loss, self.g_perceptual, self.g_feature_match, self.g_final]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Render records as CSV. Floats use the shortest round-trip representation,
/// so equal traces give byte-identical files.
pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(LOSS_CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.d_loss, r.g_perceptual, r.g_feature_match, r.g_final
        )
        .unwrap();
    }
    out
}

pub fn parse_loss_csv(text: &str) -> Result<Vec<LossRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_CSV_HEADER) {
        return Err(Error::Data("loss log header mismatch".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Data(format!("loss log row {}: '{line}'", i + 1));
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(LossRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                d_loss: num(f[1])?,
                g_perceptual: num(f[2])?,
                g_feature_match: num(f[3])?,
                g_final: num(f[4])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let recs = vec![
            LossRecord {
                iteration: 0,
                d_loss: std::f64::consts::LN_2 * 2.0,
                g_perceptual: -0.1 / 3.0,
                g_feature_match: 1e-17,
                g_final: 0.1 + 0.2,
            },
            LossRecord {
                iteration: 1,
                d_loss: 1.0,
                g_perceptual: -2.0,
                g_feature_match: 3.5,
                g_final: 1.5,
            },
        ];
        let csv = loss_csv(&recs);
        assert!(csv.starts_with("iteration,d_loss,g_perceptual,g_feature_match,g_final\n"));
        assert_eq!(parse_loss_csv(&csv).unwrap(), recs);
    }
}
