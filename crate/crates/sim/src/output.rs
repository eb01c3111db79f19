//! CSV serialization of experiment results.

use std::io::Write;

use anyhow::Result;
use noma_csk::demod::{TrainingHistory, TrainingSample};
use noma_csk::metrics::BerRecord;

use crate::experiments::{RobustnessRecord, SecurityPoint};

pub const BER_HEADER: [&str; 7] = ["snr_db", "vehicle", "bits", "errors", "ber", "ci_low", "ci_high"];

fn ber_fields(r: &BerRecord) -> Vec<String> {
    let (lo, hi) = r.wilson();
    vec![
        r.snr_db.to_string(),
        r.vehicle.to_string(),
        r.bits.to_string(),
        r.errors.to_string(),
        r.ber().to_string(),
        lo.to_string(),
        hi.to_string(),
    ]
}

pub fn write_ber<W: Write>(w: W, records: &[BerRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BER_HEADER)?;
    for r in records {
        out.write_record(ber_fields(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_robustness<W: Write>(w: W, records: &[RobustnessRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BER_HEADER.iter().copied().chain(["rho"]))?;
    for r in records {
        let mut f = ber_fields(&r.record);
        f.push(r.rho.to_string());
        out.write_record(f)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_security<W: Write>(w: W, points: &[SecurityPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BER_HEADER.iter().copied().chain(["eve_ber", "leakage", "secrecy"]))?;
    for p in points {
        for (r, eve) in p.legit.iter().zip(&p.report.eve_ber) {
            let mut f = ber_fields(r);
            f.push(eve.to_string());
            f.push(p.report.leakage.to_string());
            f.push(p.report.secrecy_capacity.to_string());
            out.write_record(f)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_history<W: Write>(w: W, history: &TrainingHistory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "train_loss", "val_loss", "val_accuracy", "learning_rate"])?;
    for e in &history.epochs {
        out.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_loss.to_string(),
            e.val_accuracy.to_string(),
            e.learning_rate.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per sample: stage, label, Eb/N0, then the time row `t*` and the
/// PSD row `p*`.
pub fn write_dataset<W: Write>(w: W, samples: &[TrainingSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let beta = samples.first().map_or(0, |s| s.feature.beta());
    let header: Vec<String> = ["sic_stage", "label", "snr_db"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..beta).map(|k| format!("t{k}")))
        .chain((0..beta).map(|k| format!("p{k}")))
        .collect();
    out.write_record(&header)?;
    for s in samples {
        let row: Vec<String> = [s.sic_stage.to_string(), s.label.as_u8().to_string(), s.snr_db.to_string()]
            .into_iter()
            .chain(s.feature.rows().iter().map(|v| v.to_string()))
            .collect();
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
