use std::collections::HashMap;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::model::BiasClass;

use super::{ExperimentError, ParticipantRecord, SummaryRow};

pub const RECORD_COLUMNS: [&str; 10] = [
    "condition_id",
    "domain_bias",
    "label_bias",
    "w",
    "s",
    "seed",
    "block",
    "participant",
    "object",
    "correct",
];

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "domain_bias",
    "label_bias",
    "w",
    "s",
    "block",
    "mean_accuracy",
    "se",
    "n",
];

pub fn write_records_csv<W: Write>(records: &[ParticipantRecord], out: W) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(RECORD_COLUMNS)?;
    for r in records {
        writer.write_record([
            r.condition_id.to_string(),
            r.domain_bias.to_string(),
            r.label_bias.to_string(),
            format!("{:?}", r.w),
            format!("{:?}", r.s),
            r.seed.to_string(),
            r.block.to_string(),
            r.participant.to_string(),
            r.object.to_string(),
            u8::from(r.correct).to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        writer.write_record([
            r.domain_bias.to_string(),
            r.label_bias.to_string(),
            format!("{:?}", r.w),
            format!("{:?}", r.s),
            r.block.to_string(),
            format!("{:?}", r.mean_accuracy),
            format!("{:?}", r.se),
            r.n.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Maps required column names to their positions, naming the first missing one.
struct Columns(HashMap<&'static str, usize>);

impl Columns {
    fn locate(headers: &csv::StringRecord, required: &[&'static str]) -> Result<Self, ExperimentError> {
        let mut map = HashMap::new();
        for &name in required {
            let idx = headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ExperimentError::Schema(format!("missing column `{name}`")))?;
            map.insert(name, idx);
        }
        Ok(Self(map))
    }

    fn parse<T: FromStr>(&self, row: &csv::StringRecord, line: usize, name: &'static str) -> Result<T, ExperimentError> {
        let raw = row.get(self.0[name]).unwrap_or("").trim();
        raw.parse().map_err(|_| {
            ExperimentError::Schema(format!("line {line}: invalid value `{raw}` in column `{name}`"))
        })
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ParticipantRecord>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(input);
    let cols = Columns::locate(reader.headers()?, &RECORD_COLUMNS)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let raw = row.get(cols.0["correct"]).unwrap_or("").trim();
        let correct = parse_bool(raw).ok_or_else(|| {
            ExperimentError::Schema(format!("line {line}: invalid value `{raw}` in column `correct`"))
        })?;
        out.push(ParticipantRecord {
            condition_id: cols.parse(&row, line, "condition_id")?,
            domain_bias: cols.parse::<BiasClass>(&row, line, "domain_bias")?,
            label_bias: cols.parse::<BiasClass>(&row, line, "label_bias")?,
            w: cols.parse(&row, line, "w")?,
            s: cols.parse(&row, line, "s")?,
            seed: cols.parse(&row, line, "seed")?,
            block: cols.parse(&row, line, "block")?,
            participant: cols.parse(&row, line, "participant")?,
            object: cols.parse(&row, line, "object")?,
            correct,
        });
    }
    Ok(out)
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(input);
    let cols = Columns::locate(reader.headers()?, &SUMMARY_COLUMNS)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        out.push(SummaryRow {
            domain_bias: cols.parse(&row, line, "domain_bias")?,
            label_bias: cols.parse(&row, line, "label_bias")?,
            w: cols.parse(&row, line, "w")?,
            s: cols.parse(&row, line, "s")?,
            block: cols.parse(&row, line, "block")?,
            mean_accuracy: cols.parse(&row, line, "mean_accuracy")?,
            se: cols.parse(&row, line, "se")?,
            n: cols.parse(&row, line, "n")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ParticipantRecord> {
        (0..6)
            .map(|i| ParticipantRecord {
                condition_id: i % 2,
                domain_bias: BiasClass::ALL[i % 3],
                label_bias: BiasClass::ALL[(i + 1) % 3],
                w: 0.3,
                s: 0.03,
                seed: i / 3,
                block: 1 + i % 4,
                participant: i,
                object: 15 - i,
                correct: i % 2 == 0,
            })
            .collect()
    }

    #[test]
    fn records_round_trip() {
        let records = sample();
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("condition_id,domain_bias,label_bias,w,s,seed,block,participant,object,correct\n"));
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn summary_round_trip() {
        let rows = super::super::summarize(&sample());
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        assert!(buf.starts_with(b"domain_bias,label_bias,w,s,block,mean_accuracy,se,n\n"));
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "condition_id,domain_bias,w,s,seed,block,participant,object,correct\n";
        let err = read_records_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`label_bias`"), "{err}");
    }

    #[test]
    fn bad_value_is_located() {
        let text = "condition_id,domain_bias,label_bias,w,s,seed,block,participant,object,correct\n\
                    0,none,sideways,0.5,0,0,1,0,0,1\n";
        let err = read_records_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("label_bias"), "{err}");
    }
}
