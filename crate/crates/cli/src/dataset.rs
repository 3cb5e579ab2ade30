//! CSV dataset schema.
//!
//! Columns: `participant_id, age_group, gender, device, phq8_1..phq8_8`, then
//! feature columns `<set>_<k>` grouped by feature set in activity order
//! (`k` counts from 0 within a set), then an optional `country`. A set whose
//! cells are all blank is a missing activity; PHQ-8 items are all blank or
//! all present.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use mddbayes::features::FeatureLayout;
use mddbayes::types::{AgeGroup, Device, Gender, ParticipantRecord, PHQ8_ITEMS};

use crate::DataError;

const FIXED: [&str; 4] = ["participant_id", "age_group", "gender", "device"];
pub const COUNTRY: &str = "country";

/// Feature sets and their widths, in column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub layout: FeatureLayout,
    pub widths: Vec<usize>,
    pub country: bool,
}

impl DatasetSchema {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
        h.extend((1..=PHQ8_ITEMS).map(|i| format!("phq8_{i}")));
        for (set, &w) in self.layout.sets.iter().zip(&self.widths) {
            h.extend((0..w).map(|k| format!("{set}_{k}")));
        }
        if self.country {
            h.push(COUNTRY.into());
        }
        h
    }

    /// Parses and checks a header row.
    pub fn from_header(header: &[&str]) -> Result<Self, DataError> {
        let err = |col: usize, msg: String| DataError::Header { column: col + 1, message: msg };
        let fixed_len = FIXED.len() + PHQ8_ITEMS;
        if header.len() < fixed_len {
            return Err(err(header.len(), format!("expected at least {fixed_len} columns")));
        }
        for (i, want) in FIXED
            .iter()
            .map(|s| s.to_string())
            .chain((1..=PHQ8_ITEMS).map(|i| format!("phq8_{i}")))
            .enumerate()
        {
            if header[i] != want {
                return Err(err(i, format!("expected `{want}`, found `{}`", header[i])));
            }
        }
        let mut end = header.len();
        let country = header.last() == Some(&COUNTRY);
        if country {
            end -= 1;
        }
        let mut sets: Vec<String> = Vec::new();
        let mut widths: Vec<usize> = Vec::new();
        for (i, name) in header.iter().enumerate().take(end).skip(fixed_len) {
            let (set, k) = name
                .rsplit_once('_')
                .and_then(|(s, k)| k.parse::<usize>().ok().map(|k| (s, k)))
                .ok_or_else(|| err(i, format!("`{name}` is not a <set>_<index> feature column")))?;
            if sets.last().map(String::as_str) == Some(set) {
                let w = widths.last_mut().expect("set pushed");
                if k != *w {
                    return Err(err(i, format!("`{name}`: expected index {w}")));
                }
                *w += 1;
            } else {
                if k != 0 {
                    return Err(err(i, format!("`{name}`: feature set must start at index 0")));
                }
                sets.push(set.to_string());
                widths.push(1);
            }
        }
        let layout = FeatureLayout::new(sets).map_err(|e| err(fixed_len, e.to_string()))?;
        Ok(DatasetSchema { layout, widths, country })
    }
}

fn cell_int(v: &str, row: usize, column: &str, max: u8) -> Result<u8, DataError> {
    v.parse::<u8>()
        .ok()
        .filter(|x| *x <= max)
        .ok_or_else(|| DataError::Cell {
            row,
            column: column.into(),
            message: format!("`{v}` is not an integer in 0..={max}"),
        })
}

/// Reads and validates a dataset. `row` numbers in errors count the header
/// as row 1.
pub fn read_csv<R: Read>(reader: R) -> Result<(DatasetSchema, Vec<ParticipantRecord>), DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(DataError::Csv)?.iter().map(String::from).collect();
    let schema = DatasetSchema::from_header(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(DataError::Csv)?;
        if row.len() != header.len() {
            return Err(DataError::Cell {
                row: row_no,
                column: "*".into(),
                message: format!("{} cells, header has {}", row.len(), header.len()),
            });
        }
        let cell = |c: usize| row[c].trim();
        let id = cell(0).to_string();
        if id.is_empty() {
            return Err(DataError::Cell {
                row: row_no,
                column: FIXED[0].into(),
                message: "blank".into(),
            });
        }
        let age = AgeGroup::new(cell_int(cell(1), row_no, "age_group", 3)?).expect("range checked");
        let gender = Gender::from_code(cell_int(cell(2), row_no, "gender", 1)?).expect("range checked");
        let device = Device::from_code(cell_int(cell(3), row_no, "device", 1)?).expect("range checked");

        let items: Vec<&str> = (4..4 + PHQ8_ITEMS).map(cell).collect();
        let blanks = items.iter().filter(|v| v.is_empty()).count();
        let phq8 = match blanks {
            0 => {
                let mut out = [0u8; PHQ8_ITEMS];
                for (k, v) in items.iter().enumerate() {
                    out[k] = cell_int(v, row_no, &header[4 + k], 3)?;
                }
                Some(out)
            }
            PHQ8_ITEMS => None,
            _ => {
                let k = items.iter().position(|v| v.is_empty()).expect("some blank");
                return Err(DataError::Cell {
                    row: row_no,
                    column: header[4 + k].clone(),
                    message: "PHQ-8 items must be all present or all blank".into(),
                });
            }
        };

        let mut features = BTreeMap::new();
        let mut col = 4 + PHQ8_ITEMS;
        for (set, &w) in schema.layout.sets.iter().zip(&schema.widths) {
            let cells: Vec<&str> = (col..col + w).map(cell).collect();
            if cells.iter().all(|v| v.is_empty()) {
                col += w;
                continue;
            }
            let mut v = Vec::with_capacity(w);
            for (k, c) in cells.iter().enumerate() {
                let x = c.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| DataError::Cell {
                    row: row_no,
                    column: header[col + k].clone(),
                    message: if c.is_empty() {
                        "blank inside a partially filled feature set".into()
                    } else {
                        format!("`{c}` is not a finite number")
                    },
                })?;
                v.push(x);
            }
            features.insert(set.clone(), v);
            col += w;
        }
        let mut metadata = BTreeMap::new();
        if schema.country && !cell(col).is_empty() {
            metadata.insert(COUNTRY.to_string(), cell(col).to_string());
        }
        let rec = ParticipantRecord {
            id,
            age,
            gender,
            device,
            phq8,
            condition: None,
            features,
            metadata,
        };
        let rec = ParticipantRecord {
            condition: rec.condition(),
            ..rec
        };
        records.push(rec);
    }
    Ok((schema, records))
}

/// Writes records under `schema`; absent sets and items are left blank.
pub fn write_csv<W: Write>(writer: W, schema: &DatasetSchema, records: &[ParticipantRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.header()).map_err(DataError::Csv)?;
    for r in records {
        let mut row: Vec<String> = vec![
            r.id.clone(),
            r.age.code().to_string(),
            r.gender.code().to_string(),
            r.device.code().to_string(),
        ];
        match &r.phq8 {
            Some(items) => row.extend(items.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), PHQ8_ITEMS)),
        }
        for (set, &width) in schema.layout.sets.iter().zip(&schema.widths) {
            match r.features.get(set) {
                Some(v) if v.len() == width => row.extend(v.iter().map(|x| x.to_string())),
                Some(v) => {
                    return Err(DataError::Invalid(format!(
                        "record {}: feature set {set} has {} values, schema has {width}",
                        r.id,
                        v.len()
                    )))
                }
                None => row.extend(std::iter::repeat_n(String::new(), width)),
            }
        }
        if schema.country {
            row.push(r.metadata.get(COUNTRY).cloned().unwrap_or_default());
        }
        w.write_record(&row).map_err(DataError::Csv)?;
    }
    w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_csv() -> String {
        "participant_id,age_group,gender,device,phq8_1,phq8_2,phq8_3,phq8_4,phq8_5,phq8_6,phq8_7,phq8_8,nback_cog_0,nback_cog_1,paragraph_f_0,paragraph_f_1,country\n\
         a,0,1,0,3,3,3,1,0,0,0,0,0.5,1.5,,,UK\n\
         b,3,0,1,,,,,,,,,1,2,3,4,\n"
            .to_string()
    }

    #[test]
    fn round_trip() {
        let (schema, recs) = read_csv(small_csv().as_bytes()).unwrap();
        assert_eq!(schema.layout.sets, vec!["nback_cog", "paragraph_f"]);
        assert_eq!(schema.widths, vec![2, 2]);
        assert_eq!(recs[0].condition().unwrap().code(), 1);
        assert!(recs[0].features.get("paragraph_f").is_none());
        assert!(recs[1].phq8.is_none());
        assert!(recs[1].metadata.is_empty());
        let mut out = Vec::new();
        write_csv(&mut out, &schema, &recs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), small_csv());
    }

    #[test]
    fn out_of_range_cell_names_row_and_column() {
        let bad = small_csv().replace("b,3,0,1", "b,3,2,1");
        match read_csv(bad.as_bytes()) {
            Err(DataError::Cell { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "gender");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_rows_are_rejected() {
        let bad = small_csv().replace("0.5,1.5,,", "0.5,,,");
        assert!(matches!(read_csv(bad.as_bytes()), Err(DataError::Cell { .. })));
        let bad = small_csv().replace("3,3,3,1,0,0,0,0", "3,3,3,1,0,0,0,");
        assert!(matches!(read_csv(bad.as_bytes()), Err(DataError::Cell { .. })));
        let bad = small_csv().replace("a,0,1,0,3", "a,0,1,0,4");
        assert!(read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn header_must_match() {
        let bad = small_csv().replace("phq8_3", "phq8_x");
        assert!(matches!(read_csv(bad.as_bytes()), Err(DataError::Header { column: 7, .. })));
        let bad = small_csv().replace("nback_cog_1", "nback_cog_2");
        assert!(matches!(read_csv(bad.as_bytes()), Err(DataError::Header { .. })));
    }
}
