//! Canonical on-disk layout: `meta.json` plus one `subj_<id>.csv` per subject
//! with header `subject,timestep,ch_0,...,ch_{C-1},label`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{DatasetMeta, Recording, SensorDataset};
use crate::error::{Error, Result};

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<SensorDataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path)?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: meta_path,
        message: e.to_string(),
    })?;
    load_dataset_with_meta(dir, meta)
}

pub fn load_dataset_with_meta(dir: impl AsRef<Path>, meta: DatasetMeta) -> Result<SensorDataset> {
    meta.check()?;
    let dir = dir.as_ref();
    let mut files: Vec<(u32, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_prefix("subj_").and_then(|s| s.strip_suffix(".csv")) {
            let id = id.parse::<u32>().map_err(|_| Error::Schema {
                path: path.clone(),
                message: format!("subject id `{id}` is not a non-negative integer"),
            })?;
            files.push((id, path));
        }
    }
    files.sort();
    if files.len() != meta.n_subjects {
        return Err(Error::Schema {
            path: dir.to_path_buf(),
            message: format!(
                "meta declares {} subjects, found {} subject files",
                meta.n_subjects,
                files.len()
            ),
        });
    }
    let recordings = files
        .iter()
        .map(|(id, path)| read_subject(path, *id, &meta))
        .collect::<Result<Vec<_>>>()?;
    SensorDataset::new(meta, recordings)
}

fn read_subject(path: &Path, subject: u32, meta: &DatasetMeta) -> Result<Recording> {
    let schema = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let expected = header_for(meta.n_channels);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(schema(format!(
            "header must be `{}`, found `{}`",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let c = meta.n_channels;
    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut last_timestep: Option<i64> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let sid: u32 = record[0]
            .trim()
            .parse()
            .map_err(|_| schema(format!("line {line}: bad subject `{}`", &record[0])))?;
        if sid != subject {
            return Err(schema(format!("line {line}: subject {sid} in file of subject {subject}")));
        }
        let t: i64 = record[1]
            .trim()
            .parse()
            .map_err(|_| schema(format!("line {line}: bad timestep `{}`", &record[1])))?;
        if last_timestep.is_some_and(|prev| t <= prev) {
            return Err(schema(format!("line {line}: timesteps must be strictly increasing")));
        }
        last_timestep = Some(t);
        for field in record.iter().skip(2).take(c) {
            values.push(parse_sample(field).ok_or_else(|| {
                schema(format!("line {line}: bad sample value `{field}`"))
            })?);
        }
        let label: i64 = record[c + 2]
            .trim()
            .parse()
            .map_err(|_| schema(format!("line {line}: bad label `{}`", &record[c + 2])))?;
        if label < 0 || label as usize >= meta.n_classes {
            return Err(Error::Label {
                path: path.to_path_buf(),
                row: line,
                label,
                n_classes: meta.n_classes,
            });
        }
        labels.push(label as usize);
    }

    let mut samples = Array2::from_shape_vec((labels.len(), c), values)
        .map_err(|e| schema(e.to_string()))?;
    for (j, mut column) in samples.columns_mut().into_iter().enumerate() {
        let mut col: Vec<f64> = column.to_vec();
        if !fill_gaps(&mut col) && !col.is_empty() {
            return Err(schema(format!("channel ch_{j} has no values")));
        }
        column.assign(&ndarray::ArrayView1::from(&col));
    }
    Ok(Recording {
        subject,
        samples,
        labels,
    })
}

/// Empty fields and NaN spellings are missing values.
fn parse_sample(field: &str) -> Option<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("nan") || f.eq_ignore_ascii_case("na") {
        return Some(f64::NAN);
    }
    f.parse().ok()
}

/// Linear interpolation across interior gaps, nearest value at the edges.
/// Returns false when the series has no finite value at all.
pub(crate) fn fill_gaps(series: &mut [f64]) -> bool {
    let known: Vec<usize> = (0..series.len()).filter(|&i| series[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return false;
    };
    for i in 0..first {
        series[i] = series[first];
    }
    for i in last + 1..series.len() {
        series[i] = series[last];
    }
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (series[a], series[b]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            series[i] = va + t * (vb - va);
        }
    }
    true
}

fn header_for(n_channels: usize) -> Vec<String> {
    let mut h = vec!["subject".to_string(), "timestep".to_string()];
    h.extend((0..n_channels).map(|j| format!("ch_{j}")));
    h.push("label".to_string());
    h
}

/// Writes `dataset` in the canonical layout, creating `dir` if needed.
pub fn save_dataset(dataset: &SensorDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    crate::util::write_atomic(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&dataset.meta)?.as_bytes(),
    )?;
    for rec in dataset.recordings() {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header_for(dataset.meta.n_channels))?;
        for (t, (row, label)) in rec.samples.rows().into_iter().zip(&rec.labels).enumerate() {
            let mut fields = vec![rec.subject.to_string(), t.to_string()];
            fields.extend(row.iter().map(|v| v.to_string()));
            fields.push(label.to_string());
            writer.write_record(&fields)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        crate::util::write_atomic(dir.join(format!("subj_{}.csv", rec.subject)), &bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};

    fn small_meta() -> DatasetMeta {
        DatasetMeta {
            name: "tiny".into(),
            n_subjects: 1,
            n_channels: 2,
            window_length: 4,
            n_classes: 3,
            sensor_types: ["acc".to_string()].into(),
            sampling_freq: 10.0,
        }
    }

    fn write_meta(dir: &Path, meta: &DatasetMeta) {
        fs::write(dir.join("meta.json"), serde_json::to_string(meta).unwrap()).unwrap();
    }

    #[test]
    fn gaps_are_interpolated() {
        let mut s = vec![f64::NAN, 1.0, f64::NAN, f64::NAN, 4.0, f64::NAN];
        assert!(fill_gaps(&mut s));
        assert_eq!(s, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        let mut none = vec![f64::NAN; 3];
        assert!(!fill_gaps(&mut none));
    }

    #[test]
    fn reads_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let meta = small_meta();
        write_meta(dir.path(), &meta);
        fs::write(
            dir.path().join("subj_7.csv"),
            "subject,timestep,ch_0,ch_1,label\n7,0,1.0,,0\n7,1,,2.0,1\n7,2,3.0,NaN,2\n7,3,5.0,4.0,2\n",
        )
        .unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        let rec = ds.recording(7).unwrap();
        assert_eq!(rec.labels, vec![0, 1, 2, 2]);
        assert_eq!(rec.samples.column(0).to_vec(), vec![1.0, 2.0, 3.0, 5.0]);
        assert_eq!(rec.samples.column(1).to_vec(), vec![2.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        write_meta(dir.path(), &small_meta());
        fs::write(
            dir.path().join("subj_0.csv"),
            "subject,timestep,ch_0,ch_1,label\n0,0,1.0,1.0,3\n",
        )
        .unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Label { label: 3, n_classes: 3, .. })
        ));
    }

    #[test]
    fn bad_header() {
        let dir = tempfile::tempdir().unwrap();
        write_meta(dir.path(), &small_meta());
        fs::write(
            dir.path().join("subj_0.csv"),
            "subject,timestep,x,y,label\n0,0,1.0,1.0,0\n",
        )
        .unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Schema { .. })));
    }

    #[test]
    fn subject_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_meta(dir.path(), &DatasetMeta { n_subjects: 2, ..small_meta() });
        fs::write(
            dir.path().join("subj_0.csv"),
            "subject,timestep,ch_0,ch_1,label\n0,0,1.0,1.0,0\n",
        )
        .unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Schema { .. })));
    }

    #[test]
    fn save_then_load_is_lossless() {
        let ds = generate_synthetic(&SyntheticConfig {
            n_subjects: 3,
            n_channels: 2,
            n_classes: 3,
            window_length: 16,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }
}
