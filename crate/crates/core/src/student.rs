//! Adapter for the UCI Student Performance files (`student-mat.csv`,
//! `student-por.csv`).
//!
//! Each student contributes one sample to three tasks on a `(3, 2)` grid:
//! mode 1 is the grade period (G1, G2, G3), mode 2 is sex (F, M). The
//! response is the grade (0 to 20). Features are every remaining attribute:
//! numeric columns z-scored with training-split statistics, other columns
//! one-hot encoded over the levels seen in training. Students are split
//! 80/20 within each sex, so a student never appears on both sides.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::MtlDataset;
use crate::error::{Error, Result};
use crate::tensor::TaskGrid;

const GRADES: [&str; 3] = ["G1", "G2", "G3"];
const SEXES: [&str; 2] = ["F", "M"];

#[derive(Debug, Clone)]
pub struct StudentData {
    pub train: MtlDataset,
    pub test: MtlDataset,
    /// Name of every feature column, e.g. `age` or `Mjob=teacher`.
    pub feature_names: Vec<String>,
}

struct Student {
    sex: usize,
    grades: [f64; 3],
    attrs: Vec<String>,
}

enum Column {
    Numeric { mean: f64, scale: f64 },
    Categorical { levels: Vec<String> },
}

pub fn load_student(path: impl AsRef<Path>, test_fraction: f64, seed: u64) -> Result<StudentData> {
    let path = path.as_ref();
    read_student(
        File::open(path)?,
        &path.display().to_string(),
        test_fraction,
        seed,
    )
}

pub fn read_student<R: Read>(
    reader: R,
    source: &str,
    test_fraction: f64,
    seed: u64,
) -> Result<StudentData> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b';')
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column {name:?}")))
    };
    let sex_col = find("sex")?;
    let grade_cols = [find(GRADES[0])?, find(GRADES[1])?, find(GRADES[2])?];
    let attr_cols: Vec<usize> = (0..header.len())
        .filter(|c| *c != sex_col && !grade_cols.contains(c))
        .collect();

    let mut students = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let sex = SEXES
            .iter()
            .position(|s| *s == &rec[sex_col])
            .ok_or_else(|| parse_err(line, format!("unknown sex {:?}", &rec[sex_col])))?;
        let mut grades = [0.0; 3];
        for (g, &c) in grade_cols.iter().enumerate() {
            grades[g] = rec[c]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad {} value {:?}", GRADES[g], &rec[c])))?;
        }
        let attrs = attr_cols
            .iter()
            .map(|&c| rec[c].trim().to_string())
            .collect();
        students.push(Student { sex, grades, attrs });
    }

    let (train_ids, test_ids) = split_by_sex(&students, test_fraction, seed)?;
    let numeric: Vec<bool> = (0..attr_cols.len())
        .map(|a| students.iter().all(|s| s.attrs[a].parse::<f64>().is_ok()))
        .collect();
    let columns: Vec<Column> = (0..attr_cols.len())
        .map(|a| {
            if numeric[a] {
                let v: Vec<f64> = train_ids
                    .iter()
                    .map(|&i| students[i].attrs[a].parse().unwrap())
                    .collect();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                Column::Numeric { mean, scale }
            } else {
                let levels: BTreeSet<String> = train_ids
                    .iter()
                    .map(|&i| students[i].attrs[a].clone())
                    .collect();
                Column::Categorical {
                    levels: levels.into_iter().collect(),
                }
            }
        })
        .collect();

    let mut feature_names = Vec::new();
    for (a, col) in columns.iter().enumerate() {
        let name = &header[attr_cols[a]];
        match col {
            Column::Numeric { .. } => feature_names.push(name.clone()),
            Column::Categorical { levels } => {
                feature_names.extend(levels.iter().map(|l| format!("{name}={l}")))
            }
        }
    }
    let dim = feature_names.len();

    let encode = |s: &Student| -> Vec<f64> {
        let mut x = Vec::with_capacity(dim);
        for (a, col) in columns.iter().enumerate() {
            match col {
                Column::Numeric { mean, scale } => {
                    x.push((s.attrs[a].parse::<f64>().unwrap() - mean) / scale)
                }
                Column::Categorical { levels } => {
                    x.extend(levels.iter().map(|l| f64::from(u8::from(*l == s.attrs[a]))))
                }
            }
        }
        x
    };
    let grid = TaskGrid::new(vec![3, 2])?;
    let build = |ids: &[usize]| {
        let samples = ids.iter().flat_map(|&i| {
            let s = &students[i];
            let x = encode(s);
            (0..3).map(move |g| (vec![g + 1, s.sex + 1], x.clone(), s.grades[g]))
        });
        MtlDataset::from_samples(grid.clone(), dim, samples)
    };
    Ok(StudentData {
        train: build(&train_ids)?,
        test: build(&test_ids)?,
        feature_names,
    })
}

/// Sorted student row numbers for the training and test sides.
fn split_by_sex(
    students: &[Student],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (sex, name) in SEXES.iter().enumerate() {
        let mut ids: Vec<usize> = (0..students.len())
            .filter(|&i| students[i].sex == sex)
            .collect();
        if ids.len() < 2 {
            return Err(Error::Data(format!(
                "need at least two students of sex {name}, found {}",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        let n_test = ((test_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
        test.extend_from_slice(&ids[..n_test]);
        train.extend_from_slice(&ids[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
