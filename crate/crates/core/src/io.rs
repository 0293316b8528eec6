//! Plain-text model and dataset files. Floats are written with 17
//! significant digits so a save/load round trip is bitwise exact.

use crate::cells::{ActivationSpec, ModelWeights};
use crate::data::SequenceDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use std::fmt::Write as _;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

/// A model plus the activation choices it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub weights: ModelWeights<f64>,
    pub act_h: ActivationSpec<f64>,
    pub act_y: ActivationSpec<f64>,
}

fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn write_matrix(out: &mut String, key: &str, m: &Matrix<f64>) {
    writeln!(out, "matrix {key} {} {}", m.rows(), m.cols()).expect("string write");
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|c| fmt_f64(m.get(r, c))).collect();
        writeln!(out, "{}", row.join(" ")).expect("string write");
    }
}

fn matrix_keys(w: &ModelWeights<f64>) -> Vec<(&'static str, &Matrix<f64>)> {
    match w {
        ModelWeights::Vanilla { u, v, w } => vec![("U", u), ("V", v), ("W", w)],
        ModelWeights::Mgu { w_r, w_h, u_r, u_h, v } => vec![
            ("W_r", w_r),
            ("W_h", w_h),
            ("U_r", u_r),
            ("U_h", u_h),
            ("V", v),
        ],
        ModelWeights::Lstm {
            w_g,
            w_r,
            w_o,
            w_c,
            u_g,
            u_r,
            u_o,
            u_c,
            v,
        } => vec![
            ("W_g", w_g),
            ("W_r", w_r),
            ("W_o", w_o),
            ("W_c", w_c),
            ("U_g", u_g),
            ("U_r", u_r),
            ("U_o", u_o),
            ("U_c", u_c),
            ("V", v),
        ],
        ModelWeights::Conv {
            filters_u,
            filters_v,
            filters_w,
            ..
        } => vec![("U_cal", filters_u), ("V_cal", filters_v), ("W_cal", filters_w)],
    }
}

pub fn model_to_string(m: &ModelFile) -> String {
    let mut out = String::new();
    writeln!(out, "format_version: {FORMAT_VERSION}").expect("string write");
    writeln!(out, "cell_type: {}", m.weights.cell_name()).expect("string write");
    match &m.weights {
        ModelWeights::Conv {
            data_dim, classes, ..
        } => {
            let k = if let ModelWeights::Conv { filters_u, .. } = &m.weights {
                filters_u.rows()
            } else {
                unreachable!()
            };
            writeln!(out, "dims: {data_dim} {k} {classes}").expect("string write");
        }
        _ => {
            let (d_x, d_h, d_y) = m.weights.dims();
            writeln!(out, "dims: {d_x} {d_h} {d_y}").expect("string write");
        }
    }
    for (slot, act) in [("h", &m.act_h), ("y", &m.act_y)] {
        writeln!(
            out,
            "activation: {slot} {} {} {}",
            act.name(),
            fmt_f64(act.rho),
            fmt_f64(act.b)
        )
        .expect("string write");
    }
    for (key, mat) in matrix_keys(&m.weights) {
        write_matrix(&mut out, key, mat);
    }
    out
}

pub fn save_model(path: &Path, m: &ModelFile) -> Result<()> {
    m.weights.validate()?;
    std::fs::write(path, model_to_string(m))?;
    Ok(())
}

struct LineReader<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
    /// Byte offset of the start of the line most recently returned.
    offset: usize,
    next_offset: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().peekable(),
            offset: 0,
            next_offset: 0,
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        let line = self.lines.next()?;
        self.offset = self.next_offset;
        self.next_offset += line.len() + 1;
        Some(line)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.offset,
            msg: msg.into(),
        }
    }

    fn expect_kv(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .next()
            .ok_or_else(|| self.err(format!("unexpected end of file, expected `{key}:`")))?;
        let prefix = format!("{key}:");
        line.strip_prefix(&prefix)
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected `{key}:`, found `{line}`")))
    }
}

fn parse_f64(r: &LineReader, s: &str, field: &str) -> Result<f64> {
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    s.parse::<f64>()
        .map_err(|_| r.err(format!("{field}: bad float `{s}`")))
}

fn parse_usize(r: &LineReader, s: &str, field: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| r.err(format!("{field}: bad integer `{s}`")))
}

fn read_matrix(r: &mut LineReader, expect_key: &str, rows: usize, cols: usize) -> Result<Matrix<f64>> {
    let header = r
        .next()
        .ok_or_else(|| r.err(format!("missing matrix `{expect_key}`")))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "matrix" {
        return Err(r.err(format!("expected `matrix {expect_key} rows cols`, found `{header}`")));
    }
    if parts[1] != expect_key {
        return Err(r.err(format!("expected matrix `{expect_key}`, found `{}`", parts[1])));
    }
    let got_rows = parse_usize(r, parts[2], "matrix rows")?;
    let got_cols = parse_usize(r, parts[3], "matrix cols")?;
    if got_rows != rows || got_cols != cols {
        return Err(r.err(format!(
            "matrix `{expect_key}`: expected {rows}x{cols}, found {got_rows}x{got_cols}"
        )));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = r
            .next()
            .ok_or_else(|| r.err(format!("matrix `{expect_key}`: missing row {i}")))?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != cols {
            return Err(r.err(format!(
                "matrix `{expect_key}` row {i}: expected {cols} entries, found {}",
                vals.len()
            )));
        }
        for v in vals {
            entries.push(parse_f64(r, v, &format!("matrix `{expect_key}`"))?);
        }
    }
    Matrix::new(rows, cols, entries)
}

fn read_activation(r: &mut LineReader, expect_slot: &str) -> Result<ActivationSpec<f64>> {
    let body = r.expect_kv("activation")?;
    let parts: Vec<&str> = body.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(r.err(format!("activation: expected `slot kind rho b`, found `{body}`")));
    }
    if parts[0] != expect_slot {
        return Err(r.err(format!("activation: expected slot `{expect_slot}`, found `{}`", parts[0])));
    }
    let act: ActivationSpec<f64> = match parts[1] {
        "tanh" => ActivationSpec::tanh(),
        "sigmoid" => ActivationSpec::sigmoid(),
        "relu" => ActivationSpec::relu(),
        "identity" => ActivationSpec::identity(),
        other => return Err(r.err(format!("activation: unknown kind `{other}`"))),
    };
    let rho = parse_f64(r, parts[2], "activation rho")?;
    let b = parse_f64(r, parts[3], "activation b")?;
    if rho != act.rho || b != act.b {
        return Err(r.err(format!(
            "activation `{}`: rho/b do not match the kind",
            parts[1]
        )));
    }
    Ok(act)
}

pub fn model_from_str(text: &str) -> Result<ModelFile> {
    let mut r = LineReader::new(text);
    let ver = r.expect_kv("format_version")?;
    if parse_usize(&r, ver, "format_version")? != FORMAT_VERSION as usize {
        return Err(r.err(format!("format_version: expected {FORMAT_VERSION}, found {ver}")));
    }
    let cell = r.expect_kv("cell_type")?.to_string();
    let dims_line = r.expect_kv("dims")?;
    let dims: Vec<usize> = dims_line
        .split_whitespace()
        .map(|s| parse_usize(&r, s, "dims"))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(r.err(format!("dims: expected 3 integers, found `{dims_line}`")));
    }
    let act_h = read_activation(&mut r, "h")?;
    let act_y = read_activation(&mut r, "y")?;
    let weights = match cell.as_str() {
        "vanilla" => {
            let (d_x, d_h, d_y) = (dims[0], dims[1], dims[2]);
            ModelWeights::Vanilla {
                u: read_matrix(&mut r, "U", d_h, d_h)?,
                v: read_matrix(&mut r, "V", d_y, d_h)?,
                w: read_matrix(&mut r, "W", d_h, d_x)?,
            }
        }
        "mgu" => {
            let (d_x, d_h, d_y) = (dims[0], dims[1], dims[2]);
            ModelWeights::Mgu {
                w_r: read_matrix(&mut r, "W_r", d_h, d_x)?,
                w_h: read_matrix(&mut r, "W_h", d_h, d_x)?,
                u_r: read_matrix(&mut r, "U_r", d_h, d_h)?,
                u_h: read_matrix(&mut r, "U_h", d_h, d_h)?,
                v: read_matrix(&mut r, "V", d_y, d_h)?,
            }
        }
        "lstm" => {
            let (d_x, d_h, d_y) = (dims[0], dims[1], dims[2]);
            ModelWeights::Lstm {
                w_g: read_matrix(&mut r, "W_g", d_h, d_x)?,
                w_r: read_matrix(&mut r, "W_r", d_h, d_x)?,
                w_o: read_matrix(&mut r, "W_o", d_h, d_x)?,
                w_c: read_matrix(&mut r, "W_c", d_h, d_x)?,
                u_g: read_matrix(&mut r, "U_g", d_h, d_h)?,
                u_r: read_matrix(&mut r, "U_r", d_h, d_h)?,
                u_o: read_matrix(&mut r, "U_o", d_h, d_h)?,
                u_c: read_matrix(&mut r, "U_c", d_h, d_h)?,
                v: read_matrix(&mut r, "V", d_y, d_h)?,
            }
        }
        "conv" => {
            let (d, k, classes) = (dims[0], dims[1], dims[2]);
            ModelWeights::Conv {
                filters_u: read_matrix(&mut r, "U_cal", k, k)?,
                filters_v: read_matrix(&mut r, "V_cal", k, k)?,
                filters_w: read_matrix(&mut r, "W_cal", k, k)?,
                data_dim: d,
                classes,
            }
        }
        other => return Err(Error::UnsupportedCell(other.to_string())),
    };
    weights.validate()?;
    Ok(ModelFile {
        weights,
        act_h,
        act_y,
    })
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text)
}

pub fn dataset_to_string(d: &SequenceDataset) -> String {
    let mut out = String::new();
    writeln!(out, "format_version: {FORMAT_VERSION}").expect("string write");
    writeln!(
        out,
        "dataset: {} {} {} {} {} {}",
        d.m,
        d.t_len,
        d.d_x,
        d.k_classes,
        fmt_f64(d.b_x),
        d.seed
    )
    .expect("string write");
    for (seq, labels) in d.inputs.iter().zip(&d.labels) {
        for x in seq {
            let row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(out, "x {}", row.join(" ")).expect("string write");
        }
        let lab: Vec<String> = labels.iter().map(|z| z.to_string()).collect();
        writeln!(out, "z {}", lab.join(" ")).expect("string write");
    }
    out
}

pub fn save_dataset(path: &Path, d: &SequenceDataset) -> Result<()> {
    d.validate()?;
    std::fs::write(path, dataset_to_string(d))?;
    Ok(())
}

pub fn dataset_from_str(text: &str) -> Result<SequenceDataset> {
    let mut r = LineReader::new(text);
    let ver = r.expect_kv("format_version")?;
    if parse_usize(&r, ver, "format_version")? != FORMAT_VERSION as usize {
        return Err(r.err(format!("format_version: expected {FORMAT_VERSION}, found {ver}")));
    }
    let header = r.expect_kv("dataset")?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(r.err(format!("dataset: expected `m T d_x K B_x seed`, found `{header}`")));
    }
    let m = parse_usize(&r, parts[0], "dataset m")?;
    let t_len = parse_usize(&r, parts[1], "dataset T")?;
    let d_x = parse_usize(&r, parts[2], "dataset d_x")?;
    let k_classes = parse_usize(&r, parts[3], "dataset K")?;
    let b_x = parse_f64(&r, parts[4], "dataset B_x")?;
    let seed = parts[5]
        .parse::<u64>()
        .map_err(|_| r.err(format!("dataset seed: bad integer `{}`", parts[5])))?;
    let mut inputs = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let mut seq = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let line = r
                .next()
                .ok_or_else(|| r.err(format!("sequence {i}: missing input row {t}")))?;
            let body = line
                .strip_prefix("x ")
                .ok_or_else(|| r.err(format!("sequence {i} row {t}: expected `x ...`")))?;
            let vals: Vec<f64> = body
                .split_whitespace()
                .map(|s| parse_f64(&r, s, "input"))
                .collect::<Result<_>>()?;
            if vals.len() != d_x {
                return Err(r.err(format!(
                    "sequence {i} row {t}: expected {d_x} entries, found {}",
                    vals.len()
                )));
            }
            seq.push(vals);
        }
        let line = r
            .next()
            .ok_or_else(|| r.err(format!("sequence {i}: missing label row")))?;
        let body = line
            .strip_prefix("z ")
            .ok_or_else(|| r.err(format!("sequence {i}: expected `z ...` label row")))?;
        let zs: Vec<usize> = body
            .split_whitespace()
            .map(|s| parse_usize(&r, s, "label"))
            .collect::<Result<_>>()?;
        if zs.len() != t_len {
            return Err(r.err(format!(
                "sequence {i}: expected {t_len} labels, found {}",
                zs.len()
            )));
        }
        inputs.push(seq);
        labels.push(zs);
    }
    let ds = SequenceDataset {
        m,
        t_len,
        d_x,
        k_classes,
        b_x,
        inputs,
        labels,
        seed,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load_dataset(path: &Path) -> Result<SequenceDataset> {
    let text = std::fs::read_to_string(path)?;
    dataset_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, LabelRule};
    use crate::verify::random_orthogonal_bank;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_vanilla() -> ModelFile {
        ModelFile {
            weights: ModelWeights::Vanilla {
                u: Matrix::new(2, 2, vec![0.1, -0.7, 1.0 / 3.0, 2f64.sqrt()]).unwrap(),
                v: Matrix::new(3, 2, vec![1e-30, 2.5, -0.0, 0.25, 7.0, -1e30]).unwrap(),
                w: Matrix::new(2, 2, vec![0.0, 1.0, -1.0, 0.5]).unwrap(),
            },
            act_h: ActivationSpec::tanh(),
            act_y: ActivationSpec::identity(),
        }
    }

    #[test]
    fn vanilla_round_trip_is_bitwise() {
        let m = sample_vanilla();
        let text = model_to_string(&m);
        let back = model_from_str(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn mgu_and_lstm_round_trip() {
        let e = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            use rand::Rng;
            let mk = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
                Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            };
            let mgu = ModelFile {
                weights: ModelWeights::Mgu {
                    w_r: mk(&mut rng, 3, 2),
                    w_h: mk(&mut rng, 3, 2),
                    u_r: mk(&mut rng, 3, 3),
                    u_h: mk(&mut rng, 3, 3),
                    v: mk(&mut rng, 2, 3),
                },
                act_h: ActivationSpec::tanh(),
                act_y: ActivationSpec::identity(),
            };
            let lstm = ModelFile {
                weights: ModelWeights::Lstm {
                    w_g: mk(&mut rng, 2, 2),
                    w_r: mk(&mut rng, 2, 2),
                    w_o: mk(&mut rng, 2, 2),
                    w_c: mk(&mut rng, 2, 2),
                    u_g: mk(&mut rng, 2, 2),
                    u_r: mk(&mut rng, 2, 2),
                    u_o: mk(&mut rng, 2, 2),
                    u_c: mk(&mut rng, 2, 2),
                    v: mk(&mut rng, 2, 2),
                },
                act_h: ActivationSpec::tanh(),
                act_y: ActivationSpec::identity(),
            };
            (mgu, lstm)
        };
        let (mgu, lstm) = e(5);
        for m in [mgu, lstm] {
            let back = model_from_str(&model_to_string(&m)).unwrap();
            assert_eq!(m, back);
        }
    }

    #[test]
    fn gru_cell_type_is_unsupported() {
        let m = sample_vanilla();
        let text = model_to_string(&m).replace("cell_type: vanilla", "cell_type: gru");
        match model_from_str(&text) {
            Err(Error::UnsupportedCell(c)) => assert_eq!(c, "gru"),
            other => panic!("expected unsupported cell, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let m = sample_vanilla();
        let text = model_to_string(&m);
        let cut = text.len() * 2 / 3;
        let truncated = &text[..cut];
        match model_from_str(truncated) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_names_the_matrix() {
        let m = sample_vanilla();
        let text = model_to_string(&m).replace("matrix V 3 2", "matrix V 2 2");
        match model_from_str(&text) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains('V'), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_version_rejected() {
        let m = sample_vanilla();
        let text = model_to_string(&m).replace("format_version: 1", "format_version: 2");
        assert!(matches!(model_from_str(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn dataset_round_trip_is_bitwise() {
        let ds = gen_synthetic(6, 3, 2, 3, LabelRule::Teacher, 42).unwrap();
        let back = dataset_from_str(&dataset_to_string(&ds)).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn file_round_trip_via_disk() {
        let dir = std::env::temp_dir().join("rnncert-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let m = sample_vanilla();
        let path = dir.join("model.txt");
        save_model(&path, &m).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        let ds = gen_synthetic(4, 2, 2, 2, LabelRule::RunningSign, 3).unwrap();
        let dpath = dir.join("data.txt");
        save_dataset(&dpath, &ds).unwrap();
        assert_eq!(load_dataset(&dpath).unwrap(), ds);
    }

    #[test]
    fn conv_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = ModelFile {
            weights: ModelWeights::Conv {
                filters_u: random_orthogonal_bank(&mut rng, 3),
                filters_v: random_orthogonal_bank(&mut rng, 3),
                filters_w: random_orthogonal_bank(&mut rng, 3),
                data_dim: 6,
                classes: 2,
            },
            act_h: ActivationSpec::tanh(),
            act_y: ActivationSpec::identity(),
        };
        let back = model_from_str(&model_to_string(&m)).unwrap();
        assert_eq!(m, back);
    }
}
