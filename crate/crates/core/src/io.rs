//! Text file formats: `.ct3` tensors, `.cmx` matrices, `.cpj` models, trace
//! CSV and JSON scenarios/reports.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::array::ScenarioConfig;
use crate::error::{Error, Result};
use crate::solver::{SolveTrace, TraceRecord};
use crate::tensor::{CpModel, Tensor3, C64};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {tok:?} as a number")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {tok:?} as a size")))
}

/// Header, shape line and `count` complex entries of a `.ct3`/`.cmx` body.
fn parse_body(
    text: &str,
    magic: &str,
    rank: usize,
) -> Result<(Vec<usize>, Vec<C64>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = || lines.by_ref().find(|(_, l)| !l.is_empty());
    match next() {
        Some((_, l)) if l == magic => {}
        Some((n, l)) => return Err(Error::Parse(format!("line {n}: expected {magic:?}, found {l:?}"))),
        None => return Err(Error::Parse("empty file".into())),
    }
    let (n, shape_line) = next().ok_or_else(|| Error::Parse("missing shape line".into()))?;
    let shape = shape_line
        .split_whitespace()
        .map(|t| parse_usize(t, n))
        .collect::<Result<Vec<_>>>()?;
    if shape.len() != rank {
        return Err(Error::Parse(format!("line {n}: expected {rank} sizes, found {}", shape.len())));
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = next().ok_or_else(|| {
            Error::Parse(format!("expected {count} entries, file ends after {}", data.len()))
        })?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse(format!("line {n}: expected \"re im\", found {l:?}")));
        }
        data.push(C64::new(parse_f64(toks[0], n)?, parse_f64(toks[1], n)?));
    }
    if let Some((n, l)) = next() {
        return Err(Error::Parse(format!("line {n}: trailing content {l:?}")));
    }
    Ok((shape, data))
}

pub fn format_ct3(a: &Tensor3) -> String {
    let (l, m, n) = a.dims();
    let mut s = format!("CT3 1\n{l} {m} {n}\n");
    for z in a.as_slice() {
        s.push_str(&num(z.re));
        s.push(' ');
        s.push_str(&num(z.im));
        s.push('\n');
    }
    s
}

pub fn parse_ct3(text: &str) -> Result<Tensor3> {
    let (shape, data) = parse_body(text, "CT3 1", 3)?;
    Tensor3::from_vec((shape[0], shape[1], shape[2]), data).map_err(|e| match e {
        Error::Dimension(m) | Error::NonFinite(m) => Error::Parse(m),
        other => other,
    })
}

pub fn format_cmx(x: &DMatrix<C64>) -> String {
    let mut s = format!("CMX 1\n{} {}\n", x.nrows(), x.ncols());
    // nalgebra storage is column-major already
    for z in x.iter() {
        s.push_str(&num(z.re));
        s.push(' ');
        s.push_str(&num(z.im));
        s.push('\n');
    }
    s
}

pub fn parse_cmx(text: &str) -> Result<DMatrix<C64>> {
    let (shape, data) = parse_body(text, "CMX 1", 2)?;
    if shape[0] == 0 || shape[1] == 0 {
        return Err(Error::Parse("matrix dimensions must be positive".into()));
    }
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Parse("matrix has non-finite entries".into()));
    }
    Ok(DMatrix::from_vec(shape[0], shape[1], data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct CpjFile {
    r: usize,
    dims: [usize; 3],
    lambda: Vec<[f64; 2]>,
    U: Vec<[f64; 2]>,
    V: Vec<[f64; 2]>,
    W: Vec<[f64; 2]>,
}

fn pairs<'a>(it: impl IntoIterator<Item = &'a C64>) -> Vec<[f64; 2]> {
    it.into_iter().map(|z| [z.re, z.im]).collect()
}

pub fn format_cpj(model: &CpModel) -> Result<String> {
    let (l, m, n) = model.dims();
    let file = CpjFile {
        r: model.rank(),
        dims: [l, m, n],
        lambda: pairs(model.lambda()),
        U: pairs(model.u().iter()),
        V: pairs(model.v().iter()),
        W: pairs(model.w().iter()),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_cpj(text: &str) -> Result<CpModel> {
    let f: CpjFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    let mat = |rows: usize, data: &[[f64; 2]], name: &str| -> Result<DMatrix<C64>> {
        if data.len() != rows * f.r {
            return Err(Error::Parse(format!(
                "{name} has {} entries, expected {rows}x{}",
                data.len(),
                f.r
            )));
        }
        Ok(DMatrix::from_iterator(rows, f.r, data.iter().map(|[re, im]| C64::new(*re, *im))))
    };
    if f.lambda.len() != f.r {
        return Err(Error::Parse(format!("lambda has {} entries, r = {}", f.lambda.len(), f.r)));
    }
    let lambda = f.lambda.iter().map(|[re, im]| C64::new(*re, *im)).collect();
    let (u, v, w) = (mat(f.dims[0], &f.U, "U")?, mat(f.dims[1], &f.V, "V")?, mat(f.dims[2], &f.W, "W")?);
    CpModel::new(lambda, u, v, w)
}

pub fn format_trace(trace: &SolveTrace) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in &trace.records {
        w.serialize(rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("scenario file: {e}")))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_ct3(path: &Path) -> Result<Tensor3> {
    parse_ct3(&read_text(path)?)
}

pub fn write_ct3(path: &Path, a: &Tensor3) -> Result<()> {
    write_text(path, &format_ct3(a))
}

pub fn read_cmx(path: &Path) -> Result<DMatrix<C64>> {
    parse_cmx(&read_text(path)?)
}

pub fn write_cmx(path: &Path, x: &DMatrix<C64>) -> Result<()> {
    write_text(path, &format_cmx(x))
}

pub fn read_cpj(path: &Path) -> Result<CpModel> {
    parse_cpj(&read_text(path)?)
}

pub fn write_cpj(path: &Path, model: &CpModel) -> Result<()> {
    write_text(path, &format_cpj(model)?)
}

pub fn read_scenario(path: &Path) -> Result<ScenarioConfig> {
    parse_scenario(&read_text(path)?)
}
