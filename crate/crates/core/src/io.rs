//! File formats: binary field files, coefficient table files, 16-bit PGM
//! export, CSV reports and the JSON run configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::eval::EvalWindow;
use crate::graph::{CovarianceTable, GaussianityConfig, ModelName, ModelSpec};
use crate::grid::{ComplexField, Domain, C64};

const FIELD_MAGIC: &[u8; 4] = b"PHKF";
const TABLE_MAGIC: &[u8; 4] = b"PHKT";
const VERSION: u32 = 1;

/// Field file extension.
pub const FIELD_EXT: &str = "phkf";

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl Payload {
    fn len(&self) -> usize {
        match self {
            Payload::Real(v) => v.len(),
            Payload::Complex(v) => v.len(),
        }
    }
}

/// N-dimensional array as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub dims: Vec<u64>,
    pub payload: Payload,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

impl FieldFile {
    pub fn new(dims: Vec<u64>, payload: Payload) -> Result<Self> {
        let n: u64 = dims.iter().product();
        if n as usize != payload.len() {
            return config(format!("dims {dims:?} do not match a payload of {}", payload.len()));
        }
        Ok(FieldFile { dims, payload })
    }

    pub fn real_2d(side: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![side as u64, side as u64], Payload::Real(values))
    }

    pub fn complex_2d(side: usize, values: Vec<C64>) -> Result<Self> {
        Self::new(vec![side as u64, side as u64], Payload::Complex(values))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 8 * self.dims.len() + 16 * self.payload.len());
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.payload {
            Payload::Real(v) => {
                out.push(0);
                v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
            Payload::Complex(v) => {
                out.push(1);
                for z in v {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let mut r = Reader { b, pos: 0 };
        if r.take(4)? != FIELD_MAGIC {
            return format_err("not a field file (bad magic)");
        }
        let version = r.u32()?;
        if version != VERSION {
            return format_err(format!("unsupported field file version {version}"));
        }
        let ndim = r.u32()? as usize;
        if ndim > 16 {
            return format_err(format!("implausible dimension count {ndim}"));
        }
        let dims = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let count = dims.iter().try_fold(1u64, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Format("dims overflow".into()))?;
        let tag = r.take(1)?[0];
        let width = match tag {
            0 => 8,
            1 => 16,
            t => return format_err(format!("unknown dtype tag {t}")),
        };
        if (b.len() - r.pos) as u64 != count * width {
            return format_err(format!("payload is {} bytes, expected {}", b.len() - r.pos, count * width));
        }
        let payload = if tag == 0 {
            Payload::Real((0..count).map(|_| r.f64()).collect::<Result<_>>()?)
        } else {
            Payload::Complex((0..count).map(|_| Ok(C64::new(r.f64()?, r.f64()?))).collect::<Result<_>>()?)
        };
        Ok(FieldFile { dims, payload })
    }

    /// Square 2D field; real payloads become fields with zero imaginary part.
    pub fn to_field(&self, domain: Domain) -> Result<ComplexField> {
        if self.dims.len() != 2 || self.dims[0] != self.dims[1] {
            return format_err(format!("expected a square 2D field, got dims {:?}", self.dims));
        }
        let side = self.dims[0] as usize;
        let data = match &self.payload {
            Payload::Real(v) => v.iter().map(|&x| C64::new(x, 0.0)).collect(),
            Payload::Complex(v) => v.clone(),
        };
        ComplexField::from_vec(side, data, domain)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return format_err("file is truncated");
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_field_file(path: &Path, f: &FieldFile) -> Result<()> {
    Ok(fs::write(path, f.to_bytes())?)
}

pub fn read_field_file(path: &Path) -> Result<FieldFile> {
    FieldFile::from_bytes(&fs::read(path)?)
}

/// Writes a space-domain field, real payload when its imaginary part is zero.
pub fn save_field(path: &Path, x: &ComplexField) -> Result<()> {
    let f = if x.max_abs_imag() == 0.0 {
        FieldFile::real_2d(x.side(), x.real_part())?
    } else {
        FieldFile::complex_2d(x.side(), x.data().to_vec())?
    };
    write_field_file(path, &f)
}

pub fn load_field(path: &Path) -> Result<ComplexField> {
    read_field_file(path)?.to_field(Domain::Space)
}

/// Field files in a directory, sorted by name. A plain file yields itself.
pub fn field_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == FIELD_EXT))
        .collect();
    out.sort();
    if out.is_empty() {
        return config(format!("no .{FIELD_EXT} files in {}", path.display()));
    }
    Ok(out)
}

pub fn load_fields(path: &Path) -> Result<Vec<ComplexField>> {
    field_paths(path)?.iter().map(|p| load_field(p)).collect()
}

/// Table file: magic, version, JSON length, JSON body.
pub fn table_to_bytes(t: &CovarianceTable) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(t)?;
    let mut out = Vec::with_capacity(16 + body.len());
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn table_from_bytes(b: &[u8]) -> Result<CovarianceTable> {
    let mut r = Reader { b, pos: 0 };
    if r.take(4)? != TABLE_MAGIC {
        return format_err("not a table file (bad magic)");
    }
    let version = r.u32()?;
    if version != VERSION {
        return format_err(format!("unsupported table file version {version}"));
    }
    let len = r.u64()? as usize;
    let body = r.take(len)?;
    if r.pos != b.len() {
        return format_err("trailing bytes after the table body");
    }
    serde_json::from_slice(body).map_err(|e| Error::Format(format!("table body: {e}")))
}

pub fn write_table(path: &Path, t: &CovarianceTable) -> Result<()> {
    Ok(fs::write(path, table_to_bytes(t)?)?)
}

pub fn read_table(path: &Path) -> Result<CovarianceTable> {
    table_from_bytes(&fs::read(path)?)
}

/// Min–max scaling recorded next to a PGM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgmSidecar {
    pub min: f64,
    pub max: f64,
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

const PGM_MAX: f64 = 65535.0;

/// 16-bit binary PGM bytes (big-endian samples) and the scaling. A constant
/// field maps to mid gray.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Result<(Vec<u8>, PgmSidecar)> {
    if values.len() != width * height {
        return config("image size does not match the value count");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("cannot export non-finite values".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let q = if max > min { ((v - min) / (max - min) * PGM_MAX).round() } else { 32768.0 };
        out.extend_from_slice(&(q as u16).to_be_bytes());
    }
    Ok((out, PgmSidecar { min, max }))
}

/// Parses a 16-bit PGM into (width, height, samples).
pub fn decode_pgm(b: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < b.len() && (b[pos].is_ascii_whitespace() || b[pos] == b'#') {
            if b[pos] == b'#' {
                while pos < b.len() && b[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < b.len() && !b[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return format_err("truncated PGM header");
        }
        tokens.push(String::from_utf8_lossy(&b[start..pos]).into_owned());
    }
    // exactly one whitespace byte before the raster
    pos += 1;
    if tokens[0] != "P5" {
        return format_err("not a binary PGM");
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM header value {s}")));
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 65535 {
        return format_err(format!("expected a 16-bit PGM, maxval {maxval}"));
    }
    if b.len() < pos || b.len() - pos != 2 * w * h {
        return format_err("PGM raster size does not match the header");
    }
    let px = b[pos..].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, px))
}

/// Values recovered from samples and sidecar, within (max − min)/(2·65535).
pub fn restore_pgm(px: &[u16], s: &PgmSidecar) -> Vec<f64> {
    px.iter()
        .map(|&p| if s.max > s.min { s.min + p as f64 / PGM_MAX * (s.max - s.min) } else { s.min })
        .collect()
}

/// Writes `path` and its `.json` sidecar.
pub fn export_pgm(x: &ComplexField, path: &Path) -> Result<PgmSidecar> {
    let (bytes, side) = encode_pgm(&x.real_part(), x.side(), x.side())?;
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
    Ok(side)
}

pub fn import_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h, px) = decode_pgm(&fs::read(path)?)?;
    let s: PgmSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    Ok((w, h, restore_pgm(&px, &s)))
}

/// Round-trip-safe float text (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with a header row and fixed column order.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        if r.len() != header.len() {
            return config("CSV row width does not match the header");
        }
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Which model to use: a preset or a fully specified one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ModelChoice {
    Preset { name: ModelName, scales: usize, angles: usize },
    Spec(ModelSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussSettings {
    /// Dual gradient tolerance.
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// Samples drawn by `gauss-sample`.
    pub samples: usize,
}

impl Default for GaussSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: None, samples: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub window: EvalWindow,
    /// Relative tolerance of the operator-norm power iteration.
    pub power_tol: f64,
    /// Exponents and scales of the long-range profiles.
    pub profile_k: Vec<i32>,
    pub profile_j: Vec<usize>,
    pub profile_a_max: usize,
    /// Structure-function grid.
    pub structure_j: Vec<usize>,
    pub structure_q: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            window: EvalWindow::default(),
            power_tol: 1e-6,
            profile_k: vec![0, 1],
            profile_j: vec![1, 2],
            profile_a_max: 4,
            structure_j: vec![1, 2, 3],
            structure_q: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        }
    }
}

/// JSON run configuration; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub gaussian: GaussSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub gaussianity: GaussianityConfig,
    /// Accepted for compatibility; computation is single-threaded.
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_restarts() -> usize {
    10
}

fn default_threads() -> usize {
    1
}

impl RunConfig {
    pub fn preset(name: ModelName, scales: usize, angles: usize) -> Self {
        RunConfig {
            model: ModelChoice::Preset { name, scales, angles },
            seed: 0,
            restarts: default_restarts(),
            gaussian: GaussSettings::default(),
            eval: EvalSettings::default(),
            gaussianity: GaussianityConfig::default(),
            threads: default_threads(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let s = match &self.model {
            ModelChoice::Preset { name, scales, angles } => ModelSpec::preset(*name, *scales, *angles)?,
            ModelChoice::Spec(s) => s.clone(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec()?;
        if self.restarts == 0 {
            return config("restart count must be at least 1");
        }
        if self.threads == 0 {
            return config("thread count must be at least 1");
        }
        if !(self.gaussian.tol > 0.0) || !(self.eval.power_tol > 0.0) {
            return config("tolerances must be positive");
        }
        if self.eval.structure_q.iter().any(|q| !(*q >= 1.0)) {
            return config("structure exponents must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_foveal_edges, estimate_table};
    use crate::grid::{white_noise, Seed};
    use crate::wavelet::WaveletBank;
    use proptest::prelude::*;

    #[test]
    fn field_header_layout() {
        let f = FieldFile::real_2d(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = f.to_bytes();
        assert_eq!(&b[..4], b"PHKF");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 2);
        assert_eq!(b[28], 0);
        assert_eq!(b.len(), 29 + 4 * 8);
        assert_eq!(f64::from_le_bytes(b[29..37].try_into().unwrap()), 1.0);
        let c = FieldFile::complex_2d(2, vec![C64::new(1.0, -1.0); 4]).unwrap();
        assert_eq!(c.to_bytes().len(), 29 + 4 * 16);
    }

    #[test]
    fn field_reader_rejects_bad_input() {
        let mut b = FieldFile::real_2d(2, vec![0.0; 4]).unwrap().to_bytes();
        assert!(FieldFile::from_bytes(&b[..b.len() - 1]).is_err());
        b[4] = 2;
        assert!(matches!(FieldFile::from_bytes(&b), Err(Error::Format(_))));
        b[4] = 1;
        b[0] = b'X';
        assert!(matches!(FieldFile::from_bytes(&b), Err(Error::Format(_))));
        assert!(FieldFile::real_2d(2, vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn fields_round_trip_bit_exact(v in proptest::collection::vec(any::<f64>(), 16), im in any::<bool>()) {
            let f = if im {
                FieldFile::complex_2d(2, v.chunks(2).cycle().take(4).map(|c| C64::new(c[0], c[1])).collect()).unwrap()
            } else {
                FieldFile::real_2d(4, v.clone()).unwrap()
            };
            let g = FieldFile::from_bytes(&f.to_bytes()).unwrap();
            prop_assert_eq!(f.to_bytes(), g.to_bytes());
        }

        #[test]
        fn pgm_round_trip_within_quantization(v in proptest::collection::vec(-1e3f64..1e3, 12)) {
            let (b, s) = encode_pgm(&v, 4, 3).unwrap();
            let (w, h, px) = decode_pgm(&b).unwrap();
            prop_assert_eq!((w, h), (4, 3));
            let back = restore_pgm(&px, &s);
            let bound = (s.max - s.min) / (2.0 * 65535.0) * (1.0 + 1e-9) + 1e-12;
            for (a, b) in v.iter().zip(&back) {
                prop_assert!((a - b).abs() <= bound);
            }
        }
    }

    #[test]
    fn pgm_size_and_constant_field() {
        let x = white_noise(256, 1.0, Seed(2)).unwrap();
        let (b, _) = encode_pgm(&x.real_part(), 256, 256).unwrap();
        let header = b"P5\n256 256\n65535\n".len();
        assert_eq!(b.len(), header + 131072);
        let (b, s) = encode_pgm(&[3.5; 9], 3, 3).unwrap();
        assert_eq!(s.min, s.max);
        let (_, _, px) = decode_pgm(&b).unwrap();
        assert!(px.iter().all(|&p| p == px[0]));
        assert_eq!(restore_pgm(&px, &s), vec![3.5; 9]);
    }

    #[test]
    fn table_round_trip_is_exact_and_deterministic() {
        let bank = WaveletBank::bump(16, 2, 4).unwrap();
        let spec = ModelSpec::preset(ModelName::B, 2, 4).unwrap();
        let e = build_foveal_edges(&spec).unwrap();
        let x = white_noise(16, 1.0, Seed(3)).unwrap();
        let t = estimate_table(&x, &bank, &e).unwrap();
        let b = table_to_bytes(&t).unwrap();
        assert_eq!(&b[..4], b"PHKT");
        assert_eq!(table_from_bytes(&b).unwrap(), t);
        assert_eq!(b, table_to_bytes(&estimate_table(&x, &bank, &e).unwrap()).unwrap());
        assert!(table_from_bytes(&b[..b.len() - 2]).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok = r#"{"model": {"preset": {"name": "B", "scales": 3, "angles": 4}}, "seed": 5}"#;
        let c = RunConfig::from_json(ok).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.model_spec().unwrap().name, ModelName::B);
        let bad = r#"{"model": {"preset": {"name": "B", "scales": 3, "angles": 4}}, "sede": 5}"#;
        assert!(matches!(RunConfig::from_json(bad), Err(Error::Json(_))));
        let zero = r#"{"model": {"preset": {"name": "A", "scales": 3, "angles": 4}}, "restarts": 0}"#;
        assert!(matches!(RunConfig::from_json(zero), Err(Error::Config(_))));
        let c2 = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, c2);
    }

    #[test]
    fn floats_print_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
