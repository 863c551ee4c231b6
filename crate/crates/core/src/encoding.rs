//! Orthonormal sample and feature encoders.
//!
//! A [`SampleEncoder`] is an `m × n` matrix `A` with orthonormal rows. It
//! compresses `n` samples to `m`: responses become `A·y`, designs `A·X`
//! and a relatedness matrix `A·G·Aᵀ`. Because `A·Aᵀ = I_m`, i.i.d. residual
//! noise stays i.i.d. with the same variance after encoding.
//!
//! A [`FeatureEncoder`] is a `p × r` matrix `B` with orthonormal columns.
//! It compresses `p` features to `r` by right multiplication, `X·B`, and is
//! inverted on its range by `X_enc·Bᵀ`.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use faer::{Mat, MatRef};

use crate::linalg::{self, identity_defect};
use crate::lmm::GrmMatrix;
use crate::{DataMatrix, Error, Result};

/// Tolerance on `‖A·Aᵀ − I‖_max` / `‖Bᵀ·B − I‖_max`.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMethod {
    /// Top eigenvectors of the relatedness matrix.
    SvdOfGrm,
    /// Any matrix with orthonormal rows handed in by the caller.
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMethod {
    /// Top right singular vectors of the column-centered data.
    SvdOfData,
    Supplied,
}

impl fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMethod::SvdOfGrm => "svd-of-grm",
            SampleMethod::Supplied => "supplied-rows",
        })
    }
}

impl fmt::Display for FeatureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMethod::SvdOfData => "svd-of-data",
            FeatureMethod::Supplied => "supplied-columns",
        })
    }
}

/// `m × n` operator with orthonormal rows.
#[derive(Debug, Clone)]
pub struct SampleEncoder {
    matrix: Mat<f64>,
    method: SampleMethod,
    construction_seconds: f64,
}

/// `p × r` operator with orthonormal columns.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    matrix: Mat<f64>,
    method: FeatureMethod,
    construction_seconds: f64,
}

impl SampleEncoder {
    /// Wrap a caller-supplied matrix, checking `m ≤ n` and row orthonormality.
    pub fn from_matrix(a: Mat<f64>) -> Result<Self> {
        Self::checked(a, SampleMethod::Supplied, 0.0)
    }

    fn checked(a: Mat<f64>, method: SampleMethod, secs: f64) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() > a.ncols() {
            return Err(Error::dim(format!(
                "sample encoder must be m × n with 1 ≤ m ≤ n, got {} × {}",
                a.nrows(),
                a.ncols()
            )));
        }
        let gram = &a * a.transpose();
        let defect = identity_defect(gram.as_ref());
        if defect > ORTHONORMAL_TOL {
            return Err(Error::input(format!("rows are not orthonormal (defect {defect:e})")));
        }
        Ok(Self { matrix: a, method, construction_seconds: secs })
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// `n`, the number of samples consumed.
    pub fn source_rank(&self) -> usize {
        self.matrix.ncols()
    }

    /// `m`, the number of encoded samples produced.
    pub fn target_rank(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn method(&self) -> SampleMethod {
        self.method
    }

    /// Wall-clock seconds spent in [`fit_sample_encoder`]; zero for
    /// supplied matrices.
    pub fn construction_seconds(&self) -> f64 {
        self.construction_seconds
    }
}

impl FeatureEncoder {
    /// Wrap a caller-supplied matrix, checking `r ≤ p` and column
    /// orthonormality.
    pub fn from_matrix(b: Mat<f64>) -> Result<Self> {
        Self::checked(b, FeatureMethod::Supplied, 0.0)
    }

    fn checked(b: Mat<f64>, method: FeatureMethod, secs: f64) -> Result<Self> {
        if b.ncols() == 0 || b.ncols() > b.nrows() {
            return Err(Error::dim(format!(
                "feature encoder must be p × r with 1 ≤ r ≤ p, got {} × {}",
                b.nrows(),
                b.ncols()
            )));
        }
        let gram = b.transpose() * &b;
        let defect = identity_defect(gram.as_ref());
        if defect > ORTHONORMAL_TOL {
            return Err(Error::input(format!("columns are not orthonormal (defect {defect:e})")));
        }
        Ok(Self { matrix: b, method, construction_seconds: secs })
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// `p`, the original feature count.
    pub fn source_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `r`, the encoded feature count.
    pub fn target_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn method(&self) -> FeatureMethod {
        self.method
    }

    pub fn construction_seconds(&self) -> f64 {
        self.construction_seconds
    }

    /// `B·Bᵀ`, the rank-`r` orthogonal projector onto the encoder's range.
    pub fn projector(&self) -> Mat<f64> {
        &self.matrix * self.matrix.transpose()
    }
}

/// Rows of the result are the top-`m` eigenvectors of `g`, in descending
/// eigenvalue order, each oriented so its first nonzero entry is positive.
pub fn fit_sample_encoder(g: &GrmMatrix, m: usize) -> Result<SampleEncoder> {
    linalg::single_threaded();
    let start = Instant::now();
    let n = g.n_samples();
    if m == 0 || m > n {
        return Err(Error::dim(format!("target rank m = {m} must lie in 1..={n}")));
    }
    if !linalg::is_symmetric(g.matrix(), 1e-8) {
        return Err(Error::input("relatedness matrix is not symmetric"));
    }
    let (_, vecs) = linalg::sym_eigen_desc(g.matrix())?;
    let a = Mat::from_fn(m, n, |i, j| vecs[(j, i)]);
    let secs = start.elapsed().as_secs_f64();
    SampleEncoder::checked(a, SampleMethod::SvdOfGrm, secs)
}

/// Columns of the result are the top-`r` right singular vectors of the
/// column-centered `x`, oriented like [`fit_sample_encoder`].
pub fn fit_feature_encoder(x: &DataMatrix, r: usize) -> Result<FeatureEncoder> {
    linalg::single_threaded();
    let start = Instant::now();
    let (n, p) = (x.nrows(), x.ncols());
    if r == 0 || r > p {
        return Err(Error::dim(format!("target dimension r = {r} must lie in 1..={p}")));
    }
    if n < 2 {
        return Err(Error::input("feature encoder needs at least two rows"));
    }
    let centered = linalg::center_columns(x.as_ref());
    // thin SVD only yields min(n, p) right vectors
    let svd = if n >= p { centered.thin_svd() } else { centered.svd() }
        .map_err(|e| Error::Estimation(format!("SVD failed: {e:?}")))?;
    let s = svd.S();
    let v = svd.V();
    let k = v.ncols();
    let sv = |i: usize| if i < s.dim() { s[i] } else { 0.0 };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sv(j).total_cmp(&sv(i)));
    let mut b = Mat::<f64>::zeros(p, r);
    let mut buf = vec![0.0; p];
    for (dst, &src) in order.iter().take(r).enumerate() {
        for (i, x) in buf.iter_mut().enumerate() {
            *x = v[(i, src)];
        }
        linalg::orient(&mut buf);
        for (i, x) in buf.iter().enumerate() {
            b[(i, dst)] = *x;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    FeatureEncoder::checked(b, FeatureMethod::SvdOfData, secs)
}

/// `A·x`.
pub fn encode_samples(a: &SampleEncoder, x: MatRef<'_, f64>) -> Result<DataMatrix> {
    if x.nrows() != a.source_rank() {
        return Err(Error::dim(format!(
            "encoder expects {} rows, data has {}",
            a.source_rank(),
            x.nrows()
        )));
    }
    Ok(a.matrix() * x)
}

/// `x·B`.
pub fn encode_features(b: &FeatureEncoder, x: MatRef<'_, f64>) -> Result<DataMatrix> {
    if x.ncols() != b.source_dim() {
        return Err(Error::dim(format!(
            "encoder expects {} columns, data has {}",
            b.source_dim(),
            x.ncols()
        )));
    }
    Ok(x * b.matrix())
}

/// `x_enc·Bᵀ`, the minimum-norm preimage of encoded rows.
pub fn decode_features(b: &FeatureEncoder, x_enc: MatRef<'_, f64>) -> Result<DataMatrix> {
    if x_enc.ncols() != b.target_dim() {
        return Err(Error::dim(format!(
            "decoder expects {} columns, data has {}",
            b.target_dim(),
            x_enc.ncols()
        )));
    }
    Ok(x_enc * b.matrix().transpose())
}

/// Either kind of encoder, as read back from disk.
#[derive(Debug, Clone)]
pub enum Encoder {
    Sample(SampleEncoder),
    Feature(FeatureEncoder),
}

impl FromStr for SampleMethod {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "svd-of-grm" => Ok(SampleMethod::SvdOfGrm),
            "supplied-rows" => Ok(SampleMethod::Supplied),
            _ => Err(()),
        }
    }
}

impl FromStr for FeatureMethod {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "svd-of-data" => Ok(FeatureMethod::SvdOfData),
            "supplied-columns" => Ok(FeatureMethod::Supplied),
            _ => Err(()),
        }
    }
}

fn write_body(w: &mut impl Write, a: MatRef<'_, f64>) -> std::io::Result<()> {
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| a[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

impl SampleEncoder {
    /// Header `# encoder m n method`, then the `m` rows of `A`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# encoder {} {} {}", self.target_rank(), self.source_rank(), self.method)?;
        write_body(&mut w, self.matrix())
    }
}

impl FeatureEncoder {
    /// Header `# encoder p r method`, then the `p` rows of `B`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# encoder {} {} {}", self.source_dim(), self.target_dim(), self.method)?;
        write_body(&mut w, self.matrix())
    }
}

impl Encoder {
    pub fn write_csv(&self, w: impl Write) -> std::io::Result<()> {
        match self {
            Encoder::Sample(a) => a.write_csv(w),
            Encoder::Feature(b) => b.write_csv(w),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)?;
        Self::read_csv(f).map_err(|e| match e {
            Error::Input(msg) => Error::Parse { path: path.to_owned(), msg },
            other => other,
        })
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| Error::input("empty encoder file"))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [hash, tag, d0, d1, method] = fields[..] else {
            return Err(Error::input(format!("bad encoder header `{header}`")));
        };
        if hash != "#" || tag != "encoder" {
            return Err(Error::input(format!("bad encoder header `{header}`")));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::input(format!("bad dimension `{s}` in encoder header")))
        };
        let (d0, d1) = (parse_dim(d0)?, parse_dim(d1)?);
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::input(format!("non-numeric encoder entry `{c}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let mat = linalg::from_rows(&rows)?;
        if (mat.nrows(), mat.ncols()) != (d0, d1) {
            return Err(Error::dim(format!(
                "encoder header says {d0} × {d1}, body is {} × {}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if let Ok(m) = method.parse::<SampleMethod>() {
            Ok(Encoder::Sample(SampleEncoder::checked(mat, m, 0.0)?))
        } else if let Ok(m) = method.parse::<FeatureMethod>() {
            Ok(Encoder::Feature(FeatureEncoder::checked(mat, m, 0.0)?))
        } else {
            Err(Error::input(format!("unknown encoder method `{method}`")))
        }
    }
}
