//! Periodic tensor grids on `[-L/2, L/2)^N` and their discrete Fourier transform.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::SigmaParams;

const MAGIC: &[u8; 8] = b"FDGRID1\n";

/// Grid values in row-major order (axis 0 slowest), `n` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    params: SigmaParams,
    length: f64,
    n: usize,
    values: Vec<f64>,
    pub time_tag: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dim: usize,
    sigma: f64,
    length: f64,
    n: usize,
    time_tag: Option<f64>,
}

impl GridField {
    pub fn new(params: SigmaParams, length: f64, n: usize, values: Vec<f64>) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("period must be positive, got {length}")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "points per axis must be a power of two, got {n}"
            )));
        }
        let expected = n.pow(params.dim() as u32);
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite grid value at index {i}")));
        }
        Ok(Self { params, length, n, values, time_tag: None })
    }

    /// Sample `f` at the grid nodes.
    pub fn from_fn(
        params: SigmaParams,
        length: f64,
        n: usize,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let dim = params.dim();
        let h = length / n as f64;
        let total = n.pow(dim as u32);
        let mut x = vec![0.0; dim];
        let values = (0..total)
            .map(|idx| {
                let mut rem = idx;
                for a in (0..dim).rev() {
                    x[a] = -0.5 * length + h * (rem % n) as f64;
                    rem /= n;
                }
                f(&x)
            })
            .collect();
        Self::new(params, length, n, values)
    }

    pub fn zeros_like(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.params, self.length, self.n, values)?;
        out.time_tag = self.time_tag;
        Ok(out)
    }

    pub fn params(&self) -> &SigmaParams {
        &self.params
    }
    pub fn dim(&self) -> usize {
        self.params.dim()
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim() as i32)
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let h = self.h();
        self.multi_index(idx)
            .into_iter()
            .map(|i| -0.5 * self.length + h * i as f64)
            .collect()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.params == other.params && self.length == other.length && self.n == other.n
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(N={}, L={}, n={}) vs (N={}, L={}, n={})",
                self.dim(),
                self.length,
                self.n,
                other.dim(),
                other.length,
                other.n
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.cell_volume()
    }
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }
    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.cell_volume()
    }
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `a*self + b*other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert!(self.same_grid(other));
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self { values, ..self.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Flat little-endian binary preceded by a JSON header.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            dim: self.dim(),
            sigma: self.params.sigma(),
            length: self.length,
            n: self.n,
            time_tag: self.time_tag,
        })?;
        let mut buf = Vec::with_capacity(16 + header.len() + 8 * self.values.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        crate::kernel::io::write_atomic(path, &buf)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let buf = fs::read(path)?;
        let bad = |what: &str| Error::GridMismatch(format!("{}: {what}", path.display()));
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err(bad("not a grid file"));
        }
        let hlen = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
        let body = buf.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let data = &buf[16 + hlen..];
        if data.len() % 8 != 0 {
            return Err(bad("data length not a multiple of 8"));
        }
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let params = SigmaParams::new(header.dim, header.sigma)?;
        let mut out = Self::new(params, header.length, header.n, values)?;
        out.time_tag = header.time_tag;
        Ok(out)
    }

    /// `x,value` rows; one-dimensional grids only.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.dim() != 1 {
            return Err(Error::GridMismatch("CSV export is for N = 1 grids".into()));
        }
        let mut out = Vec::new();
        writeln!(out, "x,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:e},{v:e}", self.coords(i)[0])?;
        }
        crate::kernel::io::write_atomic(path, &out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub file: String,
    pub time: Option<f64>,
    pub mean: f64,
    pub l1: f64,
    pub l2: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub dim: usize,
    pub sigma: f64,
    pub length: f64,
    pub n: usize,
    pub parameters: serde_json::Value,
    pub snapshots: Vec<SnapshotEntry>,
}

/// Writes `<prefix>-0000.grid`, ... and `<prefix>.json` into `dir`.
pub fn write_snapshots(
    dir: &Path,
    prefix: &str,
    snaps: &[GridField],
    parameters: serde_json::Value,
) -> Result<SnapshotManifest> {
    let first = snaps
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty snapshot list".into()))?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(snaps.len());
    for (i, s) in snaps.iter().enumerate() {
        first.check_same_grid(s)?;
        let file = format!("{prefix}-{i:04}.grid");
        s.write_binary(&dir.join(&file))?;
        entries.push(SnapshotEntry {
            file,
            time: s.time_tag,
            mean: s.mean(),
            l1: s.l1_norm(),
            l2: s.l2_norm(),
            sup: s.sup_norm(),
        });
    }
    let manifest = SnapshotManifest {
        dim: first.dim(),
        sigma: first.params.sigma(),
        length: first.length,
        n: first.n,
        parameters,
        snapshots: entries,
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    crate::kernel::io::write_atomic(&dir.join(format!("{prefix}.json")), &json)?;
    Ok(manifest)
}

pub fn read_snapshots(dir: &Path, prefix: &str) -> Result<(SnapshotManifest, Vec<GridField>)> {
    let manifest: SnapshotManifest =
        serde_json::from_slice(&fs::read(dir.join(format!("{prefix}.json")))?)?;
    let snaps = manifest
        .snapshots
        .iter()
        .map(|e| GridField::read_binary(&dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, snaps))
}

/// Signed integer frequency of FFT bin `k` on `n` points.
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Forward/inverse N-dimensional FFT on an `n^N` grid.
#[derive(Clone)]
pub struct Spectral {
    dim: usize,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(dim: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { dim, n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn for_field(f: &GridField) -> Self {
        Self::new(f.dim(), f.n())
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            for start in 0..total {
                // first element of each line along `axis`
                if (start / stride) % n != 0 {
                    continue;
                }
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + j * stride];
                }
                plan.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[start + j * stride] = *v;
                }
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.fwd);
        data
    }

    pub fn forward_complex(&self, mut data: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut data, &self.fwd);
        data
    }

    /// Inverse transform including the `1/n^N` factor; returns real parts.
    pub fn inverse(&self, coeffs: Vec<Complex64>) -> Vec<f64> {
        let mut data = coeffs;
        self.transform(&mut data, &self.inv);
        let scale = 1.0 / data.len() as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    /// `|ξ_k|` for every bin, `ξ = 2π k / L`.
    pub fn wavenumbers(&self, length: f64) -> Vec<f64> {
        let n = self.n;
        let total = n.pow(self.dim as u32);
        (0..total)
            .map(|mut idx| {
                let mut s2 = 0.0;
                for _ in 0..self.dim {
                    let k = signed_frequency(idx % n, n) as f64;
                    s2 += k * k;
                    idx /= n;
                }
                2.0 * PI / length * s2.sqrt()
            })
            .collect()
    }

    /// Apply a radial Fourier multiplier `m(|ξ|)`.
    pub fn multiply(&self, f: &GridField, m: impl Fn(f64) -> f64) -> GridField {
        let mut c = self.forward(f.values());
        for (ci, xi) in c.iter_mut().zip(self.wavenumbers(f.length())) {
            *ci *= m(xi);
        }
        let mut out = f.zeros_like();
        out.values = self.inverse(c);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip_2d() {
        let p = SigmaParams::new(2, 1.0).unwrap();
        let f = GridField::from_fn(p, 3.0, 8, |x| (x[0] * 1.3).sin() + x[1] * x[1]).unwrap();
        let sp = Spectral::for_field(&f);
        let back = sp.inverse(sp.forward(f.values()));
        for (a, b) in back.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn fft_axis_ordering() {
        // a mode varying only along axis 1 lands in bin (0, 1)
        let p = SigmaParams::new(2, 1.0).unwrap();
        let l = 2.0 * PI;
        let f = GridField::from_fn(p, l, 8, |x| x[1].cos()).unwrap();
        let c = Spectral::for_field(&f).forward(f.values());
        assert!((c[1].norm() - 32.0).abs() < 1e-10);
        assert!(c[8].norm() < 1e-10);
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = SigmaParams::new(1, 0.5).unwrap();
        let mut f = GridField::from_fn(p, 10.0, 16, |x| (-x[0] * x[0]).exp()).unwrap();
        f.time_tag = Some(0.25);
        let path = dir.path().join("f.bin");
        f.write_binary(&path).unwrap();
        assert_eq!(GridField::read_binary(&path).unwrap(), f);
        f.write_csv(&dir.path().join("f.csv")).unwrap();
    }

    #[test]
    fn rejects_bad_grids() {
        let p = SigmaParams::new(1, 1.0).unwrap();
        assert!(GridField::new(p, 1.0, 12, vec![0.0; 12]).is_err());
        assert!(GridField::new(p, 1.0, 8, vec![0.0; 7]).is_err());
        assert!(GridField::new(p, 1.0, 8, vec![f64::NAN; 8]).is_err());
    }

    #[test]
    fn snapshot_series_round_trip() {
        let p = SigmaParams::new(1, 0.5).unwrap();
        let snaps: Vec<GridField> = (0..3)
            .map(|k| {
                let mut f = GridField::from_fn(p, 4.0, 16, |x| (k as f64 + 1.0) * x[0]).unwrap();
                f.time_tag = Some(0.5 * k as f64);
                f
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let m = write_snapshots(dir.path(), "u", &snaps, serde_json::json!({"scheme": "test"})).unwrap();
        assert_eq!(m.snapshots[2].file, "u-0002.grid");
        let (back_m, back) = read_snapshots(dir.path(), "u").unwrap();
        assert_eq!(back_m, m);
        assert_eq!(back, snaps);
    }
}
