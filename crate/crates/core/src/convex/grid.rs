//! Uniform tensor grids and sampled function tables.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Axis-aligned box with a uniform number of nodes per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != points.len() {
            return Err(invalid("grid box needs matching, non-empty lo/hi/points"));
        }
        for a in 0..lo.len() {
            if !(lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]) {
                return Err(invalid(format!("empty grid domain on axis {a}: [{}, {}]", lo[a], hi[a])));
            }
            if points[a] < 3 {
                return Err(invalid(format!("grid needs at least 3 points per axis, axis {a} has {}", points[a])));
            }
        }
        Ok(Self { lo, hi, points })
    }

    /// Cube `[-radius, radius]^dim` with `points` nodes per axis.
    pub fn symmetric(dim: usize, radius: f64, points: usize) -> Result<Self> {
        Self::new(vec![-radius; dim], vec![radius; dim], vec![points; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.points[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.points[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.step(axis)
        }
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.points[a + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.points[a];
            flat /= self.points[a];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    pub fn on_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .any(|(a, &i)| i == 0 || i + 1 == self.points[a])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let (lo, hi): (Vec<f64>, Vec<f64>) = if factor >= 0.0 {
            (
                self.lo.iter().map(|v| v * factor).collect(),
                self.hi.iter().map(|v| v * factor).collect(),
            )
        } else {
            (
                self.hi.iter().map(|v| v * factor).collect(),
                self.lo.iter().map(|v| v * factor).collect(),
            )
        };
        Self {
            lo,
            hi,
            points: self.points.clone(),
        }
    }
}

/// What a table returns outside its box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extrapolation {
    /// `+inf`: the function is treated as undefined off the box.
    Infinite,
    /// Multilinear extension of the boundary cell.
    Linear,
}

/// Values sampled on a [`GridSpec`], evaluated by multilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub extrapolation: Extrapolation,
}

impl GridTable {
    pub fn new(spec: GridSpec, values: Vec<f64>, extrapolation: Extrapolation) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(invalid(format!(
                "table has {} values for a grid of {} points",
                values.len(),
                spec.len()
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("table contains NaN"));
        }
        Ok(Self {
            spec,
            values,
            extrapolation,
        })
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(spec: GridSpec, extrapolation: Extrapolation, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..spec.len()).map(|i| f(&spec.point(i))).collect();
        Self::new(spec, values, extrapolation)
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let d = self.spec.dim();
        debug_assert_eq!(z.len(), d);
        let mut base = 0usize;
        let strides = self.spec.strides();
        let mut frac_buf = [0.0f64; 8];
        let mut frac_vec;
        let frac: &mut [f64] = if d <= 8 {
            &mut frac_buf[..d]
        } else {
            frac_vec = vec![0.0; d];
            &mut frac_vec[..]
        };
        for a in 0..d {
            let h = self.spec.step(a);
            let pos = (z[a] - self.spec.lo[a]) / h;
            let outside = z[a] < self.spec.lo[a] - 1e-12 * h || z[a] > self.spec.hi[a] + 1e-12 * h;
            if outside && self.extrapolation == Extrapolation::Infinite {
                return f64::INFINITY;
            }
            let last = self.spec.points[a] - 2;
            let cell = if pos <= 0.0 { 0 } else { (pos.floor() as usize).min(last) };
            frac[a] = pos - cell as f64;
            base += cell * strides[a];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut off = base;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    off += strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                let v = self.values[off];
                if v.is_infinite() {
                    return v;
                }
                acc += w * v;
            }
        }
        acc
    }

    /// First axis/index where a discrete second difference drops below
    /// `-tolerance * max(1, max|value|)`.
    pub fn convexity_violation(&self, tolerance: f64) -> Option<(usize, usize, f64)> {
        let scale = self
            .values
            .iter()
            .filter(|v| v.is_finite())
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = tolerance * scale;
        let strides = self.spec.strides();
        for a in 0..self.spec.dim() {
            let h2 = self.spec.step(a).powi(2);
            for flat in 0..self.values.len() {
                let i = self.spec.multi_index(flat)[a];
                if i == 0 || i + 1 == self.spec.points[a] {
                    continue;
                }
                let (l, c, r) = (
                    self.values[flat - strides[a]],
                    self.values[flat],
                    self.values[flat + strides[a]],
                );
                if !(l.is_finite() && c.is_finite() && r.is_finite()) {
                    continue;
                }
                let second = l - 2.0 * c + r;
                if second < -tol {
                    return Some((a, flat, second / h2));
                }
            }
        }
        None
    }

    /// Writes the table as CSV with header `x1,...,xd,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = (1..=d).map(|a| format!("x{a}")).chain(["value".to_string()]).collect();
        writeln!(out, "{}", header.join(","))?;
        for flat in 0..self.values.len() {
            let p = self.spec.point(flat);
            let row: Vec<String> = p
                .iter()
                .chain(std::iter::once(&self.values[flat]))
                .map(|v| format!("{v:?}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a table written by [`GridTable::write_csv`]. Rows may come in any
    /// order; the grid is recovered from the distinct coordinates per axis.
    pub fn read_csv<R: BufRead>(input: R, extrapolation: Extrapolation) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Table("empty input".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols.last() != Some(&"value") {
            return Err(Error::Table("header must be coord...,value".into()));
        }
        let d = cols.len() - 1;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Table(format!("line {}: {e}", lineno + 2)))?;
            if row.len() != d + 1 {
                return Err(Error::Table(format!("line {}: expected {} columns", lineno + 2, d + 1)));
            }
            rows.push(row);
        }
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
        for row in &rows {
            for a in 0..d {
                axes[a].push(row[a]);
            }
        }
        for ax in &mut axes {
            ax.sort_by(f64::total_cmp);
            ax.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let spec = GridSpec::new(
            axes.iter().map(|a| a[0]).collect(),
            axes.iter().map(|a| *a.last().unwrap()).collect(),
            axes.iter().map(Vec::len).collect(),
        )?;
        if rows.len() != spec.len() {
            return Err(Error::Table(format!("{} rows for a {}-point grid", rows.len(), spec.len())));
        }
        let strides = spec.strides();
        let mut values = vec![f64::NAN; spec.len()];
        for row in &rows {
            let mut flat = 0;
            for a in 0..d {
                let pos = ((row[a] - spec.lo[a]) / spec.step(a)).round();
                if pos < 0.0 || pos as usize >= spec.points[a] || (spec.coord(a, pos as usize) - row[a]).abs() > 1e-9 * (1.0 + row[a].abs()) {
                    return Err(Error::Table("coordinates are not on a uniform grid".into()));
                }
                flat += pos as usize * strides[a];
            }
            values[flat] = row[d];
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Table("duplicate or missing grid rows".into()));
        }
        Self::new(spec, values, extrapolation)
    }
}
