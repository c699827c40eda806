use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A `T × d` real observation matrix stored row-major (one row per time point).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<S> {
    values: Vec<S>,
    len: usize,
    dim: usize,
    centered: bool,
}

impl<S: Scalar> TimeSeries<S> {
    /// Wraps row-major values. All entries must be finite.
    pub fn new(values: Vec<S>, len: usize, dim: usize) -> Result<Self> {
        if dim == 0 || len == 0 {
            return Err(Error::Data("time series needs at least one row and one column".into()));
        }
        if values.len() != len * dim {
            return Err(Error::Data(format!(
                "{} values do not form a {len}x{dim} series",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / dim + 1,
                pos % dim + 1
            )));
        }
        Ok(Self {
            values,
            len,
            dim,
            centered: false,
        })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Data("ragged rows".into()));
        }
        Self::new(rows.iter().flatten().copied().collect(), rows.len(), dim)
    }

    /// Univariate series.
    pub fn from_column(values: &[S]) -> Result<Self> {
        Self::new(values.to_vec(), values.len(), 1)
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            values: vec![S::zero(); len * dim],
            len,
            dim,
            centered: true,
        }
    }

    /// Number of time points `T`.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Observation at 0-based time `t`.
    #[inline]
    pub fn row(&self, t: usize) -> &[S] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, t: usize, component: usize) -> S {
        self.values[t * self.dim + component]
    }

    /// Observation at 0-based time `t`, zero outside `0..T`.
    #[inline]
    pub fn get_padded(&self, t: isize, component: usize) -> S {
        if t < 0 || t as usize >= self.len {
            S::zero()
        } else {
            self.values[t as usize * self.dim + component]
        }
    }

    pub fn column(&self, component: usize) -> Vec<S> {
        (0..self.len).map(|t| self.get(t, component)).collect()
    }

    pub fn column_means(&self) -> Vec<S> {
        let n = S::of_usize(self.len);
        (0..self.dim)
            .map(|a| (0..self.len).fold(S::zero(), |s, t| s + self.get(t, a)) / n)
            .collect()
    }

    /// Sample variances (1/T normalization) about the column means.
    pub fn column_variances(&self) -> Vec<S> {
        let means = self.column_means();
        let n = S::of_usize(self.len);
        (0..self.dim)
            .map(|a| {
                (0..self.len).fold(S::zero(), |s, t| {
                    let x = self.get(t, a) - means[a];
                    s + x * x
                }) / n
            })
            .collect()
    }

    /// Subtracts the column means.
    pub fn centered(&self) -> Self {
        let means = self.column_means();
        let values = self
            .values
            .chunks(self.dim)
            .flat_map(|row| row.iter().zip(&means).map(|(&x, &m)| x - m))
            .collect();
        Self {
            values,
            len: self.len,
            dim: self.dim,
            centered: true,
        }
    }

    pub fn scaled(&self, s: S) -> Self {
        Self {
            values: self.values.iter().map(|&x| x * s).collect(),
            len: self.len,
            dim: self.dim,
            centered: self.centered,
        }
    }

    /// Errors when some component is constant (zero sample variance).
    pub fn check_nondegenerate(&self) -> Result<()> {
        for (a, v) in self.column_variances().into_iter().enumerate() {
            let scale = self
                .column(a)
                .iter()
                .fold(S::zero(), |m, x| m.max(x.abs()));
            if v <= S::epsilon() * S::epsilon() * scale * scale || v == S::zero() {
                return Err(Error::Degenerate(format!(
                    "component {} has zero variance",
                    a + 1
                )));
            }
        }
        Ok(())
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        self.values.chunks(self.dim).map(<[S]>::to_vec).collect()
    }
}
