//! Time-sampled fields on [0, T], optionally carrying their time derivative.

use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind};
use crate::grid::Grid;

/// A field sampled at `t_i = i T / (n_t - 1)`.
///
/// The optional `rates` channel holds the time derivative at the same
/// samples. It is propagated analytically (product and chain rules) by the
/// constructions of this crate, so time derivatives never rely on
/// differencing the sampled values.
#[derive(Debug, Clone)]
pub struct TimeField {
    grid: Grid,
    kind: FieldKind,
    values: Vec<Field>,
    rates: Option<Vec<Field>>,
}

impl TimeField {
    pub fn new(grid: Grid, kind: FieldKind, values: Vec<Field>, rates: Option<Vec<Field>>) -> Result<Self> {
        if values.len() != grid.n_t {
            return Err(CiwError::Shape(format!("expected {} samples, got {}", grid.n_t, values.len())));
        }
        for v in values.iter().chain(rates.iter().flatten()) {
            if v.space() != grid.space || v.kind() != kind {
                return Err(CiwError::Shape("sample does not match the time field grid".into()));
            }
        }
        if let Some(r) = &rates {
            if r.len() != grid.n_t {
                return Err(CiwError::Shape("rate channel length mismatch".into()));
            }
        }
        Ok(Self { grid, kind, values, rates })
    }

    pub fn zeros(grid: Grid, kind: FieldKind, with_rates: bool) -> Self {
        let z = Field::zeros(grid.space, kind);
        let values = vec![z.clone(); grid.n_t];
        let rates = with_rates.then(|| vec![z; grid.n_t]);
        Self { grid, kind, values, rates }
    }

    /// Time-independent field (zero rate).
    pub fn stationary(grid: Grid, field: Field) -> Self {
        let kind = field.kind();
        let zero = Field::zeros(grid.space, kind);
        Self { grid, kind, values: vec![field; grid.n_t], rates: Some(vec![zero; grid.n_t]) }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> &Field {
        &self.values[i]
    }

    pub fn values(&self) -> &[Field] {
        &self.values
    }

    pub fn has_rates(&self) -> bool {
        self.rates.is_some()
    }

    pub fn rate(&self, i: usize) -> Option<&Field> {
        self.rates.as_ref().map(|r| &r[i])
    }

    pub fn rates(&self) -> Option<&[Field]> {
        self.rates.as_deref()
    }

    pub fn drop_rates(&mut self) {
        self.rates = None;
    }

    /// Time derivative at sample `i`: the rate channel if present, else
    /// second-order finite differences of the values.
    pub fn derivative_at(&self, i: usize) -> Field {
        if let Some(r) = &self.rates {
            return r[i].clone();
        }
        let v = &self.values;
        let last = v.len() - 1;
        let h = self.grid.dt();
        // One-sided second-order stencils at the ends, centred inside.
        let mut out = if i == 0 {
            let mut o = v[1].scaled(4.0);
            o.axpy(-3.0, &v[0]);
            o.axpy(-1.0, &v[2]);
            o
        } else if i == last {
            let mut o = v[last].scaled(3.0);
            o.axpy(-4.0, &v[last - 1]);
            o.axpy(1.0, &v[last - 2]);
            o
        } else {
            v[i + 1].diff(&v[i - 1])
        };
        out.scale(0.5 / h);
        out
    }

    /// Grid sup norm at every sample.
    pub fn sup_norms(&self) -> Vec<f64> {
        self.values.iter().map(|f| f.sup_norm()).collect()
    }

    pub fn max_sup(&self) -> f64 {
        self.sup_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn into_parts(self) -> (Vec<Field>, Option<Vec<Field>>) {
        (self.values, self.rates)
    }
}
