use super::{check_mode, split_at_mode, validate_shape, DenseTensor};
use crate::error::{Error, Result};

/// Mode-n unfolding `X_[n]` of a tensor.
///
/// Row `d_n` collects every entry whose mode-`n` index is `d_n`. The column of
/// `(d_1, ..., d_N)` is `sum_{k != n} d_k * S_k` with
/// `S_k = prod_{m > k, m != n} D_m`: the remaining modes keep their relative
/// order and the last one varies fastest. Because of that ordering the
/// Kronecker chain that matches this layout is `V(1) ⊗ ... ⊗ V(N)` with the
/// unfolded mode left out.
#[derive(Clone, Debug, PartialEq)]
pub struct UnfoldedMatrix {
    rows: usize,
    cols: usize,
    mode: usize,
    source_shape: Vec<usize>,
    data: Vec<f64>,
}

impl UnfoldedMatrix {
    /// Wraps a `(D_mode, prod_{k != mode} D_k)` matrix so it can be folded back
    /// into `source_shape`.
    pub fn from_matrix(matrix: DenseTensor, mode: usize, source_shape: &[usize]) -> Result<Self> {
        let total = validate_shape(source_shape)?;
        let mode0 = check_mode(mode, source_shape.len())?;
        let rows = source_shape[mode0];
        let cols = total / rows;
        if matrix.shape() != [rows, cols] {
            return Err(Error::shape(format!(
                "mode-{mode} unfolding of {source_shape:?} must be {rows}x{cols}, got {:?}",
                matrix.shape()
            )));
        }
        Ok(Self {
            rows,
            cols,
            mode,
            source_shape: source_shape.to_vec(),
            data: matrix.into_data(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn source_shape(&self) -> &[usize] {
        &self.source_shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn to_matrix(&self) -> DenseTensor {
        DenseTensor::new(vec![self.rows, self.cols], self.data.clone())
            .expect("unfolded matrix dimensions are validated on construction")
    }

    pub fn into_matrix(self) -> DenseTensor {
        DenseTensor::new(vec![self.rows, self.cols], self.data)
            .expect("unfolded matrix dimensions are validated on construction")
    }
}

/// Mode-`mode` unfolding (1-based) realized as an explicit copy.
pub fn unfold(x: &DenseTensor, mode: usize) -> Result<UnfoldedMatrix> {
    let mode0 = check_mode(mode, x.order())?;
    let (left, dn, right) = split_at_mode(x.shape(), mode0);
    let cols = left * right;
    let src = x.data();
    let mut data = vec![0.0; src.len()];
    for l in 0..left {
        for d in 0..dn {
            let from = &src[(l * dn + d) * right..(l * dn + d + 1) * right];
            let to = d * cols + l * right;
            data[to..to + right].copy_from_slice(from);
        }
    }
    Ok(UnfoldedMatrix {
        rows: dn,
        cols,
        mode,
        source_shape: x.shape().to_vec(),
        data,
    })
}

/// Inverse of [`unfold`].
pub fn fold(m: &UnfoldedMatrix) -> Result<DenseTensor> {
    let total = validate_shape(&m.source_shape)?;
    let mode0 = check_mode(m.mode, m.source_shape.len())?;
    let (left, dn, right) = split_at_mode(&m.source_shape, mode0);
    if m.rows != dn || m.cols * m.rows != total || m.data.len() != total {
        return Err(Error::shape(format!(
            "{}x{} matrix with {} entries cannot fold into {:?} along mode {}",
            m.rows,
            m.cols,
            m.data.len(),
            m.source_shape,
            m.mode
        )));
    }
    let cols = m.cols;
    let mut data = vec![0.0; total];
    for l in 0..left {
        for d in 0..dn {
            let from = d * cols + l * right;
            let to = (l * dn + d) * right;
            data[to..to + right].copy_from_slice(&m.data[from..from + right]);
        }
    }
    DenseTensor::new(m.source_shape.clone(), data)
}
