use super::{check_mode, split_at_mode, DenseTensor};
use crate::error::{Error, Result};

/// n-mode product `x ×_mode m` for a matrix `m` of shape `(R, D_mode)`.
///
/// The result equals `fold(m · X_[mode])` and has shape
/// `(D_1, ..., R, ..., D_N)`.
pub fn mode_product(x: &DenseTensor, m: &DenseTensor, mode: usize) -> Result<DenseTensor> {
    let mut macs = 0;
    mode_product_counted(x, m, mode, &mut macs)
}

/// [`mode_product`] that also adds the number of scalar multiply-accumulates
/// it executes to `macs`.
pub fn mode_product_counted(x: &DenseTensor, m: &DenseTensor, mode: usize, macs: &mut u64) -> Result<DenseTensor> {
    let mode0 = check_mode(mode, x.order())?;
    if m.order() != 2 {
        return Err(Error::shape(format!(
            "mode-{mode} factor must be a matrix, got shape {:?}",
            m.shape()
        )));
    }
    let (rank, inner) = (m.shape()[0], m.shape()[1]);
    let (left, dn, right) = split_at_mode(x.shape(), mode0);
    if inner != dn {
        return Err(Error::shape(format!(
            "mode-{mode} factor has {inner} columns but the tensor has size {dn} along that mode"
        )));
    }

    let src = x.data();
    let w = m.data();
    let mut out = vec![0.0; left * rank * right];
    for l in 0..left {
        let block = &src[l * dn * right..(l + 1) * dn * right];
        for r in 0..rank {
            let dst = &mut out[(l * rank + r) * right..(l * rank + r + 1) * right];
            for d in 0..dn {
                let a = w[r * dn + d];
                let row = &block[d * right..(d + 1) * right];
                for (o, &v) in dst.iter_mut().zip(row) {
                    *o += a * v;
                }
            }
        }
    }
    *macs += (left * rank * dn * right) as u64;

    let mut shape = x.shape().to_vec();
    shape[mode0] = rank;
    DenseTensor::new(shape, out)
}

/// Kronecker product of two matrices.
pub fn kronecker(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.order() != 2 || b.order() != 2 {
        return Err(Error::shape("kronecker operands must be matrices"));
    }
    let (ar, ac) = (a.shape()[0], a.shape()[1]);
    let (br, bc) = (b.shape()[0], b.shape()[1]);
    let cols = ac * bc;
    let mut out = vec![0.0; ar * br * cols];
    for i in 0..ar {
        for j in 0..ac {
            let av = a.data()[i * ac + j];
            for p in 0..br {
                let row = (i * br + p) * cols + j * bc;
                for q in 0..bc {
                    out[row + q] = av * b.data()[p * bc + q];
                }
            }
        }
    }
    DenseTensor::matrix(ar * br, cols, out)
}

/// Left-to-right Kronecker product `m_1 ⊗ m_2 ⊗ ...`.
pub fn kronecker_chain<'a>(mats: impl IntoIterator<Item = &'a DenseTensor>) -> Result<DenseTensor> {
    let mut acc: Option<DenseTensor> = None;
    for m in mats {
        acc = Some(match acc {
            None => {
                if m.order() != 2 {
                    return Err(Error::shape("kronecker operands must be matrices"));
                }
                m.clone()
            }
            Some(prev) => kronecker(&prev, m)?,
        });
    }
    acc.ok_or_else(|| Error::shape("empty kronecker chain"))
}

/// One projection matrix per mode, or `None` for a mode that is passed
/// through unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorSet {
    input_shape: Vec<usize>,
    factors: Vec<Option<DenseTensor>>,
}

impl FactorSet {
    pub fn new(input_shape: Vec<usize>, factors: Vec<Option<DenseTensor>>) -> Result<Self> {
        super::validate_shape(&input_shape)?;
        check_factors(&input_shape, factors.iter().map(Option::as_ref))?;
        Ok(Self { input_shape, factors })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.input_shape
            .iter()
            .zip(&self.factors)
            .map(|(&d, f)| f.as_ref().map_or(d, |m| m.shape()[0]))
            .collect()
    }

    pub fn factors(&self) -> &[Option<DenseTensor>] {
        &self.factors
    }

    /// Factor for a 1-based mode; `None` when the mode is skipped.
    pub fn factor(&self, mode: usize) -> Option<&DenseTensor> {
        self.factors.get(mode.wrapping_sub(1)).and_then(Option::as_ref)
    }

    pub fn param_count(&self) -> usize {
        self.factors.iter().flatten().map(DenseTensor::len).sum()
    }

    pub(crate) fn as_refs(&self) -> Vec<Option<&DenseTensor>> {
        self.factors.iter().map(Option::as_ref).collect()
    }
}

fn check_factors<'a>(shape: &[usize], factors: impl ExactSizeIterator<Item = Option<&'a DenseTensor>>) -> Result<()> {
    if factors.len() != shape.len() {
        return Err(Error::shape(format!(
            "{} factors given for a tensor of order {}",
            factors.len(),
            shape.len()
        )));
    }
    for (k, (f, &d)) in factors.zip(shape).enumerate() {
        if let Some(m) = f {
            if m.order() != 2 || m.shape()[1] != d {
                return Err(Error::shape(format!(
                    "factor for mode {} has shape {:?}, expected (R, {d})",
                    k + 1,
                    m.shape()
                )));
            }
        }
    }
    Ok(())
}

/// Applies `x ×_k V(k)` for every non-skipped mode, in the given 1-based
/// `order`, accumulating the multiply-accumulate count into `macs`.
pub fn contract_modes(
    x: &DenseTensor,
    factors: &[Option<&DenseTensor>],
    order: &[usize],
    macs: &mut u64,
) -> Result<DenseTensor> {
    check_factors(x.shape(), factors.iter().copied())?;
    check_permutation(order, x.order())?;
    let mut cur: Option<DenseTensor> = None;
    for &mode in order {
        if let Some(m) = factors[mode - 1] {
            let next = mode_product_counted(cur.as_ref().unwrap_or(x), m, mode, macs)?;
            cur = Some(next);
        }
    }
    Ok(cur.unwrap_or_else(|| x.clone()))
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "{order:?} does not list each of the {n} modes"
        )));
    }
    for &m in order {
        if m == 0 || m > n || std::mem::replace(&mut seen[m - 1], true) {
            return Err(Error::InvalidPermutation(format!(
                "{order:?} is not a permutation of 1..={n}"
            )));
        }
    }
    Ok(())
}

/// Tucker-form contraction `x ×_1 V(1) ×_2 ... ×_N V(N)`, applied in ascending
/// mode order.
pub fn multi_mode_product(x: &DenseTensor, factors: &FactorSet) -> Result<DenseTensor> {
    let order: Vec<usize> = (1..=x.order()).collect();
    multi_mode_product_ordered(x, factors, &order)
}

pub fn multi_mode_product_ordered(x: &DenseTensor, factors: &FactorSet, order: &[usize]) -> Result<DenseTensor> {
    if x.shape() != factors.input_shape() {
        return Err(Error::shape(format!(
            "factor set expects input {:?}, got {:?}",
            factors.input_shape(),
            x.shape()
        )));
    }
    let mut macs = 0;
    contract_modes(x, &factors.as_refs(), order, &mut macs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{fold, unfold, UnfoldedMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iota(shape: &[usize]) -> DenseTensor {
        let n: usize = shape.iter().product();
        DenseTensor::new(shape.to_vec(), (0..n).map(|v| v as f64).collect()).unwrap()
    }

    /// Elementwise definition: out[.., r, ..] = sum_d m[r, d] x[.., d, ..].
    fn mode_product_oracle(x: &DenseTensor, m: &DenseTensor, mode: usize) -> DenseTensor {
        let n = mode - 1;
        let mut shape = x.shape().to_vec();
        shape[n] = m.shape()[0];
        DenseTensor::from_fn(&shape, |idx| {
            let mut src = idx.to_vec();
            (0..x.shape()[n])
                .map(|d| {
                    src[n] = d;
                    m.get(&[idx[n], d]) * x.get(&src)
                })
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn identity_factor_is_noop() {
        let x = iota(&[2, 2, 2]);
        assert_eq!(mode_product(&x, &DenseTensor::identity(2), 1).unwrap(), x);
    }

    #[test]
    fn summing_factor() {
        let x = iota(&[2, 2, 2]);
        let m = DenseTensor::matrix(1, 2, vec![1., 1.]).unwrap();
        let oracle = mode_product_oracle(&x, &m, 1);
        assert_eq!(oracle.data(), &[4., 6., 8., 10.]);
        let got = mode_product(&x, &m, 1).unwrap();
        assert_eq!(got.shape(), &[1, 2, 2]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn matches_unfolded_definition_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DenseTensor::random_normal(&[3, 4, 5], 1.0, &mut rng);
        for mode in 1..=3 {
            let m = DenseTensor::random_normal(&[2, x.shape()[mode - 1]], 1.0, &mut rng);
            let got = mode_product(&x, &m, mode).unwrap();
            let prod = m.matmul(&unfold(&x, mode).unwrap().to_matrix()).unwrap();
            let mut shape = x.shape().to_vec();
            shape[mode - 1] = 2;
            let via_unfold = fold(&UnfoldedMatrix::from_matrix(prod, mode, &shape).unwrap()).unwrap();
            assert_eq!(got, via_unfold);
            assert!(got.max_abs_diff(&mode_product_oracle(&x, &m, mode)) < 1e-12);
        }
    }

    #[test]
    fn inner_dimension_mismatch() {
        let x = iota(&[2, 3]);
        let m = DenseTensor::matrix(2, 2, vec![0.; 4]).unwrap();
        assert!(matches!(mode_product(&x, &m, 2), Err(Error::Shape(_))));
        assert!(matches!(mode_product(&x, &m, 3), Err(Error::InvalidMode { .. })));
    }

    #[test]
    fn kronecker_examples() {
        let k = kronecker(&DenseTensor::identity(2), &DenseTensor::identity(3)).unwrap();
        assert_eq!(k, DenseTensor::identity(6));
        let a = DenseTensor::matrix(1, 2, vec![1., 2.]).unwrap();
        let b = DenseTensor::matrix(1, 2, vec![0., 1.]).unwrap();
        assert_eq!(kronecker(&a, &b).unwrap().data(), &[0., 1., 0., 2.]);
    }

    #[test]
    fn kronecker_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DenseTensor::random_normal(&[2, 3], 1.0, &mut rng);
        let b = DenseTensor::random_normal(&[3, 1], 1.0, &mut rng);
        let c = DenseTensor::random_normal(&[2, 2], 1.0, &mut rng);
        let left = kronecker(&kronecker(&a, &b).unwrap(), &c).unwrap();
        let right = kronecker(&a, &kronecker(&b, &c).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-15);
    }

    #[test]
    fn selecting_factors_pick_one_entry() {
        let x = DenseTensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let fs = FactorSet::new(
            vec![2, 2],
            vec![
                Some(DenseTensor::matrix(1, 2, vec![1., 0.]).unwrap()),
                Some(DenseTensor::matrix(1, 2, vec![0., 1.]).unwrap()),
            ],
        )
        .unwrap();
        let g = multi_mode_product(&x, &fs).unwrap();
        assert_eq!(g.shape(), &[1, 1]);
        assert_eq!(g.data(), &[2.0]);
    }

    #[test]
    fn factor_errors_name_the_mode() {
        let err = FactorSet::new(
            vec![2, 3],
            vec![None, Some(DenseTensor::matrix(1, 2, vec![1., 0.]).unwrap())],
        )
        .unwrap_err();
        assert!(err.to_string().contains("mode 2"), "{err}");
    }

    #[test]
    fn skipped_modes_pass_through() {
        let x = iota(&[2, 3, 4]);
        let fs = FactorSet::new(vec![2, 3, 4], vec![None, Some(DenseTensor::identity(3)), None]).unwrap();
        assert_eq!(fs.output_shape(), vec![2, 3, 4]);
        assert_eq!(multi_mode_product(&x, &fs).unwrap(), x);
    }

    #[test]
    fn permutation_validation() {
        assert!(check_permutation(&[2, 1, 3], 3).is_ok());
        assert!(check_permutation(&[1, 1, 3], 3).is_err());
        assert!(check_permutation(&[1, 2], 3).is_err());
        assert!(check_permutation(&[0, 1, 2], 3).is_err());
    }
}
