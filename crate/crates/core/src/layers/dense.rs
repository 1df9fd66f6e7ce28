use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Tensor};

#[derive(Debug)]
pub struct DenseCache<T = f32> {
    input: Tensor<T>,
    weight: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T = f32> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

/// `y = x·w + b` for `x: [N,D]`, `w: [D,M]`, `b: [M]`.
pub fn dense_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(Tensor<T>, DenseCache<T>)> {
    if x.rank() != 2 || w.rank() != 2 || x.shape()[1] != w.shape()[0] {
        return Err(Error::Shape(format!(
            "dense layer: input {:?} against weight {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let (n, d, m) = (x.shape()[0], x.shape()[1], w.shape()[1]);
    b.ensure_shape(&[m], "dense bias")?;
    let mut out: Vec<T> = (0..n).flat_map(|_| b.data().iter().copied()).collect();
    gemm(n, d, m, x.data(), false, w.data(), false, &mut out, true);
    Ok((
        Tensor::new(&[n, m], out)?,
        DenseCache {
            input: x.clone(),
            weight: w.clone(),
        },
    ))
}

pub fn dense_backward<T: Scalar>(cache: DenseCache<T>, dy: &Tensor<T>) -> Result<DenseGrads<T>> {
    let (x, w) = (&cache.input, &cache.weight);
    let (n, d, m) = (x.shape()[0], x.shape()[1], w.shape()[1]);
    dy.ensure_shape(&[n, m], "dense upstream gradient")?;
    let mut dx = vec![T::zero(); n * d];
    gemm(n, m, d, dy.data(), false, w.data(), true, &mut dx, false);
    let mut dw = vec![T::zero(); d * m];
    gemm(d, n, m, x.data(), true, dy.data(), false, &mut dw, false);
    let mut db = vec![T::zero(); m];
    for row in dy.data().chunks_exact(m) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    Ok(DenseGrads {
        dx: Tensor::new(&[n, d], dx)?,
        dw: Tensor::new(&[d, m], dw)?,
        db: Tensor::new(&[m], db)?,
    })
}
