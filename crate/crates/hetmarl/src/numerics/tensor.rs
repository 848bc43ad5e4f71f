//! Dense row-major tensors over `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type the numerics stack is generic over.
///
/// `f32` is the training precision; `f64` exists for gradient-check tests.
/// The gemm hooks route matrix products through `matrixmultiply`.
pub trait Real:
    num_traits::Float + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// C <- alpha * op(A) * op(B) + beta * C with explicit strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(v: f64) -> Self {
        num_traits::cast(v).expect("finite f64 converts to Real")
    }

    fn into_f64(self) -> f64 {
        num_traits::cast(self).expect("Real converts to f64")
    }
}

impl Real for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense tensor: a shape plus row-major data.
///
/// Invariant: `shape.iter().product() == data.len()`, checked at every
/// construction site.
#[derive(Clone, PartialEq)]
pub struct Tensor<R: Real> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Real> Debug for Tensor<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{:?}, ...]", &self.data[..8])
        }
    }
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {:?} implies {} elements, got {}",
            shape,
            numel,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![R::zero(); numel],
        }
    }

    pub fn scalar(v: R) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<R>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// k x n matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<R>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when viewed as a matrix; 1 for vectors and scalars.
    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Number of columns when viewed as a matrix; the full length for vectors.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn item(&self) -> R {
        assert!(
            self.is_scalar(),
            "item() called on non-scalar tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    pub fn row(&self, i: usize) -> &[R] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Tensor<R> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| T::from_f64(v.into_f64()))
                .collect(),
        }
    }
}

/// c[m,n] = a[m,k] * b[k,n]
pub(crate) fn matmul_nn<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    let (m, ka) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(
        ka, kb,
        "matmul: inner dimensions disagree, lhs {:?} vs rhs {:?}",
        a.shape, b.shape
    );
    let mut c = Tensor::zeros(vec![m, n]);
    unsafe {
        R::gemm(
            m,
            ka,
            n,
            R::one(),
            a.data.as_ptr(),
            ka as isize,
            1,
            b.data.as_ptr(),
            n as isize,
            1,
            R::zero(),
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// c[m,n] = a[m,k] * b[n,k]^T, with b stored row-major.
pub(crate) fn matmul_nt<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    let (m, ka) = (a.rows(), a.cols());
    let (n, kb) = (b.rows(), b.cols());
    assert_eq!(
        ka, kb,
        "matmul_nt: inner dimensions disagree, lhs {:?} vs rhs^T {:?}",
        a.shape, b.shape
    );
    let mut c = Tensor::zeros(vec![m, n]);
    unsafe {
        R::gemm(
            m,
            ka,
            n,
            R::one(),
            a.data.as_ptr(),
            ka as isize,
            1,
            b.data.as_ptr(),
            1,
            kb as isize,
            R::zero(),
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// c[m,n] = a[k,m]^T * b[k,n], with a stored row-major.
pub(crate) fn matmul_tn<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    let (ka, m) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(
        ka, kb,
        "matmul_tn: inner dimensions disagree, lhs^T {:?} vs rhs {:?}",
        a.shape, b.shape
    );
    let mut c = Tensor::zeros(vec![m, n]);
    unsafe {
        R::gemm(
            m,
            ka,
            n,
            R::one(),
            a.data.as_ptr(),
            1,
            m as isize,
            b.data.as_ptr(),
            n as isize,
            1,
            R::zero(),
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid_scalar<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_agreement_enforced() {
        let t = Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.rows(), 2);
        assert_eq!(t.cols(), 3);
    }

    #[test]
    #[should_panic(expected = "implies 6 elements")]
    fn shape_mismatch_panics() {
        let _ = Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]);
    }

    #[test]
    fn matmul_variants_agree_with_hand_products() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = Tensor::matrix(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(matmul_nn(&a, &b).data(), &[19.0, 22.0, 43.0, 50.0]);

        // a * b^T where b^T = [[5,7],[6,8]]
        let nt = matmul_nt(&a, &b);
        assert_eq!(nt.data(), &[17.0, 23.0, 39.0, 53.0]);

        // a^T * b where a^T = [[1,3],[2,4]]
        let tn = matmul_tn(&a, &b);
        assert_eq!(tn.data(), &[26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!((sigmoid_scalar(100.0f64) - 1.0).abs() < 1e-6);
        assert!(sigmoid_scalar(-100.0f64) > 0.0);
        assert!(sigmoid_scalar(-100.0f64) < 1e-6);
        assert!(sigmoid_scalar(-1e30f32).is_finite());
    }
}
