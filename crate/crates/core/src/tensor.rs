//! Dense row-major tensors over f32 (training/inference) or f64 (gradient
//! checks and geometry-adjacent math).
//!
//! There is no autograd graph: layers wire their own backward passes and
//! store parameter gradients in the optional `grad` slot.

use crate::error::{Error, Result};

/// Scalar element of a [`Tensor`]. Implemented for `f32` and `f64`.
pub trait Element:
    Copy
    + Default
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
    fn neg_infinity() -> Self;
    fn total_cmp(&self, other: &Self) -> std::cmp::Ordering;

    /// `c = alpha * a @ b + beta * c` with explicit row/col strides,
    /// dispatching to the sgemm/dgemm kernels.
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
}

macro_rules! impl_element {
    ($t:ty, $gemm:path) => {
        impl Element for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                <$t>::powi(self, n)
            }
            #[inline]
            fn max(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            #[inline]
            fn min(self, other: Self) -> Self {
                <$t>::min(self, other)
            }
            #[inline]
            fn neg_infinity() -> Self {
                <$t>::NEG_INFINITY
            }
            #[inline]
            fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
                <$t>::total_cmp(self, other)
            }

            #[inline]
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
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_element!(f32, matrixmultiply::sgemm);
impl_element!(f64, matrixmultiply::dgemm);

/// Dense n-dimensional array, row-major, with an optional gradient slot of
/// identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Element> {
    shape: Vec<usize>,
    data: Vec<E>,
    grad: Option<Vec<E>>,
}

impl<E: Element> Tensor<E> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![E::ZERO; n],
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], value: E) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::from_vec",
                expected: format!("{} elements for shape {:?}", n, shape),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Reinterprets the tensor with a new shape of the same element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::reshaped",
                expected: format!("{} elements for shape {:?}", n, shape),
                got: format!("{} elements (shape {:?})", self.data.len(), self.shape),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Enables the gradient slot, zero-filled.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![E::ZERO; self.data.len()]);
        self
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn grad(&self) -> &[E] {
        self.grad
            .as_deref()
            .expect("gradient slot not enabled on this tensor")
    }

    pub fn grad_mut(&mut self) -> &mut [E] {
        self.grad
            .as_deref_mut()
            .expect("gradient slot not enabled on this tensor")
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_deref_mut() {
            g.fill(E::ZERO);
        }
    }

    /// Accumulates `delta` into the gradient slot.
    pub fn add_to_grad(&mut self, delta: &[E]) {
        let g = self
            .grad
            .as_deref_mut()
            .expect("gradient slot not enabled on this tensor");
        assert_eq!(g.len(), delta.len(), "gradient length mismatch");
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += *di;
        }
    }

    /// Errors if any value (or gradient) is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: context.to_string(),
            });
        }
        if let Some(g) = &self.grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("{context} (gradient)"),
                });
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Tensor<E> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Converts element type; drops the gradient slot.
    pub fn cast<T: Element>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
            grad: None,
        }
    }
}

/// `c[m,n] = a[m,k] @ b[k,n]`, all row-major contiguous slices.
pub fn matmul<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    matmul_acc(m, k, n, a, b, c, false)
}

/// Like [`matmul`] but accumulates into `c` when `acc` is true.
pub fn matmul_acc<E: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    b: &[E],
    c: &mut [E],
    acc: bool,
) {
    assert_eq!(a.len(), m * k, "matmul lhs size");
    assert_eq!(b.len(), k * n, "matmul rhs size");
    assert_eq!(c.len(), m * n, "matmul out size");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if acc { E::ONE } else { E::ZERO };
    unsafe {
        E::gemm(
            m,
            k,
            n,
            E::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m,n] = a[k,m]^T @ b[k,n]` without materializing the transpose.
pub fn matmul_tn<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E], acc: bool) {
    assert_eq!(a.len(), k * m, "matmul_tn lhs size");
    assert_eq!(b.len(), k * n, "matmul_tn rhs size");
    assert_eq!(c.len(), m * n, "matmul_tn out size");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if acc { E::ONE } else { E::ZERO };
    unsafe {
        E::gemm(
            m,
            k,
            n,
            E::ONE,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m,n] = a[m,k] @ b[n,k]^T` without materializing the transpose.
pub fn matmul_nt<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E], acc: bool) {
    assert_eq!(a.len(), m * k, "matmul_nt lhs size");
    assert_eq!(b.len(), n * k, "matmul_nt rhs size");
    assert_eq!(c.len(), m * n, "matmul_nt out size");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if acc { E::ONE } else { E::ZERO };
    unsafe {
        E::gemm(
            m,
            k,
            n,
            E::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Permutation-invariant sum: sorts the addends before accumulating so the
/// result does not depend on the caller's element order.
pub fn stable_sum<E: Element>(values: &mut Vec<E>) -> E {
    values.sort_by(|a, b| a.total_cmp(b));
    let mut acc = E::ZERO;
    for v in values.iter() {
        acc += *v;
    }
    acc
}
