//! Safe wrappers over `matrixmultiply::dgemm` for row-major buffers.
//!
//! Every product here overwrites its output (`beta = 0`). For a fixed inner
//! dimension the value of each output element does not depend on the outer
//! dimensions or on which operand is transposed, which is what lets the dense
//! encoder reproduce single-crop codes bit for bit.

/// A row-major matrix view, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    /// `rows × cols` matrix stored row-major.
    pub(crate) fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix buffer too small");
        Self {
            data,
            rows,
            cols,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// Transpose of the row-major `cols × rows` buffer, seen as `rows × cols`.
    pub(crate) fn transposed(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix buffer too small");
        Self {
            data,
            rows,
            cols,
            row_stride: 1,
            col_stride: rows as isize,
        }
    }
}

/// `out = a · b`, with `out` row-major `a.rows × b.cols`.
pub(crate) fn matmul(a: MatRef<'_>, b: MatRef<'_>, out: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(out.len() >= m * n, "output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out[..m * n].fill(0.0);
        return;
    }
    // SAFETY: the asserts above guarantee every index the kernel touches,
    // (m-1)*rs + (k-1)*cs for each operand, lies inside its slice.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
