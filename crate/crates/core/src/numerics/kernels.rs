//! Strided matrix products. Every product on the tape goes through [`gemm`].

/// Strided matrix view: `data[r * row_stride + c * col_stride]`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> View<'a> {
    pub fn dense(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// Column block `[offset, offset + cols)` of a dense `rows x width` matrix.
    pub fn columns(data: &'a [f64], rows: usize, width: usize, offset: usize, cols: usize) -> Self {
        Self { data: &data[offset..], rows, cols, row_stride: width, col_stride: 1 }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// Mutable strided destination.
pub(crate) struct ViewMut<'a> {
    pub data: &'a mut [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
}

impl<'a> ViewMut<'a> {
    pub fn dense(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, row_stride: cols }
    }

    pub fn columns(data: &'a mut [f64], rows: usize, width: usize, offset: usize, cols: usize) -> Self {
        Self { data: &mut data[offset..], rows, cols, row_stride: width }
    }
}

/// `c = alpha * a * b + beta * c`.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: ViewMut<'_>) {
    assert_eq!(a.cols, b.rows, "gemm inner extent");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "gemm output extent");
    a.check();
    b.check();
    if c.rows > 0 && c.cols > 0 {
        assert!((c.rows - 1) * c.row_stride + c.cols - 1 < c.data.len());
    }
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    // SAFETY: every view was bounds-checked above against its backing slice,
    // and `c` is uniquely borrowed, so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.data.as_mut_ptr(),
            c.row_stride as isize,
            1,
        );
    }
}
