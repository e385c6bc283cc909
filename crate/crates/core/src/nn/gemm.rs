use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

/// Row-major operand of shape `rows x cols`, optionally used transposed.
#[derive(Clone, Copy)]
pub(crate) struct Operand<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transpose: bool,
}

impl<'a> Operand<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            transpose: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transpose: !self.transpose,
            ..self
        }
    }

    fn view(&self) -> ArrayView2<'a, f64> {
        let v = ArrayView2::from_shape((self.rows, self.cols), self.data)
            .expect("operand length matches its shape");
        if self.transpose {
            v.reversed_axes()
        } else {
            v
        }
    }
}

/// `c = a·b + beta·c` with `c` row-major `m x n`.
pub(crate) fn gemm(a: Operand<'_>, b: Operand<'_>, beta: f64, c: &mut [f64], m: usize, n: usize) {
    let av = a.view();
    let bv = b.view();
    debug_assert_eq!(av.nrows(), m);
    debug_assert_eq!(bv.ncols(), n);
    debug_assert_eq!(av.ncols(), bv.nrows());
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("output length matches m x n");
    general_mat_mul(1.0, &av, &bv, beta, &mut cv);
}
