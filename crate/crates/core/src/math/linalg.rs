//! Thin safe wrappers over `matrixmultiply::dgemm` for row-major buffers.

/// Which operand layout to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// `c = beta * c + op(a) * op(b)` with `op(a)` of shape m×k and `op(b)` of shape k×n.
///
/// `a` is stored row-major as m×k when `ta == N` and as k×m when `ta == T`; same
/// convention for `b`. `c` is row-major m×n.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: Op,
    b: &[f64],
    tb: Op,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k, "gemm: lhs too short");
    assert!(b.len() >= k * n, "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: out too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c[..m * n].iter_mut() {
            *x *= beta;
        }
        return;
    }
    let (rsa, csa) = match ta {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: the length checks above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Adds `bias` to every row of the row-major matrix `x` (rows × bias.len()).
pub fn add_row_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Accumulates the column sums of `x` into `out`.
pub fn accumulate_col_sums(x: &[f64], out: &mut [f64]) {
    for row in x.chunks_exact(out.len()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}
