use crate::cone::Cone;
use crate::error::SolverError;
use crate::sparse::CscMatrix;

/// A linear conic program in the form
///
/// ```text
/// minimize    c'x
/// subject to  A x + s = b,   s in K
/// ```
///
/// where `K` is the product of `cones`, laid out in order along the rows
/// of `A`. The dual is `maximize -b'y  s.t.  A'y + c = 0, y in K*`.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProblem {
    pub fn new(c: Vec<f64>, a: CscMatrix, b: Vec<f64>, cones: Vec<Cone>) -> Result<Self, SolverError> {
        let m: usize = cones.iter().map(Cone::dim).sum();
        if a.ncols != c.len() {
            return Err(SolverError::Dimension(format!(
                "A has {} columns but c has length {}",
                a.ncols,
                c.len()
            )));
        }
        if a.nrows != b.len() || a.nrows != m {
            return Err(SolverError::Dimension(format!(
                "A has {} rows, b has length {}, cones cover {} rows",
                a.nrows,
                b.len(),
                m
            )));
        }
        if c.iter().chain(b.iter()).chain(a.values.iter()).any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteData);
        }
        Ok(Self { c, a, b, cones })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }
}
