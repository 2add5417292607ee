use std::ops::Range;

use nalgebra::DMatrix;

use crate::{Error, Real, Result};

/// Block-Hankel matrix with `rows` block rows from a `T x c` signal. Column
/// `j` of a segment stacks samples `j .. j + rows`; no column straddles a
/// segment boundary. Each segment contributes `len - rows + 1` columns.
pub fn build_block_hankel<T: Real>(signal: &DMatrix<T>, rows: usize, segments: &[Range<usize>]) -> Result<DMatrix<T>> {
    if rows == 0 {
        return Err(Error::InvalidArgument(
            "Hankel matrix needs at least one block row".into(),
        ));
    }
    let c = signal.ncols();
    let mut cols = 0;
    for (i, seg) in segments.iter().enumerate() {
        if seg.end > signal.nrows() || seg.start > seg.end {
            return Err(Error::InvalidArgument(format!(
                "segment {i} ({seg:?}) outside the signal"
            )));
        }
        if seg.len() < rows {
            return Err(Error::InvalidArgument(format!(
                "segment {i} has {} samples, fewer than the {rows} block rows",
                seg.len()
            )));
        }
        cols += seg.len() - rows + 1;
    }
    let mut h = DMatrix::zeros(rows * c, cols);
    let mut col = 0;
    for seg in segments {
        for start in seg.start..=(seg.end - rows) {
            for r in 0..rows {
                for ch in 0..c {
                    h[(r * c + ch, col)] = signal[(start + r, ch)];
                }
            }
            col += 1;
        }
    }
    Ok(h)
}
