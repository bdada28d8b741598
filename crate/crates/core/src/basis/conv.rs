use std::sync::Arc;

use super::{BasisBlock, EquivariantBasis, SparseColumn};
use crate::error::{Error, Result};

/// Filter offsets in row-major order over the 3x3 window.
pub const TAPS: [(i64, i64); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

fn tap_columns(height: usize, width: usize) -> Vec<SparseColumn> {
    let (h, w) = (height as i64, width as i64);
    TAPS.iter()
        .map(|&(dy, dx)| {
            let mut col = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    let (sy, sx) = (y + dy, x + dx);
                    if (0..h).contains(&sy) && (0..w).contains(&sx) {
                        col.push(((y * w + x) as u32, (sy * w + sx) as u32, 1.0));
                    }
                }
            }
            let norm = (col.len() as f64).sqrt();
            col.iter_mut().for_each(|e| e.2 /= norm);
            col
        })
        .collect()
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < 3 || width < 3 {
        return Err(Error::Dimension(format!(
            "image {height}x{width} is smaller than the 3x3 filter"
        )));
    }
    if (height * width).pow(2) > super::MAX_LAYER_ENTRIES {
        return Err(Error::TooLarge(format!("{height}x{width} image")));
    }
    Ok(())
}

/// Basis of zero-padded 3x3 cross-correlation operators on a single-channel
/// `height x width` image. Column `k` places `1/sqrt(count)` at every
/// (output pixel, input pixel) pair separated by tap `TAPS[k]`.
pub fn conv_toeplitz_basis(height: usize, width: usize) -> Result<EquivariantBasis> {
    conv_channel_basis(height, width, 1, 1)
}

/// Channel-blocked convolution basis: one 9-column block per
/// (output channel, input channel) pair. Inputs are laid out channel-major.
pub fn conv_channel_basis(
    height: usize,
    width: usize,
    c_in: usize,
    c_out: usize,
) -> Result<EquivariantBasis> {
    check_dims(height, width)?;
    let hw = height * width;
    let columns = Arc::new(tap_columns(height, width));
    let mut blocks = Vec::with_capacity(c_in * c_out);
    for co in 0..c_out {
        for ci in 0..c_in {
            blocks.push(BasisBlock {
                row_offset: co * hw,
                col_offset: ci * hw,
                rows: hw,
                cols: hw,
                coord_offset: 0,
                columns: columns.clone(),
            });
        }
    }
    Ok(EquivariantBasis::from_blocks(c_out * hw, c_in * hw, blocks))
}

/// Per-channel constant biases, as maps `R -> R^{c_out * hw}`.
pub fn conv_channel_bias_basis(height: usize, width: usize, c_out: usize) -> EquivariantBasis {
    let hw = height * width;
    let norm = (hw as f64).sqrt();
    let column: SparseColumn = (0..hw).map(|p| (p as u32, 0, 1.0 / norm)).collect();
    let columns = Arc::new(vec![column]);
    let blocks = (0..c_out)
        .map(|co| BasisBlock {
            row_offset: co * hw,
            col_offset: 0,
            rows: hw,
            cols: 1,
            coord_offset: 0,
            columns: columns.clone(),
        })
        .collect();
    EquivariantBasis::from_blocks(c_out * hw, 1, blocks)
}
