//! Composite grid images for the image-based proposer.
//!
//! The subset for one round is rendered into a single 1120x448 PNG:
//! 4 rows of 10 tiles, each tile 112x112. The top two rows hold set A in
//! row-major order, the bottom two rows set B. Cells without an image stay
//! black.

use image::{imageops, DynamicImage, RgbImage};

use crate::error::{Error, Result};

pub const TILE: u32 = 112;
pub const GRID_COLS: u32 = 10;
pub const ROWS_PER_SET: u32 = 2;
pub const GRID_WIDTH: u32 = TILE * GRID_COLS; // 1120
pub const GRID_HEIGHT: u32 = TILE * ROWS_PER_SET * 2; // 448

/// How many images one side of the grid can show.
pub const CAPACITY_PER_SET: usize = (GRID_COLS * ROWS_PER_SET) as usize; // 20

/// Compose the grid. `tiles_a`/`tiles_b` are `(image id, encoded bytes)`;
/// ids only appear in decode errors. Sides larger than 20 are truncated to
/// the first 20 entries. Returns PNG bytes.
pub fn grid_compose(tiles_a: &[(String, Vec<u8>)], tiles_b: &[(String, Vec<u8>)]) -> Result<Vec<u8>> {
    if tiles_a.is_empty() || tiles_b.is_empty() {
        return Err(Error::Validation(
            "grid_compose: both subsets must be non-empty".into(),
        ));
    }
    let mut canvas = RgbImage::new(GRID_WIDTH, GRID_HEIGHT); // zeroed = black

    for (set_idx, tiles) in [tiles_a, tiles_b].into_iter().enumerate() {
        for (i, (id, bytes)) in tiles.iter().take(CAPACITY_PER_SET).enumerate() {
            let decoded = image::load_from_memory(bytes).map_err(|e| Error::Image {
                id: id.clone(),
                message: format!("cannot decode: {e}"),
            })?;
            let tile = imageops::resize(
                &decoded.to_rgb8(),
                TILE,
                TILE,
                imageops::FilterType::Triangle,
            );
            let row = set_idx as u32 * ROWS_PER_SET + (i as u32 / GRID_COLS);
            let col = i as u32 % GRID_COLS;
            imageops::replace(&mut canvas, &tile, (col * TILE) as i64, (row * TILE) as i64);
        }
    }

    let mut out = Vec::new();
    DynamicImage::ImageRgb8(canvas)
        .write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
        .map_err(|e| Error::Internal(format!("png encode: {e}")))?;
    Ok(out)
}
