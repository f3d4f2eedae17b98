use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Axis-aligned rectangular block in local planar meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDef {
    /// Value of the dataset's block/beat column that maps to this block.
    pub key: String,
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
}

impl BlockDef {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center_x).abs() <= self.width / 2.0
            && (y - self.center_y).abs() <= self.height / 2.0
    }
}

/// Block geometry plus the projection origin (the region centroid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMap {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub blocks: Vec<BlockDef>,
}

impl BlockMap {
    /// `cols × rows` tiling of equal rectangles centered on the origin,
    /// numbered row-major from the south-west corner. Keys are the block ids.
    pub fn tiling(
        origin_lat: f64,
        origin_lon: f64,
        cols: usize,
        rows: usize,
        width: f64,
        height: f64,
    ) -> Self {
        let mut blocks = Vec::with_capacity(cols * rows);
        let x0 = -(cols as f64) * width / 2.0 + width / 2.0;
        let y0 = -(rows as f64) * height / 2.0 + height / 2.0;
        for r in 0..rows {
            for c in 0..cols {
                blocks.push(BlockDef {
                    key: (r * cols + c).to_string(),
                    center_x: x0 + c as f64 * width,
                    center_y: y0 + r as f64 * height,
                    width,
                    height,
                });
            }
        }
        BlockMap {
            origin_lat,
            origin_lon,
            blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("block map has no blocks".into()));
        }
        if self
            .blocks
            .iter()
            .any(|b| !(b.width > 0.0 && b.height > 0.0))
        {
            return Err(Error::Config("block extents must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Equirectangular projection about the origin.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let lat0 = self.origin_lat.to_radians();
        let x = EARTH_RADIUS_M * (lon - self.origin_lon).to_radians() * lat0.cos();
        let y = EARTH_RADIUS_M * (lat - self.origin_lat).to_radians();
        (x, y)
    }

    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        let lat0 = self.origin_lat.to_radians();
        let lat = self.origin_lat + (y / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_lon + (x / (EARTH_RADIUS_M * lat0.cos())).to_degrees();
        (lat, lon)
    }

    pub fn by_key(&self, key: &str) -> Option<usize> {
        let key = key.trim();
        self.blocks.iter().position(|b| {
            b.key == key
                || matches!((b.key.parse::<i64>(), key.parse::<i64>()), (Ok(a), Ok(b)) if a == b)
        })
    }

    pub fn containing(&self, x: f64, y: f64) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(x, y))
    }

    /// Resolves an event's block and planar position. A block key wins over
    /// geometry; events without coordinates sit at their block's centroid.
    pub fn locate(
        &self,
        lat_lon: Option<(f64, f64)>,
        block_key: Option<&str>,
    ) -> Option<(usize, f64, f64)> {
        let keyed = block_key.and_then(|k| self.by_key(k));
        match (lat_lon, keyed) {
            (Some((lat, lon)), Some(b)) => {
                let (x, y) = self.project(lat, lon);
                Some((b, x, y))
            }
            (Some((lat, lon)), None) => {
                let (x, y) = self.project(lat, lon);
                self.containing(x, y).map(|b| (b, x, y))
            }
            (None, Some(b)) => Some((b, self.blocks[b].center_x, self.blocks[b].center_y)),
            (None, None) => None,
        }
    }

    /// Bounding box `(min_x, min_y, max_x, max_y)` of all blocks.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.blocks.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(a, b, c, d), k| {
                (
                    a.min(k.center_x - k.width / 2.0),
                    b.min(k.center_y - k.height / 2.0),
                    c.max(k.center_x + k.width / 2.0),
                    d.max(k.center_y + k.height / 2.0),
                )
            },
        )
    }
}
