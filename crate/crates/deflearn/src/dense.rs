//! Part/UV pixel annotations and their conversion to vertex correspondences.

use std::path::Path;

use deflearn_core::body::{BodyTemplate, NUM_JOINTS};
use deflearn_core::regist::DenseCorrespondence;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on correspondences kept per image.
pub const MAX_DENSE_POINTS: usize = 512;

/// A labelled pixel: body part and chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseRawPoint {
    pub pixel: [f64; 2],
    pub part: usize,
    pub uv: [f64; 2],
}

impl DenseRawPoint {
    pub fn validate(&self) -> deflearn_core::Result<()> {
        let in_unit = self.uv.iter().all(|x| (0.0..=1.0).contains(x));
        if self.part >= NUM_JOINTS || !in_unit || !self.pixel.iter().all(|x| x.is_finite()) {
            return Err(deflearn_core::Error::Contract(format!("invalid dense point {self:?}")));
        }
        Ok(())
    }
}

/// Template vertices grouped by chart part.
#[derive(Debug, Clone)]
pub struct UvIndex<'a> {
    template: &'a BodyTemplate,
    parts: Vec<Vec<usize>>,
}

impl<'a> UvIndex<'a> {
    pub fn new(template: &'a BodyTemplate) -> Self {
        let mut parts = vec![Vec::new(); NUM_JOINTS];
        for (v, c) in template.charts().iter().enumerate() {
            parts[c.part].push(v);
        }
        Self { template, parts }
    }

    /// Nearest vertex of the point's part in UV space; ties go to the smaller index.
    pub fn nearest(&self, raw: &DenseRawPoint) -> deflearn_core::Result<usize> {
        raw.validate()?;
        let mut best: Option<(f64, usize)> = None;
        for &v in &self.parts[raw.part] {
            let uv = self.template.chart(v).uv;
            let d = (uv[0] - raw.uv[0]).powi(2) + (uv[1] - raw.uv[1]).powi(2);
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, v));
            }
        }
        best.map(|(_, v)| v).ok_or_else(|| deflearn_core::Error::Contract(format!("part {} has an empty chart", raw.part)))
    }
}

pub fn uv_to_vertex(raw: &DenseRawPoint, template: &BodyTemplate) -> deflearn_core::Result<usize> {
    UvIndex::new(template).nearest(raw)
}

/// Per-pixel part labels and UV maps in row-major order.
///
/// `parts` uses 0 for background and `k + 1` for part `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
    pub parts: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PixelGrid {
    /// Foreground pixels at their centers, thinned with a uniform stride to at most `max` points.
    pub fn raw_points(&self, path: &Path, max: usize) -> Result<Vec<DenseRawPoint>> {
        let n = self.width * self.height;
        for (name, len) in [("parts", self.parts.len()), ("u", self.u.len()), ("v", self.v.len())] {
            if len != n {
                return Err(Error::format(path, name, format!("expected {n} entries for a {}×{} grid, found {len}", self.width, self.height)));
            }
        }
        let mut fg = Vec::new();
        for i in 0..n {
            if self.parts[i] == 0 {
                continue;
            }
            let raw = DenseRawPoint {
                pixel: [(i % self.width) as f64 + 0.5, (i / self.width) as f64 + 0.5],
                part: self.parts[i] - 1,
                uv: [self.u[i], self.v[i]],
            };
            raw.validate().map_err(|e| Error::format(path, format!("pixel {i}"), e))?;
            fg.push(raw);
        }
        let stride = fg.len().div_ceil(max.max(1)).max(1);
        Ok(fg.into_iter().step_by(stride).collect())
    }
}

/// Correspondences for a grid, capped at [`MAX_DENSE_POINTS`].
pub fn grid_to_correspondences(path: &Path, grid: &PixelGrid, template: &BodyTemplate) -> Result<Vec<DenseCorrespondence>> {
    let index = UvIndex::new(template);
    grid.raw_points(path, MAX_DENSE_POINTS)?
        .iter()
        .map(|raw| Ok(DenseCorrespondence { point: raw.pixel, vertex: index.nearest(raw)? }))
        .collect()
}
