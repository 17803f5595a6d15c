use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{ActivationPattern, MlpParams};
use crate::numkit::{Matrix, Scalar};

/// Axis-aligned rectangle of the input plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds2d {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds2d {
    pub fn square(half_width: f64) -> Self {
        Bounds2d {
            x_min: -half_width,
            x_max: half_width,
            y_min: -half_width,
            y_max: half_width,
        }
    }
}

/// Region labelling of a `resolution × resolution` pixel grid.
///
/// Pixel `(r, c)` samples the centre of its cell; row 0 is the top edge
/// (`y_max`). Ids number the distinct activation patterns in order of first
/// appearance, so equal-pattern neighbours always share an id.
#[derive(Debug, Clone)]
pub struct PartitionGrid {
    pub resolution: usize,
    pub bounds: Bounds2d,
    ids: Vec<u32>,
    patterns: Vec<ActivationPattern>,
}

/// Pixel-centre coordinates of `(row, col)`.
pub fn grid_point(bounds: &Bounds2d, resolution: usize, row: usize, col: usize) -> [f64; 2] {
    let r = resolution as f64;
    let x = bounds.x_min + (bounds.x_max - bounds.x_min) * (col as f64 + 0.5) / r;
    let y = bounds.y_max - (bounds.y_max - bounds.y_min) * (row as f64 + 0.5) / r;
    [x, y]
}

/// All pixel-centre points, row-major.
pub fn grid_points<T: Scalar>(bounds: &Bounds2d, resolution: usize) -> Matrix<T> {
    let mut data = Vec::with_capacity(resolution * resolution * 2);
    for row in 0..resolution {
        for col in 0..resolution {
            let [x, y] = grid_point(bounds, resolution, row, col);
            data.push(T::lit(x));
            data.push(T::lit(y));
        }
    }
    Matrix::from_vec(resolution * resolution, 2, data).expect("grid shape")
}

/// Labels every pixel of the grid by the activation pattern of its centre.
pub fn partition_grid_2d<T: Scalar>(
    p: &MlpParams<T>,
    bounds: Bounds2d,
    resolution: usize,
) -> Result<PartitionGrid> {
    if p.d_in() != 2 {
        return Err(Error::param(format!("partition_grid_2d needs d_in == 2, got {}", p.d_in())));
    }
    if resolution < 2 {
        return Err(Error::param("resolution must be >= 2"));
    }
    if !(bounds.x_min < bounds.x_max && bounds.y_min < bounds.y_max) {
        return Err(Error::param("empty bounds"));
    }
    let mut index: HashMap<ActivationPattern, u32> = HashMap::new();
    let mut patterns = Vec::new();
    let mut ids = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            let [x, y] = grid_point(&bounds, resolution, row, col);
            let pat = p.activation_pattern(&[T::lit(x), T::lit(y)]);
            let id = *index.entry(pat.clone()).or_insert_with(|| {
                patterns.push(pat);
                (patterns.len() - 1) as u32
            });
            ids.push(id);
        }
    }
    Ok(PartitionGrid {
        resolution,
        bounds,
        ids,
        patterns,
    })
}

impl PartitionGrid {
    pub fn region_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn id(&self, row: usize, col: usize) -> u32 {
        self.ids[row * self.resolution + col]
    }

    pub fn pattern(&self, id: u32) -> &ActivationPattern {
        &self.patterns[id as usize]
    }

    /// True when a 4-neighbour lies in a different region.
    pub fn is_boundary(&self, row: usize, col: usize) -> bool {
        let id = self.id(row, col);
        let n = self.resolution;
        (row > 0 && self.id(row - 1, col) != id)
            || (row + 1 < n && self.id(row + 1, col) != id)
            || (col > 0 && self.id(row, col - 1) != id)
            || (col + 1 < n && self.id(row, col + 1) != id)
    }

    fn pixel_color(&self, row: usize, col: usize) -> [u8; 3] {
        if self.is_boundary(row, col) {
            [0, 0, 0]
        } else {
            region_color(self.id(row, col))
        }
    }

    /// Binary PPM (`P6`) image, one pixel per grid cell.
    pub fn to_ppm(&self) -> Vec<u8> {
        let n = self.resolution;
        let mut out = format!("P6\n{n} {n}\n255\n").into_bytes();
        for row in 0..n {
            for col in 0..n {
                out.extend_from_slice(&self.pixel_color(row, col));
            }
        }
        out
    }

    /// SVG rendering; horizontal runs of equal colour become one rectangle.
    pub fn to_svg(&self, size_px: usize) -> String {
        let n = self.resolution;
        let cell = size_px as f64 / n as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size_px}" height="{size_px}" viewBox="0 0 {size_px} {size_px}" shape-rendering="crispEdges">"#
        );
        for row in 0..n {
            let mut col = 0;
            while col < n {
                let color = self.pixel_color(row, col);
                let start = col;
                while col < n && self.pixel_color(row, col) == color {
                    col += 1;
                }
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#{:02x}{:02x}{:02x}"/>"##,
                    start as f64 * cell,
                    row as f64 * cell,
                    (col - start) as f64 * cell,
                    cell,
                    color[0],
                    color[1],
                    color[2]
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Pastel colour derived from a region id.
fn region_color(id: u32) -> [u8; 3] {
    // golden-ratio hue walk keeps neighbouring ids visually apart
    let hue = (id as f64 * 0.618_033_988_749_895).fract();
    let (s, v) = (0.45, 0.95);
    let h6 = hue * 6.0;
    let i = h6.floor() as u32 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::count_regions_patterns;
    use crate::mlp::BiasMode;
    use crate::numkit::Rng;

    fn net(seed: u64, bias: BiasMode) -> MlpParams<f64> {
        MlpParams::init(&mut Rng::seed_from(seed), 2, 12, 1, bias).unwrap()
    }

    #[test]
    fn zero_weight_net_is_one_region() {
        let p = MlpParams::<f64>::zeros(2, 8, 1);
        let g = partition_grid_2d(&p, Bounds2d::square(3.0), 32).unwrap();
        assert_eq!(g.region_count(), 1);
        assert!((0..32).all(|r| (0..32).all(|c| !g.is_boundary(r, c))));
    }

    #[test]
    fn zero_bias_boundaries_pass_through_origin() {
        let p = net(3, BiasMode::Zero);
        let g = partition_grid_2d(&p, Bounds2d::square(2.0), 64).unwrap();
        for row in 0..64 {
            for col in 0..64 {
                let [x, y] = grid_point(&g.bounds, 64, row, col);
                let pat = p.activation_pattern(&[x, y]);
                for alpha in [0.5, 2.0, 10.0] {
                    assert_eq!(pat, p.activation_pattern(&[alpha * x, alpha * y]));
                }
            }
        }
    }

    #[test]
    fn grid_count_matches_pattern_counter() {
        let p = net(4, BiasMode::Standard);
        let b = Bounds2d::square(4.0);
        let g = partition_grid_2d(&p, b, 100).unwrap();
        let pts = grid_points::<f64>(&b, 100);
        assert_eq!(g.region_count(), count_regions_patterns(&p, &pts).unwrap().count);
    }

    #[test]
    fn count_nondecreasing_under_refinement() {
        let p = net(5, BiasMode::Standard);
        let b = Bounds2d::square(5.0);
        // tripling the resolution keeps every old pixel centre on the new grid
        let counts: Vec<usize> = [4, 12, 36, 108, 324]
            .iter()
            .map(|&r| partition_grid_2d(&p, b, r).unwrap().region_count())
            .collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = net(6, BiasMode::Standard);
        assert!(partition_grid_2d(&p, Bounds2d::square(1.0), 1).is_err());
        let p3 = MlpParams::<f64>::zeros(3, 4, 1);
        assert!(partition_grid_2d(&p3, Bounds2d::square(1.0), 8).is_err());
    }

    #[test]
    fn images_have_expected_size() {
        let p = net(7, BiasMode::Standard);
        let g = partition_grid_2d(&p, Bounds2d::square(2.0), 16).unwrap();
        let ppm = g.to_ppm();
        assert!(ppm.starts_with(b"P6\n16 16\n255\n"));
        assert_eq!(ppm.len(), b"P6\n16 16\n255\n".len() + 16 * 16 * 3);
        let svg = g.to_svg(160);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
