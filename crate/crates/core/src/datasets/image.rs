use rand::Rng as _;

use super::{split, Dataset, DatasetKind, Sample, Sequence, SplitSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ndkernel::Tensor;
use crate::rng;

const SUPERSAMPLE: usize = 4;

/// Shape geometry in unit coordinates, centred on the polygon centroid.
struct Shape {
    vertices: Vec<(f64, f64)>,
    marker: (f64, f64),
    marker_radius: f64,
}

impl Shape {
    fn from_seed(style_seed: u64) -> Self {
        let mut r = rng::child(style_seed, "shape", 0);
        let n = r.random_range(6..=10);
        let step = std::f64::consts::TAU / n as f64;
        let mut vertices: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let a = k as f64 * step + r.random_range(-0.3..0.3) * step;
                let rad = r.random_range(0.45..1.0);
                (rad * a.cos(), rad * a.sin())
            })
            .collect();
        let (cx, cy) = polygon_centroid(&vertices);
        for v in &mut vertices {
            *v = (v.0 - cx, v.1 - cy);
        }
        // The marker sits off-centre towards one vertex so no rotation maps
        // the shape onto itself.
        let anchor = vertices[r.random_range(0..n)];
        let f = r.random_range(0.35..0.6);
        let marker = (anchor.0 * f, anchor.1 * f);
        let marker_radius = r.random_range(0.12..0.2);
        let extent = vertices
            .iter()
            .map(|&(x, y)| x.hypot(y))
            .fold(marker.0.hypot(marker.1) + marker_radius, f64::max);
        let s = 0.92 / extent;
        Shape {
            vertices: vertices.into_iter().map(|(x, y)| (x * s, y * s)).collect(),
            marker: (marker.0 * s, marker.1 * s),
            marker_radius: marker_radius * s,
        }
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.marker.0, y - self.marker.1);
        let in_marker = dx * dx + dy * dy <= self.marker_radius * self.marker_radius;
        point_in_polygon(&self.vertices, x, y) ^ in_marker
    }
}

fn polygon_centroid(v: &[(f64, f64)]) -> (f64, f64) {
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..v.len() {
        let (x0, y0) = v[i];
        let (x1, y1) = v[(i + 1) % v.len()];
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    (cx / (3.0 * a), cy / (3.0 * a))
}

/// Even-odd crossing test.
fn point_in_polygon(v: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (xi, yi) = v[i];
        let (xj, yj) = v[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Grayscale raster of the shape for `style_seed` rotated by `angle` degrees.
///
/// Pixel values are `2 * coverage - 1`, so background is -1 and fully
/// covered pixels are 1.
pub fn render_shape(style_seed: u64, angle: f64, size: usize) -> Result<Tensor> {
    if !(0.0..=180.0).contains(&angle) {
        return Err(Error::Config(format!("angle {angle} outside [0, 180]")));
    }
    if size < 16 {
        return Err(Error::Config(format!("image size {size} below 16")));
    }
    let shape = Shape::from_seed(style_seed);
    // Rotating the shape by +angle is sampling the unrotated shape at -angle.
    let (s, c) = (-angle.to_radians()).sin_cos();
    let samples = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut data = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let u = (col as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64) / size as f64 * 2.0 - 1.0;
                    let v = 1.0 - (row as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64) / size as f64 * 2.0;
                    if shape.covers(c * u - s * v, s * u + c * v) {
                        hits += 1;
                    }
                }
            }
            data.push(2.0 * hits as f64 / samples - 1.0);
        }
    }
    Ok(Tensor::matrix(size, size, data)?)
}

/// `n_objects` shapes, each seen at `n_angles` angles drawn uniformly from [0, 180].
pub fn generate_image_dataset(
    n_objects: usize,
    n_angles: usize,
    size: usize,
    master_seed: u64,
    exec: Exec,
) -> Result<Dataset> {
    if n_angles < 9 {
        return Err(Error::Config(format!("need at least 9 angles per object, got {n_angles}")));
    }
    if n_objects == 0 {
        return Err(Error::Config("need at least one object".into()));
    }
    let spec = SplitSpec::default_for(n_angles);
    let sequences = exec.map_range(n_objects, |id| -> Result<Sequence> {
        let style_seed = rng::derive_seed(master_seed, "object", id as u64);
        let mut r = rng::child(style_seed, "angles", 0);
        let mut angles: Vec<f64> = Vec::with_capacity(n_angles);
        while angles.len() < n_angles {
            let a = r.random_range(0.0..=180.0);
            if !angles.contains(&a) {
                angles.push(a);
            }
        }
        angles.sort_by(f64::total_cmp);
        let splits = split(n_angles, spec, rng::derive_seed(style_seed, "split", 0))?;
        let samples = angles
            .iter()
            .zip(splits)
            .map(|(&t, split)| Ok(Sample { t, x: render_shape(style_seed, t, size)?, split }))
            .collect::<Result<_>>()?;
        Ok(Sequence { id, style_seed, samples })
    });
    Ok(Dataset {
        kind: DatasetKind::Image,
        master_seed,
        sequences: sequences.into_iter().collect::<Result<_>>()?,
        graph: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mse;

    #[test]
    fn raster_is_deterministic_and_in_range() {
        let a = render_shape(9, 33.0, 32).unwrap();
        assert_eq!(a, render_shape(9, 33.0, 32).unwrap());
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(a.data().contains(&1.0) && a.data().contains(&-1.0));
        assert!(render_shape(9, 181.0, 32).is_err());
        assert!(render_shape(9, 10.0, 8).is_err());
    }

    #[test]
    fn small_rotations_change_less_than_large_ones() {
        for seed in 0..100 {
            let base = render_shape(seed, 0.0, 32).unwrap();
            let near = mse(&base, &render_shape(seed, 0.5, 32).unwrap()).unwrap();
            let far = mse(&base, &render_shape(seed, 90.0, 32).unwrap()).unwrap();
            assert!(near < far, "seed {seed}: {near} vs {far}");
        }
    }

    #[test]
    fn half_turn_is_distinguishable() {
        for seed in 0..20 {
            let a = render_shape(seed, 0.0, 32).unwrap();
            let b = render_shape(seed, 180.0, 32).unwrap();
            assert!(mse(&a, &b).unwrap() > 0.01, "seed {seed}");
        }
    }

    #[test]
    fn mse_grows_with_rotation_offset() {
        let mut rng = rng::seeded(3);
        let mut monotone = 0;
        let probes = 100;
        for _ in 0..probes {
            let seed: u64 = rng.random();
            let a = rng.random_range(0.0..120.0);
            let base = render_shape(seed, a, 32).unwrap();
            let errs: Vec<f64> = [1.0, 5.0, 20.0, 60.0]
                .iter()
                .map(|d| mse(&base, &render_shape(seed, a + d, 32).unwrap()).unwrap())
                .collect();
            if errs.windows(2).all(|w| w[0] <= w[1]) {
                monotone += 1;
            }
        }
        assert!(monotone >= 90, "{monotone}/{probes} monotone probes");
    }

    #[test]
    fn dataset_layout() {
        let d = generate_image_dataset(4, 12, 16, 1, Exec::Sequential).unwrap();
        assert_eq!(d.sequences.len(), 4);
        assert!(d.sequences.iter().all(|s| s.samples.len() == 12));
        d.validate().unwrap();
        assert!(d.sequences.iter().flat_map(|s| &s.samples).all(|s| (0.0..=180.0).contains(&s.t)));
        let par = generate_image_dataset(4, 12, 16, 1, Exec::Parallel).unwrap();
        assert_eq!(d, par);
        assert!(generate_image_dataset(4, 8, 16, 1, Exec::Sequential).is_err());
    }

    #[test]
    fn objects_look_different() {
        let d = generate_image_dataset(20, 9, 32, 2, Exec::Sequential).unwrap();
        let mut errs = Vec::new();
        for i in 0..20 {
            for j in i + 1..20 {
                let a = render_shape(d.sequences[i].style_seed, 45.0, 32).unwrap();
                let b = render_shape(d.sequences[j].style_seed, 45.0, 32).unwrap();
                errs.push(mse(&a, &b).unwrap());
            }
        }
        errs.sort_by(f64::total_cmp);
        assert!(errs[errs.len() / 2] > 1e-3);
    }
}
