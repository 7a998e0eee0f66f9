//! Synthetic test objects with values in `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::Image;
use crate::rng::RngSeed;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    SheppLogan,
    Disks,
    Checker,
}

impl std::str::FromStr for PhantomKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shepp_logan" => Ok(PhantomKind::SheppLogan),
            "disks" => Ok(PhantomKind::Disks),
            "checker" => Ok(PhantomKind::Checker),
            other => Err(format!("unknown phantom kind '{other}'")),
        }
    }
}

/// Number of disjoint disks in [`PhantomKind::Disks`].
pub const DISK_COUNT: usize = 5;

/// Per-axis supersampling used to anti-alias ellipse edges.
const SUPERSAMPLE: usize = 4;

/// An ellipse with additive intensity, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub value: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    /// Rotation in radians.
    pub angle: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }

    /// Centered disk.
    pub fn disk(radius: f64, value: f64) -> Self {
        Ellipse { value, semi_x: radius, semi_y: radius, center_x: 0.0, center_y: 0.0, angle: 0.0 }
    }
}

/// Modified Shepp-Logan head (Toft's high-contrast intensities).
pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    const TABLE: [[f64; 6]; 10] = [
        [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
        [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
        [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
        [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
        [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
        [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
        [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
        [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
        [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
        [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
    ];
    TABLE
        .iter()
        .map(|r| Ellipse {
            value: r[0],
            semi_x: r[1],
            semi_y: r[2],
            center_x: r[3],
            center_y: r[4],
            angle: r[5].to_radians(),
        })
        .collect()
}

/// Rasterizes a sum of ellipses with anti-aliased edges, clamped to `[0, 1]`.
pub fn rasterize<T: Real>(ellipses: &[Ellipse], size: usize) -> Result<Image<T>> {
    let h = 2.0 / size as f64;
    let sub = h / SUPERSAMPLE as f64;
    let weight = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
    Image::from_fn(size, |ix, iy| {
        let x0 = -1.0 + ix as f64 * h;
        let y0 = 1.0 - iy as f64 * h;
        let mut acc = 0.0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let x = x0 + (sx as f64 + 0.5) * sub;
                let y = y0 - (sy as f64 + 0.5) * sub;
                let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum();
                acc += v.clamp(0.0, 1.0);
            }
        }
        T::lit(acc * weight)
    })
}

fn check_size(size: usize) -> Result<()> {
    if size < 8 || !size.is_power_of_two() {
        return invalid(format!("phantom size {size} must be a power of two >= 8"));
    }
    Ok(())
}

/// Deterministic phantom of the given kind and side length.
pub fn make_phantom<T: Real>(kind: PhantomKind, size: usize) -> Result<Image<T>> {
    check_size(size)?;
    match kind {
        PhantomKind::SheppLogan => rasterize(&shepp_logan_ellipses(), size),
        PhantomKind::Disks => {
            let disks: Vec<Ellipse> = [
                (0.0, 0.0, 0.3, 1.0),
                (0.55, 0.55, 0.2, 0.8),
                (-0.55, 0.55, 0.15, 0.6),
                (-0.5, -0.5, 0.25, 0.9),
                (0.55, -0.5, 0.12, 0.5),
            ]
            .iter()
            .map(|&(cx, cy, r, v)| Ellipse { value: v, semi_x: r, semi_y: r, center_x: cx, center_y: cy, angle: 0.0 })
            .collect();
            debug_assert_eq!(disks.len(), DISK_COUNT);
            rasterize(&disks, size)
        }
        PhantomKind::Checker => {
            let cell = (size / 8).max(1);
            Image::from_fn(size, |ix, iy| {
                if (ix / cell + iy / cell) % 2 == 0 {
                    T::lit(0.8)
                } else {
                    T::lit(0.2)
                }
            })
        }
    }
}

/// Random "body slice": a large soft-tissue ellipse with a handful of
/// inclusions. Used to build training and test sets.
pub fn random_phantom<T: Real>(size: usize, seed: RngSeed) -> Result<Image<T>> {
    check_size(size)?;
    let mut rng = seed.rng();
    let mut ellipses = Vec::new();
    let body = Ellipse {
        value: rng.random_range(0.45..0.75),
        semi_x: rng.random_range(0.65..0.88),
        semi_y: rng.random_range(0.55..0.85),
        center_x: rng.random_range(-0.05..0.05),
        center_y: rng.random_range(-0.05..0.05),
        angle: rng.random_range(-0.3..0.3),
    };
    ellipses.push(body);
    let n_inner = rng.random_range(4..=9);
    for _ in 0..n_inner {
        let r = rng.random_range(0.0..0.55);
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        ellipses.push(Ellipse {
            value: sign * rng.random_range(0.1..0.4),
            semi_x: rng.random_range(0.04..0.25),
            semi_y: rng.random_range(0.04..0.25),
            center_x: body.center_x + r * t.cos(),
            center_y: body.center_y + r * t.sin(),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        });
    }
    rasterize(&ellipses, size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_components(img: &Image<f64>) -> usize {
        let n = img.size();
        let mut seen = vec![false; n * n];
        let mut count = 0;
        for start in 0..n * n {
            if seen[start] || img.pixels()[start] == 0.0 {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % n, p / n);
                let mut push = |q: usize| {
                    if !seen[q] && img.pixels()[q] != 0.0 {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if x > 0 { push(p - 1); }
                if x + 1 < n { push(p + 1); }
                if y > 0 { push(p - n); }
                if y + 1 < n { push(p + n); }
            }
        }
        count
    }

    #[test]
    fn shepp_logan_range() {
        let x: Image<f64> = make_phantom(PhantomKind::SheppLogan, 256).unwrap();
        assert_eq!(x.size(), 256);
        assert!(x.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(x.pixels().iter().any(|&v| v > 0.9));
    }

    #[test]
    fn disks_have_configured_component_count() {
        let x: Image<f64> = make_phantom(PhantomKind::Disks, 64).unwrap();
        assert_eq!(count_components(&x), DISK_COUNT);
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(matches!(
            make_phantom::<f64>(PhantomKind::SheppLogan, 100),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn phantoms_are_pure() {
        for kind in [PhantomKind::SheppLogan, PhantomKind::Disks, PhantomKind::Checker] {
            let a: Image<f64> = make_phantom(kind, 32).unwrap();
            let b: Image<f64> = make_phantom(kind, 32).unwrap();
            assert_eq!(a, b);
        }
        let a: Image<f64> = random_phantom(32, RngSeed(3)).unwrap();
        let b: Image<f64> = random_phantom(32, RngSeed(3)).unwrap();
        let c: Image<f64> = random_phantom(32, RngSeed(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
