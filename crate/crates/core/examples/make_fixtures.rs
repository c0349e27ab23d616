//! Regenerates the synthetic mini-fixtures in `tests/fixtures/`.
//!
//! `seismic_mini.csv`: epicenters (longitude, latitude in degrees) scattered
//! around a curved plate boundary between E165° and E180°, in random order.
//! `commute_mini.csv`: GPS fixes (longitude, latitude) recorded in time order
//! along a city route with right-angle turns.
//!
//! Both are stand-ins shaped like the real catalogs; neither is real data.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use slpc::data::write_points_csv;
use slpc::geometry::{Point, PolygonalLine};

/// Point at arc-length fraction `u` of a polyline.
fn along(route: &PolygonalLine, u: f64) -> Vec<f64> {
    route.point_at(u * route.length()).into_coords()
}

fn polyline(vs: &[[f64; 2]]) -> PolygonalLine {
    PolygonalLine::new(vs.iter().map(|v| Point::new(v.to_vec())).collect()).expect("valid route")
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).expect("fixture directory");

    // plate boundary: smooth arc sampled densely, epicenters scattered across it
    let mut rng = ChaCha8Rng::seed_from_u64(2008);
    let arc: Vec<[f64; 2]> = (0..=40)
        .map(|i| {
            let s = i as f64 / 40.0;
            [166.0 + 13.0 * s - 4.0 * s * s, -10.0 - 28.0 * s + 6.0 * (std::f64::consts::PI * s).sin()]
        })
        .collect();
    let arc = polyline(&arc);
    let scatter = Normal::new(0.0, 0.6).expect("valid std");
    let quakes: Vec<Point> = (0..160)
        .map(|_| {
            let c = along(&arc, rng.random());
            Point::new(c.iter().map(|v| v + scatter.sample(&mut rng)).collect())
        })
        .collect();
    write_points_csv(&dir.join("seismic_mini.csv"), &quakes).expect("write seismic fixture");

    // commute: constant-speed drive with GPS jitter of about 20 m
    let mut rng = ChaCha8Rng::seed_from_u64(60607);
    let route = polyline(&[
        [-87.700, 41.880],
        [-87.700, 41.895],
        [-87.660, 41.895],
        [-87.645, 41.886],
        [-87.625, 41.886],
    ]);
    let jitter = Normal::new(0.0, 0.0002).expect("valid std");
    let fixes: Vec<Point> = (0..240)
        .map(|i| {
            let c = along(&route, i as f64 / 239.0);
            Point::new(c.iter().map(|v| v + jitter.sample(&mut rng)).collect())
        })
        .collect();
    write_points_csv(&dir.join("commute_mini.csv"), &fixes).expect("write commute fixture");
}
