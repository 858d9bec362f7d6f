//! Procedural test shapes.

use std::collections::HashMap;

use crate::geometry::{SurfaceMesh, Vec3};

/// Unit icosphere after `level` rounds of 4-to-1 subdivision
/// (`10·4^level + 2` vertices).
pub fn icosphere(level: u32) -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::from(*p).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    SurfaceMesh::from_triangles(verts, &tris).expect("valid icosphere")
}

/// Icosphere with every vertex mapped through `f`.
pub fn warped_sphere(level: u32, f: impl Fn(&Vec3) -> Vec3) -> SurfaceMesh {
    icosphere(level).transformed(f)
}

/// Axis-aligned ellipsoid with radii `radii` and an optional radial ripple
/// `1 + amplitude·sin(freq·x)·sin(freq·y)·sin(freq·z)` on the unit sphere.
pub fn bumpy_ellipsoid(level: u32, radii: Vec3, amplitude: f64, freq: f64) -> SurfaceMesh {
    warped_sphere(level, |p| {
        let bump = 1.0 + amplitude * (freq * p.x).sin() * (freq * p.y).sin() * (freq * p.z).sin();
        p.component_mul(&radii) * bump
    })
}
