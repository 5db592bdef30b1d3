use std::collections::{BTreeMap, BTreeSet};

use nrv_core::volume::linear_index;
use nrv_core::{extract_isosurface, Domain, Kind, Provenance, Volume3D};

use crate::{ensure, Outcome};

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn check() -> Outcome {
    let (n, c, r) = (33usize, 16.0f64, 10.0f64);
    let mut data = vec![0.0f32; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
                if d2 <= r * r {
                    data[linear_index([n; 3], x, y, z)] = 1.0;
                }
            }
        }
    }
    let ball = Volume3D::new([n; 3], [1.0; 3], data, Kind::Normalized, Provenance::Real).unwrap();
    let m = extract_isosurface(&ball, 0.5, Domain::Young).map_err(|e| e.to_string())?;
    let verts = &m.vertices;
    ensure!(!m.triangles.is_empty(), "empty mesh");

    // every directed edge appears once and its reverse once
    let mut directed: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut incident: BTreeMap<u32, Vec<[u32; 3]>> = BTreeMap::new();
    for t in &m.triangles {
        ensure!(t[0] != t[1] && t[1] != t[2] && t[0] != t[2], "degenerate triangle {t:?}");
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            incident.entry(t[k]).or_default().push(*t);
        }
    }
    for (&(a, b), &count) in &directed {
        ensure!(count == 1, "edge {a}-{b} used {count} times in one direction");
        ensure!(directed.get(&(b, a)) == Some(&1), "edge {a}-{b} is a boundary or inconsistently oriented");
    }
    // the triangles around each vertex form one fan
    for (&v, tris) in &incident {
        let mut next: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tris {
            let k = t.iter().position(|&x| x == v).unwrap();
            next.insert(t[(k + 1) % 3], t[(k + 2) % 3]);
        }
        let start = *next.keys().next().unwrap();
        let (mut cur, mut steps) = (start, 0);
        loop {
            cur = next[&cur];
            steps += 1;
            if cur == start || steps > tris.len() {
                break;
            }
        }
        ensure!(steps == tris.len(), "vertex {v} is not a manifold vertex");
    }

    let used: BTreeSet<u32> = m.triangles.iter().flatten().copied().collect();
    let (v, e, f) = (used.len() as i64, (directed.len() / 2) as i64, m.triangles.len() as i64);
    let euler = v - e + f;
    ensure!(euler == 2, "Euler characteristic {euler}");
    ensure!(m.euler_characteristic() == 2 && m.is_closed(), "library topology disagrees");

    let area: f64 = m
        .triangles
        .iter()
        .map(|t| {
            let [a, b, c] = [verts[t[0] as usize], verts[t[1] as usize], verts[t[2] as usize]];
            let n = cross(sub(b, a), sub(c, a));
            0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
        })
        .sum();
    let analytic = 4.0 * std::f64::consts::PI * r * r;
    let err = (area - analytic).abs() / analytic;
    ensure!(err <= 0.1, "area {area:.1} vs {analytic:.1} ({:.1}%)", 100.0 * err);
    ensure!((m.area() - area).abs() <= 1e-6 * area, "library area {} vs {area}", m.area());
    Ok(format!(
        "closed oriented 2-manifold, V - E + F = {v} - {e} + {f} = 2, area {area:.1} vs {analytic:.1} ({:.1}%)",
        100.0 * err
    ))
}
