//! Structure overlays: one RGB image per kind, words tinted by the
//! cliques that contain them.
//!
//! Colors come from a golden-angle hue walk indexed by clique position,
//! so reruns produce identical bytes. Words in several cliques (merged
//! cells) get horizontal stripes cycling through their clique colors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use tablegraph::graph::CliqueSet;
use tablegraph::synth::{GrayImage, Vertex};

/// Stripe band height in pixels for multi-clique words.
const BAND: usize = 3;

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = (h.fract() + 1.0).fract() * 6.0;
    let i = h.floor() as usize % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Deterministic clique color: hue steps by the golden ratio.
pub fn palette(index: usize) -> [u8; 3] {
    hsv_to_rgb(index as f64 * 0.618_033_988_749_895, 0.6, 0.95)
}

/// Tints every word's box by its clique memberships over the page image.
/// Ink stays visible because the tint is multiplied by the gray value.
pub fn overlay(img: &GrayImage, vertices: &[Vertex], cliques: &CliqueSet) -> Vec<u8> {
    let (h, w) = (img.height(), img.width());
    let mut memberships: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
    for (c, clique) in cliques.cliques.iter().enumerate() {
        for &v in clique {
            if v < memberships.len() {
                memberships[v].push(c);
            }
        }
    }

    let mut rgb = Vec::with_capacity(h * w * 3);
    for &g in img.pixels() {
        rgb.extend([g, g, g]);
    }
    for (vertex, member) in vertices.iter().zip(&memberships) {
        if member.is_empty() {
            continue;
        }
        let [x0, y0, x1, y1] = vertex.bbox.map(|c| c as usize);
        for y in y0..y1.min(h) {
            let color = palette(member[((y - y0) / BAND) % member.len()]);
            for x in x0..x1.min(w) {
                let shade = img.get(x, y) as u16;
                let px = &mut rgb[(y * w + x) * 3..(y * w + x) * 3 + 3];
                for (o, &c) in px.iter_mut().zip(&color) {
                    *o = ((c as u16 * shade) / 255) as u8;
                }
            }
        }
    }
    rgb
}

/// Binary PPM, the color sibling of the dataset's PGM format.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> std::io::Result<()> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{width} {height}\n255\n")?;
    out.write_all(rgb)?;
    out.flush()
}
