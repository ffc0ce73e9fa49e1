//! Binary morphology on row-major masks.
//!
//! Disk erosion and dilation are both answered from an exact squared Euclidean
//! distance transform (separable lower-envelope algorithm), so the cost is
//! linear in the pixel count regardless of radius. Pixels outside the image
//! never constrain an erosion and never seed a dilation.

const FAR: f64 = 1e20;

/// Squared Euclidean distance from every pixel to the nearest `true` pixel of `seeds`.
///
/// Pixels are at distance [`f64`] `1e20` or more when `seeds` is empty.
pub fn squared_distance_to(seeds: &[bool], height: usize, width: usize) -> Vec<f64> {
    assert_eq!(seeds.len(), height * width);
    let mut grid: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();

    let mut column = vec![0.0; height];
    let mut out = vec![0.0; height.max(width)];
    let mut scratch = Envelope::with_capacity(height.max(width));
    for c in 0..width {
        for r in 0..height {
            column[r] = grid[r * width + c];
        }
        scratch.transform(&column, &mut out[..height]);
        for r in 0..height {
            grid[r * width + c] = out[r];
        }
    }
    let mut row = vec![0.0; width];
    for r in 0..height {
        row.copy_from_slice(&grid[r * width..(r + 1) * width]);
        scratch.transform(&row, &mut out[..width]);
        grid[r * width..(r + 1) * width].copy_from_slice(&out[..width]);
    }
    grid
}

struct Envelope {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            vertices: vec![0; n],
            bounds: vec![0.0; n + 1],
        }
    }

    /// One-dimensional distance transform of the sampled function `f`.
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        if n == 0 {
            return;
        }
        let v = &mut self.vertices;
        let z = &mut self.bounds;
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..n {
            let qf = q as f64;
            loop {
                let p = v[k];
                let pf = p as f64;
                let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
                if s <= z[k] {
                    if k == 0 {
                        v[0] = q;
                        z[0] = f64::NEG_INFINITY;
                        z[1] = f64::INFINITY;
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        k = 0;
        for (q, slot) in out.iter_mut().enumerate() {
            let qf = q as f64;
            while z[k + 1] < qf {
                k += 1;
            }
            let d = qf - v[k] as f64;
            *slot = d * d + f[v[k]];
        }
    }
}

/// Keeps the pixels of `mask` whose whole radius-`radius` disk lies inside `mask`.
pub fn erode(mask: &[bool], height: usize, width: usize, radius: f64) -> Vec<bool> {
    let complement: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let dist = squared_distance_to(&complement, height, width);
    let r2 = radius * radius;
    mask.iter().zip(&dist).map(|(&m, &d)| m && d > r2).collect()
}

/// Grows `mask` by every pixel within Euclidean distance `radius`.
pub fn dilate(mask: &[bool], height: usize, width: usize, radius: f64) -> Vec<bool> {
    let dist = squared_distance_to(mask, height, width);
    let r2 = radius * radius;
    dist.iter().map(|&d| d <= r2).collect()
}

/// Labels the 4-connected components of `mask`; background pixels get `0`,
/// components are numbered from `1` in raster order of their first pixel.
pub fn label_components(mask: &[bool], height: usize, width: usize) -> (Vec<u32>, usize) {
    let mut parent: Vec<u32> = (0..(height * width) as u32).collect();

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            let next = parent[x as usize];
            parent[x as usize] = parent[next as usize];
            x = next;
        }
        x
    }

    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if !mask[i] {
                continue;
            }
            if c > 0 && mask[i - 1] {
                let (a, b) = (find(&mut parent, i as u32), find(&mut parent, (i - 1) as u32));
                if a != b {
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
            if r > 0 && mask[i - width] {
                let (a, b) = (find(&mut parent, i as u32), find(&mut parent, (i - width) as u32));
                if a != b {
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
        }
    }

    let mut labels = vec![0u32; height * width];
    let mut root_label = vec![0u32; height * width];
    let mut count = 0usize;
    for i in 0..height * width {
        if !mask[i] {
            continue;
        }
        let root = find(&mut parent, i as u32) as usize;
        if root_label[root] == 0 {
            count += 1;
            root_label[root] = count as u32;
        }
        labels[i] = root_label[root];
    }
    (labels, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_distance(seeds: &[bool], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![FAR; h * w];
        for r in 0..h {
            for c in 0..w {
                for sr in 0..h {
                    for sc in 0..w {
                        if seeds[sr * w + sc] {
                            let d = (r as f64 - sr as f64).powi(2) + (c as f64 - sc as f64).powi(2);
                            out[r * w + c] = out[r * w + c].min(d);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let (h, w) = (9, 13);
        let seeds: Vec<bool> = (0..h * w).map(|i| (i * 7919) % 11 == 0).collect();
        assert_eq!(squared_distance_to(&seeds, h, w), brute_distance(&seeds, h, w));
    }

    #[test]
    fn erosion_of_full_mask_is_identity() {
        let mask = vec![true; 20];
        assert_eq!(erode(&mask, 4, 5, 3.0), mask);
    }

    #[test]
    fn dilation_of_point_is_disk() {
        let (h, w) = (9, 9);
        let mut mask = vec![false; h * w];
        mask[4 * w + 4] = true;
        let grown = dilate(&mask, h, w, 2.0);
        assert_eq!(grown.iter().filter(|&&b| b).count(), 13);
    }

    #[test]
    fn components_are_counted() {
        #[rustfmt::skip]
        let mask = [
            true, false, true,
            true, false, true,
            false, true, false,
        ];
        let (labels, n) = label_components(&mask, 3, 3);
        assert_eq!(n, 3);
        assert_eq!(labels[0], labels[3]);
        assert_eq!(labels[7], 3);
    }
}
