use clickmat_core::{HintMap, Image};

/// Dense `N x C x H x W` float tensor in row-major (NCHW) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Self { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// One `H x W` plane.
    pub fn plane(&self, i: usize, ch: usize) -> &[f32] {
        let hw = self.h * self.w;
        let start = (i * self.c + ch) * hw;
        &self.data[start..start + hw]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "tensor add shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Concatenates samples along the batch axis.
    pub fn stack(items: &[Tensor]) -> Tensor {
        let first = &items[0];
        let mut data = Vec::with_capacity(first.data.len() * items.len());
        for t in items {
            assert_eq!((t.c, t.h, t.w), (first.c, first.h, first.w), "stack shape");
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(items.len(), first.c, first.h, first.w, data)
    }

    /// Network input: RGB planes followed by the hint plane, batch of one.
    pub fn from_image_hint(image: &Image, hints: &HintMap) -> Tensor {
        let (h, w) = image.shape();
        let hw = h * w;
        let mut data = vec![0.0; 4 * hw];
        for (i, px) in image.data().chunks_exact(3).enumerate() {
            data[i] = px[0];
            data[hw + i] = px[1];
            data[2 * hw + i] = px[2];
        }
        data[3 * hw..].copy_from_slice(hints.data());
        Tensor::from_vec(1, 4, h, w, data)
    }

    /// Refiner input: RGB planes followed by the alpha plane, batch of one.
    pub fn from_image_alpha(image: &Image, alpha: &[f32]) -> Tensor {
        let (h, w) = image.shape();
        let hw = h * w;
        let mut data = vec![0.0; 4 * hw];
        for (i, px) in image.data().chunks_exact(3).enumerate() {
            data[i] = px[0];
            data[hw + i] = px[1];
            data[2 * hw + i] = px[2];
        }
        data[3 * hw..].copy_from_slice(alpha);
        Tensor::from_vec(1, 4, h, w, data)
    }

    /// Reflect-pads every plane by the given margins (mirror without repeating the edge).
    pub fn reflect_pad(&self, top: usize, bottom: usize, left: usize, right: usize) -> Tensor {
        let (oh, ow) = (self.h + top + bottom, self.w + left + right);
        let mut out = Tensor::zeros(self.n, self.c, oh, ow);
        let rows: Vec<usize> = (0..oh).map(|r| mirror(r as i64 - top as i64, self.h)).collect();
        let cols: Vec<usize> = (0..ow).map(|c| mirror(c as i64 - left as i64, self.w)).collect();
        for p in 0..self.n * self.c {
            let src = &self.data[p * self.h * self.w..(p + 1) * self.h * self.w];
            let dst = &mut out.data[p * oh * ow..(p + 1) * oh * ow];
            for (r, &sr) in rows.iter().enumerate() {
                for (c, &sc) in cols.iter().enumerate() {
                    dst[r * ow + c] = src[sr * self.w + sc];
                }
            }
        }
        out
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Tensor {
        let mut out = Tensor::zeros(self.n, self.c, h, w);
        for p in 0..self.n * self.c {
            for r in 0..h {
                let src = p * self.h * self.w + (top + r) * self.w + left;
                let dst = p * h * w + r * w;
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        out
    }
}

/// Index reflected into `[0, n)` with period `2(n - 1)`.
fn mirror(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Margins that pad `size` up to the next multiple of `multiple`, split top/bottom.
pub fn pad_margins(size: usize, multiple: usize) -> (usize, usize) {
    let total = size.div_ceil(multiple) * multiple - size;
    (total / 2, total - total / 2)
}
