//! Zero-padded bilinear point sampling shared by the deformable convolution
//! and the grid sampler.

/// The four taps of a bilinear sample at pixel coordinates `(y, x)`.
/// Taps that fall outside the plane carry `None` and read as zero.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Taps {
    idx: [Option<usize>; 4],
    ly: f32,
    lx: f32,
}

impl Taps {
    #[inline]
    pub fn new(h: usize, w: usize, y: f32, x: f32) -> Self {
        let y0f = y.floor();
        let x0f = x.floor();
        let ly = y - y0f;
        let lx = x - x0f;
        let (y0, x0) = (y0f as i64, x0f as i64);
        let at = |yy: i64, xx: i64| -> Option<usize> {
            (yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w)
                .then(|| yy as usize * w + xx as usize)
        };
        Self {
            idx: [at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)],
            ly,
            lx,
        }
    }

    #[inline]
    fn weights(&self) -> [f32; 4] {
        let (hy, hx) = (1.0 - self.ly, 1.0 - self.lx);
        [hy * hx, hy * self.lx, self.ly * hx, self.ly * self.lx]
    }

    #[inline]
    fn corner(&self, plane: &[f32], k: usize) -> f32 {
        self.idx[k].map_or(0.0, |i| plane[i])
    }

    /// Interpolated value. At integer coordinates this is exactly the
    /// corner value, since the other three weights are exactly zero.
    #[inline]
    pub fn sample(&self, plane: &[f32]) -> f32 {
        let wt = self.weights();
        wt[0] * self.corner(plane, 0)
            + wt[1] * self.corner(plane, 1)
            + wt[2] * self.corner(plane, 2)
            + wt[3] * self.corner(plane, 3)
    }

    /// Partial derivatives of the sample with respect to `(y, x)`.
    #[inline]
    pub fn coord_grad(&self, plane: &[f32]) -> (f32, f32) {
        let v = [
            self.corner(plane, 0),
            self.corner(plane, 1),
            self.corner(plane, 2),
            self.corner(plane, 3),
        ];
        let (hy, hx) = (1.0 - self.ly, 1.0 - self.lx);
        let dy = hx * (v[2] - v[0]) + self.lx * (v[3] - v[1]);
        let dx = hy * (v[1] - v[0]) + self.ly * (v[3] - v[2]);
        (dy, dx)
    }

    /// Adds `g · ∂sample/∂plane` into `grad_plane`.
    #[inline]
    pub fn scatter(&self, grad_plane: &mut [f32], g: f32) {
        let wt = self.weights();
        for k in 0..4 {
            if let Some(i) = self.idx[k] {
                grad_plane[i] += g * wt[k];
            }
        }
    }
}
