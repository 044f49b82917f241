//! Forward and backward kernels over flat row-major buffers.
//!
//! Each kernel computes every output element from its own row of inputs with a
//! fixed accumulation order, so results do not depend on how samples are
//! grouped into batches.

use crate::tensor::Real;

/// `c[m×n] = a[m×k] · b[k×n]`.
pub fn matmul<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `da = dc · bᵀ`.
pub fn matmul_grad_a<F: Real>(dc: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut da = vec![F::zero(); m * k];
    for i in 0..m {
        let dcrow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = F::zero();
            for (&x, &y) in dcrow.iter().zip(brow) {
                acc += x * y;
            }
            da[i * k + p] = acc;
        }
    }
    da
}

/// `db = aᵀ · dc`.
pub fn matmul_grad_b<F: Real>(a: &[F], dc: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut db = vec![F::zero(); k * n];
    for i in 0..m {
        let dcrow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let dbrow = &mut db[p * n..(p + 1) * n];
            for (d, &g) in dbrow.iter_mut().zip(dcrow) {
                *d += av * g;
            }
        }
    }
    db
}

/// Geometry of a zero-padded 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn out_len(&self) -> usize {
        self.batch * self.cout * self.out_h() * self.out_w()
    }

    /// Calls `f(oy, ox, iy, ix)` for every output position whose tap `(ky, kx)`
    /// lands inside the unpadded input.
    #[inline]
    fn for_each_tap(&self, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (oh, ow) = (self.out_h(), self.out_w());
        for oy in 0..oh {
            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
            if iy < 0 || iy >= self.h as isize {
                continue;
            }
            for ox in 0..ow {
                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                if ix < 0 || ix >= self.w as isize {
                    continue;
                }
                f(oy, ox, iy as usize, ix as usize);
            }
        }
    }
}

pub fn conv2d<F: Real>(x: &[F], k: &[F], g: &ConvGeometry) -> Vec<F> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut y = vec![F::zero(); g.out_len()];
    for b in 0..g.batch {
        for co in 0..g.cout {
            let yplane = &mut y[(b * g.cout + co) * oh * ow..][..oh * ow];
            for ci in 0..g.cin {
                let xplane = &x[(b * g.cin + ci) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let kv = k[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
                        g.for_each_tap(ky, kx, |oy, ox, iy, ix| {
                            yplane[oy * ow + ox] += kv * xplane[iy * g.w + ix];
                        });
                    }
                }
            }
        }
    }
    y
}

pub fn conv2d_grad_input<F: Real>(dy: &[F], k: &[F], g: &ConvGeometry) -> Vec<F> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut dx = vec![F::zero(); g.batch * g.cin * g.h * g.w];
    for b in 0..g.batch {
        for co in 0..g.cout {
            let dyplane = &dy[(b * g.cout + co) * oh * ow..][..oh * ow];
            for ci in 0..g.cin {
                let dxplane = &mut dx[(b * g.cin + ci) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let kv = k[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
                        g.for_each_tap(ky, kx, |oy, ox, iy, ix| {
                            dxplane[iy * g.w + ix] += kv * dyplane[oy * ow + ox];
                        });
                    }
                }
            }
        }
    }
    dx
}

pub fn conv2d_grad_kernel<F: Real>(x: &[F], dy: &[F], g: &ConvGeometry) -> Vec<F> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut dk = vec![F::zero(); g.cout * g.cin * g.kh * g.kw];
    for b in 0..g.batch {
        for co in 0..g.cout {
            let dyplane = &dy[(b * g.cout + co) * oh * ow..][..oh * ow];
            for ci in 0..g.cin {
                let xplane = &x[(b * g.cin + ci) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let mut acc = F::zero();
                        g.for_each_tap(ky, kx, |oy, ox, iy, ix| {
                            acc += xplane[iy * g.w + ix] * dyplane[oy * ow + ox];
                        });
                        dk[((co * g.cin + ci) * g.kh + ky) * g.kw + kx] += acc;
                    }
                }
            }
        }
    }
    dk
}

/// Writes `log softmax(z / t)` into `out` using max-subtraction.
pub fn log_softmax<F: Real>(z: &[F], t: F, out: &mut [F]) {
    let max = z.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let mut sum = F::zero();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max) / t;
        sum += o.exp();
    }
    let lse = sum.ln();
    for o in out.iter_mut() {
        *o -= lse;
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_cases() {
        let id = [1.0, 0.0, 0.0, 1.0];
        let m = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(matmul(&id, &m, 2, 2, 2), m.to_vec());
        assert_eq!(matmul(&[1.0, 2.0], &[3.0, 4.0], 1, 2, 1), vec![11.0]);
    }

    #[test]
    fn conv_output_extent() {
        let g = ConvGeometry {
            batch: 1,
            cin: 1,
            h: 7,
            w: 5,
            cout: 1,
            kh: 3,
            kw: 3,
            stride: 2,
            pad: 1,
        };
        assert_eq!((g.out_h(), g.out_w()), (4, 3));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }
}
