//! ComplEx and DistMult decoders.
//!
//! Both are written as `score(h, r, t) = <q(h, r), t>` with a query vector
//! `q`, so scoring one query against many tails shares the `h, r` work and
//! gives bit-identical results to scoring each triple on its own.
//!
//! For ComplEx a `d`-vector is read as `C^{d/2}`: first half real, second half
//! imaginary. The score is `Re(sum_k h_k r_k conj(t_k))`.

use super::{DecoderKind, Real};

/// Query vector `q` such that the decoder score equals `dot(q, t)`.
pub fn query_vector<T: Real>(decoder: DecoderKind, h: &[T], r: &[T]) -> Vec<T> {
    assert_eq!(h.len(), r.len(), "head and relation dims differ");
    match decoder {
        DecoderKind::DistMult => h.iter().zip(r).map(|(a, b)| *a * *b).collect(),
        DecoderKind::ComplEx => {
            let half = h.len() / 2;
            assert_eq!(half * 2, h.len(), "ComplEx needs an even dimension");
            let (h_re, h_im) = h.split_at(half);
            let (r_re, r_im) = r.split_at(half);
            let mut q = vec![T::zero(); h.len()];
            for k in 0..half {
                // (a + ib)(c + id) = (ac - bd) + i(ad + bc)
                q[k] = h_re[k] * r_re[k] - h_im[k] * r_im[k];
                q[half + k] = h_re[k] * r_im[k] + h_im[k] * r_re[k];
            }
            q
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// `Re <h, r, conj(t)>` over `C^{d/2}`.
pub fn score_complex<T: Real>(h: &[T], r: &[T], t: &[T]) -> T {
    assert_eq!(h.len(), t.len(), "head and tail dims differ");
    dot(&query_vector(DecoderKind::ComplEx, h, r), t)
}

/// `sum_k h_k r_k t_k`.
pub fn score_distmult<T: Real>(h: &[T], r: &[T], t: &[T]) -> T {
    assert_eq!(h.len(), t.len(), "head and tail dims differ");
    dot(&query_vector(DecoderKind::DistMult, h, r), t)
}

/// Adds `dL/dh` and `dL/dr` given `dL/dq` into `dh` and `dr`.
pub fn query_gradients<T: Real>(
    decoder: DecoderKind,
    h: &[T],
    r: &[T],
    dq: &[T],
    dh: &mut [T],
    dr: &mut [T],
) {
    match decoder {
        DecoderKind::DistMult => {
            for k in 0..h.len() {
                dh[k] += dq[k] * r[k];
                dr[k] += dq[k] * h[k];
            }
        }
        DecoderKind::ComplEx => {
            let half = h.len() / 2;
            for k in 0..half {
                let (a, b) = (h[k], h[half + k]);
                let (c, d) = (r[k], r[half + k]);
                let (u, w) = (dq[k], dq[half + k]);
                dh[k] += u * c + w * d;
                dh[half + k] += w * c - u * d;
                dr[k] += u * a + w * b;
                dr[half + k] += w * a - u * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_real_units() {
        assert_eq!(score_complex(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn complex_phase_cancels() {
        // i * 1 * conj(i) = 1
        assert_eq!(score_complex(&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn complex_reduces_by_hand() {
        // real parts (1,2)(1,1)(1,1) = 1 + 2
        let s = score_complex(&[1.0, 2.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(s, 3.0);
    }

    #[test]
    fn complex_is_antisymmetric_capable() {
        // r = i: score(h, r, t) = -score(t, r, h) for real h, t
        let h = [1.0, 0.0];
        let r = [0.0, 1.0];
        let t = [0.0, 1.0];
        let a: f64 = score_complex(&h, &r, &t);
        let b: f64 = score_complex(&t, &r, &h);
        assert_eq!(a, 1.0);
        assert_eq!(b, -1.0);
    }

    #[test]
    fn distmult_cases() {
        assert_eq!(score_distmult(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]), 2.0);
        assert_eq!(score_distmult(&[3.0, -2.0], &[0.0, 0.0], &[5.0, 7.0]), 0.0);
        assert_eq!(score_distmult(&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]), 63.0);
    }
}
