//! Lane-parallel evaluation: up to [`LANES`] challenges share one pass over
//! the wiring. Every data-dependent choice is a select, so the lane loops
//! compile to vector compares and blends. Results are bit-identical to the
//! single-challenge path.

use super::{DelayNetwork, DppufError, LayerKind};
use crate::bits::{BitString, Challenge, Response};
use crate::scalar::DelayScalar;

pub const LANES: usize = 16;

/// Reusable buffers for [`DelayNetwork::evaluate_lanes`].
#[derive(Debug, Clone, Default)]
pub struct BatchScratch<T> {
    /// Wire values as 0 or 1, kept in `T` so every mask is a float compare.
    vals: Vec<[T; LANES]>,
    left: Vec<[T; LANES]>,
    right: Vec<[T; LANES]>,
}

#[inline(always)]
fn sel<T: Copy>(c: bool, a: T, b: T) -> T {
    if c {
        a
    } else {
        b
    }
}

impl<T: DelayScalar> DelayNetwork<T> {
    pub(crate) fn evaluate_lanes(
        &self,
        challenges: &[Challenge],
        s: &mut BatchScratch<T>,
    ) -> Result<Vec<Response>, DppufError> {
        assert!(!challenges.is_empty() && challenges.len() <= LANES);
        let w = self.topology.width;
        if let Some(c) = challenges.iter().find(|c| c.len() != w) {
            return Err(DppufError::WidthMismatch {
                expected: w,
                got: c.len(),
            });
        }
        s.vals.resize(w, [T::zero(); LANES]);
        s.left.resize(w, [T::zero(); LANES]);
        s.right.resize(w, [T::zero(); LANES]);
        let (vals, tl, tr) = (&mut s.vals, &mut s.left, &mut s.right);
        for x in 0..LANES {
            // idle lanes repeat the last challenge
            let c = &challenges[x.min(challenges.len() - 1)];
            for j in 0..w {
                let v = c.get(j) as usize;
                vals[j][x] = if v == 1 { T::one() } else { T::zero() };
                tl[j][x] = self.left[2 * j + v];
                tr[j][x] = self.right[2 * j + v];
            }
        }
        self.propagate(vals, tl, tr);

        Ok((0..challenges.len())
            .map(|x| {
                let mut packed = vec![0u8; w / 8];
                for j in 0..w {
                    packed[j >> 3] |= ((tl[j][x] < tr[j][x]) as u8) << (7 - (j & 7));
                }
                BitString::from_bytes(w, &packed).expect("whole bytes")
            })
            .collect())
    }

    fn propagate(&self, vals: &mut [[T; LANES]], tl: &mut [[T; LANES]], tr: &mut [[T; LANES]]) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime
            return unsafe { self.propagate_avx2(vals, tl, tr) };
        }
        self.propagate_impl(vals, tl, tr)
    }

    // Plain adds, compares and blends only, so wider vectors give identical bits.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn propagate_avx2(&self, vals: &mut [[T; LANES]], tl: &mut [[T; LANES]], tr: &mut [[T; LANES]]) {
        self.propagate_impl(vals, tl, tr)
    }

    #[inline(always)]
    fn propagate_impl(&self, vals: &mut [[T; LANES]], tl: &mut [[T; LANES]], tr: &mut [[T; LANES]]) {
        let w = self.topology.width;
        let (one, half) = (T::one(), T::from_f64_lossy(0.5));

        for (k, wiring) in self.wiring.iter().enumerate() {
            let base = (k + 1) * w * 2;
            let (dl, dr) = (&self.left[base..base + 2 * w], &self.right[base..base + 2 * w]);
            let st = wiring.stride;
            match wiring.kind {
                LayerKind::Booster => {
                    for b in (0..w).step_by(2 * st) {
                        for j in b..b + st {
                            let p = j + st;
                            let (vj, vp, lj, lp, rj, rp) = (vals[j], vals[p], tl[j], tl[p], tr[j], tr[p]);
                            let (dl0, dl1, dr0, dr1) = (dl[2 * j], dl[2 * j + 1], dr[2 * j], dr[2 * j + 1]);
                            let (mut nv, mut nl, mut nr) = ([T::zero(); LANES], [T::zero(); LANES], [T::zero(); LANES]);
                            for x in 0..LANES {
                                let v = (vj[x] - vp[x]).abs();
                                let hi = v > half;
                                nv[x] = v;
                                nl[x] = sel(lj[x] < lp[x], lp[x], lj[x]) + sel(hi, dl1, dl0);
                                nr[x] = sel(rj[x] < rp[x], rp[x], rj[x]) + sel(hi, dr1, dr0);
                            }
                            vals[j] = nv;
                            tl[j] = nl;
                            tr[j] = nr;
                        }
                    }
                }
                LayerKind::Represser => {
                    for b in (st..w).step_by(2 * st) {
                        for j in b..b + st {
                            let p = j - st;
                            let q = p ^ wiring.tap;
                            let (vj, vp, vq) = (vals[j], vals[p], vals[q]);
                            let (lj, lp, lq, rj, rp, rq) = (tl[j], tl[p], tl[q], tr[j], tr[p], tr[q]);
                            let (dl0, dl1, dr0, dr1) = (dl[2 * j], dl[2 * j + 1], dr[2 * j], dr[2 * j + 1]);
                            let (mut nv, mut nl, mut nr) = ([T::zero(); LANES], [T::zero(); LANES], [T::zero(); LANES]);
                            for x in 0..LANES {
                                let (a, bq) = (vp[x], vq[x]);
                                let both = a * bq > half;
                                let any = a + bq > half;
                                let a_hi = a > half;
                                let nand_l = sel(
                                    both,
                                    sel(lp[x] < lq[x], lq[x], lp[x]),
                                    sel(any, sel(a_hi, lq[x], lp[x]), sel(lq[x] < lp[x], lq[x], lp[x])),
                                );
                                let nand_r = sel(
                                    both,
                                    sel(rp[x] < rq[x], rq[x], rp[x]),
                                    sel(any, sel(a_hi, rq[x], rp[x]), sel(rq[x] < rp[x], rq[x], rp[x])),
                                );
                                let v = (vj[x] - (one - a * bq)).abs();
                                let hi = v > half;
                                nv[x] = v;
                                nl[x] = sel(lj[x] < nand_l, nand_l, lj[x]) + sel(hi, dl1, dl0);
                                nr[x] = sel(rj[x] < nand_r, nand_r, rj[x]) + sel(hi, dr1, dr0);
                            }
                            vals[j] = nv;
                            tl[j] = nl;
                            tr[j] = nr;
                        }
                    }
                    for j in 0..w {
                        let (v, l, r) = (vals[j], tl[j], tr[j]);
                        for x in 0..LANES {
                            let hi = v[x] > half;
                            tl[j][x] = sel(hi, r[x], l[x]);
                            tr[j][x] = sel(hi, l[x], r[x]);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dppuf::{DppufConfig, DppufInstance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lanes_match_single_evaluation() {
        for width in [8, 64, 256] {
            let inst = DppufInstance::<f64>::build(DppufConfig::new(width, 5)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(width as u64);
            let mut s = BatchScratch::default();
            for n in [1, 3, LANES] {
                for _ in 0..40 {
                    let cs: Vec<Challenge> = (0..n)
                        .map(|_| BitString::from_bools(&(0..width).map(|_| rng.gen()).collect::<Vec<bool>>()))
                        .collect();
                    let got = inst.network().evaluate_lanes(&cs, &mut s).unwrap();
                    let want: Vec<Response> = cs.iter().map(|c| inst.evaluate(c).unwrap()).collect();
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn lanes_check_width() {
        let inst = DppufInstance::<f32>::build(DppufConfig::new(8, 5)).unwrap();
        let r = inst
            .network()
            .evaluate_lanes(&[BitString::zeros(16)], &mut BatchScratch::default());
        assert!(matches!(r, Err(DppufError::WidthMismatch { .. })));
    }

    #[test]
    fn portable_and_dispatched_paths_agree() {
        let inst = DppufInstance::<f64>::build(DppufConfig::new(64, 9)).unwrap();
        let net = inst.network();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = 64;
        let init = |rng: &mut ChaCha8Rng| {
            let vals: Vec<[f64; LANES]> = (0..w)
                .map(|_| [0; LANES].map(|_: u8| rng.gen_range(0..2) as f64))
                .collect();
            let tl: Vec<[f64; LANES]> = (0..w)
                .map(|_| [0; LANES].map(|_: u8| rng.gen_range(0.0..300.0)))
                .collect();
            let tr: Vec<[f64; LANES]> = (0..w)
                .map(|_| [0; LANES].map(|_: u8| rng.gen_range(0.0..300.0)))
                .collect();
            (vals, tl, tr)
        };
        let (mut v1, mut l1, mut r1) = init(&mut rng);
        let (mut v2, mut l2, mut r2) = (v1.clone(), l1.clone(), r1.clone());
        net.propagate(&mut v1, &mut l1, &mut r1);
        net.propagate_impl(&mut v2, &mut l2, &mut r2);
        assert_eq!((v1, l1, r1), (v2, l2, r2));
    }
}
