//! Learnable Doppler-axis transform pair.
//!
//! One pair of real matrices (A, B) plays the role of the unitary IDFT in the
//! delay-Doppler-to-delay-time direction and, conjugated, the DFT on the way
//! back. Initializing A + jB to the fixed transform matrix makes the untrained
//! blocks reproduce the classical transforms exactly; the return direction
//! holds no parameters of its own.

use crate::autodiff::complex::CTensor;
use crate::autodiff::optim::ParamStore;
use crate::autodiff::Tensor;
use crate::transforms::unitary_dft;
use crate::Result;

pub const PARAM_A: &str = "dlzak.a";
pub const PARAM_B: &str = "dlzak.b";

/// Register (A, B) at the fixed-transform values for an N-column grid:
/// A + jB equals the conjugate transpose of the unitary N-point DFT.
pub fn init_params(params: &mut ParamStore, n: usize) -> Result<()> {
    let u = unitary_dft(n);
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            // (U^H)[r, c] = conj(U[c, r])
            let z = u[(c, r)].conj();
            a[r * n + c] = z.re;
            b[r * n + c] = z.im;
        }
    }
    params.insert(PARAM_A, &[n, n], a)?;
    params.insert(PARAM_B, &[n, n], b)?;
    Ok(())
}

/// Delay-Doppler to delay-time: X (A + jB), expanded into real products.
pub fn dl_izak(x: &CTensor, a: &Tensor, b: &Tensor) -> Result<CTensor> {
    let re = x.re.matmul(a)?.sub(&x.im.matmul(b)?)?;
    let im = x.re.matmul(b)?.add(&x.im.matmul(a)?)?;
    CTensor::new(re, im)
}

/// Delay-time back to delay-Doppler: Y (A - jB), sharing (A, B) with
/// [`dl_izak`] so the pair owns exactly 2 N² scalars.
pub fn dl_zak(y: &CTensor, a: &Tensor, b: &Tensor) -> Result<CTensor> {
    let re = y.re.matmul(a)?.add(&y.im.matmul(b)?)?;
    let im = y.im.matmul(a)?.sub(&y.re.matmul(b)?)?;
    CTensor::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::grid::DdFrame;
    use crate::rng::{standard_complex_gaussian, RngFactory};
    use crate::transforms::{izak, zak, PulseShapes};
    use ndarray::Array2;
    use num_complex::Complex64;

    fn random_frame(m: usize, n: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = RngFactory::new(seed).stream(0);
        let vals = standard_complex_gaussian(&mut rng, m * n).to_vec();
        Array2::from_shape_vec((m, n), vals).unwrap()
    }

    fn bind_ab(tape: &Tape, params: &ParamStore) -> (Tensor, Tensor) {
        let bound = params.bind_all(tape).unwrap();
        (bound.get(PARAM_A).unwrap().clone(), bound.get(PARAM_B).unwrap().clone())
    }

    #[test]
    fn initialized_pair_matches_fixed_transforms() {
        let cfg = crate::grid::GridConfig::desk_8x8();
        let (m, n) = (cfg.m, cfg.n);
        let mut params = ParamStore::new();
        init_params(&mut params, n).unwrap();
        let x_nd = random_frame(m, n, 1);

        let tape = Tape::new();
        let (a, b) = bind_ab(&tape, &params);
        let x = CTensor::constant(&tape, &[m, n], x_nd.as_slice().unwrap()).unwrap();
        let s = dl_izak(&x, &a, &b).unwrap();

        let pulses = PulseShapes::identity(&cfg);
        let frame = DdFrame::from_array(x_nd.clone(), &cfg).unwrap();
        let s_fixed = izak(&frame, &pulses, &cfg).unwrap();
        let got = s.values();
        for (i, z) in s_fixed.iter().enumerate() {
            assert!((got[i] - z).norm() < 1e-10, "entry {i}");
        }

        // Return direction against the fixed transform.
        let y = CTensor::constant(&tape, &[m, n], s_fixed.as_slice().unwrap()).unwrap();
        let back = dl_zak(&y, &a, &b).unwrap();
        let frame_back = zak(&s_fixed, &pulses, &cfg).unwrap();
        let got = back.values();
        for (i, z) in frame_back.entries().iter().enumerate() {
            assert!((got[i] - z).norm() < 1e-10, "entry {i}");
        }
    }

    #[test]
    fn init_round_trip_is_identity() {
        let (m, n) = (8, 16);
        let mut params = ParamStore::new();
        init_params(&mut params, n).unwrap();
        let x_nd = random_frame(m, n, 2);
        let tape = Tape::new();
        let (a, b) = bind_ab(&tape, &params);
        let x = CTensor::constant(&tape, &[m, n], x_nd.as_slice().unwrap()).unwrap();
        let round = dl_zak(&dl_izak(&x, &a, &b).unwrap(), &a, &b).unwrap();
        let got = round.values();
        for (i, z) in x_nd.iter().enumerate() {
            assert!((got[i] - z).norm() < 1e-10, "entry {i}");
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let n = 8;
        let mut params = ParamStore::new();
        init_params(&mut params, n).unwrap();
        let tape = Tape::new();
        let (a, b) = bind_ab(&tape, &params);
        let zeros = vec![Complex64::new(0.0, 0.0); n * n];
        let x = CTensor::constant(&tape, &[n, n], &zeros).unwrap();
        let s = dl_izak(&x, &a, &b).unwrap();
        assert!(s.values().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn updating_shared_params_changes_both_directions() {
        let n = 4;
        let mut params = ParamStore::new();
        init_params(&mut params, n).unwrap();
        let x_nd = random_frame(n, n, 3);
        let outputs = |params: &ParamStore| {
            let tape = Tape::new();
            let (a, b) = bind_ab(&tape, params);
            let x = CTensor::constant(&tape, &[n, n], x_nd.as_slice().unwrap()).unwrap();
            (dl_izak(&x, &a, &b).unwrap().values(), dl_zak(&x, &a, &b).unwrap().values())
        };
        let (fwd0, bwd0) = outputs(&params);
        params.get_mut(PARAM_A).unwrap().values[0] += 0.25;
        let (fwd1, bwd1) = outputs(&params);
        assert!(fwd0.iter().zip(&fwd1).any(|(p, q)| (p - q).norm() > 1e-9));
        assert!(bwd0.iter().zip(&bwd1).any(|(p, q)| (p - q).norm() > 1e-9));
        assert_eq!(params.total_scalars(), 2 * n * n);
    }

    #[test]
    fn gradient_with_respect_to_a_matches_finite_differences() {
        let n = 4;
        let x_nd = random_frame(n, n, 4);
        let mut params = ParamStore::new();
        init_params(&mut params, n).unwrap();

        let loss_of = |params: &ParamStore| -> (f64, Option<Vec<f64>>) {
            let tape = Tape::new();
            let bound = params.bind_all(&tape).unwrap();
            let a = bound.get(PARAM_A).unwrap();
            let b = bound.get(PARAM_B).unwrap();
            let x = CTensor::constant(&tape, &[n, n], x_nd.as_slice().unwrap()).unwrap();
            let s = dl_izak(&x, a, b).unwrap();
            let loss = s.re.mul(&s.re).unwrap().mean_reduce().add(&s.im.mul(&s.im).unwrap().mean_reduce()).unwrap();
            let loss = loss.mean_reduce();
            loss.backward().unwrap();
            (loss.scalar_value(), a.grad())
        };
        let (_, grad) = loss_of(&params);
        let grad = grad.expect("gradient on A");
        let h = 1e-6;
        for i in [0usize, 5, 11, 15] {
            let mut pp = params.clone();
            pp.get_mut(PARAM_A).unwrap().values[i] += h;
            let mut pm = params.clone();
            pm.get_mut(PARAM_A).unwrap().values[i] -= h;
            let fd = (loss_of(&pp).0 - loss_of(&pm).0) / (2.0 * h);
            assert!((grad[i] - fd).abs() < 1e-4, "entry {i}: {} vs {fd}", grad[i]);
        }
    }
}
