//! 1-D convolution over a closed vertex sequence with wraparound indexing:
//! `(f * k)_i = sum_{j=-r..r} f_{(i+j) mod N} k_j`.

use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::he_normal;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Element, Tensor};

/// Learnable circular convolution over `[N, D_in]` sequences. A kernel size
/// of 1 degenerates to a per-vertex linear layer, which the fusion and
/// prediction stages use.
#[derive(Debug, Clone)]
pub struct CircularConv<E: Element> {
    /// `[D_out, kernel * D_in]`, tap-major: tap j (from -r) occupies columns
    /// `[j+r] * D_in ..`.
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
    kernel: usize,
    in_dim: usize,
    out_dim: usize,
}

impl<E: Element> CircularConv<E> {
    pub fn new(in_dim: usize, out_dim: usize, kernel: usize, rng: &mut ChaCha20Rng) -> Self {
        assert!(kernel % 2 == 1, "circular conv kernel must be odd");
        let weight = he_normal(&[out_dim, kernel * in_dim], kernel * in_dim, rng).with_grad();
        CircularConv {
            weight,
            bias: Tensor::zeros(&[out_dim]).with_grad(),
            kernel,
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn check_seq(&self, seq: &Tensor<E>) -> Result<usize> {
        let s = seq.shape();
        if s.len() != 2 || s[1] != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "circular_conv",
                expected: format!("[N, {}]", self.in_dim),
                got: format!("{:?}", s),
            });
        }
        let n = s[0];
        if self.kernel / 2 >= n {
            return Err(Error::ShapeMismatch {
                op: "circular_conv",
                expected: format!("kernel half-width < sequence length {n}"),
                got: format!("kernel {}", self.kernel),
            });
        }
        Ok(n)
    }

    /// Ring expansion of `[N, D]` into `[N, kernel * D]`; row i holds taps
    /// `f_{(i - r) mod N} .. f_{(i + r) mod N}` concatenated.
    fn expand(&self, seq: &Tensor<E>, n: usize) -> Vec<E> {
        let d = self.in_dim;
        let k = self.kernel;
        let r = k / 2;
        let mut ex = vec![E::ZERO; n * k * d];
        for i in 0..n {
            let row = &mut ex[i * k * d..(i + 1) * k * d];
            for j in 0..k {
                let src = (i + n + j - r) % n;
                row[j * d..(j + 1) * d].copy_from_slice(&seq.data()[src * d..(src + 1) * d]);
            }
        }
        ex
    }

    pub fn forward(&self, seq: &Tensor<E>) -> Result<Tensor<E>> {
        let n = self.check_seq(seq)?;
        let ex = self.expand(seq, n);
        let mut y = vec![E::ZERO; n * self.out_dim];
        matmul_nt(n, self.kernel * self.in_dim, self.out_dim, &ex, self.weight.data(), &mut y, false);
        for row in y.chunks_exact_mut(self.out_dim) {
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        Tensor::from_vec(&[n, self.out_dim], y)
    }

    /// Accumulates weight/bias grads; returns the sequence gradient.
    pub fn backward(&mut self, seq: &Tensor<E>, dy: &Tensor<E>) -> Result<Tensor<E>> {
        let n = self.check_seq(seq)?;
        if dy.shape() != [n, self.out_dim] {
            return Err(Error::ShapeMismatch {
                op: "circular_conv backward",
                expected: format!("[{n}, {}]", self.out_dim),
                got: format!("{:?}", dy.shape()),
            });
        }
        let d = self.in_dim;
        let k = self.kernel;
        let r = k / 2;
        let kd = k * d;
        let ex = self.expand(seq, n);

        // dW [D_out, kD] += dY^T [D_out, N] @ ex [N, kD]
        matmul_tn(self.out_dim, n, kd, dy.data(), &ex, self.weight.grad_mut(), true);
        {
            let db = self.bias.grad_mut();
            for row in dy.data().chunks_exact(self.out_dim) {
                for (g, &v) in db.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }

        // dEx [N, kD] = dY [N, D_out] @ W [D_out, kD], then ring scatter
        let mut dex = vec![E::ZERO; n * kd];
        matmul(n, self.out_dim, kd, dy.data(), self.weight.data(), &mut dex);
        let mut dseq = vec![E::ZERO; n * d];
        for i in 0..n {
            let row = &dex[i * kd..(i + 1) * kd];
            for j in 0..k {
                let dst = (i + n + j - r) % n;
                for c in 0..d {
                    dseq[dst * d + c] += row[j * d + c];
                }
            }
        }
        Tensor::from_vec(&[n, d], dseq)
    }

    pub fn zero_grads(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn conv_with(weights: &[f64], in_dim: usize, out_dim: usize, kernel: usize) -> CircularConv<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut c = CircularConv::new(in_dim, out_dim, kernel, &mut rng);
        c.weight.data_mut().copy_from_slice(weights);
        for b in c.bias.data_mut() {
            *b = 0.0;
        }
        c
    }

    #[test]
    fn delta_kernel_is_identity() {
        // kernel 3, tap j=0 (column block 1) = identity
        let mut w = vec![0.0; 3 * 2 * 2]; // [D_out=2, 3*D_in=6]
        w[2] = 1.0; // out 0 <- tap 0, channel 0
        w[6 + 3] = 1.0; // out 1 <- tap 0, channel 1
        let conv = conv_with(&w, 2, 2, 3);
        let seq = Tensor::from_vec(&[5, 2], (0..10).map(|i| i as f64 * 0.7 - 2.0).collect())
            .unwrap();
        let y = conv.forward(&seq).unwrap();
        assert_eq!(y.data(), seq.data());
    }

    #[test]
    fn wraparound_box_kernel_matches_hand_values() {
        // N=4, D=1, input [1,2,3,4], kernel [1,1,1] -> [7,6,9,8]
        let conv = conv_with(&[1.0, 1.0, 1.0], 1, 1, 3);
        let seq = Tensor::from_vec(&[4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(&seq).unwrap();
        assert_eq!(y.data(), &[7.0, 6.0, 9.0, 8.0]);
    }

    #[test]
    fn matches_modular_double_loop_on_random_input() {
        let (n, din, dout, k) = (16, 3, 4, 9);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let conv = CircularConv::<f64>::new(din, dout, k, &mut rng);
        let seq = Tensor::from_vec(
            &[n, din],
            (0..n * din).map(|i| ((i * 37 % 97) as f64 - 48.0) / 31.0).collect(),
        )
        .unwrap();
        let y = conv.forward(&seq).unwrap();

        let r = k / 2;
        for i in 0..n {
            for o in 0..dout {
                let mut acc = 0.0;
                for j in 0..k {
                    let src = (i + n + j - r) % n;
                    for c in 0..din {
                        acc += seq.data()[src * din + c]
                            * conv.weight.data()[o * k * din + j * din + c];
                    }
                }
                let got = y.data()[i * dout + o];
                assert!(
                    (got - acc).abs() < 1e-12,
                    "mismatch at ({i},{o}): {got} vs {acc}"
                );
            }
        }
    }

    #[test]
    fn shift_equivariance_is_exact() {
        let (n, din, dout, k) = (16, 5, 7, 9);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let conv = CircularConv::<f64>::new(din, dout, k, &mut rng);
        let seq = Tensor::from_vec(
            &[n, din],
            (0..n * din).map(|i| ((i * 13 % 101) as f64 - 50.0) / 17.0).collect(),
        )
        .unwrap();
        let y = conv.forward(&seq).unwrap();
        for s in 1..n {
            let shifted = Tensor::from_vec(
                &[n, din],
                (0..n)
                    .flat_map(|i| seq.data()[((i + s) % n) * din..((i + s) % n + 1) * din].to_vec())
                    .collect(),
            )
            .unwrap();
            let ys = conv.forward(&shifted).unwrap();
            for i in 0..n {
                let expect = &y.data()[((i + s) % n) * dout..((i + s) % n + 1) * dout];
                let got = &ys.data()[i * dout..(i + 1) * dout];
                assert_eq!(got, expect, "shift {s} row {i}");
            }
        }
    }

    #[test]
    fn kernel_wider_than_ring_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let conv = CircularConv::<f64>::new(1, 1, 9, &mut rng);
        let seq = Tensor::from_vec(&[4, 1], vec![0.0; 4]).unwrap();
        assert!(conv.forward(&seq).is_err());
    }
}
