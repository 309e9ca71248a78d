use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Length of the compressed description.
pub const DEFAULT_TCP_TOKENS: usize = 4;

/// Segment-mean pooling to a fixed length followed by an affine projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TcpParams {
    pub target_len: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    /// `(out_dim, in_dim)` row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl TcpParams {
    pub fn new(target_len: usize, in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if target_len == 0 {
            return Err(Error::Argument("compressed length must be at least 1".into()));
        }
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "projection {in_dim}->{out_dim} given {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            target_len,
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    /// Square identity projection with zero bias.
    pub fn identity(target_len: usize, dim: usize) -> Result<Self> {
        let weight = (0..dim * dim)
            .map(|k| if k / dim == k % dim { 1.0 } else { 0.0 })
            .collect();
        Self::new(target_len, dim, dim, weight, vec![0.0; dim])
    }

    pub fn seeded(target_len: usize, in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        let bias = (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::new(target_len, in_dim, out_dim, weight, bias)
    }
}

/// Sizes of `target` contiguous segments covering `n` tokens as evenly as
/// possible; the first `n % target` segments get one extra token.
pub fn segment_sizes(n: usize, target: usize) -> Result<Vec<usize>> {
    if target == 0 || n < target {
        return Err(Error::Argument(format!(
            "cannot pool {n} token(s) into {target} segment(s)"
        )));
    }
    let (base, extra) = (n / target, n % target);
    Ok((0..target).map(|k| base + usize::from(k < extra)).collect())
}

/// Compresses `(N, D)` tokens to `(target_len, out_dim)`.
pub fn tcp_forward(tokens: &Tensor, params: &TcpParams) -> Result<Tensor> {
    let (n, d) = tokens.matrix_dims()?;
    if d != params.in_dim {
        return Err(Error::Shape(format!(
            "tokens have dimension {d}, projection expects {}",
            params.in_dim
        )));
    }
    let sizes = segment_sizes(n, params.target_len)?;
    let data = tokens.data();
    let mut out = Vec::with_capacity(params.target_len * params.out_dim);
    let mut start = 0;
    let mut pooled = vec![0.0; d];
    for size in sizes {
        pooled.fill(0.0);
        for row in data[start * d..(start + size) * d].chunks_exact(d) {
            pooled.iter_mut().zip(row).for_each(|(p, v)| *p += v);
        }
        pooled.iter_mut().for_each(|p| *p /= size as f64);
        start += size;
        for (o, w_row) in params.weight.chunks_exact(d).enumerate() {
            let dot: f64 = w_row.iter().zip(&pooled).map(|(w, p)| w * p).sum();
            out.push(dot + params.bias[o]);
        }
    }
    Tensor::new(vec![params.target_len, params.out_dim], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_tokens_to_four_pairs() {
        let tokens = Tensor::from_fn(vec![8, 2], |k| k as f64);
        let out = tcp_forward(&tokens, &TcpParams::identity(4, 2).unwrap()).unwrap();
        // rows (0,1),(2,3) -> mean (1,2); (4,5),(6,7) -> (5,6); ...
        assert_eq!(out.data(), &[1.0, 2.0, 5.0, 6.0, 9.0, 10.0, 13.0, 14.0]);
    }

    #[test]
    fn identical_tokens_pass_through() {
        let v = [0.5, -1.25, 3.0];
        let tokens = Tensor::from_fn(vec![9, 3], |k| v[k % 3]);
        let out = tcp_forward(&tokens, &TcpParams::identity(4, 3).unwrap()).unwrap();
        for row in out.data().chunks_exact(3) {
            assert_eq!(row, &v);
        }
    }

    #[test]
    fn seven_into_four() {
        assert_eq!(segment_sizes(7, 4).unwrap(), vec![2, 2, 2, 1]);
        assert_eq!(segment_sizes(4, 4).unwrap(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn too_few_tokens() {
        let tokens = Tensor::zeros(vec![3, 2]);
        assert!(matches!(
            tcp_forward(&tokens, &TcpParams::identity(4, 2).unwrap()),
            Err(Error::Argument(_))
        ));
        assert!(TcpParams::identity(0, 2).is_err());
    }

    #[test]
    fn target_equal_to_n_with_identity_returns_input() {
        let tokens = Tensor::from_fn(vec![5, 3], |k| (k as f64).sqrt());
        let out = tcp_forward(&tokens, &TcpParams::identity(5, 3).unwrap()).unwrap();
        assert_eq!(out, tokens);
    }

    #[test]
    fn affine_projection_applied() {
        let tokens = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // mean token (2, 3); W = [[1, 1], [2, -1], [0, 1]], b = (0, 1, -1)
        let p = TcpParams::new(1, 2, 3, vec![1.0, 1.0, 2.0, -1.0, 0.0, 1.0], vec![0.0, 1.0, -1.0]).unwrap();
        assert_eq!(tcp_forward(&tokens, &p).unwrap().data(), &[5.0, 2.0, 2.0]);
    }
}
