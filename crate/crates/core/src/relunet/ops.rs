//! Constructive network operations. Every construction here has a fixed,
//! documented shape so that dimension vectors of the results follow the
//! `⊙` / `⊞` algebra exactly.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::dims::DimVector;
use super::network::{Layer, ReluNetwork};
use super::sparse::SparseMatrix;

fn split_layer(d: usize) -> Layer {
    let eye = SparseMatrix::identity(d);
    let neg = eye.scaled(-1.0);
    Layer::new(
        SparseMatrix::vstack(&[&eye, &neg]).expect("equal widths"),
        vec![0.0; 2 * d],
    )
    .expect("consistent layer")
}

/// Network realizing the identity on `R^d` with dimension vector
/// `(d, 2d, ..., 2d, d)` of length `depth`.
///
/// The first layer splits `x` into `(x⁺, x⁻)`, interior layers pass the
/// nonnegative channels through unchanged and the output layer returns
/// `x⁺ - x⁻`.
pub fn identity_net(d: usize, depth: usize) -> Result<ReluNetwork> {
    if depth < 3 {
        return Err(Error::invalid(format!("identity network needs depth >= 3, got {depth}")));
    }
    if d == 0 {
        return Err(Error::invalid("identity network needs d >= 1"));
    }
    let mut layers = Vec::with_capacity(depth - 1);
    layers.push(split_layer(d));
    for _ in 0..depth - 3 {
        layers.push(Layer::new(SparseMatrix::identity(2 * d), vec![0.0; 2 * d])?);
    }
    let eye = SparseMatrix::identity(d);
    let neg = eye.scaled(-1.0);
    layers.push(Layer::new(SparseMatrix::hstack(&[&eye, &neg])?, vec![0.0; d])?);
    ReluNetwork::new(layers)
}

/// Single affine layer `x ↦ x`, dimension vector `(d, d)`.
pub fn linear_identity(d: usize) -> ReluNetwork {
    ReluNetwork::new(vec![Layer::new(SparseMatrix::identity(d), vec![0.0; d]).expect("square")])
        .expect("one layer")
}

/// `x ↦ A x + b` as a one-hidden-layer network with dimension vector
/// `(p, 2p, q)`.
pub fn affine_net(a: &Matrix, b: &[f64]) -> Result<ReluNetwork> {
    if a.rows() != b.len() {
        return Err(Error::shape(format!(
            "affine map with {} rows but offset of length {}",
            a.rows(),
            b.len()
        )));
    }
    let w = SparseMatrix::from_matrix(a);
    let neg = w.scaled(-1.0);
    ReluNetwork::new(vec![
        split_layer(a.cols()),
        Layer::new(SparseMatrix::hstack(&[&w, &neg])?, b.to_vec())?,
    ])
}

/// All-zero network of the given shape; realizes the zero map.
pub fn zero_net(dims: &DimVector) -> ReluNetwork {
    let layers = dims
        .as_slice()
        .windows(2)
        .map(|w| Layer::new(SparseMatrix::zeros(w[1], w[0]), vec![0.0; w[1]]).expect("shape"))
        .collect();
    ReluNetwork::new(layers).expect("dimension vector is valid")
}

/// Realizes `x ↦ λ (R(net)(x + shift_in) + shift_out)` with the same
/// dimension vector as `net`.
pub fn affine_wrap(
    net: &ReluNetwork,
    lambda: f64,
    shift_in: &[f64],
    shift_out: &[f64],
) -> Result<ReluNetwork> {
    if shift_in.len() != net.input_dim() || shift_out.len() != net.output_dim() {
        return Err(Error::shape(format!(
            "affine wrap shifts of length ({}, {}) for a network {}",
            shift_in.len(),
            shift_out.len(),
            net.dims()
        )));
    }
    let mut layers = net.clone().into_layers();
    let first = &mut layers[0];
    let moved = first.weights.matvec(shift_in);
    for (b, m) in first.bias.iter_mut().zip(moved) {
        *b += m;
    }
    let last = layers.last_mut().expect("non-empty");
    last.weights = last.weights.scaled(lambda);
    for (b, s) in last.bias.iter_mut().zip(shift_out) {
        *b = lambda * (*b + s);
    }
    ReluNetwork::new(layers)
}

/// Network realizing `R(outer) ∘ R(inner)` with dimension vector
/// `D(outer) ⊙ D(inner)`.
///
/// The output layer of `inner` is doubled into a hidden layer producing
/// `(z⁺, z⁻)`, and the first layer of `outer` reads `z = z⁺ - z⁻`.
pub fn compose_nets(outer: &ReluNetwork, inner: &ReluNetwork) -> Result<ReluNetwork> {
    if outer.input_dim() != inner.output_dim() {
        return Err(Error::shape(format!(
            "cannot compose {} after {}",
            outer.dims(),
            inner.dims()
        )));
    }
    let inner_layers = inner.layers();
    let outer_layers = outer.layers();
    let mut layers = Vec::with_capacity(inner_layers.len() + outer_layers.len());
    layers.extend_from_slice(&inner_layers[..inner_layers.len() - 1]);

    let last = &inner_layers[inner_layers.len() - 1];
    let neg_w = last.weights.scaled(-1.0);
    let mut bias = last.bias.clone();
    bias.extend(last.bias.iter().map(|b| -b));
    layers.push(Layer::new(SparseMatrix::vstack(&[&last.weights, &neg_w])?, bias)?);

    let first = &outer_layers[0];
    let neg_v = first.weights.scaled(-1.0);
    layers.push(Layer::new(
        SparseMatrix::hstack(&[&first.weights, &neg_v])?,
        first.bias.clone(),
    )?);
    layers.extend_from_slice(&outer_layers[1..]);
    ReluNetwork::new(layers)
}

/// Network realizing `sum_i coeffs[i] * R(nets[i])` with dimension vector
/// `⊞_i D(nets[i])`. All networks must share input, output and depth.
pub fn sum_nets(coeffs: &[f64], nets: &[ReluNetwork]) -> Result<ReluNetwork> {
    let refs: Vec<&ReluNetwork> = nets.iter().collect();
    sum_net_refs(coeffs, &refs)
}

pub(crate) fn sum_net_refs(coeffs: &[f64], nets: &[&ReluNetwork]) -> Result<ReluNetwork> {
    if nets.is_empty() || coeffs.len() != nets.len() {
        return Err(Error::invalid(format!(
            "sum of networks needs one coefficient per network ({} vs {})",
            coeffs.len(),
            nets.len()
        )));
    }
    let head = nets[0];
    for n in &nets[1..] {
        if n.depth() != head.depth()
            || n.input_dim() != head.input_dim()
            || n.output_dim() != head.output_dim()
        {
            return Err(Error::shape(format!(
                "sum of networks with different shapes: {} and {}",
                head.dims(),
                n.dims()
            )));
        }
    }
    let q = head.output_dim();
    let num_layers = head.layers().len();
    let out_bias = |k: usize| -> Vec<f64> {
        let mut b = vec![0.0; q];
        for (a, n) in coeffs.iter().zip(nets) {
            for (acc, v) in b.iter_mut().zip(&n.layers()[k].bias) {
                *acc += a * v;
            }
        }
        b
    };
    if num_layers == 1 {
        let blocks: Vec<&SparseMatrix> = nets.iter().map(|n| &n.layers()[0].weights).collect();
        let w = SparseMatrix::linear_combination(coeffs, &blocks)?;
        return ReluNetwork::new(vec![Layer::new(w, out_bias(0))?]);
    }

    let mut layers = Vec::with_capacity(num_layers);
    let firsts: Vec<&SparseMatrix> = nets.iter().map(|n| &n.layers()[0].weights).collect();
    let bias: Vec<f64> = nets.iter().flat_map(|n| n.layers()[0].bias.iter().copied()).collect();
    layers.push(Layer::new(SparseMatrix::vstack(&firsts)?, bias)?);
    for k in 1..num_layers - 1 {
        let blocks: Vec<&SparseMatrix> = nets.iter().map(|n| &n.layers()[k].weights).collect();
        let bias: Vec<f64> = nets.iter().flat_map(|n| n.layers()[k].bias.iter().copied()).collect();
        layers.push(Layer::new(SparseMatrix::block_diag(&blocks), bias)?);
    }
    let k = num_layers - 1;
    let scaled: Vec<SparseMatrix> = coeffs
        .iter()
        .zip(nets)
        .map(|(a, n)| n.layers()[k].weights.scaled(*a))
        .collect();
    let refs: Vec<&SparseMatrix> = scaled.iter().collect();
    layers.push(Layer::new(SparseMatrix::hstack(&refs)?, out_bias(k))?);
    ReluNetwork::new(layers)
}

/// Same realization with `extra` more entries in the dimension vector.
///
/// Implemented as composition with an identity network on the output side
/// of length `extra + 1` (for `extra = 1` the single linear identity layer).
pub fn extend_depth(net: &ReluNetwork, extra: usize) -> Result<ReluNetwork> {
    match extra {
        0 => Ok(net.clone()),
        1 => compose_nets(&linear_identity(net.output_dim()), net),
        _ => compose_nets(&identity_net(net.output_dim(), extra + 1)?, net),
    }
}

/// Checks `‖D(φ_1 ∘ … ∘ φ_n)‖∞ ≤ max{‖D(φ_i)‖∞, 2 d_1, …, 2 d_{n-1}}`
/// where `nets[0]` is applied last and `d_i` are the interface widths.
pub fn sup_norm_chain_bound_check(nets: &[ReluNetwork]) -> Result<bool> {
    let Some(first) = nets.first() else {
        return Err(Error::invalid("empty composition chain"));
    };
    let mut chain = first.dims();
    let mut bound = first.dims().sup_norm();
    for n in &nets[1..] {
        bound = bound.max(n.dims().sup_norm()).max(2 * n.output_dim());
        chain = chain.compose(&n.dims())?;
    }
    Ok(chain.sup_norm() <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn scalar_affine(a: f64, b: f64) -> ReluNetwork {
        affine_net(&Matrix::new(1, 1, vec![a]).unwrap(), &[b]).unwrap()
    }

    #[test]
    fn identity_examples() {
        let id = identity_net(1, 3).unwrap();
        assert_eq!(id.realize(&[-3.0]).unwrap(), vec![-3.0]);
        let id = identity_net(2, 5).unwrap();
        assert_eq!(id.realize(&[1.0, -7.0]).unwrap(), vec![1.0, -7.0]);
        assert_eq!(id.dims().as_slice(), &[2, 4, 4, 4, 2]);
        assert_eq!(id.dims().param_count(), 62);
        assert_eq!(id.stored_scalar_count(), 62);
        assert!(identity_net(2, 2).is_err());
    }

    #[test]
    fn affine_wrap_examples() {
        let id = identity_net(1, 3).unwrap();
        let w = affine_wrap(&id, 2.0, &[0.0], &[3.0]).unwrap();
        assert_eq!(w.realize(&[5.0]).unwrap(), vec![16.0]);
        assert_eq!(w.dims(), id.dims());
        let same = affine_wrap(&id, 1.0, &[0.0], &[0.0]).unwrap();
        for k in 0..20 {
            let x = k as f64 - 9.5;
            assert!(close(&same.realize(&[x]).unwrap(), &id.realize(&[x]).unwrap(), 1e-12));
        }
        let shifted = affine_wrap(&scalar_affine(3.0, 1.0), -1.0, &[2.0], &[0.5]).unwrap();
        // -(3 (x + 2) + 1 + 0.5)
        assert!(close(&shifted.realize(&[1.0]).unwrap(), &[-10.5], 1e-12));
        let single = ReluNetwork::from_dense(vec![(Matrix::new(1, 1, vec![2.0]).unwrap(), vec![1.0])]).unwrap();
        let ws = affine_wrap(&single, 3.0, &[1.0], &[-1.0]).unwrap();
        // 3 (2 (x + 1) + 1 - 1)
        assert!(close(&ws.realize(&[2.0]).unwrap(), &[18.0], 1e-12));
    }

    #[test]
    fn compose_examples() {
        let double = scalar_affine(2.0, 0.0);
        let plus_one = scalar_affine(1.0, 1.0);
        let c = compose_nets(&double, &plus_one).unwrap();
        assert_eq!(c.realize(&[4.0]).unwrap(), vec![10.0]);
        assert_eq!(c.dims(), double.dims().compose(&plus_one.dims()).unwrap());

        let outer = zero_net(&DimVector::new(vec![1, 3, 1]).unwrap());
        let inner = zero_net(&DimVector::new(vec![2, 4, 1]).unwrap());
        assert_eq!(compose_nets(&outer, &inner).unwrap().dims().as_slice(), &[2, 4, 2, 3, 1]);

        let g = affine_net(&Matrix::new(1, 2, vec![1.5, -2.0]).unwrap(), &[0.25]).unwrap();
        let idg = compose_nets(&identity_net(1, 3).unwrap(), &g).unwrap();
        for k in 0..20 {
            let x = [k as f64 * 0.7 - 6.0, 3.0 - k as f64 * 0.4];
            assert!(close(&idg.realize(&x).unwrap(), &g.realize(&x).unwrap(), 1e-12));
        }
        assert!(compose_nets(&g, &g).is_err());
    }

    #[test]
    fn sum_examples() {
        let g = affine_net(&Matrix::new(1, 2, vec![1.5, -2.0]).unwrap(), &[0.25]).unwrap();
        let zero = sum_nets(&[1.0, -1.0], &[g.clone(), g.clone()]).unwrap();
        for k in 0..20 {
            let x = [k as f64 - 10.0, 0.3 * k as f64];
            assert!(close(&zero.realize(&x).unwrap(), &[0.0], 1e-12));
        }
        let two = sum_nets(&[2.0], &[identity_net(1, 3).unwrap()]).unwrap();
        assert_eq!(two.realize(&[3.0]).unwrap(), vec![6.0]);
        let a = zero_net(&DimVector::new(vec![1, 3, 1]).unwrap());
        let b = zero_net(&DimVector::new(vec![1, 5, 1]).unwrap());
        assert_eq!(sum_nets(&[1.0, 1.0], &[a.clone(), b]).unwrap().dims().as_slice(), &[1, 8, 1]);
        let deeper = identity_net(1, 4).unwrap();
        assert!(sum_nets(&[1.0, 1.0], &[a.clone(), deeper]).is_err());
        assert!(sum_nets(&[1.0], &[a.clone(), a]).is_err());
    }

    #[test]
    fn sum_of_single_layers() {
        let a = ReluNetwork::from_dense(vec![(Matrix::new(1, 1, vec![2.0]).unwrap(), vec![1.0])]).unwrap();
        let b = ReluNetwork::from_dense(vec![(Matrix::new(1, 1, vec![-1.0]).unwrap(), vec![4.0])]).unwrap();
        let s = sum_nets(&[1.0, 0.5], &[a, b]).unwrap();
        assert_eq!(s.dims().as_slice(), &[1, 1]);
        assert!(close(&s.realize(&[2.0]).unwrap(), &[5.0 + 1.0], 1e-12));
    }

    #[test]
    fn extend_depth_examples() {
        let id = identity_net(1, 3).unwrap();
        assert_eq!(extend_depth(&id, 0).unwrap(), id);
        for extra in 1..5 {
            let e = extend_depth(&id, extra).unwrap();
            assert_eq!(e.depth(), id.depth() + extra);
            for k in 0..20 {
                let x = k as f64 - 10.0;
                assert!(close(&e.realize(&[x]).unwrap(), &[x], 1e-12));
            }
        }
    }

    #[test]
    fn chain_bound_examples() {
        let id3 = identity_net(3, 3).unwrap();
        assert!(sup_norm_chain_bound_check(&[id3.clone(), id3.clone()]).unwrap());
        let wide = zero_net(&DimVector::new(vec![3, 40, 3]).unwrap());
        assert!(sup_norm_chain_bound_check(&[id3.clone(), wide.clone(), id3]).unwrap());
        assert!(sup_norm_chain_bound_check(&[wide]).unwrap());
    }

    #[test]
    fn zero_net_realizes_zero() {
        let z = zero_net(&DimVector::new(vec![2, 5, 3, 1]).unwrap());
        assert_eq!(z.realize(&[4.0, -1.0]).unwrap(), vec![0.0]);
        assert_eq!(z.stored_scalar_count(), z.dims().param_count());
    }
}
