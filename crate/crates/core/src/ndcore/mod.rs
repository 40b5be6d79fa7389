//! Dense `f64` tensors, a static reverse-mode autodiff graph, and the Adam /
//! gradient-descent optimizers used to train every network in the crate.

mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{Feed, Gradients, Graph, NodeId};
pub use optim::{OptState, OptimizerConfig, OptimizerKind};
pub use params::{ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tensor::Tensor;

/// Builds a [`Feed`] from `(name, tensor)` pairs.
pub fn feed<const N: usize>(items: [(&str, Tensor); N]) -> Feed {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn scalar_graph(build: impl FnOnce(&mut Graph, NodeId) -> NodeId) -> Graph {
        let mut g = Graph::new();
        let x = g.input("x");
        let y = build(&mut g, x);
        g.output("y", y);
        g
    }

    #[test]
    fn identity_graph() {
        let mut g = Graph::new();
        let x = g.input("x");
        g.output("y", x);
        let out = g.forward(&ParamStore::new(), &feed([("x", Tensor::vector(vec![1.0, 2.0]))])).unwrap();
        assert_eq!(out["y"].data(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = scalar_graph(|g, x| g.softmax(x));
        let out = g.forward(&ParamStore::new(), &feed([("x", Tensor::vector(vec![0.0, 0.0]))])).unwrap();
        assert_eq!(out["y"].data(), &[0.5, 0.5]);
    }

    #[test]
    fn dense_hand_evaluation() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        params.insert("b", Tensor::vector(vec![1.0]));
        let mut g = Graph::new();
        let x = g.input("x");
        let w = g.param("w");
        let b = g.param("b");
        let y = g.dense(x, w, b);
        g.output("y", y);
        let out = g.forward(&params, &feed([("x", Tensor::vector(vec![3.0]))])).unwrap();
        assert_eq!(out["y"].data(), &[7.0]);
    }

    #[test]
    fn square_derivative() {
        let mut g = scalar_graph(|g, x| g.mul(x, x));
        g.forward(&ParamStore::new(), &feed([("x", Tensor::scalar(3.0))])).unwrap();
        let grads = g.backward("y", &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads.inputs["x"].data(), &[6.0]);
    }

    #[test]
    fn log_derivative() {
        let mut g = scalar_graph(|g, x| g.log(x));
        g.forward(&ParamStore::new(), &feed([("x", Tensor::scalar(2.0))])).unwrap();
        let grads = g.backward("y", &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads.inputs["x"].data(), &[0.5]);
    }

    #[test]
    fn backward_is_linear_in_seed() {
        let mut g = scalar_graph(|g, x| {
            let t = g.tanh(x);
            g.softmax(t)
        });
        g.forward(&ParamStore::new(), &feed([("x", Tensor::vector(vec![0.3, -1.2, 0.7]))])).unwrap();
        let s1 = Tensor::vector(vec![1.0, 0.5, -2.0]);
        let s2 = Tensor::vector(vec![-0.3, 2.0, 0.1]);
        let sum = s1.zip_map(&s2, |a, b| 2.0 * a + b);
        let g1 = g.backward("y", &s1).unwrap().inputs["x"].clone();
        let g2 = g.backward("y", &s2).unwrap().inputs["x"].clone();
        let gs = g.backward("y", &sum).unwrap().inputs["x"].clone();
        for i in 0..3 {
            assert!((gs.data()[i] - (2.0 * g1.data()[i] + g2.data()[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let g = scalar_graph(|g, x| g.exp(x));
        assert!(matches!(g.backward("y", &Tensor::scalar(1.0)), Err(Error::State(_))));
    }

    #[test]
    fn shape_mismatch_names_the_node() {
        let mut g = Graph::new();
        let a = g.input("a");
        let b = g.input("b");
        let s = g.add(a, b);
        g.label(s, "residual");
        g.output("y", s);
        let err = g
            .forward(
                &ParamStore::new(),
                &feed([("a", Tensor::vector(vec![1.0, 2.0])), ("b", Tensor::vector(vec![1.0]))]),
            )
            .unwrap_err();
        assert!(matches!(&err, Error::Shape { node, .. } if node == "residual"), "{err}");
    }

    #[test]
    fn unreached_parameters_get_zero_gradients() {
        let mut params = ParamStore::new();
        params.insert("used", Tensor::scalar(2.0));
        params.insert("unused", Tensor::vector(vec![1.0, 1.0]));
        let mut g = Graph::new();
        let u = g.param("used");
        let _ = g.param("unused");
        let y = g.mul(u, u);
        g.output("y", y);
        g.forward(&params, &Feed::new()).unwrap();
        let grads = g.backward("y", &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads.params["used"].data(), &[4.0]);
        assert_eq!(grads.params["unused"].data(), &[0.0, 0.0]);
    }

    #[test]
    fn conv_same_padding_keeps_length() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap());
        params.insert("b", Tensor::vector(vec![0.0]));
        let mut g = Graph::new();
        let x = g.input("x");
        let w = g.param("w");
        let b = g.param("b");
        let y = g.conv1d(x, w, b, 1);
        g.output("y", y);
        let x = Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = g.forward(&params, &feed([("x", x)])).unwrap();
        assert_eq!(out["y"].data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut g = scalar_graph(|g, x| {
            let e = g.exp(x);
            let s = g.softmax(e);
            g.sum_last(s)
        });
        let f = feed([("x", Tensor::vector(vec![0.1, 0.2, 0.3, -4.0]))]);
        let a = g.forward(&ParamStore::new(), &f).unwrap();
        let b = g.forward(&ParamStore::new(), &f).unwrap();
        assert_eq!(a["y"].data()[0].to_bits(), b["y"].data()[0].to_bits());
    }
}
