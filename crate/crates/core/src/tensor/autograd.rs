use std::cell::Cell;
use std::collections::{HashMap, HashSet};

use super::{Element, NodeState, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Runs `f` with tape recording disabled on the current thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

impl<T: Element> Tensor<T> {
    /// Reverse-mode pass from a one-element loss.
    ///
    /// Gradients are added (`+=`) into every reachable leaf that requires one;
    /// callers zero them between steps. The traversed part of the tape is
    /// consumed: a second call fails with [`Error::State`] and leaves nothing
    /// half-updated.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad_flag() {
            return Err(Error::contract(
                "backward called on a tensor that does not require grad",
            ));
        }

        let order = topo_order(self)?;

        let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
        pending.insert(self.ptr_id(), vec![T::one()]);

        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.ptr_id()) else {
                continue;
            };
            let state = std::mem::replace(&mut *t.node_lock(), NodeState::Consumed);
            match state {
                NodeState::Leaf => {
                    *t.node_lock() = NodeState::Leaf;
                    if t.requires_grad_flag() {
                        t.accumulate_grad(&g);
                    }
                }
                NodeState::Pending(node) => {
                    if t.retains_grad() {
                        t.accumulate_grad(&g);
                    }
                    let grads = (node.backward)(&g);
                    debug_assert_eq!(grads.len(), node.inputs.len(), "op {}", node.op);
                    for (input, grad) in node.inputs.iter().zip(grads) {
                        let Some(grad) = grad else { continue };
                        if !input.requires_grad_flag() {
                            continue;
                        }
                        debug_assert_eq!(grad.len(), input.numel(), "op {}", node.op);
                        match pending.get_mut(&input.ptr_id()) {
                            Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, &b)| *a = *a + b),
                            None => {
                                pending.insert(input.ptr_id(), grad);
                            }
                        }
                    }
                }
                NodeState::Consumed => unreachable!("checked during traversal"),
            }
        }
        Ok(())
    }
}

/// Post-order DFS over tensors that require grad. Fails before touching any
/// state if part of the reachable graph was already consumed.
fn topo_order<T: Element>(root: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.ptr_id()) {
            continue;
        }
        let children: Vec<Tensor<T>> = match &*t.node_lock() {
            NodeState::Leaf => Vec::new(),
            NodeState::Pending(node) => node
                .inputs
                .iter()
                .filter(|i| i.requires_grad_flag())
                .cloned()
                .collect(),
            NodeState::Consumed => {
                return Err(Error::State(
                    "backward through a tape that was already consumed".into(),
                ))
            }
        };
        stack.push((t, true));
        for c in children {
            if !visited.contains(&c.ptr_id()) {
                stack.push((c, false));
            }
        }
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(v.to_vec(), &[v.len()]).unwrap().requires_grad(true)
    }

    #[test]
    fn sum_gives_ones() {
        let x = leaf(&[1.0, 2.0, 3.0]);
        x.sum(None, false).unwrap().backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gives_two_x() {
        let x = leaf(&[3.0]);
        x.mul(&x).unwrap().sum(None, false).unwrap().backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![6.0]);
    }

    #[test]
    fn second_backward_is_a_state_error() {
        let x = leaf(&[1.0, 2.0]);
        let loss = x.mul(&x).unwrap().sum(None, false).unwrap();
        loss.backward().unwrap();
        assert!(matches!(loss.backward(), Err(Error::State(_))));
        assert_eq!(x.grad_vec().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let x = leaf(&[1.0, 2.0]);
        let y = x.mul(&x).unwrap();
        assert!(matches!(y.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn grads_accumulate_across_calls() {
        let x = leaf(&[2.0]);
        for _ in 0..2 {
            x.mul(&x).unwrap().sum(None, false).unwrap().backward().unwrap();
        }
        assert_eq!(x.grad_vec().unwrap(), vec![8.0]);
        x.zero_grad();
        assert!(x.grad_vec().is_none());
    }

    #[test]
    fn no_grad_disables_recording() {
        let x = leaf(&[1.0]);
        let y = no_grad(|| x.mul(&x).unwrap());
        assert!(!y.requires_grad_flag());
        assert!(is_grad_enabled());
    }

    #[test]
    fn retained_intermediate_gets_grad() {
        let x = leaf(&[1.0, -2.0]);
        let y = x.mul_scalar(3.0).unwrap();
        y.retain_grad();
        y.sum(None, false).unwrap().backward().unwrap();
        assert_eq!(y.grad_vec().unwrap(), vec![1.0, 1.0]);
        assert_eq!(x.grad_vec().unwrap(), vec![3.0, 3.0]);
    }
}
