use crate::error::{Error, Result};
use crate::models::{NamedTensors, Network};
use crate::tensor::{Scalar, Tensor};

/// `v ← momentum·v − lr·g; p ← p + v`, elementwise in storage precision.
pub fn sgd_update<T: Scalar>(p: &mut Tensor<T>, g: &Tensor<T>, v: &mut Tensor<T>, lr: f64, momentum: f64) -> Result<()> {
    if p.shape() != g.shape() || p.shape() != v.shape() {
        return Err(Error::Shape(format!(
            "sgd: parameter {}, gradient {}, velocity {}",
            p.shape(),
            g.shape(),
            v.shape()
        )));
    }
    let (lr, m) = (T::from_f64(lr), T::from_f64(momentum));
    for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
        *v = m * *v - lr * g;
        *p = *p + *v;
    }
    Ok(())
}

/// Applies [`sgd_update`] to every entry; names must line up in order.
pub fn sgd_step<T: Scalar>(
    params: &mut NamedTensors<T>,
    grads: &NamedTensors<T>,
    velocity: &mut NamedTensors<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    check_names(params.names(), grads, velocity)?;
    for (((_, p), (_, g)), (_, v)) in params.iter_mut().zip(grads.iter()).zip(velocity.iter_mut()) {
        sgd_update(p, g, v, lr, momentum)?;
    }
    Ok(())
}

/// Same as [`sgd_step`] but updates a network's parameters in place.
pub fn sgd_step_network<T: Scalar>(
    net: &mut Network<T>,
    grads: &NamedTensors<T>,
    velocity: &mut NamedTensors<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let mut params = net.parameters_mut();
    check_names(params.iter().map(|(n, _)| n.as_str()), grads, velocity)?;
    for (((_, p), (_, g)), (_, v)) in params.iter_mut().zip(grads.iter()).zip(velocity.iter_mut()) {
        sgd_update(p, g, v, lr, momentum)?;
    }
    Ok(())
}

fn check_names<'a, T: Scalar>(
    names: impl Iterator<Item = &'a str>,
    grads: &NamedTensors<T>,
    velocity: &NamedTensors<T>,
) -> Result<()> {
    let names: Vec<&str> = names.collect();
    if !names.iter().copied().eq(grads.names()) || !names.iter().copied().eq(velocity.names()) {
        return Err(Error::Shape(
            "sgd: parameter, gradient and velocity names differ".into(),
        ));
    }
    Ok(())
}

/// Zero velocity matching a network's parameters.
pub fn zero_velocity<T: Scalar>(net: &Network<T>) -> NamedTensors<T> {
    let mut v = NamedTensors::new();
    for (name, t) in net.parameters() {
        v.push(name, Tensor::zeros(t.shape())).expect("unique names");
    }
    v
}
