use crate::error::{Error, Result};
use crate::ndcore::ParamStore;

/// `θ′ ← τθ + (1 − τ)θ′` for every parameter.
pub fn soft_update(target: &mut ParamStore, online: &ParamStore, tau: f64) -> Result<()> {
    check_tau(tau)?;
    online.check_compatible(target)?;
    for (name, t) in target.iter_mut() {
        let o = online.get(name).expect("compatible stores share names");
        for (x, &y) in t.data_mut().iter_mut().zip(o.data()) {
            *x = tau * y + (1.0 - tau) * *x;
        }
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")))
    }
}

/// Slow-moving copy of an online network.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetPair {
    pub target: ParamStore,
    pub tau: f64,
}

impl TargetPair {
    pub fn new(online: &ParamStore, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self {
            target: online.clone(),
            tau,
        })
    }

    pub fn update(&mut self, online: &ParamStore) -> Result<()> {
        soft_update(&mut self.target, online, self.tau)
    }
}
