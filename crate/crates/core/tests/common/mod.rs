#![allow(dead_code)]

pub mod tdist;

use pmrl::ndcore::ParamStore;

/// Central finite-difference gradient of `f` with respect to every scalar in
/// `params`, in [`ParamStore::flatten`] order.
pub fn fd_gradient(params: &ParamStore, h: f64, mut f: impl FnMut(&ParamStore) -> f64) -> Vec<f64> {
    let base = params.flatten();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut x = base.clone();
        x[i] = base[i] + h;
        probe.assign_flat(&x).unwrap();
        let up = f(&probe);
        x[i] = base[i] - h;
        probe.assign_flat(&x).unwrap();
        let down = f(&probe);
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Central finite difference over a plain vector.
pub fn fd_vec(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}
