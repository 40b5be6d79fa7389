/// `P(T > t)` for Student's t with `df` degrees of freedom, by Simpson
/// quadrature after substituting `x = √df · tan θ`, which turns the density
/// into a multiple of `cos^{df−1} θ` on a finite interval. The constant
/// cancels by normalizing over the whole interval. Needs `df > 1`.
pub fn t_upper_tail(t: f64, df: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let f = |theta: f64| theta.cos().max(0.0).powf(df - 1.0);
    let theta_t = (t / df.sqrt()).atan();
    simpson(f, theta_t, half_pi, 200_000) / simpson(f, -half_pi, half_pi, 400_000)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
