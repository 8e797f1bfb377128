//! Minimal moduli count against target error for the decode roundtrip, and
//! the fitted growth constant of the noise penalty.

use gridft::experiments::fit_m_of_eps;

fn main() {
    let fit = fit_m_of_eps(&[0.0, 0.05, 0.1], &[0.1, 0.03, 0.01], 2000, 1, 0.95, &|_, _, _| {});
    println!("sigma   eps    M*   M (interpolated)");
    for p in &fit.points {
        let m = p.m.map_or("> 64".to_string(), |m| m.to_string());
        println!("{:<6}  {:<5}  {m:<4} {:.2}", p.sigma, p.eps, p.m_frac);
    }
    if let Some(f) = &fit.sigma0_fit {
        println!("sigma = 0: M* = {:.2} log(1/eps) + {:.2}, R^2 {:.3}", f.slope, f.intercept, f.r_squared);
    }
    for (sigma, a) in &fit.a_per_sigma {
        println!("a from sigma = {sigma}: {a:.1}");
    }
    println!("pooled a = {:.1} +- {:.1} (4 pi^2 = {:.1})", fit.a, fit.a_se, 4.0 * std::f64::consts::PI.powi(2));
}
