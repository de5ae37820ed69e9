//! Hermite expansion of ReLU, its folding into one quadratic per channel, and the gap to ReLU.

use hcnn::aespa::{aespa_eval_plain, fold_quadratic, hermite_coeffs, AespaChannelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let basis = hermite_coeffs(4)?;
    for (i, f) in basis.f_hat.iter().enumerate() {
        println!("coefficient {i}: {f:+.10}");
    }

    let quad = hermite_coeffs(2)?;
    let identity = AespaChannelParams::identity(2);
    let (a, b, c) = fold_quadratic(&identity, &quad)?;
    println!("\nunit statistics fold to {a:.6} x^2 + {b:.6} x + {c:.6}");
    println!("{:>6} {:>10} {:>10}", "x", "relu", "quadratic");
    for k in -4..=4 {
        let x = k as f64 * 0.75;
        println!("{x:>6.2} {:>10.4} {:>10.4}", x.max(0.0), (a * x + b) * x + c);
    }

    // per-channel statistics and affine parameters fold to a different quadratic
    let trained = AespaChannelParams { gamma: 1.3, beta: -0.1, mu: vec![1.0, 0.2, 0.4], sigma2: vec![0.0, 1.5, 2.0], eps: 1e-5 };
    let (a, b, c) = fold_quadratic(&trained, &quad)?;
    let worst = (0..=1200)
        .map(|k| -6.0 + 0.01 * k as f64)
        .map(|x| Ok::<_, Box<dyn std::error::Error>>(((a * x + b) * x + c - aespa_eval_plain(x, &trained, &quad)?).abs()))
        .try_fold(0.0f64, |m, e| e.map(|e| m.max(e)))?;
    println!("\ntrained channel folds to {a:.6} x^2 + {b:.6} x + {c:.6}; max deviation from the normalized form {worst:.1e}");
    Ok(())
}
