//! Encode, encrypt, multiply, rescale and rotate at desk-A, with the error of each step.

use hcnn::ckks::{CkksContext, CkksParams, KeyGenOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_a();
    let ctx = CkksContext::new(params.clone())?;
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let keys = ctx.keygen(&KeyGenOptions::with_rotations([1, -1, 8]), &mut rng)?;
    println!("ring degree {}, {} slots, top level {}, scale 2^{}", params.n(), ctx.slots(), ctx.max_level(), params.log_scale);

    let n = ctx.slots();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let level = ctx.max_level();
    let px = ctx.encode(&x, params.scale(), level)?;
    println!("encode/decode error     {:.2e}", max_err(&ctx.decode(&px)?, &x));

    let cx = ctx.encrypt(&px, &keys.public, &mut rng)?;
    let cy = ctx.encrypt(&ctx.encode(&y, params.scale(), level)?, &keys.public, &mut rng)?;
    println!("encrypt/decrypt error   {:.2e}", max_err(&ctx.decrypt_real(&cx, &keys.sk)?, &x));

    let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    println!("hadd error              {:.2e}", max_err(&ctx.decrypt_real(&ctx.hadd(&cx, &cy)?, &keys.sk)?, &sum));

    let prod: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let cz = ctx.rescale(&ctx.hmult(&cx, &cy, &keys.public)?)?;
    println!("hmult+rescale error     {:.2e} (level {} -> {})", max_err(&ctx.decrypt_real(&cz, &keys.sk)?, &prod), level, cz.level);

    // step 3 has no key of its own and is composed from 1 + 1 + 1
    for step in [1i64, -1, 3, 8] {
        let mut want = x.clone();
        want.rotate_left(step.rem_euclid(n as i64) as usize);
        let r = ctx.rotate(&cx, step, &keys.public)?;
        println!("rotate {step:>2} error         {:.2e}", max_err(&ctx.decrypt_real(&r, &keys.sk)?, &want));
    }
    Ok(())
}
