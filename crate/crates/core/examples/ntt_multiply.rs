//! Negacyclic polynomial product through the NTT, checked against the quadratic definition.

use hcnn::arith::{negacyclic_mul, negacyclic_schoolbook, ntt_primes_below, Modulus, TwiddleTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(0);

    // X · X^3 = X^4 = -1 in Z_q[X]/(X^4 + 1)
    let q = ntt_primes_below(1 << 20, 4, 1, &[])?[0];
    let table = TwiddleTable::new(Modulus::new(q)?, 4)?;
    let prod = negacyclic_mul(&[0, 1, 0, 0], &[0, 0, 0, 1], &table);
    println!("q = {q}: X * X^3 = {prod:?} (q - 1 = {})", q - 1);

    for n in [8usize, 64, 1024] {
        let q = ntt_primes_below(1 << 60, n, 1, &[])?[0];
        let m = Modulus::new(q)?;
        let table = TwiddleTable::new(m, n)?;
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
        let b: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
        let fast = negacyclic_mul(&a, &b, &table);
        let slow = negacyclic_schoolbook(&a, &b, &m);
        let mut t = a.clone();
        table.forward(&mut t);
        table.inverse(&mut t);
        println!("N = {n:>4}, q = {q}: NTT product matches schoolbook: {}, round trip exact: {}", fast == slow, t == a);
    }
    Ok(())
}
