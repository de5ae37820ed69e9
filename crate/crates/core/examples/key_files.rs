//! Key and ciphertext containers: write, read back, and reject a container from other parameters.

use hcnn::ckks::{write_atomic, CkksContext, CkksParams, KeyGenOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_a();
    let ctx = CkksContext::new(params.clone())?;
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let keys = ctx.keygen(&KeyGenOptions { rotations: vec![1, 2, 4], max_level: Some(3) }, &mut rng)?;
    let dir = std::env::temp_dir().join("hcnn-key-files");
    std::fs::create_dir_all(&dir)?;

    let sk_bytes = ctx.serialize_secret_key(&keys.sk);
    let pk_bytes = ctx.serialize_public_keys(&keys.public);
    write_atomic(&dir.join("secret.key"), &sk_bytes)?;
    write_atomic(&dir.join("public.keys"), &pk_bytes)?;
    println!("secret key {} bytes, public keys {} bytes (rotations {:?})", sk_bytes.len(), pk_bytes.len(), keys.public.rotation_steps());

    let sk = ctx.deserialize_secret_key(&std::fs::read(dir.join("secret.key"))?)?;
    let pk = ctx.deserialize_public_keys(&std::fs::read(dir.join("public.keys"))?)?;
    let ct = ctx.encrypt(&ctx.encode(&[3.25, -1.5], params.scale(), 3)?, &pk, &mut rng)?;
    let rotated = ctx.rotate(&ct, 1, &pk)?;
    let blob = ctx.serialize_ciphertexts(&[ct, rotated], br#"{"note":"two ciphertexts"}"#);
    let (cts, meta) = ctx.deserialize_ciphertexts(&blob)?;
    println!("container: {} ciphertexts, metadata {}", cts.len(), String::from_utf8_lossy(&meta));
    println!("decrypted: {:.6?} and {:.6?}", &ctx.decrypt_real(&cts[0], &sk)?[..2], &ctx.decrypt_real(&cts[1], &sk)?[..1]);

    let other = CkksContext::new(CkksParams::desk_b())?;
    match other.deserialize_ciphertexts(&blob) {
        Ok(_) => println!("unexpected: desk-B accepted a desk-A container"),
        Err(e) => println!("desk-B context rejects it: {e}"),
    }
    Ok(())
}
