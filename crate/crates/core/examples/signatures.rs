//! Signing, blind-signed temporary IDs and bank-certified photos.
//!
//! cargo run --example signatures

use disaster_pay::crypto::{
    blind, hash, issue_signed_photo, unblind, verify_signed_photo, BlindKeyPair, BlindingFactor, KeyPair,
};
use disaster_pay::{EntityId, SimTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let now = SimTime::from_secs(60);

    // Every registered party gets a signing key from the bank. Keys may
    // carry an expiry; signing after it fails.
    let bank = KeyPair::generate(EntityId(0), None, &mut rng);
    let alice = KeyPair::generate(EntityId(7), Some(SimTime::from_secs(3600)), &mut rng);
    let msg = b"pay merchant 1 two dollars";
    let sig = alice.private.sign(msg, now)?;
    println!("sha-256(msg)      {}", hex(&hash(msg)));
    println!("signature valid   {}", alice.public.verify(msg, &sig));
    println!("tampered message  {}", alice.public.verify(b"pay merchant 1 ten dollars", &sig));
    println!("after key expiry  {:?}", alice.private.sign(msg, SimTime::from_secs(7200)).err());

    // Temporary IDs: the customer blinds a random nonce, the bank signs it
    // without seeing it, the customer unblinds. Merchants can check the
    // bank's signature but cannot link the nonce to the customer.
    let bank_blind = BlindKeyPair::generate(EntityId(0), &mut rng);
    let nonce: [u8; 16] = rng.gen();
    let r = BlindingFactor::random(&bank_blind.public, &mut rng);
    let blinded = blind(&nonce, r, &bank_blind.public)?;
    let blind_sig = bank_blind.private.sign_blinded(blinded);
    let temp_id_sig = unblind(&blind_sig, r, &bank_blind.public)?;
    println!("blinded value     {:#x}", blinded.0);
    println!("temp id verifies  {}", bank_blind.public.verify(&nonce, &temp_id_sig));
    println!("other nonce       {}", bank_blind.public.verify(&[0u8; 16], &temp_id_sig));

    // The bank and the customer both sign the digest of the customer's
    // photo, so a merchant can compare the face in front of it offline.
    let photo = b"jpeg bytes of alice";
    let certified = issue_signed_photo(&bank.private, &alice.private, photo, now)?;
    println!("photo matches     {}", verify_signed_photo(&certified, &bank.public, &alice.public, photo));
    println!("someone else      {}", verify_signed_photo(&certified, &bank.public, &alice.public, b"mallory"));
    Ok(())
}
