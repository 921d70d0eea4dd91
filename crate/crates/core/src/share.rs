//! Sealed result envelopes.
//!
//! A result is wrapped in a plaintext envelope
//!
//! ```text
//! sha256(payload) [32] | name_len u16 BE [2] | file_name [name_len] | payload
//! ```
//!
//! which is PKCS#7 padded and encrypted with AES-256-CBC under a key derived
//! from a passphrase with PBKDF2-HMAC-SHA256. The wire form of a sealed blob is
//! `salt [16] | iv [16] | ciphertext`, with no framing. Browser clients build
//! the same bytes with WebCrypto, so every constant here is part of the
//! interoperability contract.
//!
//! Opening reports every cryptographic failure (bad padding, truncated
//! envelope, checksum mismatch, wrong passphrase) as the same
//! [`ShareError::IntegrityFailure`].

use std::fmt;

use aes::cipher::{block_padding::Pkcs7, BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

type Aes256CbcEnc = cbc::Encryptor<aes::Aes256>;
type Aes256CbcDec = cbc::Decryptor<aes::Aes256>;

pub const SALT_LEN: usize = 16;
pub const IV_LEN: usize = 16;
pub const KEY_LEN: usize = 32;
pub const BLOCK_LEN: usize = 16;
pub const CHECKSUM_LEN: usize = 32;
pub const PBKDF2_ITERATIONS: u32 = 100_000;
/// salt + iv + one cipher block.
pub const MIN_BLOB_LEN: usize = SALT_LEN + IV_LEN + BLOCK_LEN;
pub const MAX_FILE_NAME_LEN: usize = u16::MAX as usize;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ShareError {
    #[error("passphrase must not be empty")]
    EmptyPassphrase,
    #[error("file name exceeds {MAX_FILE_NAME_LEN} bytes")]
    FileNameTooLong,
    #[error("file name must not contain path separators")]
    FileNameHasSeparators,
    #[error("sealed blob must be at least {MIN_BLOB_LEN} bytes with block-aligned ciphertext")]
    MalformedBlob,
    #[error("wrong passphrase or corrupted data")]
    IntegrityFailure,
}

/// A user-chosen secret. Never printed by `Debug`.
#[derive(Clone)]
pub struct Passphrase(String);

impl Passphrase {
    pub fn new(secret: impl Into<String>) -> Result<Self, ShareError> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(ShareError::EmptyPassphrase);
        }
        Ok(Self(secret))
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Passphrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Passphrase(<redacted>)")
    }
}

/// 256-bit AES key derived from a passphrase and salt.
#[derive(Clone, PartialEq, Eq)]
pub struct ShareKey([u8; KEY_LEN]);

impl ShareKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for ShareKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ShareKey(<redacted>)")
    }
}

pub fn derive_key(passphrase: &Passphrase, salt: &[u8; SALT_LEN]) -> ShareKey {
    let mut key = [0u8; KEY_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(
        passphrase.expose().as_bytes(),
        salt,
        PBKDF2_ITERATIONS,
        &mut key,
    );
    ShareKey(key)
}

pub fn checksum(payload: &[u8]) -> [u8; CHECKSUM_LEN] {
    Sha256::digest(payload).into()
}

/// Plaintext carried inside a sealed blob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainEnvelope {
    pub file_name: String,
    pub payload: Vec<u8>,
}

impl PlainEnvelope {
    pub fn new(
        file_name: impl Into<String>,
        payload: impl Into<Vec<u8>>,
    ) -> Result<Self, ShareError> {
        let file_name = file_name.into();
        check_file_name(&file_name)?;
        Ok(Self {
            file_name,
            payload: payload.into(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let name = self.file_name.as_bytes();
        let mut out = Vec::with_capacity(CHECKSUM_LEN + 2 + name.len() + self.payload.len());
        out.extend_from_slice(&checksum(&self.payload));
        out.extend_from_slice(&(name.len() as u16).to_be_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses an envelope and verifies its checksum. Every failure is an
    /// integrity failure.
    pub fn decode(bytes: &[u8]) -> Result<Self, ShareError> {
        if bytes.len() < CHECKSUM_LEN + 2 {
            return Err(ShareError::IntegrityFailure);
        }
        let (stored, rest) = bytes.split_at(CHECKSUM_LEN);
        let name_len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
        let rest = &rest[2..];
        if rest.len() < name_len {
            return Err(ShareError::IntegrityFailure);
        }
        let (name, payload) = rest.split_at(name_len);
        let ok: bool = checksum(payload).ct_eq(stored).into();
        if !ok {
            return Err(ShareError::IntegrityFailure);
        }
        let file_name = std::str::from_utf8(name).map_err(|_| ShareError::IntegrityFailure)?;
        if check_file_name(file_name).is_err() {
            return Err(ShareError::IntegrityFailure);
        }
        Ok(Self {
            file_name: file_name.to_owned(),
            payload: payload.to_vec(),
        })
    }
}

fn check_file_name(name: &str) -> Result<(), ShareError> {
    if name.len() > MAX_FILE_NAME_LEN {
        return Err(ShareError::FileNameTooLong);
    }
    if name.contains(['/', '\\']) {
        return Err(ShareError::FileNameHasSeparators);
    }
    Ok(())
}

#[derive(Clone, PartialEq, Eq)]
pub struct SealedBlob {
    pub salt: [u8; SALT_LEN],
    pub iv: [u8; IV_LEN],
    pub ciphertext: Vec<u8>,
}

impl fmt::Debug for SealedBlob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SealedBlob")
            .field("len", &self.len())
            .finish_non_exhaustive()
    }
}

/// Structural check only: total length and block alignment.
pub fn check_blob_structure(bytes: &[u8]) -> Result<(), ShareError> {
    if bytes.len() < MIN_BLOB_LEN || (bytes.len() - SALT_LEN - IV_LEN) % BLOCK_LEN != 0 {
        return Err(ShareError::MalformedBlob);
    }
    Ok(())
}

impl SealedBlob {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ShareError> {
        check_blob_structure(bytes)?;
        let mut salt = [0u8; SALT_LEN];
        let mut iv = [0u8; IV_LEN];
        salt.copy_from_slice(&bytes[..SALT_LEN]);
        iv.copy_from_slice(&bytes[SALT_LEN..SALT_LEN + IV_LEN]);
        Ok(Self {
            salt,
            iv,
            ciphertext: bytes[SALT_LEN + IV_LEN..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.salt);
        out.extend_from_slice(&self.iv);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn len(&self) -> usize {
        SALT_LEN + IV_LEN + self.ciphertext.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn seal<R: RngCore + CryptoRng>(
    payload: &[u8],
    file_name: &str,
    passphrase: &Passphrase,
    rng: &mut R,
) -> Result<SealedBlob, ShareError> {
    check_file_name(file_name)?;
    let mut salt = [0u8; SALT_LEN];
    let mut iv = [0u8; IV_LEN];
    rng.fill_bytes(&mut salt);
    rng.fill_bytes(&mut iv);
    let key = derive_key(passphrase, &salt);
    let envelope = PlainEnvelope {
        file_name: file_name.to_owned(),
        payload: payload.to_vec(),
    };
    Ok(seal_envelope(&envelope, &key, salt, iv))
}

/// Encrypts an already-built envelope under an explicit key, salt and IV.
/// The salt is only recorded; it must be the one `key` was derived from.
pub fn seal_envelope(
    envelope: &PlainEnvelope,
    key: &ShareKey,
    salt: [u8; SALT_LEN],
    iv: [u8; IV_LEN],
) -> SealedBlob {
    let ciphertext = Aes256CbcEnc::new(key.as_bytes().into(), &iv.into())
        .encrypt_padded_vec_mut::<Pkcs7>(&envelope.encode());
    SealedBlob {
        salt,
        iv,
        ciphertext,
    }
}

pub fn open(blob: &SealedBlob, passphrase: &Passphrase) -> Result<PlainEnvelope, ShareError> {
    if blob.ciphertext.is_empty() || blob.ciphertext.len() % BLOCK_LEN != 0 {
        return Err(ShareError::MalformedBlob);
    }
    let key = derive_key(passphrase, &blob.salt);
    open_with_key(blob, &key)
}

/// Opens a blob with a key the caller already derived from `blob.salt`.
pub fn open_with_key(blob: &SealedBlob, key: &ShareKey) -> Result<PlainEnvelope, ShareError> {
    if blob.ciphertext.is_empty() || blob.ciphertext.len() % BLOCK_LEN != 0 {
        return Err(ShareError::MalformedBlob);
    }
    let plain = Aes256CbcDec::new(key.as_bytes().into(), &blob.iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(&blob.ciphertext)
        .map_err(|_| ShareError::IntegrityFailure)?;
    PlainEnvelope::decode(&plain)
}

/// Convenience over raw wire bytes.
pub fn open_bytes(bytes: &[u8], passphrase: &Passphrase) -> Result<PlainEnvelope, ShareError> {
    open(&SealedBlob::from_bytes(bytes)?, passphrase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Hands out a fixed byte sequence, for reproducing externally computed blobs.
    struct Scripted(Vec<u8>, usize);

    impl RngCore for Scripted {
        fn next_u32(&mut self) -> u32 {
            unimplemented!()
        }
        fn next_u64(&mut self) -> u64 {
            unimplemented!()
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.copy_from_slice(&self.0[self.1..self.1 + dest.len()]);
            self.1 += dest.len();
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            self.fill_bytes(dest);
            Ok(())
        }
    }
    impl CryptoRng for Scripted {}

    fn pw(s: &str) -> Passphrase {
        Passphrase::new(s).unwrap()
    }

    // Expected values below come from Python's hashlib and the `cryptography`
    // package, not from this implementation.

    #[test]
    fn derive_key_matches_reference_pbkdf2() {
        let key = derive_key(&pw("correct horse"), &[0u8; 16]);
        assert_eq!(
            hex::encode(key.as_bytes()),
            "61e83ce234494b7c3119c1178560dbe8c7a05e8b96645df70729c6605444db1e"
        );
    }

    #[test]
    fn derive_key_is_deterministic_and_salted() {
        let a = derive_key(&pw("pw"), &[1u8; 16]);
        let b = derive_key(&pw("pw"), &[1u8; 16]);
        let c = derive_key(&pw("pw"), &[2u8; 16]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_passphrase_rejected() {
        assert_eq!(
            Passphrase::new("").unwrap_err(),
            ShareError::EmptyPassphrase
        );
    }

    #[test]
    fn checksum_vectors() {
        assert_eq!(
            hex::encode(checksum(b"")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hex::encode(checksum(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(checksum(b"same"), checksum(b"same"));
    }

    #[test]
    fn seal_matches_reference_blob() {
        let mut rng = Scripted((0u8..32).collect(), 0);
        let blob = seal(b"hello", "r.txt", &pw("pw"), &mut rng).unwrap();
        assert_eq!(
            hex::encode(blob.to_bytes()),
            "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f\
             478684f006e25bbb7aeb4f81866a4aa4cc90dd68ca7ea383ff19ccfab344b23d\
             82f0602e7941b50f07af35468b1c34c1"
        );
    }

    #[test]
    fn opens_reference_blob_with_non_ascii_inputs() {
        let bytes = hex::decode(
            "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa55555555555555555555555555555555\
             8e78dd3c20250c4d09e8cb3b0a20787bac18fb6a0e58695461fb28ea49cf4cb8\
             0f922796b0faef0ab701b52abd55eee9",
        )
        .unwrap();
        let opened = open_bytes(&bytes, &pw("pässwörd \u{1F511}")).unwrap();
        assert_eq!(opened.file_name, "résumé.html");
        assert!(opened.payload.is_empty());
    }

    #[test]
    fn round_trip_and_fresh_randomness() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = seal(b"hello", "r.txt", &pw("pw"), &mut rng).unwrap();
        let b = seal(b"hello", "r.txt", &pw("pw"), &mut rng).unwrap();
        assert_ne!(a.to_bytes(), b.to_bytes());
        let opened = open(&a, &pw("pw")).unwrap();
        assert_eq!(opened.payload, b"hello");
        assert_eq!(opened.file_name, "r.txt");
    }

    #[test]
    fn megabyte_payload_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut payload = vec![0u8; 1 << 20];
        rng.fill_bytes(&mut payload);
        let blob = seal(&payload, "big.bin", &pw("pw"), &mut rng).unwrap();
        assert_eq!(open(&blob, &pw("pw")).unwrap().payload, payload);
    }

    #[test]
    fn wire_layout_offsets() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let blob = seal(b"x", "a", &pw("pw"), &mut rng).unwrap();
        let bytes = blob.to_bytes();
        assert_eq!(&bytes[..16], &blob.salt);
        assert_eq!(&bytes[16..32], &blob.iv);
        assert_eq!(&bytes[32..], &blob.ciphertext[..]);
        assert_eq!(SealedBlob::from_bytes(&bytes).unwrap(), blob);
    }

    #[test]
    fn file_name_rules() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let long = "a".repeat(MAX_FILE_NAME_LEN + 1);
        assert_eq!(
            seal(b"", &long, &pw("pw"), &mut rng).unwrap_err(),
            ShareError::FileNameTooLong
        );
        for bad in ["dir/x", "..\\x"] {
            assert_eq!(
                seal(b"", bad, &pw("pw"), &mut rng).unwrap_err(),
                ShareError::FileNameHasSeparators
            );
        }
    }

    #[test]
    fn structural_checks_precede_crypto() {
        assert_eq!(
            SealedBlob::from_bytes(&[0u8; 47]).unwrap_err(),
            ShareError::MalformedBlob
        );
        assert_eq!(
            SealedBlob::from_bytes(&[0u8; 49]).unwrap_err(),
            ShareError::MalformedBlob
        );
        assert!(SealedBlob::from_bytes(&[0u8; 48]).is_ok());
    }

    #[test]
    fn wrong_passphrases_fail_uniformly() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let wrong = ["pW", "pw ", "p", "passphrase", "\u{00e9}", "\0pw"];
        for (i, payload) in [&b""[..], b"a", &[7u8; 15], &[7u8; 16], &[9u8; 300]]
            .iter()
            .enumerate()
        {
            let blob = seal(payload, &format!("f{i}.bin"), &pw("pw"), &mut rng).unwrap();
            for w in wrong {
                assert_eq!(
                    open(&blob, &pw(w)).unwrap_err(),
                    ShareError::IntegrityFailure
                );
            }
        }
    }

    #[test]
    fn trailing_nul_is_an_hmac_key_alias() {
        // HMAC zero-pads short keys, so PBKDF2 cannot tell these apart.
        assert_eq!(
            derive_key(&pw("pw"), &[3u8; 16]),
            derive_key(&pw("pw\0"), &[3u8; 16])
        );
    }

    #[test]
    fn debug_output_redacts_secrets() {
        let p = pw("hunter2");
        let k = derive_key(&p, &[0u8; 16]);
        assert!(!format!("{p:?}").contains("hunter2"));
        assert_eq!(format!("{k:?}"), "ShareKey(<redacted>)");
    }
}
