//! C ABI for sealing and opening shared results and for validating
//! application manifests.
//!
//! Every function returns an [`ShStatus`]. Outputs go through out-pointers
//! and are owned by the caller until released with the matching `_free`
//! function. Byte strings are passed as pointer plus length and need not be
//! NUL-terminated. A panic inside the library is caught and reported as
//! `SH_STATUS_PANIC`.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sandhub::csp::CspPolicy;
use sandhub::manifest::{validate_manifest, validate_manifest_with_policy, ManifestError};
use sandhub::share::{self, Passphrase, PlainEnvelope, ShareError, CHECKSUM_LEN};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// A text argument was not valid UTF-8.
    InvalidUtf8 = 2,
    EmptyPassphrase = 3,
    FileNameTooLong = 4,
    FileNameHasSeparators = 5,
    /// Too short or not block aligned.
    MalformedBlob = 6,
    /// Wrong passphrase or corrupted data. Deliberately not more specific.
    IntegrityFailure = 7,
    /// The manifest is not a JSON document.
    MalformedDocument = 8,
    /// The manifest parsed but broke one or more rules; the report lists them.
    InvalidManifest = 9,
    /// The deployment origin given for validation is not an http(s) origin.
    InvalidOrigin = 10,
    Panic = 11,
}

impl From<ShareError> for ShStatus {
    fn from(e: ShareError) -> Self {
        match e {
            ShareError::EmptyPassphrase => ShStatus::EmptyPassphrase,
            ShareError::FileNameTooLong => ShStatus::FileNameTooLong,
            ShareError::FileNameHasSeparators => ShStatus::FileNameHasSeparators,
            ShareError::MalformedBlob => ShStatus::MalformedBlob,
            ShareError::IntegrityFailure => ShStatus::IntegrityFailure,
        }
    }
}

/// Owned byte buffer.
pub struct ShBuffer {
    bytes: Vec<u8>,
}

/// An opened envelope: file name and payload.
pub struct ShOpened {
    envelope: PlainEnvelope,
}

fn guard(f: impl FnOnce() -> Result<(), ShStatus>) -> ShStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ShStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => ShStatus::Panic,
    }
}

/// Borrows `len` bytes at `data`. A null pointer is allowed only for `len == 0`.
unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], ShStatus> {
    if data.is_null() {
        return if len == 0 {
            Ok(&[])
        } else {
            Err(ShStatus::NullArgument)
        };
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn text<'a>(data: *const u8, len: usize) -> Result<&'a str, ShStatus> {
    std::str::from_utf8(bytes(data, len)?).map_err(|_| ShStatus::InvalidUtf8)
}

unsafe fn passphrase(data: *const u8, len: usize) -> Result<Passphrase, ShStatus> {
    Ok(Passphrase::new(text(data, len)?)?)
}

unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Static, NUL-terminated description of a status. Never null.
#[no_mangle]
pub extern "C" fn sh_status_message(status: ShStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        ShStatus::Ok => b"ok\0",
        ShStatus::NullArgument => b"required pointer argument was null\0",
        ShStatus::InvalidUtf8 => b"text argument is not valid UTF-8\0",
        ShStatus::EmptyPassphrase => b"passphrase must not be empty\0",
        ShStatus::FileNameTooLong => b"file name exceeds 65535 bytes\0",
        ShStatus::FileNameHasSeparators => b"file name must not contain path separators\0",
        ShStatus::MalformedBlob => {
            b"sealed blob must be at least 48 bytes with block-aligned ciphertext\0"
        }
        ShStatus::IntegrityFailure => b"wrong passphrase or corrupted data\0",
        ShStatus::MalformedDocument => b"manifest is not a JSON document\0",
        ShStatus::InvalidManifest => b"manifest failed validation\0",
        ShStatus::InvalidOrigin => b"origin must be an http or https origin\0",
        ShStatus::Panic => b"internal error\0",
    };
    msg.as_ptr().cast()
}

/// SHA-256 of `data`, written to the 32 bytes at `out`.
///
/// # Safety
/// `data` must point to `len` readable bytes (or be null with `len == 0`);
/// `out` must point to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sh_checksum(data: *const u8, len: usize, out: *mut u8) -> ShStatus {
    guard(|| {
        if out.is_null() {
            return Err(ShStatus::NullArgument);
        }
        let digest = share::checksum(bytes(data, len)?);
        ptr::copy_nonoverlapping(digest.as_ptr(), out, CHECKSUM_LEN);
        Ok(())
    })
}

/// Seals `payload` under `file_name` (UTF-8) and `passphrase` (UTF-8) with a
/// fresh random salt and IV. On success `*out` holds the blob
/// `salt || iv || ciphertext`.
///
/// # Safety
/// Each pointer/length pair must describe readable memory; `out` must be a
/// valid pointer to write to.
#[no_mangle]
pub unsafe extern "C" fn sh_seal(
    payload: *const u8,
    payload_len: usize,
    file_name: *const u8,
    file_name_len: usize,
    passphrase_utf8: *const u8,
    passphrase_len: usize,
    out: *mut *mut ShBuffer,
) -> ShStatus {
    guard(|| {
        if out.is_null() {
            return Err(ShStatus::NullArgument);
        }
        *out = ptr::null_mut();
        let payload = bytes(payload, payload_len)?;
        let name = text(file_name, file_name_len)?;
        let pw = passphrase(passphrase_utf8, passphrase_len)?;
        let blob = share::seal(payload, name, &pw, &mut rand::rngs::OsRng)?;
        emit(
            out,
            ShBuffer {
                bytes: blob.to_bytes(),
            },
        );
        Ok(())
    })
}

/// Opens a sealed blob. Any tampering or a wrong passphrase yields
/// `SH_STATUS_INTEGRITY_FAILURE`.
///
/// # Safety
/// Each pointer/length pair must describe readable memory; `out` must be a
/// valid pointer to write to.
#[no_mangle]
pub unsafe extern "C" fn sh_open(
    blob: *const u8,
    blob_len: usize,
    passphrase_utf8: *const u8,
    passphrase_len: usize,
    out: *mut *mut ShOpened,
) -> ShStatus {
    guard(|| {
        if out.is_null() {
            return Err(ShStatus::NullArgument);
        }
        *out = ptr::null_mut();
        let blob = bytes(blob, blob_len)?;
        let pw = passphrase(passphrase_utf8, passphrase_len)?;
        let envelope = share::open_bytes(blob, &pw)?;
        emit(out, ShOpened { envelope });
        Ok(())
    })
}

/// Validates a manifest document. Source URLs may point at the external
/// runtime origins and, when `origin` is non-null, at that deployment origin.
///
/// On `SH_STATUS_OK` `*report` holds the normalized manifest as JSON. On
/// `SH_STATUS_INVALID_MANIFEST` it holds `{"violations":[{"path","message"}]}`.
/// On `SH_STATUS_MALFORMED_DOCUMENT` it holds `{"error": "..."}`. Otherwise it
/// is null.
///
/// # Safety
/// `json` must point to `json_len` readable bytes; `origin` must be null or a
/// NUL-terminated string; `report` must be a valid pointer to write to.
#[no_mangle]
pub unsafe extern "C" fn sh_manifest_validate(
    json: *const u8,
    json_len: usize,
    origin: *const c_char,
    report: *mut *mut ShBuffer,
) -> ShStatus {
    guard(|| {
        if report.is_null() {
            return Err(ShStatus::NullArgument);
        }
        *report = ptr::null_mut();
        let doc = text(json, json_len)?;
        let result = if origin.is_null() {
            validate_manifest(doc)
        } else {
            let origin = CStr::from_ptr(origin)
                .to_str()
                .map_err(|_| ShStatus::InvalidUtf8)?;
            let policy = CspPolicy::new(origin).map_err(|_| ShStatus::InvalidOrigin)?;
            validate_manifest_with_policy(doc, &policy)
        };
        let (status, body) = match result {
            Ok(m) => (ShStatus::Ok, m.to_json_string()),
            Err(ManifestError::Invalid(r)) => (
                ShStatus::InvalidManifest,
                serde_json::to_string(&r).expect("report serializes"),
            ),
            Err(ManifestError::MalformedDocument(msg)) => (
                ShStatus::MalformedDocument,
                serde_json::json!({ "error": msg }).to_string(),
            ),
        };
        emit(
            report,
            ShBuffer {
                bytes: body.into_bytes(),
            },
        );
        match status {
            ShStatus::Ok => Ok(()),
            other => Err(other),
        }
    })
}

/// Start of the buffer's bytes; valid until the buffer is freed.
///
/// # Safety
/// `buf` must be null or a live buffer from this library.
#[no_mangle]
pub unsafe extern "C" fn sh_buffer_data(buf: *const ShBuffer) -> *const u8 {
    buf.as_ref().map_or(ptr::null(), |b| b.bytes.as_ptr())
}

/// # Safety
/// `buf` must be null or a live buffer from this library.
#[no_mangle]
pub unsafe extern "C" fn sh_buffer_len(buf: *const ShBuffer) -> usize {
    buf.as_ref().map_or(0, |b| b.bytes.len())
}

/// Releases a buffer. Null is ignored.
///
/// # Safety
/// `buf` must be null or a buffer from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sh_buffer_free(buf: *mut ShBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}

/// The opened payload; valid until the result is freed.
///
/// # Safety
/// `opened` must be null or a live result; `len` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sh_opened_payload(opened: *const ShOpened, len: *mut usize) -> *const u8 {
    let (p, n) = opened.as_ref().map_or((ptr::null(), 0), |o| {
        (o.envelope.payload.as_ptr(), o.envelope.payload.len())
    });
    if !len.is_null() {
        *len = n;
    }
    p
}

/// The file name as UTF-8 bytes, not NUL-terminated; valid until the result
/// is freed.
///
/// # Safety
/// `opened` must be null or a live result; `len` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sh_opened_file_name(
    opened: *const ShOpened,
    len: *mut usize,
) -> *const u8 {
    let (p, n) = opened.as_ref().map_or((ptr::null(), 0), |o| {
        (o.envelope.file_name.as_ptr(), o.envelope.file_name.len())
    });
    if !len.is_null() {
        *len = n;
    }
    p
}

/// Releases an opened result. Null is ignored.
///
/// # Safety
/// `opened` must be null or a result from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sh_opened_free(opened: *mut ShOpened) {
    if !opened.is_null() {
        drop(Box::from_raw(opened));
    }
}
