#ifndef SANDHUB_H
#define SANDHUB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum ShStatus {
  SH_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  SH_STATUS_NULL_ARGUMENT = 1,
  /**
   * A text argument was not valid UTF-8.
   */
  SH_STATUS_INVALID_UTF8 = 2,
  SH_STATUS_EMPTY_PASSPHRASE = 3,
  SH_STATUS_FILE_NAME_TOO_LONG = 4,
  SH_STATUS_FILE_NAME_HAS_SEPARATORS = 5,
  /**
   * Too short or not block aligned.
   */
  SH_STATUS_MALFORMED_BLOB = 6,
  /**
   * Wrong passphrase or corrupted data. Deliberately not more specific.
   */
  SH_STATUS_INTEGRITY_FAILURE = 7,
  /**
   * The manifest is not a JSON document.
   */
  SH_STATUS_MALFORMED_DOCUMENT = 8,
  /**
   * The manifest parsed but broke one or more rules; the report lists them.
   */
  SH_STATUS_INVALID_MANIFEST = 9,
  /**
   * The deployment origin given for validation is not an http(s) origin.
   */
  SH_STATUS_INVALID_ORIGIN = 10,
  SH_STATUS_PANIC = 11,
} ShStatus;

/**
 * Owned byte buffer.
 */
typedef struct ShBuffer ShBuffer;

/**
 * An opened envelope: file name and payload.
 */
typedef struct ShOpened ShOpened;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static, NUL-terminated description of a status. Never null.
 */
const char *sh_status_message(enum ShStatus status);

/**
 * SHA-256 of `data`, written to the 32 bytes at `out`.
 *
 * # Safety
 * `data` must point to `len` readable bytes (or be null with `len == 0`);
 * `out` must point to 32 writable bytes.
 */
enum ShStatus sh_checksum(const uint8_t *data, size_t len, uint8_t *out);

/**
 * Seals `payload` under `file_name` (UTF-8) and `passphrase` (UTF-8) with a
 * fresh random salt and IV. On success `*out` holds the blob
 * `salt || iv || ciphertext`.
 *
 * # Safety
 * Each pointer/length pair must describe readable memory; `out` must be a
 * valid pointer to write to.
 */
enum ShStatus sh_seal(const uint8_t *payload,
                      size_t payload_len,
                      const uint8_t *file_name,
                      size_t file_name_len,
                      const uint8_t *passphrase_utf8,
                      size_t passphrase_len,
                      struct ShBuffer **out);

/**
 * Opens a sealed blob. Any tampering or a wrong passphrase yields
 * `SH_STATUS_INTEGRITY_FAILURE`.
 *
 * # Safety
 * Each pointer/length pair must describe readable memory; `out` must be a
 * valid pointer to write to.
 */
enum ShStatus sh_open(const uint8_t *blob,
                      size_t blob_len,
                      const uint8_t *passphrase_utf8,
                      size_t passphrase_len,
                      struct ShOpened **out);

/**
 * Validates a manifest document. Source URLs may point at the external
 * runtime origins and, when `origin` is non-null, at that deployment origin.
 *
 * On `SH_STATUS_OK` `*report` holds the normalized manifest as JSON. On
 * `SH_STATUS_INVALID_MANIFEST` it holds `{"violations":[{"path","message"}]}`.
 * On `SH_STATUS_MALFORMED_DOCUMENT` it holds `{"error": "..."}`. Otherwise it
 * is null.
 *
 * # Safety
 * `json` must point to `json_len` readable bytes; `origin` must be null or a
 * NUL-terminated string; `report` must be a valid pointer to write to.
 */
enum ShStatus sh_manifest_validate(const uint8_t *json,
                                   size_t json_len,
                                   const char *origin,
                                   struct ShBuffer **report);

/**
 * Start of the buffer's bytes; valid until the buffer is freed.
 *
 * # Safety
 * `buf` must be null or a live buffer from this library.
 */
const uint8_t *sh_buffer_data(const struct ShBuffer *buf);

/**
 * # Safety
 * `buf` must be null or a live buffer from this library.
 */
size_t sh_buffer_len(const struct ShBuffer *buf);

/**
 * Releases a buffer. Null is ignored.
 *
 * # Safety
 * `buf` must be null or a buffer from this library not yet freed.
 */
void sh_buffer_free(struct ShBuffer *buf);

/**
 * The opened payload; valid until the result is freed.
 *
 * # Safety
 * `opened` must be null or a live result; `len` must be null or writable.
 */
const uint8_t *sh_opened_payload(const struct ShOpened *opened, size_t *len);

/**
 * The file name as UTF-8 bytes, not NUL-terminated; valid until the result
 * is freed.
 *
 * # Safety
 * `opened` must be null or a live result; `len` must be null or writable.
 */
const uint8_t *sh_opened_file_name(const struct ShOpened *opened, size_t *len);

/**
 * Releases an opened result. Null is ignored.
 *
 * # Safety
 * `opened` must be null or a result from this library not yet freed.
 */
void sh_opened_free(struct ShOpened *opened);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SANDHUB_H */
