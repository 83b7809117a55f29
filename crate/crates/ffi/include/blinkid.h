#ifndef BLINKID_H
#define BLINKID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BlinkidStatus {
  BLINKID_STATUS_OK = 0,
  BLINKID_STATUS_NULL_POINTER = 1,
  BLINKID_STATUS_INVALID_ARGUMENT = 2,
  BLINKID_STATUS_PARSE = 3,
  BLINKID_STATUS_IO = 4,
  BLINKID_STATUS_NO_START_CODE = 5,
  BLINKID_STATUS_AMBIGUOUS = 6,
  /**
   * The requested item does not exist.
   */
  BLINKID_STATUS_NO_VALUE = 7,
  BLINKID_STATUS_PANIC = 99,
} BlinkidStatus;

/**
 * Pipeline configuration handle.
 */
typedef struct BlinkidConfig BlinkidConfig;

/**
 * Run report handle.
 */
typedef struct BlinkidReport BlinkidReport;

/**
 * Event stream handle.
 */
typedef struct BlinkidStream BlinkidStream;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread; empty if none. Valid until the
 * next failing call on the same thread.
 */
const char *blinkid_last_error(void);

/**
 * Number of bits in a frame.
 */
size_t blinkid_frame_bits(void);

/**
 * Writes the 11 frame bits of `payload` (0 or 1 each, MSB first) to `out`.
 *
 * # Safety
 * `out` must point to at least 11 writable bytes.
 */
enum BlinkidStatus blinkid_encode_frame(uint32_t payload, uint8_t *out);

/**
 * Aligns an 11-bit cyclic window (bytes 0 or 1) and writes its payload.
 *
 * # Safety
 * `bits` must point to `len` readable bytes; `payload` must be writable.
 */
enum BlinkidStatus blinkid_align_frame(const uint8_t *bits, size_t len, uint8_t *payload);

/**
 * Creates an empty stream for a `width` x `height` sensor.
 */
struct BlinkidStream *blinkid_stream_new(uint32_t width, uint32_t height);

/**
 * Reads a CSV or binary stream file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum BlinkidStatus blinkid_stream_load(const char *path, struct BlinkidStream **out);

/**
 * Appends an event. Events must be pushed in time order.
 *
 * # Safety
 * `stream` must be a handle from this library.
 */
enum BlinkidStatus blinkid_stream_push(struct BlinkidStream *stream,
                                       uint64_t t_us,
                                       uint16_t x,
                                       uint16_t y,
                                       int8_t p);

/**
 * Number of events in the stream; 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a handle from this library.
 */
size_t blinkid_stream_len(const struct BlinkidStream *stream);

/**
 * # Safety
 * `stream` must be null or a handle from this library, not used afterwards.
 */
void blinkid_stream_free(struct BlinkidStream *stream);

/**
 * Creates a configuration with default parameters.
 */
struct BlinkidConfig *blinkid_config_new(void);

/**
 * Sets one `key = value` entry, using the config file keys.
 *
 * # Safety
 * `config` must be a handle from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum BlinkidStatus blinkid_config_set(struct BlinkidConfig *config,
                                      const char *key,
                                      const char *value);

/**
 * Loads a `key = value` config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum BlinkidStatus blinkid_config_load(const char *path, struct BlinkidConfig **out);

/**
 * # Safety
 * `config` must be null or a handle from this library, not used afterwards.
 */
void blinkid_config_free(struct BlinkidConfig *config);

/**
 * Runs the pipeline without ground truth.
 *
 * # Safety
 * `stream` and `config` must be handles from this library; `out` writable.
 */
enum BlinkidStatus blinkid_run(const struct BlinkidStream *stream,
                               const struct BlinkidConfig *config,
                               struct BlinkidReport **out);

/**
 * Number of tracks Valid at the end of the run.
 *
 * # Safety
 * `report` must be null or a handle from this library.
 */
size_t blinkid_report_valid_tracks(const struct BlinkidReport *report);

/**
 * Payload of the `index`-th identification (track Valid at the end).
 *
 * # Safety
 * `report` must be a handle from this library; `track_id` and `payload`
 * must be writable.
 */
enum BlinkidStatus blinkid_report_identification(const struct BlinkidReport *report,
                                                 size_t index,
                                                 uint64_t *track_id,
                                                 uint8_t *payload);

/**
 * Report as JSON. Release with [`blinkid_string_free`].
 *
 * # Safety
 * `report` must be null or a handle from this library.
 */
char *blinkid_report_json(const struct BlinkidReport *report);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void blinkid_string_free(char *s);

/**
 * # Safety
 * `report` must be null or a handle from this library, not used afterwards.
 */
void blinkid_report_free(struct BlinkidReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLINKID_H */
