/*
 * vocorpus - speech corpus collection service, C interface.
 *
 * Every function returns a vc_status. On failure a human-readable message
 * for the calling thread is available from vc_last_error() until the next
 * call into the library from that thread. Strings returned through `char**`
 * out-parameters are owned by the caller and released with vc_string_free().
 */
#ifndef VOCORPUS_VOCORPUS_H
#define VOCORPUS_VOCORPUS_H

#include <stddef.h>
#include <stdint.h>

#if defined(VOCORPUS_BUILDING_LIBRARY)
#define VC_API __attribute__((visibility("default")))
#else
#define VC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vc_status {
  VC_OK = 0,
  VC_ERR_INVALID_ARGUMENT = 1,
  VC_ERR_MALFORMED_CONTAINER = 2,
  VC_ERR_UNSUPPORTED_FORMAT = 3,
  VC_ERR_EMPTY_CLIP = 4,
  VC_ERR_CLIP_TOO_SHORT = 5,
  VC_ERR_SCRIPT_INVALID = 6,
  VC_ERR_UNKNOWN_CORPUS = 7,
  VC_ERR_UNAUTHORIZED = 8,
  VC_ERR_IO = 9,
  VC_ERR_BIND_FAILED = 10,
  VC_ERR_REJECTED = 11, /* a recording failed validation */
  VC_ERR_INTERNAL = 99
} vc_status;

typedef struct vc_store vc_store;
typedef struct vc_server vc_server;

typedef struct vc_constraints {
  uint32_t peak_min;
  uint32_t peak_max;
  double snr_min_db;
  uint32_t head_window_ms;
  /* Allowed sample rates; a count of 0 allows every rate. */
  const uint32_t* allowed_sample_rates_hz;
  size_t allowed_sample_rate_count;
} vc_constraints;

typedef struct vc_server_config {
  const char* data_dir;
  const char* host;
  int port; /* 0 picks an ephemeral port */
  uint32_t session_ttl_hours;
  uint32_t max_upload_mb;
  const char* static_dir; /* may be NULL */
  const vc_constraints* default_constraints; /* may be NULL */
} vc_server_config;

VC_API const char* vc_version(void);
VC_API const char* vc_status_string(vc_status status);
VC_API const char* vc_last_error(void);
VC_API void vc_string_free(char* str);
VC_API void vc_buffer_free(uint8_t* data);

/* Fills `out` with the built-in defaults. The rate list points at static
 * storage. */
VC_API void vc_constraints_default(vc_constraints* out);

/* Decodes and validates a WAV payload. `report_json` receives the validation
 * report in the same JSON shape the HTTP API returns. Returns VC_OK when the
 * take is accepted, VC_ERR_REJECTED when it is not; both fill the report. */
VC_API vc_status vc_validate_wav(const uint8_t* data, size_t size,
                                 const vc_constraints* constraints,
                                 char** report_json);

/* Parses a script CSV. `errors_json` receives a JSON array of
 * {"line","reason","message"} objects (empty when the script is clean) and
 * `item_count` the number of items. Returns VC_ERR_SCRIPT_INVALID when any
 * row is bad. */
VC_API vc_status vc_check_script(const char* text, size_t size, char** errors_json,
                                 size_t* error_count, size_t* item_count);

VC_API vc_status vc_store_open(const char* data_dir, vc_store** out);
VC_API void vc_store_close(vc_store* store);

/* Writes the corpus archive to `out_path` on behalf of the corpus owner.
 * The bytes are identical to the HTTP export of the same corpus. */
VC_API vc_status vc_store_export(vc_store* store, const char* corpus_id, const char* out_path);
/* Same archive, returned in memory. Release with vc_buffer_free(). */
VC_API vc_status vc_store_export_buffer(vc_store* store, const char* corpus_id,
                                        uint8_t** data, size_t* size);

/* Integrity problems as a JSON array of strings. */
VC_API vc_status vc_store_verify(vc_store* store, char** problems_json, size_t* count);

VC_API vc_status vc_server_create(const vc_server_config* config, vc_server** out);
/* Binds the listening socket; VC_ERR_BIND_FAILED when the address is taken. */
VC_API vc_status vc_server_bind(vc_server* server);
VC_API int vc_server_port(const vc_server* server);
/* Blocks serving requests until vc_server_stop() is called from another
 * thread. In-flight requests complete before it returns. */
VC_API vc_status vc_server_run(vc_server* server);
VC_API void vc_server_stop(vc_server* server);
VC_API void vc_server_destroy(vc_server* server);

#ifdef __cplusplus
}
#endif

#endif /* VOCORPUS_VOCORPUS_H */
