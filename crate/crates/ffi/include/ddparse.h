#ifndef DDPARSE_H
#define DDPARSE_H

#include <stdint.h>

typedef enum DdpStatus {
  DDP_STATUS_OK = 0,
  DDP_STATUS_NULL_POINTER = 1,
  DDP_STATUS_INVALID_UTF8 = 2,
  DDP_STATUS_IO = 3,
  DDP_STATUS_PARSE = 4,
  DDP_STATUS_VALIDATION = 5,
  DDP_STATUS_MODEL = 6,
  DDP_STATUS_MISMATCH = 7,
  DDP_STATUS_PANIC = 8,
} DdpStatus;

/*
 A loaded parser model.
 */
typedef struct DdpParser DdpParser;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *ddp_version(void);

/*
 Message of the last failed call on this thread, or NULL after a
 successful call. Valid until the next call on this thread.
 */
const char *ddp_last_error_message(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must be NULL or a string returned by this library and not yet freed.
 */
void ddp_string_free(char *s);

/*
 Loads a parser model file into `*out`.

 # Safety
 `path` must be a valid NUL-terminated string and `out` valid for writes.
 */
enum DdpStatus ddp_parser_load(const char *path, struct DdpParser **out);

/*
 Releases a parser. NULL is ignored.

 # Safety
 `parser` must be NULL or a handle from [`ddp_parser_load`] not yet freed.
 */
void ddp_parser_free(struct DdpParser *parser);

/*
 Parses the EDUs of a document; any annotation in the input is ignored.

 # Safety
 `parser` must be a live handle, `doc_json` a valid NUL-terminated string
 and `out_json` valid for writes.
 */
enum DdpStatus ddp_parser_parse_json(const struct DdpParser *parser,
                                     const char *doc_json,
                                     char **out_json);

/*
 Random-baseline parse of a document with the given seed.

 # Safety
 `doc_json` must be a valid NUL-terminated string and `out_json` valid for writes.
 */
enum DdpStatus ddp_random_parse_json(const char *doc_json, uint64_t seed, char **out_json);

/*
 Checks that a document parses and satisfies the tree constraints.
 Returns `Validation` with the first violated rule otherwise.

 # Safety
 `doc_json` must be a valid NUL-terminated string.
 */
enum DdpStatus ddp_validate_json(const char *doc_json);

/*
 Scores a JSON array of predicted documents against a JSON array of gold
 documents matched by `doc_id`. `granularity` is `"fine"`, `"coarse"` or
 NULL for fine. Writes the report as JSON.

 # Safety
 String arguments must be NULL (where allowed) or valid NUL-terminated
 strings and `out_json` valid for writes.
 */
enum DdpStatus ddp_evaluate_json(const char *pred_json,
                                 const char *gold_json,
                                 const char *granularity,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDPARSE_H */
