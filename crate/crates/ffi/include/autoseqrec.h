#ifndef AUTOSEQREC_H
#define AUTOSEQREC_H

/* Generated from crates/ffi/src/lib.rs; do not edit by hand. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AsrStatus {
  ASR_STATUS_OK = 0,
  ASR_STATUS_NULL_POINTER = 1,
  ASR_STATUS_INVALID_ARGUMENT = 2,
  ASR_STATUS_OUT_OF_RANGE = 3,
  ASR_STATUS_IO = 4,
  // Bad magic, unsupported version, truncated or malformed container.
  ASR_STATUS_FORMAT = 5,
  ASR_STATUS_VOCABULARY_DRIFT = 6,
  ASR_STATUS_DIMENSION_MISMATCH = 7,
  ASR_STATUS_BUFFER_TOO_SMALL = 8,
  ASR_STATUS_INTERNAL = 9,
} AsrStatus;

typedef struct AsrModel AsrModel;

typedef struct AsrSession AsrSession;

// Scoring options. Obtain defaults from [`asr_score_config_default`].
typedef struct AsrScoreConfig {
  double lambda1;
  double lambda2;
  // 1 disables the multi-hop term.
  uint32_t hops;
  // Min-max normalize each component before mixing.
  bool normalize;
  // Push already-seen items to the bottom.
  bool filter_seen;
} AsrScoreConfig;

// Library version as a static NUL-terminated string.
const char *asr_version(void);

// Message for the last failed call on this thread ("" after a success).
// Valid until the next call into this library on the same thread.
const char *asr_last_error_message(void);

struct AsrScoreConfig asr_score_config_default(void);

// Loads a checkpoint. `expected_digest` may be NULL to skip the vocabulary check.
//
// # Safety
// `path` (and `expected_digest` if non-NULL) must be valid NUL-terminated
// strings; `out` must be a valid pointer to write the handle to.
enum AsrStatus asr_model_load(const char *path, const char *expected_digest, struct AsrModel **out);

// # Safety
// `model` must be NULL or a handle from [`asr_model_load`] not yet freed.
void asr_model_free(struct AsrModel *model);

// Writes (users the model was trained for, items, hidden size). Any out
// pointer may be NULL.
//
// # Safety
// `model` must be a live handle; non-NULL out pointers must be writable.
enum AsrStatus asr_model_dims(const struct AsrModel *model,
                              size_t *num_users,
                              size_t *num_items,
                              size_t *hidden);

// Copies the checkpoint's vocabulary digest (hex, NUL-terminated) into `buf`.
//
// # Safety
// `model` must be a live handle and `buf` writable for `len` bytes.
enum AsrStatus asr_model_vocab_digest(const struct AsrModel *model, char *buf, size_t len);

// Empty session (no interactions) for `num_users` users. The session keeps
// the model's weights alive; the model handle may be freed afterwards.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum AsrStatus asr_session_new(const struct AsrModel *model,
                               size_t num_users,
                               struct AsrSession **out);

// Session resumed from a matrix-state snapshot; the snapshot's digest must
// match the model's.
//
// # Safety
// `model` must be a live handle, `path` a valid string, `out` writable.
enum AsrStatus asr_session_load_state(const struct AsrModel *model,
                                      const char *path,
                                      struct AsrSession **out);

// Writes the session's matrix state as a snapshot bound to `vocab_digest`.
//
// # Safety
// `session` must be a live handle and both strings valid.
enum AsrStatus asr_session_save_state(const struct AsrSession *session,
                                      const char *path,
                                      const char *vocab_digest);

// # Safety
// `session` must be NULL or a live handle not yet freed.
void asr_session_free(struct AsrSession *session);

// Number of interactions applied so far (including those in a loaded snapshot).
//
// # Safety
// `session` must be a live handle and `out` writable.
enum AsrStatus asr_session_applied(const struct AsrSession *session, uint64_t *out);

// Records interaction (user, item) and refreshes the affected embeddings.
//
// # Safety
// `session` must be a live handle with no concurrent callers.
enum AsrStatus asr_session_apply(struct AsrSession *session, uint32_t user, uint32_t item);

// Scores every item for `user` into `out` (`len` must equal the item
// count). `cfg` may be NULL for defaults; `fallback` (nullable) is set when
// the user has no history and only collaborative scores were used.
//
// # Safety
// `session` must be live; `out` writable for `len` doubles.
enum AsrStatus asr_session_scores(const struct AsrSession *session,
                                  uint32_t user,
                                  const struct AsrScoreConfig *cfg,
                                  double *out,
                                  size_t len,
                                  bool *fallback);

// Top `k` items (descending score, ties by lower index) for `user`.
// Writes `min(k, items)` entries and their count to `written`.
// `out_scores` may be NULL.
//
// # Safety
// `session` must be live; `out_items` (and `out_scores` if non-NULL)
// writable for `k` elements; `written` writable.
enum AsrStatus asr_session_top_k(const struct AsrSession *session,
                                 uint32_t user,
                                 const struct AsrScoreConfig *cfg,
                                 size_t k,
                                 uint32_t *out_items,
                                 double *out_scores,
                                 size_t *written);

// Predict-then-update for one event: ranks `item` among all items for
// `user` (1 = best) and then applies the interaction.
//
// # Safety
// `session` must be live with no concurrent callers; `rank` writable.
enum AsrStatus asr_session_step(struct AsrSession *session,
                                uint32_t user,
                                uint32_t item,
                                const struct AsrScoreConfig *cfg,
                                size_t *rank);

#endif /* AUTOSEQREC_H */
