/* Minimal C consumer: load a checkpoint, stream a few events, print top-5.
 *
 *   cc -I crates/ffi/include crates/ffi/examples/smoke.c \
 *      target/release/libautoseqrec_ffi.a -lpthread -ldl -lm -o smoke
 *   ./smoke model.asrq
 */
#include <stdio.h>
#include <stdlib.h>

#include "autoseqrec.h"

static int check(AsrStatus s, const char *what) {
  if (s != ASR_STATUS_OK) {
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, asr_last_error_message());
    return 1;
  }
  return 0;
}

int main(int argc, char **argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s CHECKPOINT\n", argv[0]);
    return 2;
  }
  AsrModel *model = NULL;
  if (check(asr_model_load(argv[1], NULL, &model), "load")) return 1;

  size_t users = 0, items = 0, hidden = 0;
  asr_model_dims(model, &users, &items, &hidden);
  printf("version=%s items=%zu hidden=%zu\n", asr_version(), items, hidden);

  AsrSession *session = NULL;
  if (check(asr_session_new(model, 2, &session), "session")) return 1;
  asr_model_free(model);

  AsrScoreConfig cfg = asr_score_config_default();
  for (uint32_t t = 0; t < 6; ++t) {
    size_t rank = 0;
    if (check(asr_session_step(session, t % 2, t % (uint32_t)items, &cfg, &rank), "step")) return 1;
    printf("event=%u rank=%zu\n", t, rank);
  }

  uint32_t top[5];
  double scores[5];
  size_t written = 0;
  if (check(asr_session_top_k(session, 0, &cfg, 5, top, scores, &written), "top_k")) return 1;
  for (size_t r = 0; r < written; ++r) printf("%zu\t%u\t%.6f\n", r + 1, top[r], scores[r]);

  if (asr_session_apply(session, 99, 0) != ASR_STATUS_OUT_OF_RANGE) return 1;
  asr_session_free(session);
  printf("ok\n");
  return 0;
}
