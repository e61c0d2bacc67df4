#ifndef LEAKPROBE_H
#define LEAKPROBE_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Similarity bucket codes, see [`lp_stratify`].
typedef enum LpBucket {
  LP_BUCKET_DISTINCT = 0,
  LP_BUCKET_RELATED = 1,
  LP_BUCKET_SIMILAR = 2,
} LpBucket;

// Status codes.
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_UTF8 = 2,
  LP_STATUS_IO = 3,
  LP_STATUS_PARSE = 4,
  LP_STATUS_NOT_IN_LEXICON = 5,
  LP_STATUS_INVALID_ARGUMENT = 6,
  LP_STATUS_PANIC = 99,
} LpStatus;

// Opaque pronunciation dictionary handle.
typedef struct LpLexicon LpLexicon;

typedef struct LpWer {
  size_t hits;
  size_t substitutions;
  size_t deletions;
  size_t insertions;
  size_t reference_len;
  double rate;
} LpWer;

typedef struct LpItemScore {
  size_t positions;
  size_t acoustic_matches;
  size_t leakage_matches;
  // False when the masked reference is empty; `background` is then zeroed.
  bool has_background;
  struct LpWer background;
} LpItemScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *lp_last_error(void);

// Static version string.
const char *lp_version(void);

// Loads a CMU-format dictionary from `path`.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum LpStatus lp_lexicon_open(const char *path, struct LpLexicon **out);

// Parses dictionary text held in memory (`len` bytes, need not be terminated).
//
// # Safety
// `text` must point to `len` readable bytes; `out` must be writable.
enum LpStatus lp_lexicon_from_text(const char *text, size_t len, struct LpLexicon **out);

// Releases a lexicon. Null is ignored.
//
// # Safety
// `lex` must come from `lp_lexicon_open`/`lp_lexicon_from_text` and not be used afterwards.
void lp_lexicon_free(struct LpLexicon *lex);

// Number of headwords, or 0 for null.
//
// # Safety
// `lex` must be null or a live handle.
size_t lp_lexicon_word_count(const struct LpLexicon *lex);

// Total pronunciations including alternates, or 0 for null.
//
// # Safety
// `lex` must be null or a live handle.
size_t lp_lexicon_pronunciation_count(const struct LpLexicon *lex);

// Minimum phoneme distance between two words. Writes -1 when the distance
// exceeds `max_distance`.
//
// # Safety
// Pointers must be valid; strings nul-terminated.
enum LpStatus lp_word_distance(const struct LpLexicon *lex,
                               const char *w1,
                               const char *w2,
                               uint32_t max_distance,
                               bool strip_stress,
                               int32_t *out);

// Porter stem of `word`. Release the result with [`lp_string_free`].
//
// # Safety
// `word` nul-terminated; `out` writable.
enum LpStatus lp_stem(const char *word, char **out);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void lp_string_free(char *s);

// Whether two words share a Porter stem (case-insensitive).
//
// # Safety
// Strings nul-terminated; `out` writable.
enum LpStatus lp_same_stem(const char *w1, const char *w2, bool *out);

// Word error rate of `hyp` against `reference` after normalization.
//
// # Safety
// Strings nul-terminated; `out` writable.
enum LpStatus lp_wer(const char *reference, const char *hyp, struct LpWer *out);

// Scores one transcript for an (acoustic word, context word) pair.
//
// # Safety
// Strings nul-terminated; `out` writable.
enum LpStatus lp_score_item(const char *reference,
                            const char *hyp,
                            const char *acoustic_word,
                            const char *context_word,
                            struct LpItemScore *out);

// Character-LCS similarity ratio in [0, 1].
//
// # Safety
// Strings nul-terminated; `out` writable.
enum LpStatus lp_similarity(const char *a, const char *b, double *out);

// Bucket for a similarity ratio. NaN is rejected.
//
// # Safety
// `out` writable.
enum LpStatus lp_stratify(double ratio, enum LpBucket *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEAKPROBE_H */
