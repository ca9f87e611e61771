#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace fedner {

struct Provenance {
  std::string platform;
  std::string doc;
  int sentence_index = 0;
};

struct LabeledSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  Provenance provenance;
};

struct Corpus {
  std::string platform;
  std::vector<LabeledSentence> sentences;
  std::set<std::string> entity_types;

  /// {O} plus B-t / I-t for every entity type.
  std::vector<std::string> label_alphabet() const;
};

struct BioViolation {
  int index = 0;
  std::string message;
};

inline const std::string kUnkToken = "<unk>";
inline const std::string kMaskToken = "<mask>";

/// Token-per-line CoNLL reader: "token<ws>tag", blank line ends a sentence.
/// Rejects ragged lines and malformed tags with the offending line number.
/// BIO sequence violations are NOT repaired here; see validate_bio.
Corpus load_conll(const std::string& path, const std::string& platform_id);
void write_conll(const Corpus& corpus, const std::string& path);

/// Flags every I-t not preceded by B-t or I-t of the same type.
std::vector<BioViolation> validate_bio(const std::vector<std::string>& tags);

/// Seeded shuffle then floor(ratio * n) / remainder split. Sentences are
/// canonicalized by provenance before shuffling so the split is stable under
/// corpus re-serialization.
std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double ratio,
                                           std::uint64_t seed);

/// Case-folded gold-span surface strings present in at least two corpora.
std::set<std::string> overlapping_entities(const std::vector<Corpus>& corpora);

/// Masks a seeded ratio-sized subset of the overlap set: affected training
/// spans get all-O tags and every token replaced by the mask token. Sentence
/// counts and lengths are unchanged.
std::vector<Corpus> mask_overlapped_entities(
    const std::vector<Corpus>& train_corpora, double ratio,
    std::uint64_t seed);

struct Vocab {
  std::vector<std::string> tokens;  // includes <unk> and <mask>
  std::vector<char> chars;
  std::unordered_map<std::string, int> token_index;
  std::unordered_map<char, int> char_index;
  int unk_token = 0;
  int mask_token = 0;
  int unk_char = 0;

  /// Word lookup is case-folded; unknown tokens map to <unk>.
  int token_id(const std::string& token) const;
  int char_id(char c) const;
};

/// Built from the training splits of every platform (the vocabulary lives in
/// the shared module). Token entries are case-folded and sorted.
Vocab build_vocab(const std::vector<Corpus>& train_corpora);

std::string fold_case(const std::string& s);

/// Manifest: JSON {"platforms": [{"id": ..., "path": ...}, ...]}.
struct ManifestEntry {
  std::string id;
  std::string path;
};
std::vector<ManifestEntry> load_manifest(const std::string& path);
std::vector<Corpus> load_corpora(const std::vector<ManifestEntry>& manifest);

/// Optional per-token contextual embedding sidecar, keyed by
/// (doc, sentence index, token index). Disabled when dim == 0.
class ContextualProvider {
 public:
  ContextualProvider() = default;  // disabled
  static ContextualProvider from_file(const std::string& path, int dim);

  bool enabled() const { return dim_ > 0; }
  int dim() const { return dim_; }
  /// Throws when enabled and the token has no vector, naming the position.
  Eigen::VectorXd lookup(const Provenance& prov, int token_index) const;

 private:
  int dim_ = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
};

}  // namespace fedner
