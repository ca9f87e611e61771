#include "fedner/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

namespace fedner {

namespace {

const std::vector<std::string> kTypes = {"DRUG", "ADE", "DIS"};

std::string random_word(std::mt19937_64& rng, std::set<std::string>& used) {
  std::uniform_int_distribution<int> len_dist(4, 7);
  std::uniform_int_distribution<int> ch_dist(0, 25);
  for (;;) {
    std::string w;
    const int len = len_dist(rng);
    for (int i = 0; i < len; ++i) {
      w.push_back(static_cast<char>('a' + ch_dist(rng)));
    }
    if (used.insert(w).second) return w;
  }
}

struct Entity {
  std::vector<std::string> words;
  std::string type;
};

}  // namespace

std::vector<Corpus> make_synthetic_corpora(const SyntheticSpec& spec) {
  if (spec.platforms < 1 || spec.sentences_per_platform < 1 ||
      spec.entities < static_cast<int>(kTypes.size()) ||
      spec.entity_words < static_cast<int>(kTypes.size()) ||
      spec.context_words < 1) {
    throw std::invalid_argument("make_synthetic_corpora: bad spec");
  }
  std::mt19937_64 rng(spec.seed);
  std::set<std::string> used;

  // Word pools. Each entity word belongs to exactly one type so that word
  // identity carries the type signal.
  const int types = static_cast<int>(kTypes.size());
  std::vector<std::vector<std::string>> type_words(static_cast<size_t>(types));
  for (int i = 0; i < spec.entity_words; ++i) {
    type_words[static_cast<size_t>(i % types)].push_back(
        random_word(rng, used));
  }
  std::vector<std::string> context;
  for (int i = 0; i < spec.context_words; ++i) {
    context.push_back(random_word(rng, used));
  }

  // Global entity lexicon: 1-2 words of one type per surface.
  std::vector<Entity> lexicon;
  std::set<std::string> surfaces;
  std::uniform_int_distribution<int> span_len(1, 2);
  while (static_cast<int>(lexicon.size()) < spec.entities) {
    const int t = static_cast<int>(lexicon.size()) % types;
    const auto& pool = type_words[static_cast<size_t>(t)];
    std::uniform_int_distribution<int> word_dist(
        0, static_cast<int>(pool.size()) - 1);
    Entity e;
    e.type = kTypes[static_cast<size_t>(t)];
    const int len = span_len(rng);
    for (int i = 0; i < len; ++i) {
      e.words.push_back(pool[static_cast<size_t>(word_dist(rng))]);
    }
    std::string key;
    for (const auto& w : e.words) key += w + ' ';
    if (surfaces.insert(key).second) lexicon.push_back(std::move(e));
  }

  // Platform i annotates types {i mod 3, (i+1) mod 3}; other entities are
  // tagged O. This is the cross-platform annotation-criteria divergence.
  std::vector<Corpus> corpora;
  std::uniform_int_distribution<int> ctx_len(5, 9);
  std::uniform_int_distribution<int> ctx_dist(
      0, static_cast<int>(context.size()) - 1);
  std::uniform_int_distribution<int> ent_count(1, 2);
  std::uniform_int_distribution<int> ent_dist(
      0, static_cast<int>(lexicon.size()) - 1);
  for (int pi = 0; pi < spec.platforms; ++pi) {
    Corpus c;
    c.platform = "platform" + std::to_string(pi);
    std::set<std::string> annotated = {
        kTypes[static_cast<size_t>(pi % types)],
        kTypes[static_cast<size_t>((pi + 1) % types)]};
    c.entity_types = annotated;
    for (int si = 0; si < spec.sentences_per_platform; ++si) {
      LabeledSentence s;
      const int n_ctx = ctx_len(rng);
      for (int i = 0; i < n_ctx; ++i) {
        s.tokens.push_back(context[static_cast<size_t>(ctx_dist(rng))]);
        s.tags.push_back("O");
      }
      const int n_ent = ent_count(rng);
      for (int e = 0; e < n_ent; ++e) {
        const Entity& ent = lexicon[static_cast<size_t>(ent_dist(rng))];
        std::uniform_int_distribution<int> pos_dist(
            0, static_cast<int>(s.tokens.size()));
        const int pos = pos_dist(rng);
        const bool keep = annotated.count(ent.type) != 0;
        for (size_t wi = 0; wi < ent.words.size(); ++wi) {
          s.tokens.insert(s.tokens.begin() + pos + static_cast<long>(wi),
                          ent.words[wi]);
          std::string tag = "O";
          if (keep) tag = (wi == 0 ? "B-" : "I-") + ent.type;
          s.tags.insert(s.tags.begin() + pos + static_cast<long>(wi), tag);
        }
      }
      // Inserting one entity inside another can split a span and orphan an
      // I- tag; normalize those to fresh B- tags.
      for (size_t i = 0; i < s.tags.size(); ++i) {
        if (s.tags[i].size() > 1 && s.tags[i][0] == 'I') {
          const bool ok = i > 0 && s.tags[i - 1] != "O" &&
                          s.tags[i - 1].substr(2) == s.tags[i].substr(2);
          if (!ok) s.tags[i] = "B" + s.tags[i].substr(1);
        }
      }
      s.provenance = Provenance{c.platform, "synthetic", si};
      c.sentences.push_back(std::move(s));
    }
    corpora.push_back(std::move(c));
  }
  return corpora;
}

}  // namespace fedner
