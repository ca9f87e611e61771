#pragma once

#include "fedner/data.hpp"

#include <cstdint>
#include <vector>

namespace fedner {

/// Seeded multi-platform benchmark with a shared entity lexicon and
/// platform-specific annotation criteria.
///
/// Entity surfaces (1-2 words) are drawn from a global lexicon whose words
/// determine the entity type; context words carry no type. Every platform
/// samples sentences from the same lexicon, so surfaces overlap heavily
/// across platforms, but each platform annotates only its own subset of
/// entity types (everything else is tagged O). Words are random letter
/// strings, so type information lives in word identity, not spelling.
struct SyntheticSpec {
  int platforms = 3;
  int sentences_per_platform = 625;
  int entities = 360;        // lexicon size, split evenly over types
  int entity_words = 240;    // word pool backing the lexicon
  int context_words = 150;
  std::uint64_t seed = 1;
};

std::vector<Corpus> make_synthetic_corpora(const SyntheticSpec& spec);

}  // namespace fedner
