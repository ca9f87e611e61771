#include "fedner/eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedner::eval {

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  Span open;
  bool has_open = false;
  auto close = [&] {
    if (has_open) spans.push_back(open);
    has_open = false;
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const std::string& tag = tags[static_cast<size_t>(i)];
    if (tag == "O") {
      close();
      continue;
    }
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') {
      throw std::invalid_argument("extract_spans: malformed tag '" + tag +
                                  "'");
    }
    const std::string type = tag.substr(2);
    if (tag[0] == 'B' || !has_open || open.type != type) {
      close();
      open = Span{i, i + 1, type};
      has_open = true;
    } else {
      open.end = i + 1;
    }
  }
  close();
  return spans;
}

std::vector<std::string> tags_of_spans(int length,
                                       const std::vector<Span>& spans) {
  std::vector<std::string> tags(static_cast<size_t>(length), "O");
  for (const Span& s : spans) {
    if (s.start < 0 || s.end > length || s.start >= s.end) {
      throw std::invalid_argument("tags_of_spans: span out of range");
    }
    tags[static_cast<size_t>(s.start)] = "B-" + s.type;
    for (int i = s.start + 1; i < s.end; ++i) {
      tags[static_cast<size_t>(i)] = "I-" + s.type;
    }
  }
  return tags;
}

Prf prf_from(const Counts& c) {
  Prf out;
  out.precision = c.pred == 0 ? 0.0 : static_cast<double>(c.tp) / c.pred;
  out.recall = c.gold == 0 ? 0.0 : static_cast<double>(c.gold_hits) / c.gold;
  out.f1 = (out.precision + out.recall) == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall /
                     (out.precision + out.recall);
  return out;
}

Counts strict_counts(const std::vector<Span>& gold,
                     const std::vector<Span>& pred) {
  Counts c;
  c.pred = static_cast<long long>(pred.size());
  c.gold = static_cast<long long>(gold.size());
  std::vector<bool> used(gold.size(), false);
  for (const Span& p : pred) {
    for (size_t g = 0; g < gold.size(); ++g) {
      if (!used[g] && gold[g] == p) {
        used[g] = true;
        ++c.tp;
        break;
      }
    }
  }
  c.gold_hits = c.tp;
  return c;
}

namespace {

bool overlaps(const Span& a, const Span& b) {
  return a.start < b.end && b.start < a.end;
}

}  // namespace

Counts relax_counts(const std::vector<Span>& gold,
                    const std::vector<Span>& pred, bool require_type) {
  Counts c;
  c.pred = static_cast<long long>(pred.size());
  c.gold = static_cast<long long>(gold.size());
  long long pred_tp = 0;
  for (const Span& p : pred) {
    for (const Span& g : gold) {
      if (overlaps(p, g) && (!require_type || p.type == g.type)) {
        ++pred_tp;
        break;
      }
    }
  }
  long long gold_hit = 0;
  for (const Span& g : gold) {
    for (const Span& p : pred) {
      if (overlaps(p, g) && (!require_type || p.type == g.type)) {
        ++gold_hit;
        break;
      }
    }
  }
  c.tp = pred_tp;
  c.gold_hits = gold_hit;
  return c;
}

}  // namespace fedner::eval
