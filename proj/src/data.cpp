#include "fedner/data.hpp"

#include "fedner/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedner {

namespace {

bool valid_tag_shape(const std::string& tag) {
  if (tag == "O") return true;
  return tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

std::string entity_type_of(const std::string& tag) {
  return tag == "O" ? std::string() : tag.substr(2);
}

}  // namespace

std::string fold_case(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::vector<std::string> Corpus::label_alphabet() const {
  std::vector<std::string> out = {"O"};
  for (const auto& t : entity_types) {
    out.push_back("B-" + t);
    out.push_back("I-" + t);
  }
  return out;
}

Corpus load_conll(const std::string& path, const std::string& platform_id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_conll: cannot open " + path);
  Corpus corpus;
  corpus.platform = platform_id;
  const std::string doc = std::filesystem::path(path).stem().string();

  LabeledSentence cur;
  int line_no = 0;
  int sentence_index = 0;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    cur.provenance = Provenance{platform_id, doc, sentence_index++};
    corpus.sentences.push_back(std::move(cur));
    cur = LabeledSentence{};
  };
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    std::istringstream ls(line);
    std::string token, tag, extra;
    if (!(ls >> token >> tag) || (ls >> extra)) {
      throw std::runtime_error("load_conll: " + path + ":" +
                               std::to_string(line_no) +
                               ": expected 'token tag'");
    }
    if (!valid_tag_shape(tag)) {
      throw std::runtime_error("load_conll: " + path + ":" +
                               std::to_string(line_no) + ": malformed tag '" +
                               tag + "'");
    }
    cur.tokens.push_back(std::move(token));
    if (tag != "O") corpus.entity_types.insert(entity_type_of(tag));
    cur.tags.push_back(std::move(tag));
  }
  flush();
  return corpus;
}

void write_conll(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_conll: cannot open " + path);
  for (const auto& s : corpus.sentences) {
    for (size_t i = 0; i < s.tokens.size(); ++i) {
      out << s.tokens[i] << '\t' << s.tags[i] << '\n';
    }
    out << '\n';
  }
}

std::vector<BioViolation> validate_bio(const std::vector<std::string>& tags) {
  std::vector<BioViolation> out;
  std::string open_type;
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const std::string& tag = tags[static_cast<size_t>(i)];
    if (!valid_tag_shape(tag)) {
      out.push_back({i, "malformed tag '" + tag + "'"});
      open_type.clear();
      continue;
    }
    if (tag == "O") {
      open_type.clear();
    } else if (tag[0] == 'B') {
      open_type = entity_type_of(tag);
    } else {  // I-t
      const std::string t = entity_type_of(tag);
      if (open_type != t) {
        out.push_back({i, "I-" + t + " not preceded by B-" + t + " or I-" + t});
      }
      open_type = t;
    }
  }
  return out;
}

std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double ratio,
                                           std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw std::invalid_argument("split_train_test: ratio out of [0,1]");
  }
  std::vector<int> order(corpus.sentences.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& pa = corpus.sentences[static_cast<size_t>(a)].provenance;
    const auto& pb = corpus.sentences[static_cast<size_t>(b)].provenance;
    return std::tie(pa.doc, pa.sentence_index) <
           std::tie(pb.doc, pb.sentence_index);
  });
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const size_t n_train = static_cast<size_t>(
      std::floor(ratio * static_cast<double>(order.size())));
  Corpus train, test;
  train.platform = test.platform = corpus.platform;
  train.entity_types = test.entity_types = corpus.entity_types;
  for (size_t i = 0; i < order.size(); ++i) {
    const auto& s = corpus.sentences[static_cast<size_t>(order[i])];
    (i < n_train ? train : test).sentences.push_back(s);
  }
  return {std::move(train), std::move(test)};
}

namespace {

std::string span_surface(const LabeledSentence& s, const eval::Span& span) {
  std::string out;
  for (int i = span.start; i < span.end; ++i) {
    if (!out.empty()) out += ' ';
    out += fold_case(s.tokens[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace

std::set<std::string> overlapping_entities(
    const std::vector<Corpus>& corpora) {
  std::unordered_map<std::string, std::set<std::string>> seen_on;
  for (const Corpus& c : corpora) {
    for (const auto& s : c.sentences) {
      for (const auto& span : eval::extract_spans(s.tags)) {
        seen_on[span_surface(s, span)].insert(c.platform);
      }
    }
  }
  std::set<std::string> out;
  for (const auto& [surface, platforms] : seen_on) {
    if (platforms.size() >= 2) out.insert(surface);
  }
  return out;
}

std::vector<Corpus> mask_overlapped_entities(
    const std::vector<Corpus>& train_corpora, double ratio,
    std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw std::invalid_argument("mask_overlapped_entities: ratio out of [0,1]");
  }
  std::set<std::string> overlap = overlapping_entities(train_corpora);
  std::vector<std::string> surfaces(overlap.begin(), overlap.end());
  std::mt19937_64 rng(seed);
  std::shuffle(surfaces.begin(), surfaces.end(), rng);
  const size_t n_mask = static_cast<size_t>(
      std::llround(ratio * static_cast<double>(surfaces.size())));
  std::set<std::string> chosen(surfaces.begin(),
                               surfaces.begin() + static_cast<long>(n_mask));

  std::vector<Corpus> out = train_corpora;
  for (Corpus& c : out) {
    for (LabeledSentence& s : c.sentences) {
      for (const auto& span : eval::extract_spans(s.tags)) {
        if (chosen.count(span_surface(s, span)) == 0) continue;
        for (int i = span.start; i < span.end; ++i) {
          s.tokens[static_cast<size_t>(i)] = kMaskToken;
          s.tags[static_cast<size_t>(i)] = "O";
        }
      }
    }
  }
  return out;
}

int Vocab::token_id(const std::string& token) const {
  auto it = token_index.find(fold_case(token));
  return it == token_index.end() ? unk_token : it->second;
}

int Vocab::char_id(char c) const {
  auto it = char_index.find(c);
  return it == char_index.end() ? unk_char : it->second;
}

Vocab build_vocab(const std::vector<Corpus>& train_corpora) {
  std::set<std::string> tokens = {kUnkToken, kMaskToken};
  std::set<char> chars;
  for (const Corpus& c : train_corpora) {
    for (const auto& s : c.sentences) {
      for (const auto& tok : s.tokens) {
        tokens.insert(fold_case(tok));
        for (char ch : tok) chars.insert(ch);
      }
    }
  }
  Vocab v;
  v.tokens.assign(tokens.begin(), tokens.end());
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    v.token_index[v.tokens[i]] = static_cast<int>(i);
  }
  v.chars.assign(chars.begin(), chars.end());
  v.chars.push_back('\0');  // reserved unknown-character slot
  for (size_t i = 0; i < v.chars.size(); ++i) {
    v.char_index[v.chars[i]] = static_cast<int>(i);
  }
  v.unk_token = v.token_index.at(kUnkToken);
  v.mask_token = v.token_index.at(kMaskToken);
  v.unk_char = static_cast<int>(v.chars.size()) - 1;
  return v;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (!j.contains("platforms") || !j["platforms"].is_array() ||
      j["platforms"].empty()) {
    throw std::runtime_error("load_manifest: " + path +
                             ": missing non-empty 'platforms' array");
  }
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  for (const auto& p : j["platforms"]) {
    ManifestEntry e;
    e.id = p.at("id").get<std::string>();
    std::filesystem::path fp = p.at("path").get<std::string>();
    if (fp.is_relative()) fp = base / fp;
    e.path = fp.string();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Corpus> load_corpora(const std::vector<ManifestEntry>& manifest) {
  std::vector<Corpus> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest) out.push_back(load_conll(e.path, e.id));
  return out;
}

ContextualProvider ContextualProvider::from_file(const std::string& path,
                                                 int dim) {
  if (dim <= 0) {
    throw std::invalid_argument("ContextualProvider: dim must be positive");
  }
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("ContextualProvider: cannot open " + path);
  }
  ContextualProvider p;
  p.dim_ = dim;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string doc;
    int sent = 0, tok = 0;
    if (!(ls >> doc >> sent >> tok)) {
      throw std::runtime_error("ContextualProvider: " + path + ":" +
                               std::to_string(line_no) + ": bad record");
    }
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) {
      if (!(ls >> v(i))) {
        throw std::runtime_error("ContextualProvider: " + path + ":" +
                                 std::to_string(line_no) +
                                 ": expected " + std::to_string(dim) +
                                 " values");
      }
    }
    p.vectors_[doc + "\x1f" + std::to_string(sent) + "\x1f" +
               std::to_string(tok)] = std::move(v);
  }
  return p;
}

Eigen::VectorXd ContextualProvider::lookup(const Provenance& prov,
                                           int token_index) const {
  if (!enabled()) {
    throw std::logic_error("ContextualProvider: lookup while disabled");
  }
  const std::string key = prov.doc + "\x1f" +
                          std::to_string(prov.sentence_index) + "\x1f" +
                          std::to_string(token_index);
  auto it = vectors_.find(key);
  if (it == vectors_.end()) {
    throw std::runtime_error(
        "ContextualProvider: no vector for doc '" + prov.doc + "' sentence " +
        std::to_string(prov.sentence_index) + " token " +
        std::to_string(token_index));
  }
  return it->second;
}

}  // namespace fedner
