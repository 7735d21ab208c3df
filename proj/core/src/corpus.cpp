#include "dustk/corpus.hpp"

#include <random>

#include "dustk/errors.hpp"

namespace dustk {

CharVocab CharVocab::from_text(std::string_view text) {
  std::array<bool, 256> seen{};
  for (char c : text) seen[static_cast<unsigned char>(c)] = true;
  CharVocab v;
  v.index_.fill(-1);
  for (int b = 0; b < 256; ++b) {
    if (!seen[static_cast<std::size_t>(b)]) continue;
    v.index_[static_cast<std::size_t>(b)] = static_cast<int>(v.symbols_.size());
    v.symbols_.push_back(static_cast<unsigned char>(b));
  }
  return v;
}

CharVocab CharVocab::bytes() {
  CharVocab v;
  for (int b = 0; b < 256; ++b) {
    v.index_[static_cast<std::size_t>(b)] = b;
    v.symbols_.push_back(static_cast<unsigned char>(b));
  }
  return v;
}

std::vector<Token> CharVocab::encode(std::string_view text) const {
  std::vector<Token> out;
  out.reserve(text.size());
  for (char c : text) {
    const int id = index_[static_cast<unsigned char>(c)];
    if (id < 0) throw ValidationError("character outside vocabulary");
    out.push_back(id);
  }
  return out;
}

std::string CharVocab::decode(std::span<const Token> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (Token id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
      throw ValidationError("token id outside vocabulary");
    }
    out.push_back(static_cast<char>(symbols_[static_cast<std::size_t>(id)]));
  }
  return out;
}

std::string synthetic_corpus(std::uint64_t seed, std::size_t n_chars) {
  static constexpr std::string_view kDet[] = {"the", "a", "every", "some", "one"};
  static constexpr std::string_view kAdj[] = {"small", "quiet", "red",  "old",
                                              "quick", "tired", "bright", "green"};
  static constexpr std::string_view kNoun[] = {"cat", "dog",  "bird", "river", "house",
                                               "tree", "king", "ship", "stone", "child"};
  static constexpr std::string_view kVerb[] = {"sees", "finds", "follows", "likes",
                                               "keeps", "hears", "builds", "carries"};
  static constexpr std::string_view kPrep[] = {"near", "under", "behind", "with"};
  std::mt19937_64 rng(seed);
  auto pick = [&rng](auto const& list) {
    std::uniform_int_distribution<std::size_t> d(0, std::size(list) - 1);
    return list[d(rng)];
  };
  std::bernoulli_distribution coin(0.5);
  std::string out;
  out.reserve(n_chars + 64);
  while (out.size() < n_chars) {
    std::string sentence;
    auto noun_phrase = [&] {
      sentence += pick(kDet);
      sentence += ' ';
      if (coin(rng)) {
        sentence += pick(kAdj);
        sentence += ' ';
      }
      sentence += pick(kNoun);
    };
    noun_phrase();
    sentence += ' ';
    sentence += pick(kVerb);
    sentence += ' ';
    noun_phrase();
    if (coin(rng)) {
      sentence += ' ';
      sentence += pick(kPrep);
      sentence += ' ';
      noun_phrase();
    }
    sentence += ". ";
    out += sentence;
  }
  out.resize(n_chars);
  return out;
}

}  // namespace dustk
