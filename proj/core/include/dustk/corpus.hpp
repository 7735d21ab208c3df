#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dustk/kernels.hpp"

namespace dustk {

// Character vocabulary: the sorted distinct bytes of a text, id = rank.
class CharVocab {
 public:
  static CharVocab from_text(std::string_view text);
  // Identity map over all 256 byte values.
  static CharVocab bytes();

  std::size_t size() const { return symbols_.size(); }
  std::vector<Token> encode(std::string_view text) const;
  std::string decode(std::span<const Token> ids) const;
  const std::vector<unsigned char>& symbols() const { return symbols_; }

 private:
  std::vector<unsigned char> symbols_;
  std::array<int, 256> index_{};
};

// Deterministic English-like text from a small phrase grammar.
std::string synthetic_corpus(std::uint64_t seed, std::size_t n_chars);

}  // namespace dustk
