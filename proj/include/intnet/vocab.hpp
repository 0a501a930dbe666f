#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "intnet/error.hpp"

namespace intnet {

// Splits a UTF-8 word into its characters (one std::string per code point).
// Bytes that do not form a valid sequence are kept as single characters, so
// the split is total on arbitrary input.
std::vector<std::string> utf8_characters(std::string_view word);

// Character inventory with the two special tokens at fixed indices. Raw
// characters keep case, digits and punctuation untouched; looking up an
// unseen character yields UNKNOWN, never an error.
struct CharVocab {
  static constexpr std::size_t kPadding = 0;
  static constexpr std::size_t kUnknown = 1;
  static constexpr const char* kPaddingToken = "<PAD>";
  static constexpr const char* kUnknownToken = "<UNK>";

  std::vector<std::string> chars;  // [0]=PADDING, [1]=UNKNOWN, then first-seen
  std::unordered_map<std::string, std::size_t> index;

  CharVocab();
  static CharVocab build(const std::vector<std::string>& tokens);
  static CharVocab from_list(std::vector<std::string> chars);

  void add(const std::string& ch);
  std::size_t lookup(const std::string& ch) const;
  std::size_t size() const { return chars.size(); }

  // Character ids for a word; throws EmptyWordError on an empty word.
  std::vector<std::size_t> encode(std::string_view word) const;
};

// Word inventory; index 0 is the UNKNOWN word used for tokens unseen when
// the vocabulary was built.
struct WordVocab {
  static constexpr std::size_t kUnknown = 0;
  static constexpr const char* kUnknownToken = "<UNK>";

  std::vector<std::string> words;
  std::unordered_map<std::string, std::size_t> index;

  WordVocab();
  static WordVocab from_list(std::vector<std::string> words);
  void add(const std::string& word);
  bool contains(const std::string& word) const { return index.count(word) > 0; }
  std::size_t lookup(const std::string& word) const;
  std::size_t size() const { return words.size(); }
};

}  // namespace intnet
