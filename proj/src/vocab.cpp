#include "intnet/vocab.hpp"

namespace intnet {

std::vector<std::string> utf8_characters(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const unsigned char b = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((b & 0x80u) == 0x00u) {
      len = 1;
    } else if ((b & 0xE0u) == 0xC0u) {
      len = 2;
    } else if ((b & 0xF0u) == 0xE0u) {
      len = 3;
    } else if ((b & 0xF8u) == 0xF0u) {
      len = 4;
    }
    if (i + len > word.size()) len = 1;
    // continuation bytes must match, otherwise fall back to a single byte
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0u) != 0x80u) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

CharVocab::CharVocab() {
  chars = {kPaddingToken, kUnknownToken};
  index[kPaddingToken] = kPadding;
  index[kUnknownToken] = kUnknown;
}

CharVocab CharVocab::build(const std::vector<std::string>& tokens) {
  CharVocab v;
  for (const auto& token : tokens) {
    for (auto& ch : utf8_characters(token)) v.add(ch);
  }
  return v;
}

CharVocab CharVocab::from_list(std::vector<std::string> list) {
  if (list.size() < 2 || list[0] != kPaddingToken || list[1] != kUnknownToken) {
    throw ContractError("character list must start with the special tokens");
  }
  CharVocab v;
  for (std::size_t i = 2; i < list.size(); ++i) v.add(list[i]);
  return v;
}

void CharVocab::add(const std::string& ch) {
  if (index.count(ch)) return;
  index[ch] = chars.size();
  chars.push_back(ch);
}

std::size_t CharVocab::lookup(const std::string& ch) const {
  auto it = index.find(ch);
  return it == index.end() ? kUnknown : it->second;
}

std::vector<std::size_t> CharVocab::encode(std::string_view word) const {
  auto cs = utf8_characters(word);
  if (cs.empty()) throw EmptyWordError("cannot encode an empty word");
  std::vector<std::size_t> ids;
  ids.reserve(cs.size());
  for (const auto& c : cs) ids.push_back(lookup(c));
  return ids;
}

WordVocab::WordVocab() {
  words = {kUnknownToken};
  index[kUnknownToken] = kUnknown;
}

WordVocab WordVocab::from_list(std::vector<std::string> list) {
  if (list.empty() || list[0] != kUnknownToken) {
    throw ContractError("word list must start with the unknown token");
  }
  WordVocab v;
  for (std::size_t i = 1; i < list.size(); ++i) v.add(list[i]);
  return v;
}

void WordVocab::add(const std::string& word) {
  if (index.count(word)) return;
  index[word] = words.size();
  words.push_back(word);
}

std::size_t WordVocab::lookup(const std::string& word) const {
  auto it = index.find(word);
  return it == index.end() ? kUnknown : it->second;
}

}  // namespace intnet
