#include "timbre/corpus.hpp"

#include <algorithm>

namespace timbre::corpus {

namespace {
const std::vector<std::string> kVowels = {"a", "e", "i", "o", "u", "@"};
const std::vector<std::string> kConsonants = {"s", "sh", "f", "h", "th"};
}  // namespace

PhoneInventory::PhoneInventory(std::vector<std::string> symbols, std::vector<PhoneKind> kinds)
    : symbols_(std::move(symbols)), kinds_(std::move(kinds)) {
  if (symbols_.size() != kinds_.size()) {
    throw std::invalid_argument("PhoneInventory: symbols and kinds differ in length");
  }
  if (symbols_.size() < 2) throw std::invalid_argument("PhoneInventory: need at least 2 symbols");
  for (size_t i = 0; i < symbols_.size(); ++i) {
    for (size_t j = 0; j < i; ++j) {
      if (symbols_[i] == symbols_[j]) {
        throw std::invalid_argument("PhoneInventory: duplicate symbol " + symbols_[i]);
      }
    }
    if (kinds_[i] == PhoneKind::kSilence) {
      if (silence_id_ >= 0) throw std::invalid_argument("PhoneInventory: more than one silence");
      silence_id_ = static_cast<int>(i);
    }
  }
  if (silence_id_ < 0) throw std::invalid_argument("PhoneInventory: missing sil");
}

PhoneInventory PhoneInventory::default_inventory() { return synthetic(6, 5); }

PhoneInventory PhoneInventory::synthetic(int n_vowels, int n_consonants) {
  if (n_vowels < 1 || n_consonants < 0 || 1 + n_vowels + n_consonants > 43) {
    throw std::invalid_argument("PhoneInventory: between 2 and 43 symbols with >= 1 vowel");
  }
  std::vector<std::string> symbols{"sil"};
  std::vector<PhoneKind> kinds{PhoneKind::kSilence};
  for (int v = 0; v < n_vowels; ++v) {
    symbols.push_back(v < int(kVowels.size()) ? kVowels[v] : "v" + std::to_string(v));
    kinds.push_back(PhoneKind::kVowel);
  }
  for (int c = 0; c < n_consonants; ++c) {
    symbols.push_back(c < int(kConsonants.size()) ? kConsonants[c] : "c" + std::to_string(c));
    kinds.push_back(PhoneKind::kConsonant);
  }
  return PhoneInventory(std::move(symbols), std::move(kinds));
}

int PhoneInventory::id(const std::string& symbol) const {
  auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  if (it == symbols_.end()) throw UnknownPhone(symbol);
  return static_cast<int>(it - symbols_.begin());
}

std::vector<int> PhoneInventory::ids_of(PhoneKind kind) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (kinds_[i] == kind) out.push_back(i);
  return out;
}

}  // namespace timbre::corpus
