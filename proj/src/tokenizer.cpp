#include "falip/tokenizer.hpp"

#include <sstream>

#include "falip/errors.hpp"

namespace falip {

std::vector<int> byte_tokenize(const std::string& text, int context_length) {
  if (context_length < 2) throw ArgumentError("byte_tokenize: context length must be >= 2");
  std::vector<int> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(kByteBos);
  for (unsigned char c : text) {
    if (ids.size() + 1 >= static_cast<std::size_t>(context_length)) break;
    ids.push_back(c);
  }
  ids.push_back(kByteEos);
  return ids;
}

std::vector<int> parse_token_ids(const std::string& text) {
  std::istringstream is(text);
  std::vector<int> ids;
  std::string word;
  while (is >> word) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size()) throw FormatError("token ids: '" + word + "' is not an integer");
    ids.push_back(v);
  }
  if (ids.empty()) throw FormatError("token ids: empty sequence");
  return ids;
}

}  // namespace falip
