#pragma once

#include <string>
#include <vector>

namespace falip {

/// Byte-level tokenizer for desk-scale models: ids 0..255 are raw bytes.
inline constexpr int kByteBos = 256;
inline constexpr int kByteEos = 257;
inline constexpr int kBytePad = 258;
inline constexpr int kByteVocab = 259;

/// [BOS, bytes..., EOS], truncated to `context_length` with EOS kept last.
std::vector<int> byte_tokenize(const std::string& text, int context_length);

/// Whitespace-separated integer ids, e.g. "49406 320 1125 49407".
std::vector<int> parse_token_ids(const std::string& text);

}  // namespace falip
