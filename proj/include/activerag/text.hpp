#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace activerag {

/// Lowercases (simple case mapping), collapses whitespace runs to one space
/// and trims both ends. Punctuation is left intact. Idempotent.
std::string normalize_text(std::string_view s);

/// Simple lowercase of a UTF-8 string. Invalid bytes pass through unchanged.
std::string to_lower_utf8(std::string_view s);

/// Retrieval tokenizer: lowercase, then split on runs of non-alphanumeric
/// characters. Non-ASCII letters count as alphanumeric.
std::vector<std::string> tokenize(std::string_view s);

/// Splits on ASCII and Unicode whitespace; no empty tokens.
std::vector<std::string> split_whitespace(std::string_view s);

std::string_view trim(std::string_view s);

}  // namespace activerag
