// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace morph {

// Decodes UTF-8 into Unicode scalar values. Throws ParseError on malformed
// sequences, overlong encodings and surrogates.
std::u32string decode_utf8(std::string_view text);

std::string encode_utf8(std::u32string_view text);
std::string encode_utf8(char32_t ch);

}  // namespace morph
