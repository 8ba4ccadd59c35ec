#pragma once

// Tokenizer for short social-media messages. Lowercases ASCII letters,
// replaces URLs, @-mentions and numerals by <url>, <user> and <number>,
// maps the cloze placeholder to <target>, splits punctuation into separate
// tokens and keeps hashtags and emoji (including ZWJ sequences) whole.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace emotl {

inline constexpr std::string_view kPlaceholder = "[#TARGETWORD#]";
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kTargetToken = "<target>";
inline constexpr std::string_view kUrlToken = "<url>";
inline constexpr std::string_view kUserToken = "<user>";
inline constexpr std::string_view kNumberToken = "<number>";

namespace detail {

struct CodePoint {
  char32_t value = 0;
  std::size_t length = 1;  // bytes consumed
  bool valid = false;
};

inline CodePoint decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  CodePoint cp;
  std::size_t need;
  if (b0 < 0x80) return {b0, 1, true};
  if ((b0 & 0xE0) == 0xC0) {
    need = 1;
    cp.value = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    need = 2;
    cp.value = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    need = 3;
    cp.value = b0 & 0x07;
  } else {
    return {b0, 1, false};
  }
  if (pos + need >= s.size()) return {b0, 1, false};
  for (std::size_t i = 1; i <= need; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {b0, 1, false};
    cp.value = (cp.value << 6) | (b & 0x3F);
  }
  cp.length = need + 1;
  cp.valid = true;
  return cp;
}

inline bool is_emoji(char32_t c) {
  return (c >= 0x1F000 && c <= 0x1FAFF) || (c >= 0x2600 && c <= 0x27BF) || (c >= 0x2300 && c <= 0x23FF) ||
         (c >= 0x2B00 && c <= 0x2BFF) || (c >= 0x2190 && c <= 0x21FF);
}

inline bool is_emoji_modifier(char32_t c) { return c == 0xFE0F || (c >= 0x1F3FB && c <= 0x1F3FF); }

// Non-ASCII code points that act as punctuation (general punctuation,
// symbols, CJK punctuation, lone variation selectors).
inline bool is_unicode_punct(char32_t c) {
  return (c >= 0x2000 && c <= 0x2BFF && !is_emoji(c)) || (c >= 0x3000 && c <= 0x303F) || c == 0xFE0F ||
         (c >= 0x00A1 && c <= 0x00BF) || c == 0x00D7 || c == 0x00F7;
}

inline bool is_unicode_space(char32_t c) { return c == 0x00A0 || c == 0x3000 || c == 0x2028 || c == 0x2029; }

inline bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Letter-like: ASCII letters, underscore, and non-ASCII code points that are
// neither emoji, punctuation nor space.
inline bool is_word_char_at(std::string_view s, std::size_t pos, std::size_t* len) {
  const char c = s[pos];
  if (static_cast<unsigned char>(c) < 0x80) {
    *len = 1;
    return is_ascii_alpha(c) || is_ascii_digit(c) || c == '_';
  }
  CodePoint cp = decode_utf8(s, pos);
  *len = cp.length;
  return cp.valid && !is_emoji(cp.value) && !is_unicode_punct(cp.value) && !is_unicode_space(cp.value) &&
         !(cp.value >= 0x200B && cp.value <= 0x200D);
}

inline bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (s.size() - pos < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char a = s[pos + i], b = prefix[i];
    if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
    if (b >= 'A' && b <= 'Z') b = static_cast<char>(b - 'A' + 'a');
    if (a != b) return false;
  }
  return true;
}

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// Consumes word characters (plus apostrophes between letters) from pos.
inline std::size_t scan_word(std::string_view s, std::size_t pos) {
  std::size_t len = 0;
  while (pos < s.size()) {
    if (s[pos] == '\'' && pos + 1 < s.size()) {
      const auto prev = static_cast<unsigned char>(s[pos - 1]);
      const bool after_letter = is_ascii_alpha(static_cast<char>(prev)) || prev >= 0x80;
      std::size_t l2;
      if (after_letter && is_word_char_at(s, pos + 1, &l2) && !is_ascii_digit(s[pos + 1])) {
        pos += 1;
        continue;
      }
      break;
    }
    if (!is_word_char_at(s, pos, &len)) break;
    pos += len;
  }
  return pos;
}

inline std::size_t scan_plain_word(std::string_view s, std::size_t pos) {
  std::size_t len = 0;
  while (pos < s.size() && is_word_char_at(s, pos, &len)) pos += len;
  return pos;
}

inline void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  if (starts_with_ci(chunk, 0, "http://") || starts_with_ci(chunk, 0, "https://") || starts_with_ci(chunk, 0, "www.")) {
    out.emplace_back(kUrlToken);
    return;
  }
  static constexpr std::string_view kSpecials[] = {kPadToken, kUnkToken, kTargetToken, kUrlToken, kUserToken, kNumberToken};
  std::size_t pos = 0;
  while (pos < chunk.size()) {
    if (starts_with_ci(chunk, pos, "http://") || starts_with_ci(chunk, pos, "https://")) {
      out.emplace_back(kUrlToken);
      return;
    }
    if (starts_with_ci(chunk, pos, kPlaceholder)) {
      out.emplace_back(kTargetToken);
      pos += kPlaceholder.size();
      continue;
    }
    if (chunk[pos] == '<') {
      bool matched = false;
      for (std::string_view sp : kSpecials) {
        if (chunk.substr(pos, sp.size()) == sp) {
          out.emplace_back(sp);
          pos += sp.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    std::size_t len = 0;
    const char c = chunk[pos];
    if ((c == '@' || c == '#') && pos + 1 < chunk.size() && is_word_char_at(chunk, pos + 1, &len)) {
      const std::size_t end = scan_plain_word(chunk, pos + 1);
      if (c == '@')
        out.emplace_back(kUserToken);
      else
        out.push_back(lower_ascii(chunk.substr(pos, end - pos)));
      pos = end;
      continue;
    }
    if (is_ascii_digit(c)) {
      std::size_t end = pos;
      while (end < chunk.size() && is_ascii_digit(chunk[end])) ++end;
      if (end < chunk.size() && is_word_char_at(chunk, end, &len)) {
        // Alphanumeric like "2day": a word, not a numeral.
        end = scan_word(chunk, pos);
        out.push_back(lower_ascii(chunk.substr(pos, end - pos)));
        pos = end;
        continue;
      }
      while (end + 1 < chunk.size() && (chunk[end] == '.' || chunk[end] == ',' || chunk[end] == ':') &&
             is_ascii_digit(chunk[end + 1])) {
        ++end;
        while (end < chunk.size() && is_ascii_digit(chunk[end])) ++end;
      }
      out.emplace_back(kNumberToken);
      pos = end;
      continue;
    }
    if (is_word_char_at(chunk, pos, &len)) {
      const std::size_t end = scan_word(chunk, pos);
      out.push_back(lower_ascii(chunk.substr(pos, end - pos)));
      pos = end;
      continue;
    }
    const CodePoint cp = decode_utf8(chunk, pos);
    if (cp.valid && is_emoji(cp.value)) {
      std::size_t end = pos + cp.length;
      while (end < chunk.size()) {
        const CodePoint next = decode_utf8(chunk, end);
        if (next.valid && is_emoji_modifier(next.value)) {
          end += next.length;
        } else if (next.valid && next.value == 0x200D && end + next.length < chunk.size()) {
          const CodePoint joined = decode_utf8(chunk, end + next.length);
          if (!(joined.valid && is_emoji(joined.value))) break;
          end += next.length + joined.length;
        } else {
          break;
        }
      }
      out.emplace_back(chunk.substr(pos, end - pos));
      pos = end;
      continue;
    }
    // Punctuation or any other single code point.
    out.emplace_back(chunk.substr(pos, cp.length));
    pos += cp.length;
  }
}

}  // namespace detail

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    // Split on ASCII and Unicode whitespace.
    std::size_t start = pos;
    while (start < text.size()) {
      if (detail::is_ascii_space(text[start])) {
        ++start;
        continue;
      }
      const auto cp = detail::decode_utf8(text, start);
      if (cp.valid && detail::is_unicode_space(cp.value)) {
        start += cp.length;
        continue;
      }
      break;
    }
    std::size_t end = start;
    while (end < text.size() && !detail::is_ascii_space(text[end])) {
      const auto cp = detail::decode_utf8(text, end);
      if (cp.valid && detail::is_unicode_space(cp.value)) break;
      end += cp.length;
    }
    if (end > text.size()) end = text.size();
    if (end > start) detail::tokenize_chunk(text.substr(start, end - start), out);
    pos = end;
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace emotl
