// SPDX-License-Identifier: Apache-2.0
#include <cctype>

#include "locqor/corpus.hpp"
#include "locqor/error.hpp"

namespace locqor::corpus {

void validate_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  auto fail = [&](std::size_t at) {
    throw DecodeError("invalid UTF-8 at byte offset " + std::to_string(at), at);
  };
  while (i < n) {
    unsigned char c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      fail(i);
    }
    if (i + len > n) fail(i);
    for (std::size_t j = 1; j < len; ++j) {
      if ((s[i + j] & 0xC0) != 0x80) fail(i + j);
      cp = (cp << 6) | (s[i + j] & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      fail(i);
    }
    i += len;
  }
}

std::vector<LineRecord> split_lines(const ModuleSpan& module) {
  validate_utf8(module.text);
  std::vector<LineRecord> out;
  std::string_view text = module.text;
  int line_no = 1;
  std::size_t pos = 0;
  while (true) {
    std::size_t nl = text.find('\n', pos);
    LineRecord rec;
    rec.design_id = module.design_id;
    rec.module_id = module.module_id;
    rec.line_no = line_no++;
    rec.text = std::string(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                          : nl - pos));
    out.push_back(std::move(rec));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

}  // namespace

std::string strip_comments(std::string_view source) {
  std::string out(source);
  const std::size_t n = out.size();
  int line = 1;
  std::size_t i = 0;
  while (i < n) {
    char c = out[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (c == '"') {
      // String literal: copied verbatim, ends at the closing quote or at an
      // unescaped newline.
      ++i;
      while (i < n && out[i] != '"' && out[i] != '\n') {
        if (out[i] == '\\' && i + 1 < n && out[i + 1] != '\n') ++i;
        ++i;
      }
      if (i < n && out[i] == '"') ++i;
    } else if (c == '\\') {
      // Escaped identifier runs to the next whitespace.
      while (i < n && !is_space(out[i])) ++i;
    } else if (c == '/' && i + 1 < n && out[i + 1] == '/') {
      while (i < n && out[i] != '\n') out[i++] = ' ';
    } else if (c == '/' && i + 1 < n && out[i + 1] == '*') {
      const int start_line = line;
      out[i] = out[i + 1] = ' ';
      i += 2;
      bool closed = false;
      while (i < n) {
        if (out[i] == '*' && i + 1 < n && out[i + 1] == '/') {
          out[i] = out[i + 1] = ' ';
          i += 2;
          closed = true;
          break;
        }
        if (out[i] == '\n') {
          ++line;
        } else {
          out[i] = ' ';
        }
        ++i;
      }
      if (!closed) {
        throw SourceError("unterminated block comment starting on line " +
                              std::to_string(start_line),
                          start_line);
      }
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<ModuleSpan> detect_modules(std::string_view source, const std::string& design_id,
                                       const std::string& source_path) {
  validate_utf8(source);
  const std::string scan = strip_comments(source);
  const std::size_t n = scan.size();

  // Line start offsets into `source`, for slicing span text.
  std::vector<std::size_t> line_starts{0};
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] == '\n') line_starts.push_back(i + 1);
  }
  auto slice_lines = [&](int first, int last) {
    std::size_t begin = line_starts[first - 1];
    std::size_t end = static_cast<std::size_t>(last) < line_starts.size()
                          ? line_starts[last] - 1
                          : source.size();
    return std::string(source.substr(begin, end - begin));
  };

  std::vector<ModuleSpan> spans;
  int depth = 0;
  int line = 1;
  int open_line = 0;
  std::string open_name;
  bool want_name = false;
  int prev_end_line = 0;

  std::size_t i = 0;
  while (i < n) {
    char c = scan[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (c == '"') {
      ++i;
      while (i < n && scan[i] != '"' && scan[i] != '\n') {
        if (scan[i] == '\\' && i + 1 < n && scan[i + 1] != '\n') ++i;
        ++i;
      }
      if (i < n && scan[i] == '"') ++i;
      continue;
    }
    std::string word;
    if (c == '\\') {
      std::size_t b = i;
      while (i < n && !is_space(scan[i])) ++i;
      word.assign(scan, b, i - b);
    } else if (c == '`' || c == '\'') {
      // Compiler directives and based literals: skip the attached word so
      // that e.g. `define module or 8'hmodule never count as keywords.
      ++i;
      while (i < n && is_ident_char(scan[i])) ++i;
      continue;
    } else if (is_ident_start(c)) {
      std::size_t b = i;
      while (i < n && is_ident_char(scan[i])) ++i;
      word.assign(scan, b, i - b);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < n && is_ident_char(scan[i])) ++i;
      continue;
    } else {
      ++i;
      if (want_name) {
        throw SourceError("expected module name after 'module' on line " + std::to_string(line),
                          line);
      }
      continue;
    }

    if (want_name) {
      if (word == "automatic" || word == "static") continue;
      open_name = word;
      want_name = false;
      continue;
    }
    if (word == "module" || word == "macromodule") {
      if (depth == 0) {
        if (line == prev_end_line) {
          throw SourceError("module starts on the same line as the previous endmodule (line " +
                                std::to_string(line) + ")",
                            line);
        }
        open_line = line;
        want_name = true;
      }
      ++depth;
    } else if (word == "endmodule") {
      if (depth == 0) {
        throw SourceError("'endmodule' without matching 'module' on line " + std::to_string(line),
                          line);
      }
      if (--depth == 0) {
        ModuleSpan span;
        span.module_id = open_name;
        span.design_id = design_id;
        span.start_line = open_line;
        span.end_line = line;
        span.text = slice_lines(open_line, line);
        span.source_path = source_path;
        spans.push_back(std::move(span));
        prev_end_line = line;
      }
    }
  }
  if (want_name) {
    throw SourceError("expected module name after 'module' on line " + std::to_string(open_line),
                      open_line);
  }
  if (depth > 0) {
    throw SourceError("end of file inside module '" + open_name + "' opened on line " +
                          std::to_string(open_line),
                      open_line);
  }
  return spans;
}

}  // namespace locqor::corpus
