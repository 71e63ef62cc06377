// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <set>

#include "locqor/corpus.hpp"
#include "locqor/error.hpp"
#include "locqor/util.hpp"

namespace locqor::corpus {

namespace {

std::vector<std::string_view> split_commas(std::string_view row) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t comma = row.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(row.substr(pos));
      break;
    }
    out.push_back(row.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

[[noreturn]] void row_error(const std::string& origin, std::size_t row, const std::string& what) {
  throw DataError(origin + ": row " + std::to_string(row) + ": " + what);
}

bool parse_flag(std::string_view field, const std::string& origin, std::size_t row,
                const char* name) {
  if (field == "0") return false;
  if (field == "1") return true;
  row_error(origin, row, std::string(name) + " must be 0 or 1, got '" + std::string(field) + "'");
}

}  // namespace

std::vector<LabelRecord> parse_labels(std::string_view csv, const std::string& origin) {
  std::vector<LabelRecord> out;
  std::set<LineKey> seen;
  std::size_t pos = 0;
  std::size_t row = 0;
  bool header_seen = false;
  while (pos < csv.size()) {
    std::size_t nl = csv.find('\n', pos);
    std::string_view line =
        csv.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? csv.size() : nl + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kLabelHeader) {
        row_error(origin, row, "expected header '" + std::string(kLabelHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;

    auto fields = split_commas(line);
    if (fields.size() != 6) {
      row_error(origin, row, "expected 6 fields, got " + std::to_string(fields.size()));
    }
    LabelRecord rec;
    rec.design_id = std::string(fields[0]);
    rec.module_id = std::string(fields[1]);
    if (rec.design_id.empty() || rec.module_id.empty()) {
      row_error(origin, row, "empty design_id or module_id");
    }
    {
      auto f = fields[2];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), rec.line_no);
      if (ec != std::errc() || p != f.data() + f.size() || rec.line_no < 0) {
        row_error(origin, row, "bad line_no '" + std::string(f) + "'");
      }
    }
    rec.congestion = parse_flag(fields[3], origin, row, "congestion");
    rec.timing = parse_flag(fields[4], origin, row, "timing");
    if (!fields[5].empty()) {
      auto f = fields[5];
      double v = 0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v)) {
        row_error(origin, row, "bad wns_ns '" + std::string(f) + "'");
      }
      rec.wns_ns = v;
    }
    LineKey key{rec.design_id, rec.module_id, rec.line_no};
    if (!seen.insert(key).second) {
      throw DataError(origin + ": row " + std::to_string(row) + ": duplicate key (" +
                      rec.design_id + ", " + rec.module_id + ", " + std::to_string(rec.line_no) +
                      ")");
    }
    out.push_back(std::move(rec));
  }
  if (!header_seen) throw DataError(origin + ": empty label file");
  return out;
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path.string());
  } catch (const Error&) {
    throw DataError("cannot read label file: " + path.string());
  }
  return parse_labels(text, path.string());
}

std::string format_labels(const std::vector<LabelRecord>& labels) {
  std::string out(kLabelHeader);
  out += '\n';
  for (const auto& r : labels) {
    out += r.design_id;
    out += ',';
    out += r.module_id;
    out += ',';
    out += std::to_string(r.line_no);
    out += r.congestion ? ",1" : ",0";
    out += r.timing ? ",1," : ",0,";
    if (r.wns_ns) out += format_double(*r.wns_ns);
    out += '\n';
  }
  return out;
}

}  // namespace locqor::corpus
