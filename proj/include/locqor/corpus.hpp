// SPDX-License-Identifier: Apache-2.0
//
// Line-addressed view of a Verilog corpus plus its ground-truth labels.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace locqor::corpus {

/// One source line of a module. line_no is 1-based within the module text.
struct LineRecord {
  std::string design_id;
  std::string module_id;
  int line_no = 0;
  std::string text;
};

/// A `module ... endmodule` region. start_line/end_line are 1-based line
/// numbers in the file the module was found in; text holds those lines
/// joined by '\n' (no trailing newline).
struct ModuleSpan {
  std::string module_id;
  std::string design_id;
  int start_line = 0;
  int end_line = 0;
  std::string text;
  std::string source_path;
};

/// Per-line ground truth. line_no == 0 is the module-level sentinel row.
struct LabelRecord {
  std::string design_id;
  std::string module_id;
  int line_no = 0;
  bool congestion = false;
  bool timing = false;
  std::optional<double> wns_ns;
};

using LineKey = std::tuple<std::string, std::string, int>;

enum class Split : std::uint8_t { kTrain, kTest };

struct Example {
  LineRecord line;
  bool congestion = false;
  bool timing = false;
  std::optional<double> wns_ns;
  Split split = Split::kTrain;
};

struct Dataset {
  /// Sorted by (design_id, module_id, line_no).
  std::vector<Example> examples;
  /// Sorted by (design_id, module_id).
  std::vector<ModuleSpan> modules;
  /// Explicit module-level WNS from sentinel rows, keyed by (design, module).
  std::map<std::pair<std::string, std::string>, double> module_wns;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;

  std::size_t train_count() const;
  std::size_t test_count() const;
};

// --- text -----------------------------------------------------------------

/// Throws DecodeError carrying the offset of the first invalid byte.
void validate_utf8(std::string_view text);

/// Splits module text on '\n'. Concatenating the returned texts with '\n'
/// reproduces module.text byte for byte.
std::vector<LineRecord> split_lines(const ModuleSpan& module);

/// Blanks `//` and `/* */` comments with spaces, keeping every newline so
/// line and column positions are unchanged. String literals are left alone.
/// Throws SourceError (with the comment's start line) on an unterminated
/// block comment.
std::string strip_comments(std::string_view source);

/// Finds depth-0 `module ... endmodule` pairs. Comments are stripped
/// internally for scanning; span text is taken from `source` as given.
std::vector<ModuleSpan> detect_modules(std::string_view source,
                                       const std::string& design_id = {},
                                       const std::string& source_path = {});

// --- labels -----------------------------------------------------------------

inline constexpr std::string_view kLabelHeader =
    "design_id,module_id,line_no,congestion,timing,wns_ns";

std::vector<LabelRecord> parse_labels(std::string_view csv, const std::string& origin = "<labels>");
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);
std::string format_labels(const std::vector<LabelRecord>& labels);

// --- dataset ----------------------------------------------------------------

struct CorpusOptions {
  /// Replace comments with spaces before lines are handed to the embedder.
  bool strip_comments = false;
};

/// Reads `<corpus_dir>/<design_id>/*.v` in sorted order.
std::vector<ModuleSpan> load_corpus(const std::filesystem::path& corpus_dir,
                                    const CorpusOptions& options = {});

/// Splits examples into train/test with a seeded shuffle; the train set has
/// round(train_fraction * N) examples.
void assign_split(Dataset& dataset, std::uint64_t split_seed, double train_fraction);

Dataset build_dataset(std::vector<ModuleSpan> modules, const std::vector<LabelRecord>& labels,
                      std::uint64_t split_seed, double train_fraction = 0.8);

Dataset build_dataset(const std::filesystem::path& corpus_dir,
                      const std::filesystem::path& label_path, std::uint64_t split_seed,
                      double train_fraction = 0.8, const CorpusOptions& options = {});

// --- synthetic corpora --------------------------------------------------------

/// Tokens the synthetic generator plants; the mock embedder gives each one a
/// dedicated indicator coordinate.
inline constexpr std::string_view kCongestionToken = "CONGTAG";
inline constexpr std::string_view kTimingToken = "TIMTAG";
inline constexpr std::string_view kMulToken = "*";
inline constexpr std::string_view kAddToken = "+";

struct PlantedRules {
  /// Fraction of body lines that carry the congestion token.
  double congestion_rate = 0.05;
  /// Fraction of body lines that carry the timing trigger token. Lines
  /// directly above and below a trigger line are timing-positive.
  double timing_trigger_rate = 0.025;
  /// Fraction of body lines that are arithmetic assignments with a WNS label.
  double arith_rate = 0.12;
  /// wns_ns = wns_intercept + wns_per_mul * #'*' + wns_per_add * #'+'.
  double wns_intercept = -0.10;
  double wns_per_mul = -0.15;
  double wns_per_add = -0.05;
};

struct SyntheticConfig {
  int n_modules = 50;
  int lines_per_module = 100;
  int modules_per_file = 4;
  int n_designs = 5;
  PlantedRules rules;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  /// Relative path ("<design>/<file>.v") -> file contents.
  std::map<std::string, std::string> files;
  std::vector<LabelRecord> labels;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config);

/// Writes files under `corpus_dir` and the label CSV at `label_path`.
void write_synthetic_corpus(const SyntheticCorpus& corpus,
                            const std::filesystem::path& corpus_dir,
                            const std::filesystem::path& label_path);

}  // namespace locqor::corpus
