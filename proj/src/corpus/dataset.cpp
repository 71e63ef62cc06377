// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "locqor/corpus.hpp"
#include "locqor/error.hpp"
#include "locqor/util.hpp"

namespace fs = std::filesystem;

namespace locqor::corpus {

std::size_t Dataset::train_count() const {
  return static_cast<std::size_t>(std::count_if(
      examples.begin(), examples.end(), [](const Example& e) { return e.split == Split::kTrain; }));
}

std::size_t Dataset::test_count() const { return examples.size() - train_count(); }

std::vector<ModuleSpan> load_corpus(const fs::path& corpus_dir, const CorpusOptions& options) {
  if (!fs::is_directory(corpus_dir)) {
    throw DataError("corpus directory not found: " + corpus_dir.string());
  }
  std::vector<fs::path> designs;
  for (const auto& entry : fs::directory_iterator(corpus_dir)) {
    if (entry.is_directory()) designs.push_back(entry.path());
  }
  std::sort(designs.begin(), designs.end());

  std::vector<ModuleSpan> modules;
  for (const auto& design_dir : designs) {
    const std::string design_id = design_dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(design_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".v") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::set<std::string> module_ids;
    for (const auto& file : files) {
      std::string source = read_file(file.string());
      std::vector<ModuleSpan> spans;
      try {
        spans = detect_modules(source, design_id, file.string());
        if (options.strip_comments) {
          // Same line structure, so spans computed on the original source
          // line up with the stripped text.
          const std::string stripped = strip_comments(source);
          auto stripped_spans = detect_modules(stripped, design_id, file.string());
          for (std::size_t i = 0; i < spans.size(); ++i) spans[i].text = stripped_spans[i].text;
        }
      } catch (const SourceError& e) {
        throw SourceError(file.string() + ": " + e.what(), e.line());
      }
      for (auto& span : spans) {
        if (!module_ids.insert(span.module_id).second) {
          throw DataError("design '" + design_id + "' defines module '" + span.module_id +
                          "' more than once (" + file.string() + ")");
        }
        modules.push_back(std::move(span));
      }
    }
  }
  return modules;
}

void assign_split(Dataset& dataset, std::uint64_t split_seed, double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must be in [0, 1]");
  }
  const std::size_t n = dataset.examples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(split_seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    dataset.examples[order[r]].split = r < n_train ? Split::kTrain : Split::kTest;
  }
  dataset.split_seed = split_seed;
  dataset.train_fraction = train_fraction;
}

Dataset build_dataset(std::vector<ModuleSpan> modules, const std::vector<LabelRecord>& labels,
                      std::uint64_t split_seed, double train_fraction) {
  std::sort(modules.begin(), modules.end(), [](const ModuleSpan& a, const ModuleSpan& b) {
    return std::tie(a.design_id, a.module_id) < std::tie(b.design_id, b.module_id);
  });
  for (std::size_t i = 1; i < modules.size(); ++i) {
    if (modules[i].design_id == modules[i - 1].design_id &&
        modules[i].module_id == modules[i - 1].module_id) {
      throw DataError("duplicate module '" + modules[i].module_id + "' in design '" +
                      modules[i].design_id + "'");
    }
  }

  Dataset ds;
  std::map<LineKey, std::size_t> index;
  for (const auto& m : modules) {
    for (auto& line : split_lines(m)) {
      Example ex;
      ex.line = std::move(line);
      index.emplace(LineKey{ex.line.design_id, ex.line.module_id, ex.line.line_no},
                    ds.examples.size());
      ds.examples.push_back(std::move(ex));
    }
  }
  std::set<std::pair<std::string, std::string>> module_keys;
  for (const auto& m : modules) module_keys.emplace(m.design_id, m.module_id);

  for (const auto& lab : labels) {
    if (lab.line_no == 0) {
      if (!module_keys.count({lab.design_id, lab.module_id})) {
        throw DataError("label references unknown module (" + lab.design_id + ", " +
                        lab.module_id + ")");
      }
      if (lab.wns_ns) ds.module_wns[{lab.design_id, lab.module_id}] = *lab.wns_ns;
      continue;
    }
    auto it = index.find(LineKey{lab.design_id, lab.module_id, lab.line_no});
    if (it == index.end()) {
      throw DataError("label references nonexistent line (" + lab.design_id + ", " +
                      lab.module_id + ", " + std::to_string(lab.line_no) + ")");
    }
    auto& ex = ds.examples[it->second];
    ex.congestion = lab.congestion;
    ex.timing = lab.timing;
    ex.wns_ns = lab.wns_ns;
  }
  ds.modules = std::move(modules);
  assign_split(ds, split_seed, train_fraction);
  return ds;
}

Dataset build_dataset(const fs::path& corpus_dir, const fs::path& label_path,
                      std::uint64_t split_seed, double train_fraction,
                      const CorpusOptions& options) {
  auto labels = load_labels(label_path);
  return build_dataset(load_corpus(corpus_dir, options), labels, split_seed, train_fraction);
}

}  // namespace locqor::corpus
